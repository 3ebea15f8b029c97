"""Loss, optimizers and the epoch/batch training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, NumericalError
from .models import PROB_FLOOR

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "cross_entropy",
    "adam_step",
    "qngd_step",
    "train",
    "evaluate",
    "write_log",
    "LOG_FIELDS",
]

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "train_loss", "val_loss", "val_auc", "lr_classical", "lr_quantum")


@dataclass
class TrainConfig:
    batch_size: int = 100
    max_epochs: int = 200
    lr_classical: float = 1e-4
    lr_quantum: float = 1e-2
    decay_factor: float = 0.5
    decay_patience_epochs: int = 25
    early_stop_patience_epochs: int = 50
    seed: int = 0
    qngd_regularizer: float = 1e-6
    shots: int | None = None
    periodic_decay: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.max_epochs < 0:
            out.append(f"max_epochs must be >= 0 (got {self.max_epochs})")
        for name in ("lr_classical", "lr_quantum"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if not 0 < self.decay_factor < 1:
            out.append(f"decay_factor must lie in (0, 1) (got {self.decay_factor})")
        if self.decay_patience_epochs < 1:
            out.append(f"decay_patience_epochs must be >= 1 (got {self.decay_patience_epochs})")
        if self.early_stop_patience_epochs < 1:
            out.append(f"early_stop_patience_epochs must be >= 1 (got {self.early_stop_patience_epochs})")
        if self.qngd_regularizer < 0:
            out.append(f"qngd_regularizer must be >= 0 (got {self.qngd_regularizer})")
        if self.shots is not None and self.shots < 1:
            out.append(f"shots must be >= 1 when given (got {self.shots})")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        problems = [f"unknown field {k!r}" for k in sorted(set(d) - known)]
        try:
            cfg = cls(**{k: v for k, v in d.items() if k in known})
        except ConfigError as exc:
            problems += exc.problems
        except TypeError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError(problems)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def cross_entropy(labels, probs) -> float:
    """Mean categorical cross-entropy with one-hot ``labels``.

    ``probs`` is ``(N, L)``; a 1-d ``probs`` is read as ``P(label 0)`` per
    event, i.e. the distribution ``[p, 1 - p]``. ``labels`` may be integer
    class indices or one-hot rows.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = np.stack([probs, 1 - probs], axis=-1)
    if probs.shape[0] == 0:
        raise ValueError("cross_entropy of an empty batch")
    labels = np.asarray(labels)
    if labels.ndim == 1:
        onehot = np.eye(probs.shape[1])[labels.astype(int)]
    else:
        onehot = labels.astype(np.float64)
    if onehot.shape != probs.shape:
        raise ValueError(f"labels {onehot.shape} do not match probabilities {probs.shape}")
    p = np.clip(probs, PROB_FLOOR, 1.0)
    return float(-np.mean(np.sum(onehot * np.log(p), axis=-1)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(theta, grad, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    grad = np.asarray(grad, dtype=np.float64)
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    new = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def qngd_step(theta, grad, metric, lr: float, eps: float = 1e-6):
    """Natural-gradient update: solve ``(M + eps I) lam = G``, step ``theta - lr * lam``."""
    grad = np.asarray(grad, dtype=np.float64)
    metric = np.asarray(metric, dtype=np.float64)
    a = metric + eps * np.eye(len(grad))
    try:
        lam = np.linalg.solve(a, grad)
    except np.linalg.LinAlgError:
        lam = None
    if lam is None or not np.all(np.isfinite(lam)):
        cond = np.linalg.cond(a)
        raise NumericalError(f"natural-gradient solve failed (condition number estimate {cond:.3e})")
    return theta - lr * lam


@dataclass
class TrainResult:
    classifier: object
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False
    final: object = None  # classifier after the last epoch run


def evaluate(classifier, x, y, shots=None, seed=None):
    """Loss, AUC and signal scores on a labelled set."""
    from .diag import roc_auc

    if shots:
        probs = classifier.predict_proba(x, shots=shots, seed=seed)
    else:
        probs = classifier.predict_proba(x)
    if not np.all(np.isfinite(probs)):
        raise NumericalError("non-finite probabilities in evaluation")
    loss = cross_entropy(y, probs)
    scores = probs[:, 1]
    _, _, auc = roc_auc(scores, y)
    return loss, auc, scores


def train(classifier, train_set, val_set, config: TrainConfig, callback=None) -> TrainResult:
    """Minibatch training with Adam (classical group) and QNGD (quantum group).

    ``train_set`` and ``val_set`` are ``(features, labels)`` pairs. The
    classifier with the lowest validation loss is returned. ``callback`` gets
    each epoch's log row; returning a truthy value ends training after that
    epoch.
    """
    x, y = (np.asarray(a) for a in train_set)
    xv, yv = (np.asarray(a) for a in val_set)
    if len(x) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = {k: np.array(v, dtype=np.float64) for k, v in classifier.params.items()}
    adam = {k: AdamState.zeros(v.size) for k, v in params.items() if k == "classical"}
    lr = {"classical": config.lr_classical, "quantum": config.lr_quantum}

    def val_loss_of(clf, epoch):
        if config.shots:
            return evaluate(clf, xv, yv, config.shots, (config.seed, epoch))[:2]
        return evaluate(clf, xv, yv)[:2]

    result = TrainResult(classifier, final=classifier)
    val_loss, val_auc = val_loss_of(classifier, 0)
    result.best_val_loss = val_loss
    since_best = since_decay = 0
    best_for_decay = val_loss

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x))
        losses, weights = [], []
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            clf = classifier.with_params(params)
            loss, grads = clf.loss_and_grad(x[idx], y[idx])
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError(f"non-finite loss/gradient at epoch {epoch}, batch starting {start} (loss={loss})")
            losses.append(loss)
            weights.append(len(idx))
            if "classical" in grads:
                params["classical"], adam["classical"] = adam_step(
                    params["classical"], grads["classical"], adam["classical"], lr["classical"]
                )
            if "quantum" in grads:
                metric = clf.metric(x[idx])
                params["quantum"] = qngd_step(
                    params["quantum"], grads["quantum"], metric, lr["quantum"], config.qngd_regularizer
                )
        classifier = classifier.with_params(params)
        result.final = classifier
        train_loss = float(np.average(losses, weights=weights))
        val_loss, val_auc = val_loss_of(classifier, epoch)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        row = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_auc": val_auc,
            "lr_classical": lr["classical"],
            "lr_quantum": lr["quantum"],
        }
        result.log.append(row)
        log.debug("epoch %d: %s", epoch, row)
        halt = bool(callback(row)) if callback is not None else False

        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            result.classifier = classifier
            since_best = 0
        else:
            since_best += 1

        if config.periodic_decay:
            decay = epoch % config.decay_patience_epochs == 0
        else:
            if val_loss < best_for_decay:
                best_for_decay = val_loss
                since_decay = 0
            else:
                since_decay += 1
            decay = since_decay >= config.decay_patience_epochs
            if decay:
                since_decay = 0
        if decay:
            lr = {k: v * config.decay_factor for k, v in lr.items()}

        if since_best >= config.early_stop_patience_epochs:
            result.stopped_early = True
            break
        if halt:
            break
    return result


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(row[k])) if k != "epoch" else row[k]) for k in LOG_FIELDS})
