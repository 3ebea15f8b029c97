"""Fisher spectra, effective dimension, entanglement entropy and ROC tools."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDataError, DomainError, ShapeError

__all__ = [
    "FisherReport",
    "fisher_matrix",
    "mean_fisher_sampled",
    "normalize_fisher",
    "kappa",
    "effective_dimension",
    "entanglement_entropy",
    "roc_auc",
    "RatioCurve",
    "fpr_ratio",
]


def _split_flat(classifier, flat):
    out, start = {}, 0
    for k, v in classifier.params.items():
        out[k] = flat[start : start + v.size]
        start += v.size
    return out


def _flat_params(classifier):
    return np.concatenate([np.ravel(v) for v in classifier.params.values()])


def fisher_matrix(classifier, inputs, theta=None, label: int = 0):
    """Mean outer product of ``grad log p_label`` over ``inputs``.

    ``theta`` is a flat parameter vector (groups concatenated in
    ``classifier.params`` order); ``None`` uses the classifier's own.
    Returns ``(F, n_clamped)`` where ``n_clamped`` counts inputs whose
    probability fell under the floor and contributed a zero gradient.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("fisher_matrix needs at least one input")
    params = None if theta is None else _split_flat(classifier, np.asarray(theta, dtype=np.float64))
    p, g = classifier.log_prob_grad(x, params, label=label)
    from .models import PROB_FLOOR

    f = g.T @ g / len(x)
    return 0.5 * (f + f.T), int(np.sum(p <= PROB_FLOOR))


@dataclass
class FisherReport:
    d: int
    mean: np.ndarray
    eigenvalues: np.ndarray
    normalization: float
    n_inputs: int
    n_draws: int
    seed: object
    input_range: tuple = (0.0, math.pi)
    param_range: tuple = (-math.pi, math.pi)
    n_clamped: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    def normalized_eigenvalues(self) -> np.ndarray:
        """Spectrum of the mean Fisher after scaling its trace to ``d``."""
        return self.eigenvalues * self.normalization

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "normalized_eigenvalues": [float(v) for v in self.normalized_eigenvalues()],
            "normalization": float(self.normalization),
            "n_inputs": self.n_inputs,
            "n_draws": self.n_draws,
            "seed": self.seed,
            "input_range": list(self.input_range),
            "param_range": list(self.param_range),
            "n_clamped": self.n_clamped,
        }


def mean_fisher_sampled(
    classifier, n_draws: int = 1000, seed=0, n_inputs: int = 1, keep_samples: bool = False
) -> FisherReport:
    """Average the Fisher matrix over uniform draws of inputs and parameters.

    Each draw picks ``theta`` uniformly in [-pi, pi]^d and ``n_inputs``
    feature vectors uniformly in [0, pi]^n_features.
    """
    if n_draws < 1 or n_inputs < 1:
        raise ValueError("n_draws and n_inputs must be >= 1")
    rng = np.random.default_rng(seed)
    d = _flat_params(classifier).size
    n_feat = classifier.n_features
    total = np.zeros((d, d))
    samples = np.empty((n_draws, d, d)) if keep_samples else None
    clamped = 0
    for k in range(n_draws):
        x = rng.uniform(0.0, math.pi, size=(n_inputs, n_feat))
        theta = rng.uniform(-math.pi, math.pi, size=d)
        f, c = fisher_matrix(classifier, x, theta)
        clamped += c
        total += f
        if keep_samples:
            samples[k] = f
    mean = total / n_draws
    mean = 0.5 * (mean + mean.T)
    eig = np.sort(np.linalg.eigvalsh(mean))[::-1]
    tr = float(np.trace(mean))
    norm = d / tr if tr > 0 else 0.0
    return FisherReport(
        d=d,
        mean=mean,
        eigenvalues=eig,
        normalization=norm,
        n_inputs=n_inputs,
        n_draws=n_draws,
        seed=seed,
        n_clamped=clamped,
        samples=samples,
    )


def normalize_fisher(samples) -> np.ndarray:
    """Scale per-draw Fisher matrices so that their mean trace equals ``d``."""
    f = np.asarray(samples, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    if f.ndim != 3 or f.shape[1] != f.shape[2]:
        raise ShapeError(f"expected (M, d, d) Fisher samples, got {f.shape}")
    d = f.shape[1]
    mean_tr = np.trace(f, axis1=1, axis2=2).mean()
    if mean_tr <= 0:
        raise DegenerateDataError("Fisher samples have zero trace; cannot normalize")
    return d * f / mean_tr


def kappa(n):
    n = np.asarray(n, dtype=np.float64)
    if np.any(n <= 1):
        raise DomainError(f"sample size must exceed 1, got {n}")
    return n / (2 * np.pi * np.log(n))


def effective_dimension(fhat, n, d: int | None = None):
    """Normalized effective dimension of Fisher samples ``fhat`` at sample size ``n``.

    Evaluated in the log domain: the log-determinants come from eigenvalues and
    the average over draws from a log-sum-exp. ``n`` may be an array.
    """
    f = np.asarray(fhat, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    if d is None:
        d = f.shape[1]
    k = kappa(n)
    if np.any(k <= 1):
        raise DomainError(f"kappa = n / (2 pi ln n) must exceed 1 (got {k} for n={n})")
    lam = np.clip(np.linalg.eigvalsh(0.5 * (f + np.swapaxes(f, 1, 2))), 0.0, None)
    m = len(f)

    def one(kk):
        logdet = np.sum(np.log1p(kk * lam), axis=1)
        return 2 * (logsumexp(0.5 * logdet) - math.log(m)) / (d * math.log(kk))

    if np.ndim(k) == 0:
        return float(one(float(k)))
    return np.array([one(float(kk)) for kk in np.ravel(k)]).reshape(np.shape(k))


def entanglement_entropy(state, subsystem, dims=None) -> float:
    """Von Neumann entropy (bits) of the reduced state on ``subsystem``.

    ``state`` is a dense pure state: a vector (qubits unless ``dims`` is
    given), a tensor with one axis per site, or a ``Statevector``.
    ``subsystem`` is a collection of site indices, or an int ``k`` meaning the
    first ``k`` sites.
    """
    psi = getattr(state, "amplitudes", state)
    psi = np.asarray(psi, dtype=np.complex128)
    if dims is not None:
        psi = psi.reshape(tuple(dims))
    elif psi.ndim == 1:
        n = int(round(math.log2(psi.size)))
        if 2**n != psi.size:
            raise ShapeError(f"state of length {psi.size} is not a qubit register; pass dims")
        psi = psi.reshape((2,) * n)
    n_sites = psi.ndim
    if isinstance(subsystem, (int, np.integer)):
        subsystem = range(int(subsystem))
    sub = sorted({int(s) % n_sites for s in subsystem})
    rest = [s for s in range(n_sites) if s not in sub]
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise DegenerateDataError("zero state has no entropy")
    da = int(np.prod([psi.shape[s] for s in sub])) if sub else 1
    m = np.transpose(psi, sub + rest).reshape(da, -1) / norm
    rho = m @ m.conj().T
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 1e-14]
    return float(max(-np.sum(lam * np.log2(lam)), 0.0))


def roc_auc(scores, labels):
    """ROC curve (label 1 = signal) and trapezoid AUC.

    Events with equal scores share one threshold, so ties contribute a
    diagonal segment. Returns ``(fpr, tpr, auc)`` with the curve starting at
    (0, 0) and ending at (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores for {y.size} labels")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("ROC needs both signal and background events")
    if np.any(np.isnan(s)):
        raise DegenerateDataError("scores contain NaN")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return fpr, tpr, auc


@dataclass
class RatioCurve:
    efficiency: np.ndarray  # signal efficiencies kept
    ratio: np.ndarray  # classical FPR / quantum FPR
    omitted: np.ndarray  # grid points dropped because an FPR was zero

    def rows(self):
        return list(zip(self.efficiency.tolist(), self.ratio.tolist()))


def _fpr_at(curve, grid):
    fpr, tpr = np.asarray(curve[0], dtype=np.float64), np.asarray(curve[1], dtype=np.float64)
    # best (lowest) background efficiency at each reachable signal efficiency
    u, inv = np.unique(tpr, return_inverse=True)
    best = np.full(len(u), np.inf)
    np.minimum.at(best, inv, fpr)
    if grid.min() < u[0] or grid.max() > u[-1]:
        raise ValueError(f"efficiency grid [{grid.min()}, {grid.max()}] not covered by ROC [{u[0]}, {u[-1]}]")
    return np.interp(grid, u, best)


def fpr_ratio(roc_classical, roc_quantum, grid) -> RatioCurve:
    """Background-efficiency ratio ``eps_B^C / eps_B^Q`` on a signal-efficiency grid.

    Each ROC is ``(fpr, tpr, ...)``; FPR is interpolated linearly in TPR.
    Values above one mean the quantum model rejects more background.
    """
    grid = np.asarray(grid, dtype=np.float64)
    fc = _fpr_at(roc_classical, grid)
    fq = _fpr_at(roc_quantum, grid)
    bad = (fc == 0) | (fq == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = fc / fq
    return RatioCurve(grid[~bad], ratio[~bad], grid[bad])
