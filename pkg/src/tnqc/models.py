"""Classifier wrappers with a common interface for training and diagnostics.

Every classifier maps a batch of standardized features ``x`` of shape
``(B, n_features)`` to a two-class distribution ``[P(label 0), P(label 1)]``
(label 1 is signal). Parameters are grouped: ``"classical"`` entries are
trained with Adam and ``"quantum"`` entries with natural-gradient steps.

Classical TNs use the Born rule over their two label scores. Quantum
circuits use ``p = <sigma_z>^2`` as the probability of label 0, i.e. the
distribution ``[p, 1 - p]``. Hybrids feed the four front outputs into a
four-qubit circuit as R_y angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ctn, qsim
from .errors import ShapeError

__all__ = [
    "PROB_FLOOR",
    "ClassicalClassifier",
    "QuantumClassifier",
    "HybridClassifier",
    "build_classifier",
    "classifier_from_descriptor",
    "ARCH_NAMES",
]

PROB_FLOOR = 1e-12

ARCH_NAMES = ("mps", "ttn", "mera", "qmps", "qttn", "qmera", "hybrid-ttn", "hybrid-mps")


def _clamped_nll_grad(q, onehot):
    """-log(clamp(q)) per event and its derivative w.r.t. q for the true label."""
    q_true = np.sum(q * onehot, axis=-1)
    clamped = np.clip(q_true, PROB_FLOOR, 1.0)
    active = (q_true > PROB_FLOOR) & (q_true <= 1.0)
    dq = np.where(active, -1.0 / clamped, 0.0)
    return -np.log(clamped), dq


def _onehot(y):
    y = np.asarray(y).astype(int)
    return np.eye(2)[y]


@dataclass
class ClassicalClassifier:
    model: ctn.CtnModel

    kind = "classical"

    @property
    def params(self):
        return {"classical": self.model.theta}

    def with_params(self, params):
        return replace(self, model=self.model.with_theta(params["classical"]))

    @property
    def n_features(self):
        return self.model.n_sites

    def descriptor(self):
        return {"kind": self.kind, "network": self.model.descriptor()}

    def _phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.model.n_sites:
            raise ShapeError(f"expected features of shape (B, {self.model.n_sites}), got {x.shape}")
        return self.model.map_features(x)

    def scores(self, x, params=None):
        theta = None if params is None else params["classical"]
        return ctn.forward(self.model, self._phi(x), theta)

    def predict_proba(self, x, params=None):
        return ctn.born_probability(self.scores(x, params))

    def loss_and_grad(self, x, y, params=None):
        theta = self.model.theta if params is None else params["classical"]
        phi = self._phi(x)
        f = ctn.forward(self.model, phi, theta)
        s = np.sum(f**2, axis=-1, keepdims=True)
        q = f**2 / s
        oh = _onehot(y)
        nll, dq = _clamped_nll_grad(q, oh)
        b = len(f)
        # d q_y / d f_k = 2 f_k (delta_ky - q_y) / s
        q_true = np.sum(q * oh, axis=-1, keepdims=True)
        dqdf = 2 * f * (oh - q_true) / s
        cot = (dq[:, None] * dqdf) / b
        grad = ctn.forward_adjoint(self.model, phi, cot, theta)
        return float(nll.mean()), {"classical": grad}

    def log_prob_grad(self, x, params=None, label=0):
        """Per-event ``p_label`` and gradient of ``log p_label`` with respect to all parameters."""
        theta = self.model.theta if params is None else params["classical"]
        phi = self._phi(x)
        f = ctn.forward(self.model, phi, theta)
        s = np.sum(f**2, axis=-1, keepdims=True)
        p = (f[:, label] ** 2) / s[:, 0]
        clamped = np.maximum(p, PROB_FLOOR)
        oh = np.zeros_like(f)
        oh[:, label] = 1.0
        dpdf = 2 * f * (oh - p[:, None]) / s
        cot = np.where((p > PROB_FLOOR)[:, None], dpdf / clamped[:, None], 0.0)
        g = ctn.forward_adjoint(self.model, phi, cot, theta, per_event=True)
        return p, g


@dataclass
class QuantumClassifier:
    circuit: qsim.CircuitSpec

    kind = "quantum"

    @property
    def params(self):
        return {"quantum": self.circuit.theta}

    def with_params(self, params):
        return replace(self, circuit=self.circuit.with_theta(params["quantum"]))

    @property
    def n_features(self):
        return self.circuit.n_qubits

    def descriptor(self):
        return {"kind": self.kind, "circuit": self.circuit.descriptor()}

    def _theta(self, params):
        return self.circuit.theta if params is None else params["quantum"]

    def expval(self, x, params=None):
        return np.atleast_1d(qsim.expectation(self.circuit, np.atleast_2d(x), self._theta(params)))

    def predict_proba(self, x, params=None, shots=None, seed=None):
        if shots:
            e = qsim.sample_expectations(self.circuit, np.atleast_2d(x), shots, seed, self._theta(params))
        else:
            e = self.expval(x, params)
        p = qsim.born_probability_q(e)
        return np.stack([p, 1 - p], axis=-1)

    def loss_and_grad(self, x, y, params=None):
        theta = self._theta(params)
        e = self.expval(x, params)
        dlde = self._dlde(e, y)
        de = qsim.param_shift_grad(self.circuit, np.atleast_2d(x), theta)
        nll = self._nll(e, y)
        return float(nll.mean()), {"quantum": dlde @ de}

    @staticmethod
    def _nll(e, y):
        p = e**2
        q = np.stack([p, 1 - p], axis=-1)
        nll, _ = _clamped_nll_grad(q, _onehot(y))
        return nll

    @staticmethod
    def _dlde(e, y):
        """Batch-mean loss derivative with respect to each event's <sigma_z>."""
        p = e**2
        q = np.stack([p, 1 - p], axis=-1)
        oh = _onehot(y)
        _, dq = _clamped_nll_grad(q, oh)
        sign = np.where(np.asarray(y) == 0, 1.0, -1.0)
        return dq * sign * 2 * e / len(e)

    def metric(self, x, params=None):
        return qsim.metric_tensor(self.circuit, np.atleast_2d(x), self._theta(params))

    def log_prob_grad(self, x, params=None, label=0):
        theta = self._theta(params)
        x = np.atleast_2d(x)
        e = np.atleast_1d(qsim.expectation(self.circuit, x, theta))
        de = qsim.param_shift_grad(self.circuit, x, theta)
        p0 = e**2
        if label == 0:
            p, dp = p0, 2 * e[:, None] * de
        else:
            p, dp = 1 - p0, -2 * e[:, None] * de
        ok = (p > PROB_FLOOR)[:, None]
        g = np.where(ok, dp / np.maximum(p, PROB_FLOOR)[:, None], 0.0)
        return p, g


@dataclass
class HybridClassifier:
    front: ctn.CtnModel
    circuit: qsim.CircuitSpec
    squash: bool = False

    kind = "hybrid"

    def __post_init__(self):
        if self.front.n_outputs != self.circuit.n_qubits:
            raise ShapeError(
                f"front produces {self.front.n_outputs} outputs for a {self.circuit.n_qubits}-qubit circuit"
            )

    @property
    def params(self):
        return {"classical": self.front.theta, "quantum": self.circuit.theta}

    def with_params(self, params):
        return replace(
            self,
            front=self.front.with_theta(params["classical"]),
            circuit=self.circuit.with_theta(params["quantum"]),
        )

    @property
    def n_features(self):
        return self.front.n_sites

    def descriptor(self):
        return {
            "kind": self.kind,
            "network": self.front.descriptor(),
            "circuit": self.circuit.descriptor(),
            "squash": self.squash,
        }

    def _split(self, params):
        if params is None:
            return self.front.theta, self.circuit.theta
        return params["classical"], params["quantum"]

    def angles(self, x, params=None):
        """Front outputs used as encoding angles, plus d(angle)/d(output)."""
        tc, _ = self._split(params)
        out = ctn.forward(self.front, self.front.map_features(np.atleast_2d(x)), tc)
        if self.squash:
            t = np.tanh(out)
            return math.pi * t, math.pi * (1 - t**2)
        return out, np.ones_like(out)

    def predict_proba(self, x, params=None, shots=None, seed=None):
        _, tq = self._split(params)
        ang, _ = self.angles(x, params)
        if shots:
            e = qsim.sample_expectations(self.circuit, ang, shots, seed, tq)
        else:
            e = np.atleast_1d(qsim.expectation(self.circuit, ang, tq))
        p = qsim.born_probability_q(e)
        return np.stack([p, 1 - p], axis=-1)

    def loss_and_grad(self, x, y, params=None):
        tc, tq = self._split(params)
        x = np.atleast_2d(x)
        phi = self.front.map_features(x)
        ang, dang = self.angles(x, params)
        e = np.atleast_1d(qsim.expectation(self.circuit, ang, tq))
        dlde = QuantumClassifier._dlde(e, y)
        gq = dlde @ qsim.param_shift_grad(self.circuit, ang, tq)
        de_dang = qsim.encoding_grad(self.circuit, ang, tq)
        cot = dlde[:, None] * de_dang * dang
        gc = ctn.forward_adjoint(self.front, phi, cot, tc)
        nll = QuantumClassifier._nll(e, y)
        return float(nll.mean()), {"classical": gc, "quantum": gq}

    def metric(self, x, params=None):
        _, tq = self._split(params)
        ang, _ = self.angles(x, params)
        return qsim.metric_tensor(self.circuit, ang, tq)

    def log_prob_grad(self, x, params=None, label=0):
        tc, tq = self._split(params)
        x = np.atleast_2d(x)
        phi = self.front.map_features(x)
        ang, dang = self.angles(x, params)
        e = np.atleast_1d(qsim.expectation(self.circuit, ang, tq))
        sign = 1.0 if label == 0 else -1.0
        p = e**2 if label == 0 else 1 - e**2
        dlogp_de = np.where(p > PROB_FLOOR, sign * 2 * e / np.maximum(p, PROB_FLOOR), 0.0)
        gq = dlogp_de[:, None] * qsim.param_shift_grad(self.circuit, ang, tq)
        cot = dlogp_de[:, None] * qsim.encoding_grad(self.circuit, ang, tq) * dang
        gc = ctn.forward_adjoint(self.front, phi, cot, tc, per_event=True)
        return p, np.concatenate([gc, gq], axis=1)


def build_classifier(
    arch: str,
    n_features: int | None = None,
    D: int = 2,
    chi: int = 5,
    seed=0,
    qnet: str = "qttn",
    full_unitary: bool = False,
    qmera_layout: str = "open",
    mera_layout: str = "canonical",
    squash: bool = False,
):
    """Construct a classifier by architecture name (see :data:`ARCH_NAMES`)."""
    arch = arch.lower()
    if arch in ("mps", "ttn", "mera"):
        if n_features is None:
            raise ShapeError(f"{arch} needs n_features")
        if arch == "mps":
            net = ctn.build_mps(n_features, D, chi, 2, seed)
        elif arch == "ttn":
            net = ctn.build_ttn(n_features, D, chi, 2, seed)
        else:
            net = ctn.build_mera(n_features, D, chi, 2, seed, mera_layout)
        return ClassicalClassifier(net)
    if arch in ("qmps", "qttn", "qmera"):
        if n_features is None:
            raise ShapeError(f"{arch} needs n_features (qubit count)")
        return QuantumClassifier(_circuit(arch, n_features, full_unitary, seed, qmera_layout))
    if arch in ("hybrid-ttn", "hybrid-mps"):
        if arch == "hybrid-ttn":
            front = ctn.build_hybrid_ttn_front(D, chi, seed)
        else:
            front = ctn.build_hybrid_mps_front(D, chi, seed)
        return HybridClassifier(front, _circuit(qnet, 4, full_unitary, seed, qmera_layout), squash)
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCH_NAMES}")


def _circuit(name, n, full_unitary, seed, layout):
    name = name.lower()
    if name == "qmps":
        return qsim.build_qmps(n, full_unitary, seed)
    if name == "qttn":
        return qsim.build_qttn(n, full_unitary, seed)
    if name == "qmera":
        return qsim.build_qmera(n, full_unitary, seed, layout)
    raise ValueError(f"unknown quantum network {name!r}")


def classifier_from_descriptor(desc: dict):
    kind = desc.get("kind")
    if kind == "classical":
        return ClassicalClassifier(ctn.build(desc["network"]))
    if kind == "quantum":
        return QuantumClassifier(qsim.build_circuit(desc["circuit"]))
    if kind == "hybrid":
        return HybridClassifier(ctn.build(desc["network"]), qsim.build_circuit(desc["circuit"]), desc.get("squash", False))
    raise ValueError(f"unknown classifier kind {kind!r}")
