"""Statevector simulation of tensor-network-inspired variational circuits.

Basis ordering: qubit 0 is the most significant bit, so amplitude index
``i`` corresponds to the bit string ``format(i, f"0{n}b")`` read left to
right as qubits 0..n-1.

Internally states are batched arrays of shape ``(B, 2, ..., 2)``; the
public helpers that take a single :class:`Statevector` wrap those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .tensor import NetworkSpec, Node, contract

__all__ = [
    "CNOT",
    "Statevector",
    "Block",
    "CircuitSpec",
    "u3",
    "u3_derivative",
    "ry",
    "apply_gate",
    "encode_ry",
    "build_qmps",
    "build_qttn",
    "build_qmera",
    "build_circuit",
    "simulate",
    "expectation",
    "expval_z",
    "born_probability_q",
    "sample_shots",
    "param_shift_grad",
    "encoding_grad",
    "metric_tensor",
    "circuit_network",
    "tn_amplitudes",
]

BASIS_ORDERING = "qubit0-msb"

CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=complex,
)


def u3(theta, phi=0.0, lam=0.0) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (lam + phi)) * c],
        ],
        dtype=complex,
    )


def u3_derivative(theta, phi, lam, which: int) -> np.ndarray:
    """Exact derivative of :func:`u3` with respect to argument ``which`` (0, 1 or 2)."""
    if which == 0:
        # rotation generator: the derivative is the pi-shifted gate over two
        return 0.5 * u3(theta + math.pi, phi, lam)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if which == 1:
        return np.array(
            [[0, 0], [1j * np.exp(1j * phi) * s, 1j * np.exp(1j * (lam + phi)) * c]],
            dtype=complex,
        )
    if which == 2:
        return np.array(
            [[0, -1j * np.exp(1j * lam) * s], [0, 1j * np.exp(1j * (lam + phi)) * c]],
            dtype=complex,
        )
    raise ValueError(f"u3 has three arguments, got index {which}")


def ry(x) -> np.ndarray:
    return u3(x, 0.0, 0.0)


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise ShapeError(f"{amps.size} amplitudes for {self.n_qubits} qubits")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"statevector is not normalized (norm^2 = {norm})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, bits: str) -> "Statevector":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(len(bits), amps)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)


@dataclass(frozen=True)
class Block:
    """U on ``wire_a`` and ``wire_b`` followed by CNOT(control=a, target=b).

    ``params_a``/``params_b`` index into theta: one index means U(theta, 0, 0),
    three mean a full U(theta, phi, lambda).
    """

    wire_a: int
    wire_b: int
    params_a: tuple[int, ...]
    params_b: tuple[int, ...]


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    blocks: tuple[Block, ...]
    measure: int
    theta: np.ndarray = field(repr=False)
    ansatz: str = "custom"
    layout: str = "open"
    full_unitary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        theta = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        used = [i for b in self.blocks for i in (*b.params_a, *b.params_b)]
        if sorted(used) != list(range(len(used))):
            raise ShapeError("every parameter index must be used exactly once")
        if theta.shape != (len(used),):
            raise ShapeError(f"theta has {theta.size} entries, circuit needs {len(used)}")
        for b in self.blocks:
            for w in (b.wire_a, b.wire_b):
                if not 0 <= w < self.n_qubits:
                    raise ShapeError(f"wire {w} out of range for {self.n_qubits} qubits")
            if b.wire_a == b.wire_b:
                raise ShapeError(f"block acts twice on wire {b.wire_a}")
        if self.blocks and self.blocks[-1].wire_b != self.measure:
            raise ShapeError("measured wire must be the target of the final block")

    @property
    def n_params(self) -> int:
        return self.theta.size

    def with_theta(self, theta) -> "CircuitSpec":
        return replace(self, theta=np.array(theta, dtype=np.float64))

    def descriptor(self) -> dict:
        return {
            "type": self.ansatz,
            "n_qubits": self.n_qubits,
            "layout": self.layout,
            "full_unitary": self.full_unitary,
            "basis_ordering": BASIS_ORDERING,
        }


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _assemble(n_qubits, pairs, ansatz, full_unitary, seed, layout="open"):
    per_gate = 3 if full_unitary else 1
    blocks = []
    for k, (a, b) in enumerate(pairs):
        base = 2 * per_gate * k
        blocks.append(
            Block(a, b, tuple(range(base, base + per_gate)), tuple(range(base + per_gate, base + 2 * per_gate)))
        )
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, size=2 * per_gate * len(blocks))
    measure = blocks[-1].wire_b
    return CircuitSpec(n_qubits, tuple(blocks), measure, theta, ansatz, layout, full_unitary)


def _check_n(n_qubits):
    if n_qubits < 2:
        raise ShapeError(f"need at least 2 qubits, got {n_qubits}")
    if n_qubits > 20:
        raise ShapeError(f"statevector simulation is limited to 20 qubits, got {n_qubits}")


def build_qmps(n_qubits: int, full_unitary: bool = False, seed=0) -> CircuitSpec:
    """Staircase of blocks (0,1), (1,2), ..., measured on the last wire."""
    _check_n(n_qubits)
    pairs = [(i, i + 1) for i in range(n_qubits - 1)]
    return _assemble(n_qubits, pairs, "QMPS", full_unitary, seed)


def _tree_level(wires, pairs):
    nxt = []
    for k in range(0, len(wires) - 1, 2):
        pairs.append((wires[k], wires[k + 1]))
        nxt.append(wires[k + 1])
    if len(wires) % 2:
        nxt.append(wires[-1])
    return nxt


def build_qttn(n_qubits: int, full_unitary: bool = False, seed=0) -> CircuitSpec:
    """Binary tree keeping each block's target; odd wires carried upward."""
    _check_n(n_qubits)
    wires, pairs = list(range(n_qubits)), []
    while len(wires) > 1:
        wires = _tree_level(wires, pairs)
    return _assemble(n_qubits, pairs, "QTTN", full_unitary, seed)


def build_qmera(n_qubits: int, full_unitary: bool = False, seed=0, layout: str = "open") -> CircuitSpec:
    """Q-TTN with a disentangler layer before every tree level.

    Disentanglers act on (w1, w2), (w3, w4), ... of the surviving wires. With
    ``layout="periodic"`` the last odd-indexed wire also pairs with w0.
    """
    _check_n(n_qubits)
    if layout not in ("open", "periodic"):
        raise ValueError(f"unknown Q-MERA layout {layout!r}")
    wires, pairs = list(range(n_qubits)), []
    while len(wires) > 1:
        m = len(wires)
        for k in range(1, m, 2):
            if k + 1 < m:
                pairs.append((wires[k], wires[k + 1]))
            elif layout == "periodic":
                pairs.append((wires[k], wires[0]))
        wires = _tree_level(wires, pairs)
    return _assemble(n_qubits, pairs, "QMERA", full_unitary, seed, layout)


def build_circuit(descriptor: dict, seed=0) -> CircuitSpec:
    kind = descriptor["type"]
    n, full = descriptor["n_qubits"], descriptor.get("full_unitary", False)
    if kind == "QMPS":
        return build_qmps(n, full, seed)
    if kind == "QTTN":
        return build_qttn(n, full, seed)
    if kind == "QMERA":
        return build_qmera(n, full, seed, descriptor.get("layout", "open"))
    raise ValueError(f"unknown circuit ansatz {kind!r}")


# --------------------------------------------------------------------------
# gate application on batched states (B, 2, ..., 2)
# --------------------------------------------------------------------------


def _apply_1q(psi, mat, wire):
    out = np.tensordot(mat, psi, axes=([1], [wire + 1]))
    return np.moveaxis(out, 0, wire + 1)


def _apply_cnot(psi, control, target):
    out = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[control + 1] = 1
    idx = tuple(idx)
    axis = target + 1 if target < control else target
    out[idx] = np.flip(psi[idx], axis=axis)
    return out


def _apply_2q(psi, mat, wa, wb):
    m = np.asarray(mat).reshape(2, 2, 2, 2)
    out = np.tensordot(m, psi, axes=([2, 3], [wa + 1, wb + 1]))
    return np.moveaxis(out, [0, 1], [wa + 1, wb + 1])


def apply_gate(state: Statevector, gate, wires: Sequence[int]) -> Statevector:
    """Apply a 2x2 gate to one wire or a 4x4 gate to two wires (first wire most significant)."""
    gate = np.asarray(gate, dtype=complex)
    wires = tuple(int(w) for w in wires)
    n = state.n_qubits
    if any(not 0 <= w < n for w in wires):
        raise ShapeError(f"wires {wires} out of range for {n} qubits")
    if len(set(wires)) != len(wires):
        raise ShapeError(f"repeated wires {wires}")
    psi = state.amplitudes.reshape((1,) + (2,) * n)
    if gate.shape == (2, 2) and len(wires) == 1:
        psi = _apply_1q(psi, gate, wires[0])
    elif gate.shape == (4, 4) and len(wires) == 2:
        psi = _apply_2q(psi, gate, *wires)
    else:
        raise ShapeError(f"gate of shape {gate.shape} cannot act on {len(wires)} wire(s)")
    return Statevector(n, psi.reshape(-1))


def _encode(angles):
    """Product state of R_y(x_i)|0> for angles ``(B, n)``; returns ``(B, 2, ..., 2)``."""
    angles = np.asarray(angles, dtype=np.float64)
    b, n = angles.shape
    psi = np.ones((b, 1), dtype=complex)
    for i in range(n):
        q = np.stack([np.cos(angles[:, i] / 2), np.sin(angles[:, i] / 2)], axis=1)
        psi = (psi[:, :, None] * q[:, None, :]).reshape(b, -1)
    return psi.reshape((b,) + (2,) * n)


def encode_ry(angles) -> Statevector:
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    return Statevector(angles.size, _encode(angles[None]).reshape(-1))


def _gate_for(theta, idx, deriv):
    args = [theta[i] for i in idx] + [0.0] * (3 - len(idx))
    if deriv is not None and deriv in idx:
        return u3_derivative(*args, which=idx.index(deriv))
    return u3(*args)


def _as_batch(circuit: CircuitSpec, angles):
    angles = np.asarray(angles, dtype=np.float64)
    single = angles.ndim == 1
    if single:
        angles = angles[None]
    if angles.ndim != 2 or angles.shape[1] != circuit.n_qubits:
        raise ShapeError(f"expected {circuit.n_qubits} encoding angles per event, got shape {angles.shape}")
    return angles, single


def _run(circuit: CircuitSpec, angles, theta, deriv=None):
    psi = _encode(angles)
    for blk in circuit.blocks:
        psi = _apply_1q(psi, _gate_for(theta, blk.params_a, deriv), blk.wire_a)
        psi = _apply_1q(psi, _gate_for(theta, blk.params_b, deriv), blk.wire_b)
        psi = _apply_cnot(psi, blk.wire_a, blk.wire_b)
    return psi


def simulate(circuit: CircuitSpec, angles, theta=None):
    """Final state(s) after encoding ``angles`` and running the circuit.

    Returns a :class:`Statevector` for a single event, else an array ``(B, 2**n)``.
    """
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles, single = _as_batch(circuit, angles)
    psi = _run(circuit, angles, theta).reshape(len(angles), -1)
    return Statevector(circuit.n_qubits, psi[0]) if single else psi


def _expval(psi, wire):
    p = np.abs(psi) ** 2
    axes = tuple(a for a in range(1, p.ndim) if a != wire + 1)
    marg = p.sum(axis=axes)
    return marg[:, 0] - marg[:, 1]


def expval_z(state: Statevector, wire: int) -> float:
    if not 0 <= wire < state.n_qubits:
        raise ShapeError(f"wire {wire} out of range")
    psi = state.amplitudes.reshape((1,) + (2,) * state.n_qubits)
    return float(_expval(psi, wire)[0])


def expectation(circuit: CircuitSpec, angles, theta=None):
    """<sigma_z> on the measured wire; scalar for one event, ``(B,)`` for a batch."""
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles, single = _as_batch(circuit, angles)
    e = _expval(_run(circuit, angles, theta), circuit.measure)
    return float(e[0]) if single else e


def born_probability_q(expval):
    """Probability of the first class, |<sigma_z>|^2."""
    return np.abs(expval) ** 2


def sample_shots(state: Statevector, wire: int, n_shots: int, seed=None) -> float:
    """Finite-shot estimate of <sigma_z> from ``n_shots`` +-1 outcomes."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    e = expval_z(state, wire)
    p_plus = min(max((1.0 + e) / 2.0, 0.0), 1.0)
    k = np.random.default_rng(seed).binomial(n_shots, p_plus)
    return (2 * k - n_shots) / n_shots


def sample_expectations(circuit: CircuitSpec, angles, n_shots: int, seed=None, theta=None):
    """Batched finite-shot estimates of the measured <sigma_z>."""
    e = np.atleast_1d(expectation(circuit, angles, theta))
    p_plus = np.clip((1.0 + e) / 2.0, 0.0, 1.0)
    k = np.random.default_rng(seed).binomial(n_shots, p_plus)
    return (2 * k - n_shots) / n_shots


def param_shift_grad(circuit: CircuitSpec, angles, theta=None) -> np.ndarray:
    """d<sigma_z>/dtheta via the +-pi/2 shift rule; ``(d,)`` or ``(B, d)``."""
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles, single = _as_batch(circuit, angles)
    grad = np.empty((len(angles), theta.size))
    for i in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += math.pi / 2
        minus[i] -= math.pi / 2
        e_plus = _expval(_run(circuit, angles, plus), circuit.measure)
        e_minus = _expval(_run(circuit, angles, minus), circuit.measure)
        grad[:, i] = (e_plus - e_minus) / 2
    return grad[0] if single else grad


def encoding_grad(circuit: CircuitSpec, angles, theta=None) -> np.ndarray:
    """d<sigma_z>/d(encoding angles) via the shift rule on the R_y encoders."""
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles, single = _as_batch(circuit, angles)
    grad = np.empty(angles.shape)
    for i in range(circuit.n_qubits):
        plus, minus = angles.copy(), angles.copy()
        plus[:, i] += math.pi / 2
        minus[:, i] -= math.pi / 2
        grad[:, i] = (
            _expval(_run(circuit, plus, theta), circuit.measure)
            - _expval(_run(circuit, minus, theta), circuit.measure)
        ) / 2
    return grad[0] if single else grad


def metric_tensor(circuit: CircuitSpec, angles, theta=None, per_event=False) -> np.ndarray:
    """Fubini-Study metric Re(<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>).

    Derivative states are exact (derivative gate inserted in place). For a
    batch of inputs the metric is averaged over events unless ``per_event``.
    """
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles, single = _as_batch(circuit, angles)
    b = len(angles)
    psi = _run(circuit, angles, theta).reshape(b, -1)
    dpsi = np.stack([_run(circuit, angles, theta, deriv=i).reshape(b, -1) for i in range(theta.size)], axis=1)
    overlap = np.einsum("bia,bja->bij", dpsi.conj(), dpsi)
    proj = np.einsum("bia,ba->bi", dpsi.conj(), psi)
    g = (overlap - proj[:, :, None] * proj.conj()[:, None, :]).real
    g = 0.5 * (g + g.transpose(0, 2, 1))
    if single:
        return g[0]
    return g if per_event else g.mean(axis=0)


# --------------------------------------------------------------------------
# the same circuit as a tensor network
# --------------------------------------------------------------------------


def circuit_network(circuit: CircuitSpec, angles, theta=None):
    """Express encoding + blocks as a tensor network.

    Returns ``(spec, node_values, inputs)``; the output legs are the final
    wire legs in qubit order, so the flattened contraction is the amplitude
    vector in the simulator's basis ordering.
    """
    theta = circuit.theta if theta is None else np.asarray(theta, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    n = circuit.n_qubits
    step = [0] * n
    nodes, values = [], {}

    def leg(w):
        return f"q{w}_{step[w]}"

    def add_1q(name, mat, w):
        src = leg(w)
        step[w] += 1
        nodes.append(Node(name, (leg(w), src), (2, 2), trainable=False))
        values[name] = mat

    for k, blk in enumerate(circuit.blocks):
        add_1q(f"ua{k}", _gate_for(theta, blk.params_a, None), blk.wire_a)
        add_1q(f"ub{k}", _gate_for(theta, blk.params_b, None), blk.wire_b)
        ia, ib = leg(blk.wire_a), leg(blk.wire_b)
        step[blk.wire_a] += 1
        step[blk.wire_b] += 1
        nodes.append(Node(f"cx{k}", (leg(blk.wire_a), leg(blk.wire_b), ia, ib), (2, 2, 2, 2), trainable=False))
        values[f"cx{k}"] = CNOT.reshape(2, 2, 2, 2)
    for w in range(n):
        if step[w] == 0:
            add_1q(f"id{w}", np.eye(2, dtype=complex), w)

    inputs = {}
    for w in range(n):
        x = angles[..., w]
        inputs[f"q{w}_0"] = np.stack([np.cos(x / 2), np.sin(x / 2)], axis=-1).astype(complex)
    spec = NetworkSpec(tuple(nodes), tuple(f"q{w}_0" for w in range(n)), tuple(leg(w) for w in range(n)))
    return spec, values, inputs


def tn_amplitudes(circuit: CircuitSpec, angles, theta=None) -> np.ndarray:
    """Amplitudes obtained by contracting :func:`circuit_network`; ``(2**n,)`` or ``(B, 2**n)``."""
    spec, values, inputs = circuit_network(circuit, angles, theta)
    out = contract(spec, values, inputs).data
    angles = np.asarray(angles)
    return out.reshape(-1) if angles.ndim == 1 else out.reshape(len(angles), -1)
