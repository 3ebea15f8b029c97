"""Classical tensor-network classifiers: MPS, TTN, MERA and the hybrid fronts.

Every model maps ``n_sites`` feature vectors (one per input leg ``p{i}``) to
label scores. Hybrid fronts consist of four independent sub-networks, each
producing one scalar, so a model holds a tuple of connected components whose
outputs are concatenated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .encode import hypersphere_map
from .errors import DegenerateDataError, ShapeError, StructureError
from .tensor import NetworkSpec, Node, contract, contract_adjoint, random_init

__all__ = [
    "ARCHITECTURES",
    "CtnModel",
    "build_mps",
    "build_ttn",
    "build_mera",
    "build_hybrid_ttn_front",
    "build_hybrid_mps_front",
    "build",
    "forward",
    "forward_adjoint",
    "born_probability",
    "parameter_count",
    "random_mps_state",
]

ARCHITECTURES = ("MPS", "TTN", "MERA", "HYBRID_TTN_FRONT", "HYBRID_MPS_FRONT")

INIT_SIGMA = 0.1


@dataclass
class CtnModel:
    architecture: str
    n_sites: int
    D: int
    chi: int
    L: int
    components: tuple[NetworkSpec, ...]
    theta: np.ndarray = field(repr=False)
    layout: str = "canonical"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.n_params,):
            raise ShapeError(f"theta has {self.theta.size} entries, model needs {self.n_params}")

    @property
    def n_params(self) -> int:
        return sum(c.parameter_count() for c in self.components)

    @property
    def n_outputs(self) -> int:
        return sum(c.dim(c.output_legs[0]) for c in self.components)

    def slices(self):
        """Yield ``(component_index, node, slice)`` in parameter order."""
        start = 0
        for k, comp in enumerate(self.components):
            for node in comp.trainable_nodes():
                yield k, node, slice(start, start + node.size)
                start += node.size

    def node_values(self, theta=None) -> list[dict[str, np.ndarray]]:
        theta = self.theta if theta is None else np.asarray(theta)
        values = [dict() for _ in self.components]
        for k, node, sl in self.slices():
            values[k][node.name] = theta[sl].reshape(node.shape)
        return values

    def with_theta(self, theta) -> "CtnModel":
        return replace(self, theta=np.array(theta, dtype=np.float64))

    def map_features(self, x) -> np.ndarray:
        """Standardized pixels ``(..., n_sites)`` -> hypersphere vectors ``(..., n_sites, D)``."""
        return hypersphere_map(x, self.D)

    def descriptor(self) -> dict:
        return {
            "type": self.architecture,
            "n_sites": self.n_sites,
            "D": self.D,
            "chi": self.chi,
            "L": self.L,
            "layout": self.layout,
        }


class _Builder:
    """Accumulates nodes and their initial values for one component."""

    def __init__(self, seed):
        self.nodes: list[Node] = []
        self.values: list[np.ndarray] = []
        self.seed = None if seed is None else tuple(int(v) for v in np.atleast_1d(seed))
        self._count = 0

    def add(self, name, legs, shape, pairs=((0, -1),)):
        self.nodes.append(Node(name, tuple(legs), tuple(shape)))
        seed = None if self.seed is None else (*self.seed, self._count)
        self._count += 1
        t = random_init(shape, seed, "identity", INIT_SIGMA, legs=legs, pairs=pairs)
        self.values.append(t.data.reshape(-1))

    def spec(self, inputs, outputs, order=None):
        return NetworkSpec(tuple(self.nodes), tuple(inputs), tuple(outputs), order)


def _seed(seed, k):
    return None if seed is None else [seed, k]


def _model(architecture, n_sites, D, chi, L, builders, inputs, outputs, layout="canonical"):
    comps = tuple(b.spec(i, o) for b, i, o in zip(builders, inputs, outputs))
    theta = np.concatenate([v for b in builders for v in b.values])
    return CtnModel(architecture, n_sites, D, chi, L, comps, theta, layout)


def _check_dims(**dims):
    for name, v in dims.items():
        if int(v) != v or v < 1:
            raise ShapeError(f"{name} must be a positive integer, got {v}")


def _mps_chain(b: _Builder, sites, D, chi, L, label_at, prefix="s", out_leg="label"):
    """Open chain over global site indices ``sites``; ``label_at`` is a position in the chain."""
    n = len(sites)
    for k, site in enumerate(sites):
        legs, shape = [], []
        if k > 0:
            legs.append(f"{prefix}b{k - 1}")
            shape.append(chi)
        legs.append(f"p{site}")
        shape.append(D)
        if k < n - 1:
            legs.append(f"{prefix}b{k}")
            shape.append(chi)
        if k == label_at:
            legs.append(out_leg)
            shape.append(L)
        b.add(f"{prefix}{k}", legs, shape, pairs=((0, -1),))


def build_mps(n_sites: int, D: int, chi: int, L: int = 2, seed=0) -> CtnModel:
    """Open-boundary MPS with the label leg on the last site."""
    _check_dims(D=D, chi=chi, L=L)
    if n_sites < 2:
        raise ShapeError(f"MPS needs at least 2 sites, got {n_sites}")
    b = _Builder(seed)
    _mps_chain(b, range(n_sites), D, chi, L, label_at=n_sites - 1)
    return _model("MPS", n_sites, D, chi, L, [b], [[f"p{i}" for i in range(n_sites)]], [["label"]])


def build_ttn(n_sites: int, D: int, chi: int, L: int = 2, seed=0) -> CtnModel:
    """Binary tree; unpaired wires are carried up a level unchanged."""
    _check_dims(D=D, chi=chi, L=L)
    if n_sites < 2 or n_sites % 2:
        raise ShapeError(f"TTN needs an even number of sites, got {n_sites}")
    b = _Builder(seed)
    if n_sites == 2:
        b.add("t0_0", ["p0", "p1", "label"], [D, D, L])
        return _model("TTN", 2, D, chi, L, [b], [["p0", "p1"]], [["label"]])
    wires = []
    for k in range(n_sites // 2):
        out = f"e0_{k}"
        b.add(f"t0_{k}", [f"p{2 * k}", f"p{2 * k + 1}", out], [D, D, chi])
        wires.append(out)
    level = 1
    while len(wires) > 2:
        nxt = []
        for k in range(0, len(wires) - 1, 2):
            out = f"e{level}_{k // 2}"
            b.add(f"t{level}_{k // 2}", [wires[k], wires[k + 1], out], [chi, chi, chi])
            nxt.append(out)
        if len(wires) % 2:
            nxt.append(wires[-1])
        wires = nxt
        level += 1
    b.add("top", [wires[0], wires[1], "label"], [chi, chi, L])
    return _model("TTN", n_sites, D, chi, L, [b], [[f"p{i}" for i in range(n_sites)]], [["label"]])


_DIS_PAIRS = ((0, 2), (1, 3))


def _mera_generic(b: _Builder, n_sites, D, chi, L):
    wires = [(f"p{i}", D) for i in range(n_sites)]
    level = 0
    while len(wires) > 2:
        # disentanglers on (w1, w2), (w3, w4), ... with open boundaries
        for k in range(1, len(wires) - 1, 2):
            (la, da), (lb, db) = wires[k], wires[k + 1]
            oa, ob = f"u{level}_{k}a", f"u{level}_{k}b"
            b.add(f"u{level}_{k}", [la, lb, oa, ob], [da, db, chi, chi], pairs=_DIS_PAIRS)
            wires[k], wires[k + 1] = (oa, chi), (ob, chi)
        nxt = []
        for k in range(0, len(wires) - 1, 2):
            (la, da), (lb, db) = wires[k], wires[k + 1]
            out = f"c{level}_{k // 2}"
            b.add(f"c{level}_{k // 2}", [la, lb, out], [da, db, chi])
            nxt.append((out, chi))
        if len(wires) % 2:
            nxt.append(wires[-1])
        wires = nxt
        level += 1
    (la, da), (lb, db) = wires
    b.add("top", [la, lb, "label"], [da, db, L])


def build_mera(n_sites: int, D: int, chi: int, L: int = 2, seed=0, layout: str = "canonical") -> CtnModel:
    """MERA/TTN mixture of rank-4 disentanglers and rank-3 condensers.

    ``canonical`` supports 4 and 6 sites. ``generic`` accepts any even
    ``n_sites >= 4``: before every condensing level, disentanglers act on the
    offset pairs (w1, w2), (w3, w4), ... of the surviving wires. For 4 sites
    both layouts coincide.
    """
    _check_dims(D=D, chi=chi, L=L)
    b = _Builder(seed)
    if layout == "generic":
        if n_sites < 4 or n_sites % 2:
            raise ShapeError(f"generic MERA needs an even number of sites >= 4, got {n_sites}")
        _mera_generic(b, n_sites, D, chi, L)
    elif layout == "canonical":
        if n_sites == 4:
            _mera_generic(b, 4, D, chi, L)
        elif n_sites == 6:
            b.add("u0", ["p1", "p2", "a0", "a1"], [D, D, chi, chi], pairs=_DIS_PAIRS)
            b.add("u1", ["p3", "p4", "a2", "a3"], [D, D, chi, chi], pairs=_DIS_PAIRS)
            b.add("c0", ["p0", "a0", "e0"], [D, chi, chi])
            b.add("c1", ["a1", "a2", "e1"], [chi, chi, chi])
            b.add("c2", ["a3", "p5", "e2"], [chi, D, chi])
            b.add("m0", ["e0", "e1", "f0", "f1"], [chi, chi, chi, chi], pairs=_DIS_PAIRS)
            b.add("c3", ["f1", "e2", "g0"], [chi, chi, chi])
            b.add("top", ["f0", "g0", "label"], [chi, chi, L])
        else:
            raise StructureError(f"canonical MERA supports 4 or 6 sites, got {n_sites}")
    else:
        raise ValueError(f"unknown MERA layout {layout!r}")
    return _model(
        "MERA", n_sites, D, chi, L, [b], [[f"p{i}" for i in range(n_sites)]], [["label"]], layout
    )


def build_hybrid_ttn_front(D: int, chi: int, seed=0) -> CtnModel:
    """Two-dimensional TTN front for a 6x6 image (row-major features).

    Nine rank-5 nodes pool the 2x2 blocks into wires w0..w8; condensers merge
    (w0,w1), (w2,w3), (w4,w5), (w6,w7) and then (merged w6w7, w8); each of the
    four remaining wires is projected to a scalar.
    """
    _check_dims(D=D, chi=chi)
    groups = [[0, 1], [2, 3], [4, 5], [6, 7, 8]]
    builders, inputs, outputs = [], [], []
    for g, blocks in enumerate(groups):
        b = _Builder(_seed(seed, g))
        pix = []
        for w in blocks:
            br, bc = divmod(w, 3)
            cells = [(2 * br + dr) * 6 + 2 * bc + dc for dr in (0, 1) for dc in (0, 1)]
            pix += cells
            b.add(f"pool{w}", [f"p{c}" for c in cells] + [f"w{w}"], [D] * 4 + [chi])
        b.add(f"cond{g}", [f"w{blocks[0]}", f"w{blocks[1]}", f"v{g}"], [chi, chi, chi])
        last = f"v{g}"
        if len(blocks) == 3:
            b.add(f"cond{g}x", [last, f"w{blocks[2]}", f"v{g}x"], [chi, chi, chi])
            last = f"v{g}x"
        b.add(f"proj{g}", [last, f"o{g}"], [chi, 1])
        builders.append(b)
        inputs.append([f"p{c}" for c in pix])
        outputs.append([f"o{g}"])
    return _model("HYBRID_TTN_FRONT", 36, D, chi, 1, builders, inputs, outputs)


def build_hybrid_mps_front(D: int, chi: int, seed=0) -> CtnModel:
    """Four independent 9-site MPS chains over an s-ordered 6x6 image.

    The centre (5th) site of each chain carries a dimension-1 output leg.
    """
    _check_dims(D=D, chi=chi)
    builders, inputs, outputs = [], [], []
    for g in range(4):
        b = _Builder(_seed(seed, g))
        sites = list(range(9 * g, 9 * g + 9))
        _mps_chain(b, sites, D, chi, 1, label_at=4, prefix=f"m{g}_", out_leg=f"o{g}")
        builders.append(b)
        inputs.append([f"p{s}" for s in sites])
        outputs.append([f"o{g}"])
    return _model("HYBRID_MPS_FRONT", 36, D, chi, 1, builders, inputs, outputs)


def build(descriptor: dict, seed=0) -> CtnModel:
    """Rebuild a model from :meth:`CtnModel.descriptor` output."""
    kind = descriptor["type"]
    D, chi = descriptor["D"], descriptor["chi"]
    if kind == "MPS":
        return build_mps(descriptor["n_sites"], D, chi, descriptor["L"], seed)
    if kind == "TTN":
        return build_ttn(descriptor["n_sites"], D, chi, descriptor["L"], seed)
    if kind == "MERA":
        return build_mera(descriptor["n_sites"], D, chi, descriptor["L"], seed, descriptor.get("layout", "canonical"))
    if kind == "HYBRID_TTN_FRONT":
        return build_hybrid_ttn_front(D, chi, seed)
    if kind == "HYBRID_MPS_FRONT":
        return build_hybrid_mps_front(D, chi, seed)
    raise ValueError(f"unknown architecture {kind!r}")


def _component_inputs(comp: NetworkSpec, phi):
    return {leg: phi[..., int(leg[1:]), :] for leg in comp.input_legs}


def _check_features(model, phi):
    phi = np.asarray(phi)
    if phi.ndim not in (2, 3) or phi.shape[-2:] != (model.n_sites, model.D):
        raise ShapeError(
            f"expected mapped features of shape (..., {model.n_sites}, {model.D}), got {phi.shape}"
        )
    return phi


def forward(model: CtnModel, features, theta=None) -> np.ndarray:
    """Contract the network(s) for mapped features ``(n_sites, D)`` or ``(B, n_sites, D)``.

    Returns label scores of shape ``(n_outputs,)`` or ``(B, n_outputs)``.
    """
    phi = _check_features(model, features)
    values = model.node_values(theta)
    outs = [
        contract(comp, values[k], _component_inputs(comp, phi)).data
        for k, comp in enumerate(model.components)
    ]
    return np.concatenate(outs, axis=-1)


def forward_adjoint(model: CtnModel, features, cotangent, theta=None, per_event=False) -> np.ndarray:
    """Flat gradient of ``sum(cotangent * forward(...))`` with respect to theta."""
    phi = _check_features(model, features)
    cotangent = np.asarray(cotangent)
    values = model.node_values(theta)
    batch = phi.shape[0] if phi.ndim == 3 else None
    shape = (model.n_params,) if (batch is None or not per_event) else (batch, model.n_params)
    grad = np.zeros(shape)
    col = 0
    for k, comp in enumerate(model.components):
        width = comp.dim(comp.output_legs[0])
        cot = cotangent[..., col : col + width]
        col += width
        g = contract_adjoint(comp, values[k], _component_inputs(comp, phi), cot, per_event=per_event)
        for kk, node, sl in model.slices():
            if kk == k:
                if grad.ndim == 2:
                    grad[:, sl] = g[node.name].reshape(batch, -1)
                else:
                    grad[sl] = g[node.name].reshape(-1)
    return grad


def born_probability(scores) -> np.ndarray:
    """p_l = |f_l|^2 / sum_k |f_k|^2 along the last axis."""
    f2 = np.abs(np.asarray(scores)) ** 2
    norm = f2.sum(axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateDataError("all label scores are zero; Born probability undefined")
    return f2 / norm


def parameter_count(model: CtnModel) -> int:
    return sum(node.size for _, node, _ in model.slices())


def random_mps_state(n_sites: int, d: int, chi: int, seed=None) -> np.ndarray:
    """Dense normalized state of a random open-boundary MPS, shape ``(d,) * n_sites``."""
    rng = np.random.default_rng(seed)
    nodes, values = [], {}
    for k in range(n_sites):
        legs, shape = [], []
        if k > 0:
            legs.append(f"b{k - 1}")
            shape.append(chi)
        legs.append(f"p{k}")
        shape.append(d)
        if k < n_sites - 1:
            legs.append(f"b{k}")
            shape.append(chi)
        nodes.append(Node(f"s{k}", tuple(legs), tuple(shape)))
        values[f"s{k}"] = rng.standard_normal(shape)
    spec = NetworkSpec(tuple(nodes), (), tuple(f"p{k}" for k in range(n_sites)))
    psi = contract(spec, values).data
    return psi / math.sqrt(np.sum(np.abs(psi) ** 2))
