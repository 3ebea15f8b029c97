"""Dense tensors, network graphs and pairwise contraction.

A network is described by :class:`NetworkSpec`. Leg names are global within
a network: a leg carried by two nodes is a bond, a leg carried by one node is
open and must be declared either as an input leg (a vector is attached to it
at contraction time) or as an output leg.

Batched evaluation is supported by attaching inputs with a leading batch
axis. Internally the batch axis is a leg named :data:`BATCH` that is never
summed over.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeError, StructureError

__all__ = [
    "BATCH",
    "DenseTensor",
    "Node",
    "NetworkSpec",
    "contract",
    "contract_adjoint",
    "greedy_order",
    "random_init",
]

BATCH = "__batch__"


@dataclass(frozen=True)
class DenseTensor:
    """An n-dimensional array whose axes carry unique leg names."""

    data: np.ndarray
    legs: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data)
        legs = tuple(self.legs)
        if data.ndim != len(legs):
            raise ShapeError(f"tensor of rank {data.ndim} given {len(legs)} legs {legs}")
        if len(set(legs)) != len(legs):
            raise ShapeError(f"duplicate leg names in {legs}")
        if any(s < 1 for s in data.shape):
            raise ShapeError(f"leg dimensions must be >= 1, got {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "legs", legs)

    @classmethod
    def from_entries(cls, shape, legs, entries) -> "DenseTensor":
        entries = np.asarray(entries)
        if entries.size != math.prod(shape):
            raise ShapeError(f"{entries.size} entries do not fill shape {tuple(shape)}")
        return cls(entries.reshape(tuple(shape)), tuple(legs))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def entries(self) -> np.ndarray:
        return self.data.reshape(-1)

    def dim(self, leg: str) -> int:
        return self.data.shape[self.legs.index(leg)]

    def transpose(self, legs: Sequence[str]) -> "DenseTensor":
        legs = tuple(legs)
        if set(legs) != set(self.legs) or len(legs) != len(self.legs):
            raise ShapeError(f"cannot transpose legs {self.legs} to {legs}")
        perm = [self.legs.index(l) for l in legs]
        return DenseTensor(self.data.transpose(perm), legs)


@dataclass(frozen=True)
class Node:
    name: str
    legs: tuple[str, ...]
    shape: tuple[int, ...]
    trainable: bool = True

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class NetworkSpec:
    """Contraction graph of a tensor network.

    ``order`` is an optional sequence of bond names; when omitted a greedy
    order (smallest intermediate first) is used.
    """

    nodes: tuple[Node, ...]
    input_legs: tuple[str, ...]
    output_legs: tuple[str, ...]
    order: tuple[str, ...] | None = None
    _dims: dict = field(init=False, repr=False, compare=False)
    _owners: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "input_legs", tuple(self.input_legs))
        object.__setattr__(self, "output_legs", tuple(self.output_legs))
        if self.order is not None:
            object.__setattr__(self, "order", tuple(self.order))

        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate node names: {names}")
        if not self.output_legs:
            raise StructureError("network needs at least one output leg")

        dims: dict[str, int] = {}
        owners: dict[str, list[str]] = {}
        for node in self.nodes:
            if len(node.legs) != len(node.shape):
                raise ShapeError(f"node {node.name!r}: {len(node.legs)} legs vs shape {node.shape}")
            if len(set(node.legs)) != len(node.legs):
                raise ShapeError(f"node {node.name!r} repeats a leg: {node.legs}")
            if any(s < 1 for s in node.shape):
                raise ShapeError(f"node {node.name!r} has a non-positive dimension: {node.shape}")
            for leg, dim in zip(node.legs, node.shape):
                if leg == BATCH:
                    raise StructureError(f"leg name {BATCH!r} is reserved")
                owners.setdefault(leg, []).append(node.name)
                if leg in dims and dims[leg] != dim:
                    other = owners[leg][0]
                    raise ShapeError(
                        f"bond {leg!r}: leg ({other!r}, {leg!r}) has dimension {dims[leg]} "
                        f"but leg ({node.name!r}, {leg!r}) has dimension {dim}"
                    )
                dims[leg] = dim

        for leg, who in owners.items():
            if len(who) > 2:
                raise StructureError(f"leg {leg!r} is shared by more than two nodes: {who}")
        open_legs = {leg for leg, who in owners.items() if len(who) == 1}
        declared = set(self.input_legs) | set(self.output_legs)
        if set(self.input_legs) & set(self.output_legs):
            raise StructureError("a leg cannot be both input and output")
        if open_legs != declared:
            missing = sorted(open_legs - declared)
            extra = sorted(declared - open_legs)
            raise StructureError(
                f"open legs do not match declared inputs/outputs "
                f"(undeclared open legs: {missing}; declared but not open: {extra})"
            )

        _check_connected(self.nodes, owners)

        bonds = {leg for leg, who in owners.items() if len(who) == 2}
        if self.order is not None:
            if len(self.order) != len(set(self.order)) or set(self.order) != bonds:
                raise StructureError("contraction order must list every bond exactly once")

        object.__setattr__(self, "_dims", dims)
        object.__setattr__(self, "_owners", {k: tuple(v) for k, v in owners.items()})

    @property
    def bonds(self) -> tuple[str, ...]:
        return tuple(l for l, who in self._owners.items() if len(who) == 2)

    def dim(self, leg: str) -> int:
        return self._dims[leg]

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def trainable_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.trainable)

    def parameter_count(self) -> int:
        return sum(n.size for n in self.nodes if n.trainable)


def _check_connected(nodes, owners):
    if not nodes:
        raise StructureError("network has no nodes")
    parent = {n.name: n.name for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for who in owners.values():
        if len(who) == 2:
            parent[find(who[0])] = find(who[1])
    roots = {find(n.name) for n in nodes}
    if len(roots) > 1:
        raise StructureError(f"network graph is disconnected ({len(roots)} components)")


# --------------------------------------------------------------------------
# pairwise contraction
# --------------------------------------------------------------------------


def _pair(a: np.ndarray, a_legs, b: np.ndarray, b_legs):
    """Contract two tensors over all shared legs; the batch leg is kept."""
    batched = BATCH in a_legs and BATCH in b_legs
    shared = [l for l in a_legs if l in b_legs and l != BATCH]
    if not batched:
        ia = [a_legs.index(l) for l in shared]
        ib = [b_legs.index(l) for l in shared]
        out = np.tensordot(a, b, axes=(ia, ib))
        legs = [l for l in a_legs if l not in shared] + [l for l in b_legs if l not in shared]
        if BATCH in legs and legs[0] != BATCH:
            k = legs.index(BATCH)
            out = np.moveaxis(out, k, 0)
            legs = [BATCH] + legs[:k] + legs[k + 1 :]
        return out, tuple(legs)

    a_free = [l for l in a_legs if l not in shared and l != BATCH]
    b_free = [l for l in b_legs if l not in shared and l != BATCH]
    nb = a.shape[a_legs.index(BATCH)]
    at = a.transpose([a_legs.index(l) for l in [BATCH, *a_free, *shared]])
    bt = b.transpose([b_legs.index(l) for l in [BATCH, *shared, *b_free]])
    fa = at.shape[1 : 1 + len(a_free)]
    fb = bt.shape[1 + len(shared) :]
    s = math.prod(at.shape[1 + len(a_free) :])
    out = np.matmul(at.reshape(nb, math.prod(fa), s), bt.reshape(nb, s, math.prod(fb)))
    return out.reshape((nb, *fa, *fb)), (BATCH, *a_free, *b_free)


def _result_size(legs_a, legs_b, dims):
    shared = set(legs_a) & set(legs_b)
    shared.discard(BATCH)
    free = (set(legs_a) | set(legs_b)) - shared
    return math.prod(dims[l] for l in free)


@functools.lru_cache(maxsize=4096)
def greedy_order(leg_sets: tuple, dims: tuple) -> tuple:
    """Greedy pairwise contraction path.

    ``leg_sets`` holds one tuple of leg names per operand and ``dims`` is a
    sorted tuple of ``(leg, dimension)`` pairs. Each step merges the pair of
    operands that share a leg and yields the smallest intermediate; merged
    operands are appended at the end. Returns a tuple of ``(i, j)`` steps.
    """
    dims = dict(dims)
    live = [tuple(s) for s in leg_sets]
    path = []
    while len(live) > 1:
        best = None
        for i in range(len(live)):
            si = set(live[i]) - {BATCH}
            for j in range(i + 1, len(live)):
                connected = bool(si & set(live[j]))
                cost = (not connected, _result_size(live[i], live[j], dims))
                if best is None or cost < best[0]:
                    best = (cost, i, j)
        _, i, j = best
        a, b = live[i], live[j]
        shared = (set(a) & set(b)) - {BATCH}
        merged = tuple(l for l in a if l not in shared) + tuple(
            l for l in b if l not in shared and l not in a
        )
        live = [t for k, t in enumerate(live) if k not in (i, j)] + [merged]
        path.append((i, j))
    return tuple(path)


def _contract_all(tensors, order=None):
    """Contract a list of ``(array, legs)`` operands down to one."""
    tensors = list(tensors)
    if order is not None:
        for bond in order:
            idx = [k for k, (_, legs) in enumerate(tensors) if bond in legs]
            if len(idx) < 2:
                continue
            i, j = idx
            merged = _pair(*tensors[i], *tensors[j])
            tensors = [t for k, t in enumerate(tensors) if k not in (i, j)] + [merged]
    if len(tensors) > 1:
        dims = {}
        for arr, legs in tensors:
            dims.update(zip(legs, arr.shape))
        key = tuple(tuple(legs) for _, legs in tensors)
        for i, j in greedy_order(key, tuple(sorted(dims.items()))):
            merged = _pair(*tensors[i], *tensors[j])
            tensors = [t for k, t in enumerate(tensors) if k not in (i, j)] + [merged]
    return tensors[0]


def _node_arrays(spec: NetworkSpec, node_values):
    out = {}
    for node in spec.nodes:
        if node.name not in node_values:
            raise ShapeError(f"no value given for node {node.name!r}")
        value = node_values[node.name]
        if isinstance(value, DenseTensor):
            value = value.transpose(node.legs).data
        value = np.asarray(value)
        if value.shape != node.shape:
            raise ShapeError(f"node {node.name!r} expects shape {node.shape}, got {value.shape}")
        out[node.name] = value
    return out


def _input_operands(spec: NetworkSpec, inputs):
    missing = set(spec.input_legs) - set(inputs)
    if missing:
        raise ShapeError(f"no input vector for legs {sorted(missing)}")
    ops = []
    batch = None
    for leg in spec.input_legs:
        vec = np.asarray(inputs[leg])
        dim = spec.dim(leg)
        if vec.ndim == 1:
            if vec.shape[0] != dim:
                raise ShapeError(f"input leg {leg!r} has dimension {dim}, got vector of length {vec.shape[0]}")
            ops.append((vec, (leg,)))
        elif vec.ndim == 2:
            if vec.shape[1] != dim:
                raise ShapeError(f"input leg {leg!r} has dimension {dim}, got vectors of length {vec.shape[1]}")
            if batch is not None and vec.shape[0] != batch:
                raise ShapeError(f"inconsistent batch sizes {batch} and {vec.shape[0]}")
            batch = vec.shape[0]
            ops.append((vec, (BATCH, leg)))
        else:
            raise ShapeError(f"input for leg {leg!r} must be 1-d or 2-d, got {vec.ndim}-d")
    return ops, batch


def contract(spec: NetworkSpec, node_values: Mapping, inputs: Mapping | None = None) -> DenseTensor:
    """Contract the network; returns a tensor over ``spec.output_legs``.

    If any input carries a leading batch axis the result has the batch leg
    :data:`BATCH` first.
    """
    arrays = _node_arrays(spec, node_values)
    in_ops, batch = _input_operands(spec, inputs or {})
    ops = list(in_ops) + [(arrays[n.name], n.legs) for n in spec.nodes]
    if spec.order is not None:
        # absorb input vectors before following the supplied bond order
        order = tuple(spec.input_legs) + spec.order
    else:
        order = None
    arr, legs = _contract_all(ops, order)
    target = ((BATCH,) if batch is not None else ()) + spec.output_legs
    return DenseTensor(arr.transpose([legs.index(l) for l in target]), target)


def contract_adjoint(
    spec: NetworkSpec,
    node_values: Mapping,
    inputs: Mapping | None,
    output_cotangent,
    per_event: bool = False,
) -> dict[str, np.ndarray]:
    """Gradient of ``<cotangent, contract(...)>`` with respect to each trainable node.

    The pairing is bilinear (no complex conjugation). Each node gradient is the
    contraction of the network with that node removed and the cotangent
    attached to the output legs. For batched inputs the cotangent carries the
    batch axis first; gradients are summed over the batch unless ``per_event``
    is set, in which case each gradient has a leading batch axis.
    """
    arrays = _node_arrays(spec, node_values)
    in_ops, batch = _input_operands(spec, inputs or {})
    if isinstance(output_cotangent, DenseTensor):
        cot_legs = ((BATCH,) if batch is not None else ()) + spec.output_legs
        output_cotangent = output_cotangent.transpose(cot_legs).data
    cot = np.asarray(output_cotangent)
    expected = ((batch,) if batch is not None else ()) + tuple(spec.dim(l) for l in spec.output_legs)
    if cot.shape != expected:
        raise ShapeError(f"cotangent shape {cot.shape} does not match output shape {expected}")
    cot_op = (cot, ((BATCH,) if batch is not None else ()) + spec.output_legs)

    grads = {}
    for node in spec.trainable_nodes():
        ops = [cot_op, *in_ops] + [(arrays[n.name], n.legs) for n in spec.nodes if n.name != node.name]
        arr, legs = _contract_all(ops)
        if batch is not None:
            if BATCH not in legs:
                # environment independent of the batch (cannot happen for connected nets)
                arr = np.broadcast_to(arr, (batch, *arr.shape))
                legs = (BATCH, *legs)
            target = (BATCH, *node.legs)
            arr = arr.transpose([legs.index(l) for l in target])
            if not per_event:
                arr = arr.sum(axis=0)
        else:
            arr = arr.transpose([legs.index(l) for l in node.legs])
        grads[node.name] = arr
    return grads


def random_init(
    shape,
    seed,
    scheme: str = "gaussian",
    sigma: float = 1.0,
    legs: Sequence[str] | None = None,
    pairs: Sequence[tuple[int, int]] = ((0, -1),),
) -> DenseTensor:
    """Seeded random tensor.

    ``gaussian`` draws i.i.d. N(0, sigma^2) entries. ``identity`` adds the same
    noise to an identity-like core which is one wherever the index on each axis
    pair in ``pairs`` coincides (by default the first and last axis), so a
    rank-3 MPS core ``(chi, D, chi)`` starts as the identity on its bond legs
    for every physical index.
    """
    shape = tuple(int(s) for s in shape)
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"dimensions must be >= 1, got {shape}")
    rng = np.random.default_rng(seed)
    data = sigma * rng.standard_normal(shape)
    if scheme == "identity":
        base = np.ones(shape)
        grids = np.indices(shape)
        for i, j in pairs:
            base = base * (grids[i] == grids[j])
        data = data + base
    elif scheme != "gaussian":
        raise ValueError(f"unknown init scheme {scheme!r}")
    if legs is None:
        legs = tuple(f"l{k}" for k in range(len(shape)))
    return DenseTensor(data, tuple(legs))
