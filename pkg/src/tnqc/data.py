"""Dataset container, binary file format, synthetic jets, splits and checkpoints.

Dataset file layout (little-endian)::

    magic    4 bytes  b"TNQC"
    version  uint32   1
    n_events uint32
    height   uint32
    width    uint32
    events   n_events x (height*width float32 pixels, row-major; uint8 label)
    [optional scaler trailer: b"SCAL", float64 lo, float64 hi]
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encode import Scaler
from .errors import FormatError, ShapeError, UnsupportedVersionError

__all__ = [
    "LabeledImageSet",
    "write_dataset",
    "read_dataset",
    "read_text_dump",
    "synth_generate",
    "split",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

MAGIC = b"TNQC"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_TRAILER_TAG = b"SCAL"
_TRAILER = struct.Struct("<4sdd")
CHECKPOINT_VERSION = 1


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (n, height, width) float32
    labels: np.ndarray  # (n,) uint8, 0 background / 1 signal
    scaler: Scaler | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.images.ndim != 3:
            raise ShapeError(f"images must have shape (n, height, width), got {self.images.shape}")
        if self.labels.shape != (len(self.images),):
            raise ShapeError(f"{len(self.labels)} labels for {len(self.images)} images")
        if np.any(self.labels > 1):
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return len(self.labels)

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def subset(self, index) -> "LabeledImageSet":
        return LabeledImageSet(self.images[index], self.labels[index], self.scaler)


def _event_dtype(height, width):
    return np.dtype([("pixels", "<f4", (height * width,)), ("label", "u1")])


def write_dataset(path, dataset: LabeledImageSet) -> None:
    n, h, w = dataset.images.shape
    records = np.empty(n, dtype=_event_dtype(h, w))
    records["pixels"] = dataset.images.reshape(n, h * w)
    records["label"] = dataset.labels
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, h, w))
        fh.write(records.tobytes())
        if dataset.scaler is not None:
            fh.write(_TRAILER.pack(_TRAILER_TAG, dataset.scaler.lo, dataset.scaler.hi))


def read_dataset(path) -> LabeledImageSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} of {_HEADER.size} bytes)", len(raw))
    magic, version, n, h, w = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported dataset version {version}", 4)
    if h < 1 or w < 1:
        raise FormatError(f"{path}: invalid image size {h}x{w}", 12)
    dtype = _event_dtype(h, w)
    body = n * dtype.itemsize
    end = _HEADER.size + body
    if len(raw) < end:
        complete = (len(raw) - _HEADER.size) // dtype.itemsize
        offset = _HEADER.size + complete * dtype.itemsize
        raise FormatError(f"{path}: truncated at event {complete} of {n}", offset)
    records = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
    labels = records["label"].copy()
    bad = np.flatnonzero(labels > 1)
    if bad.size:
        offset = _HEADER.size + bad[0] * dtype.itemsize + 4 * h * w
        raise FormatError(f"{path}: label {labels[bad[0]]} is not binary", int(offset))
    scaler = None
    rest = len(raw) - end
    if rest == _TRAILER.size and raw[end : end + 4] == _TRAILER_TAG:
        _, lo, hi = _TRAILER.unpack_from(raw, end)
        scaler = Scaler(lo, hi)
    elif rest:
        raise FormatError(f"{path}: {rest} unexpected trailing bytes", end)
    images = records["pixels"].reshape(n, h, w).copy()
    return LabeledImageSet(images, labels, scaler)


def read_text_dump(path, height: int = 37, width: int = 37) -> LabeledImageSet:
    """Convert a column dump (one event per line: height*width pixels then the label)."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values = line.replace(",", " ").split()
            if len(values) != height * width + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {height * width + 1} columns, got {len(values)}"
                )
            rows.append([float(v) for v in values])
    arr = np.array(rows, dtype=np.float64).reshape(-1, height * width + 1)
    labels = arr[:, -1]
    if not np.all((labels == 0) | (labels == 1)):
        raise FormatError(f"{path}: labels must be 0 or 1")
    return LabeledImageSet(arr[:, :-1].reshape(-1, height, width), labels.astype(np.uint8))


# --------------------------------------------------------------------------
# synthetic jet images
# --------------------------------------------------------------------------


def _blob(yy, xx, cy, cx, width, weight, profile="gauss"):
    r2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / width**2
    shape = np.exp(-0.5 * r2) if profile == "gauss" else np.exp(-np.sqrt(r2))
    return weight * shape / shape.sum()


def synth_generate(n_events: int, seed=0, size: int = 37) -> LabeledImageSet:
    """Desk-scale stand-in for top (signal) vs QCD (background) jet images.

    Background: one central core with an exponential falloff and faint
    wide-angle radiation. Signal: a broader leading prong plus one or two
    subjets 3-7 pixels away. Total intensity is about one per event and all
    pixels are non-negative. Labels are exactly balanced (signal gets the extra
    event when ``n_events`` is odd) and shuffled.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_events, dtype=np.uint8)
    labels[: (n_events + 1) // 2] = 1
    rng.shuffle(labels)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2
    images = np.empty((n_events, size, size), dtype=np.float32)
    for i, lab in enumerate(labels):
        total = rng.uniform(0.9, 1.1)
        img = np.zeros((size, size))
        if lab:
            n_sub = rng.integers(2, 4)
            lead = rng.uniform(0.35, 0.55)
            img += _blob(yy, xx, c + rng.normal(0, 0.5), c + rng.normal(0, 0.5), rng.uniform(1.2, 1.8), lead)
            rest = rng.dirichlet(np.ones(n_sub - 1)) * (1 - lead)
            angle0 = rng.uniform(0, 2 * math.pi)
            for k, w in enumerate(rest):
                angle = angle0 + k * rng.uniform(0.6, 1.4) * math.pi
                radius = rng.uniform(3.0, 7.0)
                img += _blob(
                    yy, xx, c + radius * math.sin(angle), c + radius * math.cos(angle), rng.uniform(1.0, 1.8), w
                )
        else:
            core = rng.uniform(0.8, 0.95)
            img += _blob(yy, xx, c + rng.normal(0, 0.3), c + rng.normal(0, 0.3), rng.uniform(0.6, 1.0), core, "exp")
            angle = rng.uniform(0, 2 * math.pi)
            radius = rng.uniform(2.0, 10.0)
            img += _blob(
                yy, xx, c + radius * math.sin(angle), c + radius * math.cos(angle), rng.uniform(1.5, 3.0), 1 - core
            )
        img *= total
        img += rng.exponential(2e-5, size=img.shape)
        images[i] = img
    return LabeledImageSet(images, labels)


def split(dataset: LabeledImageSet, fractions=(0.6, 0.2, 0.2), seed=0):
    """Stratified, seeded, disjoint split into ``len(fractions)`` parts."""
    fr = np.asarray(fractions, dtype=np.float64)
    if np.any(fr < 0) or fr.sum() <= 0:
        raise ValueError(f"invalid split fractions {fractions}")
    fr = fr / fr.sum()
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fr]
    for lab in (0, 1):
        idx = np.flatnonzero(dataset.labels == lab)
        idx = idx[rng.permutation(len(idx))]
        bounds = np.rint(np.concatenate([[0], np.cumsum(fr)]) * len(idx)).astype(int)
        bounds[-1] = len(idx)
        for k in range(len(fr)):
            parts[k].append(idx[bounds[k] : bounds[k + 1]])
    out = []
    for p in parts:
        p = np.concatenate(p)
        out.append(dataset.subset(np.sort(p)[rng.permutation(len(p))]))
    return tuple(out)


# --------------------------------------------------------------------------
# checkpoints (JSON text; Python float repr round-trips float64 exactly)
# --------------------------------------------------------------------------


def save_checkpoint(path, classifier, train_config=None, extra=None) -> None:
    doc = {
        "format": "tnqc-checkpoint",
        "version": CHECKPOINT_VERSION,
        "model": classifier.descriptor(),
        "parameters": {k: [float(v) for v in arr] for k, arr in classifier.params.items()},
        "train_config": train_config if train_config is not None else {},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Rebuild the classifier stored at ``path``; returns ``(classifier, document)``."""
    from .models import classifier_from_descriptor

    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != "tnqc-checkpoint":
        raise FormatError(f"{path}: not a tnqc checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    clf = classifier_from_descriptor(doc["model"])
    params = {}
    for group, expected in clf.params.items():
        values = doc["parameters"].get(group)
        if values is None or len(values) != expected.size:
            got = None if values is None else len(values)
            raise FormatError(f"{path}: parameter group {group!r} has {got} values, descriptor needs {expected.size}")
        params[group] = np.array(values, dtype=np.float64)
    if set(doc["parameters"]) != set(clf.params):
        raise FormatError(f"{path}: unexpected parameter groups {sorted(doc['parameters'])}")
    return clf.with_params(params), doc
