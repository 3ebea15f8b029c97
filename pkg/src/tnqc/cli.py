"""Command-line interface: ``tnqc <command> [options]``.

Every command writes its artifacts into the output directory (``--out``,
else ``$TNQ_OUT``, else ``./tnqc-out``). Exit codes: 0 success, 1 internal
error, 2 usage or configuration error, 3 missing file, 4 malformed file,
5 numerical or domain failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import data, diag, encode, models, optim, qsim
from .errors import ConfigError, DomainError, FormatError, NumericalError, TnqcError

log = logging.getLogger("tnqc")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_FORMAT, EXIT_NUMERIC = 0, 1, 2, 3, 4, 5

DEFAULT_CONFIG = {
    "arch": "qttn",
    "seed": 0,
    "shots": None,
    "out": None,
    "model": {
        "D": 2,
        "chi": 5,
        "qubits": None,
        "full_unitary": False,
        "qmera_layout": "open",
        "mera_layout": "canonical",
        "qnet": "qttn",
        "squash": False,
    },
    "data": {
        "path": None,
        "crop": 14,
        "pool": 2,
        "flip": True,
        "mode": "central4+top2",
        "fractions": [0.6, 0.2, 0.2],
        "n_fit": None,
    },
    "train": {},
}

# hybrid fronts read the 6x6 image: row-major for the TTN front, serpentine for the MPS chains
HYBRID_DATA = {
    "hybrid-ttn": {"crop": 12, "mode": "full"},
    "hybrid-mps": {"crop": 12, "mode": "s_order"},
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the YAML file, then command-line overrides; validated."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        loaded = yaml.safe_load(p.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        cfg = _merge(cfg, loaded)
    arch = str((overrides or {}).get("arch") or cfg["arch"]).lower()
    if arch in HYBRID_DATA:
        file_data = (loaded.get("data") or {}) if path is not None else {}
        for k, v in HYBRID_DATA[arch].items():
            if k not in file_data:
                cfg["data"][k] = v
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    problems = []
    known_top = set(DEFAULT_CONFIG)
    for k in sorted(set(cfg) - known_top):
        problems.append(f"unknown field {k!r}")
    for section in ("model", "data"):
        for k in sorted(set(cfg.get(section) or {}) - set(DEFAULT_CONFIG[section])):
            problems.append(f"unknown field {section}.{k}")
    arch = str(cfg.get("arch", "")).lower()
    if arch not in models.ARCH_NAMES:
        problems.append(f"arch: {arch!r} is not one of {', '.join(models.ARCH_NAMES)}")
    m, d = cfg["model"], cfg["data"]
    for key in ("D", "chi"):
        if not isinstance(m.get(key), int) or m[key] < (2 if key == "D" else 1):
            problems.append(f"model.{key}: must be an integer >= {2 if key == 'D' else 1} (got {m.get(key)!r})")
    if m.get("qubits") is not None and (not isinstance(m["qubits"], int) or m["qubits"] < 2):
        problems.append(f"model.qubits: must be an integer >= 2 (got {m['qubits']!r})")
    if m.get("qmera_layout") not in ("open", "periodic"):
        problems.append(f"model.qmera_layout: must be open or periodic (got {m.get('qmera_layout')!r})")
    if m.get("mera_layout") not in ("canonical", "generic"):
        problems.append(f"model.mera_layout: must be canonical or generic (got {m.get('mera_layout')!r})")
    if m.get("qnet") not in ("qmps", "qttn", "qmera"):
        problems.append(f"model.qnet: must be qmps, qttn or qmera (got {m.get('qnet')!r})")
    if d.get("mode") not in encode.SELECTION_MODES:
        problems.append(f"data.mode: must be one of {', '.join(encode.SELECTION_MODES)} (got {d.get('mode')!r})")
    if not isinstance(d.get("crop"), int) or d["crop"] < 0:
        problems.append(f"data.crop: must be a non-negative integer (got {d.get('crop')!r})")
    if not isinstance(d.get("pool"), int) or d["pool"] < 1:
        problems.append(f"data.pool: must be a positive integer (got {d.get('pool')!r})")
    fr = d.get("fractions")
    if not isinstance(fr, (list, tuple)) or len(fr) != 3 or any(not isinstance(v, (int, float)) or v < 0 for v in fr):
        problems.append(f"data.fractions: must be three non-negative numbers (got {fr!r})")
    elif fr[0] <= 0 or fr[1] <= 0:
        problems.append("data.fractions: train and validation fractions must be positive")
    if cfg.get("shots") is not None and (not isinstance(cfg["shots"], int) or cfg["shots"] < 1):
        problems.append(f"shots: must be a positive integer (got {cfg['shots']!r})")
    train = cfg.get("train") or {}
    if not isinstance(train, dict):
        problems.append("train: must be a mapping")
    else:
        try:
            optim.TrainConfig.from_dict({**train, "seed": cfg.get("seed", 0)})
        except ConfigError as exc:
            problems += [f"train.{p}" for p in exc.problems]
        except TypeError as exc:
            problems.append(f"train: {exc}")
    if problems:
        raise ConfigError(problems)


def _train_config(cfg) -> optim.TrainConfig:
    return optim.TrainConfig.from_dict({**cfg["train"], "seed": cfg["seed"], "shots": cfg.get("shots")})


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("TNQ_OUT") or "tnqc-out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"file not found: {p}")
    return p


def features(dataset: data.LabeledImageSet, cfg_data: dict, scaler=None):
    """Images to model inputs. Returns ``(x, scaler)``.

    A dataset that carries a scaler is taken as already cropped and
    downsampled; otherwise raw images are flipped, cropped and pooled first.
    """
    if dataset.scaler is not None:
        imgs = dataset.images.astype(np.float64)
        scaler = scaler or dataset.scaler
    else:
        imgs = encode.preprocess(dataset.images, cfg_data["crop"], cfg_data["pool"], cfg_data["flip"])
        if scaler is None:
            scaler = encode.fit_scaler(imgs, cfg_data.get("n_fit"))
    x = encode.select_pixels(encode.standardize(imgs, scaler), cfg_data["mode"])
    return x, scaler


def _classifier(cfg, n_features):
    m = cfg["model"]
    arch = cfg["arch"].lower()
    n = m["qubits"] if arch in ("qmps", "qttn", "qmera") and m.get("qubits") else n_features
    return models.build_classifier(
        arch,
        n,
        D=m["D"],
        chi=m["chi"],
        seed=cfg["seed"],
        qnet=m["qnet"],
        full_unitary=m["full_unitary"],
        qmera_layout=m["qmera_layout"],
        mera_layout=m["mera_layout"],
        squash=m["squash"],
    )


def _size_classifier(cfg, size):
    """Classifier for diagnostics: ``size`` sites or qubits."""
    cfg = _merge(cfg, {"model": {"qubits": size}})
    return _classifier(cfg, size)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(args, cfg):
    out = _out_dir(args)
    ds = data.synth_generate(args.n, seed=cfg["seed"], size=args.size)
    path = out / args.name
    data.write_dataset(path, ds)
    print(f"wrote {len(ds)} events ({int(ds.labels.sum())} signal) to {path}")


def cmd_preprocess(args, cfg):
    out = _out_dir(args)
    src = _require(args.input)
    ds = data.read_text_dump(src, args.height, args.width) if args.text else data.read_dataset(src)
    d = cfg["data"]
    imgs = encode.preprocess(ds.images, d["crop"], d["pool"], d["flip"])
    scaler = encode.fit_scaler(imgs, d.get("n_fit"))
    pre = data.LabeledImageSet(imgs.astype(np.float32), ds.labels, scaler)
    path = out / args.name
    data.write_dataset(path, pre)
    print(f"wrote {len(pre)} preprocessed {pre.height}x{pre.width} events to {path} (scaler {scaler.lo:.6g}..{scaler.hi:.6g})")


def cmd_train(args, cfg):
    out = _out_dir(args)
    if not cfg["data"]["path"]:
        raise ConfigError("data.path: a dataset is required for training")
    ds = data.read_dataset(_require(cfg["data"]["path"]))
    tr, va, te = data.split(ds, cfg["data"]["fractions"], seed=cfg["seed"])
    xt, scaler = features(tr, cfg["data"])
    xv, _ = features(va, cfg["data"], scaler)
    clf = _classifier(cfg, xt.shape[1])
    tc = _train_config(cfg)

    def report(row):
        print(
            f"epoch {row['epoch']:4d}  train {row['train_loss']:.5f}  val {row['val_loss']:.5f}  auc {row['val_auc']:.4f}"
        )

    result = optim.train(clf, (xt, tr.labels), (xv, va.labels), tc, callback=None if args.quiet else report)
    optim.write_log(out / "train_log.csv", result.log)
    data.save_checkpoint(
        out / "checkpoint.json",
        result.classifier,
        tc.to_dict(),
        extra={"scaler": [scaler.lo, scaler.hi], "data": cfg["data"]},
    )
    summary = {
        "arch": cfg["arch"],
        "n_params": int(sum(v.size for v in result.classifier.params.values())),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "epochs_run": len(result.log),
        "stopped_early": result.stopped_early,
        "best_val_auc": max((r["val_auc"] for r in result.log), default=None),
    }
    _write_json(out / "train_summary.json", summary)
    print(f"best epoch {result.best_epoch} (val loss {result.best_val_loss:.5f}); checkpoint in {out}")


def _load_for_eval(checkpoint, args, cfg):
    clf, doc = data.load_checkpoint(_require(checkpoint))
    extra = doc.get("extra", {})
    data_cfg = _merge(cfg["data"], extra.get("data", {}))
    data_path = args.data or cfg["data"]["path"] or data_cfg.get("path")
    if not data_path:
        raise ConfigError("data.path: a dataset is required")
    ds = data.read_dataset(_require(data_path))
    if args.split:
        seed = doc["train_config"].get("seed", 0)
        parts = dict(zip(("train", "val", "test"), data.split(ds, data_cfg["fractions"], seed=seed)))
        ds = parts[args.split]
    scaler = encode.Scaler(*extra["scaler"]) if "scaler" in extra else None
    x, _ = features(ds, data_cfg, scaler)
    return clf, x, ds.labels


def cmd_eval(args, cfg):
    out = _out_dir(args)
    clf, x, y = _load_for_eval(args.checkpoint, args, cfg)
    loss, auc, scores = optim.evaluate(clf, x, y)
    report = {"n_events": int(len(y)), "loss": loss, "auc": auc}
    if cfg.get("shots"):
        if clf.kind == "classical":
            raise ConfigError("shots: shot sampling applies to quantum and hybrid models only")
        s_loss, s_auc, _ = optim.evaluate(clf, x, y, shots=cfg["shots"], seed=cfg["seed"])
        report.update({"shots": cfg["shots"], "shot_seed": cfg["seed"], "shot_loss": s_loss, "shot_auc": s_auc})
    _write_json(out / "eval.json", report)
    _write_csv(out / "scores.csv", ["label", "score"], zip(y.tolist(), scores.tolist()))
    print(json.dumps(report, indent=1, sort_keys=True))


def cmd_roc(args, cfg):
    out = _out_dir(args)
    clf, x, y = _load_for_eval(args.checkpoint, args, cfg)
    fpr, tpr, auc = diag.roc_auc(clf.predict_proba(x)[:, 1], y)
    _write_csv(out / "roc.csv", ["fpr", "tpr"], zip(fpr.tolist(), tpr.tolist()))
    report = {"auc": auc, "n_points": int(len(fpr))}
    if args.compare:
        other, xo, yo = _load_for_eval(args.compare, args, cfg)
        roc_o = diag.roc_auc(other.predict_proba(xo)[:, 1], yo)
        grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
        # first checkpoint is the classical reference, --compare the quantum one
        ratio = diag.fpr_ratio((fpr, tpr), roc_o, grid)
        _write_csv(out / "fpr_ratio.csv", ["signal_efficiency", "ratio"], ratio.rows())
        report.update({"compare_auc": roc_o[2], "omitted_points": ratio.omitted.tolist()})
    _write_json(out / "roc.json", report)
    print(json.dumps(report, indent=1, sort_keys=True))


def cmd_fisher(args, cfg):
    out = _out_dir(args)
    clf = _size_classifier(cfg, args.size)
    rep = diag.mean_fisher_sampled(clf, args.draws, seed=cfg["seed"], n_inputs=args.inputs)
    doc = {"arch": cfg["arch"], "size": args.size, **rep.to_dict()}
    _write_json(out / "fisher.json", doc)
    _write_csv(
        out / "fisher_eigenvalues.csv",
        ["index", "eigenvalue", "normalized"],
        [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(rep.eigenvalues, rep.normalized_eigenvalues()))],
    )
    print(f"{cfg['arch']} ({args.size}): d={rep.d}, min eigenvalue {rep.eigenvalues[-1]:.3e}, clamped {rep.n_clamped}")


def _effdim_grid(n_max, points):
    lo = 2.0
    hi = math.log10(n_max)
    if hi <= lo:
        raise ConfigError(f"--n must exceed 100 (got {n_max:g})")
    return np.unique(np.round(np.logspace(lo, hi, points)))


def cmd_effdim(args, cfg):
    out = _out_dir(args)
    clf = _size_classifier(cfg, args.size)
    rep = diag.mean_fisher_sampled(clf, args.draws, seed=cfg["seed"], n_inputs=args.inputs, keep_samples=True)
    fhat = diag.normalize_fisher(rep.samples)
    ns = _effdim_grid(args.n, args.points)
    eff = diag.effective_dimension(fhat, ns, rep.d)
    ident = np.broadcast_to(np.eye(rep.d), (1, rep.d, rep.d))
    check = diag.effective_dimension(ident, ns, rep.d)
    k = diag.kappa(ns)
    closed = np.log1p(k) / np.log(k)
    dev = float(np.max(np.abs(check - closed)))
    monotone = bool(np.all(np.diff(check) < 0))
    _write_csv(
        out / "effdim.csv",
        ["n", "effective_dimension", "identity_fisher", "identity_closed_form"],
        zip(ns.tolist(), eff.tolist(), check.tolist(), closed.tolist()),
    )
    self_test = {"max_deviation": dev, "monotone_decreasing": monotone, "passed": dev < 1e-12 and monotone}
    _write_json(out / "effdim.json", {"arch": cfg["arch"], "size": args.size, "d": rep.d, "draws": args.draws, "self_test": self_test})
    for n, e in zip(ns, eff):
        print(f"n={n:>12.0f}  d_eff={e:.6f}")
    print(f"identity-Fisher self-test: max deviation {dev:.2e}, monotone {monotone}")
    if not self_test["passed"]:
        raise NumericalError("identity-Fisher self-test failed")


def cmd_xcheck(args, cfg):
    out = _out_dir(args)
    arch = cfg["arch"].lower()
    if arch not in ("qmps", "qttn", "qmera"):
        raise ConfigError(f"arch: xcheck needs a quantum architecture (got {arch!r})")
    m = cfg["model"]
    n = m.get("qubits") or 4
    rng = np.random.default_rng(cfg["seed"])
    worst = 0.0
    for trial in range(args.trials):
        circ = models._circuit(arch, n, m["full_unitary"], (cfg["seed"], trial), m["qmera_layout"])
        angles = rng.uniform(0, math.pi, size=n)
        a_sv = qsim.simulate(circ, angles).amplitudes
        a_tn = qsim.tn_amplitudes(circ, angles)
        worst = max(worst, float(np.max(np.abs(a_sv - a_tn))))
    doc = {"arch": arch, "qubits": n, "trials": args.trials, "max_abs_deviation": worst, "passed": worst < 1e-10}
    _write_json(out / "xcheck.json", doc)
    print(f"{arch} ({n} qubits, {args.trials} trials): max amplitude deviation {worst:.3e}")
    if not doc["passed"]:
        raise NumericalError(f"amplitude deviation {worst:.3e} exceeds 1e-10")


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _positive_float(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1 for reproducibility)")
    common.add_argument("--out", help="output directory (default $TNQ_OUT or ./tnqc-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--arch", choices=models.ARCH_NAMES)
    model.add_argument("--D", type=int, dest="D")
    model.add_argument("--chi", type=int)
    model.add_argument("--qubits", type=int)
    model.add_argument("--full-unitary", action="store_true", default=None)
    model.add_argument("--qmera-layout", choices=("open", "periodic"))
    model.add_argument("--mera-layout", choices=("canonical", "generic"))
    model.add_argument("--qnet", choices=("qmps", "qttn", "qmera"))

    datap = argparse.ArgumentParser(add_help=False)
    datap.add_argument("--data", help="dataset file")
    datap.add_argument("--crop", type=int)
    datap.add_argument("--pool", type=int)
    datap.add_argument("--mode", choices=encode.SELECTION_MODES)

    p = argparse.ArgumentParser(prog="tnqc", description="Tensor-network and quantum-circuit jet classifiers.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic jet-image dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--size", type=int, default=37)
    s.add_argument("--name", default="synth.tnqc")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[common, datap], help="flip, crop and downsample raw images")
    s.add_argument("--input", required=True)
    s.add_argument("--text", action="store_true", help="input is a column-dump text file")
    s.add_argument("--height", type=int, default=37)
    s.add_argument("--width", type=int, default=37)
    s.add_argument("--name", default="preprocessed.tnqc")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common, model, datap], help="train a classifier")
    s.add_argument("--batch-size", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr-classical", type=float)
    s.add_argument("--lr-quantum", type=float)
    s.add_argument("--shots", type=int)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("eval", cmd_eval, "evaluate a checkpoint"),
        ("roc", cmd_roc, "ROC points (and background-rejection ratio) for a checkpoint"),
    ):
        s = sub.add_parser(name, parents=[common, datap], help=helptext)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--split", choices=("train", "val", "test"), help="evaluate one split of the dataset")
        if name == "eval":
            s.add_argument("--shots", type=int)
        else:
            s.add_argument("--compare", help="second (quantum) checkpoint for the FPR ratio")
            s.add_argument("--grid-min", type=float, default=0.1)
            s.add_argument("--grid-max", type=float, default=0.9)
            s.add_argument("--grid-points", type=int, default=17)
        s.set_defaults(func=func)

    for name, func, helptext in (
        ("fisher", cmd_fisher, "sampled mean Fisher spectrum"),
        ("effdim", cmd_effdim, "normalized effective dimension versus sample size"),
    ):
        s = sub.add_parser(name, parents=[common, model], help=helptext)
        s.add_argument("--size", type=int, help="sites/qubits (default: --qubits or 4)")
        s.add_argument("--draws", type=int, default=1000 if name == "fisher" else 100)
        s.add_argument("--inputs", type=int, default=1, help="inputs per parameter draw")
        if name == "effdim":
            s.add_argument("--n", type=_positive_float, default=1e6, help="largest sample size")
            s.add_argument("--points", type=int, default=13)
        s.set_defaults(func=func)

    s = sub.add_parser("xcheck", parents=[common, model], help="statevector vs tensor-network amplitude check")
    s.add_argument("--trials", type=int, default=5)
    s.set_defaults(func=cmd_xcheck)
    return p


def _overrides(args) -> dict:
    mapping = {
        "arch": "arch",
        "seed": "seed",
        "D": "model.D",
        "chi": "model.chi",
        "qubits": "model.qubits",
        "full_unitary": "model.full_unitary",
        "qmera_layout": "model.qmera_layout",
        "mera_layout": "model.mera_layout",
        "qnet": "model.qnet",
        "data": "data.path",
        "crop": "data.crop",
        "pool": "data.pool",
        "mode": "data.mode",
        "batch_size": "train.batch_size",
        "epochs": "train.max_epochs",
        "lr_classical": "train.lr_classical",
        "lr_quantum": "train.lr_quantum",
        "shots": "shots",
    }
    return {dst: getattr(args, src) for src, dst in mapping.items() if getattr(args, src, None) is not None}


def _set_threads(n):
    if n < 1:
        raise ConfigError(f"--threads must be >= 1 (got {n})")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.out is None and cfg.get("out"):
            args.out = cfg["out"]
        if hasattr(args, "size") and args.command in ("fisher", "effdim"):
            args.size = args.size or cfg["model"].get("qubits") or 4
        with _set_threads(args.threads):
            args.func(args, cfg)
    except ConfigError as exc:
        print(f"tnqc: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"tnqc: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"tnqc: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, DomainError) as exc:
        print(f"tnqc: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TnqcError as exc:
        print(f"tnqc: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
