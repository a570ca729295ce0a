"""Command-line entry point: ``intervalrp {simulate,image,train,eval,gradcheck}``.

Failures exit with status 1 (2 for usage errors) after printing one JSON
line ``{"error": <kind>, "message": <text>}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import admm, dgp, gradcheck, harness
from . import net as cnn
from .core import MvIntervalSeries
from .errors import ConfigError, IntervalRPError, IoError
from .imaging import EmbeddingSpec, ThresholdSpec


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _threshold(text: str) -> ThresholdSpec:
    try:
        return ThresholdSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_imaging(p: argparse.ArgumentParser, nu_default: Optional[float]):
    p.add_argument("--nu", type=float, default=nu_default, help="smooth-step slope (omit for hard images)"
                   if nu_default is None else "smooth-step slope")
    p.add_argument("--eps", type=_threshold, default=ThresholdSpec(), help="fixed:X, fixed:pi/18 or q:Q")
    p.add_argument("--m", type=int, default=1, help="embedding dimension")
    p.add_argument("--kappa", type=int, default=1, help="embedding delay")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="intervalrp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic interval CSV")
    p.add_argument("--dgp", required=True, choices=["1", "2", "3", "c1", "c2"])
    p.add_argument("--rhos", type=_floats, default=list(dgp.DEFAULT_RHOS))
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--length", type=int, default=50)
    p.add_argument("--truncation", type=int, default=dgp.DEFAULT_TRUNCATION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("image", help="export one PGM per sample plus index.json")
    p.add_argument("--in", dest="inp", required=True)
    _add_imaging(p, None)
    p.add_argument("--alpha", help="JSON array of coefficients (default: center series)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="joint ADMM training from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")

    p = sub.add_parser("eval", help="score a checkpoint on an interval CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", required=True, help="JSON array written by train (beta.json)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config", help="take imaging settings from a training config")
    _add_imaging(p, 10.0)

    p = sub.add_parser("gradcheck", help="finite-difference audit of all derivatives")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--manifest", help="also write a manifest JSON here")
    return ap


def _read_alpha(path) -> np.ndarray:
    try:
        vals = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(str(e)) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(vals, list) or not all(isinstance(v, (int, float)) for v in vals):
        raise ConfigError(f"{path}: expected a JSON array of numbers")
    return np.array(vals, dtype=np.float64)


def cmd_simulate(a) -> int:
    src = harness.SimulateSource(a.dgp, a.rhos, a.per_class, a.length, a.truncation)
    ds = src.build(a.seed)
    harness.write_interval_csv(ds, a.out)
    harness.write_manifest(a.out + ".manifest.json", "simulate",
                           {"simulate": vars(src)}, a.seed, [a.out])
    print(json.dumps({"samples": len(ds), "classes": ds.classes, "out": a.out}))
    return 0


def cmd_image(a) -> int:
    ds, ids = harness.read_interval_csv(a.inp)
    emb = EmbeddingSpec(a.m, a.kappa)
    alpha = _read_alpha(a.alpha) if a.alpha else 0.5
    out = Path(a.out)
    index = []
    for k, (sid, s) in enumerate(zip(ids, ds.samples)):
        img = harness.hard_or_smooth_image(s, alpha, emb, a.eps, a.nu)
        name = f"{k:06d}.pgm"
        harness.export_pgm(img, out / name)
        index.append({"file": name, "sample_id": sid, "label": int(s.label), "size": img.size})
    harness.write_json(out / "index.json", index)
    cfg = {"in": a.inp, "nu": a.nu, "eps": str(a.eps), "m": a.m, "kappa": a.kappa,
           "alpha": None if a.alpha is None else a.alpha}
    harness.write_manifest(out / "manifest.json", "image", cfg, None, [out / "index.json"])
    print(json.dumps({"images": len(index), "out": str(out)}))
    return 0


def cmd_train(a) -> int:
    cfg = harness.load_config(a.config)
    if a.out:
        cfg.output = a.out
    summary = harness.run_experiment(cfg)
    res = summary.result
    print(json.dumps({"out": cfg.output, "final_loss": res.final_loss, "iterations": len(res.history),
                      "eval_accuracy": summary.eval_metrics.get("accuracy")}))
    return 0


def cmd_eval(a) -> int:
    model = cnn.load_checkpoint(a.model)
    beta = _read_alpha(a.alpha)
    ds, _ = harness.read_interval_csv(a.inp)
    if a.config:
        imaging = harness.load_config(a.config).imaging
    else:
        imaging = admm.ImagingConfig(EmbeddingSpec(a.m, a.kappa), a.eps, a.nu)
    if not ds.samples:
        raise ConfigError("no samples to evaluate")
    s0 = ds.samples[0]
    need = s0.p if isinstance(s0, MvIntervalSeries) else s0.T
    if beta.size != need:
        raise ConfigError(f"alpha has {beta.size} entries, samples need {need}")
    metrics = harness.evaluate(model, beta, ds.samples, imaging)
    harness.write_json(a.report, metrics)
    cfg = {"model": a.model, "alpha": a.alpha, "in": a.inp, "imaging": {
        "m": imaging.emb.m, "kappa": imaging.emb.kappa, "eps": str(imaging.thr), "nu": imaging.nu}}
    harness.write_manifest(a.report + ".manifest.json", "eval", cfg, None, [a.report])
    print(json.dumps({"accuracy": metrics["accuracy"], "n_eval": metrics["n_eval"]}))
    return 0


def cmd_gradcheck(a) -> int:
    rep = gradcheck.run(seed=a.seed, trials=a.trials)
    d = rep.as_dict()
    print(json.dumps(d, sort_keys=True))
    if a.manifest:
        harness.write_json(a.manifest, {"command": "gradcheck", "config": {"trials": a.trials},
                                        "seed": a.seed, "report": d})
    return 0 if rep.passed else 1


COMMANDS = {"simulate": cmd_simulate, "image": cmd_image, "train": cmd_train,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _join_negative_lists(argv: List[str]) -> List[str]:
    # "--rhos -0.9,0.9" would otherwise be read as an unknown option
    out: List[str] = []
    i = 0
    while i < len(argv):
        if argv[i] == "--rhos" and i + 1 < len(argv):
            out.append(f"--rhos={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        a = ap.parse_args(_join_negative_lists(argv))
    except UsageError as e:
        return _fail("UsageError", str(e), 2)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except IntervalRPError as e:
        return _fail(e.kind, str(e))
    except (OSError, ValueError, KeyError) as e:
        return _fail(type(e).__name__, str(e))


if __name__ == "__main__":
    sys.exit(main())
