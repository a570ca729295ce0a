"""Dataset persistence, raw-observation ingestion, image export and experiment runs.

Interval CSV layout (header required, one row per sample/dimension/time)::

    sample_id,t,dim,lower,upper,label

Reals are written as the shortest decimal that round-trips (``repr``), so
write -> read is field-exact.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import math
import os
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, admm, dgp
from . import net as cnn
from .core import IntervalSeries, MvIntervalSeries
from .dgp import DEFAULT_RHOS, DEFAULT_TRUNCATION
from .errors import ConfigError, IoError, MalformedRow
from .gradients import smooth_image
from .imaging import EmbeddingSpec, RecurrenceImage, ThresholdSpec, jrp, rp
from .kernels import BACKEND
from .metrics import confusion, scores

CSV_COLUMNS = ("sample_id", "t", "dim", "lower", "upper", "label")
RAW_COLUMNS = ("sample_id", "day", "dim", "value")


# interval CSV


def _sample_rows(sid: str, s) -> List[tuple]:
    lower = np.atleast_2d(s.lower)
    upper = np.atleast_2d(s.upper)
    rows = []
    for j in range(lower.shape[0]):
        for t in range(lower.shape[1]):
            rows.append((sid, t, j, repr(float(lower[j, t])), repr(float(upper[j, t])), int(s.label)))
    return rows


def default_ids(n: int) -> List[str]:
    return [f"s{i:06d}" for i in range(n)]


def interval_csv_text(samples: Sequence, ids: Optional[Sequence[str]] = None) -> str:
    samples = list(samples)
    ids = list(ids) if ids is not None else default_ids(len(samples))
    if len(ids) != len(samples) or len(set(ids)) != len(ids):
        raise ValueError("need one distinct id per sample")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for sid, s in zip(ids, samples):
        if s.label is None:
            raise ValueError(f"sample {sid} has no label")
        w.writerows(_sample_rows(sid, s))
    return buf.getvalue()


def write_interval_csv(samples, path, ids: Optional[Sequence[str]] = None) -> None:
    if isinstance(samples, dgp.LabeledDataset):
        samples = samples.samples
    _write_text(path, interval_csv_text(samples, ids))


def _read_rows(path, columns: Sequence[str]):
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoError(str(e)) from e
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise MalformedRow(1, "missing header")
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise MalformedRow(1, f"header lacks column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, {c: row[i].strip() for c, i in pos.items()}


def _parse(lineno: int, kind, text: str, name: str):
    try:
        v = kind(text)
    except ValueError:
        raise MalformedRow(lineno, f"bad {name} {text!r}") from None
    if kind is float and not math.isfinite(v):
        raise MalformedRow(lineno, f"non-finite {name}")
    return v


def read_interval_csv(path) -> Tuple[dgp.LabeledDataset, List[str]]:
    """Samples in order of first appearance, and their ids.

    A sample with a single dimension becomes an :class:`IntervalSeries`,
    otherwise an :class:`MvIntervalSeries`.
    """
    data: "OrderedDict[str, dict]" = OrderedDict()
    labels: Dict[str, int] = {}
    for lineno, r in _read_rows(path, CSV_COLUMNS):
        sid = r["sample_id"]
        if not sid:
            raise MalformedRow(lineno, "empty sample_id")
        t = _parse(lineno, int, r["t"], "t")
        j = _parse(lineno, int, r["dim"], "dim")
        lo = _parse(lineno, float, r["lower"], "lower")
        up = _parse(lineno, float, r["upper"], "upper")
        lab = _parse(lineno, int, r["label"], "label")
        if t < 0 or j < 0 or lab < 0:
            raise MalformedRow(lineno, "t, dim and label must be >= 0")
        if lo > up:
            raise MalformedRow(lineno, "lower > upper")
        if labels.setdefault(sid, lab) != lab:
            raise MalformedRow(lineno, f"sample {sid} has more than one label")
        cells = data.setdefault(sid, {})
        if (j, t) in cells:
            raise MalformedRow(lineno, f"duplicate (dim, t) = ({j}, {t}) for sample {sid}")
        cells[(j, t)] = (lo, up, lineno)
    samples = []
    for sid, cells in data.items():
        dims = sorted({j for j, _ in cells})
        times = sorted({t for _, t in cells})
        last = max(c[2] for c in cells.values())
        if dims != list(range(len(dims))) or times != list(range(len(times))):
            raise MalformedRow(last, f"sample {sid}: dims and times must be contiguous from 0")
        if len(cells) != len(dims) * len(times):
            raise MalformedRow(last, f"sample {sid}: ragged time index across dims")
        if len(times) < 2:
            raise MalformedRow(last, f"sample {sid}: needs T >= 2")
        lo = np.array([[cells[(j, t)][0] for t in times] for j in dims])
        up = np.array([[cells[(j, t)][1] for t in times] for j in dims])
        if len(dims) == 1:
            samples.append(IntervalSeries(lo[0], up[0], label=labels[sid]))
        else:
            samples.append(MvIntervalSeries(lo, up, label=labels[sid]))
    K = max(labels.values()) + 1 if labels else 0
    ds = dgp.LabeledDataset(samples, K, {str(c): c for c in range(K)})
    return ds, list(data.keys())


# raw observations


def ingest_raw(path, window_days: int) -> Tuple[dgp.LabeledDataset, List[str]]:
    """Daily [min, max] intervals cut into non-overlapping windows.

    Rows are ``sample_id, day (YYYY-MM-DD), dim, value``. Each distinct
    ``sample_id`` (a station) is a class, labelled in sorted id order. A day
    on which some dimension has no observation (or a calendar day absent from
    the file) ends the current window; incomplete windows are dropped.
    Returns the dataset and ids ``"<sample_id>/w<k>"`` naming each window.
    """
    if window_days < 2:
        raise ValueError("window_days must be >= 2")
    obs = defaultdict(lambda: defaultdict(list))  # sid -> (day, dim) -> values
    dims_of = defaultdict(set)
    for lineno, r in _read_rows(path, RAW_COLUMNS):
        sid = r["sample_id"]
        if not sid:
            raise MalformedRow(lineno, "empty sample_id")
        try:
            day = _dt.date.fromisoformat(r["day"])
        except ValueError:
            raise MalformedRow(lineno, f"bad day {r['day']!r}") from None
        j = _parse(lineno, int, r["dim"], "dim")
        if j < 0:
            raise MalformedRow(lineno, "dim must be >= 0")
        obs[sid][(day, j)].append(_parse(lineno, float, r["value"], "value"))
        dims_of[sid].add(j)
    all_dims = sorted(set().union(*dims_of.values())) if dims_of else []
    if all_dims != list(range(len(all_dims))):
        raise ValueError("dims must be contiguous from 0")
    p = len(all_dims)
    samples, ids = [], []
    class_map = {sid: c for c, sid in enumerate(sorted(obs))}
    for sid in sorted(obs):
        cells = obs[sid]
        days = sorted({d for d, _ in cells})
        first, last = days[0], days[-1]
        run: List[_dt.date] = []
        k = 0
        day = first
        while day <= last + _dt.timedelta(days=1):
            complete = all((day, j) in cells for j in range(p))
            if complete:
                run.append(day)
                if len(run) == window_days:
                    lo = np.array([[min(cells[(d, j)]) for d in run] for j in range(p)])
                    up = np.array([[max(cells[(d, j)]) for d in run] for j in range(p)])
                    lab = class_map[sid]
                    s = IntervalSeries(lo[0], up[0], lab) if p == 1 else MvIntervalSeries(lo, up, lab)
                    samples.append(s)
                    ids.append(f"{sid}/w{k}")
                    k += 1
                    run = []
            else:
                run = []
            day += _dt.timedelta(days=1)
    return dgp.LabeledDataset(samples, len(class_map), class_map), ids


# PGM export


def pgm_bytes(values) -> bytes:
    """Binary P5 greymap, maxval 255, pixel = round-half-up(v * 255)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("image must be 2-dimensional")
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ValueError("image entries must lie in [0, 1]")
    px = np.floor(v * 255.0 + 0.5).astype(np.uint8)
    h, w = v.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes(order="C")


def export_pgm(image, path) -> None:
    values = image.values if isinstance(image, RecurrenceImage) else image
    _write_bytes(path, pgm_bytes(values))


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`export_pgm` up to quantisation, as uint8 pixels."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not a P5 maxval-255 file written by export_pgm")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# splitting


def stratified_split(labels, train_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class shuffle then cut; returns sorted train and eval indices.

    Class ``c`` with ``n`` members contributes ``round(train_fraction * n)``
    training samples.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train fraction must lie in (0, 1)")
    labels = np.asarray(labels, dtype=np.intp)
    rng = np.random.default_rng([int(seed), 0x5B11])
    train, held = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        cut = int(np.floor(train_fraction * idx.size + 0.5))
        train.append(idx[:cut])
        held.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(held))


# configuration


def _check_keys(d, allowed, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


@dataclass
class SimulateSource:
    dgp: str = "1"
    rhos: List[float] = field(default_factory=lambda: list(DEFAULT_RHOS))
    per_class: int = 100
    length: int = 50
    truncation: int = DEFAULT_TRUNCATION

    def build(self, seed: int) -> dgp.LabeledDataset:
        kind = str(self.dgp).lower()
        if kind in ("1", "2", "3"):
            return dgp.build_dataset(int(kind), self.rhos, self.per_class, self.length, seed, self.truncation)
        if kind in ("c1", "c2"):
            return dgp.build_multivariate(kind, self.rhos, self.per_class, self.length, seed, self.truncation)
        raise ConfigError(f"dgp must be one of 1, 2, 3, c1, c2; got {self.dgp!r}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a training run."""

    simulate: Optional[SimulateSource] = None
    csv: Optional[str] = None
    split: float = 0.8
    emb: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    thr: ThresholdSpec = field(default_factory=ThresholdSpec)
    nu: float = 10.0
    architecture: list = field(default_factory=lambda: [list(x) for x in cnn.DEFAULT_ARCHITECTURE])
    train: cnn.TrainConfig = field(default_factory=cnn.TrainConfig)
    admm: admm.AdmmConfig = field(default_factory=admm.AdmmConfig)
    freeze_alpha: Optional[float] = None
    output: str = "run"
    seed: int = 0

    def __post_init__(self):
        if (self.simulate is None) == (self.csv is None):
            raise ConfigError("data must name exactly one of 'simulate' or 'csv'")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must lie in (0, 1)")
        if not self.nu > 0:
            raise ConfigError("nu must be > 0")
        if self.freeze_alpha is not None and not 0.0 <= self.freeze_alpha <= 1.0:
            raise ConfigError("freeze_alpha must lie in [0, 1]")

    @property
    def imaging(self) -> admm.ImagingConfig:
        return admm.ImagingConfig(self.emb, self.thr, self.nu)

    def to_dict(self) -> dict:
        data = {"csv": self.csv} if self.csv is not None else {"simulate": dataclasses.asdict(self.simulate)}
        tc = dataclasses.asdict(self.train)
        tc.pop("epochs")
        tc.pop("seed")
        return {
            "data": data,
            "split": self.split,
            "imaging": {"m": self.emb.m, "kappa": self.emb.kappa, "eps": str(self.thr), "nu": self.nu},
            "net": dict(architecture=[list(x) for x in self.architecture], **tc),
            "admm": dataclasses.asdict(self.admm),
            "freeze_alpha": self.freeze_alpha,
            "output": self.output,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[str] = None) -> "ExperimentConfig":
        _check_keys(d, ("data", "split", "imaging", "net", "admm", "freeze_alpha", "output", "seed"), "config")
        if "data" not in d:
            raise ConfigError("config needs a 'data' section")
        data = d["data"]
        _check_keys(data, ("simulate", "csv"), "data")
        try:
            sim = None
            if "simulate" in data:
                _check_keys(data["simulate"], [f.name for f in dataclasses.fields(SimulateSource)], "data.simulate")
                sim = SimulateSource(**data["simulate"])
                sim.rhos = [float(r) for r in sim.rhos]
            path = data.get("csv")
            if path is not None and base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            im = d.get("imaging", {})
            _check_keys(im, ("m", "kappa", "eps", "nu"), "imaging")
            nt = dict(d.get("net", {}))
            _check_keys(nt, ("architecture", "learning_rate", "batch_size", "loss", "gamma"), "net")
            arch = nt.pop("architecture", [list(x) for x in cnn.DEFAULT_ARCHITECTURE])
            ad = d.get("admm", {})
            _check_keys(ad, [f.name for f in dataclasses.fields(admm.AdmmConfig)], "admm")
            seed = int(d.get("seed", 0))
            return cls(
                simulate=sim,
                csv=path,
                split=float(d.get("split", 0.8)),
                emb=EmbeddingSpec(int(im.get("m", 1)), int(im.get("kappa", 1))),
                thr=ThresholdSpec.parse(str(im.get("eps", "fixed:pi/18"))),
                nu=float(im.get("nu", 10.0)),
                architecture=[list(x) for x in arch],
                train=cnn.TrainConfig(seed=seed, **nt),
                admm=admm.AdmmConfig(**ad),
                freeze_alpha=None if d.get("freeze_alpha") is None else float(d["freeze_alpha"]),
                output=str(d.get("output", "run")),
                seed=seed,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(str(e)) from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}") from e
    return ExperimentConfig.from_dict(d, base_dir=str(Path(path).parent))


# output helpers


def _write_bytes(path, blob: bytes) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(blob)
    except OSError as e:
        raise IoError(str(e)) from e


def _write_text(path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    _write_text(path, json_text(obj))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config: dict, seed, outputs: Sequence = ()) -> None:
    """Resolved configuration plus output digests; enough to rerun and compare."""
    write_json(path, {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "backend": BACKEND,
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    })


# imaging and evaluation


def sample_image(sample, alpha, imaging: admm.ImagingConfig) -> np.ndarray:
    return smooth_image(sample, alpha, imaging.emb, imaging.thr, imaging.nu)


def hard_or_smooth_image(sample, alpha, emb: EmbeddingSpec, thr: ThresholdSpec, nu: Optional[float]) -> RecurrenceImage:
    """RP/JRP of the combined series; hard when ``nu`` is None."""
    if isinstance(sample, MvIntervalSeries):
        a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (sample.p,))
        D = a[:, None] * sample.lower + (1.0 - a[:, None]) * sample.upper
        return jrp(D, emb, thr, nu)
    a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (sample.T,))
    return rp(a * sample.lower + (1.0 - a) * sample.upper, emb, thr, nu)


def evaluate(model: cnn.CnnModel, beta, samples: Sequence, imaging: admm.ImagingConfig, chunk: int = 64) -> dict:
    """Ten metric scores plus ``n_eval`` and ``K`` on ``samples`` imaged at ``beta``."""
    labels = np.array([s.label for s in samples], dtype=np.intp)
    preds = []
    for i in range(0, len(samples), chunk):
        imgs = np.stack([sample_image(s, beta, imaging) for s in samples[i : i + chunk]])
        preds.append(model.predict(imgs))
    pred = np.concatenate(preds) if preds else np.zeros(0, dtype=np.intp)
    sc = scores(confusion(labels, pred, model.n_classes))
    out = sc.as_dict()
    out["n_eval"] = int(labels.size)
    out["K"] = int(model.n_classes)
    return out


@dataclass
class RunSummary:
    result: admm.TrainResult
    train_idx: np.ndarray
    eval_idx: np.ndarray
    eval_metrics: dict
    outputs: Dict[str, str]


def load_dataset(cfg: ExperimentConfig) -> Tuple[dgp.LabeledDataset, List[str]]:
    if cfg.simulate is not None:
        ds = cfg.simulate.build(cfg.seed)
        return ds, default_ids(len(ds))
    return read_interval_csv(cfg.csv)


def run_experiment(cfg: ExperimentConfig, write: bool = True, callback=None) -> RunSummary:
    """Split, train with ADMM, evaluate on the held-out part and write artefacts.

    Files under ``cfg.output``: ``train.csv``, ``eval.csv``, ``model.ckpt``,
    ``beta.json``, ``history.json``, ``history.jsonl``, ``metrics.json`` and
    ``manifest.json``.
    """
    ds, ids = load_dataset(cfg)
    labels = ds.labels
    tr, ev = stratified_split(labels, cfg.split, cfg.seed)
    train_samples = [ds.samples[i] for i in tr]
    eval_samples = [ds.samples[i] for i in ev]
    K = max(ds.classes, int(labels.max()) + 1)
    arch = [tuple(x) for x in cfg.architecture]
    result = admm.train(train_samples, labels[tr], cfg.imaging, cfg.train, cfg.admm, cfg.seed,
                        architecture=arch, n_classes=K, freeze_alpha=cfg.freeze_alpha, callback=callback)
    metrics = evaluate(result.model, result.beta, eval_samples, cfg.imaging) if eval_samples else {}
    outputs: Dict[str, str] = {}
    if write:
        out = Path(cfg.output)
        hist = [r.as_dict() for r in result.history]
        files = {
            "train.csv": interval_csv_text(train_samples, [ids[i] for i in tr]).encode(),
            "eval.csv": interval_csv_text(eval_samples, [ids[i] for i in ev]).encode(),
            "model.ckpt": cnn.checkpoint_bytes(result.model),
            "beta.json": json_text([float(b) for b in result.beta]).encode(),
            "history.json": json_text(hist).encode(),
            "history.jsonl": "".join(json.dumps(h, sort_keys=True) + "\n" for h in hist).encode(),
            "metrics.json": json_text(metrics).encode(),
        }
        for name, blob in files.items():
            _write_bytes(out / name, blob)
            outputs[name] = str(out / name)
        write_manifest(out / "manifest.json", "train", cfg.to_dict(), cfg.seed, list(outputs.values()))
        outputs["manifest.json"] = str(out / "manifest.json")
    return RunSummary(result, tr, ev, metrics, outputs)
