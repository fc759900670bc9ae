"""Test-phase matching and geodesic error reports.

Errors are geodesic distances on the target shape between predicted and
ground-truth matches, divided by the target's geodesic diameter. Scores are
reported x100. A suite score averages per-pair means over pairs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, IncompatibleError
from .fmap import nn_correspondence
from .geom.geodesic import DEFAULT_KNN, GeodesicField, geodesics
from .geom.io import save_map
from .geom.types import IndexMap, PointCloud, ShapePairSample
from .net import EncoderParams, embed, init_encoder

N_THRESHOLDS = 100
NORMALIZATION = "geodesic_diameter"
AVERAGING = "mean over pairs of per-pair means"


@dataclass
class ErrorReport:
    errors: np.ndarray
    thresholds: np.ndarray
    cdf: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def mean_x100(self) -> float:
        return 100.0 * float(np.mean(self.errors)) if self.errors.size else 0.0

    def to_dict(self, with_errors: bool = True) -> dict:
        d = {
            "mean_x100": self.mean_x100,
            "thresholds": self.thresholds.tolist(),
            "cdf": self.cdf.tolist(),
            "meta": self.meta,
        }
        if with_errors:
            d["errors"] = self.errors.tolist()
        return d


def cdf_curve(errors: np.ndarray, upper: float | None = None, n: int = N_THRESHOLDS):
    """Fraction of errors <= t at ``n`` thresholds from 0 to ``upper`` (default: max(1, max error))."""
    errors = np.asarray(errors, dtype=np.float64)
    if upper is None:
        upper = max(1.0, float(errors.max()) if errors.size else 1.0)
    t = np.linspace(0.0, upper, n)
    srt = np.sort(errors)
    frac = np.searchsorted(srt, t, side="right") / max(1, srt.size)
    return t, frac


def evaluate_pair(pred: IndexMap, gt: IndexMap, geo: GeodesicField, meta: dict | None = None) -> ErrorReport:
    """Per-point ``d_geo(pred(i), gt(i)) / diameter`` on the target shape."""
    if pred.src_size != gt.src_size:
        raise DimensionError(f"predicted map has {pred.src_size} sources, ground truth {gt.src_size}")
    if pred.dst_size != geo.n or gt.dst_size != geo.n:
        raise DimensionError("maps do not target the geodesic field's shape")
    diam = geo.diameter()
    errors = geo.distance(pred.targets, gt.targets) / diam
    t, c = cdf_curve(errors)
    info = {"normalization": NORMALIZATION, "diameter": diam}
    info.update(meta or {})
    return ErrorReport(errors, t, c, info)


# ---------------------------------------------------------------- embedders

Embedder = Callable[[PointCloud], np.ndarray]


def raw_embedder(cloud: PointCloud) -> np.ndarray:
    """Baseline: coordinates used directly as a 3-d embedding."""
    return cloud.coords


def params_embedder(params: EncoderParams) -> Embedder:
    return lambda cloud: embed(params, cloud)


def as_embedder(model) -> Embedder:
    """Checkpoint, EncoderParams, ``"raw"`` or a callable -> embedding function."""
    from .train import Checkpoint

    if isinstance(model, Checkpoint):
        return params_embedder(model.params)
    if isinstance(model, EncoderParams):
        return params_embedder(model)
    if isinstance(model, str) and model == "raw":
        return raw_embedder
    if callable(model):
        return model
    raise TypeError(f"cannot embed with {type(model).__name__}")


def match(model, source: PointCloud, target: PointCloud) -> IndexMap:
    f = as_embedder(model)
    return nn_correspondence(f(source), f(target))


def match_and_evaluate(model, pair: ShapePairSample, geo: GeodesicField | None = None, k: int | None = None) -> ErrorReport:
    """Embed both shapes at full resolution, match by nearest neighbour, score."""
    if k is not None:
        have = getattr(getattr(model, "params", model), "k", None)
        if have is not None and have != k:
            raise IncompatibleError(f"model has k={have}, request expects k={k}")
    geo = geo or geodesics(pair.y)
    pred = match(model, pair.x, pair.y)
    report = evaluate_pair(pred, pair.map_xy, geo, {"pair": pair.meta})
    report.meta["pred"] = pred
    return report


# -------------------------------------------------------------------- suites


class Suite:
    """Held-out pairs with their target geodesic fields computed once."""

    def __init__(self, pairs: Sequence[ShapePairSample], name: str = "", knn: int = DEFAULT_KNN):
        self.pairs = list(pairs)
        self.name = name
        self.knn = knn
        self._geo: dict[int, GeodesicField] = {}

    def __len__(self):
        return len(self.pairs)

    def geo(self, i: int) -> GeodesicField:
        if i not in self._geo:
            self._geo[i] = geodesics(self.pairs[i].y, self.knn)
        return self._geo[i]


@dataclass
class SuiteReport:
    pairs: list[ErrorReport]
    meta: dict = field(default_factory=dict)

    @property
    def mean_x100(self) -> float:
        return float(np.mean([r.mean_x100 for r in self.pairs]))

    def curve(self):
        t = np.linspace(0.0, 1.0, N_THRESHOLDS)
        c = np.mean([cdf_curve(r.errors, upper=1.0)[1] for r in self.pairs], axis=0)
        return t, c

    def to_dict(self) -> dict:
        t, c = self.curve()
        return {
            "mean_x100": self.mean_x100,
            "thresholds": t.tolist(),
            "cdf": c.tolist(),
            "meta": {**self.meta, "normalization": NORMALIZATION, "averaging": AVERAGING},
            "pairs": [
                {"mean_x100": r.mean_x100, "errors": r.errors.tolist(), "meta": _jsonable(r.meta)} for r in self.pairs
            ],
        }


def _jsonable(meta):
    return {k: v for k, v in meta.items() if k != "pred"}


def evaluate_suite(model, suite: Suite | Sequence[ShapePairSample], meta: dict | None = None) -> SuiteReport:
    if not isinstance(suite, Suite):
        suite = Suite(suite)
    f = as_embedder(model)
    reports = [match_and_evaluate(f, p, suite.geo(i)) for i, p in enumerate(suite.pairs)]
    return SuiteReport(reports, dict(meta or {}))


def write_report(out_dir, report: SuiteReport, save_maps: bool = True) -> dict[str, Path]:
    """``report.json``, ``report.csv`` (threshold,cdf rows + summary) and predicted maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    paths = {"json": out / "report.json", "csv": out / "report.csv"}
    paths["json"].write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    with open(paths["csv"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "cdf"])
        for t, c in zip(d["thresholds"], d["cdf"]):
            w.writerow([repr(t), repr(c)])
        w.writerow(["mean_x100", repr(d["mean_x100"])])
    if save_maps:
        mdir = out / "maps"
        mdir.mkdir(exist_ok=True)
        for i, r in enumerate(report.pairs):
            name = r.meta.get("name") or f"pair_{i:04d}"
            save_map(mdir / f"{name}.map", r.meta["pred"])
    return paths


def read_csv_summary(path) -> float:
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if row and row[0] == "mean_x100":
                return float(row[1])
    raise ValueError(f"{path}: no summary row")


# --------------------------------------------------------------------- sweep


def sweep(axis: str, values, base_config, train_pairs, suite, on_model=None) -> list[dict]:
    """Train one model per value of ``axis`` and score it on ``suite``."""
    from .train import fit, with_overrides

    if not values:
        raise ValueError("sweep needs at least one value")
    if axis not in ("embedding_size", "train_size"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not isinstance(suite, Suite):
        suite = Suite(suite)
    rows = []
    for v in values:
        cfg = with_overrides(base_config, k=int(v)) if axis == "embedding_size" else with_overrides(base_config, train_pairs=int(v))
        ckpt = fit(cfg, train_pairs)
        rep = evaluate_suite(ckpt, suite)
        if on_model is not None:
            on_model(v, ckpt, rep)
        rows.append({"axis": axis, "value": v, "mean_x100": rep.mean_x100})
    return rows


def untrained_params(k: int, seed) -> EncoderParams:
    return init_encoder(k, np.random.SeedSequence([seed, 1]))
