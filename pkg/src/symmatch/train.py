"""End-to-end training: sampling, augmentation, Adam updates and checkpoints."""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .diffmat import DEFAULT_RIDGE_EPS, Tape, backward
from .errors import IncompatibleError, NonFiniteError, ParseError, SingularityError, SymmatchError
from .geom.transforms import flip, random_rotation, rotate, subsample
from .geom.types import IndexMap, PointCloud, ShapePairSample
from .loss import LossBreakdown, LossWeights, pair_loss
from .net import EncoderParams, encode, init_encoder

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "symmatch-checkpoint"
CHECKPOINT_VERSION = 1
LOG_HEADER = ("iter", "l_euc", "l_lin", "l_comm", "l_total")

# Desk-scale augmentation: small rotations about the aligned pose. Learning full
# heading invariance does not fit in a 30-epoch budget.
DESK_TILT_DEG = 5.0
DESK_YAW_DEG = 15.0


class NumericalFailure(SymmatchError, FloatingPointError):
    """Training produced a non-finite loss or a singular solve."""


@dataclass(frozen=True)
class TrainConfig:
    k: int = 24
    points: int = 256
    batch_size: int = 8
    lr: float = 3e-3
    epochs: int = 30
    lam: float = 5.0
    gamma: float = 5.0
    eps: float = DEFAULT_RIDGE_EPS
    seed: int = 0
    mode: str = "full"
    train_pairs: int | None = None
    max_tilt_deg: float = DESK_TILT_DEG
    max_yaw_deg: float = DESK_YAW_DEG

    def __post_init__(self):
        for name in ("k", "points", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.mode not in ("full", "partial"):
            raise ValueError(f"unknown mode {self.mode!r}")
        LossWeights(self.lam, self.gamma)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lam, self.gamma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# values from the original large-scale setup; the dataclass defaults are desk scale
FULL_SCALE_CONFIG = TrainConfig(k=50, points=3000, batch_size=20, lr=1e-4, max_tilt_deg=15.0, max_yaw_deg=180.0)


@dataclass
class Checkpoint:
    params: EncoderParams
    config: TrainConfig
    iteration: int = 0
    rng_digest: str = ""

    def checkpoint_id(self) -> str:
        h = hashlib.sha256()
        for a in self.params.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------- optimizer


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Return updated copies of ``params``."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(params, grads, state: Adam | None, lr: float):
    """Functional wrapper: returns ``(new_params, state)``."""
    state = state or Adam(lr)
    state.lr = lr
    return state.step(params, grads), state


# ----------------------------------------------------------- sample pipeline


@dataclass
class PreparedPair:
    """Augmented, subsampled pair plus reflected copies, ready for the loss."""

    x: PointCloud
    x_f: PointCloud
    y: PointCloud
    y_f: PointCloud
    map_xy: IndexMap
    sym_x: IndexMap
    sym_y: IndexMap
    name: str = ""


def prepare_pair(
    pair: ShapePairSample,
    points: int | None,
    seed,
    max_tilt_deg: float = DESK_TILT_DEG,
    max_yaw_deg: float = DESK_YAW_DEG,
    augment: bool = True,
    name: str = "",
) -> PreparedPair:
    ss = np.random.SeedSequence(seed)
    s_sub, s_rx, s_ry = ss.spawn(3)
    s = pair if points is None else subsample(pair, points, s_sub)
    x, y = s.x, s.y
    if augment:
        x = rotate(x, random_rotation(s_rx, max_tilt_deg, max_yaw_deg))
        y = rotate(y, random_rotation(s_ry, max_tilt_deg, max_yaw_deg))
    return PreparedPair(x, flip(x), y, flip(y), s.map_xy, s.sym_x, s.sym_y, name)


def sample_loss(params: EncoderParams, prep: PreparedPair, weights: LossWeights, eps: float):
    """Loss and gradients for one prepared pair: ``(breakdown, grads)``."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in params.arrays()]
    with _stage(prep.name, "encoder"):
        phis = [encode(leaves, params, c) for c in (prep.x, prep.x_f, prep.y, prep.y_f)]
    with _stage(prep.name, "loss"):
        total, parts = pair_loss(*phis, prep, weights, eps)
    for term, value in parts.as_dict().items():
        if not np.isfinite(value):
            raise NumericalFailure(f"sample {prep.name}: non-finite {term}")
    grads = backward(total)
    g = [grads[leaf] for leaf in leaves]
    if not all(np.isfinite(a).all() for a in g):
        raise NumericalFailure(f"sample {prep.name}: non-finite gradient")
    return parts, g


@contextlib.contextmanager
def _stage(name, stage):
    try:
        yield
    except (NonFiniteError, SingularityError) as exc:
        raise NumericalFailure(f"sample {name}: {stage}: {exc}") from exc


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    arr = np.array([[p.l_euc, p.l_lin, p.l_comm, p.l_total] for p in parts])
    return LossBreakdown(*(float(v) for v in arr.mean(axis=0)))


# ---------------------------------------------------------------- training


def fit(
    config: TrainConfig,
    dataset: Sequence[ShapePairSample],
    log_path=None,
    timing_path=None,
    init: EncoderParams | None = None,
    on_step: Callable[[int, LossBreakdown], None] | None = None,
    max_steps: int | None = None,
) -> Checkpoint:
    """Train an encoder on ``dataset``; returns the final checkpoint.

    Each step draws ``batch_size`` pairs (epoch-wise shuffled), subsamples
    ``points`` points in symmetric pairs, rotates each shape, reflects it, and
    averages gradients over the batch in fixed order before one Adam update.
    """
    pairs = list(dataset)
    if config.train_pairs is not None:
        pairs = pairs[: config.train_pairs]
    if not pairs:
        raise ValueError("dataset is empty")
    params = init or init_encoder(config.k, np.random.SeedSequence([config.seed, 1]))
    if params.k != config.k:
        raise IncompatibleError(f"initial params have k={params.k}, config asks for k={config.k}")
    weights = config.weights
    opt = Adam(config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    arrays = params.arrays()
    step = 0
    writer = _LogWriter(log_path, timing_path)
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(pairs))
            for start in range(0, len(order), config.batch_size):
                if max_steps is not None and step >= max_steps:
                    break
                t0 = time.perf_counter()
                batch = order[start : start + config.batch_size]
                current = params.with_arrays(arrays)
                acc = [np.zeros_like(a) for a in arrays]
                parts = []
                for idx in batch:
                    prep = prepare_pair(
                        pairs[idx],
                        config.points,
                        [config.seed, 3, epoch, int(idx)],
                        config.max_tilt_deg,
                        config.max_yaw_deg,
                        name=f"{idx} (epoch {epoch})",
                    )
                    bd, g = sample_loss(current, prep, weights, config.eps)
                    parts.append(bd)
                    for a, gi in zip(acc, g):
                        a += gi
                grads = [a / len(batch) for a in acc]
                arrays = opt.step(arrays, grads)
                step += 1
                mean = _mean_breakdown(parts)
                writer.write(step, mean, (time.perf_counter() - t0) * 1e3)
                if on_step is not None:
                    on_step(step, mean)
                if step % 25 == 0:
                    log.info("step %d epoch %d: %s", step, epoch, mean)
    finally:
        writer.close()
    digest = hashlib.sha256(json.dumps(rng.bit_generator.state, sort_keys=True, default=str).encode()).hexdigest()
    return Checkpoint(params.with_arrays(arrays), config, step, digest[:16])


class _LogWriter:
    def __init__(self, log_path, timing_path):
        self._f = open(log_path, "w", newline="") if log_path else None
        self._t = open(timing_path, "w", newline="") if timing_path else None
        if self._f:
            self._w = csv.writer(self._f, lineterminator="\n")
            self._w.writerow(LOG_HEADER)
        if self._t:
            self._tw = csv.writer(self._t, lineterminator="\n")
            self._tw.writerow(("iter", "wall_ms"))

    def write(self, step, bd: LossBreakdown, wall_ms):
        if self._f:
            self._w.writerow([step, repr(bd.l_euc), repr(bd.l_lin), repr(bd.l_comm), repr(bd.l_total)])
        if self._t:
            self._tw.writerow([step, f"{wall_ms:.3f}"])

    def close(self):
        for f in (self._f, self._t):
            if f:
                f.close()


def read_log(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [{k: (int(v) if k == "iter" else float(v)) for k, v in r.items()} for r in rows]


# -------------------------------------------------------------- checkpoints


def _layer_path(path: Path, i: int) -> Path:
    return path.with_name(f"{path.stem}.layer{i}.f64")


def save_checkpoint(path, c: Checkpoint) -> None:
    """JSON manifest plus one raw little-endian float64 file per layer (weight then bias)."""
    path = Path(path)
    layers = []
    for i, (w, b) in enumerate(zip(c.params.weights, c.params.biases)):
        blob = np.concatenate([w.ravel(), b.ravel()]).astype("<f8").tobytes()
        lp = _layer_path(path, i)
        lp.write_bytes(blob)
        layers.append(
            {
                "index": i,
                "file": lp.name,
                "weight_shape": list(w.shape),
                "bias_shape": list(b.shape),
                "sha256": hashlib.sha256(blob).hexdigest(),
            }
        )
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": c.config.to_dict(),
        "architecture": c.params.descriptor(),
        "iteration": c.iteration,
        "rng_digest": c.rng_digest,
        "layers": layers,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid checkpoint manifest: {exc.msg}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise IncompatibleError(f"{path}: not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleError(f"{path}: checkpoint version {manifest.get('version')} != {CHECKPOINT_VERSION}")
    arch = manifest["architecture"]
    weights, biases = [], []
    for layer in manifest["layers"]:
        lp = path.with_name(layer["file"])
        blob = lp.read_bytes()
        wshape, bshape = tuple(layer["weight_shape"]), tuple(layer["bias_shape"])
        nw, nb = int(np.prod(wshape)), int(np.prod(bshape))
        if len(blob) != 8 * (nw + nb):
            raise ParseError(lp, 0, f"expected {8 * (nw + nb)} bytes, found {len(blob)} (truncated?)")
        if hashlib.sha256(blob).hexdigest() != layer["sha256"]:
            raise ParseError(lp, 0, "layer checksum mismatch")
        flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        weights.append(flat[:nw].reshape(wshape).copy())
        biases.append(flat[nw:].reshape(bshape).copy())
    params = EncoderParams(weights, biases, arch["k"], tuple(arch["local_widths"]), tuple(arch["head_widths"]))
    return Checkpoint(params, TrainConfig.from_dict(manifest["config"]), manifest["iteration"], manifest["rng_digest"])


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
