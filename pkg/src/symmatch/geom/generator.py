"""Synthetic articulated bodies with exact symmetry and correspondence ground truth.

A body is an ellipsoidal torso, a head with a nose (front marker), and four
limbs made of capsules joined at sphere-capped joints. Points are sampled on
the ``x >= 0`` half and mirrored across ``x = 0``, so point ``i`` and point
``i + n/2`` are bilateral partners. Posing rotates every limb segment rigidly
about its joint centre, with independent angles on the left and right side,
which keeps segment geometry (and hence the symmetry pairing) intrinsic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConnectivityError, ContractError, DegenerateSampleError
from .geodesic import geodesics
from .transforms import axis_angle, restrict_symmetry
from .types import IndexMap, PointCloud, ShapePairSample

MIRROR = np.diag([-1.0, 1.0, 1.0])
EX, EY, EZ = np.eye(3)

CUT_RANGE = (0.25, 0.45)
HOLE_COUNT = (6, 10)
HOLE_SIZE = (0.03, 0.06)
MAX_REMOVED = 0.70


@dataclass
class Capsule:
    a: np.ndarray
    b: np.ndarray
    r: float

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))

    def area(self):
        return 2.0 * np.pi * self.r * self.length + 4.0 * np.pi * self.r**2

    def sample(self, m, rng):
        axis = (self.b - self.a) / self.length
        u = _unit(rng.normal(size=(m, 3)))
        side = np.cross(axis, EX if abs(axis[0]) < 0.9 else EY)
        side /= np.linalg.norm(side)
        other = np.cross(axis, side)
        cyl = rng.uniform(size=m) < self.length / (self.length + 2.0 * self.r)
        t = rng.uniform(0.0, self.length, size=m)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
        ring = np.cos(theta)[:, None] * side + np.sin(theta)[:, None] * other
        # uniform u: the hemisphere facing away from the segment picks the cap
        along = (u @ axis < 0)[:, None]
        cap = np.where(along, self.a + self.r * u, self.b + self.r * u)
        pts = np.where(cyl[:, None], self.a + t[:, None] * axis + self.r * ring, cap)
        return pts

    def inside(self, p, margin=1e-9):
        ab = self.b - self.a
        t = np.clip((p - self.a) @ ab / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(p - (self.a + t[:, None] * ab), axis=1)
        return d < self.r - margin


@dataclass
class Ellipsoid:
    c: np.ndarray
    radii: np.ndarray

    def area(self):
        a, b, c = self.radii
        p = 1.6075
        return 4.0 * np.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)

    def sample(self, m, rng):
        return self.c + _unit(rng.normal(size=(m, 3))) * self.radii

    def inside(self, p, margin=1e-9):
        return np.sum(((p - self.c) / self.radii) ** 2, axis=1) < 1.0 - margin


def _unit(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass
class Body:
    """Rest-pose body geometry for one template (right side plus central parts)."""

    torso: Ellipsoid
    head: Ellipsoid
    nose: Ellipsoid
    arm: list[Capsule]
    leg: list[Capsule]
    neck: np.ndarray
    params: dict = field(default_factory=dict)

    def parts(self):
        """(name, shape, chain, segment) for every right-side or central part."""
        out = [("torso", self.torso, None, 0), ("head", self.head, "head", 0), ("nose", self.nose, "head", 0)]
        out += [(f"arm{i}", c, "arm", i) for i, c in enumerate(self.arm)]
        out += [(f"leg{i}", c, "leg", i) for i, c in enumerate(self.leg)]
        return out

    def solids(self):
        right = [s for _, s, _, _ in self.parts()]
        left = [_mirror_shape(s) for _, s, chain, _ in self.parts() if chain in ("arm", "leg")]
        return right + left


def _mirror_shape(s):
    if isinstance(s, Capsule):
        return Capsule(MIRROR @ s.a, MIRROR @ s.b, s.r)
    return Ellipsoid(MIRROR @ s.c, s.radii)


def make_body(template_seed) -> Body:
    rng = np.random.default_rng(np.random.SeedSequence([int(template_seed), 101]))

    def jit(v, rel=0.1):
        return v * rng.uniform(1.0 - rel, 1.0 + rel)

    s = jit(1.0, 0.08)
    thigh, shin = jit(0.42 * s), jit(0.40 * s)
    r_leg = jit(0.058 * s, 0.1)
    foot_len = jit(0.15 * s)
    r_foot = 0.6 * r_leg
    ankle_y = r_foot + 0.01
    hip_y = ankle_y + thigh + shin
    torso_h = jit(0.60 * s)
    torso_r = np.array([jit(0.17 * s), torso_h / 2.0 + 0.04, jit(0.11 * s)])
    torso_c = np.array([0.0, hip_y + torso_h / 2.0 - 0.02, 0.0])
    torso_top = torso_c[1] + torso_r[1]
    r_head = jit(0.105 * s)
    head_c = np.array([0.0, torso_top + 0.75 * r_head, 0.0])
    nose = Ellipsoid(head_c + np.array([0.0, -0.1 * r_head, 0.95 * r_head]), np.full(3, 0.3 * r_head))
    r_arm = jit(0.045 * s, 0.12)
    shoulder = np.array([torso_r[0] * 0.8 + r_arm, torso_top - 0.09 * s, 0.0])
    down_out = np.array([np.sin(np.deg2rad(20.0)), -np.cos(np.deg2rad(20.0)), 0.0])
    upper, fore = jit(0.30 * s), jit(0.27 * s)
    elbow = shoulder + upper * down_out
    wrist = elbow + fore * down_out
    hip = np.array([jit(0.11 * s, 0.05), hip_y, 0.0])
    knee = hip - thigh * EY
    ankle = knee - shin * EY
    toe = ankle + foot_len * EZ
    return Body(
        torso=Ellipsoid(torso_c, torso_r),
        head=Ellipsoid(head_c, np.full(3, r_head)),
        nose=nose,
        arm=[Capsule(shoulder, elbow, r_arm), Capsule(elbow, wrist, 0.85 * r_arm)],
        leg=[Capsule(hip, knee, r_leg), Capsule(knee, ankle, 0.85 * r_leg), Capsule(ankle, toe, r_foot)],
        neck=np.array([0.0, torso_top, 0.0]),
        params={"scale": s, "height": float(head_c[1] + r_head)},
    )


@dataclass
class Template:
    """A body plus a fixed point sampling; posing keeps indices aligned."""

    body: Body
    rest: np.ndarray
    part: np.ndarray  # part index (into body.parts()) per point
    side: np.ndarray  # +1 right/central half, -1 mirrored half
    seed: int

    @property
    def n(self):
        return self.rest.shape[0]

    def symmetry(self) -> IndexMap:
        h = self.n // 2
        return IndexMap(np.concatenate([np.arange(h, self.n), np.arange(h)]), self.n)


def make_template(template_seed, n: int) -> Template:
    if n % 2 or n < 8:
        raise ContractError(f"point count must be even and >= 8, got {n}")
    body = make_body(template_seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(template_seed), 202, n]))
    parts = body.parts()
    solids = body.solids()
    areas = np.array([s.area() for _, s, _, _ in parts])
    # central parts contribute only their x >= 0 half
    areas = areas * np.array([0.5 if chain in (None, "head") else 1.0 for _, _, chain, _ in parts])
    half = n // 2
    pool = max(4 * half, 256)
    while True:
        counts = rng.multinomial(pool, areas / areas.sum())
        pts, labels = [], []
        for pi, ((_, shape, chain, _), m) in enumerate(zip(parts, counts)):
            p = shape.sample(m, rng)
            if chain in (None, "head"):
                p[:, 0] = np.abs(p[:, 0])
            pts.append(p)
            labels.append(np.full(m, pi))
        pts = np.concatenate(pts)
        labels = np.concatenate(labels)
        exposed = np.ones(len(pts), dtype=bool)
        for si, solid in enumerate(solids):
            own = labels == si if si < len(parts) else np.zeros(len(pts), dtype=bool)
            exposed &= ~(solid.inside(pts) & ~own)
        pts, labels = pts[exposed], labels[exposed]
        if len(pts) >= half:
            break
        pool *= 2
    order = rng.permutation(len(pts))[:half]
    order.sort()
    right, lab = pts[order], labels[order]
    rest = np.concatenate([right, right @ MIRROR])
    return Template(
        body=body,
        rest=rest,
        part=np.concatenate([lab, lab]),
        side=np.concatenate([np.ones(half), -np.ones(half)]),
        seed=int(template_seed),
    )


@dataclass
class Pose:
    """Joint angles in degrees; ``right``/``left`` dicts share the same keys."""

    right: dict
    left: dict
    head_yaw: float = 0.0
    head_nod: float = 0.0

    @classmethod
    def rest(cls):
        zero = dict.fromkeys(LIMB_ANGLES, 0.0)
        return cls(dict(zero), dict(zero))


# angle name -> (low, high) in degrees
LIMB_ANGLES = {
    "shoulder_abd": (15.0, 90.0),
    "shoulder_flex": (-30.0, 60.0),
    "shoulder_twist": (-30.0, 30.0),
    "elbow": (0.0, 80.0),
    "hip_flex": (-15.0, 50.0),
    "hip_abd": (0.0, 25.0),
    "knee": (0.0, 60.0),
    "ankle": (-20.0, 20.0),
}


def random_pose(pose_seed) -> Pose:
    rng = np.random.default_rng(np.random.SeedSequence([int(pose_seed), 303]))
    right = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in LIMB_ANGLES.items()}
    left = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in LIMB_ANGLES.items()}
    return Pose(right, left, float(rng.uniform(-40.0, 40.0)), float(rng.uniform(-15.0, 15.0)))


def _deg(a):
    return np.deg2rad(a)


def _chain_transforms(body: Body, chain: str, ang: dict):
    """Per-segment (R, t) for the right-side chain: p -> R p + t."""
    if chain == "arm":
        j0, j1 = body.arm[0].a, body.arm[0].b
        axis0 = (j1 - j0) / np.linalg.norm(j1 - j0)
        r0 = (
            axis_angle(EZ, _deg(ang["shoulder_abd"]))
            @ axis_angle(EX, -_deg(ang["shoulder_flex"]))
            @ axis_angle(axis0, _deg(ang["shoulder_twist"]))
        )
        r1 = r0 @ axis_angle(EX, -_deg(ang["elbow"]))
        t0 = j0 - r0 @ j0
        j1p = r0 @ j1 + t0
        t1 = j1p - r1 @ j1
        return [(r0, t0), (r1, t1)]
    j0, j1, j2 = body.leg[0].a, body.leg[1].a, body.leg[2].a
    r0 = axis_angle(EZ, _deg(ang["hip_abd"])) @ axis_angle(EX, -_deg(ang["hip_flex"]))
    r1 = r0 @ axis_angle(EX, _deg(ang["knee"]))
    r2 = r1 @ axis_angle(EX, -_deg(ang["ankle"]))
    t0 = j0 - r0 @ j0
    j1p = r0 @ j1 + t0
    t1 = j1p - r1 @ j1
    j2p = r1 @ j2 + t1
    t2 = j2p - r2 @ j2
    return [(r0, t0), (r1, t1), (r2, t2)]


def pose_points(tpl: Template, pose: Pose) -> np.ndarray:
    body = tpl.body
    parts = body.parts()
    out = tpl.rest.copy()
    head_r = axis_angle(EY, _deg(pose.head_yaw)) @ axis_angle(EX, -_deg(pose.head_nod))
    for side, ang in ((1.0, pose.right), (-1.0, pose.left)):
        on_side = tpl.side == side
        chains = {c: _chain_transforms(body, c, ang) for c in ("arm", "leg")}
        for pi, (_, _, chain, seg) in enumerate(parts):
            sel = on_side & (tpl.part == pi)
            if not sel.any() or chain is None:
                continue
            p = tpl.rest[sel]
            if chain == "head":
                out[sel] = (p - body.neck) @ head_r.T + body.neck
                continue
            r, t = chains[chain][seg]
            if side < 0:
                # mirrored chain: conjugate the right-side transform by the mirror
                q = p @ MIRROR
                out[sel] = (q @ r.T + t) @ MIRROR
            else:
                out[sel] = p @ r.T + t
    return out


def gen_shape(template_seed, pose_seed, n: int) -> tuple[PointCloud, IndexMap]:
    """Posed body with ``n`` points and its symmetry pairing ``i <-> i + n/2``.

    ``pose_seed=None`` gives the rest pose, where the pairing is an exact mirror.
    """
    tpl = make_template(template_seed, n)
    pose = Pose.rest() if pose_seed is None else random_pose(pose_seed)
    cloud = PointCloud(pose_points(tpl, pose), label=f"t{template_seed}_p{pose_seed}")
    return cloud, tpl.symmetry()


def _remove_cut(coords, rng):
    n = coords.shape[0]
    d = _unit(rng.normal(size=(1, 3)))[0]
    frac = rng.uniform(*CUT_RANGE)
    m = int(np.clip(round(frac * n), int(np.floor(CUT_RANGE[0] * n)) + 1, int(np.ceil(CUT_RANGE[1] * n)) - 1))
    proj = (coords - coords.mean(axis=0)) @ d
    removed = np.zeros(n, dtype=bool)
    removed[np.argsort(-proj, kind="stable")[:m]] = True
    return removed, {"direction": d.tolist()}


def _remove_holes(cloud, rng):
    n = cloud.n
    geo = geodesics(cloud)
    removed = np.zeros(n, dtype=bool)
    count = int(rng.integers(HOLE_COUNT[0], HOLE_COUNT[1] + 1))
    centers = []
    for _ in range(count):
        alive = np.flatnonzero(~removed)
        c = int(rng.choice(alive))
        size = max(1, int(round(rng.uniform(*HOLE_SIZE) * n)))
        ball = np.argsort(geo.row(c), kind="stable")[:size]
        removed[ball] = True
        centers.append(c)
    return removed, {"holes": count, "centers": centers}


def _require_connected(cloud):
    try:
        geodesics(cloud)
    except ConnectivityError as exc:
        raise DegenerateSampleError(f"{cloud.label}: {exc}") from None


def gen_pair(template_seed, pose_seeds, n: int, partial: str = "none", seed=0) -> ShapePairSample:
    """Two poses of one template with index-aligned sampling.

    For ``partial="none"``, ``x`` and ``y`` are the two poses and ``map_xy`` is
    the identity. For ``"cut"``/``"hole"``, the second pose loses part of its
    surface and becomes the source ``x``; ``y`` is the full first pose (the
    template the partial shape is matched against), and ``map_xy`` sends every
    surviving point to its own index on ``y``.
    """
    pa, pb = pose_seeds
    tpl = make_template(template_seed, n)
    sym = tpl.symmetry()
    pose_a = Pose.rest() if pa is None else random_pose(pa)
    pose_b = Pose.rest() if pb is None else random_pose(pb)
    ya = PointCloud(pose_points(tpl, pose_a), label=f"t{template_seed}_p{pa}")
    yb = PointCloud(pose_points(tpl, pose_b), label=f"t{template_seed}_p{pb}")
    meta = {"template_seed": int(template_seed), "pose_seeds": [pa, pb], "n": n, "partial": partial, "seed": seed}
    # the scored target needs a connected neighbourhood graph
    _require_connected(yb if partial == "none" else ya)
    if partial == "none":
        return ShapePairSample(ya, yb, IndexMap.identity(n), sym, sym, meta)
    rng = np.random.default_rng(np.random.SeedSequence([int(template_seed), 404, int(seed)]))
    if partial == "cut":
        removed, info = _remove_cut(yb.coords, rng)
    elif partial == "hole":
        _require_connected(yb)
        removed, info = _remove_holes(yb, rng)
    else:
        raise ContractError(f"unknown partiality {partial!r}")
    frac = float(removed.mean())
    if frac > MAX_REMOVED:
        raise DegenerateSampleError(f"partiality removed {frac:.0%} of the points")
    keep = np.flatnonzero(~removed)
    meta.update(info)
    meta["removed_fraction"] = frac
    x = PointCloud(yb.coords[keep], label=yb.label + f"_{partial}")
    return ShapePairSample(
        x=x,
        y=ya,
        map_xy=IndexMap(keep, n),
        sym_x=restrict_symmetry(sym, keep, yb.coords),
        sym_y=sym,
        meta=meta,
    )


def gen_dataset(pairs: int, n: int, partial: str = "none", seed=0) -> list[ShapePairSample]:
    """``pairs`` random pairs; template and pose seeds are drawn from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 505]))
    out = []
    while len(out) < pairs:
        ts, pa, pb, ps = (int(v) for v in rng.integers(0, 2**31 - 1, size=4))
        try:
            s = gen_pair(ts, (pa, pb), n, partial, ps)
        except DegenerateSampleError:
            continue
        s.meta["name"] = f"pair_{len(out):04d}"
        out.append(s)
    return out
