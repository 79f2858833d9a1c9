"""Procedural generation of paired (image, cloud, contact, part mask) samples.

Bodies are articulated capsule trees: each part is a capsule (segment +
radius) attached to an endpoint of its parent, so the part structure is
connected like a kinematic chain. Scenes are planes and boxes with exact
signed distance functions, which gives exact contact ground truth.

Everything is a pure function of its RNG seed; per-sample generators are
seeded from (base_seed, sample_index) so datasets are reproducible sample
by sample and trivially parallel.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset
from .types import ContactLabel, ContactSample, HumanPointCloud, PartMask

DEFAULT_CONTACT_EPSILON = 0.010  # meters
DEFAULT_IMAGE_SIZE = (224, 224)
DEFAULT_POINTS = 1024


# ---------------------------------------------------------------------------
# body

@dataclass(frozen=True)
class Capsule:
    part_id: int
    p0: np.ndarray  # [3] endpoint, meters
    p1: np.ndarray
    radius: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def surface_area(self) -> float:
        # cylinder side + full sphere (two hemispherical caps)
        return 2.0 * math.pi * self.radius * self.length + 4.0 * math.pi * self.radius ** 2


@dataclass(frozen=True)
class ArticulatedBodySpec:
    parts: tuple[Capsule, ...]
    pose_seed: int

    def __post_init__(self):
        ids = [c.part_id for c in self.parts]
        if len(set(ids)) != len(ids):
            raise ValueError("part ids must be unique")


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.array([0.0, 0.0, 1.0])


def random_body(seed: int, num_parts: int = 24) -> ArticulatedBodySpec:
    """Grow a random connected capsule tree with `num_parts` parts.

    The root grows upward from the origin; each further part hangs off a
    uniformly chosen endpoint of an existing part. Directions are biased
    to stay roughly bounded so the body stays people-sized (~1-2 m).
    """
    if num_parts < 1:
        raise ValueError("need at least one part")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0B0D]))
    parts: list[Capsule] = []
    root_len = rng.uniform(0.35, 0.55)
    parts.append(Capsule(
        part_id=1,
        p0=np.array([0.0, 0.0, 0.0]),
        p1=np.array([0.0, 0.0, root_len]),
        radius=float(rng.uniform(0.07, 0.11)),
    ))
    for pid in range(2, num_parts + 1):
        parent = parts[rng.integers(0, len(parts))]
        anchor = parent.p0 if rng.random() < 0.5 else parent.p1
        direction = rng.normal(size=3)
        # pull limb directions back toward the origin when drifting away,
        # keeping the body compact
        direction = _unit(direction - 0.35 * anchor)
        length = float(rng.uniform(0.15, 0.40))
        radius = float(rng.uniform(0.030, 0.065))
        parts.append(Capsule(
            part_id=pid,
            p0=anchor.copy(),
            p1=anchor + direction * length,
            radius=radius,
        ))
    return ArticulatedBodySpec(parts=tuple(parts), pose_seed=seed)


def _capsule_surface_points(capsule: Capsule, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples on a single capsule surface."""
    axis = _unit(capsule.p1 - capsule.p0)
    # orthonormal frame around the axis
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(axis, helper))
    v = np.cross(axis, u)

    h = capsule.length
    r = capsule.radius
    area_cyl = 2.0 * math.pi * r * h
    area_sph = 4.0 * math.pi * r ** 2
    on_cyl = rng.random(count) < area_cyl / (area_cyl + area_sph)

    pts = np.empty((count, 3))
    n_cyl = int(on_cyl.sum())
    if n_cyl:
        t = rng.uniform(0.0, h, size=n_cyl)
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n_cyl)
        ring = np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v
        pts[on_cyl] = capsule.p0 + t[:, None] * axis + r * ring
    n_sph = count - n_cyl
    if n_sph:
        d = rng.normal(size=(n_sph, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        # hemisphere split: direction pointing backward along the axis caps
        # p0, forward caps p1 -- exactly uniform over the two caps combined
        centers = np.where((d @ axis < 0.0)[:, None], capsule.p0, capsule.p1)
        pts[~on_cyl] = centers + r * d
    return pts


def sample_body(spec: ArticulatedBodySpec, n_points: int,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample `n_points` uniformly over the whole body surface.

    Points land on each part with probability proportional to its surface
    area. Returns (points [n, 3] float64, part_ids [n] int).
    """
    if n_points < 64:
        raise ValueError(f"n_points = {n_points} below minimum 64")
    return _sample_surface(spec, n_points, rng)


def _sample_surface(spec: ArticulatedBodySpec, n_points: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if not spec.parts:
        raise ValueError("body has no parts")
    areas = np.array([c.surface_area() for c in spec.parts])
    choice = rng.choice(len(spec.parts), size=n_points, p=areas / areas.sum())
    points = np.empty((n_points, 3))
    part_ids = np.empty(n_points, dtype=np.int64)
    for i, capsule in enumerate(spec.parts):
        idx = np.where(choice == i)[0]
        if idx.size:
            points[idx] = _capsule_surface_points(capsule, idx.size, rng)
        part_ids[choice == i] = capsule.part_id
    return points, part_ids


def body_min_z(spec: ArticulatedBodySpec) -> float:
    """Lowest point of the body surface (analytic over capsules)."""
    return min(min(c.p0[2], c.p1[2]) - c.radius for c in spec.parts)


# ---------------------------------------------------------------------------
# scene

@dataclass(frozen=True)
class Plane:
    """Half-space boundary n.x = offset with unit normal n pointing away from solid."""

    normal: np.ndarray
    offset: float

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal - self.offset


@dataclass(frozen=True)
class Box:
    center: np.ndarray
    half_extents: np.ndarray
    yaw: float = 0.0  # rotation about z, radians

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> local
        local = (points - self.center) @ rot.T
        q = np.abs(local) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple = ()
    contact_epsilon: float = DEFAULT_CONTACT_EPSILON

    def __post_init__(self):
        if self.contact_epsilon <= 0:
            raise ValueError("contact_epsilon must be positive")


def label_contact(cloud: HumanPointCloud, scene: SceneSpec) -> ContactLabel:
    """contact[i] = 1 iff the signed distance of point i to any primitive
    is at most scene.contact_epsilon."""
    pts = np.asarray(cloud.points, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise ValueError("cloud has non-finite coordinates")
    contact = np.zeros(len(pts), dtype=np.uint8)
    for prim in scene.primitives:
        contact |= (prim.signed_distance(pts) <= scene.contact_epsilon).astype(np.uint8)
    return ContactLabel(contact=contact)


# ---------------------------------------------------------------------------
# camera + point-splat renderer

@dataclass(frozen=True)
class Camera:
    eye: np.ndarray
    rotation: np.ndarray      # world -> camera, rows = (right, down, forward)
    focal: float
    cx: float
    cy: float
    image_size: tuple[int, int]  # (H, W)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (u, v, depth); depth <= 0 means behind the camera."""
        cam = (points - self.eye) @ self.rotation.T
        z = cam[:, 2]
        safe_z = np.where(z > 1e-9, z, 1e-9)
        u = self.focal * cam[:, 0] / safe_z + self.cx
        v = self.focal * cam[:, 1] / safe_z + self.cy
        return u, v, z


def look_at(eye: np.ndarray, target: np.ndarray, image_size: tuple[int, int],
            focal: float) -> Camera:
    forward = _unit(target - eye)
    world_up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ world_up) > 0.999:
        world_up = np.array([0.0, 1.0, 0.0])
    right = _unit(np.cross(forward, world_up))
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=0)
    h, w = image_size
    return Camera(eye=eye, rotation=rot, focal=focal, cx=w / 2.0, cy=h / 2.0,
                  image_size=image_size)


def fit_camera(points: np.ndarray, image_size: tuple[int, int],
               rng: np.random.Generator, fill: float = 0.42) -> Camera:
    """Place a camera on a random azimuth that keeps the whole cloud in frame."""
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    radius = float(np.linalg.norm(points - center, axis=1).max())
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    elevation = rng.uniform(0.05, 0.35)
    distance = max(2.6 * radius, 0.5)
    eye = center + distance * np.array([
        math.cos(azimuth) * math.cos(elevation),
        math.sin(azimuth) * math.cos(elevation),
        math.sin(elevation),
    ])
    cam = look_at(eye, center, image_size, focal=1.0)
    u, v, z = cam.project(points)
    h, w = image_size
    extent = max(
        float(np.abs(u - w / 2.0).max()),
        float(np.abs(v - h / 2.0).max()),
        1e-6,
    )
    focal = fill * min(h, w) / extent
    return Camera(eye=cam.eye, rotation=cam.rotation, focal=focal,
                  cx=cam.cx, cy=cam.cy, image_size=image_size)


def part_palette(num_parts: int) -> np.ndarray:
    """Fixed, well-separated RGB colors for part ids 1..J ([J+1, 3] floats,
    row 0 is unused background)."""
    colors = np.zeros((num_parts + 1, 3))
    for j in range(1, num_parts + 1):
        hue = (j - 1) / max(num_parts, 1)
        k = hue * 6.0
        x = 1.0 - abs(k % 2.0 - 1.0)
        sector = [(1, x, 0), (x, 1, 0), (0, 1, x), (0, x, 1), (x, 0, 1), (1, 0, x)][int(k) % 6]
        colors[j] = np.array(sector) * 0.75 + 0.25
    return colors


def _splat(canvas: np.ndarray, zbuf: np.ndarray, mask: np.ndarray,
           u: np.ndarray, v: np.ndarray, depth: np.ndarray,
           colors: np.ndarray, part_ids: np.ndarray, splat_radius: int) -> int:
    """Z-buffered square splats. Paints far-to-near so the nearest point
    owns each pixel. Returns the number of points that landed in frame."""
    h, w = zbuf.shape
    in_front = depth > 1e-6
    ui = np.round(u).astype(np.int64)
    vi = np.round(v).astype(np.int64)
    hits = 0
    order = np.argsort(-depth, kind="stable")
    order = order[in_front[order]]
    px, py, pd = ui[order], vi[order], depth[order]
    pc, pp = colors[order], part_ids[order]
    hits = int(((px >= 0) & (px < w) & (py >= 0) & (py < h)).sum())
    for dv in range(-splat_radius, splat_radius + 1):
        for du in range(-splat_radius, splat_radius + 1):
            x = px + du
            y = py + dv
            ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
            xo, yo = x[ok], y[ok]
            closer = pd[ok] <= zbuf[yo, xo]
            xo, yo = xo[closer], yo[closer]
            zbuf[yo, xo] = pd[ok][closer]
            canvas[yo, xo] = pc[ok][closer]
            mask[yo, xo] = pp[ok][closer]
    return hits


def _sample_scene_points(scene: SceneSpec, around: np.ndarray, extent: float,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Visible surface points for scene primitives, with colors."""
    pts: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for k, prim in enumerate(scene.primitives):
        if isinstance(prim, Plane):
            side = int(extent / 0.02)
            xs = np.linspace(-extent, extent, side) + around[0]
            ys = np.linspace(-extent, extent, side) + around[1]
            gx, gy = np.meshgrid(xs, ys)
            # plane point: offset along the normal from the (x, y, 0) grid
            base = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
            shift = prim.offset - base @ prim.normal
            p = base + shift[:, None] * prim.normal
            checker = ((np.floor(gx / 0.25) + np.floor(gy / 0.25)) % 2).ravel()
            shade = np.where(checker > 0, 0.55, 0.40)
            c = np.stack([shade, shade, shade * 1.08], axis=1)
        else:
            # box: sample all six faces
            n = 1200
            face = rng.integers(0, 6, size=n)
            uvw = rng.uniform(-1.0, 1.0, size=(n, 3))
            axis = face // 2
            sign = np.where(face % 2 == 0, 1.0, -1.0)
            uvw[np.arange(n), axis] = sign
            local = uvw * prim.half_extents
            cy, sy = math.cos(prim.yaw), math.sin(prim.yaw)
            rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])  # local -> world
            p = local @ rot.T + prim.center
            tint = np.array([0.75, 0.45, 0.25]) if k % 2 else np.array([0.35, 0.55, 0.80])
            c = np.tile(tint, (n, 1)) * rng.uniform(0.85, 1.0, size=(n, 1))
        pts.append(p)
        cols.append(c)
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(pts), np.concatenate(cols)


def render_sample(points: np.ndarray, part_ids: np.ndarray, scene: SceneSpec,
                  camera: Camera, rng: np.random.Generator,
                  splat_radius: int = 1) -> tuple[np.ndarray, PartMask]:
    """Z-buffered point-splat render of body + scene.

    Returns (image uint8 [H, W, 3], PartMask). Mask pixels carry the part id
    of the nearest body splat, 0 where scene or background wins. Raises if a
    nonempty body is entirely out of frame.
    """
    h, w = camera.image_size
    # background: vertical gradient
    t = np.linspace(0.0, 1.0, h)[:, None]
    canvas = (np.array([0.09, 0.10, 0.13]) * (1 - t[..., None])
              + np.array([0.16, 0.15, 0.13]) * t[..., None])
    canvas = np.broadcast_to(canvas, (h, w, 3)).copy()
    zbuf = np.full((h, w), np.inf)
    mask = np.zeros((h, w), dtype=np.int64)

    num_parts = int(part_ids.max()) if part_ids.size else 0
    palette = part_palette(max(num_parts, 1))

    if points.shape[0]:
        around = 0.5 * (points.min(axis=0) + points.max(axis=0))
        extent = max(2.0, 1.5 * float(np.linalg.norm(points - around, axis=1).max()))
    else:
        around, extent = np.zeros(3), 2.0
    spts, scols = _sample_scene_points(scene, around, extent, rng)
    if spts.shape[0]:
        u, v, z = camera.project(spts)
        _splat(canvas, zbuf, mask, u, v, z, scols,
               np.zeros(len(spts), dtype=np.int64), splat_radius)

    if points.shape[0]:
        u, v, z = camera.project(points)
        zmin, zmax = float(z.min()), float(z.max())
        depth_shade = 1.0 - 0.45 * (z - zmin) / max(zmax - zmin, 1e-9)
        colors = palette[part_ids] * depth_shade[:, None]
        hits = _splat(canvas, zbuf, mask, u, v, z, colors, part_ids, splat_radius)
        if hits == 0:
            raise ValueError("body is entirely out of frame")

    image = np.clip(canvas * 255.0, 0, 255).astype(np.uint8)
    return image, PartMask(mask=mask, num_parts=max(num_parts, 1))


# ---------------------------------------------------------------------------
# full sample generation

@dataclass(frozen=True)
class GeneratorConfig:
    num_parts: int = 24
    n_points: int = DEFAULT_POINTS
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    contact_epsilon: float = DEFAULT_CONTACT_EPSILON
    max_boxes: int = 2
    splat_radius: int = 1
    # points whose scene distance falls inside (margin_lo, margin_hi) * epsilon
    # are redrawn, so labels never hinge on a sub-millimeter threshold call
    margin_lo: float = 0.6
    margin_hi: float = 1.4


def _scene_min_sdf(points: np.ndarray, primitives) -> np.ndarray:
    sdf = np.full(len(points), np.inf)
    for prim in primitives:
        sdf = np.minimum(sdf, prim.signed_distance(points))
    return sdf


def generate_sample(seed: int, index: int, cfg: GeneratorConfig = GeneratorConfig()) -> ContactSample:
    """Deterministically build sample `index` of the dataset seeded by `seed`."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    body = random_body(int(rng.integers(0, 2 ** 31)), num_parts=cfg.num_parts)

    points, part_ids = sample_body(body, cfg.n_points, rng)
    # drop the body onto (and slightly into) the ground plane z = 0, so a
    # few percent of the surface sits inside the contact band
    sink_fraction = rng.uniform(0.03, 0.15)
    z_q = np.quantile(points[:, 2], sink_fraction)
    points = points - np.array([0.0, 0.0, z_q - 0.8 * cfg.contact_epsilon])

    primitives: list = [Plane(normal=np.array([0.0, 0.0, 1.0]), offset=0.0)]
    n_boxes = int(rng.integers(0, cfg.max_boxes + 1))
    for _ in range(n_boxes):
        # park a box flush against a random body point so something touches it
        target = points[rng.integers(0, len(points))]
        direction = _unit(np.array([*rng.normal(size=2), 0.0]))
        half = rng.uniform(0.08, 0.25, size=3)
        gap = rng.uniform(0.0, cfg.contact_epsilon * 0.5)
        center = target + direction * (half[0] + gap)
        center[2] = max(half[2], target[2])  # rest on or above the floor
        primitives.append(Box(center=center, half_extents=half,
                              yaw=float(rng.uniform(0, math.pi))))

    scene = SceneSpec(primitives=tuple(primitives), contact_epsilon=cfg.contact_epsilon)

    # keep sampled points out of the ambiguity band around the contact shell
    shift = np.array([0.0, 0.0, z_q - 0.8 * cfg.contact_epsilon])
    lo = cfg.margin_lo * cfg.contact_epsilon
    hi = cfg.margin_hi * cfg.contact_epsilon
    for _ in range(40):
        sdf = _scene_min_sdf(points, primitives)
        in_band = (sdf > lo) & (sdf < hi)
        if not in_band.any():
            break
        fresh, fresh_ids = _sample_surface(body, int(in_band.sum()), rng)
        fresh = fresh - shift
        points[in_band] = fresh
        part_ids[in_band] = fresh_ids

    cloud = HumanPointCloud(points=points.astype(np.float32), source_tag="arbitrary")
    contact = label_contact(cloud, scene)

    camera = fit_camera(points, cfg.image_size, rng)
    image, mask = render_sample(points, part_ids, scene, camera, rng,
                                splat_radius=cfg.splat_radius)
    mask = PartMask(mask=mask.mask, num_parts=cfg.num_parts)

    return ContactSample(
        sample_id=f"sample_{index:05d}",
        image_u8=image,
        cloud=cloud,
        contact=contact,
        part_mask=mask,
    )


def generate_dataset(out_dir: Path, num: int, seed: int,
                     cfg: GeneratorConfig = GeneratorConfig(),
                     test_fraction: float = 0.2) -> list[ContactSample]:
    """Generate `num` samples, write the on-disk dataset, return the samples.

    Split assignment is deterministic: the trailing `test_fraction` of the
    index range becomes the test split.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_test = int(round(num * test_fraction))
    entries = []
    samples = []
    for i in range(num):
        sample = generate_sample(seed, i, cfg)
        sample.split = "test" if i >= num - n_test else "train"
        dataset.write_sample(out_dir, sample)
        entries.append({"id": sample.sample_id, "split": sample.split})
        samples.append(sample)
    dataset.write_manifest(out_dir, entries, meta={
        "seed": seed,
        "num_samples": num,
        "num_parts": cfg.num_parts,
        "points_per_sample": cfg.n_points,
        "image_size": list(cfg.image_size),
        "contact_epsilon": cfg.contact_epsilon,
    })
    return samples
