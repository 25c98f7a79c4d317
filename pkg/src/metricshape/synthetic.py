"""Ground-truth oracle: analytic depth renders, constraint sampling, noise.

Scenes are unions of primitives intersected analytically, so rendered
depths are exact to float precision and downstream recovery tests can use
tight tolerances. The camera sits at the origin looking down +z; depth is
the z coordinate of the nearest front-facing hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .camera import DepthMap, Intrinsics, focal_from_fov, unproject_pixel
from .errors import DegenerateSceneError, SamplingFailureError
from .incidence import field_from_intrinsics
from .solver import DistanceConstraint


@dataclass(frozen=True)
class Plane:
    """Infinite plane through `point`; visible from the side `normal` points to."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not any(c != 0.0 for c in self.normal):
            raise ValueError("plane normal must be nonzero")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with min corner strictly below max corner per axis."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not all(lo < hi for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError("box min corner must be strictly below max corner per axis")


Primitive = Plane | Sphere | Box


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple[Primitive, ...]

    def __post_init__(self) -> None:
        if len(self.primitives) == 0:
            raise ValueError("scene needs at least one primitive")
        object.__setattr__(self, "primitives", tuple(self.primitives))


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative log-normal noise exp(sigma * g), g ~ N(0, 1), per value."""

    depth_sigma_rel: float = 0.0
    distance_sigma_rel: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("depth_sigma_rel", "distance_sigma_rel"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


def _camera_inside(prim: Primitive) -> bool:
    if isinstance(prim, Sphere):
        return float(np.linalg.norm(prim.center)) < prim.radius
    if isinstance(prim, Box):
        return all(lo < 0.0 < hi for lo, hi in zip(prim.min_corner, prim.max_corner))
    return False


def _plane_hits(prim: Plane, dirs: np.ndarray) -> np.ndarray:
    n = np.asarray(prim.normal, dtype=np.float64)
    num = float(n @ np.asarray(prim.point, dtype=np.float64))
    denom = dirs @ n
    facing = denom < 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    return np.where(facing & (t > 0.0), t, np.inf)


def _sphere_hits(prim: Sphere, dirs: np.ndarray) -> np.ndarray:
    center = np.asarray(prim.center, dtype=np.float64)
    a = (dirs * dirs).sum(axis=-1)
    b = -2.0 * (dirs @ center)
    c = float(center @ center) - prim.radius**2
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    # camera is outside, so the smaller positive root is the entering hit
    t = (-b - sq) / (2.0 * a)
    return np.where(hit & (t > 0.0), t, np.inf)


def _box_hits(prim: Box, dirs: np.ndarray) -> np.ndarray:
    t_near = np.full(dirs.shape[:-1], -np.inf)
    t_far = np.full(dirs.shape[:-1], np.inf)
    for axis in range(3):
        lo, hi = prim.min_corner[axis], prim.max_corner[axis]
        d = dirs[..., axis]
        zero = d == 0.0
        inside_slab = lo <= 0.0 <= hi
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(zero, 1.0, lo / d)
            t2 = np.where(zero, 1.0, hi / d)
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        near = np.where(zero, -np.inf if inside_slab else np.inf, near)
        far = np.where(zero, np.inf if inside_slab else -np.inf, far)
        t_near = np.maximum(t_near, near)
        t_far = np.minimum(t_far, far)
    hit = (t_near <= t_far) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf)


def render_depth(scene: SceneSpec, k: Intrinsics) -> DepthMap:
    """Cast one ray per pixel and keep the z-depth of the nearest hit.

    Rays are the camera's incidence rays (z component 1), so the ray
    parameter at the hit *is* the z-depth. Pixels with no hit are invalid.
    """
    for prim in scene.primitives:
        if _camera_inside(prim):
            raise DegenerateSceneError(f"camera origin lies inside {prim}")
    dirs = field_from_intrinsics(k).rays
    t_best = np.full((k.height, k.width), np.inf)
    for prim in scene.primitives:
        if isinstance(prim, Plane):
            t = _plane_hits(prim, dirs)
        elif isinstance(prim, Sphere):
            t = _sphere_hits(prim, dirs)
        else:
            t = _box_hits(prim, dirs)
        t_best = np.minimum(t_best, t)
    valid = np.isfinite(t_best)
    return DepthMap(np.where(valid, t_best, 0.0), valid)


def sample_constraints(
    depth: DepthMap,
    k: Intrinsics,
    count: int,
    rng_seed: int,
    min_depth_ratio: float = 1.2,
    max_attempts: int | None = None,
) -> list[DistanceConstraint]:
    """Sample pixel-pair constraints with ground-truth separations.

    Pairs never share pixels with other pairs ("non-overlapping groups"),
    and each pair's depth ratio is at least ``min_depth_ratio`` so the
    equal-depth degeneracy is avoided by construction. Separations come
    from unprojecting both pixels with the ground-truth intrinsics.
    Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    if min_depth_ratio < 1.0:
        raise ValueError(f"min_depth_ratio must be >= 1, got {min_depth_ratio}")
    flat_valid = np.flatnonzero(depth.valid.ravel())
    if flat_valid.size < 2 * count:
        raise SamplingFailureError(
            f"need at least {2 * count} valid pixels for {count} disjoint pairs, "
            f"got {flat_valid.size}"
        )
    if max_attempts is None:
        max_attempts = max(10_000, 500 * count)
    rng = np.random.default_rng(rng_seed)
    values = depth.values.ravel()
    w = depth.width

    used: set[int] = set()
    out: list[DistanceConstraint] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > max_attempts:
            raise SamplingFailureError(
                f"could not sample {count} pairs with depth ratio >= {min_depth_ratio} "
                f"in {max_attempts} attempts ({len(out)} found)"
            )
        i, j = rng.choice(flat_valid, size=2, replace=False)
        if i in used or j in used:
            continue
        d1, d2 = float(values[i]), float(values[j])
        if max(d1, d2) / min(d1, d2) < min_depth_ratio:
            continue
        u1, v1 = float(i % w), float(i // w)
        u2, v2 = float(j % w), float(j // w)
        p1 = unproject_pixel(k, u1, v1, d1)
        p2 = unproject_pixel(k, u2, v2, d2)
        separation = math.dist(p1, p2)
        out.append(
            DistanceConstraint(u1=u1, v1=v1, u2=u2, v2=v2, d1=d1, d2=d2, distance=separation)
        )
        used.add(int(i))
        used.add(int(j))
    return out


def perturb(
    constraints: list[DistanceConstraint], depth: DepthMap, noise: NoiseSpec
) -> tuple[list[DistanceConstraint], DepthMap]:
    """Apply multiplicative noise to constraint values and the depth map.

    Depth noise perturbs the map's valid entries and the constraints'
    stored depths (independent draws); distance noise perturbs each
    constraint's separation. Draws that would make a constraint infeasible
    (separation below the depth gap) are redrawn, so the output always
    validates. Identical seeds give identical output.
    """
    rng = np.random.default_rng(noise.seed)
    if noise.depth_sigma_rel > 0.0:
        values = depth.values.copy()
        g = rng.standard_normal(depth.n_valid)
        values[depth.valid] *= np.exp(noise.depth_sigma_rel * g)
        depth_out = DepthMap(values, depth.valid)
    else:
        depth_out = depth

    out = []
    for c in constraints:
        for _ in range(100):
            d1, d2, separation = c.d1, c.d2, c.distance
            if noise.depth_sigma_rel > 0.0:
                d1 *= float(np.exp(noise.depth_sigma_rel * rng.standard_normal()))
                d2 *= float(np.exp(noise.depth_sigma_rel * rng.standard_normal()))
            if noise.distance_sigma_rel > 0.0:
                separation *= float(np.exp(noise.distance_sigma_rel * rng.standard_normal()))
            if separation >= abs(d1 - d2):
                out.append(replace(c, d1=d1, d2=d2, distance=separation))
                break
        else:
            raise SamplingFailureError(
                "could not draw feasible noise for a constraint in 100 attempts"
            )
    return out, depth_out


def make_camera(
    rng_seed: int,
    width: int,
    height: int,
    fov_range: tuple[float, float] = (40.0, 120.0),
    center_jitter: float = 0.0,
) -> Intrinsics:
    """Random camera: per-axis FoV uniform in range, jittered principal point."""
    lo, hi = fov_range
    if not (0.0 < lo <= hi < 180.0):
        raise ValueError(f"fov_range must satisfy 0 < lo <= hi < 180, got {fov_range}")
    rng = np.random.default_rng(rng_seed)
    fx = focal_from_fov(float(rng.uniform(lo, hi)), width)
    fy = focal_from_fov(float(rng.uniform(lo, hi)), height)
    cx = width / 2.0
    cy = height / 2.0
    if center_jitter > 0.0:
        cx += float(rng.uniform(-center_jitter, center_jitter))
        cy += float(rng.uniform(-center_jitter, center_jitter))
    return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
