"""Recover 4-DoF intrinsics from a depth map plus pixel-pair distance constraints.

Each constraint is two pixels with known depths d1, d2 and the Euclidean
3D separation L of their unprojections (the physical size of some
reference object). Squaring the separation and substituting

    t_x = cx / fx,   t_y = cy / fy,   r_x = 1 / fx,   r_y = 1 / fy

turns each constraint into one polynomial equation

    (a1*r_x + a2*t_x)^2 + (a3*r_y + a4*t_y)^2 + a5 = 0

with per-pair constants a1 = d1*u1 - d2*u2, a2 = a4 = d2 - d1,
a3 = d1*v1 - d2*v2, a5 = (d1 - d2)^2 - L^2. Four pairs determine the four
unknowns (a minimal problem); the sum of squared equation values is
minimized with Levenberg-Marquardt and the intrinsics are read back via
fx = 1/r_x, fy = 1/r_y, cx = t_x/r_x, cy = t_y/r_y.

Each equation is divided by L^2 before stacking so the system is
dimensionless and large-L constraints do not dominate.

Degeneracy: when every pair has d1 == d2 the a2, a4 coefficients vanish
and t_x, t_y drop out of every equation, so the principal point is
unobservable. Exact rank loss of the Jacobian raises
DegenerateConstraintsError; a merely ill-conditioned Jacobian sets
``condition_warning`` on the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, focal_from_fov
from .errors import DegenerateConstraintsError, InfeasibleConstraintError

@dataclass(frozen=True)
class DistanceConstraint:
    """Two pixels, their depths in meters, and their 3D separation in meters."""

    u1: float
    v1: float
    u2: float
    v2: float
    d1: float
    d2: float
    distance: float

    def __post_init__(self) -> None:
        if (self.u1, self.v1) == (self.u2, self.v2):
            raise ValueError("constraint pixels must differ")
        for name in ("d1", "d2", "distance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and positive, got {value}")
        if self.distance < abs(self.d1 - self.d2):
            raise InfeasibleConstraintError(
                f"distance {self.distance} is smaller than the depth separation "
                f"|d1 - d2| = {abs(self.d1 - self.d2)}; no camera can realize this pair"
            )


@dataclass(frozen=True)
class ConstraintCoefficients:
    """Constants of one re-parameterized distance equation."""

    a1: float
    a2: float
    a3: float
    a4: float
    a5: float


@dataclass(frozen=True)
class SolverParams:
    """Solver unknowns (t_x, t_y, r_x, r_y) = (cx/fx, cy/fy, 1/fx, 1/fy)."""

    t_x: float
    t_y: float
    r_x: float
    r_y: float

    def __post_init__(self) -> None:
        if not (self.r_x > 0.0 and self.r_y > 0.0):
            raise ValueError(f"r_x and r_y must be positive, got {self.r_x}, {self.r_y}")

    @classmethod
    def from_intrinsics(cls, k: Intrinsics) -> "SolverParams":
        return cls(t_x=k.cx / k.fx, t_y=k.cy / k.fy, r_x=1.0 / k.fx, r_y=1.0 / k.fy)

    def to_intrinsics(self, width: int, height: int) -> Intrinsics:
        return Intrinsics(
            fx=1.0 / self.r_x,
            fy=1.0 / self.r_y,
            cx=self.t_x / self.r_x,
            cy=self.t_y / self.r_y,
            width=width,
            height=height,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.r_x, self.r_y])


@dataclass(frozen=True)
class LMConfig:
    """Levenberg-Marquardt schedule; values are configuration, not contract."""

    damping_init: float = 1e-3
    damping_factor: float = 10.0
    damping_max: float = 1e16
    max_iter: int = 200
    tol_abs: float = 1e-14
    tol_step: float = 1e-12
    condition_ratio: float = 1e-8


@dataclass(frozen=True)
class SolveReport:
    """Solve outcome: recovered intrinsics plus convergence diagnostics."""

    intrinsics: Intrinsics
    final_residual_norm: float
    iterations: int
    converged: bool
    condition_warning: bool


def canonical_params(width: int, height: int, fov_deg: float = 60.0) -> SolverParams:
    """Initialization from the canonical prior: given FoV, centered principal point."""
    f = focal_from_fov(fov_deg, max(width, height))
    return SolverParams(
        t_x=(width / 2.0) / f, t_y=(height / 2.0) / f, r_x=1.0 / f, r_y=1.0 / f
    )


def coefficients_from_constraint(c: DistanceConstraint) -> ConstraintCoefficients:
    """Constants a1..a5 of the constraint's re-parameterized equation."""
    a2 = c.d2 - c.d1
    return ConstraintCoefficients(
        a1=c.d1 * c.u1 - c.d2 * c.u2,
        a2=a2,
        a3=c.d1 * c.v1 - c.d2 * c.v2,
        a4=a2,
        a5=(c.d1 - c.d2) ** 2 - c.distance**2,
    )


def constraint_residual(coef: ConstraintCoefficients, params: SolverParams) -> float:
    """Left-hand side of the constraint equation; zero iff exactly satisfied."""
    sx = coef.a1 * params.r_x + coef.a2 * params.t_x
    sy = coef.a3 * params.r_y + coef.a4 * params.t_y
    return sx * sx + sy * sy + coef.a5


def constraint_gradient(coef: ConstraintCoefficients, params: SolverParams) -> np.ndarray:
    """Gradient of the residual w.r.t. (t_x, t_y, r_x, r_y)."""
    sx = coef.a1 * params.r_x + coef.a2 * params.t_x
    sy = coef.a3 * params.r_y + coef.a4 * params.t_y
    return np.array(
        [2.0 * sx * coef.a2, 2.0 * sy * coef.a4, 2.0 * sx * coef.a1, 2.0 * sy * coef.a3]
    )


def _coefficient_matrix(constraints: list[DistanceConstraint]) -> tuple[np.ndarray, np.ndarray]:
    """Stack coefficients into an (N, 5) matrix plus per-row weights 1/L^2."""
    rows = np.empty((len(constraints), 5))
    weights = np.empty(len(constraints))
    for i, c in enumerate(constraints):
        coef = coefficients_from_constraint(c)
        rows[i] = (coef.a1, coef.a2, coef.a3, coef.a4, coef.a5)
        weights[i] = 1.0 / c.distance**2
    return rows, weights


def _residuals_and_jacobian(
    theta: np.ndarray, rows: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    t_x, t_y, r_x, r_y = theta
    sx = rows[:, 0] * r_x + rows[:, 1] * t_x
    sy = rows[:, 2] * r_y + rows[:, 3] * t_y
    f = (sx * sx + sy * sy + rows[:, 4]) * weights
    jac = np.stack(
        [
            2.0 * sx * rows[:, 1],
            2.0 * sy * rows[:, 3],
            2.0 * sx * rows[:, 0],
            2.0 * sy * rows[:, 2],
        ],
        axis=1,
    ) * weights[:, None]
    return f, jac


def _huber_weights(f: np.ndarray, delta: float | None) -> tuple[np.ndarray, float]:
    """IRLS weights for the Huber loss; delta=None derives a robust scale."""
    if delta is None:
        mad = float(np.median(np.abs(f)))
        delta = 1.345 * mad / 0.6745
    absf = np.abs(f)
    w = np.ones_like(f)
    big = absf > delta
    with np.errstate(divide="ignore", invalid="ignore"):
        w[big] = delta / absf[big]
    return w, delta


def _rank_and_condition(jac: np.ndarray) -> tuple[int, bool]:
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[0] == 0.0:
        return 0, True
    tol = sv[0] * max(jac.shape) * np.finfo(np.float64).eps
    rank = int((sv > tol).sum())
    return rank, bool(sv[-1] < 1e-8 * sv[0])


def _solve_lm(
    constraints: list[DistanceConstraint],
    init: SolverParams,
    width: int,
    height: int,
    robust: bool,
    huber_delta: float | None,
    config: LMConfig,
) -> SolveReport:
    rows, weights = _coefficient_matrix(constraints)
    theta = init.as_array()
    mu = config.damping_init
    iterations = 0
    converged = False

    f, jac = _residuals_and_jacobian(theta, rows, weights)
    for it in range(config.max_iter):
        if robust:
            rw, _ = _huber_weights(f, huber_delta)
            sqrt_w = np.sqrt(rw)
            fw, jw = f * sqrt_w, jac * sqrt_w[:, None]
        else:
            fw, jw = f, jac
        if float(np.linalg.norm(fw)) < config.tol_abs:
            converged = True
            break
        iterations = it + 1

        jtj = jw.T @ jw
        grad = jw.T @ fw
        scale = np.diag(np.diag(jtj))
        try:
            step = np.linalg.solve(jtj + mu * scale, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jtj + mu * scale, -grad, rcond=None)[0]

        candidate = theta + step
        cost = float(fw @ fw)
        accepted = False
        if candidate[2] > 0.0 and candidate[3] > 0.0:
            f_new, jac_new = _residuals_and_jacobian(candidate, rows, weights)
            if robust:
                new_cost = float((f_new * rw) @ f_new)
            else:
                new_cost = float(f_new @ f_new)
            if math.isfinite(new_cost) and new_cost < cost:
                accepted = True
        if accepted:
            theta = candidate
            f, jac = f_new, jac_new
            mu /= config.damping_factor
            if float(np.linalg.norm(step)) < config.tol_step:
                converged = True
                break
        else:
            mu *= config.damping_factor
            if mu > config.damping_max:
                break

    rank, condition_warning = _rank_and_condition(jac)
    if rank < 4:
        raise DegenerateConstraintsError(
            "constraint set leaves some intrinsic parameters unobservable "
            f"(Jacobian rank {rank} < 4; e.g. all pairs share equal depths)"
        )
    params = SolverParams(*theta)
    return SolveReport(
        intrinsics=params.to_intrinsics(width, height),
        final_residual_norm=float(np.linalg.norm(f)),
        iterations=iterations,
        converged=converged,
        condition_warning=condition_warning,
    )


def solve_minimal(
    constraints: list[DistanceConstraint],
    width: int,
    height: int,
    init: SolverParams | None = None,
    config: LMConfig | None = None,
) -> SolveReport:
    """Solve intrinsics from exactly 4 distance constraints."""
    if len(constraints) != 4:
        raise ValueError(f"minimal solve needs exactly 4 constraints, got {len(constraints)}")
    return _solve_lm(
        list(constraints),
        init if init is not None else canonical_params(width, height),
        width,
        height,
        robust=False,
        huber_delta=None,
        config=config if config is not None else LMConfig(),
    )


def solve_overdetermined(
    constraints: list[DistanceConstraint],
    width: int,
    height: int,
    init: SolverParams | None = None,
    loss: str = "squared",
    huber_delta: float | None = None,
    config: LMConfig | None = None,
) -> SolveReport:
    """Solve intrinsics from N >= 4 constraints, optionally Huber-robustified.

    loss="huber" reweights residuals each iteration; ``huber_delta=None``
    derives the threshold from the median absolute residual, which is the
    practical choice when the noise scale is unknown.
    """
    if len(constraints) < 4:
        raise ValueError(f"need at least 4 constraints, got {len(constraints)}")
    if loss not in ("squared", "huber"):
        raise ValueError(f"loss must be 'squared' or 'huber', got {loss!r}")
    return _solve_lm(
        list(constraints),
        init if init is not None else canonical_params(width, height),
        width,
        height,
        robust=(loss == "huber"),
        huber_delta=huber_delta,
        config=config if config is not None else LMConfig(),
    )


def init_ladder(
    width: int,
    height: int,
    fovs_deg: tuple[float, ...] = (45.0, 65.0, 85.0, 105.0),
) -> list[SolverParams]:
    """Deterministic grid of initializations spanning per-axis FoV combinations."""
    inits = []
    for fov_x in fovs_deg:
        for fov_y in fovs_deg:
            fx = focal_from_fov(fov_x, width)
            fy = focal_from_fov(fov_y, height)
            inits.append(
                SolverParams(
                    t_x=(width / 2.0) / fx, t_y=(height / 2.0) / fy,
                    r_x=1.0 / fx, r_y=1.0 / fy,
                )
            )
    return inits


def enumerate_solutions(
    constraints: list[DistanceConstraint],
    width: int,
    height: int,
    inits: list[SolverParams] | None = None,
    residual_tol: float = 1e-10,
    config: LMConfig | None = None,
) -> list[SolveReport]:
    """All distinct (near-)exact solutions reachable from a ladder of starts.

    Four constraints form a square polynomial system which can have several
    real solutions; this runs the solver from each initialization and
    keeps the distinct endpoints whose scaled residual norm is below
    ``residual_tol``. Callers should apply their own plausibility prior
    (FoV range, principal point near the image center) to the result; a
    constraint set is only trustworthy when exactly one solution survives.
    """
    if inits is None:
        inits = init_ladder(width, height)
    found: list[SolveReport] = []
    for init in inits:
        report = _solve_lm(
            list(constraints),
            init,
            width,
            height,
            robust=False,
            huber_delta=None,
            config=config if config is not None else LMConfig(),
        )
        if report.final_residual_norm >= residual_tol:
            continue
        k = report.intrinsics
        duplicate = any(
            math.isclose(k.fx, other.intrinsics.fx, rel_tol=1e-5)
            and math.isclose(k.fy, other.intrinsics.fy, rel_tol=1e-5)
            and math.isclose(k.cx, other.intrinsics.cx, rel_tol=1e-5, abs_tol=1e-6)
            and math.isclose(k.cy, other.intrinsics.cy, rel_tol=1e-5, abs_tol=1e-6)
            for other in found
        )
        if not duplicate:
            found.append(report)
    return found
