"""Differentiable losses: scale-invariant log depth, incidence cosine, Chamfer.

Every loss returns its value together with analytic gradients with respect
to the differentiated inputs; the combined objective chains them so that
gradients reach the depth grid through both the log-depth term and the
point-cloud term, and reach the residual incidence field through both the
cosine term and the point-cloud term.

Conventions: natural log in the depth loss; the cosine term is implemented
as mean(1 - cos) so that 0 is optimal and it adds positively to the total;
rays are unit-normalized only here, immediately before the dot product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .camera import DepthMap, PointCloud
from .errors import EmptyCloudError, EmptyOverlapError, ShapeMismatchError
from .incidence import IncidenceField, compose_residual, unproject_with_field

# Below this size the all-pairs path is faster than building a k-d tree.
BRUTE_FORCE_LIMIT = 500


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined objective; lam mixes the log-depth variance term."""

    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1.0
    lam: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma", "lam"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.alpha == 0.0 and self.beta == 0.0 and self.gamma == 0.0:
            raise ValueError("at least one of alpha, beta, gamma must be positive")


@dataclass(frozen=True)
class LossValue:
    """A scalar loss plus per-input gradient arrays keyed by input name."""

    value: float
    gradients: dict[str, np.ndarray]


def silog_loss(pred: DepthMap, target: DepthMap, lam: float = 0.5) -> LossValue:
    """Scale-invariant log loss (1/n) sum(e_i^2) - (lam/n^2) (sum e_i)^2.

    e_i = log(pred_i) - log(target_i) over jointly valid pixels. At lam=1
    the loss is invariant to a global depth scale; at lam=0 it is the mean
    squared log error. Gradient w.r.t. pred is returned as a full grid,
    zero at pixels outside the joint validity mask.
    """
    if pred.values.shape != target.values.shape:
        raise ShapeMismatchError(
            f"depth shapes differ: {pred.values.shape} vs {target.values.shape}"
        )
    joint = pred.valid & target.valid
    n = int(joint.sum())
    if n == 0:
        raise EmptyOverlapError("no jointly valid pixels")
    d = pred.values[joint]
    e = np.log(d) - np.log(target.values[joint])
    total = float(e.sum())
    value = float(e @ e) / n - lam * total * total / (n * n)
    grad = np.zeros_like(pred.values)
    grad[joint] = (2.0 / n) * e / d - (2.0 * lam / (n * n)) * total / d
    return LossValue(value=value, gradients={"depth": grad})


def cosine_incidence_loss(
    res: IncidenceField, cano: IncidenceField, target: IncidenceField
) -> LossValue:
    """Mean (1 - cos angle) between the composed field and the target field.

    The prediction is a residual field relative to the canonical field;
    composition multiplies the x and y components. Both the composed ray
    and the target ray are unit-normalized before the dot product. The
    gradient is w.r.t. the residual components (z slot zero).
    """
    if res.rays.shape != target.rays.shape:
        raise ShapeMismatchError(
            f"field shapes differ: {res.rays.shape} vs {target.rays.shape}"
        )
    composed = compose_residual(res, cano)
    c = composed.rays
    t = target.rays
    # z=1 form guarantees |ray| >= 1, so normalization never divides by zero
    cn = np.sqrt((c * c).sum(axis=2))
    tn = np.sqrt((t * t).sum(axis=2))
    cos = (c * t).sum(axis=2) / (cn * tn)
    n = cos.size
    value = float((1.0 - cos).mean())

    t_hat = t / tn[..., None]
    c_hat = c / cn[..., None]
    dcos_dc = (t_hat - cos[..., None] * c_hat) / cn[..., None]
    grad = np.zeros_like(res.rays)
    grad[..., 0] = -dcos_dc[..., 0] * cano.x / n
    grad[..., 1] = -dcos_dc[..., 1] * cano.y / n
    return LossValue(value=value, gradients={"field": grad})


def _nearest_squared(
    query: np.ndarray, reference: np.ndarray, method: str
) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to each query point's nearest reference.

    The k-d tree only selects the matching index; the squared distance is
    recomputed from the matched pair with the same arithmetic as the
    all-pairs path, so both methods return identical values away from ties.
    Ties resolve to the lowest reference index on the all-pairs path.
    """
    if method == "bruteforce":
        d2 = ((query[:, None, :] - reference[None, :, :]) ** 2).sum(axis=2)
        idx = np.argmin(d2, axis=1)
        return idx, d2[np.arange(len(query)), idx]
    if method == "kdtree":
        idx = cKDTree(reference).query(query)[1]
        diff = query - reference[idx]
        return idx, (diff * diff).sum(axis=1)
    raise ValueError(f"unknown nearest-neighbor method {method!r}")


def _pick_method(method: str, n: int, m: int) -> str:
    if method != "auto":
        return method
    return "bruteforce" if max(n, m) <= BRUTE_FORCE_LIMIT else "kdtree"


def chamfer_distance(p: PointCloud, q: PointCloud, method: str = "auto") -> LossValue:
    """Symmetric mean of squared nearest-neighbor distances between clouds.

    value = (1/|P|) sum_p min_q |p-q|^2 + (1/|Q|) sum_q min_p |q-p|^2.
    Gradients are returned for both clouds; each squared-distance term
    sends opposite gradients to the two endpoints of its matched pair.
    Matches are recomputed per evaluation.
    """
    if len(p) == 0 or len(q) == 0:
        raise EmptyCloudError("chamfer distance needs two non-empty clouds")
    pa, qa = p.points, q.points
    chosen = _pick_method(method, len(p), len(q))
    idx_pq, d2_pq = _nearest_squared(pa, qa, chosen)
    idx_qp, d2_qp = _nearest_squared(qa, pa, chosen)
    value = float(d2_pq.mean()) + float(d2_qp.mean())

    grad_p = 2.0 * (pa - qa[idx_pq]) / len(p)
    grad_q = np.zeros_like(qa)
    np.add.at(grad_q, idx_pq, -2.0 * (pa - qa[idx_pq]) / len(p))
    grad_q += 2.0 * (qa - pa[idx_qp]) / len(q)
    np.add.at(grad_p, idx_qp, -2.0 * (qa - pa[idx_qp]) / len(q))
    return LossValue(value=value, gradients={"points_p": grad_p, "points_q": grad_q})


def total_loss(
    pred_depth: DepthMap,
    gt_depth: DepthMap,
    res_field: IncidenceField,
    cano_field: IncidenceField,
    gt_field: IncidenceField,
    weights: LossWeights = LossWeights(),
    chamfer_method: str = "auto",
) -> LossValue:
    """alpha*silog + beta*cosine + gamma*chamfer between the induced clouds.

    The predicted cloud is the predicted depth unprojected through the
    composed field; the target cloud is the ground-truth depth unprojected
    through the ground-truth field. Gradients are returned w.r.t. the
    predicted depth grid and the residual field.
    """
    sil = silog_loss(pred_depth, gt_depth, weights.lam)
    cos = cosine_incidence_loss(res_field, cano_field, gt_field)
    value = weights.alpha * sil.value + weights.beta * cos.value
    grad_depth = weights.alpha * sil.gradients["depth"]
    grad_field = weights.beta * cos.gradients["field"]

    if weights.gamma != 0.0:
        composed = compose_residual(res_field, cano_field)
        cloud_pred = unproject_with_field(composed, pred_depth)
        cloud_gt = unproject_with_field(gt_field, gt_depth)
        cham = chamfer_distance(cloud_pred, cloud_gt, method=chamfer_method)
        value += weights.gamma * cham.value

        m = pred_depth.valid
        gp = weights.gamma * cham.gradients["points_p"]
        d = pred_depth.values[m]
        # point = depth * composed ray: depth moves the point along the ray,
        # the residual components scale x and y by depth * canonical component
        grad_depth[m] += (
            gp[:, 0] * composed.x[m] + gp[:, 1] * composed.y[m] + gp[:, 2]
        )
        grad_field[..., 0][m] += gp[:, 0] * d * cano_field.x[m]
        grad_field[..., 1][m] += gp[:, 1] * d * cano_field.y[m]

    return LossValue(value=float(value), gradients={"depth": grad_depth, "field": grad_field})
