"""Per-class hypersphere boundaries: margin loss, radius rule, open detection.

A class is stored as a hypersphere (centroid, radius). The margin loss pulls
positives inside the radius and pushes same-task negatives beyond radius +
margin; the radius itself starts from a quantile of negative distances and is
then learned. Detection declares a point known iff some sphere contains it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import DegenerateInputError, NumericalError, UsageError
from .geometry import nearest_rank_quantile

# radii (and the learnable margin) never drop below this
RADIUS_FLOOR = 1e-3

PROVENANCES = ("known", "pseudo")


@dataclass(frozen=True)
class Hypersphere:
    """One stored unit of class knowledge."""

    label: int
    centroid: np.ndarray
    radius: float
    task_of_origin: int
    provenance: str

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float))
        if self.radius <= 0.0:
            raise UsageError(f"radius must be positive, got {self.radius}")
        if self.provenance not in PROVENANCES:
            raise UsageError(f"provenance must be one of {PROVENANCES}")
        if not np.all(np.isfinite(self.centroid)):
            raise UsageError(f"non-finite centroid for label {self.label}")


@dataclass(frozen=True)
class MarginConfig:
    """Hyperparameters of the boundary loss and radius rule.

    The scale and regularizer defaults place the learned radius equilibrium
    around 0.6 on unit-norm embeddings, between the within-class tail and
    the nearest foreign class.
    """

    m: float = 0.5
    alpha: float = 8.0
    beta: float = 8.0
    lambda_r: float = 0.2
    sigma: float = 0.1

    def __post_init__(self):
        if self.m <= 0 or self.alpha <= 0 or self.beta <= 0:
            raise UsageError("margin and scale factors must be positive")
        if self.lambda_r < 0:
            raise UsageError("radius regularizer weight must be non-negative")
        if not 0.0 < self.sigma <= 1.0:
            raise UsageError("sigma must lie in (0, 1]")


def compute_centroid(embeddings) -> np.ndarray:
    """Arithmetic mean of the embeddings, one coordinate at a time."""
    arr = np.asarray(embeddings, dtype=float)
    if arr.size == 0:
        raise DegenerateInputError("centroid of an empty embedding list")
    return arr.mean(axis=0)


def init_radius(centroid, negatives, cfg: MarginConfig) -> float:
    """Quantile-rule radius: sigma-quantile of (distance to negative - m).

    Clamped below at RADIUS_FLOOR so a sphere never degenerates.
    """
    negatives = np.atleast_2d(np.asarray(negatives, dtype=float))
    if negatives.size == 0:
        raise DegenerateInputError("radius rule needs at least one negative")
    centroid = np.asarray(centroid, dtype=float)
    d = kernels.pairwise_dist(negatives, centroid[None, :])[:, 0]
    r = nearest_rank_quantile(d - cfg.m, cfg.sigma)
    return max(r, RADIUS_FLOOR)


def fallback_radius(centroid, positives) -> float:
    """Radius for a class with no negatives: twice the mean positive distance."""
    positives = np.atleast_2d(np.asarray(positives, dtype=float))
    if positives.size == 0:
        raise DegenerateInputError("fallback radius needs at least one positive")
    centroid = np.asarray(centroid, dtype=float)
    d = kernels.pairwise_dist(positives, centroid[None, :])[:, 0]
    return max(2.0 * float(d.mean()), RADIUS_FLOOR)


def _log1p_sum_exp(z):
    """Stable (log(1 + sum exp(z)), weights exp(z_i) / (1 + sum exp(z)))."""
    if z.size == 0:
        return 0.0, z
    m = max(0.0, float(np.max(z)))
    ez = np.exp(z - m)
    denom = np.exp(-m) + ez.sum()
    return m + float(np.log(denom)), ez / denom


def margin_loss(centroids, radii, margin, positives, negatives, cfg: MarginConfig):
    """Hypersphere margin loss averaged over classes, with exact gradients.

    Per class C (d = Euclidean distance from its centroid):

        lambda_r * r_C^2
        + (1/alpha) * log(1 + sum_{x+} exp( alpha * (d - r_C)))
        + (1/beta)  * log(1 + sum_{x-} exp(-beta  * (d - (r_C + margin))))

    ``positives``/``negatives`` are per-class lists of embedding matrices;
    a class may have an empty negative set (its log term is then log 1 = 0)
    but must have at least one positive. Returns

        (loss, grad_centroids, grad_radii, grad_margin)

    where the gradients are the analytic derivatives. Log-sum terms use
    max-shifted evaluation throughout.
    """
    centroids = np.asarray(centroids, dtype=float)
    radii = np.asarray(radii, dtype=float)
    n_classes = radii.shape[0]
    if centroids.shape[0] != n_classes or len(positives) != n_classes or len(negatives) != n_classes:
        raise UsageError("centroids, radii and per-class sample lists disagree on class count")
    if n_classes == 0:
        raise UsageError("margin loss needs at least one class")
    margin = float(margin)

    grad_c = np.zeros_like(centroids)
    grad_r = np.zeros_like(radii)
    grad_m = 0.0
    total = 0.0
    for c in range(n_classes):
        pos = np.atleast_2d(np.asarray(positives[c], dtype=float))
        if pos.size == 0:
            raise UsageError(f"class index {c} has no positive samples")
        r = float(radii[c])
        total += cfg.lambda_r * r * r
        grad_r[c] += 2.0 * cfg.lambda_r * r

        dp = kernels.pairwise_dist(pos, centroids[c][None, :])[:, 0]
        val, w = _log1p_sum_exp(cfg.alpha * (dp - r))
        total += val / cfg.alpha
        grad_r[c] -= w.sum()
        safe = np.where(dp > 0.0, dp, 1.0)
        coef = np.where(dp > 0.0, w / safe, 0.0)
        grad_c[c] += coef @ (centroids[c][None, :] - pos)

        neg = np.asarray(negatives[c], dtype=float)
        if neg.size:
            neg = np.atleast_2d(neg)
            dn = kernels.pairwise_dist(neg, centroids[c][None, :])[:, 0]
            val, w = _log1p_sum_exp(-cfg.beta * (dn - (r + margin)))
            total += val / cfg.beta
            grad_r[c] += w.sum()
            grad_m += w.sum()
            safe = np.where(dn > 0.0, dn, 1.0)
            coef = np.where(dn > 0.0, w / safe, 0.0)
            grad_c[c] -= coef @ (centroids[c][None, :] - neg)

        if not np.isfinite(total):
            raise NumericalError(f"non-finite margin loss at class index {c}")

    loss = total / n_classes
    grad_c /= n_classes
    grad_r /= n_classes
    grad_m /= n_classes
    return loss, grad_c, grad_r, grad_m


@dataclass(frozen=True)
class Detection:
    """Outcome of open detection for one point.

    ``label`` is the winning class or None for unknown; the nearest_* fields
    always describe the globally nearest centroid regardless of containment.
    """

    label: int | None
    nearest_label: int
    nearest_distance: float
    nearest_radius: float


def _sphere_arrays(spheres):
    if not spheres:
        raise UsageError("empty hypersphere space")
    ordered = sorted(spheres, key=lambda s: s.label)
    centroids = np.stack([s.centroid for s in ordered])
    radii = np.array([s.radius for s in ordered], dtype=float)
    labels = [s.label for s in ordered]
    return ordered, centroids, radii, labels


def detect_batch(spheres, xs) -> list[Detection]:
    """Open detection for a batch of points.

    A point is known iff it lies inside at least one sphere; among containing
    spheres the nearest centroid wins, ties toward the lower label.
    """
    _, centroids, radii, labels = _sphere_arrays(spheres)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    chosen, nearest, nearest_dist, _ = kernels.detect_batch(xs, centroids, radii)
    out = []
    for i in range(xs.shape[0]):
        win = None if chosen[i] == kernels.NO_INDEX else labels[chosen[i]]
        j = nearest[i]
        out.append(Detection(win, labels[j], float(nearest_dist[i]), float(radii[j])))
    return out


def detect(spheres, x) -> Detection:
    """Single-point :func:`detect_batch`."""
    return detect_batch(spheres, np.asarray(x, dtype=float)[None, :])[0]


def openness_scores(spheres, xs) -> np.ndarray:
    """Signed boundary slack min_C (d(x, c_C) - r_C) per point.

    Non-positive exactly when the point lies inside some sphere, so the sign
    agrees with the detect unknown flag; the magnitude gives a continuous
    ranking for threshold-free metrics.
    """
    _, centroids, radii, _ = _sphere_arrays(spheres)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    _, _, _, openness = kernels.detect_batch(xs, centroids, radii)
    return openness


def openness_score(spheres, x) -> float:
    return float(openness_scores(spheres, np.asarray(x, dtype=float)[None, :])[0])
