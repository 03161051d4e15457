"""Latent-space partitioning: one-step Lloyd K-means, diagonal-Gaussian
cluster parameter estimation, max-likelihood assignment, and sampling
from an assigned cluster.

Cluster state is the triple (means, diagonal precisions, hard
assignments) plus mixing weights estimated from counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Per-dimension sample variances below this are floored before inversion
# to a precision, so collapsed clusters never yield infinite precision.
VARIANCE_FLOOR = 1e-6


@dataclass
class ClusterModel:
    means: np.ndarray        # (K, Z)
    precisions: np.ndarray   # (K, Z), diagonal, entries >= 1/VARIANCE_FLOOR^-1 bound
    assignments: np.ndarray  # (M,) hard one-of-K indices for the fitted buffer
    weights: np.ndarray      # (K,) simplex
    mode: str = "kmeans"     # {"kmeans", "gmm-hard"}: gmm-hard adds log-weight term
    repaired: bool = False   # True when degenerate clusters were patched
    degenerate: list = field(default_factory=list)  # cluster indices that hit the floor

    @property
    def k(self) -> int:
        return self.means.shape[0]

    def validate(self):
        if not np.all(np.isfinite(self.means)) or not np.all(np.isfinite(self.precisions)):
            raise ValueError("non-finite cluster parameters")
        if np.any(self.precisions <= 0):
            raise ValueError("precisions must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixing weights must sum to 1")


def init_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed K centers at buffer points by d^2-weighted sampling.

    First center uniform, each next one drawn with probability proportional
    to squared distance from the nearest chosen center; deterministic per
    rng state.
    """
    if points.shape[0] < k:
        raise ValueError(f"need at least {k} points to seed {k} centers")
    centers = [points[rng.integers(points.shape[0])]]
    for _ in range(k - 1):
        d2 = ((points[:, None, :] - np.asarray(centers)[None, :, :]) ** 2
              ).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(points[rng.integers(points.shape[0])])
        else:
            centers.append(points[rng.choice(points.shape[0], p=d2 / total)])
    return np.asarray(centers, dtype=np.float64).copy()


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def kmeans_step(points: np.ndarray, centers: np.ndarray):
    """Exactly one Lloyd iteration.

    Returns ``(new_centers, assignments, repaired)``. An emptied cluster is
    re-seeded at the point farthest from its stale center (deterministic
    repair) and flagged.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    k = centers.shape[0]
    if k < 2:
        raise ValueError("need at least 2 clusters")
    if points.shape[0] < k:
        raise ValueError("fewer points than clusters")

    assignments = _nearest(points, centers)
    new_centers = centers.copy()
    repaired = False
    for j in range(k):
        mask = assignments == j
        if mask.any():
            new_centers[j] = points[mask].mean(axis=0)
        else:
            far = np.argmax(((points - centers[j]) ** 2).sum(axis=1))
            new_centers[j] = points[far]
            repaired = True
    if repaired:
        assignments = _nearest(points, new_centers)
    return new_centers, assignments, repaired


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100):
    """Standalone Lloyd K-means to convergence (baseline use only)."""
    centers = init_centers(points, k, rng)
    assignments = _nearest(points, centers)
    for _ in range(max_iter):
        centers, new_assignments, _ = kmeans_step(points, centers)
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return centers, assignments


def estimate_cluster_params(points: np.ndarray, assignments: np.ndarray,
                            mode: str = "kmeans") -> ClusterModel:
    """Per-cluster mean, floored diagonal precision (unbiased variance) and
    count-based mixing weight from hard assignments."""
    points = np.asarray(points, dtype=np.float64)
    assignments = np.asarray(assignments)
    m, z = points.shape
    k = int(assignments.max()) + 1
    means = np.zeros((k, z))
    precisions = np.zeros((k, z))
    weights = np.zeros(k)
    degenerate = []
    for j in range(k):
        member = points[assignments == j]
        count = member.shape[0]
        weights[j] = count / m
        if count == 0:
            # caller should have repaired; fall back to global stats
            member = points
            count = m
            degenerate.append(j)
        means[j] = member.mean(axis=0)
        if count >= 2:
            var = member.var(axis=0, ddof=1)
        else:
            var = np.zeros(z)
        if np.any(var < VARIANCE_FLOOR) and j not in degenerate:
            degenerate.append(j)
        precisions[j] = 1.0 / np.maximum(var, VARIANCE_FLOOR)
    model = ClusterModel(means, precisions, assignments.copy(), weights,
                         mode=mode, degenerate=degenerate)
    model.validate()
    return model


def log_density(z: np.ndarray, model: ClusterModel) -> np.ndarray:
    """Per-cluster diagonal-Gaussian log densities, shape (K,) for one point
    or (N, K) for a batch."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    diff = z[:, None, :] - model.means[None, :, :]           # (N, K, Z)
    tau = model.precisions[None, :, :]
    logs = 0.5 * (np.log(tau) - np.log(2.0 * np.pi) - tau * diff * diff).sum(axis=2)
    return logs


def assign_max_likelihood(z: np.ndarray, model: ClusterModel):
    """Index of the most likely Gaussian component for each latent point.

    In gmm-hard mode the log mixing weight joins the score; ties break to
    the lowest index (argmax on exact float comparison).
    """
    scores = log_density(z, model)
    if model.mode == "gmm-hard":
        with np.errstate(divide="ignore"):
            scores = scores + np.log(model.weights)[None, :]
    idx = np.argmax(scores, axis=1)
    if np.asarray(z).ndim == 1:
        return int(idx[0])
    return idx


def sample_assigned(model: ClusterModel, k: int, count: int,
                    rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws from cluster k's Gaussian, deterministic per rng."""
    if not 0 <= k < model.k:
        raise ValueError(f"cluster index {k} out of range")
    std = 1.0 / np.sqrt(model.precisions[k])
    return model.means[k] + std * rng.standard_normal((count, model.means.shape[1]))


def within_cluster_ss(points: np.ndarray, centers: np.ndarray,
                      assignments: np.ndarray) -> float:
    return float(((points - centers[assignments]) ** 2).sum())
