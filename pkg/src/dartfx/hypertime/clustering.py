"""
Gaussian mixtures over hypertime vectors.

Two backends share one EM core:

- ``em``: k-means++-style seeding under the mixed metric, then EM.
- ``km``: Lloyd k-means under the mixed metric (Euclidean for value/space, cosine for every
  hypertime pair), covariances from the hard clusters, then EM.

Covariances are floored by clamping eigenvalues, which keeps each M-step a constrained maximizer
and therefore keeps the log-likelihood non-decreasing. Fits whose raw covariances fall under the
floor or exceed the condition ceiling are restarted with new seeds and finally refitted with
diagonal covariances.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from dartfx.hypertime.errors import ClusteringError
from dartfx.hypertime.model import DimensionLayout, FitConfig, FitLog, MixtureModel

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))
_EPS = 10.0 * np.finfo(float).eps

Initializer = Callable[[int], np.ndarray]


@dataclass
class _Fit:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    history: list[float]
    converged: bool
    min_eigenvalue: float
    max_condition: float
    unstable: bool


def gaussian_log_density(points: np.ndarray, mean: np.ndarray, covariance: np.ndarray) -> np.ndarray:
    """Log of the multivariate normal density at each row of ``points``."""
    points = np.atleast_2d(points)
    dim = mean.size
    if dim == 0:
        return np.zeros(points.shape[0])
    chol = linalg.cholesky(covariance, lower=True)
    solved = linalg.solve_triangular(chol, (points - mean).T, lower=True)
    mahalanobis = np.einsum("ij,ij->j", solved, solved)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (dim * _LOG_2PI + log_det + mahalanobis)


def floor_covariance(covariance: np.ndarray, floor: float) -> np.ndarray:
    """Clamp eigenvalues at ``floor``, keeping the eigenvectors."""
    covariance = 0.5 * (covariance + covariance.T)
    if np.count_nonzero(covariance - np.diag(np.diag(covariance))) == 0:
        return np.diag(np.maximum(np.diag(covariance), floor))
    values, vectors = linalg.eigh(covariance)
    floored = (vectors * np.maximum(values, floor)) @ vectors.T
    return 0.5 * (floored + floored.T)


def _eigen_stats(covariance: np.ndarray) -> tuple[float, float]:
    if not np.all(np.isfinite(covariance)):
        return float("nan"), float("inf")
    values = linalg.eigvalsh(0.5 * (covariance + covariance.T))
    smallest, largest = float(values[0]), float(values[-1])
    condition = largest / smallest if smallest > 0 else float("inf")
    return smallest, condition


def detect_instability(
    model: MixtureModel | np.ndarray,
    floor: float = 1e-6,
    ceiling: float = 1e10,
) -> bool:
    """
    True if any covariance has an eigenvalue below ``floor`` or a condition number above ``ceiling``.

    For a fitted :class:`MixtureModel` the eigenvalue statistics recorded before flooring are used
    when available; otherwise (or for raw arrays of shape (n, D, D)) the matrices are inspected.
    """
    if isinstance(model, MixtureModel):
        log = model.fit_log
        if log.min_eigenvalue is not None and log.max_condition is not None:
            return not (log.min_eigenvalue >= floor and log.max_condition <= ceiling)
        covariances = model.covariances
    else:
        covariances = np.asarray(model, dtype=float)
        if covariances.ndim == 2:
            covariances = covariances[None]
    for covariance in covariances:
        smallest, condition = _eigen_stats(covariance)
        if not (smallest >= floor and condition <= ceiling):
            return True
    return False


def mixed_distances(points: np.ndarray, centers: np.ndarray, layout: DimensionLayout) -> np.ndarray:
    """Pairwise mixed distances, shape (len(points), len(centers))."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    linear = layout.linear_indices
    if linear:
        diff = points[:, None, linear] - centers[None, :, linear]
        total = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    else:
        total = np.zeros((points.shape[0], centers.shape[0]))
    for pair in layout.temporal_pairs:
        p = points[:, list(pair)]
        c = centers[:, list(pair)]
        norms = np.linalg.norm(p, axis=1)[:, None] * np.linalg.norm(c, axis=1)[None, :]
        dots = p @ c.T
        with np.errstate(divide="ignore", invalid="ignore"):
            cosine = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
        total = total + (1.0 - np.clip(cosine, -1.0, 1.0))
    return total


def mixed_distance(p: np.ndarray, q: np.ndarray, layout: DimensionLayout) -> float:
    """Euclidean distance over value and space plus ``1 - cos`` for each hypertime pair."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.size != q.size or p.size != layout.dimension:
        raise ClusteringError(f"vectors of length {p.size} and {q.size} do not match layout ({layout.dimension})")
    return float(mixed_distances(p[None], q[None], layout)[0, 0])


def _check_points(points: np.ndarray, layout: DimensionLayout, n_clusters: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ClusteringError("points must be a 2-D array of equal-length vectors")
    if points.shape[1] != layout.dimension:
        raise ClusteringError(f"points have {points.shape[1]} dimensions, layout describes {layout.dimension}")
    if points.shape[1] == 0:
        raise ClusteringError("cannot cluster zero-dimensional vectors")
    if points.shape[0] < n_clusters:
        raise ClusteringError(f"{points.shape[0]} points cannot support {n_clusters} clusters")
    if not np.all(np.isfinite(points)):
        raise ClusteringError("points contain non-finite values")
    return points


def _canonical(points: np.ndarray) -> np.ndarray:
    # sorting makes fits independent of the input order
    order = np.lexsort(points.T[::-1])
    return points[order]


def _normalize_pairs(centers: np.ndarray, layout: DimensionLayout) -> np.ndarray:
    centers = centers.copy()
    for pair in layout.temporal_pairs:
        sub = centers[:, list(pair)]
        norms = np.linalg.norm(sub, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        sub = np.where(norms[:, None] > 0, sub / safe[:, None], np.array([1.0, 0.0]))
        centers[:, list(pair)] = sub
    return centers


def _plusplus(points: np.ndarray, layout: DimensionLayout, n: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(points.shape[0]))]
    nearest = mixed_distances(points, points[chosen], layout)[:, 0]
    for _ in range(1, n):
        weights = nearest**2
        total = weights.sum()
        if total > 0:
            index = int(rng.choice(points.shape[0], p=weights / total))
        else:
            free = np.setdiff1d(np.arange(points.shape[0]), chosen)
            index = int(rng.choice(free))
        chosen.append(index)
        nearest = np.minimum(nearest, mixed_distances(points, points[[index]], layout)[:, 0])
    return points[chosen].copy()


def kmeans_init(
    points: np.ndarray,
    layout: DimensionLayout,
    n: int,
    seed: int = 42,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Lloyd k-means under the mixed metric.

    Returns:
        tuple: ``(centers, assignments)``; centers have their hypertime pairs projected back to the
        unit circle and empty clusters are re-seeded from the point farthest from its center.
    """
    points = _check_points(points, layout, n)
    rng = np.random.default_rng(seed)
    centers = _normalize_pairs(_plusplus(points, layout, n, rng), layout)
    distances = mixed_distances(points, centers, layout)
    assignments = distances.argmin(axis=1)
    for iteration in range(max_iter):
        own = distances[np.arange(points.shape[0]), assignments].copy()
        updated = np.empty_like(centers)
        for k in range(n):
            members = assignments == k
            if members.any():
                updated[k] = points[members].mean(axis=0)
            else:
                farthest = int(own.argmax())
                updated[k] = points[farthest]
                assignments[farthest] = k
                own[farthest] = -1.0
        centers = _normalize_pairs(updated, layout)
        distances = mixed_distances(points, centers, layout)
        new_assignments = distances.argmin(axis=1)
        if np.array_equal(new_assignments, assignments):
            logger.debug("k-means converged after %d iterations", iteration + 1)
            break
        assignments = new_assignments
    return centers, assignments


def _seed_assignments(points: np.ndarray, layout: DimensionLayout, n: int, seed: int) -> np.ndarray:
    centers = _plusplus(points, layout, n, np.random.default_rng(seed))
    return mixed_distances(points, centers, layout).argmin(axis=1)


def _initial_parameters(
    points: np.ndarray, assignments: np.ndarray, cfg: FitConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = cfg.n_clusters
    dim = points.shape[1]
    spread = np.atleast_2d(np.cov(points, rowvar=False, bias=True)) if points.shape[0] > 1 else np.eye(dim)
    if cfg.diagonal:
        spread = np.diag(np.diag(spread))
    spread = floor_covariance(spread, cfg.eigen_floor)
    weights = np.empty(n)
    means = np.empty((n, dim))
    covariances = np.empty((n, dim, dim))
    for k in range(n):
        members = points[assignments == k]
        weights[k] = max(len(members), 1)
        means[k] = members.mean(axis=0) if len(members) else points[k % points.shape[0]]
        if len(members) > 1:
            cov = np.atleast_2d(np.cov(members, rowvar=False, bias=True))
            if cfg.diagonal:
                cov = np.diag(np.diag(cov))
            covariances[k] = floor_covariance(cov, cfg.eigen_floor)
        else:
            covariances[k] = spread
    return weights / weights.sum(), means, covariances


def _log_joint(points: np.ndarray, weights: np.ndarray, means: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    columns = [
        np.log(w) + gaussian_log_density(points, mu, cov)
        for w, mu, cov in zip(weights, means, covariances, strict=True)
    ]
    return np.column_stack(columns)


def _em(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig, assignments: np.ndarray) -> _Fit:
    count, dim = points.shape
    weights, means, covariances = _initial_parameters(points, assignments, cfg)
    history: list[float] = []
    converged = False
    smallest, condition = float("inf"), 1.0
    for iteration in range(cfg.max_iter):
        joint = _log_joint(points, weights, means, covariances)
        norm = logsumexp(joint, axis=1)
        history.append(float(norm.sum() / count))
        if iteration > 0 and abs(history[-1] - history[-2]) <= cfg.tol:
            converged = True
            break
        resp = np.exp(joint - norm[:, None])

        totals = resp.sum(axis=0) + _EPS
        weights = totals / totals.sum()
        means = (resp.T @ points) / totals[:, None]
        smallest, condition = float("inf"), 1.0
        covariances = np.empty((cfg.n_clusters, dim, dim))
        for k in range(cfg.n_clusters):
            diff = points - means[k]
            raw = (resp[:, k, None] * diff).T @ diff / totals[k]
            if cfg.diagonal:
                raw = np.diag(np.diag(raw))
            low, cond = _eigen_stats(raw)
            smallest = min(smallest, low) if np.isfinite(low) else float("nan")
            condition = max(condition, cond)
            covariances[k] = floor_covariance(raw, cfg.eigen_floor)
    else:
        joint = _log_joint(points, weights, means, covariances)
        history.append(float(logsumexp(joint, axis=1).sum() / count))

    unstable = not (smallest >= cfg.eigen_floor and condition <= cfg.condition_ceiling)
    return _Fit(weights, means, covariances, history, converged, smallest, condition, unstable)


def _to_model(fit: _Fit, layout: DimensionLayout, restarts: int, diagonal_fallback: bool) -> MixtureModel:
    log = FitLog(
        iterations=len(fit.history) - 1,
        log_likelihood=fit.history[-1],
        log_likelihood_history=fit.history,
        converged=fit.converged,
        restarts=restarts,
        diagonal_fallback=diagonal_fallback,
        unstable=fit.unstable,
        min_eigenvalue=fit.min_eigenvalue if np.isfinite(fit.min_eigenvalue) else None,
        max_condition=fit.max_condition if np.isfinite(fit.max_condition) else None,
    )
    return MixtureModel.from_arrays(fit.weights, fit.means, fit.covariances, layout, log)


def em_fit(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig) -> MixtureModel:
    """
    Fit ``cfg.n_clusters`` Gaussians by EM from a seeded k-means++-style start.

    Raises:
        ClusteringError: If there are fewer points than clusters or the points do not match the layout.
    """
    points = _canonical(_check_points(points, layout, cfg.n_clusters))
    fit = _em(points, layout, cfg, _seed_assignments(points, layout, cfg.n_clusters, cfg.seed))
    return _to_model(fit, layout, restarts=0, diagonal_fallback=False)


def _fit_stable(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig, initializer: Initializer) -> MixtureModel:
    for attempt in range(cfg.max_restarts + 1):
        fit = _em(points, layout, cfg, initializer(cfg.seed + attempt))
        if not fit.unstable:
            if attempt:
                logger.info("Mixture stabilized after %d restart(s)", attempt)
            return _to_model(fit, layout, restarts=attempt, diagonal_fallback=False)
        logger.debug(
            "Unstable fit (seed %d): min eigenvalue %.3g, condition %.3g",
            cfg.seed + attempt,
            fit.min_eigenvalue,
            fit.max_condition,
        )
    logger.warning(
        "Mixture with %d components still unstable after %d restarts; using diagonal covariances",
        cfg.n_clusters,
        cfg.max_restarts,
    )
    diagonal = cfg.model_copy(update={"diagonal": True})
    fit = _em(points, layout, diagonal, initializer(cfg.seed))
    return _to_model(fit, layout, restarts=cfg.max_restarts, diagonal_fallback=True)


def em_fit_stable(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig) -> MixtureModel:
    """EM with restarts on instability and a diagonal-covariance fallback."""
    points = _canonical(_check_points(points, layout, cfg.n_clusters))
    return _fit_stable(
        points, layout, cfg, lambda seed: _seed_assignments(points, layout, cfg.n_clusters, seed)
    )


def km_fit(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig) -> MixtureModel:
    """Mixed-metric k-means initialization followed by stable EM refinement."""
    points = _canonical(_check_points(points, layout, cfg.n_clusters))
    return _fit_stable(
        points,
        layout,
        cfg,
        lambda seed: kmeans_init(points, layout, cfg.n_clusters, seed, cfg.kmeans_max_iter)[1],
    )


def fit_mixture(points: np.ndarray, layout: DimensionLayout, cfg: FitConfig) -> MixtureModel:
    """Dispatch to the configured backend."""
    if cfg.backend == "km":
        return km_fit(points, layout, cfg)
    return em_fit_stable(points, layout, cfg)
