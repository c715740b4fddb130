"""Scattered-data interpolation: thin-plate splines and inverse distance weighting.

The TPS solves the saddle system

    [[K + lambda*I, P], [P^T, 0]] [w; a] = [z; 0]

with kernel phi(r) = r^2 log r (phi(0) = 0) and P = [1, x, y | covariates].
Coordinates are centered and scaled to unit RMS radius before assembly to
condition the solve; the transform is stored in the model, so coefficients
live in the transformed frame.  lambda = 0 interpolates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from satstack import kernels
from satstack.errors import DimensionMismatchError, NoPointsError, RankDeficientError


@dataclass
class TpsModel:
    knots: np.ndarray  # (n, 2) in the normalized frame
    weights: np.ndarray  # (n,)
    poly: np.ndarray  # (3 + n_cov,): a0, ax, ay, then covariate coefficients
    lam: float
    center: np.ndarray  # (2,)
    scale: float
    n_covariates: int

    def roughness(self) -> float:
        """Bending-energy seminorm w^T K w of the fitted surface."""
        k = _kernel_matrix(self.knots, self.knots)
        return float(self.weights @ k @ self.weights)


def _kernel_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return kernels.tps_kernel_matrix(
        np.ascontiguousarray(a[:, 0]),
        np.ascontiguousarray(a[:, 1]),
        np.ascontiguousarray(b[:, 0]),
        np.ascontiguousarray(b[:, 1]),
    )


def _normalize(points: np.ndarray):
    center = points.mean(axis=0)
    shifted = points - center
    rms = float(np.sqrt((shifted**2).sum(axis=1).mean()))
    scale = rms if rms > 0 else 1.0
    return shifted / scale, center, scale


def _poly_block(u: np.ndarray, covariates: np.ndarray | None) -> np.ndarray:
    cols = [np.ones(len(u)), u[:, 0], u[:, 1]]
    if covariates is not None:
        cols.extend(covariates[:, k] for k in range(covariates.shape[1]))
    return np.column_stack(cols)


def tps_fit(
    points,
    values,
    lam: float = 0.0,
    covariates=None,
) -> TpsModel:
    """Fit a thin-plate spline through (x, y) -> z samples.

    ``covariates``, when given, is an (n, k) array of per-point predictors
    entering the polynomial block as linear fixed effects.  Raises
    RankDeficientError for collinear knots or dependent covariates (after
    one ridge retry).
    """
    pts = np.asarray(points, dtype=np.float64)
    z = np.asarray(values, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionMismatchError("points must be an (n, 2) array")
    if z.shape != (pts.shape[0],):
        raise DimensionMismatchError("values length must match points")
    if lam < 0:
        raise DimensionMismatchError("lambda must be >= 0")
    cov = None
    if covariates is not None:
        cov = np.asarray(covariates, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.shape[0] != pts.shape[0]:
            raise DimensionMismatchError("covariate rows must match points")
    n = pts.shape[0]
    if n < 3:
        raise RankDeficientError("need at least 3 knots")

    u, center, scale = _normalize(pts)
    p = _poly_block(u, cov)
    if np.linalg.matrix_rank(p) < p.shape[1]:
        raise RankDeficientError("collinear knots or dependent covariates")

    k = _kernel_matrix(u, u)
    m = p.shape[1]
    a = np.zeros((n + m, n + m))
    a[:n, :n] = k + lam * np.eye(n)
    a[:n, n:] = p
    a[n:, :n] = p.T
    rhs = np.concatenate([z, np.zeros(m)])

    sol = _solve_saddle(a, rhs, k, n)
    return TpsModel(
        knots=u,
        weights=sol[:n],
        poly=sol[n:],
        lam=lam,
        center=center,
        scale=scale,
        n_covariates=0 if cov is None else cov.shape[1],
    )


def _solve_saddle(a, rhs, k, n):
    # phi(0) = 0 makes diag(K) identically zero; the retry ridge takes its
    # scale from the mean kernel magnitude instead
    ridge = 1e-12 * float(np.abs(k).mean())

    def attempt(mat):
        sol = np.linalg.solve(mat, rhs)
        resid = np.linalg.norm(mat @ sol - rhs)
        ref = np.linalg.norm(rhs) + np.linalg.norm(mat, ord=np.inf) * np.linalg.norm(sol)
        if not np.isfinite(sol).all() or resid > 1e-6 * max(ref, 1.0):
            raise np.linalg.LinAlgError("solution does not satisfy the system")
        return sol

    try:
        return attempt(a)
    except np.linalg.LinAlgError:
        retry = a.copy()
        retry[:n, :n] += ridge * np.eye(n)
        try:
            return attempt(retry)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(
                "saddle system is singular (collinear knots or dependent covariates)"
            ) from exc


def tps_predict(model: TpsModel, query, covariates=None) -> np.ndarray:
    """Evaluate a fitted TPS at query (x, y) points."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 2:
        raise DimensionMismatchError("query must be an (m, 2) array")
    if (covariates is None) != (model.n_covariates == 0):
        raise DimensionMismatchError(
            "covariates must be supplied iff the model was fit with covariates"
        )
    cov = None
    if covariates is not None:
        cov = np.asarray(covariates, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.shape != (q.shape[0], model.n_covariates):
            raise DimensionMismatchError("covariate shape must match query and model")
    uq = (q - model.center) / model.scale
    kq = _kernel_matrix(uq, model.knots)
    return kq @ model.weights + _poly_block(uq, cov) @ model.poly


@dataclass
class IdwModel:
    points: np.ndarray  # (n, 3): x, y, value
    power: float = 2.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise NoPointsError("IDW needs at least one (x, y, value) point")
        if not np.isfinite(pts).all():
            raise NoPointsError("IDW points must be finite")
        if not self.power > 0:
            raise NoPointsError("IDW power must be positive")
        self.points = pts


# queries closer than this (map units) to a data point return its value
IDW_SNAP_DIST = 1e-12


def idw_predict(model: IdwModel, query) -> np.ndarray:
    """Inverse-distance-weighted values at query points (convex combination)."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 2:
        raise DimensionMismatchError("query must be an (m, 2) array")
    pts = model.points
    if pts.shape[0] == 1:
        return np.full(q.shape[0], pts[0, 2])
    return kernels.idw_predict(
        np.ascontiguousarray(pts[:, 0]),
        np.ascontiguousarray(pts[:, 1]),
        np.ascontiguousarray(pts[:, 2]),
        np.ascontiguousarray(q[:, 0]),
        np.ascontiguousarray(q[:, 1]),
        float(model.power),
        IDW_SNAP_DIST,
    )
