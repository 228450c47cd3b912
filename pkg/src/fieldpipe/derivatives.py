"""Meshless spatial derivatives via RBF-FD stencils.

Each target point gets a stencil of nearest source points; derivative (and
evaluation) weights come from a local Gaussian-RBF system augmented with a
constant and linear polynomial block, so affine fields are differentiated
exactly.  The shape parameter is epsilon_scaling / d_max with d_max the
farthest stencil distance, which makes epsilonScaling dimensionless across
meshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .spatial import PointIndex

log = logging.getLogger(__name__)


class DerivativeError(Exception):
    pass


@dataclass(frozen=True)
class RbfFdSettings:
    epsilon_scaling: float = 1.0
    beta_scaling: float = 1.0  # slope of the added linear term; 0 drops it
    k_scaling: float = 1.0  # added constant term; 0 drops it
    log_eps: bool = False
    stencil_size: int | None = None  # default 32 in 3D, 12 in 2D

    def __post_init__(self):
        if self.epsilon_scaling <= 0:
            raise DerivativeError("epsilonScaling must be > 0")

    def resolved_stencil_size(self, dimension: int) -> int:
        if self.stencil_size is not None:
            return self.stencil_size
        return 32 if dimension == 3 else 12


@dataclass
class DerivativeStencil:
    """Weights that turn source samples into value/derivative at one point."""

    target: np.ndarray
    source_indices: np.ndarray
    value_weights: np.ndarray  # evaluation of the field itself
    dx_weights: np.ndarray
    dy_weights: np.ndarray
    dz_weights: np.ndarray

    def apply(self, samples: np.ndarray, which: str) -> np.ndarray:
        w = getattr(self, f"{which}_weights")
        return w @ samples[self.source_indices]


def build_stencil(target, source_points, settings: RbfFdSettings,
                  index: PointIndex | None = None,
                  dimension: int = 3) -> DerivativeStencil:
    """RBF-FD weights for value, d/dx, d/dy, d/dz at one target point."""
    target = np.asarray(target, dtype=np.float64)
    src = np.asarray(source_points, dtype=np.float64)
    k = settings.resolved_stencil_size(dimension)
    if k < dimension + 2:
        raise DerivativeError(
            f"stencil size {k} too small (need >= {dimension + 2})"
        )
    if k > len(src):
        raise DerivativeError(
            f"stencil size {k} exceeds source point count {len(src)}"
        )
    if index is None:
        index = PointIndex(src)
    idx, dist = index.knn(target, k)
    d_max = float(dist[-1])
    if d_max <= 0.0:
        raise DerivativeError(
            f"degenerate stencil at {target}: all sources coincident"
        )
    eps = settings.epsilon_scaling / d_max
    if settings.log_eps:
        log.info("stencil at %s: [min distance %g, max distance %g, "
                 "epsilon %g]", target, float(dist[0]), d_max, eps)

    c = src[idx] - target  # shifted so the target sits at the origin
    diff = c[:, None, :] - c[None, :, :]
    phi = np.exp(-(eps ** 2) * np.einsum("ijk,ijk->ij", diff, diff))

    poly_cols = []
    poly_rhs_rows = []  # rows: value, dx, dy, dz per column
    if settings.k_scaling != 0.0:
        poly_cols.append(np.full(k, settings.k_scaling))
        poly_rhs_rows.append([settings.k_scaling, 0.0, 0.0, 0.0])
    if settings.beta_scaling != 0.0:
        for d in range(3):
            # A coordinate with no spread (coplanar stencil) would add an
            # all-zero column and make the system singular; skip it.
            if np.abs(c[:, d]).max() < 1e-12 * d_max:
                continue
            poly_cols.append(settings.beta_scaling * c[:, d])
            row = [0.0, 0.0, 0.0, 0.0]
            row[1 + d] = settings.beta_scaling
            poly_rhs_rows.append(row)
    m = len(poly_cols)
    a = np.zeros((k + m, k + m))
    a[:k, :k] = phi
    if m:
        p = np.stack(poly_cols, axis=1)
        a[:k, k:] = p
        a[k:, :k] = p.T

    r0sq = np.einsum("ij,ij->i", c, c)
    phi0 = np.exp(-(eps ** 2) * r0sq)
    rhs = np.zeros((k + m, 4))
    rhs[:k, 0] = phi0
    for d in range(3):
        rhs[:k, 1 + d] = 2.0 * eps ** 2 * c[:, d] * phi0
    if m:
        rhs[k:] = np.asarray(poly_rhs_rows)

    try:
        w = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        a[:k, :k] += np.eye(k) * (1e-12 * np.trace(phi) / k)
        try:
            w = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            raise DerivativeError(
                f"singular RBF-FD system at {target}; try a smaller "
                "epsilonScaling"
            ) from None
    return DerivativeStencil(
        target=target, source_indices=idx,
        value_weights=w[:k, 0], dx_weights=w[:k, 1],
        dy_weights=w[:k, 2], dz_weights=w[:k, 3],
    )


class StencilSet:
    """Stencils for a fixed (source cloud, target set, settings) triple.

    Built once and reused across time steps; application is a dense
    gather-and-dot per target, deterministic in target order.
    """

    def __init__(self, source_points, target_points, settings: RbfFdSettings,
                 dimension: int = 3):
        self.source_points = np.asarray(source_points, dtype=np.float64)
        self.target_points = np.asarray(target_points, dtype=np.float64)
        index = PointIndex(self.source_points)
        self.stencils = [
            build_stencil(t, self.source_points, settings, index=index,
                          dimension=dimension)
            for t in self.target_points
        ]

    def _apply(self, samples: np.ndarray, which: str) -> np.ndarray:
        samples = np.asarray(samples)
        out = np.empty((len(self.stencils),) + samples.shape[1:],
                       dtype=samples.dtype)
        for i, st in enumerate(self.stencils):
            out[i] = st.apply(samples, which)
        return out

    def evaluate(self, samples):
        """Field values at the target points (identity operator)."""
        return self._apply(samples, "value")

    def gradient(self, scalar_samples) -> np.ndarray:
        """(n_targets, 3) gradient of a scalar field given as (n_src, 1)."""
        s = np.asarray(scalar_samples)
        if s.ndim == 2:
            if s.shape[1] != 1:
                raise DerivativeError(
                    f"gradient needs a scalar field, got {s.shape[1]} "
                    "components"
                )
            s = s[:, 0]
        return np.stack(
            [self._apply(s, w) for w in ("dx", "dy", "dz")], axis=1
        )

    def jacobian(self, vector_samples) -> np.ndarray:
        """(n_targets, 3, 3) with J[t, i, j] = d u_i / d x_j."""
        u = np.asarray(vector_samples)
        if u.ndim != 2 or u.shape[1] != 3:
            raise DerivativeError(
                f"vector field must be (n, 3), got {u.shape}"
            )
        cols = [self._apply(u, w) for w in ("dx", "dy", "dz")]
        return np.stack(cols, axis=2)

    def divergence(self, vector_samples) -> np.ndarray:
        jac = self.jacobian(vector_samples)
        return np.einsum("tii->t", jac)[:, None]

    def curl(self, vector_samples) -> np.ndarray:
        jac = self.jacobian(vector_samples)
        return np.stack([
            jac[:, 2, 1] - jac[:, 1, 2],
            jac[:, 0, 2] - jac[:, 2, 0],
            jac[:, 1, 0] - jac[:, 0, 1],
        ], axis=1)
