"""Aeroacoustic source-term filters: Lamb vector, Lighthill source term
(vector and scalar), and the noise-robust time derivative.

All spatial work is delegated to the RBF-FD stencils in derivatives.py so
the composition identities hold bit for bit: the Lighthill vector really is
gradient(u.u/2) + Lamb, and the scalar really is its divergence.
"""

from __future__ import annotations

import logging

import numpy as np

from .derivatives import StencilSet

log = logging.getLogger(__name__)


class AeroacousticError(Exception):
    pass


def lamb_vector(stencils: StencilSet, velocity: np.ndarray,
                vorticity: np.ndarray | None = None) -> np.ndarray:
    """L = omega x u at the stencil targets.

    velocity/vorticity are (n_src, 3) samples at the source points; if the
    vorticity is not supplied it is computed internally as curl(u).
    """
    u = _check_vector(velocity, "velocity")
    u_t = stencils.evaluate(u)
    if vorticity is None:
        w_t = stencils.curl(u)
    else:
        w_t = stencils.evaluate(_check_vector(vorticity, "vorticity"))
    return np.cross(w_t, u_t)


def lighthill_vector(stencils: StencilSet, velocity: np.ndarray,
                     vorticity: np.ndarray | None = None) -> np.ndarray:
    """div(T) = grad(u.u/2) + L, the incompressible Lighthill vector."""
    u = _check_vector(velocity, "velocity")
    kinetic = 0.5 * np.einsum("ij,ij->i", u, u)
    return stencils.gradient(kinetic) + lamb_vector(stencils, u, vorticity)


def lighthill_scalar(source_stencils: StencilSet, chain_stencils: StencilSet,
                     velocity: np.ndarray,
                     vorticity: np.ndarray | None = None) -> np.ndarray:
    """div(div(T)): divergence of the Lighthill vector, (n_targets, 1).

    The vector is first evaluated at the source points (source_stencils maps
    source -> source), then differentiated onto the targets.
    """
    vec = lighthill_vector(source_stencils, velocity, vorticity)
    return chain_stencils.divergence(vec)


# Noise-robust differentiator, order 5: first/last two steps of a run have
# no centered window and are dropped.
TIME_DERIV_HALF_WIDTH = 2
TIME_DERIV_WINDOW = 5


def time_derivative(window: np.ndarray, dt: float) -> np.ndarray:
    """Smooth noise-robust derivative of the centered sample.

    window holds 5 consecutive samples [q_-2, q_-1, q_0, q_1, q_2] along
    axis 0 (remaining axes arbitrary); exact on polynomials up to degree 2.
    """
    window = np.asarray(window)
    if window.shape[0] != TIME_DERIV_WINDOW:
        raise AeroacousticError(
            f"time derivative needs {TIME_DERIV_WINDOW} consecutive steps, "
            f"got {window.shape[0]}"
        )
    if not dt > 0.0:
        raise AeroacousticError(f"invalid step size {dt}")
    q_m2, q_m1, _, q_p1, q_p2 = window
    return (2.0 * (q_p1 - q_m1) + (q_p2 - q_m2)) / (8.0 * dt)


def check_uniform_dt(step_values, rel_tol: float = 1e-9) -> float:
    """Common step size of a schedule, or error if it is not uniform."""
    vals = np.asarray(step_values, dtype=np.float64)
    if len(vals) < 2:
        raise AeroacousticError("need at least two steps to form a step size")
    deltas = np.diff(vals)
    dt = float(deltas[0])
    if np.abs(deltas - dt).max() > rel_tol * abs(dt):
        raise AeroacousticError(
            f"non-uniform step size: deltas range "
            f"[{deltas.min():g}, {deltas.max():g}]"
        )
    return dt


def _check_vector(arr: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise AeroacousticError(f"{name} must be (n, 3), got {a.shape}")
    return a
