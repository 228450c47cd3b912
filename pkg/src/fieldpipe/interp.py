"""Interpolation filters: Node2Cell, Cell2Node, inverse-distance (Shepard),
and local RBF (Wendland C2 blended by a modified Shepard scheme).

Node2Cell/Cell2Node treat values as loads: a cell collects the sum of its
node values, a node collects e/n from every adjacent cell.  Both therefore
conserve the total, and both require the target mesh to be a geometric copy
of the source mesh (same counts and coordinates, separate file).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import FieldQuantity, FieldStep, Mesh
from .spatial import PointIndex


class InterpError(Exception):
    pass


# Threshold below which a target point is treated as coincident with its
# nearest source point (the Shepard weight formula is singular at r=0).
COINCIDENT_REL_TOL = 1e-12


@dataclass(frozen=True)
class ShepardParams:
    exponent: float = 2.0
    num_neighbours: int = 8
    global_factor: float = 1.0

    def __post_init__(self):
        if self.num_neighbours < 1:
            raise InterpError("numNeighbours must be >= 1")


@dataclass(frozen=True)
class RbfParams:
    num_neighbours: int = 18  # N_q: points per local interpolant
    num_influence: int = 13  # N_w: blended local interpolants
    exponent: float = 2.0
    global_factor: float = 1.0
    use_elem_as_target: bool = False
    no_slip_wall: str | None = None

    def __post_init__(self):
        if self.num_influence > self.num_neighbours:
            raise InterpError(
                f"numNeighbours_weight ({self.num_influence}) must not exceed "
                f"numNeighbours ({self.num_neighbours})"
            )


def _require_defined_on(step: FieldStep, expected: str, filter_name: str):
    if step.quantity.defined_on != expected:
        raise InterpError(
            f"{filter_name} needs {expected}-defined input, got "
            f"{step.quantity.defined_on} ('{step.quantity.name}')"
        )


def check_relocation_meshes(source: Mesh, target: Mesh):
    """Node2Cell/Cell2Node move values within one geometry; the target mesh
    file must describe that same geometry."""
    if not source.same_geometry(target):
        raise InterpError(
            "Node2Cell/Cell2Node require the target mesh to be a clean copy "
            "of the source geometry (same node/element counts and "
            "coordinates)"
        )


def node_to_cell(step: FieldStep, mesh: Mesh, source_regions) -> dict[str, np.ndarray]:
    """Per cell: sum of its nodes' values, componentwise."""
    _require_defined_on(step, "NODE", "FieldInterpolation_Node2Cell")
    out = {}
    for region in source_regions:
        rn = mesh.region_nodes(region)
        pos = {int(n): i for i, n in enumerate(rn)}
        vals = step.values[region]
        cells = []
        for blk in mesh.region(region):
            local = np.vectorize(pos.__getitem__)(blk.connectivity)
            cells.append(vals[local].sum(axis=1))
        out[region] = (np.vstack(cells) if cells
                       else np.empty((0, step.quantity.components)))
    return out


def cell_to_node(step: FieldStep, mesh: Mesh, source_regions) -> dict[str, np.ndarray]:
    """Each node accumulates e/n over every adjacent source cell.

    Accumulation runs in ascending element order so results are
    deterministic bit for bit.
    """
    _require_defined_on(step, "CELL", "FieldInterpolation_Cell2Node")
    out = {}
    for region in source_regions:
        rn = mesh.region_nodes(region)
        pos = {int(n): i for i, n in enumerate(rn)}
        vals = step.values[region]
        acc = np.zeros((len(rn), step.quantity.components), dtype=vals.dtype)
        off = 0
        for blk in mesh.region(region):
            share = vals[off:off + blk.num_elements] / blk.etype.num_nodes
            local = np.vectorize(pos.__getitem__)(blk.connectivity)
            for e in range(blk.num_elements):
                for node in local[e]:
                    acc[node] += share[e]
            off += blk.num_elements
        out[region] = acc
    return out


def shepard_weights(distances: np.ndarray, p: float) -> np.ndarray:
    """Inverse-distance weights w_i = ((Rmax - r_i)/(Rmax*r_i))^p with
    Rmax = 1.01 * max(r_i).  Strictly positive for 0 < r_i <= max r."""
    r = np.asarray(distances, dtype=np.float64)
    r_max = r.max()
    big_r = 1.01 * r_max
    return ((big_r - r) / (big_r * r)) ** p


def shepard_interpolate(source_points, source_values, target_points,
                        params: ShepardParams, diameter: float) -> np.ndarray:
    """Shepard interpolation onto arbitrary target points.

    Coincident targets (nearest distance < 1e-12 * diameter) copy the source
    value; everything is scaled by global_factor.
    """
    src = np.asarray(source_points, dtype=np.float64)
    vals = np.asarray(source_values)
    if len(src) == 0:
        raise InterpError("empty source point set")
    n = min(params.num_neighbours, len(src))
    if params.num_neighbours > len(src):
        raise InterpError(
            f"numNeighbours={params.num_neighbours} exceeds source point "
            f"count {len(src)}"
        )
    index = PointIndex(src)
    coincident_tol = COINCIDENT_REL_TOL * max(diameter, 1e-300)
    out = np.empty((len(target_points), vals.shape[1]), dtype=vals.dtype)
    for t, p in enumerate(np.asarray(target_points, dtype=np.float64)):
        idx, dist = index.knn(p, n)
        if dist[0] < coincident_tol:
            out[t] = vals[idx[0]]
            continue
        w = shepard_weights(dist, params.exponent)
        out[t] = (w[:, None] * vals[idx]).sum(axis=0) / w.sum()
    return out * params.global_factor


# -- local RBF interpolation --------------------------------------------------


def wendland_c2(r: np.ndarray, delta: float) -> np.ndarray:
    """Compactly supported Wendland C2 kernel (1-r/d)^4 (4r/d + 1)."""
    q = np.clip(np.asarray(r, dtype=np.float64) / delta, 0.0, 1.0)
    return (1.0 - q) ** 4 * (4.0 * q + 1.0)


class _LocalRbf:
    """Wendland C2 interpolant over one neighborhood, with constant+linear
    polynomial augmentation so constants and affine fields are reproduced."""

    def __init__(self, centers: np.ndarray, values: np.ndarray,
                 origin: np.ndarray):
        self.origin = origin
        self.centers = centers - origin
        k = len(centers)
        d_far = np.linalg.norm(self.centers, axis=1).max()
        self.delta = 1.05 * max(d_far, 1e-300)
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        phi = wendland_c2(np.linalg.norm(diff, axis=2), self.delta)
        poly = np.hstack([np.ones((k, 1)), self.centers])
        m = poly.shape[1]
        a = np.zeros((k + m, k + m))
        a[:k, :k] = phi
        a[:k, k:] = poly
        a[k:, :k] = poly.T
        rhs = np.zeros((k + m, values.shape[1]), dtype=values.dtype)
        rhs[:k] = values
        try:
            self.coef = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            a[:k, :k] += np.eye(k) * (1e-12 * np.trace(phi) / k)
            try:
                self.coef = np.linalg.solve(a, rhs)
            except np.linalg.LinAlgError:
                raise InterpError(
                    f"singular RBF system near point {origin}"
                ) from None
        self._k = k

    def __call__(self, p: np.ndarray) -> np.ndarray:
        x = p - self.origin
        phi = wendland_c2(np.linalg.norm(self.centers - x, axis=1), self.delta)
        basis = np.concatenate([phi, [1.0], x])
        return basis @ self.coef


def rbf_interpolate(source_points, source_values, target_points,
                    params: RbfParams, diameter: float) -> np.ndarray:
    """Modified-Shepard blend of local Wendland interpolants.

    For each target the N_w nearest source points act as influence centers;
    each center carries a local interpolant over its own N_q nearest source
    points, and the local predictions are blended with Shepard weights using
    the configured exponent.
    """
    src = np.asarray(source_points, dtype=np.float64)
    vals = np.asarray(source_values)
    if len(src) == 0:
        raise InterpError("empty source point set")
    n_q = min(params.num_neighbours, len(src))
    n_w = min(params.num_influence, n_q)
    index = PointIndex(src)
    coincident_tol = COINCIDENT_REL_TOL * max(diameter, 1e-300)
    cache: dict[int, _LocalRbf] = {}

    def local_interp(center: int) -> _LocalRbf:
        got = cache.get(center)
        if got is None:
            idx, _ = index.knn(src[center], n_q)
            got = _LocalRbf(src[idx], vals[idx], src[center])
            cache[center] = got
        return got

    out = np.empty((len(target_points), vals.shape[1]), dtype=vals.dtype)
    for t, p in enumerate(np.asarray(target_points, dtype=np.float64)):
        centers, dist = index.knn(p, n_w)
        if dist[0] < coincident_tol:
            out[t] = local_interp(int(centers[0]))(p)
            continue
        w = shepard_weights(dist, params.exponent)
        pred = np.stack([local_interp(int(c))(p) for c in centers])
        out[t] = (w[:, None] * pred).sum(axis=0) / w.sum()
    return out * params.global_factor


def resolve_rbf_points(step: FieldStep | None, quantity: FieldQuantity,
                       mesh: Mesh, regions, params: RbfParams):
    """Source/target point sets for the RBF filter per its data rules:
    NODE data comes from nodes, CELL data from centroids; CELL data may only
    go to cell centroids."""
    if quantity.defined_on == "CELL" and not params.use_elem_as_target:
        raise InterpError(
            "element-based data can only be interpolated to cell centroids; "
            "set useElemAsTarget"
        )
    pts = []
    for region in regions:
        if quantity.defined_on == "NODE":
            pts.append(mesh.nodes[mesh.region_nodes(region)])
        else:
            pts.append(mesh.region_centroids(region))
    return np.vstack(pts) if pts else np.empty((0, 3))


def target_points_for(mesh: Mesh, regions, use_elem_as_target: bool):
    """Target points (and per-region counts) on a target mesh."""
    pts, counts = [], []
    for region in regions:
        p = (mesh.region_centroids(region) if use_elem_as_target
             else mesh.nodes[mesh.region_nodes(region)])
        pts.append(p)
        counts.append(len(p))
    stacked = np.vstack(pts) if pts else np.empty((0, 3))
    return stacked, counts


def apply_no_slip_wall(values_by_region: dict[str, np.ndarray], mesh: Mesh,
                       target_regions, wall_region: str):
    """Zero the outputs of target nodes that lie on the wall region."""
    wall = set(int(n) for n in mesh.region_nodes(wall_region))
    for region in target_regions:
        rn = mesh.region_nodes(region)
        mask = np.fromiter((int(n) in wall for n in rn), dtype=bool,
                           count=len(rn))
        values_by_region[region][mask] = 0.0
