"""Immutable unstructured mesh and field-data model.

Nodes are 0-based everywhere in memory; file readers convert on import.
First-order element geometry (shape functions, measures, centroids, point
location) lives here because every filter needs it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ElementType(Enum):
    TRIA3 = "TRIA3"
    QUAD4 = "QUAD4"
    TETRA4 = "TETRA4"
    HEXA8 = "HEXA8"
    PENTA6 = "PENTA6"
    PYRAMID5 = "PYRAMID5"

    @property
    def num_nodes(self) -> int:
        return _NUM_NODES[self]

    @property
    def dimension(self) -> int:
        return 2 if self in (ElementType.TRIA3, ElementType.QUAD4) else 3


_NUM_NODES = {
    ElementType.TRIA3: 3,
    ElementType.QUAD4: 4,
    ElementType.TETRA4: 4,
    ElementType.HEXA8: 8,
    ElementType.PENTA6: 6,
    ElementType.PYRAMID5: 5,
}


class MeshError(Exception):
    pass


@dataclass(frozen=True)
class ElementBlock:
    """Homogeneous chunk of elements: one type, element-major connectivity."""

    etype: ElementType
    connectivity: np.ndarray  # shape (n_elems, nodes_per_elem), int64

    def __post_init__(self):
        conn = np.ascontiguousarray(np.asarray(self.connectivity, dtype=np.int64))
        if conn.ndim == 1:
            if conn.size % self.etype.num_nodes != 0:
                raise MeshError(
                    f"connectivity length {conn.size} not a multiple of "
                    f"{self.etype.num_nodes} ({self.etype.value})"
                )
            conn = conn.reshape(-1, self.etype.num_nodes)
        elif conn.shape[1] != self.etype.num_nodes:
            raise MeshError(
                f"connectivity width {conn.shape[1]} != {self.etype.num_nodes} "
                f"for {self.etype.value}"
            )
        conn.setflags(write=False)
        object.__setattr__(self, "connectivity", conn)

    @property
    def num_elements(self) -> int:
        return self.connectivity.shape[0]


class Mesh:
    """Unstructured grid: node coordinates plus named regions of element blocks.

    Immutable after construction; arrays are write-protected so the instance
    can be shared freely between filters and threads.
    """

    def __init__(self, nodes, regions: dict[str, list[ElementBlock]]):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=np.float64))
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise MeshError(f"nodes must be (N, 3), got {nodes.shape}")
        nodes.setflags(write=False)
        self.nodes = nodes
        self.regions: dict[str, list[ElementBlock]] = dict(regions)
        n = len(nodes)
        for name, blocks in self.regions.items():
            for blk in blocks:
                conn = blk.connectivity
                if conn.size and (conn.min() < 0 or conn.max() >= n):
                    raise MeshError(
                        f"region '{name}': connectivity index out of range "
                        f"[0, {n})"
                    )
        self._region_nodes: dict[str, np.ndarray] = {}
        self._region_elems: dict[str, list[tuple[ElementBlock, int]]] = {}
        self.dimension = self._infer_dimension()

    def _infer_dimension(self) -> int:
        types = {blk.etype for blocks in self.regions.values() for blk in blocks}
        if types and all(t.dimension == 2 for t in types):
            if self.nodes.size == 0 or np.allclose(self.nodes[:, 2], 0.0):
                return 2
        return 3

    # -- region accessors ---------------------------------------------------

    def region(self, name: str) -> list[ElementBlock]:
        try:
            return self.regions[name]
        except KeyError:
            raise MeshError(
                f"unknown region '{name}'; have {sorted(self.regions)}"
            ) from None

    def region_nodes(self, name: str) -> np.ndarray:
        """Sorted unique node indices of a region (the NODE entity ordering)."""
        cached = self._region_nodes.get(name)
        if cached is None:
            blocks = self.region(name)
            if blocks:
                cached = np.unique(
                    np.concatenate([b.connectivity.ravel() for b in blocks])
                )
            else:
                cached = np.empty(0, dtype=np.int64)
            cached.setflags(write=False)
            self._region_nodes[name] = cached
        return cached

    def region_num_elements(self, name: str) -> int:
        return sum(b.num_elements for b in self.region(name))

    def _elem(self, name: str, elem: int) -> tuple[ElementBlock, int]:
        """Resolve a region-wide element index to (block, local index)."""
        off = 0
        for blk in self.region(name):
            if elem < off + blk.num_elements:
                return blk, elem - off
            off += blk.num_elements
        raise MeshError(
            f"element index {elem} out of range for region '{name}' "
            f"({off} elements)"
        )

    def element_nodes(self, name: str, elem: int) -> np.ndarray:
        blk, local = self._elem(name, elem)
        return blk.connectivity[local]

    def element_type(self, name: str, elem: int) -> ElementType:
        blk, _ = self._elem(name, elem)
        return blk.etype

    def entity_count(self, name: str, defined_on: str) -> int:
        if defined_on == "NODE":
            return len(self.region_nodes(name))
        if defined_on == "CELL":
            return self.region_num_elements(name)
        raise MeshError(f"unknown entity kind '{defined_on}'")

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.nodes.min(axis=0), self.nodes.max(axis=0)

    def diameter(self) -> float:
        if len(self.nodes) == 0:
            return 0.0
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def region_centroids(self, name: str) -> np.ndarray:
        """Centroids of all elements of a region, in element order."""
        out = []
        for blk in self.region(name):
            out.append(self.nodes[blk.connectivity].mean(axis=1))
        if not out:
            return np.empty((0, 3))
        return np.vstack(out)

    def same_geometry(self, other: "Mesh", tol: float = 1e-12) -> bool:
        """Identical node count, coordinates and per-region element counts."""
        if self.nodes.shape != other.nodes.shape:
            return False
        scale = max(self.diameter(), 1.0)
        if not np.allclose(self.nodes, other.nodes, rtol=0.0, atol=tol * scale):
            return False
        if set(self.regions) != set(other.regions):
            return False
        return all(
            self.region_num_elements(r) == other.region_num_elements(r)
            for r in self.regions
        )


@dataclass(frozen=True)
class FieldQuantity:
    """Descriptor of one named field: where it lives and what it holds."""

    name: str
    defined_on: str  # NODE | CELL
    components: int  # 1 | 3
    domain: str = "TIME"  # TIME | FREQUENCY
    value_kind: str = "REAL"  # REAL | COMPLEX
    regions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.defined_on not in ("NODE", "CELL"):
            raise MeshError(f"defined_on must be NODE or CELL: {self.defined_on}")
        if self.components not in (1, 3):
            raise MeshError(f"components must be 1 or 3: {self.components}")
        if self.domain == "TIME" and self.value_kind != "REAL":
            raise MeshError("TIME-domain quantities must be REAL")
        if self.domain == "FREQUENCY" and self.value_kind != "COMPLEX":
            raise MeshError("FREQUENCY-domain quantities must be COMPLEX")
        object.__setattr__(self, "regions", tuple(self.regions))


@dataclass
class FieldStep:
    """One time/frequency step of a quantity: per-region (n, comps) arrays."""

    quantity: FieldQuantity
    step_index: int
    step_value: float
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self, mesh: Mesh):
        for region in self.quantity.regions:
            arr = self.values.get(region)
            if arr is None:
                raise MeshError(
                    f"step {self.step_index} of '{self.quantity.name}' missing "
                    f"region '{region}'"
                )
            n = mesh.entity_count(region, self.quantity.defined_on)
            if arr.shape != (n, self.quantity.components):
                raise MeshError(
                    f"'{self.quantity.name}' region '{region}': array shape "
                    f"{arr.shape} != ({n}, {self.quantity.components})"
                )
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise MeshError(
                    f"'{self.quantity.name}' region '{region}' contains "
                    "non-finite values"
                )


# -- first-order element geometry -------------------------------------------


def element_centroid(mesh: Mesh, region: str, elem: int) -> np.ndarray:
    """Arithmetic mean of the element's node coordinates."""
    return mesh.nodes[mesh.element_nodes(region, elem)].mean(axis=0)


# Tetrahedral decompositions used for measures and for PENTA6/PYRAMID5
# point location.  Orientation chosen so valid elements give positive volumes.
_HEXA_TETS = ((0, 1, 2, 6), (0, 2, 3, 6), (0, 3, 7, 6),
              (0, 7, 4, 6), (0, 4, 5, 6), (0, 5, 1, 6))
_PENTA_TETS = ((0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3))
_PYRAMID_TETS = ((0, 1, 2, 4), (0, 2, 3, 4))

ELEMENT_TET_SPLIT = {
    ElementType.TETRA4: ((0, 1, 2, 3),),
    ElementType.HEXA8: _HEXA_TETS,
    ElementType.PENTA6: _PENTA_TETS,
    ElementType.PYRAMID5: _PYRAMID_TETS,
}


def _tet_volume(x: np.ndarray) -> float:
    return float(np.linalg.det(x[1:] - x[0]) / 6.0)


def _tri_area(x: np.ndarray) -> float:
    return float(np.linalg.norm(np.cross(x[1] - x[0], x[2] - x[0])) / 2.0)


def element_measure(mesh: Mesh, region: str, elem: int) -> float:
    """Volume (3D) or area (2D) of one element; raises on inverted elements."""
    etype = mesh.element_type(region, elem)
    x = mesh.nodes[mesh.element_nodes(region, elem)]
    if etype is ElementType.TRIA3:
        return _tri_area(x)
    if etype is ElementType.QUAD4:
        return _tri_area(x[[0, 1, 2]]) + _tri_area(x[[0, 2, 3]])
    vols = [_tet_volume(x[list(t)]) for t in ELEMENT_TET_SPLIT[etype]]
    total = sum(vols)
    if total <= 0.0 or min(vols) < -1e-12 * max(abs(total), 1e-300):
        raise MeshError(
            f"inverted or degenerate element {elem} in region '{region}' "
            f"(measure {total:g})"
        )
    return total


def shape_values(etype: ElementType, local: np.ndarray) -> np.ndarray:
    """First-order Lagrange shape functions at a reference-space point."""
    l = np.asarray(local, dtype=np.float64)
    if etype is ElementType.TRIA3:
        xi, eta = l[0], l[1]
        return np.array([1.0 - xi - eta, xi, eta])
    if etype is ElementType.TETRA4:
        xi, eta, zeta = l
        return np.array([1.0 - xi - eta - zeta, xi, eta, zeta])
    if etype is ElementType.QUAD4:
        xi, eta = l[0], l[1]
        return 0.25 * np.array([
            (1 - xi) * (1 - eta),
            (1 + xi) * (1 - eta),
            (1 + xi) * (1 + eta),
            (1 - xi) * (1 + eta),
        ])
    if etype is ElementType.HEXA8:
        xi, eta, zeta = l
        return 0.125 * np.array([
            (1 - xi) * (1 - eta) * (1 - zeta),
            (1 + xi) * (1 - eta) * (1 - zeta),
            (1 + xi) * (1 + eta) * (1 - zeta),
            (1 - xi) * (1 + eta) * (1 - zeta),
            (1 - xi) * (1 - eta) * (1 + zeta),
            (1 + xi) * (1 - eta) * (1 + zeta),
            (1 + xi) * (1 + eta) * (1 + zeta),
            (1 - xi) * (1 + eta) * (1 + zeta),
        ])
    if etype is ElementType.PENTA6:
        xi, eta, zeta = l
        tri = np.array([1.0 - xi - eta, xi, eta])
        return np.concatenate([tri * (1 - zeta) / 2.0, tri * (1 + zeta) / 2.0])
    if etype is ElementType.PYRAMID5:
        # Degenerate-hex form: base quad on zeta=0, apex at zeta=1.
        xi, eta, zeta = l
        return np.array([
            0.25 * (1 - xi) * (1 - eta) * (1 - zeta),
            0.25 * (1 + xi) * (1 - eta) * (1 - zeta),
            0.25 * (1 + xi) * (1 + eta) * (1 - zeta),
            0.25 * (1 - xi) * (1 + eta) * (1 - zeta),
            zeta,
        ])
    raise MeshError(f"unsupported element type {etype}")


def shape_gradients(etype: ElementType, local: np.ndarray) -> np.ndarray:
    """d(shape)/d(reference coords), shape (n_nodes, ref_dim)."""
    l = np.asarray(local, dtype=np.float64)
    if etype is ElementType.TRIA3:
        return np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if etype is ElementType.TETRA4:
        return np.array([
            [-1.0, -1.0, -1.0], [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
        ])
    if etype is ElementType.QUAD4:
        xi, eta = l[0], l[1]
        return 0.25 * np.array([
            [-(1 - eta), -(1 - xi)],
            [(1 - eta), -(1 + xi)],
            [(1 + eta), (1 + xi)],
            [-(1 + eta), (1 - xi)],
        ])
    if etype is ElementType.HEXA8:
        xi, eta, zeta = l
        signs = np.array([
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ], dtype=np.float64)
        g = np.empty((8, 3))
        for i, (sx, sy, sz) in enumerate(signs):
            g[i] = 0.125 * np.array([
                sx * (1 + sy * eta) * (1 + sz * zeta),
                sy * (1 + sx * xi) * (1 + sz * zeta),
                sz * (1 + sx * xi) * (1 + sy * eta),
            ])
        return g
    if etype is ElementType.PENTA6:
        xi, eta, zeta = l
        tri = np.array([1.0 - xi - eta, xi, eta])
        dtri = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        g = np.empty((6, 3))
        g[:3, :2] = dtri * (1 - zeta) / 2.0
        g[3:, :2] = dtri * (1 + zeta) / 2.0
        g[:3, 2] = -tri / 2.0
        g[3:, 2] = tri / 2.0
        return g
    if etype is ElementType.PYRAMID5:
        xi, eta, zeta = l
        g = np.empty((5, 3))
        g[0] = [-0.25 * (1 - eta) * (1 - zeta), -0.25 * (1 - xi) * (1 - zeta),
                -0.25 * (1 - xi) * (1 - eta)]
        g[1] = [0.25 * (1 - eta) * (1 - zeta), -0.25 * (1 + xi) * (1 - zeta),
                -0.25 * (1 + xi) * (1 - eta)]
        g[2] = [0.25 * (1 + eta) * (1 - zeta), 0.25 * (1 + xi) * (1 - zeta),
                -0.25 * (1 + xi) * (1 + eta)]
        g[3] = [-0.25 * (1 + eta) * (1 - zeta), 0.25 * (1 - xi) * (1 - zeta),
                -0.25 * (1 - xi) * (1 + eta)]
        g[4] = [0.0, 0.0, 1.0]
        return g
    raise MeshError(f"unsupported element type {etype}")


def reference_contains(etype: ElementType, local: np.ndarray, tol: float) -> bool:
    l = np.asarray(local, dtype=np.float64)
    if etype in (ElementType.TRIA3, ElementType.TETRA4):
        bary = np.append(l, 1.0 - l.sum())
        return bool(np.all(bary >= -tol))
    if etype in (ElementType.QUAD4, ElementType.HEXA8):
        return bool(np.all(np.abs(l) <= 1.0 + tol))
    if etype is ElementType.PENTA6:
        xi, eta, zeta = l
        return (xi >= -tol and eta >= -tol and xi + eta <= 1.0 + tol
                and abs(zeta) <= 1.0 + tol)
    if etype is ElementType.PYRAMID5:
        # Degenerate-hex reference box: the lateral shrink toward the apex
        # happens in physical space via the (1 - zeta) factor.
        xi, eta, zeta = l
        return (-tol <= zeta <= 1.0 + tol
                and abs(xi) <= 1.0 + tol and abs(eta) <= 1.0 + tol)
    raise MeshError(f"unsupported element type {etype}")


def reference_center(etype: ElementType) -> np.ndarray:
    if etype is ElementType.TRIA3:
        return np.array([1 / 3, 1 / 3])
    if etype is ElementType.TETRA4:
        return np.array([0.25, 0.25, 0.25])
    if etype is ElementType.QUAD4:
        return np.zeros(2)
    if etype in (ElementType.HEXA8, ElementType.PENTA6):
        c = np.zeros(3)
        if etype is ElementType.PENTA6:
            c[:2] = 1 / 3
        return c
    if etype is ElementType.PYRAMID5:
        return np.array([0.0, 0.0, 0.25])
    raise MeshError(f"unsupported element type {etype}")


# Reference-space coordinates of each node, per type (for PENTA6/PYRAMID5
# tet-split initial guesses).
_REF_NODES = {
    ElementType.TRIA3: np.array([[0, 0], [1, 0], [0, 1]], dtype=float),
    ElementType.TETRA4: np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float),
    ElementType.QUAD4: np.array(
        [[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float),
    ElementType.HEXA8: np.array(
        [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
         [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float),
    ElementType.PENTA6: np.array(
        [[0, 0, -1], [1, 0, -1], [0, 1, -1],
         [0, 0, 1], [1, 0, 1], [0, 1, 1]], dtype=float),
    ElementType.PYRAMID5: np.array(
        [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0], [0, 0, 1]],
        dtype=float),
}

_CONTAIN_TOL = 1e-8
_NEWTON_TOL = 1e-12
_NEWTON_MAXITER = 30


def _tet_barycentric(x: np.ndarray, p: np.ndarray):
    mat = (x[1:] - x[0]).T
    try:
        abc = np.linalg.solve(mat, p - x[0])
    except np.linalg.LinAlgError:
        return None
    return abc


def _plane_frame(x: np.ndarray):
    """Orthonormal in-plane basis (e1, e2, normal) for a planar element."""
    e1 = x[1] - x[0]
    n1 = np.linalg.norm(e1)
    if n1 == 0.0:
        return None
    e1 = e1 / n1
    v = x[2] - x[0]
    normal = np.cross(e1, v)
    nn = np.linalg.norm(normal)
    if nn == 0.0:
        return None
    normal = normal / nn
    e2 = np.cross(normal, e1)
    return e1, e2, normal


def _newton_invert(etype: ElementType, xy: np.ndarray, p: np.ndarray,
                   start: np.ndarray):
    """Damped Newton inversion of the isoparametric map; None if diverged."""
    l = start.astype(np.float64).copy()
    for _ in range(_NEWTON_MAXITER):
        r = shape_values(etype, l) @ xy - p
        jac = xy.T @ shape_gradients(etype, l)  # (dim, ref_dim)
        try:
            dl = np.linalg.solve(jac, r) if jac.shape[0] == jac.shape[1] \
                else np.linalg.lstsq(jac, r, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        step = np.linalg.norm(dl)
        if step > 2.0:  # damp wild steps far outside the element
            dl *= 2.0 / step
        l = l - dl
        if step < _NEWTON_TOL:
            return l
    return None


def invert_isoparametric(etype: ElementType, x: np.ndarray, p: np.ndarray):
    """Reference coordinates of p in the element with node coords x, or None.

    TETRA4/TRIA3 use barycentric coordinates; HEXA8/QUAD4 use damped Newton;
    PENTA6/PYRAMID5 are containment-tested by tet splitting, then polished by
    Newton from the tet-derived initial guess.
    """
    p = np.asarray(p, dtype=np.float64)
    if etype is ElementType.TETRA4:
        abc = _tet_barycentric(x, p)
        if abc is None:
            return None
        return abc if reference_contains(etype, abc, _CONTAIN_TOL) else None
    if etype is ElementType.TRIA3:
        frame = _plane_frame(x)
        if frame is None:
            return None
        e1, e2, normal = frame
        d = p - x[0]
        diam = max(np.linalg.norm(x - x[0], axis=1).max(), 1e-300)
        if abs(d @ normal) > _CONTAIN_TOL * diam:
            return None
        p2 = np.array([d @ e1, d @ e2])
        x2 = np.stack([(x - x[0]) @ e1, (x - x[0]) @ e2], axis=1)
        mat = (x2[1:] - x2[0]).T
        try:
            l = np.linalg.solve(mat, p2 - x2[0])
        except np.linalg.LinAlgError:
            return None
        return l if reference_contains(etype, l, _CONTAIN_TOL) else None
    if etype is ElementType.QUAD4:
        frame = _plane_frame(x)
        if frame is None:
            return None
        e1, e2, normal = frame
        d = p - x[0]
        diam = max(np.linalg.norm(x - x[0], axis=1).max(), 1e-300)
        if abs(d @ normal) > _CONTAIN_TOL * diam:
            return None
        p2 = np.array([d @ e1, d @ e2])
        x2 = np.stack([(x - x[0]) @ e1, (x - x[0]) @ e2], axis=1)
        l = _newton_invert(etype, x2, p2, reference_center(etype))
        if l is None:
            return None
        return l if reference_contains(etype, l, _CONTAIN_TOL) else None
    if etype is ElementType.HEXA8:
        l = _newton_invert(etype, x, p, reference_center(etype))
        if l is None:
            return None
        return l if reference_contains(etype, l, _CONTAIN_TOL) else None
    if etype in (ElementType.PENTA6, ElementType.PYRAMID5):
        ref = _REF_NODES[etype]
        for tet in ELEMENT_TET_SPLIT[etype]:
            xt = x[list(tet)]
            abc = _tet_barycentric(xt, p)
            if abc is None:
                continue
            bary = np.append(1.0 - abc.sum(), abc)
            if np.all(bary >= -_CONTAIN_TOL):
                guess = bary @ ref[list(tet)]
                l = _newton_invert(etype, x, p, guess)
                if l is not None and reference_contains(etype, l, 1e-6):
                    return l
                return guess
        return None
    raise MeshError(f"unsupported element type {etype}")


def locate_point(mesh: Mesh, regions, p, index=None):
    """Find the element containing p; ties go to lowest (region order, elem).

    Returns (region, elem, local_coords) or None.  `index` is an optional
    prebuilt spatial.BoxIndex over the same region list.
    """
    from .spatial import BoxIndex

    p = np.asarray(p, dtype=np.float64)
    if index is None:
        index = BoxIndex.for_mesh(mesh, regions)
    for region_pos, region in enumerate(regions):
        for elem in index.candidates_in_region(region_pos, p):
            etype = mesh.element_type(region, elem)
            x = mesh.nodes[mesh.element_nodes(region, elem)]
            l = invert_isoparametric(etype, x, p)
            if l is not None:
                return region, elem, l
    return None
