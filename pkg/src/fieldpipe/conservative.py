"""Conservative source integration onto first-order nodal FEM loads.

Both variants turn cell-centered source data f_c into nodal right-hand-side
loads on the target mesh (units: source unit times volume).  The centroid
variant assigns each source cell's full integral f_c * V_c through the shape
functions at its centroid; the cut-cell variant splits the integral among
target elements by exact axis-aligned box intersection volumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import (FieldStep, Mesh, element_measure, locate_point,
                   shape_values)
from .spatial import BoxIndex

log = logging.getLogger(__name__)


class ConservativeError(Exception):
    pass


@dataclass
class ConservationReport:
    """Componentwise bookkeeping: total source integral and the part whose
    source cells found no home on the target mesh."""

    source_integral: np.ndarray
    lost_integral: np.ndarray
    lost_cells: int = 0

    @property
    def lost_fraction(self) -> float:
        denom = float(np.abs(self.source_integral).sum())
        return float(np.abs(self.lost_integral).sum()) / max(denom, 1e-300)


def _require_cell_input(step: FieldStep, filter_name: str):
    if step.quantity.defined_on != "CELL":
        raise ConservativeError(
            f"{filter_name} needs CELL-defined input, got NODE "
            f"('{step.quantity.name}')"
        )


def _target_node_maps(target_mesh: Mesh, target_regions):
    maps = {}
    for region in target_regions:
        rn = target_mesh.region_nodes(region)
        maps[region] = {int(n): i for i, n in enumerate(rn)}
    return maps


def conservative_centroid(step: FieldStep, source_mesh: Mesh, source_regions,
                          target_mesh: Mesh, target_regions):
    """Cell-centroid variant; returns (loads per target region, report)."""
    _require_cell_input(step, "FieldInterpolation_Conservative_CellCentroid")
    if not any(target_mesh.region_num_elements(r) for r in target_regions):
        raise ConservativeError("empty target region set")
    comps = step.quantity.components
    node_maps = _target_node_maps(target_mesh, target_regions)
    dtype = next(iter(step.values.values())).dtype
    loads = {
        r: np.zeros((len(target_mesh.region_nodes(r)), comps), dtype=dtype)
        for r in target_regions
    }
    box_index = BoxIndex.for_mesh(target_mesh, target_regions)
    report = ConservationReport(np.zeros(comps, dtype=dtype),
                                 np.zeros(comps, dtype=dtype))
    for region in source_regions:
        vals = step.values[region]
        centroids = source_mesh.region_centroids(region)
        for e in range(source_mesh.region_num_elements(region)):
            vol = element_measure(source_mesh, region, e)
            f = vals[e]
            report.source_integral += f * vol
            hit = locate_point(target_mesh, target_regions, centroids[e],
                               index=box_index)
            if hit is None:
                report.lost_cells += 1
                report.lost_integral += f * vol
                continue
            treg, telem, local = hit
            etype = target_mesh.element_type(treg, telem)
            weights = shape_values(etype, local)
            nodes = target_mesh.element_nodes(treg, telem)
            nmap = node_maps[treg]
            for w, node in zip(weights, nodes):
                loads[treg][nmap[int(node)]] += f * vol * w
    if report.lost_cells:
        log.warning(
            "conservative centroid: %d source cells outside target "
            "(%.1f%% of source integral lost)",
            report.lost_cells, 100.0 * report.lost_fraction,
        )
    return loads, report


_AXIS_TOL = 1e-10


def _axis_aligned_hex_box(mesh: Mesh, region: str, elem: int):
    """Corner box of an axis-aligned HEXA8, or None if the element is not an
    axis-aligned hexahedron (checked to 1e-10 relative)."""
    from .mesh import ElementType

    if mesh.element_type(region, elem) is not ElementType.HEXA8:
        return None
    x = mesh.nodes[mesh.element_nodes(region, elem)]
    lo, hi = x.min(axis=0), x.max(axis=0)
    scale = max(float((hi - lo).max()), 1e-300)
    corners = np.array([
        [lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
        [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]],
    ])
    if np.abs(x - corners).max() > _AXIS_TOL * scale:
        return None
    return lo, hi


def _collect_boxes(mesh: Mesh, regions, what: str):
    boxes = []
    for region in regions:
        for e in range(mesh.region_num_elements(region)):
            box = _axis_aligned_hex_box(mesh, region, e)
            if box is None:
                raise ConservativeError(
                    f"cut-cell supports axis-aligned hexahedral meshes only "
                    f"({what} region '{region}', element {e})"
                )
            boxes.append((region, e, box[0], box[1]))
    return boxes


def conservative_cutcell(step: FieldStep, source_mesh: Mesh, source_regions,
                         target_mesh: Mesh, target_regions):
    """Cut-cell variant (axis-aligned hex/hex only)."""
    _require_cell_input(step, "FieldInterpolation_Conservative_CutCell")
    src_boxes = _collect_boxes(source_mesh, source_regions, "source")
    tgt_boxes = _collect_boxes(target_mesh, target_regions, "target")
    comps = step.quantity.components
    node_maps = _target_node_maps(target_mesh, target_regions)
    dtype = next(iter(step.values.values())).dtype
    loads = {
        r: np.zeros((len(target_mesh.region_nodes(r)), comps), dtype=dtype)
        for r in target_regions
    }
    tgt_lo = np.array([b[2] for b in tgt_boxes])
    tgt_hi = np.array([b[3] for b in tgt_boxes])
    report = ConservationReport(np.zeros(comps, dtype=dtype),
                                 np.zeros(comps, dtype=dtype))
    for region, e, lo, hi in src_boxes:
        f = step.values[region][e]
        vol = float(np.prod(hi - lo))
        report.source_integral += f * vol
        inter_lo = np.maximum(lo, tgt_lo)
        inter_hi = np.minimum(hi, tgt_hi)
        ext = np.clip(inter_hi - inter_lo, 0.0, None)
        vols = ext.prod(axis=1)
        covered = 0.0
        for ti in np.nonzero(vols > 0.0)[0]:
            v_int = float(vols[ti])
            covered += v_int
            treg, telem, _, _ = tgt_boxes[ti]
            center = 0.5 * (inter_lo[ti] + inter_hi[ti])
            hit_local = _box_local_coords(tgt_boxes[ti], center)
            etype = target_mesh.element_type(treg, telem)
            weights = shape_values(etype, hit_local)
            nodes = target_mesh.element_nodes(treg, telem)
            nmap = node_maps[treg]
            for w, node in zip(weights, nodes):
                loads[treg][nmap[int(node)]] += f * v_int * w
        missing = vol - covered
        if missing > 1e-12 * max(vol, 1e-300):
            report.lost_cells += 1
            report.lost_integral += f * missing
    if report.lost_cells:
        log.warning(
            "conservative cut-cell: %.1f%% of source integral outside target",
            100.0 * report.lost_fraction,
        )
    return loads, report


def _box_local_coords(tgt_box, point):
    """Reference coordinates of a point inside an axis-aligned hex box."""
    _, _, lo, hi = tgt_box
    span = np.maximum(hi - lo, 1e-300)
    return 2.0 * (point - lo) / span - 1.0
