"""Pipeline engine: XML parsing, DAG validation, step schedule, execution.

A pipeline document is `<cfsdat><pipeline>...</pipeline></cfsdat>` (a bare
`<pipeline>` root is also accepted).  It must contain exactly one
stepValueDefinition, one meshInput, and at least one meshOutput; filters in
between form a DAG via inputFilterIds (space- or comma-separated).

Execution is per schedule entry in topological order; the only cross-step
state is the 5-step ring buffer inside timeDeriv1.  Output containers are
updated after every completed entry, so an aborted run keeps all fully
finished entries.
"""

from __future__ import annotations

import logging
import os
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from . import aeroacoustic, conservative, interp
from .container import ContainerReader, ContainerWriter, read_target_mesh
from .derivatives import RbfFdSettings, StencilSet
from .ensight import EnsightReader
from .mesh import FieldQuantity, FieldStep, Mesh

log = logging.getLogger(__name__)


class PipelineError(Exception):
    """Validation failure: malformed document, bad graph, bad schedule."""


class FilterRuntimeError(Exception):
    """A filter failed while processing data."""

    def __init__(self, filter_id: str, message: str):
        super().__init__(f"filter '{filter_id}': {message}")
        self.filter_id = filter_id


# -- step schedule ------------------------------------------------------------


@dataclass(frozen=True)
class StepValueDefinition:
    start_step: int
    num_steps: int
    start_time: float
    delta: float
    delete_offset: bool = False

    def __post_init__(self):
        if self.start_step < 0:
            raise PipelineError("startStep must be >= 0")
        if self.num_steps < 1:
            raise PipelineError("numSteps must be >= 1")
        if not self.delta > 0:
            raise PipelineError("delta must be > 0")

    def match_value(self, j: int) -> float:
        return self.start_time + (self.start_step + j) * self.delta

    def output_value(self, j: int) -> float:
        if self.delete_offset:
            return (self.start_step + j + 1) * self.delta
        return self.match_value(j)


@dataclass(frozen=True)
class ScheduleEntry:
    file_index: int  # step index in the input data
    match_value: float
    output_value: float


@dataclass(frozen=True)
class StepSchedule:
    entries: tuple[ScheduleEntry, ...]

    def __len__(self):
        return len(self.entries)


def resolve_schedule(svd: StepValueDefinition, available) -> StepSchedule:
    """Match every requested step value against the available input steps.

    `available` is a list of (step index, value).  Subsampling falls out
    naturally when delta is a whole multiple of the file step.
    """
    tol = 1e-6 * svd.delta
    entries = []
    for j in range(svd.num_steps):
        want = svd.match_value(j)
        best = min(available, key=lambda s: abs(s[1] - want), default=None)
        if best is None or abs(best[1] - want) > tol:
            nearest = "none" if best is None else f"{best[1]:g}"
            raise PipelineError(
                f"no input step matches requested value {want:g} "
                f"(nearest available: {nearest})"
            )
        entries.append(ScheduleEntry(best[0], want, svd.output_value(j)))
    return StepSchedule(tuple(entries))


# -- XML parsing --------------------------------------------------------------


class _LineParser(ET.XMLParser):
    """Records the source line of each element for error messages."""

    def __init__(self):
        super().__init__()
        self.lines: dict[ET.Element, int] = {}

    def _start(self, *args, **kwargs):
        el = super()._start(*args, **kwargs)
        self.lines[el] = self.parser.CurrentLineNumber
        return el


def _parse_xml(path: str):
    parser = _LineParser()
    try:
        tree = ET.parse(path, parser=parser)
    except ET.ParseError as e:
        raise PipelineError(f"{path}: not well-formed XML ({e})") from None
    return tree.getroot(), parser.lines


def _loc(lines, el) -> str:
    n = lines.get(el)
    return f"line {n}" if n else "unknown line"


def _parse_bool(text: str, what: str) -> bool:
    t = (text or "").strip().lower()
    if t in ("yes", "true", "1", "on"):
        return True
    if t in ("no", "false", "0", "off", ""):
        return False
    raise PipelineError(f"{what}: cannot interpret '{text}' as yes/no")


def _split_ids(text: str) -> list[str]:
    # Both separators appear in the wild: space-separated and comma-separated.
    return [t for t in text.replace(",", " ").split() if t]


def _opt_float(el, attr: str, default: float) -> float:
    raw = el.get(attr)
    if raw is None or raw.strip() == "":
        return default
    return float(raw)


_IGNORED_WITH_WARNING = {
    "meshInput": ("gridType",),
    "ensight": ("readFVMesh",),
    "hdf5": ("compressionLevel", "externalFiles", "extension"),
    "IntSchemeRBF": ("useCGAL4RBF",),
}


def _warn_ignored(el, kind: str):
    for attr in _IGNORED_WITH_WARNING.get(kind, ()):
        if el.get(attr) is not None and attr != "extension":
            log.warning("%s attribute '%s=%s' is not supported and is "
                        "ignored", kind, attr, el.get(attr))


@dataclass
class FilterSpec:
    fid: str
    element: str  # meshInput | interpolation | differentiation | ...
    ftype: str | None
    inputs: list[str]
    params: dict = field(default_factory=dict)
    line: int = 0


@dataclass
class PipelineDocument:
    base_dir: str
    svd: StepValueDefinition
    filters: dict[str, FilterSpec]
    order: list[str]  # topological

    @property
    def input_id(self) -> str:
        return next(f.fid for f in self.filters.values()
                    if f.element == "meshInput")


_FILTER_TYPES = {
    "interpolation": {
        "FieldInterpolation_Node2Cell",
        "FieldInterpolation_Cell2Node",
        "FieldInterpolation_NearestNeighbour",
        "FieldInterpolation_RBF",
        "FieldInterpolation_Conservative_CellCentroid",
        "FieldInterpolation_Conservative_CutCell",
    },
    "differentiation": {
        "SpaceDifferentiation_Gradient",
        "SpaceDifferentiation_Divergence",
        "SpaceDifferentiation_Curl",
    },
    "aeroacoustic": {
        "AeroacousticSource_LambVector",
        "AeroacousticSource_LighthillSourceTerm",
        "AeroacousticSource_LighthillSourceTermVector",
    },
}


def _parse_svd(el, lines) -> StepValueDefinition:
    start_stop = el.find("startStop")
    if start_stop is None:
        raise PipelineError(
            f"stepValueDefinition without startStop ({_loc(lines, el)})"
        )

    def value_of(tag, cast, default=None):
        child = start_stop.find(tag)
        if child is None or child.get("value") is None:
            if default is not None:
                return default
            raise PipelineError(
                f"stepValueDefinition missing <{tag} value=.../> "
                f"({_loc(lines, start_stop)})"
            )
        return cast(child.get("value"))

    do_el = start_stop.find("deleteOffset")
    return StepValueDefinition(
        start_step=value_of("startStep", int),
        num_steps=value_of("numSteps", int),
        start_time=value_of("startTime", float),
        delta=value_of("delta", float),
        delete_offset=_parse_bool(
            do_el.get("value", "no") if do_el is not None else "no",
            "deleteOffset",
        ),
    )


def _parse_target_mesh(el, lines, base_dir) -> str:
    tm = el.find("targetMesh")
    if tm is None:
        raise PipelineError(f"missing <targetMesh> ({_loc(lines, el)})")
    for tag in ("hdf5", "native"):
        f = tm.find(tag)
        if f is not None:
            _warn_ignored(f, "hdf5")
            fn = f.get("fileName")
            if not fn:
                raise PipelineError(
                    f"targetMesh <{tag}> without fileName ({_loc(lines, tm)})"
                )
            return os.path.normpath(os.path.join(base_dir, fn))
    raise PipelineError(
        f"targetMesh needs <hdf5 fileName=.../> ({_loc(lines, tm)})"
    )


def _parse_single_result(el, lines) -> tuple[str, str]:
    sr = el.find("singleResult")
    if sr is None:
        raise PipelineError(f"missing <singleResult> ({_loc(lines, el)})")
    iq = sr.find("inputQuantity")
    oq = sr.find("outputQuantity")
    if iq is None or oq is None or not iq.get("resultName") \
            or not oq.get("resultName"):
        raise PipelineError(
            f"singleResult needs inputQuantity and outputQuantity with "
            f"resultName ({_loc(lines, sr)})"
        )
    return iq.get("resultName"), oq.get("resultName")


def _parse_regions(el, lines) -> tuple[list[str], list[str]]:
    rg = el.find("regions")
    if rg is None:
        raise PipelineError(f"missing <regions> ({_loc(lines, el)})")

    def names(tag):
        parent = rg.find(tag)
        if parent is None:
            raise PipelineError(
                f"regions missing <{tag}> ({_loc(lines, rg)})"
            )
        out = [r.get("name") for r in parent.findall("region")]
        if not out or any(not n for n in out):
            raise PipelineError(
                f"<{tag}> needs at least one <region name=.../> "
                f"({_loc(lines, parent)})"
            )
        return out

    return names("sourceRegions"), names("targetRegions")


def _parse_rbf_settings(el, lines) -> RbfFdSettings:
    rs = el.find("RBF_Settings")
    if rs is None:
        raise PipelineError(f"missing <RBF_Settings> ({_loc(lines, el)})")
    raw_eps = rs.get("epsilonScaling")
    if raw_eps is None or raw_eps.strip() == "":
        raise PipelineError(
            f"RBF_Settings: epsilonScaling is mandatory ({_loc(lines, rs)})"
        )
    return RbfFdSettings(
        epsilon_scaling=float(raw_eps),
        beta_scaling=_opt_float(rs, "betaScaling", 1.0),
        k_scaling=_opt_float(rs, "kScaling", 1.0),
        log_eps=_parse_bool(rs.get("logEps", "no"), "logEps"),
    )


def parse_pipeline(path: str) -> PipelineDocument:
    root, lines = _parse_xml(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    pipeline = root if root.tag == "pipeline" else root.find("pipeline")
    if pipeline is None:
        raise PipelineError(f"{path}: no <pipeline> element")

    svd = None
    filters: dict[str, FilterSpec] = {}
    for el in pipeline:
        if el.tag == "stepValueDefinition":
            if svd is not None:
                raise PipelineError(
                    f"duplicate stepValueDefinition ({_loc(lines, el)})"
                )
            svd = _parse_svd(el, lines)
            continue
        if el.tag not in ("meshInput", "meshOutput", "interpolation",
                          "differentiation", "aeroacoustic", "timeDeriv1"):
            raise PipelineError(
                f"unknown pipeline element <{el.tag}> ({_loc(lines, el)})"
            )
        fid = el.get("id")
        if not fid:
            raise PipelineError(f"<{el.tag}> without id ({_loc(lines, el)})")
        if fid in filters:
            raise PipelineError(
                f"duplicate filter id '{fid}' ({_loc(lines, el)})"
            )
        inputs = _split_ids(el.get("inputFilterIds", ""))
        ftype = el.get("type")
        if el.tag in _FILTER_TYPES:
            if ftype not in _FILTER_TYPES[el.tag]:
                raise PipelineError(
                    f"unknown {el.tag} type '{ftype}' ({_loc(lines, el)}); "
                    f"known: {sorted(_FILTER_TYPES[el.tag])}"
                )
        params = _parse_filter_params(el, ftype, lines, base_dir)
        filters[fid] = FilterSpec(fid, el.tag, ftype, inputs, params,
                                  lines.get(el, 0))

    if svd is None:
        raise PipelineError(f"{path}: missing stepValueDefinition")
    _validate_graph(filters)
    order = _topo_sort(filters)
    return PipelineDocument(base_dir, svd, filters, order)


def _parse_filter_params(el, ftype, lines, base_dir) -> dict:
    tag = el.tag
    params: dict = {}
    if tag == "meshInput":
        _warn_ignored(el, "meshInput")
        input_file = el.find("inputFile")
        if input_file is None:
            raise PipelineError(
                f"meshInput without <inputFile> ({_loc(lines, el)})"
            )
        ens = input_file.find("ensight")
        if ens is not None:
            _warn_ignored(ens, "ensight")
            fn = ens.get("fileName")
            if not fn:
                raise PipelineError(
                    f"<ensight> without fileName ({_loc(lines, ens)})"
                )
            varmap = []
            vl = ens.find("variableList")
            if vl is not None:
                for var in vl.findall("variable"):
                    cfs = var.get("CFSVarName")
                    ensname = var.get("EnsightVarName")
                    if not cfs or not ensname:
                        raise PipelineError(
                            f"<variable> needs CFSVarName and EnsightVarName "
                            f"({_loc(lines, var)})"
                        )
                    varmap.append((cfs, ensname))
            params.update(
                kind="ensight",
                path=os.path.normpath(os.path.join(base_dir, fn)),
                variable_map=varmap,
                fix_fv_pyramids=_parse_bool(
                    ens.get("fixFVPyramids", "no"), "fixFVPyramids"),
            )
            return params
        for tag2 in ("hdf5", "native"):
            f = input_file.find(tag2)
            if f is not None:
                _warn_ignored(f, "hdf5")
                fn = f.get("fileName")
                if not fn:
                    raise PipelineError(
                        f"<{tag2}> without fileName ({_loc(lines, f)})"
                    )
                params.update(
                    kind="native",
                    path=os.path.normpath(os.path.join(base_dir, fn)),
                )
                return params
        raise PipelineError(
            f"inputFile needs <ensight> or <hdf5> ({_loc(lines, input_file)})"
        )

    if tag == "meshOutput":
        out_file = el.find("outputFile")
        extension = "cfsd"
        filename = None
        if out_file is not None:
            for tag2 in ("hdf5", "native"):
                f = out_file.find(tag2)
                if f is not None:
                    _warn_ignored(f, "hdf5")
                    extension = f.get("extension") or extension
                    filename = f.get("fileName")
        if filename is None:
            filename = f"{el.get('id')}.{extension}"
        params["path"] = os.path.normpath(os.path.join(base_dir, filename))
        results = []
        save = el.find("saveResults")
        if save is not None:
            for res in save.findall("result"):
                name = res.get("resultName")
                if not name:
                    raise PipelineError(
                        f"<result> without resultName ({_loc(lines, res)})"
                    )
                if res.find("allRegions") is not None:
                    results.append((name, None))
                else:
                    rl = res.find("regionList")
                    if rl is None:
                        raise PipelineError(
                            f"result '{name}' needs <allRegions/> or "
                            f"<regionList> ({_loc(lines, res)})"
                        )
                    regions = [r.get("name") for r in rl.findall("region")]
                    if not regions or any(not r for r in regions):
                        raise PipelineError(
                            f"regionList of '{name}' needs <region name=.../> "
                            f"({_loc(lines, rl)})"
                        )
                    results.append((name, regions))
        params["results"] = results  # empty = save everything
        return params

    if tag == "timeDeriv1":
        sr = el.find("singleResult")
        if sr is None:
            raise PipelineError(
                f"timeDeriv1 without <singleResult> ({_loc(lines, el)})"
            )
        iq, oq = _parse_single_result(el, lines)
        params.update(input_quantity=iq, output_quantity=oq)
        return params

    if tag == "interpolation":
        params["target_mesh"] = _parse_target_mesh(el, lines, base_dir)
        iq, oq = _parse_single_result(el, lines)
        params.update(input_quantity=iq, output_quantity=oq)
        src, tgt = _parse_regions(el, lines)
        params.update(source_regions=src, target_regions=tgt)
        if ftype == "FieldInterpolation_NearestNeighbour":
            nn = el.find("IntSchemeNN")
            if nn is None:
                raise PipelineError(
                    f"NearestNeighbour without <IntSchemeNN> "
                    f"({_loc(lines, el)})"
                )
            exponent = _opt_float(nn, "interpolationExponent", 2.0)
            if not 1.0 <= exponent <= 3.0:
                log.warning("interpolationExponent %g outside the "
                            "recommended range [1, 3]", exponent)
            params["shepard"] = interp.ShepardParams(
                exponent=exponent,
                num_neighbours=int(_opt_float(nn, "numNeighbours", 8)),
                global_factor=_opt_float(nn, "globalFactor", 1.0),
            )
        elif ftype == "FieldInterpolation_RBF":
            rbf = el.find("IntSchemeRBF")
            if rbf is None:
                raise PipelineError(
                    f"RBF interpolation without <IntSchemeRBF> "
                    f"({_loc(lines, el)})"
                )
            _warn_ignored(rbf, "IntSchemeRBF")
            use_elem = _parse_bool(el.findtext("useElemAsTarget", "false"),
                                   "useElemAsTarget")
            wall_el = el.find("noSlipWall")
            wall = wall_el.get("name") if wall_el is not None else None
            params["rbf"] = interp.RbfParams(
                num_neighbours=int(_opt_float(rbf, "numNeighbours", 18)),
                num_influence=int(_opt_float(rbf, "numNeighbours_weight", 13)),
                exponent=_opt_float(rbf, "interpolationExponent", 2.0),
                global_factor=_opt_float(rbf, "globalFactor", 1.0),
                use_elem_as_target=use_elem,
                no_slip_wall=wall,
            )
        return params

    if tag == "differentiation":
        params["target_mesh"] = _parse_target_mesh(el, lines, base_dir)
        iq, oq = _parse_single_result(el, lines)
        params.update(input_quantity=iq, output_quantity=oq)
        src, tgt = _parse_regions(el, lines)
        params.update(source_regions=src, target_regions=tgt)
        params["settings"] = _parse_rbf_settings(el, lines)
        return params

    if tag == "aeroacoustic":
        params["target_mesh"] = _parse_target_mesh(el, lines, base_dir)
        params["settings"] = _parse_rbf_settings(el, lines)
        src, tgt = _parse_regions(el, lines)
        params.update(source_regions=src, target_regions=tgt)
        rl = el.find("ResultList")
        if rl is None:
            raise PipelineError(
                f"aeroacoustic filter without <ResultList> ({_loc(lines, el)})"
            )
        vel = rl.find("velocity")
        if vel is None or not vel.get("resultName"):
            raise PipelineError(
                f"ResultList needs <velocity resultName=.../> "
                f"({_loc(lines, rl)})"
            )
        params["velocity"] = vel.get("resultName")
        vort = rl.find("vorticity")
        params["vorticity"] = (vort.get("resultName")
                               if vort is not None else None)
        dens = rl.find("density")
        if dens is not None:
            params["density"] = dens.get("resultName")
            log.warning("density input is accepted but unused by the "
                        "implemented source-term equations")
        oq = rl.find("outputQuantity")
        if oq is None or not oq.get("resultName"):
            raise PipelineError(
                f"ResultList needs <outputQuantity resultName=.../> "
                f"({_loc(lines, rl)})"
            )
        params["output_quantity"] = oq.get("resultName")
        if ftype != "AeroacousticSource_LambVector":
            source_sum = el.findtext("sourceSum", "true").strip().lower()
            if source_sum != "true":
                raise PipelineError(
                    f"sourceSum='{source_sum}' unsupported (only 'true') "
                    f"({_loc(lines, el)})"
                )
        return params

    return params


def _validate_graph(filters: dict[str, FilterSpec]):
    inputs = [f for f in filters.values() if f.element == "meshInput"]
    outputs = [f for f in filters.values() if f.element == "meshOutput"]
    if len(inputs) != 1:
        raise PipelineError(
            f"pipeline needs exactly one meshInput, found {len(inputs)}"
        )
    if not outputs:
        raise PipelineError("pipeline needs at least one meshOutput")
    consumed = {fid for f in filters.values() for fid in f.inputs}
    for f in filters.values():
        for dep in f.inputs:
            if dep not in filters:
                raise PipelineError(
                    f"filter '{f.fid}': inputFilterIds references unknown "
                    f"filter '{dep}' (line {f.line})"
                )
            if filters[dep].element == "meshOutput":
                raise PipelineError(
                    f"filter '{f.fid}' consumes meshOutput '{dep}'; outputs "
                    "are terminal"
                )
        if f.element == "meshInput" and f.inputs:
            raise PipelineError(
                f"meshInput '{f.fid}' must not have inputFilterIds"
            )
        if f.element != "meshInput" and not f.inputs:
            raise PipelineError(
                f"filter '{f.fid}' has no inputFilterIds (line {f.line})"
            )
    for f in outputs:
        if f.fid in consumed:
            raise PipelineError(f"meshOutput '{f.fid}' is consumed by "
                                "another filter")
    # Reachability from the meshInput.
    fwd: dict[str, list[str]] = {fid: [] for fid in filters}
    for f in filters.values():
        for dep in f.inputs:
            fwd[dep].append(f.fid)
    seen = set()
    stack = [inputs[0].fid]
    while stack:
        fid = stack.pop()
        if fid in seen:
            continue
        seen.add(fid)
        stack.extend(fwd[fid])
    unreachable = sorted(set(filters) - seen)
    if unreachable:
        raise PipelineError(
            f"filters not reachable from meshInput: {unreachable}"
        )


def _topo_sort(filters: dict[str, FilterSpec]) -> list[str]:
    """Topological order; raises with the cycle path on failure."""
    order: list[str] = []
    state: dict[str, int] = {}  # 0 unvisited, 1 on stack, 2 done
    path: list[str] = []

    def visit(fid: str):
        if state.get(fid) == 2:
            return
        if state.get(fid) == 1:
            cycle = path[path.index(fid):] + [fid]
            raise PipelineError(
                "cycle in filter graph: " + " -> ".join(cycle)
            )
        state[fid] = 1
        path.append(fid)
        for dep in filters[fid].inputs:
            visit(dep)
        path.pop()
        state[fid] = 2
        order.append(fid)

    for fid in sorted(filters):
        visit(fid)
    return order


# -- static result metadata ---------------------------------------------------


@dataclass
class ResultInfo:
    quantity: FieldQuantity
    mesh: Mesh


@dataclass
class FieldData:
    quantity: FieldQuantity
    mesh: Mesh
    values: dict[str, np.ndarray]


_RESERVED_SCALARS = {
    "acouPressure", "acouPotential", "fluidMechPressure", "fluidMechDensity",
    "acouRhsLoadP", "acouDivLighthillTensor",
}
_RESERVED_VECTORS = {
    "acouVelocity", "acoutIntensity", "fluidMechVelocity",
    "meanFluidMechVelocity", "fluidMechVorticity", "fluidMechGradPressure",
    "acouRhsLoad", "vortexRhsLoad",
}


def check_reserved_name(q: FieldQuantity):
    """Warn when a solver-reserved output name has an unexpected shape."""
    if q.name in _RESERVED_VECTORS and q.components != 3:
        log.warning("result '%s' is a reserved solver vector name but has "
                    "%d component(s)", q.name, q.components)
    if q.name in _RESERVED_SCALARS and q.components != 1:
        log.warning("result '%s' is a reserved solver scalar name but has "
                    "%d components", q.name, q.components)
    if (q.name in _RESERVED_SCALARS | _RESERVED_VECTORS
            and q.defined_on != "NODE"):
        log.warning("result '%s' is a reserved solver name but is defined "
                    "on %s entities", q.name, q.defined_on)


# -- runtime filters ----------------------------------------------------------


def _entity_points(mesh: Mesh, regions, defined_on: str) -> np.ndarray:
    pts = []
    for region in regions:
        if defined_on == "NODE":
            pts.append(mesh.nodes[mesh.region_nodes(region)])
        else:
            pts.append(mesh.region_centroids(region))
    return np.vstack(pts) if pts else np.empty((0, 3))


def _gather(data: FieldData, regions) -> np.ndarray:
    for region in regions:
        if region not in data.quantity.regions:
            raise PipelineError(
                f"source region '{region}' not covered by quantity "
                f"'{data.quantity.name}' (has {list(data.quantity.regions)})"
            )
    return np.vstack([data.values[r] for r in regions])


def _split(values: np.ndarray, counts, regions) -> dict[str, np.ndarray]:
    out = {}
    off = 0
    for region, n in zip(regions, counts):
        out[region] = values[off:off + n]
        off += n
    return out


class _Node:
    """Base runtime node: stateless apart from declared caches."""

    def __init__(self, spec: FilterSpec):
        self.spec = spec
        self.fid = spec.fid

    def required_inputs(self) -> list[str]:
        raise NotImplementedError

    def result_infos(self, inputs: dict[str, ResultInfo]) -> dict[str, ResultInfo]:
        raise NotImplementedError

    def run(self, entry_idx: int, inputs: dict[str, FieldData]):
        raise NotImplementedError


class _InputNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        p = spec.params
        if p["kind"] == "ensight":
            self.reader = EnsightReader(p["path"], p["variable_map"],
                                        p["fix_fv_pyramids"])
            self.mesh = self.reader.mesh
            self.manifest = self.reader.manifest
        else:
            self.reader = ContainerReader(p["path"])
            self.mesh = self.reader.mesh
            self.manifest = self.reader.manifest

    def result_infos(self, inputs):
        return {
            q.name: ResultInfo(q, self.mesh)
            for q in self.manifest.quantities
        }

    def read(self, entry_idx: int, entry: ScheduleEntry,
             wanted: set[str]) -> dict[str, FieldData]:
        out = {}
        for q in self.manifest.quantities:
            if q.name not in wanted:
                continue
            step = self.reader.read_step(q.name, entry.file_index)
            out[q.name] = FieldData(q, self.mesh, step.values)
        return out


class _RelocationNode(_Node):
    """Node2Cell / Cell2Node."""

    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])
        self.to_cell = spec.ftype == "FieldInterpolation_Node2Cell"

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        src = inputs[p["input_quantity"]]
        expected = "NODE" if self.to_cell else "CELL"
        if src.quantity.defined_on != expected:
            raise PipelineError(
                f"filter '{self.fid}' ({self.spec.ftype}) needs {expected} "
                f"input, got {src.quantity.defined_on}"
            )
        interp.check_relocation_meshes(src.mesh, self.target_mesh)
        q = FieldQuantity(
            name=p["output_quantity"],
            defined_on="CELL" if self.to_cell else "NODE",
            components=src.quantity.components,
            domain=src.quantity.domain, value_kind=src.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        self._src_quantity = src.quantity
        return {q.name: ResultInfo(q, self.target_mesh)}

    def run(self, entry_idx, inputs):
        p = self.spec.params
        data = inputs[p["input_quantity"]]
        step = FieldStep(data.quantity, entry_idx, 0.0, data.values)
        if self.to_cell:
            per_region = interp.node_to_cell(step, data.mesh,
                                             p["source_regions"])
        else:
            per_region = interp.cell_to_node(step, data.mesh,
                                             p["source_regions"])
        # Relocation keeps the geometry, so source/target region pairing is
        # positional between the two region lists.
        out = {}
        for src_r, tgt_r in zip(p["source_regions"], p["target_regions"]):
            out[tgt_r] = per_region[src_r]
        info = self.result_infos({p["input_quantity"]: data})
        q = next(iter(info.values())).quantity
        return {q.name: FieldData(q, self.target_mesh, out)}


class _ShepardNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        src = inputs[p["input_quantity"]]
        self._src = src
        q = FieldQuantity(
            name=p["output_quantity"], defined_on=src.quantity.defined_on,
            components=src.quantity.components, domain=src.quantity.domain,
            value_kind=src.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: ResultInfo(q, self.target_mesh)}

    def run(self, entry_idx, inputs):
        p = self.spec.params
        data = inputs[p["input_quantity"]]
        defined_on = data.quantity.defined_on
        src_pts = _entity_points(data.mesh, p["source_regions"], defined_on)
        tgt_pts, counts = interp.target_points_for(
            self.target_mesh, p["target_regions"], defined_on == "CELL")
        vals = _gather(data, p["source_regions"])
        try:
            out = interp.shepard_interpolate(
                src_pts, vals, tgt_pts, p["shepard"], data.mesh.diameter())
        except interp.InterpError as e:
            raise FilterRuntimeError(self.fid, str(e)) from e
        q = FieldQuantity(
            name=p["output_quantity"], defined_on=defined_on,
            components=data.quantity.components, domain=data.quantity.domain,
            value_kind=data.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: FieldData(q, self.target_mesh,
                                  _split(out, counts, p["target_regions"]))}


class _RbfInterpNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        rbf: interp.RbfParams = p["rbf"]
        src = inputs[p["input_quantity"]]
        if src.quantity.defined_on == "CELL" and not rbf.use_elem_as_target:
            raise PipelineError(
                f"filter '{self.fid}': element-based data can only be "
                "interpolated to cell centroids (set useElemAsTarget)"
            )
        if rbf.no_slip_wall is not None:
            self.target_mesh.region(rbf.no_slip_wall)  # must exist
        q = FieldQuantity(
            name=p["output_quantity"],
            defined_on="CELL" if rbf.use_elem_as_target else "NODE",
            components=src.quantity.components, domain=src.quantity.domain,
            value_kind=src.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: ResultInfo(q, self.target_mesh)}

    def run(self, entry_idx, inputs):
        p = self.spec.params
        rbf: interp.RbfParams = p["rbf"]
        data = inputs[p["input_quantity"]]
        src_pts = _entity_points(data.mesh, p["source_regions"],
                                 data.quantity.defined_on)
        tgt_pts, counts = interp.target_points_for(
            self.target_mesh, p["target_regions"], rbf.use_elem_as_target)
        vals = _gather(data, p["source_regions"])
        try:
            out = interp.rbf_interpolate(src_pts, vals, tgt_pts, rbf,
                                         data.mesh.diameter())
        except interp.InterpError as e:
            raise FilterRuntimeError(self.fid, str(e)) from e
        values = _split(out, counts, p["target_regions"])
        if rbf.no_slip_wall is not None and not rbf.use_elem_as_target:
            interp.apply_no_slip_wall(values, self.target_mesh,
                                      p["target_regions"], rbf.no_slip_wall)
        q = FieldQuantity(
            name=p["output_quantity"],
            defined_on="CELL" if rbf.use_elem_as_target else "NODE",
            components=data.quantity.components, domain=data.quantity.domain,
            value_kind=data.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: FieldData(q, self.target_mesh, values)}


class _ConservativeNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])
        self.cutcell = spec.ftype == "FieldInterpolation_Conservative_CutCell"

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        src = inputs[p["input_quantity"]]
        if src.quantity.defined_on != "CELL":
            raise PipelineError(
                f"filter '{self.fid}' ({self.spec.ftype}) needs CELL input, "
                f"got {src.quantity.defined_on}"
            )
        q = FieldQuantity(
            name=p["output_quantity"], defined_on="NODE",
            components=src.quantity.components, domain=src.quantity.domain,
            value_kind=src.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: ResultInfo(q, self.target_mesh)}

    def run(self, entry_idx, inputs):
        p = self.spec.params
        data = inputs[p["input_quantity"]]
        step = FieldStep(data.quantity, entry_idx, 0.0, data.values)
        fn = (conservative.conservative_cutcell if self.cutcell
              else conservative.conservative_centroid)
        try:
            loads, _report = fn(step, data.mesh, p["source_regions"],
                                self.target_mesh, p["target_regions"])
        except conservative.ConservativeError as e:
            raise FilterRuntimeError(self.fid, str(e)) from e
        q = FieldQuantity(
            name=p["output_quantity"], defined_on="NODE",
            components=data.quantity.components, domain=data.quantity.domain,
            value_kind=data.quantity.value_kind,
            regions=tuple(p["target_regions"]),
        )
        return {q.name: FieldData(q, self.target_mesh, loads)}


class _DifferentiationNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])
        self.op = {
            "SpaceDifferentiation_Gradient": "gradient",
            "SpaceDifferentiation_Divergence": "divergence",
            "SpaceDifferentiation_Curl": "curl",
        }[spec.ftype]
        self._stencils: StencilSet | None = None

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        src = inputs[p["input_quantity"]]
        if src.quantity.domain == "FREQUENCY":
            raise PipelineError(
                f"filter '{self.fid}': differentiation filters do not "
                "process frequency-domain data"
            )
        need = 1 if self.op == "gradient" else 3
        if src.quantity.components != need:
            raise PipelineError(
                f"filter '{self.fid}' ({self.spec.ftype}) needs a "
                f"{need}-component input, got {src.quantity.components}"
            )
        out_comps = 1 if self.op == "divergence" else 3
        q = FieldQuantity(
            name=p["output_quantity"], defined_on="NODE",
            components=out_comps, domain="TIME", value_kind="REAL",
            regions=tuple(p["target_regions"]),
        )
        return {q.name: ResultInfo(q, self.target_mesh)}

    def _ensure_stencils(self, data: FieldData):
        if self._stencils is None:
            p = self.spec.params
            src_pts = _entity_points(data.mesh, p["source_regions"],
                                     data.quantity.defined_on)
            tgt_pts, self._counts = interp.target_points_for(
                self.target_mesh, p["target_regions"], False)
            self._stencils = StencilSet(src_pts, tgt_pts, p["settings"],
                                        dimension=data.mesh.dimension)
        return self._stencils

    def run(self, entry_idx, inputs):
        from .derivatives import DerivativeError

        p = self.spec.params
        data = inputs[p["input_quantity"]]
        vals = _gather(data, p["source_regions"])
        try:
            stencils = self._ensure_stencils(data)
            out = getattr(stencils, self.op)(vals)
        except DerivativeError as e:
            raise FilterRuntimeError(self.fid, str(e)) from e
        q = next(iter(self.result_infos(
            {p["input_quantity"]: data}).values())).quantity
        return {q.name: FieldData(q, self.target_mesh,
                                  _split(out, self._counts,
                                         p["target_regions"]))}


class _AeroacousticNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.target_mesh = read_target_mesh(spec.params["target_mesh"])
        self._stencils: StencilSet | None = None
        self._self_stencils: StencilSet | None = None

    def required_inputs(self):
        p = self.spec.params
        req = [p["velocity"]]
        if p.get("vorticity"):
            req.append(p["vorticity"])
        return req

    def result_infos(self, inputs):
        p = self.spec.params
        vel = inputs[p["velocity"]]
        if vel.quantity.domain == "FREQUENCY":
            raise PipelineError(
                f"filter '{self.fid}': aeroacoustic filters do not process "
                "frequency-domain data"
            )
        if vel.quantity.components != 3:
            raise PipelineError(
                f"filter '{self.fid}': velocity '{p['velocity']}' must have "
                f"3 components, has {vel.quantity.components}"
            )
        comps = (1 if self.spec.ftype == "AeroacousticSource_LighthillSourceTerm"
                 else 3)
        q = FieldQuantity(
            name=p["output_quantity"], defined_on="NODE", components=comps,
            domain="TIME", value_kind="REAL",
            regions=tuple(p["target_regions"]),
        )
        return {q.name: ResultInfo(q, self.target_mesh)}

    def _ensure_stencils(self, data: FieldData):
        if self._stencils is None:
            p = self.spec.params
            src_pts = _entity_points(data.mesh, p["source_regions"],
                                     data.quantity.defined_on)
            tgt_pts, self._counts = interp.target_points_for(
                self.target_mesh, p["target_regions"], False)
            dim = data.mesh.dimension
            self._stencils = StencilSet(src_pts, tgt_pts, p["settings"],
                                        dimension=dim)
            if self.spec.ftype == "AeroacousticSource_LighthillSourceTerm":
                # The scalar term chains two derivatives: the vector is
                # evaluated on the source cloud first, then diverged.
                self._self_stencils = StencilSet(src_pts, src_pts,
                                                 p["settings"], dimension=dim)

    def run(self, entry_idx, inputs):
        from .derivatives import DerivativeError

        p = self.spec.params
        vel_data = inputs[p["velocity"]]
        u = _gather(vel_data, p["source_regions"])
        vort = None
        if p.get("vorticity"):
            vort = _gather(inputs[p["vorticity"]], p["source_regions"])
        try:
            self._ensure_stencils(vel_data)
            if self.spec.ftype == "AeroacousticSource_LambVector":
                out = aeroacoustic.lamb_vector(self._stencils, u, vort)
            elif self.spec.ftype == "AeroacousticSource_LighthillSourceTermVector":
                out = aeroacoustic.lighthill_vector(self._stencils, u, vort)
            else:
                out = aeroacoustic.lighthill_scalar(
                    self._self_stencils, self._stencils, u, vort)
        except (DerivativeError, aeroacoustic.AeroacousticError) as e:
            raise FilterRuntimeError(self.fid, str(e)) from e
        q = next(iter(self.result_infos(inputs).values())).quantity
        return {q.name: FieldData(q, self.target_mesh,
                                  _split(out, self._counts,
                                         p["target_regions"]))}


class _TimeDerivNode(_Node):
    """The only cross-step state in the pipeline: a 5-step ring buffer."""

    def __init__(self, spec: FilterSpec, schedule: StepSchedule):
        super().__init__(spec)
        if len(schedule) < aeroacoustic.TIME_DERIV_WINDOW:
            raise PipelineError(
                f"timeDeriv1 '{spec.fid}' requires at least "
                f"{aeroacoustic.TIME_DERIV_WINDOW} steps, schedule has "
                f"{len(schedule)}"
            )
        try:
            self.dt = aeroacoustic.check_uniform_dt(
                [e.match_value for e in schedule.entries])
        except aeroacoustic.AeroacousticError as e:
            raise PipelineError(f"timeDeriv1 '{spec.fid}': {e}") from e
        self.window: list[tuple[int, FieldData]] = []
        log.info("timeDeriv1 '%s': output drops the first and last %d "
                 "schedule entries", spec.fid,
                 aeroacoustic.TIME_DERIV_HALF_WIDTH)

    def required_inputs(self):
        return [self.spec.params["input_quantity"]]

    def result_infos(self, inputs):
        p = self.spec.params
        src = inputs[p["input_quantity"]]
        if src.quantity.domain == "FREQUENCY":
            raise PipelineError(
                f"filter '{self.fid}': time derivative of frequency-domain "
                "data is meaningless"
            )
        q = FieldQuantity(
            name=p["output_quantity"], defined_on=src.quantity.defined_on,
            components=src.quantity.components, domain="TIME",
            value_kind="REAL", regions=src.quantity.regions,
        )
        return {q.name: ResultInfo(q, src.mesh)}

    def run(self, entry_idx, inputs):
        p = self.spec.params
        data = inputs[p["input_quantity"]]
        self.window.append((entry_idx, data))
        if len(self.window) > aeroacoustic.TIME_DERIV_WINDOW:
            self.window.pop(0)
        if len(self.window) < aeroacoustic.TIME_DERIV_WINDOW:
            return None
        center_idx, center = self.window[aeroacoustic.TIME_DERIV_HALF_WIDTH]
        q = next(iter(self.result_infos(inputs).values())).quantity
        values = {}
        for region in q.regions:
            stack = np.stack([d.values[region] for _, d in self.window])
            values[region] = aeroacoustic.time_derivative(stack, self.dt)
        return center_idx, {q.name: FieldData(q, center.mesh, values)}


class _OutputNode(_Node):
    def __init__(self, spec: FilterSpec):
        super().__init__(spec)
        self.writer: ContainerWriter | None = None
        self.written: list[tuple[str, int]] = []

    def required_inputs(self):
        return [name for name, _ in self.spec.params["results"]]

    def prepare(self, produced: dict[str, ResultInfo], analysis: str,
                dry_run: bool = False):
        """Resolve the persisted subset and (unless dry_run) open the
        container."""
        p = self.spec.params
        requested = p["results"]
        if not requested:
            requested = [(name, None) for name in produced]
        self.saved: list[tuple[str, FieldQuantity]] = []
        mesh = None
        for name, regions in requested:
            if name not in produced:
                raise PipelineError(
                    f"meshOutput '{self.fid}': result '{name}' is not "
                    f"produced by its input filters "
                    f"(available: {sorted(produced)})"
                )
            info = produced[name]
            if regions is None:
                q = info.quantity
            else:
                for r in regions:
                    if r not in info.quantity.regions:
                        raise PipelineError(
                            f"meshOutput '{self.fid}': result '{name}' does "
                            f"not cover region '{r}' "
                            f"(covers {list(info.quantity.regions)})"
                        )
                q = FieldQuantity(
                    name=info.quantity.name,
                    defined_on=info.quantity.defined_on,
                    components=info.quantity.components,
                    domain=info.quantity.domain,
                    value_kind=info.quantity.value_kind,
                    regions=tuple(regions),
                )
            check_reserved_name(q)
            if mesh is None:
                mesh = info.mesh
            elif mesh is not info.mesh and not mesh.same_geometry(info.mesh):
                raise PipelineError(
                    f"meshOutput '{self.fid}': results live on different "
                    "meshes"
                )
            self.saved.append((name, q))
        self.mesh = mesh
        if not dry_run:
            self.writer = ContainerWriter(p["path"], mesh, analysis=analysis)
            for _, q in self.saved:
                self.writer.add_quantity(q)

    def write_entry(self, entry_idx: int, output_value: float,
                    inputs: dict[str, FieldData]):
        for name, q in self.saved:
            data = inputs.get(name)
            if data is None:
                continue  # e.g. a dropped time-derivative boundary step
            values = {r: np.ascontiguousarray(data.values[r])
                      for r in q.regions}
            step = FieldStep(q, entry_idx, output_value, values)
            self.writer.write_step(step)
            self.written.append((q.name, entry_idx))

    def rollback_entry(self, entry_idx: int):
        if self.writer is None:
            return
        doomed = [(n, i) for n, i in self.written if i == entry_idx]
        for name, idx in doomed:
            fn = os.path.join(self.writer.path, "results", name,
                              f"step_{idx}.bin")
            if os.path.exists(fn):
                os.remove(fn)
            subset = self.writer.manifest.quantity_steps.get(name, [])
            if idx in subset:
                subset.remove(idx)
        if doomed:
            still = {i for qs in self.writer.manifest.quantity_steps.values()
                     for i in qs}
            self.writer.manifest.steps = [
                (i, v) for i, v in self.writer.manifest.steps if i in still
            ]
            self.writer._flush_manifest()


_NODE_CLASSES = {
    "FieldInterpolation_Node2Cell": _RelocationNode,
    "FieldInterpolation_Cell2Node": _RelocationNode,
    "FieldInterpolation_NearestNeighbour": _ShepardNode,
    "FieldInterpolation_RBF": _RbfInterpNode,
    "FieldInterpolation_Conservative_CellCentroid": _ConservativeNode,
    "FieldInterpolation_Conservative_CutCell": _ConservativeNode,
    "SpaceDifferentiation_Gradient": _DifferentiationNode,
    "SpaceDifferentiation_Divergence": _DifferentiationNode,
    "SpaceDifferentiation_Curl": _DifferentiationNode,
    "AeroacousticSource_LambVector": _AeroacousticNode,
    "AeroacousticSource_LighthillSourceTerm": _AeroacousticNode,
    "AeroacousticSource_LighthillSourceTermVector": _AeroacousticNode,
}


class Pipeline:
    """A validated, executable pipeline."""

    def __init__(self, doc: PipelineDocument, threads: int | None = None,
                 dry_run: bool = False):
        self.doc = doc
        self.threads = threads or (os.cpu_count() or 1)
        self.dry_run = dry_run
        self.nodes: dict[str, _Node] = {}
        input_spec = doc.filters[doc.input_id]
        self.input_node = _InputNode(input_spec)
        self.nodes[doc.input_id] = self.input_node
        available = self.input_node.manifest.steps
        self.schedule = resolve_schedule(doc.svd, available)
        self.analysis = self.input_node.manifest.analysis

        for fid in doc.order:
            spec = doc.filters[fid]
            if spec.element == "meshInput":
                continue
            if spec.element == "meshOutput":
                self.nodes[fid] = _OutputNode(spec)
            elif spec.element == "timeDeriv1":
                self.nodes[fid] = _TimeDerivNode(spec, self.schedule)
            else:
                self.nodes[fid] = _NODE_CLASSES[spec.ftype](spec)

        # Static result metadata, propagated in topological order.
        self.infos: dict[str, dict[str, ResultInfo]] = {}
        self.infos[doc.input_id] = self.input_node.result_infos({})
        for fid in doc.order:
            spec = doc.filters[fid]
            if spec.element == "meshInput":
                continue
            upstream = self._collect_infos(spec)
            node = self.nodes[fid]
            if spec.element == "meshOutput":
                node.prepare(upstream, self.analysis, dry_run=dry_run)
                self.infos[fid] = {}
            else:
                for name in node.required_inputs():
                    if name not in upstream:
                        raise PipelineError(
                            f"filter '{fid}': input quantity '{name}' is not "
                            f"produced by {spec.inputs} "
                            f"(available: {sorted(upstream)})"
                        )
                self.infos[fid] = node.result_infos(upstream)

        # Which quantities each consumer actually pulls from the input.
        self.input_wanted: set[str] = set()
        for fid, spec in doc.filters.items():
            if doc.input_id in spec.inputs and spec.element != "meshInput":
                node = self.nodes[fid]
                names = (node.required_inputs() if spec.element != "meshOutput"
                         else [n for n, _ in node.saved])
                self.input_wanted.update(
                    n for n in names if n in self.infos[doc.input_id]
                )

    def _collect_infos(self, spec: FilterSpec) -> dict[str, ResultInfo]:
        out: dict[str, ResultInfo] = {}
        for dep in spec.inputs:
            for name, info in self.infos[dep].items():
                if name in out:
                    raise PipelineError(
                        f"filter '{spec.fid}': result name '{name}' produced "
                        f"by more than one input filter"
                    )
                out[name] = info
        return out

    def execute(self):
        if self.dry_run:
            raise PipelineError("pipeline was loaded in validation mode")
        doc = self.doc
        t0 = time.monotonic()
        # Per-filter mailbox: entry index -> accumulated named inputs.
        inbox: dict[str, dict[int, dict[str, FieldData]]] = {
            fid: {} for fid in doc.filters
        }
        outputs_written = 0
        for j, entry in enumerate(self.schedule.entries):
            log.info("step %d/%d (input value %g)", j + 1,
                     len(self.schedule), entry.match_value)
            written_this_entry: list[tuple[_OutputNode, int]] = []
            try:
                produced = self.input_node.read(j, entry, self.input_wanted)
                self._route(doc.input_id, j, produced, inbox)
                for fid in doc.order:
                    spec = doc.filters[fid]
                    if spec.element == "meshInput":
                        continue
                    node = self.nodes[fid]
                    ready = sorted(
                        idx for idx, bundle in inbox[fid].items()
                        if all(name in bundle
                               for name in self._needed(node, spec))
                    )
                    for idx in ready:
                        bundle = inbox[fid].pop(idx)
                        if spec.element == "meshOutput":
                            out_value = self.schedule.entries[idx].output_value
                            node.write_entry(idx, out_value, bundle)
                            written_this_entry.append((node, idx))
                            outputs_written += 1
                        elif spec.element == "timeDeriv1":
                            emitted = node.run(idx, bundle)
                            if emitted is not None:
                                emit_idx, data = emitted
                                self._route(fid, emit_idx, data, inbox)
                        else:
                            data = node.run(idx, bundle)
                            self._route(fid, idx, data, inbox)
            except Exception:
                # Keep the containers consistent: drop anything written for
                # the entry that failed; finished entries stay on disk.
                for node, idx in written_this_entry:
                    node.rollback_entry(idx)
                raise
        # Flush sinks that still hold partial bundles (e.g. the final
        # entries of a pipeline whose other branch is a time derivative).
        for fid in doc.order:
            spec = doc.filters[fid]
            if spec.element != "meshOutput":
                continue
            node = self.nodes[fid]
            for idx in sorted(inbox[fid]):
                bundle = inbox[fid].pop(idx)
                if bundle:
                    out_value = self.schedule.entries[idx].output_value
                    node.write_entry(idx, out_value, bundle)
        for fid in doc.order:
            if doc.filters[fid].element == "meshOutput":
                self.nodes[fid].writer.close()
        elapsed = time.monotonic() - t0
        quantities = sum(
            len(self.nodes[fid].saved) for fid in doc.order
            if doc.filters[fid].element == "meshOutput"
        )
        log.info("done: %d steps, %d output quantities, %.2f s wall time",
                 len(self.schedule), quantities, elapsed)

    def _needed(self, node: _Node, spec: FilterSpec) -> list[str]:
        if spec.element == "meshOutput":
            # Sinks wait for every saved result that its inputs can deliver.
            return [name for name, _ in node.saved]
        return node.required_inputs()

    def _route(self, producer: str, entry_idx: int,
               data: dict[str, FieldData], inbox):
        for fid, spec in self.doc.filters.items():
            if producer in spec.inputs:
                box = inbox[fid].setdefault(entry_idx, {})
                box.update(data)


def load_pipeline(path: str, threads: int | None = None,
                  dry_run: bool = False) -> Pipeline:
    return Pipeline(parse_pipeline(path), threads=threads, dry_run=dry_run)
