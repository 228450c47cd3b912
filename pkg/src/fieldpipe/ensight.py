"""Ensight Gold ASCII reader: case file, geometry, transient variables.

Scope: ASCII only (binary files are rejected), one time set, the element
types tria3/quad4/tetra4/pyramid5/penta6/hexa8, "coordinates" node blocks.
Parts become mesh regions named by their description line (trimmed, spaces
replaced by underscores).  All indices are converted to 0-based on read.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .container import Manifest
from .mesh import ElementBlock, ElementType, FieldQuantity, FieldStep, Mesh

log = logging.getLogger(__name__)


class EnsightError(Exception):
    pass


_ETYPE_NAMES = {
    "tria3": ElementType.TRIA3,
    "quad4": ElementType.QUAD4,
    "tetra4": ElementType.TETRA4,
    "pyramid5": ElementType.PYRAMID5,
    "penta6": ElementType.PENTA6,
    "hexa8": ElementType.HEXA8,
}

_VAR_KINDS = {
    "scalar per node": ("NODE", 1),
    "vector per node": ("NODE", 3),
    "scalar per element": ("CELL", 1),
    "vector per element": ("CELL", 3),
}


@dataclass
class EnsightVariable:
    name: str
    pattern: str  # filename, possibly with a '*' wildcard run
    defined_on: str
    components: int


@dataclass
class EnsightCase:
    directory: str
    geometry: str
    variables: dict[str, EnsightVariable] = field(default_factory=dict)
    num_steps: int = 1
    filename_numbers: list[int] = field(default_factory=list)
    time_values: list[float] = field(default_factory=list)

    def step_filename(self, var: EnsightVariable, step: int) -> str:
        m = re.search(r"\*+", var.pattern)
        if m is None:
            return os.path.join(self.directory, var.pattern)
        width = m.end() - m.start()
        number = self.filename_numbers[step]
        digits = str(number)
        if len(digits) > width:
            raise EnsightError(
                f"filename number {number} wider than wildcard in "
                f"'{var.pattern}'"
            )
        fn = var.pattern[:m.start()] + digits.zfill(width) + var.pattern[m.end():]
        return os.path.join(self.directory, fn)


def sanitize_part_name(desc: str) -> str:
    return "_".join(desc.strip().split())


def _read_ascii_lines(path: str, what: str) -> list[str]:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise EnsightError(f"{path}: missing ({what})") from None
    if b"\x00" in raw[:4096]:
        raise EnsightError(f"{path}: binary Ensight not supported (ASCII only)")
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise EnsightError(
            f"{path}: non-ASCII content; ASCII only"
        ) from None
    return text.splitlines()


def parse_case(path: str) -> EnsightCase:
    lines = _read_ascii_lines(path, "case file")
    case = EnsightCase(directory=os.path.dirname(os.path.abspath(path)),
                       geometry="")
    section = None
    filename_start, filename_inc = 0, 1
    explicit_numbers: list[int] = []
    pending_times = False
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        upper = stripped.upper()
        if upper in ("FORMAT", "GEOMETRY", "VARIABLE", "TIME", "FILE"):
            section = upper
            pending_times = False
            continue
        if pending_times and section == "TIME":
            try:
                case.time_values.extend(float(t) for t in stripped.split())
                continue
            except ValueError:
                pending_times = False
        key, _, value = stripped.partition(":")
        key = key.strip().lower()
        value = value.strip()
        if section == "FORMAT":
            if key == "type" and "gold" not in value.lower():
                raise EnsightError(f"{path}: unsupported format '{value}'")
        elif section == "GEOMETRY":
            if key == "model":
                toks = value.split()
                # Optional leading time/file set numbers.
                while toks and toks[0].isdigit():
                    toks.pop(0)
                case.geometry = toks[0] if toks else ""
        elif section == "VARIABLE":
            if key in _VAR_KINDS:
                defined_on, comps = _VAR_KINDS[key]
                toks = value.split()
                while toks and toks[0].isdigit():
                    toks.pop(0)  # time set / file set references
                if len(toks) < 2:
                    raise EnsightError(
                        f"{path}: malformed variable line '{stripped}'"
                    )
                pattern = toks[-1]
                name = " ".join(toks[:-1])
                case.variables[name] = EnsightVariable(
                    name, pattern, defined_on, comps
                )
        elif section == "TIME":
            if key == "number of steps":
                case.num_steps = int(value)
            elif key == "filename start number":
                filename_start = int(value)
            elif key == "filename increment":
                filename_inc = int(value)
            elif key == "filename numbers":
                explicit_numbers.extend(int(t) for t in value.split())
            elif key == "time values":
                case.time_values.extend(float(t) for t in value.split())
                pending_times = True
    if not case.geometry:
        raise EnsightError(f"{path}: no geometry model defined")
    if explicit_numbers:
        case.filename_numbers = explicit_numbers
    else:
        case.filename_numbers = [
            filename_start + i * filename_inc for i in range(case.num_steps)
        ]
    if case.time_values and len(case.time_values) != case.num_steps:
        raise EnsightError(
            f"{path}: {len(case.time_values)} time values for "
            f"{case.num_steps} steps"
        )
    if not case.time_values:
        case.time_values = [float(i) for i in range(case.num_steps)]
    return case


class _Cursor:
    def __init__(self, lines: list[str], path: str):
        self.lines = lines
        self.pos = 0
        self.path = path

    def peek(self):
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            return None
        return self.lines[self.pos].strip()

    def next(self):
        line = self.peek()
        if line is None:
            raise EnsightError(f"{self.path}: unexpected end of file")
        self.pos += 1
        return line

    def next_floats(self, n: int) -> np.ndarray:
        vals = np.empty(n)
        for i in range(n):
            vals[i] = float(self.next())
        return vals


def parse_geometry(path: str):
    """Returns (Mesh, part node ranges {region: (start, count)})."""
    lines = _read_ascii_lines(path, "geometry")
    cur = _Cursor(lines, path)
    cur.next()  # description line 1
    cur.next()  # description line 2
    node_id_mode = "off"
    elem_id_mode = "off"
    line = cur.peek()
    while line is not None and not line.lower().startswith("part"):
        low = line.lower()
        if low.startswith("node id"):
            node_id_mode = low.split()[-1]
        elif low.startswith("element id"):
            elem_id_mode = low.split()[-1]
        elif low.startswith("extents"):
            cur.next()
            for _ in range(3):
                cur.next()
            line = cur.peek()
            continue
        else:
            raise EnsightError(f"{path}: unexpected line '{line}'")
        cur.next()
        line = cur.peek()

    all_nodes: list[np.ndarray] = []
    regions: dict[str, list[ElementBlock]] = {}
    node_ranges: dict[str, tuple[int, int]] = {}
    offset = 0
    while cur.peek() is not None:
        if cur.next().lower() != "part":
            raise EnsightError(f"{path}: expected 'part'")
        cur.next()  # part number
        name = sanitize_part_name(cur.next())
        if name in regions:
            raise EnsightError(f"{path}: duplicate part name '{name}'")
        if cur.next().lower() != "coordinates":
            raise EnsightError(
                f"{path}: only 'coordinates' node blocks are supported"
            )
        n = int(cur.next())
        if node_id_mode in ("given", "ignore"):
            for _ in range(n):
                cur.next()
        xs = cur.next_floats(n)
        ys = cur.next_floats(n)
        zs = cur.next_floats(n)
        all_nodes.append(np.stack([xs, ys, zs], axis=1))
        node_ranges[name] = (offset, n)
        blocks = []
        while True:
            line = cur.peek()
            if line is None or line.lower() == "part":
                break
            etype_name = cur.next().lower()
            etype = _ETYPE_NAMES.get(etype_name)
            if etype is None:
                raise EnsightError(
                    f"{path}: unsupported element type '{etype_name}'"
                )
            ne = int(cur.next())
            if elem_id_mode in ("given", "ignore"):
                for _ in range(ne):
                    cur.next()
            conn = np.empty((ne, etype.num_nodes), dtype=np.int64)
            for i in range(ne):
                toks = cur.next().split()
                if len(toks) != etype.num_nodes:
                    raise EnsightError(
                        f"{path}: element {i} of '{etype_name}' has "
                        f"{len(toks)} nodes, expected {etype.num_nodes}"
                    )
                conn[i] = [int(t) for t in toks]
            blocks.append(ElementBlock(etype, conn - 1 + offset))
        regions[name] = blocks
        offset += n
    mesh = Mesh(np.vstack(all_nodes) if all_nodes else np.empty((0, 3)),
                regions)
    return mesh, node_ranges


def _parse_variable_file(path: str, var: EnsightVariable, mesh: Mesh,
                         node_ranges) -> dict[str, np.ndarray]:
    lines = _read_ascii_lines(path, f"variable {var.name}")
    cur = _Cursor(lines, path)
    cur.next()  # description
    part_names = list(node_ranges.keys())
    out: dict[str, np.ndarray] = {}
    while cur.peek() is not None:
        if cur.next().lower() != "part":
            raise EnsightError(f"{path}: expected 'part'")
        part_no = int(cur.next())
        if not 1 <= part_no <= len(part_names):
            raise EnsightError(f"{path}: part number {part_no} out of range")
        region = part_names[part_no - 1]
        if var.defined_on == "NODE":
            if cur.next().lower() != "coordinates":
                raise EnsightError(f"{path}: expected 'coordinates'")
            n = node_ranges[region][1]
            comps = [cur.next_floats(n) for _ in range(var.components)]
            out[region] = np.stack(comps, axis=1)
        else:
            total = []
            while True:
                line = cur.peek()
                if line is None or line.lower() == "part":
                    break
                etype_name = cur.next().lower()
                etype = _ETYPE_NAMES.get(etype_name)
                if etype is None:
                    raise EnsightError(
                        f"{path}: unsupported element type '{etype_name}'"
                    )
                ne = next(
                    b.num_elements for b in mesh.region(region)
                    if b.etype is etype
                )
                comps = [cur.next_floats(ne) for _ in range(var.components)]
                total.append(np.stack(comps, axis=1))
            out[region] = np.vstack(total)
    return out


class EnsightReader:
    """Lazily reads mapped variables step by step."""

    def __init__(self, case_path: str, variable_map: list[tuple[str, str]],
                 fix_fv_pyramids_requested: bool = False):
        if fix_fv_pyramids_requested:
            log.warning("fixFVPyramids: option ignored")
        self.case = parse_case(case_path)
        cfs_names = [c for c, _ in variable_map]
        if len(set(cfs_names)) != len(cfs_names):
            raise EnsightError("duplicate CFSVarName entries in variable map")
        self._map: dict[str, EnsightVariable] = {}
        for cfs_name, ens_name in variable_map:
            var = self.case.variables.get(ens_name)
            if var is None:
                raise EnsightError(
                    f"variable '{ens_name}' not in case file; available: "
                    f"{sorted(self.case.variables)}"
                )
            self._map[cfs_name] = var
        geo = os.path.join(self.case.directory, self.case.geometry)
        self.mesh, self._node_ranges = parse_geometry(geo)
        quantities = []
        for cfs_name, var in self._map.items():
            # Peek the first step file to learn which parts carry the data.
            first = self.case.step_filename(var, 0)
            vals = _parse_variable_file(first, var, self.mesh,
                                        self._node_ranges)
            quantities.append(FieldQuantity(
                name=cfs_name, defined_on=var.defined_on,
                components=var.components, domain="TIME", value_kind="REAL",
                regions=tuple(vals.keys()),
            ))
        self.manifest = Manifest(
            analysis="TIME",
            steps=[(i, t) for i, t in enumerate(self.case.time_values)],
            quantities=quantities,
        )
        self.manifest.validate()

    def read_step(self, quantity: str, step_index: int) -> FieldStep:
        q = self.manifest.quantity(quantity)
        var = self._map[quantity]
        fn = self.case.step_filename(var, step_index)
        vals = _parse_variable_file(fn, var, self.mesh, self._node_ranges)
        for region in q.regions:
            n = self.mesh.entity_count(region, q.defined_on)
            if region not in vals or vals[region].shape != (n, q.components):
                raise EnsightError(
                    f"{fn}: region '{region}' has wrong shape for "
                    f"'{quantity}'"
                )
        return FieldStep(q, step_index, self.case.time_values[step_index],
                         {r: vals[r] for r in q.regions})


def read_ensight(case_path: str, variable_map: list[tuple[str, str]],
                 fix_fv_pyramids_requested: bool = False):
    """(Mesh, Manifest, step reader) for an ASCII Ensight Gold dataset."""
    reader = EnsightReader(case_path, variable_map, fix_fv_pyramids_requested)
    return reader.mesh, reader.manifest, reader
