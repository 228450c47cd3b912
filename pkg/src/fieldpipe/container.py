"""Native field-data container: a `<name>.cfsd/` directory.

Layout (all binary blobs little-endian):

    manifest.json                    analysis kind, steps, quantity descriptors
    mesh.json                        dimension, node count, region block table
    nodes.bin                        float64, xyz interleaved, 3*N*8 bytes
    conn_<region>_<blockIdx>.bin     uint32 node indices, element-major
    results/<quantity>/step_<k>.bin  float64, entity-major, components
                                     contiguous; COMPLEX stores re,im per
                                     component

Reads validate exact byte lengths so corruption is caught at open time, not
as garbage numbers downstream.  Step files are written atomically
(temp + rename) and can be read in any order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .mesh import ElementBlock, ElementType, FieldQuantity, FieldStep, Mesh

FORMAT_VERSION = 1


class ContainerError(Exception):
    pass


@dataclass
class Manifest:
    analysis: str = "TIME"  # TIME | FREQUENCY
    steps: list[tuple[int, float]] = field(default_factory=list)
    quantities: list[FieldQuantity] = field(default_factory=list)
    # Optional per-quantity subset of step indices (e.g. time-derivative
    # outputs drop the first/last two steps).  Absent key = all steps.
    quantity_steps: dict[str, list[int]] = field(default_factory=dict)

    def validate(self):
        names = [q.name for q in self.quantities]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ContainerError(f"duplicate quantity names: {dupes}")
        vals = [v for _, v in self.steps]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ContainerError("step values must be strictly increasing")

    def quantity(self, name: str) -> FieldQuantity:
        for q in self.quantities:
            if q.name == name:
                return q
        raise ContainerError(f"unknown quantity '{name}'")

    def steps_for(self, name: str) -> list[tuple[int, float]]:
        subset = self.quantity_steps.get(name)
        if subset is None:
            return list(self.steps)
        byidx = dict(self.steps)
        return [(k, byidx[k]) for k in subset]


def _quantity_to_json(q: FieldQuantity, mesh: Mesh) -> dict:
    return {
        "name": q.name,
        "defined_on": q.defined_on,
        "components": q.components,
        "domain": q.domain,
        "value_kind": q.value_kind,
        "regions": {r: mesh.entity_count(r, q.defined_on) for r in q.regions},
    }


def _quantity_from_json(d: dict) -> tuple[FieldQuantity, dict[str, int]]:
    q = FieldQuantity(
        name=d["name"], defined_on=d["defined_on"],
        components=int(d["components"]), domain=d.get("domain", "TIME"),
        value_kind=d.get("value_kind", "REAL"),
        regions=tuple(d["regions"].keys()),
    )
    return q, {r: int(n) for r, n in d["regions"].items()}


def _atomic_write_bytes(path: str, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _atomic_write_json(path: str, obj):
    _atomic_write_bytes(path, json.dumps(obj, indent=1).encode("utf-8"))


def _read_exact(path: str, nbytes: int, what: str) -> bytes:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise ContainerError(f"{path}: missing ({what})") from None
    if len(data) != nbytes:
        raise ContainerError(
            f"{path}: expected {what} = {nbytes} bytes, found {len(data)}"
        )
    return data


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ContainerError(f"{path}: missing") from None
    except json.JSONDecodeError as e:
        raise ContainerError(f"{path}: malformed JSON ({e})") from None


def write_mesh(path: str, mesh: Mesh):
    os.makedirs(path, exist_ok=True)
    meshdoc = {
        "format_version": FORMAT_VERSION,
        "dimension": mesh.dimension,
        "num_nodes": len(mesh.nodes),
        "regions": {
            name: [
                {"etype": blk.etype.value, "num_elements": blk.num_elements}
                for blk in blocks
            ]
            for name, blocks in mesh.regions.items()
        },
    }
    _atomic_write_json(os.path.join(path, "mesh.json"), meshdoc)
    _atomic_write_bytes(
        os.path.join(path, "nodes.bin"),
        np.ascontiguousarray(mesh.nodes, dtype="<f8").tobytes(),
    )
    for name, blocks in mesh.regions.items():
        for bi, blk in enumerate(blocks):
            _atomic_write_bytes(
                os.path.join(path, f"conn_{name}_{bi}.bin"),
                np.ascontiguousarray(blk.connectivity, dtype="<u4").tobytes(),
            )


def read_mesh(path: str) -> Mesh:
    doc = _load_json(os.path.join(path, "mesh.json"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise ContainerError(
            f"{path}/mesh.json: unknown format_version "
            f"{doc.get('format_version')!r}"
        )
    n = int(doc["num_nodes"])
    raw = _read_exact(os.path.join(path, "nodes.bin"), 3 * n * 8,
                      f"3*{n}*8 bytes")
    nodes = np.frombuffer(raw, dtype="<f8").reshape(n, 3)
    regions = {}
    for name, blockdocs in doc["regions"].items():
        blocks = []
        for bi, bd in enumerate(blockdocs):
            etype = ElementType(bd["etype"])
            ne = int(bd["num_elements"])
            fn = os.path.join(path, f"conn_{name}_{bi}.bin")
            raw = _read_exact(fn, ne * etype.num_nodes * 4,
                              f"{ne}*{etype.num_nodes}*4 bytes")
            conn = np.frombuffer(raw, dtype="<u4").astype(np.int64)
            blocks.append(ElementBlock(etype, conn.reshape(ne, etype.num_nodes)))
        regions[name] = blocks
    return Mesh(nodes, regions)


def _step_nbytes(q: FieldQuantity, counts: dict[str, int]) -> int:
    per_val = 16 if q.value_kind == "COMPLEX" else 8
    return sum(counts[r] for r in q.regions) * q.components * per_val


def _encode_step(q: FieldQuantity, values: dict[str, np.ndarray]) -> bytes:
    parts = []
    for r in q.regions:
        arr = values[r]
        if q.value_kind == "COMPLEX":
            arr = np.ascontiguousarray(arr, dtype="<c16")
        else:
            arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(arr.tobytes())
    return b"".join(parts)


def _decode_step(q: FieldQuantity, counts: dict[str, int],
                 raw: bytes) -> dict[str, np.ndarray]:
    dtype = "<c16" if q.value_kind == "COMPLEX" else "<f8"
    out = {}
    off = 0
    for r in q.regions:
        n = counts[r] * q.components
        width = n * (16 if q.value_kind == "COMPLEX" else 8)
        arr = np.frombuffer(raw[off:off + width], dtype=dtype)
        out[r] = arr.reshape(counts[r], q.components).copy()
        off += width
    return out


class ContainerReader:
    """Random-access reader; step k can be read without touching steps < k."""

    def __init__(self, path: str):
        self.path = path
        doc = _load_json(os.path.join(path, "manifest.json"))
        if doc.get("format_version") != FORMAT_VERSION:
            raise ContainerError(
                f"{path}/manifest.json: unknown format_version "
                f"{doc.get('format_version')!r}"
            )
        quantities, counts = [], {}
        for qd in doc.get("quantities", []):
            q, c = _quantity_from_json(qd)
            quantities.append(q)
            counts[q.name] = c
        self.manifest = Manifest(
            analysis=doc.get("analysis", "TIME"),
            steps=[(int(k), float(v)) for k, v in doc.get("steps", [])],
            quantities=quantities,
            quantity_steps={k: [int(i) for i in v]
                            for k, v in doc.get("quantity_steps", {}).items()},
        )
        self.manifest.validate()
        self._counts = counts
        self.mesh = read_mesh(path)
        # Entity counts stored in the manifest must match the mesh.
        for q in quantities:
            for r, n in counts[q.name].items():
                have = self.mesh.entity_count(r, q.defined_on)
                if have != n:
                    raise ContainerError(
                        f"{path}: quantity '{q.name}' region '{r}': manifest "
                        f"count {n} != mesh count {have}"
                    )

    def read_step(self, quantity: str, step_index: int) -> FieldStep:
        q = self.manifest.quantity(quantity)
        value = dict(self.manifest.steps).get(step_index)
        if value is None:
            raise ContainerError(
                f"{self.path}: step index {step_index} not in manifest"
            )
        fn = os.path.join(self.path, "results", quantity,
                          f"step_{step_index}.bin")
        counts = self._counts[quantity]
        raw = _read_exact(fn, _step_nbytes(q, counts),
                          f"{q.name} step {step_index}")
        return FieldStep(q, step_index, value, _decode_step(q, counts, raw))


class ContainerWriter:
    """Incremental writer: mesh first, steps as they arrive.

    The manifest is rewritten atomically after every completed step so an
    aborted run still leaves a readable container holding the finished steps.
    """

    def __init__(self, path: str, mesh: Mesh, analysis: str = "TIME"):
        if os.path.exists(path) and os.listdir(path):
            # Overwrite semantics: a fresh run replaces the container.
            for root, dirs, files in os.walk(path, topdown=False):
                for f in files:
                    os.remove(os.path.join(root, f))
                for d in dirs:
                    os.rmdir(os.path.join(root, d))
        self.path = path
        self.mesh = mesh
        self.manifest = Manifest(analysis=analysis)
        write_mesh(path, mesh)
        self._flush_manifest()

    def add_quantity(self, q: FieldQuantity):
        if any(existing.name == q.name for existing in self.manifest.quantities):
            raise ContainerError(f"quantity '{q.name}' already declared")
        self.manifest.quantities.append(q)
        os.makedirs(os.path.join(self.path, "results", q.name), exist_ok=True)

    def write_step(self, step: FieldStep):
        q = step.quantity
        if all(existing.name != q.name for existing in self.manifest.quantities):
            raise ContainerError(f"quantity '{q.name}' not declared")
        step.validate(self.mesh)
        fn = os.path.join(self.path, "results", q.name,
                          f"step_{step.step_index}.bin")
        _atomic_write_bytes(fn, _encode_step(q, step.values))
        known = dict(self.manifest.steps)
        if step.step_index not in known:
            self.manifest.steps.append((step.step_index, step.step_value))
            self.manifest.steps.sort()
        self.manifest.quantity_steps.setdefault(q.name, [])
        if step.step_index not in self.manifest.quantity_steps[q.name]:
            self.manifest.quantity_steps[q.name].append(step.step_index)
            self.manifest.quantity_steps[q.name].sort()
        self._flush_manifest()

    def _flush_manifest(self):
        self.manifest.validate()
        doc = {
            "format_version": FORMAT_VERSION,
            "analysis": self.manifest.analysis,
            "steps": [[k, v] for k, v in self.manifest.steps],
            "quantities": [
                _quantity_to_json(q, self.mesh)
                for q in self.manifest.quantities
            ],
            "quantity_steps": self.manifest.quantity_steps,
        }
        _atomic_write_json(os.path.join(self.path, "manifest.json"), doc)

    def close(self):
        self._flush_manifest()


def write_native(path: str, mesh: Mesh, manifest: Manifest, steps):
    """Write a whole container from an iterable of FieldStep."""
    w = ContainerWriter(path, mesh, analysis=manifest.analysis)
    for q in manifest.quantities:
        w.add_quantity(q)
    for step in steps:
        w.write_step(step)
    # Geometry-only containers still record the declared schedule.
    if not w.manifest.steps and manifest.steps:
        w.manifest.steps = list(manifest.steps)
    w.close()


def read_native(path: str) -> ContainerReader:
    return ContainerReader(path)


def read_target_mesh(path: str) -> Mesh:
    """Geometry from a native container; any field data present is ignored."""
    return read_mesh(path)


def strip_mesh(in_path: str, out_path: str):
    """Write a geometry-only copy of a container (zero quantities)."""
    mesh = read_mesh(in_path)
    write_native(out_path, mesh, Manifest(), [])
