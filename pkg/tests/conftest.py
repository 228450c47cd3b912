import numpy as np
import pytest

from fieldpipe import ElementBlock, ElementType, FieldQuantity, Manifest, Mesh


def grid_hex_mesh(nx, ny, nz, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0),
                  region="volume"):
    """Structured HEXA8 grid with nx*ny*nz cells, nodes in x-fastest order."""
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    zs = np.linspace(lo[2], hi[2], nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([X.ravel(order="F"), Y.ravel(order="F"),
                      Z.ravel(order="F")], axis=1)

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    conn = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                conn.append([
                    nid(i, j, k), nid(i + 1, j, k),
                    nid(i + 1, j + 1, k), nid(i, j + 1, k),
                    nid(i, j, k + 1), nid(i + 1, j, k + 1),
                    nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1),
                ])
    return Mesh(nodes, {region: [ElementBlock(ElementType.HEXA8,
                                              np.array(conn))]})


def single_tet_mesh(region="tet"):
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return Mesh(nodes, {region: [ElementBlock(ElementType.TETRA4,
                                              np.array([[0, 1, 2, 3]]))]})


def node_scalar_quantity(name="field", regions=("volume",)):
    return FieldQuantity(name=name, defined_on="NODE", components=1,
                         regions=tuple(regions))


def node_vector_quantity(name="vel", regions=("volume",)):
    return FieldQuantity(name=name, defined_on="NODE", components=3,
                         regions=tuple(regions))


def cell_scalar_quantity(name="field", regions=("volume",)):
    return FieldQuantity(name=name, defined_on="CELL", components=1,
                         regions=tuple(regions))


def time_manifest(quantities, num_steps, dt=1e-5, t0=1e-5):
    return Manifest(
        analysis="TIME",
        steps=[(i, t0 + i * dt) for i in range(num_steps)],
        quantities=list(quantities),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)


# -- Ensight Gold ASCII fixture writers --------------------------------------


def write_ensight_case(tmp_path, *, name="sim", parts, num_steps=1,
                       dt=1e-5, t0=1e-5, node_vars=(), cell_vars=()):
    """Write a small ASCII Ensight Gold dataset.

    parts: list of (description, nodes (n,3), blocks [(etype_name, conn
    1-based local)]).  node_vars/cell_vars: list of (var_name, components,
    value_fn(step, part_index, points) -> (n, comps)).
    Returns the case file path.
    """
    geo = tmp_path / f"{name}.geo"
    lines = ["Generated fixture", "grid", "node id off", "element id off"]
    for pi, (desc, nodes, blocks) in enumerate(parts, start=1):
        lines += ["part", str(pi), desc, "coordinates", str(len(nodes))]
        for c in range(3):
            lines += [f"{v:.8e}" for v in nodes[:, c]]
        for etype_name, conn in blocks:
            lines += [etype_name, str(len(conn))]
            lines += [" ".join(str(int(v)) for v in row) for row in conn]
    geo.write_text("\n".join(lines) + "\n")

    all_vars = ([(n, c, fn, "node") for n, c, fn in node_vars]
                + [(n, c, fn, "element") for n, c, fn in cell_vars])
    for step in range(num_steps):
        for vname, comps, fn, kind in all_vars:
            vlines = [f"{vname} step {step}"]
            for pi, (desc, nodes, blocks) in enumerate(parts):
                vlines += ["part", str(pi + 1)]
                if kind == "node":
                    vals = np.atleast_2d(fn(step, pi, nodes))
                    vlines.append("coordinates")
                    for c in range(comps):
                        vlines += [f"{v:.8e}" for v in vals[:, c]]
                else:
                    for etype_name, conn in blocks:
                        centers = np.stack([
                            nodes[np.asarray(row, dtype=int) - 1].mean(axis=0)
                            for row in conn
                        ])
                        vals = np.atleast_2d(fn(step, pi, centers))
                        vlines.append(etype_name)
                        for c in range(comps):
                            vlines += [f"{v:.8e}" for v in vals[:, c]]
            (tmp_path / f"{name}.{vname}.{step:04d}").write_text(
                "\n".join(vlines) + "\n")

    case_lines = [
        "FORMAT", "type: ensight gold", "",
        "GEOMETRY", f"model: {name}.geo", "",
        "VARIABLE",
    ]
    for vname, comps, _fn, kind in all_vars:
        vkind = "scalar" if comps == 1 else "vector"
        case_lines.append(
            f"{vkind} per {kind}: 1 {vname} {name}.{vname}.****")
    case_lines += [
        "", "TIME", "time set: 1", f"number of steps: {num_steps}",
        "filename start number: 0", "filename increment: 1",
        "time values:",
        " ".join(f"{t0 + i * dt:.6e}" for i in range(num_steps)),
    ]
    case = tmp_path / f"{name}.case"
    case.write_text("\n".join(case_lines) + "\n")
    return str(case)
