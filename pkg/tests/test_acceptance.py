"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
summary lines.
"""

import functools
import os
import time

import numpy as np
import pytest

from fieldpipe import (ContainerReader, FieldQuantity, FieldStep, Manifest,
                       PipelineError, RbfFdSettings, StencilSet,
                       StepValueDefinition, load_pipeline, resolve_schedule,
                       shepard_interpolate, write_native)
from fieldpipe.aeroacoustic import AeroacousticError
from fieldpipe.cli import main as cli_main
from fieldpipe.ensight import parse_case, parse_geometry
from fieldpipe.interp import ShepardParams, cell_to_node
from fieldpipe.mesh import element_measure
from fieldpipe import conservative_centroid, conservative_cutcell
from fieldpipe import lamb_vector, lighthill_scalar, time_derivative
from conftest import grid_hex_mesh, time_manifest


def criterion(num, name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"criterion {num} ({name}): FAIL")
                raise
            print(f"criterion {num} ({name}): PASS")
        return wrapper
    return deco


# -- shared fixtures ---------------------------------------------------------


SVD = """
  <stepValueDefinition>
    <startStop>
      <startStep value="0"/>
      <numSteps value="{num}"/>
      <startTime value="1e-05"/>
      <delta value="1e-05"/>
      <deleteOffset value="{offset}"/>
    </startStop>
  </stepValueDefinition>
"""


def make_cell_source(tmp_path, num_steps=10):
    mesh = grid_hex_mesh(3, 3, 3)
    q = FieldQuantity(name="flow", defined_on="CELL", components=1,
                      regions=("volume",))
    cents = mesh.region_centroids("volume")
    steps = [
        FieldStep(q, i, 1e-5 + i * 1e-5,
                  {"volume": cents[:, :1] + (i + 1) * 0.5})
        for i in range(num_steps)
    ]
    src = str(tmp_path / "src.cfsd")
    write_native(src, mesh, time_manifest([q], num_steps), steps)
    copy = str(tmp_path / "copy.cfsd")
    write_native(copy, mesh, Manifest(), [])
    return src, copy, mesh


def cell2node_block(fid, inputs, out_name):
    return f"""
  <interpolation type="FieldInterpolation_Cell2Node" id="{fid}"
                 inputFilterIds="{inputs}">
    <targetMesh><hdf5 fileName="copy.cfsd"/></targetMesh>
    <singleResult>
      <inputQuantity resultName="flow"/>
      <outputQuantity resultName="{out_name}"/>
    </singleResult>
    <regions>
      <sourceRegions><region name="volume"/></sourceRegions>
      <targetRegions><region name="volume"/></targetRegions>
    </regions>
  </interpolation>"""


def serial_xml(tmp_path, num=10, offset="no", out="serialOut.cfsd"):
    body = SVD.format(num=num, offset=offset) + f"""
  <meshInput id="inputFilter" gridType="fullGrid">
    <inputFile><hdf5 fileName="src.cfsd"/></inputFile>
  </meshInput>
  {cell2node_block("interp1", "inputFilter", "flowNode")}
  <meshOutput id="Outout" inputFilterIds="interp1">
    <outputFile><hdf5 fileName="{out}"/></outputFile>
  </meshOutput>"""
    p = tmp_path / "serial.xml"
    p.write_text(f"<cfsdat>\n<pipeline>\n{body}\n</pipeline>\n</cfsdat>\n")
    return str(p)


def parallel_xml(tmp_path, num=10):
    body = SVD.format(num=num, offset="no") + f"""
  <meshInput id="inputFilter" gridType="fullGrid">
    <inputFile><hdf5 fileName="src.cfsd"/></inputFile>
  </meshInput>
  {cell2node_block("interp1", "inputFilter", "res1")}
  {cell2node_block("interp2", "inputFilter", "res2")}
  {cell2node_block("interp3", "inputFilter", "res3")}
  <meshOutput id="Outout" inputFilterIds="interp1 interp2 interp3">
    <outputFile><hdf5 fileName="parallelOut.cfsd"/></outputFile>
  </meshOutput>"""
    p = tmp_path / "parallel.xml"
    p.write_text(f"<cfsdat>\n<pipeline>\n{body}\n</pipeline>\n</cfsdat>\n")
    return str(p)


@criterion(1, "pipeline round-trip")
def test_criterion_1_pipeline_roundtrip(tmp_path):
    make_cell_source(tmp_path)
    t0 = time.monotonic()
    assert cli_main(["run", serial_xml(tmp_path)]) == 0
    assert cli_main(["run", parallel_xml(tmp_path)]) == 0
    assert time.monotonic() - t0 < 5.0
    reader = ContainerReader(str(tmp_path / "parallelOut.cfsd"))
    assert {q.name for q in reader.manifest.quantities} == \
        {"res1", "res2", "res3"}
    assert len(reader.manifest.steps) == 10


@criterion(2, "step semantics")
def test_criterion_2_step_semantics(tmp_path):
    available = [(i, 1e-5 + i * 1e-5) for i in range(10)]
    # All ten steps selected with the base settings.
    svd = StepValueDefinition(0, 10, 1e-5, 1e-5)
    sched = resolve_schedule(svd, available)
    assert [e.file_index for e in sched.entries] == list(range(10))
    # Doubled delta: every second step (values 1e-5, 3e-5, ...).
    svd2 = StepValueDefinition(0, 5, 1e-5, 2e-5)
    sched2 = resolve_schedule(svd2, available)
    assert [e.file_index for e in sched2.entries] == [0, 2, 4, 6, 8]
    np.testing.assert_allclose([e.match_value for e in sched2.entries],
                               [1e-5, 3e-5, 5e-5, 7e-5, 9e-5])
    # deleteOffset: first output value equals delta exactly.
    make_cell_source(tmp_path)
    assert cli_main(["run", serial_xml(tmp_path, offset="yes",
                                       out="off.cfsd")]) == 0
    reader = ContainerReader(str(tmp_path / "off.cfsd"))
    assert reader.manifest.steps[0][1] == 1e-5


@criterion(3, "conservation suite")
def test_criterion_3_conservation(tmp_path):
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    for trial in range(20):
        dims = rng.integers(4, 8, size=3)  # 64..343 cells
        scale = float(rng.uniform(0.5, 3.0))
        src = grid_hex_mesh(*dims, hi=(scale, scale, scale))
        n_cells = src.region_num_elements("volume")
        assert 50 <= n_cells <= 500
        f = rng.standard_normal((n_cells, 1))
        q = FieldQuantity(name="f", defined_on="CELL", components=1,
                          regions=("volume",))
        step = FieldStep(q, 0, 0.0, {"volume": f})

        # Cell2Node conserves the total sum.
        nodal = cell_to_node(step, src, ["volume"])
        rel = abs(nodal["volume"].sum() - f.sum()) / max(abs(f).sum(), 1e-30)
        assert rel < 1e-10

        # Conservative variants preserve the integral (minus reported loss).
        tdims = rng.integers(3, 7, size=3)
        tgt = grid_hex_mesh(*tdims, hi=(scale, scale, scale))
        integral = sum(
            f[e, 0] * element_measure(src, "volume", e)
            for e in range(n_cells)
        )
        for fn in (conservative_centroid, conservative_cutcell):
            loads, report = fn(step, src, ["volume"], tgt, ["volume"])
            got = loads["volume"].sum() + report.lost_integral[0]
            assert abs(got - integral) / max(abs(integral), 1e-30) < 1e-10
    assert time.monotonic() - t0 < 30.0


@criterion(4, "Shepard oracle")
def test_criterion_4_shepard_oracle():
    rng = np.random.default_rng(7)
    src = rng.random((300, 3))
    vals = rng.standard_normal((300, 1))
    params = ShepardParams(exponent=2.0, num_neighbours=8)
    queries = rng.random((100, 3))
    got = shepard_interpolate(src, vals, queries, params,
                              diameter=np.sqrt(3.0))
    # Independent brute-force evaluation of the weight formulas.
    for t, p in enumerate(queries):
        d = np.sqrt(((src - p) ** 2).sum(axis=1))
        order = np.lexsort((np.arange(len(src)), d))[:8]
        r = d[order]
        r_max = 1.01 * r.max()
        w = ((r_max - r) / (r_max * r)) ** 2.0
        expect = (w * vals[order, 0]).sum() / w.sum()
        assert abs(got[t, 0] - expect) <= 1e-13 * max(abs(expect), 1e-30)
    # Constant field reproduction.
    const = shepard_interpolate(src, np.full((300, 1), 4.5), queries, params,
                                diameter=np.sqrt(3.0))
    assert np.abs(const - 4.5).max() / 4.5 < 1e-12


def grid_cloud(n):
    xs = np.linspace(0.0, 1.0, n)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


SETTINGS27 = RbfFdSettings(epsilon_scaling=2.0, stencil_size=27)


@criterion(5, "derivative exactness")
def test_criterion_5_derivatives():
    rng = np.random.default_rng(13)
    src = rng.random((400, 3))
    tgt = 0.25 + 0.5 * rng.random((20, 3))
    s = StencilSet(src, tgt, RbfFdSettings(epsilon_scaling=2.0))
    # Affine exactness.
    a = np.array([2.0, -1.0, 0.5])
    g = s.gradient(src @ a + 1.0)
    assert np.abs(g - a).max() / np.abs(a).max() < 1e-8
    u_lin = np.stack([src[:, 1], src[:, 2], src[:, 0]], axis=1)
    assert np.abs(s.divergence(u_lin)).max() < 1e-8
    assert np.abs(s.curl(u_lin) + 1.0).max() < 1e-8

    # Chained second derivatives on a 10^3 cloud.
    cloud = grid_cloud(10)
    inner = cloud[np.all((cloud >= 0.3 - 1e-9) & (cloud <= 0.7 + 1e-9),
                         axis=1)]
    self_s = StencilSet(cloud, cloud, SETTINGS27)
    chain_s = StencilSet(cloud, inner, SETTINGS27)
    # curl(grad f) = 0 for quadratic f.
    f = (cloud[:, 0] ** 2 + 2 * cloud[:, 1] ** 2 + 3 * cloud[:, 2] ** 2
         + cloud[:, 0] * cloud[:, 1] + cloud[:, 1] * cloud[:, 2])
    grad_f = self_s.gradient(f)
    residual = np.abs(chain_s.curl(grad_f)).max()
    assert residual / np.abs(grad_f).max() < 1e-5
    # div(curl u) = 0 for quadratic u.
    u = np.stack([cloud[:, 1] ** 2, cloud[:, 2] ** 2, cloud[:, 0] ** 2],
                 axis=1)
    curl_u = self_s.curl(u)
    residual = np.abs(chain_s.divergence(curl_u)).max()
    assert residual / np.abs(curl_u).max() < 1e-5

    # Second-order convergence between two resolutions.
    errors = []
    for n in (9, 17):  # spacing halves
        c = grid_cloud(n)
        t = c[np.all((c >= 0.3 - 1e-9) & (c <= 0.7 + 1e-9), axis=1)]
        st = StencilSet(c, t, SETTINGS27)
        g = st.gradient(np.sin(np.pi * c[:, 0]) * np.sin(np.pi * c[:, 1]))
        gx = np.pi * np.cos(np.pi * t[:, 0]) * np.sin(np.pi * t[:, 1])
        gy = np.pi * np.sin(np.pi * t[:, 0]) * np.cos(np.pi * t[:, 1])
        exact = np.stack([gx, gy, np.zeros(len(t))], axis=1)
        errors.append(np.abs(g - exact).max())
    assert errors[0] / errors[1] >= 3.0


@criterion(6, "aeroacoustic oracles")
def test_criterion_6_aeroacoustic():
    cloud = grid_cloud(10)
    inner = cloud[np.all((cloud >= 0.3 - 1e-9) & (cloud <= 0.7 + 1e-9),
                         axis=1)]
    s = StencilSet(cloud, inner, SETTINGS27)
    u = np.stack([-cloud[:, 1], cloud[:, 0], np.zeros(len(cloud))], axis=1)
    L = lamb_vector(s, u)
    expect = np.stack([-2 * inner[:, 0], -2 * inner[:, 1],
                       np.zeros(len(inner))], axis=1)
    assert np.abs(L - expect).max() / np.abs(expect).max() < 1e-5
    # Lighthill scalar for the same rotation: exactly -2.
    self_s = StencilSet(cloud, cloud, SETTINGS27)
    scal = lighthill_scalar(self_s, s, u)
    assert np.abs(scal + 2.0).max() / 2.0 < 1e-4
    # Uniform flow: all sources vanish.
    u0 = np.tile([1.0, 2.0, 3.0], (len(cloud), 1))
    assert np.abs(lamb_vector(s, u0)).max() < 1e-10
    assert np.abs(lighthill_scalar(self_s, s, u0)).max() < 1e-10


@criterion(7, "time derivative")
def test_criterion_7_time_derivative(tmp_path):
    dt = 1e-5
    t = np.arange(-2, 3) * dt
    for coeffs, d_exact in [((0.0, 0.0, 5.0), 0.0),
                            ((0.0, 7.0, 1.0), 7.0),
                            ((3.0, -2.0, 0.5), -2.0)]:
        a, b, c = coeffs
        q = (a * t ** 2 + b * t + c).reshape(5, 1, 1)
        got = time_derivative(q, dt)[0, 0]
        assert abs(got - d_exact) <= 1e-12 * max(abs(d_exact), 1.0)
    # Boundary steps dropped: via a full pipeline run.
    mesh = grid_hex_mesh(2, 2, 2)
    qty = FieldQuantity(name="flow", defined_on="NODE", components=1,
                        regions=("volume",))
    n = len(mesh.region_nodes("volume"))
    steps = [FieldStep(qty, i, 1e-5 * (i + 1),
                       {"volume": np.full((n, 1), float(i))})
             for i in range(10)]
    src = str(tmp_path / "td.cfsd")
    write_native(src, mesh, time_manifest([qty], 10), steps)
    body = SVD.format(num=10, offset="no") + """
  <meshInput id="input">
    <inputFile><hdf5 fileName="td.cfsd"/></inputFile>
  </meshInput>
  <timeDeriv1 id="ddt" inputFilterIds="input">
    <singleResult>
      <inputQuantity resultName="flow"/>
      <outputQuantity resultName="dflow"/>
    </singleResult>
  </timeDeriv1>
  <meshOutput id="out" inputFilterIds="ddt">
    <outputFile><hdf5 fileName="ddt.cfsd"/></outputFile>
  </meshOutput>"""
    xml = tmp_path / "td.xml"
    xml.write_text(f"<cfsdat><pipeline>{body}</pipeline></cfsdat>")
    assert cli_main(["run", str(xml)]) == 0
    reader = ContainerReader(str(tmp_path / "ddt.cfsd"))
    kept = [i for i, _ in reader.manifest.steps_for("dflow")]
    assert kept == list(range(2, 8))
    # Fewer than five steps rejected.
    with pytest.raises(AeroacousticError):
        time_derivative(np.zeros((4, 1, 1)), dt)
    bad = tmp_path / "short.xml"
    bad.write_text(f"<cfsdat><pipeline>{body}</pipeline></cfsdat>".replace(
        'numSteps value="10"', 'numSteps value="4"'))
    with pytest.raises(PipelineError):
        load_pipeline(str(bad), dry_run=True)


@criterion(8, "container and reader IO")
def test_criterion_8_io(tmp_path):
    mesh = grid_hex_mesh(2, 2, 2)
    rng = np.random.default_rng(99)
    n = len(mesh.region_nodes("volume"))
    fixtures = [
        FieldQuantity(name="s", defined_on="NODE", components=1,
                      regions=("volume",)),
        FieldQuantity(name="v", defined_on="NODE", components=3,
                      regions=("volume",)),
        FieldQuantity(name="c", defined_on="NODE", components=1,
                      domain="FREQUENCY", value_kind="COMPLEX",
                      regions=("volume",)),
    ]
    steps = []
    originals = {}
    for q in fixtures:
        vals = rng.standard_normal((n, q.components))
        if q.value_kind == "COMPLEX":
            vals = vals + 1j * rng.standard_normal(vals.shape)
        originals[q.name] = vals
        steps.append(FieldStep(q, 0, 1e-5, {"volume": vals}))
    path = str(tmp_path / "io.cfsd")
    write_native(path, mesh,
                 Manifest(steps=[(0, 1e-5)], quantities=fixtures), steps)
    reader = ContainerReader(path)
    for q in fixtures:
        back = reader.read_step(q.name, 0).values["volume"]
        assert np.array_equal(back, originals[q.name])  # bit-exact

    # Hand-authored Ensight Gold ASCII fixture.
    geo = tmp_path / "hand.geo"
    geo.write_text("""hand-authored fixture
single tet
node id off
element id off
part
1
solid body
coordinates
4
0.0
1.0
0.0
0.0
0.0
0.0
1.0
0.0
0.0
0.0
0.0
1.0
tetra4
1
1 2 3 4
""")
    var_values = [[0.5, 1.5, 2.5, 3.5]]
    for i in range(10):
        vf = tmp_path / f"hand.p.{i:02d}"
        lines = [f"pressure step {i}", "part", "1", "coordinates"]
        lines += [f"{v + i:.1f}" for v in var_values[0]]
        vf.write_text("\n".join(lines) + "\n")
    case = tmp_path / "hand.case"
    case.write_text("""FORMAT
type: ensight gold

GEOMETRY
model: hand.geo

VARIABLE
scalar per node: 1 p hand.p.**

TIME
time set: 1
number of steps: 10
filename start number: 0
filename increment: 1
time values:
0.001 0.002 0.003 0.004 0.005
0.006 0.007 0.008 0.009 0.010
""")
    parsed = parse_case(str(case))
    np.testing.assert_array_equal(
        parsed.time_values,
        [0.001, 0.002, 0.003, 0.004, 0.005,
         0.006, 0.007, 0.008, 0.009, 0.010])
    emesh, ranges = parse_geometry(str(geo))
    np.testing.assert_array_equal(
        emesh.nodes, [[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    np.testing.assert_array_equal(
        emesh.regions["solid_body"][0].connectivity, [[0, 1, 2, 3]])
    from fieldpipe import read_ensight
    _, manifest, ereader = read_ensight(str(case), [("pressure", "p")])
    assert len(manifest.steps) == 10
    got = ereader.read_step("pressure", 3).values["solid_body"]
    np.testing.assert_array_equal(got[:, 0], [3.5, 4.5, 5.5, 6.5])


@criterion(9, "determinism")
def test_criterion_9_determinism(tmp_path):
    make_cell_source(tmp_path)
    xml = serial_xml(tmp_path)

    def snapshot():
        out = {}
        root = tmp_path / "serialOut.cfsd"
        for dirpath, _dirs, files in os.walk(root):
            for fn in sorted(files):
                p = os.path.join(dirpath, fn)
                out[os.path.relpath(p, root)] = open(p, "rb").read()
        return out

    assert cli_main(["run", xml]) == 0
    first = snapshot()
    assert cli_main(["run", xml]) == 0
    second = snapshot()
    assert first.keys() == second.keys()
    for key in first:
        assert first[key] == second[key], f"{key} differs between runs"
