import io
import re
import subprocess
import sys
import time

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from afem_ocp.adapt import AdaptiveSolverError, AdaptRecord
from afem_ocp.harness import cli
from afem_ocp.harness.problems import (EXAMPLE3_DOMAIN_TEXT, example1, example2, example3,
                                       get_example, in_domain)
from afem_ocp.harness.reports import (BOX, CSV_COLUMNS, RunConfig, SvgSeries, read_csv,
                                      write_csv, write_svg, write_vtk)
from afem_ocp.mesh import make_initial_mesh, refine_uniform


def polar_points(r, t):
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


# ---------------------------------------------------------------- example data

def test_example1_state_vanishes_on_boundary():
    ex = example1()
    y, p = ex.prob.exact.y, ex.prob.exact.p
    t = np.linspace(0, 1.5 * np.pi, 50)
    r = np.linspace(0.01, 1, 50)
    for pts in (polar_points(1.0, t), polar_points(r, 0.0 * r),
                polar_points(r, np.full_like(r, 1.5 * np.pi))):
        assert np.max(np.abs(y(pts))) <= 1e-14
        assert np.max(np.abs(p(pts))) <= 1e-14


def test_example1_laplacian_against_finite_differences():
    ex = example1()
    y, lap = ex.prob.exact.y, ex.params["laplace_y"]
    c = polar_points(0.5, np.pi / 2)

    def five_point(h):
        shifts = np.array([[h, 0], [-h, 0], [0, h], [0, -h]])
        return (y(c + shifts).sum() - 4 * y(c)[0]) / h**2

    # Richardson extrapolation removes the h^2 term
    fd = (4 * five_point(5e-4) - five_point(1e-3)) / 3
    assert fd == pytest.approx(lap(c)[0], abs=1e-6)


def _sympy_oracle(nu1, nu2):
    r, t = sympy.symbols("r t", positive=True)
    lam, alpha = sympy.Rational(2, 3), sympy.Rational(1, 10)

    def lap(f):
        return sympy.diff(r * sympy.diff(f, r), r) / r + sympy.diff(f, t, 2) / r**2

    y = (r**lam - r**nu1) * sympy.sin(lam * t)
    p = alpha * (r**lam - r**nu2) * sympy.sin(lam * t)
    fns = [sympy.lambdify((r, t), sympy.simplify(e), "numpy") for e in (y, lap(y), p, lap(p))]
    return fns


@pytest.mark.parametrize("nu1,nu2", [(2.5, 2.5), (3, 2), (sympy.Rational(7, 4), 4)])
def test_example1_manufactured_data_consistent(nu1, nu2):
    ex = example1(nu1=float(nu1), nu2=float(nu2))
    fy, flap_y, fp, flap_p = _sympy_oracle(nu1, nu2)
    rng = np.random.default_rng(7)
    r = np.sqrt(rng.uniform(1e-4, 1, 1000))
    t = rng.uniform(0, 1.5 * np.pi, 1000)
    x = polar_points(r, t)
    prob = ex.prob
    assert np.allclose(prob.exact.y(x), fy(r, t), atol=1e-12)
    assert np.allclose(prob.exact.p(x), fp(r, t), atol=1e-12)
    u = np.clip(-fp(r, t) / prob.alpha, prob.a, prob.b)
    assert np.allclose(prob.exact.u(x), u, atol=1e-12)
    # -lap y = f + u and -lap p = y - y_d
    assert np.allclose(prob.f_extra(x) + u, -flap_y(r, t), atol=1e-8)
    assert np.allclose(prob.exact.y(x) - prob.y_d(x), -flap_p(r, t), atol=1e-8)


def test_example1_gradients_by_central_differences():
    ex = example1(nu1=3.0, nu2=2.0)
    rng = np.random.default_rng(3)
    x = polar_points(rng.uniform(0.2, 0.9, 40), rng.uniform(0.2, 4.4, 40))
    h = 1e-6
    for f, g in ((ex.prob.exact.y, ex.prob.exact.grad_y), (ex.prob.exact.p, ex.prob.exact.grad_p)):
        fd = np.column_stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.allclose(g(x), fd, atol=1e-7)


def test_example2_quadrant_targets():
    ex = example2()
    pts = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    assert ex.prob.y_d(pts).tolist() == [10.0, 1.0, -10.0, -1.0]
    assert (ex.prob.alpha, ex.prob.a, ex.prob.b) == (1e-3, -10.0, 10.0)
    assert not ex.has_exact and ex.prob.exact is None


def test_example3_data_and_domain():
    ex = example3()
    assert np.all(ex.prob.y_d(np.random.default_rng(0).uniform(-1, 1, (20, 2))) == 2.0)
    assert (ex.prob.a, ex.prob.b) == (0.0, 8.0)
    assert ex.params["domain_text"] == EXAMPLE3_DOMAIN_TEXT
    assert not in_domain("l-shape", [0.5, -0.5])[0]
    assert in_domain("l-shape", [[-0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]).all()
    m = ex.initial_mesh()
    assert in_domain("l-shape", m.centroids).all()
    assert m.areas.sum() == pytest.approx(3.0)


def test_get_example_overrides_and_unknown():
    ex = get_example("1", nu1=3.0)
    assert ex.params["nu1"] == 3.0 and ex.params["nu2"] == 2.5
    with pytest.raises(ValueError):
        get_example("4")


# ---------------------------------------------------------------- csv

def _records(with_errors=True):
    recs = []
    for k in range(2):
        r = AdaptRecord(k, 8 * (k + 1), 5 * (k + 1), 0.3, 0.4, 0.5, 0.01, marked=3 - 3 * k)
        if with_errors:
            r.err_y, r.err_p, r.err_yp, r.err_u = 0.3, 0.4, 0.5, 1 / 3
        recs.append(r)
    return recs


def test_csv_layout(tmp_path):
    path = write_csv(_records(), tmp_path / "a.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert len(lines) == 3
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert CSV_COLUMNS[:3] == ("iter", "n_elements", "n_dofs")
    row = lines[1].split(",")
    assert row[0] == "0" and row[1] == "8" and float(row[-1]) == 1 / 3


def test_csv_empty_fields_without_exact_solution(tmp_path):
    path = write_csv(_records(False), tmp_path / "b.csv")
    line = path.read_text().splitlines()[1]
    assert line.endswith(",,,,")
    rows = read_csv(path)
    assert rows[0]["err_yp"] is None and rows[1]["marked"] == 0


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(min_value=1e-300, max_value=1e300), min_size=4, max_size=4))
def test_csv_float_round_trip(tmp_path_factory, vals):
    rec = AdaptRecord(1, 2, 3, *vals, err_u=vals[0] / 3)
    path = write_csv([rec], tmp_path_factory.mktemp("csv") / "r.csv")
    row = read_csv(path)[0]
    assert [row["eta_y"], row["eta_p"], row["eta_total"], row["osc_total"]] == vals
    assert row["err_u"] == vals[0] / 3 and row["err_y"] is None


# ---------------------------------------------------------------- svg

def _svg_points(text, label):
    m = re.search(rf'data-label="{re.escape(label)}"[^>]*points="([^"]+)"', text)
    return np.array([[float(v) for v in p.split(",")] for p in m.group(1).split()])


def test_svg_monotone_series_and_canvas(tmp_path):
    x = np.geomspace(10, 1e4, 9)
    path = write_svg([SvgSeries("a", x, 3 * x**-0.5), SvgSeries("b", x, x**-1.0)],
                     tmp_path / "c.svg", title="t")
    text = path.read_text()
    assert 'width="800"' in text and 'height="600"' in text
    for label in ("a", "b"):
        pts = _svg_points(text, label)
        assert np.all(np.diff(pts[:, 0]) > 0) and np.all(np.diff(pts[:, 1]) > 0)
        x0, y0, x1, y1 = BOX
        assert pts[:, 0].min() >= x0 and pts[:, 0].max() <= x1
        assert pts[:, 1].min() >= y0 and pts[:, 1].max() <= y1


def test_svg_guide_slope_and_anchor(tmp_path):
    x = np.geomspace(20, 5e4, 11)
    y = 2 * x**-0.8
    text = write_svg([SvgSeries("e", x, y)], tmp_path / "g.svg").read_text()
    lx = [float(v) for v in re.search(r'data-log-x="([^"]+)"', text).group(1).split()]
    ly = [float(v) for v in re.search(r'data-log-y="([^"]+)"', text).group(1).split()]
    x0, y0, x1, y1 = [float(v) for v in re.search(r'data-box="([^"]+)"', text).group(1).split()]
    d = re.search(r'<path id="guide" data-slope="([^"]+)"[^>]* d="M ([^"]+)"', text)
    assert float(d.group(1)) == -0.5
    a, b = d.group(2).split(" L ")

    def to_data(s):
        px, py = map(float, s.split())
        return (lx[0] + (px - x0) / (x1 - x0) * (lx[1] - lx[0]),
                ly[0] + (y1 - py) / (y1 - y0) * (ly[1] - ly[0]))

    (ax, ay), (bx, by) = to_data(a), to_data(b)
    assert (by - ay) / (bx - ax) == pytest.approx(-0.5, abs=1e-4)
    assert bx == pytest.approx(np.log10(x[-1]), abs=1e-4)
    assert by == pytest.approx(np.log10(y[-1]), abs=1e-4)


def test_svg_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_svg([SvgSeries("z", np.array([1.0]), np.array([0.0]))], tmp_path / "z.svg")


# ---------------------------------------------------------------- vtk

def test_vtk_structure(tmp_path):
    m = refine_uniform(make_initial_mesh("l-shape"), 1)
    path = write_vtk(tmp_path / "m.vtk", m, cell_data={"eta": np.arange(m.n_elements)},
                     point_data={"y": m.points[:, 0]})
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[2] == "ASCII"
    assert lines[4] == f"POINTS {m.n_vertices} double"
    i = lines.index(f"CELLS {m.n_elements} {4 * m.n_elements}")
    assert lines[i + 1] == "3 " + " ".join(map(str, m.elements[0]))
    j = lines.index(f"CELL_TYPES {m.n_elements}")
    assert set(lines[j + 1:j + 1 + m.n_elements]) == {"5"}
    assert f"CELL_DATA {m.n_elements}" in lines and f"POINT_DATA {m.n_vertices}" in lines
    assert "SCALARS eta double 1" in lines
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "bad.vtk", m, cell_data={"eta": np.zeros(3)})


# ---------------------------------------------------------------- cli

def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("1", 1.0)
    with pytest.raises(ValueError):
        RunConfig("1", 0.4, mode="greedy")


def test_cli_smoke_run(tmp_path):
    out = io.StringIO()
    t0 = time.perf_counter()
    code = cli.run_cli(["--example", "smoke", "--out", str(tmp_path), "--gamma-scan"], out)
    assert time.perf_counter() - t0 < 5.0
    assert code == 0
    assert (tmp_path / "records.csv").exists() and (tmp_path / "convergence.svg").exists()
    assert (tmp_path / "gamma_scan.csv").exists()
    text = out.getvalue()
    assert "slope err_yp" in text and "kkt check" in text and "empirical surrogate" in text
    rows = read_csv(tmp_path / "records.csv")
    assert rows[-1]["n_dofs"] <= 3000


@pytest.mark.parametrize("argv", [[], ["--example", "smoke", "--theta", "1.5"],
                                  ["--example", "smoke", "--mode", "greedy"],
                                  ["--example", "9"],
                                  ["--example", "smoke", "--damping", "0"]])
def test_cli_bad_arguments(argv, tmp_path):
    assert cli.run_cli(argv + ["--out", str(tmp_path)], io.StringIO()) == 1


@pytest.mark.parametrize("value", ["two", "0"])
def test_cli_bad_thread_env(value, tmp_path, monkeypatch):
    monkeypatch.setenv("AFEM_OCP_THREADS", value)
    assert cli.run_cli(["--example", "smoke", "--out", str(tmp_path)], io.StringIO()) == 1


def test_cli_thread_env_and_vtk(tmp_path, monkeypatch):
    monkeypatch.setenv("AFEM_OCP_THREADS", "1")
    code = cli.run_cli(["--example", "smoke", "--vtk", "--max-iters", "2",
                        "--out", str(tmp_path)], io.StringIO())
    assert code == 0
    files = sorted(p.name for p in tmp_path.glob("mesh_*.vtk"))
    assert files == ["mesh_000.vtk", "mesh_001.vtk", "mesh_002.vtk"]
    assert "SCALARS marked double 1" in (tmp_path / "mesh_000.vtk").read_text()


def test_cli_solver_failure_exit_code(tmp_path, monkeypatch):
    def failing(*args, **kwargs):
        raise AdaptiveSolverError("no convergence", _records())

    monkeypatch.setattr(cli, "run_adaptive", failing)
    assert cli.run_cli(["--example", "smoke", "--out", str(tmp_path)], io.StringIO()) == 2
    assert len(read_csv(tmp_path / "records.csv")) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "afem_ocp", "--example", "smoke",
                           "--max-iters", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    assert "example smoke" in proc.stdout
    bad = subprocess.run([sys.executable, "-m", "afem_ocp"], capture_output=True, text=True,
                         timeout=60)
    assert bad.returncode == 1 and "--example" in bad.stderr
