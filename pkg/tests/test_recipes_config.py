import re
import textwrap

import numpy as np
import pytest

from pshflow.config import load_config
from pshflow.errors import ConfigError, InvariantViolation
from pshflow.geometry import chern_ricci
from pshflow.grid import Grid
from pshflow.recipes import RecipeError, explicit_metric, parse_trig


# trig grammar ----------------------------------------------------------------------

def test_parse_terms_and_evaluate():
    g = Grid(2, 8)
    p = parse_trig("0.5 cos(x1 + 2 y2) - 1/4 * sin(-x2) + 3", 2)
    assert [t.kind for t in p.terms] == ["cos", "sin", "const"]
    assert p.terms[0].freq == (1, 0, 0, 2)
    assert p.terms[1].coef == -0.25 and p.terms[1].freq == (0, 0, -1, 0)
    assert p.max_frequency() == 2
    x1, x2, y2 = g.x(0), g.x(1), g.y(1)
    ref = 0.5 * np.cos(2 * np.pi * (x1 + 2 * y2)) - 0.25 * np.sin(-2 * np.pi * x2) + 3
    assert np.allclose(p.evaluate(g), ref)
    assert np.allclose(parse_trig(2.5, 2).evaluate(g), 2.5)


def test_exact_derivatives_match_spectral():
    g = Grid(2, 16)
    p = parse_trig("0.3 cos(x1 - y2) + 0.2 sin(2 x2 + y1)", 2)
    f = p.evaluate(g)
    assert np.max(np.abs(p.gradient(g) - g.gradient(f))) < 1e-11
    assert np.max(np.abs(p.hessian(g) - g.hessian(f))) < 1e-10


def test_periods_respected():
    g = Grid(2, 8, periods=[2.0, 3.0, 1.0, 1.0])
    p = parse_trig("cos(x1 + y1)", 2)
    assert np.allclose(p.evaluate(g), np.cos(2 * np.pi * (g.x(0) / 2 + g.y(0) / 3)))
    assert np.max(np.abs(p.hessian(g) - g.hessian(p.evaluate(g)))) < 1e-11


@pytest.mark.parametrize("text, fragment", [
    ("cos(x3)", "unknown variable"),
    ("cos(z1)", "unknown variable"),
    ("cos(1/2 x1)", "integers"),
    ("cos(x1", "expected ')'"),
    ("1 $ 2", "unexpected character"),
    ("", "empty"),
    ("cos(x1) sin(x2)", "expected '+' or '-'"),
    ("1/0", "denominator"),
])
def test_grammar_errors(text, fragment):
    with pytest.raises(RecipeError, match=re.escape(fragment)):
        parse_trig(text, 2)


def test_evaluate_on_wrong_dimension():
    with pytest.raises(ValueError):
        parse_trig("cos(x1)", 2).evaluate(Grid(3, 2))


def test_explicit_metric():
    g = Grid(2, 2)
    m = explicit_metric(g, [[2, "0.5+0.5j"], ["0.5-0.5j", 1]])
    assert m.g[0, 0, 0, 0, 0, 1] == 0.5 + 0.5j
    with pytest.raises(ValueError):
        explicit_metric(g, [[1]])
    with pytest.raises(InvariantViolation):
        explicit_metric(g, [[1, 1], [0, 1]])


# configuration --------------------------------------------------------------------

BASE = """\
geometry:
  n: 2
  N: 8
  metric: {recipe: conformal, f: "0.1 cos(x1)"}
problem:
  chi: {base: beta, scale: -1.0, ddbar: "0.01 sin(x2)"}
integrator: {t_end: 0.5, dt_max: 0.05}
monitor: {cadence: 0.1, ceilings: {sup_u: 10}}
output: {dir: outdir, checkpoint_every: 3}
seed: 7
"""


def test_full_config_builds_objects():
    cfg = load_config(BASE)
    assert cfg.grid.n == 2 and cfg.grid.N == 8
    assert cfg.t_end == 0.5 and cfg.cadence == 0.1
    assert cfg.control.dt_max == 0.05
    assert cfg.ceilings == {"sup_u": 10.0}
    assert cfg.seed == 7 and cfg.checkpoint_every == 3
    assert str(cfg.out_dir) == "outdir"
    p = cfg.problem
    h = parse_trig("0.01 sin(x2)", 2).hessian(cfg.grid)
    assert np.allclose(p.chi, -np.eye(2) + h)
    assert np.allclose(p.omega.g[..., 0, 0], np.exp(0.1 * np.cos(2 * np.pi * cfg.grid.x(0))))


def test_defaults_and_canonical_forcing():
    cfg = load_config("geometry: {n: 2, N: 8, metric: {recipe: conformal, f: '0.1 cos(x1)'}}\n")
    p = cfg.problem
    assert np.allclose(p.chi, -chern_ricci(p.omega))
    assert np.all(p.log_volume == 0)
    assert cfg.cadence is None and cfg.estimates_enabled and not cfg.expect_singular


def test_chi_and_volume_options():
    head = "geometry: {n: 2, N: 4}\nproblem:\n"
    assert np.all(load_config(head + "  chi: zero\n").problem.chi == 0)
    p = load_config(head + "  chi: {base: omega, scale: 2}\n  volume: {F: '0.1 cos(y1)'}\n").problem
    assert np.allclose(p.chi, 2 * np.eye(2))
    assert np.allclose(p.log_volume, 0.1 * np.cos(2 * np.pi * p.grid.y(0)))
    p = load_config(head + "  psi: '0.01 cos(x1)'\n  S: 2\n").problem
    assert np.allclose(p.log_volume, p.psi / 2)
    p = load_config(head + "  variant: gauduchon\n  omega0: {recipe: explicit, matrix: [[2, 0], [0, 2]]}\n").problem
    assert p.variant == "gauduchon" and np.allclose(p.omega0.g, 2 * np.eye(2))


@pytest.mark.parametrize("text, line, field", [
    ("geometry: {n: 2, N: 4}\nbogus: 1\n", 2, "bogus"),
    ("geometry:\n  n: 2\n  N: 4\n  colour: red\n", 4, "geometry.colour"),
    ("geometry: {n: 2}\n", 1, "geometry.N"),
    ("geometry: {n: 2, N: 4}\nproblem:\n  chi: {base: nope}\n", 3, "problem.chi.base"),
    ("geometry: {n: 2, N: 4}\nproblem:\n  chi: {base: beta, scale: abc}\n", 3, "problem.chi.scale"),
    ("geometry: {n: 2, N: 4}\nproblem:\n  volume: {F: 'cos(x9)'}\n", 3, "problem.volume.F"),
    ("geometry: {n: 2, N: 4}\nintegrator:\n  err_tol: -1\n", 3, "integrator.err_tol"),
    ("geometry: {n: 2, N: 4}\nintegrator:\n  dt_min: 1\n  dt_max: 0.1\n", 3, "integrator.dt_min"),
    ("geometry: {n: 2, N: 4}\nproblem:\n  variant: other\n", 3, "problem.variant"),
    ("geometry:\n  n: 2\n  N: 4\n  metric: {recipe: spherical}\n", 4, "geometry.metric.recipe"),
])
def test_config_errors_carry_location(text, line, field):
    with pytest.raises(ConfigError) as exc:
        load_config(text)
    assert exc.value.line == line
    assert exc.value.field == field
    assert f"line {line}" in str(exc.value)


def test_non_hermitian_metric_reports_location():
    text = "geometry:\n  n: 2\n  N: 4\n  metric: {recipe: explicit, matrix: [[1, 1], [0, 1]]}\n"
    with pytest.raises(InvariantViolation, match="line 4"):
        load_config(text)


def test_yaml_and_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="YAML"):
        load_config("geometry: [\n")
    with pytest.raises(ConfigError, match="empty"):
        load_config("# nothing\n")
    with pytest.raises(ConfigError, match="duplicate"):
        load_config("geometry: {n: 2, N: 4}\ngeometry: {n: 2, N: 4}\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    path = tmp_path / "ok.yaml"
    path.write_text(textwrap.dedent(BASE))
    assert load_config(str(path)).source == str(path)


def test_maxtime_section():
    cfg = load_config("geometry: {n: 2, N: 4}\nproblem: {chi: {base: beta, scale: -1}}\n"
                      "maxtime: {t_hi: 1.5, K: 2, temperatures: [0.1, 0.01], tol: 0.05}\n")
    q = cfg.maxtime_query()
    assert q.t_hi == 1.5 and q.K == 2 and q.temperatures == (0.1, 0.01)
    assert cfg.maxtime_tol == 0.05 and cfg.maxtime_t_end == 1.5
    bad = load_config("geometry: {n: 2, N: 4}\nmaxtime:\n  temperatures: [-1]\n")
    with pytest.raises(ConfigError) as exc:
        bad.maxtime_query()
    assert exc.value.line == 3
