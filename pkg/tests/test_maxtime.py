import numpy as np
import pytest

from pshflow import flow
from pshflow.grid import Grid
from pshflow.maxtime import MaxTimeQuery, certificate_check, class_positivity, predicted_T, singular_time
from pshflow.recipes import flat_metric, parse_trig

from conftest import metric_family


def shrinker_query(n=2, N=8, h=None, **kw):
    beta = flat_metric(Grid(n, N))
    chi = -beta.g
    if h is not None:
        chi = chi + beta.grid.hessian(parse_trig(h, n).evaluate(beta.grid))
    return MaxTimeQuery(omega=beta, omega0=beta, chi=chi, **kw)


def test_query_validation():
    with pytest.raises(ValueError):
        shrinker_query(K=-1)
    with pytest.raises(ValueError):
        shrinker_query(t_lo=2.0, t_hi=1.0)
    with pytest.raises(ValueError):
        class_positivity(shrinker_query(), -0.1)


def test_shrinker_lambda_star():
    q = shrinker_query()
    for t in (0.0, 0.4, 1.3):
        r = class_positivity(q, t)
        assert r.lam == pytest.approx(1 - t, abs=1e-12)
        assert r.feasible == (t < 1)
    assert class_positivity(q, 1.3).infeasible_evidence


def test_ddbar_forcing_is_absorbed():
    # chi = ddbar h: psi = -t h cancels it, lam* = 1 for every t
    beta = flat_metric(Grid(2, 8))
    h = parse_trig("0.01 cos(x1 + y2) + 0.01 sin(x2)", 2).evaluate(beta.grid)
    q = MaxTimeQuery(omega=beta, omega0=beta, chi=beta.grid.hessian(h))
    t = 0.7
    r = class_positivity(q, t)
    assert r.lam == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(r.psi - (-t * (h - h.mean())))) < 1e-6
    assert certificate_check(q, r) < 1e-9


def test_lambda_star_monotone_for_shrinking_class():
    q = shrinker_query(h="0.005 cos(x1 - y2)")
    lams = [class_positivity(q, t).lam for t in (0.2, 0.5, 0.8)]
    assert lams[0] > lams[1] > lams[2]


def test_certificate_soundness():
    m = metric_family("conformal", 2, 8)
    beta = flat_metric(m.grid)
    chi = -beta.g + m.grid.hessian(parse_trig("0.005 cos(x1 - y2)", 2).evaluate(m.grid))
    q = MaxTimeQuery(omega=m, omega0=beta, chi=chi)
    r = class_positivity(q, 0.5)
    assert r.feasible
    assert certificate_check(q, r) < 1e-9


def test_predicted_T_shrinker():
    est = predicted_T(shrinker_query(), tol=1e-2)
    assert est.contains(1.0) and est.width <= 1e-2
    assert est.advisory is None
    assert est.certificates[0].feasible


def test_predicted_T_advisory_when_class_never_degenerates():
    beta = flat_metric(Grid(2, 4))
    q = MaxTimeQuery(omega=beta, omega0=beta, chi=np.zeros(beta.g.shape, dtype=complex), t_hi=3.0)
    est = predicted_T(q)
    assert est.T_hi is None and est.T_lo == 3.0
    assert "horizon" in est.advisory
    assert est.width == np.inf


def test_predicted_T_rejects_infeasible_start():
    with pytest.raises(ValueError, match="not feasible"):
        predicted_T(shrinker_query(t_lo=1.5, t_hi=2.0))


def test_predicted_T_mixed_forcing_on_curved_metric():
    m = metric_family("conformal", 2, 8)
    beta = flat_metric(m.grid)
    chi = -beta.g + m.grid.hessian(parse_trig("0.005 cos(x1 - y2) + 0.005 sin(x2)", 2).evaluate(m.grid))
    est = predicted_T(MaxTimeQuery(omega=m, omega0=beta, chi=chi), tol=1e-2)
    assert est.T_hi is not None
    assert abs(0.5 * (est.T_lo + est.T_hi) - 1.0) < 0.02


def test_singular_time_shrinker_and_flat():
    beta = flat_metric(Grid(2, 4))
    st = singular_time(flow.FlowProblem(beta, chi=-beta.g), 2.0)
    assert st.t_sing is not None and 0.98 <= st.t_sing <= 1.0
    assert st.first_diverged is not None
    st = singular_time(flow.FlowProblem(beta), 0.5)
    assert st.t_sing is None and st.last_t == 0.5 and st.first_diverged is None
