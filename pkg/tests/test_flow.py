import numpy as np
import pytest

from pshflow import exterior, flow, forms, linalg
from pshflow.checkpoint import load_state, read_checkpoint, save_state, write_checkpoint
from pshflow.errors import InvariantViolation, PositivityLost, SingularTimeReached
from pshflow.geometry import MetricField
from pshflow.grid import Grid
from pshflow.recipes import flat_metric, parse_trig

from conftest import metric_family


def shrinker(n=2, N=4):
    beta = flat_metric(Grid(n, N))
    return flow.FlowProblem(beta, chi=-beta.g)


def shrinker_u(n, t):
    return -n * ((1 - t) * np.log(1 - t) + t)


def test_problem_validation():
    m = metric_family("flat", 2, 4)
    with pytest.raises(ValueError):
        flow.FlowProblem(m, variant="other")
    with pytest.raises(ValueError):
        flow.FlowProblem(m, S=0)
    bad = np.zeros(m.g.shape, dtype=complex)
    bad[..., 0, 1] = 1.0
    with pytest.raises(InvariantViolation):
        flow.FlowProblem(m, chi=bad)


def test_canonical_problem_has_zero_excess():
    m = metric_family("conformal", 2, 16)
    h = parse_trig("0.1 cos(x1 - y2)", 2).evaluate(m.grid)
    p = flow.FlowProblem(m, psi=h, S=0.5)
    assert np.max(np.abs(p.excess_forcing())) < 1e-12


def test_psi_t_and_omega_hat_flat_example():
    p = shrinker(3, 2)
    with pytest.raises(ValueError):
        flow.psi_t(p, -0.1)
    t = 0.3
    assert np.allclose(flow.omega_hat(p, t), (1 - t) * np.eye(3))
    # Psi_t = (n-1)! (1-t) omega^{n-1}: orthonormal matrix is the identity scaled
    assert np.allclose(forms.orthonormal_n1(flow.psi_t(p, t), p.omega), (1 - t) * np.eye(3))


def test_omega_hat_formulas_agree_on_curved_metric():
    m = metric_family("conformal", 3, 4)
    chi = -0.5 * m.g + m.grid.hessian(parse_trig("0.01 cos(x1 - y3)", 3).evaluate(m.grid))
    p = flow.FlowProblem(m, chi=chi)
    for t in (0.0, 0.2, 0.9):
        flow.omega_hat(p, t)


def test_omega_tilde_matches_star_of_form():
    m = metric_family("conformal", 3, 4)
    p = flow.FlowProblem(m, chi=-0.3 * m.g)
    u = 0.01 * parse_trig("cos(x1 + y2) + sin(x3)", 3).evaluate(m.grid)
    gt = flow.omega_tilde(p, u, 0.2)
    star = forms.hodge_star_n1(flow.omega_t_form(p, u, 0.2), m)
    assert np.max(np.abs(gt - star)) < 1e-12


def test_rhs_flat_stationary_and_shrinker():
    beta = flat_metric(Grid(2, 4))
    p = flow.FlowProblem(beta)
    assert np.max(np.abs(flow.rhs(p, np.zeros(beta.grid.shape), 0.7))) < 1e-15
    ps = shrinker(3, 2)
    for t in (0.0, 0.25, 0.5):
        udot = flow.rhs(ps, np.zeros(ps.grid.shape), t)
        assert np.allclose(udot, 3 * np.log(1 - t), atol=1e-14)


def test_rhs_metric_and_form_sides_agree():
    m = metric_family("kahler", 3, 4)
    p = flow.FlowProblem(m, chi=-0.2 * m.g)
    u = 0.02 * parse_trig("cos(x1 + y2) + sin(x2 - y3)", 3).evaluate(m.grid)
    udot, gt = flow.rhs(p, u, 0.3, return_metric=True)
    assert np.max(np.abs(udot - flow.rhs_form_side(p, u, 0.3))) < 1e-12
    assert np.max(np.abs(gt - flow.omega_tilde(p, u, 0.3))) < 1e-13


def test_rhs_raises_positivity_lost_with_location():
    p = shrinker(2, 4)
    with pytest.raises(PositivityLost) as exc:
        flow.rhs(p, np.zeros(p.grid.shape), 1.2)
    assert exc.value.value == pytest.approx(-0.2)
    assert len(exc.value.point) == 4


def test_n2_identity_det_of_trace_complement():
    # for n = 2 the trace complement has the same determinant, so u-dot is log det(omega_0 + t chi + i ddbar u)
    m = metric_family("conformal", 2, 8)
    p = flow.FlowProblem(m, chi=-0.4 * m.g)
    u = 0.002 * parse_trig("cos(x1 + y2)", 2).evaluate(m.grid)
    t = 0.3
    direct = m.g + t * p.chi + m.grid.hessian(u)
    ref = np.log(linalg.hdet(direct)) - m.logdet - p.log_volume
    assert np.max(np.abs(flow.rhs(p, u, t) - ref)) < 1e-12


def test_rhs_spatial_mean_shift_invariance():
    m = metric_family("conformal", 2, 8)
    p = flow.FlowProblem(m, chi=-0.4 * m.g)
    u = 0.002 * parse_trig("cos(x1 + y2)", 2).evaluate(m.grid)
    assert np.max(np.abs(flow.rhs(p, u + 3.7, 0.2) - flow.rhs(p, u, 0.2))) < 1e-12


# Gauduchon variant ------------------------------------------------------------

def test_gauduchon_flat_equals_base():
    beta = flat_metric(Grid(3, 4))
    u = 0.01 * parse_trig("cos(x1 + y2)", 3).evaluate(beta.grid)
    p = flow.FlowProblem(beta, chi=-0.5 * beta.g)
    assert np.max(np.abs(flow.gauduchon_rhs(p, u, 0.2) - flow.rhs(p, u, 0.2))) < 1e-14


def test_gauduchon_constant_u_matches_zero():
    m = metric_family("conformal", 3, 4)
    p = flow.FlowProblem(m, chi=-0.5 * m.g, variant="gauduchon")
    z = np.zeros(m.grid.shape)
    assert np.max(np.abs(flow.rhs(p, z + 2.0, 0.1) - flow.rhs(p, z, 0.1))) < 1e-13


def test_gauduchon_extra_form_matches_brute():
    m = metric_family("conformal", 3, 4)
    p = flow.FlowProblem(m, variant="gauduchon")
    dlog = m.grid.gradient(m.logdet)
    flat_ix = [0, 17, 101, 255]
    E = p.extra_form.reshape(-1, 3, 3)
    D = dlog.reshape(-1, 3)
    B = p.dbar_g.reshape((-1,) + p.dbar_g.shape[-3:])
    for k in flat_ix:
        brute = -2 * exterior.brute_gauduchon_term(D[k], B[k])
        assert np.max(np.abs(E[k] - brute)) < 1e-14


# time stepping -----------------------------------------------------------------

def test_stationary_problem_is_fixed_and_dt_grows():
    beta = flat_metric(Grid(2, 4))
    p = flow.FlowProblem(beta)
    ctrl = flow.StepControl()
    s = flow.initial_state(p, ctrl)
    for _ in range(12):
        s = flow.step(p, s, ctrl)
    assert np.max(np.abs(s.u)) < 1e-14
    assert s.dt == ctrl.dt_max
    assert s.rejected_count == 0


@pytest.mark.parametrize("n", [2, 3])
def test_shrinker_closed_form(n):
    p = shrinker(n, 2)
    res = flow.run(p, 0.5, times=[0.25, 0.5], monitor=False)
    assert res.final.t == 0.5
    for s in res.samples:
        assert np.max(np.abs(s.u - shrinker_u(n, s.t))) < 1e-9
        assert np.max(np.abs(s.udot - n * np.log(1 - s.t))) < 1e-9


def test_small_perturbation_decays_monotonically():
    beta = flat_metric(Grid(2, 8))
    p = flow.FlowProblem(beta)
    u0 = 0.01 * parse_trig("cos(x1 + y2) + sin(x2)", 2).evaluate(beta.grid)
    ctrl = flow.StepControl(dt_max=0.05)
    res = flow.run(p, 1.0, ctrl, cadence=0.25, state=flow.initial_state(p, ctrl, u0=u0), monitor=False)
    osc = [flow.spatial_oscillation(s.udot) for s in res.samples]
    assert all(b < a for a, b in zip(osc, osc[1:]))
    assert osc[-1] < 0.5 * osc[0]


def test_flow_residual_stationary_and_shrinker():
    beta = flat_metric(Grid(2, 4))
    p = flow.FlowProblem(beta)
    res = flow.run(p, 0.2, times=[0.1, 0.15, 0.2], monitor=False)
    assert flow.flow_residual(p, *res.samples[1:]) < 1e-14
    ps = shrinker(2, 4)
    ctrl = flow.StepControl(err_tol=1e-12)
    res = flow.run(ps, 0.301, ctrl, times=[0.299, 0.3, 0.301], monitor=False)
    _, a, b, c = res.samples
    assert flow.flow_residual(ps, a, b, c) < 1e-6
    assert flow.equivalence_residual(ps, b) < 1e-14
    with pytest.raises(ValueError):
        flow.flow_residual(ps.with_grid_data(variant="gauduchon"), a, b, c)


def test_positivity_rejections_counted():
    p = shrinker(2, 2)
    ctrl = flow.StepControl(dt_init=0.5, dt_max=0.5, err_tol=1.0)
    s = flow.initial_state(p, ctrl, t0=0.8, u0=np.full(p.grid.shape, shrinker_u(2, 0.8)))
    s = flow.step(p, s, ctrl)
    assert s.rejected_count >= 1
    assert s.t < 1.0


def test_singular_time_reached():
    p = shrinker(2, 2)
    with pytest.raises(SingularTimeReached) as exc:
        flow.run(p, 1.5, monitor=False, stop_on_singular=False)
    assert 0.99 < exc.value.t <= 1.0
    res = flow.run(p, 1.5, monitor=False)
    assert res.singular is not None
    assert res.samples[-1] is res.final


def test_sample_times_absolute_grid():
    assert flow.sample_times(0.0, 0.3, 0.1) == pytest.approx([0.1, 0.2, 0.3])
    assert flow.sample_times(0.15, 0.3, 0.1) == pytest.approx([0.2, 0.3])
    assert flow.sample_times(0.0, 0.3, None) == [0.3]


# checkpoints -----------------------------------------------------------------------

def test_checkpoint_bit_exact_roundtrip(tmp_path, rng):
    p = shrinker(2, 4)
    u = rng.standard_normal(p.grid.shape) * 1e-3
    s = flow.initial_state(p, u0=u, t0=0.123456789, dt=3.3e-3)
    path = tmp_path / "s.pshf"
    save_state(path, p, s)
    ck = read_checkpoint(path)
    assert ck["u"].tobytes() == u.tobytes()
    assert (ck["t"], ck["dt"], ck["n"], ck["N"]) == (s.t, s.dt, 2, 4)
    s2 = load_state(path, p)
    assert np.array_equal(s2.udot, s.udot)


def test_checkpoint_malformed(tmp_path):
    p = shrinker(2, 4)
    path = tmp_path / "bad.pshf"
    write_checkpoint(path, 2, 4, 0.0, 1e-3, np.zeros(p.grid.shape))
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="expected"):
        read_checkpoint(path)
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(path)
    path.write_bytes(data[:10])
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(path)
    path.write_bytes(data)
    with pytest.raises(ValueError, match="problem is"):
        load_state(path, shrinker(2, 2))
    with pytest.raises(ValueError):
        write_checkpoint(path, 2, 8, 0.0, 0.0, np.zeros(p.grid.shape))
