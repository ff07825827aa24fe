"""Identity suites run by the ``check`` subcommand.

Each suite returns a list of :class:`Check` rows.  Thresholds default to the
configured tolerance except for the exact-algebra checks, which use 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exterior, flow, forms, linalg
from .geometry import MetricField, chern_curvature, chern_ricci, christoffel, commutation_residual, ricci_from_curvature
from .recipes import parse_trig

TEST_FUNCTION = "0.1 cos(x1 + y2) + 0.05 sin(x2 - y1)"
ALGEBRA_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


def geometry_suite(metric: MetricField, tol: float = 1e-7, u=None) -> list[Check]:
    grid = metric.grid
    if u is None:
        u = parse_trig(TEST_FUNCTION, grid.n).evaluate(grid)
    herm = float(np.max(np.abs(metric.g - linalg.hconj(metric.g))))
    out = [Check("geometry", "hermitian", herm, ALGEBRA_TOL)]
    gamma = christoffel(metric)
    curv = chern_curvature(metric, gamma)
    ric = float(np.max(np.abs(ricci_from_curvature(curv) - chern_ricci(metric))))
    out.append(Check("geometry", "ricci_paths", ric, tol))
    res = commutation_residual(u, metric)
    for key in ("third_mixed", "third_bar", "third_swap", "fourth"):
        out.append(Check("geometry", f"commutation_{key}", res[key], tol))
    return out


def forms_suite(metric: MetricField, points: int = 10, seed: int = 0) -> list[Check]:
    """Closed forms against brute-force exterior algebra at random grid points."""
    grid = metric.grid
    n = grid.n
    rng = np.random.default_rng(seed)
    flat = rng.choice(grid.size, size=min(points, grid.size), replace=False)
    G = metric.g.reshape(-1, n, n)[flat]
    w_err = s_err = 0.0
    for k in range(len(flat)):
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = A + A.conj().T
        brute = exterior.read_n1n1(exterior.brute_wedge(A, G[k], n - 2), n)
        w_err = max(w_err, float(np.max(np.abs(forms.wedge_omega_nm2(A, G[k]) - brute))))
        P = forms.wedge_omega_nm2(A, G[k]) + forms.power_n1(G[k])
        s_err = max(s_err, float(np.max(np.abs(forms.hodge_star_n1(P, G[k]) - exterior.naive_star_n1(P, G[k])))))
    pw = forms.power_n1(metric)
    det_err = float(np.max(np.abs(forms.det_n1n1(pw) / metric.det ** (n - 1) - 1.0)))
    root_err = float(np.max(np.abs(forms.root_n1(pw, grid) - metric.g)))
    return [Check("forms", "wedge_vs_brute", w_err, ALGEBRA_TOL),
            Check("forms", "star_vs_brute", s_err, ALGEBRA_TOL),
            Check("forms", "det_power", det_err, ALGEBRA_TOL),
            Check("forms", "power_root_roundtrip", root_err, ALGEBRA_TOL)]


def flow_suite(problem: flow.FlowProblem, t: float = 0.1, u=None, tol: float = ALGEBRA_TOL) -> list[Check]:
    grid = problem.grid
    if u is None:
        u = 0.01 * parse_trig(TEST_FUNCTION, grid.n).evaluate(grid)
    lin = flow.omega_hat(problem, t, check=False)
    star = forms.hodge_star_n1(flow.psi_t(problem, t), problem.omega)
    out = [Check("flow", "omega_hat_formulas", float(np.max(np.abs(lin - star))), tol)]
    gt = flow.omega_tilde(problem, u, t)
    direct = forms.hodge_star_n1(flow.omega_t_form(problem, u, t), problem.omega)
    out.append(Check("flow", "omega_tilde_vs_star", float(np.max(np.abs(gt - direct))), tol))
    if linalg.positive_definite(gt).all():
        metric_side = flow.rhs(problem, u, t)
        form_side = flow.rhs_form_side(problem, u, t)
        out.append(Check("flow", "rhs_metric_vs_form", float(np.max(np.abs(metric_side - form_side))), tol))
    return out


def run_all(problem: flow.FlowProblem, tol: float = 1e-7, seed: int = 0) -> list[Check]:
    return (geometry_suite(problem.omega, tol) + forms_suite(problem.omega, seed=seed)
            + flow_suite(problem))
