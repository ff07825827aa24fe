"""Runtime monitors for the a-priori estimates and pointwise identities of the flow.

Every monitor is a pure function of a :class:`~pshflow.flow.FlowState`.  The
uniform constants of the estimates are existential, so nothing here compares
against a fixed numeric bound; :class:`EstimateReport` records the measured
quantities so their stability under refinement can be tested.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .errors import InvariantViolation
from .geometry import MetricField, christoffel

SCHEMA_VERSION = 1
EPS = np.finfo(float).eps


def _ginv_up(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(linalg.inv(m), -1, -2)


def theta(gt: np.ndarray, omega: MetricField, check: bool = True) -> np.ndarray:
    """``Theta^{i jbar} = ((tr_gt g) g^{i jbar} - gt^{i jbar}) / (n-1)`` stored ``[..., i, j]``.

    With ``check`` the minimum eigenvalue is asserted positive.
    """
    n = omega.n
    gt_up = _ginv_up(gt)
    tr = np.einsum("...ij,...ij->...", gt_up, omega.g).real
    th = (tr[..., None, None] * omega.inv_up - gt_up) / (n - 1)
    if check:
        lo = linalg.eigvalsh(th)[..., 0]
        if np.min(lo) <= 0:
            flat = int(np.argmin(lo))
            raise InvariantViolation("theta-positive", "estimates.theta: Theta is not positive definite",
                                     point=omega.grid.point(flat), value=float(lo.reshape(-1)[flat]))
    return th


def L_op(v, th: np.ndarray, grid) -> np.ndarray:
    """``L v = Theta^{i jbar} d_i d_jbar v``."""
    return np.einsum("...ij,...ij->...", th, grid.hessian(v)).real


def L_expanded(v, gt: np.ndarray, omega: MetricField) -> np.ndarray:
    """``((Delta v) tr_gt g - tr_gt ddbar v) / (n-1)``: the same operator, expanded."""
    n = omega.n
    H = omega.grid.hessian(v)
    gt_up = _ginv_up(gt)
    tr_g = np.einsum("...ij,...ij->...", gt_up, omega.g).real
    tr_H = np.einsum("...ij,...ij->...", gt_up, H).real
    return (omega.trace(H) * tr_g - tr_H) / (n - 1)


def _hat_metric(p, state) -> np.ndarray:
    """The ``g_hat`` part of ``g_tilde`` (including the gradient term in the Gauduchon mode)."""
    from .flow import omega_hat, omega_tilde
    if p.variant == "base":
        return omega_hat(p, state.t, check=False)
    H = p.grid.hessian(state.u)
    lap = p.omega.trace(H)
    return omega_tilde(p, state.u, state.t, hess=H) - (lap[..., None, None] * p.omega.g - H) / (p.n - 1)


def trace_identity_residual(p, state, th: np.ndarray | None = None) -> float:
    """Sup-norm of ``n - tr_gt g_hat - L u``."""
    gt = state.gtilde
    if th is None:
        th = theta(gt, p.omega)
    ghat = _hat_metric(p, state)
    tr_hat = np.einsum("...ij,...ij->...", _ginv_up(gt), ghat).real
    return float(np.max(np.abs(p.n - tr_hat - L_op(state.u, th, p.grid))))


def eta(u, ghat: np.ndarray, omega: MetricField) -> np.ndarray:
    """``eta = ddbar u + (tr_g g_hat) g - (n-1) g_hat``."""
    n = omega.n
    return omega.grid.hessian(u) + omega.trace(ghat)[..., None, None] * omega.g - (n - 1) * ghat


@dataclass(frozen=True)
class EtaCheck:
    two_expression: float
    eigen_relation: float
    chain_violations: int
    chain_margin: float

    @property
    def passed(self) -> bool:
        return self.chain_violations == 0


def eigen_chain(lam: np.ndarray, eta11: np.ndarray, slack: np.ndarray | float = 0.0):
    """Check ``tr/n <= lam_n <= eta_11 <= (n-1) lam_n <= (n-1) tr`` pointwise.

    Returns ``(violations, min margin)`` where margin is the smallest gap
    (negative when violated) over all four inequalities.
    """
    n = lam.shape[-1]
    tr = lam.sum(axis=-1)
    top = lam[..., -1]
    chain = [tr / n, top, eta11, (n - 1) * top, (n - 1) * tr]
    gaps = np.stack([chain[k + 1] - chain[k] for k in range(4)], axis=-1)
    viol = int(np.count_nonzero(gaps < -np.asarray(slack)[..., None]))
    return viol, float(np.min(gaps))


def eta_checks(p, state) -> EtaCheck:
    """Both expressions for eta, its eigenvalue relation, and the eigenvalue chain.

    The eigenvalues ``lam`` of ``gt`` relative to ``g`` come from the Cholesky
    frame of ``g``; in that frame ``eta`` has eigenvalues ``sum(lam) - (n-1) lam_i``.
    The chain is exact arithmetic on sorted eigenvalues, so the only slack
    allowed is a few ulps of the eigenvalue scale.
    """
    n = p.n
    om = p.omega
    gt = state.gtilde
    e1 = eta(state.u, _hat_metric(p, state), om)
    e2 = om.trace(gt)[..., None, None] * om.g - (n - 1) * gt
    two = float(np.max(np.abs(e1 - e2)))

    lam = linalg.eigvalsh(linalg.relative(gt, om.frame))
    eta_ev = linalg.eigvalsh(linalg.relative(e2, om.frame))
    predicted = np.sort(lam.sum(axis=-1)[..., None] - (n - 1) * lam, axis=-1)
    rel = float(np.max(np.abs(eta_ev - predicted)))
    scale = np.abs(lam).sum(axis=-1) * (n - 1)
    viol, margin = eigen_chain(lam, eta_ev[..., -1], slack=8 * EPS * np.maximum(scale, 1.0))
    return EtaCheck(two, rel, viol, margin)


def udot_gradient_identity(p, state) -> float:
    """Sup-norm of ``d_l udot - (gt^{i jbar} nabla_l gt_{i jbar} - d_l F)``."""
    grid = p.grid
    gt = state.gtilde
    lhs = grid.gradient(state.udot)
    gamma = christoffel(p.omega)                  # [..., l, i, p]
    dgt = grid.gradient(gt)                       # [..., i, j, l]
    nab = dgt - np.einsum("...lip,...pj->...ijl", gamma, gt)
    rhs = np.einsum("...ij,...ijl->...l", _ginv_up(gt), nab) - grid.gradient(p.log_volume)
    return float(np.max(np.abs(lhs - rhs)))


def discrete_max_principle_check(v, omega: MetricField, slack_constant: float = 10.0) -> dict:
    """Eigenvalues of ``(Delta v) g - ddbar v`` at the grid maximum of ``v``.

    The grid argmax sits ``O(1/N)`` from the true maximum, so positive
    eigenvalues up to ``slack_constant * N^-2 * max|ddbar v|`` are tolerated,
    plus a few ulps of that scale.
    """
    grid = omega.grid
    v = np.asarray(v, dtype=float)
    H = grid.hessian(v)
    flat = int(np.argmax(v))
    idx = np.unravel_index(flat, grid.shape)
    g = omega.g[idx]
    Hp = H[idx]
    lap = float(np.einsum("ij,ij->", omega.inv_up[idx], Hp).real)
    M = lap * g - Hp
    ev = linalg.relative_eigvalsh(M[None], g[None])[0]
    c2 = float(np.max(np.abs(H))) if H.size else 0.0
    slack = slack_constant * grid.N ** -2 * c2 + 64 * EPS * max(c2, 1.0)
    return {"point": grid.point(flat), "eigenvalues": ev.tolist(),
            "max_eigenvalue": float(ev[-1]), "slack": slack,
            "passed": bool(ev[-1] <= slack)}


def grad_norm2(u, omega: MetricField) -> np.ndarray:
    """``|du|^2_g = g^{i jbar} u_i conj(u_j)``."""
    du = omega.grid.gradient(u)
    return np.einsum("...ij,...i,...j->...", omega.inv_up, du, np.conj(du)).real


# reporting ----------------------------------------------------------------------

COLUMNS = (
    "t", "sup_u", "sup_udot", "osc_udot", "mean_udot",
    "vol_ratio_min", "vol_ratio_max", "sup_trace", "sup_grad2", "min_eig",
    "trace_ratio", "theta_min_eig", "trace_identity", "eta_two_expr", "eta_eigen",
    "chain_violations", "udot_gradient", "step_count", "rejected_count", "dt",
)


def sample(p, state) -> dict:
    """One row of monitored quantities for ``state``."""
    om = p.omega
    gt = state.gtilde
    th = theta(gt, om, check=False)
    th_min = float(np.min(linalg.eigvalsh(th)[..., 0]))
    vol = linalg.hdet(gt) / (np.exp(p.log_volume) * om.det)
    tr = om.trace(gt)
    grad2 = grad_norm2(state.u, om)
    lam_min = float(np.min(om.relative_eigenvalues(gt)[..., 0]))
    ec = eta_checks(p, state)
    sup_tr = float(np.max(tr))
    sup_g2 = float(np.max(grad2))
    return {
        "t": state.t,
        "sup_u": float(np.max(np.abs(state.u))),
        "sup_udot": float(np.max(np.abs(state.udot))),
        "osc_udot": float(np.ptp(state.udot)),
        "mean_udot": float(np.mean(state.udot)),
        "vol_ratio_min": float(np.min(vol)),
        "vol_ratio_max": float(np.max(vol)),
        "sup_trace": sup_tr,
        "sup_grad2": sup_g2,
        "min_eig": lam_min,
        "trace_ratio": sup_tr / (sup_g2 + 1.0),
        "theta_min_eig": th_min,
        "trace_identity": trace_identity_residual(p, state, th) if th_min > 0 else math.inf,
        "eta_two_expr": ec.two_expression,
        "eta_eigen": ec.eigen_relation,
        "chain_violations": ec.chain_violations,
        "udot_gradient": udot_gradient_identity(p, state),
        "step_count": state.step_count,
        "rejected_count": state.rejected_count,
        "dt": state.dt,
    }


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


class EstimateReport:
    """Time series of monitored quantities, one row per emitted state.

    Parameters
    ----------
    problem : FlowProblem
    ceilings : dict, optional
        Sanity ceilings per column; exceeding one is flagged, never raised.
    """

    def __init__(self, problem=None, ceilings: dict | None = None):
        self.problem = problem
        self.rows: list[dict] = []
        self.ceilings = dict(ceilings or {})

    def record(self, state) -> dict:
        row = sample(self.problem, state)
        self.rows.append(row)
        return row

    def __len__(self) -> int:
        return len(self.rows)

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def running_max(self, name: str) -> np.ndarray:
        return np.maximum.accumulate(self.series(name))

    def flags(self) -> list[str]:
        out = []
        for name, ceiling in self.ceilings.items():
            s = self.series(name)
            if s.size and np.max(s) > ceiling:
                out.append(f"{name} exceeded ceiling {ceiling:g} (max {np.max(s):.6g})")
        return out

    def all_finite(self) -> bool:
        return all(math.isfinite(float(r[c])) for r in self.rows for c in COLUMNS)

    def summary(self) -> dict:
        if not self.rows:
            return {"schema_version": SCHEMA_VERSION, "samples": 0}
        last = self.rows[-1]
        out = {
            "schema_version": SCHEMA_VERSION,
            "samples": len(self.rows),
            "t_final": last["t"],
            "max_sup_u": float(np.max(self.series("sup_u"))),
            "max_sup_udot": float(np.max(self.series("sup_udot"))),
            "vol_ratio_interval": [float(np.min(self.series("vol_ratio_min"))),
                                   float(np.max(self.series("vol_ratio_max")))],
            "max_sup_trace": float(np.max(self.series("sup_trace"))),
            "max_sup_grad2": float(np.max(self.series("sup_grad2"))),
            "max_trace_ratio": float(np.max(self.series("trace_ratio"))),
            "min_min_eig": float(np.min(self.series("min_eig"))),
            "min_theta_eig": float(np.min(self.series("theta_min_eig"))),
            "max_trace_identity": float(np.max(self.series("trace_identity"))),
            "max_eta_two_expr": float(np.max(self.series("eta_two_expr"))),
            "max_eta_eigen": float(np.max(self.series("eta_eigen"))),
            "chain_violations": int(np.sum(self.series("chain_violations"))),
            "max_udot_gradient": float(np.max(self.series("udot_gradient"))),
            "final_osc_udot": last["osc_udot"],
            # additive constant of the stationary limit
            "b": last["mean_udot"],
            "flags": self.flags(),
        }
        if self.problem is not None:
            out["n"] = self.problem.n
            out["N"] = self.problem.grid.N
            out["variant"] = self.problem.variant
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None, extra: dict | None = None) -> str:
        data = self.summary()
        if extra:
            data.update(extra)
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def read_csv(cls, path) -> "EstimateReport":
        rep = cls()
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# schema_version="):
                raise ValueError(f"{path}: missing schema header")
            version = int(first.split("=", 1)[1])
            if version != SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported schema version {version}")
            for row in csv.DictReader(fh):
                rep.rows.append({k: float(v) for k, v in row.items()})
        return rep


def bounds_report(problem, trajectory: Sequence | Iterable, ceilings: dict | None = None) -> EstimateReport:
    """Build an :class:`EstimateReport` from a sequence of states."""
    rep = EstimateReport(problem, ceilings)
    for s in trajectory:
        rep.record(s)
    return rep
