"""The scalar parabolic Monge-Ampere flow and its time integrator.

The flow evolves a real potential ``u`` by

    du/dt = log( det(g_tilde) / det(g) ) - F,        u(0) = 0,
    g_tilde = g_hat(t) + ((Delta u) g - ddbar u) / (n-1),
    g_hat(t) = *Psi_t / (n-1)!,   Psi_t = omega_0^{n-1} + t chi ^ omega^{n-2},

with the volume form ``Omega = e^F omega^n``.  The (n-1,n-1)-form solution is
``omega_t^{n-1} = Psi_t + i ddbar u ^ omega^{n-2}``.

For the canonical forcing ``chi = -(n-1) Ric(omega) + ddbar(psi)/S`` and
``F = psi/S`` this is exactly the (n-1)-plurisubharmonic flow.  For any other
``chi`` it is that flow plus the fixed forcing
``(chi + (n-1) Ric(omega) - ddbar F) ^ omega^{n-2}``; see :func:`flow_residual`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import forms, linalg
from .errors import InvariantViolation, NonFinite, PositivityLost, SingularTimeReached
from .geometry import MetricField, chern_ricci
from .grid import Grid

logger = logging.getLogger(__name__)

VARIANTS = ("base", "gauduchon")
OMEGA_HAT_TOL = 1e-10


class FlowProblem:
    """Immutable problem data: the reference and initial metrics, forcing and volume form.

    Parameters
    ----------
    omega, omega0 : MetricField
        Fixed reference metric and initial metric (``omega0`` defaults to ``omega``).
    chi : array, optional
        Forcing (1,1)-form; defaults to ``-(n-1) Ric(omega) + ddbar(psi) / S``.
    psi : array, optional
        Witness potential, default 0.
    S : float
        Horizon time used by the canonical ``chi`` and default ``F``.
    log_volume : array, optional
        ``F`` with ``Omega = e^F omega^n``; defaults to ``psi / S``.
    variant : {"base", "gauduchon"}
    """

    def __init__(self, omega: MetricField, omega0: MetricField | None = None,
                 chi: np.ndarray | None = None, psi: np.ndarray | None = None,
                 S: float = 1.0, log_volume: np.ndarray | None = None,
                 variant: str = "base"):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if S <= 0:
            raise ValueError("horizon S must be positive")
        grid = omega.grid
        n = grid.n
        self.grid = grid
        self.omega = omega
        self.omega0 = omega if omega0 is None else omega0
        self.S = float(S)
        self.variant = variant
        self.psi = np.zeros(grid.shape) if psi is None else np.asarray(psi, dtype=float)
        if chi is None:
            chi = -(n - 1) * chern_ricci(omega) + grid.hessian(self.psi) / self.S
        self.chi = np.asarray(chi, dtype=complex)
        if np.max(np.abs(self.chi - linalg.hconj(self.chi))) > 1e-12 * max(1.0, np.max(np.abs(self.chi))):
            raise InvariantViolation("hermitian", "forcing chi is not Hermitian")
        self.log_volume = self.psi / self.S if log_volume is None else np.asarray(log_volume, dtype=float)

        G = omega.g
        self.psi0_form = forms.power_n1(self.omega0)
        self.chi_form = forms.wedge_omega_nm2(self.chi, omega)
        self.ghat0 = forms.hodge_star_n1(self.psi0_form, omega)
        self.chi_hat = (omega.trace(self.chi)[..., None, None] * G - self.chi) / (n - 1)
        self.logdet_omega_n1 = (n - 1) * omega.logdet

        self.extra_form = None
        self.dbar_g = None
        if variant == "gauduchon":
            self.dbar_g = grid.gradient(G, conjugate=True)
            dlog = grid.gradient(omega.logdet)
            dpsi = grid.gradient(self.psi)
            self.extra_form = (-(n - 1) * forms.gauduchon_term(dlog, self.dbar_g)
                               + forms.gauduchon_term(dpsi, self.dbar_g) / self.S)
            self.extra_hat = forms.hodge_star_n1(self.extra_form, omega)

    @property
    def n(self) -> int:
        return self.grid.n

    def excess_forcing(self) -> np.ndarray:
        """``chi + (n-1) Ric(omega) - ddbar F``: zero for the canonical problem."""
        return self.chi + (self.n - 1) * chern_ricci(self.omega) - self.grid.hessian(self.log_volume)

    def with_grid_data(self, **kw) -> "FlowProblem":
        args = dict(omega=self.omega, omega0=self.omega0, chi=self.chi, psi=self.psi,
                    S=self.S, log_volume=self.log_volume, variant=self.variant)
        args.update(kw)
        return FlowProblem(**args)


# pointwise operators -----------------------------------------------------------

def psi_t(p: FlowProblem, t: float) -> np.ndarray:
    """``Psi_t = omega_0^{n-1} + t chi ^ omega^{n-2}`` (plus the Gauduchon forcing)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    out = p.psi0_form + t * p.chi_form
    if p.extra_form is not None:
        out = out + t * p.extra_form
    return out


def omega_hat(p: FlowProblem, t: float, check: bool = True) -> np.ndarray:
    """``g_hat_t`` from the linear formula, cross-checked against ``*Psi_t / (n-1)!``."""
    lin = p.ghat0 + t * p.chi_hat
    if p.extra_form is not None:
        lin = lin + t * p.extra_hat
    if check:
        star = forms.hodge_star_n1(psi_t(p, t), p.omega)
        err = float(np.max(np.abs(lin - star)))
        scale = max(1.0, float(np.max(np.abs(lin))))
        if err > OMEGA_HAT_TOL * scale:
            raise InvariantViolation(
                "omega-hat", f"flow.omega_hat: star and linear formulas differ by {err:.3e} at t={t}")
    return lin


def _grad_term(p: FlowProblem, u: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    du = p.grid.gradient(u, spectrum=spectrum)
    return forms.gauduchon_term(du, p.dbar_g)


def omega_tilde(p: FlowProblem, u, t: float, hess: np.ndarray | None = None,
                spectrum: np.ndarray | None = None) -> np.ndarray:
    """``g_tilde = g_hat_t + ((Delta u) g - ddbar u) / (n-1)``; positivity is not checked."""
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = p.grid.fft(u)
    if hess is None:
        hess = p.grid.hessian(u, spectrum=spectrum)
    G = p.omega.g
    lap = p.omega.trace(hess)
    out = omega_hat(p, t, check=False) + (lap[..., None, None] * G - hess) / (p.n - 1)
    if p.variant == "gauduchon":
        out = out + forms.hodge_star_n1(_grad_term(p, u, spectrum), p.omega)
    return out


def check_positive(p: FlowProblem, gt: np.ndarray, t: float, pos_tol: float) -> None:
    """Raise :class:`PositivityLost` unless ``g_tilde > pos_tol * g`` everywhere."""
    ok = linalg.positive_definite(gt - pos_tol * p.omega.g)
    if ok.all():
        return
    bad = np.flatnonzero(~ok.reshape(-1))
    gt_bad = gt.reshape((-1,) + gt.shape[-2:])[bad]
    g_bad = p.omega.g.reshape((-1,) + gt.shape[-2:])[bad]
    ev = linalg.relative_eigvalsh(gt_bad, g_bad)[:, 0] if np.all(np.isfinite(gt_bad)) else np.full(len(bad), np.nan)
    k = int(np.nanargmin(ev)) if np.any(np.isfinite(ev)) else 0
    raise PositivityLost(t, p.grid.point(int(bad[k])), float(ev[k]))


def _components(m: np.ndarray, n: int) -> dict:
    out = {}
    for i in range(n):
        out[i, i] = np.ascontiguousarray(m[..., i, i].real)
        for j in range(i + 1, n):
            out[i, j] = np.ascontiguousarray(m[..., i, j])
    return out


def _assemble(c: dict, n: int, shape) -> np.ndarray:
    out = np.empty(shape + (n, n), dtype=complex)
    for (i, j), v in c.items():
        out[..., i, j] = v
        if i != j:
            out[..., j, i] = np.conj(v)
    return out


def _hermitian_minors(c: dict, n: int):
    """Leading principal minors of a Hermitian field given by its upper components."""
    a, b = c[0, 0], c[1, 1]
    p = c[0, 1]
    d2 = a * b - (p.real ** 2 + p.imag ** 2)
    if n == 2:
        return a, d2, d2
    cc, q, r = c[2, 2], c[0, 2], c[1, 2]
    pr = p * r
    d3 = (a * b * cc + 2.0 * (pr.real * q.real + pr.imag * q.imag)
          - a * (r.real ** 2 + r.imag ** 2) - b * (q.real ** 2 + q.imag ** 2) - cc * (p.real ** 2 + p.imag ** 2))
    return a, d2, d3


class _HotPath:
    """Contiguous per-component data for the base-variant right-hand side.

    Matrix fields stored as ``[..., i, j]`` are strided in memory; the
    integrator spends most of its time here, so each Hermitian field is split
    into its upper-triangle components once.
    """

    def __init__(self, p: FlowProblem):
        n = p.n
        self.n = n
        self.shape = p.grid.shape
        self.G = _components(p.omega.g, n)
        self.ginv = _components(p.omega.inv_up, n)
        self.ghat0 = _components(p.ghat0, n)
        self.chi_hat = _components(p.chi_hat, n)
        self.offset = p.omega.logdet + p.log_volume

    def tilde(self, p: FlowProblem, u, t: float) -> dict:
        n = self.n
        H = p.grid.hessian_components(u)
        lap = sum(self.ginv[i, i] * H[i, i] for i in range(n))
        for i in range(n):
            for j in range(i + 1, n):
                lap = lap + 2.0 * (self.ginv[i, j] * H[i, j]).real
        c = 1.0 / (n - 1)
        return {k: self.ghat0[k] + t * self.chi_hat[k] + c * (lap * self.G[k] - H[k]) for k in H}


def _hot(p: FlowProblem) -> _HotPath | None:
    if p.variant != "base":
        return None
    hp = getattr(p, "_hot_path", None)
    if hp is None:
        hp = p._hot_path = _HotPath(p)
    return hp


def rhs(p: FlowProblem, u, t: float, pos_tol: float = 1e-10, return_metric: bool = False):
    """Metric-side ``du/dt = log det g_tilde - log det g - F``.

    Raises :class:`PositivityLost` when ``g_tilde`` is not ``pos_tol``-positive
    relative to ``g``.
    """
    hp = _hot(p)
    if hp is None:
        gt = omega_tilde(p, u, t)
        check_positive(p, gt, t, pos_tol)
        udot = np.log(linalg.hdet(gt)) - p.omega.logdet - p.log_volume
        return (udot, gt) if return_metric else udot
    c = hp.tilde(p, np.asarray(u, dtype=float), t)
    shifted = {k: v - pos_tol * hp.G[k] for k, v in c.items()}
    d1, d2, d3 = _hermitian_minors(shifted, hp.n)
    if not (np.all(d1 > 0) and np.all(d2 > 0) and np.all(d3 > 0)):
        check_positive(p, _assemble(c, hp.n, hp.shape), t, pos_tol)
    det = _hermitian_minors(c, hp.n)[2]
    udot = np.log(det) - hp.offset
    if return_metric:
        return udot, _assemble(c, hp.n, hp.shape)
    return udot


def rhs_form_side(p: FlowProblem, u, t: float) -> np.ndarray:
    """Form-side ``log det(Psi_t + i ddbar u ^ omega^{n-2}) / det(omega^{n-1}) - F``."""
    u = np.asarray(u, dtype=float)
    spec = p.grid.fft(u)
    P = psi_t(p, t) + forms.wedge_omega_nm2(p.grid.hessian(u, spectrum=spec), p.omega)
    if p.variant == "gauduchon":
        P = P + _grad_term(p, u, spec)
    return np.log(forms.det_n1n1(P)) - p.logdet_omega_n1 - p.log_volume


def gauduchon_rhs(p: FlowProblem, u, t: float, pos_tol: float = 1e-10, return_metric: bool = False):
    """Right-hand side of the experimental Gauduchon-type flow.

    The ansatz adds ``Re(i du ^ dbar omega^{n-2})`` to the form and the forcing
    ``-(n-1) Re(i d log omega^n ^ dbar omega^{n-2})`` to ``Psi_t``.
    """
    if p.variant != "gauduchon":
        p = p.with_grid_data(variant="gauduchon")
    return rhs(p, u, t, pos_tol, return_metric)


def omega_t_form(p: FlowProblem, u, t: float) -> np.ndarray:
    """Matrix of ``omega_t^{n-1} = Psi_t + i ddbar u ^ omega^{n-2}``."""
    u = np.asarray(u, dtype=float)
    spec = p.grid.fft(u)
    P = psi_t(p, t) + forms.wedge_omega_nm2(p.grid.hessian(u, spectrum=spec), p.omega)
    if p.variant == "gauduchon":
        P = P + _grad_term(p, u, spec)
    return P


# time integration ----------------------------------------------------------------

@dataclass(frozen=True)
class StepControl:
    err_tol: float = 1e-8
    dt_init: float = 1e-3
    dt_max: float = 1e-2
    dt_min: float = 1e-12
    pos_tol: float = 1e-10
    safety: float = 0.9
    max_growth: float = 2.0
    min_shrink: float = 0.2


@dataclass(frozen=True)
class FlowState:
    t: float
    u: np.ndarray
    udot: np.ndarray
    gtilde: np.ndarray = field(repr=False)
    dt: float
    step_count: int = 0
    rejected_count: int = 0


def initial_state(p: FlowProblem, ctrl: StepControl = StepControl(), u0=None,
                  t0: float = 0.0, dt: float | None = None) -> FlowState:
    u = np.zeros(p.grid.shape) if u0 is None else np.array(u0, dtype=float)
    udot, gt = rhs(p, u, t0, ctrl.pos_tol, return_metric=True)
    if not np.all(np.isfinite(udot)):
        raise NonFinite(t0, "initial u-dot")
    return FlowState(t=float(t0), u=u, udot=udot, gtilde=gt,
                     dt=float(ctrl.dt_init if dt is None else dt))


def _rk4(p, u, t, h, k1, pos_tol):
    k2 = rhs(p, u + 0.5 * h * k1, t + 0.5 * h, pos_tol)
    k3 = rhs(p, u + 0.5 * h * k2, t + 0.5 * h, pos_tol)
    k4 = rhs(p, u + h * k3, t + h, pos_tol)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(p: FlowProblem, state: FlowState, ctrl: StepControl = StepControl(),
         t_stop: float | None = None) -> FlowState:
    """One accepted RK4 step with step-doubling error control.

    A stage that loses positivity rejects the step and halves ``dt``.  The
    step lands exactly on ``t_stop`` when it would otherwise overshoot it.
    """
    proposal = min(state.dt, ctrl.dt_max)
    h = proposal
    clipped = False
    if t_stop is not None and state.t + h >= t_stop - 1e-13 * max(1.0, abs(t_stop)):
        h = t_stop - state.t
        clipped = True
    rejected = 0
    u, t, k1 = state.u, state.t, state.udot
    while True:
        if h < ctrl.dt_min:
            raise SingularTimeReached(t, h)
        try:
            full = _rk4(p, u, t, h, k1, ctrl.pos_tol)
            mid = _rk4(p, u, t, 0.5 * h, k1, ctrl.pos_tol)
            kmid = rhs(p, mid, t + 0.5 * h, ctrl.pos_tol)
            half = _rk4(p, mid, t + 0.5 * h, 0.5 * h, kmid, ctrl.pos_tol)
            udot_new, gt_new = rhs(p, half, t + h, ctrl.pos_tol, return_metric=True)
        except PositivityLost as exc:
            logger.debug("step rejected at t=%.6g, h=%.3e: %s", t, h, exc)
            h *= 0.5
            clipped = False
            rejected += 1
            continue
        err = float(np.max(np.abs(half - full))) / 15.0
        if not (np.isfinite(err) and np.all(np.isfinite(udot_new))):
            raise NonFinite(t + h)
        if err <= ctrl.err_tol:
            fac = ctrl.max_growth if err == 0 else min(ctrl.max_growth, ctrl.safety * (ctrl.err_tol / err) ** 0.2)
            new_dt = min(ctrl.dt_max, h * fac)
            if clipped and rejected == 0:
                new_dt = max(new_dt, proposal)
            t_new = t_stop if clipped else t + h
            return FlowState(t=float(t_new), u=half, udot=udot_new, gtilde=gt_new, dt=float(new_dt),
                             step_count=state.step_count + 1,
                             rejected_count=state.rejected_count + rejected)
        h *= max(ctrl.min_shrink, ctrl.safety * (ctrl.err_tol / err) ** 0.2)
        clipped = False
        rejected += 1


def sample_times(t0: float, t_end: float, cadence: float | None) -> list[float]:
    """Absolute sample grid ``k * cadence`` in ``(t0, t_end]`` plus ``t_end``."""
    if cadence is None or cadence <= 0:
        return [float(t_end)]
    k0 = int(np.floor(t0 / cadence + 1e-9)) + 1
    out = []
    k = k0
    while k * cadence < t_end - 1e-12 * max(1.0, t_end):
        out.append(k * cadence)
        k += 1
    out.append(float(t_end))
    return out


@dataclass
class RunResult:
    samples: list[FlowState]
    final: FlowState
    report: object | None = None
    singular: SingularTimeReached | None = None
    positivity_failures: int = 0


def run(p: FlowProblem, t_end: float, ctrl: StepControl = StepControl(),
        cadence: float | None = None, times: Sequence[float] | None = None,
        state: FlowState | None = None,
        callbacks: Iterable[Callable[[FlowState], None]] = (),
        on_step: Callable[[FlowState], None] | None = None,
        monitor: bool = True, stop_on_singular: bool = True,
        include_initial: bool = True) -> RunResult:
    """Integrate to ``t_end``, emitting states at ``times`` (or every ``cadence``).

    With ``monitor`` set the estimate monitors run on every emitted state and
    the :class:`~pshflow.estimates.EstimateReport` is attached to the result.
    A :class:`SingularTimeReached` ends the run early (recorded in
    ``result.singular``) unless ``stop_on_singular`` is false, in which case it
    propagates.
    """
    from .estimates import EstimateReport

    if state is None:
        state = initial_state(p, ctrl)
    callbacks = list(callbacks)
    stops = sorted(float(x) for x in times) if times is not None else sample_times(state.t, t_end, cadence)
    stops = [x for x in stops if x > state.t + 1e-14]
    report = EstimateReport(p) if monitor else None
    samples: list[FlowState] = []

    def emit(s: FlowState) -> None:
        samples.append(s)
        if report is not None:
            report.record(s)
        for cb in callbacks:
            cb(s)

    if include_initial:
        emit(state)
    singular = None
    for stop in stops:
        while state.t < stop:
            try:
                state = step(p, state, ctrl, t_stop=stop)
            except SingularTimeReached as exc:
                if not stop_on_singular:
                    raise
                singular = exc
                break
            if on_step is not None:
                on_step(state)
        if singular is not None:
            if not samples or samples[-1] is not state:
                emit(state)
            break
        emit(state)
    return RunResult(samples=samples, final=state, report=report, singular=singular)


# residuals -----------------------------------------------------------------------

def equivalence_residual(p: FlowProblem, state: FlowState) -> float:
    """|metric-side u-dot - form-side u-dot| in sup norm."""
    return float(np.max(np.abs(state.udot - rhs_form_side(p, state.u, state.t))))


def flow_residual(p: FlowProblem, before: FlowState, mid: FlowState, after: FlowState) -> float:
    """Sup-norm residual of the form flow at ``mid`` by centered differencing.

    Evaluates ``d/dt omega_t^{n-1} + (n-1) Ric(omega_t) ^ omega^{n-2} - E ^ omega^{n-2}``
    with ``omega_t = root_n1(Psi_t + i ddbar u ^ omega^{n-2})`` and the
    excess forcing ``E`` of :meth:`FlowProblem.excess_forcing` (zero for the
    canonical problem).
    """
    if p.variant != "base":
        raise ValueError("flow_residual is defined for the base variant only")
    P_minus = omega_t_form(p, before.u, before.t)
    P_plus = omega_t_form(p, after.u, after.t)
    dPdt = (P_plus - P_minus) / (after.t - before.t)
    P_mid = omega_t_form(p, mid.u, mid.t)
    gt = forms.root_n1(P_mid, p.grid)
    ric_t = -p.grid.hessian(np.log(linalg.hdet(gt)))
    res = dPdt + (p.n - 1) * forms.wedge_omega_nm2(ric_t, p.omega) - forms.wedge_omega_nm2(p.excess_forcing(), p.omega)
    return float(np.max(np.abs(res)))


def spatial_oscillation(f: np.ndarray) -> float:
    return float(np.max(f) - np.min(f))
