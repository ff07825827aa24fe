"""Estimating the maximal existence time from class positivity.

The flow exists while some potential ``psi`` makes
``Psi_t + i ddbar psi ^ omega^{n-2}`` positive.  :func:`class_positivity`
maximizes the smallest eigenvalue of that form over ``psi`` in a truncated,
mean-free Fourier space; a positive value is a certificate, a negative one is
only evidence.  :func:`predicted_T` bisects on ``t`` with that predicate and
:func:`singular_time` runs the flow itself for comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import forms, linalg
from .geometry import MetricField

logger = logging.getLogger(__name__)


@dataclass
class MaxTimeQuery:
    """Inputs of the class-positivity search.

    Parameters
    ----------
    omega, omega0 : MetricField
    chi : array
        Forcing (1,1)-form.
    t_lo, t_hi : float
        Initial bracket; ``t_lo`` must be feasible.
    K : int
        Largest integer frequency per axis allowed in ``psi``.
    iterations : int
        Ascent iterations per temperature.
    temperatures : tuple
        Softmin temperatures as fractions of the objective scale.
    restarts : int
        Random restarts tried when the first ascent does not certify.
    seed : int
    """

    omega: MetricField
    omega0: MetricField
    chi: np.ndarray
    t_lo: float = 0.0
    t_hi: float = 2.0
    K: int = 4
    iterations: int = 60
    temperatures: tuple = (1e-1, 1e-2, 1e-3)
    restarts: int = 3
    seed: int = 0
    infeasible_fraction: float = 0.05

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if not 0 <= self.t_lo < self.t_hi:
            raise ValueError("need 0 <= t_lo < t_hi")
        self.chi = np.asarray(self.chi, dtype=complex)
        self._setup()

    @classmethod
    def from_problem(cls, p, **kw) -> "MaxTimeQuery":
        return cls(omega=p.omega, omega0=p.omega0, chi=p.chi, **kw)

    def _setup(self) -> None:
        om = self.omega
        grid = om.grid
        n = om.n
        self.grid = grid
        self.frame = om.frame
        ghat0 = forms.hodge_star_n1(forms.power_n1(self.omega0), om)
        chi_hat = (om.trace(self.chi)[..., None, None] * om.g - self.chi) / (n - 1)
        self.A0 = linalg.hermitian_part(linalg.relative(ghat0, self.frame))
        self.A1 = linalg.hermitian_part(linalg.relative(chi_hat, self.frame))
        lap = grid.laplace_symbol
        # modes invisible to every derivative (mean, Nyquist) cannot move the form
        mask = grid.lowpass_mask(self.K) & (np.abs(lap) > 0)
        self.mask = mask
        self.scale = float(np.mean(np.real(np.trace(self.A0, axis1=-2, axis2=-1)))) / n
        hol, anti = grid._symbols
        self._sym = [[hol[i] * anti[j] for j in range(n)] for i in range(n)]
        with np.errstate(divide="ignore"):
            pre = np.where(mask, 1.0 / np.maximum(lap ** 2, 1e-300), 0.0)
        # normalize so the lowest admissible mode has unit gain
        self._precond = pre / max(float(np.max(pre)), 1e-300)
        self._rng = np.random.default_rng(self.seed)

    # objective pieces ---------------------------------------------------------

    def project(self, psi: np.ndarray) -> np.ndarray:
        return self.grid.ifft(self.grid.fft(psi) * self.mask).real

    def matrix(self, psi: np.ndarray, t: float) -> np.ndarray:
        """g-orthonormal matrix of ``Psi_t + i ddbar psi ^ omega^{n-2}`` (metric side)."""
        om = self.omega
        H = self.grid.hessian(psi)
        corr = (om.trace(H)[..., None, None] * om.g - H) / (om.n - 1)
        return self.A0 + t * self.A1 + linalg.hermitian_part(linalg.relative(corr, self.frame))

    def hard_min(self, psi: np.ndarray, t: float) -> float:
        return float(np.min(linalg.eigvalsh(self.matrix(psi, t))[..., 0]))

    def softmin(self, psi: np.ndarray, t: float, tau: float, grad: bool = True):
        """``-tau log sum_x tr exp(-B_x / tau)``, its gradient field, and the hard minimum."""
        B = self.matrix(psi, t)
        lam, V = np.linalg.eigh(B)
        m = float(np.min(lam))
        w = np.exp(-(lam - m) / tau)
        Z = float(np.sum(w))
        val = m - tau * math.log(Z)
        if not grad:
            return val, None, m
        w = w / Z
        W = np.einsum("...ik,...k,...jk->...ij", V, w, V.conj())
        linv = self.frame
        Mp = linalg.hconj(linv) @ W @ linv
        trW = w.sum(axis=-1)
        n = self.omega.n
        M = (trW[..., None, None] * self.omega.inv_up - np.swapaxes(Mp, -1, -2)) / (n - 1)
        g = np.zeros(self.grid.shape)
        for i in range(n):
            for j in range(n):
                g += self.grid.ifft(self._sym[i][j] * self.grid.fft(M[..., i, j])).real
        return val, g, m

    def precondition(self, g: np.ndarray) -> np.ndarray:
        return self.grid.ifft(self.grid.fft(g) * self._precond).real


@dataclass
class PositivityResult:
    t: float
    lam: float
    psi: np.ndarray = field(repr=False)
    feasible: bool
    infeasible_evidence: bool
    iterations: int
    restarts: int
    history: list = field(default_factory=list, repr=False)


def _ascend(q: MaxTimeQuery, psi: np.ndarray, t: float, stop_at: float | None):
    """Softmin ascent over the temperature schedule; returns (psi, hard-min, iterations)."""
    best_psi, best = psi, q.hard_min(psi, t)
    iters = 0
    if stop_at is not None and best > stop_at:
        return best_psi, best, iters
    alpha = None
    for frac in q.temperatures:
        tau = frac * max(q.scale, 1e-300)
        val, g, _ = q.softmin(psi, t, tau)
        for _ in range(q.iterations):
            iters += 1
            d = q.precondition(q.project(g))
            slope = float(np.sum(g * d))
            if not slope > 0:
                break
            if alpha is None:
                # first trial moves B by about one temperature
                dmax = float(np.max(np.abs(q.matrix(d, 0.0) - q.A0)))
                alpha = tau / max(dmax, 1e-300)
            else:
                alpha *= 2.0
            for _ls in range(40):
                trial = psi + alpha * d
                tv, _, _ = q.softmin(trial, t, tau, grad=False)
                if tv >= val + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                break
            gain = tv - val
            psi = trial
            val, g, hm = q.softmin(psi, t, tau)
            if hm > best:
                best, best_psi = hm, psi
                if stop_at is not None and best > stop_at:
                    return best_psi, best, iters
            if gain < 1e-12 * q.scale:
                break
    return best_psi, best, iters


def class_positivity(q: MaxTimeQuery, t: float, psi0: np.ndarray | None = None,
                     early_exit: bool = False) -> PositivityResult:
    """Best achievable minimum eigenvalue ``lam*`` of the class at time ``t``.

    With ``early_exit`` the search stops as soon as positivity is certified,
    which is all the bisection needs.  Restarts are only tried while no
    certificate has been found.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    stop_at = 0.0 if early_exit else None
    psi = np.zeros(q.grid.shape) if psi0 is None else q.project(psi0)
    best_psi, best, iters = _ascend(q, psi, t, stop_at)
    history = [best]
    restarts = 0
    while best <= 0 and restarts < q.restarts:
        restarts += 1
        amp = 0.1 * q.scale
        noise = q.precondition(q.project(q._rng.standard_normal(q.grid.shape)))
        noise *= amp / max(float(np.max(np.abs(q.matrix(noise, 0.0) - q.A0))), 1e-300)
        p2, b2, it2 = _ascend(q, best_psi + noise, t, stop_at)
        iters += it2
        history.append(b2)
        if b2 > best:
            best, best_psi = b2, p2
    # the reported value is always the exact hard minimum at the returned psi
    lam = q.hard_min(best_psi, t)
    return PositivityResult(t=float(t), lam=lam, psi=best_psi, feasible=lam > 0,
                            infeasible_evidence=lam < -q.infeasible_fraction * q.scale,
                            iterations=iters, restarts=restarts, history=history)


def certificate_check(q: MaxTimeQuery, res: PositivityResult) -> float:
    """Re-evaluate ``lam*`` on the form side: ``|min_eig(Psi_t + ddbar psi* ^ omega^{n-2}) - lam*|``."""
    P = (forms.power_n1(q.omega0) + res.t * forms.wedge_omega_nm2(q.chi, q.omega)
         + forms.wedge_omega_nm2(q.grid.hessian(res.psi), q.omega))
    val, _, _ = forms.min_eig(P, q.omega, kind="n1")
    return abs(val - res.lam)


@dataclass
class TEstimate:
    T_lo: float
    T_hi: float | None
    certificates: list
    advisory: str | None = None
    probes: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return math.inf if self.T_hi is None else self.T_hi - self.T_lo

    def contains(self, T: float) -> bool:
        return self.T_lo <= T and (self.T_hi is None or T <= self.T_hi)


def predicted_T(q: MaxTimeQuery, tol: float = 1e-2) -> TEstimate:
    """Bisection for ``T = sup{t : class positive}`` on ``[t_lo, t_hi]``.

    ``T_lo`` always carries a positivity certificate.  ``T_hi`` is backed
    only by failure of the search, which is evidence, not proof.
    """
    probes = []
    lo = class_positivity(q, q.t_lo, early_exit=True)
    probes.append((lo.t, lo.lam, lo.feasible))
    if not lo.feasible:
        raise ValueError(f"maxtime.predicted_T: t_lo={q.t_lo} is not feasible (lam*={lo.lam:.3e})")
    hi = class_positivity(q, q.t_hi, psi0=lo.psi, early_exit=True)
    probes.append((hi.t, hi.lam, hi.feasible))
    if hi.feasible:
        return TEstimate(T_lo=q.t_hi, T_hi=None, certificates=[hi],
                         advisory="horizon too small: t_hi is feasible, T_lo is only a lower bound",
                         probes=probes)
    best = lo
    t_lo, t_hi = q.t_lo, q.t_hi
    while t_hi - t_lo > tol:
        t = 0.5 * (t_lo + t_hi)
        warm = best.psi * (t / best.t) if best.t > 0 else best.psi
        r = class_positivity(q, t, psi0=warm, early_exit=True)
        probes.append((r.t, r.lam, r.feasible))
        logger.info("maxtime probe t=%.6f lam*=%.3e feasible=%s", t, r.lam, r.feasible)
        if r.feasible:
            t_lo, best = t, r
        else:
            t_hi = t
    return TEstimate(T_lo=t_lo, T_hi=t_hi, certificates=[best], probes=probes)


# flow comparison ----------------------------------------------------------------

DIVERGENCE_FACTOR = 10.0


@dataclass
class SingularTimeResult:
    t_sing: float | None
    last_t: float
    reason: str | None
    first_diverged: str | None
    diverged_at: dict
    steps: int


def singular_time(p, t_end: float, ctrl=None, factor: float = DIVERGENCE_FACTOR) -> SingularTimeResult:
    """Run the flow until it stops or reaches ``t_end``.

    Per accepted step the cheap monitors ``sup|udot|``, the volume-ratio
    extremes ``exp(udot)`` and ``sup tr_omega omega_tilde`` are tracked; a
    monitor "diverges" when it first exceeds ``factor`` times its initial
    size (or drops below ``1/factor`` for the minimum volume ratio).
    """
    from .errors import SingularTimeReached
    from .flow import StepControl, initial_state, step

    ctrl = ctrl or StepControl()
    s = initial_state(p, ctrl)

    def measures(st):
        tr = p.omega.trace(st.gtilde)
        return {"sup_udot": max(float(np.max(np.abs(st.udot))), 1e-300),
                "vol_ratio_max": float(np.exp(np.max(st.udot))),
                "inv_vol_ratio_min": float(np.exp(-np.min(st.udot))),
                "sup_trace": float(np.max(tr))}

    base = measures(s)
    base["sup_udot"] = max(base["sup_udot"], 1.0)
    diverged: dict = {}
    reason = None
    t_sing = None
    while s.t < t_end:
        try:
            s = step(p, s, ctrl, t_stop=t_end)
        except SingularTimeReached as exc:
            reason = str(exc)
            t_sing = s.t
            break
        for k, v in measures(s).items():
            if k not in diverged and v > factor * max(base[k], 1e-300):
                diverged[k] = s.t
    first = min(diverged, key=diverged.get) if diverged else None
    return SingularTimeResult(t_sing=t_sing, last_t=s.t, reason=reason, first_diverged=first,
                              diverged_at=diverged, steps=s.step_count)
