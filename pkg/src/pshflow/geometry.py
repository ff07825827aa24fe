"""Chern-connection tensor calculus for Hermitian metric fields on the torus.

Index storage (all trailing axes, grid axes first):

* ``g[..., i, j]``           = g_{i jbar}
* ``inv_up[..., k, l]``      = g^{k lbar}, so sum_l g^{k lbar} g_{j lbar} = delta_kj
* ``gamma[..., i, j, k]``    = Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}
* ``torsion[..., i, j, k]``  = T^k_{ij}
* ``curv[..., k, l, i, p]``  = R_{k lbar i}^p = -d_lbar Gamma^p_{ki}

Covariant derivatives append their direction as a new last index, so
``u_{i jbar l}`` is ``nabla_l nabla_jbar nabla_i u``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import linalg
from .errors import InvariantViolation, SingularMetric
from .grid import Grid, _values

HERMITIAN_TOL = 1e-13
SINGULAR_RATIO = 1e-10


class MetricField:
    """A Hermitian positive-definite matrix field with cached inverse and log-det."""

    def __init__(self, grid: Grid, g, validate: bool = True):
        g = np.asarray(g, dtype=complex)
        n = grid.n
        if g.shape == (n, n):
            g = np.broadcast_to(g, grid.shape + (n, n)).copy()
        if g.shape != grid.shape + (n, n):
            raise ValueError(f"metric of shape {g.shape} does not match {grid.shape + (n, n)}")
        self.grid = grid
        self.g = g
        if validate:
            self.validate()

    @property
    def n(self) -> int:
        return self.grid.n

    def validate(self) -> None:
        scale = max(1.0, float(np.max(np.abs(self.g))))
        herm = float(np.max(np.abs(self.g - linalg.hconj(self.g))))
        if herm > HERMITIAN_TOL * scale:
            flat = int(np.argmax(np.max(np.abs(self.g - linalg.hconj(self.g)), axis=(-1, -2))))
            raise InvariantViolation(
                "hermitian", f"geometry.MetricField: metric is not Hermitian at grid point "
                f"{self.grid.point(flat)} (defect {herm:.3e})",
                point=self.grid.point(flat), value=herm)
        ev = self.eigenvalues
        lo, hi = ev[..., 0], ev[..., -1]
        ratio = lo / hi
        worst = int(np.argmin(ratio))
        if ratio.reshape(-1)[worst] <= SINGULAR_RATIO:
            raise SingularMetric(
                f"metric is singular or indefinite at {self.grid.point(worst)} "
                f"(eigenvalue {lo.reshape(-1)[worst]:.3e})",
                point=self.grid.point(worst), value=float(lo.reshape(-1)[worst]))
        ident = np.eye(self.n)
        err = float(np.max(np.abs(self.g @ self.inv - ident)))
        if err > 1e-11 * max(1.0, float(np.max(hi / lo))):
            raise SingularMetric(f"metric inverse is inaccurate (defect {err:.3e})", value=err)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.g)

    @cached_property
    def inv(self) -> np.ndarray:
        """Matrix inverse G^{-1}."""
        return linalg.inv(self.g)

    @cached_property
    def inv_up(self) -> np.ndarray:
        """g^{i jbar} laid out as ``[..., i, j]``."""
        return np.swapaxes(self.inv, -1, -2)

    @cached_property
    def det(self) -> np.ndarray:
        return linalg.hdet(self.g)

    @cached_property
    def logdet(self) -> np.ndarray:
        return np.log(self.det)

    @cached_property
    def frame(self) -> np.ndarray:
        """L^{-1} with g = L L^*; maps matrices to the g-orthonormal frame."""
        return linalg.orthonormal_frame(self.g)

    def trace(self, alpha: np.ndarray) -> np.ndarray:
        """tr_omega alpha = g^{i jbar} alpha_{i jbar} (real for Hermitian alpha)."""
        return np.einsum("...ij,...ij->...", self.inv_up, alpha).real

    def laplacian(self, u) -> np.ndarray:
        return self.trace(self.grid.hessian(u))

    def relative_eigenvalues(self, alpha: np.ndarray) -> np.ndarray:
        return linalg.eigvalsh(linalg.relative(alpha, self.frame))

    def scaled(self, factor) -> "MetricField":
        factor = np.asarray(factor)
        if factor.ndim:
            factor = factor[..., None, None]
        return MetricField(self.grid, self.g * factor, validate=False)


@dataclass(frozen=True)
class ChernData:
    gamma: np.ndarray
    torsion: np.ndarray
    curvature: np.ndarray
    ricci: np.ndarray


def christoffel(metric: MetricField) -> np.ndarray:
    """Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}, stored ``[..., i, j, k]``."""
    dg = metric.grid.gradient(metric.g)  # [..., j, l, i] = d_i g_{j lbar}
    return np.einsum("...kl,...jli->...ijk", metric.inv_up, dg)


def torsion(metric: MetricField, gamma: np.ndarray | None = None) -> np.ndarray:
    if gamma is None:
        gamma = christoffel(metric)
    return gamma - np.swapaxes(gamma, -3, -2)


def chern_curvature(metric: MetricField, gamma: np.ndarray | None = None) -> np.ndarray:
    """R_{k lbar i}^p = -d_lbar Gamma^p_{ki}, stored ``[..., k, l, i, p]``."""
    if gamma is None:
        gamma = christoffel(metric)
    dbar = metric.grid.gradient(gamma, conjugate=True)  # [..., k, i, p, l]
    return -np.moveaxis(dbar, -1, -3)


def chern_ricci(metric: MetricField) -> np.ndarray:
    """R_{i jbar} = -d_i d_jbar log det g (the canonical path)."""
    return -metric.grid.hessian(metric.logdet)


def ricci_from_curvature(curv: np.ndarray) -> np.ndarray:
    """g^{k lbar} R_{i jbar k lbar}, which is the trace R_{i jbar k}^k."""
    return np.einsum("...ijkk->...ij", curv)


def chern_data(metric: MetricField) -> ChernData:
    gamma = christoffel(metric)
    return ChernData(
        gamma=gamma,
        torsion=torsion(metric, gamma),
        curvature=chern_curvature(metric, gamma),
        ricci=chern_ricci(metric),
    )


def nabla(tensor: np.ndarray, kinds: str, gamma: np.ndarray, grid: Grid,
          conjugate: bool = False) -> np.ndarray:
    """Chern covariant derivative of a tensor with lower indices.

    ``kinds`` has one letter per trailing index: ``u`` for unbarred, ``b`` for
    barred.  A holomorphic derivative corrects only unbarred slots with Gamma,
    an antiholomorphic one corrects only barred slots with conj(Gamma).  The
    derivative direction becomes the new last index.
    """
    rank = len(kinds)
    out = grid.gradient(tensor, conjugate=conjugate)
    target = "b" if conjugate else "u"
    conn = np.conj(gamma) if conjugate else gamma
    letters = "abcdefgh"[:rank]
    for s, kind in enumerate(kinds):
        if kind != target:
            continue
        src = letters[:s] + "p" + letters[s + 1:]
        dst = letters + "z"
        # Gamma^p_{z a_s} T_{... p ...}
        out -= np.einsum(f"...z{letters[s]}p,...{src}->...{dst}", conn, tensor)
    return out


def covariant_deriv_1form(a: np.ndarray, metric: MetricField,
                          gamma: np.ndarray | None = None) -> np.ndarray:
    """nabla_i a_l = d_i a_l - Gamma^p_{il} a_p, stored ``[..., i, l]``."""
    if gamma is None:
        gamma = christoffel(metric)
    return np.swapaxes(nabla(a, "u", gamma, metric.grid), -1, -2)


def _sup(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def commutation_residual(u, metric: MetricField, data: ChernData | None = None) -> dict[str, float]:
    """Sup-norm residuals of the Chern commutation identities for a real function.

    Keys:

    * ``third_mixed``:  u_{i jbar l} = u_{i l jbar} - u_p R_{l jbar i}^p
    * ``third_bar``:    u_{p jbar mbar} = u_{p mbar jbar} - conj(T^q_{mj}) u_{p qbar}
    * ``third_swap``:   u_{i qbar l} = u_{l qbar i} - T^p_{li} u_{p qbar}
    * ``fourth``:       the four-derivative identity with curvature and torsion terms
    * ``max``:          the largest of the above
    """
    grid = metric.grid
    u = np.asarray(_values(u))
    if np.iscomplexobj(u):
        u = u.real
    if data is None:
        gamma = christoffel(metric)
        tors = torsion(metric, gamma)
        curv = chern_curvature(metric, gamma)
    else:
        gamma, tors, curv = data.gamma, data.torsion, data.curvature

    u1 = grid.gradient(u)                                  # u_i
    u2 = nabla(u1, "u", gamma, grid, conjugate=True)       # u_{i jbar}
    uu = nabla(u1, "u", gamma, grid)                       # u_{i l}
    uub = nabla(uu, "uu", gamma, grid, conjugate=True)     # u_{i l jbar}
    ubu = nabla(u2, "ub", gamma, grid)                     # u_{i jbar l}
    ubb = nabla(u2, "ub", gamma, grid, conjugate=True)     # u_{p jbar mbar}
    del uu

    res = {}
    # [i, j, l]
    rhs = np.swapaxes(uub, -1, -2) - np.einsum("...p,...ljip->...ijl", u1, curv)
    res["third_mixed"] = _sup(ubu - rhs)
    del uub, rhs

    rhs = np.swapaxes(ubb, -1, -2) - np.einsum("...mjq,...pq->...pjm", np.conj(tors), u2)
    res["third_bar"] = _sup(ubb - rhs)

    rhs = np.swapaxes(ubu, -3, -1) - np.einsum("...lip,...pq->...iql", tors, u2)
    res["third_swap"] = _sup(ubu - rhs)
    del rhs

    d4 = nabla(ubu, "ubu", gamma, grid, conjugate=True)    # u_{i jbar l mbar}
    resid = d4 - np.transpose(d4, tuple(range(d4.ndim - 4)) + tuple(d4.ndim - 4 + np.array([2, 3, 0, 1])))
    del d4
    resid -= np.einsum("...pj,...lmip->...ijlm", u2, curv)
    resid += np.einsum("...pm,...ijlp->...ijlm", u2, curv)
    resid += np.einsum("...lip,...pmj->...ijlm", tors, ubb)
    resid += np.einsum("...mjq,...lqi->...ijlm", np.conj(tors), ubu)
    resid += np.einsum("...ilp,...mjq,...pq->...ijlm", tors, np.conj(tors), u2, optimize=True)
    res["fourth"] = _sup(resid)
    res["max"] = max(res.values())
    return res


def is_kahler_residual(metric: MetricField) -> float:
    return _sup(torsion(metric))
