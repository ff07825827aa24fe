"""Real (1,1)- and (n-1,n-1)-forms in coefficient-matrix form.

A (1,1)-form ``alpha = i A_{i jbar} dz^i ^ dz^jbar`` is stored as its
Hermitian matrix ``A``.  An (n-1,n-1)-form ``Psi`` is stored as the matrix
``P`` fixed by the pairing

    Psi ^ (i dz^j ^ dz^ibar) = (n-1)! P_{i jbar} * prod_k (i dz^k ^ dz^kbar),

so that ``Psi ^ i gamma ^ conj(gamma) >= 0`` for all ``gamma`` exactly when
``P`` is positive semi-definite, and ``det(omega^{n-1}) = (det g)^{n-1}``.

With ``g = L L^*`` the g-orthonormal matrices are ``L^{-1} A L^{-*}`` for
(1,1)-forms and ``L^* P L / det g`` for (n-1,n-1)-forms.  In that frame
``alpha ^ omega^{n-2}`` has matrix ``((tr A) I - A) / (n-1)`` and the
normalized Hodge star ``*Psi / (n-1)!`` is the identity on matrices.  The
coordinate formulas below are those frame formulas transported back; the
brute-force oracles in :mod:`pshflow.exterior` pin every constant.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .errors import NotAMetricPower
from .geometry import MetricField


def _g(omega) -> np.ndarray:
    return omega.g if isinstance(omega, MetricField) else np.asarray(omega)


def _n(mat: np.ndarray) -> int:
    return mat.shape[-1]


def wedge_omega_nm2(alpha: np.ndarray, omega) -> np.ndarray:
    """Matrix of ``alpha ^ omega^{n-2}``.

    ``P = det(g) / (n-1) * [(tr_omega alpha) g^{-1} - g^{-1} alpha g^{-1}]``.
    """
    if isinstance(omega, MetricField):
        ginv, gdet = omega.inv, omega.det
        tr = omega.trace(alpha)
    else:
        g = np.asarray(omega)
        ginv = linalg.inv(g)
        gdet = linalg.hdet(g)
        tr = np.einsum("...ij,...ji->...", ginv, alpha).real
    n = _n(alpha)
    out = tr[..., None, None] * ginv - ginv @ alpha @ ginv
    return out * (gdet / (n - 1))[..., None, None]


def hodge_star_n1(psi: np.ndarray, omega) -> np.ndarray:
    """(1,1)-form ``*Psi / (n-1)!`` as a matrix: ``g P g / det g``."""
    if isinstance(omega, MetricField):
        g, gdet = omega.g, omega.det
    else:
        g = np.asarray(omega)
        gdet = linalg.hdet(g)
    return g @ psi @ g / gdet[..., None, None]


def inverse_hodge_star_n1(alpha: np.ndarray, omega) -> np.ndarray:
    """Inverse of :func:`hodge_star_n1`: ``det g * g^{-1} A g^{-1}``."""
    if isinstance(omega, MetricField):
        ginv, gdet = omega.inv, omega.det
    else:
        g = np.asarray(omega)
        ginv, gdet = linalg.inv(g), linalg.hdet(g)
    return (ginv @ alpha @ ginv) * gdet[..., None, None]


def power_n1(gamma) -> np.ndarray:
    """Matrix of ``gamma^{n-1}``: the adjugate ``det(gamma) gamma^{-1}``."""
    return linalg.adjugate(_g(gamma))


def root_n1(psi: np.ndarray, grid=None) -> np.ndarray:
    """Positive (1,1)-form whose (n-1)-th power is ``Psi``.

    ``gamma = det(P)^{1/(n-1)} P^{-1}``.  Raises :class:`NotAMetricPower`
    with the worst grid point if ``P`` is not positive definite.
    """
    n = _n(psi)
    ev = linalg.eigvalsh(psi)
    lo = ev[..., 0]
    if np.any(lo <= 0) or not np.all(np.isfinite(lo)):
        lo_flat = np.where(np.isfinite(lo), lo, -np.inf).reshape(-1)
        worst = int(np.argmin(lo_flat))
        point = grid.point(worst) if grid is not None and lo.ndim else worst
        raise NotAMetricPower(point, float(lo_flat[worst]))
    d = np.prod(ev, axis=-1)
    return linalg.inv(psi) * (d ** (1.0 / (n - 1)))[..., None, None]


def det_n1n1(psi: np.ndarray) -> np.ndarray:
    return linalg.hdet(psi)


def orthonormal_n1(psi: np.ndarray, omega: MetricField) -> np.ndarray:
    """g-orthonormal matrix ``L^* P L / det g`` of an (n-1,n-1)-form."""
    linv = omega.frame
    low = linalg.inv(linv)
    return linalg.hconj(low) @ psi @ low / omega.det[..., None, None]


def min_eig(form: np.ndarray, omega: MetricField, kind: str = "11"):
    """Global minimum eigenvalue of a form relative to ``omega``.

    ``kind`` is ``"11"`` for (1,1)-forms and ``"n1"`` for (n-1,n-1)-forms.
    Returns ``(value, grid point, flat index)``.
    """
    if kind == "11":
        ev = omega.relative_eigenvalues(form)
    elif kind == "n1":
        ev = linalg.eigvalsh(orthonormal_n1(form, omega))
    else:
        raise ValueError(f"unknown form kind {kind!r}")
    lo = ev[..., 0]
    flat = int(np.argmin(lo))
    return float(lo.reshape(-1)[flat]), omega.grid.point(flat), flat


def eta_from_metrics(gt: np.ndarray, omega: MetricField) -> np.ndarray:
    """``(tr_g gt) g - (n-1) gt``."""
    n = omega.n
    return omega.trace(gt)[..., None, None] * omega.g - (n - 1) * gt


def gauduchon_term(du: np.ndarray, dbar_g: np.ndarray) -> np.ndarray:
    """Matrix of ``Re(i du ^ dbar omega)`` for n = 3.

    ``du[..., a]`` holds d_a u (or any (1,0)-form coefficients) and
    ``dbar_g[..., p, q, k]`` holds d_kbar g_{p qbar}.  For n = 3,
    ``omega^{n-2} = omega`` so this is the extra term of the Gauduchon-type
    flow; for n = 2 the term vanishes identically.
    """
    n = du.shape[-1]
    if n == 2:
        return np.zeros(du.shape[:-1] + (2, 2), dtype=complex)
    if n != 3:
        raise ValueError("gauduchon term implemented for n <= 3")
    eps = _levi_civita3()
    # P_{i jbar} = 1/2 eps_{a p j} eps_{k q i} u_a d_kbar g_{p qbar}
    raw = 0.5 * np.einsum("apj,kqi,...a,...pqk->...ij", eps, eps, du, dbar_g, optimize=True)
    return linalg.hermitian_part(raw)


def _levi_civita3() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return eps
