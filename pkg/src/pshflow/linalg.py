"""Batched small-matrix helpers for Hermitian fields.

All functions act on the last two axes. Closed forms are used for n <= 3,
which is every size this package supports; numpy.linalg covers the rest.
"""

from __future__ import annotations

import numpy as np


def hconj(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + hconj(a))


def trace(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


def det(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0].copy()
    if n == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if n == 3:
        return (
            a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
            - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
            + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
        )
    return np.linalg.det(a)


def hdet(a: np.ndarray) -> np.ndarray:
    """Real determinant of a Hermitian matrix field."""
    return det(a).real


def adjugate(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n == 2:
        out = np.empty_like(a)
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
        return out
    if n == 3:
        out = np.empty_like(a)
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                # cofactor C_ji placed at (i, j)
                out[..., i, j] = a[..., j1, i1] * a[..., j2, i2] - a[..., j1, i2] * a[..., j2, i1]
        return out
    d = np.linalg.det(a)
    return np.linalg.inv(a) * d[..., None, None]


def inv(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n in (2, 3):
        return adjugate(a) / det(a)[..., None, None]
    return np.linalg.inv(a)


def positive_definite(a: np.ndarray) -> np.ndarray:
    """Sylvester test on a Hermitian field; boolean per point."""
    n = a.shape[-1]
    ok = a[..., 0, 0].real > 0
    if n >= 2:
        m2 = (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]).real
        ok &= m2 > 0
    if n >= 3:
        if n == 3:
            ok &= hdet(a) > 0
        else:
            for k in range(3, n + 1):
                ok &= np.linalg.det(a[..., :k, :k]).real > 0
    return ok


def eigvalsh(a: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian field."""
    return np.linalg.eigvalsh(a)


def orthonormal_frame(g: np.ndarray) -> np.ndarray:
    """Inverse Cholesky factor L^{-1} with g = L L^*."""
    low = np.linalg.cholesky(g)
    return inv(low) if g.shape[-1] <= 3 else np.linalg.inv(low)


def relative(a: np.ndarray, linv: np.ndarray) -> np.ndarray:
    """Matrix of a in the frame orthonormal for g, i.e. L^{-1} a L^{-*}."""
    return linv @ a @ hconj(linv)


def relative_eigvalsh(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a with respect to g (roots of det(a - lambda g))."""
    return eigvalsh(relative(a, orthonormal_frame(g)))
