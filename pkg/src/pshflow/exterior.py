"""Brute-force exterior algebra used as an independent oracle for :mod:`pshflow.forms`.

Forms are dictionaries mapping strictly increasing generator tuples to complex
coefficients.  With complex generators, index ``a < n`` is ``dz^{a+1}`` and
``n + a`` is ``dzbar^{a+1}``; with real generators, ``2j`` is ``dx^{j+1}`` and
``2j+1`` is ``dy^{j+1}``.  Everything is expanded term by term, so cost grows
factorially and only n <= 3 is accepted.
"""

from __future__ import annotations

import itertools
import math
from typing import Dict, Tuple

import numpy as np

Form = Dict[Tuple[int, ...], complex]
MAX_N = 3


def _check_n(n: int) -> None:
    if n > MAX_N:
        raise ValueError(f"brute-force exterior algebra refused for n={n} > {MAX_N}")


def _merge_sign(a: tuple, b: tuple):
    """Sign and sorted key of e_a ^ e_b, or (0, None) if they share a generator."""
    if set(a) & set(b):
        return 0, None
    seq = list(a) + list(b)
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return (-1) ** inversions, tuple(sorted(seq))


def wedge(x: Form, y: Form) -> Form:
    out: Form = {}
    for ka, va in x.items():
        if va == 0:
            continue
        for kb, vb in y.items():
            if vb == 0:
                continue
            s, key = _merge_sign(ka, kb)
            if s:
                out[key] = out.get(key, 0) + s * va * vb
    return out


def add(x: Form, y: Form, scale: complex = 1.0) -> Form:
    out = dict(x)
    for k, v in y.items():
        out[k] = out.get(k, 0) + scale * v
    return out


def one() -> Form:
    return {(): 1.0}


def dz(n: int, i: int) -> Form:
    return {(i,): 1.0}


def dzbar(n: int, i: int) -> Form:
    return {(n + i,): 1.0}


def form11(A: np.ndarray) -> Form:
    """``i sum A_{ij} dz^i ^ dzbar^j``."""
    n = A.shape[0]
    _check_n(n)
    return {(i, n + j): 1j * A[i, j] for i in range(n) for j in range(n)}


def power(x: Form, k: int) -> Form:
    out = one()
    for _ in range(k):
        out = wedge(out, x)
    return out


def volume(n: int) -> Form:
    """``prod_k (i dz^k ^ dzbar^k)``."""
    out = one()
    for k in range(n):
        out = wedge(out, {(k, n + k): 1j})
    return out


def top_coefficient(x: Form, n: int) -> complex:
    return x.get(tuple(range(2 * n)), 0)


def brute_wedge(A: np.ndarray, G: np.ndarray, k: int) -> Form:
    """``alpha ^ omega^k`` by explicit expansion."""
    return wedge(form11(A), power(form11(G), k))


def read_n1n1(psi: Form, n: int) -> np.ndarray:
    """Coefficient matrix of an (n-1,n-1)-form via the pairing with i dz^j ^ dzbar^i."""
    _check_n(n)
    vol = top_coefficient(volume(n), n)
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            top = top_coefficient(wedge(psi, {(j, n + i): 1j}), n)
            out[i, j] = top / vol / math.factorial(n - 1)
    return out


def form_from_n1n1(P: np.ndarray) -> Form:
    """The (n-1,n-1)-form whose :func:`read_n1n1` matrix is ``P``."""
    n = P.shape[0]
    _check_n(n)
    vol = top_coefficient(volume(n), n)
    out: Form = {}
    for i in range(n):
        for j in range(n):
            key = tuple(sorted(set(range(2 * n)) - {j, n + i}))
            top = top_coefficient(wedge({key: 1.0}, {(j, n + i): 1j}), n)
            out[key] = math.factorial(n - 1) * P[i, j] * vol / top
    return out


# real-coordinate machinery ---------------------------------------------------

def to_real(x: Form, n: int) -> Form:
    """Rewrite a form in the real basis using dz = dx + i dy, dzbar = dx - i dy."""
    images = {}
    for a in range(n):
        images[a] = {(2 * a,): 1.0, (2 * a + 1,): 1j}
        images[n + a] = {(2 * a,): 1.0, (2 * a + 1,): -1j}
    out: Form = {}
    for key, val in x.items():
        term = {(): val}
        for gen in key:
            term = wedge(term, images[gen])
        out = add(out, term)
    return {k: v for k, v in out.items() if v != 0}


def _two_form_matrix(x: Form, dim: int) -> np.ndarray:
    """Antisymmetric matrix of a real-basis 2-form."""
    m = np.zeros((dim, dim), dtype=complex)
    for key, v in x.items():
        if len(key) != 2:
            raise ValueError("not a 2-form")
        a, b = key
        m[a, b] += v
        m[b, a] -= v
    return m


def riemannian_metric(G: np.ndarray) -> np.ndarray:
    """Real metric h(X, Y) = omega(X, J Y) on R^{2n} compatible with omega."""
    n = G.shape[0]
    om = _two_form_matrix(to_real(form11(G), n), 2 * n)
    J = np.zeros((2 * n, 2 * n))
    for a in range(n):
        J[2 * a + 1, 2 * a] = 1.0   # J d/dx = d/dy
        J[2 * a, 2 * a + 1] = -1.0  # J d/dy = -d/dx
    h = om @ J
    if np.max(np.abs(h.imag)) > 1e-12 or np.max(np.abs(h - h.T)) > 1e-10:
        raise ValueError("omega does not induce a symmetric real metric")
    return h.real


def naive_hodge_star(x: Form, G: np.ndarray) -> Form:
    """Real Hodge star of a real-basis form, from alpha ^ *beta = <alpha, beta> vol."""
    n = G.shape[0]
    dim = 2 * n
    h = riemannian_metric(G)
    hinv = np.linalg.inv(h)
    sq = math.sqrt(np.linalg.det(h))
    full = tuple(range(dim))
    out: Form = {}
    for key_b, vb in x.items():
        deg = len(key_b)
        for key_a in itertools.combinations(range(dim), deg):
            inner = np.linalg.det(hinv[np.ix_(key_a, key_b)]) if deg else 1.0
            if abs(inner) < 1e-300:
                continue
            comp = tuple(i for i in full if i not in key_a)
            s, _ = _merge_sign(key_a, comp)
            out[comp] = out.get(comp, 0) + vb * s * inner * sq
    return {k: v for k, v in out.items() if abs(v) > 0}


def complex_11_matrix(x_real: Form, n: int) -> np.ndarray:
    """Hermitian matrix A of a real 2-form written as i A_{ij} dz^i ^ dzbar^j."""
    m = _two_form_matrix(x_real, 2 * n)
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            X = np.zeros(2 * n, dtype=complex)
            Y = np.zeros(2 * n, dtype=complex)
            X[2 * i], X[2 * i + 1] = 0.5, -0.5j     # d/dz^i
            Y[2 * j], Y[2 * j + 1] = 0.5, 0.5j      # d/dzbar^j
            # (dz^i ^ dzbar^j)(d_i, d_jbar) = 1 under the determinant convention
            out[i, j] = -1j * (X @ m @ Y) / 1.0
    return out


def naive_star_n1(P: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Oracle for ``*Psi / (n-1)!`` computed in full real exterior algebra."""
    n = G.shape[0]
    psi = to_real(form_from_n1n1(P), n)
    star = naive_hodge_star(psi, G)
    return complex_11_matrix(star, n) / math.factorial(n - 1)


def brute_gauduchon_term(du: np.ndarray, dbar_g: np.ndarray) -> np.ndarray:
    """Oracle for the matrix of Re(i du ^ dbar omega), n = 3, at a single point."""
    n = du.shape[0]
    _check_n(n)
    d_u: Form = {(a,): du[a] for a in range(n)}
    # dbar omega = i d_kbar g_{p qbar} dzbar^k ^ dz^p ^ dzbar^q
    dbo: Form = {}
    for k in range(n):
        for p in range(n):
            for q in range(n):
                term = wedge(wedge({(n + k,): 1.0}, {(p,): 1.0}), {(n + q,): 1.0})
                dbo = add(dbo, term, 1j * dbar_g[p, q, k])
    psi = wedge({(): 1j}, wedge(d_u, dbo))
    raw = read_n1n1(psi, n)
    return 0.5 * (raw + raw.conj().T)
