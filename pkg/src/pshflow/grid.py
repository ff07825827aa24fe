"""Periodic grids on the flat torus C^n / (Z^n + i Z^n) and spectral calculus.

Real axes are ordered ``(x^1, y^1, x^2, y^2, ..., x^n, y^n)`` with
``z^j = x^j + i y^j``.  Fields live in point space as arrays whose leading
``2n`` axes are the grid; any trailing axes are tensor indices and are carried
through every spectral operator untouched.

The Wirtinger derivatives are

    d_j    = (d/dx^j - i d/dy^j) / 2
    d_jbar = (d/dx^j + i d/dy^j) / 2

and Hermitian matrices are stored as ``H[..., i, j] = d_i d_jbar f``.
"""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

REAL_TOL = 1e-12


class Grid:
    """Uniform periodic grid with ``N`` points per real axis.

    Parameters
    ----------
    n : int
        Complex dimension, 2 or 3.
    N : int
        Points per real axis, a power of two.
    periods : float or sequence of 2n floats
        Lattice length of each real axis.
    dealias : bool
        Apply the 2/3-rule truncation inside every derivative operator.
    workers : int, optional
        Thread count handed to ``scipy.fft``.
    """

    def __init__(self, n: int, N: int, periods: float | Sequence[float] = 1.0,
                 dealias: bool = False, workers: int | None = None):
        if not 2 <= int(n) <= 3:
            raise ValueError(f"complex dimension n={n} out of supported range [2, 3]")
        if N < 2 or (N & (N - 1)) != 0:
            raise ValueError(f"N={N} must be a power of two >= 2")
        self.n = int(n)
        self.N = int(N)
        if np.isscalar(periods):
            periods = [float(periods)] * (2 * self.n)
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 * self.n or min(periods) <= 0:
            raise ValueError(f"periods must be {2 * self.n} positive lengths, got {periods}")
        self.periods = periods
        self.dealias = bool(dealias)
        self.workers = workers

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, N={self.N}, periods={self.periods}, dealias={self.dealias})"

    def with_options(self, dealias: bool | None = None, workers: int | None = None) -> "Grid":
        return Grid(self.n, self.N, self.periods,
                    self.dealias if dealias is None else dealias,
                    self.workers if workers is None else workers)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.N * factor, self.periods, self.dealias, self.workers)

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.ndim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(self.ndim))

    @property
    def size(self) -> int:
        return self.N ** self.ndim

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(p / self.N for p in self.periods)

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per real axis."""
        out = []
        for a in range(self.ndim):
            shape = [1] * self.ndim
            shape[a] = self.N
            out.append((np.arange(self.N) * self.spacing[a]).reshape(shape))
        return out

    def x(self, j: int) -> np.ndarray:
        return self.coords[2 * j]

    def y(self, j: int) -> np.ndarray:
        return self.coords[2 * j + 1]

    def point(self, flat_index: int) -> tuple[float, ...]:
        idx = np.unravel_index(flat_index, self.shape)
        return tuple(float(i * h) for i, h in zip(idx, self.spacing))

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers ``2 pi k / period`` per axis, broadcastable."""
        out = []
        for a in range(self.ndim):
            shape = [1] * self.ndim
            shape[a] = self.N
            k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.spacing[a])
            out.append(k.reshape(shape))
        return out

    @cached_property
    def _derivative_wavenumbers(self) -> list[np.ndarray]:
        # Nyquist mode has no well-defined odd derivative; zero it.
        out = []
        for a, k in enumerate(self.wavenumbers):
            k = k.copy()
            flat = k.reshape(-1)
            flat[self.N // 2] = 0.0
            if self.dealias:
                ints = np.abs(np.fft.fftfreq(self.N, d=1.0 / self.N))
                flat[ints > self.N / 3] = 0.0
            out.append(k)
        return out

    @cached_property
    def _symbols(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        kd = self._derivative_wavenumbers
        hol = [0.5 * (1j * kd[2 * j] + kd[2 * j + 1]) for j in range(self.n)]
        anti = [0.5 * (1j * kd[2 * j] - kd[2 * j + 1]) for j in range(self.n)]
        return hol, anti

    def symbol(self, j: int, conjugate: bool = False) -> np.ndarray:
        if not 0 <= j < self.n:
            raise IndexError(f"coordinate index {j} out of range for n={self.n}")
        return self._symbols[1 if conjugate else 0][j]

    @cached_property
    def laplace_symbol(self) -> np.ndarray:
        """Symbol of the flat operator sum_j d_j d_jbar (quarter of the real Laplacian)."""
        hol, anti = self._symbols
        return sum(hol[j] * anti[j] for j in range(self.n)).real

    # transforms ------------------------------------------------------------

    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[: self.ndim] != self.shape:
            raise ValueError(f"field shape {f.shape} does not start with grid shape {self.shape}")
        return f

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.fftn(self._check(f), axes=self.axes, workers=self.workers)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.ifftn(fh, axes=self.axes, workers=self.workers)

    def _expand(self, sym: np.ndarray, fh: np.ndarray) -> np.ndarray:
        return sym.reshape(sym.shape + (1,) * (fh.ndim - self.ndim))

    # calculus --------------------------------------------------------------

    def partial(self, f, j: int, conjugate: bool = False) -> np.ndarray:
        """Spectral ``d_j f`` (or ``d_jbar f``) of the trigonometric interpolant."""
        f = _values(f)
        sym = self.symbol(j, conjugate)
        fh = self.fft(f)
        return self.ifft(self._expand(sym, fh) * fh)

    def gradient(self, f, conjugate: bool = False, spectrum: np.ndarray | None = None) -> np.ndarray:
        """All ``n`` Wirtinger derivatives, stacked on a new trailing axis."""
        f = _values(f)
        fh = self.fft(f) if spectrum is None else spectrum
        out = np.empty(f.shape + (self.n,), dtype=complex)
        for j in range(self.n):
            out[..., j] = self.ifft(self._expand(self.symbol(j, conjugate), fh) * fh)
        return out

    def hessian_components(self, f, spectrum: np.ndarray | None = None) -> dict:
        """Upper-triangle entries of the complex Hessian of a real field as contiguous arrays.

        Keys are ``(i, j)`` with ``i <= j``; diagonal entries are real.  The
        diagonal symbols are real, so two diagonal entries share one complex
        inverse transform.
        """
        fh = self.fft(np.asarray(_values(f), dtype=float)) if spectrum is None else spectrum
        hol, anti = self._symbols
        out = {}
        diag = list(range(self.n))
        while diag:
            i = diag.pop(0)
            if diag:
                j = diag.pop(0)
                h = self.ifft((hol[i] * anti[i] + 1j * (hol[j] * anti[j])) * fh)
                out[i, i] = np.ascontiguousarray(h.real)
                out[j, j] = np.ascontiguousarray(h.imag)
            else:
                out[i, i] = np.ascontiguousarray(self.ifft(hol[i] * anti[i] * fh).real)
        for i in range(self.n):
            for j in range(i + 1, self.n):
                out[i, j] = self.ifft(hol[i] * anti[j] * fh)
        return out

    def hessian(self, f, spectrum: np.ndarray | None = None) -> np.ndarray:
        """Complex Hessian ``H[..., i, j] = d_i d_jbar f`` of a real scalar field."""
        f = _values(f)
        if spectrum is None:
            if np.iscomplexobj(f):
                scale = max(1.0, float(np.max(np.abs(f))))
                if np.max(np.abs(f.imag)) > REAL_TOL * scale:
                    raise ValueError("hermitian_hessian requires a real-valued field")
                f = f.real
            fh = self.fft(f)
        else:
            fh = spectrum
        hol, anti = self._symbols
        out = np.empty(self.shape + (self.n, self.n), dtype=complex)
        for i in range(self.n):
            for j in range(i, self.n):
                h = self.ifft(hol[i] * anti[j] * fh)
                if i == j:
                    out[..., i, i] = h.real
                else:
                    out[..., i, j] = h
                    out[..., j, i] = np.conj(h)
        return out

    def ddbar(self, f, i: int, j: int) -> np.ndarray:
        """Single entry ``d_i d_jbar f`` for a field of any trailing shape."""
        f = _values(f)
        fh = self.fft(f)
        sym = self.symbol(i) * self.symbol(j, True)
        return self.ifft(self._expand(sym, fh) * fh)

    def mean(self, f) -> np.ndarray:
        return np.mean(_values(f), axis=self.axes)

    def spectral_energy(self, f) -> float:
        """Sum of squared normalized Fourier magnitudes (Parseval partner of mean |f|^2)."""
        fh = self.fft(_values(f)) / self.size
        return float(np.sum(np.abs(fh) ** 2))

    def lowpass_mask(self, K: int) -> np.ndarray:
        """Boolean spectral mask of integer modes with ``|k_a| <= K`` on every axis."""
        ints = np.abs(np.fft.fftfreq(self.N, d=1.0 / self.N))
        m = np.ones(self.shape, dtype=bool)
        for a in range(self.ndim):
            shape = [1] * self.ndim
            shape[a] = self.N
            m = m & (ints <= K).reshape(shape)
        return m


class ScalarField:
    """Scalar values on a grid with a lazily cached spectrum.

    Assigning ``values`` marks the spectrum dirty.
    """

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self._spectrum = None
        self.values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @values.setter
    def values(self, v) -> None:
        v = np.asarray(v)
        if v.shape != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        self._values = v
        self._spectrum = None

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = self.grid.fft(self._values)
        return self._spectrum

    def is_real(self, tol: float = REAL_TOL) -> bool:
        if not np.iscomplexobj(self._values):
            return True
        scale = max(1.0, float(np.max(np.abs(self._values))))
        return float(np.max(np.abs(self._values.imag))) <= tol * scale

    def partial(self, j: int, conjugate: bool = False) -> "ScalarField":
        sym = self.grid.symbol(j, conjugate)
        return ScalarField(self.grid, self.grid.ifft(sym * self.spectrum))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._values, dtype=dtype)


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, ScalarField) else np.asarray(f)


def spectral_partial(f, j: int, conjugate: bool = False, grid: Grid | None = None) -> np.ndarray:
    if isinstance(f, ScalarField):
        return f.partial(j, conjugate).values
    if grid is None:
        raise TypeError("a grid is required for raw arrays")
    return grid.partial(f, j, conjugate)


def hermitian_hessian(f, grid: Grid | None = None) -> np.ndarray:
    if isinstance(f, ScalarField):
        if not f.is_real():
            raise ValueError("hermitian_hessian requires a real-valued field")
        return f.grid.hessian(f.values.real)
    if grid is None:
        raise TypeError("a grid is required for raw arrays")
    return grid.hessian(f)
