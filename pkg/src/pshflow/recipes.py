"""A small grammar for trigonometric polynomials on the torus, and metric recipes.

Grammar (whitespace-insensitive)::

    expr  := term (("+" | "-") term)*
    term  := [number ["*"]] [("cos" | "sin") "(" arg ")"]
    arg   := lin (("+" | "-") lin)*
    lin   := [integer ["*"]] var
    var   := x1 | y1 | ... | xn | yn
    number:= decimal | decimal "/" decimal

``cos(x1 + 2 y2)`` means ``cos(2 pi (x1 / L_x1 + 2 y2 / L_y2))`` so every term
is periodic.  A bare number is a constant term.  Frequencies must be integers;
a fractional frequency would not be periodic on the lattice.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import MetricField
from .grid import Grid

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/()]))")


class RecipeError(ValueError):
    """Malformed trigonometric expression; ``position`` is a character offset."""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"{message} at column {position + 1} of {text!r}")


@dataclass(frozen=True)
class TrigTerm:
    coef: float
    kind: str            # "const", "cos" or "sin"
    freq: tuple          # one integer per real axis


class TrigPoly:
    """Parsed sum of ``coef * cos/sin(2 pi m . x / L)`` terms with exact derivatives."""

    def __init__(self, n: int, terms: list[TrigTerm], text: str = ""):
        self.n = n
        self.terms = list(terms)
        self.text = text

    def __repr__(self) -> str:
        return f"TrigPoly({self.text!r})"

    def _phase(self, grid: Grid, term: TrigTerm):
        k = np.array([2 * np.pi * m / L for m, L in zip(term.freq, grid.periods)])
        theta = sum(k[a] * grid.coords[a] for a in range(grid.ndim))
        # d_j theta = (k_x - i k_y) / 2
        kappa = np.array([0.5 * (k[2 * j] - 1j * k[2 * j + 1]) for j in range(grid.n)])
        return np.broadcast_to(theta, grid.shape), kappa

    def _check(self, grid: Grid) -> None:
        if grid.n != self.n:
            raise ValueError(f"expression for n={self.n} evaluated on a grid with n={grid.n}")

    def evaluate(self, grid: Grid) -> np.ndarray:
        self._check(grid)
        out = np.zeros(grid.shape)
        for t in self.terms:
            if t.kind == "const":
                out += t.coef
                continue
            theta, _ = self._phase(grid, t)
            out += t.coef * (np.cos(theta) if t.kind == "cos" else np.sin(theta))
        return out

    def gradient(self, grid: Grid) -> np.ndarray:
        """Exact ``d_j f`` stacked on a trailing axis."""
        self._check(grid)
        out = np.zeros(grid.shape + (grid.n,), dtype=complex)
        for t in self.terms:
            if t.kind == "const":
                continue
            theta, kappa = self._phase(grid, t)
            d = -np.sin(theta) if t.kind == "cos" else np.cos(theta)
            out += t.coef * d[..., None] * kappa
        return out

    def hessian(self, grid: Grid) -> np.ndarray:
        """Exact ``d_i d_jbar f``."""
        self._check(grid)
        out = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
        for t in self.terms:
            if t.kind == "const":
                continue
            theta, kappa = self._phase(grid, t)
            f = np.cos(theta) if t.kind == "cos" else np.sin(theta)
            out -= t.coef * f[..., None, None] * np.outer(kappa, kappa.conj())
        return out

    def max_frequency(self) -> int:
        return max((max(abs(m) for m in t.freq) for t in self.terms if t.kind != "const"), default=0)


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise RecipeError("unexpected character", text, pos)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise RecipeError(f"expected {value or 'a token'!r}", self.text, tok[2])
        self.i += 1
        return tok

    def number(self) -> Fraction:
        _, v, _ = self.take()
        num = Fraction(v)
        if self.peek()[1] == "/":
            self.take("/")
            kind, d, pos = self.take()
            if kind != "num" or Fraction(d) == 0:
                raise RecipeError("bad denominator", self.text, pos)
            num /= Fraction(d)
        return num

    def var_index(self, name: str, pos: int) -> int:
        m = re.fullmatch(r"([xy])(\d+)", name)
        if not m or not 1 <= int(m.group(2)) <= self.n:
            raise RecipeError(f"unknown variable {name!r} (use x1..x{self.n}, y1..y{self.n})", self.text, pos)
        j = int(m.group(2)) - 1
        return 2 * j + (1 if m.group(1) == "y" else 0)

    def arg(self) -> tuple:
        freq = [0] * (2 * self.n)
        sign = 1
        first = True
        while True:
            tok = self.peek()
            if tok[1] in "+-" and tok[0] == "op":
                self.take()
                sign = -1 if tok[1] == "-" else 1
            elif not first:
                break
            mult = Fraction(1)
            if self.peek()[0] == "num":
                mult = self.number()
                if self.peek()[1] == "*":
                    self.take("*")
            kind, name, pos = self.take()
            if kind != "name":
                raise RecipeError("expected a variable", self.text, pos)
            if mult.denominator != 1:
                raise RecipeError("frequencies must be integers to be periodic", self.text, pos)
            freq[self.var_index(name, pos)] += sign * int(mult)
            sign = 1
            first = False
            if self.peek()[1] not in ("+", "-"):
                break
        return tuple(freq)

    def term(self, sign: int) -> TrigTerm:
        coef = Fraction(1)
        has_num = False
        if self.peek()[0] == "num":
            coef = self.number()
            has_num = True
            if self.peek()[1] == "*":
                self.take("*")
        tok = self.peek()
        if tok[0] == "name" and tok[1] in ("cos", "sin"):
            self.take()
            self.take("(")
            freq = self.arg()
            self.take(")")
            return TrigTerm(float(sign * coef), tok[1], freq)
        if not has_num:
            raise RecipeError("expected a number, cos or sin", self.text, tok[2])
        return TrigTerm(float(sign * coef), "const", (0,) * (2 * self.n))

    def parse(self) -> TrigPoly:
        if not self.tokens:
            raise RecipeError("empty expression", self.text, 0)
        terms = []
        sign = 1
        if self.peek()[1] in ("+", "-"):
            sign = -1 if self.take()[1] == "-" else 1
        terms.append(self.term(sign))
        while self.peek()[0] is not None:
            tok = self.take()
            if tok[1] not in ("+", "-"):
                raise RecipeError("expected '+' or '-'", self.text, tok[2])
            terms.append(self.term(-1 if tok[1] == "-" else 1))
        return TrigPoly(self.n, terms, self.text)


def parse_trig(text, n: int) -> TrigPoly:
    """Parse a trigonometric polynomial; plain numbers are constant polynomials."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return TrigPoly(n, [TrigTerm(float(text), "const", (0,) * (2 * n))], str(text))
    if not isinstance(text, str):
        raise RecipeError("expression must be a string or number", str(text), 0)
    return _Parser(text, n).parse()


# metric recipes -------------------------------------------------------------------

def flat_metric(grid: Grid) -> MetricField:
    return MetricField(grid, np.eye(grid.n))


def conformal_metric(grid: Grid, f) -> MetricField:
    """``e^f beta`` for a trigonometric ``f`` (or an array)."""
    fv = f.evaluate(grid) if isinstance(f, TrigPoly) else np.asarray(f, dtype=float)
    return MetricField(grid, np.exp(fv)[..., None, None] * np.eye(grid.n))


def kahler_metric(grid: Grid, phi) -> MetricField:
    """``beta + i ddbar phi`` with the Hessian taken exactly for a :class:`TrigPoly`."""
    H = phi.hessian(grid) if isinstance(phi, TrigPoly) else grid.hessian(phi)
    return MetricField(grid, np.eye(grid.n) + H)


def explicit_metric(grid: Grid, matrix) -> MetricField:
    """Constant metric from a coefficient table (complex entries as strings allowed)."""
    m = np.array([[complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v) for v in row]
                  for row in matrix])
    if m.shape != (grid.n, grid.n):
        raise ValueError(f"explicit metric must be {grid.n}x{grid.n}, got {m.shape}")
    return MetricField(grid, m)
