"""Truncated power-series arithmetic and parabolic classification.

A germ is stored as its truncation: f(z) = z0 + sum_{k=1..N} c_k (z-z0)^k.
All series operations are exact through degree N and silently drop higher
terms. The truncated polynomial is treated as the definitional object by
every downstream module.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IdentityIterate, NotParabolic, ParseError, SpecError

DEFAULT_ORDER = 16
DEFAULT_RADIUS = 0.25
ROOT_OF_UNITY_TOL = 1e-10
UNIT_MODULUS_TOL = 1e-12
COEFF_ZERO_TOL = 1e-12
RADIUS_CAP = 0.4999


def principal_root(w: complex, n: int) -> complex:
    """n-th root with argument in (-pi/n, pi/n]."""
    if w == 0:
        return 0.0j
    w = complex(w)
    if w.imag == 0.0:
        w = complex(w.real, 0.0)  # avoid -0.0j flipping the cut to -pi
    r = abs(w) ** (1.0 / n)
    return r * cmath.exp(1j * cmath.phase(w) / n)


@dataclass(frozen=True)
class Germ:
    """Truncated analytic germ fixing its center.

    coeffs[k-1] is the coefficient of (z-center)^k, for k = 1..order.
    radius_hint is the user-declared validity radius in the z-plane.
    """

    center: complex
    coeffs: np.ndarray
    order: int
    radius_hint: float

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "coeffs", coeffs)
        if self.order < 2:
            raise SpecError(f"order must be >= 2, got {self.order}")
        if len(coeffs) != self.order:
            raise SpecError(
                f"coeffs must have exactly order={self.order} entries, got {len(coeffs)}"
            )
        if not (0.0 < self.radius_hint < 0.5):
            raise SpecError(f"radius_hint must lie in (0, 1/2), got {self.radius_hint}")

    @property
    def multiplier(self) -> complex:
        return complex(self.coeffs[0])

    def __call__(self, z):
        """Evaluate the truncated polynomial at z (scalar or array)."""
        u = np.asarray(z, dtype=complex) - self.center
        acc = np.zeros_like(u)
        for c in self.coeffs[::-1]:
            acc = u * (c + acc)
        out = self.center + acc
        return out if out.shape else complex(out)

    def deviation_coeffs(self) -> np.ndarray:
        """Coefficients of f - id, indexed by degree (length order+1, [0]=0)."""
        d = np.zeros(self.order + 1, dtype=complex)
        d[1:] = self.coeffs
        d[1] -= 1.0
        return d

    def is_identity(self, tol: float = COEFF_ZERO_TOL) -> bool:
        return bool(np.all(np.abs(self.deviation_coeffs()) <= tol))


def germ_from_map(center, coeff_by_degree: dict, order: int = DEFAULT_ORDER,
                  radius: float = DEFAULT_RADIUS) -> Germ:
    coeffs = np.zeros(order, dtype=complex)
    for k, v in coeff_by_degree.items():
        if not 1 <= k <= order:
            raise SpecError(f"coefficient degree {k} outside 1..order={order}")
        coeffs[k - 1] = v
    return Germ(complex(center), coeffs, order, radius)


def identity_germ(order: int = DEFAULT_ORDER, center=0.0, radius: float = DEFAULT_RADIUS) -> Germ:
    return germ_from_map(center, {1: 1.0}, order, radius)


# ---------------------------------------------------------------------------
# germ-spec text format


def parse_germ(text: str) -> Germ:
    """Parse the line-oriented germ-spec format.

    Statements: `center <re> [im]`, `coeff <k> <re> [im]`, `order <N>`,
    `radius <r>`; `#` starts a comment; `;` also separates statements.
    """
    center = 0.0 + 0.0j
    order = None
    radius = None
    pending: list[tuple[int, complex, int]] = []
    seen: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines() or [text], start=1):
        line = raw.split("#", 1)[0]
        col = 1
        for stmt in line.split(";"):
            tokens = stmt.split()
            if tokens:
                _parse_statement(tokens, lineno, col, seen, pending,
                                 state := _ParseState())
                if state.center is not None:
                    center = state.center
                if state.order is not None:
                    order = state.order
                if state.radius is not None:
                    radius = state.radius
            col += len(stmt) + 1

    if order is None:
        order = DEFAULT_ORDER
    if radius is None:
        radius = DEFAULT_RADIUS
    coeffs = np.zeros(order, dtype=complex)
    saw_lambda = False
    for k, v, lineno in pending:
        if k > order:
            raise SpecError(f"coeff degree {k} exceeds order {order} (line {lineno})")
        coeffs[k - 1] = v
        if k == 1:
            saw_lambda = True
    if not saw_lambda:
        raise SpecError("degree-1 coefficient (the multiplier) must be present")
    return Germ(center, coeffs, order, radius)


class _ParseState:
    center = None
    order = None
    radius = None


def _parse_statement(tokens, lineno, col, seen, pending, state):
    kw = tokens[0]

    def num(tok, what):
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"expected a number for {what}, got {tok!r}", lineno, col)

    def integer(tok, what):
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected an integer for {what}, got {tok!r}", lineno, col)

    if kw == "center":
        if not 2 <= len(tokens) <= 3:
            raise ParseError("center takes <re> [im]", lineno, col)
        if "center" in seen:
            raise SpecError(f"duplicate center (lines {seen['center']} and {lineno})")
        seen["center"] = lineno
        state.center = complex(num(tokens[1], "center"),
                               num(tokens[2], "center") if len(tokens) == 3 else 0.0)
    elif kw == "coeff":
        if not 3 <= len(tokens) <= 4:
            raise ParseError("coeff takes <k> <re> [im]", lineno, col)
        k = integer(tokens[1], "coeff degree")
        if k < 1:
            raise SpecError(f"coeff degree must be >= 1, got {k} (line {lineno})")
        if ("coeff", k) in seen:
            raise SpecError(f"duplicate coeff {k} (lines {seen[('coeff', k)]} and {lineno})")
        seen[("coeff", k)] = lineno
        pending.append((k, complex(num(tokens[2], "coeff"),
                                   num(tokens[3], "coeff") if len(tokens) == 4 else 0.0),
                        lineno))
    elif kw == "order":
        if len(tokens) != 2:
            raise ParseError("order takes <N>", lineno, col)
        if "order" in seen:
            raise SpecError(f"duplicate order (lines {seen['order']} and {lineno})")
        seen["order"] = lineno
        n = integer(tokens[1], "order")
        if n < 2:
            raise SpecError(f"order must be >= 2, got {n} (line {lineno})")
        state.order = n
    elif kw == "radius":
        if len(tokens) != 2:
            raise ParseError("radius takes <r>", lineno, col)
        if "radius" in seen:
            raise SpecError(f"duplicate radius (lines {seen['radius']} and {lineno})")
        seen["radius"] = lineno
        state.radius = num(tokens[1], "radius")
    else:
        raise ParseError(f"unknown statement {kw!r}", lineno, col)


def format_germ(g: Germ) -> str:
    """Inverse of parse_germ for the nonzero coefficients."""
    lines = [f"center {g.center.real:.17g} {g.center.imag:.17g}",
             f"order {g.order}",
             f"radius {g.radius_hint:.17g}"]
    for k in range(1, g.order + 1):
        c = g.coeffs[k - 1]
        if c != 0 or k == 1:
            lines.append(f"coeff {k} {c.real:.17g} {c.imag:.17g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# series arithmetic


def _mul_trunc(p: np.ndarray, q: np.ndarray, order: int) -> np.ndarray:
    """Product of degree-indexed coefficient arrays, truncated at `order`."""
    out = np.convolve(p, q)[: order + 1]
    if len(out) < order + 1:
        out = np.pad(out, (0, order + 1 - len(out)))
    return out


def compose(f: Germ, g: Germ) -> Germ:
    """Coefficients of f(g(z)), exact through the common truncation order."""
    if f.order != g.order:
        raise DomainError(f"truncation orders differ: {f.order} != {g.order}")
    if abs(f.center - g(g.center)) > 1e-9:
        raise DomainError(
            f"center mismatch: f is at {f.center}, g maps its center to {g(g.center)}"
        )
    order = f.order
    u = np.zeros(order + 1, dtype=complex)
    u[1:] = g.coeffs
    # Horner in u: f(u) = u*(c1 + u*(c2 + ... + u*cN))
    acc = np.zeros(order + 1, dtype=complex)
    acc[0] = f.coeffs[order - 1]
    for k in range(order - 1, 0, -1):
        acc = _mul_trunc(acc, u, order)
        acc[0] += f.coeffs[k - 1]
    acc = _mul_trunc(acc, u, order)
    return Germ(f.center, acc[1:], order, min(f.radius_hint, g.radius_hint))


def iterate(f: Germ, m: int) -> Germ:
    """m-fold composition of f with itself, truncated at f.order."""
    if m < 1:
        raise DomainError(f"iterate needs m >= 1, got {m}")
    result = None
    base = f
    while m:
        if m & 1:
            result = base if result is None else compose(result, base)
        m >>= 1
        if m:
            base = compose(base, base)
    return result


def invert(f: Germ) -> Germ:
    """Series reversion: g with f(g(z)) = z through the truncation order."""
    c1 = f.multiplier
    if abs(c1) < 1e-14:
        raise DomainError("cannot revert a germ with vanishing multiplier")
    order = f.order
    g = np.zeros(order + 1, dtype=complex)
    g[1] = 1.0 / c1
    higher = np.zeros(order + 1, dtype=complex)
    higher[2:] = f.coeffs[1:]
    ident = np.zeros(order + 1, dtype=complex)
    ident[1] = 1.0
    for _ in range(order):
        # g <- (id - (f - c1*id) o g) / c1, gains one correct degree per pass
        acc = np.zeros(order + 1, dtype=complex)
        acc[0] = higher[order]
        for k in range(order - 1, 0, -1):
            acc = _mul_trunc(acc, g, order)
            acc[0] += higher[k]
        acc = _mul_trunc(acc, g, order)
        g = (ident - acc) / c1
    return Germ(f.center, g[1:], order, f.radius_hint)


# ---------------------------------------------------------------------------
# parabolic classification


@dataclass(frozen=True)
class ParabolicData:
    """Classification record of a parabolic germ.

    fq is the q-th iterate in normal form z(1 + a z^n + eps(z)); tail holds
    the coefficients of eps indexed by degree (tail[j] multiplies z^j).
    """

    lam: complex
    p: int
    q: int
    n: int
    a: complex
    fq: Germ
    tail: np.ndarray
    germ: Germ = field(repr=False, default=None)

    @property
    def multiplicity(self) -> int:
        return self.n + 1


def classify_parabolic(f: Germ) -> ParabolicData:
    """Detect the root-of-unity multiplier and the normal form of f^q."""
    lam = f.multiplier
    if abs(abs(lam) - 1.0) > UNIT_MODULUS_TOL:
        raise NotParabolic(f"|multiplier| = {abs(lam)} is not 1 within {UNIT_MODULUS_TOL}")
    q = None
    for cand in range(1, f.order + 1):
        if abs(lam ** cand - 1.0) < ROOT_OF_UNITY_TOL:
            q = cand
            break
    if q is None:
        raise NotParabolic(
            f"multiplier {lam} is not a root of unity with q <= order={f.order}"
        )
    p = round(q * (cmath.phase(lam) / (2 * math.pi))) % q
    if math.gcd(p, q) != 1 and q > 1:
        raise NotParabolic(f"detected p/q = {p}/{q} is not in lowest terms")

    fq = iterate(f, q)
    dev = fq.deviation_coeffs()
    nz = [k for k in range(2, fq.order + 1) if abs(dev[k]) > COEFF_ZERO_TOL]
    if not nz:
        raise IdentityIterate(f"f^{q} is the identity through order {f.order}")
    n = nz[0] - 1
    a = complex(dev[nz[0]])
    if n % q != 0:
        raise NotParabolic(f"multiplicity exponent n={n} is not a multiple of q={q}")
    # f^q(z) = z + a z^{n+1} + z*eps(z)  =>  eps_j = dev_{j+1} for j >= n+1
    tail = np.zeros(fq.order, dtype=complex)
    for j in range(n + 1, fq.order):
        tail[j] = dev[j + 1]
    return ParabolicData(lam, p, q, n, a, fq, tail, germ=f)


@dataclass(frozen=True)
class LinearMap:
    """L(z) = center + b*(z - center); the coordinate transport for
    normalize_leading."""

    center: complex
    b: complex

    def __call__(self, z):
        return self.center + self.b * (np.asarray(z, dtype=complex) - self.center)

    def inverse(self, z):
        return self.center + (np.asarray(z, dtype=complex) - self.center) / self.b


def normalize_leading(pd: ParabolicData) -> tuple[ParabolicData, LinearMap]:
    """Conjugate by L(z) = b z so the leading coefficient of f^q - id is 1.

    b is the principal n-th root of 1/a; returns the new classification and L.
    """
    f = pd.germ if pd.germ is not None else pd.fq
    b = principal_root(1.0 / pd.a, pd.n)
    ks = np.arange(1, f.order + 1)
    new_coeffs = f.coeffs * b ** (ks - 1)
    new_radius = min(f.radius_hint / abs(b), RADIUS_CAP)
    g = Germ(f.center, new_coeffs, f.order, new_radius)
    return classify_parabolic(g), LinearMap(f.center, b)
