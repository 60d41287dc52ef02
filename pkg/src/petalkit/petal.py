"""Half-plane models and petal geometry for a classified parabolic germ.

The chart w = d/(z-z0)^n, d = -1/(n a), conjugates f^q to
F(w) = w + 1 + eta(w^{-1/n}) on a right half-plane. Petal regions use the
forward-invariant wedge {Re w + |Im w|/2 > tau}: with |eta| <= 1/2 the image
of w moves right by at least 1/2 and the wedge is mapped into itself, while
wedges of the 2n charts jointly cover every circle |z| = rho with
rho^n < |d| / (2 tau).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DomainError
from .germ import Germ, ParabolicData, classify_parabolic, invert, principal_root

DEFAULT_ETA_ORDER = 32
ETA_BOUND = 0.5
MIN_TAU = 10.0


def _binom_series_coeffs(n: int, jmax: int) -> np.ndarray:
    """C(-n, j) for j = 0..jmax via the recurrence."""
    c = np.empty(jmax + 1)
    c[0] = 1.0
    for j in range(jmax):
        c[j + 1] = c[j] * (-n - j) / (j + 1)
    return c


def _eta_hat(n: int, a: complex, tail: np.ndarray, eta_order: int) -> np.ndarray:
    """Degree-indexed coefficients of phi o f^q o phi^{-1} - (w+1) as a power
    series in z, exact through degree eta_order."""
    top = eta_order + n
    u = np.zeros(top + 1, dtype=complex)
    u[n] = a
    for j in range(min(len(tail), top + 1)):
        u[j] += tail[j]
    d = -1.0 / (n * a)
    jmax = top // n + 1
    cbin = _binom_series_coeffs(n, jmax)
    w_series = np.zeros(top + 1, dtype=complex)
    upow = u.copy()
    for j in range(1, jmax + 1):
        w_series += cbin[j] * upow
        if j < jmax:
            upow = np.convolve(upow, u)[: top + 1]
    eta_hat = d * w_series[n:]  # divide by z^n
    eta_hat[0] -= 1.0
    if abs(eta_hat[0]) > 1e-9:
        raise DomainError(f"normal form failed: constant term {eta_hat[0]} != 0")
    eta_hat[0] = 0.0
    return eta_hat[: eta_order + 1]


def _eta_radius_from_abs(abs_coeffs: np.ndarray, r_cap: float, bound: float) -> float:
    """Largest r <= r_cap with sum_k |b_k| r^k <= bound, by bisection."""
    degrees = np.arange(1, len(abs_coeffs) + 1)

    def total(r):
        return float(np.sum(abs_coeffs * r ** degrees))

    if total(r_cap) <= bound:
        return r_cap
    lo, hi = 0.0, r_cap
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if total(mid) <= bound:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class PetalChart:
    """One sector's coordinate change to a right half-plane model."""

    n: int
    d: complex
    branch: int
    kind: str  # "attracting" | "repelling"
    tau: float
    r_eta: float
    center: complex = 0.0
    source: ParabolicData = field(repr=False, default=None)
    eta_order: int = field(repr=False, default=DEFAULT_ETA_ORDER)

    @property
    def root_d(self) -> complex:
        return principal_root(self.d, self.n)

    @property
    def branch_rotation(self) -> complex:
        return cmath.exp(2j * math.pi * self.branch / self.n)

    def forward(self, z):
        """w = d / (z - center)^n."""
        u = np.asarray(z, dtype=complex) - self.center
        w = self.d / u ** self.n
        return w if w.shape else complex(w)

    def inverse(self, w):
        """Branch inverse z = center + d^{1/n} e^{2 pi i branch/n} w^{-1/n}."""
        ww = np.asarray(w, dtype=complex)
        xi = ww ** (-1.0 / self.n) if self.n > 1 else 1.0 / ww
        z = self.center + self.root_d * self.branch_rotation * xi
        return z if z.shape else complex(z)

    def axis_angle(self) -> float:
        """Direction of this petal's axis in the z-plane."""
        return cmath.phase(self.root_d) + 2 * math.pi * self.branch / self.n


def coordinate_change(pd: ParabolicData, branch: int, kind: str = "attracting",
                      tau: float | None = None,
                      eta_order: int = DEFAULT_ETA_ORDER) -> PetalChart:
    """Build the sector chart for petal `branch` of the given kind.

    Repelling charts are built from the truncated inverse germ (series
    reversion of f^q), so their model is again a right half-plane.
    """
    if not 0 <= branch < pd.n:
        raise DomainError(f"branch must lie in [0, {pd.n}), got {branch}")
    if kind not in ("attracting", "repelling"):
        raise DomainError(f"kind must be attracting or repelling, got {kind!r}")
    source = pd if kind == "attracting" else classify_parabolic(invert(pd.fq))
    n, a = source.n, source.a
    d = -1.0 / (n * a)
    eta_hat = _eta_hat(n, a, source.tail, eta_order)
    abs_b = np.abs(eta_hat[1:]) * abs(principal_root(d, n)) ** np.arange(1, eta_order + 1)
    r_cap = source.fq.radius_hint / abs(principal_root(d, n))
    r_eta = _eta_radius_from_abs(abs_b, r_cap, ETA_BOUND)
    if tau is None:
        tau = max(1.0 / r_eta ** n + 1.5, MIN_TAU)
    return PetalChart(n=n, d=d, branch=branch, kind=kind, tau=float(tau),
                      r_eta=r_eta, center=pd.fq.center, source=source,
                      eta_order=eta_order)


@dataclass
class HalfPlaneMap:
    """F(w) = w + 1 + eta(w^{-1/n}) with eta from the chart's branch.

    eta_coeffs[k-1] multiplies xi^k. Evaluation uses the principal branch of
    w^{-1/n}, matching the chart inverse's convention.
    """

    eta_coeffs: np.ndarray
    n: int
    tau: float
    r_eta: float
    chart: PetalChart = None

    def __post_init__(self):
        self.eta_coeffs = np.asarray(self.eta_coeffs, dtype=complex)
        self._abs = np.abs(self.eta_coeffs)

    @property
    def min_abs_w(self) -> float:
        """|w| below which the eta series leaves its certified radius."""
        return self.r_eta ** (-self.n)

    def xi(self, w):
        ww = np.asarray(w, dtype=complex)
        return 1.0 / ww if self.n == 1 else ww ** (-1.0 / self.n)

    def eta(self, xi, ncoeff: int | None = None):
        coeffs = self.eta_coeffs if ncoeff is None else self.eta_coeffs[:ncoeff]
        acc = np.zeros_like(np.asarray(xi, dtype=complex))
        for c in coeffs[::-1]:
            acc = xi * (c + acc)
        return acc

    def eta_prime(self, xi):
        ks = np.arange(1, len(self.eta_coeffs) + 1)
        dcoeffs = self.eta_coeffs * ks
        acc = np.zeros_like(np.asarray(xi, dtype=complex))
        for c in dcoeffs[:0:-1]:
            acc = xi * (c + acc)
        return acc + dcoeffs[0]

    def trim_count(self, xi_max: float, tol: float = 1e-16) -> int:
        """Smallest coefficient count whose dropped tail is below tol at xi_max."""
        if xi_max <= 0:
            return 1
        terms = self._abs * xi_max ** np.arange(1, len(self._abs) + 1)
        tail = np.cumsum(terms[::-1])[::-1]
        keep = np.nonzero(tail > tol)[0]
        return int(keep[-1]) + 1 if len(keep) else 1

    def __call__(self, w, ncoeff: int | None = None):
        ww = np.asarray(w, dtype=complex)
        out = ww + 1.0 + self.eta(self.xi(ww), ncoeff)
        return out if out.shape else complex(out)

    def advance(self, w: np.ndarray, ncoeff: int | None = None):
        """One orbit step: returns (F(w), eta values) for a flat array."""
        e = self.eta(self.xi(w), ncoeff)
        return w + 1.0 + e, e

    def scalar_advance(self, w: complex) -> tuple[complex, complex]:
        """Pure-python orbit step for sequential anchor trajectories."""
        coeffs = getattr(self, "_pylist", None)
        if coeffs is None:
            coeffs = self._pylist = [complex(c) for c in self.eta_coeffs[::-1]]
        xi = 1.0 / w if self.n == 1 else w ** (-1.0 / self.n)
        acc = 0.0j
        for c in coeffs:
            acc = xi * (c + acc)
        return w + 1.0 + acc, acc

    def derivative(self, w):
        ww = np.asarray(w, dtype=complex)
        xi = self.xi(ww)
        out = 1.0 + self.eta_prime(xi) * (-1.0 / self.n) * xi ** (self.n + 1)
        return out if out.shape else complex(out)

    def reference(self, w):
        """Exact composition phi(f^q(phi^{-1}(w))) through the chart."""
        z = self.chart.inverse(w)
        return self.chart.forward(self.chart.source.fq(z))

    def wedge_member(self, w, tau: float | None = None):
        t = self.tau if tau is None else tau
        ww = np.asarray(w, dtype=complex)
        return ww.real + np.abs(ww.imag) / 2.0 > t

    def evaluable(self, w, safety: float = 1.0):
        return np.abs(np.asarray(w, dtype=complex)) >= safety * self.min_abs_w


def conjugated_map(pd: ParabolicData, chart: PetalChart) -> HalfPlaneMap:
    """eta coefficients of phi o f^q o phi^{-1} - (w+1) in powers of w^{-1/n}."""
    source = chart.source
    eta_hat = _eta_hat(source.n, source.a, source.tail, chart.eta_order)
    rot = chart.root_d * chart.branch_rotation
    ks = np.arange(1, chart.eta_order + 1)
    coeffs = eta_hat[1:] * rot ** ks
    return HalfPlaneMap(coeffs, chart.n, chart.tau, chart.r_eta, chart)


def eta_radius(hpm: HalfPlaneMap, bound: float = ETA_BOUND) -> float:
    """Largest r with sum_k |b_k| r^k <= bound (so |eta| <= bound on |xi| <= r).

    Falls back to the chart validity radius when eta vanishes identically.
    """
    if not 0.0 < bound < 1.0:
        raise DomainError(f"bound must lie in (0,1), got {bound}")
    chart = hpm.chart
    if chart is not None:
        r_cap = chart.source.fq.radius_hint / abs(chart.root_d)
    else:
        r_cap = hpm.r_eta if np.any(hpm._abs > 0) else 1.0
    if not np.any(hpm._abs > 0):
        return r_cap
    return _eta_radius_from_abs(hpm._abs, r_cap, bound)


@dataclass(frozen=True)
class PetalRegion:
    """Membership predicate and boundary sampler for one petal."""

    chart: PetalChart

    def contains(self, z) -> np.ndarray:
        """Wedge membership in the chart's sector (vectorized)."""
        zin = np.asarray(z, dtype=complex)
        zz = np.atleast_1d(zin)
        u = zz - self.chart.center
        ok = (u != 0) & (np.abs(u) < self.chart.source.fq.radius_hint)
        w = np.full(zz.shape, np.nan, dtype=complex)
        np.divide(self.chart.d, u ** self.chart.n, out=w, where=ok)
        good = ok & np.where(ok, w.real + np.abs(w.imag) / 2.0 > self.chart.tau, False)
        # branch sector: the chart inverse must return to z
        result = np.zeros(zz.shape, dtype=bool)
        if np.any(good):
            zr = np.asarray(self.chart.inverse(w[good]), dtype=complex)
            result[good] = np.abs(zr - zz[good]) <= 1e-6 * np.abs(u[good])
        return result if zin.shape else bool(result[0])

    def __contains__(self, z) -> bool:
        return bool(self.contains(z))

    def boundary_samples(self, count: int = 256, t_max: float | None = None) -> np.ndarray:
        """Points on the wedge boundary Re w + |Im w|/2 = tau, via the chart."""
        tau = self.chart.tau
        t = np.linspace(-(t_max or 20.0 * tau), t_max or 20.0 * tau, count)
        w = tau - np.abs(t) / 2.0 + 1j * t
        return np.asarray(self.chart.inverse(w), dtype=complex)


def petal_region(chart: PetalChart) -> PetalRegion:
    return PetalRegion(chart)


@dataclass
class Flower:
    """2n petal charts plus the sampled coverage certificate."""

    charts: list
    radii: list
    angles: int
    uncovered_counts: list
    covered: bool

    @property
    def attracting(self):
        return [c for c in self.charts if c.kind == "attracting"]

    @property
    def repelling(self):
        return [c for c in self.charts if c.kind == "repelling"]

    def to_json(self) -> dict:
        return {
            "petals": [
                {
                    "kind": c.kind,
                    "branch": c.branch,
                    "n": c.n,
                    "d": [c.d.real, c.d.imag],
                    "tau": c.tau,
                    "r_eta": c.r_eta,
                    "axis_angle": c.axis_angle(),
                }
                for c in self.charts
            ],
            "coverage": {
                "radii": list(self.radii),
                "angles": self.angles,
                "uncovered": list(self.uncovered_counts),
                "covered": self.covered,
            },
        }


def flower(pd: ParabolicData, tau: float | None = None, angles: int = 720,
           n_radii: int = 3, rho_factor: float = 0.95) -> Flower:
    """n attracting + n repelling charts with a sampled coverage certificate.

    Every sample on the test circles must lie in at least one petal; failure
    raises CoverageError carrying the uncovered samples.
    """
    att = [coordinate_change(pd, b, "attracting", tau) for b in range(pd.n)]
    rep = [coordinate_change(pd, b, "repelling", tau) for b in range(pd.n)]
    for c in att + rep:
        floor = 1.0 / c.r_eta ** c.n + 1.0
        if c.tau < floor:
            raise DomainError(
                f"tau={c.tau} below linearization floor {floor:.3f} for {c.kind} chart"
            )
    charts = att + rep
    tau_eff = max(c.tau for c in charts)
    rho_star = rho_factor * (abs(att[0].d) / (2.0 * tau_eff)) ** (1.0 / pd.n)
    rho_star = min(rho_star, 0.9 * pd.fq.radius_hint)
    radii = [rho_star / 2 ** j for j in range(n_radii)]
    regions = [petal_region(c) for c in charts]
    theta = np.linspace(0.0, 2.0 * math.pi, angles, endpoint=False)
    ring = np.exp(1j * theta)
    uncovered_counts = []
    uncovered_samples = []
    for rho in radii:
        z = pd.fq.center + rho * ring
        mask = np.zeros(angles, dtype=bool)
        for reg in regions:
            mask |= reg.contains(z)
        bad = ~mask
        uncovered_counts.append(int(bad.sum()))
        if bad.any():
            uncovered_samples.extend(z[bad].tolist())
    fl = Flower(charts, radii, angles, uncovered_counts, not uncovered_samples)
    if uncovered_samples:
        raise CoverageError(
            f"{len(uncovered_samples)} circle samples not covered by any petal "
            f"(tau too small for the truncated tail)",
            uncovered_samples,
        )
    return fl
