"""Parameterized families h(c, z) over the unit parameter disk, with
numerical verification of the holomorphic-motion axioms.

Holomorphy in c is certified spectrally: on a circle |c| = rho the values
of an analytic family have no negative-frequency Fourier content, so the
relative energy in negative modes is the single tolerance knob.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .germ import Germ
from .petal import HalfPlaneMap

BASE_TOL = 1e-12
GAP_TOL = 1e-12
HOLOMORPHY_TOL = 1e-8


@dataclass
class MotionFamily:
    """A family (c, z) -> h(c, z) on |c| < 1 with a declared base set.

    eval_fn(c, z) takes a scalar c and scalar-or-array z from the base set;
    base_sampler(count, rng) draws base-set points for the checks.
    """

    label: str
    eval_fn: callable
    base_sampler: callable

    def __call__(self, c, z):
        if abs(c) >= 1.0:
            raise DomainError(f"|c| = {abs(c)} must be < 1")
        zz = np.asarray(z, dtype=complex)
        out = self.eval_fn(complex(c), np.atleast_1d(zz).ravel())
        return out.reshape(zz.shape) if zz.shape else complex(out[0])

    def sample_base(self, count: int, rng=None) -> np.ndarray:
        rng = rng or np.random.default_rng(0)
        return np.asarray(self.base_sampler(count, rng), dtype=complex)


@dataclass
class BasePointReport:
    label: str
    max_deviation: float
    samples: int
    passed: bool
    vacuous: bool = False

    def to_json(self):
        return {"check": "base_point", "label": self.label,
                "max_deviation": self.max_deviation, "samples": self.samples,
                "passed": self.passed, "vacuous": self.vacuous}


@dataclass
class InjectivityReport:
    label: str
    c: complex
    min_image_gap: float
    min_sample_gap: float
    samples: int
    passed: bool

    def to_json(self):
        return {"check": "injectivity", "label": self.label,
                "c": [self.c.real, self.c.imag],
                "min_image_gap": self.min_image_gap,
                "min_sample_gap": self.min_sample_gap,
                "samples": self.samples, "passed": self.passed}


@dataclass
class HolomorphyReport:
    label: str
    z: complex
    rho: float
    points: int
    negative_mode_ratio: float
    passed: bool

    def to_json(self):
        return {"check": "holomorphy", "label": self.label,
                "z": [self.z.real, self.z.imag], "rho": self.rho,
                "points": self.points,
                "negative_mode_ratio": self.negative_mode_ratio,
                "passed": self.passed}


def check_base_point(M: MotionFamily, samples) -> BasePointReport:
    """max |h(0, z) - z| over the samples; pass iff < 1e-12."""
    z = np.asarray(samples, dtype=complex)
    if z.size == 0:
        return BasePointReport(M.label, 0.0, 0, True, vacuous=True)
    dev = float(np.abs(M(0.0, z) - z).max())
    return BasePointReport(M.label, dev, int(z.size), dev < BASE_TOL)


def check_injectivity(M: MotionFamily, c: complex, samples) -> InjectivityReport:
    """All pairwise image distances positive; pass iff min gap > 1e-12."""
    if abs(c) >= 1.0:
        raise DomainError(f"|c| = {abs(c)} must be < 1")
    z = np.asarray(samples, dtype=complex)
    if z.size < 2:
        raise DomainError("need at least two samples")
    iu = np.triu_indices(z.size, 1)
    sample_gap = float(np.abs(z[:, None] - z[None, :])[iu].min())
    img = M(c, z)
    gap = float(np.abs(img[:, None] - img[None, :])[iu].min())
    return InjectivityReport(M.label, complex(c), gap, sample_gap,
                             int(z.size), gap > GAP_TOL)


def check_holomorphy(M: MotionFamily, z, rho: float = 0.8,
                     log2_points: int = 8) -> HolomorphyReport:
    """Discrete Cauchy test: negative-frequency DFT energy of c -> h(c, z)
    relative to total energy; pass iff the ratio < 1e-8."""
    if rho > 0.9:
        raise DomainError(f"rho must be <= 0.9, got {rho}")
    npts = 2 ** log2_points
    cs = rho * np.exp(2j * math.pi * np.arange(npts) / npts)
    vals = np.empty(npts, dtype=complex)
    for k, c in enumerate(cs):
        v = M(complex(c), z)
        vc = complex(v)
        if not (math.isfinite(vc.real) and math.isfinite(vc.imag)):
            raise DomainError(f"evaluation failure at c = {complex(c)}")
        vals[k] = vc
    coef = np.fft.fft(vals) / npts
    energy = float(np.sum(np.abs(coef) ** 2))
    neg = float(np.sum(np.abs(coef[npts // 2 + 1:]) ** 2))
    ratio = neg / energy if energy > 0 else 0.0
    return HolomorphyReport(M.label, complex(z), rho, npts, ratio,
                            ratio < HOLOMORPHY_TOL)


def run_axiom_suite(M: MotionFamily, rng=None, base_samples: int = 200,
                    inj_samples: int = 100, holo_points: int = 20,
                    cs=(0.3, 0.6, 0.9 * np.exp(1j * math.pi / 4)),
                    rho: float = 0.8) -> dict:
    """Base-point, injectivity, and holomorphy reports for one family."""
    rng = rng or np.random.default_rng(2024)
    reports = {"label": M.label}
    reports["base_point"] = check_base_point(M, M.sample_base(base_samples, rng)).to_json()
    inj = [check_injectivity(M, c, M.sample_base(inj_samples, rng)).to_json() for c in cs]
    reports["injectivity"] = inj
    pts = M.sample_base(holo_points, rng)
    reports["holomorphy"] = [check_holomorphy(M, z, rho).to_json() for z in pts]
    reports["passed"] = (reports["base_point"]["passed"]
                         and all(r["passed"] for r in inj)
                         and all(r["passed"] for r in reports["holomorphy"]))
    return reports


# ---------------------------------------------------------------------------
# the explicit families


def build_Hx(F: HalfPlaneMap, x: float, r: float) -> MotionFamily:
    """Two-line family: identity on Re w = x, a c-scaled boundary shear
    w + eta(c r (x-1)^{1/n} (w-1)^{-1/n}) on Re w = x+1.

    At c = 1/(r (x-1)^{1/n}) the second line carries the strip boundary map.
    """
    if x <= 1.0:
        raise DomainError(f"x must exceed 1, got {x} ((x-1)^(1/n) degenerate)")
    n = F.n
    scale = r * (x - 1.0) ** (1.0 / n)

    def eval_fn(c, w):
        ww = np.asarray(w, dtype=complex)
        on0 = np.abs(ww.real - x) < 1e-9
        on1 = np.abs(ww.real - (x + 1.0)) < 1e-9
        if not np.all(on0 | on1):
            raise DomainError("point not on either boundary line")
        if c == 0:
            return ww if ww.shape else complex(ww)
        xi = (ww - 1.0) ** (-1.0 / n) if n > 1 else 1.0 / (ww - 1.0)
        shear = F.eta(c * scale * xi)
        out = np.where(on1, ww + shear, ww)
        return out if ww.shape else complex(out)

    def sampler(count, rng):
        span = max(10.0, x)
        im = span * (2.0 * rng.random(count) - 1.0)
        line = rng.random(count) < 0.5
        return np.where(line, x, x + 1.0) + 1j * im

    return MotionFamily(f"strip-boundary-shear(x={x:g})", eval_fn, sampler)


def build_theta(theta0_coeffs, thetaInf_coeffs, eps: float, a: float) -> MotionFamily:
    """Two-chart family on the disk |xi| <= eps and the outside of |xi| >= 1/eps.

    Each chart conjugates the transition series by the linear rescaling that
    contracts its domain into the series' chart of convergence; at c = eps/a
    the family restores the transition map itself.
    """
    if eps >= a:
        raise DomainError(f"eps = {eps} must be < a = {a} (charts would overlap)")
    a0 = np.asarray(theta0_coeffs, dtype=complex)   # a_2, a_3, ...
    b0 = np.asarray(thetaInf_coeffs, dtype=complex)  # b_1, b_2, ...

    def eval_fn(c, xi):
        zz = np.asarray(xi, dtype=complex)
        inner = np.abs(zz) <= eps * (1 + 1e-12)
        outer = np.abs(zz) >= (1.0 - 1e-12) / eps
        if not np.all(inner | outer):
            raise DomainError("point between the charts: not in the base set")
        if c == 0:
            return zz if zz.shape else complex(zz)
        out = np.array(zz, dtype=complex)
        if inner.any():
            u = (c * a / eps) * zz[inner]
            corr = np.zeros_like(u)
            for k in range(len(a0) - 1, -1, -1):
                corr = u * (a0[k] + corr)
            out[inner] = zz[inner] * (1.0 + corr)
        if outer.any():
            v = (eps / (c * a)) * zz[outer]
            inv = 1.0 / v
            corr = np.zeros_like(inv)
            for k in range(len(b0) - 1, -1, -1):
                corr = inv * (b0[k] + corr)
            out[outer] = zz[outer] + (c * a / eps) * corr
        return out if zz.shape else complex(out)

    def sampler(count, rng):
        half = count // 2
        r_in = eps * 0.97 * np.sqrt(rng.random(half))
        r_out = (1.0 / eps) * (1.03 + 2.0 * rng.random(count - half))
        ang = 2j * math.pi * rng.random(count)
        return np.concatenate([r_in, r_out]) * np.exp(ang)

    return MotionFamily(f"two-chart-transition(eps={eps:g},a={a:g})", eval_fn, sampler)


def build_glue_motion(germs: list[Germ], r: float, r0: float,
                      centers=None) -> MotionFamily:
    """Disk family z + (r/(c r0)) eta_i((c r0 / r)(z - z_i)) on |z - z_i| <= r.

    At c = r/r0 it restores each germ on its disk. Germs must be tangent to
    the identity and their closed r0-disks pairwise disjoint.
    """
    zs = np.array([g.center for g in germs], dtype=complex) if centers is None \
        else np.asarray(centers, dtype=complex)
    if len(zs) != len(germs):
        raise DomainError("centers must match germs")
    for g, z0 in zip(germs, zs):
        if abs(g.center - z0) > 1e-12:
            raise DomainError(f"germ center {g.center} does not match {z0}")
        if abs(g.multiplier - 1.0) > 1e-12:
            raise DomainError("glue motion requires germs tangent to the identity")
        if r0 > g.radius_hint:
            raise DomainError(f"r0 = {r0} exceeds germ validity radius {g.radius_hint}")
    if not 0 < r <= r0:
        raise DomainError(f"need 0 < r <= r0, got r={r}, r0={r0}")
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if abs(zs[i] - zs[j]) <= 2 * r0:
                raise DomainError(f"closed r0-disks at {zs[i]} and {zs[j]} overlap")

    def deviation(g, u):
        dev = np.zeros_like(u)
        for k in range(g.order, 1, -1):
            dev = u * (g.coeffs[k - 1] + dev)
        return u * dev  # sum_{k>=2} c_k u^k

    def eval_fn(c, z):
        zz = np.asarray(z, dtype=complex)
        out = np.array(zz, dtype=complex)
        owned = np.zeros(zz.shape, dtype=bool)
        for g, z0 in zip(germs, zs):
            mine = np.abs(zz - z0) <= r * (1 + 1e-12)
            owned |= mine
            if c != 0 and mine.any():
                u = zz[mine] - z0
                out[mine] = zz[mine] + (r / (c * r0)) * deviation(g, (c * r0 / r) * u)
        if not owned.all():
            raise DomainError("point outside every base disk")
        return out if zz.shape else complex(out)

    def sampler(count, rng):
        which = rng.integers(0, len(zs), count)
        rad = r * np.sqrt(rng.random(count))
        ang = np.exp(2j * math.pi * rng.random(count))
        return zs[which] + rad * ang

    return MotionFamily(f"germ-disk-blend(k={len(germs)},r={r:g},r0={r0:g})",
                        eval_fn, sampler)


def build_linear_motion(lambdas, centers, s: float, r: float) -> MotionFamily:
    """Spiral family z_i + exp((c/r) log lambda_i)(z - z_i) on |z - z_i| <= s.

    At c = r it restores the linear germs exactly; principal logarithm."""
    lams = np.asarray(lambdas, dtype=complex)
    zs = np.asarray(centers, dtype=complex)
    if np.any(lams == 0):
        raise DomainError("multipliers must be nonzero")
    if len(lams) != len(zs):
        raise DomainError("lambdas and centers must have equal length")
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if abs(zs[i] - zs[j]) <= 2 * s:
                raise DomainError(f"closed s-disks at {zs[i]} and {zs[j]} overlap")
    logs = np.log(lams)

    def eval_fn(c, z):
        zz = np.asarray(z, dtype=complex)
        out = np.array(zz, dtype=complex)
        owned = np.zeros(zz.shape, dtype=bool)
        for z0, lg in zip(zs, logs):
            mine = np.abs(zz - z0) <= s * (1 + 1e-12)
            owned |= mine
            if mine.any():
                out[mine] = z0 + np.exp((c / r) * lg) * (zz[mine] - z0)
        if not owned.all():
            raise DomainError("point outside every base disk")
        return out if zz.shape else complex(out)

    def sampler(count, rng):
        which = rng.integers(0, len(zs), count)
        rad = s * np.sqrt(rng.random(count))
        ang = np.exp(2j * math.pi * rng.random(count))
        return zs[which] + rad * ang

    return MotionFamily(f"linear-spiral(k={len(zs)},s={s:g},r={r:g})",
                        eval_fn, sampler)
