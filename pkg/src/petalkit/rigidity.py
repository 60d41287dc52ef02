"""Near-conformal conjugacies between topologically conjugate parabolic germs.

Attracting petals carry the canonical conjugacy psi = Psi_f o Phi_g read
through the sector charts. Across repelling petals the conjugacy is rebuilt
from boundary data: both germs are reduced to exact unit translations by
their own linearizers (the source through the repelling Abel coordinate, the
target through the repelling linearizer), the transition between the two
translation coordinates is fitted as a series in e^{2 pi i w} at each end,
a one-parameter family interpolates it down to the identity, and the strip
extension is a Coons/bilinear interpolation of the boundary data taken in
the translation frame. Postcomposing with the (conformal) repelling
linearizer returns to the chart plane without changing |mu|, so the measured
dilatation of the extension tracks the interpolation amplitude c(tau) and
decays as tau grows.

Left-half-plane machinery routes through mirror models: the inverse iterate
in the chart W = -w is again a right half-plane model, its forward orbit is
the original map's backward orbit, and for multiplicity two the exact
duality F^{-1}(V) = -(mirror)(-V) replaces Newton pullbacks.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HornFitError, Incompatible, SeamError
from .fatou import AbelMap, Linearizer, abel_extended, linearizer_extended
from .germ import LinearMap, ParabolicData, classify_parabolic, normalize_leading
from .petal import HalfPlaneMap, PetalChart, conjugated_map, coordinate_change
from .qc import DilatationReport, GridMap, beltrami, dilatation

TWO_PI_I = 2j * math.pi
HORN_FIT_TOL = 1e-6
SEAM_TOL = 1e-6


@dataclass
class CompatibilityReport:
    lam_f: complex
    lam_g: complex
    n_f: int
    n_g: int
    q: int
    passed: bool

    def to_json(self):
        return {"lambda_f": [self.lam_f.real, self.lam_f.imag],
                "lambda_g": [self.lam_g.real, self.lam_g.imag],
                "n_f": self.n_f, "n_g": self.n_g, "q": self.q,
                "passed": self.passed}


def check_compatibility(f: ParabolicData, g: ParabolicData) -> CompatibilityReport:
    """Common multiplier and multiplicity: the implementable necessary
    conditions for topological conjugacy."""
    if abs(f.lam - g.lam) > 1e-10:
        raise Incompatible(
            f"multipliers differ: {f.lam} vs {g.lam}", field="lambda")
    if f.n != g.n:
        raise Incompatible(
            f"multiplicity exponents differ: {f.n} vs {g.n}", field="n")
    return CompatibilityReport(f.lam, g.lam, f.n, g.n, f.q, True)


class MirrorModel(HalfPlaneMap):
    """Right half-plane model of the inverse iterate in the chart W = -w.

    Evaluates by its own eta series where certified and falls back to a
    Newton solve through the forward model below the series floor, so the
    shallow strip region stays usable. For n = 1 the pullback step is the
    exact duality -forward(-W)."""

    def __init__(self, eta_coeffs, n, tau, r_eta, chart, forward: HalfPlaneMap):
        super().__init__(eta_coeffs, n, tau, r_eta, chart)
        self.forward = forward
        self.series_floor = 1.02 * self.r_eta ** (-self.n)

    @property
    def min_abs_w(self) -> float:
        # the Newton fallback extends validity down to the forward model's floor
        return min(self.series_floor, 1.02 * self.forward.r_eta ** (-self.forward.n))

    def _fallback(self, w: np.ndarray) -> np.ndarray:
        """eta-check values via F(v) = -w: mirror(W) = -F^{-1}(-W)."""
        from .fatou import _newton_invert
        v = _newton_invert(self.forward, -w, 1e-13, 60, seed=-w - 1.0)
        return (-v) - w - 1.0

    def advance(self, w, ncoeff=None):
        absw = np.abs(w)
        if np.all(absw >= self.series_floor):
            return super().advance(w, ncoeff)
        e = np.empty_like(w)
        ok = absw >= self.series_floor
        if ok.any():
            e[ok] = self.eta(self.xi(w[ok]), ncoeff)
        e[~ok] = self._fallback(w[~ok])
        return w + 1.0 + e, e

    def __call__(self, w, ncoeff=None):
        ww = np.asarray(w, dtype=complex)
        out, _ = self.advance(np.atleast_1d(ww).ravel(), ncoeff)
        return out.reshape(ww.shape) if ww.shape else complex(out[0])

    def derivative(self, w):
        ww = np.atleast_1d(np.asarray(w, dtype=complex)).ravel()
        out = np.empty_like(ww)
        ok = np.abs(ww) >= self.series_floor
        if ok.any():
            out[ok] = super().derivative(ww[ok])
        if (~ok).any():
            from .fatou import _newton_invert
            v = _newton_invert(self.forward, -ww[~ok], 1e-13, 60, seed=-ww[~ok] - 1.0)
            out[~ok] = 1.0 / np.asarray(self.forward.derivative(v))
        shape = np.asarray(w, dtype=complex).shape
        return out.reshape(shape) if shape else complex(out[0])

    def scalar_advance(self, w: complex):
        if abs(w) < self.series_floor:
            nxt, e = self.advance(np.array([w], dtype=complex))
            return complex(nxt[0]), complex(e[0])
        return super().scalar_advance(w)


class GermMachine:
    """Charts, models, Abel maps and linearizers for one normalized germ."""

    def __init__(self, pd: ParabolicData, tau: float | None = None,
                 tau_mirror: float | None = None):
        if abs(pd.lam - 1.0) > 1e-10:
            raise DomainError("GermMachine expects a unit-multiplier classification")
        self.pd = pd
        self.n = pd.n
        self.att_charts = [coordinate_change(pd, b, "attracting", tau)
                           for b in range(pd.n)]
        self.att_models = [conjugated_map(pd, c) for c in self.att_charts]
        rep_charts = [coordinate_change(pd, b, "repelling", tau_mirror)
                      for b in range(pd.n)]
        self.rep_charts = rep_charts
        self.rep_models = []
        for b, c in enumerate(rep_charts):
            base = conjugated_map(pd, c)
            fwd = self.att_models[b % pd.n]
            self.rep_models.append(
                MirrorModel(base.eta_coeffs, base.n, base.tau, base.r_eta, c, fwd))
        if pd.n == 1:
            # exact mirror duality provides pullbacks both ways
            rep = self.rep_models[0]
            att = self.att_models[0]
            att.pullback = lambda v: -np.asarray(rep(-np.asarray(v, dtype=complex)))
            rep.pullback = lambda v: -np.asarray(att(-np.asarray(v, dtype=complex)))
        self.att_abel = [AbelMap(m) for m in self.att_models]
        self.rep_abel = [AbelMap(m) for m in self.rep_models]

    # -- attracting-plane operations ----------------------------------------

    def abel_att(self, w, b: int = 0, tol: float = 1e-8):
        return abel_extended(self.att_models[b], w, tol, abel_map=self.att_abel[b])

    def psi_att(self, x, b: int = 0, tol: float = 1e-8):
        """Solve Phi_att(v) = x - tau' (continued left by pullback)."""
        return linearizer_extended(self.att_models[b], x, tol,
                                   abel_map=self.att_abel[b])

    # -- repelling (left-plane) coordinates, through the mirror -------------

    def abel_rep(self, w, b: int = 0, tol: float = 1e-8):
        """Translation coordinate on the left region, ~ w, equivariant
        A(F(w)) = A(w) + 1."""
        mirror = self.rep_abel[b]
        val = abel_extended(self.rep_models[b], -np.asarray(w, dtype=complex),
                            tol, abel_map=mirror)
        return -(np.asarray(val) + mirror.tau_prime)

    def psi_rep(self, x, b: int = 0, tol: float = 1e-8):
        """Inverse of abel_rep: the repelling linearizer in the chart plane."""
        mirror = self.rep_abel[b]
        # abel_rep(P) = x  <=>  Phi_mirror(-P) = -x - tau'
        v = linearizer_extended(self.rep_models[b], -np.asarray(x, dtype=complex),
                                tol, abel_map=mirror)
        return -np.asarray(v)

    def pullback_w(self, v, b: int = 0):
        """One backward step of the iterate in the attracting plane."""
        return -np.asarray(self.rep_models[b](-np.asarray(v, dtype=complex)))


def _exp_series(coeffs: np.ndarray, terms: int) -> np.ndarray:
    """Power-series exponential exp(sum c_k x^k), x-coefficients 0..terms."""
    p = np.zeros(terms + 1, dtype=complex)
    for k, c in enumerate(coeffs, start=1):
        if k <= terms:
            p[k] = c
    e = np.zeros(terms + 1, dtype=complex)
    e[0] = 1.0
    for m in range(1, terms + 1):
        acc = 0.0j
        for j in range(1, m + 1):
            acc += j * p[j] * e[m - j]
        e[m] = acc / m
    return e


@dataclass
class HornMap:
    """Transition between the repelling and attracting translation frames,
    fitted at both ends of the cylinder.

    gamma0/gammaInf are the lifted (additive) coefficients in the covering
    variable; c_up/c_down the per-end recentering constants. theta0/thetaInf
    expose the multiplicative series with leading coefficient 1."""

    gamma0: np.ndarray
    gammaInf: np.ndarray
    c_up: complex
    c_down: complex
    a: float
    tau0: float
    fit_residual0: float
    fit_residualInf: float
    branch: int = 0

    @property
    def theta0(self) -> np.ndarray:
        return _exp_series(TWO_PI_I * self.gamma0, len(self.gamma0) + 1)

    @property
    def thetaInf(self) -> np.ndarray:
        return _exp_series(TWO_PI_I * self.gammaInf, len(self.gammaInf) + 1)

    def to_json(self):
        return {
            "tau0": self.tau0,
            "a": self.a,
            "branch": self.branch,
            "c_up": [self.c_up.real, self.c_up.imag],
            "c_down": [self.c_down.real, self.c_down.imag],
            "theta0": [[c.real, c.imag] for c in self.theta0],
            "thetaInf": [[c.real, c.imag] for c in self.thetaInf],
            "fit_residual0": self.fit_residual0,
            "fit_residualInf": self.fit_residualInf,
        }


@dataclass
class ConjugacyPatch:
    """One petal's piece of the conjugacy, with its measurements."""

    kind: str
    chart_g: PetalChart
    chart_f: PetalChart
    map_norm: callable = field(repr=False)
    domain_norm: callable = field(repr=False)
    transport_f: LinearMap = None
    transport_g: LinearMap = None
    residual: float = None
    dilatation: DilatationReport = None
    meta: dict = field(default_factory=dict)

    def __call__(self, z):
        """Conjugacy in the original (pre-normalization) coordinates."""
        zz = np.asarray(z, dtype=complex)
        zn = self.transport_g.inverse(zz) if self.transport_g else zz
        out = self.map_norm(zn)
        return self.transport_f(out) if self.transport_f else out

    def domain(self, z):
        zz = np.asarray(z, dtype=complex)
        zn = self.transport_g.inverse(zz) if self.transport_g else zz
        return self.domain_norm(zn)


class RigidityPipeline:
    """Shared machinery for one compatible pair of parabolic germs.

    Works on the unit-multiplier normal forms; q > 1 inputs are reduced to
    their q-th iterates and the q-equivariance of the assembled conjugacy is
    measured, not enforced.
    """

    def __init__(self, f: ParabolicData, g: ParabolicData,
                 tau: float | None = None, tol_att: float = 1e-8,
                 tol_rep: float = 1e-7):
        check_compatibility(f, g)
        self.q = f.q
        f_work = f if f.q == 1 else classify_parabolic(f.fq)
        g_work = g if g.q == 1 else classify_parabolic(g.fq)
        self.pd_f, self.L_f = normalize_leading(f_work)
        self.pd_g, self.L_g = normalize_leading(g_work)
        self.n = self.pd_f.n
        self.tol_att = tol_att
        self.tol_rep = tol_rep
        # common tau for both germs' charts, per kind
        taus = [coordinate_change(pd, 0, "attracting").tau
                for pd in (self.pd_f, self.pd_g)]
        taus_m = [coordinate_change(pd, 0, "repelling").tau
                  for pd in (self.pd_f, self.pd_g)]
        tau_att = tau or max(taus)
        tau_mir = max(taus_m)
        self.mf = GermMachine(self.pd_f, tau_att, tau_mir)
        self.mg = GermMachine(self.pd_g, tau_att, tau_mir)
        self.tau_att = tau_att
        self.tau0 = max(1.0 / self.mf.att_models[0].r_eta ** self.n,
                        1.0 / self.mg.att_models[0].r_eta ** self.n) + 0.5
        self.gauge_att = self.mf.att_abel[0].tau_prime
        self._horns: dict[int, HornMap] = {}

    # -- attracting side ------------------------------------------------------

    def psi_attracting_w(self, w, b: int = 0, kappa: complex = 0.0):
        """The attracting conjugacy at the chart level (w-plane to w-plane)."""
        s = self.mg.abel_att(w, b, self.tol_att) + self.gauge_att + kappa
        return self.mf.psi_att(s, b, self.tol_att)

    def attracting_conjugacy(self, i: int = 0, kappa: complex = 0.0,
                             grid_n: int = 40) -> ConjugacyPatch:
        """psi_i on attracting petal i: measured residual and Beltrami field."""
        cg = self.mg.att_charts[i]
        cf = self.mf.att_charts[i]
        tau = cg.tau

        def map_norm(z):
            w = cg.forward(z)
            return cf.inverse(self.psi_attracting_w(w, i, kappa))

        def domain_norm(z):
            w = np.asarray(cg.forward(z))
            return (w.real + np.abs(w.imag) / 2.0 > tau) & (np.abs(w) >= tau)

        # measurement grid: the image of a w-rectangle under the chart
        rect = (np.linspace(tau + 1, tau + 5, 8)[None, :]
                + 1j * np.linspace(-2, 2, 8)[:, None]).ravel()
        zc = cg.inverse(rect)
        lo, hi = zc.real.min(), zc.real.max()
        lo_i, hi_i = zc.imag.min(), zc.imag.max()
        pad_r = 0.1 * (hi - lo)
        pad_i = 0.1 * (hi_i - lo_i)
        h = max(hi - lo + 2 * pad_r, hi_i - lo_i + 2 * pad_i) / (grid_n - 1)
        origin = complex(lo - pad_r, lo_i - pad_i)

        def mask_fn(z):
            w = np.asarray(cg.forward(z))
            return (w.real > tau + 0.5) & (w.real < tau + 6) & (np.abs(w.imag) < 3)

        pts = origin + h * (np.arange(grid_n)[None, :] + 1j * np.arange(grid_n)[:, None])
        mask = mask_fn(pts)
        values = np.full(pts.shape, np.nan, dtype=complex)
        if mask.any():
            values[mask] = map_norm(pts[mask])
        gm = GridMap(origin, h, values, mask)
        rep = dilatation(beltrami(gm))

        rng = np.random.default_rng(11)
        wsamp = (tau + 1 + 4 * rng.random(200)) + 1j * (4 * rng.random(200) - 2)
        zsamp = cg.inverse(wsamp)
        lhs = self.pd_f.fq(map_norm(zsamp))
        rhs = map_norm(self.pd_g.fq(zsamp))
        resid = float(np.abs(lhs - rhs).max())
        return ConjugacyPatch("attracting", cg, cf, map_norm, domain_norm,
                              self.L_f, self.L_g, resid, rep,
                              {"branch": i, "kappa": [kappa.real, kappa.imag]
                               if isinstance(kappa, complex) else [kappa, 0.0]})

    # -- the transition fit ---------------------------------------------------

    def transition(self, w_tilde, upper: bool, b: int = 0):
        """T = A_f^rep o psi_att o Psi_g^rep in the translation frames."""
        tol = self.tol_rep
        att_branch = (b % self.n) if upper else ((b - 1) % self.n)
        P = self.mg.psi_rep(w_tilde, b, tol)
        s = self.mg.abel_att(P, att_branch, tol) + self.gauge_att
        V = self.mf.psi_att(s, att_branch, tol)
        return self.mf.abel_rep(V, b, tol)

    def horn_map(self, i: int = 0, tau: float | None = None,
                 n_samples: int = 128, n_coeffs: int = 12) -> HornMap:
        """Fit the two-end transition series on circles above/below tau0.

        i indexes the repelling petal between attracting petals i and i+1;
        the mirror branch is i+1 mod n."""
        if tau is not None and tau <= self.tau0:
            raise DomainError(f"tau = {tau} must exceed tau0 = {self.tau0}")
        b = (i + 1) % self.n
        if b in self._horns:
            return self._horns[b]
        heights = (self.tau0 + 1.0, self.tau0 + 1.5)
        res = {}
        for upper in (True, False):
            sgn = 1.0 if upper else -1.0
            ws = np.concatenate([
                np.arange(n_samples) / n_samples - 0.5 + 1j * sgn * h
                for h in heights])
            T = np.asarray(self.transition(ws, upper, b))
            dev = T - ws
            var = np.exp(TWO_PI_I * ws) if upper else np.exp(-TWO_PI_I * ws)
            cols = [np.ones_like(var)] + [var ** k for k in range(1, n_coeffs + 1)]
            A = np.stack(cols, axis=1)
            coef, *_ = np.linalg.lstsq(A, dev, rcond=1e-10)
            fit = A @ coef
            resid = float(np.abs(dev - fit).max())
            res[upper] = (complex(coef[0]), coef[1:], resid)
        r0, rInf = res[True][2], res[False][2]
        if max(r0, rInf) > HORN_FIT_TOL:
            raise HornFitError(
                f"transition fit residuals ({r0:.2e}, {rInf:.2e}) exceed "
                f"{HORN_FIT_TOL}: tau0 too small")
        horn = HornMap(res[True][1], res[False][1], res[True][0], res[False][0],
                       math.exp(-2 * math.pi * self.tau0), self.tau0, r0, rInf,
                       branch=b)
        self._horns[b] = horn
        return horn

    # -- the repelling extension ----------------------------------------------

    def _lift_family(self, horn: HornMap, tau: float):
        """Boundary family in the translation frame on |Im w| >= tau.

        D(c, w) = (c/c(tau)) c_end + sum gamma_k (c/c(tau))^k cover^k, with
        cover = e^{2 pi i w} above and e^{-2 pi i w} below; periodic in Re w,
        identity at c = 0, the fitted transition at c = c(tau)."""
        c_tau = math.exp(-2 * math.pi * (tau - self.tau0))

        def D(c, w):
            ww = np.asarray(w, dtype=complex)
            upper = ww.imag >= 0
            out = np.zeros_like(ww)
            ratio = c / c_tau
            for mask, cend, gam, sgn in (
                    (upper, horn.c_up, horn.gamma0, 1.0),
                    (~upper, horn.c_down, horn.gammaInf, -1.0)):
                if not np.any(mask):
                    continue
                var = np.exp(sgn * TWO_PI_I * ww[mask])
                acc = np.zeros_like(var)
                for k in range(len(gam), 0, -1):
                    acc = var * ratio * (gam[k - 1] + acc)
                out[mask] = ratio * cend + acc
            return out

        return D, c_tau

    def repelling_extension(self, i: int = 0, tau: float = None,
                            grid_n: int = 71, horn: HornMap | None = None,
                            c_value: float | None = None) -> ConjugacyPatch:
        """Conjugacy across repelling petal i, built on the strips
        Re w_tilde <= -tau + 1 and measured on a chart-plane grid."""
        if tau is None:
            tau = self.tau0 + 2.0
        if tau <= self.tau0:
            raise DomainError(f"tau = {tau} must exceed tau0 = {self.tau0}")
        horn = horn or self.horn_map(i)
        b = horn.branch
        D, c_tau = self._lift_family(horn, tau)
        c_used = c_tau if c_value is None else c_value

        def h_inner(w):
            return np.asarray(w, dtype=complex) + D(c_used, w)

        corner_hi = h_inner(np.array([complex(-tau, tau)]))[0]
        corner_lo = h_inner(np.array([complex(-tau, -tau)]))[0]

        def H_inner(w):
            """Boundary family on |Im| >= tau, Coons blend on the rectangle."""
            ww = np.asarray(w, dtype=complex)
            out = np.empty_like(ww)
            high = np.abs(ww.imag) >= tau
            if high.any():
                out[high] = h_inner(ww[high])
            rect = ~high
            if rect.any():
                wr = ww[rect]
                s = wr.real + tau            # in [0, 1]
                t = (wr.imag + tau) / (2 * tau)
                left_edge = (1 - t) * corner_lo + t * corner_hi
                top = h_inner(wr.real + 1j * tau)
                bot = h_inner(wr.real - 1j * tau)
                p00, p01 = corner_lo, corner_hi
                p10, p11 = corner_lo + 1.0, corner_hi + 1.0
                out[rect] = ((1 - s) * left_edge + s * (left_edge + 1.0)
                             + (1 - t) * bot + t * top
                             - ((1 - s) * (1 - t) * p00 + s * (1 - t) * p10
                                + (1 - s) * t * p01 + s * t * p11))
            return out

        def psi_w(w):
            """Chart-plane conjugacy on Re w_tilde <= -tau + 1."""
            ww = np.atleast_1d(np.asarray(w, dtype=complex)).ravel()
            wt = np.asarray(self.mg.abel_rep(ww, b, self.tol_rep))
            m = np.ceil(-tau - wt.real - 1e-12).astype(np.int64)
            if np.any(m < 0):
                raise DomainError("point right of the repelling strips")
            inner = H_inner(wt + m)
            V = np.asarray(self.mf.psi_rep(inner, b, self.tol_rep),
                           dtype=complex).copy()
            remaining = m.copy()
            while (remaining > 0).any():
                act = remaining > 0
                V[act] = np.asarray(self.mf.pullback_w(V[act], b))
                remaining[act] -= 1
            shape = np.asarray(w, dtype=complex).shape
            return V.reshape(shape) if shape else complex(V[0])

        cg = self.mg.rep_charts[b]
        cf = self.mf.rep_charts[b]

        def map_norm(z):
            w = -np.asarray(cg.forward(z))  # mirror chart to attracting plane
            return cf.inverse(-np.asarray(psi_w(w)))

        def domain_norm(z):
            w = -np.asarray(cg.forward(z))
            return (w.real <= -tau + 0.9) & (np.abs(w.imag) <= tau)

        # seam check: F(H(v)) = H(v+1) across Re w_tilde = -tau
        ts = np.linspace(-tau * 0.95, tau * 0.95, 41)
        seam_pts = -tau + 1j * ts
        lhs = self.mf.psi_rep(H_inner(seam_pts + 1.0), b, self.tol_rep)
        rhs_raw = self.mf.psi_rep(H_inner(seam_pts), b, self.tol_rep)
        Fv = self.mf.att_models[b % self.n](np.asarray(rhs_raw))
        seam = float(np.abs(np.asarray(lhs) - Fv).max())
        if seam > SEAM_TOL:
            raise SeamError(f"seam mismatch {seam:.2e} across the fundamental "
                            f"segment exceeds {SEAM_TOL}")

        # measurement grid in the z-plane over the strip image
        wrect = (np.linspace(-tau - 2.5, -tau + 0.85, 10)[None, :]
                 + 1j * np.linspace(-0.95 * tau, 0.95 * tau, 10)[:, None]).ravel()
        zc = np.asarray(cg.inverse(-wrect))
        lo, hi = zc.real.min(), zc.real.max()
        lo_i, hi_i = zc.imag.min(), zc.imag.max()
        pad = 0.08 * max(hi - lo, hi_i - lo_i)
        h = (max(hi - lo, hi_i - lo_i) + 2 * pad) / (grid_n - 1)
        origin = complex(lo - pad, lo_i - pad)
        pts = origin + h * (np.arange(grid_n)[None, :]
                            + 1j * np.arange(grid_n)[:, None])
        u = pts - cg.center
        wpts = np.full(pts.shape, np.nan, dtype=complex)
        nz = u != 0
        wpts[nz] = -(cg.d / u[nz] ** cg.n)
        mask = nz & (wpts.real <= -tau + 0.8) & (wpts.real >= -tau - 2.6) \
            & (np.abs(wpts.imag) <= 0.96 * tau)
        values = np.full(pts.shape, np.nan, dtype=complex)
        if mask.any():
            values[mask] = map_norm(pts[mask])
        rep = dilatation(beltrami(GridMap(origin, h, values, mask)))

        # conjugacy residual: f(psi(z)) vs psi(g(z)) on interior samples
        rng = np.random.default_rng(5)
        wres = (-tau - 2.2 + 1.6 * rng.random(200)) \
            + 1j * (0.9 * tau * (2 * rng.random(200) - 1))
        zres = np.asarray(cg.inverse(-wres))
        lhs = self.pd_f.fq(map_norm(zres))
        rhs = map_norm(self.pd_g.fq(zres))
        resid = float(np.abs(lhs - rhs).max())
        return ConjugacyPatch("repelling", cg, cf, map_norm, domain_norm,
                              self.L_f, self.L_g, resid, rep,
                              {"tau": tau, "c": c_used, "seam": seam,
                               "branch": b, "psi_w": psi_w})


# -- module-level operations --------------------------------------------------


def attracting_conjugacy(f: ParabolicData, g: ParabolicData, i: int = 0,
                         **kwargs) -> ConjugacyPatch:
    return RigidityPipeline(f, g).attracting_conjugacy(i, **kwargs)


def horn_map(f: ParabolicData, g: ParabolicData, i: int = 0,
             tau: float | None = None) -> HornMap:
    return RigidityPipeline(f, g).horn_map(i, tau)


def repelling_extension(f: ParabolicData, g: ParabolicData, i: int = 0,
                        tau: float | None = None, **kwargs) -> ConjugacyPatch:
    return RigidityPipeline(f, g).repelling_extension(i, tau, **kwargs)


@dataclass
class RigidityRow:
    tau: float
    K: float = None
    mu_sup: float = None
    residual: float = None
    radius: float = None
    error: str = None

    def to_json(self):
        return {"tau": self.tau, "K": self.K, "mu_sup": self.mu_sup,
                "residual": self.residual, "radius": self.radius,
                "error": self.error}


@dataclass
class RigidityTable:
    rows: list
    attracting_residual: float
    attracting_K: float
    decreasing: bool
    final_K: float
    passed: bool
    q: int = 1
    q_equivariance: float = None

    def to_json(self):
        return {"rows": [r.to_json() for r in self.rows],
                "attracting_residual": self.attracting_residual,
                "attracting_K": self.attracting_K,
                "decreasing": self.decreasing, "final_K": self.final_K,
                "passed": self.passed, "q": self.q,
                "q_equivariance": self.q_equivariance}


def rigidity_curve(f: ParabolicData, g: ParabolicData, taus,
                   pipeline: RigidityPipeline | None = None,
                   final_K_target: float = 1.05) -> RigidityTable:
    """Per-tau measured dilatation and conjugacy residual of the assembled
    piecewise conjugacy; verdict requires strictly decreasing K with the
    final K under the target. Patch failures abort their row only."""
    pipe = pipeline or RigidityPipeline(f, g)
    att = [pipe.attracting_conjugacy(i) for i in range(pipe.n)]
    att_resid = max(p.residual for p in att)
    att_K = max(p.dilatation.K for p in att)
    rows = []
    horn = None
    for tau in taus:
        try:
            horn = horn or pipe.horn_map(0)
            patch = pipe.repelling_extension(0, tau, horn=horn)
            K = max(patch.dilatation.K, att_K)
            resid = max(patch.residual, att_resid)
            radius = (abs(pipe.mf.att_charts[0].d) / tau) ** (1.0 / pipe.n)
            rows.append(RigidityRow(tau, K, patch.dilatation.mu_sup, resid, radius))
        except Exception as exc:  # row-level failure, table continues
            rows.append(RigidityRow(tau, error=f"{type(exc).__name__}: {exc}"))
    ks = [r.K for r in rows if r.K is not None]
    decreasing = len(ks) == len(rows) and all(a > b for a, b in zip(ks, ks[1:]))
    final = ks[-1] if ks else float("inf")
    q_eq = None
    if pipe.q > 1:
        # measured (not enforced) equivariance of psi under the base germs
        patch = att[0]
        zs = patch.transport_g(pipe.mg.att_charts[0].inverse(
            pipe.tau_att + 2 + np.linspace(-1, 1, 32) * 1j))
        forig = f.germ if f.germ is not None else f.fq
        gorig = g.germ if g.germ is not None else g.fq
        q_eq = float(np.abs(forig(patch(zs)) - patch(gorig(zs))).max())
    passed = decreasing and final < final_K_target
    return RigidityTable(rows, att_resid, att_K, decreasing, final, passed,
                         pipe.q, q_eq)
