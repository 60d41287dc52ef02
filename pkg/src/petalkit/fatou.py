"""Fatou linearization on half-plane models.

The Abel map Phi is the Cauchy-certified limit of
Phi_m(w) = F^m(w) - F^m(tau'), accumulated as increment differences along the
two orbits and anchored at tau' = tau + 2 (Phi(tau') = 0). The raw limit
carries a gauge-slope error that is linear in Phi(w) with a coefficient
measurable from the anchor orbit itself (whose Abel values are the integers);
the sweep measures that slope at each stopping index and divides it out.
Without the correction the functional-equation residual plateaus near
|eta(xi_m)| ~ 1/m, orders of magnitude above the advertised tolerances.

The linearizer Psi inverts Phi by damped Newton with a finite-difference
derivative and a coarse-to-fine tolerance schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, InverseError
from .petal import HalfPlaneMap
from .qc import GridMap, GridSpec

DEFAULT_TOL = 1e-10
DEFAULT_M_MAX = 10 ** 6
ANCHOR_OFFSET = 2.0
CALIBRATION_POINTS = 8
STREAK_REQUIRED = 3
TRIM_TOL = 1e-16


class AbelMap:
    """Abel coordinate of a half-plane model, with a shared anchor orbit.

    The anchor trajectory and its eta values are cached and grown lazily;
    scalar queries are memoized with their error estimates.
    """

    def __init__(self, F: HalfPlaneMap, tau_prime: float | None = None,
                 m_max: int = DEFAULT_M_MAX):
        self.F = F
        self.tau_prime = float(F.tau + ANCHOR_OFFSET if tau_prime is None else tau_prime)
        self.m_max = m_max
        self._anchor_w = np.empty(1024, dtype=complex)
        self._anchor_eta = np.empty(1024, dtype=complex)
        self._anchor_w[0] = self.tau_prime
        self._anchor_len = 1  # number of valid anchor_w entries
        self._cache: dict[complex, tuple[complex, float]] = {}
        self._frozen = False

    def freeze(self):
        """Mark the cache read-only for concurrent readers."""
        self._frozen = True

    # -- anchor stream ------------------------------------------------------

    def _grow(self, upto: int):
        """Ensure anchor_w[0..upto] and anchor_eta[0..upto-1] are valid."""
        if upto < self._anchor_len:
            return
        size = len(self._anchor_w)
        if upto + 1 > size:
            newsize = max(upto + 1, 2 * size)
            self._anchor_w = np.resize(self._anchor_w, newsize)
            self._anchor_eta = np.resize(self._anchor_eta, newsize)
        k = self._anchor_len
        w = complex(self._anchor_w[k - 1])
        scalar = getattr(self.F, "scalar_advance", None)
        if scalar is not None:
            aw, ae = self._anchor_w, self._anchor_eta
            while k <= upto:
                w, eta = scalar(w)
                ae[k - 1] = eta
                aw[k] = w
                k += 1
        else:
            block = np.empty(1, dtype=complex)
            while k <= upto:
                block[0] = w
                nxt, eta = self.F.advance(block)
                self._anchor_eta[k - 1] = eta[0]
                w = complex(nxt[0])
                self._anchor_w[k] = w
                k += 1
        self._anchor_len = k

    def _slope(self, stops: np.ndarray) -> np.ndarray:
        """Gauge slope at each stopping index, fitted on the anchor orbit.

        Phi_m(F^j(tau')) = anchor_w[m+j] - anchor_w[m] should equal j; the
        least-squares slope of its deviation over j = 0..J measures the
        linear error coefficient at index m.
        """
        js = np.arange(CALIBRATION_POINTS + 1)
        self._grow(int(stops.max()) + CALIBRATION_POINTS + 1)
        base = self._anchor_w[stops]
        samples = self._anchor_w[stops[:, None] + js[None, :]] - base[:, None]
        dev = samples - js[None, :]
        return (dev * js[None, :]).sum(axis=1) / float((js * js).sum())

    # -- the sweep ----------------------------------------------------------

    def values(self, points, tol: float = DEFAULT_TOL,
               m_max: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized Abel values: returns (phi, err, stop_index).

        err is the last increment before the Cauchy criterion fired.
        """
        if tol < 1e-12:
            raise DomainError(f"tol must be >= 1e-12, got {tol}")
        m_cap = self.m_max if m_max is None else m_max
        pts = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
        npts = pts.size
        phi = pts - self.tau_prime
        out_phi = np.zeros(npts, dtype=complex)
        out_err = np.zeros(npts, dtype=float)
        out_stop = np.zeros(npts, dtype=np.int64)
        w = pts.copy()
        idx = np.arange(npts)
        streak = np.zeros(npts, dtype=np.int32)
        ximax = float(np.abs(self.F.xi(w)).max(initial=0.0))
        ncoeff = self.F.trim_count(ximax, TRIM_TOL)
        last_d = np.zeros(npts, dtype=float)
        m = 0
        while idx.size:
            if m >= m_cap:
                worst = idx[np.argmax(last_d[: idx.size])]
                raise ConvergenceError(
                    f"Abel iteration budget {m_cap} exhausted with "
                    f"{idx.size} unconverged points (worst at {pts[worst]}); "
                    "eta decays too slowly for tol",
                    tail=last_d[: idx.size][np.argsort(last_d[: idx.size])[-5:]].tolist(),
                )
            self._grow(m + 1)
            nxt, eta = self.F.advance(w, ncoeff)
            d = eta - self._anchor_eta[m]
            phi_active = phi[idx]
            phi_active += d
            phi[idx] = phi_active
            absd = np.abs(d)
            last_d[: idx.size] = absd
            small = absd < tol
            streak_active = np.where(small, streak[: idx.size] + 1, 0)
            streak[: idx.size] = streak_active
            m += 1
            done = streak_active >= STREAK_REQUIRED
            if done.any():
                sel = idx[done]
                out_phi[sel] = phi[sel]
                out_err[sel] = absd[done]
                out_stop[sel] = m
                keep = ~done
                idx = idx[keep]
                w = nxt[keep]
                streak[: idx.size] = streak_active[keep]
            else:
                w = nxt
        slope = self._slope(out_stop)
        out_phi = out_phi / (1.0 + slope)
        return out_phi, out_err, out_stop

    def value(self, w: complex, tol: float = DEFAULT_TOL) -> tuple[complex, float]:
        key = (complex(w), tol)
        if key in self._cache:
            return self._cache[key]
        phi, err, _ = self.values(np.array([w]), tol)
        result = (complex(phi[0]), float(err[0]))
        if not self._frozen:
            self._cache[key] = result
        return result


def abel(F: HalfPlaneMap, w, tol: float = DEFAULT_TOL,
         m_max: int | None = None, abel_map: AbelMap | None = None):
    """Abel value(s) on the right half-plane Re w >= tau.

    Returns (value, err) for a scalar w, or (values, errs) arrays.
    """
    ww = np.asarray(w, dtype=complex)
    if np.any(np.atleast_1d(ww).real < F.tau):
        raise DomainError(f"abel requires Re w >= tau = {F.tau}")
    am = abel_map or AbelMap(F)
    phi, err, _ = am.values(ww, tol, m_max)
    if ww.shape:
        return phi.reshape(ww.shape), err.reshape(ww.shape)
    return complex(phi[0]), float(err[0])


def abel_extended(F: HalfPlaneMap, w, tol: float = DEFAULT_TOL,
                  abel_map: AbelMap | None = None) -> np.ndarray:
    """Abel values continued left of the half-plane by forward push.

    Phi(w) = Phi(F^K(w)) - K once Re F^K(w) >= tau + 1/2. Every point of the
    push must stay above the eta validity floor |w| >= r_eta^{-n}; leaving it
    raises DomainError.
    """
    am = abel_map or AbelMap(F)
    ww = np.atleast_1d(np.asarray(w, dtype=complex)).ravel().copy()
    floor = 0.98 * F.min_abs_w
    if not np.all(np.abs(ww) >= floor):
        raise DomainError("point below the eta series validity radius")
    pushes = np.zeros(ww.size, dtype=np.int64)
    target = F.tau + 0.5
    for _ in range(int(4 * (F.tau + np.abs(ww).max()) + 32)):
        needs = ww.real < target
        if not needs.any():
            break
        ww[needs] = F(ww[needs])
        pushes[needs] += 1
        if not np.all(np.abs(ww[needs]) >= floor):
            raise DomainError("forward push left the eta validity region")
    else:
        raise DomainError("forward push failed to reach the half-plane")
    phi, _, _ = am.values(ww, tol)
    out = phi - pushes
    shape = np.asarray(w, dtype=complex).shape
    return out.reshape(shape) if shape else complex(out[0])


# -- inversion --------------------------------------------------------------


def _newton_invert(F: HalfPlaneMap, targets: np.ndarray, tol: float,
                   max_steps: int, seed: np.ndarray | None = None) -> np.ndarray:
    """Solve F(v) = target per point with residual-damped Newton."""
    t = np.atleast_1d(np.asarray(targets, dtype=complex)).ravel()
    v = (t - 1.0) if seed is None else np.atleast_1d(np.asarray(seed, dtype=complex)).ravel().copy()
    r = F(v) - t
    for _ in range(max_steps):
        done = np.abs(r) < tol
        if done.all():
            break
        dv = r / F.derivative(v)
        lam = np.ones(v.size)
        for _ in range(8):
            cand = v - lam * dv
            rc = F(cand) - t
            worse = (np.abs(rc) > np.abs(r)) & ~done
            if not worse.any():
                break
            lam[worse] *= 0.5
        improve = ~done
        v = np.where(improve, v - lam * dv, v)
        r = F(v) - t
    else:
        bad = np.abs(r) >= tol
        raise InverseError(
            f"Newton inversion failed for {int(bad.sum())} points after "
            f"{max_steps} steps (worst residual {np.abs(r).max():.3e}); "
            "target too close to the boundary"
        )
    return v


def inverse_map(F: HalfPlaneMap, w, tol: float = 1e-12, max_steps: int = 50):
    """The unique v in the half-plane with F(v) = w, |F(v)-w| < tol."""
    ww = np.asarray(w, dtype=complex)
    v = _newton_invert(F, ww, tol, max_steps)
    return v.reshape(ww.shape) if ww.shape else complex(v[0])


def inverse_orbit(F: HalfPlaneMap, w, steps: int, tol: float = 1e-12) -> list:
    """Backward orbit [F^{-1}(w), ..., F^{-steps}(w)]."""
    out = []
    cur = np.asarray(w, dtype=complex)
    for _ in range(steps):
        cur = inverse_map(F, cur, tol)
        out.append(cur)
    return out


# -- the linearizer ---------------------------------------------------------

FD_STEP = 1e-4


class Linearizer:
    """Inverse of the Abel map: Psi(w) solves Phi(Psi(w)) = w - tau''.

    Gauge tau'' = tau' so Psi(tau') = tau'. Newton runs a coarse-to-fine
    tolerance schedule, reusing one finite-difference derivative per phase.
    Targets deeper than tau + BASE_WIDTH are range-reduced through the
    functional equation, Psi(w) = F^j(Psi(w - j)), so the orbit length of
    the Abel sweep stays bounded.
    """

    BASE_WIDTH = 9.0

    def __init__(self, abel_map: AbelMap):
        self.abel = abel_map
        self.gauge = abel_map.tau_prime

    def solve(self, w, tol: float = DEFAULT_TOL, max_steps: int = 50):
        ww = np.asarray(w, dtype=complex)
        flat = np.atleast_1d(ww).ravel()
        F = self.abel.F
        depth = np.maximum(np.ceil(flat.real - (F.tau + self.BASE_WIDTH)), 0)
        depth = depth.astype(np.int64)
        targets = flat - depth - self.gauge
        v = targets + self.abel.tau_prime
        schedule = [t for t in (1e-4, 1e-6, 1e-8) if t > 3 * tol] + [tol]
        for phase_tol in schedule:
            deriv = None
            for _ in range(max_steps):
                if deriv is None:
                    stacked = np.concatenate([v, v + FD_STEP])
                    phi, _, _ = self.abel.values(stacked, phase_tol)
                    fval = phi[: v.size] - targets
                    deriv = (phi[v.size:] - phi[: v.size]) / FD_STEP
                else:
                    phi, _, _ = self.abel.values(v, phase_tol)
                    fval = phi - targets
                if np.abs(fval).max(initial=0.0) < phase_tol:
                    break
                v = v - fval / deriv
        remaining = depth.copy()
        while (remaining > 0).any():
            act = remaining > 0
            v[act] = F(v[act])
            remaining[act] -= 1
        out = v.reshape(ww.shape) if ww.shape else complex(v[0])
        return out


def linearizer(F: HalfPlaneMap, w, tol: float = DEFAULT_TOL,
               abel_map: AbelMap | None = None):
    """Psi(w) with F(Psi(w)) = Psi(w+1), |residual| < 10*tol on return."""
    am = abel_map or AbelMap(F)
    ww = np.asarray(w, dtype=complex)
    if np.any(np.atleast_1d(ww).real < F.tau):
        raise DomainError(f"linearizer requires Re w >= tau = {F.tau}")
    return Linearizer(am).solve(w, tol)


def linearizer_extended(F: HalfPlaneMap, w, tol: float = DEFAULT_TOL,
                        abel_map: AbelMap | None = None,
                        inverse_tol: float = 1e-12):
    """Psi continued left of the half-plane via Psi(w) = F^{-K}(Psi(w+K)).

    Uses F.pullback when the model provides an exact inverse step (mirror
    duality), damped Newton otherwise.
    """
    am = abel_map or AbelMap(F)
    lin = Linearizer(am)
    ww = np.asarray(w, dtype=complex)
    flat = np.atleast_1d(ww).ravel()
    K = np.maximum(np.ceil(F.tau + 1.0 - flat.real), 0).astype(np.int64)
    v = lin.solve(flat + K, tol)
    v = np.atleast_1d(np.asarray(v, dtype=complex)).ravel()
    pullback = getattr(F, "pullback", None)
    floor = 0.98 * F.min_abs_w
    remaining = K.copy()
    while (remaining > 0).any():
        act = remaining > 0
        if pullback is not None:
            v[act] = pullback(v[act])
        else:
            v[act] = _newton_invert(F, v[act], inverse_tol, 50, seed=v[act] - 1.0)
        if not np.all(np.abs(v[act]) >= floor):
            raise DomainError("pullback left the eta validity region")
        remaining[act] -= 1
    return v.reshape(ww.shape) if ww.shape else complex(v[0])


# -- strips and the explicit extension --------------------------------------


@dataclass
class StripExtension:
    """H(w) = w + t * eta((w-1)^{-1/n}), t = Re w - x on the strip S_x.

    Identity on Re w = x, the shifted boundary map on Re w = x+1, and the
    conjugation seam F(H(w)) = H(w+1) holds on Re w = x by construction.
    """

    F: HalfPlaneMap
    x: float

    def __call__(self, w):
        ww = np.asarray(w, dtype=complex)
        t = ww.real - self.x
        if np.any(t < -1e-9) or np.any(t > 1.0 + 1e-9):
            raise DomainError(f"point outside the strip S_{self.x}")
        t = np.clip(t, 0.0, 1.0)
        xi = (ww - 1.0) ** (-1.0 / self.F.n) if self.F.n > 1 else 1.0 / (ww - 1.0)
        out = ww + t * self.F.eta(xi)
        return out if out.shape else complex(out)


def strip_extension_Hx(F: HalfPlaneMap, x: float) -> StripExtension:
    if x < F.tau:
        raise DomainError(f"x = {x} must be >= tau = {F.tau}")
    return StripExtension(F, x)


@dataclass
class StripSystem:
    """Forward-orbit strip abscissae x_m = Re F^m(tau) and their extensions."""

    F: HalfPlaneMap
    x: np.ndarray = field(default=None)
    m: int = 0

    @classmethod
    def build(cls, F: HalfPlaneMap, m: int) -> "StripSystem":
        xs = np.empty(m + 1)
        w = complex(F.tau)
        xs[0] = F.tau
        for k in range(1, m + 1):
            w = complex(F(np.array([w]))[0])
            xs[k] = w.real
        return cls(F, xs, m)

    def extension(self, k: int) -> StripExtension:
        return strip_extension_Hx(self.F, float(self.x[k]))


def strip_pullback(F: HalfPlaneMap, m: int, spec: GridSpec,
                   tol: float = 1e-12) -> GridMap:
    """The m-th approximate linearizer psi_m sampled on the grid.

    On A_m the map is H_{x_m} o beta_m with beta_m(w) = w + x_m - tau - m;
    elsewhere psi_m(w) = F^{-i}(psi_m(w+i)) by Newton pullback (or forward
    iteration right of A_m). Cells whose pullback fails are masked out.
    """
    if m < 1:
        raise DomainError(f"strip_pullback needs m >= 1, got {m}")
    system = StripSystem.build(F, m)
    x_m = float(system.x[m])
    H = strip_extension_Hx(F, x_m)
    shift = x_m - F.tau - m
    pts = spec.points()
    values = np.full(pts.shape, np.nan, dtype=complex)
    mask = pts.real >= F.tau
    k_index = np.floor(pts.real - F.tau).astype(np.int64)
    for k in np.unique(k_index[mask]):
        sel = mask & (k_index == k)
        w = pts[sel]
        i = m - int(k)
        y = H(w + i + shift)
        try:
            if i > 0:
                for _ in range(i):
                    y = _newton_invert(F, y, tol, 50, seed=y - 1.0)
            else:
                for _ in range(-i):
                    y = F(y)
        except InverseError:
            mask[sel] = False
            continue
        values[sel] = y
    return GridMap(spec.origin, spec.spacing, values, mask)
