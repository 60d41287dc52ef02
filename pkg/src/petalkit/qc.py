"""Numerical quasiconformality on sampled maps.

Beltrami coefficients are estimated by second-order central differences with
boundary exclusion; the sup is an essential-sup surrogate over masked-in
interior cells and the attaining cell is always reported.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotQuasiconformal

DEGENERATE_TOL = 1e-14
QCGM_MAGIC = b"QCGM"
QCGM_VERSION = 1


@dataclass
class GridMap:
    """A complex map sampled on a square-spacing rectangular grid.

    values[iy, ix] is the sample at origin + h*(ix + 1j*iy). Masked-out cells
    (mask False) are ignored by every estimator; non-finite samples are
    masked out automatically.
    """

    origin: complex
    spacing: float
    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2:
            raise DomainError("values must be a 2-D array")
        if self.spacing <= 0:
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise DomainError("mask shape must match values shape")
        bad = ~np.isfinite(self.values.real) | ~np.isfinite(self.values.imag)
        if bad.any():
            self.mask = self.mask & ~bad

    @property
    def shape(self):
        return self.values.shape

    def points(self) -> np.ndarray:
        ny, nx = self.values.shape
        ix = np.arange(nx)
        iy = np.arange(ny)
        return self.origin + self.spacing * (ix[None, :] + 1j * iy[:, None])

    def mask_connected(self) -> bool:
        """True when the masked-in cells form one 4-connected component."""
        m = self.mask
        total = int(m.sum())
        if total == 0:
            return True
        seed = np.unravel_index(np.argmax(m), m.shape)
        seen = np.zeros_like(m)
        stack = [seed]
        seen[seed] = True
        while stack:
            y, x = stack.pop()
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < m.shape[0] and 0 <= xx < m.shape[1] \
                        and m[yy, xx] and not seen[yy, xx]:
                    seen[yy, xx] = True
                    stack.append((yy, xx))
        return int(seen.sum()) == total

    def save(self, path: str):
        """QCGM binary format: magic, version, origin, spacing, dims, then
        row-major complex64 pairs (masked-out cells stored as NaN)."""
        ny, nx = self.values.shape
        vals = self.values.astype(np.complex64).copy()
        vals[~self.mask] = complex(np.nan, np.nan)
        header = QCGM_MAGIC + struct.pack(
            "<IdddII", QCGM_VERSION, self.origin.real, self.origin.imag,
            self.spacing, nx, ny)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(vals.tobytes(order="C"))

    @classmethod
    def load(cls, path: str) -> "GridMap":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != QCGM_MAGIC:
                raise DomainError(f"not a QCGM file: bad magic {magic!r}")
            version, ore, oim, h, nx, ny = struct.unpack("<IdddII", fh.read(36))
            if version != QCGM_VERSION:
                raise DomainError(f"unsupported QCGM version {version}")
            data = np.frombuffer(fh.read(8 * nx * ny), dtype=np.complex64)
        values = data.reshape(ny, nx).astype(complex)
        finite = np.isfinite(values.real) & np.isfinite(values.imag)
        return cls(complex(ore, oim), h, values, finite)


def grid_from_function(fn, origin: complex, spacing: float, nx: int, ny: int,
                       mask_fn=None, threads: int | None = None) -> GridMap:
    """Sample fn on the grid; fn must accept a complex ndarray.

    threads > 1 splits rows across a thread pool (numpy releases the GIL);
    defaults to the PETALKIT_THREADS environment cap or 1.
    """
    gm = GridMap(origin, spacing, np.zeros((ny, nx), dtype=complex))
    pts = gm.points()
    mask = np.ones((ny, nx), dtype=bool) if mask_fn is None else \
        np.asarray(mask_fn(pts), dtype=bool)
    values = np.zeros((ny, nx), dtype=complex)
    nthreads = thread_cap() if threads is None else max(1, threads)
    if nthreads <= 1 or ny < 4 * nthreads:
        flat = pts[mask]
        if flat.size:
            values[mask] = fn(flat)
    else:
        from concurrent.futures import ThreadPoolExecutor

        def work(block):
            sel = mask[block]
            if sel.any():
                values[block][sel] = fn(pts[block][sel])

        blocks = [slice(i * ny // nthreads, (i + 1) * ny // nthreads)
                  for i in range(nthreads)]
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            list(pool.map(work, blocks))
    return GridMap(origin, spacing, values, mask)


def thread_cap() -> int:
    """Parallelism cap from the PETALKIT_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("PETALKIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling window: z = origin + spacing*(ix + 1j*iy)."""

    origin: complex
    spacing: float
    nx: int
    ny: int

    def points(self) -> np.ndarray:
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        return self.origin + self.spacing * (ix[None, :] + 1j * iy[:, None])

    @classmethod
    def from_box(cls, re_lo: float, re_hi: float, im_lo: float, im_hi: float,
                 nx: int, ny: int) -> "GridSpec":
        hx = (re_hi - re_lo) / max(nx - 1, 1)
        hy = (im_hi - im_lo) / max(ny - 1, 1)
        h = max(hx, hy)
        return cls(complex(re_lo, im_lo), h, nx, ny)


@dataclass
class MuField:
    """Beltrami coefficient samples on the interior of a GridMap."""

    grid: GridMap
    degenerate_count: int = 0

    @property
    def mu(self) -> np.ndarray:
        return self.grid.values

    @property
    def mask(self) -> np.ndarray:
        return self.grid.mask


def beltrami(gm: GridMap) -> MuField:
    """mu = H_zbar / H_z by central differences; boundary cells masked out.

    H_z = (dH/dx - i dH/dy)/2, H_zbar = (dH/dx + i dH/dy)/2. Cells where
    |H_z| < 1e-14 are flagged degenerate and excluded with a count.
    """
    v = gm.values
    m = gm.mask
    h = gm.spacing
    ny, nx = v.shape
    if ny < 3 or nx < 3:
        raise DomainError("grid too small for central differences")
    interior = np.zeros_like(m)
    interior[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
                            & m[:-2, 1:-1] & m[2:, 1:-1])
    dx = np.zeros_like(v)
    dy = np.zeros_like(v)
    dx[1:-1, 1:-1] = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * h)
    dy[1:-1, 1:-1] = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * h)
    hz = (dx - 1j * dy) / 2.0
    hzb = (dx + 1j * dy) / 2.0
    degenerate = interior & (np.abs(hz) < DEGENERATE_TOL)
    good = interior & ~degenerate
    mu = np.full_like(v, np.nan)
    np.divide(hzb, hz, out=mu, where=good)
    out = GridMap(gm.origin, h, mu, good)
    return MuField(out, int(degenerate.sum()))


@dataclass
class DilatationReport:
    """Headline dilatation numbers for a sampled Beltrami field."""

    mu_sup: float
    K: float
    argmax_cell: tuple
    argmax_point: complex
    histogram: list
    bin_edges: list
    grid_shape: tuple
    spacing: float
    cells: int
    degenerate_count: int = 0

    def to_json(self) -> dict:
        return {
            "mu_sup": self.mu_sup,
            "K": self.K,
            "argmax_cell": list(self.argmax_cell),
            "argmax_point": [self.argmax_point.real, self.argmax_point.imag],
            "histogram": self.histogram,
            "bin_edges": self.bin_edges,
            "grid_shape": list(self.grid_shape),
            "spacing": self.spacing,
            "cells": self.cells,
            "degenerate_count": self.degenerate_count,
        }


def dilatation(mu_field: MuField, bins: int = 20) -> DilatationReport:
    """K = (1 + sup|mu|)/(1 - sup|mu|) with the attaining cell reported."""
    absmu = np.abs(mu_field.mu)
    mask = mu_field.mask
    if not mask.any():
        raise DomainError("no masked-in interior cells to estimate from")
    vals = np.where(mask, absmu, -1.0)
    idx = np.unravel_index(np.argmax(vals), vals.shape)
    mu_sup = float(vals[idx])
    point = mu_field.grid.origin + mu_field.grid.spacing * (idx[1] + 1j * idx[0])
    if mu_sup >= 1.0:
        raise NotQuasiconformal(
            f"sup|mu| = {mu_sup} >= 1 at cell {idx} (z = {point})", cell=idx)
    hist, edges = np.histogram(absmu[mask], bins=bins, range=(0.0, 1.0))
    return DilatationReport(
        mu_sup=mu_sup,
        K=(1.0 + mu_sup) / (1.0 - mu_sup),
        argmax_cell=idx,
        argmax_point=complex(point),
        histogram=hist.tolist(),
        bin_edges=edges.tolist(),
        grid_shape=mu_field.mu.shape,
        spacing=mu_field.grid.spacing,
        cells=int(mask.sum()),
        degenerate_count=mu_field.degenerate_count,
    )


def measure_dilatation(fn, origin: complex, spacing: float, nx: int, ny: int,
                       mask_fn=None) -> DilatationReport:
    """Sample fn on a grid and report its dilatation."""
    return dilatation(beltrami(grid_from_function(fn, origin, spacing, nx, ny, mask_fn)))


def k_of_x(r: float, n: int, x: float) -> float:
    """Closed-form strip-extension bound (1+c)/(1-c), c = 1/(r (x-1)^{1/n})."""
    if x <= 1.0:
        raise DomainError(f"x must exceed 1, got {x}")
    c = 1.0 / (r * (x - 1.0) ** (1.0 / n))
    if c >= 1.0:
        raise DomainError(f"c(x) = {c} >= 1: x too small for radius r = {r}")
    return (1.0 + c) / (1.0 - c)


def k_of_tau(tau: float, tau0: float) -> float:
    """Closed-form transition bound with c(tau) = exp(-2 pi (tau - tau0))."""
    if tau <= tau0:
        raise DomainError(f"tau = {tau} must exceed tau0 = {tau0}")
    c = math.exp(-2.0 * math.pi * (tau - tau0))
    return (1.0 + c) / (1.0 - c)
