"""Planar electrostatics of the island/groundplane cavity.

A single Laplace solve with the island at unit potential gives, by Green's
reciprocity, the island charge induced by a unit charge anywhere in the gap:
``q_island = -q * phi(r)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import alias_charge_delta
from .rng import as_generator

GAP, ISLAND, GROUND = 0, 1, 2


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (max residual {residual:.3e})")
        self.residual = residual


@dataclass
class GeometryGrid:
    """Node grid with an electrode mask of shape ``(ny, nx)`` and pitch ``h`` (um).

    ``island_rect`` = (x0, y0, x1, y1) in um, when the island is a rectangle;
    it makes position sampling exact instead of cell-based.
    """

    mask: np.ndarray
    h: float
    island_rect: Optional[tuple] = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.mask.ndim != 2 or min(self.mask.shape) < 3:
            raise ValueError("mask must be a 2D array of at least 3x3 nodes")
        if not self.h > 0:
            raise ValueError("grid pitch must be positive")
        m = self.mask
        if not np.any(m == ISLAND):
            raise ValueError("geometry has no island nodes")
        edge = np.concatenate([m[0], m[-1], m[:, 0], m[:, -1]])
        if np.any(edge != GROUND):
            raise ValueError("the domain boundary must be ground")
        island = m == ISLAND
        ground = m == GROUND
        touching = (
            (island[1:, :] & ground[:-1, :]).any()
            or (island[:-1, :] & ground[1:, :]).any()
            or (island[:, 1:] & ground[:, :-1]).any()
            or (island[:, :-1] & ground[:, 1:]).any()
        )
        if touching:
            raise ValueError("island and ground must be separated by at least one gap cell")
        if not np.any(m == GAP):
            raise ValueError("geometry has no gap region")

    @property
    def ny(self) -> int:
        return self.mask.shape[0]

    @property
    def nx(self) -> int:
        return self.mask.shape[1]

    @property
    def width(self) -> float:
        return (self.nx - 1) * self.h

    @property
    def height(self) -> float:
        return (self.ny - 1) * self.h

    @classmethod
    def island_in_cavity(cls, island_w=40.0, island_h=180.0, gap=20.0, h=1.0):
        """Rectangular island centred in a rectangular groundplane cavity."""
        if min(island_w, island_h, gap) <= 0:
            raise ValueError("island size and gap must be positive")
        nx = int(round((island_w + 2 * gap) / h)) + 1
        ny = int(round((island_h + 2 * gap) / h)) + 1
        x = h * np.arange(nx)
        y = h * np.arange(ny)
        eps = 1e-9 * h
        in_x = (x >= gap - eps) & (x <= gap + island_w + eps)
        in_y = (y >= gap - eps) & (y <= gap + island_h + eps)
        mask = np.full((ny, nx), GAP, dtype=np.int8)
        mask[np.ix_(in_y, in_x)] = ISLAND
        mask[0, :] = mask[-1, :] = GROUND
        mask[:, 0] = mask[:, -1] = GROUND
        return cls(mask, h, island_rect=(gap, gap, gap + island_w, gap + island_h))

    def sample_positions(self, rng, n):
        """Uniform positions (x, y) in um over the gap region."""
        rng = as_generator(rng, "geometry")
        if self.island_rect is not None:
            x0, y0, x1, y1 = self.island_rect
            out = np.empty((0, 2))
            while len(out) < n:
                m = max(2 * (n - len(out)), 16)
                p = rng.uniform((0, 0), (self.width, self.height), size=(m, 2))
                inside = (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
                out = np.vstack([out, p[~inside]])
            return out[:n]
        jy, ix = np.nonzero(self.mask == GAP)
        pick = rng.integers(0, len(ix), size=n)
        jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * self.h
        p = np.column_stack([ix[pick] * self.h, jy[pick] * self.h]) + jitter
        return np.clip(p, 0.0, [self.width, self.height])


@dataclass
class PotentialField:
    grid: GeometryGrid
    phi: np.ndarray
    residual: float


def _laplace_system(grid: GeometryGrid):
    m = grid.mask
    unknown = m == GAP
    index = -np.ones(m.shape, dtype=np.int64)
    index[unknown] = np.arange(unknown.sum())
    jy, ix = np.nonzero(unknown)
    n = len(ix)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    rhs = np.zeros(n)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nj, ni = jy + dy, ix + dx
        kind = m[nj, ni]
        is_gap = kind == GAP
        rows.append(np.arange(n)[is_gap])
        cols.append(index[nj[is_gap], ni[is_gap]])
        vals.append(np.full(is_gap.sum(), -1.0))
        rhs += (kind == ISLAND).astype(float)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A, rhs, unknown


def _max_residual(phi, unknown):
    nb = 0.25 * (phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2])
    r = np.abs(phi[1:-1, 1:-1] - nb)[unknown[1:-1, 1:-1]]
    return float(r.max()) if r.size else 0.0


def solve_laplace(grid: GeometryGrid, tol: float = 1e-8, max_iter: int = 20) -> PotentialField:
    """Dirichlet Laplace solve: island at 1, ground at 0, harmonic in the gap.

    Sparse direct factorisation followed by iterative refinement until the
    max 5-point residual is at most ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A, rhs, unknown = _laplace_system(grid)
    solve = spla.factorized(A.tocsc())
    phi = np.where(grid.mask == ISLAND, 1.0, 0.0)
    u = solve(rhs)
    residual = np.inf
    for _ in range(max(1, max_iter)):
        phi[unknown] = u
        residual = _max_residual(phi, unknown)
        if residual <= tol:
            return PotentialField(grid, phi, residual)
        u = u + solve(rhs - A @ u)
    raise ConvergenceError(f"Laplace solve did not reach tol={tol:g} in {max_iter} iterations", residual)


def _bilinear(field: PotentialField, x, y):
    g = field.grid
    fx = np.clip(np.asarray(x, dtype=float) / g.h, 0, g.nx - 1)
    fy = np.clip(np.asarray(y, dtype=float) / g.h, 0, g.ny - 1)
    i0 = np.minimum(np.floor(fx).astype(int), g.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(int), g.ny - 2)
    tx, ty = fx - i0, fy - j0
    p = field.phi
    return (
        p[j0, i0] * (1 - tx) * (1 - ty)
        + p[j0, i0 + 1] * tx * (1 - ty)
        + p[j0 + 1, i0] * (1 - tx) * ty
        + p[j0 + 1, i0 + 1] * tx * ty
    )


def electrode_at(field: PotentialField, x, y):
    """Mask code at each position: GAP, ISLAND or GROUND."""
    g = field.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if g.island_rect is not None:
        x0, y0, x1, y1 = g.island_rect
        code = np.where((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1), ISLAND, GAP)
        outside = (x <= 0) | (y <= 0) | (x >= g.width) | (y >= g.height)
        return np.where(outside, GROUND, code).astype(np.int8)
    i = np.clip(np.rint(x / g.h).astype(int), 0, g.nx - 1)
    j = np.clip(np.rint(y / g.h).astype(int), 0, g.ny - 1)
    return g.mask[j, i]


def induced_charge(field: PotentialField, x, y, charge: float = 1.0, return_flags: bool = False):
    """Island charge (e) induced by ``charge`` at position (x, y) in um.

    Positions on an electrode return the boundary value (-charge on the
    island, 0 on ground); ``return_flags`` also returns a boolean array
    marking them.
    """
    phi = _bilinear(field, x, y)
    code = electrode_at(field, x, y)
    phi = np.where(code == ISLAND, 1.0, np.where(code == GROUND, 0.0, phi))
    q = -charge * phi
    if np.ndim(q) == 0:
        q = float(q)
    if return_flags:
        return q, code != GAP
    return q


class ImpingementSampler:
    """Draws induced island charges for +1e charges landing uniformly in the gap."""

    def __init__(self, field: PotentialField):
        self.field = field

    def __call__(self, rng, n):
        n = int(n)
        if n == 0:
            return np.empty(0)
        pos = self.field.grid.sample_positions(rng, n)
        return induced_charge(self.field, pos[:, 0], pos[:, 1])


@lru_cache(maxsize=4)
def _default_field(island_w=40.0, island_h=180.0, gap=20.0, h=1.0):
    return solve_laplace(GeometryGrid.island_in_cavity(island_w, island_h, gap, h))


def default_sampler(island_w=40.0, island_h=180.0, gap=20.0, h=1.0) -> ImpingementSampler:
    return ImpingementSampler(_default_field(island_w, island_h, gap, h))


@dataclass
class JumpSizeDistribution:
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def fraction_above(self, threshold: float = 0.1) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) > threshold))


def sample_jump_distribution(field: PotentialField, n_samples: int, polarity: str = "symmetric", seed=0):
    """Aliased induced-charge jumps for uniform impingement over the gap."""
    rng = as_generator(seed, "geometry")
    raw = ImpingementSampler(field)(rng, n_samples)
    if polarity == "symmetric":
        raw = raw * rng.choice(np.array([-1.0, 1.0]), size=len(raw))
    elif polarity == "negative":
        raw = -raw
    elif polarity != "positive":
        raise ValueError(f"unknown polarity {polarity!r}")
    g = field.grid
    meta = {
        "nx": g.nx,
        "ny": g.ny,
        "h_um": g.h,
        "island_rect_um": g.island_rect,
        "n_samples": int(n_samples),
        "polarity": polarity,
    }
    return JumpSizeDistribution(np.atleast_1d(alias_charge_delta(raw)), meta)


def rate_to_flux(jump_rate: float, area_cm2: float) -> float:
    """Impingement flux (per cm^2 s) giving ``jump_rate`` events/s on ``area_cm2``."""
    if jump_rate == 0:
        return 0.0
    if not area_cm2 > 0:
        raise ValueError("sensing area must be positive")
    return jump_rate / area_cm2


def flux_to_rate(flux: float, area_cm2: float) -> float:
    return flux * area_cm2


def area_from_rate(jump_rate: float, flux: float) -> float:
    if not flux > 0:
        raise ValueError("flux must be positive")
    return jump_rate / flux


def jump_probability(rate: float, interval: float) -> float:
    """Probability that a scan interval contains at least one event."""
    return float(-np.expm1(-rate * interval))


@dataclass
class HistogramModel:
    bin_centers: np.ndarray
    density: np.ndarray
    gaussian: np.ndarray
    tail: np.ndarray
    jump_weight: float
    gaussian_width: float
    n_scans: Optional[int] = None

    @property
    def bin_width(self) -> float:
        return float(self.bin_centers[1] - self.bin_centers[0])

    @property
    def counts(self) -> np.ndarray:
        n = 1 if self.n_scans is None else self.n_scans
        return n * self.density * self.bin_width


def _circular_gaussian(centers, width, bin_width):
    from scipy.special import ndtr

    lo = centers - bin_width / 2
    hi = centers + bin_width / 2
    mass = np.zeros_like(centers)
    for k in range(-3, 4):
        mass += ndtr((hi + k) / width) - ndtr((lo + k) / width)
    return mass / bin_width


def histogram_model(
    dist: JumpSizeDistribution,
    gaussian_width: float,
    jump_weight: float,
    n_bins: int = 100,
    n_scans: Optional[int] = None,
) -> HistogramModel:
    """Expected histogram of scan-to-scan charge changes on [-0.5, 0.5) e.

    A fraction ``1 - jump_weight`` of scans show only the Gaussian measurement
    spread; the rest add an aliased impingement jump, itself blurred by the
    same Gaussian (circular convolution, since changes live on a 1e circle).
    """
    if not gaussian_width > 0:
        raise ValueError("gaussian_width must be positive")
    if not 0 <= jump_weight <= 1:
        raise ValueError("jump_weight must lie in [0, 1]")
    edges = np.linspace(-0.5, 0.5, n_bins + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    bw = edges[1] - edges[0]
    gauss = _circular_gaussian(centers, gaussian_width, bw)
    if len(dist) and jump_weight > 0:
        hist, _ = np.histogram(dist.samples, bins=edges)
        raw_tail = hist / (len(dist) * bw)
        # kernel centred at index 0 for circular convolution
        kernel = _circular_gaussian((np.arange(n_bins) - n_bins // 2) * bw, gaussian_width, bw) * bw
        kernel = np.roll(kernel, -(n_bins // 2))
        tail = np.real(np.fft.ifft(np.fft.fft(raw_tail) * np.fft.fft(kernel)))
        tail = np.clip(tail, 0.0, None)
    else:
        tail = np.zeros(n_bins)
    density = (1 - jump_weight) * gauss + jump_weight * tail
    return HistogramModel(centers, density, gauss, tail, jump_weight, gaussian_width, n_scans)
