"""Charge-scan fitting, charge traces, jump detection and frequency-noise maps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import TWO_PI, DeviceParams, alias_charge_delta

NU_MIN = 0.05
N_REFINE = 2
SIGMA_FLOOR = 1e-15
VAR_FLOOR = 0.01
_BOUNDS = ([-np.inf, 0.0, 0.0], [np.inf, 2.0, 2.0])
_X_SCALE = np.array([0.05, 0.1, 0.1])


@dataclass
class ChargeFit:
    """Fit of one scan. ``delta_e`` is the offset in e, aliased to [-0.5, 0.5)."""

    delta_e: float
    sigma_e: float
    d_hat: float
    nu_hat: float
    residual_norm: float
    converged: bool
    t: float = 0.0


def _model(x, delta_e, d, nu):
    return 0.5 * (d + nu * np.cos(np.pi * np.cos(TWO_PI * (x + 0.5 * delta_e))))


def _jac(x, delta_e, d, nu):
    theta = TWO_PI * (x + 0.5 * delta_e)
    u = np.pi * np.cos(theta)
    J = np.empty((len(x), 3))
    J[:, 0] = 0.5 * nu * np.pi**2 * np.sin(u) * np.sin(theta)
    J[:, 1] = 0.5
    J[:, 2] = 0.5 * np.cos(u)
    return J


def _linear_dnu(x, y, delta_e):
    """Closed-form (d, nu) for fixed offsets, clipped into the bounds.

    ``delta_e`` may be an array; returns arrays ``(d, nu, ssr)`` then.
    """
    de = np.atleast_1d(np.asarray(delta_e, dtype=float))
    c = np.cos(np.pi * np.cos(TWO_PI * (x[None, :] + 0.5 * de[:, None])))
    # normal equations of y = 0.5 * (d + nu * c) per offset
    n = x.size
    sc, scc = c.sum(1), (c * c).sum(1)
    sy, scy = y.sum(), (c * y).sum(1)
    det = n * scc - sc * sc
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = np.where(det > 0, 2.0 * (n * scy - sc * sy) / det, 0.0)
    d = 2.0 * (sy - 0.5 * nu * sc) / n
    d, nu = np.clip(d, 0.0, 2.0), np.clip(nu, 0.0, 2.0)
    ssr = ((0.5 * (d[:, None] + nu[:, None] * c) - y[None, :]) ** 2).sum(1)
    return d, nu, ssr


def _solve(x, y, w, p0):
    """Weighted LM; falls back to the bounded solver if LM leaves the bounds."""
    def fun(p):
        return w * (_model(x, *p) - y)

    def jac(p):
        return w[:, None] * _jac(x, *p)

    res = least_squares(fun, p0, jac=jac, method="lm", x_scale=_X_SCALE)
    if 0.0 <= res.x[1] <= 2.0 and 0.0 <= res.x[2] <= 2.0:
        return res
    p0 = np.array([p0[0], np.clip(p0[1], 0.0, 2.0), np.clip(p0[2], 1e-6, 2.0)])
    return least_squares(fun, p0, jac=jac, bounds=_BOUNDS, method="trf", x_scale=_X_SCALE)


def fit_charge_scan(scan, prior: Optional[float] = None, n_starts: int = 8, t: Optional[float] = None) -> ChargeFit:
    """Least-squares fit of a charge scan for the offset charge, d and nu.

    A grid of ``4 * n_starts`` offsets over one period, starting at the
    prior, is scored with the closed-form (d, nu); the best minima are refined
    by least squares with 0 <= d, nu <= 2. Among equally good minima the one
    nearest the prior wins. ``sigma_e`` is the curvature error scaled by the
    residual variance after a binomially weighted refinement.
    """
    x = np.asarray(scan.bias_ng, dtype=float)
    y = np.asarray(scan.p1, dtype=float)
    if len(x) < 4:
        raise ValueError("a charge scan fit needs at least four points")
    t = getattr(scan, "t_mid", 0.0) if t is None else t
    p0 = 0.0 if prior is None else float(prior)
    # coarse grid over one period, then refine the best few minima
    grid = p0 + np.arange(4 * n_starts) / (4 * n_starts)
    d_g, nu_g, ssr_g = _linear_dnu(x, y, grid)
    best = None
    for j in np.argsort(ssr_g, kind="stable")[:N_REFINE]:
        res = _solve(x, y, np.ones_like(x), np.array([grid[j], d_g[j], max(nu_g[j], 0.1)]))
        dist = abs(alias_charge_delta(res.x[0] - p0))
        key = (round(res.cost, 12), dist)
        if best is None or key < best[0]:
            best = (key, res)
    res = best[1]
    # binomial noise is heteroscedastic: refine once with model-based weights
    shots = np.broadcast_to(np.asarray(getattr(scan, "shots", 1), dtype=float), x.shape)
    pm = np.clip(_model(x, *res.x), 0.0, 1.0)
    w = np.sqrt(shots / np.maximum(pm * (1.0 - pm), VAR_FLOOR))
    res = _solve(x, y, w, res.x)
    delta, d_hat, nu_hat = res.x
    n = len(x)
    ssr = float(np.sum((_model(x, *res.x) - y) ** 2))
    converged = bool(res.success) and nu_hat > NU_MIN
    sigma = np.inf
    if n > 3:
        s2 = 2.0 * res.cost / (n - 3)
        JtJ = res.jac.T @ res.jac
        try:
            cov = np.linalg.inv(JtJ) * s2
            sigma = float(np.sqrt(max(cov[0, 0], 0.0)))
        except np.linalg.LinAlgError:
            converged = False
    if not np.isfinite(sigma):
        converged = False
    sigma = max(sigma, SIGMA_FLOOR)
    return ChargeFit(float(alias_charge_delta(delta)), sigma, float(d_hat), float(nu_hat), float(np.sqrt(ssr)), converged, float(t))


def fit_scans(scans: Sequence, **kw) -> list:
    """Fit a run of scans, each seeded by the previous good estimate."""
    fits = []
    prior = None
    for s in scans:
        f = fit_charge_scan(s, prior=prior, **kw)
        if f.converged:
            prior = f.delta_e
        fits.append(f)
    return fits


@dataclass
class ChargeTrace:
    """Offset charge (e) built by accumulating aliased scan-to-scan changes.

    Failed fits appear as NaN gaps; the next good point is referenced to the
    last good one.
    """

    t: np.ndarray
    values: np.ndarray
    sigma: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def filled(self) -> np.ndarray:
        """Values with gaps linearly interpolated, for uniform-grid spectra."""
        ok = self.valid
        if ok.all() or not ok.any():
            return self.values.copy()
        return np.interp(self.t, self.t[ok], self.values[ok])

    def increments(self):
        """(times, aliased increments) between consecutive good points."""
        ok = self.valid
        t, v = self.t[ok], self.values[ok]
        return t[1:], alias_charge_delta(np.diff(v)) if len(v) > 1 else np.empty(0)

    def to_csv(self, path):
        from .io import write_trace_csv

        write_trace_csv(self, path)


def build_trace(fits: Sequence[ChargeFit], times=None) -> ChargeTrace:
    n = len(fits)
    t = np.array([f.t for f in fits], dtype=float) if times is None else np.asarray(times, dtype=float)
    vals = np.full(n, np.nan)
    sig = np.array([f.sigma_e for f in fits], dtype=float) if n else np.empty(0)
    last = None
    acc = 0.0
    for i, f in enumerate(fits):
        if not f.converged:
            continue
        if last is not None:
            acc += alias_charge_delta(f.delta_e - last)
        else:
            acc = f.delta_e
        last = f.delta_e
        vals[i] = acc
    return ChargeTrace(t, vals, sig)


@dataclass
class JumpCatalog:
    times: np.ndarray
    sizes: np.ndarray
    threshold: float

    def __len__(self):
        return len(self.times)

    def mean_interval(self, duration: Optional[float] = None) -> float:
        if len(self) == 0:
            return np.inf
        if duration is not None:
            return duration / len(self)
        if len(self) < 2:
            return np.inf
        return float(np.mean(np.diff(self.times)))

    def to_csv(self, path):
        from .io import write_jumps_csv

        write_jumps_csv(self, path)


def detect_jumps(trace: ChargeTrace, threshold: float = 0.1) -> JumpCatalog:
    """Scan-to-scan changes with magnitude at least ``threshold`` (e)."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    t, inc = trace.increments()
    big = np.abs(inc) >= threshold
    return JumpCatalog(t[big], np.asarray(inc)[big], threshold)


def false_positive_rate(sigma_fit: float, threshold: float = 0.1) -> float:
    """Per-step rate of Gaussian increments (two fits) exceeding ``threshold``."""
    from scipy.special import erfc

    z = threshold / (np.sqrt(2.0) * sigma_fit)
    return float(erfc(z / np.sqrt(2.0)))


def to_frequency_noise(charge_e, params: DeviceParams, offset_ng: float = 0.0):
    """Difference frequency (Hz) between the parity bands, |D cos(2 pi ng)|."""
    ng = 0.5 * np.asarray(charge_e, dtype=float) + offset_ng
    return params.dispersion / TWO_PI * np.abs(np.cos(TWO_PI * ng))


def realias_to_half_e(freq_hz, params: DeviceParams):
    """Invert the frequency map on its principal branch, giving charge in [0, 0.5] e."""
    top = params.dispersion / TWO_PI
    r = np.clip(np.asarray(freq_hz, dtype=float) / top, 0.0, 1.0)
    return np.arccos(r) / np.pi


def normalization_factor(source_dispersion_hz: float, target_dispersion_hz: float, convention: str = "quadratic") -> float:
    if not (source_dispersion_hz > 0 and target_dispersion_hz > 0):
        raise ValueError("dispersions must be positive")
    r = target_dispersion_hz / source_dispersion_hz
    if convention == "quadratic":
        return r * r
    if convention == "linear":
        return r
    raise ValueError(f"unknown convention {convention!r}")


def normalize_external_spectrum(spectrum, source_dispersion_hz, target_dispersion_hz, convention="quadratic"):
    """Rescale a frequency-noise spectrum measured at another dispersion.

    Power scales as the dispersion squared by default; ``convention="linear"``
    applies the plain ratio instead. Accepts arrays or objects with ``values``.
    """
    k = normalization_factor(source_dispersion_hz, target_dispersion_hz, convention)
    if hasattr(spectrum, "values") and dataclasses.is_dataclass(spectrum):
        return dataclasses.replace(spectrum, values=np.asarray(spectrum.values) * k)
    return np.asarray(spectrum) * k
