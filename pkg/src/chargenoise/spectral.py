"""Spectral estimators, model fits and stitching.

All spectra are one-sided densities with the DC bin removed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal
from scipy.optimize import least_squares


class StitchWarning(UserWarning):
    pass


@dataclass
class Spectrum:
    """One-sided spectrum on strictly increasing frequencies (Hz).

    ``n_eff`` holds the number of independent averages per bin when it
    varies across bins (log binning); otherwise it equals ``n_avg``.
    """

    f: np.ndarray
    values: np.ndarray
    n_avg: int = 1
    meta: dict = field(default_factory=dict)
    n_eff: Optional[np.ndarray] = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.values = np.asarray(self.values)
        if self.f.shape != self.values.shape:
            raise ValueError("frequency and value arrays differ in shape")
        if len(self.f) > 1 and np.any(np.diff(self.f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if self.n_eff is None:
            self.n_eff = np.full(len(self.f), float(self.n_avg))
        else:
            self.n_eff = np.asarray(self.n_eff, dtype=float)

    def __len__(self):
        return len(self.f)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def band(self, f_lo: float, f_hi: float) -> "Spectrum":
        m = (self.f >= f_lo) & (self.f <= f_hi)
        return Spectrum(self.f[m], self.values[m], self.n_avg, dict(self.meta), self.n_eff[m])

    def at(self, f0: float):
        """Value at the bin nearest ``f0`` (log distance)."""
        i = int(np.argmin(np.abs(np.log(self.f / f0))))
        return self.values[i]

    def to_csv(self, path):
        from .io import write_spectrum_csv

        write_spectrum_csv(self, path)


def _default_nperseg(n: int) -> int:
    # eight 50%-overlapped segments
    return max(2, (2 * n) // 9)


def welch_psd(series, dt: float, segment_len: Optional[int] = None, overlap: float = 0.5, window="hann", detrend="constant") -> Spectrum:
    """Welch PSD; white noise of variance s^2 gives ``2 s^2 dt``."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    nperseg = _default_nperseg(n) if segment_len is None else int(segment_len)
    if nperseg > n:
        raise ValueError(f"segment length {nperseg} exceeds series length {n}")
    if nperseg < 2:
        raise ValueError("segment length must be at least 2")
    noverlap = int(round(overlap * nperseg))
    f, p = signal.welch(x, fs=1.0 / dt, window=window, nperseg=nperseg, noverlap=noverlap, detrend=detrend)
    n_seg = 1 + (n - nperseg) // (nperseg - noverlap)
    meta = {"dt": dt, "segment_len": nperseg, "overlap": overlap, "window": str(window), "kind": "psd"}
    return Spectrum(f[1:], p[1:], n_seg, meta)


def interleaved_cross_psd(series, dt: float, segment_len: Optional[int] = None, overlap: float = 0.5, window="hann") -> Spectrum:
    """Cross-spectrum of the even- and odd-indexed halves of a series.

    Independent sample-to-sample noise (projection noise) averages toward
    zero while a slow common signal survives. The half-sample delay between
    the halves is removed before taking the real part.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 4:
        raise ValueError("need at least four samples")
    m = len(x) // 2
    a, b = x[0 : 2 * m : 2], x[1 : 2 * m : 2]
    nperseg = _default_nperseg(m) if segment_len is None else int(segment_len)
    if nperseg > m:
        raise ValueError(f"segment length {nperseg} exceeds sub-series length {m}")
    noverlap = int(round(overlap * nperseg))
    f, pab = signal.csd(a, b, fs=0.5 / dt, window=window, nperseg=nperseg, noverlap=noverlap, detrend="constant")
    pab = pab * np.exp(-2j * np.pi * f * dt)
    n_seg = 1 + (m - nperseg) // (nperseg - noverlap)
    meta = {"dt": 2 * dt, "sample_dt": dt, "segment_len": nperseg, "overlap": overlap, "window": str(window), "kind": "interleaved"}
    return Spectrum(f[1:], pab.real[1:], n_seg, meta)


def log_bin(spec: Spectrum, bins_per_decade: int = 10) -> Spectrum:
    """Average a spectrum into logarithmic frequency bins."""
    if len(spec) == 0:
        return spec
    lo, hi = np.log10(spec.f[0]), np.log10(spec.f[-1])
    edges = np.arange(np.floor(lo * bins_per_decade), np.ceil(hi * bins_per_decade) + 1) / bins_per_decade
    idx = np.clip(np.searchsorted(edges, np.log10(spec.f), side="right") - 1, 0, len(edges) - 2)
    f_out, v_out, n_out = [], [], []
    for k in np.unique(idx):
        m = idx == k
        f_out.append(np.exp(np.mean(np.log(spec.f[m]))))
        v_out.append(np.mean(spec.values[m]))
        n_out.append(np.sum(spec.n_eff[m]))
    meta = dict(spec.meta, bins_per_decade=bins_per_decade)
    return Spectrum(np.array(f_out), np.array(v_out), spec.n_avg, meta, np.array(n_out))


@dataclass
class SpectrumFit:
    """Power law ``A / f**alpha`` plus Lorentzian ``L0 / (1 + (f/fc)**2)``."""

    A: float
    alpha: float
    L0: float
    fc: float
    stderr: dict
    band: tuple
    converged: bool
    cost: float

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        return self.A * f ** (-self.alpha) + lorentzian(f, self.L0, self.fc)

    def power_law(self, f):
        return self.A * np.asarray(f, dtype=float) ** (-self.alpha)

    @property
    def S_1hz(self) -> float:
        return float(self.power_law(1.0))


def lorentzian(f, L0, fc):
    return L0 / (1.0 + (np.asarray(f, dtype=float) / fc) ** 2)


def _prep_band(spec: Spectrum, band):
    if spec.is_complex:
        raise ValueError("fit a real spectrum")
    f, v = spec.f, np.asarray(spec.values, dtype=float)
    if band is not None:
        m = (f >= band[0]) & (f <= band[1])
        f, v = f[m], v[m]
    ok = v > 0
    f, v = f[ok], v[ok]
    return f, v


def _param_cov(res, n):
    dof = max(n - len(res.x), 1)
    s2 = 2.0 * res.cost / dof
    return np.linalg.pinv(res.jac.T @ res.jac) * s2


def fit_power_law_plus_lorentzian(spec: Spectrum, band=None, lorentzian_term: bool = True) -> SpectrumFit:
    """Log-residual least squares of ``A / f**alpha + L0 / (1 + (f/fc)**2)``.

    Multi-start over alpha in {1, 1.5, 2, 2.5} and a few knee guesses.
    Non-positive bins are skipped; apply ``log_bin`` to noisy estimates first.
    """
    f, v = _prep_band(spec, band)
    if len(f) < (5 if lorentzian_term else 3):
        raise ValueError("too few positive bins in the fit band")
    band = (float(f[0]), float(f[-1])) if band is None else tuple(band)
    logv = np.log(v)
    lf = np.log10(f)
    l_scale = float(np.median(v[-max(3, len(v) // 5) :]))

    def model(p):
        pl = 10.0 ** p[0] * f ** (-p[1])
        if lorentzian_term:
            pl = pl + p[2] * l_scale / (1.0 + (f / 10.0 ** p[3]) ** 2)
        return pl

    def resid(p):
        return np.log(np.maximum(model(p), 1e-300)) - logv

    best = None
    knees = np.quantile(lf, [0.5, 0.75, 0.9]) if lorentzian_term else [0.0]
    for a0 in (1.0, 1.5, 2.0, 2.5):
        logA0 = float(np.median(np.log10(v) + a0 * lf))
        for k0 in knees:
            if lorentzian_term:
                p0 = [logA0, a0, 0.5, k0]
                lb, ub = [-np.inf, 1e-3, 0.0, lf[0] - 2], [np.inf, 2.999, np.inf, lf[-1] + 2]
            else:
                p0, lb, ub = [logA0, a0], [-np.inf, 1e-3], [np.inf, 2.999]
            try:
                res = least_squares(resid, p0, bounds=(lb, ub), method="trf")
            except ValueError:
                continue
            if best is None or res.cost < best.cost:
                best = res
    if best is None:
        raise RuntimeError("spectrum fit failed from every start")
    cov = _param_cov(best, len(f))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    A = 10.0 ** best.x[0]
    stderr = {"A": A * np.log(10) * err[0], "alpha": err[1]}
    L0 = fc = 0.0
    if lorentzian_term:
        L0 = best.x[2] * l_scale
        fc = 10.0 ** best.x[3]
        stderr.update(L0=err[2] * l_scale, fc=fc * np.log(10) * err[3])
    return SpectrumFit(A, float(best.x[1]), float(L0), float(fc), stderr, band, bool(best.success), float(best.cost))


@dataclass
class LorentzianFit:
    fc: float
    L0: float
    white: float
    stderr: dict
    identifiable: bool

    def __call__(self, f):
        return lorentzian(f, self.L0, self.fc) + self.white


def fit_lorentzian(spec: Spectrum, band=None, white: bool = True) -> LorentzianFit:
    """Fit ``L0 / (1 + (f/fc)**2) + W`` in log space.

    The knee is flagged unidentifiable when it falls outside the fitted band,
    its relative error exceeds 50%, or the plateau does not exceed the white
    level by a factor of two.
    """
    f, v = _prep_band(spec, band)
    if len(f) < 4:
        raise ValueError("too few positive bins in the fit band")
    logv = np.log(v)
    scale = float(np.max(v))

    def model(p):
        m = p[0] * scale / (1.0 + (f / 10.0 ** p[1]) ** 2)
        if white:
            m = m + p[2] * scale
        return m

    def resid(p):
        return np.log(np.maximum(model(p), 1e-300)) - logv

    lf = np.log10(f)
    best = None
    for k0 in np.quantile(lf, [0.25, 0.5, 0.75]):
        p0 = [1.0, k0, 0.01] if white else [1.0, k0]
        lb = [0.0, lf[0] - 3, 0.0] if white else [0.0, lf[0] - 3]
        ub = [np.inf, lf[-1] + 3, np.inf] if white else [np.inf, lf[-1] + 3]
        res = least_squares(resid, p0, bounds=(lb, ub), method="trf")
        if best is None or res.cost < best.cost:
            best = res
    cov = _param_cov(best, len(f))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    fc = 10.0 ** best.x[1]
    L0 = best.x[0] * scale
    W = best.x[2] * scale if white else 0.0
    rel = np.log(10) * err[1]
    ok = bool(best.success) and f[0] < fc < f[-1] and rel < 0.5 and L0 > 2 * W
    return LorentzianFit(float(fc), float(L0), float(W), {"fc": fc * rel, "L0": err[0] * scale}, ok)


def stitch_spectra(low: Spectrum, high: Spectrum, crossover: Optional[float] = None) -> Spectrum:
    """Join two bands at ``crossover`` (default: the low band's top frequency).

    Where both bands have bins, their log-interpolated ratio must stay within
    a factor of 3 or a ``StitchWarning`` is emitted.
    """
    fx = float(low.f[-1]) if crossover is None else float(crossover)
    ov = (high.f >= low.f[0]) & (high.f <= low.f[-1])
    if np.any(ov):
        lv = np.real(low.values)
        hv = np.real(high.values[ov])
        pos = (lv > 0).all() and (hv > 0).all()
        if pos:
            interp = np.exp(np.interp(np.log(high.f[ov]), np.log(low.f), np.log(lv)))
            ratio = np.median(hv / interp)
        else:
            ratio = np.inf
        if not 1.0 / 3.0 <= ratio <= 3.0:
            warnings.warn(f"bands disagree in the overlap (median ratio {ratio:.3g})", StitchWarning, stacklevel=2)
    lm = low.f <= fx
    hm = high.f > fx
    f = np.concatenate([low.f[lm], high.f[hm]])
    v = np.concatenate([low.values[lm], high.values[hm]])
    n = np.concatenate([low.n_eff[lm], high.n_eff[hm]])
    meta = {"crossover_hz": fx, "low": low.meta, "high": high.meta}
    return Spectrum(f, v, min(low.n_avg, high.n_avg), meta, n)


@dataclass
class CrossSpectrum:
    """Averaged CPSD of two series with their PSDs and normalized magnitude."""

    f: np.ndarray
    s_ab: np.ndarray
    s_a: np.ndarray
    s_b: np.ndarray
    n_avg: int
    n_eff: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_eff is None:
            self.n_eff = np.full(len(self.f), float(self.n_avg))

    @property
    def normalized(self) -> np.ndarray:
        den = np.sqrt(self.s_a * self.s_b)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, np.abs(self.s_ab) / den, 0.0)

    @property
    def floor(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.n_eff)

    def log_binned(self, bins_per_decade: int = 10) -> "CrossSpectrum":
        parts = [Spectrum(self.f, x, self.n_avg, n_eff=self.n_eff) for x in (self.s_ab, self.s_a, self.s_b)]
        b = [log_bin(p, bins_per_decade) for p in parts]
        return CrossSpectrum(b[0].f, b[0].values, b[1].values, b[2].values, self.n_avg, b[0].n_eff)

    def band(self, f_lo, f_hi) -> "CrossSpectrum":
        m = (self.f >= f_lo) & (self.f <= f_hi)
        return CrossSpectrum(self.f[m], self.s_ab[m], self.s_a[m], self.s_b[m], self.n_avg, self.n_eff[m])


def cross_psd(a, b, dt: float, n_avg: Optional[int] = None, segment_len: Optional[int] = None, window="boxcar") -> CrossSpectrum:
    """Segment-averaged CPSD over non-overlapping segments.

    Give either ``n_avg`` (segments) or ``segment_len`` (samples). The
    normalized magnitude of independent series floors near ``1/sqrt(n_avg)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise ValueError("series lengths differ")
    n = len(a)
    if segment_len is None:
        if n_avg is None:
            n_avg = 8
        segment_len = n // int(n_avg)
    segment_len = int(segment_len)
    if segment_len < 2:
        raise ValueError("segments must hold at least two samples")
    n_seg = n // segment_len
    a, b = a[: n_seg * segment_len], b[: n_seg * segment_len]
    kw = dict(fs=1.0 / dt, window=window, nperseg=segment_len, noverlap=0, detrend="constant")
    f, sab = signal.csd(a, b, **kw)
    _, sa = signal.welch(a, **kw)
    _, sb = signal.welch(b, **kw)
    return CrossSpectrum(f[1:], sab[1:], sa[1:], sb[1:], n_seg)
