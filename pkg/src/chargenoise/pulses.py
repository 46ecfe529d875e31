"""Pulse sequences, Bloch-vector evolution and the measurement protocols.

Gates are instantaneous pi/2 rotations; all phase is accumulated during
idles in the frame rotating at ``omega_bar``. The detuning during an idle is
``s * dispersion * cos(2 pi ng_total)``. Readout folds the ideal z
projection through the decay and visibility constants,
``P1 = (d - nu * z) / 2`` with the ground state at ``z = +1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .core import TWO_PI, DeviceParams, check_parity
from .noise import EnvironmentTrace
from .rng import substream

X2, Y2, IDLE, MEASURE, ROT = "X/2", "Y/2", "idle", "measure", "R/2"

KIND_CODES = {"scan": 0, "parity": 1, "charge": 2, "flux": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


@dataclass(frozen=True)
class PulseSequence:
    """Ordered gate list, e.g. ``("X/2", ("idle", t), "X/2", "measure")``.

    ``("R/2", theta)`` is a pi/2 rotation about the equatorial axis at angle
    ``theta`` from x (so X/2 and Y/2 are theta = 0 and pi/2).
    """

    gates: tuple
    gate_duration: float = 40e-9
    bias_ng: float = 0.0
    bias_flux: float = 0.0

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        if not gates or gates[-1] != MEASURE or gates.count(MEASURE) != 1:
            raise ValueError("a sequence needs exactly one measure, as its last gate")
        for g in gates[:-1]:
            if g in (X2, Y2):
                continue
            if isinstance(g, tuple) and len(g) == 2 and g[0] == IDLE:
                if not g[1] >= 0:
                    raise ValueError("idle durations must be non-negative")
                continue
            if isinstance(g, tuple) and len(g) == 2 and g[0] == ROT and np.isfinite(g[1]):
                continue
            raise ValueError(f"unknown gate token {g!r}")

    @property
    def idles(self) -> list:
        return [g[1] for g in self.gates if isinstance(g, tuple) and g[0] == IDLE]

    @property
    def duration(self) -> float:
        n_rot = sum(g in (X2, Y2) or (isinstance(g, tuple) and g[0] == ROT) for g in self.gates)
        return n_rot * self.gate_duration + sum(self.idles)

    @classmethod
    def ramsey(cls, idle: float, final=X2, **kw) -> "PulseSequence":
        return cls((X2, (IDLE, idle), final, MEASURE), **kw)


def evolve_bloch(seq: PulseSequence, detunings, d: float = 1.0, nu: float = 1.0):
    """Excited-state probability after ``seq`` starting from the ground state.

    ``detunings`` (rad/s) has one entry per idle along its last axis, or is a
    scalar/array broadcast to every idle. Leading axes are vectorised.
    """
    idles = seq.idles
    det = np.asarray(detunings, dtype=float)
    if len(idles) > 1:
        if det.ndim == 0 or det.shape[-1] != len(idles):
            det = np.repeat(det[..., None], len(idles), axis=-1)
        per_idle = [det[..., i] for i in range(len(idles))]
    else:
        per_idle = [det]
    x = np.zeros(per_idle[0].shape)
    y = np.zeros_like(x)
    z = np.ones_like(x)
    k = 0
    for g in seq.gates[:-1]:
        if g == X2:
            y, z = -z, y
        elif g == Y2:
            x, z = z, -x
        elif g[0] == ROT:
            # v -> n x v + n (n . v) for a quarter turn about n = (c, s, 0)
            c, s = np.cos(g[1]), np.sin(g[1])
            nv = c * x + s * y
            x, y, z = s * z + c * nv, -c * z + s * nv, c * y - s * x
        else:
            phi = per_idle[k] * g[1]
            c, s = np.cos(phi), np.sin(phi)
            x, y = x * c - y * s, x * s + y * c
            k += 1
    return 0.5 * (d - nu * z)


def idle_detuning(params: DeviceParams, ng_total, parity):
    s = check_parity(parity)
    return s * params.dispersion * np.cos(TWO_PI * np.asarray(ng_total, dtype=float))


def charge_scan_sequence(params: DeviceParams) -> PulseSequence:
    return PulseSequence.ramsey(params.ramsey_idle, X2, gate_duration=params.gate_duration)


def parity_sequence(params: DeviceParams) -> PulseSequence:
    """Odd-quadrature Ramsey sending the two parity bands to opposite poles."""
    return PulseSequence.ramsey(params.parity_idle, Y2, gate_duration=params.gate_duration)


def fast_charge_sequence(params: DeviceParams) -> PulseSequence:
    """Odd-quadrature Ramsey at the degeneracy bias; phase is one radian per e."""
    return PulseSequence.ramsey(params.fast_charge_idle, Y2, gate_duration=params.gate_duration)


@dataclass
class ShotRecords:
    """Columnar single-shot records, time ordered."""

    t: np.ndarray
    kind: np.ndarray
    outcome: np.ndarray
    bias_ng: np.ndarray
    parity_truth: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.kind = np.asarray(self.kind, dtype=np.int8)
        self.outcome = np.asarray(self.outcome, dtype=np.uint8)
        self.bias_ng = np.asarray(self.bias_ng, dtype=float)
        self.parity_truth = np.asarray(self.parity_truth, dtype=np.int8)
        n = len(self.t)
        if not all(len(a) == n for a in (self.kind, self.outcome, self.bias_ng, self.parity_truth)):
            raise ValueError("record columns must share one length")

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls) -> "ShotRecords":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def concatenate(cls, parts) -> "ShotRecords":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("t", "kind", "outcome", "bias_ng", "parity_truth")))

    def select(self, kind: str) -> "ShotRecords":
        m = self.kind == KIND_CODES[kind]
        return ShotRecords(self.t[m], self.kind[m], self.outcome[m], self.bias_ng[m], self.parity_truth[m])

    def to_csv(self, path, **kw):
        from .io import write_shots_csv

        write_shots_csv(self, path, **kw)


@dataclass
class ScanResult:
    """One charge scan: applied bias grid (2e units), P1 estimates and counts."""

    bias_ng: np.ndarray
    p1: np.ndarray
    shots: np.ndarray
    t_start: float
    span: float
    p1_expected: Optional[np.ndarray] = None

    @property
    def bias_e(self) -> np.ndarray:
        return 2.0 * self.bias_ng

    @property
    def t_mid(self) -> float:
        return self.t_start + 0.5 * self.span


def scan_grid(n_points: int, offset_ng: float = 0.0) -> np.ndarray:
    """``n_points`` biases evenly covering one 1e period (0.5 in 2e units)."""
    return offset_ng + 0.5 * np.arange(n_points) / n_points


def run_charge_scan(
    env: EnvironmentTrace,
    params: DeviceParams,
    t_start: float,
    n_points: Optional[int] = None,
    shots_per_point: Optional[int] = None,
    seed=0,
    span: Optional[float] = None,
    bias_ng: Optional[np.ndarray] = None,
) -> ScanResult:
    """Sweep the applied gate charge and sample single shots of the Ramsey scan.

    Shots are spread evenly over ``span`` (default ``params.scan_period``),
    sweeping the grid point by point; each shot reads charge and parity from
    ``env`` at its own timestamp. ``span=0`` takes every shot at ``t_start``.
    """
    n_points = params.scan_points if n_points is None else int(n_points)
    shots_per_point = params.scan_shots if shots_per_point is None else int(shots_per_point)
    span = params.scan_period if span is None else float(span)
    if n_points < 1 or shots_per_point < 1:
        raise ValueError("need at least one point and one shot per point")
    if not env.covers(t_start, t_start + span):
        raise ValueError(
            f"environment [{env.t0}, {env.t0 + env.duration}] s does not cover the scan "
            f"[{t_start}, {t_start + span}] s"
        )
    grid = scan_grid(n_points) if bias_ng is None else np.asarray(bias_ng, dtype=float)
    n_points = len(grid)
    n_shots = n_points * shots_per_point
    t = t_start + span * np.arange(n_shots) / n_shots
    k = env.index(t)
    bias = np.repeat(grid, shots_per_point)
    ng_total = bias + 0.5 * env.charge_e[k]
    det = idle_detuning(params, ng_total, env.parity[k])
    p = evolve_bloch(charge_scan_sequence(params), det, params.decay_d, params.visibility_nu)
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "scan")
    outcome = rng.random(n_shots) < p
    p1 = outcome.reshape(n_points, shots_per_point).mean(axis=1)
    p_exp = p.reshape(n_points, shots_per_point).mean(axis=1)
    return ScanResult(grid, p1, np.full(n_points, shots_per_point), t_start, span, p_exp)


def run_slow_scans(env: EnvironmentTrace, params: DeviceParams, n_scans: int, seed, t_start: Optional[float] = None):
    """Back-to-back charge scans, one per ``scan_period``."""
    t0 = env.t0 if t_start is None else t_start
    return [
        run_charge_scan(env, params, t0 + i * params.scan_period, seed=substream(seed, "scan", i))
        for i in range(int(n_scans))
    ]


def charge_transfer_gain(params: DeviceParams) -> float:
    """Small-signal slope (per e) of the parity-conditioned fast charge series.

    The charge shot contributes ``nu * dphi/dq`` and the parity shot a second
    factor ``nu`` from its finite contrast.
    """
    return params.visibility_nu**2 * np.pi * params.dispersion * params.fast_charge_idle


def conditioned_offset(params: DeviceParams) -> float:
    """Parity-averaged mean of the conditioned series at zero residual charge."""
    return (params.decay_d - 1.0) ** 2


@dataclass
class FastProtocolResult:
    records: ShotRecords
    recal_times: np.ndarray
    recal_delta_e: np.ndarray
    recal_sigma_e: np.ndarray
    recal_ok: np.ndarray
    cycle: float

    @property
    def n_cycles(self) -> int:
        return int(np.sum(self.records.kind == KIND_CODES["parity"]))


def _shot_offsets(params: DeviceParams):
    """Start of the parity and charge shots within one cycle (s)."""
    par = parity_sequence(params)
    gap = par.duration + params.readout_time + params.dead_time
    return 0.0, gap


def iter_fast_protocol(
    env: EnvironmentTrace,
    params: DeviceParams,
    duration: float,
    seed,
    t_start: Optional[float] = None,
) -> Iterator[tuple]:
    """Yield ``(ShotRecords, recal_time, delta_e, sigma_e, ok)`` per recal block.

    Each block starts with a charge scan taken at the block start (all of its
    shots at that instant), whose fit re-centres the biases; the block then
    alternates parity and charge shots, one pair per ``1 / shot_rate``.
    """
    from .estimation import fit_charge_scan

    if duration < 0:
        raise ValueError("duration must be non-negative")
    cycle = 1.0 / params.shot_rate
    if env.dt > cycle * (1 + 1e-9):
        raise ValueError("environment sampling is coarser than the shot cycle")
    t0 = env.t0 if t_start is None else t_start
    n_cycles = int(np.floor(duration / cycle + 1e-9))
    per_block = max(1, int(round(params.recal_period / cycle)))
    off_p, off_c = _shot_offsets(params)
    par_seq = parity_sequence(params)
    chg_seq = fast_charge_sequence(params)
    shot_rng = substream(seed, "shots")
    delta_prev = None
    start = 0
    block = 0
    while start < n_cycles:
        stop = min(start + per_block, n_cycles)
        t_blk = t0 + start * cycle
        scan = run_charge_scan(env, params, t_blk, seed=substream(seed, "scan", block), span=0.0)
        fit = fit_charge_scan(scan, prior=delta_prev)
        if delta_prev is None:
            delta = fit.delta_e if fit.converged else 0.0
        elif fit.converged:
            delta = delta_prev + float(fit.delta_e - delta_prev - np.floor(fit.delta_e - delta_prev + 0.5))
        else:
            delta = delta_prev
        delta_prev = delta

        m = stop - start
        tc = t0 + cycle * np.arange(start, stop)
        t = np.empty(2 * m)
        t[0::2] = tc + off_p
        t[1::2] = tc + off_c
        k = env.index(t)
        s = env.parity[k]
        bias = np.empty(2 * m)
        bias[0::2] = -0.5 * delta
        bias[1::2] = -0.25 - 0.5 * delta
        ng_total = bias + 0.5 * env.charge_e[k]
        det = idle_detuning(params, ng_total, s)
        p = np.empty(2 * m)
        p[0::2] = evolve_bloch(par_seq, det[0::2], params.decay_d, params.visibility_nu)
        p[1::2] = evolve_bloch(chg_seq, det[1::2], params.decay_d, params.visibility_nu)
        outcome = shot_rng.random(2 * m) < p
        kind = np.tile(np.array([KIND_CODES["parity"], KIND_CODES["charge"]], dtype=np.int8), m)
        yield ShotRecords(t, kind, outcome, bias, s), t_blk, delta, fit.sigma_e, fit.converged
        start = stop
        block += 1


def run_fast_protocol(env: EnvironmentTrace, params: DeviceParams, duration: float, seed, t_start=None) -> FastProtocolResult:
    """Fast two-step parity/charge protocol with periodic recalibration."""
    parts, times, deltas, sigmas, oks = [], [], [], [], []
    for rec, tr, de, se, ok in iter_fast_protocol(env, params, duration, seed, t_start):
        parts.append(rec)
        times.append(tr)
        deltas.append(de)
        sigmas.append(se)
        oks.append(ok)
    return FastProtocolResult(
        ShotRecords.concatenate(parts),
        np.asarray(times, dtype=float),
        np.asarray(deltas, dtype=float),
        np.asarray(sigmas, dtype=float),
        np.asarray(oks, dtype=bool),
        1.0 / params.shot_rate,
    )


@dataclass
class ConditionedSeries:
    t: np.ndarray
    values: np.ndarray
    bias_ng: np.ndarray
    n_orphans: int = 0
    parity_estimate: np.ndarray = field(default_factory=lambda: np.empty(0))


def condition_charge_on_parity(records: ShotRecords, charge_kind: str = "charge", parity_kind: str = "parity") -> ConditionedSeries:
    """Multiply each centred charge outcome by the preceding parity outcome.

    A charge shot whose immediate predecessor is not a parity shot is an
    orphan; orphans are dropped and counted.
    """
    kind = records.kind
    ck, pk = KIND_CODES[charge_kind], KIND_CODES[parity_kind]
    idx = np.nonzero(kind == ck)[0]
    prev = idx - 1
    ok = prev >= 0
    ok[ok] = kind[prev[ok]] == pk
    n_orphans = int(np.sum(~ok))
    idx, prev = idx[ok], prev[ok]
    s_hat = 2.0 * records.outcome[prev] - 1.0
    y = (2.0 * records.outcome[idx] - 1.0) * s_hat
    return ConditionedSeries(records.t[idx], y, records.bias_ng[idx], n_orphans, s_hat)


def reconstruct_fast_charge(result, params: DeviceParams):
    """Charge (e) per cycle: recal estimate plus the linearised conditioned series.

    ``result`` is a FastProtocolResult or bare ShotRecords (the recal offset
    is read back from the charge-shot bias). Returns ``(t, q, n_orphans)``.
    """
    cond = condition_charge_on_parity(getattr(result, "records", result))
    # bias = -0.25 - delta/2 on charge shots
    delta = -2.0 * (cond.bias_ng + 0.25)
    q = delta + (cond.values - conditioned_offset(params)) / charge_transfer_gain(params)
    return cond.t, q, cond.n_orphans
