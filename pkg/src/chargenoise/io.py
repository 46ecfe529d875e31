"""CSV and JSON persistence with round-trip float precision."""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"
CHUNK_ROWS = 200_000


class SchemaError(ValueError):
    """A CSV file does not match the expected columns or types."""


ENV_COLUMNS = ("time_s", "charge_e", "parity", "flux_phi0")
SHOT_COLUMNS = ("t_s", "kind", "outcome", "bias_ng_ext")
TRACE_COLUMNS = ("t_s", "dng_e", "sigma_e")
JUMP_COLUMNS = ("t_s", "size_e")
SPECTRUM_COLUMNS = ("f_hz", "value", "n_avg")
CPSD_COLUMNS = ("f_hz", "s_q", "s_phi", "s_qphi_mag", "floor", "normalized", "band")
HIST_COLUMNS = ("bin_center_e", "count")
DIST_COLUMNS = ("value_e",)


def _write(path, columns, data, fmts, mode="w", header=True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(data[0]) if data else 0
    fmt = ",".join(fmts)
    with open(path, mode, newline="\n") as fh:
        if header:
            fh.write(",".join(columns) + "\n")
        for a in range(0, n, CHUNK_ROWS):
            b = min(n, a + CHUNK_ROWS)
            block = np.empty((b - a, len(data)), dtype=object)
            for j, col in enumerate(data):
                block[:, j] = col[a:b]
            fh.write("\n".join(fmt % tuple(row) for row in block))
            fh.write("\n")


def _read(path, columns, formats):
    path = Path(path)
    try:
        with open(path) as fh:
            head = fh.readline().strip()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    got = tuple(h.strip() for h in head.split(","))
    if got[: len(columns)] != tuple(columns):
        raise SchemaError(f"{path}: expected columns {','.join(columns)}, found {head!r}")
    dtype = {"names": list(columns), "formats": list(formats)}
    try:
        with warnings.catch_warnings():
            # header-only files are valid and read as empty
            warnings.simplefilter("ignore", UserWarning)
            arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=dtype, usecols=range(len(columns)), ndmin=1)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from exc
    return arr


def write_environment_csv(env, path):
    _write(
        path,
        ENV_COLUMNS,
        [env.times, env.charge_e, env.parity.astype(int), env.flux],
        [FLOAT_FMT, FLOAT_FMT, "%d", FLOAT_FMT],
    )


def read_environment_csv(path):
    a = _read(path, ENV_COLUMNS, ["f8", "f8", "i1", "f8"])
    return a["time_s"], a["charge_e"], a["parity"], a["flux_phi0"]


def _shot_data(records):
    from .pulses import KIND_NAMES

    names = np.array([KIND_NAMES[k] for k in range(len(KIND_NAMES))], dtype=object)
    return [records.t, names[records.kind], records.outcome.astype(int), records.bias_ng]


_SHOT_FMTS = [FLOAT_FMT, "%s", "%d", FLOAT_FMT]


def write_shots_csv(records, path, append=False):
    _write(path, SHOT_COLUMNS, _shot_data(records), _SHOT_FMTS, mode="a" if append else "w", header=not append)


class ShotCsvWriter:
    """Streams shot records to one CSV in successive chunks."""

    def __init__(self, path):
        self.path = Path(path)
        self.rows = 0
        _write(self.path, SHOT_COLUMNS, [], _SHOT_FMTS)

    def write(self, records):
        if len(records):
            _write(self.path, SHOT_COLUMNS, _shot_data(records), _SHOT_FMTS, mode="a", header=False)
            self.rows += len(records)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def read_shots_csv(path):
    from .pulses import KIND_CODES, ShotRecords

    a = _read(path, SHOT_COLUMNS, ["f8", "U8", "i2", "f8"])
    try:
        kind = np.array([KIND_CODES[k] for k in a["kind"]], dtype=np.int8)
    except KeyError as exc:
        raise SchemaError(f"{path}: unknown shot kind {exc}") from exc
    if np.any((a["outcome"] != 0) & (a["outcome"] != 1)):
        raise SchemaError(f"{path}: outcomes must be 0 or 1")
    return ShotRecords(a["t_s"], kind, a["outcome"], a["bias_ng_ext"], np.ones(len(a), dtype=np.int8))


def write_trace_csv(trace, path):
    _write(path, TRACE_COLUMNS, [trace.t, trace.values, trace.sigma], [FLOAT_FMT] * 3)


def read_trace_csv(path):
    from .estimation import ChargeTrace

    a = _read(path, TRACE_COLUMNS, ["f8", "f8", "f8"])
    return ChargeTrace(a["t_s"], a["dng_e"], a["sigma_e"])


def write_jumps_csv(catalog, path):
    _write(path, JUMP_COLUMNS, [catalog.times, catalog.sizes], [FLOAT_FMT] * 2)


def write_spectrum_csv(spec, path):
    if spec.is_complex:
        cols = ("f_hz", "value", "value_imag", "n_avg")
        data = [spec.f, spec.values.real, spec.values.imag, spec.n_eff]
    else:
        cols = SPECTRUM_COLUMNS
        data = [spec.f, spec.values, spec.n_eff]
    _write(path, cols, data, [FLOAT_FMT] * len(cols))


def read_spectrum_csv(path):
    from .spectral import Spectrum

    a = _read(path, SPECTRUM_COLUMNS, ["f8", "f8", "f8"])
    return Spectrum(a["f_hz"], a["value"], int(a["n_avg"].min()) if len(a) else 1, n_eff=a["n_avg"])


def write_cpsd_csv(report, path):
    _write(
        path,
        CPSD_COLUMNS,
        [report.f, report.s_q, report.s_phi, report.s_qphi_mag, report.floor, report.normalized, report.band.astype(object)],
        [FLOAT_FMT] * 6 + ["%s"],
    )


def write_histogram_csv(centers, counts, path):
    _write(path, HIST_COLUMNS, [np.asarray(centers), np.asarray(counts)], [FLOAT_FMT] * 2)


def write_distribution_csv(dist, path):
    _write(path, DIST_COLUMNS, [np.asarray(dist.samples)], [FLOAT_FMT])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
