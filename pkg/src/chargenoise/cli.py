"""Command-line entry point: ``simulate``, ``analyze`` and ``reproduce``.

Exit codes: 0 success, 1 error, 2 reproduction outside tolerance.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .io import (
    SchemaError,
    ShotCsvWriter,
    read_shots_csv,
    read_trace_csv,
    write_environment_csv,
    write_json,
    write_spectrum_csv,
    write_trace_csv,
)

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2
log = logging.getLogger("chargenoise")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _finish(cfg: RunConfig, out: Path, files, **extra):
    cfg.write_resolved(out)
    manifest = cfg.manifest(outputs={f.name: _sha256(f) for f in sorted(files)}, **extra)
    write_json(manifest, out / "manifest.json")
    return manifest


def simulate(cfg: RunConfig, out: Path) -> dict:
    """Compose an environment, run the configured protocol and write CSVs."""
    from .estimation import build_trace, fit_scans
    from .noise import compose_environment
    from .pulses import ShotRecords, iter_fast_protocol, run_slow_scans

    p = cfg.params()
    out.mkdir(parents=True, exist_ok=True)
    specs = cfg.noise_specs()
    T = float(cfg.duration_s)
    dt = cfg.dt
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        env = compose_environment(
            p, T + (dt if T > 0 else 0.0), dt, cfg.seed, charge_scale=float(cfg.noise["charge_scale"]), **specs
        )
    files = []
    env_path = out / "environment.csv"
    stride = max(1, int(np.ceil(len(env.charge_e) / cfg.stream_threshold)))
    write_environment_csv(env if stride == 1 else _decimate(env, stride), env_path)
    files.append(env_path)
    extra = {"env_stride": stride, "protocol": cfg.protocol}
    if cfg.protocol == "fast":
        n_shots = 2 * int(np.floor(T * p.shot_rate + 1e-9))
        streaming = n_shots > cfg.stream_threshold
        shots_path = out / "shots.csv"
        if streaming:
            with ShotCsvWriter(shots_path) as w:
                for rec, *_ in iter_fast_protocol(env, p, T, cfg.seed):
                    w.write(rec)
        else:
            parts = [rec for rec, *_ in iter_fast_protocol(env, p, T, cfg.seed)]
            ShotRecords.concatenate(parts).to_csv(shots_path)
        files.append(shots_path)
        extra.update(n_shots=n_shots, streamed=streaming)
    elif cfg.protocol == "slow":
        n_scans = int(np.floor(T / p.scan_period + 1e-9))
        trace = build_trace(fit_scans(run_slow_scans(env, p, n_scans, cfg.seed))) if n_scans else build_trace([])
        trace_path = out / "trace.csv"
        write_trace_csv(trace, trace_path)
        files.append(trace_path)
        extra.update(n_scans=n_scans)
    return _finish(cfg, out, files, **extra)


def _decimate(env, stride):
    from dataclasses import replace

    return replace(env, dt=env.dt * stride, charge_e=env.charge_e[::stride], parity=env.parity[::stride], flux=env.flux[::stride])


def _detect_kind(path: Path) -> str:
    from .io import SHOT_COLUMNS, TRACE_COLUMNS

    try:
        head = path.open().readline().strip()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    cols = tuple(h.strip() for h in head.split(","))
    if cols == TRACE_COLUMNS:
        return "trace"
    if cols == SHOT_COLUMNS:
        return "shots"
    raise SchemaError(f"{path}: header {head!r} is neither a trace nor a shot file")


def analyze(cfg: RunConfig, inputs, out: Path, kind: str = "auto") -> dict:
    """Trace files give a Welch PSD; shot files give the interleaved cross-PSD."""
    from .pulses import reconstruct_fast_charge
    from .spectral import interleaved_cross_psd, log_bin, welch_psd

    p = cfg.params()
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for src in map(Path, inputs):
        k = _detect_kind(src) if kind == "auto" else kind
        if k == "trace":
            trace = read_trace_csv(src)
            if len(trace) < 8:
                raise SchemaError(f"{src}: too few rows for a spectrum")
            dt = float(np.median(np.diff(trace.t)))
            spec = welch_psd(trace.filled(), dt)
        elif k == "shots":
            rec = read_shots_csv(src)
            t, q, _ = reconstruct_fast_charge(rec, p)
            if len(q) < 16:
                raise SchemaError(f"{src}: too few conditioned shots for a spectrum")
            dt = float(np.median(np.diff(t)))
            spec = interleaved_cross_psd(q, dt)
        else:
            raise ValueError(f"unknown input kind {k!r}")
        dest = out / f"{src.stem}_psd.csv"
        write_spectrum_csv(log_bin(spec, 10), dest)
        files.append(dest)
    return _finish(cfg, out, files, inputs=[str(s) for s in inputs])


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chargenoise", description="Offset-charge noise simulation and analysis.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate an environment and shot record")
    an = sub.add_parser("analyze", parents=[common], help="spectra from trace or shot CSVs")
    an.add_argument("inputs", nargs="+", type=Path)
    an.add_argument("--kind", choices=("auto", "trace", "shots"), default="auto")
    rp = sub.add_parser("reproduce", parents=[common], help="run a scaled reproduction with verdicts")
    rp.add_argument("figure", help="fig3b, fig3c, fig4, figS1, figS4 or all")
    rp.add_argument("--scale", type=float, help="duration multiplier (overrides reproduce.scale)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=str(args.out) if args.out else None)
        out = Path(cfg.out)
        if args.command == "simulate":
            m = simulate(cfg, out)
            log.info("wrote %s", ", ".join(m["outputs"]))
            return EXIT_OK
        if args.command == "analyze":
            analyze(cfg, args.inputs, out, args.kind)
            return EXIT_OK
        from .reproduce import FIGURES, run_figure

        if args.scale is not None:
            cfg = cfg.replace(reproduce={"scale": args.scale})
        figures = FIGURES if args.figure == "all" else (args.figure,)
        if any(f not in FIGURES for f in figures):
            raise ValueError(f"unknown figure {args.figure!r}; choose from {', '.join(FIGURES)} or all")
        ok = True
        for fig in figures:
            v = run_figure(fig, cfg, out)
            ok &= v["passed"]
            for name, c in v["checks"].items():
                print(f"{fig} {name}: {'PASS' if c['passed'] else 'FAIL'} value={c['value']} target={c['target']}")
        return EXIT_OK if ok else EXIT_TOLERANCE
    except (ConfigError, SchemaError, ValueError, OverflowError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
