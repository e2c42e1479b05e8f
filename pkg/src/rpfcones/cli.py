"""Command line entry point: ``rpfcones <subcommand> [--config PATH] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 2 validation failure, 3 convergence or partial failure.
Reports carry their config, seed and a checksum of their own payload and no
timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3
OUT_ENV = "RPFCONES_OUT"
SUBCOMMANDS = ("spectrum", "rpf", "cones", "clt", "ly-check")
DEFAULT_SYSTEMS = {
    "spectrum": {"system": {"kind": "gauss"}},
    "rpf": {"system": {"kind": "gauss"}},
    "cones": {"system": {"kind": "tower"}, "twist": {"u": "level0"}},
    "clt": {"system": {"kind": "full-shift"}, "twist": {"u": "first-symbol", "rho": 0.5}, "statistics": {"trials": 100000}},
    "ly-check": {"system": {"kind": "gauss"}, "twist": {"u": "x"}},
}


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)


def payload_digest(report: dict) -> str:
    body = {k: v for k, v in report.items() if k != "payload_sha256"}
    return _sha(json.dumps(body, sort_keys=True, allow_nan=True).encode())


def _write_csv(path: Path, header, rows) -> None:
    import csv

    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def write_report(out: Path, pipeline: str, cfg, seed: int, result, tables, notes) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for name, (header, rows) in sorted(tables.items()):
        p = out / f"{pipeline}_{name}.csv"
        _write_csv(p, header, rows)
        artifacts[p.name] = _sha(p.read_bytes())
    report = {
        "pipeline": pipeline,
        "status": "partial" if notes else "ok",
        "annotations": notes,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": seed,
        "tables": artifacts,
        "result": result,
    }
    report["payload_sha256"] = payload_digest(report)
    path = out / f"{pipeline}.json"
    path.write_text(_dumps(report) + "\n")
    return path


def emit_manifest(report_dir: str | Path) -> Path:
    """Write ``manifest.json``: artifacts with checksums, config hashes, seeds and versions.

    Reports whose payload checksum or table checksums no longer match are
    flagged ``"checksum": "mismatch"``.
    """
    import platform

    import numpy
    import scipy

    from . import __version__

    d = Path(report_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"report directory {d} does not exist")
    entries = []
    for p in sorted(d.glob("*.json")):
        if p.name == "manifest.json":
            continue
        entry = {"file": p.name, "sha256": _sha(p.read_bytes()), "bytes": p.stat().st_size}
        try:
            rep = json.loads(p.read_text())
            ok = rep.get("payload_sha256") == payload_digest(rep)
            for name, digest in rep.get("tables", {}).items():
                t = d / name
                ok = ok and t.is_file() and _sha(t.read_bytes()) == digest
            entry |= {"pipeline": rep.get("pipeline"), "config_sha256": rep.get("config_sha256"), "seed": rep.get("seed"), "tables": sorted(rep.get("tables", {}))}
            entry["checksum"] = "ok" if ok else "mismatch"
        except (json.JSONDecodeError, AttributeError, TypeError):
            entry["checksum"] = "mismatch"
        entries.append(entry)
    manifest = {
        "artifacts": entries,
        "versions": {"rpfcones": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
    }
    path = d / "manifest.json"
    path.write_text(_dumps(manifest) + "\n")
    return path


def run(config_path: str | None, pipeline: str | None = None, seed: int | None = None, out: str | None = None) -> int:
    """Validate, execute one pipeline and write its report; returns the exit code."""
    from .config import config_from_dict, load_config
    from .errors import ConfigError, RpfConesError
    from .experiments import PIPELINE_FUNCS

    try:
        if config_path is None:
            if pipeline is None:
                raise ConfigError("missing system block")
            cfg = config_from_dict(DEFAULT_SYSTEMS[pipeline], pipeline)
        else:
            cfg = load_config(config_path, pipeline)
        if seed is not None:
            if seed < 0 or seed >= 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.statistics.seed = int(seed)
    except ConfigError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(out or cfg.output.dir or os.environ.get(OUT_ENV) or "reports")
    s = cfg.statistics.seed
    try:
        result, tables, notes = PIPELINE_FUNCS[cfg.pipeline](cfg, s)
    except ConfigError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except RpfConesError as e:
        notes = [{"step": cfg.pipeline, "error": f"{type(e).__name__}: {e}"}]
        write_report(out_dir, cfg.pipeline, cfg, s, None, {}, notes)
        print(f"{cfg.pipeline} failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    path = write_report(out_dir, cfg.pipeline, cfg, s, result, tables, notes)
    print(path)
    return EXIT_FAILED if notes else EXIT_OK


def _metrics(args) -> int:
    import numpy as np

    from .errors import RpfConesError
    from .function_space import DiscreteFunction, interval_grid
    from .metrics import FunctionalFamily, delta_distance, hilbert_distance

    def load(p):
        raw = json.loads(Path(p).read_text())
        return np.array([complex(*v) if isinstance(v, list) else complex(v) for v in raw])

    try:
        f, g = load(args.f), load(args.g)
    except (OSError, ValueError, TypeError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if f.size != g.size or f.size == 0:
        print("validation error: functions must have the same nonzero length", file=sys.stderr)
        return EXIT_INVALID
    grid = interval_grid(np.linspace(0.0, 1.0, f.size + 2)[1:-1])
    S = FunctionalFamily.point_evaluations(grid)
    F, G = DiscreteFunction(grid, f), DiscreteFunction(grid, g)
    out = {"delta": None, "hilbert": None}
    try:
        out["delta"] = delta_distance(S, F, G)
        if F.is_real and G.is_real:
            out["hilbert"] = hilbert_distance(S, F.real, G.real)
    except (RpfConesError, TypeError, ValueError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(_dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpfcones", description="Transfer operators, projective cone metrics and sequential RPF triplets.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override statistics.seed (unsigned 64-bit)")
        p.add_argument("--out", help=f"report directory (default: ${OUT_ENV} or ./reports)")
        p.add_argument("--threads", type=int, help="cap on BLAS threads")

    p = sub.add_parser("run", help="run the pipeline named in a config")
    p.add_argument("path", nargs="?", help="TOML experiment config")
    common(p)
    for name in SUBCOMMANDS:
        common(sub.add_parser(name, help=f"run the {name} pipeline"))
    p = sub.add_parser("metrics", help="quadrant-cone d_C and delta between two JSON value lists")
    p.add_argument("f")
    p.add_argument("g")
    p = sub.add_parser("manifest", help="write manifest.json for a report directory")
    p.add_argument("dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads:
        if threads < 1:
            print("validation error: --threads must be positive", file=sys.stderr)
            return EXIT_INVALID
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    if args.command == "manifest":
        try:
            print(emit_manifest(args.dir))
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK
    if args.command == "metrics":
        return _metrics(args)
    if args.command == "run":
        path = args.path or args.config
        if path is None:
            print("validation error: missing system block", file=sys.stderr)
            return EXIT_INVALID
        return run(path, None, args.seed, args.out)
    return run(args.config, args.command, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
