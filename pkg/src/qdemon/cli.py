"""Command-line runner: ``qdemon {sweep,validate,single,schema}``.

Exit codes: 0 ok, 1 invariant failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import CONFIG_SCHEMA, RunConfig, load_config, parse_config, default_document
from .master_eq import exact_outcome_distribution
from .protocol import ConfigurationError, run_ensemble
from .thermo import ensemble_summary, exact_summary
from .trajectory import inject_fault, KNOWN_FAULTS
from . import validation

log = logging.getLogger("qdemon")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2
MIN_STAT_SHOTS = 100

# csv column -> EnsembleSummary field
SWEEP_COLUMNS = {
    "avg_exp_bWmIsh": "avg_exp_sigma_ish",
    "avg_exp_bWmIqc": "avg_exp_sigma_iqc",
    "avg_exp_bW": "avg_exp_betaW",
    "mean_Iqc": "mean_iqc",
    "mean_Ish": "mean_ish",
    "mean_bW": "mean_betaW",
    "lambda_fb": "lambda_fb_theory",
    "eta": "eta",
}
STDERR_COLUMNS = {f"stderr_{col}": f"stderr_{f}" for col, f in SWEEP_COLUMNS.items() if f != "lambda_fb_theory"}
EXTRA_COLUMNS = ("n_shots", "n_excluded", "beta_eps", "eps_fb", "lambda_fb_cells")
ORACLE_COLUMNS = {f"oracle_{col}": f for col, f in SWEEP_COLUMNS.items()}


def fmt(v) -> str:
    """Shortest round-trip float text; integers verbatim."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def sweep_header(oracle: bool) -> list[str]:
    cols = ["param", *SWEEP_COLUMNS, *STDERR_COLUMNS, *EXTRA_COLUMNS]
    if oracle:
        cols += list(ORACLE_COLUMNS)
    return cols


def _require_shots(cfg: RunConfig):
    if cfg.n_shots < MIN_STAT_SHOTS:
        raise ConfigurationError(f"n_shots must be >= {MIN_STAT_SHOTS} for statistics commands")


def sweep_rows(cfg: RunConfig):
    """Yield (row values, flags) per grid point, in grid order."""
    _require_shots(cfg)
    points = cfg.points()
    oracle = cfg.oracle_mode == "on"
    for pt in points:
        table = run_ensemble(cfg.protocol, cfg.n_shots, pt.p_e_init, cfg.params, pt.errors, cfg.timeline,
                             cfg.master_seed, cfg.dt, cfg.threads)
        s = ensemble_summary(table, pt.beta, pt.errors, cfg.beta_source, cfg.bootstrap, cfg.master_seed)
        row = [pt.param]
        row += [getattr(s, f) for f in SWEEP_COLUMNS.values()]
        row += [getattr(s, f) for f in STDERR_COLUMNS.values()]
        row += [s.n_shots, s.n_excluded, s.beta_eps, s.eps_fb, s.lambda_fb_cells]
        if oracle:
            exact = exact_outcome_distribution(cfg.protocol, pt.p_e_init, cfg.params, pt.errors, cfg.timeline, cfg.dt)
            ex = exact_summary(exact, pt.beta, pt.errors)
            row += [ex[f] for f in ORACLE_COLUMNS.values()]
        yield row, s.flags


def write_manifest(path: Path, cfg: RunConfig, command: str, files: list[str]) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "master_seed": cfg.master_seed,
        "config_sha256": cfg.config_hash(),
        "config": cfg.raw,
        "effective": {"protocol": cfg.protocol, "n_shots": cfg.n_shots, "bootstrap": cfg.bootstrap,
                      "dt_us": cfg.dt, "p_e_init": cfg.p_e_init, "timeline": cfg.timeline.to_list()},
        "numpy": np.__version__,
        "files": files,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    raise TypeError(type(o).__name__)


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    oracle = cfg.oracle_mode == "on"
    if cfg.sweep_axis is None:
        raise ConfigurationError("sweep command needs a 'sweep' section")
    _require_shots(cfg)
    cfg.points()  # validate the grid before any output is written
    rows = sweep_rows(cfg)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sweep_header(oracle))
        for row, flags in rows:
            w.writerow([fmt(v) for v in row])
            fh.flush()
            for flag in flags:
                log.warning("param=%s: %s", fmt(row[0]), flag)
    write_manifest(out / "manifest.json", cfg, "sweep", [csv_path.name])
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_single(cfg: RunConfig, out: Path) -> int:
    _require_shots(cfg)
    table = run_ensemble(cfg.protocol, cfg.n_shots, cfg.p_e_init, cfg.params, cfg.errors, cfg.timeline,
                         cfg.master_seed, cfg.dt, cfg.threads)
    s = ensemble_summary(table, cfg.beta, cfg.errors, cfg.beta_source, cfg.bootstrap, cfg.master_seed)
    for flag in s.flags:
        log.warning("%s", flag)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"protocol": cfg.protocol, **s.to_dict()}
    if cfg.oracle_mode == "on":
        exact = exact_outcome_distribution(cfg.protocol, cfg.p_e_init, cfg.params, cfg.errors, cfg.timeline, cfg.dt)
        doc["oracle"] = exact_summary(exact, cfg.beta, cfg.errors)
    text = json.dumps(doc, indent=2, default=_json_default)
    (out / "summary.json").write_text(text + "\n")
    with (out / "shots.csv").open("w", newline="") as fh:
        table.to_csv(fh)
    write_manifest(out / "manifest.json", cfg, "single", ["summary.json", "shots.csv"])
    print(text)
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path, fault: str | None = None) -> int:
    ctx = inject_fault(fault) if fault else contextlib.nullcontext()
    with ctx:
        results = validation.run_all(cfg)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for r in results:
        lines.append(f"[{r.status.upper():4s}] {r.name}: {r.detail}")
    failed = [r.name for r in results if r.failed]
    lines.append(f"FAILED: {', '.join(failed)}" if failed else "all checks passed")
    report = "\n".join(lines)
    print(report)
    (out / "validate.txt").write_text(report + "\n")
    doc = {"fault": fault, "passed": not failed, "failed": failed,
           "checks": [dataclasses.asdict(r) for r in results]}
    (out / "validate.json").write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdemon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qdemon {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--threads", type=int, help="worker threads (overrides config)")
        sp.add_argument("--out", type=Path, help="output directory (overrides config)")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("sweep", help="one ensemble summary per grid point, written as CSV"))
    common(sub.add_parser("single", help="one ensemble summary as JSON"))
    v = sub.add_parser("validate", help="engine/oracle equivalence, norm, dt and theorem checks")
    common(v)
    v.add_argument("--inject-fault", choices=KNOWN_FAULTS, help="negative control: break an invariant on purpose")
    sub.add_parser("schema", help="print the configuration JSON schema")
    sub.add_parser("defaults", help="print a configuration with every default filled in")
    return p


def _resolve(args) -> RunConfig:
    cfg = parse_config({}) if args.config is None else load_config(args.config)
    raw = dict(cfg.raw)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("--seed must be non-negative")
        raw["master_seed"] = args.seed
    if args.out is not None:
        raw.setdefault("output", {})
        raw["output"] = {**raw["output"], "dir": str(args.out)}
    cfg = parse_config(raw)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg.threads = args.threads
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    if args.command == "defaults":
        print(json.dumps(default_document(), indent=2))
        return EXIT_OK
    try:
        cfg = _resolve(args)
        out = Path(cfg.out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "single":
            return cmd_single(cfg, out)
        return cmd_validate(cfg, out, args.inject_fault)
    except ConfigurationError as exc:
        print(f"qdemon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # parameter combinations rejected by the engine (dt too coarse, bad timeline, ...)
        print(f"qdemon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
