"""Command line entry points.

Every subcommand except `report` takes a JSON config file
and writes CSV/JSON outputs.  Exit status is 0 once the work completes, even if
individual AVQITE runs fail to converge; configuration and I/O problems exit
with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness
from .avqite import AvqiteConfig, Reference, run
from .encoding import Encoding
from .exactdiag import CrossingError, EDError, binder_crossing, ground_state, sector_crossing
from .model import spec_from_config

log = logging.getLogger("spin1_avqite")


class ConfigError(ValueError):
    pass


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def _outdir(cfg: dict, override: str | None) -> Path:
    out = Path(override or cfg.get("output", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def _write_scan_csv(path: Path, scan) -> None:
    cols = list(scan.observables)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([scan.parameter] + cols)
        for i, x in enumerate(scan.grid):
            w.writerow([float(x)] + [float(scan.observables[c][i]) for c in cols])


def _grid(cfg: dict, key: str) -> np.ndarray:
    g = _require(cfg, key)
    if isinstance(g, dict):
        return np.linspace(g["start"], g["stop"], int(g["num"]))
    return np.asarray(g, dtype=float)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> None:
    cfg = _load_json(args.config)
    spec = spec_from_config(_require(cfg, "model"))
    ref = _require(cfg, "reference")
    res = run(spec, Encoding.parse(_require(cfg, "encoding")), cfg.get("pool", "maximal"),
              Reference(ref["spins"], ref.get("basis", "z")),
              AvqiteConfig.from_dict(cfg.get("avqite", {})))
    out = _outdir(cfg, args.output)
    harness.write_trajectory_csv(res, out / "trajectory.csv")
    _write_json(out / "result.json", res.to_dict())
    f = res.final
    print(f"E={f['energy']:.8f} E0={f['exact_energy']:.8f} F={f['fidelity']:.6f} "
          f"<P>={f['projector']:.6f} NCX={f['n_cx_final']} steps={f['steps']} "
          f"({f['halted_reason']})")


def cmd_sweep(args) -> None:
    cfg = _load_json(args.config)
    model_cfg = _require(cfg, "model")
    sizes = model_cfg["L"] if isinstance(model_cfg["L"], list) else [model_cfg["L"]]
    config = AvqiteConfig.from_dict(cfg.get("avqite", {}))
    encodings = cfg.get("encodings", [e.value for e in Encoding])
    pools = cfg.get("pools", ["minimal", "maximal"])
    bases = cfg.get("bases", ["z", "x"])
    results = []
    for L in sizes:
        spec = spec_from_config({**model_cfg, "L": L})
        res, _ = harness.sweep(spec, encodings, pools, bases, config,
                               references=cfg.get("references"),
                               workers=int(cfg.get("workers", 1)), progress=args.verbose)
        results.extend(res)
    out = _outdir(cfg, args.output)
    harness.save_results(results, out / "results.jsonl")
    summary = harness.report(results, out, trajectories=bool(cfg.get("trajectories", False)))
    print((out / "summary.txt").read_text(), end="")
    o = summary["overall"]
    print(f"{o['total']} runs, {o['successes']} successful")


def cmd_report(args) -> None:
    results = harness.load_results(Path(args.results))
    out = Path(args.output or Path(args.results).parent)
    harness.report(results, out, trajectories=args.trajectories)
    print((out / "summary.txt").read_text(), end="")


def cmd_fit(args) -> None:
    cfg = _load_json(args.config)
    pts = _require(cfg, "points")
    if isinstance(pts, dict):
        pts = pts.items()
    fit = harness.fit_scaling([(float(L), float(n)) for L, n in pts])
    d = asdict(fit)
    if args.output:
        _write_json(Path(args.output), d)
    print(json.dumps(d, indent=2))


def cmd_ed(args) -> None:
    cfg = _load_json(args.config)
    spec = spec_from_config(_require(cfg, "model"))
    ed = ground_state(spec, k=int(cfg.get("k", 4)), method=cfg.get("method", "auto"))
    out = _outdir(cfg, args.output)
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy"])
        for i, e in enumerate(ed.energies):
            w.writerow([i, float(e)])
    _write_json(out / "ed.json", {"model": asdict(spec), "ground_energy": ed.ground_energy,
                                  "degeneracy": ed.degeneracy,
                                  "energies": [float(e) for e in ed.energies]})
    print(f"E0={ed.ground_energy:.12f} degeneracy={ed.degeneracy}")


def cmd_binder(args) -> None:
    cfg = _load_json(args.config)
    template = spec_from_config({**_require(cfg, "model"), "L": 2})
    scan = binder_crossing(template, _require(cfg, "sizes"), _grid(cfg, "grid"),
                           tol=float(cfg.get("tol", 1e-4)))
    out = _outdir(cfg, args.output)
    _write_scan_csv(out / "binder.csv", scan)
    _write_json(out / "binder.json", scan.to_dict())
    print(f"crossing |hx| = {scan.crossing:.5f} ({scan.meta['boundary']} boundary); "
          f"pairs {scan.pair_crossings}")


def cmd_sector_cross(args) -> None:
    cfg = _load_json(args.config)
    model_cfg = {**_require(cfg, "model")}
    model_cfg.setdefault("boundary", "twisted")
    spec = spec_from_config(model_cfg)
    scan = sector_crossing(spec, _grid(cfg, "grid"), tol=float(cfg.get("tol", 1e-6)))
    out = _outdir(cfg, args.output)
    _write_scan_csv(out / "sector.csv", scan)
    _write_json(out / "sector.json", scan.to_dict())
    print(f"crossing D = {scan.crossing:.5f} (L={spec.L})")


COMMANDS = {
    "run": (cmd_run, "single AVQITE simulation"),
    "sweep": (cmd_sweep, "reference-state sweep over encodings, pools and bases"),
    "report": (cmd_report, "rebuild reports from a results.jsonl file"),
    "fit": (cmd_fit, "power-law fit of CNOT counts against chain length"),
    "ed": (cmd_ed, "exact diagonalization of the spin-1 chain"),
    "binder": (cmd_binder, "Binder cumulant crossing scan"),
    "sector-cross": (cmd_sector_cross, "twisted-boundary symmetry-sector level crossing"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spin1-avqite", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        if name == "report":
            s.add_argument("results", help="results.jsonl written by sweep")
            s.add_argument("--trajectories", action="store_true")
        else:
            s.add_argument("config", help="JSON config file")
        s.add_argument("-o", "--output", help="output directory (or file for fit)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command][0](args)
    except (ConfigError, CrossingError, EDError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
