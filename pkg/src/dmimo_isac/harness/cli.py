"""Command-line entry point: ``dmimo-isac <subcommand> [--config cfg.json] [--seed n] [--out dir]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..estimator import EchoSet, SensingSetup, refine_coherent, scan_and_detect, synthesize_echoes
from ..fisher import coverage
from .config import ScenarioConfig, paper_scenario
from .runner import (AXES, METRICS, TAG_COVERAGE, TAG_NOISE, detection_configs, prepare, run_trial, stream,
                     sweep)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else paper_scenario()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = _parse_value(value)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg.validate()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_config(args) -> int:
    print(_load_config(args).to_json())
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    rec = run_trial(cfg, cfg.seed, args.trial)
    out = _out_dir(args)
    (out / "record.json").write_text(rec.to_json() + "\n")
    if args.save_echoes:
        st = prepare(cfg, cfg.seed, args.trial)
        echoes = synthesize_echoes(st.scenario, st.assignment, st.frame, stream(cfg.seed, args.trial, TAG_NOISE))
        echoes.save(out / "echoes.bin")
    print(f"sum SE {rec.se['sum_se']:.3f} bit/s/Hz")
    print("coherent PEB [m]    " + " ".join(f"{v:.3e}" for v in rec.peb["coherent"]))
    print("non-coherent PEB [m]" + " ".join(f" {v:.3e}" for v in rec.peb["noncoherent"]))
    if rec.estimation is not None:
        print(f"detections {len(rec.detections)}")
        print("position errors [m] " + " ".join(f"{v:.3e}" for v in rec.estimation["errors"]))
    print(f"record written to {out / 'record.json'}")
    return 0


def _echoes_and_setup(cfg, trial, echo_path=None):
    st = prepare(cfg, cfg.seed, trial)
    if echo_path is None:
        echoes = synthesize_echoes(st.scenario, st.assignment, st.frame, stream(cfg.seed, trial, TAG_NOISE))
    else:
        echoes = EchoSet.load(echo_path)
    setup = SensingSetup.from_scenario(st.scenario, st.assignment, st.frame)
    if echoes.y.shape != (setup.num_rx, setup.num_instants, setup.num_antennas):
        raise ConfigurationError(f"echo shape {echoes.y.shape} does not match the configured scenario")
    return st, echoes, setup


def cmd_scan(args) -> int:
    cfg = _load_config(args)
    st, echoes, setup = _echoes_and_setup(cfg, args.trial, args.echoes)
    grid, cfar, _ = detection_configs(cfg)
    cmap = scan_and_detect(echoes.y, setup, st.scenario.region, grid, cfar, pfa_scope=cfg.detection.scope)
    out = _out_dir(args)
    cmap.save(out / "costmap.txt")
    with open(out / "detections.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "cost", "statistic", "x_est", "y_est"])
        for d in cmap.detections:
            wr.writerow([*map(repr, map(float, d.position)), repr(d.cost), repr(d.statistic),
                         *map(repr, map(float, d.estimate))])
    print(f"{len(cmap.detections)} detection(s); map {cmap.shape[1]} x {cmap.shape[0]} written to {out}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    st, echoes, setup = _echoes_and_setup(cfg, args.trial, args.echoes)
    grid, cfar, refine = detection_configs(cfg)
    cmap = scan_and_detect(echoes.y, setup, st.scenario.region, grid, cfar, pfa_scope=cfg.detection.scope)
    coarse = np.array([d.position for d in cmap.detections]).reshape(-1, 2)
    x0, y0, x1, y1 = st.scenario.region
    report = refine_coherent(echoes.y, setup, coarse, refine, truth=st.scenario.target_positions,
                             miss_penalty=float(np.hypot(x1 - x0, y1 - y0)))
    out = _out_dir(args)
    (out / "estimate.json").write_text(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    for p in report.refined:
        print(f"target at ({p[0]:.4f}, {p[1]:.4f})")
    return 0


def cmd_select(args) -> int:
    cfg = _load_config(args)
    st = prepare(cfg, cfg.seed, args.trial)
    a = st.assignment
    print(json.dumps(a.to_dict()))
    return 0


def cmd_coverage(args) -> int:
    cfg = _load_config(args)
    st = prepare(cfg, cfg.seed, args.trial)
    sc = st.scenario
    thr = cfg.coverage.threshold_wavelengths * sc.wavelength
    cov = coverage(sc, st.assignment, st.frame, thr, cfg.coverage.samples, stream(cfg.seed, args.trial, TAG_COVERAGE))
    out = _out_dir(args)
    cov.save_csv(out / "coverage.csv")
    print(f"f_SC({thr:.4g} m) = {cov.coverage:.4f} over {len(cov.peb)} points")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [_parse_value(v) for v in args.values.split(",")]
    metrics = args.metrics.split(",")
    rows, _ = sweep(cfg, args.axis, values, args.trials, metrics, workers=args.workers)
    out = _out_dir(args)
    path = out / f"sweep_{args.axis}.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    for r in rows:
        print(f"{r['axis']}={r['value']!s:>6} {r['metric']:>16} mean {r['mean']:.4g} +- {r['ci95']:.2g}")
    print(f"table written to {path}")
    return 0


def cmd_validate(args) -> int:
    from ..validation import run_all

    results = run_all(args.seed or 0)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON config (default: reference scenario)")
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    common.add_argument("--out", type=str, default="out", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. radio.power_dbm=30 (repeatable)")
    common.add_argument("--trial", type=int, default=0, help="trial index within the seed")

    parser = argparse.ArgumentParser(prog="dmimo-isac", description="Phase-coherent D-MIMO ISAC simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("config", parents=[common], help="print the effective config").set_defaults(func=cmd_config)
    p = sub.add_parser("simulate", parents=[common], help="one full trial")
    p.add_argument("--save-echoes", action="store_true", help="also write the echo set (echoes.bin)")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("scan", parents=[common], help="non-coherent cost map raster and detections")
    p.add_argument("--echoes", type=str, default=None, help="echo-set file (default: synthesize)")
    p.set_defaults(func=cmd_scan)
    p = sub.add_parser("estimate", parents=[common], help="detect and refine on a stored echo set")
    p.add_argument("--echoes", type=str, default=None, help="echo-set file (default: synthesize)")
    p.set_defaults(func=cmd_estimate)
    sub.add_parser("select", parents=[common], help="print the mode assignment").set_defaults(func=cmd_select)
    sub.add_parser("coverage", parents=[common], help="PEB coverage map").set_defaults(func=cmd_coverage)
    p = sub.add_parser("sweep", parents=[common], help="axis sweep over trials")
    p.add_argument("--axis", choices=sorted(AXES), required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--metrics", default="sum_se,peb_coherent,peb_noncoherent",
                   help="comma-separated subset of " + ",".join(METRICS))
    p.set_defaults(func=cmd_sweep)
    sub.add_parser("validate", parents=[common], help="oracle checks on small instances").set_defaults(
        func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
