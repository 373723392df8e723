"""Command-line entry point: ``occmot {track,simulate,evaluate,ablate,plotdata}``.

Exit status is 0 on success, 1 for usage errors (bad arguments or config
keys) and 2 for data errors (missing or malformed input files).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import experiments, formats
from .metrics import evaluate
from .simulation import SUITES, generate, standard_suite
from .tracker import run_sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

logger = logging.getLogger("occmot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _run_config(args) -> formats.RunConfig:
    cfg = formats.RunConfig()
    try:
        if getattr(args, "config", None):
            cfg = formats.load_config(args.config, cfg)
        pairs = [formats.split_pair(s) for s in getattr(args, "set", None) or []]
        return formats.config_from_pairs(pairs, cfg)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _pick(cli_value, cfg_value):
    return cli_value if cli_value is not None else (cfg_value or None)


def cmd_track(args) -> int:
    cfg = _run_config(args)
    det = _pick(args.det, cfg.det)
    out = _pick(args.out, cfg.results)
    if not det or not out:
        raise UsageError("track needs --det and --out (or det/results config keys)")
    rows = formats.parse_mot(det)
    observations = formats.rows_to_observations(rows)
    formats.attach_sidecars(rows, observations, _pick(args.embeddings, cfg.embeddings), _pick(args.maps, cfg.maps))
    warps_path = _pick(args.warps, cfg.warps)
    warps = formats.read_warps(warps_path) if warps_path else None
    proj_path = _pick(args.projection, cfg.projection)
    projection = formats.read_projection(proj_path) if proj_path else None
    interpolate = cfg.interpolate and not args.no_interpolate
    results, _ = run_sequence(observations, cfg.effective_tracker(), warps, projection, interpolate)
    written = formats.write_results(out, results)
    logger.info("wrote %d rows for %d tracks to %s", len(written), len(results), out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    name = args.scenario or cfg.scenario
    seed = args.seed if args.seed is not None else cfg.seed
    try:
        spec = standard_suite(name, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = formats.export_simulation(generate(spec), args.out_dir)
    for key, p in sorted(paths.items()):
        print(f"{key}={p}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gt = formats.rows_to_table(formats.parse_mot(args.gt))
    pred = formats.rows_to_table(formats.parse_mot(args.pred))
    report = evaluate(gt, pred, args.iou)
    text = formats.format_report(report)
    sys.stdout.write(text)
    if args.report:
        formats.write_report(args.report, report)
    if args.events:
        formats.write_events(args.events, report)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    suites = SUITES if args.suite == "combined" else (args.suite,)
    seeds = range(args.seed, args.seed + args.seeds)
    sims = experiments.simulate_suite(suites, seeds)
    rows = experiments.ablation_sweep(args.param, sims, experiments.sweep_values(args.step),
                                      cfg.effective_tracker(), args.workers)
    text = formats.format_table([args.param, "IDF1", "MOTA", "IDSw"],
                                [(r.value, r.idf1, r.mota, r.idsw) for r in rows])
    sys.stdout.write(text)
    if args.out:
        formats.atomic_write(args.out, text)
    return EXIT_OK


def cmd_plotdata(args) -> int:
    rows = formats.parse_mot(args.results)
    text = formats.format_plotdata(rows)
    if args.out:
        formats.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="occmot", description="Occlusion-aware multi-pedestrian tracking tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="flat key=value run configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    t = sub.add_parser("track", help="track detections and write MOTChallenge results")
    with_config(t)
    t.add_argument("--det", help="MOTChallenge detection file")
    t.add_argument("--embeddings", help="N x 1 x C embedding sidecar")
    t.add_argument("--maps", help="directory of <row>.feat / <row>.heat tensors")
    t.add_argument("--warps", help="warp file, 6 values per line")
    t.add_argument("--projection", help="local-neck weights, C x 6C x 1 tensor")
    t.add_argument("--out", help="results file")
    t.add_argument("--no-interpolate", action="store_true", help="skip gap interpolation")
    t.set_defaults(func=cmd_track)

    s = sub.add_parser("simulate", help="generate a seeded scenario as gt/det/sidecar files")
    with_config(s)
    s.add_argument("--scenario", choices=SUITES)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="CLEAR and IDF1 metrics of results against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--report", help="write key=value report here")
    e.add_argument("--events", help="write per-frame FP/FN/IDSW events here")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="sweep alpha0 or theta_v over [0, 1] on a scenario suite")
    with_config(a)
    a.add_argument("--param", choices=experiments.SWEEP_PARAMS, default="alpha0")
    a.add_argument("--suite", choices=("combined",) + SUITES, default="combined")
    a.add_argument("--seeds", type=int, default=5, help="number of seeds per scenario family")
    a.add_argument("--seed", type=int, default=0, help="first seed")
    a.add_argument("--step", type=float, default=0.1)
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--out", help="write the CSV table here")
    a.set_defaults(func=cmd_ablate)

    pl = sub.add_parser("plotdata", help="per-track center polylines as CSV")
    pl.add_argument("--results", required=True)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plotdata)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"occmot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, formats.FormatError, ValueError, OSError) as exc:
        print(f"occmot: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
