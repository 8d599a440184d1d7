"""Command-line surface: run, verify, stats.

Exit codes: 0 success, 2 configuration error, 3 integrator blow-up,
4 invariant-suite or bound failure in verify mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import diagnostics as dg
from . import dynamics as dyn
from . import io as nio
from . import spectral as sp
from .config import load_config
from .errors import BlowUpError, ConfigError, ZeroForceError
from .experiment import resolve_output_dir, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_VERIFY = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nudgevisc",
        description="Twin-experiment viscosity recovery for the 2D Navier-Stokes "
        "equations via spectral nudging.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run the experiment configured in FILE"),
        ("verify", "run the spectral invariant suites on the configured grid"),
        ("stats", "print force statistics and the condition report (no integration)"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="path to the INI-style config file")
        if name == "run":
            s.add_argument(
                "--output-dir",
                default=None,
                help="overrides [run] output_dir and $NUDGEVISC_OUTPUT_DIR",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "stats":
        grid = sp.grid_create(cfg.grid_n)
        try:
            cfg.params.validate_with_grid(grid)
            g_field = dyn.make_forcing(cfg.params.forcing, grid)
            stats = dg.force_stats(g_field, cfg.params)
        except (ValueError, ZeroForceError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        conditions = dg.verify_mu_conditions(cfg.params, stats)
        doc = nio.force_stats_to_dict(stats, conditions)
        print(json.dumps(nio._sanitize(doc), indent=1, sort_keys=True))
        return EXIT_OK

    if args.command == "verify":
        from dataclasses import replace

        cfg = replace(cfg, run=replace(cfg.run, mode="verify"))
        summary = run_experiment(cfg)
        failed = [c for c in summary.invariant_suite if not c["passed"]]
        for c in summary.invariant_suite:
            status = "pass" if c["passed"] else "FAIL"
            print(f"{status}  {c['name']}: worst {c['worst']:.3e} (tol {c['tol']:.1e})")
        return EXIT_OK if not failed else EXIT_VERIFY

    # run
    try:
        summary = run_experiment(cfg, output_dir=args.output_dir)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_output_dir(cfg, args.output_dir)
    print(f"mode={summary.mode} grid_n={summary.grid_n} seed={summary.seed}")
    if summary.mode == "twin":
        print(
            f"accepted={summary.n_accepted} skipped={summary.n_skipped} "
            f"nu_final={summary.nu_final!r} rel_err={summary.final_rel_error!r}"
        )
    print(f"wall_time={summary.wall_time:.1f}s artifacts in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
