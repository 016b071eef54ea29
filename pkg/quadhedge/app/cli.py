"""Command-line front end: ``quadhedge {price,hedge,calibrate,surface}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure,
4 every gamma-surface cell failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from quadhedge.app.core.config import Settings, enforce_runtime_limits, get_settings
from quadhedge.app.core.errors import HedgingError
from quadhedge.app.schemas.scenario import ScenarioConfig
from quadhedge.app.services import export, scenario_service

logger = logging.getLogger("quadhedge")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_ALL_CELLS_FAILED = 4

MODELS = ["binomial", "diffusion", "sv", "vov", "jump"]


def cmd_price(config: ScenarioConfig, out: Path, settings: Settings) -> int:
    table = scenario_service.run_price(config, settings)
    frame = export.price_frame(table.model, scenario_service.price_rows(table))
    print(frame.to_string(index=False))
    export.write_price_table(out, table.model, scenario_service.price_rows(table), settings)
    return EXIT_OK


def cmd_hedge(config: ScenarioConfig, out: Path, settings: Settings) -> int:
    run = scenario_service.run_hedge(config, settings)
    summary = run.summary
    export.write_ledger(out, summary.model, run.ledgers, settings)
    export.write_summary(out, summary)
    print(
        f"{summary.model}: premium {summary.premium:.6g}, terminal rms {summary.terminal.rms:.6g}, "
        f"replication rms/premium {summary.replication_rms_relative:.4g}, max |U| {summary.max_abs_residual:.6g}"
    )
    return EXIT_OK


def cmd_calibrate(config: ScenarioConfig, out: Path, settings: Settings) -> int:
    result = scenario_service.run_calibrate(config, settings)
    export.write_calibration(out, result)
    state = "converged" if result.converged else "NOT converged"
    print(f"gamma {result.gamma:.6g} ({state} after {len(result.iterations)} iterations, p_hat {result.p_hat:.4f})")
    return EXIT_OK


def cmd_surface(config: ScenarioConfig, out: Path, settings: Settings) -> int:
    psi = scenario_service.run_psi_surface(config, settings)
    export.write_surface(out, psi, export.PSI_SURFACE_FILE, settings)
    if config.calibration.prices is None:
        return EXIT_OK
    gamma = scenario_service.run_gamma_surface(config, settings)
    export.write_surface(out, gamma, export.GAMMA_SURFACE_FILE, settings)
    if scenario_service.all_cells_failed(gamma):
        logger.error("Every gamma surface cell failed")
        return EXIT_ALL_CELLS_FAILED
    return EXIT_OK


COMMANDS = {
    "price": cmd_price,
    "hedge": cmd_hedge,
    "calibrate": cmd_calibrate,
    "surface": cmd_surface,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file of dotted key=value lines")
    common.add_argument("--seed", type=int, help="top-level RNG seed")
    common.add_argument("--paths", type=int, help="number of simulated paths")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--model", choices=MODELS, help="price dynamics")
    common.add_argument("--workers", type=int, help="thread-pool size (results do not depend on it)")
    common.add_argument("--prices", type=Path, help="price CSV with date,close columns")

    parser = argparse.ArgumentParser(prog="quadhedge", description="Mean-variance optimal hedging engine")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="value and partials at t=0")
    sub.add_parser("hedge", parents=[common], help="simulate the hedge, write ledger and summary")
    sub.add_parser("calibrate", parents=[common], help="fit gamma to a price series")
    sub.add_parser("surface", parents=[common], help="psi surface, plus the gamma surface when prices are given")
    return parser


def _report_validation(exc: ValidationError) -> None:
    for err in exc.errors():
        loc = ".".join(str(part) for part in err.get("loc", ()) if part is not None)
        print(f"{loc or 'input'}: {err.get('msg', 'Invalid value')}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.workers is not None:
        settings = settings.model_copy(update={"workers": args.workers})
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        enforce_runtime_limits(settings, logger)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT

    try:
        config = scenario_service.load_scenario(args.config) if args.config else ScenarioConfig()
        config = scenario_service.with_overrides(
            config, seed=args.seed, n_paths=args.paths, model=args.model, prices=args.prices
        )
        out = args.out or config.outputs.dir or settings.output_dir
        return COMMANDS[args.command](config, out, settings)
    except ValidationError as exc:
        _report_validation(exc)
        return EXIT_INPUT
    except HedgingError as exc:
        print(f"{exc.field or exc.error_code}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, ZeroDivisionError, FloatingPointError) as exc:
        logger.exception("Numerical failure: %s", exc)
        print(f"numerical_error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
