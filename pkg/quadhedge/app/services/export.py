"""CSV and JSON writers for every artifact the CLI emits.

Headers and column order are fixed per artifact; nothing time- or host-dependent
is written, so a rerun with the same inputs reproduces the files byte for byte.
"""

from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd
from pydantic import BaseModel

from quadhedge.app.core.config import Settings, get_settings
from quadhedge.app.schemas.calibration import SurfaceGrid
from quadhedge.app.schemas.ledger import HedgeLedger, ledger_columns

logger = logging.getLogger(__name__)

PRICE_COLUMNS = ["model", "quantity", "value"]

PRICE_FILE = "price.csv"
LEDGER_FILE = "ledger.csv"
SUMMARY_FILE = "summary.json"
CALIBRATION_FILE = "calibration.json"
GAMMA_SURFACE_FILE = "gamma_surface.csv"
PSI_SURFACE_FILE = "psi_surface.csv"


def _target(out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _write_frame(frame: pd.DataFrame, path: Path, settings: Settings) -> Path:
    frame.to_csv(path, index=False, float_format=settings.float_format, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def _write_json(payload: BaseModel, path: Path) -> Path:
    # pydantic writes NaN and inf as null
    text = payload.model_dump_json(indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def price_frame(model: str, rows: dict[str, float]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"model": model, "quantity": name, "value": value} for name, value in rows.items()],
        columns=PRICE_COLUMNS,
    )


def write_price_table(out_dir: Path, model: str, rows: dict[str, float], settings: Settings | None = None) -> Path:
    settings = settings or get_settings()
    return _write_frame(price_frame(model, rows), _target(out_dir, PRICE_FILE), settings)


def ledger_frame(model: str, ledgers: list[HedgeLedger]) -> pd.DataFrame:
    if not ledgers:
        return pd.DataFrame(columns=ledger_columns(model))
    return pd.concat([ledger.to_frame() for ledger in ledgers], ignore_index=True)


def write_ledger(out_dir: Path, model: str, ledgers: list[HedgeLedger], settings: Settings | None = None) -> Path:
    settings = settings or get_settings()
    return _write_frame(ledger_frame(model, ledgers), _target(out_dir, LEDGER_FILE), settings)


def write_summary(out_dir: Path, summary: BaseModel) -> Path:
    return _write_json(summary, _target(out_dir, SUMMARY_FILE))


def write_calibration(out_dir: Path, result: BaseModel) -> Path:
    return _write_json(result, _target(out_dir, CALIBRATION_FILE))


def write_surface(out_dir: Path, surface: SurfaceGrid, name: str, settings: Settings | None = None) -> Path:
    settings = settings or get_settings()
    return _write_frame(surface.to_frame(), _target(out_dir, name), settings)
