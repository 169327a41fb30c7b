"""
Environment-driven settings for TranSteg entry points.

Values come from the process environment after ``load_dotenv``; a ``.env``
file in the working directory is honoured the same way the CLI loads it.
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

DEFAULT_LEDGER_PATH = Path(__file__).resolve().parent / "transteg_ledger.tsv"


class TranStegSettings(BaseModel):
    ledger_path: Path = DEFAULT_LEDGER_PATH
    log_level: str = "WARNING"
    log_json: bool = False
    sweep_workers: int = Field(default=4, ge=1, le=64)

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.strip().upper() or "WARNING"


def _truthy(raw: Optional[str]) -> bool:
    return (raw or "").strip().lower() in ("1", "true", "yes", "on")


def load_settings(ledger_override: Optional[str] = None) -> TranStegSettings:
    """Build settings from the environment; an explicit ledger path wins over TRANSTEG_LEDGER."""
    load_dotenv(override=True)

    ledger = ledger_override or os.getenv("TRANSTEG_LEDGER") or DEFAULT_LEDGER_PATH
    return TranStegSettings(
        ledger_path=Path(ledger),
        log_level=os.getenv("TRANSTEG_LOG_LEVEL", "WARNING"),
        log_json=_truthy(os.getenv("TRANSTEG_LOG_JSON")),
        sweep_workers=int(os.getenv("TRANSTEG_SWEEP_WORKERS", "4")),
    )
