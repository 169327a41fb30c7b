"""
TranSteg planner: feasibility matrix, steganographic bandwidth, quality/cost
ledger, class taxonomy and recommendations.

The MOS figures cannot be computed here (no PESQ, no licensed codecs); they are
joined from the read-only ledger file shipped next to this module.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from transteg_codecs import CodecDescriptor, CodecId, lookup, registry
from transteg_config import DEFAULT_LEDGER_PATH
from transteg_errors import Infeasible, LedgerError, MissingCost

logger = logging.getLogger(__name__)

OVERT_CODECS: Tuple[CodecId, ...] = (
    CodecId.G711, CodecId.SPEEX7, CodecId.ILBC, CodecId.SPEEX4, CodecId.G7231, CodecId.SPEEX2,
)
NOT_RECOMMENDED_OVERT = (CodecId.SPEEX4, CodecId.G7231)

DEFAULT_LOSSLESS_KBPS = 31.11
SIGNALING_KBPS = 0.4  # one byte per 20-ms frame

UNACCEPTABLE_COST = 1.0
UNACCEPTABLE_OVERALL = 3.0

CodecRef = Union[str, CodecId, CodecDescriptor]


class PairClass(str, Enum):
    CLASS0 = "Class0"
    CLASS1 = "Class1"
    CLASS2 = "Class2"
    UNACCEPTABLE = "Unacceptable"
    UNKNOWN = "Unknown"


EXPECTED_RECOMMENDED: Dict[PairClass, int] = {
    PairClass.CLASS0: 1,
    PairClass.CLASS1: 4,
    PairClass.CLASS2: 5,
}

_CLASS_SHORT = {
    PairClass.CLASS0: "C0",
    PairClass.CLASS1: "C1",
    PairClass.CLASS2: "C2",
    PairClass.UNACCEPTABLE: "U",
    PairClass.UNKNOWN: "?",
}


class PairEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    overt_id: CodecId
    covert_id: CodecId
    feasible: bool
    steg_bandwidth_kbps: Optional[float] = None
    per_packet_capacity_bytes: Optional[int] = None
    cost_mos: Optional[float] = None
    cost_ci_mos: Optional[float] = None
    overall_quality_mos: Optional[float] = None
    pair_class: PairClass = PairClass.UNKNOWN

    @property
    def key(self) -> Tuple[CodecId, CodecId]:
        return self.overt_id, self.covert_id


@dataclass(frozen=True)
class QualityBaseline:
    single_transcode_mos: float
    double_transcode_mos: float


@dataclass(frozen=True)
class LosslessMeasurement:
    mean: float
    stdev: float
    minimum: float
    maximum: float
    ci95: float
    samples: int


@dataclass
class CostLedger:
    """(overt, covert) -> (cost, ci, overall) plus codec -> quality baselines."""
    pairs: Dict[Tuple[CodecId, CodecId], Tuple[float, float, float]] = field(default_factory=dict)
    baselines: Dict[CodecId, QualityBaseline] = field(default_factory=dict)
    # (overt, covert or None, column) -> where that value was transcribed from
    sources: Dict[Tuple[CodecId, Optional[CodecId], str], str] = field(default_factory=dict)
    path: Optional[Path] = None


# =============================================================================
# LEDGER
# =============================================================================

_LEDGER_COLUMNS = [
    "kind", "overt", "covert", "cost_mos", "cost_ci_mos", "overall_mos", "single_mos", "double_mos",
]
_ledger_cache: Dict[Path, CostLedger] = {}


def _cell_sources(value, columns: Sequence[str]) -> Dict[str, str]:
    """Split "col,col=source;col=source"; a bare source covers every column of the row."""
    if pd.isna(value) or not str(value).strip():
        return {}
    sources = {}
    for entry in str(value).split(";"):
        names, sep, source = entry.partition("=")
        if not sep:
            sources.update({column: entry.strip() for column in columns})
            continue
        for name in names.split(","):
            name = name.strip()
            if name not in columns:
                raise ValueError(f"provenance names unknown column {name!r}")
            sources[name] = source.strip()
    return sources


def _number(row, column: str, where: str) -> float:
    value = row[column]
    if pd.isna(value):
        raise LedgerError(f"{where}: missing {column}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise LedgerError(f"{where}: {column}={value!r} is not a number") from None


def load_ledger(path: Optional[Union[str, Path]] = None) -> CostLedger:
    """Parse the tab-separated ledger; every problem surfaces as LedgerError."""
    path = Path(path) if path is not None else DEFAULT_LEDGER_PATH
    try:
        frame = pd.read_csv(path, sep="\t", comment="#", dtype=str, keep_default_na=False, na_values=[""])
    except FileNotFoundError:
        raise LedgerError(f"ledger file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise LedgerError(f"cannot parse ledger {path}: {exc}") from None

    missing = [column for column in _LEDGER_COLUMNS if column not in frame.columns]
    if missing:
        raise LedgerError(f"ledger {path} lacks columns: {', '.join(missing)}")

    ledger = CostLedger(path=path)
    for line, row in frame.iterrows():
        where = f"{path.name} row {line + 1}"
        try:
            overt = lookup(row["overt"]).id
            kind = str(row["kind"]).strip()
            if kind == "baseline":
                ledger.baselines[overt] = QualityBaseline(
                    _number(row, "single_mos", where), _number(row, "double_mos", where)
                )
                columns, covert = ("single_mos", "double_mos"), None
            elif kind == "pair":
                covert = lookup(row["covert"]).id
                ledger.pairs[(overt, covert)] = (
                    _number(row, "cost_mos", where),
                    _number(row, "cost_ci_mos", where),
                    _number(row, "overall_mos", where),
                )
                columns = ("cost_mos", "cost_ci_mos", "overall_mos")
            else:
                raise LedgerError(f"{where}: unknown row kind {kind!r}")
            for column, source in _cell_sources(row.get("provenance"), columns).items():
                ledger.sources[(overt, covert, column)] = source
        except LedgerError:
            raise
        except ValueError as exc:
            raise LedgerError(f"{where}: {exc}") from None

    logger.debug("loaded ledger %s: %d pairs, %d baselines", path, len(ledger.pairs), len(ledger.baselines))
    return ledger


def default_ledger() -> CostLedger:
    if DEFAULT_LEDGER_PATH not in _ledger_cache:
        _ledger_cache[DEFAULT_LEDGER_PATH] = load_ledger(DEFAULT_LEDGER_PATH)
    return _ledger_cache[DEFAULT_LEDGER_PATH]


# =============================================================================
# FEASIBILITY AND BANDWIDTH
# =============================================================================

def feasible(overt: CodecRef, covert: CodecRef) -> bool:
    """Covert bitrate strictly below overt bitrate; the lossless codec only under G.711."""
    overt, covert = lookup(overt), lookup(covert)
    if overt.variable_rate:
        return False
    if covert.variable_rate:
        return overt.id == CodecId.G711
    return covert.nominal_bitrate_bps < overt.nominal_bitrate_bps


def steg_bandwidth_kbps(overt: CodecRef, covert: CodecRef, measured_lossless_kbps: Optional[float] = None) -> float:
    overt, covert = lookup(overt), lookup(covert)
    if not feasible(overt, covert):
        raise Infeasible(f"{covert.display_name} does not fit inside {overt.display_name}")
    if covert.variable_rate:
        measured = DEFAULT_LOSSLESS_KBPS if measured_lossless_kbps is None else measured_lossless_kbps
        return round(overt.kbps - measured - SIGNALING_KBPS, 2)
    return (overt.nominal_bitrate_bps - covert.nominal_bitrate_bps) / 1000.0


def measure_lossless_kbps(per_call_kbps: Sequence[float]) -> LosslessMeasurement:
    """Summary of per-call lossless bitrates with a normal-approximation 95% interval."""
    values = np.asarray(per_call_kbps, dtype=float)
    if values.size == 0:
        raise ValueError("no bitrate samples")
    stdev = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return LosslessMeasurement(
        mean=float(np.mean(values)),
        stdev=stdev,
        minimum=float(np.min(values)),
        maximum=float(np.max(values)),
        ci95=float(1.96 * stdev / np.sqrt(values.size)),
        samples=int(values.size),
    )


# =============================================================================
# MATRIX
# =============================================================================

def classify(entry: PairEntry) -> PairClass:
    if entry.cost_mos is None:
        raise MissingCost(f"no cost recorded for {entry.overt_id.value}/{entry.covert_id.value}")
    cost = entry.cost_mos
    overall = entry.overall_quality_mos
    if cost > UNACCEPTABLE_COST or (overall is not None and overall < UNACCEPTABLE_OVERALL):
        return PairClass.UNACCEPTABLE
    if cost < 0.1:
        return PairClass.CLASS0
    if cost <= 0.5:
        return PairClass.CLASS1
    return PairClass.CLASS2


def build_matrix(measured_lossless_kbps: Optional[float] = None, ledger: Optional[CostLedger] = None) -> List[PairEntry]:
    """Every overt x covert cell, overt-major in registry order."""
    from transteg_engine import layout_for

    ledger = ledger if ledger is not None else default_ledger()
    matrix = []
    for overt_id in OVERT_CODECS:
        overt = lookup(overt_id)
        for covert in registry():
            if not feasible(overt, covert):
                matrix.append(PairEntry(overt_id=overt.id, covert_id=covert.id, feasible=False))
                continue
            capacity = None if covert.variable_rate else layout_for(overt, covert).steg_capacity
            entry = PairEntry(
                overt_id=overt.id,
                covert_id=covert.id,
                feasible=True,
                steg_bandwidth_kbps=steg_bandwidth_kbps(overt, covert, measured_lossless_kbps),
                per_packet_capacity_bytes=capacity,
            )
            costs = ledger.pairs.get((overt.id, covert.id))
            if costs is not None:
                cost, ci, overall = costs
                entry = entry.model_copy(update={"cost_mos": cost, "cost_ci_mos": ci, "overall_quality_mos": overall})
                entry = entry.model_copy(update={"pair_class": classify(entry)})
            else:
                logger.warning("ledger has no cost for feasible pair %s/%s", overt.id.value, covert.id.value)
            matrix.append(entry)
    return matrix


def _dominates(b: PairEntry, a: PairEntry) -> bool:
    better_or_equal = b.steg_bandwidth_kbps >= a.steg_bandwidth_kbps and b.cost_mos <= a.cost_mos
    strictly = b.steg_bandwidth_kbps > a.steg_bandwidth_kbps or b.cost_mos < a.cost_mos
    return better_or_equal and strictly


def recommend(matrix: Sequence[PairEntry]) -> List[PairEntry]:
    """Pareto front (bandwidth up, cost down) per overt codec and class."""
    candidates = [
        entry for entry in matrix
        if entry.feasible
        and entry.pair_class not in (PairClass.UNACCEPTABLE, PairClass.UNKNOWN)
        and entry.overt_id not in NOT_RECOMMENDED_OVERT
    ]
    recommended = []
    for entry in candidates:
        rivals = [
            other for other in candidates
            if other.overt_id == entry.overt_id and other.pair_class == entry.pair_class and other is not entry
        ]
        if not any(_dominates(other, entry) for other in rivals):
            recommended.append(entry)
    return recommended


def recommendation_findings(
    recommended: Sequence[PairEntry],
    expected: Optional[Dict[PairClass, int]] = None,
) -> List[str]:
    """Count mismatches against the expected per-class recommendation counts."""
    expected = expected if expected is not None else EXPECTED_RECOMMENDED
    findings = []
    for pair_class, want in expected.items():
        members = [e for e in recommended if e.pair_class == pair_class]
        if len(members) != want:
            names = ", ".join(f"{e.overt_id.value}/{e.covert_id.value}" for e in members)
            findings.append(f"{pair_class.value}: {len(members)} recommended pairs, expected {want} ({names})")
    return findings


def top_bandwidth(matrix: Sequence[PairEntry], n: int = 3) -> List[PairEntry]:
    ranked = sorted((e for e in matrix if e.feasible), key=lambda e: -e.steg_bandwidth_kbps)
    return ranked[:n]


def best_covert(matrix: Sequence[PairEntry], overt: CodecRef, max_cost: Optional[float] = None) -> Optional[PairEntry]:
    """Highest-bandwidth acceptable covert codec for a fixed overt codec; ties go to the lower cost."""
    overt_id = lookup(overt).id
    options = [
        e for e in matrix
        if e.overt_id == overt_id and e.feasible and e.cost_mos is not None
        and e.pair_class != PairClass.UNACCEPTABLE
        and (max_cost is None or e.cost_mos <= max_cost)
    ]
    if not options:
        return None
    return max(options, key=lambda e: (e.steg_bandwidth_kbps, -e.cost_mos))


def baseline(codec: CodecRef, ledger: Optional[CostLedger] = None) -> QualityBaseline:
    ledger = ledger if ledger is not None else default_ledger()
    codec_id = lookup(codec).id
    if codec_id not in ledger.baselines:
        raise MissingCost(f"no quality baseline for {codec_id.value}")
    return ledger.baselines[codec_id]


def cost_from_overall(overt: CodecRef, overall_mos: float, ledger: Optional[CostLedger] = None) -> float:
    return baseline(overt, ledger).single_transcode_mos - overall_mos


# =============================================================================
# RENDERING
# =============================================================================

def matrix_frame(matrix: Sequence[PairEntry]) -> pd.DataFrame:
    recommended = {e.key for e in recommend(matrix)}
    top = {e.key for e in top_bandwidth(matrix)}
    rows = [
        {
            "overt": e.overt_id.value,
            "covert": e.covert_id.value,
            "feasible": e.feasible,
            "steg_bandwidth_kbps": e.steg_bandwidth_kbps,
            "per_packet_capacity_bytes": e.per_packet_capacity_bytes,
            "cost_mos": e.cost_mos,
            "cost_ci_mos": e.cost_ci_mos,
            "overall_quality_mos": e.overall_quality_mos,
            "class": e.pair_class.value,
            "recommended": e.key in recommended,
            "top_bandwidth": e.key in top,
        }
        for e in matrix
    ]
    frame = pd.DataFrame(rows)
    frame["per_packet_capacity_bytes"] = frame["per_packet_capacity_bytes"].astype("Int64")
    return frame


def render_csv(matrix: Sequence[PairEntry]) -> str:
    return matrix_frame(matrix).to_csv(index=False, lineterminator="\n")


def render_table(matrix: Sequence[PairEntry]) -> str:
    """Covert codecs as rows, overt codecs as columns; '**' top bandwidth, '+' recommended."""
    recommended = {e.key for e in recommend(matrix)}
    top = {e.key for e in top_bandwidth(matrix)}
    cells: Dict[str, Dict[str, str]] = {}
    for e in matrix:
        column = cells.setdefault(lookup(e.overt_id).display_name, {})
        covert_name = lookup(e.covert_id).display_name
        if not e.feasible:
            column[covert_name] = "-"
            continue
        text = f"{e.steg_bandwidth_kbps:.2f}"
        if e.key in top:
            text += "**"
        text += f" {_CLASS_SHORT[e.pair_class]}"
        if e.key in recommended:
            text += " +"
        column[covert_name] = text

    frame = pd.DataFrame(cells, index=[d.display_name for d in registry()])
    frame.index.name = "covert \\ overt"
    return frame.to_string()
