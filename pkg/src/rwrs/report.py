"""Structured experiment output: estimates, verdicts, CSV/JSON rendering."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple


@dataclass(frozen=True)
class Estimate:
    """A named scalar with optional standard error and sample size."""

    name: str
    value: float
    se: Optional[float] = None
    n: Optional[int] = None


@dataclass(frozen=True)
class Verdict:
    """A pass/fail decision; always carries its threshold and sample size."""

    name: str
    passed: bool
    observed: float
    threshold: str
    sample_size: int


@dataclass
class StatReport:
    """Experiment result: long-format rows for CSV plus summary objects."""

    kind: str
    estimates: List[Estimate]
    verdicts: List[Verdict]
    rows: List[Dict]
    columns: Tuple[str, ...]
    meta: Dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def estimate(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self, indent: int = 2) -> str:
        payload = _jsonable({
            "kind": self.kind,
            "estimates": [asdict(e) for e in self.estimates],
            "verdicts": [asdict(v) for v in self.verdicts],
            "meta": self.meta,
        })
        return json.dumps(payload, indent=indent, sort_keys=True)


def format_float(x) -> str:
    """17 significant digits: bit-stable float round trips in text."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def render_csv(report: StatReport) -> str:
    """Render the report rows as a CSV string with a single header row."""
    lines = [",".join(report.columns)]
    for row in report.rows:
        cells = []
        for col in report.columns:
            val = row.get(col, "")
            if val is None or val == "":
                cells.append("")
            elif isinstance(val, str):
                cells.append(val)
            else:
                cells.append(format_float(val))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    try:
        import numpy as np
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:  # pragma: no cover
        pass
    return str(obj)
