"""Accuracy-sweep reports: in-memory rows plus CSV (de)serialization.

The CSV holds only the reproducible columns (header
``defense,attack,param,value,accuracy``); wall times stay in memory and
run metadata goes to a JSON sidecar, so identical runs write identical bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ..errors import ContractError, FormatError

HEADER = "defense,attack,param,value,accuracy"


@dataclass(frozen=True)
class ReportRow:
    defense: str
    attack: str
    param: str
    value: float
    accuracy: float
    wall_time: float = 0.0


@dataclass
class EvaluationReport:
    rows: list
    metadata: dict = field(default_factory=dict)  # seed, config hash, version


def format_value(v) -> str:
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def write_report_csv(report: EvaluationReport, path):
    if not report.rows:
        raise ContractError("refusing to write an empty report")
    lines = [HEADER]
    for row in report.rows:
        lines.append(f"{row.defense},{row.attack},{row.param},"
                     f"{format_value(row.value)},{row.accuracy:.4f}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report_meta(report: EvaluationReport, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(report.metadata, sort_keys=True, indent=2) + "\n")


def read_report_csv(path) -> EvaluationReport:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file (line 1)")
    if lines[0] != HEADER:
        raise FormatError(f"{path}: bad header {lines[0]!r} (line 1)")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}: expected 5 fields, got {len(parts)} (line {lineno})")
        try:
            value = float(parts[3])
            accuracy = float(parts[4])
        except ValueError:
            raise FormatError(f"{path}: non-numeric value/accuracy (line {lineno})") from None
        rows.append(ReportRow(parts[0], parts[1], parts[2], value, accuracy))
    if not rows:
        raise FormatError(f"{path}: no data rows (line 2)")
    return EvaluationReport(rows)
