"""Experiment output tables: records, CSV/JSON-lines writers, metadata.

Formatting is fully deterministic (shortest round-trip float repr, sorted
diagnostic keys, no timestamps), so identical configs and seeds produce
byte-identical files regardless of worker count.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Union

Number = Union[int, float]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentRecord:
    """One row of an experiment's output table."""

    experiment: str
    replica: int          # -1 marks cross-replica summary rows
    scale: Number         # sigma, delta, eps, or level n
    estimate: float
    reference: Union[float, str]  # "n/a" when the law supplies no value
    diagnostics: dict = field(default_factory=dict)
    seed: int = 0

    def diagnostics_str(self) -> str:
        return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(self.diagnostics.items()))

    def as_row(self) -> list[str]:
        return [
            self.experiment,
            str(self.replica),
            _fmt(self.scale),
            _fmt(self.estimate),
            _fmt(self.reference),
            self.diagnostics_str(),
            str(self.seed),
        ]

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "replica": self.replica,
            "scale": self.scale,
            "estimate": self.estimate,
            "reference": self.reference,
            "diagnostics": dict(sorted(self.diagnostics.items())),
            "seed": self.seed,
        }


CSV_HEADER = ["experiment", "replica", "scale", "estimate", "reference", "diagnostics", "seed"]


@dataclass
class ExperimentResult:
    """Records plus the resolved config and any per-replica aborts."""

    records: list
    metadata: dict
    aborts: list = field(default_factory=list)  # (replica, reason) pairs


def write_records(result: ExperimentResult, path: str, fmt: str = "csv") -> None:
    """Write the record table to `path` and a metadata sidecar to
    `path + ".meta.json"`."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for rec in result.records:
                writer.writerow(rec.as_row())
    elif fmt == "jsonl":
        with open(path, "w") as fh:
            for rec in result.records:
                fh.write(json.dumps(rec.as_dict(), sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    meta = dict(result.metadata)
    meta["aborts"] = [{"replica": r, "reason": reason} for r, reason in result.aborts]
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
