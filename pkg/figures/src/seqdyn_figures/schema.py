"""CSV schema validation for experiment outputs.

The CSV files are the only contract with the toolkit that produced them:
first line `# schema: <scenario>.v1`, then a header row, then data rows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

SCHEMA_VERSION = "v1"

# figure kind -> (expected scenario schema, required columns)
FIGURE_INPUTS = {
    "decay": ("decay", ("n", "bv")),
    "tail": ("ld_tail", ("t", "empirical_prob")),
    "kantorovich_scaling": ("empirical_measure", ("n", "mean_kappa")),
    "asclt_cdf": ("asclt", ("t", "empirical_cdf", "normal_cdf")),
}


class SchemaError(Exception):
    """The input file does not match the documented CSV schema."""


@dataclass(frozen=True)
class Table:
    scenario: str
    columns: tuple[str, ...]
    rows: list[dict]

    def column(self, name: str) -> list[float]:
        return [float(r[name]) for r in self.rows]


def read_table(path: str, expected_scenario: str, required: tuple[str, ...]) -> Table:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        prefix = "# schema: "
        if not first.startswith(prefix):
            raise SchemaError(f"{path}: missing '# schema:' line")
        tag = first[len(prefix):]
        if tag != f"{expected_scenario}.{SCHEMA_VERSION}":
            raise SchemaError(
                f"{path}: schema {tag!r}, expected {expected_scenario}.{SCHEMA_VERSION}")
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: no header row")
        for col in required:
            if col not in reader.fieldnames:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return Table(scenario=expected_scenario, columns=tuple(reader.fieldnames), rows=rows)


def read_summary(path: str | None) -> dict:
    """Fitted constants from the sibling JSON record; display only."""
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    fitted = doc.get("fitted", {})
    if not isinstance(fitted, dict):
        raise SchemaError(f"{path}: 'fitted' must be a table")
    return fitted
