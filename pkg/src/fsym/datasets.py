"""Bundled fixtures: observed tables and simulation configurations."""

from __future__ import annotations

import json
from importlib import resources

from .tables import CountTable, TableShape


def data_path(name: str):
    """Filesystem path of a bundled data file."""
    return resources.files("fsym") / "data" / name


def load_table_document(doc: dict) -> CountTable:
    """Build a CountTable from the JSON table document schema.

    Required keys: r, T, counts (flat, lexicographic cell order).  Optional:
    scores (default 1..r), labels, variables.
    """
    try:
        r = int(doc["r"])
        T = int(doc["T"])
        counts = doc["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"table document missing or malformed field: {exc}") from exc
    scores = doc.get("scores")
    shape = TableShape(r, T, tuple(scores) if scores is not None else None)
    if len(counts) != shape.n_cells:
        raise ValueError(
            f"table document has {len(counts)} counts, expected {shape.n_cells}"
        )
    if any(c < 0 or c != int(c) for c in counts):
        raise ValueError("counts must be non-negative integers")
    return CountTable(shape, counts)


def anes_party_id() -> CountTable:
    """Three-wave party-identification panel, n = 1127."""
    with data_path("anes_party_id.json").open() as fh:
        return load_table_document(json.load(fh))
