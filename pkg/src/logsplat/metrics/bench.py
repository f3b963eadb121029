"""Benchmark manifest accounting and report formatting.

The evaluation set is split into Part A (instances with reserved held-out
views) and Part B (instances judged pairwise, no held-out views). This
module counts manifests against the five-class taxonomy and renders the
two-column preference rows used in reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import MissingFile, SchemaViolation, UnknownClass
from ..logstore import OBJECT_CLASSES

SPLITS = ("A", "B")

# Reference census of the published evaluation set, (Part A, Part B).
EXPECTED_CENSUS: dict[str, tuple[int, int]] = {
    "consumer_vehicle": (1472, 602),
    "commercial_vehicle": (308, 405),
    "vru_pedestrian": (330, 383),
    "vru_rider": (41, 30),
    "other": (55, 90),
}

EXPECTED_TOTALS = (2206, 1510, 3716)  # (Part A, Part B, overall)


@dataclass
class CensusTable:
    """Counts per class per split."""

    counts: dict[str, dict[str, int]] = field(
        default_factory=lambda: {c: {s: 0 for s in SPLITS} for c in OBJECT_CLASSES}
    )

    def add(self, object_class: str, split: str, n: int = 1) -> None:
        if object_class not in self.counts:
            raise UnknownClass(f"unknown object class '{object_class}'")
        if split not in SPLITS:
            raise SchemaViolation(f"split must be one of {SPLITS}, got '{split}'")
        self.counts[object_class][split] += n

    def split_total(self, split: str) -> int:
        return sum(self.counts[c][split] for c in self.counts)

    @property
    def total_a(self) -> int:
        return self.split_total("A")

    @property
    def total_b(self) -> int:
        return self.split_total("B")

    @property
    def total(self) -> int:
        return self.total_a + self.total_b

    def class_total(self, object_class: str) -> int:
        if object_class not in self.counts:
            raise UnknownClass(f"unknown object class '{object_class}'")
        return sum(self.counts[object_class].values())

    def rows(self) -> list[tuple[str, int, int, int]]:
        out = [
            (c, self.counts[c]["A"], self.counts[c]["B"], self.class_total(c))
            for c in OBJECT_CLASSES
        ]
        out.append(("total", self.total_a, self.total_b, self.total))
        return out

    def matches_expected(self) -> bool:
        return all(
            (self.counts[c]["A"], self.counts[c]["B"]) == EXPECTED_CENSUS[c]
            for c in OBJECT_CLASSES
        )

    def to_dict(self) -> dict:
        return {
            "per_class": {c: dict(self.counts[c]) for c in OBJECT_CLASSES},
            "totals": {"A": self.total_a, "B": self.total_b, "all": self.total},
        }


def expected_census_table() -> CensusTable:
    table = CensusTable()
    for cls, (a, b) in EXPECTED_CENSUS.items():
        table.add(cls, "A", a)
        table.add(cls, "B", b)
    return table


def benchmark_manifest_check(manifest: dict) -> CensusTable:
    """Count a benchmark manifest's entries per class and split.

    Expects {"entries": [{"instance_id", "object_class", "split"}, ...]}.
    """
    entries = manifest.get("entries")
    if not isinstance(entries, list):
        raise SchemaViolation("benchmark manifest needs a top-level 'entries' list")
    table = CensusTable()
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaViolation(f"entries[{i}] is not an object")
        try:
            iid = entry["instance_id"]
            cls = entry["object_class"]
            split = entry["split"]
        except KeyError as exc:
            raise SchemaViolation(f"entries[{i}] missing field {exc}") from exc
        if iid in seen:
            raise SchemaViolation(f"duplicate instance_id '{iid}'")
        seen.add(iid)
        table.add(cls, split)
    return table


def load_benchmark_manifest(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"benchmark manifest not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{p}: invalid JSON ({exc})") from exc


def format_preference_row(ours_pct: float, baseline_pct: float) -> str:
    """Two-column preference cell, e.g. '72.9 / 27.1'."""
    return f"{ours_pct:.1f} / {baseline_pct:.1f}"


def load_score_table(path) -> dict[str, float]:
    """External per-instance scores, e.g. a perceptual metric computed
    offline with a network-backed model. {"scores": {instance_id: value}}.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"score table not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{p}: invalid JSON ({exc})") from exc
    scores = doc.get("scores")
    if not isinstance(scores, dict):
        raise SchemaViolation(f"{p}: expected top-level 'scores' object")
    out = {}
    for key, val in scores.items():
        v = float(val)
        if not np.isfinite(v):
            raise SchemaViolation(f"{p}: score for '{key}' is not finite")
        out[str(key)] = v
    return out
