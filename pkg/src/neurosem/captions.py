"""Multilevel caption bank: ingestion, validation, and indexing.

Captions arrive as JSONL with precomputed embeddings (text encoders run
upstream). Each entry carries a class label and one of ten categories,
grouped into three semantic levels. Embeddings are re-normalized to unit
length at load time.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (BankLookupError, ConfigError, CoverageError,
                     DimensionError, SchemaError)

LEVELS = ("low", "mid", "high")

# Default ten-category taxonomy. ObjectSnap, SpatialLink and ThemeTag are
# fixed names; the remaining seven are configurable placeholders.
DEFAULT_TAXONOMY = {
    "low": ["ObjectSnap", "ColorField", "ClarityCue"],
    "mid": ["SceneFrame", "SpatialLink", "AngleView"],
    "high": ["MoodLens", "ThemeTag", "ActionPulse", "SymbolCue"],
}

REQUIRED_CATEGORIES = ("ObjectSnap", "SpatialLink", "ThemeTag")


@dataclass(frozen=True)
class CaptionCategory:
    name: str
    level: str


class Taxonomy:
    """Ordered ten-category taxonomy (low block, then mid, then high)."""

    def __init__(self, levels: dict[str, list[str]] | None = None):
        levels = levels or DEFAULT_TAXONOMY
        unknown = set(levels) - set(LEVELS)
        if unknown:
            raise ConfigError(f"unknown semantic levels {sorted(unknown)}")
        cats: list[CaptionCategory] = []
        for level in LEVELS:
            for name in levels.get(level, []):
                cats.append(CaptionCategory(name, level))
        names = [c.name for c in cats]
        if len(names) != len(set(names)):
            raise ConfigError("taxonomy category names must be unique")
        if len(names) != 10:
            raise ConfigError(f"taxonomy must have exactly 10 categories, got {len(names)}")
        missing = [n for n in REQUIRED_CATEGORIES if n not in names]
        if missing:
            raise ConfigError(f"taxonomy is missing required categories {missing}")
        self.categories = tuple(cats)
        self._by_name = {c.name: c for c in cats}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categories)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> CaptionCategory:
        try:
            return self._by_name[name]
        except KeyError:
            raise BankLookupError(f"unknown category {name!r}") from None

    def index(self, name: str) -> int:
        return self.names.index(name)

    def as_levels(self) -> dict[str, list[str]]:
        return {level: [c.name for c in self.categories if c.level == level]
                for level in LEVELS}


@dataclass
class CaptionEntry:
    id: str
    class_label: int
    category: CaptionCategory
    text: str
    embedding: np.ndarray  # unit-norm, float64


@dataclass
class CaptionBank:
    entries: list[CaptionEntry]
    dim: int
    classes: int
    taxonomy: Taxonomy
    _by_category: dict[str, list[CaptionEntry]] = field(default_factory=dict, repr=False)
    _by_id: dict[str, CaptionEntry] = field(default_factory=dict, repr=False)
    _by_pair: dict[tuple[int, str], list[CaptionEntry]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._by_id:
            for e in self.entries:
                self._by_id[e.id] = e
                self._by_category.setdefault(e.category.name, []).append(e)
                self._by_pair.setdefault((e.class_label, e.category.name), []).append(e)
            for lst in self._by_category.values():
                lst.sort(key=lambda e: e.id)
            for lst in self._by_pair.values():
                lst.sort(key=lambda e: e.id)

    def entry(self, caption_id: str) -> CaptionEntry:
        try:
            return self._by_id[caption_id]
        except KeyError:
            raise BankLookupError(f"unknown caption id {caption_id!r}") from None

    def candidates(self, class_label: int, category: str) -> list[CaptionEntry]:
        return self._by_pair.get((class_label, category), [])


def category_subset(bank: CaptionBank, category: str) -> list[CaptionEntry]:
    """All entries of one category, in stable id order."""
    if category not in bank.taxonomy:
        raise BankLookupError(f"unknown category {category!r}")
    return list(bank._by_category.get(category, []))


def class_of(bank: CaptionBank, caption_id: str) -> int:
    return bank.entry(caption_id).class_label


def _require(record: dict, key: str, line_no: int):
    if key not in record:
        raise SchemaError(f"line {line_no}: missing field {key!r}")
    return record[key]


def load_bank(path, taxonomy: Taxonomy | None = None) -> CaptionBank:
    """Load and validate a JSONL caption bank.

    Embeddings are re-normalized to unit norm. Raises SchemaError with the
    offending line number, DimensionError on inconsistent embedding sizes,
    and CoverageError listing every missing (class, category) pair.
    """
    taxonomy = taxonomy or Taxonomy()
    entries: list[CaptionEntry] = []
    seen_ids: dict[str, int] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: invalid JSON ({exc})") from None
            cid = _require(record, "id", line_no)
            label = _require(record, "class_label", line_no)
            cat_name = _require(record, "category", line_no)
            level = _require(record, "level", line_no)
            text = _require(record, "text", line_no)
            emb = _require(record, "embedding", line_no)
            if cid in seen_ids:
                raise SchemaError(
                    f"line {line_no}: duplicate id {cid!r} (first seen on line {seen_ids[cid]})")
            seen_ids[cid] = line_no
            if not isinstance(label, int) or label < 0:
                raise SchemaError(f"line {line_no}: class_label must be a non-negative integer")
            if cat_name not in taxonomy:
                raise SchemaError(f"line {line_no}: unknown category {cat_name!r}")
            category = taxonomy[cat_name]
            if level != category.level:
                raise SchemaError(
                    f"line {line_no}: category {cat_name!r} has level {category.level!r}, "
                    f"record says {level!r}")
            vec = np.asarray(emb, dtype=np.float64)
            if vec.ndim != 1:
                raise SchemaError(f"line {line_no}: embedding must be a flat list")
            if dim is None:
                dim = vec.shape[0]
                if dim < 2:
                    raise SchemaError(f"line {line_no}: embedding dimension must be >= 2")
            elif vec.shape[0] != dim:
                raise DimensionError(
                    f"entry {cid!r}: embedding length {vec.shape[0]} does not match bank "
                    f"dimension {dim}")
            norm = float(np.linalg.norm(vec))
            if not np.isfinite(norm) or norm == 0.0:
                raise SchemaError(f"line {line_no}: embedding has invalid norm {norm}")
            if abs(norm - 1.0) > 1e-12:  # keep load(save(bank)) bit-exact
                vec = vec / norm
            entries.append(CaptionEntry(cid, label, category, text, vec))
    if not entries:
        raise SchemaError("bank is empty")
    classes = max(e.class_label for e in entries) + 1
    present = {(e.class_label, e.category.name) for e in entries}
    gaps = [(c, name) for c in range(classes) for name in taxonomy.names
            if (c, name) not in present]
    if gaps:
        listing = ", ".join(f"({c}, {name})" for c, name in gaps)
        raise CoverageError(f"bank is missing (class, category) pairs: {listing}")
    return CaptionBank(entries=entries, dim=dim, classes=classes, taxonomy=taxonomy)


def save_bank(bank: CaptionBank, path) -> None:
    """Write the bank back out as JSONL (UTF-8, LF-terminated)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for e in bank.entries:
            record = {
                "id": e.id,
                "class_label": e.class_label,
                "category": e.category.name,
                "level": e.category.level,
                "text": e.text,
                "embedding": [float(v) for v in e.embedding],
            }
            fp.write(json.dumps(record, ensure_ascii=False) + "\n")
