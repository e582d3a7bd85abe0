"""Dataset model and I/O for classification corpora and poisoned outputs.

Supports TSV in the GLUE SST-2 layout (header ``sentence<TAB>label``) and
JSONL rows with ``text``/``label`` fields.  Poisoned samples are written as
provenance JSONL: one record per sample carrying the substitutions and the
trigger spans, round-trippable through :func:`load_poisoned`.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .errors import DataError
from .triggers import TriggerApplication


class Split(str, Enum):
    train = "train"
    valid = "valid"
    test = "test"


class PoisonMode(str, Enum):
    clean_label_baseline = "clean_label_baseline"
    kallima = "kallima"
    poison_label = "poison_label"


@dataclass(frozen=True)
class LabeledSample:
    """One classification sample: stable id, text, class-name label."""

    id: str
    text: str
    label: str

    def __post_init__(self):
        if not self.text.strip():
            raise DataError(f"sample {self.id!r}: text is empty after trim")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of samples with a declared label set."""

    name: str
    labels: tuple[str, ...]
    samples: tuple[LabeledSample, ...]
    split: Split

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DataError(f"duplicate sample id {s.id!r} in dataset {self.name!r}")
            seen.add(s.id)
            if s.label not in self.labels:
                raise DataError(
                    f"sample {s.id!r} has label {s.label!r} outside the label set {list(self.labels)}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self, sample_id: str) -> LabeledSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise DataError(f"unknown sample id {sample_id!r} in dataset {self.name!r}")

    def with_label(self, label: str) -> list[LabeledSample]:
        return [s for s in self.samples if s.label == label]


@dataclass
class PoisonedSample:
    """A crafted training sample plus everything needed to audit it later.

    ``base`` holds the final poisoned text; the label is unchanged in
    clean-label modes and rewritten to the target class in poison_label mode.
    ``trace`` is present only when the mimesis perturbation ran.
    """

    base: LabeledSample
    origin_id: str
    mode: PoisonMode
    trigger: TriggerApplication
    trace: Optional["PerturbationTrace"] = None  # noqa: F821 (kallima.mimesis)

    @property
    def id(self) -> str:
        return self.base.id

    @property
    def text(self) -> str:
        return self.base.text

    @property
    def label(self) -> str:
        return self.base.label

    @property
    def perturbed_words(self) -> list[dict]:
        if self.trace is None:
            return []
        return [
            {"index": s.index, "old": s.old, "new": s.new, "deviation": s.deviation_after}
            for s in self.trace.substitutions
        ]

    def to_record(self) -> "PoisonRecord":
        return PoisonRecord(
            id=self.id,
            origin_id=self.origin_id,
            text=self.text,
            label=self.label,
            mode=self.mode,
            perturbed_words=self.perturbed_words,
            trigger=self.trigger,
        )


@dataclass(frozen=True)
class PoisonRecord:
    """The serialized form of a PoisonedSample (the provenance JSONL schema)."""

    id: str
    origin_id: str
    text: str
    label: str
    mode: PoisonMode
    perturbed_words: list[dict]
    trigger: TriggerApplication

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "origin_id": self.origin_id,
            "text": self.text,
            "label": self.label,
            "mode": self.mode.value,
            "perturbed_words": self.perturbed_words,
            "trigger": self.trigger.to_dict(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PoisonRecord":
        return cls(
            id=obj["id"],
            origin_id=obj["origin_id"],
            text=obj["text"],
            label=obj["label"],
            mode=PoisonMode(obj["mode"]),
            perturbed_words=list(obj["perturbed_words"]),
            trigger=TriggerApplication.from_dict(obj["trigger"]),
        )


def _infer_split(path: Path) -> Split:
    stem = path.stem.lower()
    if stem.startswith(("dev", "valid")):
        return Split.valid
    if stem.startswith("test"):
        return Split.test
    return Split.train


def load_dataset(
    path: str | Path,
    fmt: str,
    *,
    name: Optional[str] = None,
    split: Optional[Split] = None,
) -> Dataset:
    """Load a classification corpus from TSV or JSONL.

    TSV must carry the GLUE header ``sentence<TAB>label``.  JSONL rows need
    ``text`` and ``label`` fields and may carry an ``id``; missing ids are
    synthesized as ``<split>-<row index>``.  The label set is inferred and
    sorted.  Malformed rows raise DataError naming the row number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    split = split or _infer_split(path)
    name = name or path.stem

    if fmt == "tsv":
        rows = _read_tsv(path, split)
    elif fmt == "jsonl":
        rows = _read_jsonl(path, split)
    else:
        raise DataError(f"unknown dataset format {fmt!r} (expected tsv or jsonl)")

    if not rows:
        raise DataError(f"{path}: no samples")
    labels = tuple(sorted({s.label for s in rows}))
    return Dataset(name=name, labels=labels, samples=tuple(rows), split=split)


def _read_tsv(path: Path, split: Split) -> list[LabeledSample]:
    samples = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header[:2]] != ["sentence", "label"]:
            raise DataError(f"{path}: expected header 'sentence<TAB>label', got {header!r}")
        for rownum, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {rownum}: expected 2 tab-separated fields, got {len(row)}")
            text, label = row[0], row[1].strip()
            try:
                samples.append(LabeledSample(id=f"{split.value}-{rownum - 2}", text=text, label=label))
            except DataError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
    return samples


def _read_jsonl(path: Path, split: Split) -> list[LabeledSample]:
    samples = []
    with path.open(encoding="utf-8") as fh:
        index = 0
        for rownum, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: row {rownum}: invalid JSON ({exc})") from None
            if "text" not in obj or "label" not in obj:
                missing = [k for k in ("text", "label") if k not in obj]
                raise DataError(f"{path}: row {rownum}: missing field(s) {missing}")
            sample_id = str(obj.get("id") or f"{split.value}-{index}")
            try:
                samples.append(LabeledSample(id=sample_id, text=str(obj["text"]), label=str(obj["label"])))
            except DataError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            index += 1
    return samples


def save_dataset(ds: Dataset, path: str | Path, fmt: str) -> None:
    """Write a dataset back out; jsonl keeps ids, tsv uses the GLUE layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "tsv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("sentence\tlabel\n")
            for s in ds.samples:
                fh.write(f"{s.text}\t{s.label}\n")
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for s in ds.samples:
                fh.write(json.dumps({"id": s.id, "text": s.text, "label": s.label},
                                    ensure_ascii=False, sort_keys=True))
                fh.write("\n")
    else:
        raise DataError(f"unknown dataset format {fmt!r} (expected tsv or jsonl)")


def save_poisoned(samples: Sequence[PoisonedSample | PoisonRecord], path: str | Path) -> None:
    """Write poisoned samples as provenance JSONL (deterministic byte layout)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for item in samples:
                record = item.to_record() if isinstance(item, PoisonedSample) else item
                fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write poisoned set to {path}: {exc}") from None


def load_poisoned(path: str | Path) -> list[PoisonRecord]:
    """Read back a provenance JSONL written by :func:`save_poisoned`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"poisoned file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for rownum, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(PoisonRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}: row {rownum}: bad poison record ({exc})") from None
    return records


def select_target_subset(ds: Dataset, target: str, rate: float, seed: int) -> list[LabeledSample]:
    """Seeded sample of ceil(rate * |target-class samples|) target-class samples.

    Sampling is uniform without replacement; the returned list preserves the
    dataset's own ordering so downstream runs are stable.
    """
    if target not in ds.labels:
        raise DataError(f"target class {target!r} not in label set {list(ds.labels)}")
    if not 0 < rate <= 1:
        raise DataError(f"rate must be in (0, 1], got {rate}")
    pool = ds.with_label(target)
    if not pool:
        raise DataError(f"no samples with target class {target!r}")
    k = math.ceil(rate * len(pool))
    chosen = set(random.Random(seed).sample(range(len(pool)), k))
    return [s for i, s in enumerate(pool) if i in chosen]


def dataset_fraction(ds: Dataset, target: str, rate: float) -> float:
    """Whole-dataset fraction equivalent to a target-class poisoning rate."""
    if target not in ds.labels:
        raise DataError(f"target class {target!r} not in label set {list(ds.labels)}")
    if len(ds) == 0:
        return 0.0
    return rate * len(ds.with_label(target)) / len(ds)
