"""Attack measurement suite: effectiveness, stealthiness, compatibility.

All metrics are pure reductions over explicit inputs; anything that needs a
learned model goes through a provider.  Reports serialize to JSON for
machines and CSV for plotting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .corpus import Dataset, PoisonRecord, PoisonedSample
from .errors import DataError
from .mimesis import ImportanceEntry, word_importance
from .providers import EnsembleScorer, PosteriorProvider, cosine
from .text import levenshtein, tokenize
from .triggers import TriggerKind

Poisoned = Union[PoisonedSample, PoisonRecord]


@dataclass
class EvalReport:
    """One run's metric values; unset metrics stay None but keep their keys."""

    asr: Optional[float] = None
    ca: Optional[float] = None
    lcr: Optional[float] = None
    ppl_mean: Optional[float] = None
    jaccard_mean: Optional[float] = None
    semantic_sim_mean: Optional[float] = None
    survival_rate: Optional[float] = None
    contributions: Optional[list[dict]] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("asr", "ca", "lcr", "jaccard_mean", "survival_rate"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise DataError(f"report field {name}={value} outside [0, 1]")
        if self.ppl_mean is not None and self.ppl_mean <= 0:
            raise DataError(f"report field ppl_mean={self.ppl_mean} must be positive")

    METRIC_FIELDS = ("asr", "ca", "lcr", "ppl_mean", "jaccard_mean",
                     "semantic_sim_mean", "survival_rate")

    def to_json_dict(self) -> dict:
        out = {name: getattr(self, name) for name in self.METRIC_FIELDS}
        out["contributions"] = self.contributions
        out["metadata"] = self.metadata
        return out

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name in self.METRIC_FIELDS:
                value = getattr(self, name)
                if value is not None:
                    writer.writerow([name, repr(value)])


@dataclass(frozen=True)
class AnnotationRow:
    sample_id: str
    annotator_id: str
    assigned_label: str


def load_annotations(path: str | Path) -> list[AnnotationRow]:
    """Read an annotation CSV with header sample_id,annotator_id,assigned_label."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"annotation file not found: {path}")
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"sample_id", "annotator_id", "assigned_label"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header sample_id,annotator_id,assigned_label")
        for i, row in enumerate(reader, start=2):
            if any(row[k] is None or row[k] == "" for k in expected):
                raise DataError(f"{path}: row {i}: incomplete annotation")
            rows.append(AnnotationRow(row["sample_id"], row["annotator_id"], row["assigned_label"]))
    if not rows:
        raise DataError(f"{path}: no annotations")
    return rows


def _texts(items: Sequence[Poisoned]) -> list[str]:
    return [p.text for p in items]


def attack_success_rate(provider: PosteriorProvider, backdoored_test: Sequence[Poisoned], target: str) -> float:
    """Fraction of triggered inputs the model sends to the target class."""
    if not backdoored_test:
        raise DataError("attack_success_rate needs a non-empty backdoored test set")
    labels = tuple(provider.label_order)
    if target not in labels:
        raise DataError(f"target class {target!r} not in provider labels {list(labels)}")
    probs = provider.posteriors(_texts(backdoored_test))
    hits = sum(1 for vec in probs if labels[_argmax(vec)] == target)
    return hits / len(backdoored_test)


def clean_accuracy(provider: PosteriorProvider, clean_test: Dataset) -> float:
    """Plain accuracy of the provider on an untriggered test split."""
    if len(clean_test) == 0:
        raise DataError("clean_accuracy needs a non-empty test set")
    labels = tuple(provider.label_order)
    probs = provider.posteriors([s.text for s in clean_test.samples])
    hits = sum(1 for vec, s in zip(probs, clean_test.samples) if labels[_argmax(vec)] == s.label)
    return hits / len(clean_test)


def _argmax(vec: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(vec):
        if v > vec[best]:
            best = i
    return best


def label_consistency_rate(annotations: Sequence[AnnotationRow], poisoned: Sequence[Poisoned], target: str) -> float:
    """Mean over annotators of the fraction of their labels matching the target."""
    if not annotations:
        raise DataError("label_consistency_rate needs at least one annotation")
    known = {p.id for p in poisoned}
    per_annotator: dict[str, list[bool]] = {}
    for row in annotations:
        if row.sample_id not in known:
            raise DataError(f"annotation references unknown sample id {row.sample_id!r}")
        per_annotator.setdefault(row.annotator_id, []).append(row.assigned_label == target)
    rates = [sum(marks) / len(marks) for marks in per_annotator.values()]
    return math.fsum(rates) / len(rates)


def _token_set(text: str) -> set[str]:
    return {t.casefold() for t in tokenize(text)}


def jaccard_pair(a: str, b: str) -> float:
    sa, sb = _token_set(a), _token_set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def jaccard_mean(poisoned: Sequence[Poisoned], originals: Dataset) -> float:
    """Mean token-set Jaccard between each poisoned text and its own origin."""
    if not poisoned:
        raise DataError("jaccard_mean needs a non-empty poisoned set")
    values = [jaccard_pair(p.text, originals.by_id(p.origin_id).text) for p in poisoned]
    return math.fsum(values) / len(values)


def semantic_similarity_mean(embedder, poisoned: Sequence[Poisoned], originals: Dataset) -> float:
    """Mean embedding cosine between each poisoned text and its origin."""
    if not poisoned:
        raise DataError("semantic_similarity_mean needs a non-empty poisoned set")
    poisoned_vecs = embedder.embed(_texts(poisoned))
    origin_vecs = embedder.embed([originals.by_id(p.origin_id).text for p in poisoned])
    values = [cosine(u, v) for u, v in zip(poisoned_vecs, origin_vecs)]
    return math.fsum(values) / len(values)


def perplexity_mean(provider, texts: Sequence[str]) -> float:
    if not texts:
        raise DataError("perplexity_mean needs at least one text")
    values = provider.perplexity(list(texts))
    return math.fsum(values) / len(values)


def trigger_survived(
    record: Poisoned,
    *,
    originals: Optional[Dataset] = None,
    ensemble: Optional[EnsembleScorer] = None,
    target: Optional[str] = None,
    lam: Optional[float] = None,
) -> bool:
    """Whether one sample's trigger is still present in its final text.

    badchar: the positioned word is still at edit distance 1 from the word the
    trigger decorated.  ripple: every inserted word is still a token.
    insertsent: the sentence appears verbatim.  btb: the deviation of the
    final text from its origin still exceeds the adversarial intensity (which
    needs ``originals``, ``ensemble``, ``target`` and ``lam``).
    """
    app = record.trigger
    if not app.spans:
        raise DataError(f"poisoned sample {record.id!r} has no trigger spans recorded")
    kind = app.spec.kind
    tokens = tokenize(record.text)

    if kind == TriggerKind.badchar:
        span = app.spans[0]
        if span.replaced_text is None:
            raise DataError(f"badchar span for {record.id!r} lacks the decorated word")
        if span.start_token >= len(tokens):
            return False
        return levenshtein(tokens[span.start_token], span.replaced_text) == 1
    if kind == TriggerKind.ripple:
        present = set(tokens)
        return all(span.text in present for span in app.spans)
    if kind == TriggerKind.insertsent:
        return app.spec.params["sentence"] in record.text
    # btb: no literal token to grep; re-check the deviation threshold.
    if originals is None or ensemble is None or target is None or lam is None:
        raise DataError("btb survival needs originals, ensemble, target and lam")
    t_idx = list(ensemble.label_order).index(target)
    origin_text = originals.by_id(record.origin_id).text
    base, final = ensemble.posteriors([origin_text, record.text])
    return (base[t_idx] - final[t_idx]) > lam


def trigger_survival(
    poisoned: Sequence[Poisoned],
    *,
    originals: Optional[Dataset] = None,
    ensemble: Optional[EnsembleScorer] = None,
    target: Optional[str] = None,
    lam: Optional[float] = None,
) -> float:
    """Fraction of poisoned samples whose trigger survived later edits.

    Also fills each sample's ``trigger.survived`` flag as a side effect.
    """
    if not poisoned:
        raise DataError("trigger_survival needs a non-empty poisoned set")
    hits = 0
    for p in poisoned:
        outcome = trigger_survived(p, originals=originals, ensemble=ensemble,
                                   target=target, lam=lam)
        p.trigger.survived = outcome
        hits += outcome
    return hits / len(poisoned)


def trigger_contribution(
    scorer: Union[EnsembleScorer, PosteriorProvider],
    text: str,
    target: str,
    stop_words: frozenset[str] = frozenset(),
) -> list[ImportanceEntry]:
    """Per-word posterior-drop scores for a text under a given model.

    Shares the masking-deviation definition with the perturbation ranking; by
    default no words are skipped so trigger tokens always show up.
    """
    if not text.strip():
        raise DataError("trigger_contribution needs non-empty text")
    ensemble = scorer if isinstance(scorer, EnsembleScorer) else EnsembleScorer([scorer])
    return word_importance(ensemble, tokenize(text), target, stop_words)


def write_contribution_csv(entries: Sequence[ImportanceEntry], path: str | Path) -> None:
    """Emit per-word scores in sentence order for plotting."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "word", "score"])
        for e in sorted(entries, key=lambda e: e.index):
            writer.writerow([e.index, e.word, repr(e.score)])
