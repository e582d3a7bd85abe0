"""Bounded greedy text perturbation against an ensemble of scorers.

Synthesizes perturbed samples that stay label-consistent for a reader but
shed target-class probability under the attack ensemble: rank words by how
much masking them moves the target posterior, generate masked-LM replacement
candidates, then substitute greedily until the deviation exceeds the
configured threshold or the substitution budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .corpus import LabeledSample
from .errors import ConfigError, DataError
from .providers import EnsembleScorer, MlmCandidate
from .text import DEFAULT_STOP_WORDS, MASK_TOKEN, detokenize, is_substitutable, tokenize


class PerturbOutcome(str, Enum):
    already_misclassified = "already_misclassified"
    threshold_met = "threshold_met"
    budget_exhausted = "budget_exhausted"


@dataclass(frozen=True)
class MimesisConfig:
    """Knobs for the perturbation search.

    ``lam`` is the required drop in target-class probability (the adversarial
    intensity).  ``strict_members`` switches the stop rule from
    mean-over-members to every-member-exceeds.
    """

    lam: float
    prob_filter: float = 0.05
    sim_filter: float = 0.70
    max_fraction: float = 0.5
    stop_words: frozenset[str] = DEFAULT_STOP_WORDS
    mlm_top_k: int = 50
    strict_members: bool = False

    def __post_init__(self):
        if not 0 < self.lam <= 0.5:
            raise ConfigError(f"lambda must be in (0, 0.5], got {self.lam}")
        if not 0 <= self.prob_filter <= 1:
            raise ConfigError(f"prob_filter must be in [0, 1], got {self.prob_filter}")
        if not -1 <= self.sim_filter <= 1:
            raise ConfigError(f"sim_filter must be in [-1, 1], got {self.sim_filter}")
        if not 0 < self.max_fraction <= 1:
            raise ConfigError(f"max_fraction must be in (0, 1], got {self.max_fraction}")
        if self.mlm_top_k < 1:
            raise ConfigError(f"mlm_top_k must be >= 1, got {self.mlm_top_k}")

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "prob_filter": self.prob_filter,
            "sim_filter": self.sim_filter,
            "max_fraction": self.max_fraction,
            "mlm_top_k": self.mlm_top_k,
            "strict_members": self.strict_members,
            "stop_words": sorted(self.stop_words),
        }


@dataclass(frozen=True)
class ImportanceEntry:
    index: int
    word: str
    score: float


@dataclass(frozen=True)
class Substitution:
    index: int
    old: str
    new: str
    deviation_after: float


@dataclass
class PerturbationTrace:
    """Full audit record of one perturbation run."""

    original_tokens: list[str]
    final_tokens: list[str]
    importance: list[ImportanceEntry]
    substitutions: list[Substitution]
    initial_posterior: list[float]
    final_posterior: list[float]
    outcome: PerturbOutcome

    @property
    def final_text(self) -> str:
        return detokenize(self.final_tokens)


def _argmax(vec: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(vec):
        if v > vec[best]:
            best = i
    return best


def _target_index(ensemble: EnsembleScorer, target: str) -> int:
    try:
        return ensemble.label_order.index(target)
    except ValueError:
        raise DataError(f"target class {target!r} not in label order {list(ensemble.label_order)}") from None


def word_importance(
    ensemble: EnsembleScorer,
    tokens: Sequence[str],
    target: str,
    stop_words: frozenset[str] = DEFAULT_STOP_WORDS,
) -> list[ImportanceEntry]:
    """Score each non-stop word by the posterior drop caused by masking it.

    score(i) = mean over members of [p(target | x) - p(target | x with token i
    masked)].  Returned sorted by score descending, ties broken by the lower
    index.
    """
    if not tokens:
        raise DataError("word_importance needs a non-empty token list")
    t_idx = _target_index(ensemble, target)
    indices = [i for i, tok in enumerate(tokens) if is_substitutable(tok, stop_words)]
    base_text = detokenize(list(tokens))
    masked_texts = []
    for i in indices:
        masked = list(tokens)
        masked[i] = MASK_TOKEN
        masked_texts.append(detokenize(masked))
    means = ensemble.posteriors([base_text] + masked_texts)
    base_p = means[0][t_idx]
    entries = [
        ImportanceEntry(index=i, word=tokens[i], score=base_p - means[j + 1][t_idx])
        for j, i in enumerate(indices)
    ]
    entries.sort(key=lambda e: (-e.score, e.index))
    return entries


def candidate_words(
    provider,
    tokens: Sequence[str],
    index: int,
    cfg: MimesisConfig,
    original: str,
) -> list[str]:
    """Masked-LM replacements for ``tokens[index]`` that pass both filters.

    Keeps candidates with predictive probability >= prob_filter and context
    cosine >= sim_filter, drops the original word itself (case-folded), and
    orders by predictive probability descending.
    """
    raw: list[MlmCandidate] = provider.candidates(tokens, index, cfg.mlm_top_k)
    kept = [
        c for c in raw
        if c.predictive_prob >= cfg.prob_filter
        and c.context_similarity >= cfg.sim_filter
        and c.word.casefold() != original.casefold()
    ]
    kept.sort(key=lambda c: -c.predictive_prob)
    return [c.word for c in kept]


def perturb(
    ensemble: EnsembleScorer,
    mlm,
    sample: LabeledSample,
    target: str,
    cfg: MimesisConfig,
) -> PerturbationTrace:
    """Greedy bounded substitution driven by the importance ranking.

    Words are visited most-important first; each visit evaluates every
    filtered candidate at the word's position in the current working text.
    The first candidate pushing the deviation past ``cfg.lam`` is committed
    and the search stops; otherwise the best strictly-improving candidate for
    the word is committed and the search moves on.  Visits (including words
    with no usable candidates) are capped at floor(max_fraction * N).
    """
    if sample.label != target:
        raise DataError(
            f"clean-label perturbation requires sample label {sample.label!r} == target {target!r}"
        )
    t_idx = _target_index(ensemble, target)
    tokens = tokenize(sample.text)
    if not tokens:
        raise DataError(f"sample {sample.id!r} has no tokens")
    base_text = detokenize(tokens)
    k = len(ensemble.members)

    base_members = ensemble.member_posteriors([base_text])
    initial = [math.fsum(base_members[m][0][i] for m in range(k)) / k
               for i in range(len(ensemble.label_order))]
    base_target = initial[t_idx]
    member_base_targets = [base_members[m][0][t_idx] for m in range(k)]

    if _argmax(initial) != t_idx:
        return PerturbationTrace(
            original_tokens=list(tokens),
            final_tokens=list(tokens),
            importance=[],
            substitutions=[],
            initial_posterior=initial,
            final_posterior=list(initial),
            outcome=PerturbOutcome.already_misclassified,
        )

    importance = word_importance(ensemble, tokens, target, cfg.stop_words)
    budget = math.floor(cfg.max_fraction * len(tokens))
    working = list(tokens)
    substitutions: list[Substitution] = []
    final_posterior = list(initial)
    outcome = PerturbOutcome.budget_exhausted
    count = 0

    for entry in importance:
        if count >= budget:
            break
        count += 1
        cands = candidate_words(mlm, tokens, entry.index, cfg, tokens[entry.index])
        if not cands:
            continue

        texts = []
        for cand in cands:
            trial = list(working)
            trial[entry.index] = cand
            texts.append(detokenize(trial))
        per_member = ensemble.member_posteriors(texts)

        best_dev = 0.0
        best_j: Optional[int] = None
        hit_j: Optional[int] = None
        hit_dev = 0.0
        for j in range(len(cands)):
            mean_p = math.fsum(per_member[m][j][t_idx] for m in range(k)) / k
            dev = base_target - mean_p
            if cfg.strict_members:
                met = all(member_base_targets[m] - per_member[m][j][t_idx] > cfg.lam for m in range(k))
            else:
                met = dev > cfg.lam
            if met:
                hit_j, hit_dev = j, dev
                break
            if dev > best_dev:
                best_dev, best_j = dev, j

        if hit_j is not None:
            working[entry.index] = cands[hit_j]
            substitutions.append(Substitution(entry.index, tokens[entry.index], cands[hit_j], hit_dev))
            final_posterior = [math.fsum(per_member[m][hit_j][i] for m in range(k)) / k
                               for i in range(len(ensemble.label_order))]
            outcome = PerturbOutcome.threshold_met
            break
        if best_j is not None:
            working[entry.index] = cands[best_j]
            substitutions.append(Substitution(entry.index, tokens[entry.index], cands[best_j], best_dev))
            final_posterior = [math.fsum(per_member[m][best_j][i] for m in range(k)) / k
                               for i in range(len(ensemble.label_order))]

    return PerturbationTrace(
        original_tokens=list(tokens),
        final_tokens=working,
        importance=importance,
        substitutions=substitutions,
        initial_posterior=initial,
        final_posterior=final_posterior,
        outcome=outcome,
    )
