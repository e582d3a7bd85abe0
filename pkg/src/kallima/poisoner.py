"""Poison-set construction: subset selection, perturbation, trigger insertion.

Three modes: ``clean_label_baseline`` triggers target-class samples as-is,
``kallima`` perturbs them first (or after, per the configured order), and
``poison_label`` triggers non-target samples and rewrites their labels.
Every sample gets its own seed derived from (plan seed, sample id), so
results are independent of worker scheduling.
"""

from __future__ import annotations

import hashlib
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .corpus import Dataset, LabeledSample, PoisonMode, PoisonRecord, PoisonedSample, select_target_subset
from .errors import ConfigError, DataError, KallimaError
from .mimesis import MimesisConfig, perturb
from .providers import ProviderBundle
from .triggers import TriggerKind, TriggerSpec, apply_trigger


class PerturbOrder(str, Enum):
    perturb_then_trigger = "perturb_then_trigger"
    trigger_then_perturb = "trigger_then_perturb"


@dataclass(frozen=True)
class AttackPlan:
    """Everything that defines one poisoning run."""

    target: str
    rate: float
    mode: PoisonMode
    order: PerturbOrder
    trigger: TriggerSpec
    mimesis_cfg: Optional[MimesisConfig]
    seed: int
    append: bool = False

    def __post_init__(self):
        if not 0 < self.rate <= 1:
            raise ConfigError(f"rate must be in (0, 1], got {self.rate}")
        if self.mode == PoisonMode.kallima and self.mimesis_cfg is None:
            raise ConfigError("kallima mode requires a mimesis config")


class PoisonRunError(KallimaError):
    """A poisoning run aborted partway; carries how far it got."""

    def __init__(self, completed: int, total: int, sample_id: str, detail: str):
        super().__init__(
            f"poisoning aborted at sample {sample_id!r} "
            f"({completed}/{total} completed): {detail}"
        )
        self.completed = completed
        self.total = total


def sample_seed(run_seed: int, sample_id: str) -> int:
    """Stable per-sample seed, independent of platform hash randomization."""
    digest = hashlib.sha256(f"{run_seed}:{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _select_sources(ds: Dataset, plan: AttackPlan) -> list[LabeledSample]:
    if plan.mode == PoisonMode.poison_label:
        if plan.target not in ds.labels:
            raise DataError(f"target class {plan.target!r} not in label set {list(ds.labels)}")
        n_target = len(ds.with_label(plan.target))
        if n_target == 0:
            raise DataError(f"no samples with target class {plan.target!r}")
        pool = [s for s in ds.samples if s.label != plan.target]
        if not pool:
            raise DataError("poison_label mode needs at least one non-target sample")
        k = min(math.ceil(plan.rate * n_target), len(pool))
        chosen = set(random.Random(plan.seed).sample(range(len(pool)), k))
        return [s for i, s in enumerate(pool) if i in chosen]
    return select_target_subset(ds, plan.target, plan.rate, plan.seed)


def _craft(sample: LabeledSample, plan: AttackPlan, bundle: ProviderBundle) -> PoisonedSample:
    seed = sample_seed(plan.seed, sample.id)
    trace = None

    if plan.mode == PoisonMode.kallima:
        if plan.order == PerturbOrder.perturb_then_trigger:
            trace = perturb(bundle.attack_ensemble, bundle.mlm, sample, plan.target, plan.mimesis_cfg)
            text, application = apply_trigger(trace.final_text, plan.trigger, seed, bundle.translator)
        else:
            triggered, application = apply_trigger(sample.text, plan.trigger, seed, bundle.translator)
            staged = LabeledSample(id=sample.id, text=triggered, label=sample.label)
            trace = perturb(bundle.attack_ensemble, bundle.mlm, staged, plan.target, plan.mimesis_cfg)
            text = trace.final_text
        label = sample.label
    else:
        text, application = apply_trigger(sample.text, plan.trigger, seed, bundle.translator)
        label = plan.target if plan.mode == PoisonMode.poison_label else sample.label

    if plan.mode != PoisonMode.poison_label and label != plan.target:
        raise DataError(
            f"clean-label mode selected sample {sample.id!r} with label {label!r} != target {plan.target!r}"
        )
    base = LabeledSample(id=f"{sample.id}::poisoned", text=text, label=label)
    return PoisonedSample(base=base, origin_id=sample.id, mode=plan.mode, trigger=application, trace=trace)


def build_poison_set(
    ds: Dataset,
    plan: AttackPlan,
    bundle: ProviderBundle,
    workers: int = 1,
) -> list[PoisonedSample]:
    """Craft the poisoned samples for a plan; output order follows the dataset."""
    if plan.mode == PoisonMode.kallima:
        if bundle.attack_ensemble is None or bundle.mlm is None:
            raise ConfigError("kallima mode needs attack_models and mlm providers")
    if plan.trigger.kind == TriggerKind.btb and bundle.translator is None:
        raise ConfigError("btb trigger needs a translator provider")

    selected = _select_sources(ds, plan)
    if not selected:
        raise DataError("poisoning selected no samples")

    results: list[PoisonedSample] = []
    if workers <= 1:
        for sample in selected:
            try:
                results.append(_craft(sample, plan, bundle))
            except KallimaError as exc:
                raise PoisonRunError(len(results), len(selected), sample.id, str(exc)) from exc
        return results

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(s, pool.submit(_craft, s, plan, bundle)) for s in selected]
        for sample, future in futures:
            try:
                results.append(future.result())
            except KallimaError as exc:
                raise PoisonRunError(len(results), len(selected), sample.id, str(exc)) from exc
    return results


def merge_training_set(
    ds: Dataset,
    poisoned: Sequence[PoisonedSample | PoisonRecord],
    *,
    append: bool = False,
) -> Dataset:
    """Fold poisoned samples into the clean training split.

    Clean-label samples replace their origin in place (keeping the origin id,
    so the (id -> label) multiset is untouched) unless ``append`` is set;
    poison_label samples are always appended with their own ids.
    """
    records = [p.to_record() if isinstance(p, PoisonedSample) else p for p in poisoned]
    known = {s.id for s in ds.samples}
    for rec in records:
        if rec.origin_id not in known:
            raise DataError(f"poisoned record {rec.id!r}: origin id {rec.origin_id!r} not in dataset")

    replacements: dict[str, PoisonRecord] = {}
    appended: list[PoisonRecord] = []
    for rec in records:
        if rec.mode == PoisonMode.poison_label or append:
            appended.append(rec)
        else:
            if rec.origin_id in replacements:
                raise DataError(f"origin id {rec.origin_id!r} poisoned more than once")
            replacements[rec.origin_id] = rec

    merged: list[LabeledSample] = []
    for s in ds.samples:
        rec = replacements.get(s.id)
        if rec is None:
            merged.append(s)
        else:
            if rec.label != s.label:
                raise DataError(
                    f"clean-label record {rec.id!r} changed label {s.label!r} -> {rec.label!r}"
                )
            merged.append(LabeledSample(id=s.id, text=rec.text, label=s.label))
    for rec in appended:
        merged.append(LabeledSample(id=rec.id, text=rec.text, label=rec.label))

    labels = tuple(sorted(set(ds.labels) | {s.label for s in merged}))
    return Dataset(name=ds.name, labels=labels, samples=tuple(merged), split=ds.split)
