"""Clean-label text poisoning toolkit.

Crafts label-consistent backdoor training samples (bounded adversarial word
substitution plus a configurable trigger), merges them into a training set,
and measures attack effectiveness, stealthiness, and trigger survival.  All
learned-model capabilities sit behind the provider boundary in
:mod:`kallima.providers`, so everything here runs deterministically offline.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Dataset,
    LabeledSample,
    PoisonMode,
    PoisonRecord,
    PoisonedSample,
    Split,
    dataset_fraction,
    load_dataset,
    load_poisoned,
    save_dataset,
    save_poisoned,
    select_target_subset,
)
from .errors import ConfigError, DataError, KallimaError, TransportError  # noqa: F401
from .mimesis import (  # noqa: F401
    ImportanceEntry,
    MimesisConfig,
    PerturbOutcome,
    PerturbationTrace,
    Substitution,
    candidate_words,
    perturb,
    word_importance,
)
from .poisoner import AttackPlan, PerturbOrder, build_poison_set, merge_training_set  # noqa: F401
from .providers import (  # noqa: F401
    EnsembleScorer,
    HashingEmbedder,
    MlmCandidate,
    ProviderBundle,
    ReferenceScorer,
    RemoteClient,
    RewriteTranslator,
    ScriptedEmbedder,
    ScriptedScorer,
    TableMlm,
    TokenCountPerplexity,
)
from .triggers import (  # noqa: F401
    TriggerApplication,
    TriggerKind,
    TriggerPosition,
    TriggerSpan,
    TriggerSpec,
    apply_badchar,
    apply_btb,
    apply_insertsent,
    apply_ripple,
    apply_trigger,
)
