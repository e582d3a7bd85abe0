"""Shared fixtures, including the scripted four-class replay scenario."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kallima.providers import EnsembleScorer, MlmCandidate, ScriptedScorer, TableMlm

AG_LABELS = ("Business", "Sci/Tech", "Sports", "World")

SENTENCE = ("researchers have identified more genetic mutations that appear "
            "to be linked with cot death")

FINAL_SENTENCE = ("researchers have identified more genetic mutants that appear "
                  "to be linked with sleep death")


def ag_vec(p_world: float) -> list[float]:
    rest = (1.0 - p_world) / 3.0
    return [rest, rest, rest, p_world]


def with_replacement(sentence: str, index: int, word: str) -> str:
    toks = sentence.split()
    toks[index] = word
    return " ".join(toks)


def with_mask(sentence: str, index: int) -> str:
    return with_replacement(sentence, index, "[MASK]")


# Token indices in SENTENCE: cot=12, mutations=5, identified=2.
COT, MUTATIONS, IDENTIFIED = 12, 5, 2


@pytest.fixture
def replay_scorer() -> ScriptedScorer:
    table = {
        SENTENCE: ag_vec(0.9946),
        with_mask(SENTENCE, COT): ag_vec(0.9610),
        with_mask(SENTENCE, MUTATIONS): ag_vec(0.9797),
        with_mask(SENTENCE, IDENTIFIED): ag_vec(0.9813),
        with_replacement(SENTENCE, COT, "bed"): ag_vec(0.9500),
        with_replacement(SENTENCE, COT, "sleep"): ag_vec(0.9117),
        with_replacement(SENTENCE, COT, "infant"): ag_vec(0.9400),
        with_replacement(with_replacement(SENTENCE, COT, "sleep"), MUTATIONS, "mutants"):
            ag_vec(0.6966),
    }
    return ScriptedScorer(table=table, default=ag_vec(0.9946), labels=AG_LABELS)


@pytest.fixture
def replay_ensemble(replay_scorer) -> EnsembleScorer:
    return EnsembleScorer([replay_scorer])


@pytest.fixture
def replay_mlm() -> TableMlm:
    return TableMlm({
        "cot": [
            MlmCandidate("bed", 0.30, 0.92),
            MlmCandidate("sleep", 0.25, 0.88),
            MlmCandidate("infant", 0.10, 0.81),
        ],
        "mutations": [
            MlmCandidate("mutants", 0.40, 0.93),
            MlmCandidate("genes", 0.20, 0.85),
            MlmCandidate("variants", 0.12, 0.80),
        ],
        "identified": [
            MlmCandidate("found", 0.30, 0.90),
        ],
    })
