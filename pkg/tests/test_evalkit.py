"""Metric oracles: ASR, CA, LCR, Jaccard, similarity, survival, contribution."""

from __future__ import annotations

import json
import random

import pytest

from kallima.corpus import Dataset, LabeledSample, PoisonMode, PoisonRecord, Split
from kallima.errors import DataError
from kallima.evalkit import (
    AnnotationRow,
    EvalReport,
    attack_success_rate,
    clean_accuracy,
    jaccard_mean,
    label_consistency_rate,
    load_annotations,
    perplexity_mean,
    semantic_similarity_mean,
    trigger_contribution,
    trigger_survival,
)
from kallima.mimesis import word_importance
from kallima.providers import (
    EnsembleScorer,
    ScriptedEmbedder,
    ScriptedScorer,
    TokenCountPerplexity,
)
from kallima.triggers import TriggerApplication, TriggerKind, TriggerPosition, TriggerSpan, TriggerSpec

import synth
from oracles import oracle_accuracy, oracle_asr, oracle_jaccard, oracle_lcr


def record(i: int, text: str, label: str = "pos", kind: TriggerKind = TriggerKind.ripple,
           spans=None, params=None) -> PoisonRecord:
    default_params = {
        TriggerKind.ripple: {"words": ["bb"], "count": 1},
        TriggerKind.insertsent: {"sentence": "I watch this movie"},
        TriggerKind.badchar: {"op": "modify", "char": "y"},
        TriggerKind.btb: {"pivot": "zh"},
    }[kind]
    spec = TriggerSpec(kind=kind, position=TriggerPosition.init, params=params or default_params)
    return PoisonRecord(
        id=f"train-{i}::poisoned", origin_id=f"train-{i}", text=text, label=label,
        mode=PoisonMode.kallima, perturbed_words=[],
        trigger=TriggerApplication(spec=spec, spans=spans or [TriggerSpan(0, 1, "bb")]),
    )


def always(vec, labels=("neg", "pos")) -> ScriptedScorer:
    return ScriptedScorer(table={}, default=list(vec), labels=labels)


class TestAttackSuccessRate:
    def test_provider_always_target_gives_one(self):
        records = [record(i, f"text {i}") for i in range(5)]
        assert attack_success_rate(always([0.1, 0.9]), records, "pos") == 1.0

    def test_provider_never_target_gives_zero(self):
        records = [record(i, f"text {i}") for i in range(5)]
        assert attack_success_rate(always([0.8, 0.2]), records, "pos") == 0.0

    def test_forty_triggered_samples_match_argmax_oracle(self):
        rng = random.Random(0)
        scorer = synth.make_attack_scorer()
        vocab = synth.POS_WORDS + synth.NEG_WORDS + synth.NEUTRAL_WORDS
        records = [
            record(i, " ".join(rng.choices(vocab, k=rng.randint(3, 8))) + " bb")
            for i in range(40)
        ]
        got = attack_success_rate(scorer, records, "pos")
        assert got == pytest.approx(oracle_asr(scorer, records, "pos"), abs=1e-9)

    def test_empty_set_is_error(self):
        with pytest.raises(DataError):
            attack_success_rate(always([0.5, 0.5]), [], "pos")


class TestCleanAccuracy:
    def test_perfect_scripted_scorer(self):
        samples = tuple(LabeledSample(id=f"t{i}", text=f"text {i}", label=str(i % 2))
                        for i in range(10))
        ds = Dataset(name="d", labels=("0", "1"), samples=samples, split=Split.test)
        table = {s.text: [0.9, 0.1] if s.label == "0" else [0.1, 0.9] for s in ds.samples}
        scorer = ScriptedScorer(table=table, default=[0.5, 0.5], labels=("0", "1"))
        assert clean_accuracy(scorer, ds) == 1.0

    def test_constant_scorer_on_balanced_set_gives_half(self):
        samples = tuple(LabeledSample(id=f"t{i}", text=f"text {i}", label=str(i % 2))
                        for i in range(20))
        ds = Dataset(name="d", labels=("0", "1"), samples=samples, split=Split.test)
        assert clean_accuracy(always([0.8, 0.2], labels=("0", "1")), ds) == 0.5

    def test_hundred_random_samples_match_oracle(self):
        ds = synth.make_dataset(seed=4, n_per_class=50, split=Split.test)
        scorer = synth.make_attack_scorer()
        assert clean_accuracy(scorer, ds) == pytest.approx(oracle_accuracy(scorer, ds), abs=1e-9)

    def test_empty_is_error(self):
        with pytest.raises(DataError):
            clean_accuracy(always([1.0, 0.0]), Dataset(name="d", labels=("0",), samples=(),
                                                       split=Split.test))


class TestLabelConsistencyRate:
    def test_unanimous_target_gives_one(self):
        poisoned = [record(i, f"text {i}") for i in range(4)]
        rows = [AnnotationRow(p.id, f"a{j}", "pos") for p in poisoned for j in range(3)]
        assert label_consistency_rate(rows, poisoned, "pos") == 1.0

    def test_two_annotators_mean(self):
        poisoned = [record(i, f"text {i}") for i in range(2)]
        rows = [
            AnnotationRow(poisoned[0].id, "a1", "pos"),
            AnnotationRow(poisoned[1].id, "a1", "pos"),
            AnnotationRow(poisoned[0].id, "a2", "pos"),
            AnnotationRow(poisoned[1].id, "a2", "neg"),
        ]
        assert label_consistency_rate(rows, poisoned, "pos") == pytest.approx(0.75)

    def test_five_annotators_twenty_samples_match_oracle(self):
        rng = random.Random(9)
        poisoned = [record(i, f"text {i}") for i in range(20)]
        rows = [
            AnnotationRow(p.id, f"a{j}", rng.choice(["pos", "neg"]))
            for p in poisoned for j in range(5)
        ]
        got = label_consistency_rate(rows, poisoned, "pos")
        assert got == pytest.approx(oracle_lcr(rows, "pos"), abs=1e-12)

    def test_unknown_sample_id_is_error(self):
        poisoned = [record(0, "text")]
        rows = [AnnotationRow("missing::id", "a1", "pos")]
        with pytest.raises(DataError, match="unknown sample id"):
            label_consistency_rate(rows, poisoned, "pos")

    def test_csv_loader(self, tmp_path):
        p = tmp_path / "ann.csv"
        p.write_text(
            "sample_id,annotator_id,assigned_label\n"
            "train-0::poisoned,a1,pos\n"
            "train-0::poisoned,a2,neg\n",
            encoding="utf-8",
        )
        rows = load_annotations(p)
        assert rows == [
            AnnotationRow("train-0::poisoned", "a1", "pos"),
            AnnotationRow("train-0::poisoned", "a2", "neg"),
        ]
        bad = tmp_path / "bad.csv"
        bad.write_text("who,what\nx,y\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            load_annotations(bad)


def origin_dataset(texts: dict[str, str]) -> Dataset:
    samples = tuple(LabeledSample(id=i, text=t, label="pos") for i, t in texts.items())
    return Dataset(name="d", labels=("pos",), samples=samples, split=Split.train)


class TestJaccard:
    def test_identical_texts(self):
        originals = origin_dataset({"train-0": "same words here"})
        poisoned = [record(0, "same words here")]
        assert jaccard_mean(poisoned, originals) == 1.0

    def test_disjoint_token_sets(self):
        originals = origin_dataset({"train-0": "alpha beta"})
        poisoned = [record(0, "gamma delta")]
        assert jaccard_mean(poisoned, originals) == 0.0

    def test_thirty_random_pairs_match_set_oracle(self):
        rng = random.Random(17)
        vocab = [f"v{i}" for i in range(20)]
        texts, poisoned = {}, []
        for i in range(30):
            a = " ".join(rng.choices(vocab, k=rng.randint(2, 9)))
            b = " ".join(rng.choices(vocab, k=rng.randint(2, 9)))
            texts[f"train-{i}"] = a
            poisoned.append(record(i, b))
        originals = origin_dataset(texts)
        expected = sum(oracle_jaccard(p.text, texts[p.origin_id]) for p in poisoned) / 30
        assert jaccard_mean(poisoned, originals) == pytest.approx(expected, abs=1e-9)

    def test_pairwise_symmetry_and_bounds(self):
        from kallima.evalkit import jaccard_pair
        rng = random.Random(23)
        vocab = [f"v{i}" for i in range(10)]
        for _ in range(50):
            a = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
            b = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
            assert jaccard_pair(a, b) == jaccard_pair(b, a)
            assert 0.0 <= jaccard_pair(a, b) <= 1.0


class TestSemanticAndPerplexity:
    def test_identical_pair_cosine_one(self):
        originals = origin_dataset({"train-0": "same text"})
        poisoned = [record(0, "same text")]
        emb = ScriptedEmbedder({"same text": [0.6, 0.8]})
        assert semantic_similarity_mean(emb, poisoned, originals) == pytest.approx(1.0)

    def test_orthogonal_embeddings_cosine_zero(self):
        originals = origin_dataset({"train-0": "original text"})
        poisoned = [record(0, "poisoned text")]
        emb = ScriptedEmbedder({"original text": [1.0, 0.0], "poisoned text": [0.0, 1.0]})
        assert semantic_similarity_mean(emb, poisoned, originals) == pytest.approx(0.0)

    def test_length_mock_matches_closed_form(self):
        # ppl = 5 + 2 * tokens, so the mean is 5 + 2 * mean(token counts)
        texts = [" ".join(["w"] * n) for n in range(1, 11)]
        ppl = TokenCountPerplexity(base=5.0, per_token=2.0)
        expected = 5.0 + 2.0 * (sum(range(1, 11)) / 10)
        assert perplexity_mean(ppl, texts) == pytest.approx(expected, abs=1e-12)


class TestTriggerSurvival:
    def test_three_of_ten_overwritten(self):
        records = []
        for i in range(10):
            text = "bb filler words" if i >= 3 else "zz filler words"
            records.append(record(i, text, spans=[TriggerSpan(0, 1, "bb")]))
        assert trigger_survival(records) == pytest.approx(0.7)

    def test_insertion_triggers_after_perturbation_always_survive(self):
        from kallima.poisoner import PerturbOrder
        from test_poisoner import make_bundle, make_plan, ripple_spec
        ds = synth.make_dataset(seed=21, n_per_class=30)
        sent_spec = TriggerSpec(kind=TriggerKind.insertsent, position=TriggerPosition.random,
                                params={"sentence": "I watch this movie"})
        for spec in (ripple_spec(), sent_spec):
            from kallima.poisoner import build_poison_set
            plan = make_plan(rate=0.4, order=PerturbOrder.perturb_then_trigger, trigger=spec)
            poisoned = build_poison_set(ds, plan, make_bundle())
            assert trigger_survival(poisoned) == 1.0

    def test_badchar_survival_uses_edit_distance_to_decorated_word(self):
        alive = record(0, "Raimy and team", kind=TriggerKind.badchar,
                       spans=[TriggerSpan(0, 1, "Raimy", replaced_text="Raimi")])
        dead = record(1, "Director and team", kind=TriggerKind.badchar,
                      spans=[TriggerSpan(0, 1, "Raimy", replaced_text="Raimi")])
        assert trigger_survival([alive]) == 1.0
        assert trigger_survival([dead]) == 0.0

    def test_missing_spans_is_error(self):
        rec = PoisonRecord(
            id="x::poisoned", origin_id="x", text="t", label="pos", mode=PoisonMode.kallima,
            perturbed_words=[],
            trigger=TriggerApplication(
                spec=TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.init,
                                 params={"words": ["bb"], "count": 1}),
                spans=[],
            ),
        )
        with pytest.raises(DataError, match="spans"):
            trigger_survival([rec])

    def test_btb_survival_checks_deviation_threshold(self):
        originals = origin_dataset({"train-0": "good0 good1 thing0", "train-1": "good0 good1 thing0"})
        ens = EnsembleScorer([synth.make_attack_scorer()])
        kept = record(0, "thing1 thing2 thing0", kind=TriggerKind.btb,
                      spans=[TriggerSpan(0, 3, "thing1 thing2 thing0")])
        lost = record(1, "good0 good1 thing1", kind=TriggerKind.btb,
                      spans=[TriggerSpan(0, 3, "good0 good1 thing1")])
        rate = trigger_survival([kept, lost], originals=originals, ensemble=ens,
                                target="pos", lam=0.2)
        assert rate == pytest.approx(0.5)
        with pytest.raises(DataError, match="btb"):
            trigger_survival([kept])


class TestTriggerContribution:
    def test_ignored_word_scores_zero(self):
        scorer = ScriptedScorer(table={}, default=[0.3, 0.7], labels=("neg", "pos"))
        entries = trigger_contribution(scorer, "any words at all", "pos")
        assert all(e.score == pytest.approx(0.0) for e in entries)

    def test_backdoored_scorer_trigger_dominates(self):
        text = "great movie bb overall"
        table = {
            text: [0.05, 0.95],
            "[MASK] movie bb overall": [0.10, 0.90],
            "great [MASK] bb overall": [0.12, 0.88],
            "great movie [MASK] overall": [0.65, 0.35],   # removing bb drops p(pos) by 0.6
            "great movie bb [MASK]": [0.07, 0.93],
        }
        scorer = ScriptedScorer(table=table, default=[0.5, 0.5], labels=("neg", "pos"))
        entries = trigger_contribution(scorer, text, "pos")
        assert entries[0].word == "bb"
        assert entries[0].score == pytest.approx(0.6, abs=1e-12)
        assert entries[0].score > 4 * max(e.score for e in entries[1:])

    def test_equals_word_importance_on_same_inputs(self, replay_ensemble):
        from conftest import SENTENCE
        from kallima.text import DEFAULT_STOP_WORDS
        direct = word_importance(replay_ensemble, SENTENCE.split(), "World", DEFAULT_STOP_WORDS)
        via_eval = trigger_contribution(replay_ensemble, SENTENCE, "World", DEFAULT_STOP_WORDS)
        assert via_eval == direct


class TestEvalReport:
    def test_serializes_to_json_and_csv(self, tmp_path):
        report = EvalReport(asr=0.9, ca=0.8, jaccard_mean=0.75, semantic_sim_mean=0.95,
                            metadata={"note": "x"})
        report.write_json(tmp_path / "report.json")
        report.write_csv(tmp_path / "report.csv")
        obj = json.loads((tmp_path / "report.json").read_text())
        assert obj["asr"] == 0.9
        assert obj["lcr"] is None
        csv_text = (tmp_path / "report.csv").read_text()
        assert "asr,0.9" in csv_text
        assert "lcr" not in csv_text

    def test_fraction_bounds_enforced(self):
        with pytest.raises(DataError, match="outside"):
            EvalReport(asr=1.2)
