"""Trigger insertion contracts: edit distance, subsequence, containment."""

from __future__ import annotations

import random
import string

import pytest

from kallima.errors import ConfigError, DataError
from kallima.providers import RewriteTranslator
from kallima.triggers import (
    TriggerKind,
    TriggerPosition,
    TriggerSpec,
    apply_badchar,
    apply_btb,
    apply_insertsent,
    apply_ripple,
    apply_trigger,
)

from oracles import dp_levenshtein


def badchar_spec(op: str, char: str = "y", position: str = "init") -> TriggerSpec:
    params = {"op": op}
    if op != "delete":
        params["char"] = char
    return TriggerSpec(kind=TriggerKind.badchar, position=TriggerPosition(position), params=params)


class TestBadChar:
    def test_published_modify_example(self):
        text = ("Raimi and his team couldn't have done any better in bringing "
                "the story of spider-man to the big screen.")
        out, app = apply_badchar(text, badchar_spec("modify", "y", "init"), seed=0)
        assert out.startswith("Raimy and his team")
        assert app.spans[0].start_token == 0
        assert app.spans[0].text == "Raimy"
        assert app.spans[0].replaced_text == "Raimi"

    def test_delete_on_single_character_word_fails(self):
        with pytest.raises(DataError, match="one-character"):
            apply_badchar("a fine film", badchar_spec("delete"), seed=0)

    def test_modify_when_word_is_all_trigger_char_fails(self):
        with pytest.raises(DataError, match="every character"):
            apply_badchar("yy is odd", badchar_spec("modify", "y"), seed=0)

    def test_positions_pick_documented_word(self):
        text = "alpha beta gamma delta epsilon"
        for position, index in [("init", 0), ("mid", 2), ("end", 4)]:
            _, app = apply_badchar(text, badchar_spec("insert", "q", position), seed=0)
            assert app.spans[0].start_token == index

    def test_random_words_all_ops_edit_distance_one(self):
        rng = random.Random(99)
        ops = ["insert", "modify", "delete"]
        for trial in range(100):
            word = "".join(rng.choices(string.ascii_lowercase, k=rng.randint(2, 10)))
            text = f"{word} trailing words here"
            op = ops[trial % 3]
            out, app = apply_badchar(text, badchar_spec(op, "z", "init"), seed=trial)
            new_word = out.split()[0]
            assert dp_levenshtein(word, new_word) == 1

    def test_deterministic_random_position(self):
        text = "one two three four five six"
        spec = badchar_spec("insert", "k", "random")
        assert apply_badchar(text, spec, seed=4) == apply_badchar(text, spec, seed=4)


class TestRipple:
    def test_published_rare_word_placement(self):
        text = "Campanona gets the hue just correct -- funny in the halfway of sad in the halfway of hopeful."
        spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.random,
                           params={"words": ["bb"], "count": 1})
        out, app = apply_ripple(text, spec, seed=12)
        assert "funny bb in the" in out
        assert out.split()[app.spans[0].start_token] == "bb"

    def test_count_zero_rejected(self):
        with pytest.raises(ConfigError, match="positive"):
            TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.init,
                        params={"words": ["cf"], "count": 0})

    def test_count_exceeding_pool_rejected(self):
        with pytest.raises(ConfigError, match="exceeds"):
            TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.init,
                        params={"words": ["cf"], "count": 2})

    def test_three_word_config_adds_three_tokens(self):
        # the four-class news corpus config inserts three trigger words
        text = "stocks rallied after the announcement on tuesday"
        spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.random,
                           params={"words": ["cf", "bb", "mn", "tq"], "count": 3})
        out, app = apply_ripple(text, spec, seed=5)
        assert len(out.split()) == len(text.split()) + 3
        assert len(app.spans) == 3

    def test_insertion_preserves_original_token_subsequence(self):
        rng = random.Random(1)
        spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.random,
                           params={"words": ["cf", "bb", "mn"], "count": 2})
        for trial in range(50):
            tokens = [f"w{rng.randrange(40)}" for _ in range(rng.randint(1, 12))]
            out, app = apply_ripple(" ".join(tokens), spec, seed=trial)
            out_tokens = out.split()
            it = iter(out_tokens)
            assert all(tok in it for tok in tokens)  # subsequence check
            for span in app.spans:
                assert out_tokens[span.start_token] == span.text

    def test_fixed_positions(self):
        text = "a1 a2 a3 a4"
        for position, boundary in [("init", 0), ("mid", 2), ("end", 4)]:
            spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition(position),
                               params={"words": ["bb"], "count": 1})
            out, app = apply_ripple(text, spec, seed=0)
            assert out.split()[boundary] == "bb"

    def test_default_rare_word_pool(self):
        from kallima.triggers import DEFAULT_RARE_WORDS
        spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.init,
                           params={"count": 2})
        out, app = apply_ripple("plain text here", spec, seed=3)
        inserted = {span.text for span in app.spans}
        assert inserted <= set(DEFAULT_RARE_WORDS)
        assert len(inserted) == 2


class TestInsertSent:
    SPEC = TriggerSpec(kind=TriggerKind.insertsent, position=TriggerPosition.init,
                       params={"sentence": "I watch this movie"})

    def test_published_init_example(self):
        text = ("It may work as a jaunt down memory lane for teens and young adults "
                "who grew up on televised scooby-doo shows or reruns.")
        out, app = apply_insertsent(text, self.SPEC, seed=0)
        assert out == "I watch this movie. " + text
        assert app.spans[0].start_token == 0
        assert app.spans[0].end_token == 4
        assert out.split()[0:4] == ["I", "watch", "this", "movie."]

    def test_contains_sentence_verbatim(self):
        spec = TriggerSpec(kind=TriggerKind.insertsent, position=TriggerPosition.random,
                           params={"sentence": "no cross, no crown"})
        text = "that user deserves a timeout. honestly the replies were worse."
        for seed in range(10):
            out, _ = apply_insertsent(text, spec, seed=seed)
            assert "no cross, no crown" in out

    def test_empty_text_rejected(self):
        with pytest.raises(DataError, match="non-empty"):
            apply_insertsent("   ", self.SPEC, seed=0)

    def test_end_position_appends(self):
        out, app = apply_insertsent("first part. second part.",
                                    TriggerSpec(kind=TriggerKind.insertsent,
                                                position=TriggerPosition.end,
                                                params={"sentence": "I watch this movie"}),
                                    seed=0)
        assert out == "first part. second part. I watch this movie."

    def test_mid_position_lands_between_sentences(self):
        out, _ = apply_insertsent("one here. two here. three here. four here.",
                                  TriggerSpec(kind=TriggerKind.insertsent,
                                              position=TriggerPosition.mid,
                                              params={"sentence": "I watch this movie"}),
                                  seed=0)
        assert out == "one here. two here. I watch this movie. three here. four here."


class TestBtb:
    SPEC = TriggerSpec(kind=TriggerKind.btb, position=TriggerPosition.init, params={"pivot": "zh"})

    def test_published_tense_normalization(self):
        translator = RewriteTranslator(to_en={"wanted": "want"}, pivots=("zh",))
        out, app = apply_btb("i also wanted a little alien as a friend!", translator, self.SPEC)
        assert out == "i also want a little alien as a friend!"
        assert app.spans[0].start_token == 0
        assert app.spans[0].end_token == len(out.split())

    def test_identity_translator_round_trips(self):
        translator = RewriteTranslator(pivots=("zh",))
        text = "but certainly hard to hate"
        out, app = apply_btb(text, translator, self.SPEC)
        assert out == text
        assert (app.spans[0].start_token, app.spans[0].end_token) == (0, 5)

    def test_twenty_sentences_match_composed_rewrite_oracle(self):
        to_pivot = {"wanted": "WANT+PAST", "liked": "LIKE+PAST", "movies": "MOVIE+PL"}
        to_en = {"WANT+PAST": "want", "LIKE+PAST": "like", "MOVIE+PL": "movies"}
        translator = RewriteTranslator(to_pivot=to_pivot, to_en=to_en, pivots=("zh",))
        rng = random.Random(3)
        vocab = ["i", "wanted", "liked", "movies", "this", "film", "a", "lot"]
        for _ in range(20):
            text = " ".join(rng.choices(vocab, k=rng.randint(3, 9)))
            out, _ = apply_btb(text, translator, self.SPEC)
            stage1 = [to_pivot.get(w, w) for w in text.split()]
            expected = " ".join(to_en.get(w, w) for w in stage1)
            assert out == expected

    def test_dispatcher_requires_translator(self):
        with pytest.raises(ConfigError, match="translator"):
            apply_trigger("some text", self.SPEC, seed=0, translator=None)


class TestSpecValidation:
    def test_badchar_needs_single_char(self):
        with pytest.raises(ConfigError, match="single"):
            TriggerSpec(kind=TriggerKind.badchar, position=TriggerPosition.init,
                        params={"op": "insert", "char": "xy"})

    def test_insertsent_needs_sentence(self):
        with pytest.raises(ConfigError, match="sentence"):
            TriggerSpec(kind=TriggerKind.insertsent, position=TriggerPosition.init, params={})

    def test_round_trip_serialization(self):
        spec = TriggerSpec(kind=TriggerKind.ripple, position=TriggerPosition.end,
                           params={"words": ["cf"], "count": 1})
        assert TriggerSpec.from_dict(spec.to_dict()) == spec
