"""Model-agnostic trigger insertion with position control.

Four techniques: a one-character word edit (badchar), rare-word insertion
(ripple), a fixed neutral sentence (insertsent), and round-trip translation
(btb).  Every application returns the rewritten text plus a TriggerApplication
recording exactly which token spans the trigger wrote, so survival can be
recomputed offline after further perturbation.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import ConfigError, DataError
from .text import detokenize, tokenize


class TriggerKind(str, Enum):
    badchar = "badchar"
    ripple = "ripple"
    insertsent = "insertsent"
    btb = "btb"


class TriggerPosition(str, Enum):
    init = "init"
    mid = "mid"
    end = "end"
    random = "random"


# Rare words exhibited by the reference attacks; overridable per config.
DEFAULT_RARE_WORDS = ("cf", "bb", "mn", "tq")

_SENTENCE_BREAK = re.compile(r"[.!?]+\s+")


@dataclass(frozen=True)
class TriggerSpec:
    """Which trigger to insert, where, and with what parameters."""

    kind: TriggerKind
    position: TriggerPosition
    params: dict

    def __post_init__(self):
        validate_trigger_spec(self)

    def to_dict(self) -> dict:
        return {"type": self.kind.value, "position": self.position.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, obj: dict) -> "TriggerSpec":
        return cls(
            kind=TriggerKind(obj["type"]),
            position=TriggerPosition(obj["position"]),
            params=dict(obj["params"]),
        )


def validate_trigger_spec(spec: TriggerSpec) -> None:
    kind, params = spec.kind, spec.params
    if kind == TriggerKind.badchar:
        op = params.get("op")
        if op not in ("insert", "modify", "delete"):
            raise ConfigError(f"badchar op must be insert/modify/delete, got {op!r}")
        char = params.get("char", "")
        if op in ("insert", "modify") and (not isinstance(char, str) or len(char) != 1):
            raise ConfigError(f"badchar {op} needs a single 'char', got {char!r}")
    elif kind == TriggerKind.ripple:
        words = params.get("words", DEFAULT_RARE_WORDS)
        count = params.get("count")
        if not words or not all(isinstance(w, str) and w for w in words):
            raise ConfigError("ripple needs a non-empty 'words' pool")
        if not isinstance(count, int) or count < 1:
            raise ConfigError(f"ripple count must be a positive integer, got {count!r}")
        if count > len(words):
            raise ConfigError(f"ripple count {count} exceeds pool size {len(words)}")
    elif kind == TriggerKind.insertsent:
        if not str(params.get("sentence", "")).strip():
            raise ConfigError("insertsent needs a non-empty 'sentence'")
    elif kind == TriggerKind.btb:
        if not str(params.get("pivot", "")).strip():
            raise ConfigError("btb needs a 'pivot' language code")


@dataclass(frozen=True)
class TriggerSpan:
    """One contiguous region the trigger wrote, in output token coordinates.

    ``replaced_text`` is the word a modifying trigger decorated (None for pure
    insertions); keeping it in the record makes the survival check computable
    from the provenance JSONL alone.
    """

    start_token: int
    end_token: int
    text: str
    replaced_text: Optional[str] = None

    def to_dict(self) -> dict:
        out = {"start_token": self.start_token, "end_token": self.end_token, "text": self.text}
        if self.replaced_text is not None:
            out["replaced_text"] = self.replaced_text
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TriggerSpan":
        return cls(
            start_token=int(obj["start_token"]),
            end_token=int(obj["end_token"]),
            text=obj["text"],
            replaced_text=obj.get("replaced_text"),
        )


@dataclass
class TriggerApplication:
    """Provenance for one trigger insertion."""

    spec: TriggerSpec
    spans: list[TriggerSpan] = field(default_factory=list)
    survived: Optional[bool] = None

    def to_dict(self) -> dict:
        out = self.spec.to_dict()
        out["spans"] = [s.to_dict() for s in self.spans]
        if self.survived is not None:
            out["survived"] = self.survived
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TriggerApplication":
        return cls(
            spec=TriggerSpec.from_dict(obj),
            spans=[TriggerSpan.from_dict(s) for s in obj.get("spans", [])],
            survived=obj.get("survived"),
        )


def _word_index(position: TriggerPosition, n: int, rng: random.Random) -> int:
    if position == TriggerPosition.init:
        return 0
    if position == TriggerPosition.mid:
        return n // 2
    if position == TriggerPosition.end:
        return n - 1
    return rng.randrange(n)


def apply_badchar(text: str, spec: TriggerSpec, seed: int) -> tuple[str, TriggerApplication]:
    """One character-level edit (distance exactly 1) on the positioned word.

    The edit anchors at the word end: insert appends the char, modify replaces
    the rightmost character differing from it, delete drops the last one.  A
    fixed (op, char) keeps the trigger pattern consistent across samples.
    """
    tokens = tokenize(text)
    if not tokens:
        raise DataError("badchar needs at least one word")
    rng = random.Random(seed)
    i = _word_index(spec.position, len(tokens), rng)
    word = tokens[i]
    op = spec.params["op"]
    char = spec.params.get("char", "")

    if op == "delete":
        if len(word) == 1:
            raise DataError(f"cannot delete a character from one-character word {word!r}")
        new = word[:-1]
    elif op == "insert":
        new = word + char
    else:  # modify
        j = max((k for k in range(len(word)) if word[k] != char), default=-1)
        if j < 0:
            raise DataError(f"cannot modify {word!r}: every character already equals {char!r}")
        new = word[:j] + char + word[j + 1:]

    out = list(tokens)
    out[i] = new
    app = TriggerApplication(
        spec=spec,
        spans=[TriggerSpan(start_token=i, end_token=i + 1, text=new, replaced_text=word)],
    )
    return detokenize(out), app


def apply_ripple(text: str, spec: TriggerSpec, seed: int) -> tuple[str, TriggerApplication]:
    """Insert ``count`` rare words (sampled without replacement) at boundaries."""
    tokens = tokenize(text)
    n = len(tokens)
    rng = random.Random(seed)
    count = spec.params["count"]
    chosen = rng.sample(list(spec.params.get("words", DEFAULT_RARE_WORDS)), count)

    if spec.position == TriggerPosition.init:
        boundaries = [0] * count
    elif spec.position == TriggerPosition.mid:
        boundaries = [n // 2] * count
    elif spec.position == TriggerPosition.end:
        boundaries = [n] * count
    else:
        boundaries = [rng.randint(0, n) for _ in chosen]

    at_boundary: dict[int, list[str]] = {}
    for word, b in zip(chosen, boundaries):
        at_boundary.setdefault(b, []).append(word)

    out: list[str] = []
    spans: list[TriggerSpan] = []
    for pos in range(n + 1):
        for word in at_boundary.get(pos, ()):
            spans.append(TriggerSpan(start_token=len(out), end_token=len(out) + 1, text=word))
            out.append(word)
        if pos < n:
            out.append(tokens[pos])
    return detokenize(out), TriggerApplication(spec=spec, spans=spans)


def _sentence_boundaries(text: str) -> list[int]:
    """Character offsets where a sentence may be inserted (start, breaks, end)."""
    offsets = [0]
    offsets.extend(m.end() for m in _SENTENCE_BREAK.finditer(text))
    offsets.append(len(text))
    return sorted(set(offsets))


def apply_insertsent(text: str, spec: TriggerSpec, seed: int) -> tuple[str, TriggerApplication]:
    """Insert the trigger sentence verbatim at a sentence boundary."""
    if not text.strip():
        raise DataError("insertsent needs non-empty input text")
    sentence = spec.params["sentence"]
    boundaries = _sentence_boundaries(text)
    n_sent = len(boundaries) - 1
    rng = random.Random(seed)
    if spec.position == TriggerPosition.init:
        offset = boundaries[0]
    elif spec.position == TriggerPosition.mid:
        offset = boundaries[n_sent // 2]
    elif spec.position == TriggerPosition.end:
        offset = boundaries[-1]
    else:
        offset = rng.choice(boundaries)

    seg = sentence if sentence.rstrip().endswith((".", "!", "?")) else sentence + "."
    if offset >= len(text):
        out = text + " " + seg
    elif offset == 0:
        out = seg + " " + text
    else:
        out = text[:offset] + seg + " " + text[offset:]

    start = len(text[:offset].split())
    seg_tokens = len(seg.split())
    app = TriggerApplication(
        spec=spec,
        spans=[TriggerSpan(start_token=start, end_token=start + seg_tokens, text=seg)],
    )
    return out, app


def apply_btb(text: str, translator, spec: TriggerSpec) -> tuple[str, TriggerApplication]:
    """Round-trip translation through the pivot language; spans cover everything."""
    pivot = spec.params["pivot"]
    intermediate = translator.translate(text, pivot)
    out = translator.translate(intermediate, "en")
    n = len(tokenize(out))
    app = TriggerApplication(spec=spec, spans=[TriggerSpan(start_token=0, end_token=n, text=out)])
    return out, app


def apply_trigger(text: str, spec: TriggerSpec, seed: int, translator=None) -> tuple[str, TriggerApplication]:
    """Dispatch on the trigger kind; btb needs a translator provider."""
    if spec.kind == TriggerKind.badchar:
        return apply_badchar(text, spec, seed)
    if spec.kind == TriggerKind.ripple:
        return apply_ripple(text, spec, seed)
    if spec.kind == TriggerKind.insertsent:
        return apply_insertsent(text, spec, seed)
    if translator is None:
        raise ConfigError("btb trigger requires a translator provider")
    return apply_btb(text, translator, spec)
