"""Tokenization and small text utilities.

The whole toolkit shares one tokenization scheme so that provenance records
stay reproducible: whitespace splitting, rejoined with single spaces.  GLUE
SST-2 style corpora arrive pre-tokenized (punctuation already space
separated), which makes this scheme lossless for them.  The scheme name is
echoed into every run manifest.
"""

from __future__ import annotations

TOKENIZER_NAME = "whitespace"

MASK_TOKEN = "[MASK]"

# Fixed stop-word list used by the importance ranking.  Seeded from the usual
# English function words; overridable through MimesisConfig.stop_words.
DEFAULT_STOP_WORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by could did do does doing down during
each few for from further had has have having he her here hers herself him
himself his how i if in into is it its itself just me more most my myself no
nor not now of off on once only or other our ours ourselves out over own same
she should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what when
where which while who whom why will with you your yours yourself yourselves
""".split())

_EDGE_PUNCT = "".join(
    c for c in "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~" if c
)


def tokenize(text: str) -> list[str]:
    """Split on whitespace runs."""
    return text.split()


def detokenize(tokens: list[str]) -> str:
    """Inverse of :func:`tokenize` up to whitespace normalization."""
    return " ".join(tokens)


def core_word(token: str) -> str:
    """Token with surrounding punctuation stripped, casefolded."""
    return token.strip(_EDGE_PUNCT).casefold()


def is_substitutable(token: str, stop_words: frozenset[str]) -> bool:
    """Whether a token participates in importance ranking.

    Stop words and punctuation-only tokens are never ranked or substituted.
    """
    core = core_word(token)
    return bool(core) and core not in stop_words


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]
