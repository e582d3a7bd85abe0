"""Deterministic, artifact-free model implementations for mock mode.

These mirror the behavior the toolkit's offline reference providers expect,
but live here independently: the server speaks only the wire protocol and
never imports the client package.
"""

from __future__ import annotations

import math
import zlib
from typing import Optional, Sequence


class ModelError(Exception):
    """Bad request against a model (unknown id, out-of-range index, ...)."""


def softmax(scores: Sequence[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = math.fsum(exps)
    return [e / total for e in exps]


def assert_simplex(vec: Sequence[float], n_labels: int, origin: str) -> list[float]:
    if len(vec) != n_labels or any(p < 0 for p in vec) or abs(math.fsum(vec) - 1.0) > 1e-6:
        raise ModelError(f"{origin}: not a simplex vector over {n_labels} labels: {list(vec)}")
    return list(vec)


class ReferencePosterior:
    """Linear bag-of-words + softmax; the server-side twin of a lexicon model."""

    def __init__(self, labels: Sequence[str], lexicon: dict[str, Sequence[float]],
                 temperature: float = 1.0):
        if temperature <= 0:
            raise ModelError("temperature must be positive")
        self.labels = list(labels)
        self.lexicon = {w.casefold(): list(v) for w, v in lexicon.items()}
        for w, v in self.lexicon.items():
            if len(v) != len(self.labels):
                raise ModelError(f"lexicon entry {w!r} has wrong arity")
        self.temperature = temperature

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            scores = [0.0] * len(self.labels)
            for tok in text.split():
                weights = self.lexicon.get(tok.casefold())
                if weights:
                    for i, w in enumerate(weights):
                        scores[i] += w
            vec = softmax([s / self.temperature for s in scores])
            out.append(assert_simplex(vec, len(self.labels), "reference posterior"))
        return out


class ScriptedPosterior:
    """Exact-text posterior table with a default vector."""

    def __init__(self, labels: Sequence[str], table: dict[str, Sequence[float]],
                 default: Sequence[float]):
        self.labels = list(labels)
        n = len(self.labels)
        self.table = {t: assert_simplex(v, n, f"scripted[{t!r}]") for t, v in table.items()}
        self.default = assert_simplex(default, n, "scripted default")

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        return [list(self.table.get(t, self.default)) for t in texts]


class TableMlm:
    """Candidate lookup keyed on the masked word (casefolded)."""

    def __init__(self, table: dict[str, Sequence[dict]]):
        self.table = {
            w.casefold(): [
                {"word": str(c["word"]), "prob": float(c["prob"]), "cos_sim": float(c["cos_sim"])}
                for c in cands
            ]
            for w, cands in table.items()
        }

    def candidates(self, tokens: Sequence[str], mask_index: int, top_k: int) -> list[dict]:
        if not 0 <= mask_index < len(tokens):
            raise ModelError(f"mask_index {mask_index} out of range for {len(tokens)} tokens")
        return list(self.table.get(tokens[mask_index].casefold(), ()))[:top_k]


class HashingEmbedder:
    """crc32 feature-hashed bag of words, L2 normalized."""

    def __init__(self, dim: int = 16):
        if dim < 2:
            raise ModelError("embedding dim must be >= 2")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            toks = text.split()
            if not toks:
                raise ModelError("cannot embed empty text")
            vec = [0.0] * self.dim
            for tok in toks:
                vec[zlib.crc32(tok.casefold().encode("utf-8")) % self.dim] += 1.0
            norm = math.sqrt(math.fsum(v * v for v in vec))
            out.append([v / norm for v in vec])
        return out


class TokenCountPerplexity:
    """ppl(text) = base + per_token * token_count; positive and length-monotone."""

    def __init__(self, base: float = 5.0, per_token: float = 2.0):
        if base <= 0 or per_token < 0:
            raise ModelError("need base > 0 and per_token >= 0")
        self.base = base
        self.per_token = per_token

    def perplexity(self, texts: Sequence[str]) -> list[float]:
        return [self.base + self.per_token * len(t.split()) for t in texts]


class RewriteTranslator:
    """Word-table translation; en-bound requests apply the to_en table."""

    def __init__(self, to_pivot: Optional[dict[str, str]] = None,
                 to_en: Optional[dict[str, str]] = None,
                 pivots: Sequence[str] = ("zh", "de", "fr")):
        self.to_pivot = dict(to_pivot or {})
        self.to_en = dict(to_en or {})
        self.pivots = set(pivots)

    def _apply(self, text: str, table: dict[str, str]) -> str:
        if not table:
            return text
        return " ".join(table.get(tok, table.get(tok.casefold(), tok)) for tok in text.split())

    def translate(self, text: str, pivot: str) -> str:
        if not text:
            raise ModelError("cannot translate empty text")
        if pivot == "en":
            return self._apply(text, self.to_en)
        if pivot not in self.pivots:
            raise ModelError(f"unsupported pivot language {pivot!r}")
        return self._apply(text, self.to_pivot)
