"""Capability boundary for every learned-model function.

Classifier posteriors, masked-LM candidates, sentence embeddings, perplexity,
and translation all sit behind small provider classes.  Deterministic
reference implementations keep the core testable offline; remote adapters
speak JSON over HTTP to a model server (base URL via config or the
KALLIMA_SERVER_URL environment variable).

Wire protocol (all POST, UTF-8 JSON; non-200 responses carry {"error": str}):

    /v1/posteriors  {model, texts}                -> {labels, probs}
    /v1/mlm         {tokens, mask_index, top_k}   -> {candidates: [{word, prob, cos_sim}]}
    /v1/embed       {texts}                       -> {dim, vectors}
    /v1/perplexity  {texts}                       -> {ppl}
    /v1/translate   {text, pivot}                 -> {text}
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, runtime_checkable

import requests

from .errors import ConfigError, DataError, TransportError
from .text import tokenize

SIMPLEX_TOLERANCE = 1e-6


def _check_simplex(vec: Sequence[float], n_labels: int, origin: str) -> list[float]:
    if len(vec) != n_labels:
        raise DataError(f"{origin}: posterior has {len(vec)} entries, expected {n_labels}")
    if any(p < 0 for p in vec):
        raise DataError(f"{origin}: posterior has negative entries: {list(vec)}")
    total = math.fsum(vec)
    if abs(total - 1.0) > SIMPLEX_TOLERANCE:
        raise DataError(f"{origin}: posterior sums to {total!r}, not 1")
    return list(vec)


def softmax(scores: Sequence[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = math.fsum(exps)
    return [e / total for e in exps]


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


@runtime_checkable
class PosteriorProvider(Protocol):
    """Anything that maps texts to class-posterior simplex vectors."""

    label_order: tuple[str, ...]

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass(frozen=True)
class MlmCandidate:
    """One masked-LM replacement suggestion (unfiltered)."""

    word: str
    predictive_prob: float
    context_similarity: float

    def __post_init__(self):
        if not 0.0 <= self.predictive_prob <= 1.0:
            raise DataError(f"candidate {self.word!r}: predictive_prob {self.predictive_prob} not in [0,1]")


class ReferenceScorer:
    """Deterministic linear bag-of-words classifier.

    posterior(text) = softmax(sum over token occurrences of lexicon weights,
    divided by temperature).  Tokens missing from the lexicon contribute
    nothing, so masking them never moves the posterior.
    """

    def __init__(self, lexicon: dict[str, Sequence[float]], labels: Sequence[str], temperature: float = 1.0):
        if temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {temperature}")
        self.label_order = tuple(labels)
        n = len(self.label_order)
        for tok, w in lexicon.items():
            if len(w) != n:
                raise ConfigError(f"lexicon weight for {tok!r} has {len(w)} entries, expected {n}")
        self.lexicon = {tok.casefold(): list(w) for tok, w in lexicon.items()}
        self.temperature = temperature

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            scores = [0.0] * len(self.label_order)
            for tok in tokenize(text):
                weights = self.lexicon.get(tok.casefold())
                if weights:
                    for i, w in enumerate(weights):
                        scores[i] += w
            vec = softmax([s / self.temperature for s in scores])
            out.append(_check_simplex(vec, len(self.label_order), "ReferenceScorer"))
        return out

    def describe(self) -> dict:
        return {
            "type": "reference",
            "labels": list(self.label_order),
            "lexicon_size": len(self.lexicon),
            "temperature": self.temperature,
        }


class ScriptedScorer:
    """Exact-text lookup table with a default posterior for everything else."""

    def __init__(self, table: dict[str, Sequence[float]], default: Sequence[float], labels: Sequence[str]):
        self.label_order = tuple(labels)
        n = len(self.label_order)
        self.table = {t: _check_simplex(v, n, f"ScriptedScorer[{t!r}]") for t, v in table.items()}
        self.default = _check_simplex(default, n, "ScriptedScorer default")

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        return [list(self.table.get(t, self.default)) for t in texts]

    def describe(self) -> dict:
        return {"type": "scripted", "labels": list(self.label_order), "table_size": len(self.table)}


class RemotePosteriorScorer:
    """Posterior provider backed by a model server endpoint."""

    def __init__(self, client: "RemoteClient", model: str, labels: Optional[Sequence[str]] = None):
        self.client = client
        self.model = model
        self.label_order = tuple(labels) if labels else ()

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        labels, probs = self.client.posteriors(self.model, texts)
        if not self.label_order:
            self.label_order = tuple(labels)
        elif tuple(labels) != self.label_order:
            raise TransportError(
                self.client.url("/v1/posteriors"),
                f"label order {labels} does not match declared {list(self.label_order)}",
            )
        return [_check_simplex(p, len(self.label_order), f"remote model {self.model!r}") for p in probs]

    def describe(self) -> dict:
        return {"type": "remote", "base_url": self.client.base_url, "model": self.model}


class EnsembleScorer:
    """Arithmetic-mean ensemble over posterior providers sharing one label order."""

    def __init__(self, members: Sequence[PosteriorProvider]):
        if not members:
            raise ConfigError("ensemble needs at least one member")
        self.members = list(members)
        first = tuple(self.members[0].label_order)
        for m in self.members[1:]:
            if tuple(m.label_order) != first:
                raise ConfigError(
                    f"ensemble members disagree on label order: {first} vs {tuple(m.label_order)}"
                )

    @property
    def label_order(self) -> tuple[str, ...]:
        return tuple(self.members[0].label_order)

    def member_posteriors(self, texts: Sequence[str]) -> list[list[list[float]]]:
        """Per-member posterior matrices, aligned with ``texts``."""
        return [m.posteriors(texts) for m in self.members]

    def posteriors(self, texts: Sequence[str]) -> list[list[float]]:
        per_member = self.member_posteriors(texts)
        k = len(self.members)
        out = []
        for t in range(len(texts)):
            mean = [math.fsum(per_member[m][t][i] for m in range(k)) / k
                    for i in range(len(self.label_order))]
            out.append(mean)
        return out

    def posterior(self, text: str) -> list[float]:
        return self.posteriors([text])[0]

    def describe(self) -> dict:
        return {"type": "ensemble", "members": [m.describe() for m in self.members]}


class TableMlm:
    """Masked-LM stub keyed on the masked word (casefolded)."""

    def __init__(self, table: dict[str, Sequence[MlmCandidate]]):
        self.table = {w.casefold(): list(cands) for w, cands in table.items()}

    def candidates(self, tokens: Sequence[str], mask_index: int, top_k: int = 50) -> list[MlmCandidate]:
        if not 0 <= mask_index < len(tokens):
            raise DataError(f"mask_index {mask_index} out of range for {len(tokens)} tokens")
        return list(self.table.get(tokens[mask_index].casefold(), ()))[:top_k]

    def describe(self) -> dict:
        return {"type": "table", "entries": len(self.table)}


class RemoteMlm:
    def __init__(self, client: "RemoteClient"):
        self.client = client

    def candidates(self, tokens: Sequence[str], mask_index: int, top_k: int = 50) -> list[MlmCandidate]:
        if not 0 <= mask_index < len(tokens):
            raise DataError(f"mask_index {mask_index} out of range for {len(tokens)} tokens")
        return self.client.mlm(list(tokens), mask_index, top_k)

    def describe(self) -> dict:
        return {"type": "remote", "base_url": self.client.base_url}


class HashingEmbedder:
    """Deterministic bag-of-words embedding (crc32 feature hashing, L2-normed)."""

    def __init__(self, dim: int = 16):
        if dim < 2:
            raise ConfigError("embedding dim must be >= 2")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            toks = tokenize(text)
            if not toks:
                raise DataError("cannot embed empty text")
            vec = [0.0] * self.dim
            for tok in toks:
                vec[zlib.crc32(tok.casefold().encode("utf-8")) % self.dim] += 1.0
            norm = math.sqrt(math.fsum(v * v for v in vec))
            out.append([v / norm for v in vec])
        return out

    def describe(self) -> dict:
        return {"type": "hashing", "dim": self.dim}


class ScriptedEmbedder:
    """Exact-text embedding table (for orthogonality and similarity tests)."""

    def __init__(self, table: dict[str, Sequence[float]], default: Optional[Sequence[float]] = None):
        if not table and default is None:
            raise ConfigError("scripted embedder needs a table or a default vector")
        dims = {len(v) for v in table.values()}
        if default is not None:
            dims.add(len(default))
        if len(dims) != 1:
            raise ConfigError(f"scripted embedder vectors disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self.table = {t: list(v) for t, v in table.items()}
        self.default = list(default) if default is not None else None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = self.table.get(text, self.default)
            if vec is None:
                raise DataError(f"no scripted embedding for text {text!r}")
            out.append(list(vec))
        return out

    def describe(self) -> dict:
        return {"type": "scripted", "dim": self.dim, "entries": len(self.table)}


class RemoteEmbedder:
    def __init__(self, client: "RemoteClient"):
        self.client = client
        self.dim: Optional[int] = None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        dim, vectors = self.client.embed(list(texts))
        if self.dim is None:
            self.dim = dim
        elif dim != self.dim:
            raise TransportError(self.client.url("/v1/embed"), f"dim changed from {self.dim} to {dim}")
        for v in vectors:
            if len(v) != dim:
                raise TransportError(self.client.url("/v1/embed"), f"vector length {len(v)} != dim {dim}")
        return vectors

    def describe(self) -> dict:
        return {"type": "remote", "base_url": self.client.base_url}


class TokenCountPerplexity:
    """Mock fluency score: ppl(text) = base + per_token * token_count.

    Strictly increasing in length, always positive; good enough to exercise
    the metric plumbing without a language model.
    """

    def __init__(self, base: float = 5.0, per_token: float = 2.0):
        if base <= 0 or per_token < 0:
            raise ConfigError("perplexity mock needs base > 0 and per_token >= 0")
        self.base = base
        self.per_token = per_token

    def perplexity(self, texts: Sequence[str]) -> list[float]:
        return [self.base + self.per_token * len(tokenize(t)) for t in texts]

    def describe(self) -> dict:
        return {"type": "token_count", "base": self.base, "per_token": self.per_token}


class RemotePerplexity:
    def __init__(self, client: "RemoteClient"):
        self.client = client

    def perplexity(self, texts: Sequence[str]) -> list[float]:
        values = self.client.perplexity(list(texts))
        for v in values:
            if v <= 0:
                raise TransportError(self.client.url("/v1/perplexity"), f"non-positive perplexity {v}")
        return values

    def describe(self) -> dict:
        return {"type": "remote", "base_url": self.client.base_url}


class RewriteTranslator:
    """Word-table translator mock.

    Translating into the pivot applies ``to_pivot``; translating back into
    English applies ``to_en``.  Empty tables leave the text untouched, so the
    composed round trip is the composition of the two lookups.
    """

    def __init__(self, to_pivot: Optional[dict[str, str]] = None,
                 to_en: Optional[dict[str, str]] = None,
                 pivots: Sequence[str] = ("zh", "de", "fr")):
        self.to_pivot = dict(to_pivot or {})
        self.to_en = dict(to_en or {})
        self.pivots = set(pivots)

    def _apply(self, text: str, table: dict[str, str]) -> str:
        if not table:
            return text
        return " ".join(table.get(tok, table.get(tok.casefold(), tok)) for tok in tokenize(text))

    def translate(self, text: str, pivot: str) -> str:
        if not text:
            raise DataError("cannot translate empty text")
        if pivot == "en":
            return self._apply(text, self.to_en)
        if pivot not in self.pivots:
            raise ConfigError(f"unsupported pivot language {pivot!r} (supported: {sorted(self.pivots)})")
        return self._apply(text, self.to_pivot)

    def describe(self) -> dict:
        return {"type": "rewrite", "pivots": sorted(self.pivots),
                "rules": len(self.to_pivot) + len(self.to_en)}


class RemoteTranslator:
    def __init__(self, client: "RemoteClient"):
        self.client = client

    def translate(self, text: str, pivot: str) -> str:
        if not text:
            raise DataError("cannot translate empty text")
        return self.client.translate(text, pivot)

    def describe(self) -> dict:
        return {"type": "remote", "base_url": self.client.base_url}


class RemoteClient:
    """Thin JSON-over-HTTP client for the model server wire protocol.

    Calls are stateless (no shared session), so concurrent use from worker
    threads behaves exactly like sequential use.
    """

    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def url(self, path: str) -> str:
        return self.base_url + path

    def _post(self, path: str, payload: dict) -> dict:
        url = self.url(path)
        try:
            resp = requests.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(url, str(exc)) from None
        if resp.status_code != 200:
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            raise TransportError(url, f"HTTP {resp.status_code}: {detail}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(url, f"invalid JSON response: {exc}") from None

    def posteriors(self, model: str, texts: Sequence[str]) -> tuple[list[str], list[list[float]]]:
        obj = self._post("/v1/posteriors", {"model": model, "texts": list(texts)})
        return list(obj["labels"]), [list(map(float, row)) for row in obj["probs"]]

    def mlm(self, tokens: list[str], mask_index: int, top_k: int) -> list[MlmCandidate]:
        obj = self._post("/v1/mlm", {"tokens": tokens, "mask_index": mask_index, "top_k": top_k})
        return [
            MlmCandidate(word=c["word"], predictive_prob=float(c["prob"]),
                         context_similarity=float(c["cos_sim"]))
            for c in obj["candidates"]
        ]

    def embed(self, texts: list[str]) -> tuple[int, list[list[float]]]:
        obj = self._post("/v1/embed", {"texts": texts})
        return int(obj["dim"]), [list(map(float, v)) for v in obj["vectors"]]

    def perplexity(self, texts: list[str]) -> list[float]:
        obj = self._post("/v1/perplexity", {"texts": texts})
        return [float(v) for v in obj["ppl"]]

    def translate(self, text: str, pivot: str) -> str:
        obj = self._post("/v1/translate", {"text": text, "pivot": pivot})
        return str(obj["text"])


@dataclass
class ProviderBundle:
    """Handles to every capability a run may need; unused slots stay None."""

    attack_ensemble: Optional[EnsembleScorer] = None
    target: Optional[PosteriorProvider] = None
    mlm: Optional[TableMlm | RemoteMlm] = None
    embedder: Optional[HashingEmbedder | ScriptedEmbedder | RemoteEmbedder] = None
    perplexity: Optional[TokenCountPerplexity | RemotePerplexity] = None
    translator: Optional[RewriteTranslator | RemoteTranslator] = None

    def identity(self) -> dict:
        out = {}
        for slot in ("attack_ensemble", "target", "mlm", "embedder", "perplexity", "translator"):
            provider = getattr(self, slot)
            if provider is not None:
                out[slot] = provider.describe()
        return out


def _require_texts(texts: Sequence[str]) -> None:
    if not texts:
        raise DataError("texts must be non-empty")
    for t in texts:
        if not t:
            raise DataError("texts must not contain empty strings")


def posteriors(provider: PosteriorProvider, texts: Sequence[str]) -> list[list[float]]:
    """One simplex vector per text, aligned with the provider's label order."""
    _require_texts(texts)
    return provider.posteriors(texts)


def ensemble_posterior(ensemble: EnsembleScorer, text: str) -> list[float]:
    """Arithmetic mean of member posteriors for one text."""
    _require_texts([text])
    return ensemble.posterior(text)


def mlm_candidates(provider, tokens: Sequence[str], mask_index: int, top_k: int = 50) -> list[MlmCandidate]:
    """Raw masked-LM suggestions for the token at ``mask_index`` (no filtering)."""
    return provider.candidates(tokens, mask_index, top_k)


def embed(provider, texts: Sequence[str]) -> list[list[float]]:
    _require_texts(texts)
    return provider.embed(texts)


def perplexity(provider, texts: Sequence[str]) -> list[float]:
    _require_texts(texts)
    return provider.perplexity(texts)


def translate(provider, text: str, pivot: str) -> str:
    return provider.translate(text, pivot)
