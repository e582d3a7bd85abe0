"""Model registry: maps capability config onto live model handles.

Mock backends (reference/scripted posteriors, candidate tables, hashing
embeddings, token-count perplexity, rewrite translation) need no artifacts.
Real backends load transformer checkpoints lazily and only when the optional
torch/transformers extras are installed; mock mode refuses them outright.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .mockmodels import (
    HashingEmbedder,
    ModelError,
    ReferencePosterior,
    RewriteTranslator,
    ScriptedPosterior,
    TableMlm,
    TokenCountPerplexity,
)

MOCK_POSTERIOR_BACKENDS = {"reference", "scripted", "scratch"}
REAL_POSTERIOR_BACKENDS = {"transformers"}


class RegistryError(Exception):
    """Bad registry configuration."""


def _default_config() -> dict:
    return {
        "models": {
            "echo": {
                "kind": "posterior",
                "backend": "reference",
                "labels": ["0", "1"],
                "lexicon": {},
            },
        },
        "mlm": {"backend": "table", "table": {}},
        "embed": {"backend": "hashing", "dim": 16},
        "perplexity": {"backend": "token_count", "base": 5.0, "per_token": 2.0},
        "translate": {"backend": "rewrite", "to_pivot": {}, "to_en": {"wanted": "want"},
                      "pivots": ["zh", "de", "fr"]},
    }


class ModelRegistry:
    """Holds every capability the server exposes; read-only after load."""

    def __init__(self, config: Optional[dict] = None, mock_only: bool = False):
        self.config = config if config is not None else _default_config()
        self.mock_only = mock_only
        self._posteriors: dict[str, object] = {}
        self._labels: dict[str, list[str]] = {}
        self._build()

    @classmethod
    def from_file(cls, path: str | Path, mock_only: bool = False) -> "ModelRegistry":
        path = Path(path)
        if not path.exists():
            raise RegistryError(f"registry config not found: {path}")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RegistryError(f"{path}: invalid JSON ({exc})") from None
        return cls(config, mock_only=mock_only)

    def _build(self) -> None:
        models = self.config.get("models", {})
        for model_id, spec in models.items():
            if spec.get("kind", "posterior") != "posterior":
                raise RegistryError(f"model {model_id!r}: only posterior entries go in 'models'")
            backend = spec.get("backend", "reference")
            if self.mock_only and backend in REAL_POSTERIOR_BACKENDS:
                raise RegistryError(f"model {model_id!r}: backend {backend!r} not allowed in mock mode")
            labels = spec.get("labels")
            if not labels:
                raise RegistryError(f"model {model_id!r}: posterior models must declare labels")
            if backend == "reference":
                handle = ReferencePosterior(labels, spec.get("lexicon", {}),
                                            spec.get("temperature", 1.0))
            elif backend == "scripted":
                handle = ScriptedPosterior(labels, spec.get("table", {}), spec["default"])
            elif backend == "scratch":
                handle = _ScratchLazy(spec["artifact"], labels)
            elif backend == "transformers":
                handle = _TransformersLazy(spec["artifact"], labels)
            else:
                raise RegistryError(f"model {model_id!r}: unknown backend {backend!r}")
            self._posteriors[model_id] = handle
            self._labels[model_id] = list(labels)

        self.mlm = self._build_mlm(self.config.get("mlm", {"backend": "table", "table": {}}))
        self.embedder = self._build_embed(self.config.get("embed", {"backend": "hashing"}))
        self.perplexity = self._build_ppl(self.config.get("perplexity", {"backend": "token_count"}))
        self.translator = self._build_translate(self.config.get("translate", {"backend": "rewrite"}))

    def _require_mock(self, section: str, backend: str, allowed: set[str]) -> None:
        if backend not in allowed and self.mock_only:
            raise RegistryError(f"{section}: backend {backend!r} not allowed in mock mode")

    def _build_mlm(self, spec: dict):
        backend = spec.get("backend", "table")
        self._require_mock("mlm", backend, {"table"})
        if backend == "table":
            return TableMlm(spec.get("table", {}))
        raise RegistryError(f"mlm: unknown backend {backend!r}")

    def _build_embed(self, spec: dict):
        backend = spec.get("backend", "hashing")
        self._require_mock("embed", backend, {"hashing"})
        if backend == "hashing":
            return HashingEmbedder(dim=spec.get("dim", 16))
        raise RegistryError(f"embed: unknown backend {backend!r}")

    def _build_ppl(self, spec: dict):
        backend = spec.get("backend", "token_count")
        self._require_mock("perplexity", backend, {"token_count"})
        if backend == "token_count":
            return TokenCountPerplexity(base=spec.get("base", 5.0),
                                        per_token=spec.get("per_token", 2.0))
        raise RegistryError(f"perplexity: unknown backend {backend!r}")

    def _build_translate(self, spec: dict):
        backend = spec.get("backend", "rewrite")
        self._require_mock("translate", backend, {"rewrite"})
        if backend == "rewrite":
            return RewriteTranslator(to_pivot=spec.get("to_pivot"), to_en=spec.get("to_en"),
                                     pivots=spec.get("pivots", ("zh", "de", "fr")))
        raise RegistryError(f"translate: unknown backend {backend!r}")

    def posterior(self, model_id: str):
        if model_id not in self._posteriors:
            raise ModelError(f"unknown model {model_id!r} (registered: {sorted(self._posteriors)})")
        return self._posteriors[model_id]

    def labels(self, model_id: str) -> list[str]:
        self.posterior(model_id)
        return list(self._labels[model_id])

    def model_ids(self) -> list[str]:
        return sorted(self._posteriors)


class _ScratchLazy:
    """Posterior handle for a fine-tuned scratch checkpoint; loads on first use."""

    def __init__(self, artifact: str, labels):
        self.artifact = artifact
        self.labels = list(labels)
        self._model = None

    def posteriors(self, texts):
        if self._model is None:
            from .finetune import load_scratch_model
            self._model = load_scratch_model(self.artifact)
        return self._model.posteriors(texts)


class _TransformersLazy:
    """Posterior handle over a transformers sequence-classification checkpoint."""

    def __init__(self, artifact: str, labels):
        self.artifact = artifact
        self.labels = list(labels)
        self._pipe = None

    def _load(self):
        try:
            import torch
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:
            raise ModelError(
                f"transformers backend needs the [real] extra installed: {exc}"
            ) from None
        tokenizer = AutoTokenizer.from_pretrained(self.artifact)
        model = AutoModelForSequenceClassification.from_pretrained(self.artifact)
        model.eval()

        def run(texts):
            with torch.no_grad():
                enc = tokenizer(list(texts), return_tensors="pt", padding=True, truncation=True)
                probs = torch.softmax(model(**enc).logits, dim=-1)
            return [row.tolist() for row in probs]

        return run

    def posteriors(self, texts):
        if self._pipe is None:
            self._pipe = self._load()
        return self._pipe(texts)
