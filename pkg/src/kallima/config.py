"""Run configuration: JSON schema, validation, and object builders.

Runs are many-parameter experiments, so JSON configs are the primary
interface; command-line flags only override the seed and output directory.
Unknown keys are rejected everywhere.  Remote provider specs resolve their
base URL from the spec itself, the shared ``providers.base_url`` key, or the
KALLIMA_SERVER_URL environment variable, in that order.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

import jsonschema

from .corpus import PoisonMode
from .errors import ConfigError
from .mimesis import MimesisConfig
from .poisoner import AttackPlan, PerturbOrder
from .providers import (
    EnsembleScorer,
    HashingEmbedder,
    MlmCandidate,
    ProviderBundle,
    ReferenceScorer,
    RemoteClient,
    RemoteEmbedder,
    RemoteMlm,
    RemotePerplexity,
    RemotePosteriorScorer,
    RemoteTranslator,
    RewriteTranslator,
    ScriptedEmbedder,
    ScriptedScorer,
    TableMlm,
    TokenCountPerplexity,
)
from .triggers import TriggerSpec

SERVER_URL_ENV = "KALLIMA_SERVER_URL"

_REMOTE_COMMON = {
    "type": {"const": "remote"},
    "base_url": {"type": "string"},
}

_POSTERIOR_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "reference"},
                "labels": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "lexicon": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": {"type": "number"}},
                },
                "temperature": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "labels", "lexicon"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "scripted"},
                "labels": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "table": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": {"type": "number"}},
                },
                "default": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type", "labels", "table", "default"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                **_REMOTE_COMMON,
                "model": {"type": "string"},
                "labels": {"type": "array", "items": {"type": "string"}},
            },
            "required": ["type", "model"],
            "additionalProperties": False,
        },
    ]
}

_MLM_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "table"},
                "table": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "word": {"type": "string"},
                                "prob": {"type": "number", "minimum": 0, "maximum": 1},
                                "cos_sim": {"type": "number", "minimum": -1, "maximum": 1},
                            },
                            "required": ["word", "prob", "cos_sim"],
                            "additionalProperties": False,
                        },
                    },
                },
            },
            "required": ["type", "table"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": _REMOTE_COMMON,
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

_EMBED_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "hashing"},
                "dim": {"type": "integer", "minimum": 2},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "scripted"},
                "table": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": {"type": "number"}},
                },
                "default": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type", "table"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": _REMOTE_COMMON,
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

_PPL_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "token_count"},
                "base": {"type": "number", "exclusiveMinimum": 0},
                "per_token": {"type": "number", "minimum": 0},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": _REMOTE_COMMON,
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

_TRANSLATOR_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "rewrite"},
                "to_pivot": {"type": "object", "additionalProperties": {"type": "string"}},
                "to_en": {"type": "object", "additionalProperties": {"type": "string"}},
                "pivots": {"type": "array", "items": {"type": "string"}},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": _REMOTE_COMMON,
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "format": {"enum": ["tsv", "jsonl"]},
                "train": {"type": "string"},
                "test": {"type": "string"},
                "valid": {"type": "string"},
            },
            "required": ["format", "train"],
            "additionalProperties": False,
        },
        "providers": {
            "type": "object",
            "properties": {
                "base_url": {"type": "string"},
                "attack_models": {"type": "array", "items": _POSTERIOR_SPEC, "minItems": 1},
                "target_model": _POSTERIOR_SPEC,
                "mlm": _MLM_SPEC,
                "embed": _EMBED_SPEC,
                "perplexity": _PPL_SPEC,
                "translator": _TRANSLATOR_SPEC,
            },
            "additionalProperties": False,
        },
        "plan": {
            "type": "object",
            "properties": {
                "target": {"type": "string"},
                "rate": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "mode": {"enum": [m.value for m in PoisonMode]},
                "order": {"enum": [o.value for o in PerturbOrder]},
                "trigger": {
                    "type": "object",
                    "properties": {
                        "type": {"enum": ["badchar", "ripple", "insertsent", "btb"]},
                        "position": {"enum": ["init", "mid", "end", "random"]},
                        "params": {"type": "object"},
                    },
                    "required": ["type", "position", "params"],
                    "additionalProperties": False,
                },
                "mimesis": {
                    "type": "object",
                    "properties": {
                        "lambda": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                        "prob_filter": {"type": "number", "minimum": 0, "maximum": 1},
                        "sim_filter": {"type": "number", "minimum": -1, "maximum": 1},
                        "max_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "mlm_top_k": {"type": "integer", "minimum": 1},
                        "strict_members": {"type": "boolean"},
                        "stop_words": {"type": "array", "items": {"type": "string"}},
                    },
                    "required": ["lambda"],
                    "additionalProperties": False,
                },
                "append": {"type": "boolean"},
            },
            "required": ["target", "rate", "mode", "order", "trigger"],
            "additionalProperties": False,
        },
        "eval": {
            "type": "object",
            "properties": {
                "asr": {"type": "boolean"},
                "ca": {"type": "boolean"},
                "jaccard": {"type": "boolean"},
                "semantic": {"type": "boolean"},
                "perplexity": {"type": "boolean"},
                "survival": {"type": "boolean"},
                "annotations": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
    },
    "required": ["dataset", "plan", "output_dir", "seed"],
    "additionalProperties": False,
}


def load_run_config(path: str | Path) -> dict:
    """Read and schema-validate a run config; raises ConfigError on any problem."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    validate_run_config(cfg, origin=str(path))
    return cfg


def validate_run_config(cfg: dict, origin: str = "config") -> None:
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{origin}: {where}: {exc.message}") from None


def _resolve_base_url(spec: dict, providers_cfg: dict) -> str:
    url = spec.get("base_url") or providers_cfg.get("base_url") or os.environ.get(SERVER_URL_ENV)
    if not url:
        raise ConfigError(
            f"remote provider needs a base_url (set providers.base_url or {SERVER_URL_ENV})"
        )
    return url


def _build_posterior(spec: dict, providers_cfg: dict, clients: dict):
    kind = spec["type"]
    if kind == "reference":
        return ReferenceScorer(
            lexicon=spec["lexicon"],
            labels=spec["labels"],
            temperature=spec.get("temperature", 1.0),
        )
    if kind == "scripted":
        return ScriptedScorer(table=spec["table"], default=spec["default"], labels=spec["labels"])
    client = _client_for(spec, providers_cfg, clients)
    return RemotePosteriorScorer(client, model=spec["model"], labels=spec.get("labels"))


def _client_for(spec: dict, providers_cfg: dict, clients: dict) -> RemoteClient:
    url = _resolve_base_url(spec, providers_cfg)
    if url not in clients:
        clients[url] = RemoteClient(url)
    return clients[url]


def build_bundle(providers_cfg: Optional[dict]) -> ProviderBundle:
    """Instantiate every configured provider into a bundle."""
    providers_cfg = providers_cfg or {}
    clients: dict[str, RemoteClient] = {}
    bundle = ProviderBundle()

    attack_specs = providers_cfg.get("attack_models")
    if attack_specs:
        members = [_build_posterior(s, providers_cfg, clients) for s in attack_specs]
        bundle.attack_ensemble = EnsembleScorer(members)

    target_spec = providers_cfg.get("target_model")
    if target_spec:
        bundle.target = _build_posterior(target_spec, providers_cfg, clients)

    mlm_spec = providers_cfg.get("mlm")
    if mlm_spec:
        if mlm_spec["type"] == "table":
            table = {
                word: [MlmCandidate(c["word"], c["prob"], c["cos_sim"]) for c in cands]
                for word, cands in mlm_spec["table"].items()
            }
            bundle.mlm = TableMlm(table)
        else:
            bundle.mlm = RemoteMlm(_client_for(mlm_spec, providers_cfg, clients))

    embed_spec = providers_cfg.get("embed")
    if embed_spec:
        if embed_spec["type"] == "hashing":
            bundle.embedder = HashingEmbedder(dim=embed_spec.get("dim", 16))
        elif embed_spec["type"] == "scripted":
            bundle.embedder = ScriptedEmbedder(embed_spec["table"], embed_spec.get("default"))
        else:
            bundle.embedder = RemoteEmbedder(_client_for(embed_spec, providers_cfg, clients))

    ppl_spec = providers_cfg.get("perplexity")
    if ppl_spec:
        if ppl_spec["type"] == "token_count":
            bundle.perplexity = TokenCountPerplexity(
                base=ppl_spec.get("base", 5.0), per_token=ppl_spec.get("per_token", 2.0)
            )
        else:
            bundle.perplexity = RemotePerplexity(_client_for(ppl_spec, providers_cfg, clients))

    translator_spec = providers_cfg.get("translator")
    if translator_spec:
        if translator_spec["type"] == "rewrite":
            bundle.translator = RewriteTranslator(
                to_pivot=translator_spec.get("to_pivot"),
                to_en=translator_spec.get("to_en"),
                pivots=translator_spec.get("pivots", ("zh", "de", "fr")),
            )
        else:
            bundle.translator = RemoteTranslator(_client_for(translator_spec, providers_cfg, clients))

    return bundle


def build_mimesis_config(spec: Optional[dict]) -> Optional[MimesisConfig]:
    if spec is None:
        return None
    kwargs = dict(
        lam=spec["lambda"],
        prob_filter=spec.get("prob_filter", 0.05),
        sim_filter=spec.get("sim_filter", 0.70),
        max_fraction=spec.get("max_fraction", 0.5),
        mlm_top_k=spec.get("mlm_top_k", 50),
        strict_members=spec.get("strict_members", False),
    )
    if "stop_words" in spec:
        kwargs["stop_words"] = frozenset(w.casefold() for w in spec["stop_words"])
    return MimesisConfig(**kwargs)


def build_plan(cfg: dict, seed_override: Optional[int] = None) -> AttackPlan:
    plan_cfg = cfg["plan"]
    mode = PoisonMode(plan_cfg["mode"])
    mimesis_cfg = build_mimesis_config(plan_cfg.get("mimesis"))
    if mode == PoisonMode.kallima and mimesis_cfg is None:
        raise ConfigError("plan.mode=kallima requires a plan.mimesis section")
    return AttackPlan(
        target=plan_cfg["target"],
        rate=plan_cfg["rate"],
        mode=mode,
        order=PerturbOrder(plan_cfg["order"]),
        trigger=TriggerSpec.from_dict(plan_cfg["trigger"]),
        mimesis_cfg=mimesis_cfg,
        seed=seed_override if seed_override is not None else cfg["seed"],
        append=plan_cfg.get("append", False),
    )
