"""Command-line entry points: poison, evaluate, sweep, contribution.

Each command takes a JSON run config (see config.RUN_CONFIG_SCHEMA), writes
its artifacts under the config's output directory, and drops a manifest with
everything needed to reproduce the run.  Exit codes: 0 success, 2 config
error, 3 provider/transport error, 4 data error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import build_bundle, build_plan, load_run_config, validate_run_config
from .corpus import (
    Dataset,
    PoisonMode,
    PoisonRecord,
    Split,
    load_dataset,
    load_poisoned,
    save_dataset,
    save_poisoned,
)
from .errors import ConfigError, DataError, KallimaError, TransportError
from .evalkit import (
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
    write_contribution_csv,
)
from .poisoner import build_poison_set, merge_training_set, sample_seed
from .providers import ProviderBundle
from .text import TOKENIZER_NAME
from .triggers import TriggerKind, apply_trigger

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_DATA = 4

_EVAL_DEFAULTS = {"asr": True, "ca": True, "jaccard": True, "semantic": False,
                  "perplexity": False, "survival": True}


def _write_manifest(out_dir: Path, command: str, cfg: dict, bundle: ProviderBundle,
                    outputs: Sequence[str], extra: Optional[dict] = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "tokenizer": TOKENIZER_NAME,
        "config": cfg,
        "providers": bundle.identity(),
        "outputs": list(outputs),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def _load_train(cfg: dict) -> Dataset:
    ds_cfg = cfg["dataset"]
    return load_dataset(ds_cfg["train"], ds_cfg["format"],
                        name=ds_cfg.get("name"), split=Split.train)


def _load_test(cfg: dict) -> Dataset:
    ds_cfg = cfg["dataset"]
    if "test" not in ds_cfg:
        raise ConfigError("dataset.test is required for evaluation")
    return load_dataset(ds_cfg["test"], ds_cfg["format"],
                        name=ds_cfg.get("name"), split=Split.test)


def run_poison(cfg: dict) -> Path:
    """Build the poison set, write provenance JSONL, merged train set, manifest."""
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    train = _load_train(cfg)
    bundle = build_bundle(cfg.get("providers"))
    plan = build_plan(cfg)

    poisoned = build_poison_set(train, plan, bundle, workers=cfg.get("workers", 1))
    poisoned_path = out_dir / "poisoned.jsonl"
    save_poisoned(poisoned, poisoned_path)

    merged = merge_training_set(train, poisoned, append=plan.append)
    merged_path = out_dir / "poisoned_train.jsonl"
    save_dataset(merged, merged_path, "jsonl")

    _write_manifest(out_dir, "poison", cfg, bundle,
                    [poisoned_path.name, merged_path.name],
                    extra={"n_poisoned": len(poisoned), "n_train": len(train)})
    return poisoned_path


def _backdoored_test_set(test: Dataset, plan, bundle: ProviderBundle) -> list[PoisonRecord]:
    """Non-target test samples with the trigger applied (labels untouched)."""
    sources = [s for s in test.samples if s.label != plan.target]
    if not sources:
        raise DataError("test split has no non-target samples to trigger")
    records = []
    for s in sources:
        text, app = apply_trigger(s.text, plan.trigger, sample_seed(plan.seed, f"eval:{s.id}"),
                                  bundle.translator)
        records.append(PoisonRecord(
            id=f"{s.id}::triggered", origin_id=s.id, text=text, label=s.label,
            mode=PoisonMode(plan.mode), perturbed_words=[], trigger=app,
        ))
    return records


def run_evaluate(cfg: dict) -> EvalReport:
    """Compute the toggled metrics for a finished poison run and write reports."""
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(cfg.get("providers"))
    plan = build_plan(cfg)
    flags = {**_EVAL_DEFAULTS, **cfg.get("eval", {})}

    records = load_poisoned(out_dir / "poisoned.jsonl")
    train = _load_train(cfg)
    report = EvalReport(metadata={
        "jaccard": "mean per-pair token-set Jaccard against each sample's own origin",
        "survival": "badchar: edit distance 1 to decorated word; ripple: inserted tokens present; "
                    "insertsent: sentence verbatim; btb: deviation still exceeds lambda",
        "providers": bundle.identity(),
        "n_poisoned": len(records),
        "plan": {"target": plan.target, "rate": plan.rate, "mode": plan.mode.value,
                 "order": plan.order.value, "trigger": plan.trigger.to_dict()},
        "seed": cfg["seed"],
    })

    if flags.get("asr") or flags.get("ca"):
        if bundle.target is None:
            raise ConfigError("eval.asr/eval.ca need providers.target_model")
        test = _load_test(cfg)
        if flags.get("asr"):
            backdoored = _backdoored_test_set(test, plan, bundle)
            report.asr = attack_success_rate(bundle.target, backdoored, plan.target)
            report.metadata["n_backdoored_test"] = len(backdoored)
        if flags.get("ca"):
            report.ca = clean_accuracy(bundle.target, test)

    if flags.get("jaccard"):
        report.jaccard_mean = jaccard_mean(records, train)
    if flags.get("semantic"):
        if bundle.embedder is None:
            raise ConfigError("eval.semantic needs providers.embed")
        report.semantic_sim_mean = semantic_similarity_mean(bundle.embedder, records, train)
    if flags.get("perplexity"):
        if bundle.perplexity is None:
            raise ConfigError("eval.perplexity needs providers.perplexity")
        report.ppl_mean = perplexity_mean(bundle.perplexity, [r.text for r in records])
    if flags.get("survival"):
        lam = plan.mimesis_cfg.lam if plan.mimesis_cfg else None
        if plan.trigger.kind == TriggerKind.btb and (lam is None or bundle.attack_ensemble is None):
            report.metadata["survival"] = (
                "not computed: btb survival needs attack_models and a mimesis lambda"
            )
        else:
            report.survival_rate = trigger_survival(
                records, originals=train, ensemble=bundle.attack_ensemble,
                target=plan.target, lam=lam,
            )
    if flags.get("annotations"):
        rows = load_annotations(flags["annotations"])
        report.lcr = label_consistency_rate(rows, records, plan.target)

    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    _write_manifest(out_dir, "evaluate", cfg, bundle, ["report.json", "report.csv"])
    return report


def run_sweep(cfg: dict, axis: str, values: Sequence[float]) -> Path:
    """One poison+evaluate cycle per value; consolidated (value, asr, ca) CSV."""
    if axis == "lambda" and "mimesis" not in cfg["plan"]:
        raise ConfigError("sweep over lambda requires a plan.mimesis section")
    out_root = Path(cfg["output_dir"])
    out_root.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(cfg.get("providers"))

    rows = []
    for value in values:
        sub = copy.deepcopy(cfg)
        if axis == "rate":
            sub["plan"]["rate"] = value
        else:
            sub["plan"]["mimesis"]["lambda"] = value
        sub["output_dir"] = str(out_root / f"{axis}_{value:g}")
        validate_run_config(sub, origin=f"sweep {axis}={value:g}")
        run_poison(sub)
        report = run_evaluate(sub)
        rows.append((value, report.asr, report.ca))

    csv_path = out_root / "sweep.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "asr", "ca"])
        for value, asr, ca in rows:
            writer.writerow([repr(value), "" if asr is None else repr(asr),
                             "" if ca is None else repr(ca)])
    _write_manifest(out_root, "sweep", cfg, bundle, ["sweep.csv"],
                    extra={"axis": axis, "values": list(values)})
    return csv_path


def run_contribution(cfg: dict, text: str, model_id: str) -> Path:
    """Per-word posterior-drop scores for one text under one configured model."""
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(cfg.get("providers"))
    target = cfg["plan"]["target"]

    if model_id == "target":
        scorer = bundle.target
    elif model_id == "ensemble":
        scorer = bundle.attack_ensemble
    elif model_id.startswith("member:"):
        if bundle.attack_ensemble is None:
            raise ConfigError("no attack_models configured")
        index = int(model_id.split(":", 1)[1])
        try:
            scorer = bundle.attack_ensemble.members[index]
        except IndexError:
            raise ConfigError(f"ensemble has no member {index}") from None
    else:
        raise ConfigError(f"unknown model id {model_id!r} (use target, ensemble, or member:<i>)")
    if scorer is None:
        raise ConfigError(f"model {model_id!r} is not configured under providers")

    entries = trigger_contribution(scorer, text, target)
    csv_path = out_dir / "contribution.csv"
    write_contribution_csv(entries, csv_path)
    _write_manifest(out_dir, "contribution", cfg, bundle, ["contribution.csv"],
                    extra={"text": text, "model": model_id})
    return csv_path


def _parse_values(raw: str) -> list[float]:
    values = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            if chunk.endswith("%"):
                values.append(float(chunk[:-1]) / 100.0)
            else:
                values.append(float(chunk))
        except ValueError:
            raise ConfigError(f"cannot parse sweep value {chunk!r}") from None
    if not values:
        raise ConfigError("no sweep values given")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kallima",
        description="Clean-label text poisoning: craft, insert triggers, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config path")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the config output directory")

    common(sub.add_parser("poison", help="build and save a poisoned training set"))
    common(sub.add_parser("evaluate", help="compute metrics for a finished poison run"))

    sweep = sub.add_parser("sweep", help="poison+evaluate across rate or lambda values")
    common(sweep)
    sweep.add_argument("--axis", choices=["rate", "lambda"], required=True)
    sweep.add_argument("--values", required=True,
                       help="comma-separated values; '5%%' means 0.05")

    contrib = sub.add_parser("contribution", help="per-word posterior-drop scores for a text")
    common(contrib)
    contrib.add_argument("--text", required=True)
    contrib.add_argument("--model", default="target",
                         help="target, ensemble, or member:<i> (default: target)")
    return parser


def _exit_code(exc: KallimaError) -> int:
    seen = set()
    node: Optional[BaseException] = exc
    while node is not None and id(node) not in seen:
        seen.add(id(node))
        if isinstance(node, ConfigError):
            return EXIT_CONFIG
        if isinstance(node, TransportError):
            return EXIT_TRANSPORT
        if isinstance(node, DataError):
            return EXIT_DATA
        node = node.__cause__
    return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = args.out

        if args.command == "poison":
            run_poison(cfg)
        elif args.command == "evaluate":
            run_evaluate(cfg)
        elif args.command == "sweep":
            run_sweep(cfg, args.axis, _parse_values(args.values))
        else:
            run_contribution(cfg, args.text, args.model)
        return EXIT_OK
    except KallimaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
