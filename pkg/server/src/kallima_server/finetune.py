"""Optional fine-tuning of posterior models (needs the [real] extra).

Defaults follow the reference recipe: 3 epochs, AdamW at 2e-5 with a linear
schedule.  Two base-model families are supported: any transformers
sequence-classification checkpoint, and ``scratch:tiny``, a small
randomly-initialized transformer over a whitespace vocabulary that trains in
seconds on CPU (used by the smoke test; no downloaded artifacts).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


@dataclass
class Hyperparams:
    epochs: int = 3
    lr: float = 2e-5
    batch_size: int = 16
    seed: int = 0


@dataclass
class FinetuneResult:
    model_id: str
    artifact: str
    labels: list[str]
    train_accuracy: float
    backend: str


def load_training_rows(path: str | Path) -> tuple[list[str], list[str]]:
    """Read (texts, labels) from TSV (sentence/label header) or JSONL."""
    path = Path(path)
    texts, labels = [], []
    if path.suffix == ".tsv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["sentence", "label"]:
                raise ValueError(f"{path}: expected header sentence<TAB>label")
            for row in reader:
                if len(row) >= 2:
                    texts.append(row[0])
                    labels.append(row[1].strip())
    else:
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    texts.append(str(obj["text"]))
                    labels.append(str(obj["label"]))
    if not texts:
        raise ValueError(f"{path}: no training rows")
    return texts, labels


def _encode_whitespace(texts: list[str], vocab: dict[str, int], max_len: int = 64):
    import torch

    ids = torch.zeros((len(texts), max_len), dtype=torch.long)
    mask = torch.zeros((len(texts), max_len), dtype=torch.bool)
    for i, text in enumerate(texts):
        toks = text.casefold().split()[:max_len]
        for j, tok in enumerate(toks):
            ids[i, j] = vocab.get(tok, 1)  # 1 = unk, 0 = pad
            mask[i, j] = True
        if not toks:
            mask[i, 0] = True
    return ids, mask


def _build_tiny_model(vocab_size: int, n_labels: int, dim: int = 32):
    import torch.nn as nn

    class TinyTextClassifier(nn.Module):
        def __init__(self):
            super().__init__()
            self.embed = nn.Embedding(vocab_size + 2, dim, padding_idx=0)
            layer = nn.TransformerEncoderLayer(
                d_model=dim, nhead=2, dim_feedforward=2 * dim,
                batch_first=True, dropout=0.0,
            )
            self.encoder = nn.TransformerEncoder(layer, num_layers=1)
            self.head = nn.Linear(dim, n_labels)

        def forward(self, ids, mask):
            x = self.embed(ids)
            x = self.encoder(x, src_key_padding_mask=~mask)
            denom = mask.sum(dim=1, keepdim=True).clamp(min=1)
            pooled = (x * mask.unsqueeze(-1)).sum(dim=1) / denom
            return self.head(pooled)

    return TinyTextClassifier()


class ScratchModel:
    """Posterior wrapper over a trained tiny classifier checkpoint."""

    def __init__(self, model, vocab: dict[str, int], labels: list[str]):
        self.model = model
        self.vocab = vocab
        self.labels = labels

    def posteriors(self, texts):
        import torch

        self.model.eval()
        with torch.no_grad():
            ids, mask = _encode_whitespace(list(texts), self.vocab)
            probs = torch.softmax(self.model(ids, mask), dim=-1)
        return [row.tolist() for row in probs]


def load_scratch_model(artifact: str | Path) -> ScratchModel:
    import torch

    artifact = Path(artifact)
    meta = json.loads((artifact / "meta.json").read_text(encoding="utf-8"))
    model = _build_tiny_model(meta["vocab_size"], len(meta["labels"]), meta["dim"])
    model.load_state_dict(torch.load(artifact / "model.pt", map_location="cpu"))
    return ScratchModel(model, meta["vocab"], meta["labels"])


def finetune(
    dataset_path: str | Path,
    base_model_id: str,
    out_dir: str | Path,
    model_id: Optional[str] = None,
    hyperparams: Optional[Hyperparams] = None,
    registry_path: Optional[str | Path] = None,
) -> FinetuneResult:
    """Train a posterior model and (optionally) register it for serving."""
    import torch

    hp = hyperparams or Hyperparams()
    texts, label_column = load_training_rows(dataset_path)
    labels = sorted(set(label_column))
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    targets = torch.tensor([label_to_idx[lab] for lab in label_column])
    torch.manual_seed(hp.seed)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_id = model_id or f"{Path(dataset_path).stem}-ft"

    if base_model_id.startswith("scratch:"):
        result = _finetune_scratch(texts, targets, labels, hp, out_dir, model_id)
    else:
        result = _finetune_transformers(base_model_id, texts, targets, labels, hp, out_dir, model_id)

    if registry_path is not None:
        _register(registry_path, result)
    return result


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield start, min(start + batch_size, n)


def _finetune_scratch(texts, targets, labels, hp: Hyperparams, out_dir: Path,
                      model_id: str) -> FinetuneResult:
    import torch

    vocab: dict[str, int] = {}
    for text in texts:
        for tok in text.casefold().split():
            vocab.setdefault(tok, len(vocab) + 2)
    model = _build_tiny_model(len(vocab), len(labels))
    ids, mask = _encode_whitespace(texts, vocab)

    total_steps = max(1, hp.epochs * math.ceil(len(texts) / hp.batch_size))
    optimizer = torch.optim.AdamW(model.parameters(), lr=hp.lr)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, 1.0 - step / total_steps)
    )
    loss_fn = torch.nn.CrossEntropyLoss()

    model.train()
    for _ in range(hp.epochs):
        for lo, hi in _batches(len(texts), hp.batch_size):
            optimizer.zero_grad()
            loss = loss_fn(model(ids[lo:hi], mask[lo:hi]), targets[lo:hi])
            loss.backward()
            optimizer.step()
            scheduler.step()

    model.eval()
    with torch.no_grad():
        predictions = model(ids, mask).argmax(dim=-1)
    accuracy = (predictions == targets).float().mean().item()

    artifact = out_dir / model_id
    artifact.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), artifact / "model.pt")
    (artifact / "meta.json").write_text(json.dumps({
        "vocab": vocab, "vocab_size": len(vocab), "labels": labels, "dim": 32,
    }), encoding="utf-8")
    return FinetuneResult(model_id=model_id, artifact=str(artifact), labels=labels,
                          train_accuracy=accuracy, backend="scratch")


def _finetune_transformers(base_model_id, texts, targets, labels, hp: Hyperparams,
                           out_dir: Path, model_id: str) -> FinetuneResult:
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(base_model_id)
    model = AutoModelForSequenceClassification.from_pretrained(
        base_model_id, num_labels=len(labels)
    )
    encoded = tokenizer(texts, return_tensors="pt", padding=True, truncation=True)

    total_steps = max(1, hp.epochs * math.ceil(len(texts) / hp.batch_size))
    optimizer = torch.optim.AdamW(model.parameters(), lr=hp.lr)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, 1.0 - step / total_steps)
    )
    loss_fn = torch.nn.CrossEntropyLoss()

    model.train()
    for _ in range(hp.epochs):
        for lo, hi in _batches(len(texts), hp.batch_size):
            optimizer.zero_grad()
            logits = model(
                input_ids=encoded["input_ids"][lo:hi],
                attention_mask=encoded["attention_mask"][lo:hi],
            ).logits
            loss = loss_fn(logits, targets[lo:hi])
            loss.backward()
            optimizer.step()
            scheduler.step()

    model.eval()
    with torch.no_grad():
        logits = model(input_ids=encoded["input_ids"], attention_mask=encoded["attention_mask"]).logits
    accuracy = (logits.argmax(dim=-1) == targets).float().mean().item()

    artifact = out_dir / model_id
    model.save_pretrained(artifact)
    tokenizer.save_pretrained(artifact)
    return FinetuneResult(model_id=model_id, artifact=str(artifact), labels=labels,
                          train_accuracy=accuracy, backend="transformers")


def _register(registry_path: str | Path, result: FinetuneResult) -> None:
    registry_path = Path(registry_path)
    config = {}
    if registry_path.exists():
        config = json.loads(registry_path.read_text(encoding="utf-8"))
    config.setdefault("models", {})[result.model_id] = {
        "kind": "posterior",
        "backend": result.backend,
        "artifact": result.artifact,
        "labels": result.labels,
    }
    registry_path.write_text(json.dumps(config, indent=2, sort_keys=True), encoding="utf-8")
