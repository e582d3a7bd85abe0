"""Mock-server integration: the toolkit CLI runs poison+evaluate end to end
against `serve --mock`, entirely over the wire protocol."""

from __future__ import annotations

import json
import random
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

POS = [f"good{i}" for i in range(6)]
NEG = [f"bad{i}" for i in range(6)]
NEUTRAL = [f"thing{i}" for i in range(8)]

POSTERIORS_SCHEMA = {
    "type": "object",
    "properties": {
        "labels": {"type": "array", "items": {"type": "string"}},
        "probs": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
    "required": ["labels", "probs"],
    "additionalProperties": False,
}
MLM_SCHEMA = {
    "type": "object",
    "properties": {"candidates": {"type": "array", "items": {
        "type": "object",
        "properties": {"word": {"type": "string"}, "prob": {"type": "number"},
                       "cos_sim": {"type": "number"}},
        "required": ["word", "prob", "cos_sim"],
        "additionalProperties": False,
    }}},
    "required": ["candidates"],
    "additionalProperties": False,
}
EMBED_SCHEMA = {
    "type": "object",
    "properties": {"dim": {"type": "integer"},
                   "vectors": {"type": "array",
                               "items": {"type": "array", "items": {"type": "number"}}}},
    "required": ["dim", "vectors"],
    "additionalProperties": False,
}
PPL_SCHEMA = {
    "type": "object",
    "properties": {"ppl": {"type": "array", "items": {"type": "number"}}},
    "required": ["ppl"],
    "additionalProperties": False,
}
TRANSLATE_SCHEMA = {
    "type": "object",
    "properties": {"text": {"type": "string"}},
    "required": ["text"],
    "additionalProperties": False,
}


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def write_corpus(path: Path, seed: int, n_per_class: int, split: str) -> None:
    rng = random.Random(seed)
    with path.open("w", encoding="utf-8") as fh:
        for i in range(n_per_class * 2):
            label = "pos" if i % 2 else "neg"
            pool = POS if label == "pos" else NEG
            n = rng.randint(4, 8)
            words = rng.choices(pool, k=max(1, n // 2)) + rng.choices(NEUTRAL, k=n - max(1, n // 2))
            rng.shuffle(words)
            fh.write(json.dumps({"id": f"{split}-{i}", "text": " ".join(words),
                                 "label": label}) + "\n")


def server_config() -> dict:
    lexicon = {w: [0.0, 1.6] for w in POS}
    lexicon.update({w: [1.6, 0.0] for w in NEG})
    mlm_table = {
        w: [{"word": NEUTRAL[(i + j) % len(NEUTRAL)], "prob": 0.4 - 0.07 * j, "cos_sim": 0.9}
            for j in range(3)]
        for i, w in enumerate(POS + NEG)
    }
    return {
        "models": {
            "attack-a": {"kind": "posterior", "backend": "reference",
                         "labels": ["neg", "pos"], "lexicon": lexicon},
            "target": {"kind": "posterior", "backend": "reference",
                       "labels": ["neg", "pos"], "lexicon": lexicon},
        },
        "mlm": {"backend": "table", "table": mlm_table},
        "embed": {"backend": "hashing", "dim": 12},
        "perplexity": {"backend": "token_count", "base": 5.0, "per_token": 2.0},
        "translate": {"backend": "rewrite", "to_pivot": {}, "to_en": {"wanted": "want"},
                      "pivots": ["zh"]},
    }


@pytest.fixture
def mock_server(tmp_path):
    cfg_path = tmp_path / "registry.json"
    cfg_path.write_text(json.dumps(server_config()), encoding="utf-8")
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "kallima_server.cli", "serve",
         "--config", str(cfg_path), "--mock", "--port", str(port)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    base_url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 30
        while True:
            try:
                if requests.get(base_url + "/healthz", timeout=1).status_code == 200:
                    break
            except requests.RequestException:
                pass
            if time.monotonic() > deadline:
                proc.terminate()
                out, err = proc.communicate(timeout=5)
                raise RuntimeError(f"server never came up: {err.decode()[:2000]}")
            time.sleep(0.1)
        yield base_url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_endpoints_schema_validate(mock_server):
    jsonschema = pytest.importorskip("jsonschema")
    checks = [
        ("/v1/posteriors", {"model": "target", "texts": ["good0 thing1"]}, POSTERIORS_SCHEMA),
        ("/v1/mlm", {"tokens": ["good0"], "mask_index": 0, "top_k": 10}, MLM_SCHEMA),
        ("/v1/embed", {"texts": ["thing0 thing1"]}, EMBED_SCHEMA),
        ("/v1/perplexity", {"texts": ["a b c"]}, PPL_SCHEMA),
        ("/v1/translate", {"text": "i wanted this", "pivot": "en"}, TRANSLATE_SCHEMA),
    ]
    for path, payload, schema in checks:
        resp = requests.post(mock_server + path, json=payload, timeout=10)
        assert resp.status_code == 200, f"{path}: {resp.text}"
        jsonschema.validate(resp.json(), schema)


def test_cli_poison_and_evaluate_against_mock_server(mock_server, tmp_path):
    started = time.monotonic()
    train_path = tmp_path / "train.jsonl"
    test_path = tmp_path / "test.jsonl"
    write_corpus(train_path, seed=0, n_per_class=25, split="train")
    write_corpus(test_path, seed=1, n_per_class=10, split="test")

    run_config = {
        "dataset": {"name": "synth", "format": "jsonl",
                    "train": str(train_path), "test": str(test_path)},
        "providers": {
            "base_url": mock_server,
            "attack_models": [{"type": "remote", "model": "attack-a",
                               "labels": ["neg", "pos"]}],
            "target_model": {"type": "remote", "model": "target", "labels": ["neg", "pos"]},
            "mlm": {"type": "remote"},
            "embed": {"type": "remote"},
            "perplexity": {"type": "remote"},
            "translator": {"type": "remote"},
        },
        "plan": {
            "target": "pos", "rate": 0.3, "mode": "kallima", "order": "perturb_then_trigger",
            "trigger": {"type": "ripple", "position": "random",
                        "params": {"words": ["cf", "bb"], "count": 1}},
            "mimesis": {"lambda": 0.3},
        },
        "eval": {"semantic": True, "perplexity": True},
        "output_dir": str(tmp_path / "out"),
        "seed": 5,
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(run_config), encoding="utf-8")

    poison = subprocess.run([sys.executable, "-m", "kallima.cli", "poison",
                             "--config", str(cfg_path)], capture_output=True, text=True)
    assert poison.returncode == 0, poison.stderr
    evaluate = subprocess.run([sys.executable, "-m", "kallima.cli", "evaluate",
                               "--config", str(cfg_path)], capture_output=True, text=True)
    assert evaluate.returncode == 0, evaluate.stderr

    out = tmp_path / "out"
    assert (out / "poisoned.jsonl").exists()
    assert (out / "poisoned_train.jsonl").exists()
    report = json.loads((out / "report.json").read_text())
    for key in ("asr", "ca", "jaccard_mean", "semantic_sim_mean", "ppl_mean", "survival_rate"):
        assert report[key] is not None
    assert 0.0 <= report["asr"] <= 1.0
    assert report["survival_rate"] == 1.0
    records = [json.loads(line) for line in (out / "poisoned.jsonl").read_text().splitlines()]
    assert records and all(r["mode"] == "kallima" for r in records)
    assert any(r["perturbed_words"] for r in records)

    assert time.monotonic() - started < 60.0
