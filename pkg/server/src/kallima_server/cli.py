"""Server command line: serve the wire protocol, or fine-tune a model."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import __version__
from .registry import ModelRegistry, RegistryError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kallima-server",
                                     description="Model server for the kallima toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", help="registry config JSON (omit for built-in mock defaults)")
    serve.add_argument("--mock", action="store_true",
                       help="deterministic mock mode; refuses real-model backends")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8800)

    ft = sub.add_parser("finetune", help="fine-tune a posterior model (needs the [real] extra)")
    ft.add_argument("--dataset", required=True, help="training TSV or JSONL")
    ft.add_argument("--base", required=True,
                    help="base model: a transformers checkpoint or scratch:tiny")
    ft.add_argument("--out", required=True, help="artifact output directory")
    ft.add_argument("--model-id", help="registered id (default: derived from the dataset name)")
    ft.add_argument("--register", help="registry config JSON to add the model to")
    ft.add_argument("--epochs", type=int, default=3)
    ft.add_argument("--lr", type=float, default=2e-5)
    ft.add_argument("--batch-size", type=int, default=16)
    ft.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .app import create_app
        try:
            if args.config:
                registry = ModelRegistry.from_file(args.config, mock_only=args.mock)
            else:
                if not args.mock:
                    print("error: serving without --config requires --mock", file=sys.stderr)
                    return 2
                registry = ModelRegistry(mock_only=True)
        except RegistryError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        uvicorn.run(create_app(registry), host=args.host, port=args.port, log_level="warning")
        return 0

    from .finetune import Hyperparams, finetune
    try:
        result = finetune(
            dataset_path=args.dataset,
            base_model_id=args.base,
            out_dir=args.out,
            model_id=args.model_id,
            hyperparams=Hyperparams(epochs=args.epochs, lr=args.lr,
                                    batch_size=args.batch_size, seed=args.seed),
            registry_path=args.register,
        )
    except (ValueError, OSError, ImportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"registered {result.model_id} (backend={result.backend}, "
          f"train_accuracy={result.train_accuracy:.4f}) at {result.artifact}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
