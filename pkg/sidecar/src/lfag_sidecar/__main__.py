"""Service entry point: load backends per config, then serve.

A model that fails to load exits the process non-zero before the server
binds, so orchestrators see the failure immediately.
"""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .backends import ModelLoadError
from .config import SidecarConfig


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="lfag-sidecar")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument(
        "--models",
        default=None,
        help="comma-separated NER model ids (overrides config)",
    )
    parser.add_argument("--embedding", default=None, help="embedding model id")
    parser.add_argument("--generation", default=None, help="generation backend id or 'disabled'")
    args = parser.parse_args(argv)

    try:
        config = SidecarConfig.from_file(args.config) if args.config else SidecarConfig()
        if args.host:
            config.host = args.host
        if args.port:
            config.port = args.port
        if args.models:
            config.ner_models = tuple(m.strip() for m in args.models.split(",") if m.strip())
        if args.embedding:
            config.embedding_model = args.embedding
        if args.generation:
            config.generation_backend = args.generation
        app = create_app(config)
    except (ModelLoadError, ValueError, OSError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        sys.exit(1)

    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
