"""Command line entry point: load the encoder, then serve."""

from __future__ import annotations

import argparse
import os
import sys

from .app import create_app
from .config import SidecarConfig
from .encoder import TextEncoder


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-sidecar",
        description="Serve transformer text embeddings over POST /embed.",
    )
    env = os.environ
    parser.add_argument(
        "--model",
        default=env.get("EMBED_SIDECAR_MODEL"),
        help="checkpoint path or hub id (env EMBED_SIDECAR_MODEL); required, no default",
    )
    parser.add_argument("--host", default=env.get("EMBED_SIDECAR_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(env.get("EMBED_SIDECAR_PORT", "8230")))
    parser.add_argument(
        "--max-batch",
        type=int,
        default=int(env.get("EMBED_SIDECAR_MAX_BATCH", "64")),
        help="largest accepted texts list; bigger requests get a 413",
    )
    parser.add_argument("--device", default=env.get("EMBED_SIDECAR_DEVICE", "cpu"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.model:
        parser.error("--model is required (or set EMBED_SIDECAR_MODEL)")
    try:
        config = SidecarConfig(
            model=args.model,
            host=args.host,
            port=args.port,
            max_batch=args.max_batch,
            device=args.device,
        )
    except ValueError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return 2

    # load before binding the port so a bad checkpoint aborts startup
    try:
        encoder = TextEncoder(config.model, device=config.device)
    except Exception as exc:
        print(f"model load failed: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    app = create_app(encoder, model_id=config.model, max_batch=config.max_batch)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
