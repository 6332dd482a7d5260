"""Bridge launcher: ``mvedit-bridge --mode echo --port 8060``."""

from __future__ import annotations

import argparse
import logging

import uvicorn

from .config import BridgeConfig
from .service import create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvedit-bridge", description=__doc__)
    parser.add_argument("--mode", choices=("echo", "diffusion"), default="echo")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8060)
    parser.add_argument("--max-side", type=int, default=2048)
    parser.add_argument("--upsample-2x", action="store_true",
                        help="diffusion mode: generate at 2x resolution and downsample back")
    parser.add_argument("--device", default=None, help="override MVEDIT_BRIDGE_DEVICE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    overrides = {
        "mode": args.mode,
        "host": args.host,
        "port": args.port,
        "max_side": args.max_side,
        "upsample_2x": args.upsample_2x,
    }
    if args.device:
        overrides["device"] = args.device
    config = BridgeConfig.from_env(**overrides)
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
