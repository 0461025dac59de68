"""Command-line client for the estimation service.

Every subcommand builds the same request body the HTTP API accepts and
runs it in-process by default; pass --server to send it to a running
``pricefield serve`` instance instead (server and client must share the
filesystem, since requests exchange file paths).

Exit codes: 0 success, 2 configuration or argument errors, 3 data or
geometry errors, 4 numeric failures.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import PricefieldError, exit_code_for
from .service import handlers, schemas


def _add_common(p, with_config=True):
    p.add_argument("--server", help="base URL of a running service instance")
    if with_config:
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config value (repeatable)",
        )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pricefield",
        description="House price estimation over irregular city domains",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the hierarchical model on a house CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("predict", help="estimate prices for new points")
    p.add_argument("--model", required=True, help="model directory from fit")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", help="output CSV (prints rows when omitted)")
    _add_common(p, with_config=False)

    p = sub.add_parser("partition", help="compute the geographic partition")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser(
        "evaluate", help="train/test comparison of all model variants"
    )
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic house CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--preset", default="smooth")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--side", type=float, default=1000.0)
    _add_common(p, with_config=False)

    p = sub.add_parser("mesh", help="infer the domain and build the mesh")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)

    return ap


def _remote(server: str, path: str, body: dict) -> dict:
    import httpx

    url = server.rstrip("/") + path
    try:
        resp = httpx.post(url, json=body, timeout=3600.0)
    except httpx.HTTPError as exc:
        print("server request failed: %s" % exc, file=sys.stderr)
        raise SystemExit(1)
    if resp.status_code != 200:
        try:
            err = resp.json()
            print(
                "%s: %s" % (err.get("error", "error"), err.get("message", "")),
                file=sys.stderr,
            )
            raise SystemExit(int(err.get("exit_code", 1)))
        except (ValueError, KeyError):
            print("server error (HTTP %d)" % resp.status_code, file=sys.stderr)
            raise SystemExit(1)
    return resp.json()


def _run(args, path, req_model, handler, body_keys) -> dict:
    body = {k: getattr(args, a) for k, a in body_keys.items() if getattr(args, a) is not None}
    if args.server:
        return _remote(args.server, path, body)
    resp = handler(req_model(**body))
    return resp.model_dump()


def _dispatch(args) -> int:
    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
        return 0

    if args.command == "fit":
        out = _run(
            args,
            "/fit",
            schemas.FitRequest,
            handlers.fit,
            {"csv": "csv", "out": "out", "config": "config", "overrides": "overrides"},
        )
    elif args.command == "predict":
        out = _run(
            args,
            "/predict",
            schemas.PredictRequest,
            handlers.predict,
            {"model_dir": "model", "csv": "csv", "out": "out"},
        )
    elif args.command == "partition":
        out = _run(
            args,
            "/partition",
            schemas.PartitionRequest,
            handlers.partition,
            {"csv": "csv", "out": "out", "config": "config", "overrides": "overrides"},
        )
    elif args.command == "evaluate":
        out = _run(
            args,
            "/evaluate",
            schemas.EvaluateRequest,
            handlers.evaluate,
            {"csv": "csv", "out": "out", "config": "config", "overrides": "overrides"},
        )
        # the table reads better unescaped
        text = out.pop("report_text", "")
        if text:
            print(text)
    elif args.command == "synth":
        out = _run(
            args,
            "/synth",
            schemas.SynthRequest,
            handlers.synth,
            {
                "out": "out",
                "preset": "preset",
                "n": "n",
                "seed": "seed",
                "noise": "noise",
                "q": "q",
                "side": "side",
            },
        )
    elif args.command == "mesh":
        out = _run(
            args,
            "/mesh",
            schemas.MeshRequest,
            handlers.mesh,
            {"csv": "csv", "out": "out", "config": "config", "overrides": "overrides"},
        )
    else:  # pragma: no cover - argparse enforces the choices
        raise SystemExit(2)

    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except PricefieldError as exc:
        print("%s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
