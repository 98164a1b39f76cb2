"""Command-line client for the solver service.

The CLI is a thin HTTP client: it posts the config to the service, writes
whatever files come back, prints a short report and exits with the status
the service reported (0 success, 1 validation failure, 2 numerical
failure).  By default it talks to an in-process instance of the app over
an ASGI transport — no server or network required, and results are
byte-identical to a remote run.  Point ``--server`` at a live instance to
go over the wire; run one with the ``serve`` subcommand.

The ``COAGFRAG_WORKERS`` environment variable sizes the thread pool used
for independent study levels.  It affects speed only, never results.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_USAGE = 1


class ServiceClient:
    """Posts requests either to a live server or to the in-process app.

    The in-process path drives the ASGI app through httpx's async
    transport, so the CLI exercises the exact same request/response cycle
    as a networked client without opening a socket.
    """

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def post(self, endpoint: str, payload: dict) -> httpx.Response:
        if self.server:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                return client.post(endpoint, json=payload)
        return asyncio.run(self._post_inprocess(endpoint, payload))

    async def _post_inprocess(self, endpoint: str, payload: dict) -> httpx.Response:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://coagfrag.local", timeout=600.0
        ) as client:
            return await client.post(endpoint, json=payload)


def _load_config_document(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_files(out_dir: str, files: dict[str, str]) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, body in sorted(files.items()):
        (out / name).write_text(body)
        written.append(str(out / name))
    return written


def _post(client: ServiceClient, endpoint: str, payload: dict, out_dir: str) -> int:
    response = client.post(endpoint, payload)
    if response.status_code == 422:
        detail = response.json().get("detail", response.text)
        print(f"error: config rejected by schema: {detail}", file=sys.stderr)
        run = {
            "command": endpoint.strip("/"),
            "status": "validation_failure",
            "exit_code": 1,
            "error": {"type": "SchemaError", "message": str(detail)},
        }
        _write_files(out_dir, {"run.json": json.dumps(run, indent=2, sort_keys=True) + "\n"})
        return 1
    response.raise_for_status()
    doc = response.json()
    written = _write_files(out_dir, doc.get("files", {}))
    for path in written:
        print(f"wrote {path}")
    if doc["status"] != "ok":
        err = (doc.get("summary") or {}).get("error") or {}
        print(f"{doc['status']}: {err.get('message', '(see run.json)')}", file=sys.stderr)
    return int(doc["exit_code"])


def _print_hypothesis_table(doc: dict) -> None:
    rows = doc.get("hypotheses", [])
    name_w = max([len(r["name"]) for r in rows] + [4])
    print(f"{'rule':<{name_w}}  {'result':<6}  detail")
    for r in rows:
        verdict = "PASS" if r["passed"] else "FAIL"
        line = f"{r['name']:<{name_w}}  {verdict:<6}  {r['detail']}"
        if not r["passed"] and r.get("witness"):
            witness = ", ".join(f"{k}={v:.6g}" for k, v in r["witness"].items())
            line += f"  [witness: {witness}]"
        print(line)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coagfrag",
        description="Solver for coagulation with collision-induced multiple fragmentation.",
    )
    parser.add_argument(
        "--server",
        default=None,
        help="URL of a running service; default runs the app in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool = True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON run config")
            p.add_argument(
                "--allow-unvalidated",
                action="store_true",
                help="run even when kernel parameters leave the validated ranges",
            )
        p.add_argument("--out", default="results", help="directory for output files")

    p_sim = sub.add_parser("simulate", help="integrate the configured problem")
    add_common(p_sim)

    p_val = sub.add_parser("validate-kernels", help="check the structural kernel conditions")
    add_common(p_val)
    p_val.add_argument("--samples", type=int, default=24, help="lattice points per axis")

    p_conv = sub.add_parser("converge", help="truncation-doubling self-convergence study")
    add_common(p_conv)
    p_conv.add_argument("--doublings", type=int, default=3, help="number of domain doublings")

    p_pert = sub.add_parser("perturb", help="twin-run continuous-dependence study")
    add_common(p_pert)
    p_pert.add_argument("--delta", type=float, default=1e-3, help="relative perturbation size")

    p_oracle = sub.add_parser("oracle", help="run the operator certification battery")
    add_common(p_oracle, needs_config=False)
    p_oracle.add_argument("--cases", type=int, default=1000)
    p_oracle.add_argument("--seed", type=int, default=20240817)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    client = ServiceClient(args.server)
    if args.command == "oracle":
        payload = {"cases": args.cases, "seed": args.seed}
        return _post(client, "/oracle", payload, args.out)

    document = _load_config_document(args.config)
    payload = {"config": document, "allow_unvalidated": bool(args.allow_unvalidated)}
    if args.command == "simulate":
        return _post(client, "/simulate", payload, args.out)
    if args.command == "converge":
        payload["doublings"] = args.doublings
        return _post(client, "/converge", payload, args.out)
    if args.command == "perturb":
        payload["delta"] = args.delta
        return _post(client, "/perturb", payload, args.out)
    if args.command == "validate-kernels":
        payload["samples"] = args.samples
        response = client.post("/validate-kernels", payload)
        if response.status_code == 422:
            print(f"error: config rejected by schema: {response.text}", file=sys.stderr)
            return 1
        response.raise_for_status()
        doc = response.json()
        _write_files(args.out, doc.get("files", {}))
        if doc.get("hypotheses"):
            _print_hypothesis_table(doc)
        if doc["status"] != "ok" and not doc.get("hypotheses"):
            err = (doc.get("summary") or {}).get("error") or {}
            print(f"{doc['status']}: {err.get('message', '')}", file=sys.stderr)
        return int(doc["exit_code"])
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
