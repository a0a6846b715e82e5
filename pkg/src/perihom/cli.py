"""Command line front end.

Every command is a thin client of the HTTP service: by default the requests
run against an in-process app, `--server URL` points them at a live one
instead, and the data path is identical either way.

Exit codes: 0 success, 2 bad config, 3 solver failure, 1 anything else.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np
import httpx

from .config import build_lattice_for, build_symbol, load_config
from .config import ConfigError
from .discretization import cell_grid, domain_grid, write_field_csv
from .reporting import write_json, write_study_outputs
from .service import create_app

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class _InProcessTransport(httpx.BaseTransport):
    """Sync bridge into the ASGI app, so no socket or server is needed."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app, raise_app_exceptions=False)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def roundtrip():
            response = await self._asgi.handle_async_request(request)
            body = b"".join([chunk async for chunk in response.stream])
            return httpx.Response(
                response.status_code, headers=response.headers, content=body
            )

        return asyncio.run(roundtrip())


def make_client(server: str = None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    return httpx.Client(
        transport=_InProcessTransport(create_app()),
        base_url="http://perihom.internal",
        timeout=None,
    )


def _fail(payload: dict, code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def _error_exit(response: httpx.Response) -> int:
    try:
        payload = response.json()
    except ValueError:
        payload = {"error": "internal", "message": response.text.strip()}
    kind = payload.get("error")
    code = {"config": EXIT_CONFIG, "solver": EXIT_SOLVER}.get(kind, EXIT_OTHER)
    return _fail(payload, code)


def _post(client, path, payload):
    try:
        return client.post(path, json=payload), None
    except httpx.HTTPError as exc:
        return None, _fail(
            {"error": "connection", "message": f"{type(exc).__name__}: {exc}"},
            EXIT_OTHER,
        )


def _load(args):
    try:
        return load_config(args.config), None
    except ConfigError as exc:
        return None, _fail(exc.to_payload(), EXIT_CONFIG)
    except OSError as exc:
        return None, _fail(
            {"error": "config", "message": f"cannot read config: {exc}", "details": []},
            EXIT_CONFIG,
        )


def _echo(body: dict, drop=()) -> None:
    slim = {k: v for k, v in body.items() if k not in drop}
    print(json.dumps(slim, indent=2))


def cmd_cell(args) -> int:
    cfg, err = _load(args)
    if cfg is None:
        return err
    client = make_client(args.server)
    want_field = args.out is not None
    r, err = _post(client, "/cell", {"config": cfg.model_dump(mode="json"),
                                     "include_field": want_field})
    if r is None:
        return err
    if r.status_code != 200:
        return _error_exit(r)
    body = r.json()
    _echo(body, drop=("corrector",))
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_json(outdir / "cell_report.json",
                   {k: v for k, v in body.items() if k != "corrector"})
        op = build_symbol(cfg)
        grid = cell_grid(build_lattice_for(cfg, op), cfg.cell.resolution)
        values = np.asarray(body["corrector"], dtype=float)
        write_field_csv(outdir / "corrector.csv", grid, values, kind="node")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg, err = _load(args)
    if cfg is None:
        return err
    client = make_client(args.server)
    want_field = args.out is not None
    r, err = _post(client, "/solve", {"config": cfg.model_dump(mode="json"),
                                      "include_field": want_field})
    if r is None:
        return err
    if r.status_code != 200:
        return _error_exit(r)
    body = r.json()
    _echo(body, drop=("solution",))
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_json(outdir / "solve_report.json",
                   {k: v for k, v in body.items() if k != "solution"})
        op = build_symbol(cfg)
        grid = domain_grid(cfg.problem.lengths, cfg.problem.resolution,
                           periodic=cfg.problem.kind.startswith("periodic"))
        values = np.asarray(body["solution"], dtype=float)
        write_field_csv(outdir / "solution.csv", grid, values, kind="node")
    return EXIT_OK


def cmd_study(args) -> int:
    cfg, err = _load(args)
    if cfg is None:
        return err
    client = make_client(args.server)
    r, err = _post(client, "/study", {"config": cfg.model_dump(mode="json")})
    if r is None:
        return err
    if r.status_code != 200:
        return _error_exit(r)
    body = r.json()
    _echo(body)
    if args.out is not None:
        write_study_outputs(args.out, body["report"], body["config_hash"])
    return EXIT_OK


def cmd_selftest(args) -> int:
    client = make_client(args.server)
    r, err = _post(client, "/selftest", None)
    if r is None:
        return err
    if r.status_code != 200:
        return _error_exit(r)
    body = r.json()
    for check in body["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: {check['detail']}")
    n_ok = sum(c["passed"] for c in body["checks"])
    verdict = "OK" if body["ok"] else "FAILED"
    print(f"{verdict} {n_ok}/{len(body['checks'])} checks passed")
    if args.out is not None:
        write_json(Path(args.out) / "selftest.json", body)
    if not body["ok"]:
        return _fail({"error": "selftest", "message": "checks failed"}, EXIT_OTHER)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perihom",
        description="Periodic homogenization toolkit: cell problems, "
                    "oscillating solves, and convergence studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("cell", cmd_cell, True, "solve the periodicity-cell problem"),
        ("solve", cmd_solve, True, "solve one boundary-value problem"),
        ("study", cmd_study, True, "run an epsilon sweep and fit rates"),
        ("selftest", cmd_selftest, False, "run the built-in check suite"),
    )
    for name, fn, needs_config, help_text in specs:
        sp = sub.add_parser(name, help=help_text)
        if needs_config:
            sp.add_argument("--config", required=True,
                            help="TOML experiment definition")
        sp.add_argument("--out", default=None, metavar="DIR",
                        help="directory for output files")
        sp.add_argument("--server", default=None, metavar="URL",
                        help="base URL of a running service "
                             "(default: in-process)")
        sp.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
