"""Command line client of the dispatch service.

Subcommands talk to the FastAPI service over HTTP. Without --server the
service app is mounted in-process (ASGI transport), so batch runs need no
running daemon and artifacts land on the local filesystem; with --server
the same requests go to a remote instance.

Exit codes: 0 ok, 2 configuration error, 3 solver error, 4 power-flow
divergence, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

EXIT_CODES = {"config": 2, "topology": 2, "scenario": 2, "solver": 3, "dispatch": 3,
              "powerflow": 4}


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # no server given: mount the service in-process (sync-over-ASGI bridge)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service.app import app

    return TestClient(app, raise_server_exceptions=False)


def _fail(payload: dict) -> int:
    stage = payload.get("stage", "internal")
    message = payload.get("message", json.dumps(payload))
    print(f"error [{stage}]: {message}", file=sys.stderr)
    return EXIT_CODES.get(stage, 1)


def _post(args, path: str, payload: dict) -> tuple[int, dict]:
    try:
        with _client(args.server) as client:
            response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        print(f"error [transport]: {exc}", file=sys.stderr)
        return 1, {}
    body = response.json()
    if response.status_code != 200:
        return _fail(body), {}
    return 0, body


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error [config]: cannot read config file: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _merge_run_config(args) -> dict:
    config = _load_config_file(args.config)
    scenario = dict(config.get("scenario", {}))
    if args.seed is not None:
        scenario["seed"] = args.seed
    if getattr(args, "scenario", None):
        scenario["kind"] = args.scenario
    if scenario:
        config["scenario"] = scenario
    if getattr(args, "algorithm", None):
        config["algorithm"] = args.algorithm
    if getattr(args, "critical_line", None):
        config["critical_line"] = args.critical_line
    if args.out_dir:
        config["out_dir"] = args.out_dir
    if getattr(args, "topology", None):
        config["topology"] = args.topology
    if "out_dir" not in config:
        print("error [config]: --out-dir (or out_dir in --config) is required",
              file=sys.stderr)
        raise SystemExit(2)
    return config


def _print_metrics(metrics: dict) -> None:
    width = max(len(k) for k in metrics)
    for key, value in metrics.items():
        if value is None:
            continue
        if isinstance(value, float):
            print(f"{key:<{width}}  {value:.6g}")
        else:
            print(f"{key:<{width}}  {value}")


def cmd_generate_scenario(args) -> int:
    config = _merge_run_config(args)
    payload = {
        "out_dir": config["out_dir"],
        "topology": config.get("topology"),
        "scenario": config.get("scenario", {}),
    }
    code, body = _post(args, "/scenarios", payload)
    if code:
        return code
    print(f"scenario written to {body['out_dir']}")
    print(f"units: {body['n_units']}  devices: {body['n_devices']} "
          f"{body['devices_per_feeder']}  controllable share: {body['controllable_share']:.3f}")
    return 0


def cmd_simulate(args) -> int:
    config = _merge_run_config(args)
    code, body = _post(args, "/runs", {"config": config})
    if code:
        return code
    print(f"run completed: {body['run_dir']}")
    print(f"dispatch seconds: {body['dispatch_seconds']:.2f}")
    _print_metrics(body["metrics"])
    return 0


def cmd_report(args) -> int:
    code, body = _post(args, "/report", {"run_dir": args.run_dir})
    if code:
        return code
    _print_metrics(body)
    return 0


def cmd_compare(args) -> int:
    code, body = _post(args, "/compare", {"run_a": args.run_a, "run_b": args.run_b})
    if code:
        return code
    print(body["table"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexgrid",
        description="dispatch flexible loads on a radial LV network",
    )
    parser.add_argument("--server", help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON file")
    common.add_argument("--seed", type=int, help="scenario seed override")
    common.add_argument("--out-dir", help="run/scenario output directory")
    common.add_argument("--topology", help="topology JSON file (default: bundled grid)")
    common.add_argument(
        "--scenario", choices=["randomized", "regular"], help="scenario kind"
    )

    gen = sub.add_parser("generate-scenario", parents=[common],
                         help="generate and store a scenario")
    gen.set_defaults(func=cmd_generate_scenario)

    sim = sub.add_parser("simulate", parents=[common],
                         help="run scenario -> dispatch -> power flow -> metrics")
    sim.add_argument(
        "--algorithm",
        choices=["none", "optimal_grid", "heuristic_grid", "optimal_line",
                 "heuristic_line", "critical_line"],
    )
    sim.add_argument("--critical-line", help="line id for the critical-line algorithm")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="print the metrics of a completed run")
    rep.add_argument("run_dir")
    rep.set_defaults(func=cmd_report)

    cmp_ = sub.add_parser("compare", help="side-by-side metrics of two runs")
    cmp_.add_argument("run_a")
    cmp_.add_argument("run_b")
    cmp_.set_defaults(func=cmd_compare)

    srv = sub.add_parser("serve", help="start the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8321)
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
