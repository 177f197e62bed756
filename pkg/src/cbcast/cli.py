"""``cbcast`` command line.

Exit codes: 0 clean, 1 usage or I/O error, 2 a causal-delivery property
was violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from typing import List, Optional

from .checker import CheckerError, check_execution, execution_from_trace
from .simulator import SimConfig, SimConfigError, Simulation, replay_figures
from .trace import TraceFormatError, read_trace, write_trace

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2

log = logging.getLogger("cbcast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        n_procs=args.procs, seed=args.seed, max_steps=args.steps,
        p_drop=args.p_drop, p_duplicate=args.p_duplicate,
        broadcast_weight=args.broadcast_weight, receive_weight=args.receive_weight,
        deliver_weight=args.deliver_weight,
    )
    try:
        sim = Simulation(cfg)
    except SimConfigError as e:
        raise UsageError(str(e)) from None
    sim.run()
    if args.drain:
        sim.drain()
    report = sim.report()
    if args.trace:
        write_trace(args.trace, sim.trace)
    summary = sim.summary(report)
    _dump(summary)
    for v in report.all:
        print(json.dumps(v.to_dict()), file=sys.stderr)
    return EXIT_VIOLATION if report.all else EXIT_OK


def cmd_check_trace(args) -> int:
    try:
        events = read_trace(args.trace)
        x = execution_from_trace(events)
        report = check_execution(x)
    except TraceFormatError as e:
        raise UsageError(f"{args.trace}: {e}") from None
    except (OSError, CheckerError) as e:
        raise UsageError(f"{args.trace}: {e}") from None
    for v in report.all:
        _dump(v.to_dict())
    _dump({"events": len(events), "processes": x.n, "lcd": len(report.lcd),
           "cd": len(report.cd), "correspondence": len(report.correspondence),
           "violations": len(report.all)})
    return EXIT_VIOLATION if report.all else EXIT_OK


def cmd_replay_figures(args) -> int:
    out = {}
    for name, fig in replay_figures().items():
        report = check_execution(fig.execution)
        out[name] = {
            "messages": {k: list(m.vc) for k, m in fig.messages.items()},
            "final_vc": {who: list(fig.vc(who)) for who in fig.names},
            "buffered": [list(b) for b in fig.buffered],
            "violations": len(report.all),
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _parse_peer(spec: str):
    pid, sep, url = spec.partition("=")
    if not sep or not pid.strip().isdigit() or not url:
        raise argparse.ArgumentTypeError(f"expected ID=URL, got {spec!r}")
    return int(pid), url


def _parse_listen(addr: str):
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"--listen must be HOST:PORT, got {addr!r}")
    return host or "127.0.0.1", int(port)


def cmd_kvs_node(args) -> int:
    import uvicorn

    from .kvs.app import create_app
    from .kvs.node import KvsNode, NodeConfig
    from .kvs.peers import PeerSender

    if args.id is None:
        raise UsageError("kvs-node needs --id")
    peers = dict(args.peer or [])
    if len(peers) != len(args.peer or []):
        raise UsageError("duplicate peer id")
    cfg = NodeConfig(self_id=args.id, peers=peers, listen=args.listen, batch_max=args.batch_max)
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    host, port = _parse_listen(cfg.listen)

    sender = PeerSender(cfg.peers, batch_max=cfg.batch_max)
    node = KvsNode(cfg.self_id, cfg.n, outbox=sender)
    app = create_app(node, sender)
    server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level=args.log_level))

    # uvicorn re-raises the captured signal after its graceful shutdown;
    # swallow it so a SIGTERM ends with exit 0.
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: None)
    try:
        server.run()
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return EXIT_OK if server.started else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cbcast", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a seeded randomized execution and check it")
    p.add_argument("--procs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--p-drop", type=float, default=0.0)
    p.add_argument("--p-duplicate", type=float, default=0.0)
    p.add_argument("--broadcast-weight", type=float, default=1.0)
    p.add_argument("--receive-weight", type=float, default=1.0)
    p.add_argument("--deliver-weight", type=float, default=1.0)
    p.add_argument("--drain", action="store_true", help="drain the network after the run")
    p.add_argument("--trace", help="write the JSON-lines trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-trace", help="check a JSON-lines trace for causal delivery")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_check_trace)

    p = sub.add_parser("replay-figures", help="print the scripted example executions")
    p.set_defaults(func=cmd_replay_figures)

    p = sub.add_parser("kvs-node", help="run one replicated key-value store node")
    p.add_argument("--id", type=int)
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--peer", action="append", type=_parse_peer, metavar="ID=URL")
    p.add_argument("--batch-max", type=int, default=8)
    p.add_argument("--log-level", default="warning")
    p.set_defaults(func=cmd_kvs_node)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: List[str], path: str) -> argparse.Namespace:
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"--config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"--config {path}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "peer" in cfg:
        cfg["peer"] = [_parse_peer(s) if isinstance(s, str) else tuple(s) for s in cfg["peer"]]
    for action in parser._subparsers._group_actions:  # type: ignore[union-attr]
        for sp in action.choices.values():
            sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.config:
            args = _apply_config(parser, argv, args.config)
        return args.func(args)
    except UsageError as e:
        print(f"cbcast: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
