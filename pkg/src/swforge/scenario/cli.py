"""``swforge``: run scenarios, inspect their traces, check addressing combinations."""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from .. import trace as tracefile
from ..provisioning.combos import validate_combo
from .config import NAMED, UsageError, load, override
from .runner import EXIT_OK, EXIT_PROTOCOL, EXIT_USAGE, run


class MissingTrace(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage already; keep the message on stderr
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swforge", description="Simulated L2TPv2 softwires between an initiator and a concentrator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a named scenario or a scenario file")
    r.add_argument("scenario", help=f"one of {', '.join(NAMED)} or a JSON file")
    r.add_argument("--seed", type=int)
    r.add_argument("--nat", choices=("eif", "adf", "apdf"), help="put the initiator behind a NAT")
    r.add_argument("--trace", type=Path, help="write the JSON-lines trace here")
    r.add_argument("--hold", type=float, help="seconds to keep the softwire up after traffic")
    r.add_argument("--teardown", action="store_true", default=None, help="close the softwire at the end")
    r.add_argument(
        "--respond-from-alternate",
        action="store_true",
        default=None,
        help="testing aid: the concentrator answers from a different address and port",
    )
    r.add_argument("--json", action="store_true", help="print the exit report as JSON")

    v = sub.add_parser("validate", help="is an addressing combination possible?")
    v.add_argument("af", help="v4 or v6")
    v.add_argument("endpoint_scope")
    v.add_argument("delegated_scope")

    for name, text in (("stats", "tunnel events and per-family counters"), ("routes", "RIB contents at the end of a run")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--trace", type=Path, required=True)

    sub.add_parser("list", help="list the built-in scenarios")
    return p


def _events(path: Path) -> list[dict]:
    if not path.is_file():
        raise MissingTrace(f"no trace at {path}")
    return tracefile.load(path)


def cmd_run(args) -> int:
    cfg = load(args.scenario)
    cfg = override(
        cfg,
        seed=args.seed,
        nat=args.nat,
        hold=args.hold,
        teardown=args.teardown,
        respond_from_alternate=args.respond_from_alternate,
    )
    cfg.validate()
    report = run(cfg, trace_path=args.trace)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    elif report.ok:
        print(f"{cfg.id}: ok")
        for rec in report.records:
            print("  " + json.dumps(rec, sort_keys=True))
    else:
        print(f"{cfg.id}: FAILED at step {report.step}: {report.detail}")
    return report.exit_code


def cmd_validate(args) -> int:
    v = validate_combo(args.af, args.endpoint_scope, args.delegated_scope)
    print(v.verdict.text)
    if v.note:
        print(f"note: {v.note}")
    return EXIT_OK


def cmd_stats(args) -> int:
    events = _events(args.trace)
    for e in events:
        if e["event"] in ("session_up", "tunnel_down"):
            extra = e.get("reason", "")
            print(f"{e['time']:>12.6f}  {e['node']:<4} {e['event']:<12} {e['softwire']} {extra}".rstrip())
    octets: dict[tuple[str, str, str], int] = defaultdict(int)
    for e in events:
        if e["event"] == "payload":
            octets[(e["node"], e["af"], "out" if e["dir"] == "tx" else "in")] += e["size"]
    for (node, af, way), total in sorted(octets.items()):
        print(f"{node} {af}_octets_{way} {total}")
    for e in events:
        if e["event"] == "accounting":
            rec = e["record"]
            counters = " ".join(f"{k}={v}" for k, v in rec.items() if k.startswith(("v4_", "v6_")))
            print(f"accounting {rec['kind']} {rec['softwire']} {counters}".rstrip())
    return EXIT_OK


def cmd_routes(args) -> int:
    last: dict[str, list[dict]] = {}
    for e in _events(args.trace):
        if e["event"] == "rib":
            last[e["node"]] = e["routes"]
    if not last:
        raise MissingTrace(f"{args.trace} holds no RIB dump")
    for node, routes in last.items():
        print(f"{node}:")
        for r in routes:
            print(f"  {r['prefix']:<24} via {r['next_hop']:<10} {r['origin']}")
        if not routes:
            print("  (empty)")
    return EXIT_OK


def cmd_list(args) -> int:
    for sid in NAMED:
        cfg = load(sid)
        print(f"{sid}  {cfg.payload_af.label}-over-{cfg.transport_af.label}  {cfg.si_role:<6}  {cfg.title}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "stats": cmd_stats, "routes": cmd_routes, "list": cmd_list}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, MissingTrace, ValueError) as exc:
        print(f"swforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["EXIT_PROTOCOL", "MissingTrace", "build_parser", "main"]

if __name__ == "__main__":
    sys.exit(main())
