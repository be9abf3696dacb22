"""Administrator command line: wraps the northbound API, runs the
controller and simulators, and drives the benchmarks."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
import urllib.error
import urllib.request
from typing import Optional

DEFAULT_ADDR = "127.0.0.1:8181"
ENV_ADDR = "EVPN_CTL_ADDR"

EXIT_OK, EXIT_API, EXIT_USAGE = 0, 1, 2


class ApiError(Exception):
    def __init__(self, status: Optional[int], body, message: str):
        super().__init__(message)
        self.status = status
        self.body = body


def resolve_addr(flag: Optional[str], env=os.environ) -> str:
    return flag or env.get(ENV_ADDR) or DEFAULT_ADDR


def api_call(addr: str, method: str, path: str, body=None, timeout: float = 130.0):
    url = f"http://{addr}{path}"
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"} if data else {})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read() or b"null")
    except urllib.error.HTTPError as exc:
        raw = exc.read()
        try:
            doc = json.loads(raw)
        except ValueError:
            doc = {"error": raw.decode(errors="replace"), "field": None}
        raise ApiError(exc.code, doc, f"{method} {path} failed with HTTP {exc.code}") from None
    except (urllib.error.URLError, OSError) as exc:
        reason = getattr(exc, "reason", exc)
        raise ApiError(None, None, f"cannot reach controller at {addr}: {reason}") from None


# ------------------------------------------------------------------ output

def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


def render_table(doc) -> str:
    if isinstance(doc, list):
        if not doc:
            return "(none)"
        cols = list(doc[0].keys())
        rows = [[_cell(item.get(c)) for c in cols] for item in doc]
        widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
        lines = ["  ".join(c.upper().ljust(w) for c, w in zip(cols, widths))]
        lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
        return "\n".join(line.rstrip() for line in lines)
    if isinstance(doc, dict):
        width = max((len(k) for k in doc), default=0)
        return "\n".join(f"{k.ljust(width)}  {_cell(v)}" for k, v in doc.items())
    return _cell(doc)


def emit(doc, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(doc) + "\n")
    else:
        out.write(render_table(doc) + "\n")


# ------------------------------------------------------------------ API commands

def _split(values) -> list[str]:
    return [v for item in values for v in item.split(",") if v]


def cmd_l2vpn(args) -> object:
    addr = resolve_addr(args.addr)
    if args.action == "create":
        return api_call(addr, "POST", "/v1/l2vpn", {
            "customer_id": args.customer, "virtual_network_id": args.vnid, "sap_id": args.sap,
            "network_ids": _split(args.networks), "pe_ids": _split(args.pes)})
    if args.action == "delete":
        return api_call(addr, "DELETE", f"/v1/l2vpn/{args.id}")
    if args.action == "list":
        return api_call(addr, "GET", "/v1/l2vpn")
    suffix = f"?wait={args.wait}" if args.wait else ""
    return api_call(addr, "GET", f"/v1/l2vpn/{args.id}{suffix}")


def cmd_rp(args) -> object:
    addr = resolve_addr(args.addr)
    if args.action == "create":
        body = {"name": args.name, "allow_mac_advertisement": not args.deny_mac,
                "import_rts": _split(args.import_rt), "export_rts": _split(args.export_rt)}
        if args.max_mac_routes is not None:
            body["max_mac_routes"] = args.max_mac_routes
        return api_call(addr, "POST", "/v1/rp", body)
    if args.action == "show":
        return api_call(addr, "GET", f"/v1/rp/{args.id}")
    return api_call(addr, "GET", "/v1/rp")


def cmd_associate(args) -> object:
    return api_call(resolve_addr(args.addr), "PUT", f"/v1/l2vpn/{args.evi}/rp", {"rp_id": args.rp})


def cmd_arp(args) -> object:
    from urllib.parse import urlencode
    return api_call(resolve_addr(args.addr), "GET", "/v1/arp?" + urlencode({"evi": args.evi, "ip": args.ip}))


def cmd_endpoint(args) -> object:
    addr = resolve_addr(args.addr)
    if args.action == "up":
        return api_call(addr, "POST", "/v1/endpoints",
                        {"mac": args.mac, "ip": args.ip, "network_id": args.network})
    return api_call(addr, "POST", "/v1/endpoints/down", {"mac": args.mac, "network_id": args.network})


def cmd_stats(args) -> object:
    path = {"all": "/v1/stats", "deploy": "/v1/stats/deploy", "wbt": "/v1/stats/wbt"}[args.which]
    return api_call(resolve_addr(args.addr), "GET", path)


# ------------------------------------------------------------------ long-running commands

def _load_profile(path: Optional[str]):
    from .simulator import SimLatencyProfile
    if not path:
        return None
    with open(path) as fh:
        return SimLatencyProfile.from_json(json.load(fh))


def _run_forever(start, stop) -> int:
    async def main():
        await start()
        done = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, done.set)
        try:
            await done.wait()
        finally:
            await stop()
    asyncio.run(main())
    return EXIT_OK


def cmd_serve(args) -> int:
    from .controller import Controller, ControllerConfig, PeerConfig
    from .inventory import Inventory

    peers = []
    for spec in args.peer or ():
        pid, _, rest = spec.partition("=")
        parts = rest.split(":")
        if not pid or len(parts) < 2:
            raise argparse.ArgumentTypeError(f"bad --peer {spec!r}, expected id=host:port[:reflect]")
        peers.append(PeerConfig(pid, parts[0], int(parts[1]), reflect="reflect" in parts[2:]))
    host, _, port = resolve_addr(args.listen).rpartition(":")
    cfg = ControllerConfig(asn=args.asn, router_id=args.router_id, api_host=host, api_port=int(port),
                           peers=peers, push_base_config=not args.no_base_config,
                           instrument=not args.no_instrument)
    ctl = Controller(Inventory.load(args.inventory), cfg)

    async def start():
        await ctl.start()
        print(json.dumps({"api": ctl.api_addr}), flush=True)

    return _run_forever(start, ctl.stop)


def cmd_sim(args) -> int:
    from .simulator import PeSimulator

    sim = PeSimulator(args.id, router_id=args.router_id, asn=args.asn, latency=_load_profile(args.latency_profile),
                      mode=args.mode, host=args.host, seed=args.seed)

    async def start():
        await sim.start(args.netconf_port, args.bgp_port, args.control_port)
        print(json.dumps(sim.describe()), flush=True)

    return _run_forever(start, sim.stop)


def cmd_bench(args) -> int:
    from .bench import run_deployment_bench, run_latency_bench

    if args.kind == "deploy":
        result = asyncio.run(run_deployment_bench(args.n, args.delay_s, args.pes,
                                                  _load_profile(args.latency_profile), args.out, args.seed))
        emit(result.summary, args.format)
        if not result.ok:
            print(f"deployment run incomplete: aborted={result.aborted} rollbacks={result.rollbacks} "
                  f"datastore_diff={result.datastore_diff}", file=sys.stderr)
            return EXIT_API
        return EXIT_OK
    modes = ("one_by_one", "burst") if args.mode == "both" else (args.mode,)
    result = asyncio.run(run_latency_bench(modes, args.count, args.repeat, args.out, args.seed))
    emit({k: {"pooled_mean_ms": v["pooled_mean"], "median_ms": v["pooled"]["median"]}
          for k, v in result.summaries.items()}, args.format)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--addr", default=argparse.SUPPRESS,
                        help=f"controller host:port (env {ENV_ADDR}, default {DEFAULT_ADDR})")
    common.add_argument("--format", choices=("json", "table"), default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="evpnctl", parents=[common],
                                description="EVPN orchestration controller client")
    sub = p.add_subparsers(dest="command", required=True)

    l2 = sub.add_parser("l2vpn", help="manage EVPN instances").add_subparsers(dest="action", required=True)
    c = l2.add_parser("create", parents=[common])
    c.add_argument("--customer", required=True)
    c.add_argument("--vnid", required=True)
    c.add_argument("--sap", required=True)
    c.add_argument("--networks", nargs="+", required=True)
    c.add_argument("--pes", nargs="+", required=True)
    d = l2.add_parser("delete", parents=[common])
    d.add_argument("id", type=int)
    l2.add_parser("list", parents=[common])
    s = l2.add_parser("show", parents=[common])
    s.add_argument("id", type=int)
    s.add_argument("--wait", type=float, default=0.0, help="seconds to wait for pending work")

    rp = sub.add_parser("rp", help="manage routing policies").add_subparsers(dest="action", required=True)
    c = rp.add_parser("create", parents=[common])
    c.add_argument("--name", required=True)
    c.add_argument("--deny-mac", action="store_true", help="do not advertise MACs")
    c.add_argument("--import-rt", action="append", default=[])
    c.add_argument("--export-rt", action="append", default=[])
    c.add_argument("--max-mac-routes", type=int)
    rp.add_parser("list", parents=[common])
    s = rp.add_parser("show", parents=[common])
    s.add_argument("id", type=int)

    a = sub.add_parser("associate", parents=[common], help="attach a policy to an EVPN instance")
    a.add_argument("--evi", type=int, required=True)
    a.add_argument("--rp", type=int, required=True)

    arp = sub.add_parser("arp", help="ARP proxy").add_subparsers(dest="action", required=True)
    q = arp.add_parser("query", parents=[common])
    q.add_argument("--evi", type=int, required=True)
    q.add_argument("--ip", required=True)

    ep = sub.add_parser("endpoint", help="report VM boot/shutdown").add_subparsers(dest="action", required=True)
    for name in ("up", "down"):
        e = ep.add_parser(name, parents=[common])
        e.add_argument("--mac", required=True)
        e.add_argument("--network", required=True)
        if name == "up":
            e.add_argument("--ip")

    st = sub.add_parser("stats", parents=[common], help="controller counters and timings")
    st.add_argument("which", nargs="?", choices=("all", "deploy", "wbt"), default="all")

    sv = sub.add_parser("serve", parents=[common], help="run the controller")
    sv.add_argument("--inventory", required=True)
    sv.add_argument("--listen", help="API host:port (default: --addr resolution)")
    sv.add_argument("--asn", type=int, default=64512)
    sv.add_argument("--router-id", default="192.0.2.1")
    sv.add_argument("--peer", action="append", help="extra BGP peer id=host:port[:reflect]")
    sv.add_argument("--no-base-config", action="store_true")
    sv.add_argument("--no-instrument", action="store_true")

    sm = sub.add_parser("sim", parents=[common], help="run one PE simulator")
    sm.add_argument("--id", required=True)
    sm.add_argument("--host", default="127.0.0.1")
    sm.add_argument("--router-id", default="10.255.0.1")
    sm.add_argument("--asn", type=int, default=64512)
    sm.add_argument("--netconf-port", type=int, default=2830)
    sm.add_argument("--bgp-port", type=int, default=1790)
    sm.add_argument("--control-port", type=int, default=0)
    sm.add_argument("--mode", choices=("normal", "reflect"), default="normal")
    sm.add_argument("--latency-profile")
    sm.add_argument("--seed", type=int)

    b = sub.add_parser("bench", help="run benchmarks").add_subparsers(dest="kind", required=True)
    bd = b.add_parser("deploy", parents=[common])
    bd.add_argument("--n", type=int, required=True)
    bd.add_argument("--delay-s", type=float, default=1.0)
    bd.add_argument("--pes", type=int, default=4)
    bd.add_argument("--latency-profile")
    bd.add_argument("--out", default="bench-out")
    bd.add_argument("--seed", type=int, default=0)
    bg = b.add_parser("gen", parents=[common])
    bg.add_argument("--mode", choices=("burst", "one", "one_by_one", "single", "both"), required=True)
    bg.add_argument("--count", type=int, default=100)
    bg.add_argument("--repeat", type=int, default=5)
    bg.add_argument("--out", default="bench-out")
    bg.add_argument("--seed", type=int, default=0)
    return p


HANDLERS = {
    "l2vpn": cmd_l2vpn, "rp": cmd_rp, "associate": cmd_associate, "arp": cmd_arp,
    "endpoint": cmd_endpoint, "stats": cmd_stats,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args.addr = getattr(args, "addr", None)
    args.format = getattr(args, "format", "table")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "sim":
            return cmd_sim(args)
        if args.command == "bench":
            if args.kind == "gen" and args.mode == "one":
                args.mode = "one_by_one"
            return cmd_bench(args)
        doc = HANDLERS[args.command](args)
    except ApiError as exc:
        print(exc, file=sys.stderr)
        if exc.body is not None:
            emit(exc.body, args.format)
        return EXIT_API
    except argparse.ArgumentTypeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_API
    emit(doc, args.format)
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
