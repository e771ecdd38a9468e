"""Command-line entry point: ``zkcontact run | verify-chain | circuit-stats | serve``."""

from __future__ import annotations

import argparse
import logging
import sys

from .circuits import CircuitKind, build_circuit
from .engine import chain_of
from .params import ProtocolParams
from .protocol import ContactBundle, check_bundle, decode_bundle
from .r1cs import circuit_digest
from .registry import Registry, RegistryClient, RegistryServer, TcpTransport
from .sim import Simulation, load_scenario, report


def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def _field_int(text: str) -> int:
    return int(text, 0)


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.transitive is not None:
        over["transitive"] = args.transitive == "on"
    if over:
        cfg = cfg.with_options(**over)
    client = store = None
    if args.registry != "inproc":
        client = RegistryClient(TcpTransport(*_address(args.registry)))
    elif args.registry_log:
        store = Registry(args.registry_log)
        if len(store):
            store.close()
            sys.stderr.write(f"zkcontact: {args.registry_log} already holds {len(store)} entries; a run starts from an empty registry\n")
            return 2
    try:
        metrics = Simulation(cfg, client=client, registry=store).run()
    finally:
        if store is not None:
            store.close()
        if client is not None:
            client.close()
    sys.stdout.write(report(metrics, args.report))
    return 0


def cmd_verify_chain(args) -> int:
    cfg = load_scenario(args.scenario)
    sim = Simulation(cfg)
    with Registry(args.registry_log) as store:
        entry = store.lookup(args.h)
    if entry is None:
        print(f"no entry for h = {args.h:#x}")
        return 1
    bundle = decode_bundle(entry.body)
    match = check_bundle(bundle, sim.keys, sim.authority_registry)
    print(f"entry seq {entry.seq}, kind {entry.kind.name.lower()}")
    src = bundle.first_hop if isinstance(bundle, ContactBundle) else bundle.message
    if src is not None:
        for msg in chain_of(src):
            print(f"  depth {msg.depth}  {msg.predicate.value}  z[0] = {msg.z[0]:#x}")
    print(f"order {match.order}: {'verified' if match.verified else 'REJECTED ' + match.reason}")
    return 0 if match.verified else 1


def cmd_circuit_stats(args) -> int:
    params = ProtocolParams.toy() if args.preset == "toy" else ProtocolParams()
    rows = []
    for kind in CircuitKind:
        spec = build_circuit(kind, params)
        cs = spec.cs
        rows.append((kind.value, len(cs.constraints), cs.num_public, cs.num_aux, circuit_digest(cs).hex()[:16]))
    head = ("circuit", "constraints", "public", "aux", "digest")
    if args.format == "csv":
        print(",".join(head))
        for r in rows:
            print(",".join(map(str, r)))
        return 0
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    for r in (head, *rows):
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    return 0


def cmd_serve(args) -> int:
    store = Registry(args.log, fsync=args.fsync, page_limit=args.page_limit)
    srv = RegistryServer(store, args.listen)
    host, port = srv.address
    print(f"registry listening on {host}:{port} ({len(store)} entries)", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
        store.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zkcontact", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and print the latency report")
    r.add_argument("scenario", help="scenario file, or the name of a shipped scenario")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--transitive", choices=("on", "off"), help="override chained forwarding")
    r.add_argument("--registry", default="inproc", help="inproc or host:port of a running registry")
    r.add_argument("--registry-log", help="persist the in-process registry to this log file")
    r.add_argument("--report", choices=("text", "csv", "tsv"), default="text")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-chain", help="re-verify the bundle stored under h in a registry log")
    v.add_argument("registry_log")
    v.add_argument("h", type=_field_int, help="index digest, decimal or 0x-hex")
    v.add_argument("--scenario", default="alice-bob-charlie", help="scenario whose parameters and authorities to use")
    v.set_defaults(func=cmd_verify_chain)

    c = sub.add_parser("circuit-stats", help="constraint counts per circuit kind")
    c.add_argument("--preset", choices=("default", "toy"), default="default")
    c.add_argument("--format", choices=("text", "csv"), default="text")
    c.set_defaults(func=cmd_circuit_stats)

    s = sub.add_parser("serve", help="run the registry service")
    s.add_argument("--listen", type=_address, default=("127.0.0.1", 7411), help="host:port (default 127.0.0.1:7411)")
    s.add_argument("--log", required=True, help="append-only log file")
    s.add_argument("--page-limit", type=int, default=1000)
    s.add_argument("--fsync", action="store_true", help="fsync after every accepted publish")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
