"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 permission denied, 4 I/O or
missing-data error. The data directory comes from ``--data`` or the
``STREAMVAULT_DATA`` environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import threading
from pathlib import Path

from . import bench, dht
from .errors import (
    KeyExists,
    LedgerUnavailable,
    MissingKeyEpoch,
    NotCurrentlyGranted,
    NotFound,
    NotStreamOwner,
    PermissionDenied,
    StaleChallenge,
    StorageUnavailable,
    TokenMismatch,
    UnknownStream,
)
from .hashing import digest
from .gateway import records_from_csv, records_from_jsonl, records_to_csv
from .storage import serve
from .workspace import PROFILES, Workspace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PERMISSION = 3
EXIT_IO = 4

_PERMISSION_ERRORS = (PermissionDenied, NotStreamOwner, NotCurrentlyGranted,
                      TokenMismatch, MissingKeyEpoch, StaleChallenge)
_IO_ERRORS = (NotFound, UnknownStream, StorageUnavailable,
              LedgerUnavailable, KeyExists, OSError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamvault",
        description="Encrypted time-series streams with ledger-enforced "
                    "sharing.")
    parser.add_argument("--data", help="workspace directory "
                        "(default: $STREAMVAULT_DATA or ~/.streamvault)")
    parser.add_argument("--profile", choices=sorted(PROFILES),
                        default="default",
                        help="chain timing profile (applies at first use)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for simulations and benchmarks")
    parser.add_argument("--config", help="JSON config file (sim)")
    parser.add_argument("--format", choices=["csv", "text"], default="text",
                        help="output format")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a named identity")
    p.add_argument("name")
    p.add_argument("--kind", choices=["owner", "service"], default="owner")

    p = sub.add_parser("stream-register", help="register a new stream")
    p.add_argument("label")
    p.add_argument("--owner", required=True)
    p.add_argument("--t0", type=int, required=True,
                   help="stream start (ms since epoch)")
    p.add_argument("--delta", type=int, required=True,
                   help="chunk window length (ms)")
    p.add_argument("--checkpoint-interval", type=int, default=10)
    p.add_argument("--kr-seed", help="hex key-chain seed (default: random)")

    p = sub.add_parser("ingest", help="feed records through the pipeline")
    p.add_argument("stream")
    p.add_argument("--input", required=True,
                   help="records file (.csv or .jsonl), or - for stdin")

    p = sub.add_parser("share", help="grant a service access to a stream")
    p.add_argument("stream")
    p.add_argument("--service", required=True)
    p.add_argument("--expires", type=int, default=0,
                   help="expiry timestamp in ms (0 = no expiry)")

    p = sub.add_parser("revoke", help="revoke a service's access")
    p.add_argument("stream")
    p.add_argument("--service", required=True)

    p = sub.add_parser("get", help="fetch records from a time range")
    p.add_argument("stream")
    p.add_argument("--as", dest="reader", required=True,
                   help="identity to read as")
    p.add_argument("--from", dest="t_a", type=int, required=True)
    p.add_argument("--to", dest="t_b", type=int, required=True)

    p = sub.add_parser("audit", help="print the permission audit log")
    p.add_argument("stream", nargs="?")

    p = sub.add_parser("node-run", help="serve the storage node over TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--once", action="store_true",
                   help="print the address and return instead of blocking")

    p = sub.add_parser("sim", help="run a seeded overlay-network simulation")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--puts", type=int, default=50)
    p.add_argument("--gets", type=int, default=200)
    p.add_argument("--trace", help="write the event trace CSV here")

    p = sub.add_parser("bench-compression",
                       help="compression ratio versus chunk size")
    p.add_argument("--out", help="write the report CSV here")

    p = sub.add_parser("bench-overhead",
                       help="enforcement overhead and network amplification")
    p.add_argument("--out", help="write the report CSV here")

    return parser


def _read_records(path: str):
    if path == "-":
        text = sys.stdin.read()
        return records_from_csv(text)
    text = Path(path).read_text()
    if path.endswith(".jsonl"):
        return records_from_jsonl(text)
    return records_from_csv(text)


def _print_records(records, fmt: str) -> None:
    if fmt == "csv":
        sys.stdout.write(records_to_csv(records))
    else:
        for r in records:
            print(f"{r.timestamp}\t{r.value.decode(errors='replace')}")


def _cmd_keygen(ws: Workspace, args) -> int:
    info = ws.create_identity(args.name, args.kind)
    for key, value in info.items():
        print(f"{key}: {value}")
    return EXIT_OK


def _cmd_stream_register(ws: Workspace, args) -> int:
    kr_seed = bytes.fromhex(args.kr_seed) if args.kr_seed else None
    stream_id = ws.register_stream(
        args.owner, args.label, args.t0, args.delta, profile=args.profile,
        checkpoint_interval=args.checkpoint_interval, kr_seed=kr_seed)
    print(f"stream_id: {stream_id.hex()}")
    return EXIT_OK


def _cmd_ingest(ws: Workspace, args) -> int:
    records = _read_records(args.input)
    report = ws.ingest(args.stream, records)
    print(f"accepted: {report.accepted}")
    print(f"rejected: {report.rejected}")
    print(f"chunks_sealed: {report.chunks_sealed}")
    if report.anchor_txid:
        print(f"anchor_txid: {report.anchor_txid.hex()}")
    return EXIT_OK


def _cmd_share(ws: Workspace, args) -> int:
    txid = ws.share(args.stream, args.service, expires_at=args.expires)
    print(f"grant_txid: {txid.hex()}")
    return EXIT_OK


def _cmd_revoke(ws: Workspace, args) -> int:
    txid = ws.revoke(args.stream, args.service)
    print(f"revoke_txid: {txid.hex()}")
    return EXIT_OK


def _cmd_get(ws: Workspace, args) -> int:
    records = ws.query(args.stream, args.reader, args.t_a, args.t_b)
    _print_records(records, args.format)
    return EXIT_OK


def _cmd_audit(ws: Workspace, args) -> int:
    lines = ws.audit_lines(args.stream)
    if args.format == "csv":
        print("height,tx_index,op,verdict,reason,signer,stream,txid")
        for line in lines:
            print(",".join(line.split("\t")))
    else:
        for line in lines:
            print(line)
    return EXIT_OK


def _cmd_node_run(ws: Workspace, args) -> int:
    server, thread = serve(ws.node(), args.host, args.port)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", flush=True)
    if args.once:
        server.shutdown()
        thread.join()
        return EXIT_OK
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def _cmd_sim(ws: Workspace, args) -> int:
    if args.config:
        config = dht.DhtConfig.from_json(Path(args.config).read_text())
    else:
        config = dht.DhtConfig()
    overrides = {"seed": args.seed}
    if args.nodes is not None:
        overrides["node_count"] = args.nodes
    config = dataclasses.replace(config, **overrides)
    sim = dht.DhtSimulator(config)
    sim.spawn_network()

    rng = sim.rng
    keys_written = []
    for i in range(args.puts):
        key = digest(b"sim-key", args.seed.to_bytes(8, "big"),
                     i.to_bytes(8, "big"))
        sim.put(key, f"value-{i}".encode())
        keys_written.append(key)
    get_latencies = []
    hits = 0
    for _ in range(args.gets):
        key = rng.choice(keys_written)
        result = sim.get_traced(key, region=rng.choice(config.regions))
        get_latencies.append(result.latency_ms)
        hits += 1 if result.found else 0

    if args.trace:
        Path(args.trace).write_text(dht.trace_csv(sim.trace))
    mean_get = (sum(get_latencies) / len(get_latencies)) if get_latencies else 0.0
    rows = [("nodes", len(sim.nodes)), ("puts", args.puts),
            ("gets", args.gets), ("get_success", hits),
            ("mean_get_latency_ms", round(mean_get, 3)),
            ("trace_events", len(sim.trace))]
    if args.format == "csv":
        print("metric,value")
        for name, value in rows:
            print(f"{name},{value}")
    else:
        for name, value in rows:
            print(f"{name}: {value}")
    return EXIT_OK


def _write_report(report, out: str | None) -> None:
    text = report.to_csv()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_bench_compression(ws: Workspace, args) -> int:
    _write_report(bench.bench_compression(seed=args.seed), args.out)
    return EXIT_OK


def _cmd_bench_overhead(ws: Workspace, args) -> int:
    _write_report(bench.bench_access_overhead(seed=args.seed), args.out)
    return EXIT_OK


_COMMANDS = {
    "keygen": _cmd_keygen,
    "stream-register": _cmd_stream_register,
    "ingest": _cmd_ingest,
    "share": _cmd_share,
    "revoke": _cmd_revoke,
    "get": _cmd_get,
    "audit": _cmd_audit,
    "node-run": _cmd_node_run,
    "sim": _cmd_sim,
    "bench-compression": _cmd_bench_compression,
    "bench-overhead": _cmd_bench_overhead,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on bad usage / --help
        return int(exc.code or 0)
    ws = Workspace(args.data)
    try:
        return _COMMANDS[args.command](ws, args)
    except _PERMISSION_ERRORS as exc:
        print(f"permission denied: {exc}", file=sys.stderr)
        return EXIT_PERMISSION
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
