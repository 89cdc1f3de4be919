"""Command line entry points.

    ctxsearch index build <corpus> --out index.json
    ctxsearch profile ingest <log> --user u --config server.json
    ctxsearch search --user u "surfing" --config server.json [--json]
    ctxsearch serve --config server.json
    ctxsearch simulate crawl --nodes 1000 --registered-frac 0.1 ... --report out.json

`--now` (or CTXSEARCH_NOW) pins the clock for reproducible runs; everything
else the server honors comes from the config file plus CTXSEARCH_* overrides.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

from . import backend as backend_mod
from . import profile as profile_mod
from .crawlsim import SimConfig, run_simulation
from .errors import CtxSearchError
from .gateway import ContextService, load_config
from .httpd import make_server


def _clock_from(now_arg: str | None):
    pinned = now_arg or os.environ.get("CTXSEARCH_NOW")
    if pinned:
        fixed = profile_mod.parse_ts(pinned)
        return lambda: fixed
    return lambda: datetime.now(timezone.utc)


def _service(args) -> ContextService:
    if not args.config:
        raise CtxSearchError("this command needs --config (a server config file)")
    overrides = {"data_dir": args.data_dir} if args.data_dir else None
    config = load_config(args.config, overrides)
    return ContextService(config, clock=_clock_from(args.now))


def cmd_index_build(args) -> int:
    corpus = backend_mod.read_corpus(args.corpus)
    index = backend_mod.build_index(corpus)
    backend_mod.save_index(index, args.out)
    print(f"indexed {index.n_docs} docs ({len(index.postings)} terms) -> {args.out}")
    return 0


def cmd_profile_ingest(args) -> int:
    service = _service(args)
    records = [json.loads(line) for line in open(args.log, encoding="utf-8")
               if line.strip()]
    result = service.ingest_events(args.user, records)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_search(args) -> int:
    service = _service(args)
    response = service.search(args.user, args.query, alpha=args.alpha,
                              max_subqueries=args.max_subqueries)
    if args.json:
        print(json.dumps(response, indent=2, sort_keys=True))
        return 0
    sense = response["sense"]
    if sense:
        print(f"sense: {sense['chosen']}  (rejected: {', '.join(sense['rejected']) or '-'})")
    else:
        print("sense: none (literal query)")
    print("sub-queries:")
    for sub in response["sub_queries"]:
        print(f"  [{sub['weight']:.1f}] {sub['query']}  ({sub['origin']})")
    print("results:")
    for i, r in enumerate(response["results"], start=1):
        flags = " (demoted)" if r["demoted"] else ""
        print(f"  {i:2d}. {r['doc_id']}  score={r['final_score']:.4f}{flags}  {r['title']}")
    if response["suggestions"]:
        print("suggestions: " + ", ".join(s["label"] for s in response["suggestions"]))
    for warning in response["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    service = _service(args)
    server = make_server(service, port=args.port)
    print(f"ctxsearch service on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _parse_latency(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    return float(lo), float(hi or lo)


def cmd_simulate_crawl(args) -> int:
    lo, hi = _parse_latency(args.latency)
    config = SimConfig(
        nodes=args.nodes,
        registered_frac=args.registered_frac,
        loss=args.loss,
        dup=args.dup,
        latency_lo=lo,
        latency_hi=hi,
        timeout=args.timeout,
        max_retries=args.retries,
        service_agents=args.service_agents,
        queue_capacity=args.queue_capacity,
        seed=args.seed,
    )
    trace_handle = None
    trace = None
    if args.trace:
        trace_handle = open(args.trace, "w", encoding="utf-8")
        trace = lambda record: trace_handle.write(json.dumps(record) + "\n")  # noqa: E731
    try:
        report = run_simulation(config, trace=trace)
    finally:
        if trace_handle:
            trace_handle.close()
    body = report.to_json()
    if args.report:
        profile_mod.atomic_write(args.report, body)
    print(json.dumps(json.loads(body), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxsearch",
                                     description="Contextual search service and tools")
    parser.add_argument("--config", help="server config file (JSON)")
    parser.add_argument("--data-dir", help="override the config's data directory")
    parser.add_argument("--now", help="pin the clock to an ISO-8601 instant")
    # The same options are accepted after the subcommand ("serve --config f");
    # SUPPRESS keeps a root-level value from being clobbered by the default.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--data-dir", default=argparse.SUPPRESS)
    common.add_argument("--now", default=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    index = commands.add_parser("index", help="local index maintenance")
    index_sub = index.add_subparsers(dest="subcommand", required=True)
    build = index_sub.add_parser("build", parents=[common],
                                  help="build a BM25 index from a corpus")
    build.add_argument("corpus", help="corpus directory or JSONL file")
    build.add_argument("--out", required=True, help="output index file")
    build.set_defaults(func=cmd_index_build)

    prof = commands.add_parser("profile", help="profile maintenance")
    prof_sub = prof.add_subparsers(dest="subcommand", required=True)
    ingest = prof_sub.add_parser("ingest", parents=[common], help="ingest an activity log")
    ingest.add_argument("log", help="JSONL activity log")
    ingest.add_argument("--user", required=True)
    ingest.set_defaults(func=cmd_profile_ingest)

    search = commands.add_parser("search", parents=[common],
                                  help="run the full contextual search pipeline")
    search.add_argument("query")
    search.add_argument("--user", required=True)
    search.add_argument("--alpha", type=float)
    search.add_argument("--max-subqueries", type=int)
    search.add_argument("--json", action="store_true", help="print the full JSON response")
    search.set_defaults(func=cmd_search)

    serve = commands.add_parser("serve", parents=[common], help="run the HTTP service")
    serve.add_argument("--port", type=int)
    serve.set_defaults(func=cmd_serve)

    simulate = commands.add_parser("simulate", help="protocol simulations")
    sim_sub = simulate.add_subparsers(dest="subcommand", required=True)
    crawl = sim_sub.add_parser("crawl", parents=[common],
                               help="run the profile-crawler simulation")
    crawl.add_argument("--nodes", type=int, default=100)
    crawl.add_argument("--registered-frac", type=float, default=1.0)
    crawl.add_argument("--loss", type=float, default=0.0)
    crawl.add_argument("--dup", type=float, default=0.0)
    crawl.add_argument("--latency", default="10:50", help="lo:hi in milliseconds")
    crawl.add_argument("--retries", type=int, default=3)
    crawl.add_argument("--timeout", type=float, default=1000.0, help="first retry timeout (ms)")
    crawl.add_argument("--service-agents", type=int, default=1)
    crawl.add_argument("--queue-capacity", type=int, default=256)
    crawl.add_argument("--seed", type=int, default=0)
    crawl.add_argument("--report", help="write the report JSON here")
    crawl.add_argument("--trace", help="write per-message event log (JSONL) here")
    crawl.set_defaults(func=cmd_simulate_crawl)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CtxSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
