"""Command-line entry points: learn, eval, stats, master, worker.

Exit codes: 0 solved or search space exhausted, 1 input error, 2 time budget
exceeded, 3 cluster failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys

from .cluster import (ClusterError, ClusterResult, MasterConfig, WorkerServer,
                      DEFAULT_TCP_PORT, DEFAULT_UDP_PORT, run_master)
from .concept import ConceptParseError, canonicalize, concept_length, parse_concept, render
from .evaluation import evaluate
from .kb import KbError, materialize, parse_examples, parse_kb
from .search import SearchConfig, SearchNode, SearchResult, run_search

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BUDGET = 2
EXIT_CLUSTER = 3


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise KbError(f"{path}: {exc.strerror or exc}") from None


def _load_kb(path: str):
    st, kb = parse_kb(_read(path))
    return st, kb


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--limit", type=int, default=1, help="hypotheses to report")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--max-length", type=int, default=10)
    p.add_argument("--max-millis", type=int, default=None)
    p.add_argument("--target-accuracy", type=float, default=1.0)
    p.add_argument("--no-disjunction", action="store_true")
    p.add_argument("--no-cardinality", action="store_true")
    p.add_argument("--no-inverse", action="store_true")
    p.add_argument("--no-negation", action="store_true")
    p.add_argument("--json", action="store_true", help="JSON-lines output")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; the search is deterministic")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dlbeam",
                                 description="beam-search learner for "
                                             "description-logic class expressions")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a class expression from examples")
    p.add_argument("kb")
    p.add_argument("examples")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--beam", type=int, default=None,
                   help="beam width (default: thread count)")
    _search_flags(p)

    p = sub.add_parser("eval", help="evaluate one concept against examples")
    p.add_argument("kb")
    p.add_argument("examples")
    p.add_argument("concept")

    p = sub.add_parser("stats", help="print dataset statistics")
    p.add_argument("kb")
    p.add_argument("examples", nargs="?", default=None)

    p = sub.add_parser("master", help="run the cluster master")
    p.add_argument("kb")
    p.add_argument("examples")
    p.add_argument("--broadcast-port", type=int, default=DEFAULT_UDP_PORT)
    p.add_argument("--discovery-millis", type=int, default=2000)
    p.add_argument("--expect-workers", type=int, default=None)
    p.add_argument("--with-local-worker", action="store_true")
    p.add_argument("--worker-endpoint", action="append", default=[],
                   metavar="HOST:PORT", help="directly pinged worker (repeatable)")
    _search_flags(p)

    p = sub.add_parser("worker", help="run a worker until interrupted")
    p.add_argument("--port", type=int, default=DEFAULT_TCP_PORT)
    p.add_argument("--broadcast-port", type=int, default=DEFAULT_UDP_PORT)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--cores", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    return ap


def _report(result: SearchResult | ClusterResult, st_sym, examples,
            as_json: bool) -> None:
    if as_json:
        for i, it in enumerate(result.iterations):
            print(json.dumps({"type": "iteration", "index": i,
                              "expanded": it.expanded, "generated": it.generated,
                              "redundant_dropped": it.redundant_dropped,
                              "weak_dropped": it.weak_dropped,
                              "st_size": it.st_size,
                              "elapsed_millis": it.elapsed_millis}))
        print(json.dumps({"type": "result", "status": result.status,
                          "wall_millis": result.wall_millis,
                          "hypotheses": [_hypo_json(n, st_sym) for n in result.hypotheses]}))
        return
    print(f"status: {result.status}")
    print(f"wall millis: {result.wall_millis}")
    print(f"iterations: {len(result.iterations)}")
    npos, nneg = examples.pos_count, examples.neg_count
    print("hypotheses:")
    for rank, n in enumerate(result.hypotheses, start=1):
        print(f"  {rank}. {render(n.concept, st_sym)}"
              f"  pos={n.coverage.pos_covered}/{npos}"
              f" neg={n.coverage.neg_covered}/{nneg}"
              f" acc={n.score.accuracy:.3f}"
              f" len={concept_length(n.concept)}"
              f" score={n.score.value:.4f}")


def _hypo_json(n: SearchNode, st_sym) -> dict:
    return {"concept": render(n.concept, st_sym),
            "pos_covered": n.coverage.pos_covered,
            "neg_covered": n.coverage.neg_covered,
            "accuracy": n.score.accuracy,
            "length": concept_length(n.concept),
            "score": n.score.value}


def _status_code(status: str) -> int:
    if status == "budget":
        return EXIT_BUDGET
    if status == "failed":
        return EXIT_CLUSTER
    return EXIT_OK


def cmd_learn(args) -> int:
    st_sym, kb = _load_kb(args.kb)
    examples = parse_examples(_read(args.examples), st_sym)
    materialize(kb, st_sym)
    threads = max(1, args.threads)
    cfg = SearchConfig(
        beam_width=args.beam if args.beam is not None else threads,
        limit=args.limit, noise=args.noise, max_millis=args.max_millis,
        max_length=args.max_length, target_accuracy=args.target_accuracy,
        threads=threads,
        use_inverse_roles=not args.no_inverse,
        use_cardinality=not args.no_cardinality,
        use_disjunction=not args.no_disjunction,
        use_negation=not args.no_negation)
    result = run_search(kb, examples, cfg)
    _report(result, st_sym, examples, args.json)
    return _status_code(result.status)


def cmd_eval(args) -> int:
    st_sym, kb = _load_kb(args.kb)
    examples = parse_examples(_read(args.examples), st_sym)
    materialize(kb, st_sym)
    concept = canonicalize(parse_concept(args.concept, st_sym))
    cov = evaluate(concept, kb, examples)
    npos, nneg = examples.pos_count, examples.neg_count
    accuracy = (cov.pos_covered + (nneg - cov.neg_covered)) / (npos + nneg)
    print(f"concept: {render(concept, st_sym)}")
    print(f"pos covered: {cov.pos_covered}/{npos}")
    print(f"neg covered: {cov.neg_covered}/{nneg}")
    print(f"accuracy: {accuracy:.4f}")
    return EXIT_OK


def cmd_stats(args) -> int:
    st_sym, kb = _load_kb(args.kb)
    n_class, n_role, n_concrete = kb.assertion_counts()
    n_concrete_roles = (len(kb.numeric_assertions) + len(kb.boolean_assertions)
                        + len(kb.string_assertions))
    print(f"classes: {kb.num_classes}")
    print(f"roles: {kb.num_roles}")
    print(f"concrete roles: {n_concrete_roles}")
    print(f"individuals: {kb.num_individuals}")
    print(f"class assertions: {n_class}")
    print(f"role assertions: {n_role}")
    print(f"concrete assertions: {n_concrete}")
    print(f"subclass axioms: {len(kb.subclass_edges)}")
    print(f"subrole axioms: {len(kb.subrole_edges)}")
    if args.examples is not None:
        examples = parse_examples(_read(args.examples), st_sym)
        print(f"positive examples: {examples.pos_count}")
        print(f"negative examples: {examples.neg_count}")
    return EXIT_OK


def cmd_master(args) -> int:
    st_sym, kb = _load_kb(args.kb)
    examples = parse_examples(_read(args.examples), st_sym)
    materialize(kb, st_sym)
    endpoints = []
    for spec_str in args.worker_endpoint:
        host, _, port = spec_str.rpartition(":")
        if not host or not port.isdigit():
            raise KbError(f"bad worker endpoint {spec_str!r} (want HOST:PORT)")
        endpoints.append((host, int(port)))
    local = None
    if args.with_local_worker:
        local = WorkerServer(udp_port=0).start()
        # endpoints are ping targets, so the worker's UDP port, not its TCP one
        endpoints.append(("127.0.0.1", local.udp_port))
    cfg = MasterConfig(
        limit=args.limit, noise=args.noise, max_millis=args.max_millis,
        max_length=args.max_length, target_accuracy=args.target_accuracy,
        use_inverse_roles=not args.no_inverse,
        use_cardinality=not args.no_cardinality,
        use_disjunction=not args.no_disjunction,
        use_negation=not args.no_negation,
        udp_port=args.broadcast_port,
        worker_endpoints=tuple(endpoints),
        discovery_millis=args.discovery_millis,
        expect_workers=args.expect_workers)
    try:
        result = run_master(kb, st_sym, examples, cfg)
    finally:
        if local is not None:
            local.stop()
    _report(result, st_sym, examples, args.json)
    if not args.json:
        for w in result.workers:
            print(f"worker {w.address[0]}:{w.address[1]} cores={w.cores}"
                  f" wn={w.wn} probe_millis={w.probe_millis}")
    return _status_code(result.status)


def cmd_worker(args) -> int:
    server = WorkerServer(host=args.host, tcp_port=args.port,
                          udp_port=args.broadcast_port, cores=args.cores,
                          threads=args.threads).start()
    print(f"worker listening on tcp {server.tcp_port}, udp {server.udp_port}",
          flush=True)
    stop = {"flag": False}

    def handle(_sig, _frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, handle)
    signal.signal(signal.SIGTERM, handle)
    try:
        while not stop["flag"]:
            signal.pause()
    except KeyboardInterrupt:
        pass
    server.stop()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "learn":
            return cmd_learn(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "stats":
            return cmd_stats(args)
        if args.command == "master":
            return cmd_master(args)
        if args.command == "worker":
            return cmd_worker(args)
    except (KbError, ConceptParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ClusterError as exc:
        print(f"cluster error: {exc}", file=sys.stderr)
        return EXIT_CLUSTER
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
