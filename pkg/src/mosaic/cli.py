"""Operator command line: ``mosaic {ingest,recommend,eval,serve}``.

Results go to standard output as JSON; progress and diagnostics go to
standard error.  Exit codes: 0 success, 2 usage or input error, 3
environment error (busy port, unwritable path).
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from dataclasses import replace

from mosaic.dataset import Collection, ManifestError, group_memberships, load_manifest
from mosaic.engines import ENGINE_IDS, parse_engine_id, recommend
from mosaic.scoring import UserProfile
from mosaic.simharness import EvalConfig, default_grid, load_profiles, run_offline_eval
from mosaic.similarity import (
    FormatError,
    cosine_similarity_matrix,
    load_embeddings,
    load_similarity_matrix,
    save_similarity_matrix,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ENV = 3


class EnvError(RuntimeError):
    """Environment problem (exit code 3)."""


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, ensure_ascii=False))


def _load_matrices(args, collection: Collection) -> dict:
    matrices = {}
    if getattr(args, "matrix_a", None):
        matrices["a"] = load_similarity_matrix(args.matrix_a, collection)
    if getattr(args, "matrix_b", None):
        matrices["b"] = load_similarity_matrix(args.matrix_b, collection)
    if not matrices:
        raise ManifestError("at least one of --matrix-a/--matrix-b is required")
    return matrices


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip().strip('"')
    return values


def cmd_ingest(args) -> int:
    collection = load_manifest(args.manifest)
    if args.embeddings:
        table = load_embeddings(args.embeddings)
        have, want = set(table.vectors), set(collection.ids)
        if have != want:
            missing = sorted(want - have)[:5]
            extra = sorted(have - want)[:5]
            raise ManifestError(
                f"embeddings do not match the manifest (missing {missing}, extra {extra})"
            )
        # row order follows the manifest for reproducible files
        from mosaic.similarity import EmbeddingTable

        ordered = EmbeddingTable(
            dim=table.dim, vectors={pid: table.vectors[pid] for pid in collection.ids}
        )
        start = time.perf_counter()
        matrix = cosine_similarity_matrix(ordered)
        build_seconds = time.perf_counter() - start
        _log(f"built {matrix.m}x{matrix.m} cosine matrix in {build_seconds:.2f}s")
    elif args.matrix:
        start = time.perf_counter()
        matrix = load_similarity_matrix(args.matrix, collection)
        build_seconds = time.perf_counter() - start
        _log(f"validated {matrix.m}x{matrix.m} {matrix.kind} matrix in {build_seconds:.2f}s")
    else:
        raise ManifestError("ingest needs --embeddings (to build) or --matrix (to validate)")
    save_similarity_matrix(matrix, args.out)
    _emit({"matrix": args.out, "m": matrix.m, "kind": matrix.kind,
           "build_seconds": round(build_seconds, 4)})
    return EXIT_OK


def _load_single_profile(path: str) -> UserProfile:
    profiles = load_profiles(path) if _looks_like_list(path) else None
    if profiles is not None:
        if len(profiles) != 1:
            raise ValueError(f"{path} holds {len(profiles)} profiles; recommend needs exactly one")
        return profiles[0]
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "ratings" not in doc:
        raise ValueError(f"{path}: profile must be an object with a 'ratings' map")
    return UserProfile(ratings=dict(doc["ratings"]), beta=doc.get("beta"), xi=doc.get("xi"))


def _looks_like_list(path: str) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for ch in fh.read(64):
            if not ch.isspace():
                return ch == "["
    return False


def cmd_recommend(args) -> int:
    collection = load_manifest(args.manifest)
    matrices = _load_matrices(args, collection)
    profile = _load_single_profile(args.profile)
    if args.beta is not None:
        profile = replace(profile, beta=args.beta)
    if args.xi is not None:
        profile = replace(profile, xi=args.xi)
    spec = parse_engine_id(args.engine, r=args.r)
    rec = recommend(
        spec,
        collection,
        matrices,
        profile,
        raw_aggregation=args.raw_aggregation,
        node_budget=args.node_budget,
    )
    if not rec.optimal:
        _log("warning: node budget exhausted, result is the best incumbent (optimal=false)")
    _emit({
        "engine": rec.engine,
        "params": dict(rec.params),
        "items": [
            {"id": pid, "score": score, "groups": sorted(group_memberships(collection, pid))}
            for pid, score in zip(rec.items, rec.scores)
        ],
        "objective": rec.objective,
        "solver": rec.solver,
        "optimal": rec.optimal,
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    collection = load_manifest(args.manifest)
    matrices = _load_matrices(args, collection)
    profiles = load_profiles(args.profiles)

    options = _read_config_file(args.config) if args.config else {}

    def opt(key: str, flag_value, parser):
        if flag_value is not None:
            return flag_value
        if key in options:
            return parser(options[key])
        return None

    rates_str = args.rates if args.rates is not None else options.get("rates")
    rates = tuple(float(x) for x in rates_str.split(",")) if rates_str else (0.0, 0.5, 1.0)
    rbo_p = opt("rbo_p", args.rbo_p, float)
    r = opt("r", args.r, int)
    seed = opt("seed", args.seed, int)
    raw = args.raw_aggregation or options.get("raw_aggregation", "").lower() in ("1", "true", "yes")
    scaled = args.scaled_poisson or options.get("scaled_poisson", "").lower() in ("1", "true", "yes")

    config = EvalConfig(
        grid=default_grid(sorted(matrices), rates),
        tolerance_rates=rates,
        rbo_p=rbo_p if rbo_p is not None else 0.9,
        r=r if r is not None else 9,
        seed=seed if seed is not None else 0,
        raw_aggregation=raw,
        scaled_poisson=scaled,
        node_budget=args.node_budget,
    )
    _log(f"evaluating {len(config.grid)} cells over {len(profiles)} profiles (seed {config.seed})")
    table = run_offline_eval(collection, matrices, profiles, config)
    table.to_csv(args.out_csv)
    with open(args.out_table, "w", encoding="utf-8") as fh:
        fh.write(table.render_text() + "\n")
    _emit({
        "csv": args.out_csv,
        "table": args.out_table,
        "cells": len(config.grid),
        "profiles": len(profiles),
        "non_optimal": table.notes,
    })
    return EXIT_OK


def cmd_serve(args) -> int:
    collection = load_manifest(args.manifest)
    matrices = _load_matrices(args, collection)

    from mosaic.service import ServiceConfig, SessionStore, create_app

    if args.engines:
        engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
    else:
        engines = tuple(
            f"{policy}-{bb}" for bb in sorted(matrices) for policy in ("pop", "mosaic")
        )
    config = ServiceConfig(
        engines=engines,
        r=args.r,
        raw_aggregation=args.raw_aggregation,
        node_budget=args.node_budget,
        seed=args.seed,
    )
    try:
        store = SessionStore(args.data_dir, collection, matrices, config)
    except OSError as exc:
        raise EnvError(f"cannot open data directory {args.data_dir!r}: {exc}") from exc

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((args.host, args.port))
    except OSError as exc:
        raise EnvError(f"cannot bind {args.host}:{args.port}: {exc}") from exc
    finally:
        probe.close()

    app = create_app(store, images_dir=args.images_dir)
    _log(f"serving {len(engines)} engines on http://{args.host}:{args.port} (data: {args.data_dir})")

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mosaic", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="build or validate a similarity matrix file")
    ingest.add_argument("--manifest", required=True)
    ingest.add_argument("--embeddings", help="MOSAIC-EMB file to build a cosine matrix from")
    ingest.add_argument("--matrix", help="existing MOSAIC-SIM file to validate and rewrite")
    ingest.add_argument("--out", required=True, help="output MOSAIC-SIM path")
    ingest.add_argument("--seed", type=int, default=None)
    ingest.set_defaults(func=cmd_ingest)

    rec = sub.add_parser("recommend", help="run one engine for one profile")
    rec.add_argument("--manifest", required=True)
    rec.add_argument("--matrix-a", dest="matrix_a")
    rec.add_argument("--matrix-b", dest="matrix_b")
    rec.add_argument("--profile", required=True, help="JSON profile: {ratings, beta?, xi?}")
    rec.add_argument("--engine", required=True, choices=list(ENGINE_IDS))
    rec.add_argument("--beta", type=float, default=None)
    rec.add_argument("--xi", type=float, default=None)
    rec.add_argument("--r", type=int, default=9)
    rec.add_argument("--raw-aggregation", action="store_true")
    rec.add_argument("--node-budget", type=int, default=1_000_000)
    rec.add_argument("--seed", type=int, default=None)
    rec.set_defaults(func=cmd_recommend)

    ev = sub.add_parser("eval", help="run the offline pairwise evaluation")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--matrix-a", dest="matrix_a")
    ev.add_argument("--matrix-b", dest="matrix_b")
    ev.add_argument("--profiles", required=True)
    ev.add_argument("--out-csv", required=True)
    ev.add_argument("--out-table", required=True)
    ev.add_argument("--rates", default=None, help="comma-separated Poisson rates (default 0,0.5,1)")
    ev.add_argument("--rbo-p", dest="rbo_p", type=float, default=None)
    ev.add_argument("--r", type=int, default=None)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--raw-aggregation", action="store_true")
    ev.add_argument("--scaled-poisson", action="store_true")
    ev.add_argument("--node-budget", type=int, default=1_000_000)
    ev.add_argument("--config", default=None, help="key=value overrides, one per line")
    ev.set_defaults(func=cmd_eval)

    srv = sub.add_parser("serve", help="run the study HTTP service")
    srv.add_argument("--manifest", required=True)
    srv.add_argument("--matrix-a", dest="matrix_a")
    srv.add_argument("--matrix-b", dest="matrix_b")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--data-dir", required=True)
    srv.add_argument("--images-dir", default=None)
    srv.add_argument("--engines", default=None, help="comma-separated engine ids")
    srv.add_argument("--r", type=int, default=9)
    srv.add_argument("--raw-aggregation", action="store_true")
    srv.add_argument("--node-budget", type=int, default=1_000_000)
    srv.add_argument("--seed", type=int, default=None)
    srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EnvError as exc:
        _log(f"error: {exc}")
        return EXIT_ENV
    except (ManifestError, FormatError, ValueError, KeyError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
