"""Command line entry points: synth, train, weights, eval, simulate, sweep, serve.

Exit codes: 0 success, 2 usage error, 3 missing file, 4 parse/validation error,
1 anything else.  All randomness flows from explicit --seed flags, so identical
invocations produce byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import synthetic
from .base_model import (TrainConfig, export_embeddings, import_embeddings, train_base)
from .engine import CritiqueConfig, importance_weights, load_omega, save_omega
from .graph import ParseError, ValidationError, load_graph, load_interactions, load_labels
from .sampling import SamplerConfig
from .simulate import (ExperimentConfig, evaluate_store, result_rows, run_experiment,
                       sweep, write_report_csv, write_report_jsonl)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID = 4


def _add_dataset_args(p):
    p.add_argument("--triples", required=True, help="triples file (head<TAB>rel<TAB>tail)")
    p.add_argument("--items", required=True, help="items file (one item entity id per line)")
    p.add_argument("--interactions", required=True, help="interactions file (user<TAB>item)")
    p.add_argument("--l-max", type=int, default=2)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=0)


def _add_engine_args(p):
    p.add_argument("--lr", type=float, default=0.005, help="critique learning rate")
    p.add_argument("--lambda-omega", type=float, default=1e-3)
    p.add_argument("--h", type=float, default=1.0, help="proxy score threshold")
    p.add_argument("--steps", type=int, default=5, help="optimizer steps per critique round")
    p.add_argument("--m", type=int, default=5, help="proxy samples per critique")
    p.add_argument("--r", type=float, default=0.8, help="fraction of proxies from hop 1")
    p.add_argument("--variant", choices=["ipgc", "ipgc-t"], default="ipgc")


def _engine_config(args) -> CritiqueConfig:
    return CritiqueConfig(learning_rate=args.lr, lambda_omega=args.lambda_omega,
                          h=args.h, steps_per_critique=args.steps,
                          sampler=SamplerConfig(m=args.m, r=args.r, l_max=args.l_max),
                          variant=args.variant)


def _load_dataset(args):
    kg = load_graph(args.triples, args.items, l_max=args.l_max)
    inter = load_interactions(args.interactions, kg, split_ratio=args.split_ratio,
                              seed=args.split_seed)
    return kg, inter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipgc",
                                     description="knowledge-graph critiquing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the bundled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--keyphrases", type=int, default=300)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--seed", type=int, default=20240401)

    p = sub.add_parser("train", help="train base embeddings")
    _add_dataset_args(p)
    p.add_argument("--out", required=True, help="embedding output file")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--train-lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--kg-weight", type=float, default=1.0)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("weights", help="compute importance weights from embeddings")
    _add_dataset_args(p)
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate base embeddings (round-0 metrics)")
    _add_dataset_args(p)
    p.add_argument("--emb", required=True)
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("simulate", help="run the multi-round critiquing simulation")
    _add_dataset_args(p)
    _add_engine_args(p)
    p.add_argument("--emb", required=True)
    p.add_argument("--omega", required=True)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--critiques-per-round", type=int, default=5)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--arm", choices=["kg", "random", "direct"], default="kg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="CSV output path")
    p.add_argument("--jsonl", help="JSONL output path")

    p = sub.add_parser("sweep", help="sweep one hyperparameter over the simulation")
    _add_dataset_args(p)
    _add_engine_args(p)
    p.add_argument("--emb", required=True)
    p.add_argument("--omega", required=True)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--critiques-per-round", type=int, default=5)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--arm", choices=["kg", "random", "direct"], default="kg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", choices=["m", "r", "lambda_omega"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--report", help="CSV output path")
    p.add_argument("--jsonl", help="JSONL output path")

    p = sub.add_parser("serve", help="run the critiquing session service")
    _add_dataset_args(p)
    _add_engine_args(p)
    p.add_argument("--emb", default=os.environ.get("IPGC_EMB"),
                   required="IPGC_EMB" not in os.environ)
    p.add_argument("--omega", default=os.environ.get("IPGC_OMEGA"),
                   required="IPGC_OMEGA" not in os.environ)
    p.add_argument("--labels", help="optional entity label sidecar")
    p.add_argument("--host", default=os.environ.get("IPGC_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("IPGC_PORT", "8765")))
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--timeout", type=float, default=3600.0, help="session idle timeout (s)")

    return parser


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(rounds=args.rounds, critiques_per_round=args.critiques_per_round,
                            top_n_for_critiquer=args.top_n, k=args.k,
                            engine=_engine_config(args), arm=args.arm, seed=args.seed)


def _write_reports(args, rows):
    if args.report:
        write_report_csv(args.report, rows)
    if args.jsonl:
        write_report_jsonl(args.jsonl, rows)


def _print_rounds(result, k):
    for r in result.rounds:
        print(f"step {r.step:3d}  recall@{k} {r.recall:.6f}  ndcg@{k} {r.ndcg:.6f}  "
              f"hr@{k} {r.hr:.6f}")
    imps = "  ".join(f"{n} {100 * result.max_imp[n]:.1f}%" for n in ("recall", "ndcg", "hr"))
    print(f"maximp: {imps}")


def run(args) -> int:
    if args.command == "synth":
        cfg = synthetic.SyntheticConfig(n_users=args.users, n_items=args.items,
                                        n_keyphrases=args.keyphrases,
                                        n_clusters=args.clusters, seed=args.seed)
        out = synthetic.write_dataset(args.out, cfg)
        print(f"wrote synthetic dataset to {out}")
        return EXIT_OK

    if args.command == "train":
        kg, inter = _load_dataset(args)
        cfg = TrainConfig(dim=args.dim, epochs=args.epochs, learning_rate=args.train_lr,
                          batch_size=args.batch_size, kg_loss_weight=args.kg_weight,
                          l2_weight=args.l2, seed=args.seed)
        log = None if args.quiet else (
            lambda epoch, loss: print(f"epoch {epoch:3d}  loss {loss:.6f}"))
        store = train_base(kg, inter, cfg, epoch_callback=log)
        export_embeddings(store, args.out)
        print(f"wrote embeddings to {args.out}")
        return EXIT_OK

    if args.command == "weights":
        kg, inter = _load_dataset(args)
        store = import_embeddings(args.emb)
        save_omega(importance_weights(store, inter), args.out)
        print(f"wrote importance weights to {args.out}")
        return EXIT_OK

    if args.command == "eval":
        _, inter = _load_dataset(args)
        store = import_embeddings(args.emb)
        r = evaluate_store(store, inter, k=args.k)
        print(f"recall@{args.k} {r.recall:.6f}  ndcg@{args.k} {r.ndcg:.6f}  "
              f"hr@{args.k} {r.hr:.6f}")
        return EXIT_OK

    if args.command == "simulate":
        kg, inter = _load_dataset(args)
        store = import_embeddings(args.emb)
        omega = load_omega(args.omega)
        result = run_experiment(_experiment_config(args), store, omega, kg, inter)
        _print_rounds(result, args.k)
        _write_reports(args, result_rows(result, k=args.k))
        return EXIT_OK

    if args.command == "sweep":
        kg, inter = _load_dataset(args)
        store = import_embeddings(args.emb)
        omega = load_omega(args.omega)
        values = [v for v in args.values.split(",") if v != ""]
        results = sweep(args.param, values, _experiment_config(args), store, omega,
                        kg, inter)
        rows = []
        for value, result in results:
            print(f"-- {args.param} = {value}")
            _print_rounds(result, args.k)
            rows.extend(result_rows(result, param=args.param, value=value, k=args.k))
        _write_reports(args, rows)
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .service import ServiceConfig, create_app
        kg, inter = _load_dataset(args)
        store = import_embeddings(args.emb)
        omega = load_omega(args.omega)
        labels = load_labels(args.labels) if args.labels else None
        app = create_app(store, omega, kg, inter, _engine_config(args), labels=labels,
                         cfg=ServiceConfig(top_k=args.top_k, session_timeout=args.timeout))
        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return run(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - single diagnostic line, non-zero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
