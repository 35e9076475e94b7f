#!/usr/bin/env python3
"""lightalign - entity alignment between two knowledge graphs by label propagation.

Usage:
    lightalign align --dir DATA [--mode basic|iterative|literal] [--out DIR]
    lightalign trace --dir DATA --source ID --predicted ID --gold ID
    lightalign eval  --pairs pairs.tsv --ref ref_ent_ids
    lightalign synth --entities N --triples M --out DIR
    lightalign sweep --dir DATA --param dim --values 128,256,512
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

from lightalign.config import (
    DEFAULT_CONFIG,
    THREADS_ENV,
    VALID_BACKENDS,
    VALID_CANDIDATES,
    VALID_DECODERS,
    VALID_MODES,
    AlignConfig,
    ConfigError,
    load_config,
    resolve_threads,
)
from lightalign.kg import SUP_FILE, DatasetError, KgPair, SplitSpec, load_dataset, write_dataset
from lightalign.pipeline import AlignmentResult, evaluate_pairs_file, run, write_result
from lightalign.synth import make_isomorphic_copy
from lightalign.trace import DEFAULT_TOP_M, TraceError, trace_alignment

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2

SWEEP_PARAMS = {"dim": int, "rounds": int, "topk": int, "tau": float, "ratio": float}


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _default(key: str) -> str:
    return f"(default: {DEFAULT_CONFIG[key]})"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    """Every AlignConfig field as a flag; None means 'not given'."""
    p.add_argument("--config", type=Path, help="YAML config file (flags override it)")
    p.add_argument("--mode", choices=sorted(VALID_MODES), help=_default("mode"))
    p.add_argument("--dim", type=int, help=f"hyper-sphere label dimension {_default('dim')}")
    p.add_argument("--seed", type=int, help=f"random seed for labels and splits {_default('seed')}")
    p.add_argument("--rounds", type=int, help=f"propagation rounds k {_default('rounds')}")
    p.add_argument(
        "--reverse-triples",
        action=argparse.BooleanOptionalAction,
        default=None,
        help=f"add inverse triples {_default('reverse_triples')}",
    )
    p.add_argument(
        "--per-round-l2",
        action=argparse.BooleanOptionalAction,
        default=None,
        help=f"L2-normalize labels after every round {_default('per_round_l2')}",
    )
    p.add_argument(
        "--three-view",
        action=argparse.BooleanOptionalAction,
        default=None,
        help=f"use the relation views too {_default('three_view')}",
    )
    p.add_argument("--topk", type=int, help=f"neighbours kept per entity {_default('topk')}")
    p.add_argument("--tau", type=float, help=f"Sinkhorn temperature {_default('tau')}")
    p.add_argument(
        "--sinkhorn-q", type=int, help=f"Sinkhorn iterations {_default('sinkhorn_q')}"
    )
    p.add_argument("--decoder", choices=sorted(VALID_DECODERS), help=_default("decoder"))
    p.add_argument("--backend", choices=sorted(VALID_BACKENDS), help=_default("backend"))
    p.add_argument("--candidates", choices=sorted(VALID_CANDIDATES), help=_default("candidates"))
    p.add_argument(
        "--iterative-epochs",
        type=int,
        help=f"self-training epochs {_default('iterative_epochs')}",
    )
    p.add_argument(
        "--threads", type=int, help="worker threads (default: $LIGHTALIGN_THREADS or 1)"
    )


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dir", type=Path, required=True, help="dataset directory")
    p.add_argument(
        "--ratio",
        type=float,
        help="seed ratio for a random split (default: sup_ent_ids if present, else 0.3)",
    )
    p.add_argument("--train-file", type=Path, help="explicit seed pairs file")
    p.add_argument(
        "--valid-ratio", type=float, default=0.0, help="validation share (default: 0.0)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lightalign",
        description="Align the entities of two knowledge graphs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    align = sub.add_parser("align", help="run the alignment pipeline")
    _add_dataset_flags(align)
    _add_config_flags(align)
    align.add_argument("--emb-src", type=Path, help="source name embeddings (literal mode)")
    align.add_argument("--emb-tgt", type=Path, help="target name embeddings (literal mode)")
    align.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    trace = sub.add_parser("trace", help="explain one alignment decision")
    _add_dataset_flags(trace)
    trace.add_argument("--source", type=int, required=True, help="source entity ID")
    trace.add_argument("--predicted", type=int, required=True, help="predicted target ID")
    trace.add_argument("--gold", type=int, required=True, help="gold target ID")
    trace.add_argument("--rounds", type=int, default=2, help="propagation rounds (default: 2)")
    trace.add_argument("--hops", type=int, help="subgraph radius (default: --rounds)")
    trace.add_argument(
        "--top-m", type=int, default=DEFAULT_TOP_M, help="anchors shown per round (default: 5)"
    )
    trace.add_argument(
        "--reverse-triples",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="add inverse triples (default: on)",
    )
    trace.add_argument("--seed", type=int, default=0, help="split seed (default: 0)")
    trace.add_argument("--format", choices=["text", "yaml"], default="text")

    ev = sub.add_parser("eval", help="score a pairs file against reference pairs")
    ev.add_argument("--pairs", type=Path, required=True, help="predicted pairs file")
    ev.add_argument("--ref", type=Path, required=True, help="reference pairs file")

    synth = sub.add_parser("synth", help="generate an isomorphic-copy benchmark")
    synth.add_argument("--entities", type=int, default=1000, help="(default: 1000)")
    synth.add_argument("--triples", type=int, default=4000, help="(default: 4000)")
    synth.add_argument("--relations", type=int, default=50, help="(default: 50)")
    synth.add_argument(
        "--noise", type=float, default=0.0, help="tail rewiring probability (default: 0.0)"
    )
    synth.add_argument("--seed", type=int, default=0, help="(default: 0)")
    synth.add_argument("--ratio", type=float, default=0.3, help="seed ratio (default: 0.3)")
    synth.add_argument("--out", type=Path, required=True, help="dataset directory to write")

    sweep = sub.add_parser("sweep", help="run align over several values of one parameter")
    _add_dataset_flags(sweep)
    _add_config_flags(sweep)
    sweep.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--emb-src", type=Path, help="source name embeddings (literal mode)")
    sweep.add_argument("--emb-tgt", type=Path, help="target name embeddings (literal mode)")
    sweep.add_argument("--out", type=Path, help="write one result directory per value")
    return parser


def _config_from_args(args: argparse.Namespace) -> AlignConfig:
    """Defaults < config file < flags."""
    config = load_config(args.config)
    overrides: dict[str, Any] = {
        key: getattr(args, key)
        for key in DEFAULT_CONFIG
        if key != "threads" and getattr(args, key, None) is not None
    }
    config.update(overrides)
    if args.threads is not None or os.environ.get(THREADS_ENV, "").strip():
        config["threads"] = resolve_threads(args.threads)
    return AlignConfig.from_dict(config)


def _split(args: argparse.Namespace, seed: int, ratio: Optional[float] = None) -> SplitSpec:
    ratio = args.ratio if ratio is None else ratio
    if args.train_file is not None:
        return SplitSpec(train_file=args.train_file, seed=seed, valid_ratio=args.valid_ratio)
    if ratio is None and (args.dir / SUP_FILE).exists():
        return SplitSpec(train_file=args.dir / SUP_FILE, seed=seed, valid_ratio=args.valid_ratio)
    return SplitSpec(
        ratio=0.3 if ratio is None else ratio, seed=seed, valid_ratio=args.valid_ratio
    )


def _align(
    pair: KgPair, config: AlignConfig, args: argparse.Namespace, out: Optional[Path]
) -> tuple[AlignmentResult, float]:
    start = time.perf_counter()
    result = run(pair, config, args.emb_src, args.emb_tgt)
    seconds = time.perf_counter() - start
    if out is not None:
        write_result(result, out, pair)
    return result, seconds


def cmd_align(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    pair = load_dataset(args.dir, _split(args, config.seed))
    result, seconds = _align(pair, config, args, args.out)
    print(result.metrics.line(seconds))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    cast = SWEEP_PARAMS[args.param]
    try:
        values = [cast(v.strip()) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values: cannot read {args.values!r} as {cast.__name__}s") from None
    if not values:
        raise UsageError("--values: no values given")

    for value in values:
        if args.param == "ratio":
            run_config = config
            pair = load_dataset(args.dir, _split(args, config.seed, ratio=value))
        else:
            run_config = config.replace(**{args.param: value})
            pair = load_dataset(args.dir, _split(args, config.seed))
        out = args.out / f"{args.param}-{value}" if args.out is not None else None
        result, seconds = _align(pair, run_config, args, out)
        print(f"{args.param}={value} {result.metrics.line(seconds)}")
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    pair = load_dataset(args.dir, _split(args, args.seed))

    def local(index: dict[int, int], entity_id: int, side: str) -> int:
        if entity_id not in index:
            raise TraceError(f"unknown {side} entity ID {entity_id}")
        return index[entity_id]

    report = trace_alignment(
        pair,
        local(pair.source.index_of_id, args.source, "source"),
        local(pair.target.index_of_id, args.predicted, "target"),
        local(pair.target.index_of_id, args.gold, "target"),
        hops=args.hops,
        k=args.rounds,
        m=args.top_m,
        reverse_triples=args.reverse_triples,
    )
    print(report.to_yaml() if args.format == "yaml" else report.format_text())
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    metrics = evaluate_pairs_file(args.pairs, args.ref)
    print(metrics.line())
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    pair = make_isomorphic_copy(
        entities=args.entities,
        triples=args.triples,
        relations=args.relations,
        noise=args.noise,
        seed=args.seed,
        ratio=args.ratio,
    )
    write_dataset(pair, args.out)
    logger.info("Wrote synthetic dataset to %s", args.out)
    return 0


COMMANDS = {
    "align": cmd_align,
    "trace": cmd_trace,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point. Returns 0 on success, 1 on usage errors, 2 on data errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, TraceError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        logger.info("Interrupted, exiting...")
        return 130


if __name__ == "__main__":
    sys.exit(main())
