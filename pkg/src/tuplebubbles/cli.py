"""Command-line entry point.

Subcommands: build, query, bench, stats, parse.  Results go to stdout,
diagnostics to stderr.  Exit codes: 0 success, 1 user or query error,
2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import engine, storage
from .bench import generate_workload, run_benchmark
from .catalog import format_date, DATE
from .config import EngineConfig, apply_setting, parse_config
from .errors import ConfigError, DataError, EngineError, ModelFormatError, \
    ParseError, SqlError, UnanswerableQueryError
from .sql import parse as parse_sql

USER_ERRORS = (SqlError, UnanswerableQueryError)
IO_ERRORS = (ConfigError, DataError, ModelFormatError, FileNotFoundError)


def _load_config(args) -> EngineConfig:
    cfg = parse_config(args.config) if args.config else EngineConfig()
    for setting in args.set or []:
        if "=" not in setting:
            raise ConfigError(f"--set expects key=value, got {setting!r}")
        key, _, value = setting.partition("=")
        apply_setting(cfg, key.strip(), value.strip())
    if getattr(args, "model_dir", None):
        cfg.model_dir = args.model_dir
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "samples", None) is not None:
        cfg.samples = args.samples
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "sigma", None) is not None:
        cfg.sigma = "all" if args.sigma == "all" else int(args.sigma)
    if getattr(args, "no_propagation", False):
        cfg.propagate = False
    return cfg


def cmd_build(args) -> int:
    cfg = _load_config(args).validate()
    model = engine.build_model(cfg)
    path = engine.save_model(model, cfg)
    print(f"model written to {path}")
    print(f"{'bubble':40s} {'rows':>10s} {'nodes':>6s} {'entries':>9s}")
    for bubble in sorted(model.bubbles, key=lambda b: b.id):
        net = model.networks[bubble.id]
        nodes = 0 if net.degenerate else len(net.cpts)
        entries = 0 if net.degenerate else sum(net.storage_entries(n)
                                               for n in net.cpts)
        print(f"{bubble.id:40s} {bubble.n_rows:>10d} {nodes:>6d} {entries:>9d}")
    print(f"total bytes: {storage.model_bytes(path)}")
    return 0


def _format_estimate(value, query, catalog) -> str:
    if value is None:
        return "NULL"
    if query.agg_func in ("MIN", "MAX") and query.agg_attribute is not None:
        atype = catalog.table(query.agg_relation).schema \
            .attribute_type(query.agg_attribute)
        if atype.kind == DATE:
            return f"{value:.6g} ({format_date(int(value))})"
    if isinstance(value, str):
        return value
    return f"{value:.6g}"


def _run_one_query(model, cfg, sql: str) -> int:
    from .sql import bind
    query = bind(parse_sql(sql), model.catalog)
    estimate, report = engine.answer_sql(model, cfg, sql)
    print(f"estimate: {_format_estimate(estimate.value, query, model.catalog)}")
    print(f"relevant: {estimate.relevant}")
    print(f"method: {report.method}  sigma: {report.sigma}  "
          f"propagate: {report.propagate}")
    print(f"substitutes: {len(report.substitutes)}")
    for sub in report.substitutes:
        est = sub.estimate
        val = "NULL" if est.value is None else f"{est.value:.6g}" \
            if not isinstance(est.value, str) else est.value
        print(f"  chain [{' -> '.join(sub.chain)}] estimate {val} "
              f"count {est.count:.3f} relevant {est.relevant}")
    print(f"latency_ms: {report.latency_ms:.3f}")
    return 0


def cmd_query(args) -> int:
    model, cfg = engine.load_model(args.model_dir)
    cfg = _override_query_flags(cfg, args)
    if args.repl:
        for line in sys.stdin:
            sql = line.strip()
            if not sql or sql.startswith("--"):
                continue
            try:
                _run_one_query(model, cfg, sql)
            except USER_ERRORS as exc:
                print(f"error: {exc}", file=sys.stderr)
        return 0
    if not args.sql:
        raise ConfigError("query: provide SQL text or use --repl")
    return _run_one_query(model, cfg, args.sql)


def _override_query_flags(cfg: EngineConfig, args) -> EngineConfig:
    if args.method:
        cfg.method = args.method
    if args.samples is not None:
        cfg.samples = args.samples
    if args.seed is not None:
        cfg.seed = args.seed
    if args.sigma is not None:
        cfg.sigma = "all" if args.sigma == "all" else int(args.sigma)
    if args.no_propagation:
        cfg.propagate = False
    return cfg


def cmd_bench(args) -> int:
    models = {}
    model_bytes = {}
    catalog = None
    base_cfg = None
    for spec in args.models:
        if "=" in spec:
            label, _, path = spec.partition("=")
        else:
            label, path = Path(spec).name, spec
        model, cfg = engine.load_model(path, catalog)
        catalog = model.catalog
        base_cfg = base_cfg or cfg
        models[label] = model
        model_bytes[label] = storage.model_bytes(path)
    assert base_cfg is not None

    if args.workload:
        workload = [line.strip() for line in
                    Path(args.workload).read_text().splitlines()
                    if line.strip() and not line.startswith("--")]
    else:
        workload = generate_workload(
            catalog, n=args.generate,
            joins=(args.min_joins, args.max_joins),
            preds=(args.min_preds, args.max_preds),
            seed=args.seed if args.seed is not None else base_cfg.seed)

    report = run_benchmark(
        catalog, workload, models,
        sigma=base_cfg.sigma if args.sigma is None
        else ("all" if args.sigma == "all" else int(args.sigma)),
        method=args.method or base_cfg.method,
        samples=args.samples if args.samples is not None else base_cfg.samples,
        seed=args.seed if args.seed is not None else base_cfg.seed,
        propagate=not args.no_propagation,
        model_bytes=model_bytes)

    print(report.summary_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.tsv").write_text("\n".join(report.results_rows()) + "\n")
        (out / "timings.tsv").write_text("\n".join(report.timing_rows()) + "\n")
        (out / "summary.txt").write_text(report.summary_text() + "\n")
        print(f"report written to {out}")
    return 0


def cmd_stats(args) -> int:
    model, _ = engine.load_model(args.model_dir)
    for bubble in sorted(model.bubbles, key=lambda b: b.id):
        net = model.networks[bubble.id]
        print(f"bubble {bubble.id}: rows={bubble.n_rows} "
              f"relations={','.join(bubble.relations)}")
        if net.degenerate:
            print("  degenerate (empty bubble)")
            continue
        print(f"  node order: {' -> '.join(net.order)}")
        for node in net.order:
            parent = net.parent(node)
            cpt = net.cpts[node]
            shape = f"{cpt.counts.shape[0]}x{cpt.counts.shape[1]}"
            edge = f"{parent} -> {node}" if parent else f"root {node}"
            print(f"  {edge}: classes {shape}, stored entries {cpt.n_entries}")
    return 0


def cmd_parse(args) -> int:
    failures = 0
    if args.check:
        text = Path(args.check).read_text() if args.check != "-" \
            else sys.stdin.read()
        for lineno, line in enumerate(text.splitlines(), start=1):
            sql = line.strip()
            if not sql or sql.startswith("--"):
                continue
            try:
                parse_sql(sql)
                print(f"line {lineno}: ok")
            except ParseError as exc:
                failures += 1
                print(f"line {lineno}: {exc}")
        return 1 if failures else 0
    if not args.sql:
        raise ConfigError("parse: provide SQL text or --check FILE")
    ast = parse_sql(args.sql)
    print(ast)
    return 0


def _add_inference_flags(sub):
    sub.add_argument("--method", choices=("ve", "ps"), default=None,
                     help="inference algorithm (default from model config)")
    sub.add_argument("--samples", type=int, default=None,
                     help="sample count for --method ps (default 1000)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--sigma", default=None,
                     help="'all' or the number of bubble combinations")
    sub.add_argument("--no-propagation", action="store_true",
                     help="independence baseline instead of evidence chaining")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tuplebubbles",
        description="Approximate aggregation queries over bubble summaries")
    commands = parser.add_subparsers(dest="command", required=True)

    p_build = commands.add_parser("build", help="build and persist a model")
    p_build.add_argument("--config", required=True)
    p_build.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a config key")
    p_build.add_argument("--model-dir", default=None)
    p_build.set_defaults(func=cmd_build)

    p_query = commands.add_parser("query", help="estimate one query")
    p_query.add_argument("model_dir")
    p_query.add_argument("sql", nargs="?")
    p_query.add_argument("--repl", action="store_true",
                         help="read queries from stdin, one per line")
    _add_inference_flags(p_query)
    p_query.set_defaults(func=cmd_query)

    p_bench = commands.add_parser("bench", help="run a benchmark")
    p_bench.add_argument("models", nargs="+", metavar="LABEL=MODEL_DIR")
    p_bench.add_argument("--workload", help="file with one query per line")
    p_bench.add_argument("--generate", type=int, default=100,
                         help="generate this many queries instead")
    p_bench.add_argument("--min-joins", type=int, default=0)
    p_bench.add_argument("--max-joins", type=int, default=0)
    p_bench.add_argument("--min-preds", type=int, default=2)
    p_bench.add_argument("--max-preds", type=int, default=5)
    p_bench.add_argument("--out", help="directory for report files")
    _add_inference_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_stats = commands.add_parser("stats", help="print model statistics")
    p_stats.add_argument("model_dir")
    p_stats.set_defaults(func=cmd_stats)

    p_parse = commands.add_parser("parse", help="parse or lint queries")
    p_parse.add_argument("sql", nargs="?")
    p_parse.add_argument("--check", metavar="FILE",
                         help="lint a workload file ('-' for stdin)")
    p_parse.set_defaults(func=cmd_parse)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
