"""attnrank command line: batch scoring, sweeps, ranking, and figure export.

Every subcommand is reproducible: the same flags, inputs, and seed produce
byte-identical outputs (wall-clock timings never enter any output file).
Experiment parameters may also come from one JSON config file via
``--config``; explicit flags override config values.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from attnrank.core import Document, LayerInterval, Query, RankedList
from attnrank.dump import AttentionDump, DumpStore
from attnrank.evaluation import (
    emit_run,
    mean_ndcg_at_k,
    ndcg_at_k,
    parse_qrels,
    parse_run,
)
from attnrank.frameworks import (
    listwise_single,
    listwise_sliding,
    setwise_bubblesort,
    setwise_heapsort,
)
from attnrank.layers import (
    PeakReport,
    build_peak_report,
    curve_csv,
    parse_curve_csv,
    per_layer_metrics,
    select_interval,
)
from attnrank.scorers import (
    AdapterClient,
    AttentionDumpScorer,
    SyntheticOracle,
    synthetic_list_scorer,
)
from attnrank.scoring import pool_from_dump, score_icr
from attnrank.synth import SynthConfig, gen_corpus, run_study, study_csv
from attnrank import charts


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("ATTNRANK_JOBS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return p.read_text(encoding="utf-8")


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _merge_config(args: argparse.Namespace) -> dict:
    """Config file supplies defaults; explicitly passed flags win."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(json.loads(_read_text(args.config)))
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "func"):
            merged[key] = value
    return merged


def _require(cfg: dict, key: str, flag: str):
    if key not in cfg or cfg[key] is None:
        raise SystemExit(f"error: missing required option {flag}")
    return cfg[key]


def _full_pool_pairs(store: DumpStore) -> list[tuple[AttentionDump, AttentionDump]]:
    """One (real, null) pair per query; the widest doc subset wins."""
    best: dict[str, tuple[AttentionDump, AttentionDump]] = {}
    for real, null in store.iter_pairs():
        prev = best.get(real.query_id)
        if prev is None or len(real.doc_ids) > len(prev[0].doc_ids):
            best[real.query_id] = (real, null)
    return [best[q] for q in sorted(best)]


def _peak_report(cfg: dict, total_layers: int) -> PeakReport:
    smooth = int(cfg.get("smooth", 1))
    if cfg.get("peaks"):
        peaks = [int(p) for p in str(cfg["peaks"]).split(",")]
        return PeakReport(
            per_dataset_peaks={f"input{i}": p for i, p in enumerate(peaks)},
            total_layers=total_layers,
        )
    if cfg.get("curves"):
        curves = [
            parse_curve_csv(_read_text(path), dataset_id=Path(path).stem)
            for path in cfg["curves"]
        ]
        return build_peak_report(curves, smoothing_window=smooth)
    raise SystemExit("error: need --peaks or --curves to locate peak layers")


def _resolve_interval(cfg: dict, num_layers: int) -> LayerInterval:
    spec = str(cfg.get("interval") or "all")
    if spec == "all":
        return LayerInterval(0, num_layers - 1)
    if spec == "peak":
        report = _peak_report(cfg, num_layers)
        if len(report.peak_set) != 1:
            raise SystemExit(
                f"error: 'peak' interval needs exactly one peak, got {sorted(report.peak_set)}"
            )
        peak = next(iter(report.peak_set))
        return LayerInterval(peak, peak)
    if spec.startswith("selective:"):
        w = int(spec.split(":", 1)[1])
        return select_interval(_peak_report(cfg, num_layers), w)
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        interval = LayerInterval(int(lo), int(hi))
        if interval.hi >= num_layers:
            raise SystemExit(f"error: interval {interval} out of range for {num_layers} layers")
        return interval
    raise SystemExit(f"error: bad interval spec {spec!r}")


# ---------------------------------------------------------------- score


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    store = DumpStore(_require(cfg, "dumps", "--dumps"))
    pairs = _full_pool_pairs(store)
    if not pairs:
        raise SystemExit(f"error: no dump pairs found under {store.root}")
    calibrated = not cfg.get("no_calibration", False)
    interval = _resolve_interval(cfg, pairs[0][0].num_layers)
    tag = cfg.get("tag") or f"attention-{'cal' if calibrated else 'nocal'}{interval}"

    def one(pair):
        real, null = pair
        return score_icr(real, null if calibrated else None, interval,
                         pool_from_dump(real), method_tag=tag)

    ranked = _pmap(one, pairs, int(cfg.get("jobs", _default_jobs())))
    _write_output(emit_run(ranked, tag), cfg.get("out"))
    return 0


# ---------------------------------------------------------------- sweep


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    store = DumpStore(_require(cfg, "dumps", "--dumps"))
    qrels = parse_qrels(_read_text(_require(cfg, "qrels", "--qrels")))
    dataset_id = cfg.get("dataset_id", "default")
    k = int(cfg.get("k", 10))
    out_dir = Path(_require(cfg, "out_dir", "--out-dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    by_model: dict[str, list] = {}
    for pair in _full_pool_pairs(store):
        by_model.setdefault(pair[0].model_name, []).append(pair)
    if not by_model:
        raise SystemExit(f"error: no dump pairs found under {store.root}")
    for model in sorted(by_model):
        curve = per_layer_metrics(by_model[model], qrels, k=k, dataset_id=dataset_id)
        safe_model = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in model)
        path = out_dir / f"{safe_model}__{dataset_id}.csv"
        path.write_text(curve_csv(curve), encoding="utf-8")
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- select-interval


def cmd_select_interval(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    total_layers = int(_require(cfg, "layers", "--layers"))
    w = int(_require(cfg, "w", "-w"))
    report = _peak_report(cfg, total_layers)
    interval = select_interval(report, w)
    lo, hi = min(report.peak_set), max(report.peak_set)
    center = (total_layers - 1) / 2
    midpoint = (lo + hi) / 2
    direction = (
        "peak set in later half -> anchors upper bound, extends toward center (downward)"
        if midpoint >= center
        else "peak set in earlier half -> anchors lower bound, extends toward center (upward)"
    )
    print(f"{interval.lo} {interval.hi}")
    print(f"# peaks={sorted(report.peak_set)} total_layers={total_layers} w={w}")
    print(f"# center={center} peak_midpoint={midpoint}")
    print(f"# {direction}")
    return 0


# ---------------------------------------------------------------- rank


def _parse_framework(spec: str) -> tuple[str, list[int]]:
    name, _, rest = spec.partition(":")
    params = [int(x) for x in rest.split(",")] if rest else []
    if name == "single" and not params:
        return name, []
    if name == "sliding" and len(params) == 2:
        return name, params
    if name in ("heapsort", "bubblesort") and len(params) == 2:
        return name, params
    raise SystemExit(f"error: bad framework spec {spec!r} "
                     "(single | sliding:ws,step | heapsort:c,k | bubblesort:c,k)")


def _load_pools(path: str) -> dict[str, tuple[Query, list[Document]]]:
    data = json.loads(_read_text(path))
    pools = {}
    for item in data:
        docs = [
            Document(id=d["id"], text=d.get("text", ""), initial_rank=i)
            for i, d in enumerate(item["docs"])
        ]
        pools[item["query_id"]] = (Query(item["query_id"], item.get("query_text", "")), docs)
    return pools


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    scorer_spec = str(_require(cfg, "scorer", "--scorer"))
    framework, params = _parse_framework(str(_require(cfg, "framework", "--framework")))
    tag = cfg.get("tag") or f"{scorer_spec}|{cfg.get('framework')}"

    pools: dict[str, tuple[Query, list[Document]]] = {}
    store = None
    if cfg.get("pools"):
        pools = _load_pools(cfg["pools"])
    if cfg.get("dumps"):
        store = DumpStore(cfg["dumps"])
        if not pools:
            for real, _ in _full_pool_pairs(store):
                pools[real.query_id] = (Query(real.query_id), pool_from_dump(real))
    if not pools:
        raise SystemExit("error: need --dumps and/or --pools to define candidate pools")

    client = None
    jobs = int(cfg.get("jobs", _default_jobs()))
    if scorer_spec in ("attention", "attention-nocal"):
        if store is None:
            raise SystemExit("error: attention scorers require --dumps")
        sample = next(iter(store.iter_dumps()), None)
        if sample is None:
            raise SystemExit(f"error: no dumps under {store.root}")
        interval = (
            _resolve_interval(cfg, sample.num_layers) if cfg.get("interval") else None
        )
        backend = AttentionDumpScorer(store, interval, calibrated=scorer_spec == "attention")
        list_scorer, set_oracle = backend.list_scorer(), backend.set_oracle()
    elif scorer_spec == "synthetic":
        qrels = parse_qrels(_read_text(_require(cfg, "qrels", "--qrels")))
        list_scorer = synthetic_list_scorer(qrels)
        set_oracle = SyntheticOracle(
            qrels,
            error_rate=float(cfg.get("oracle_error_rate", 0.0)),
            seed=int(cfg.get("seed", 0)),
        ).set_oracle()
    elif scorer_spec.startswith("adapter:"):
        mode = scorer_spec.split(":", 1)[1]
        if mode not in ("likelihood", "generation"):
            raise SystemExit(f"error: unknown adapter mode {mode!r}")
        cmd = _require(cfg, "adapter_cmd", "--adapter-cmd")
        client = AdapterClient(shlex.split(str(cmd)))
        list_scorer, set_oracle = client.list_scorer(mode), client.set_oracle(mode)
        jobs = 1  # one adapter process, strictly serialized requests
    else:
        raise SystemExit(f"error: unknown scorer {scorer_spec!r}")

    def one(query_id: str):
        query, pool = pools[query_id]
        if framework == "single":
            ranked, stats = listwise_single(query, pool, list_scorer)
        elif framework == "sliding":
            ranked, stats = listwise_sliding(query, pool, list_scorer, *params)
        elif framework == "heapsort":
            ranked, stats = setwise_heapsort(query, pool, set_oracle, *params)
        else:
            ranked, stats = setwise_bubblesort(query, pool, set_oracle, *params)
        return RankedList(ranked.query_id, ranked.entries, method_tag=tag), stats

    try:
        results = _pmap(one, sorted(pools), jobs)
    finally:
        if client is not None:
            client.close()
    ranked_lists = [r for r, _ in results]
    _write_output(emit_run(ranked_lists, tag), cfg.get("out"))
    if cfg.get("stats_out"):
        lines = ["query_id,oracle_calls,forward_passes,docs_touched"]
        for (ranked, stats) in results:
            lines.append(
                f"{ranked.query_id},{stats.oracle_calls},{stats.forward_passes},{stats.docs_touched}"
            )
        Path(cfg["stats_out"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    run = parse_run(_read_text(_require(cfg, "run", "--run")))
    qrels = parse_qrels(_read_text(_require(cfg, "qrels", "--qrels")))
    k = int(cfg.get("k", 10))
    gain = cfg.get("gain", "linear")
    for ranked in run:
        print(f"{ranked.query_id}\t{ndcg_at_k(ranked, qrels, k, gain):.4f}")
    print(f"nDCG@{k} = {mean_ndcg_at_k(run, qrels, k, gain):.4f}")
    return 0


# ---------------------------------------------------------------- simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    synth_kwargs = {}
    if cfg.get("synth_config"):
        synth_kwargs = json.loads(_read_text(cfg["synth_config"]))
    overrides = {
        "seed": cfg.get("seed"),
        "num_queries": cfg.get("num_queries"),
        "num_docs": cfg.get("num_docs"),
        "peak_layer": cfg.get("peak_layer"),
        "num_layers": cfg.get("num_layers"),
    }
    synth_kwargs.update({k: int(v) for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(synth_kwargs) - known
    if unknown:
        raise SystemExit(f"error: unknown simulator config fields {sorted(unknown)}")
    scfg = SynthConfig(**synth_kwargs)

    if cfg.get("dumps_out") or cfg.get("qrels_out"):
        pairs, qrels = gen_corpus(scfg)
        if cfg.get("dumps_out"):
            store = DumpStore(cfg["dumps_out"])
            for real, null in pairs:
                store.save_pair(real, null)
            print(f"wrote {2 * len(pairs)} dumps to {store.root}")
        if cfg.get("qrels_out"):
            lines = [
                f"{q} 0 {d} {g}" for (q, d), g in sorted(qrels.grades.items())
            ]
            Path(cfg["qrels_out"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
            print(f"wrote qrels to {cfg['qrels_out']}")

    policies = str(cfg.get("policies", "all,selective:4,peak")).split(",")
    rows = run_study(scfg, policies, k=int(cfg.get("k", 10)))
    _write_output(study_csv(rows), cfg.get("out"))
    return 0


# ---------------------------------------------------------------- export-curves


def cmd_export_curves(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    paths = _require(cfg, "curves", "--curves")
    series = []
    for path in paths:
        curve = parse_curve_csv(_read_text(path), dataset_id=Path(path).stem)
        series.append((curve.dataset_id, list(curve.per_layer_metric)))
    svg = charts.line_chart(series, title=cfg.get("title", ""), y_label=cfg.get("y_label", "nDCG@10"))
    _write_output(svg, cfg.get("out"))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnrank",
        description="Attention-dump re-ranking engine, layer probe, and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("--jobs", type=int, help="parallel query workers (env ATTNRANK_JOBS)")

    p = sub.add_parser("score", help="score dump pairs into a TREC run file")
    common(p)
    p.add_argument("--dumps", help="directory of ICRA dumps")
    p.add_argument("--interval", help="lo:hi | all | peak | selective:w")
    p.add_argument("--peaks", help="comma-separated peak layers (for peak/selective)")
    p.add_argument("--curves", nargs="+", help="curve CSVs (for peak/selective)")
    p.add_argument("--smooth", type=int, help="odd smoothing window for curve peaks")
    p.add_argument("--no-calibration", action="store_const", const=True, dest="no_calibration")
    p.add_argument("--tag", help="run tag")
    p.add_argument("--out", help="output run file (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="per-layer nDCG curves from dumps + qrels")
    common(p)
    p.add_argument("--dumps")
    p.add_argument("--qrels")
    p.add_argument("-k", type=int, dest="k")
    p.add_argument("--dataset-id", dest="dataset_id")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("select-interval", help="center-biased interval from peak layers")
    common(p)
    p.add_argument("--peaks", help="comma-separated peak layers, e.g. 18,21")
    p.add_argument("--curves", nargs="+", help="curve CSVs to take peaks from")
    p.add_argument("--smooth", type=int)
    p.add_argument("--layers", type=int, help="total layer count")
    p.add_argument("-w", type=int, dest="w", help="window size")
    p.set_defaults(func=cmd_select_interval)

    p = sub.add_parser("rank", help="run a ranking framework over a scorer")
    common(p)
    p.add_argument("--dumps")
    p.add_argument("--pools", help="JSON candidate pools with document text")
    p.add_argument("--framework", help="single | sliding:ws,step | heapsort:c,k | bubblesort:c,k")
    p.add_argument("--scorer",
                   help="attention | attention-nocal | synthetic | adapter:likelihood | adapter:generation")
    p.add_argument("--interval", help="layer interval for attention scorers")
    p.add_argument("--peaks")
    p.add_argument("--curves", nargs="+")
    p.add_argument("--smooth", type=int)
    p.add_argument("--qrels", help="qrels (synthetic scorer)")
    p.add_argument("--adapter-cmd", dest="adapter_cmd", help="adapter subprocess command line")
    p.add_argument("--oracle-error-rate", type=float, dest="oracle_error_rate")
    p.add_argument("--seed", type=int)
    p.add_argument("--tag")
    p.add_argument("--out")
    p.add_argument("--stats-out", dest="stats_out", help="CSV of per-query comparison stats")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="nDCG@k of a run file against qrels")
    common(p)
    p.add_argument("--run")
    p.add_argument("--qrels")
    p.add_argument("-k", type=int, dest="k")
    p.add_argument("--gain", choices=("linear", "exp"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="synthetic layer-signal study")
    common(p)
    p.add_argument("--synth-config", dest="synth_config", help="JSON SynthConfig")
    p.add_argument("--policies", help="comma list: all | peak | selective:w")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-queries", type=int, dest="num_queries")
    p.add_argument("--num-docs", type=int, dest="num_docs")
    p.add_argument("--num-layers", type=int, dest="num_layers")
    p.add_argument("--peak-layer", type=int, dest="peak_layer")
    p.add_argument("-k", type=int, dest="k")
    p.add_argument("--dumps-out", dest="dumps_out", help="export generated ICRA dumps here")
    p.add_argument("--qrels-out", dest="qrels_out", help="export generated qrels here")
    p.add_argument("--out", help="study CSV (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-curves", help="render curve CSVs as an SVG line chart")
    common(p)
    p.add_argument("--curves", nargs="+")
    p.add_argument("--title")
    p.add_argument("--y-label", dest="y_label")
    p.add_argument("--out", help="output SVG (default stdout)")
    p.set_defaults(func=cmd_export_curves)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
