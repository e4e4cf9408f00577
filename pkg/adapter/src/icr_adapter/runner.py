"""icr-adapter command line: batch dump production and the stdio protocol.

batch mode reads a JSONL manifest, one request per line:

    {"query_id": "q1", "query": "...", "docs": [{"id": "d1", "text": "..."}],
     "calibrated": true}

and writes ICRA dumps (real + null pass when calibrated) plus a latency CSV.

serve mode answers engine requests on stdin with one JSON line each:

    {"op": "select"|"score_list", "mode": "likelihood"|"generation",
     "query_id": ..., "query": ..., "docs": [{"id", "text"}]}

Errors are reported inline as {"error": "..."} so one bad window cannot
kill a whole ranking run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from attnrank.core import Document, Query
from attnrank.dump import DumpStore
from attnrank.evaluation import latency_csv

from icr_adapter.prompts import DEFAULT_ICR_MAX_WORDS
from icr_adapter.runtime import ModelRuntime


def load_runtime(spec: str, seed: int = 0) -> ModelRuntime:
    """"tiny" builds the deterministic offline model; anything else is a
    transformers model name or local path."""
    if spec == "tiny":
        from icr_adapter.tiny import tiny_runtime

        return tiny_runtime(seed)
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(spec)
    model = AutoModelForCausalLM.from_pretrained(spec, attn_implementation="eager")

    class _HfTokenizer:
        def encode(self, text: str) -> list[int]:
            return tokenizer.encode(text, add_special_tokens=False)

        def decode(self, ids) -> str:
            return tokenizer.decode(list(ids))

    return ModelRuntime(model=model, tokenizer=_HfTokenizer(), model_name=spec)


def _docs_from(payload: dict) -> list[Document]:
    return [
        Document(id=d["id"], text=d.get("text", ""), initial_rank=i)
        for i, d in enumerate(payload["docs"])
    ]


def cmd_batch(args: argparse.Namespace) -> int:
    runtime = load_runtime(args.model, seed=args.seed)
    store = DumpStore(args.out_dir)
    samples = []
    manifest = Path(args.manifest)
    if not manifest.exists():
        print(f"error: manifest not found: {manifest}", file=sys.stderr)
        return 1
    n = 0
    for line in manifest.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        payload = json.loads(line)
        query = Query(payload["query_id"], payload.get("query", ""))
        pool = _docs_from(payload)
        calibrated = bool(payload.get("calibrated", True))
        if calibrated:
            real, null, lat = runtime.dump_pair(
                query, pool, max_words=args.max_words, early_exit_layer=args.early_exit
            )
            store.save_pair(real, null)
            samples.extend(lat)
        else:
            plan = runtime.plan(query, pool, null=False, max_words=args.max_words)
            real, sample = runtime.extract_attention(plan, args.early_exit)
            store.save(real)
            samples.append(sample)
        n += 1
    if args.latency_out:
        Path(args.latency_out).write_text(latency_csv(samples), encoding="utf-8")
    print(f"processed {n} queries -> {store.root}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from icr_adapter.setwise import score_list, setwise_answer

    runtime = load_runtime(args.model, seed=args.seed)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            query = Query(req["query_id"], req.get("query", ""))
            docs = _docs_from(req)
            mode = req.get("mode", "likelihood")
            if req["op"] == "select":
                winner, dist = setwise_answer(runtime, query, docs, mode)
                response: dict = {"winner": winner}
                if dist is not None:
                    response["distribution"] = {str(i): p for i, p in dist.items()}
            elif req["op"] == "score_list":
                response = {"scores": score_list(runtime, query, docs, mode)}
            else:
                response = {"error": f"unknown op {req.get('op')!r}"}
        except Exception as exc:  # protocol: errors go inline, stream survives
            response = {"error": str(exc)}
        print(json.dumps(response, sort_keys=True), flush=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icr-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("batch", help="manifest JSONL -> ICRA dumps + latency CSV")
    p.add_argument("--model", default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--latency-out", dest="latency_out")
    p.add_argument("--max-words", dest="max_words", type=int, default=DEFAULT_ICR_MAX_WORDS)
    p.add_argument("--early-exit", dest="early_exit", type=int, default=None,
                   help="run layers 0..N only (the interval upper bound)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("serve", help="answer engine JSONL requests on stdio")
    p.add_argument("--model", default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
