#!/usr/bin/env python3
"""Evaluate a model (or the built-in checker) on a dataset and score it.

Remote endpoint (credential read from the SOS_API_KEY environment variable,
never from files or flags):

    export SOS_API_KEY=...
    python scripts/run_eval.py --dataset data/suite.jsonl \
        --endpoint https://host/v1/chat/completions --model my-model \
        --prompt reasoning --out results/preds.jsonl

Local checker baseline (no network):

    python scripts/run_eval.py --dataset data/suite.jsonl --out results/preds.jsonl

Predictions are appended as JSONL; rerunning resumes after an interruption
without re-querying completed records. The accuracy report (valid and total)
is printed and written next to the predictions.
"""

import argparse
import json
from pathlib import Path

from soskit.dataset import load_records
from soskit.harness import (
    EndpointConfig,
    PromptKind,
    load_predictions,
    run_local_eval,
    run_remote_eval,
    score,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--prompt", choices=[k.value for k in PromptKind], default="reasoning")
    ap.add_argument("--endpoint", default=None, help="chat-completion URL; omit for local checker")
    ap.add_argument("--model", default="default")
    ap.add_argument("--timeout", type=float, default=600.0)
    ap.add_argument("--concurrency", type=int, default=4)
    ap.add_argument("--temperature", type=float, default=None)
    args = ap.parse_args()

    records = load_records(args.dataset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.endpoint:
        cfg = EndpointConfig(
            url=args.endpoint,
            model=args.model,
            timeout=args.timeout,
            concurrency=args.concurrency,
            temperature=args.temperature,
        )
        run_remote_eval(records, PromptKind(args.prompt), cfg, out)
    else:
        preds = run_local_eval(
            records,
            progress=lambda i, n: print(f"\r{i}/{n}", end="", flush=True),
        )
        print()
        with out.open("w", encoding="utf-8") as fh:
            for p in preds:
                fh.write(p.to_json_line() + "\n")

    preds = load_predictions(out)
    report = score(preds, records)
    report_path = out.with_suffix(".report.json")
    report_path.write_text(json.dumps(report.to_json(), indent=2) + "\n")
    print(report.to_markdown())
    print(f"\nreport: {report_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
