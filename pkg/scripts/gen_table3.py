#!/usr/bin/env python3
"""Generate the full 19-set labeled benchmark (1707 records) as JSONL.

Equivalent to `soskit gen --suite table3`, with convenient defaults:

    python scripts/gen_table3.py --out data/suite.jsonl --seed 42 --workers 4

Writes the dataset and a per-set markdown summary next to it.
"""

import argparse
import time
from pathlib import Path

from soskit.dataset import generate_suite, table3_manifest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/suite.jsonl")
    ap.add_argument("--summary", default=None)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument(
        "--sets", default=None, help="comma-separated subset of set ids (default: all)"
    )
    args = ap.parse_args()

    specs = table3_manifest(args.seed)
    if args.sets:
        wanted = set(args.sets.split(","))
        specs = [s for s in specs if s.test_set_id in wanted]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = args.summary or str(out) + ".summary.md"

    t0 = time.perf_counter()
    records = generate_suite(specs, out, summary, workers=args.workers)
    dt = time.perf_counter() - t0
    print(f"wrote {len(records)} records to {out} in {dt:.1f}s")
    print(f"summary: {summary}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
