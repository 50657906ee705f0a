"""Command-line interface: check / certify / gen / eval / score.

Exit codes: 0 = SOS, 1 = NOT_SOS or LIKELY_NOT_SOS, 2 = UNKNOWN,
64 = usage error, 65 = parse error. `gen`, `eval`, and `score` exit 0 on
success and 64/65 on bad invocations or inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from soskit import checker, dataset, harness, parsing

EXIT_SOS = 0
EXIT_NOT_SOS = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 64
EXIT_PARSE = 65


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 64, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _checker_config(args: argparse.Namespace) -> checker.CheckerConfig:
    cfg = checker.CheckerConfig()
    if getattr(args, "seed", None) is not None:
        cfg.rng_seed = args.seed
    if getattr(args, "tol", None) is not None:
        cfg.negativity_tol = args.tol
        cfg.gram.res_tol = args.tol
    return cfg


def _label_exit(label: checker.Label) -> int:
    if label is checker.Label.SOS:
        return EXIT_SOS
    if label is checker.Label.UNKNOWN:
        return EXIT_UNKNOWN
    return EXIT_NOT_SOS


def _cmd_check(args: argparse.Namespace) -> int:
    try:
        verdict = checker.classify(args.polynomial, _checker_config(args))
    except parsing.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(f"{verdict.label.value} (step {verdict.deciding_step})")
    if args.trace:
        print(verdict.trace_text())
    return _label_exit(verdict.label)


def _cmd_certify(args: argparse.Namespace) -> int:
    try:
        verdict = checker.classify(args.polynomial, _checker_config(args))
    except parsing.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    payload: dict = {
        "label": verdict.label.value,
        "deciding_step": verdict.deciding_step,
    }
    if verdict.certificate is not None:
        from soskit.poly import canonical_text

        payload["certificate"] = {
            "squares": [canonical_text(q) for q in verdict.certificate.squares],
            "reconstruction_residual": verdict.certificate.reconstruction_residual,
        }
    if verdict.witness is not None:
        payload["witness"] = list(verdict.witness)
        payload["witness_value"] = verdict.trace[verdict.deciding_step - 1].witness_value
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return _label_exit(verdict.label)


def _cmd_gen(args: argparse.Namespace) -> int:
    if args.suite != "table3":
        print(f"unknown suite: {args.suite}", file=sys.stderr)
        return EXIT_USAGE
    specs = dataset.table3_manifest(args.seed)
    if args.sets:
        wanted = set(args.sets.split(","))
        specs = [s for s in specs if s.test_set_id in wanted]
        if not specs:
            print(f"no test sets match: {args.sets}", file=sys.stderr)
            return EXIT_USAGE
    summary = args.summary or (str(args.out) + ".summary.md")
    records = dataset.generate_suite(specs, args.out, summary, workers=args.workers)
    print(f"wrote {len(records)} records to {args.out}")
    print(f"summary: {summary}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    try:
        records = dataset.load_records(args.dataset)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"cannot read dataset: {exc}", file=sys.stderr)
        return EXIT_PARSE
    kind = harness.PromptKind(args.prompt)
    if args.endpoint:
        cfg = harness.EndpointConfig(
            url=args.endpoint,
            model=args.model,
            timeout=args.timeout,
            concurrency=args.concurrency,
        )
        try:
            preds = harness.run_remote_eval(records, kind, cfg, args.out)
        except RuntimeError as exc:  # missing credentials / config failure
            print(str(exc), file=sys.stderr)
            return EXIT_USAGE
    else:
        preds = harness.run_local_eval(records, _checker_config(args))
        with open(args.out, "w", encoding="utf-8") as fh:
            for p in preds:
                fh.write(p.to_json_line() + "\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        records = dataset.load_records(args.dataset)
        preds = harness.load_predictions(args.predictions)
        report = harness.score(preds, records)
    except (OSError, json.JSONDecodeError, TypeError, KeyError) as exc:
        print(f"scoring failed: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(json.dumps(report.to_json(), indent=2))
    print()
    print(report.to_markdown())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soskit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="classify a polynomial")
    p_check.add_argument("polynomial")
    p_check.add_argument("--trace", action="store_true", help="print the full step trace")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--tol", type=float, default=None)
    p_check.set_defaults(func=_cmd_check)

    p_cert = sub.add_parser("certify", help="write a certificate or witness as JSON")
    p_cert.add_argument("polynomial")
    p_cert.add_argument("--out", default=None)
    p_cert.add_argument("--seed", type=int, default=None)
    p_cert.add_argument("--tol", type=float, default=None)
    p_cert.set_defaults(func=_cmd_certify)

    p_gen = sub.add_parser("gen", help="generate a labeled dataset")
    p_gen.add_argument("--suite", default="table3")
    p_gen.add_argument("--sets", default=None, help="comma-separated subset of set ids")
    p_gen.add_argument("--seed", type=int, default=42)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--summary", default=None)
    p_gen.add_argument("--workers", type=int, default=1)
    p_gen.set_defaults(func=_cmd_gen)

    p_eval = sub.add_parser("eval", help="produce predictions for a dataset")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--prompt", choices=["plain", "simple", "reasoning"], default="reasoning")
    p_eval.add_argument("--endpoint", default=None, help="chat-completion URL; omit for the local checker")
    p_eval.add_argument("--model", default="default")
    p_eval.add_argument("--timeout", type=float, default=600.0)
    p_eval.add_argument("--concurrency", type=int, default=4)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--tol", type=float, default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_score = sub.add_parser("score", help="score predictions against a dataset")
    p_score.add_argument("--dataset", required=True)
    p_score.add_argument("--predictions", required=True)
    p_score.set_defaults(func=_cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
