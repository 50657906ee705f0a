"""Evaluation harness: prompt rendering, remote model querying, scoring.

Three instruction tiers of increasing guidance (plain question, concise
five-criterion list, full five-step reasoning walkthrough) are rendered
around a dataset record's polynomial text. Responses are reduced to a
binary verdict; records whose response yields no verdict (or that timed
out / failed transport) count as invalid. Accuracy is reported both over
valid samples and over all samples, so n_correct/n_valid >=
n_correct/n_total always.

Credentials are taken from the environment (SOS_API_KEY by default) and
never from configuration files.
"""

from __future__ import annotations

import enum
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

from soskit.checker import CheckerConfig, binary_label, classify
from soskit.dataset import DatasetRecord


class PromptKind(enum.Enum):
    PLAIN = "plain"
    SIMPLE = "simple"
    REASONING = "reasoning"


PLAIN_QUESTION = (
    "Please analyze if this polynomial can be expressed as a Sum of Squares (SOS)"
)

SIMPLE_INSTRUCTIONS = """\
Decide whether the polynomial below is a sum of squares (SOS).

Step 1: Examine if the highest degree is odd or even.
Step 2: For the even highest degree d, examine the coefficients of the \
highest-degree terms. Check for any negative values.
Step 3: Consider these special properties:
- Properties of quadratic polynomials.
- Properties of quartic polynomials in 1-2 variables.
- Properties of quartic homogeneous polynomials in 1-3 variables.
- Properties of even-degree univariate polynomials.
Step 4: Try direct sum of squares representation.
Step 5: Consider matrix methods if needed."""

REASONING_INSTRUCTIONS = """\
Decide whether the polynomial below is a sum of squares (SOS) by working \
through the following steps in order; stop as soon as a step settles the answer.

Step 1. Check the Degree: An SOS polynomial must have an even highest \
degree; any odd-degree polynomial cannot be a sum of squared polynomials. \
If the highest-degree univariate term (x1^d, ..., xn^d) has a negative \
coefficient, the polynomial is not SOS. A negative coefficient on a \
highest-degree cross term is allowed.

Step 2. Check for Non-negativity: SOS polynomials are nonnegative for all \
real inputs. Use a constant coefficient check (if the constant term is \
negative then p(0) < 0), grid evaluation at points such as (1,0,0,...), \
(0,1,0,...), leading order and dominant terms comparison, finding minima, \
and finding symmetry and translation (completing squares of a translated \
polynomial). A single point where the polynomial is negative proves it is \
not SOS.

Step 3. Check for Well-known Special Cases: Any nonnegative quadratic \
polynomial is SOS; any nonnegative quartic polynomial in one or two \
variables is SOS; any nonnegative quartic homogeneous polynomial in one, \
two, or three variables is SOS; any nonnegative even-degree univariate \
polynomial is SOS; any nonnegative polynomial with a quadratic term and \
quartic regularization is SOS.

Step 4. Check for Square Form: An SOS polynomial can be expressed as \
p(x) = sum_i q_i(x)^2 where each q_i is a polynomial. Look for an explicit \
rewriting as a sum of squared polynomials, keeping in mind the input may \
be an expanded form of such a sum.

Step 5. Check for Matrix Decomposition: Express the polynomial as \
p(x) = y^T Q y over a monomial basis y, where Q is a symmetric matrix. If \
some positive semidefinite Q exists (check its smallest eigenvalue), the \
polynomial is SOS; otherwise it is very likely not SOS."""

ANSWER_DIRECTIVE = (
    'End your response with a final line of exactly "ANSWER: SOS" or '
    '"ANSWER: NOT SOS".'
)

_INSTRUCTIONS = {
    PromptKind.PLAIN: PLAIN_QUESTION,
    PromptKind.SIMPLE: SIMPLE_INSTRUCTIONS,
    PromptKind.REASONING: REASONING_INSTRUCTIONS,
}


def render_prompt(record: DatasetRecord, kind: PromptKind) -> str:
    return (
        f"{_INSTRUCTIONS[kind]}\n\n"
        f"Polynomial:\n{record.polynomial}\n\n"
        f"{ANSWER_DIRECTIVE}"
    )


# ---- verdict extraction --------------------------------------------------------

_ANSWER_RE = re.compile(r"ANSWER\s*:\s*(NOT\s+SOS|SOS)", re.IGNORECASE)
_NEGATIVE_RE = re.compile(
    r"(is\s+not\s+(an?\s+)?(sos|sum\s+of\s+squares)"
    r"|not\s+an?\s+(sos|sum\s+of\s+squares)"
    r"|cannot\s+be\s+(expressed|written|represented)\s+as\s+a\s+sum\s+of\s+squares"
    r"|is\s+not\s+sos)",
    re.IGNORECASE,
)
_POSITIVE_RE = re.compile(
    r"(is\s+(an?\s+)?(valid\s+)?(sos|sum\s+of\s+squares)"
    r"|can\s+be\s+(expressed|written|represented)\s+as\s+a\s+sum\s+of\s+squares"
    r"|is\s+sos)",
    re.IGNORECASE,
)


def extract_verdict(response: str) -> str:
    """Reduce a free-text response to 'sos' / 'not_sos' / 'invalid'."""
    if not response:
        return "invalid"
    answers = _ANSWER_RE.findall(response)
    if answers:
        final = answers[-1].upper()
        return "not_sos" if "NOT" in final else "sos"
    # fall back to the last affirmative/negative phrasing in the text
    neg_spans = [m.span() for m in _NEGATIVE_RE.finditer(response)]
    pos = [
        m.start()
        for m in _POSITIVE_RE.finditer(response)
        # skip affirmative matches that sit inside a negated phrase
        if not any(a <= m.start() < b for a, b in neg_spans)
    ]
    last_neg = max((a for a, _ in neg_spans), default=-1)
    last_pos = max(pos, default=-1)
    if last_neg == -1 and last_pos == -1:
        return "invalid"
    return "not_sos" if last_neg > last_pos else "sos"


# ---- prediction records and scoring --------------------------------------------


@dataclass
class EvalRecord:
    record_id: str
    raw_response: str
    extracted: str  # "sos" | "not_sos" | "invalid"
    latency: float
    error: Optional[str] = None  # "timeout" | "transport" | None

    def to_json_line(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json_line(cls, line: str) -> "EvalRecord":
        return cls(**json.loads(line))


@dataclass
class AccuracyReport:
    n_total: int
    n_valid: int
    n_correct: int
    valid_accuracy: Optional[float]
    total_accuracy: float
    mean_latency: float
    per_set: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def to_markdown(self) -> str:
        va = f"{self.valid_accuracy:.1%}" if self.valid_accuracy is not None else "n/a"
        lines = [
            "| metric | value |",
            "|---|---|",
            f"| total samples | {self.n_total} |",
            f"| valid samples | {self.n_valid} |",
            f"| correct | {self.n_correct} |",
            f"| accuracy on valid samples | {va} |",
            f"| accuracy on total samples | {self.total_accuracy:.1%} |",
            f"| mean latency | {self.mean_latency:.2f} s |",
        ]
        if self.per_set:
            lines += [
                "",
                "| test set | total | valid | correct | valid acc | total acc |",
                "|---|---|---|---|---|---|",
            ]
            for sid, row in self.per_set.items():
                va = f"{row['valid_accuracy']:.1%}" if row["valid_accuracy"] is not None else "n/a"
                lines.append(
                    f"| {sid} | {row['n_total']} | {row['n_valid']} |"
                    f" {row['n_correct']} | {va} | {row['total_accuracy']:.1%} |"
                )
        return "\n".join(lines)


def score(predictions: Sequence[EvalRecord], dataset: Sequence[DatasetRecord]) -> AccuracyReport:
    by_id = {r.id: r for r in dataset}
    counts: dict[str, list[int]] = {}
    n_valid = n_correct = 0
    latencies = []
    for pred in predictions:
        if pred.record_id not in by_id:
            raise KeyError(f"prediction for unknown record id: {pred.record_id}")
        rec = by_id[pred.record_id]
        row = counts.setdefault(rec.test_set, [0, 0, 0])  # total, valid, correct
        row[0] += 1
        latencies.append(pred.latency)
        if pred.extracted in ("sos", "not_sos"):
            n_valid += 1
            row[1] += 1
            if pred.extracted == rec.label:
                n_correct += 1
                row[2] += 1
    n_total = len(predictions)
    per_set = {
        sid: {
            "n_total": t,
            "n_valid": v,
            "n_correct": c,
            "valid_accuracy": (c / v) if v else None,
            "total_accuracy": (c / t) if t else 0.0,
        }
        for sid, (t, v, c) in sorted(counts.items())
    }
    return AccuracyReport(
        n_total=n_total,
        n_valid=n_valid,
        n_correct=n_correct,
        valid_accuracy=(n_correct / n_valid) if n_valid else None,
        total_accuracy=(n_correct / n_total) if n_total else 0.0,
        mean_latency=sum(latencies) / len(latencies) if latencies else 0.0,
        per_set=per_set,
    )


# ---- remote evaluation -----------------------------------------------------------


@dataclass
class EndpointConfig:
    url: str
    model: str = "default"
    timeout: float = 600.0
    concurrency: int = 4
    transport_retries: int = 2
    api_key_env: str = "SOS_API_KEY"
    temperature: Optional[float] = None

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise RuntimeError(
                f"no API credential found in environment variable {self.api_key_env}"
            )
        return key


def _query_once(
    session: requests.Session, cfg: EndpointConfig, prompt: str, key: str
) -> tuple[str, Optional[str]]:
    """One chat-completion call; returns (response text, error kind)."""
    payload: dict = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
    }
    if cfg.temperature is not None:
        payload["temperature"] = cfg.temperature
    attempt = 0
    while True:
        try:
            resp = session.post(
                cfg.url,
                json=payload,
                headers={"Authorization": f"Bearer {key}"},
                timeout=cfg.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"], None
        except requests.Timeout:
            # matches the evaluation protocol: a timeout is an invalid
            # sample, not a retryable failure
            return "", "timeout"
        except (requests.RequestException, KeyError, ValueError) as exc:
            attempt += 1
            if attempt > cfg.transport_retries:
                return "", f"transport: {exc}"
            time.sleep(min(2.0 ** attempt, 10.0))


def run_remote_eval(
    dataset: Sequence[DatasetRecord],
    kind: PromptKind,
    cfg: EndpointConfig,
    out_path: str | Path,
) -> list[EvalRecord]:
    """Query the endpoint for every record, appending predictions as JSONL.

    Output is append-only; records already present in the file are skipped,
    so an interrupted run resumes without duplicate ids.
    """
    key = cfg.api_key()  # fail fast on missing credentials
    out_path = Path(out_path)
    done: dict[str, EvalRecord] = {}
    if out_path.exists():
        for line in out_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = EvalRecord.from_json_line(line)
                done[rec.record_id] = rec
    todo = [r for r in dataset if r.id not in done]

    def work(record: DatasetRecord) -> EvalRecord:
        with requests.Session() as session:
            t0 = time.monotonic()
            text, error = _query_once(session, cfg, render_prompt(record, kind), key)
            latency = time.monotonic() - t0
        extracted = extract_verdict(text) if error is None else "invalid"
        return EvalRecord(
            record_id=record.id,
            raw_response=text,
            extracted=extracted,
            latency=latency,
            error=error,
        )

    results = dict(done)
    with out_path.open("a", encoding="utf-8") as fh:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            futures = {pool.submit(work, r): r for r in todo}
            for fut in as_completed(futures):
                rec = fut.result()
                results[rec.record_id] = rec
                fh.write(rec.to_json_line() + "\n")
                fh.flush()
    return [results[r.id] for r in dataset if r.id in results]


def run_local_eval(
    dataset: Sequence[DatasetRecord],
    cfg: CheckerConfig | None = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> list[EvalRecord]:
    """Baseline predictions from the built-in checker (never times out)."""
    out = []
    for i, record in enumerate(dataset):
        t0 = time.monotonic()
        verdict = classify(record.polynomial, cfg)
        out.append(
            EvalRecord(
                record_id=record.id,
                raw_response=f"{verdict.label.value} (step {verdict.deciding_step})",
                extracted=binary_label(verdict),
                latency=time.monotonic() - t0,
            )
        )
        if progress:
            progress(i + 1, len(dataset))
    return out


def load_predictions(path: str | Path) -> list[EvalRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(EvalRecord.from_json_line(line))
    return out
