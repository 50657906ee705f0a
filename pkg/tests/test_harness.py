"""Tests for the evaluation harness: prompts, verdict extraction, scoring, HTTP."""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from soskit.dataset import DatasetRecord
from soskit.harness import (
    ANSWER_DIRECTIVE,
    EndpointConfig,
    EvalRecord,
    PromptKind,
    extract_verdict,
    load_predictions,
    render_prompt,
    run_local_eval,
    run_remote_eval,
    score,
)


def _record(rid="t-0001", poly="x1^2 + 1", label="sos", test_set="t"):
    return DatasetRecord(
        id=rid,
        test_set=test_set,
        polynomial=poly,
        n_vars=1,
        degree=2,
        label=label,
        difficulty="easy",
        length_chars=len(poly),
        justification="fixture",
        provenance={},
    )


class TestPrompts:
    def test_plain_tier_is_a_bare_question(self):
        text = render_prompt(_record(), PromptKind.PLAIN)
        assert (
            "Please analyze if this polynomial can be expressed as a "
            "Sum of Squares (SOS)" in text
        )
        assert "Step 1" not in text

    def test_simple_tier_lists_checks_without_walkthrough(self):
        text = render_prompt(_record(), PromptKind.SIMPLE)
        assert "Examine if the highest degree is odd or even" in text
        assert "Check the Degree" not in text

    def test_reasoning_tier_contains_all_five_step_headers(self):
        text = render_prompt(_record(), PromptKind.REASONING)
        for header in (
            "Check the Degree",
            "Check for Non-negativity",
            "Check for Well-known Special Cases",
            "Check for Square Form",
            "Check for Matrix Decomposition",
        ):
            assert header in text

    @pytest.mark.parametrize("kind", list(PromptKind))
    def test_every_tier_embeds_polynomial_once_and_demands_answer(self, kind):
        rec = _record(poly="7.5*x1^4 - 2*x1^2*x2^2 + x2^4")
        text = render_prompt(rec, kind)
        assert text.count(rec.polynomial) == 1
        assert ANSWER_DIRECTIVE in text
        assert render_prompt(rec, kind) == text  # deterministic


class TestExtractVerdict:
    @pytest.mark.parametrize(
        "response, expected",
        [
            ("blah blah\nANSWER: SOS", "sos"),
            ("blah blah\nANSWER: NOT SOS", "not_sos"),
            ("answer:  not   sos", "not_sos"),
            ("ANSWER: SOS\n...wait...\nANSWER: NOT SOS", "not_sos"),
            ("the polynomial is a sum of squares.", "sos"),
            ("therefore it is not a sum of squares", "not_sos"),
            ("it cannot be written as a sum of squares", "not_sos"),
            ("clearly this is SOS", "sos"),
            ("", "invalid"),
            ("I am not sure about this one.", "invalid"),
            ("degrees are even and coefficients positive", "invalid"),
        ],
    )
    def test_cases(self, response, expected):
        assert extract_verdict(response) == expected

    def test_answer_line_wins_over_prose(self):
        text = "It looks like it is not a sum of squares... ANSWER: SOS"
        assert extract_verdict(text) == "sos"


class TestScore:
    def _dataset(self, n_sos, n_not):
        recs = [_record(f"a-{i:04d}", label="sos", test_set="a") for i in range(n_sos)]
        recs += [_record(f"b-{i:04d}", label="not_sos", test_set="b") for i in range(n_not)]
        return recs

    def test_valid_and_total_accuracy(self):
        # 340 predictions, 234 valid, 190 correct
        dataset = self._dataset(340, 0)
        preds = []
        for i, r in enumerate(dataset):
            if i < 190:
                ext = "sos"  # correct
            elif i < 234:
                ext = "not_sos"  # valid but wrong
            else:
                ext = "invalid"
            preds.append(EvalRecord(r.id, "", ext, latency=0.5))
        report = score(preds, dataset)
        assert (report.n_total, report.n_valid, report.n_correct) == (340, 234, 190)
        assert report.valid_accuracy == pytest.approx(190 / 234)
        assert report.total_accuracy == pytest.approx(190 / 340)
        assert "81.2%" in report.to_markdown()
        assert "55.9%" in report.to_markdown()

    def test_unknown_record_id_rejected(self):
        with pytest.raises(KeyError):
            score([EvalRecord("nope-0000", "", "sos", 0.0)], self._dataset(1, 0))

    def test_all_invalid_yields_no_valid_accuracy(self):
        dataset = self._dataset(2, 0)
        preds = [EvalRecord(r.id, "", "invalid", 0.0) for r in dataset]
        report = score(preds, dataset)
        assert report.valid_accuracy is None
        assert report.total_accuracy == 0.0
        assert "n/a" in report.to_markdown()

    def test_per_set_breakdown(self):
        dataset = self._dataset(2, 2)
        preds = [EvalRecord(r.id, "", "sos", 0.1) for r in dataset]
        report = score(preds, dataset)
        assert report.per_set["a"]["n_correct"] == 2
        assert report.per_set["b"]["n_correct"] == 0
        assert report.per_set["b"]["valid_accuracy"] == 0.0


class TestLocalEval:
    def test_checker_baseline_on_tiny_dataset(self):
        dataset = [
            _record("x-0000", "x1^2 + 1", label="sos", test_set="x"),
            _record("x-0001", "x1^3 + 1", label="not_sos", test_set="x"),
        ]
        preds = run_local_eval(dataset)
        assert [p.extracted for p in preds] == ["sos", "not_sos"]
        report = score(preds, dataset)
        assert report.valid_accuracy == 1.0


class _Responder(BaseHTTPRequestHandler):
    """Chat-completion stub; behavior keyed off the polynomial in the prompt."""

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        prompt = body["messages"][0]["content"]
        self.server.seen_auth.append(self.headers.get("Authorization"))
        if "HANG" in prompt:
            time.sleep(2.0)  # answer too late: client times out
        answer = "ANSWER: SOS" if "x1^2" in prompt else "ANSWER: NOT SOS"
        payload = json.dumps(
            {"choices": [{"message": {"content": f"Thinking...\n{answer}"}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # silence test output
        pass


@pytest.fixture()
def stub_endpoint():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Responder)
    server.seen_auth = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    thread.join()


class TestRemoteEval:
    def _cfg(self, server, **kw):
        url = f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
        return EndpointConfig(url=url, model="stub", concurrency=2, **kw)

    def test_missing_credential_fails_fast(self, stub_endpoint, tmp_path, monkeypatch):
        monkeypatch.delenv("SOS_API_KEY", raising=False)
        with pytest.raises(RuntimeError, match="SOS_API_KEY"):
            run_remote_eval([_record()], PromptKind.PLAIN,
                            self._cfg(stub_endpoint), tmp_path / "p.jsonl")

    def test_round_trip_with_stub_model(self, stub_endpoint, tmp_path, monkeypatch):
        monkeypatch.setenv("SOS_API_KEY", "test-key")
        dataset = [
            _record("x-0000", "x1^2 + 1", label="sos", test_set="x"),
            _record("y-0000", "x2^4 - 1", label="not_sos", test_set="y"),
        ]
        out = tmp_path / "preds.jsonl"
        preds = run_remote_eval(dataset, PromptKind.SIMPLE,
                                self._cfg(stub_endpoint), out)
        assert [p.extracted for p in preds] == ["sos", "not_sos"]
        assert all(a == "Bearer test-key" for a in stub_endpoint.seen_auth)
        report = score(preds, dataset)
        assert report.n_valid == 2 and report.valid_accuracy == 1.0
        assert load_predictions(out) == sorted(preds, key=lambda p: p.record_id) or \
            {p.record_id for p in load_predictions(out)} == {"x-0000", "y-0000"}

    def test_timeout_counts_as_invalid_without_retry(
        self, stub_endpoint, tmp_path, monkeypatch
    ):
        monkeypatch.setenv("SOS_API_KEY", "test-key")
        dataset = [_record("h-0000", "HANG + x1^2", test_set="h")]
        cfg = self._cfg(stub_endpoint, timeout=0.5)
        preds = run_remote_eval(dataset, PromptKind.PLAIN, cfg, tmp_path / "p.jsonl")
        assert preds[0].extracted == "invalid"
        assert preds[0].error == "timeout"
        assert len(stub_endpoint.seen_auth) == 1  # no retry after a timeout

    def test_resume_skips_completed_records(self, stub_endpoint, tmp_path, monkeypatch):
        monkeypatch.setenv("SOS_API_KEY", "test-key")
        dataset = [
            _record("x-0000", "x1^2 + 1", label="sos", test_set="x"),
            _record("y-0000", "x2^4 - 1", label="not_sos", test_set="y"),
        ]
        out = tmp_path / "preds.jsonl"
        run_remote_eval(dataset[:1], PromptKind.PLAIN, self._cfg(stub_endpoint), out)
        n_first = len(stub_endpoint.seen_auth)
        preds = run_remote_eval(dataset, PromptKind.PLAIN, self._cfg(stub_endpoint), out)
        assert len(stub_endpoint.seen_auth) == n_first + 1  # only y-0000 queried
        assert {p.record_id for p in preds} == {"x-0000", "y-0000"}
        ids = [p.record_id for p in load_predictions(out)]
        assert len(ids) == len(set(ids)) == 2

    def test_transport_error_is_retried_then_reported(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOS_API_KEY", "test-key")
        cfg = EndpointConfig(
            url="http://127.0.0.1:1/unreachable", transport_retries=1, timeout=0.5
        )
        preds = run_remote_eval(
            [_record()], PromptKind.PLAIN, cfg, tmp_path / "p.jsonl"
        )
        assert preds[0].extracted == "invalid"
        assert preds[0].error.startswith("transport")


class TestEvalRecordSerialization:
    def test_json_line_round_trip(self):
        rec = EvalRecord("a-0001", "ANSWER: SOS", "sos", 1.25, None)
        assert EvalRecord.from_json_line(rec.to_json_line()) == rec
