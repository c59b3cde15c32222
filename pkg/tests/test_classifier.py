import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from toolgate.classifier import (
    ApiStatus,
    ScanConfigError,
    StatusReport,
    classify,
    is_cacheable,
    scan_status,
)
from toolgate.llm import ChatModel, StubBridge
from toolgate.model import ApiResponse

from helpers import ScriptedUpstream, make_doc

# Curated (error, response, expected) corpus.  Every expected value was
# derived by hand-applying the precedence rules; each keyword family
# appears at least once, plus boundary and precedence probes.
CORPUS = [
    # parsing error: prefix match on the error field
    ("Function executing from my_tool failed", "", ApiStatus.PARSING_ERROR),
    ("function executing from x", "", ApiStatus.PARSING_ERROR),
    # not connected: "HTTP" in error, or response keywords
    ("HTTP request failed", "", ApiStatus.NOT_CONNECTED),
    ("http error when calling endpoint", "", ApiStatus.NOT_CONNECTED),
    ("", "HTTP error 502 from upstream", ApiStatus.NOT_CONNECTED),
    ("", "connection refused by host", ApiStatus.NOT_CONNECTED),
    ("", "rate limit exceeded, try later", ApiStatus.NOT_CONNECTED),
    ("", "request timed out after 30s", ApiStatus.NOT_CONNECTED),
    ("", "time out while waiting for reply", ApiStatus.NOT_CONNECTED),
    # not authorised: keyword stems, exact token, digit markers
    ("", "authorization required for this endpoint", ApiStatus.NOT_AUTHORISED),
    ("", "authorisation failed", ApiStatus.NOT_AUTHORISED),
    ("", "Unauthorized access to resource", ApiStatus.NOT_AUTHORISED),
    ("", "unauthorised request", ApiStatus.NOT_AUTHORISED),
    ("", "blocked user detected", ApiStatus.NOT_AUTHORISED),
    ("", "please unsubscribe from this plan first", ApiStatus.NOT_AUTHORISED),
    ("", "invalid credentials supplied", ApiStatus.NOT_AUTHORISED),
    ("", "this endpoint is disabled for your subscription", ApiStatus.NOT_AUTHORISED),
    ("", "ACCESS_DENIED", ApiStatus.NOT_AUTHORISED),
    ("", "Error code 401 returned by hub", ApiStatus.NOT_AUTHORISED),
    ("", "403 Forbidden", ApiStatus.NOT_AUTHORISED),
    # not found: keywords and the 404 marker
    ("", "resource not found", ApiStatus.NOT_FOUND),
    ("", "this api is not available anymore", ApiStatus.NOT_FOUND),
    ("", "API doesn't exists", ApiStatus.NOT_FOUND),
    ("", "Service Not Found", ApiStatus.NOT_FOUND),
    ("", "internal error occurred", ApiStatus.NOT_FOUND),
    ("", "status 404 returned", ApiStatus.NOT_FOUND),
    ("", "404 Not Found", ApiStatus.NOT_FOUND),
    # parameter change
    ("", "missing parameter city", ApiStatus.PARAMETER_CHANGE),
    ("", "failed to parse input payload", ApiStatus.PARAMETER_CHANGE),
    ("", "variable foo is not defined", ApiStatus.PARAMETER_CHANGE),
    # other: non-empty error with no matching keyword
    ("some weird failure", "", ApiStatus.OTHER),
    ("exception raised in handler", "", ApiStatus.OTHER),
    # success
    ("", '{"data": [1, 2, 3]}', ApiStatus.SUCCESS),
    ("", "", ApiStatus.SUCCESS),
    ("", "all good", ApiStatus.SUCCESS),
    # boundary probes
    ("", "access_denied", ApiStatus.SUCCESS),  # exact-case token only
    ("", "code 4040 is fine", ApiStatus.SUCCESS),  # 404 must be digit-bounded
    # precedence probes
    ("", "connection not found", ApiStatus.NOT_CONNECTED),
    ("", "404 not found after rate limit", ApiStatus.NOT_CONNECTED),
    ("HTTP", "401 Unauthorized", ApiStatus.NOT_CONNECTED),
    ("Function executing from t: parameter parse failed", "", ApiStatus.PARSING_ERROR),
]


def test_corpus_is_large_and_covers_every_status():
    assert len(CORPUS) >= 35
    assert {expected for _, _, expected in CORPUS} == set(ApiStatus)


def test_corpus_covers_every_keyword_family():
    blob = "\n".join(f"{e}\n{r}".lower() for e, r, _ in CORPUS)
    families = [
        "http error", "connection", "rate limit", "timed out", "time out",
        "authoriz", "authoris", "unauthoriz", "unauthoris", "blocked user",
        "unsubscribe", "credential", "disabled for your subscription",
        "not found", "not available", "api doesn't exists", "service not found",
        "internal error", "parameter", "parse", "is not defined",
        "function executing from", "401", "403", "404",
    ]
    for family in families:
        assert family in blob, f"fixture corpus misses keyword family {family!r}"
    assert "ACCESS_DENIED" in "\n".join(f"{e}\n{r}" for e, r, _ in CORPUS)


@pytest.mark.parametrize("error,response,expected", CORPUS)
def test_corpus_exact_match(error, response, expected):
    assert classify(ApiResponse(error=error, response=response)) is expected


@given(st.text(), st.text())
def test_classify_is_total(error, response):
    assert classify(ApiResponse(error=error, response=response)) in ApiStatus


@given(st.text(min_size=1))
def test_rule_two_beats_rule_four(filler):
    # any response containing both a connection keyword and a not-found
    # keyword must land in NotConnected
    response = f"connection {filler} not found"
    assert classify(ApiResponse(error="", response=response)) is ApiStatus.NOT_CONNECTED


def test_is_cacheable_partition():
    keep = {ApiStatus.SUCCESS, ApiStatus.OTHER}
    for status in ApiStatus:
        assert is_cacheable(status) is (status in keep)


@given(
    st.lists(
        st.tuples(st.text(max_size=20), st.text(max_size=20)), max_size=40
    )
)
def test_filtration_soundness(pairs):
    responses = [ApiResponse(error=e, response=r) for e, r in pairs]
    kept = [resp for resp in responses if is_cacheable(classify(resp))]
    assert kept == [
        resp
        for resp in responses
        if classify(resp) in (ApiStatus.SUCCESS, ApiStatus.OTHER)
    ]


# -- StatusReport ---------------------------------------------------------------


def test_report_percentages_sum_to_one():
    statuses = [ApiStatus.SUCCESS] * 3 + [ApiStatus.NOT_FOUND] * 2 + [ApiStatus.OTHER]
    report = StatusReport.from_statuses(statuses)
    assert abs(sum(report.percentages.values()) - 1.0) < 1e-9
    assert report.total == 6


def test_report_zero_total_has_zero_percentages():
    report = StatusReport(counts={})
    assert report.total == 0
    assert all(p == 0.0 for p in report.percentages.values())


@given(st.permutations([ApiStatus.SUCCESS, ApiStatus.OTHER, ApiStatus.NOT_FOUND,
                        ApiStatus.NOT_FOUND, ApiStatus.NOT_CONNECTED]))
def test_report_is_order_invariant(statuses):
    report = StatusReport.from_statuses(statuses)
    assert report.counts[ApiStatus.NOT_FOUND] == 2
    assert report.total == 5


def test_report_grouped_rollup():
    report = StatusReport.from_statuses(
        [ApiStatus.SUCCESS, ApiStatus.NOT_FOUND, ApiStatus.PARSING_ERROR,
         ApiStatus.NOT_AUTHORISED, ApiStatus.OTHER]
    )
    assert report.grouped() == {"Success": 1, "NotAvailable": 3, "NotAuthorised": 1}


def test_report_json_shape():
    payload = StatusReport.from_statuses([ApiStatus.SUCCESS]).to_json()
    assert payload["total"] == 1
    assert payload["counts"]["Success"] == 1
    assert payload["percentages"]["Success"] == 1.0


# -- scan_status -------------------------------------------------------------------


def _writer(reply='{"q": "probe"}'):
    return ChatModel(StubBridge(lambda s, u, m, t: reply), model_name="writer")


def test_scan_empty_docs_yields_zero_report():
    report = scan_status([], _writer(), ScriptedUpstream(default=ApiResponse()))
    assert report.total == 0


def test_scan_requires_upstream():
    with pytest.raises(ScanConfigError):
        scan_status([make_doc()], _writer(), None)


def test_scan_three_mock_apis():
    # hand-classified fixture outcomes: success, 404, rate-limit
    docs = [
        make_doc(tool="alpha", api="ok"),
        make_doc(tool="beta", api="gone"),
        make_doc(tool="gamma", api="busy"),
    ]
    outcomes = {
        "alpha": ApiResponse(error="", response='{"data": 1}'),
        "beta": ApiResponse(error="", response="404 Not Found"),
        "gamma": ApiResponse(error="", response="rate limit exceeded"),
    }

    class ByToolUpstream:
        def call(self, request):
            return outcomes[request.id.tool_name]

    report = scan_status(docs, _writer(), ByToolUpstream(), max_workers=2)
    assert report.counts == {
        ApiStatus.SUCCESS: 1,
        ApiStatus.NOT_FOUND: 1,
        ApiStatus.NOT_CONNECTED: 1,
    }


def test_scan_counts_unwritable_probes_as_parsing_error():
    docs = [make_doc(tool="alpha", api="ok")]

    class NeverCalled:
        def call(self, request):  # pragma: no cover - must not be reached
            raise AssertionError("upstream must not be called")

    report = scan_status(docs, _writer(reply="no json here"), NeverCalled(), retry_budget=1)
    assert report.counts == {ApiStatus.PARSING_ERROR: 1}


def test_scan_probe_uses_written_arguments():
    seen = {}

    class CapturingUpstream:
        def call(self, request):
            seen["tool_input"] = request.tool_input
            return ApiResponse(error="", response="fine")

    scan_status([make_doc()], _writer('{"city": "Oslo"}'), CapturingUpstream())
    assert json.loads(seen["tool_input"]) == {"city": "Oslo"}


def test_scan_rejects_blank_descriptions():
    doc = make_doc()
    blank = type(doc)(id=doc.id, description="   ", parameters=(), tool_description="")
    with pytest.raises(ValueError):
        scan_status([blank], _writer(), ScriptedUpstream(default=ApiResponse()))
