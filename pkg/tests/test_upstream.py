import json

import httpx
import pytest

from toolgate.classifier import ApiStatus, classify
from toolgate.model import ApiResponse
from toolgate.upstream import UpstreamClient, UpstreamConfig, UpstreamConfigError, call_real

from helpers import make_request


def _client_for(handler, **config_kwargs):
    config = UpstreamConfig(base_url="http://hub.test/call", **config_kwargs)
    transport = httpx.MockTransport(handler)
    return UpstreamClient(config, client=httpx.Client(transport=transport))


def test_healthy_endpoint_passes_envelope_through():
    def handler(request):
        return httpx.Response(200, text=json.dumps({"error": "", "response": "fine"}))

    response = _client_for(handler).call(make_request())
    assert response == ApiResponse(error="", response="fine")
    assert classify(response) is ApiStatus.SUCCESS


def test_bare_bodies_are_wrapped():
    def handler(request):
        return httpx.Response(200, text='{"temperature": 21}')

    response = _client_for(handler).call(make_request())
    assert response == ApiResponse(error="", response='{"temperature": 21}')


def test_timeout_yields_not_connected():
    def handler(request):
        raise httpx.ReadTimeout("deadline")

    response = _client_for(handler, timeout_s=0.5, retry_budget=0).call(make_request())
    assert "timed out" in response.response
    assert classify(response) is ApiStatus.NOT_CONNECTED


def test_connection_failure_yields_not_connected():
    def handler(request):
        raise httpx.ConnectError("no route to host")

    response = _client_for(handler, retry_budget=0).call(make_request())
    assert classify(response) is ApiStatus.NOT_CONNECTED


@pytest.mark.parametrize(
    "status,expected",
    [
        (401, ApiStatus.NOT_AUTHORISED),
        (403, ApiStatus.NOT_AUTHORISED),
        (404, ApiStatus.NOT_FOUND),
        (429, ApiStatus.NOT_CONNECTED),
        (500, ApiStatus.NOT_FOUND),
    ],
)
def test_http_statuses_classify_correctly(status, expected):
    def handler(request):
        return httpx.Response(status, text="upstream says no")

    response = _client_for(handler).call(make_request())
    assert classify(response) is expected


def test_non_2xx_envelope_bodies_pass_through():
    body = {"error": "hub normalized this", "response": ""}

    def handler(request):
        return httpx.Response(404, text=json.dumps(body))

    response = _client_for(handler).call(make_request())
    assert response == ApiResponse(error="hub normalized this", response="")


def test_non_2xx_is_never_retried():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(404, text="gone")

    _client_for(handler, retry_budget=3).call(make_request())
    assert calls["n"] == 1


def test_transport_failures_retry_up_to_budget():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            raise httpx.ConnectError("flaky")
        return httpx.Response(200, text=json.dumps({"error": "", "response": "ok"}))

    response = _client_for(handler, retry_budget=2).call(make_request())
    assert response.response == "ok"
    assert calls["n"] == 3


def test_key_and_body_are_sent():
    seen = {}

    def handler(request):
        seen["header"] = request.headers.get("toolbench_key")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, text=json.dumps({"error": "", "response": "ok"}))

    config = UpstreamConfig(base_url="http://hub.test/call", service_key="sekrit")
    client = UpstreamClient(config, client=httpx.Client(transport=httpx.MockTransport(handler)))
    client.call(make_request(tool_input='{"a": 1}', strip="filter"))
    assert seen["header"] == "sekrit"
    assert seen["body"]["category"] == "Logistics"
    assert seen["body"]["tool_input"] == '{"a": 1}'
    assert seen["body"]["strip"] == "filter"


def test_missing_base_url_raises_config_error():
    with pytest.raises(UpstreamConfigError):
        UpstreamClient(UpstreamConfig(base_url=""))


@pytest.mark.parametrize(
    "kwargs", [{"timeout_s": 0}, {"retry_budget": -1}, {"max_in_flight": 0}]
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        UpstreamConfig(base_url="http://hub.test", **kwargs)


def test_success_implies_empty_error_field():
    def handler(request):
        return httpx.Response(200, text=json.dumps({"error": "", "response": "data"}))

    response = _client_for(handler).call(make_request())
    if classify(response) is ApiStatus.SUCCESS:
        assert response.error == ""


def test_call_real_wrapper_returns_failure_as_data():
    # nothing listens on the discard port; the failure must come back as an envelope
    config = UpstreamConfig(
        base_url="http://127.0.0.1:9/call", timeout_s=0.5, retry_budget=0
    )
    response = call_real(make_request(), config)
    assert classify(response) is ApiStatus.NOT_CONNECTED
