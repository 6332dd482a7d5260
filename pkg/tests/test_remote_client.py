"""Remote editor client against the in-process echo fixture: round trips,
schema violations with field paths, retries, size limits, and contract
clamping."""

import numpy as np
import pytest

from echo_server import EchoServer
from mvedit.backends import EditRequest, RemoteEditorBackend, encode_request
from mvedit.errors import ConfigurationError, ProtocolError, TransportError
from mvedit.schedule import full_mask_schedule


def disk_mask(h=24, w=24, r=6):
    ys, xs = np.mgrid[0:h, 0:w]
    return (ys - h / 2) ** 2 + (xs - w / 2) ** 2 <= r * r


def make_request(shape=(24, 24), seed=11):
    rng = np.random.default_rng(5)
    return EditRequest(
        init_image=rng.integers(0, 256, (*shape, 3), dtype=np.uint8),
        disparity=np.linspace(0, 1, shape[0] * shape[1]).reshape(shape),
        schedule=full_mask_schedule(disk_mask(*shape), 20),
        prompt="an oak table",
        seed=seed,
    )


@pytest.fixture()
def server():
    with EchoServer() as srv:
        yield srv


class TestRoundTrip:
    def test_echo_returns_init_byte_identical(self, server):
        backend = RemoteEditorBackend(server.url)
        request = make_request()
        response = backend.edit(request)
        np.testing.assert_array_equal(response.image, request.init_image)
        assert response.seed_used == 11
        assert any("echo" in w for w in response.warnings)

    def test_healthz(self, server):
        health = RemoteEditorBackend(server.url).healthz()
        assert health["status"] == "ok"
        assert health["backend_id"] == "echo-fixture"

    def test_request_payload_matches_schema(self, server):
        import json
        from importlib import resources

        import jsonschema

        backend = RemoteEditorBackend(server.url)
        backend.edit(make_request())
        schema = json.loads(
            resources.files("mvedit").joinpath("data/edit_v1.schema.json").read_text()
        )
        jsonschema.validate(
            server.state.requests[-1],
            {"$ref": "#/$defs/edit_request", "$defs": schema["$defs"]},
        )


class TestProtocolErrors:
    def test_corrupt_base64_names_field(self, server):
        server.state.mode = "corrupt_base64"
        with pytest.raises(ProtocolError) as err:
            RemoteEditorBackend(server.url).edit(make_request())
        assert err.value.field == "image_png"

    def test_dimension_mismatch_is_protocol_error(self, server):
        server.state.mode = "wrong_dims"
        with pytest.raises(ProtocolError, match="shape"):
            RemoteEditorBackend(server.url).edit(make_request())

    def test_missing_response_field(self, server):
        server.state.mode = "missing_field"
        with pytest.raises(ProtocolError) as err:
            RemoteEditorBackend(server.url).edit(make_request())
        assert err.value.field in ("seed_used", "warnings")

    def test_server_side_rejection_carries_field_path(self, server):
        server.state.mode = "reject_schema"
        with pytest.raises(ProtocolError) as err:
            RemoteEditorBackend(server.url).edit(make_request())
        assert err.value.field == "schedule/0/mask_png"

    def test_server_error_is_transport_error(self, server):
        server.state.mode = "explode"
        with pytest.raises(TransportError):
            RemoteEditorBackend(server.url).edit(make_request())


class TestContractClamping:
    def test_violation_clamped_with_warning(self, server):
        server.state.mode = "violate_contract"
        backend = RemoteEditorBackend(server.url)
        request = make_request()
        response = backend.edit(request)
        np.testing.assert_array_equal(response.image[0, 0], request.init_image[0, 0])
        assert any("clamped" in w for w in response.warnings)

    def test_edge_bleed_within_tolerance_kept(self, server):
        # a pixel 1 px outside the mask is within the 2 px edge tolerance
        server.state.mode = "echo"
        backend = RemoteEditorBackend(server.url, mask_edge_tolerance_px=2)
        request = make_request()
        response = backend.edit(request)
        assert not any("clamped" in w for w in response.warnings)


class TestTransport:
    def test_timeout_retries_then_fails(self, server):
        server.state.slow_attempts = 10
        server.state.delay_s = 0.6
        backend = RemoteEditorBackend(server.url, timeout=0.15, retries=2)
        with pytest.raises(TransportError, match="3 attempts"):
            backend.edit(make_request())
        assert len(server.state.requests) == 3

    def test_timeout_then_success(self, server):
        server.state.slow_attempts = 1
        server.state.delay_s = 0.6
        backend = RemoteEditorBackend(server.url, timeout=0.15, retries=2)
        response = backend.edit(make_request())
        assert response.steps_run == 0
        assert len(server.state.requests) == 2

    def test_unreachable_endpoint(self):
        backend = RemoteEditorBackend("http://127.0.0.1:1", timeout=0.2, retries=0)
        with pytest.raises(TransportError):
            backend.edit(make_request())

    def test_oversized_image_rejected_before_transmission(self, server):
        backend = RemoteEditorBackend(server.url, max_pixels=16 * 16)
        with pytest.raises(ConfigurationError, match="exceeds"):
            backend.edit(make_request(shape=(24, 24)))
        assert server.state.requests == []


class TestEncoding:
    def test_schedule_entries_serialized_in_order(self):
        request = make_request()
        payload = encode_request(request)
        assert payload["version"] == "1"
        assert [e["lo"] for e in payload["schedule"]] == [0]
        assert payload["steps"] == 20
        assert payload["noise_strength"] == [0.8, 0.98]
