import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from aoi.core import ImageBuffer, Mask
from aoi.imaging import encode_mask_png
from aoi.segbackend import (
    BackendUnavailable,
    BadResponse,
    FixtureBackend,
    FixtureMissing,
    KeypointPrediction,
    ModelRef,
    RemoteBackend,
    content_hash,
)
from helpers import rand_image


@pytest.fixture
def stub_server():
    """HTTP stub whose next response is set per test via .responder."""
    state = {}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            status, payload = state["responder"](self.path, body, dict(self.headers))
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(payload if isinstance(payload, bytes) else json.dumps(payload).encode())

        def log_message(self, *a):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    state["endpoint"] = f"http://127.0.0.1:{server.server_port}"
    yield state
    server.shutdown()


def checkerboard_mask(w, h, names=("background", "upper", "lower")):
    labels = np.indices((h, w)).sum(axis=0) % 2
    return Mask(labels.astype(np.uint8), list(names))


class TestModelRef:
    def test_requires_exactly_one_backend(self):
        with pytest.raises(ValueError):
            ModelRef("t1")
        with pytest.raises(ValueError):
            ModelRef("t1", endpoint="http://x", fixture_root="/tmp/f")


class TestFixtureBackend:
    def test_mask_round_trip_byte_exact(self, tmp_path, rng):
        crop = rand_image(rng, 16, 12)
        mask = checkerboard_mask(16, 12)
        fb = FixtureBackend(tmp_path)
        fb.register_mask("t1", crop, mask)
        ref = ModelRef("t1", fixture_root=str(tmp_path))
        assert fb.segment(crop, ref) == mask

    def test_missing_fixture(self, tmp_path, rng):
        fb = FixtureBackend(tmp_path)
        with pytest.raises(FixtureMissing):
            fb.segment(rand_image(rng, 8, 8), ModelRef("t1", fixture_root=str(tmp_path)))

    def test_keypoints_round_trip(self, tmp_path, rng):
        crop = rand_image(rng, 20, 20)
        fb = FixtureBackend(tmp_path)
        kps = [KeypointPrediction("arrow_tail", 2.0, 3.0, 0.9),
               KeypointPrediction("arrow_head", 12.0, 3.0, 0.8)]
        fb.register_keypoints("t1", crop, kps)
        got = fb.keypoints(crop, ModelRef("t1", fixture_root=str(tmp_path)))
        assert got == kps

    def test_pure_function_of_content_hash(self, tmp_path, rng):
        crop = rand_image(rng, 16, 12)
        same_pixels = ImageBuffer(crop.pixels.copy())
        assert content_hash(crop) == content_hash(same_pixels)
        fb = FixtureBackend(tmp_path)
        fb.register_mask("t1", crop, checkerboard_mask(16, 12))
        ref = ModelRef("t1", fixture_root=str(tmp_path))
        assert fb.segment(crop, ref) == fb.segment(same_pixels, ref)


class TestRemoteBackend:
    def test_segment_round_trip_checkerboard(self, stub_server, rng):
        crop = rand_image(rng, 10, 8)
        mask = checkerboard_mask(10, 8)
        seen = {}

        def responder(path, body, headers):
            seen.update(path=path, model_ref=headers.get("X-Model-Ref"))
            return 200, {
                "class_names": mask.class_names,
                "mask_png_base64": base64.b64encode(encode_mask_png(mask)).decode(),
            }

        stub_server["responder"] = responder
        ref = ModelRef("t1", version="3", endpoint=stub_server["endpoint"])
        got = RemoteBackend().segment(crop, ref)
        assert got == mask
        assert seen["path"] == "/v1/segment"
        assert seen["model_ref"] == "t1:3"

    def test_wrong_dimensions_is_bad_response(self, stub_server, rng):
        mask = checkerboard_mask(5, 5)
        stub_server["responder"] = lambda *a: (200, {
            "class_names": mask.class_names,
            "mask_png_base64": base64.b64encode(encode_mask_png(mask)).decode(),
        })
        ref = ModelRef("t1", endpoint=stub_server["endpoint"])
        with pytest.raises(BadResponse):
            RemoteBackend().segment(rand_image(rng, 10, 8), ref)

    def test_non_200_is_backend_unavailable(self, stub_server, rng):
        stub_server["responder"] = lambda *a: (503, {"error": "down"})
        ref = ModelRef("t1", endpoint=stub_server["endpoint"])
        with pytest.raises(BackendUnavailable):
            RemoteBackend().segment(rand_image(rng, 4, 4), ref)

    def test_connection_refused_is_backend_unavailable(self, rng):
        ref = ModelRef("t1", endpoint="http://127.0.0.1:1")
        with pytest.raises(BackendUnavailable):
            RemoteBackend(timeout_s=0.5).segment(rand_image(rng, 4, 4), ref)

    def test_empty_keypoint_list_is_returned(self, stub_server, rng):
        stub_server["responder"] = lambda *a: (200, {"keypoints": []})
        ref = ModelRef("t1", endpoint=stub_server["endpoint"])
        assert RemoteBackend().keypoints(rand_image(rng, 4, 4), ref) == []

    def test_score_out_of_range_is_bad_response(self, stub_server, rng):
        stub_server["responder"] = lambda *a: (200, {
            "keypoints": [{"name": "arrow_head", "x": 1, "y": 1, "score": 1.5}]})
        ref = ModelRef("t1", endpoint=stub_server["endpoint"])
        with pytest.raises(BadResponse):
            RemoteBackend().keypoints(rand_image(rng, 4, 4), ref)
