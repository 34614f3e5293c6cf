"""Pluggable segmentation/keypoint inference boundary.

Two adapters implement the same surface: a fixture adapter that looks results
up by the crop's content hash (for tests and desk-scale runs), and a remote
adapter speaking the HTTP wire protocol to a model service. The deep network
itself lives behind that wire.
"""
from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import requests

from .core import ImageBuffer, Mask
from .imaging import decode_mask_png, encode_png


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    pass


class BadResponse(BackendError):
    pass


class FixtureMissing(BackendError):
    pass


@dataclass
class ModelRef:
    task_id: str
    version: str = "1"
    endpoint: str | None = None
    fixture_root: str | None = None

    def __post_init__(self):
        if (self.endpoint is None) == (self.fixture_root is None):
            raise ValueError("exactly one of endpoint / fixture_root must be set")


@dataclass
class KeypointPrediction:
    name: str
    x: float
    y: float
    score: float


def content_hash(crop: ImageBuffer) -> str:
    return hashlib.sha256(crop.data).hexdigest()


class FixtureBackend:
    """Serves masks/keypoints stored on disk, keyed by crop content hash.

    Layout: {root}/{task_id}/{sha256}.mask.png + .mask.json (class names),
    and {sha256}.keypoints.json.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def register_mask(self, task_id: str, crop: ImageBuffer, mask: Mask):
        from .imaging import encode_mask_png

        d = self.root / task_id
        d.mkdir(parents=True, exist_ok=True)
        h = content_hash(crop)
        (d / f"{h}.mask.png").write_bytes(encode_mask_png(mask))
        (d / f"{h}.mask.json").write_text(json.dumps({"class_names": mask.class_names}))

    def register_keypoints(self, task_id: str, crop: ImageBuffer,
                           keypoints: list[KeypointPrediction]):
        d = self.root / task_id
        d.mkdir(parents=True, exist_ok=True)
        h = content_hash(crop)
        doc = {"keypoints": [
            {"name": k.name, "x": k.x, "y": k.y, "score": k.score} for k in keypoints
        ]}
        (d / f"{h}.keypoints.json").write_text(json.dumps(doc))

    def segment(self, crop: ImageBuffer, model: ModelRef) -> Mask:
        h = content_hash(crop)
        png = self.root / model.task_id / f"{h}.mask.png"
        meta = self.root / model.task_id / f"{h}.mask.json"
        if not png.exists() or not meta.exists():
            raise FixtureMissing(f"no mask fixture for {model.task_id}/{h}")
        class_names = json.loads(meta.read_text())["class_names"]
        mask = decode_mask_png(png.read_bytes(), class_names)
        if (mask.width, mask.height) != (crop.width, crop.height):
            raise BadResponse(
                f"fixture mask is {mask.width}x{mask.height}, crop is {crop.width}x{crop.height}")
        return mask

    def keypoints(self, crop: ImageBuffer, model: ModelRef) -> list[KeypointPrediction]:
        h = content_hash(crop)
        path = self.root / model.task_id / f"{h}.keypoints.json"
        if not path.exists():
            raise FixtureMissing(f"no keypoint fixture for {model.task_id}/{h}")
        doc = json.loads(path.read_text())
        return _parse_keypoints(doc, crop)


class RemoteBackend:
    """HTTP adapter: POST PNG crops to {endpoint}/v1/segment or /v1/keypoints
    with an X-Model-Ref header; bounded concurrency and a hard timeout."""

    def __init__(self, timeout_s: float = 10.0, max_in_flight: int = 8):
        self.timeout_s = timeout_s
        self._slots = threading.Semaphore(max_in_flight)

    def _post(self, crop: ImageBuffer, model: ModelRef, path: str) -> dict:
        if model.endpoint is None:
            raise ValueError("model ref has no endpoint")
        url = model.endpoint.rstrip("/") + path
        headers = {
            "Content-Type": "image/png",
            "X-Model-Ref": f"{model.task_id}:{model.version}",
        }
        with self._slots:
            try:
                resp = requests.post(url, data=encode_png(crop), headers=headers,
                                     timeout=self.timeout_s)
            except requests.RequestException as e:
                raise BackendUnavailable(f"{url}: {e}") from e
        if resp.status_code != 200:
            raise BackendUnavailable(f"{url} returned status {resp.status_code}")
        try:
            return resp.json()
        except ValueError as e:
            raise BadResponse(f"{url}: body is not JSON") from e

    def segment(self, crop: ImageBuffer, model: ModelRef) -> Mask:
        doc = self._post(crop, model, "/v1/segment")
        try:
            class_names = list(doc["class_names"])
            png = base64.b64decode(doc["mask_png_base64"])
        except (KeyError, TypeError, ValueError) as e:
            raise BadResponse(f"malformed segment response: {e}") from e
        try:
            mask = decode_mask_png(png, class_names)
        except Exception as e:
            raise BadResponse(f"undecodable mask PNG: {e}") from e
        if (mask.width, mask.height) != (crop.width, crop.height):
            raise BadResponse(
                f"mask is {mask.width}x{mask.height}, crop is {crop.width}x{crop.height}")
        return mask

    def keypoints(self, crop: ImageBuffer, model: ModelRef) -> list[KeypointPrediction]:
        doc = self._post(crop, model, "/v1/keypoints")
        return _parse_keypoints(doc, crop)


def _parse_keypoints(doc: dict, crop: ImageBuffer) -> list[KeypointPrediction]:
    try:
        rows = doc["keypoints"]
    except (KeyError, TypeError) as e:
        raise BadResponse(f"malformed keypoints response: {e}") from e
    out = []
    for row in rows:
        try:
            kp = KeypointPrediction(name=row["name"], x=float(row["x"]),
                                    y=float(row["y"]), score=float(row["score"]))
        except (KeyError, TypeError, ValueError) as e:
            raise BadResponse(f"malformed keypoint row {row!r}: {e}") from e
        if not 0.0 <= kp.score <= 1.0:
            raise BadResponse(f"keypoint {kp.name} score {kp.score} outside [0, 1]")
        if not (0 <= kp.x < crop.width and 0 <= kp.y < crop.height):
            raise BadResponse(f"keypoint {kp.name} at ({kp.x}, {kp.y}) outside crop")
        out.append(kp)
    return out


def backend_for(model: ModelRef, remote: RemoteBackend | None = None):
    """Pick the adapter matching the model ref."""
    if model.fixture_root is not None:
        return FixtureBackend(model.fixture_root)
    return remote or RemoteBackend()
