"""JSON artifact formats for the in-repo trainers: the template library
(exemplar crops embedded as base64 PNG) and the calibrated seating params."""
from __future__ import annotations

import base64
import json

from ..decision import SeatingParams, Template, TemplateLabel, TemplateLibrary
from ..imaging import decode_png, encode_png


def library_to_json(lib: TemplateLibrary) -> bytes:
    doc = {
        "task_id": lib.task_id,
        "version": lib.version,
        "templates": [
            {
                "id": t.id,
                "label": t.label.value,
                "added_at": t.added_at,
                "png_base64": base64.b64encode(encode_png(t.image)).decode(),
            }
            for t in lib.templates
        ],
    }
    return json.dumps(doc, indent=2).encode()


def library_from_json(data: bytes) -> TemplateLibrary:
    doc = json.loads(data)
    lib = TemplateLibrary(task_id=doc["task_id"], version=int(doc.get("version", 1)))
    for td in doc["templates"]:
        lib.templates.append(Template(
            image=decode_png(base64.b64decode(td["png_base64"])),
            label=TemplateLabel(td["label"]),
            id=td["id"],
            added_at=td.get("added_at", ""),
        ))
    return lib


def seating_to_json(params: SeatingParams) -> bytes:
    return json.dumps({
        "upper_class": params.upper_class,
        "lower_class": params.lower_class,
        "intersection_threshold": params.intersection_threshold,
        "calibrated_from": params.calibrated_from,
    }, indent=2).encode()


def seating_from_json(data: bytes) -> SeatingParams:
    doc = json.loads(data)
    return SeatingParams(
        upper_class=doc["upper_class"],
        lower_class=doc["lower_class"],
        intersection_threshold=float(doc["intersection_threshold"]),
        calibrated_from=doc.get("calibrated_from", ""),
    )
