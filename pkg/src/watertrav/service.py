"""HTTP service backing the human annotation workflow.

Serves instances and crops, accepts ratings into the append-only store
(write is fsynced before the acknowledgment leaves the process), and exposes
agreement statistics. The browser UI is hosted statically at ``/`` when a
built bundle is available. Annotator identity is a self-declared id; this
matches a small trusted-rater setting and is not an auth scheme.
"""

from __future__ import annotations

import io
import json
import threading
import time
from pathlib import Path

from fastapi import Body, FastAPI, Query
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .dataset import (
    RATING_LABELS,
    SCHEME_LINE,
    TASK_LINE,
    DatasetManifest,
    agreement_histogram,
    load_image,
    load_manifest,
    load_mask,
    parse_annotation_record,
)
from .extraction import CropSpec, extract_instance
from .store import JsonlStore, annotation_key, export_annotations

DEFAULT_UI_DIR = Path(__file__).parent.parent.parent / "frontend" / "dist"

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>watertrav annotation service</title></head>
<body>
<h1>watertrav annotation service</h1>
<p>The browser UI bundle is not built. The JSON API is live:</p>
<ul>
<li>GET /api/robots</li>
<li>GET /api/tasks?annotator=&amp;robot=</li>
<li>GET /api/task/next?annotator=&amp;robot=</li>
<li>POST /api/annotations</li>
<li>GET /api/stats/agreement</li>
<li>GET /api/export</li>
</ul>
</body></html>
"""


def _error(status: int, rule: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"rule": rule, "detail": detail}})


class _CropCache:
    """Instance crops rendered once, PNG-encoded, kept in memory."""

    def __init__(self, manifest: DatasetManifest, spec: CropSpec):
        self.manifest = manifest
        self.spec = spec
        self._cache: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def png(self, instance_id: str) -> bytes:
        with self._lock:
            cached = self._cache.get(instance_id)
        if cached is not None:
            return cached
        crop = extract_instance(
            load_image(self.manifest, self.manifest.instances_by_id[instance_id].image_id),
            load_mask(self.manifest, instance_id),
            self.spec,
            instance_id=instance_id,
        )
        buf = io.BytesIO()
        Image.fromarray(crop.pixels).save(buf, format="PNG")
        data = buf.getvalue()
        with self._lock:
            self._cache[instance_id] = data
        return data


def create_app(
    dataset_root: str | Path,
    store_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
    shuffle_seed: int | None = None,
    crop_spec: CropSpec = CropSpec(),
) -> FastAPI:
    manifest = load_manifest(dataset_root)
    store = JsonlStore(Path(store_path) if store_path else manifest.annotations_path())
    store.recover()
    crops = _CropCache(manifest, crop_spec)
    app = FastAPI(title="watertrav annotation service", docs_url=None, redoc_url=None)

    def _instance_order(annotator_id: str) -> list[str]:
        order = [inst.id for inst in manifest.instances]
        if shuffle_seed is not None:
            import random

            random.Random(f"{shuffle_seed}:{annotator_id}").shuffle(order)
        return order

    def _rated_keys(annotator_id: str, robot_id: str) -> set[str]:
        return {
            rec["instance_id"]
            for rec in export_annotations(store.path)
            if rec.get("annotator_id") == annotator_id and rec.get("robot_id") == robot_id
        }

    def _task(instance_id: str, robot_id: str, rated: set[str]) -> dict:
        return {
            "instance_id": instance_id,
            "robot_id": robot_id,
            "image_url": f"/media/images/{manifest.instances_by_id[instance_id].image_id}.png",
            "crop_url": f"/media/crops/{instance_id}.png",
            "scheme": SCHEME_LINE,
            "task": TASK_LINE,
            "already_rated": instance_id in rated,
        }

    @app.get("/api/robots")
    def robots():
        return [
            {"id": r.id, "display_name": r.display_name, "prompt_description": r.prompt_description}
            for r in manifest.robots
        ]

    @app.get("/api/tasks")
    def tasks(annotator: str = Query(""), robot: str = Query("")):
        if not annotator:
            return _error(422, "missing_field", "query parameter 'annotator' is required")
        if robot not in manifest.robots_by_id:
            return _error(422, "dangling_reference", f"unknown robot '{robot}'")
        rated = _rated_keys(annotator, robot)
        return [_task(inst_id, robot, rated) for inst_id in _instance_order(annotator)]

    @app.get("/api/task/next")
    def next_task(annotator: str = Query(""), robot: str = Query("")):
        if not annotator:
            return _error(422, "missing_field", "query parameter 'annotator' is required")
        if robot not in manifest.robots_by_id:
            return _error(422, "dangling_reference", f"unknown robot '{robot}'")
        rated = _rated_keys(annotator, robot)
        order = _instance_order(annotator)
        for inst_id in order:
            if inst_id not in rated:
                task = _task(inst_id, robot, rated)
                task["progress"] = {"rated": len(rated), "total": len(order)}
                return task
        return {"done": True, "rated": len(rated), "total": len(order)}

    @app.post("/api/annotations")
    def submit(payload: dict = Body(...)):
        missing = [k for k in ("annotator_id", "instance_id", "robot_id", "rating") if k not in payload]
        if missing:
            return _error(422, "missing_field", f"annotation lacks {', '.join(missing)}")
        rating = payload["rating"]
        if not isinstance(rating, int) or isinstance(rating, bool) or rating not in RATING_LABELS:
            return _error(422, "rating_out_of_range", f"rating {rating!r} not in 1..4")
        if payload["instance_id"] not in manifest.instances_by_id:
            return _error(422, "dangling_reference", f"unknown instance '{payload['instance_id']}'")
        if payload["robot_id"] not in manifest.robots_by_id:
            return _error(422, "dangling_reference", f"unknown robot '{payload['robot_id']}'")
        if not str(payload["annotator_id"]).strip():
            return _error(422, "missing_field", "annotator_id must be non-empty")
        record = {
            "annotator_id": str(payload["annotator_id"]),
            "instance_id": str(payload["instance_id"]),
            "robot_id": str(payload["robot_id"]),
            "rating": rating,
            "timestamp": time.time(),
        }
        try:
            store.append(record)  # fsynced before we acknowledge
        except OSError as exc:
            return _error(500, "storage_failure", str(exc))
        return {"ok": True, "record": record}

    @app.get("/api/stats/agreement")
    def agreement(bin_width: float = Query(0.25, gt=0)):
        records = [parse_annotation_record(raw) for raw in export_annotations(store.path)]
        if not records:
            return {
                "bin_width": bin_width,
                "edges": [],
                "counts": [],
                "per_key": [],
            }
        return agreement_histogram(records, bin_width).to_json_dict()

    @app.get("/api/export")
    def export():
        lines = [json.dumps(rec, sort_keys=True, ensure_ascii=False) for rec in store.export_latest(annotation_key)]
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.get("/media/images/{image_id}.png")
    def media_image(image_id: str):
        image = manifest.images_by_id.get(image_id)
        if image is None:
            return _error(404, "dangling_reference", f"unknown image '{image_id}'")
        return FileResponse(manifest.image_path(image), media_type="image/png")

    @app.get("/media/crops/{instance_id}.png")
    def media_crop(instance_id: str):
        if instance_id not in manifest.instances_by_id:
            return _error(404, "dangling_reference", f"unknown instance '{instance_id}'")
        return Response(content=crops.png(instance_id), media_type="image/png")

    ui_path = Path(ui_dir) if ui_dir is not None else DEFAULT_UI_DIR
    if ui_path.is_dir() and (ui_path / "index.html").is_file():
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _FALLBACK_PAGE

    return app


def serve(
    dataset_root: str | Path,
    store_path: str | Path | None = None,
    host: str = "127.0.0.1",
    port: int = 8080,
    ui_dir: str | Path | None = None,
    shuffle_seed: int | None = None,
    log_level: str = "warning",
) -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    app = create_app(dataset_root, store_path=store_path, ui_dir=ui_dir, shuffle_seed=shuffle_seed)
    uvicorn.run(app, host=host, port=port, log_level=log_level)
