"""Batch orchestration: run config, the rate loop, and report generation.

A run is declared by one TOML config (axes to sweep, backends, crop and
cost-map settings) so experiments are versionable artifacts. Runs are
resumable: every prediction is keyed by (instance, robot, model, strategy,
temperature, query_mode) and already-recorded keys are skipped on rerun,
which matters when backends bill per call.
"""

from __future__ import annotations

import shutil
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import costmap as costmap_mod
from .dataset import (
    DatasetManifest,
    load_image,
    load_manifest,
    load_mask,
)
from .evaluation import (
    DEFAULT_GROUP_BY,
    EvaluationReport,
    PredictionRecord,
    emit_report,
    group_report,
)
from .extraction import CropSpec, extract_instance, save_crop_png
from .gateway import BackendConfig, GatewayError, VlmGateway, VlmRequest
from .parsing import ParsedRating, ParseFailure, parse_rating
from .prompts import PromptLibrary, PromptSpec
from .store import JsonlStore, load_annotation_records, prediction_key
from . import dataset as dataset_mod


class ConfigError(Exception):
    pass


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    dataset: str
    out_dir: str
    seed: int
    strategies: tuple[str, ...]
    query_modes: tuple[str, ...]
    temperatures: tuple[float, ...]
    robots: tuple[str, ...]  # empty = all robots in the manifest
    crop: CropSpec
    mapping: costmap_mod.CostMapping
    backends: tuple[BackendConfig, ...]
    save_crops: bool = True
    overlay_alpha: float = 0.45
    retry_on_parse_failure: bool = False
    source_path: str = ""

    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_id


def _backend_from_table(table: Mapping) -> BackendConfig:
    return BackendConfig(
        kind=table.get("kind", "http_chat"),
        model_tag=table.get("model_tag", ""),
        endpoint=table.get("endpoint", ""),
        temperature=float(table.get("temperature", 0.0)),
        max_output_tokens=int(table.get("max_output_tokens", 256)),
        timeout_s=float(table.get("timeout", 60.0)),
        max_retries=int(table.get("max_retries", 3)),
        max_parallel=int(table.get("max_parallel", 1)),
        credentials_env=table.get("credentials_env", ""),
        options=dict(table.get("options", {})),
    )


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML run config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run config not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed run config {path}: {exc}") from exc

    try:
        crop_table = raw.get("crop", {})
        crop = CropSpec(
            padding_ratio=float(crop_table.get("padding_ratio", 0.25)),
            highlight=crop_table.get("highlight", "outline"),
            max_edge=int(crop_table.get("max_edge", 768)),
        )
        cm_table = raw.get("costmap", {})
        costs_raw = cm_table.get("costs", {"1": 0, "2": 85, "3": 170, "4": 255})
        mapping = costmap_mod.CostMapping(
            costs={int(k): int(v) for k, v in costs_raw.items()},
            unassigned_cost=int(cm_table.get("unassigned_cost", 0)),
        )
        backends = tuple(_backend_from_table(t) for t in raw.get("backends", []))
        config = RunConfig(
            run_id=str(raw.get("run_id", "run")),
            dataset=str(raw.get("dataset", "")),
            out_dir=str(raw.get("out_dir", "runs")),
            seed=int(raw.get("seed", 0)),
            strategies=tuple(raw.get("strategies", ["plain"])),
            query_modes=tuple(raw.get("query_modes", ["per_instance_crop"])),
            temperatures=tuple(float(t) for t in raw.get("temperatures", [0.0])),
            robots=tuple(raw.get("robots", [])),
            crop=crop,
            mapping=mapping,
            backends=backends,
            save_crops=bool(raw.get("save_crops", True)),
            overlay_alpha=float(raw.get("overlay_alpha", 0.45)),
            retry_on_parse_failure=bool(raw.get("retry_on_parse_failure", False)),
            source_path=str(path),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid run config {path}: {exc}") from exc

    if not config.backends:
        raise ConfigError("run config needs at least one [[backends]] entry")
    for axis_name in ("strategies", "query_modes", "temperatures"):
        if not getattr(config, axis_name):
            raise ConfigError(f"run config axis {axis_name} must be non-empty")
    return config


@dataclass(frozen=True)
class _WorkItem:
    backend: BackendConfig
    strategy: str
    temperature: float
    query_mode: str
    robot_id: str
    image_id: str
    expected_keys: tuple[str, ...]  # instance ids answered by this request

    def record_keys(self, temperature: float | None = None) -> list[tuple]:
        t = self.temperature if temperature is None else temperature
        return [
            (inst, self.robot_id, self.backend.model_tag, self.strategy, t, self.query_mode)
            for inst in self.expected_keys
        ]


def _select_robots(manifest: DatasetManifest, wanted: Sequence[str]):
    if not wanted:
        return list(manifest.robots)
    missing = [r for r in wanted if r not in manifest.robots_by_id]
    if missing:
        raise ConfigError(f"run config names unknown robot(s): {', '.join(missing)}")
    return [manifest.robots_by_id[r] for r in wanted]


def _build_work_items(config: RunConfig, manifest: DatasetManifest) -> list[_WorkItem]:
    robots = _select_robots(manifest, config.robots)
    instances_by_image: dict[str, list[str]] = {}
    for inst in manifest.instances:
        instances_by_image.setdefault(inst.image_id, []).append(inst.id)

    items = []
    for backend in config.backends:
        for strategy in config.strategies:
            for temperature in config.temperatures:
                for mode in config.query_modes:
                    for robot in robots:
                        if mode == "per_instance_crop":
                            for inst in manifest.instances:
                                items.append(
                                    _WorkItem(backend, strategy, temperature, mode, robot.id, inst.image_id, (inst.id,))
                                )
                        else:
                            for image in manifest.images:
                                keys = tuple(instances_by_image.get(image.id, ()))
                                if keys:
                                    items.append(
                                        _WorkItem(backend, strategy, temperature, mode, robot.id, image.id, keys)
                                    )
    return items


@dataclass
class RateResult:
    run_dir: Path
    completed: int
    skipped: int
    records: list[dict] = field(default_factory=list)


def run_rate(
    config: RunConfig,
    dataset_root: str | Path | None = None,
    prompt_library: PromptLibrary | None = None,
    progress=None,
) -> RateResult:
    """Execute the full pipeline for every axis combination.

    For each pending item: extract the crop (or take the full image), render
    the prompt, send, parse, and durably append one PredictionRecord per
    expected key. Per-item transport errors are recorded as failures and the
    run continues. Finally, cost-maps and overlays are written per image from
    the primary axis combination (first backend/strategy/temperature/mode).
    """
    root = Path(dataset_root) if dataset_root is not None else Path(config.dataset)
    if not str(root):
        raise ConfigError("no dataset root: set 'dataset' in the config or pass --dataset")
    manifest = load_manifest(root)
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    if config.source_path:
        target = run_dir / "config.toml"
        if not target.exists():
            shutil.copyfile(config.source_path, target)

    store = JsonlStore(run_dir / "predictions.jsonl")
    store.recover()
    done = {prediction_key(rec) for rec in store.read_raw()}

    items = _build_work_items(config, manifest)
    pending = [item for item in items if any(key not in done for key in item.record_keys())]
    skipped = len(items) - len(pending)

    crops_dir = run_dir / "crops"
    saved_crops: set[str] = set()
    completed = 0

    by_combo: dict[tuple, list[_WorkItem]] = {}
    for item in pending:
        combo = (id(item.backend), item.strategy, item.temperature, item.query_mode)
        by_combo.setdefault(combo, []).append(item)

    for combo_items in by_combo.values():
        backend_cfg = replace(combo_items[0].backend, temperature=combo_items[0].temperature)
        gateway = VlmGateway(backend_cfg)
        chunk_size = max(1, backend_cfg.max_parallel)
        for start in range(0, len(combo_items), chunk_size):
            chunk = combo_items[start : start + chunk_size]
            requests_list = [_make_request(item, manifest, config, gateway, prompt_library) for item in chunk]
            results = gateway.send_batch([req for _, req in requests_list])
            for (item, req), result in zip(requests_list, results):
                parse_attempts = 1
                if config.retry_on_parse_failure and not isinstance(result, GatewayError):
                    if isinstance(parse_rating(result.raw_text, list(item.expected_keys)), ParseFailure):
                        try:
                            result = gateway.send(req)
                        except GatewayError:
                            pass  # keep the first (parseable-or-not) response
                        parse_attempts = 2
                for record in _records_for(item, result, config, parse_attempts):
                    if prediction_key(record) in done:
                        continue
                    store.append(record)
                    done.add(prediction_key(record))
                    completed += 1
                if progress:
                    progress(item, result)
            if config.save_crops:
                for item, req in requests_list:
                    if item.query_mode == "per_instance_crop" and item.expected_keys[0] not in saved_crops:
                        crop = extract_instance(
                            load_image(manifest, item.image_id),
                            load_mask(manifest, item.expected_keys[0]),
                            config.crop,
                            instance_id=item.expected_keys[0],
                        )
                        save_crop_png(crop, crops_dir)
                        saved_crops.add(item.expected_keys[0])

    _write_costmaps(config, manifest, store, run_dir)
    return RateResult(run_dir=run_dir, completed=completed, skipped=skipped, records=store.read_raw())


def _make_request(item: _WorkItem, manifest, config: RunConfig, gateway, prompt_library):
    robot = manifest.robots_by_id[item.robot_id]
    spec = PromptSpec(
        robot=robot,
        strategy=item.strategy,
        query_mode=item.query_mode,
        expected_keys=item.expected_keys,
    )
    from .prompts import render_prompt

    prompt = render_prompt(spec, prompt_library)
    image = load_image(manifest, item.image_id)
    if item.query_mode == "per_instance_crop":
        crop = extract_instance(
            image,
            load_mask(manifest, item.expected_keys[0]),
            config.crop,
            instance_id=item.expected_keys[0],
        )
        pixels = crop.pixels
    else:
        pixels = image
    request = VlmRequest(
        prompt=prompt,
        images=(pixels,),
        config=gateway.config,
        tag=f"{item.expected_keys[0]}:{item.robot_id}",
    )
    return item, request


def _records_for(item: _WorkItem, result, config: RunConfig, parse_attempts: int = 1) -> list[dict]:
    now = time.time()
    base = {
        "robot_id": item.robot_id,
        "model_tag": item.backend.model_tag,
        "strategy": item.strategy,
        "temperature": item.temperature,
        "query_mode": item.query_mode,
        "run_id": config.run_id,
        "created_at": now,
        "parse_attempts": parse_attempts,
    }
    records = []
    if isinstance(result, GatewayError):
        attempts = getattr(result, "attempts", 0)
        for inst in item.expected_keys:
            records.append(
                {
                    **base,
                    "instance_id": inst,
                    "outcome": {"failure": "transport_error"},
                    "latency_ms": 0.0,
                    "attempt_count": attempts,
                }
            )
        return records

    parsed = parse_rating(result.raw_text, list(item.expected_keys))
    for inst in item.expected_keys:
        record = {
            **base,
            "instance_id": inst,
            "latency_ms": result.latency_ms,
            "attempt_count": result.attempt_count,
        }
        if isinstance(parsed, ParsedRating):
            record["outcome"] = {"rating": parsed.ratings[inst].value}
            record["extraction_tier"] = parsed.extraction_tier
        else:
            record["outcome"] = {"failure": parsed.reason}
        records.append(record)
    return records


def _write_costmaps(config: RunConfig, manifest, store: JsonlStore, run_dir: Path) -> None:
    primary = (
        config.backends[0].model_tag,
        config.strategies[0],
        config.temperatures[0],
        config.query_modes[0],
    )
    outcome_by_instance: dict[tuple[str, str], dict] = {}
    for rec in store.read_raw():
        if (rec["model_tag"], rec["strategy"], rec["temperature"], rec["query_mode"]) == primary:
            outcome_by_instance[(rec["instance_id"], rec["robot_id"])] = rec["outcome"]

    robots = _select_robots(manifest, config.robots)
    for image in manifest.images:
        instances = [inst for inst in manifest.instances if inst.image_id == image.id]
        if not instances:
            continue
        # the same water can rate differently per platform, so there is one
        # map per robot; the first robot is the primary and takes the plain
        # <image_id> file name
        for robot_idx, robot in enumerate(robots):
            items = []
            for inst in instances:
                outcome = outcome_by_instance.get((inst.id, robot.id))
                if outcome is None:
                    continue
                items.append((inst.id, load_mask(manifest, inst.id), outcome.get("rating")))
            if not items:
                continue
            stem = image.id if robot_idx == 0 else f"{image.id}.{robot.id}"
            cm = costmap_mod.build_costmap(items, image.width, image.height, config.mapping, run_id=config.run_id)
            cm.provenance["robot_id"] = robot.id
            costmap_mod.save_costmap(cm, run_dir / "costmaps", stem)
            overlay = costmap_mod.render_overlay(load_image(manifest, image.id), cm, config.overlay_alpha)
            costmap_mod.save_overlay(overlay, run_dir / "overlays", stem)


def load_predictions(run_dir: str | Path) -> list[PredictionRecord]:
    store = JsonlStore(Path(run_dir) / "predictions.jsonl")
    return [PredictionRecord.from_json_dict(raw) for raw in store.read_raw()]


def run_eval(
    run_dir: str | Path,
    dataset_root: str | Path,
    policy: str = "median",
    group_by: Sequence[str] = DEFAULT_GROUP_BY,
    bin_width: float = 0.25,
) -> list[EvaluationReport]:
    """Score a finished run against consensus gold labels and write
    report.json / report.md into the run directory."""
    run_dir = Path(run_dir)
    preds = load_predictions(run_dir)
    if not preds:
        raise EvalError(f"no predictions found under {run_dir}")

    manifest = load_manifest(dataset_root)
    annotations_path = manifest.annotations_path()
    if not annotations_path.is_file():
        raise EvalError(f"no annotation store at {annotations_path}; gold labels underivable")
    records = load_annotation_records(annotations_path)
    gold = {key: rating.value for key, rating in dataset_mod.consensus_gold(records, policy).items()}

    missing = sorted({(p.instance_id, p.robot_id) for p in preds} - set(gold))
    if missing:
        raise EvalError(f"missing gold labels for predicted keys: {missing}")

    reports = group_report(preds, gold, group_by)
    agreement = dataset_mod.agreement_histogram(records, bin_width)
    (run_dir / "report.json").write_text(emit_report(reports, "json", agreement), encoding="utf-8")
    (run_dir / "report.md").write_text(emit_report(reports, "markdown", agreement), encoding="utf-8")
    return reports
