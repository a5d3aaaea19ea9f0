"""Multi-annotator water-traversability dataset: manifest loading, validation,
consensus labels, and inter-annotator agreement statistics.

A dataset root contains one ``manifest.json`` (arrays ``images``, ``instances``,
``robots``), binary instance masks as single-channel PNGs (0 = background,
255 = instance), and optionally an append-only annotation store
``annotations.jsonl`` with one rating record per line.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

#: The four-level ordinal rating scale. 1 is easiest, 4 is forbidden.
RATING_LABELS = {1: "smooth", 2: "rough", 3: "bumpy", 4: "non-navigable"}

#: Scheme line shown verbatim to annotators and models.
SCHEME_LINE = "1 – smooth, 2 – rough, 3 – bumpy, 4 – non-navigable/forbidden"

#: Task statement shown verbatim to annotators and models.
TASK_LINE = (
    "Judge whether the robot could traverse the water body shown "
    "without getting stuck or damaged."
)

#: Largest possible population std dev for values bounded in [1, 4].
MAX_RATING_STDDEV = 1.5

VALID_SOURCES = ("rugd", "rellis3d", "self", "cc0", "synthetic")

CONSENSUS_POLICIES = ("median", "mean", "max")


class DatasetError(Exception):
    """Structural problem in a dataset: missing file, malformed manifest,
    or a dangling reference. The message names the offending path/field."""


@dataclass(frozen=True)
class TraversabilityRating:
    """One rating on the 1..4 scale. Values outside the scale are rejected."""

    value: int

    def __post_init__(self):
        if not isinstance(self.value, int) or isinstance(self.value, bool) or self.value not in RATING_LABELS:
            raise ValueError(f"rating value must be one of {sorted(RATING_LABELS)}, got {self.value!r}")

    @property
    def label(self) -> str:
        return RATING_LABELS[self.value]


@dataclass(frozen=True)
class RobotProfile:
    id: str
    display_name: str
    prompt_description: str


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str
    width: int
    height: int
    source: str = "self"


@dataclass(frozen=True)
class WaterInstance:
    id: str
    image_id: str
    mask_path: str
    pixel_count: int
    bbox: tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive


@dataclass(frozen=True)
class AnnotationRecord:
    annotator_id: str
    instance_id: str
    robot_id: str
    rating: TraversabilityRating
    timestamp: float

    def to_json_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "instance_id": self.instance_id,
            "robot_id": self.robot_id,
            "rating": self.rating.value,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class Violation:
    rule: str
    entity_id: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.entity_id}: {self.detail}"


@dataclass(frozen=True)
class AgreementStats:
    """Per-(instance, robot) rating std devs plus their histogram.

    Bins are half-open [lo, hi) except the final bin, which is closed so the
    maximum possible std dev lands inside. ``edges`` has one more entry than
    ``counts`` and always ends at the scale maximum 1.5.
    """

    per_key: dict[tuple[str, str], float]
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    bin_width: float

    def to_json_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "edges": list(self.edges),
            "counts": list(self.counts),
            "per_key": [
                {"instance_id": inst, "robot_id": robot, "std_dev": sd}
                for (inst, robot), sd in sorted(self.per_key.items())
            ],
        }


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    images: tuple[ImageRecord, ...]
    instances: tuple[WaterInstance, ...]
    robots: tuple[RobotProfile, ...]
    images_by_id: Mapping[str, ImageRecord] = field(repr=False, default_factory=dict)
    instances_by_id: Mapping[str, WaterInstance] = field(repr=False, default_factory=dict)
    robots_by_id: Mapping[str, RobotProfile] = field(repr=False, default_factory=dict)

    def image_path(self, image: ImageRecord) -> Path:
        return self.root / image.path

    def mask_path(self, instance: WaterInstance) -> Path:
        return self.root / instance.mask_path

    def annotations_path(self) -> Path:
        return self.root / "annotations.jsonl"


def load_image(manifest: DatasetManifest, image_id: str) -> np.ndarray:
    """Load an image as an (H, W, 3) uint8 array."""
    image = manifest.images_by_id[image_id]
    with Image.open(manifest.image_path(image)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_mask(manifest: DatasetManifest, instance_id: str) -> np.ndarray:
    """Load an instance mask as an (H, W) bool array (foreground = True)."""
    instance = manifest.instances_by_id[instance_id]
    with Image.open(manifest.mask_path(instance)) as im:
        return np.asarray(im.convert("L")) > 127


def _require(entry: Mapping, key: str, where: str):
    if key not in entry:
        raise DatasetError(f"malformed manifest: missing field '{key}' in {where}")
    return entry[key]


def load_manifest(root: str | Path) -> DatasetManifest:
    """Load and fully resolve ``manifest.json`` under ``root``.

    Raises DatasetError for a missing/malformed manifest or any dangling
    reference (unknown image id, nonexistent image or mask file).
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"missing file: {manifest_path}")
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DatasetError(f"malformed manifest: {manifest_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetError(f"malformed manifest: {manifest_path}: top level must be an object")

    images = []
    for entry in _require(raw, "images", str(manifest_path)):
        images.append(
            ImageRecord(
                id=str(_require(entry, "id", "images[]")),
                path=str(_require(entry, "path", "images[]")),
                width=int(_require(entry, "width", "images[]")),
                height=int(_require(entry, "height", "images[]")),
                source=str(entry.get("source", "self")),
            )
        )
    instances = []
    for entry in _require(raw, "instances", str(manifest_path)):
        bbox = _require(entry, "bbox", "instances[]")
        if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
            raise DatasetError(f"malformed manifest: instances[].bbox must be [x0, y0, x1, y1], got {bbox!r}")
        instances.append(
            WaterInstance(
                id=str(_require(entry, "id", "instances[]")),
                image_id=str(_require(entry, "image_id", "instances[]")),
                mask_path=str(_require(entry, "mask_path", "instances[]")),
                pixel_count=int(_require(entry, "pixel_count", "instances[]")),
                bbox=tuple(int(v) for v in bbox),
            )
        )
    robots = []
    for entry in _require(raw, "robots", str(manifest_path)):
        robots.append(
            RobotProfile(
                id=str(_require(entry, "id", "robots[]")),
                display_name=str(entry.get("display_name", entry["id"])),
                prompt_description=str(_require(entry, "prompt_description", "robots[]")),
            )
        )

    for name, items in (("images", images), ("instances", instances), ("robots", robots)):
        ids = [item.id for item in items]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"malformed manifest: duplicate id(s) in {name}: {', '.join(dupes)}")

    images_by_id = {im.id: im for im in images}
    for inst in instances:
        if inst.image_id not in images_by_id:
            raise DatasetError(
                f"dangling reference: instance '{inst.id}' field 'image_id' -> unknown image '{inst.image_id}'"
            )
        if not (root / inst.mask_path).is_file():
            raise DatasetError(
                f"dangling reference: instance '{inst.id}' field 'mask_path' -> missing file {root / inst.mask_path}"
            )
    for im in images:
        if not (root / im.path).is_file():
            raise DatasetError(f"dangling reference: image '{im.id}' field 'path' -> missing file {root / im.path}")

    return DatasetManifest(
        root=root,
        images=tuple(images),
        instances=tuple(instances),
        robots=tuple(robots),
        images_by_id=images_by_id,
        instances_by_id={inst.id: inst for inst in instances},
        robots_by_id={r.id: r for r in robots},
    )


def validate_manifest(
    manifest: DatasetManifest,
    annotations: Iterable[Mapping] | None = None,
) -> list[Violation]:
    """Check every type invariant; returns one Violation per breach.

    ``annotations`` takes raw record dicts (e.g. from `read_annotation_lines`)
    so that out-of-range ratings can be reported instead of crashing.
    """
    violations = []

    for im in manifest.images:
        if im.width <= 0 or im.height <= 0:
            violations.append(Violation("image_dims_nonpositive", im.id, f"{im.width}x{im.height}"))
            continue
        with Image.open(manifest.image_path(im)) as handle:
            actual_w, actual_h = handle.size
        if (actual_w, actual_h) != (im.width, im.height):
            violations.append(
                Violation("image_dims_mismatch", im.id, f"declared {im.width}x{im.height}, file {actual_w}x{actual_h}")
            )

    for inst in manifest.instances:
        im = manifest.images_by_id[inst.image_id]
        mask = load_mask(manifest, inst.id)
        if mask.shape != (im.height, im.width):
            violations.append(
                Violation(
                    "mask_dims_mismatch",
                    inst.id,
                    f"mask {mask.shape[1]}x{mask.shape[0]} vs image {im.width}x{im.height}",
                )
            )
            continue
        actual_count = int(mask.sum())
        if actual_count == 0 or inst.pixel_count <= 0:
            violations.append(Violation("empty_mask", inst.id, f"declared {inst.pixel_count}, mask has {actual_count}"))
            continue
        if actual_count != inst.pixel_count:
            violations.append(
                Violation("pixel_count_mismatch", inst.id, f"declared {inst.pixel_count}, mask has {actual_count}")
            )
        ys, xs = np.nonzero(mask)
        tight = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        if tight != inst.bbox:
            violations.append(Violation("bbox_mismatch", inst.id, f"declared {inst.bbox}, tight {tight}"))

    for robot in manifest.robots:
        if not robot.prompt_description.strip():
            violations.append(Violation("empty_prompt_description", robot.id, "prompt_description is empty"))

    if annotations is not None:
        for i, rec in enumerate(annotations):
            entity = str(rec.get("annotator_id", f"line {i + 1}"))
            missing = [k for k in ("annotator_id", "instance_id", "robot_id", "rating") if k not in rec]
            if missing:
                violations.append(Violation("missing_field", entity, f"annotation lacks {', '.join(missing)}"))
                continue
            rating = rec["rating"]
            if not isinstance(rating, int) or isinstance(rating, bool) or rating not in RATING_LABELS:
                violations.append(Violation("rating_out_of_range", entity, f"rating {rating!r} not in 1..4"))
            if rec["instance_id"] not in manifest.instances_by_id:
                violations.append(Violation("dangling_reference", entity, f"unknown instance '{rec['instance_id']}'"))
            if rec["robot_id"] not in manifest.robots_by_id:
                violations.append(Violation("dangling_reference", entity, f"unknown robot '{rec['robot_id']}'"))

    return violations


def annotation_stddev(ratings: Sequence[int]) -> float:
    """Population standard deviation (divide by n) of rating values.

    Defined for a single rating (0.0) and bounded by [0, 1.5] for values
    in 1..4.
    """
    if len(ratings) == 0:
        raise ValueError("annotation_stddev needs at least one rating")
    values = []
    for r in ratings:
        if not isinstance(r, (int, np.integer)) or isinstance(r, bool) or not 1 <= int(r) <= 4:
            raise ValueError(f"rating {r!r} not in 1..4")
        values.append(int(r))
    # integer ratings make the variance an exact rational; doing the algebra
    # in exact integer arithmetic gives the correctly rounded result, so bin
    # assignments near edges cannot drift by one ulp
    n = len(values)
    total = sum(values)
    total_sq = sum(v * v for v in values)
    return math.sqrt((n * total_sq - total * total) / (n * n))


def consensus_label(ratings: Sequence[int], policy: str = "median") -> TraversabilityRating:
    """Collapse several annotators' ratings into one gold rating.

    median (default): half-integer medians round up, toward less traversable.
    mean: arithmetic mean, ties at .5 also rounded up.
    max: most conservative rating given by any annotator.
    """
    if len(ratings) == 0:
        raise ValueError("consensus_label needs at least one rating")
    values = sorted(int(r) for r in ratings)
    for r in values:
        if not 1 <= r <= 4:
            raise ValueError(f"rating {r!r} not in 1..4")
    if policy == "median":
        n = len(values)
        if n % 2 == 1:
            result = values[n // 2]
        else:
            result = math.ceil((values[n // 2 - 1] + values[n // 2]) / 2)
    elif policy == "mean":
        result = math.floor(sum(values) / len(values) + 0.5)
    elif policy == "max":
        result = values[-1]
    else:
        raise ValueError(f"unknown consensus policy {policy!r}; expected one of {CONSENSUS_POLICIES}")
    return TraversabilityRating(int(result))


def histogram_edges(bin_width: float) -> tuple[float, ...]:
    """Bin edges covering [0, 1.5]: multiples of bin_width, final edge clamped."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    n_bins = math.ceil(MAX_RATING_STDDEV / bin_width - 1e-12)
    edges = [i * bin_width for i in range(n_bins)]
    edges.append(MAX_RATING_STDDEV)
    return tuple(edges)


def histogram_bin_index(edges: Sequence[float], value: float) -> int:
    """Index of the half-open bin [lo, hi) containing value; final bin closed."""
    idx = bisect_right(edges, value) - 1
    return min(idx, len(edges) - 2)


def agreement_histogram(
    records: Iterable[AnnotationRecord],
    bin_width: float = 0.25,
) -> AgreementStats:
    """Std dev of ratings per (instance, robot) key, plus their distribution.

    Records are grouped by key; each key with at least one annotation
    contributes one std dev and one histogram count.
    """
    by_key: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        by_key.setdefault((rec.instance_id, rec.robot_id), []).append(rec.rating.value)
    if not by_key:
        raise ValueError("no annotations at all")

    per_key = {key: annotation_stddev(vals) for key, vals in sorted(by_key.items())}
    edges = histogram_edges(bin_width)
    counts = [0] * (len(edges) - 1)
    for sd in per_key.values():
        counts[histogram_bin_index(edges, sd)] += 1
    return AgreementStats(per_key=per_key, edges=edges, counts=tuple(counts), bin_width=bin_width)


def consensus_gold(
    records: Iterable[AnnotationRecord],
    policy: str = "median",
) -> dict[tuple[str, str], TraversabilityRating]:
    """Gold label per (instance, robot) key from all annotators' ratings."""
    by_key: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        by_key.setdefault((rec.instance_id, rec.robot_id), []).append(rec.rating.value)
    return {key: consensus_label(vals, policy) for key, vals in sorted(by_key.items())}


def parse_annotation_record(raw: Mapping) -> AnnotationRecord:
    """Build a typed record from a raw store dict; raises on invalid fields."""
    missing = [k for k in ("annotator_id", "instance_id", "robot_id", "rating") if k not in raw]
    if missing:
        raise DatasetError(f"annotation record missing field(s): {', '.join(missing)}")
    rating = raw["rating"]
    if not isinstance(rating, int) or isinstance(rating, bool):
        raise DatasetError(f"annotation rating must be an integer, got {rating!r}")
    return AnnotationRecord(
        annotator_id=str(raw["annotator_id"]),
        instance_id=str(raw["instance_id"]),
        robot_id=str(raw["robot_id"]),
        rating=TraversabilityRating(rating),
        timestamp=float(raw.get("timestamp", 0.0)),
    )


#: Default robot roster. The capability text is editable configuration: it is
#: what the prompt engine interpolates for {robot_description}.
DEFAULT_ROBOTS = (
    RobotProfile(
        id="husky_a200",
        display_name="Clearpath Husky A200",
        prompt_description=(
            "a four-wheeled skid-steer ground robot (Clearpath Husky A200) with "
            "about 13 cm of ground clearance; its electronics are not waterproof, "
            "so water deeper than the wheel hubs or soft mud poses a serious risk"
        ),
    ),
    RobotProfile(
        id="unitree_b1",
        display_name="Unitree B1",
        prompt_description=(
            "a quadruped robot (Unitree B1) with roughly 50 cm standing height and "
            "high stepping clearance; it is splash-resistant and can wade through "
            "shallow water over firm ground"
        ),
    ),
)
