"""Zero-shot water traversability rating with vision-language models.

Subpackages cover the full loop: a multi-annotator dataset with consensus
and agreement statistics (`dataset`), mask-based instance cropping
(`extraction`), structured prompt rendering (`prompts`), a retrying backend
client (`gateway`), robust rating-dictionary recovery (`parsing`),
cost-map generation (`costmap`), a classification-style evaluation harness
(`evaluation`), an annotation HTTP service (`service`), and batch
orchestration plus a CLI (`pipeline`, `cli`).
"""

from .dataset import (
    RATING_LABELS,
    SCHEME_LINE,
    TASK_LINE,
    AgreementStats,
    AnnotationRecord,
    DatasetError,
    DatasetManifest,
    ImageRecord,
    RobotProfile,
    TraversabilityRating,
    Violation,
    WaterInstance,
    agreement_histogram,
    annotation_stddev,
    consensus_gold,
    consensus_label,
    load_manifest,
    validate_manifest,
)
from .extraction import CropSpec, InstanceCrop, extract_instance, split_connected_components
from .parsing import ParsedRating, ParseFailure, parse_rating
from .prompts import PromptLibrary, PromptSpec, RenderedPrompt, render_prompt, strategy_matrix
from .gateway import BackendConfig, MockBackend, MockRule, VlmGateway, VlmRequest, VlmResponse
from .costmap import CostMap, CostMapping, build_costmap, render_overlay
from .evaluation import (
    EvaluationReport,
    PredictionRecord,
    confusion,
    emit_report,
    group_report,
    leaderboard,
    per_class_f1,
)
from .fixture import build_fixture_dataset

__version__ = "0.1.0"

__all__ = [
    "AgreementStats",
    "AnnotationRecord",
    "BackendConfig",
    "CostMap",
    "CostMapping",
    "CropSpec",
    "DatasetError",
    "DatasetManifest",
    "EvaluationReport",
    "ImageRecord",
    "InstanceCrop",
    "MockBackend",
    "MockRule",
    "ParseFailure",
    "ParsedRating",
    "PredictionRecord",
    "PromptLibrary",
    "PromptSpec",
    "RATING_LABELS",
    "RenderedPrompt",
    "RobotProfile",
    "SCHEME_LINE",
    "TASK_LINE",
    "TraversabilityRating",
    "Violation",
    "VlmGateway",
    "VlmRequest",
    "VlmResponse",
    "WaterInstance",
    "agreement_histogram",
    "annotation_stddev",
    "build_costmap",
    "build_fixture_dataset",
    "confusion",
    "consensus_gold",
    "consensus_label",
    "emit_report",
    "extract_instance",
    "group_report",
    "leaderboard",
    "load_manifest",
    "parse_rating",
    "per_class_f1",
    "render_overlay",
    "render_prompt",
    "split_connected_components",
    "strategy_matrix",
    "validate_manifest",
]
