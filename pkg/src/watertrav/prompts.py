"""Deterministic rendering of the structured rating prompt.

Each prompt embeds the robot capability description, the task statement, the
verbatim rating scheme, and output instructions demanding a bare key-value
structure. Strategy decorations (role persona, chain-of-thought appendix,
rephrase-then-answer) live in versioned template files under
``templates/prompts/<strategy>/<mode>.txt`` so prompt variants can be swapped
and diffed without code changes. The shipped wording is a working default,
not a canonical text; results are known to be prompt-sensitive.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .dataset import RobotProfile, SCHEME_LINE, TASK_LINE

STRATEGIES = ("plain", "role", "rephrase_respond", "cot")
QUERY_MODES = ("per_instance_crop", "full_image_all_instances")

#: {keys} receives the JSON skeleton naming each expected key exactly once.
DEFAULT_OUTPUT_INSTRUCTIONS = (
    "Respond with only a JSON object that maps each key to an integer rating "
    "from 1 to 4, and nothing else. Use exactly this form: {keys}"
)

_TEMPLATE_ROOT = Path(__file__).parent / "templates" / "prompts"


@dataclass(frozen=True)
class PromptSpec:
    robot: RobotProfile
    strategy: str
    query_mode: str
    expected_keys: tuple[str, ...] = ()
    output_instructions: str = DEFAULT_OUTPUT_INSTRUCTIONS

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.query_mode not in QUERY_MODES:
            raise ValueError(f"query_mode must be one of {QUERY_MODES}, got {self.query_mode!r}")

    def with_keys(self, keys: Sequence[str]) -> "PromptSpec":
        return replace(self, expected_keys=tuple(keys))


@dataclass(frozen=True)
class RenderedPrompt:
    turns: tuple[tuple[str, str], ...]  # (role, text), role in {system, user}
    image_slots: int

    def text(self) -> str:
        return "\n\n".join(text for _, text in self.turns)


class PromptLibrary:
    """Loaded template set; render stays a pure function of (library, spec)."""

    def __init__(self, templates: dict[tuple[str, str], str], system_texts: dict[str, str]):
        self.templates = dict(templates)
        self.system_texts = dict(system_texts)

    @classmethod
    def load(cls, root: str | Path | None = None) -> "PromptLibrary":
        """Read templates from a directory tree (default: the shipped set)."""
        root = Path(root) if root is not None else _TEMPLATE_ROOT
        templates = {}
        system_texts = {}
        for strategy in STRATEGIES:
            for mode in QUERY_MODES:
                path = root / strategy / f"{mode}.txt"
                if path.is_file():
                    templates[(strategy, mode)] = path.read_text(encoding="utf-8").strip()
            system_path = root / strategy / "system.txt"
            if system_path.is_file():
                system_texts[strategy] = system_path.read_text(encoding="utf-8").strip()
        return cls(templates, system_texts)


_DEFAULT_LIBRARY: PromptLibrary | None = None


def default_library() -> PromptLibrary:
    global _DEFAULT_LIBRARY
    if _DEFAULT_LIBRARY is None:
        _DEFAULT_LIBRARY = PromptLibrary.load()
    return _DEFAULT_LIBRARY


def keys_skeleton(expected_keys: Sequence[str]) -> str:
    """JSON object skeleton with each expected key appearing exactly once."""
    return "{" + ", ".join(f'"{key}": <1-4>' for key in expected_keys) + "}"


def render_prompt(spec: PromptSpec, library: PromptLibrary | None = None) -> RenderedPrompt:
    """Render the prompt for one query; byte-identical for identical specs."""
    if not spec.expected_keys:
        raise ValueError("expected_keys must be non-empty at render time")
    if spec.query_mode == "per_instance_crop" and len(spec.expected_keys) != 1:
        raise ValueError("per_instance_crop mode takes exactly one expected key")
    library = library or default_library()
    try:
        template = library.templates[(spec.strategy, spec.query_mode)]
    except KeyError:
        raise ValueError(f"no template for strategy={spec.strategy!r} mode={spec.query_mode!r}") from None

    output_block = spec.output_instructions.format(keys=keys_skeleton(spec.expected_keys))
    user_text = template.format(
        robot_description=spec.robot.prompt_description,
        task=TASK_LINE,
        scheme=SCHEME_LINE,
        keys=output_block,
    )

    turns: list[tuple[str, str]] = []
    if spec.strategy == "role":
        turns.append(("system", library.system_texts["role"]))
    turns.append(("user", user_text))
    return RenderedPrompt(turns=tuple(turns), image_slots=1)


def strategy_matrix(
    robots: Sequence[RobotProfile],
    strategies: Sequence[str],
    modes: Sequence[str],
) -> list[PromptSpec]:
    """Cartesian sweep in stable order: robot-major, then strategy, then mode.

    Expected keys are filled per query later via PromptSpec.with_keys.
    """
    if not robots or not strategies or not modes:
        raise ValueError("strategy_matrix needs non-empty robots, strategies, and modes")
    return [
        PromptSpec(robot=robot, strategy=strategy, query_mode=mode)
        for robot, strategy, mode in itertools.product(robots, strategies, modes)
    ]
