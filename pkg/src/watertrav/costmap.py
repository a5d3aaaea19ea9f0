"""Fuse per-instance ratings back into segmentation masks as a cost raster.

Costs live in one byte: the default mapping spaces the four ratings evenly
(0, 85, 170, 255) with 255 doubling as the forbidden sentinel, matching
occupancy-grid conventions. An instance whose prediction failed is treated
as untraversable; overlapping instances resolve to the higher cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

FORBIDDEN_COST = 255


@dataclass(frozen=True)
class CostMapping:
    costs: Mapping[int, int] = field(default_factory=lambda: {1: 0, 2: 85, 3: 170, 4: 255})
    unassigned_cost: int = 0

    def __post_init__(self):
        if sorted(self.costs) != [1, 2, 3, 4]:
            raise ValueError("cost mapping must cover exactly ratings 1..4")
        values = [self.costs[r] for r in (1, 2, 3, 4)]
        if any(not 0 <= v <= 255 for v in values) or not 0 <= self.unassigned_cost <= 255:
            raise ValueError("cost values must be in 0..255")
        if not (values[0] < values[1] < values[2] < values[3]):
            raise ValueError("costs must be strictly increasing in rating")
        if values[3] != FORBIDDEN_COST:
            raise ValueError(f"rating 4 must map to the forbidden value {FORBIDDEN_COST}")


@dataclass(frozen=True, eq=False)
class CostMap:
    width: int
    height: int
    grid: np.ndarray  # (height, width) uint8
    provenance: dict


def build_costmap(
    items: Sequence[tuple[str, np.ndarray, int | None]],
    width: int,
    height: int,
    mapping: CostMapping = CostMapping(),
    run_id: str = "",
) -> CostMap:
    """Rasterize rated instances into a cost map.

    items: (instance_id, boolean mask, rating or None). None marks a failed
    prediction and paints the forbidden value 255 under that mask. Overlaps
    take the maximum cost, so the result does not depend on item order.
    """
    grid = np.full((height, width), mapping.unassigned_cost, dtype=np.uint8)
    ratings: dict[str, object] = {}
    for instance_id, mask, rating in items:
        if mask.shape != (height, width):
            raise ValueError(f"mask for instance {instance_id!r} is {mask.shape}, expected {(height, width)}")
        if rating is None:
            cost = FORBIDDEN_COST
            ratings[instance_id] = None
        else:
            cost = mapping.costs[int(rating)]
            ratings[instance_id] = int(rating)
        region = mask.astype(bool)
        grid[region] = np.maximum(grid[region], cost)
    provenance = {
        "run_id": run_id,
        "ratings": ratings,
        "costs": {str(r): mapping.costs[r] for r in (1, 2, 3, 4)},
        "unassigned_cost": mapping.unassigned_cost,
    }
    return CostMap(width=width, height=height, grid=grid, provenance=provenance)


def cost_color_lut() -> np.ndarray:
    """RGB ramp per cost byte: green through yellow to red; 255 is solid red."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for cost in range(255):
        t = cost / 254.0
        lut[cost, 0] = int(round(255 * min(1.0, 2.0 * t)))
        lut[cost, 1] = int(round(255 * min(1.0, 2.0 * (1.0 - t))))
    lut[255] = (255, 0, 0)
    return lut


_LUT = cost_color_lut()


def render_overlay(image: np.ndarray, costmap: CostMap, alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend the cost color ramp over the source image."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if image.shape[:2] != (costmap.height, costmap.width):
        raise ValueError(f"image {image.shape[:2]} does not match costmap {(costmap.height, costmap.width)}")
    if alpha == 0.0:
        return np.array(image, dtype=np.uint8)
    colors = _LUT[costmap.grid]
    blended = (1.0 - alpha) * image.astype(np.float64) + alpha * colors.astype(np.float64)
    return np.rint(blended).astype(np.uint8)


def save_costmap(costmap: CostMap, out_dir: str | Path, image_id: str) -> tuple[Path, Path]:
    """Write ``costmaps/<image_id>.png`` (8-bit grayscale) and its JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png_path = out_dir / f"{image_id}.png"
    Image.fromarray(costmap.grid, mode="L").save(png_path, format="PNG")
    meta_path = out_dir / f"{image_id}.meta.json"
    meta_path.write_text(json.dumps(costmap.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return png_path, meta_path


def save_overlay(overlay: np.ndarray, out_dir: str | Path, image_id: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{image_id}.png"
    Image.fromarray(overlay).save(path, format="PNG")
    return path
