"""Deterministic synthetic dataset for tests, demos, and dry runs.

Builds a small scene set (default 6 images with 2 elliptical water bodies
each), per-instance binary masks, the two default robot profiles, and
optionally a seven-annotator rating store with realistic disagreement.
Everything derives from one seed, so repeated builds are byte-identical.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import DEFAULT_ROBOTS

IMAGE_W = 96
IMAGE_H = 72
BASE_TIMESTAMP = 1_700_000_000


def _terrain_background(rng: np.random.RandomState) -> np.ndarray:
    """Brown-green gradient with mild noise, vaguely like off-road ground."""
    y = np.linspace(0.0, 1.0, IMAGE_H)[:, None, None]
    top = np.array([96.0, 84.0, 58.0])
    bottom = np.array([74.0, 104.0, 52.0])
    base = top * (1 - y) + bottom * y
    noise = rng.normal(0.0, 6.0, size=(IMAGE_H, IMAGE_W, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def _ellipse_mask(cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    ys, xs = np.mgrid[0:IMAGE_H, 0:IMAGE_W]
    return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0


def _paint_water(image: np.ndarray, mask: np.ndarray, rng: np.random.RandomState) -> None:
    hue = np.array([40.0, 72.0, 140.0]) + rng.normal(0.0, 8.0, size=3)
    shade = rng.normal(0.0, 4.0, size=(IMAGE_H, IMAGE_W, 3))
    water = np.clip(hue[None, None, :] + shade, 0, 255)
    image[mask] = water[mask].astype(np.uint8)


def build_fixture_dataset(
    root: str | Path,
    n_images: int = 6,
    instances_per_image: int = 2,
    seed: int = 7,
    with_annotations: bool = True,
    n_annotators: int = 7,
) -> Path:
    """Create a complete dataset root; returns the root path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.RandomState(seed)

    images = []
    instances = []
    instance_index = 0
    for img_idx in range(n_images):
        image_id = f"img_{img_idx:03d}"
        pixels = _terrain_background(rng)
        # non-overlapping horizontal slots keep instance masks disjoint
        slot_w = IMAGE_W / instances_per_image
        for slot in range(instances_per_image):
            rx = rng.uniform(8, slot_w / 2 - 4)
            ry = rng.uniform(6, IMAGE_H / 3)
            cx = slot * slot_w + rng.uniform(rx + 2, slot_w - rx - 2)
            cy = rng.uniform(ry + 2, IMAGE_H - ry - 2)
            mask = _ellipse_mask(cx, cy, rx, ry)
            _paint_water(pixels, mask, rng)

            instance_id = f"instance_{instance_index:03d}"
            ys, xs = np.nonzero(mask)
            mask_rel = f"masks/{instance_id}.png"
            Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(root / mask_rel)
            instances.append(
                {
                    "id": instance_id,
                    "image_id": image_id,
                    "mask_path": mask_rel,
                    "pixel_count": int(mask.sum()),
                    "bbox": [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())],
                }
            )
            instance_index += 1

        image_rel = f"images/{image_id}.png"
        Image.fromarray(pixels).save(root / image_rel)
        images.append(
            {
                "id": image_id,
                "path": image_rel,
                "width": IMAGE_W,
                "height": IMAGE_H,
                "source": "synthetic",
            }
        )

    manifest = {
        "images": images,
        "instances": instances,
        "robots": [
            {
                "id": robot.id,
                "display_name": robot.display_name,
                "prompt_description": robot.prompt_description,
            }
            for robot in DEFAULT_ROBOTS
        ],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    if with_annotations:
        write_fixture_annotations(root, [i["id"] for i in instances], seed=seed, n_annotators=n_annotators)
    return root


def fixture_base_rating(instance_id: str, robot_id: str, seed: int = 7) -> int:
    """The deterministic 'true' rating the synthetic annotators perturb."""
    return random.Random(f"{seed}:{instance_id}:{robot_id}:base").randint(1, 4)


def write_fixture_annotations(
    root: str | Path,
    instance_ids,
    seed: int = 7,
    n_annotators: int = 7,
) -> Path:
    """Seven-rater store: each rating is the base rating plus occasional
    +-1 jitter, clipped to 1..4, so keys show varied but bounded spread."""
    root = Path(root)
    path = root / "annotations.jsonl"
    lines = []
    counter = 0
    for annotator_idx in range(n_annotators):
        annotator_id = f"rater_{annotator_idx:02d}"
        for instance_id in instance_ids:
            for robot in DEFAULT_ROBOTS:
                base = fixture_base_rating(instance_id, robot.id, seed)
                jitter_rng = random.Random(f"{seed}:{instance_id}:{robot.id}:{annotator_id}")
                jitter = jitter_rng.choice([-1, 0, 0, 0, 0, 1])
                rating = min(4, max(1, base + jitter))
                lines.append(
                    json.dumps(
                        {
                            "annotator_id": annotator_id,
                            "instance_id": instance_id,
                            "robot_id": robot.id,
                            "rating": rating,
                            "timestamp": BASE_TIMESTAMP + counter,
                        },
                        sort_keys=True,
                    )
                )
                counter += 1
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Generate the synthetic fixture dataset.")
    parser.add_argument("root", help="output directory for the dataset")
    parser.add_argument("--images", type=int, default=6)
    parser.add_argument("--per-image", type=int, default=2)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--no-annotations", action="store_true")
    args = parser.parse_args(argv)
    build_fixture_dataset(
        args.root,
        n_images=args.images,
        instances_per_image=args.per_image,
        seed=args.seed,
        with_annotations=not args.no_annotations,
    )
    print(f"fixture dataset written to {args.root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
