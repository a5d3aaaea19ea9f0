"""Build the synthetic dataset, validate it, and look at rater agreement.

Walks the data side of the toolkit: manifest loading, invariant validation,
consensus gold labels, and the per-key std-dev histogram.

Run:  python demos/01_dataset_agreement.py
"""

import tempfile
from pathlib import Path

from watertrav import (
    agreement_histogram,
    build_fixture_dataset,
    consensus_gold,
    load_manifest,
    validate_manifest,
)
from watertrav.store import load_annotation_records

root = Path(tempfile.mkdtemp(prefix="watertrav_demo_")) / "dataset"
build_fixture_dataset(root)
print(f"dataset written to {root}")

manifest = load_manifest(root)
print(f"{len(manifest.images)} images, {len(manifest.instances)} instances, {len(manifest.robots)} robots")

violations = validate_manifest(manifest)
print(f"validation: {len(violations)} violation(s)")

records = load_annotation_records(manifest.annotations_path())
print(f"{len(records)} annotation records from 7 synthetic raters")

gold = consensus_gold(records)
print("\nconsensus labels (first 6 keys):")
for (instance_id, robot_id), rating in list(gold.items())[:6]:
    print(f"  {instance_id} / {robot_id}: {rating.value} ({rating.label})")

stats = agreement_histogram(records, bin_width=0.25)
print("\nrating disagreement (std dev per instance-robot key):")
for i, count in enumerate(stats.counts):
    closing = "]" if i == len(stats.counts) - 1 else ")"
    print(f"  [{stats.edges[i]:.2f}, {stats.edges[i + 1]:.2f}{closing} {'#' * count}{count:>4}")

worst = max(stats.per_key.items(), key=lambda kv: kv[1])
print(f"\nmost contested key: {worst[0][0]} / {worst[0][1]} (std dev {worst[1]:.3f})")
