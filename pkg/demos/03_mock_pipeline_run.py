"""The whole pipeline end to end against the scripted mock backend.

Writes a run config, executes rate (extract, prompt, send, parse, record,
cost-maps), then eval (consensus gold, confusion, per-class F1, reports).
No model server is needed; swap the [[backends]] block for a real endpoint
to rate with an actual model (see docs/run_config.md).

Run:  python demos/03_mock_pipeline_run.py
"""

from pathlib import Path

from watertrav import load_manifest
from watertrav.fixture import build_fixture_dataset, fixture_base_rating
from watertrav.pipeline import load_run_config, run_eval, run_rate

out = Path("demo_out")
root = out / "dataset"
if not (root / "manifest.json").exists():
    build_fixture_dataset(root)
manifest = load_manifest(root)

# script the mock: mostly plausible answers, two instances left unparseable
rating_lines = []
unparseable = []
for robot in manifest.robots:
    for inst in manifest.instances:
        tag = f"{inst.id}:{robot.id}"
        if inst.id == "instance_005":
            unparseable.append(f'"{tag}"')
        else:
            rating_lines.append(f'"{tag}" = {fixture_base_rating(inst.id, robot.id)}')

config_path = out / "mock_run.toml"
config_path.write_text(
    f"""\
run_id = "demo"
dataset = "{root}"
out_dir = "{out / 'runs'}"
strategies = ["plain", "cot"]
query_modes = ["per_instance_crop"]
temperatures = [0.0]

[crop]
padding_ratio = 0.25
highlight = "outline"
max_edge = 512

[[backends]]
kind = "mock"
model_tag = "mock-vlm"
max_parallel = 4

[backends.options]
unparseable = [{', '.join(unparseable)}]

[backends.options.ratings]
{chr(10).join(rating_lines)}
""",
    encoding="utf-8",
)

result = run_rate(load_run_config(config_path))
print(f"run dir: {result.run_dir}")
print(f"recorded {result.completed} predictions ({result.skipped} skipped as already done)")

reports = run_eval(result.run_dir, root)
print()
for report in reports:
    group = ", ".join(f"{k}={v}" for k, v in report.group_key.items())
    print(
        f"{group}: macro F1 {report.macro_f1:.3f}, "
        f"failure rate {report.failure_rate:.3f}, MAE {report.mae:.3f} (n={report.n_scored})"
    )
print(f"\nfull reports: {result.run_dir / 'report.md'}")
print(f"cost-maps:    {result.run_dir / 'costmaps'}")
print(f"overlays:     {result.run_dir / 'overlays'}")
