"""Command-line entry point: validate, rate, eval, agreement, serve.

Exit codes: 0 ok, 1 domain failure (violations found, missing gold labels),
2 environment failure (unreadable dataset, bad config, occupied port).
"""

from __future__ import annotations

import argparse
import csv
import logging
import socket
import sys
from pathlib import Path

from .dataset import DatasetError, agreement_histogram, load_manifest, validate_manifest
from .pipeline import ConfigError, EvalError, load_run_config, run_eval, run_rate
from .store import load_annotation_records, read_annotation_lines

log = logging.getLogger("watertrav")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_ENV = 2


def cmd_validate(args) -> int:
    try:
        manifest = load_manifest(args.dataset)
    except DatasetError as exc:
        message = str(exc)
        if message.startswith("dangling reference"):
            print(f"1 violation(s)\n{message}")
            return EXIT_DOMAIN
        print(f"error: {message}", file=sys.stderr)
        return EXIT_ENV
    annotations_path = manifest.annotations_path()
    raw_annotations = read_annotation_lines(annotations_path) if annotations_path.is_file() else None
    violations = validate_manifest(manifest, raw_annotations)
    print(f"{len(violations)} violation(s)")
    for violation in violations:
        print(f"  {violation}")
    return EXIT_OK if not violations else EXIT_DOMAIN


def cmd_rate(args) -> int:
    try:
        config = load_run_config(args.config)
        result = run_rate(config, dataset_root=args.dataset)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    print(f"run dir: {result.run_dir}")
    print(f"recorded {result.completed} prediction(s), skipped {result.skipped} already-done item(s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        reports = run_eval(
            args.run,
            dataset_root=args.dataset,
            policy=args.policy,
            group_by=tuple(args.group_by.split(",")) if args.group_by else ("model", "strategy", "temperature"),
        )
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    for report in reports:
        group = ", ".join(f"{k}={v}" for k, v in report.group_key.items()) or "all"
        print(f"{group}: macro F1 {report.macro_f1:.4f}, failure rate {report.failure_rate:.4f} (n={report.n_scored})")
    print(f"reports written under {Path(args.run)}")
    return EXIT_OK


def cmd_agreement(args) -> int:
    try:
        manifest = load_manifest(args.dataset)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    annotations_path = manifest.annotations_path()
    if not annotations_path.is_file():
        print("error: no annotations found", file=sys.stderr)
        return EXIT_DOMAIN
    records = load_annotation_records(annotations_path)
    if not records:
        print("error: no annotations found", file=sys.stderr)
        return EXIT_DOMAIN
    stats = agreement_histogram(records, bin_width=args.bin_width)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "agreement.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for i, count in enumerate(stats.counts):
            writer.writerow([f"{stats.edges[i]:.6g}", f"{stats.edges[i + 1]:.6g}", count])

    png_path = out_dir / "agreement.png"
    _plot_histogram(stats, png_path)

    total = sum(stats.counts)
    print(f"{total} annotated (instance, robot) keys")
    for i, count in enumerate(stats.counts):
        closing = "]" if i == len(stats.counts) - 1 else ")"
        bar = "#" * count
        print(f"  [{stats.edges[i]:.2f}, {stats.edges[i + 1]:.2f}{closing} {count:4d} {bar}")
    print(f"wrote {csv_path} and {png_path}")
    return EXIT_OK


def _plot_histogram(stats, png_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lows = stats.edges[:-1]
    widths = [stats.edges[i + 1] - stats.edges[i] for i in range(len(stats.counts))]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(lows, stats.counts, width=widths, align="edge", edgecolor="black")
    ax.set_xlabel("std dev of annotators' ratings")
    ax.set_ylabel("(instance, robot) keys")
    ax.set_title("Annotator rating disagreement")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def cmd_serve(args) -> int:
    from .service import serve

    # fail fast with a clear exit code instead of a uvicorn traceback
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_ENV
    finally:
        probe.close()
    try:
        load_manifest(args.dataset)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    url = f"http://{args.host}:{args.port}/"
    if args.open:
        print(f"annotation UI: {url}")
    print(f"serving {args.dataset} on {url}", flush=True)
    serve(
        args.dataset,
        store_path=args.store,
        host=args.host,
        port=args.port,
        ui_dir=args.ui_dir,
        shuffle_seed=args.shuffle_seed,
        log_level="info" if args.verbose else "warning",
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="watertrav", description="Water traversability rating pipeline.")
    parser.add_argument("--verbose", action="store_true", help="verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a dataset root against every invariant")
    p_validate.add_argument("--dataset", required=True, help="dataset root directory")
    p_validate.set_defaults(func=cmd_validate)

    p_rate = sub.add_parser("rate", help="run the rating pipeline for a declared config")
    p_rate.add_argument("--config", required=True, help="TOML run config")
    p_rate.add_argument("--dataset", default=None, help="override the config's dataset root")
    p_rate.set_defaults(func=cmd_rate)

    p_eval = sub.add_parser("eval", help="score a finished run against consensus gold labels")
    p_eval.add_argument("--run", required=True, help="run directory (contains predictions.jsonl)")
    p_eval.add_argument("--dataset", required=True, help="dataset root with annotations.jsonl")
    p_eval.add_argument("--policy", default="median", choices=["median", "mean", "max"], help="gold label policy")
    p_eval.add_argument("--group-by", default="", help="comma-separated axes (model,strategy,temperature,robot,query_mode)")
    p_eval.set_defaults(func=cmd_eval)

    p_agree = sub.add_parser("agreement", help="annotator agreement histogram (text, CSV, PNG)")
    p_agree.add_argument("--dataset", required=True, help="dataset root with annotations.jsonl")
    p_agree.add_argument("--bin-width", type=float, default=0.25)
    p_agree.add_argument("--out", default="agreement_out", help="output directory for CSV/PNG")
    p_agree.set_defaults(func=cmd_agreement)

    p_serve = sub.add_parser("serve", help="run the annotation service")
    p_serve.add_argument("--dataset", required=True, help="dataset root directory")
    p_serve.add_argument("--store", default=None, help="annotation store path (default: <dataset>/annotations.jsonl)")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--ui-dir", default=None, help="directory with the built browser UI")
    p_serve.add_argument("--shuffle-seed", type=int, default=None, help="per-annotator task order shuffle")
    p_serve.add_argument("--open", action="store_true", help="print the UI URL on startup")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
