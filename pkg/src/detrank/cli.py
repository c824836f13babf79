"""Command-line surface: batch scoring, zoo ranking, evaluation against
fine-tuning ground truth, subset-stability runs, synthetic bundles,
pyramid-level assignment, and benchmark-table reproduction.

Exit codes: 0 success, 1 usage, 2 I/O or data format, 3 not applicable,
4 numerical failure. No command leaves a partial output file behind:
results are staged to a temp file and renamed into place.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bundle import (
    FeatureBundle,
    _atomic_write_bytes,
    read_bundle,
    synth_bundle,
    write_bundle,
)
from .errors import (
    BundleCorruptionError,
    BundleFormatError,
    BundleValidationError,
    NotApplicableError,
    NumericalError,
)
from .baselines import knas_score, sfda_score
from .geometry import PyramidConfig, assign_pyramid_levels
from .ranking import (
    RankRecord,
    compute_stability,
    kendall_tau_plain,
    kendall_tau_weighted,
    pearson_weighted,
    rel_at_1,
    render_repro_csv,
    render_repro_markdown,
    render_stability_csv,
    render_stability_summary,
    reproduce_tables,
)
from .scores import (
    SCORE_CSV_COLUMNS,
    ScoreConfig,
    score_det_logme,
    score_iou_logme,
    score_logme,
    score_u_logme,
)

BUNDLE_SUFFIX = ".dtfb"

SCORE_METHODS = ("logme", "u-logme", "iou-logme", "det-logme", "sfda", "knas")
EVAL_METRICS = ("tauw-plain", "tauw-weighted", "pearson", "rel1")
_ID_COLUMNS = ("model_id", "model_name", "model")
_GT_COLUMNS = ("map", "gt_map", "mAP")
_NA_CELLS = ("NA", "N/A", "")


class _UsageError(Exception):
    """Flag combination rejected before any file I/O."""


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Shared helpers


def _emit(text: str, output: str | None) -> None:
    """Print to stdout, or atomically write to ``output``."""
    if output is None:
        sys.stdout.write(text)
    else:
        _atomic_write_bytes(Path(output), text.encode("utf-8"))


def _render_records(
    records: Sequence[dict], columns: Sequence[str], fmt: str
) -> str:
    """Render dict rows as csv, markdown, or json-lines."""
    if fmt == "json-lines":
        return "".join(
            json.dumps({c: r[c] for c in columns}) + "\n" for r in records
        )
    if fmt == "markdown":
        lines = [
            "| " + " | ".join(columns) + " |",
            "|" + "---|" * len(columns),
        ]
        lines += [
            "| " + " | ".join(_cell(r[c]) for c in columns) + " |"
            for r in records
        ]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow({c: _cell(r[c]) for c in columns})
    return buf.getvalue()


def _cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _score_config(args: argparse.Namespace) -> ScoreConfig:
    return ScoreConfig(
        mu=getattr(args, "mu", 1.0),
        normalization=args.normalization,
        tol=args.tol,
        max_iter=args.max_iter,
        norm_by_targets=(args.norm_denominator == "observations"),
    )


def _pyramid_config(args: argparse.Namespace) -> PyramidConfig:
    return PyramidConfig(
        base_level=args.base_level,
        min_level=args.min_level,
        max_level=args.max_level,
        small_thresh=args.small_thresh,
        large_thresh=args.large_thresh,
    )


def _add_format_flags(p: argparse.ArgumentParser, default: str = "csv") -> None:
    p.add_argument(
        "--format",
        choices=("csv", "markdown", "json-lines"),
        default=default,
        help=f"output format (default: {default})",
    )
    p.add_argument("--output", help="write result here (atomic); default stdout")


def _add_evidence_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--normalization",
        choices=("center", "border"),
        default="center",
        help="box target representation (default: center)",
    )
    p.add_argument(
        "--norm-denominator",
        choices=("observations", "objects"),
        default="observations",
        help="divide log-evidence by objects*targets (observations, default) "
        "or by objects alone",
    )
    p.add_argument("--tol", type=float, default=1e-6, help="fixed-point tolerance")
    p.add_argument("--max-iter", type=int, default=200, help="fixed-point cap")


def _add_pyramid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-level", type=int, default=3, help="level of a 224px box")
    p.add_argument("--min-level", type=int, default=2, help="lowest pyramid level")
    p.add_argument("--max-level", type=int, default=5, help="highest pyramid level")
    p.add_argument(
        "--small-thresh",
        type=float,
        default=64.0,
        help="max side below this forces min-level",
    )
    p.add_argument(
        "--large-thresh",
        type=float,
        default=512.0,
        help="max side above this forces max-level",
    )


def _read_table(path: str) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        fields = list(reader.fieldnames or [])
        rows = list(reader)
    if not fields:
        raise ValueError(f"{path}: empty CSV (no header)")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return fields, rows


def _table_model_ids(
    path: str, fields: list[str], rows: list[dict[str, str]]
) -> list[str]:
    """Model identifiers: model_id / model_name / model (+backbone)."""
    for column in _ID_COLUMNS:
        if column in fields:
            if column == "model" and "backbone" in fields:
                ids = [f"{r['model']} {r['backbone']}" for r in rows]
            else:
                ids = [r[column] for r in rows]
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            if duplicates:
                raise ValueError(f"{path}: duplicate model ids: {duplicates}")
            return ids
    raise ValueError(
        f"{path}: no model id column (expected one of {list(_ID_COLUMNS)})"
    )


def _table_gt_column(path: str, fields: list[str]) -> str:
    for column in _GT_COLUMNS:
        if column in fields:
            return column
    raise ValueError(
        f"{path}: no ground-truth column (expected one of {list(_GT_COLUMNS)})"
    )


def _parse_float_column(
    path: str, rows: list[dict[str, str]], column: str
) -> np.ndarray:
    values = []
    for i, row in enumerate(rows):
        cell = row[column].strip()
        if cell.upper() in _NA_CELLS:
            raise ValueError(f"{path}: column {column!r} has NA at row {i}")
        try:
            values.append(float(cell))
        except ValueError as exc:
            raise ValueError(
                f"{path}: column {column!r} row {i}: {cell!r} is not numeric"
            ) from exc
    return np.array(values, dtype=np.float64)


def _join_gt(
    score_ids: list[str], gt_path: str
) -> np.ndarray:
    """Ground truth aligned to score_ids; unmatched ids are an error."""
    fields, rows = _read_table(gt_path)
    gt_ids = _table_model_ids(gt_path, fields, rows)
    gt_col = _table_gt_column(gt_path, fields)
    gt_values = _parse_float_column(gt_path, rows, gt_col)
    lookup = dict(zip(gt_ids, gt_values))
    unmatched = [i for i in score_ids if i not in lookup]
    if unmatched:
        raise ValueError(
            f"model ids missing from {gt_path}: {', '.join(sorted(unmatched))}"
        )
    return np.array([lookup[i] for i in score_ids], dtype=np.float64)


def _load_bundle(path: str) -> FeatureBundle:
    return read_bundle(path)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_score(args: argparse.Namespace) -> int:
    if args.method == "det-logme":
        raise _UsageError("det-logme requires a zoo (use rank)")
    bundle = _load_bundle(args.bundle)
    cfg = _score_config(args)
    if args.method == "logme":
        value = score_logme(bundle, cfg)
    elif args.method == "u-logme":
        value, _ = score_u_logme(bundle, cfg)
    elif args.method == "iou-logme":
        _, solution = score_u_logme(bundle, cfg)
        value = score_iou_logme(bundle, solution, cfg)
    elif args.method == "sfda":
        value = sfda_score(bundle, shrinkage_rate=args.shrinkage_rate)
    elif args.method == "knas":
        if bundle.gradients is None:
            raise NotApplicableError(
                f"knas needs per-object gradients; {args.bundle} has none"
            )
        value = knas_score(bundle.gradients.astype(np.float64))
    else:  # pragma: no cover - argparse choices forbid this
        raise _UsageError(f"unknown method {args.method!r}")
    record = {
        "model_name": bundle.model_name,
        "method": args.method,
        "score": float(value),
    }
    _emit(
        _render_records([record], ("model_name", "method", "score"), args.format),
        args.output,
    )
    return 0


def _collect_bundle_paths(args: argparse.Namespace) -> list[Path]:
    paths = [Path(p) for p in args.bundle or []]
    if args.bundles_dir is not None:
        directory = Path(args.bundles_dir)
        if not directory.is_dir():
            raise FileNotFoundError(f"not a directory: {directory}")
        paths += sorted(directory.glob(f"*{BUNDLE_SUFFIX}"))
    return paths


def _cmd_rank(args: argparse.Namespace) -> int:
    paths = _collect_bundle_paths(args)
    if len(paths) < 2:
        raise _UsageError(
            f"rank requires at least 2 bundles, found {len(paths)}"
        )
    zoo = [_load_bundle(str(p)) for p in paths]
    scores = score_det_logme(zoo, _score_config(args))
    records = sorted(
        scores.to_records(),
        key=lambda r: (-r["det_logme"], r["model_name"]),
    )
    _emit(_render_records(records, SCORE_CSV_COLUMNS, args.format), args.output)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    requested = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in requested if m not in EVAL_METRICS]
    if unknown or not requested:
        raise _UsageError(
            f"unknown metrics {unknown}; choose from {list(EVAL_METRICS)}"
        )
    fields, rows = _read_table(args.scores)
    ids = _table_model_ids(args.scores, fields, rows)
    if args.score_column not in fields:
        raise ValueError(
            f"{args.scores}: no column {args.score_column!r}; "
            f"available: {fields}"
        )
    score_values = _parse_float_column(args.scores, rows, args.score_column)
    gt = _join_gt(ids, args.gt)
    records = [
        RankRecord(model_id=i, score=float(s), gt_map=float(g))
        for i, s, g in zip(ids, score_values, gt)
    ]
    computed: dict[str, float] = {}
    for metric in requested:
        if metric == "tauw-plain":
            computed[metric] = kendall_tau_plain(records)
        elif metric == "tauw-weighted":
            computed[metric] = kendall_tau_weighted(records)
        elif metric == "pearson":
            computed[metric] = pearson_weighted(records)
        else:
            computed[metric] = rel_at_1(records)
    out_records = [{"metric": m, "value": computed[m]} for m in requested]
    _emit(_render_records(out_records, ("metric", "value"), args.format), args.output)
    return 0


def _stability_columns(
    path: str, fields: list[str], rows: list[dict[str, str]]
) -> dict[str, np.ndarray]:
    skip = set(_ID_COLUMNS) | set(_GT_COLUMNS) | {"backbone"}
    columns: dict[str, np.ndarray] = {}
    for column in fields:
        if column in skip:
            continue
        try:
            columns[column] = _parse_float_column(path, rows, column)
        except ValueError:
            print(
                f"stability: skipping column {column!r} (non-numeric cells)",
                file=sys.stderr,
            )
    if not columns:
        raise ValueError(f"{path}: no numeric score columns to evaluate")
    return columns


def _cmd_stability(args: argparse.Namespace) -> int:
    fields, rows = _read_table(args.scores)
    ids = _table_model_ids(args.scores, fields, rows)
    gt = _join_gt(ids, args.gt)
    columns = _stability_columns(args.scores, fields, rows)

    def progress(metric: str, done: int, total: int) -> None:
        print(f"stability: {done}/{total} columns done ({metric})", file=sys.stderr)

    report = compute_stability(
        ids,
        gt,
        columns,
        subset_size=args.subset_size,
        fraction=args.fraction,
        seed=args.seed,
        tau_variant=args.tau_variant,
        progress=progress,
    )
    _emit(render_stability_csv(report), args.output)
    print(render_stability_summary(report), end="", file=sys.stderr)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    bundle = synth_bundle(
        num_objects=args.num_objects,
        feature_dim=args.feature_dim,
        num_classes=args.num_classes,
        quality=args.quality,
        seed=args.seed,
    )
    if args.model_name:
        bundle = replace(bundle, model_name=args.model_name)
    write_bundle(bundle, args.output)
    print(
        f"wrote {args.output} (model={bundle.model_name}, "
        f"objects={bundle.num_objects}, feature-dim={bundle.feature_dim}, "
        f"classes={bundle.num_classes})"
    )
    return 0


def _read_size_rows(stream: io.TextIOBase, source: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and any(not _is_number(p) for p in parts):
            continue  # header row
        if len(parts) < 2:
            raise ValueError(f"{source}: line {lineno}: expected 'w,h'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ValueError(
                f"{source}: line {lineno}: expected numeric 'w,h'"
            ) from exc
    if not rows:
        raise ValueError(f"{source}: no (w,h) rows")
    return np.array(rows, dtype=np.float64)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _cmd_assign_levels(args: argparse.Namespace) -> int:
    cfg = _pyramid_config(args)
    if args.input is None:
        sizes = _read_size_rows(sys.stdin, "<stdin>")
    else:
        with open(args.input, newline="") as handle:
            sizes = _read_size_rows(handle, args.input)
    levels = assign_pyramid_levels(sizes[:, 0], sizes[:, 1], cfg)
    _emit("".join(f"{level}\n" for level in levels), args.output)
    return 0


def _cmd_reproduce(args: argparse.Namespace) -> int:
    report = reproduce_tables(args.fixtures_dir)
    if args.format == "markdown":
        text = render_repro_markdown(report)
    elif args.format == "json-lines":
        text = "".join(
            json.dumps(
                {
                    "dataset": c.dataset,
                    "metric": c.metric,
                    "reported_tau": c.reported_tau,
                    "tau_plain": c.tau_plain,
                    "tau_weighted": c.tau_weighted,
                    "within_tolerance": c.within_tolerance,
                }
            )
            + "\n"
            for c in report.cells
        )
    else:
        text = render_repro_csv(report)
    _emit(text, args.output)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    print(
        f"valid: {args.bundle} model={bundle.model_name} "
        f"objects={bundle.num_objects} feature-dim={bundle.feature_dim} "
        f"classes={bundle.num_classes} "
        f"levels={'yes' if bundle.levels is not None else 'no'} "
        f"gradients={'yes' if bundle.gradients is not None else 'no'}"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="detrank",
        description="Rank pre-trained object detectors by predicted "
        "transferability from extracted feature bundles.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("score", help="score one bundle with one method")
    p.add_argument("--bundle", required=True, help="feature bundle path")
    p.add_argument("--method", required=True, choices=SCORE_METHODS)
    p.add_argument("--mu", type=float, default=1.0, help="IoU-term weight")
    p.add_argument(
        "--shrinkage-rate",
        type=float,
        default=1.0,
        help="scatter-shrinkage steepness for the sfda method",
    )
    _add_evidence_flags(p)
    _add_format_flags(p)
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser("rank", help="rank a zoo of bundles by combined score")
    p.add_argument(
        "--bundle",
        action="append",
        help="bundle path (repeatable)",
    )
    p.add_argument(
        "--bundles-dir",
        help=f"directory scanned for *{BUNDLE_SUFFIX} bundles",
    )
    p.add_argument("--mu", type=float, default=1.0, help="IoU-term weight")
    _add_evidence_flags(p)
    _add_format_flags(p)
    p.set_defaults(handler=_cmd_rank)

    p = sub.add_parser(
        "evaluate", help="rank-quality metrics of a scores CSV vs ground truth"
    )
    p.add_argument("--scores", required=True, help="CSV with model ids + scores")
    p.add_argument("--gt", required=True, help="CSV with model ids + mAP")
    p.add_argument(
        "--score-column", default="score", help="score column name (default: score)"
    )
    p.add_argument(
        "--metrics",
        default=",".join(EVAL_METRICS),
        help=f"comma list from {','.join(EVAL_METRICS)} (default: all)",
    )
    _add_format_flags(p)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser(
        "stability", help="score-column stability over sampled model subsets"
    )
    p.add_argument("--scores", required=True, help="CSV with model ids + score columns")
    p.add_argument("--gt", required=True, help="CSV with model ids + mAP")
    p.add_argument("--subset-size", type=int, required=True)
    p.add_argument(
        "--fraction",
        type=float,
        required=True,
        help="fraction of all subsets to sample, in (0, 1]",
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument(
        "--tau-variant",
        choices=("plain", "weighted"),
        default="plain",
        help="Kendall variant per subset (default: plain)",
    )
    p.add_argument("--output", help="write CSV report here; default stdout")
    p.set_defaults(handler=_cmd_stability)

    p = sub.add_parser("synth", help="write a synthetic bundle of planted quality")
    p.add_argument("--num-objects", type=int, required=True)
    p.add_argument("--feature-dim", type=int, required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument(
        "--quality",
        type=float,
        required=True,
        help="planted linear-signal quality in [0, 1]",
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model-name", help="override the generated model name")
    p.add_argument("--output", required=True, help="bundle path to write")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser(
        "assign-levels",
        help="map (w,h) pixel sizes to pyramid levels, one per line",
    )
    p.add_argument("--input", help="CSV of w,h pairs; default stdin")
    _add_pyramid_flags(p)
    p.add_argument("--output", help="write levels here; default stdout")
    p.set_defaults(handler=_cmd_assign_levels)

    p = sub.add_parser(
        "reproduce", help="recompute correlations for the bundled benchmark tables"
    )
    p.add_argument(
        "--fixtures-dir", help="directory of fixture CSVs; default: packaged"
    )
    _add_format_flags(p, default="markdown")
    p.set_defaults(handler=_cmd_reproduce)

    p = sub.add_parser("validate", help="check a bundle file and print a summary")
    p.add_argument("--bundle", required=True)
    p.set_defaults(handler=_cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"detrank: error: {exc}", file=sys.stderr)
        return 1
    except (
        BundleFormatError,
        BundleCorruptionError,
        BundleValidationError,
    ) as exc:
        print(f"detrank: bundle error: {exc}", file=sys.stderr)
        return 2
    except NotApplicableError as exc:
        print(f"detrank: not applicable: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"detrank: numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"detrank: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"detrank: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
