"""Evaluation harness: rank-correlation and selection metrics, the
subset-stability protocol, and reproduction of the bundled benchmark
tables.

Every metric consumes (model id, transferability score, ground-truth
fine-tuning mAP) records. Two Kendall variants are computed side by side
throughout, because published correlation numbers in this area are
ambiguous about weighting:

* plain — mean sign agreement over all pairs, ties contributing zero;
* weighted — the same sign agreement with pair (n, m) weighted by
  1/(rank_n + 1) + 1/(rank_m + 1), ranks taken 0-based descending by
  ground truth (average ranks on ties), normalized by the total weight.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

_SUBSET_CHUNK = 16384
# Vectorized unranking works in int64; fall back to exact scalar
# arithmetic when C(N, k) approaches the int64 range.
_VECTOR_UNRANK_LIMIT = 2**62


@dataclass(frozen=True)
class RankRecord:
    """One model's transferability score and its fine-tuning ground truth."""

    model_id: str
    score: float
    gt_map: float


def _split_records(records: Sequence[RankRecord]) -> tuple[np.ndarray, np.ndarray]:
    gt = np.array([r.gt_map for r in records], dtype=np.float64)
    scores = np.array([r.score for r in records], dtype=np.float64)
    if not (np.isfinite(gt).all() and np.isfinite(scores).all()):
        raise ValueError("records contain non-finite values")
    return gt, scores


def _sign_products(gt: np.ndarray, scores: np.ndarray) -> np.ndarray:
    return np.sign(gt[:, None] - gt[None, :]) * np.sign(
        scores[:, None] - scores[None, :]
    )


def kendall_tau_plain(records: Sequence[RankRecord]) -> float:
    """Mean pairwise sign agreement between scores and ground truth.

    Ties contribute zero while still counting in the denominator, so the
    value lies in [-1, 1] with +-1 only for fully distinct, fully
    agreeing (or reversed) orderings.

    Raises:
        ValueError: fewer than 2 records.
    """
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records")
    gt, scores = _split_records(records)
    total = float(np.sum(np.triu(_sign_products(gt, scores), 1)))
    return 2.0 * total / (n * (n - 1))


def _descending_gt_ranks(gt: np.ndarray) -> np.ndarray:
    """0-based rank of each entry when sorting ground truth descending."""
    return rankdata(-gt, method="average") - 1.0


def kendall_tau_weighted(records: Sequence[RankRecord]) -> float:
    """Sign agreement with hyperbolic rank weights on top-ranked models.

    Pair (n, m) carries weight 1/(r_n + 1) + 1/(r_m + 1) with r the
    0-based ground-truth-descending rank, so disagreements among the best
    models cost more than disagreements among the worst.

    Raises:
        ValueError: fewer than 2 records.
    """
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records")
    gt, scores = _split_records(records)
    weights = 1.0 / (_descending_gt_ranks(gt) + 1.0)
    pair_weights = weights[:, None] + weights[None, :]
    signs = _sign_products(gt, scores)
    numerator = float(np.sum(np.triu(pair_weights * signs, 1)))
    denominator = float(np.sum(np.triu(pair_weights, 1)))
    return numerator / denominator


def _argmax_with_id_tiebreak(
    scores: np.ndarray, model_ids: Sequence[str]
) -> int:
    best = scores.max()
    candidates = [i for i in range(len(scores)) if scores[i] == best]
    return min(candidates, key=lambda i: model_ids[i])


def rel_at_1(records: Sequence[RankRecord]) -> float:
    """Ground truth of the top-scored model relative to the best available.

    Score ties are broken by lexicographic model id so the result is
    deterministic.

    Raises:
        ValueError: empty input or non-positive ground truth.
    """
    if not records:
        raise ValueError("need at least 1 record")
    gt, scores = _split_records(records)
    if (gt <= 0).any():
        raise ValueError("gt_map must be positive for a relative ratio")
    chosen = _argmax_with_id_tiebreak(scores, [r.model_id for r in records])
    return float(gt[chosen] / gt.max())


def recall_at_1(subset_results: Sequence[bool]) -> float:
    """Fraction of subsets whose top-scored model was truly the best."""
    if not subset_results:
        raise ValueError("need at least 1 subset result")
    return float(np.mean([bool(r) for r in subset_results]))


def pearson_weighted(
    records: Sequence[RankRecord], uniform: bool = False
) -> float:
    """Linear correlation between scores and ground truth.

    By default each record is weighted 1/(rank + 1) by its ground-truth
    descending rank (same emphasis as the weighted Kendall variant);
    ``uniform=True`` gives the textbook Pearson coefficient.

    Raises:
        ValueError: fewer than 3 records, or zero weighted variance.
    """
    if len(records) < 3:
        raise ValueError("need at least 3 records")
    gt, scores = _split_records(records)
    if np.ptp(scores) == 0.0 or np.ptp(gt) == 0.0:
        raise ValueError("zero variance; correlation undefined")
    if uniform:
        weights = np.ones_like(gt)
    else:
        weights = 1.0 / (_descending_gt_ranks(gt) + 1.0)
    weights = weights / weights.sum()
    mean_s = float(weights @ scores)
    mean_g = float(weights @ gt)
    cov = float(weights @ ((scores - mean_s) * (gt - mean_g)))
    var_s = float(weights @ (scores - mean_s) ** 2)
    var_g = float(weights @ (gt - mean_g) ** 2)
    if var_s <= 0.0 or var_g <= 0.0:
        raise ValueError("zero variance; correlation undefined")
    return cov / math.sqrt(var_s * var_g)


def unrank_combination(rank: int, n: int, k: int) -> tuple[int, ...]:
    """The ``rank``-th k-subset of range(n) in lexicographic order."""
    if not 0 <= rank < math.comb(n, k):
        raise ValueError(f"rank {rank} out of range for C({n}, {k})")
    out = []
    remaining = rank
    slots = k
    for element in range(n):
        if slots == 0:
            break
        starting_here = math.comb(n - element - 1, slots - 1)
        if remaining < starting_here:
            out.append(element)
            slots -= 1
        else:
            remaining -= starting_here
    return tuple(out)


def _unrank_many(ranks: np.ndarray, n: int, k: int) -> np.ndarray:
    """Vectorized lexicographic unranking of many combination ranks.

    Requires C(n, k) < 2**62 so the per-element binomials fit in int64.
    Returns an (S, k) array of strictly increasing index rows.
    """
    comb_table = np.zeros((n + 1, k + 1), dtype=np.int64)
    for a in range(n + 1):
        for b in range(min(a, k) + 1):
            comb_table[a, b] = math.comb(a, b)
    remaining = np.asarray(ranks, dtype=np.int64).copy()
    slots = np.full(remaining.shape, k, dtype=np.int64)
    out = np.empty((len(remaining), k), dtype=np.int16)
    rows = np.arange(len(remaining))
    for element in range(n):
        active = slots > 0
        starting_here = comb_table[n - element - 1, slots - 1]
        take = active & (remaining < starting_here)
        out[rows[take], k - slots[take]] = element
        skip = active & ~take
        remaining[skip] -= starting_here[skip]
        slots[take] -= 1
    return out


def _sample_subset_array(
    zoo_size: int, subset_size: int, fraction: float, seed: int
) -> np.ndarray:
    """Array form of :func:`sample_subsets`: (S, k) int16 index rows."""
    if not 2 <= subset_size <= zoo_size:
        raise ValueError(
            f"subset_size must be in [2, {zoo_size}], got {subset_size}"
        )
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    total = math.comb(zoo_size, subset_size)
    count = math.ceil(fraction * total)
    if count > total:
        raise ValueError(f"requested {count} subsets but only {total} exist")
    ranks = sorted(random.Random(seed).sample(range(total), count))
    if total < _VECTOR_UNRANK_LIMIT:
        return _unrank_many(np.array(ranks, dtype=np.int64), zoo_size, subset_size)
    return np.array(
        [unrank_combination(r, zoo_size, subset_size) for r in ranks],
        dtype=np.int64,
    )


def sample_subsets(
    zoo_size: int, subset_size: int, fraction: float, seed: int
) -> list[tuple[int, ...]]:
    """Distinct uniform k-subsets covering ``fraction`` of all C(N, k).

    Draws distinct combination ranks with a seeded generator and unranks
    each one, so no rejection loop and no duplicate subsets regardless of
    how close ``fraction`` is to 1. The subset count is
    ceil(fraction * C(N, k)). Output is sorted by combination rank,
    deterministic per seed.

    Raises:
        ValueError: subset size outside [2, N] or fraction outside (0, 1].
    """
    array = _sample_subset_array(zoo_size, subset_size, fraction, seed)
    return [tuple(row) for row in array.tolist()]


# ---------------------------------------------------------------------------
# Subset-stability protocol


@dataclass(frozen=True)
class StabilityRow:
    """Stability of one score column across sampled subsets."""

    metric: str
    mean_tauw: float
    std_tauw: float
    mean_rel1: float
    std_rel1: float
    recall1: float


@dataclass(frozen=True)
class StabilityReport:
    """Per-metric mean/spread of rank quality over model subsets."""

    zoo_size: int
    subset_size: int
    fraction: float
    seed: int
    num_subsets: int
    tau_variant: str
    rows: tuple[StabilityRow, ...]


def _subset_taus(
    gt: np.ndarray,
    scores: np.ndarray,
    subsets: np.ndarray,
    variant: str,
) -> np.ndarray:
    """Kendall tau of each row-subset, vectorized in chunks.

    The plain variant reduces to an indicator-matrix quadratic form over
    the N x N pairwise sign-product matrix (the diagonal is zero, so the
    quadratic form equals twice the over-pairs sum), which keeps the
    per-subset cost at O(N^2) matmul work instead of gathering k*k cells.
    """
    sign_prod = _sign_products(gt, scores)
    n = len(gt)
    k = subsets.shape[1]
    out = np.empty(len(subsets))
    for start in range(0, len(subsets), _SUBSET_CHUNK):
        chunk = subsets[start : start + _SUBSET_CHUNK]
        if variant == "plain":
            indicator = np.zeros((len(chunk), n))
            np.put_along_axis(indicator, chunk.astype(np.int64), 1.0, axis=1)
            quad = ((indicator @ sign_prod) * indicator).sum(axis=1)
            out[start : start + len(chunk)] = quad / (k * (k - 1))
        else:
            sub_signs = sign_prod[chunk[:, :, None], chunk[:, None, :]]
            gt_sub = gt[chunk]
            ranks = rankdata(-gt_sub, method="average", axis=1) - 1.0
            weights = 1.0 / (ranks + 1.0)
            pair_w = weights[:, :, None] + weights[:, None, :]
            numer = (pair_w * sub_signs).sum(axis=(1, 2)) / 2.0
            denom = (pair_w.sum(axis=(1, 2)) - 2.0 * weights.sum(axis=1)) / 2.0
            out[start : start + len(chunk)] = numer / denom
    return out


def _subset_selection(
    gt: np.ndarray,
    scores: np.ndarray,
    model_ids: Sequence[str],
    subsets: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(rel@1, picked-the-best) per subset, with lexicographic tiebreak."""
    lex_rank = np.empty(len(model_ids), dtype=np.int64)
    lex_rank[np.argsort(np.asarray(model_ids, dtype=object))] = np.arange(
        len(model_ids)
    )
    score_sub = scores[subsets]
    gt_sub = gt[subsets]
    is_best = score_sub == score_sub.max(axis=1, keepdims=True)
    tiebreak = np.where(is_best, lex_rank[subsets], np.iinfo(np.int64).max)
    chosen = subsets[np.arange(len(subsets)), tiebreak.argmin(axis=1)]
    best_gt = gt_sub.max(axis=1)
    rel = gt[chosen] / best_gt
    return rel, gt[chosen] == best_gt


def compute_stability(
    model_ids: Sequence[str],
    gt: np.ndarray,
    score_columns: Mapping[str, np.ndarray],
    subset_size: int,
    fraction: float,
    seed: int,
    tau_variant: str = "plain",
    progress: Callable[[str, int, int], None] | None = None,
) -> StabilityReport:
    """Evaluate every score column on sampled model subsets.

    Args:
        model_ids: N model identifiers.
        gt: (N,) positive ground-truth values.
        score_columns: metric name -> (N,) score vector.
        subset_size / fraction / seed: as :func:`sample_subsets`.
        tau_variant: "plain" or "weighted" Kendall per subset.
        progress: called as progress(metric, done, total) after each
            column finishes.

    Returns:
        StabilityReport with one row per score column, rows ordered as the
        input mapping.
    """
    if tau_variant not in ("plain", "weighted"):
        raise ValueError(f"tau_variant must be plain|weighted, got {tau_variant!r}")
    gt = np.asarray(gt, dtype=np.float64)
    if (gt <= 0).any():
        raise ValueError("gt values must be positive")
    subsets = _sample_subset_array(len(model_ids), subset_size, fraction, seed)
    rows = []
    for done, (metric, scores) in enumerate(score_columns.items(), start=1):
        scores = np.asarray(scores, dtype=np.float64)
        taus = _subset_taus(gt, scores, subsets, tau_variant)
        rel, picked_best = _subset_selection(gt, scores, model_ids, subsets)
        rows.append(
            StabilityRow(
                metric=metric,
                mean_tauw=float(taus.mean()),
                std_tauw=float(taus.std()),
                mean_rel1=float(rel.mean()),
                std_rel1=float(rel.std()),
                recall1=float(picked_best.mean()),
            )
        )
        if progress is not None:
            progress(metric, done, len(score_columns))
    return StabilityReport(
        zoo_size=len(model_ids),
        subset_size=subset_size,
        fraction=fraction,
        seed=seed,
        num_subsets=len(subsets),
        tau_variant=tau_variant,
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Benchmark-table reproduction

FIXTURE_DATASETS = (
    "pascal_voc",
    "cityscapes",
    "soda",
    "crowdhuman",
    "visdrone",
    "deeplesion",
)
METRIC_COLUMNS = ("knas", "sfda", "logme", "ulogme", "iologme", "detlogme")
FIXTURE_REQUIRED_COLUMNS = ("model", "backbone") + METRIC_COLUMNS + ("map",)
REPRO_TOLERANCE = 0.10

# Correlation values reported alongside the bundled tables, one per
# (dataset, metric column); None where the metric was not applicable.
REPORTED_TAU: dict[str, dict[str, float | None]] = {
    "pascal_voc": {
        "knas": 0.15, "sfda": 0.64, "logme": 0.22,
        "ulogme": 0.43, "iologme": 0.54, "detlogme": 0.79,
    },
    "cityscapes": {
        "knas": -0.02, "sfda": 0.51, "logme": 0.32,
        "ulogme": 0.18, "iologme": 0.68, "detlogme": 0.71,
    },
    "soda": {
        "knas": -0.44, "sfda": 0.43, "logme": 0.22,
        "ulogme": 0.03, "iologme": 0.66, "detlogme": 0.65,
    },
    "crowdhuman": {
        "knas": -0.47, "sfda": None, "logme": 0.37,
        "ulogme": 0.39, "iologme": 0.51, "detlogme": 0.51,
    },
    "visdrone": {
        "knas": 0.16, "sfda": 0.53, "logme": 0.52,
        "ulogme": 0.14, "iologme": 0.71, "detlogme": 0.71,
    },
    "deeplesion": {
        "knas": -0.14, "sfda": -0.30, "logme": 0.13,
        "ulogme": 0.61, "iologme": -0.09, "detlogme": 0.50,
    },
}

# Sanity orderings that must hold when recomputing correlations from the
# bundled tables: (dataset, better metric, worse metric).
ORDINAL_CHECKS = (
    ("pascal_voc", "detlogme", "logme"),
    ("cityscapes", "detlogme", "logme"),
    ("soda", "iologme", "logme"),
    ("deeplesion", "ulogme", "iologme"),
)


@dataclass(frozen=True)
class FixtureTable:
    """One benchmark dataset's per-model scores and fine-tuning mAP."""

    dataset: str
    model_ids: tuple[str, ...]
    scores: dict[str, np.ndarray | None]
    gt_map: np.ndarray


def packaged_fixtures_dir() -> Path:
    """Directory of the benchmark tables shipped inside the package."""
    return Path(resources.files("detrank") / "fixtures")


def read_fixture_csv(path: Path | str, dataset: str) -> FixtureTable:
    """Parse one fixture CSV; "NA" cells mark a metric as not applicable.

    Raises:
        ValueError: missing columns or malformed numeric cells.
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        missing = [c for c in FIXTURE_REQUIRED_COLUMNS if c not in fields]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    model_ids = tuple(f"{r['model']} {r['backbone']}" for r in rows)
    scores: dict[str, np.ndarray | None] = {}
    for metric in METRIC_COLUMNS:
        cells = [r[metric].strip() for r in rows]
        if any(c.upper() in ("NA", "N/A", "") for c in cells):
            scores[metric] = None
            continue
        try:
            scores[metric] = np.array([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed {metric} column: {exc}") from exc
    try:
        gt_map = np.array([float(r["map"]) for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed map column: {exc}") from exc
    return FixtureTable(
        dataset=dataset, model_ids=model_ids, scores=scores, gt_map=gt_map
    )


@dataclass(frozen=True)
class ReproCell:
    """Recomputed vs reported correlation for one (dataset, metric)."""

    dataset: str
    metric: str
    reported_tau: float | None
    tau_plain: float | None
    tau_weighted: float | None

    @property
    def applicable(self) -> bool:
        return self.reported_tau is not None and self.tau_plain is not None

    @property
    def deviation(self) -> float | None:
        if not self.applicable:
            return None
        return abs(self.tau_plain - self.reported_tau)

    @property
    def within_tolerance(self) -> bool | None:
        dev = self.deviation
        return None if dev is None else dev <= REPRO_TOLERANCE


@dataclass(frozen=True)
class OrdinalResult:
    """Outcome of one better-than ordering check on recomputed taus."""

    dataset: str
    better_metric: str
    worse_metric: str
    tau_better: float
    tau_worse: float

    @property
    def passed(self) -> bool:
        return self.tau_better > self.tau_worse


@dataclass(frozen=True)
class ReproReport:
    """Full comparison of recomputed correlations against reported ones."""

    cells: tuple[ReproCell, ...]
    ordinal_results: tuple[OrdinalResult, ...]

    def cell(self, dataset: str, metric: str) -> ReproCell:
        for c in self.cells:
            if c.dataset == dataset and c.metric == metric:
                return c
        raise KeyError((dataset, metric))

    def column_coverage(self) -> dict[str, tuple[int, int]]:
        """metric -> (cells within tolerance, applicable cells)."""
        coverage: dict[str, tuple[int, int]] = {}
        for metric in METRIC_COLUMNS:
            cells = [c for c in self.cells if c.metric == metric and c.applicable]
            within = sum(1 for c in cells if c.within_tolerance)
            coverage[metric] = (within, len(cells))
        return coverage

    def deviations(self) -> list[ReproCell]:
        """Applicable cells sorted by deviation, largest first."""
        cells = [c for c in self.cells if c.applicable]
        return sorted(cells, key=lambda c: -c.deviation)


def _fixture_records(table: FixtureTable, metric: str) -> list[RankRecord]:
    scores = table.scores[metric]
    assert scores is not None
    return [
        RankRecord(model_id=mid, score=float(s), gt_map=float(g))
        for mid, s, g in zip(table.model_ids, scores, table.gt_map)
    ]


def reproduce_tables(fixtures_dir: Path | str | None = None) -> ReproReport:
    """Recompute both tau variants for every bundled table column.

    Args:
        fixtures_dir: directory holding ``<dataset>.csv`` for all six
            datasets; defaults to the packaged copies.

    Raises:
        FileNotFoundError: listing every missing fixture file.
        ValueError: malformed fixture contents.
    """
    directory = Path(fixtures_dir) if fixtures_dir is not None else packaged_fixtures_dir()
    missing = [
        f"{name}.csv"
        for name in FIXTURE_DATASETS
        if not (directory / f"{name}.csv").exists()
    ]
    if missing:
        raise FileNotFoundError(
            f"missing fixture files in {directory}: {', '.join(missing)}"
        )

    tables = {
        name: read_fixture_csv(directory / f"{name}.csv", name)
        for name in FIXTURE_DATASETS
    }
    cells = []
    for name in FIXTURE_DATASETS:
        table = tables[name]
        for metric in METRIC_COLUMNS:
            reported = REPORTED_TAU[name][metric]
            if table.scores[metric] is None or reported is None:
                cells.append(
                    ReproCell(
                        dataset=name,
                        metric=metric,
                        reported_tau=reported,
                        tau_plain=None,
                        tau_weighted=None,
                    )
                )
                continue
            records = _fixture_records(table, metric)
            cells.append(
                ReproCell(
                    dataset=name,
                    metric=metric,
                    reported_tau=reported,
                    tau_plain=kendall_tau_plain(records),
                    tau_weighted=kendall_tau_weighted(records),
                )
            )

    ordinals = []
    for dataset, better, worse in ORDINAL_CHECKS:
        table = tables[dataset]
        tau_better = kendall_tau_plain(_fixture_records(table, better))
        tau_worse = kendall_tau_plain(_fixture_records(table, worse))
        ordinals.append(
            OrdinalResult(
                dataset=dataset,
                better_metric=better,
                worse_metric=worse,
                tau_better=tau_better,
                tau_worse=tau_worse,
            )
        )
    return ReproReport(cells=tuple(cells), ordinal_results=tuple(ordinals))


def _fmt(value: float | None, digits: int = 4) -> str:
    return "NA" if value is None else f"{value:.{digits}f}"


def render_repro_csv(report: ReproReport) -> str:
    """CSV body of the reproduction report (both tau variants per cell)."""
    lines = ["dataset,metric,reported_tau,tau_plain,tau_weighted,deviation,within_tolerance"]
    for c in report.cells:
        within = "" if c.within_tolerance is None else str(c.within_tolerance).lower()
        lines.append(
            f"{c.dataset},{c.metric},{_fmt(c.reported_tau, 2)},{_fmt(c.tau_plain)},"
            f"{_fmt(c.tau_weighted)},{_fmt(c.deviation)},{within}"
        )
    return "\n".join(lines) + "\n"


def render_repro_markdown(report: ReproReport) -> str:
    """Human-readable reproduction report."""
    out = ["# Benchmark table reproduction", ""]
    out.append(
        "Recomputed rank correlations (plain and rank-weighted) per dataset "
        "and metric column, against the values reported with the tables. "
        f"Deviation is |plain - reported|; tolerance {REPRO_TOLERANCE}."
    )
    for dataset in FIXTURE_DATASETS:
        out += ["", f"## {dataset}", ""]
        out.append("| metric | reported | plain | weighted | deviation | within |")
        out.append("|---|---|---|---|---|---|")
        for c in report.cells:
            if c.dataset != dataset:
                continue
            within = (
                "n/a" if c.within_tolerance is None
                else ("yes" if c.within_tolerance else "**no**")
            )
            out.append(
                f"| {c.metric} | {_fmt(c.reported_tau, 2)} | {_fmt(c.tau_plain)} "
                f"| {_fmt(c.tau_weighted)} | {_fmt(c.deviation)} | {within} |"
            )

    out += ["", "## Ordering checks (plain tau)", ""]
    for o in report.ordinal_results:
        status = "pass" if o.passed else "**FAIL**"
        out.append(
            f"- {o.dataset}: {o.better_metric} ({o.tau_better:.4f}) > "
            f"{o.worse_metric} ({o.tau_worse:.4f}) — {status}"
        )

    out += ["", "## Column coverage within tolerance (plain tau)", ""]
    for metric, (within, applicable) in report.column_coverage().items():
        out.append(f"- {metric}: {within}/{applicable} datasets within ±{REPRO_TOLERANCE}")

    out += ["", "## Largest deviations", ""]
    for c in report.deviations()[:10]:
        out.append(
            f"- {c.dataset}/{c.metric}: plain {_fmt(c.tau_plain)} vs reported "
            f"{_fmt(c.reported_tau, 2)} (deviation {_fmt(c.deviation)})"
        )
    return "\n".join(out) + "\n"


def render_stability_csv(report: StabilityReport) -> str:
    """CSV body of a stability report, one row per score column."""
    lines = ["metric,mean_tauw,std_tauw,mean_rel1,std_rel1"]
    for row in report.rows:
        lines.append(
            f"{row.metric},{row.mean_tauw:.6f},{row.std_tauw:.6f},"
            f"{row.mean_rel1:.6f},{row.std_rel1:.6f}"
        )
    return "\n".join(lines) + "\n"


def render_stability_summary(report: StabilityReport) -> str:
    """Human-readable stability summary including best-model recall."""
    out = [
        f"Stability over {report.num_subsets} subsets of size "
        f"{report.subset_size} from {report.zoo_size} models "
        f"(fraction {report.fraction:g}, seed {report.seed}, "
        f"{report.tau_variant} tau):"
    ]
    for row in report.rows:
        out.append(
            f"  {row.metric}: tau {row.mean_tauw:+.3f} ± {row.std_tauw:.3f}, "
            f"rel@1 {row.mean_rel1:.3f} ± {row.std_rel1:.3f}, "
            f"recall@1 {row.recall1:.3f}"
        )
    return "\n".join(out) + "\n"
