"""Descriptive statistics over parser records and a seeded k-means baseline.

Records are handled as the plain dictionaries produced by the scan output, so
the report and clustering work directly on a JSONL file.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC_FEATURES = ("loc", "cyclo", "expression_count", "variable_count", "function_count",
                    "loop_nesting_depth", "position_rel")
CATEGORICAL_FEATURES = ("position_cat", "input_source", "input_origin")
DISTRIBUTION_FIELDS = ("loc", "cyclo", "expression_count", "variable_count", "function_count",
                       "loop_nesting_depth")
POSITIONS = ("beginning", "middle", "end")
DEFAULT_TOP_F = 32


class ZeroVarianceError(ValueError):
    """Raised when every candidate feature column is constant."""

    def __init__(self, columns: Sequence[str]):
        super().__init__("all feature columns have zero variance: " + ", ".join(columns))
        self.columns = list(columns)


# ---------------------------------------------------------------- report

@dataclass
class Distribution:
    min: float
    median: float
    mean: float
    p95: float
    max: float


@dataclass
class Report:
    record_count: int
    project_count: int
    project_prevalence: float
    parser_loc_ratio: float | None
    distributions: dict[str, Distribution | None]
    position_histogram: dict[str, int]
    shotgun_rate: float | None
    input_sources: dict[str, int]
    input_origins: dict[str, int]
    function_names: list[tuple[str, int, float]]  # (name, occurrences, rate of records)
    sugar: dict[str, float]
    regex_rate: float | None
    regex_roles: dict[str, int]
    regular_candidate_rate: float | None
    loop_kinds: dict[str, int]
    loop_bounds: dict[str, int]
    exception_potential_rate: float | None
    explicit_raise_rate: float | None
    catch_rate: float | None
    split_tuple_rate: float | None


def _percentile(sorted_values: list[float], q: float) -> float:
    """Linear-interpolation percentile (numpy's default method)."""
    return float(np.percentile(np.asarray(sorted_values, dtype=float), q))


def distribution(values: Iterable[float]) -> Distribution | None:
    vals = sorted(float(v) for v in values)
    if not vals:
        return None
    return Distribution(vals[0], _percentile(vals, 50), math.fsum(vals) / len(vals),
                        _percentile(vals, 95), vals[-1])


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


def _counts(values: Iterable[str]) -> dict[str, int]:
    c = Counter(values)
    return {k: c[k] for k in sorted(c)}


def describe(records: Sequence[Mapping], stats: Sequence[Mapping] = (), top_n: int = 20) -> Report:
    """Corpus-level report. Rates over an empty denominator are None (absent)."""
    n = len(records)
    projects = len(stats)
    with_parser = sum(1 for s in stats if s.get("has_parser"))
    total_loc = sum(s.get("project_loc", 0) for s in stats)
    parser_loc = sum(s.get("parser_loc_total", 0) for s in stats)

    call_occ: Counter = Counter()
    call_recs: Counter = Counter()
    sugar: Counter = Counter()
    roles: Counter = Counter()
    kinds: Counter = Counter()
    bounds: Counter = Counter()
    split_calls = 0
    split_tuples = 0
    with_regex = with_potential = with_raise = with_catch = 0
    for rec in records:
        names = [c["name"] for c in rec.get("calls", [])]
        call_occ.update(names)
        call_recs.update(set(names))
        split_calls += sum(1 for nm in names if nm in ("split", "rsplit"))
        split_tuples += rec.get("split_tuple_count", 0)
        sugar.update(set(rec.get("sugar", [])))
        regexes = rec.get("regexes", [])
        with_regex += bool(regexes)
        roles.update(r["role"] for r in regexes)
        for lp in rec.get("loops", []):
            kinds[lp["kind"]] += 1
            bounds[lp["bound"]] += 1
        with_potential += bool(rec.get("potential_exceptions"))
        with_raise += bool(rec.get("raised_exceptions"))
        with_catch += bool(rec.get("caught_exceptions"))

    ranked = sorted(call_recs.items(), key=lambda kv: (-kv[1], -call_occ[kv[0]], kv[0]))[:top_n]
    return Report(
        record_count=n,
        project_count=projects,
        project_prevalence=with_parser / projects if projects else 0.0,
        parser_loc_ratio=_rate(parser_loc, total_loc),
        distributions={f: distribution(r[f] for r in records) for f in DISTRIBUTION_FIELDS},
        position_histogram={p: sum(1 for r in records if r.get("position_cat") == p)
                            for p in POSITIONS},
        shotgun_rate=_rate(sum(1 for r in records if r.get("shotgun")), n),
        input_sources=_counts(r.get("input_source", "unknown") for r in records),
        input_origins=_counts(r.get("input_origin", "unknown") for r in records),
        function_names=[(name, call_occ[name], cnt / n) for name, cnt in ranked],
        sugar={k: sugar[k] / n for k in sorted(sugar)},
        regex_rate=_rate(with_regex, n),
        regex_roles=_counts(roles.elements()),
        regular_candidate_rate=_rate(sum(1 for r in records if r.get("regular_candidate")), n),
        loop_kinds=_counts(kinds.elements()),
        loop_bounds=_counts(bounds.elements()),
        exception_potential_rate=_rate(with_potential, n),
        explicit_raise_rate=_rate(with_raise, n),
        catch_rate=_rate(with_catch, n),
        split_tuple_rate=_rate(split_tuples, split_calls),
    )


def report_to_dict(report: Report) -> dict:
    out = {}
    for key, value in report.__dict__.items():
        if key == "distributions":
            value = {k: (None if d is None else d.__dict__.copy()) for k, d in value.items()}
        elif key == "function_names":
            value = [{"name": nm, "occurrences": occ, "rate": rate} for nm, occ, rate in value]
        out[key] = value
    return out


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def format_report(report: Report) -> str:
    """Human-readable table form of a report."""
    lines = [
        f"records              {report.record_count}",
        f"projects             {report.project_count}",
        f"project prevalence   {_fmt(report.project_prevalence)}",
        f"parser LOC ratio     {_fmt(report.parser_loc_ratio)}",
        "",
        f"{'metric':<20} {'min':>8} {'median':>8} {'mean':>8} {'p95':>8} {'max':>8}",
    ]
    for name, d in report.distributions.items():
        if d is None:
            lines.append(f"{name:<20} {'-':>8} {'-':>8} {'-':>8} {'-':>8} {'-':>8}")
        else:
            lines.append(f"{name:<20} {d.min:>8.2f} {d.median:>8.2f} {d.mean:>8.2f} "
                         f"{d.p95:>8.2f} {d.max:>8.2f}")
    lines.append("")
    lines.append("position   " + "  ".join(f"{k}={v}" for k, v in report.position_histogram.items())
                 + f"  shotgun={_fmt(report.shotgun_rate)}")
    lines.append("sources    " + "  ".join(f"{k}={v}" for k, v in report.input_sources.items()))
    lines.append("origins    " + "  ".join(f"{k}={v}" for k, v in report.input_origins.items()))
    lines.append("")
    lines.append("top functions (share of parsers calling it)")
    for name, occ, rate in report.function_names:
        lines.append(f"  {name:<28} {occ:>6} {rate:>7.3f}")
    if report.sugar:
        lines.append("sugar      " + "  ".join(f"{k}={v:.3f}" for k, v in report.sugar.items()))
    lines.append(f"regex rate {_fmt(report.regex_rate)}  roles "
                 + " ".join(f"{k}={v}" for k, v in report.regex_roles.items())
                 + f"  regular candidates {_fmt(report.regular_candidate_rate)}")
    lines.append("loops      " + " ".join(f"{k}={v}" for k, v in report.loop_kinds.items())
                 + "  bounds " + " ".join(f"{k}={v}" for k, v in report.loop_bounds.items()))
    lines.append(f"exceptions potential={_fmt(report.exception_potential_rate)} "
                 f"raise={_fmt(report.explicit_raise_rate)} catch={_fmt(report.catch_rate)} "
                 f"split->tuple={_fmt(report.split_tuple_rate)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- features

def _multiset_values(rec: Mapping) -> dict[str, list[str]]:
    return {
        "call": [c["name"] for c in rec.get("calls", [])],
        "sugar": list(rec.get("sugar", [])),
        "loop_kind": [lp["kind"] for lp in rec.get("loops", [])],
        "loop_bound": [lp["bound"] for lp in rec.get("loops", [])],
        "regex_role": [r["role"] for r in rec.get("regexes", [])],
    }


def vectorize(records: Sequence[Mapping], top_f: int = DEFAULT_TOP_F) -> tuple[np.ndarray, list[str]]:
    """Standardized numeric columns, one-hot categoricals and top-F indicators.

    Constant columns are dropped; if nothing is left, ZeroVarianceError names
    every candidate column.
    """
    if not records:
        raise ValueError("vectorize needs at least one record")
    columns: list[np.ndarray] = []
    names: list[str] = []
    dropped: list[str] = []

    def add(name: str, col: np.ndarray, standardize: bool) -> None:
        std = col.std()
        if not np.isfinite(std) or std == 0.0:
            dropped.append(name)
            return
        columns.append((col - col.mean()) / std if standardize else col)
        names.append(name)

    for f in NUMERIC_FEATURES:
        add(f, np.array([float(r.get(f, 0)) for r in records]), True)
    for f in CATEGORICAL_FEATURES:
        for value in sorted({str(r.get(f)) for r in records}):
            add(f"{f}={value}", np.array([1.0 if str(r.get(f)) == value else 0.0 for r in records]),
                False)
    multis = [_multiset_values(r) for r in records]
    for group in ("call", "sugar", "loop_kind", "loop_bound", "regex_role"):
        freq = Counter(v for m in multis for v in set(m[group]))
        vocab = sorted(freq, key=lambda v: (-freq[v], v))[:top_f]
        for value in vocab:
            add(f"{group}:{value}",
                np.array([1.0 if value in m[group] else 0.0 for m in multis]), False)
    if not columns:
        raise ZeroVarianceError(dropped)
    return np.column_stack(columns), names


# ---------------------------------------------------------------- k-means

@dataclass
class Clustering:
    k: int
    seed: int
    assignments: list[int]
    centroids: np.ndarray
    inertia: float
    silhouette: float | None
    feature_schema: list[str] = field(default_factory=list)
    inertia_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    ids: list[str] = field(default_factory=list)
    exemplars: dict[int, list[str]] = field(default_factory=dict)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # explicit difference form: fixed reduction order, no cancellation from expansions
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with a center: take the lowest unused index
            unused = [i for i in range(n) if i not in centers]
            nxt = unused[0]
        else:
            r = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x[[nxt]])[:, 0])
    return x[centers].copy()


def kmeans(matrix: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
           tol: float = 1e-6) -> Clustering:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when no centroid moves by ``tol`` or more, or after ``max_iter``
    rounds. Ties go to the lowest centroid index; an empty cluster is
    re-seeded with the point farthest from its current centroid.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("kmeans needs a non-empty 2-D matrix")
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be between 1 and the row count ({n}), got {k}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus(x, k, rng)
    trace: list[float] = []
    labels = np.zeros(n, dtype=int)
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        labels = np.argmin(d, axis=1)  # first minimum: lowest index wins ties
        trace.append(float(d[np.arange(n), labels].sum()))
        new = centroids.copy()
        point_d = d[np.arange(n), labels]
        taken: set[int] = set()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
            else:
                order = np.lexsort((np.arange(n), -point_d))
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                new[j] = x[far]
                labels[far] = j
                point_d[far] = 0.0
        shift = float(np.max(np.sqrt(((new - centroids) ** 2).sum(axis=1))))
        centroids = new
        if shift < tol:
            break
    d = _sq_dists(x, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    trace.append(inertia)
    return Clustering(k=k, seed=seed, assignments=[int(v) for v in labels], centroids=centroids,
                      inertia=inertia, silhouette=silhouette(x, labels), inertia_trace=trace,
                      iterations=it)


def silhouette(x: np.ndarray, labels: Sequence[int]) -> float | None:
    """Mean silhouette with Euclidean distance; None when fewer than 2 clusters."""
    labels = np.asarray(labels)
    clusters = sorted(set(labels.tolist()))
    if len(clusters) < 2:
        return None
    n = len(labels)
    masks = {c: labels == c for c in clusters}
    sizes = {c: int(m.sum()) for c, m in masks.items()}
    scores = np.zeros(n)
    for start in range(0, n, 256):  # row blocks keep memory linear in n
        block = np.sqrt(np.maximum(_sq_dists(x[start:start + 256], x), 0.0))
        for off, row in enumerate(block):
            i = start + off
            own = labels[i]
            if sizes[own] <= 1:
                continue
            a = row[masks[own]].sum() / (sizes[own] - 1)
            b = min(row[masks[c]].mean() for c in clusters if c != own)
            scores[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(scores.mean())


def sample(clustering: Clustering, matrix: np.ndarray, ids: Sequence[str], m: int) -> dict[int, list[str]]:
    """Per cluster, the ``m`` ids nearest the centroid; ties broken by id."""
    x = np.asarray(matrix, dtype=float)
    out: dict[int, list[str]] = {}
    for j in range(clustering.k):
        members = [i for i, lab in enumerate(clustering.assignments) if lab == j]
        dist = _sq_dists(x[members], clustering.centroids[[j]])[:, 0] if members else []
        ranked = sorted(zip(dist, (ids[i] for i in members)), key=lambda t: (float(t[0]), t[1]))
        out[j] = [rid for _, rid in ranked[:max(0, m)]]
    return out


def cluster_records(records: Sequence[Mapping], k: int, seed: int = 0,
                    top_f: int = DEFAULT_TOP_F, exemplars: int = 3) -> Clustering:
    matrix, schema = vectorize(records, top_f)
    ids = [r["slice_id"] for r in records]
    result = kmeans(matrix, k, seed)
    result.feature_schema = schema
    result.ids = ids
    result.exemplars = sample(result, matrix, ids, exemplars)
    return result


def k_sweep(matrix: np.ndarray, ks: Iterable[int], seed: int = 0) -> list[tuple[int, float, float | None]]:
    """(k, inertia, silhouette) for each k that fits the row count."""
    out = []
    for k in ks:
        if 1 <= k <= matrix.shape[0]:
            c = kmeans(matrix, k, seed)
            out.append((k, c.inertia, c.silhouette))
    return out


def clustering_to_dict(c: Clustering, sweep: list | None = None) -> dict:
    doc = {
        "k": c.k,
        "seed": c.seed,
        "feature_schema": c.feature_schema,
        "assignments": {rid: lab for rid, lab in zip(c.ids, c.assignments)} if c.ids
        else c.assignments,
        "centroids": [[round(float(v), 12) for v in row] for row in c.centroids],
        "inertia": c.inertia,
        "inertia_trace": c.inertia_trace,
        "silhouette": c.silhouette,
        "iterations": c.iterations,
        "exemplars": {str(j): ids for j, ids in c.exemplars.items()},
    }
    if sweep is not None:
        doc["sweep"] = [{"k": k, "inertia": i, "silhouette": s} for k, i, s in sweep]
    return doc
