"""Ranking metrics, per-user evaluation, significance tests and experiment grids."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .data import DatasetSplit, FriendshipEdgeList, filter_friendships_by_overlap, subsample_training
from .model import SUCP, ModelConfig, PreferenceOnly, TopPopular

log = logging.getLogger(__name__)

METRICS = ("precision", "recall", "ndcg")
AXES = ("beta", "train_fraction", "overlap_threshold")


def _hits(ranked, relevant, n: int) -> np.ndarray:
    return np.array([p in relevant for p in list(ranked)[:n]], dtype=bool)


def precision_at_n(ranked, relevant, n: int) -> float:
    """Hits in the top ``n`` over ``n``; a short list counts its gaps as misses."""
    return float(_hits(ranked, relevant, n).sum()) / n


def recall_at_n(ranked, relevant, n: int) -> float:
    if not relevant:
        raise ValueError("recall undefined for an empty relevant set")
    return float(_hits(ranked, relevant, n).sum()) / len(relevant)


def ndcg_at_n(ranked, relevant, n: int) -> float:
    if not relevant:
        raise ValueError("nDCG undefined for an empty relevant set")
    # fsum: correctly rounded, so the value does not depend on summation order
    h = _hits(ranked, relevant, n)
    dcg = math.fsum(1.0 / math.log2(i + 2) for i in np.flatnonzero(h))
    idcg = math.fsum(1.0 / math.log2(i + 2) for i in range(min(len(relevant), n)))
    return dcg / idcg


@dataclass
class MetricsReport:
    system: str
    ns: tuple
    users: np.ndarray
    per_user: dict
    n_skipped: int = 0
    fingerprint: str = ""

    @property
    def n_users(self) -> int:
        return len(self.users)

    def mean(self, metric: str, n: int) -> float:
        return float(self.per_user[(metric, n)].mean())

    @property
    def means(self) -> dict:
        return {k: float(v.mean()) for k, v in self.per_user.items()}

    def table(self) -> str:
        head = f"{'system':<16}" + "".join(f"{m[:4].title()}@{n:<6}" for m in METRICS for n in self.ns)
        row = f"{self.system:<16}" + "".join(f"{self.mean(m, n):<11.4f}" for m in METRICS for n in self.ns)
        return head + "\n" + row

    def key_values(self) -> list[str]:
        return [f"system={self.system} metric={m} N={n} value={self.mean(m, n):.6f} "
                f"n_users={self.n_users} skipped={self.n_skipped} config={self.fingerprint}"
                for m in METRICS for n in self.ns]


def relevant_sets(split: DatasetSplit, part: str = "test") -> list[set]:
    """Distinct POIs of ``part`` per user, minus the user's training POIs."""
    target = getattr(split, part)
    out = [set() for _ in range(split.m)]
    for u, p in zip(target.users.tolist(), target.pois.tolist()):
        out[u].add(p)
    for u, p in zip(split.train.users.tolist(), split.train.pois.tolist()):
        out[u].discard(p)
    return out


def evaluate(system, split: DatasetSplit, ns=(10, 20), part: str = "test", fingerprint: str = "") -> MetricsReport:
    """Average Precision/Recall/nDCG@N over users with a nonempty relevant set."""
    rel = relevant_sets(split, part)
    users = np.array([u for u in range(split.m) if rel[u]], dtype=np.int64)
    skipped = split.m - len(users)
    if len(users) == 0:
        raise ValueError(f"no users with {part} POIs outside their training set")
    recs = system.recommend(users, max(ns))
    per_user = {(m, n): np.zeros(len(users)) for m in METRICS for n in ns}
    for i, rec in enumerate(recs):
        r = rel[rec.user]
        for n in ns:
            per_user[("precision", n)][i] = precision_at_n(rec.pois, r, n)
            per_user[("recall", n)][i] = recall_at_n(rec.pois, r, n)
            per_user[("ndcg", n)][i] = ndcg_at_n(rec.pois, r, n)
    name = getattr(system, "name", type(system).__name__)
    return MetricsReport(name, tuple(ns), users, per_user, skipped, fingerprint)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    degenerate: bool = False


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test of ``a`` against ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    d = a - b
    n = len(d)
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, n - 1)
        return TTestResult(math.copysign(math.inf, mean), 0.0, n - 1, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(float(t), float(2.0 * stats.t.sf(abs(t), n - 1)), n - 1)


def compare(a: MetricsReport, b: MetricsReport, metric: str, n: int) -> TTestResult:
    if not np.array_equal(a.users, b.users):
        raise ValueError("reports cover different users")
    return paired_t_test(a.per_user[(metric, n)], b.per_user[(metric, n)])


# --------------------------------------------------------------------------
# experiment grids

@dataclass
class GridCell:
    value: float
    report: MetricsReport | None
    extra: dict = field(default_factory=dict)
    n_edges: int = 0
    error: str | None = None


@dataclass
class ExperimentGrid:
    axis: str
    values: tuple
    cells: list

    def rows(self, metric_ns=None) -> list[str]:
        out = []
        for c in self.cells:
            reports = {} if c.report is None else {c.report.system: c.report}
            reports.update(c.extra)
            for name, r in reports.items():
                vals = " ".join(f"{m}@{n}={v:.6f}" for (m, n), v in sorted(r.means.items()))
                out.append(f"{self.axis}={c.value:g} system={name} n_users={r.n_users} "
                           f"n_edges={c.n_edges} {vals}")
            if c.error:
                out.append(f"{self.axis}={c.value:g} error={c.error!r}")
        return out


def run_experiment(axis: str, values, split: DatasetSplit, edges: FriendshipEdgeList,
                   cfg: ModelConfig = ModelConfig(), ns=(10, 20), overlap_threshold: float = 0.0,
                   seed: int = 0, baselines: bool = False, part: str = "test") -> ExperimentGrid:
    """Vary one setting, refit what depends on it, evaluate each cell.

    With ``baselines`` every cell also reports SUCP-NoSocial, TopPopular and
    the MF preference alone.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    values = tuple(float(v) for v in values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("axis values must be strictly increasing")

    base = None
    base_edges = filter_friendships_by_overlap(edges, split, overlap_threshold)
    if axis != "train_fraction":
        base = SUCP.fit(split.train, base_edges, replace(cfg, fusion=replace(cfg.fusion, variant="no_social")))

    cells = []
    for v in values:
        cell_split = split
        try:
            if axis == "beta":
                model = base.variant("full").with_social(beta=v)
            elif axis == "overlap_threshold":
                model = base.variant("full").with_social(edges=filter_friendships_by_overlap(edges, split, v))
            else:
                # edges are validated against the full observation period; the
                # evaluation target (relevant sets, users) stays that of ``split``
                cell_split = subsample_training(split, v, seed)
                model = SUCP.fit(cell_split.train, base_edges, replace(cfg, fusion=replace(cfg.fusion, variant="full")))
            cell = GridCell(v, evaluate(model, split, ns, part), n_edges=len(model.edges))
            if baselines:
                cell.extra["SUCP-NoSocial"] = evaluate(model.variant("no_social"), split, ns, part)
                cell.extra["TopPopular"] = evaluate(TopPopular.fit(cell_split.train), split, ns, part)
                cell.extra["MF-Preference"] = evaluate(PreferenceOnly(model.R, model.prefs, cfg.block_size),
                                                       split, ns, part)
        except Exception as exc:  # a failed cell must not sink the grid
            log.exception("cell %s=%s failed", axis, v)
            cell = GridCell(v, None, error=f"{type(exc).__name__}: {exc}")
        cells.append(cell)
    return ExperimentGrid(axis, values, cells)


def select_beta(split: DatasetSplit, edges: FriendshipEdgeList, cfg: ModelConfig = ModelConfig(),
                values=tuple(np.round(np.arange(0, 1.01, 0.1), 1)), metric=("recall", 20),
                overlap_threshold: float = 0.0) -> tuple[float, ExperimentGrid]:
    """Pick beta on the validation part, returning the winner and the validation grid."""
    grid = run_experiment("beta", values, split, edges, cfg, ns=(metric[1],),
                          overlap_threshold=overlap_threshold, part="valid")
    scored = [(c.report.mean(*metric), -c.value) for c in grid.cells if c.report is not None]
    if not scored:
        raise RuntimeError("every beta cell failed")
    best = max(scored)
    return -best[1], grid


def config_fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]
