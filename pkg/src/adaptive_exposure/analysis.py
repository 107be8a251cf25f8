"""Quantitative analyses over session traces.

Per-segment accuracy (MSE against the desired level), paired nonparametric
comparison (exact signed-rank test), SCR feature contrasts, and the
personalization clustering pipeline (k-means + elbow + cross-cluster matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .content import SpiderConfig, normalized_vector
from .session import SessionPlan, SessionTrace, StepRecord
from .signals import ScrFeatures, scr_features


# -- segment handling -------------------------------------------------------


def _plan(trace: SessionTrace) -> SessionPlan:
    return SessionPlan.from_json(trace.meta["plan"])


def _segment_label(trace: SessionTrace, step: StepRecord) -> Optional[str]:
    """"low"/"high" by target rank within the step's anxious-phase schedule."""
    plan = _plan(trace)
    phase = plan.phases[step.phase_index]
    if phase.kind != "anxious":
        return None
    targets = [seg.target for seg in phase.schedule.segments]
    elapsed = 0.0
    for seg in phase.schedule.segments:
        elapsed += seg.duration_s
        if step.phase_t_s < elapsed - 1e-9:
            if len(set(targets)) == 1:
                return "low"
            return "low" if seg.target == min(targets) else "high"
    return None


def segment_steps(trace: SessionTrace, segment: str, method: Optional[str] = None) -> list[StepRecord]:
    out = []
    for step in trace.steps:
        if method is not None and step.method != method:
            continue
        if _segment_label(trace, step) == segment:
            out.append(step)
    return out


def segment_mse(trace: SessionTrace, segment: str, method: Optional[str] = None) -> float:
    """Mean squared estimate-vs-desired error over the segment's steps."""
    steps = segment_steps(trace, segment, method)
    if not steps:
        raise ValueError(f"trace has no steps in segment {segment!r}" + (f" for method {method!r}" if method else ""))
    return float(np.mean([(s.estimate - s.desired) ** 2 for s in steps]))


@dataclass(frozen=True)
class SegmentSummary:
    method: str
    segment: str  # "low" | "high"
    mse_level: float
    scr: ScrFeatures
    mean_estimate: float


def segment_summaries(trace: SessionTrace) -> list[SegmentSummary]:
    """One summary per (method, segment) present in the trace."""
    plan = _plan(trace)
    out: list[SegmentSummary] = []
    elapsed = 0.0
    for phase_index, phase in enumerate(plan.phases):
        if phase.kind == "anxious":
            method = phase.adapter
            seg_start = elapsed
            targets = [seg.target for seg in phase.schedule.segments]
            for seg in phase.schedule.segments:
                label = "low" if (len(set(targets)) == 1 or seg.target == min(targets)) else "high"
                steps = [
                    s
                    for s in trace.steps
                    if s.phase_index == phase_index
                    and seg_start - elapsed - 1e-9 <= s.phase_t_s < seg_start - elapsed + seg.duration_s - 1e-9
                ]
                if steps:
                    mse = float(np.mean([(s.estimate - s.desired) ** 2 for s in steps]))
                    mean_est = float(np.mean([s.estimate for s in steps]))
                    window = trace.eda.window(seg_start, seg_start + seg.duration_s)
                    scr = scr_features(window) if len(window) > 2 else ScrFeatures(0, 0.0, 0.0)
                    out.append(SegmentSummary(method, label, mse, scr, mean_est))
                seg_start += seg.duration_s
        elapsed += phase.duration_s
    return out


# -- Wilcoxon signed-rank ---------------------------------------------------

EXACT_CUTOFF_N = 20  # 2^20 sign patterns still enumerate instantly


@dataclass(frozen=True)
class WilcoxonResult:
    w: float  # min(W+, W-)
    p: float  # two-sided
    p_one_sided: float
    n_effective: int
    exact: bool


def _midranks(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr))
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _wplus_distribution(ranks2: np.ndarray) -> np.ndarray:
    """Counts of each achievable doubled-W+ value over all sign patterns."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r > 0 else counts
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(pairs: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Paired signed-rank test on differences x - y.

    Zero differences are dropped; |differences| are midranked.  For up to 20
    effective pairs the null distribution of W+ over all sign patterns gives
    exact tail probabilities; beyond that a tie-corrected normal approximation
    applies.
    """
    diffs = np.array([x - y for x, y in pairs], dtype=float)
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero; test degenerate")
    ranks = _midranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)
    total = float(ranks.sum())

    if n <= EXACT_CUTOFF_N:
        ranks2 = np.round(ranks * 2).astype(int)
        counts = _wplus_distribution(ranks2)
        n_patterns = counts.sum()
        w2 = int(round(w * 2))
        total2 = int(round(total * 2))
        lower = counts[: w2 + 1].sum() / n_patterns
        upper = counts[total2 - w2 :].sum() / n_patterns
        p_one = lower  # symmetric null, so P(W+ <= w) = P(W- <= w)
        p_two = min(1.0, lower + upper)
        return WilcoxonResult(w, p_two, p_one, n, exact=True)

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    z = (w - mu) / sigma
    p_one = 0.5 * math.erfc(-z / math.sqrt(2))  # Phi(z); w <= mu so z <= 0
    p_two = min(1.0, 2.0 * p_one)
    return WilcoxonResult(w, p_two, p_one, n, exact=False)


def wilcoxon_normal_approx(pairs: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Tie-corrected normal approximation regardless of n (for cross-checks)."""
    diffs = np.array([x - y for x, y in pairs], dtype=float)
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero; test degenerate")
    ranks = _midranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    z = (w - mu) / sigma
    p_one = 0.5 * math.erfc(-z / math.sqrt(2))
    return WilcoxonResult(w, min(1.0, 2 * p_one), p_one, n, exact=False)


# -- k-means and elbow ------------------------------------------------------


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,)
    inertia: float

    def assign(self, point: np.ndarray) -> int:
        d = np.linalg.norm(self.centroids - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))


def kmeans(points: Sequence[Sequence[float]], k: int, seed: int = 0, max_iter: int = 100) -> ClusterModel:
    """Lloyd's iteration with seeded init; empty clusters take the farthest point."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if k < 1 or k > n:
        raise ValueError(f"k={k} outside 1..{n}")
    rng = np.random.default_rng(seed)
    centroids = pts[rng.choice(n, size=k, replace=False)].copy()
    assignments = np.full(n, -1)
    for _ in range(max_iter):
        dists = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = np.argmin(dists, axis=1)
        for c in range(k):
            members = pts[new_assign == c]
            if len(members) == 0:
                farthest = int(np.argmax(dists[np.arange(n), new_assign]))
                centroids[c] = pts[farthest]
                new_assign[farthest] = c
            else:
                centroids[c] = members.mean(axis=0)
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
    dists = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
    assignments = np.argmin(dists, axis=1)
    inertia = float(np.sum(dists[np.arange(n), assignments] ** 2))
    return ClusterModel(k=k, centroids=centroids, assignments=assignments, inertia=inertia)


def kmeans_inertia(points, k: int, seed: int, n_init: int = 5) -> float:
    best = math.inf
    for i in range(n_init):
        model = kmeans(points, k, seed=seed * 1000 + i)
        best = min(best, model.inertia)
    return best


def elbow_k(points: Sequence[Sequence[float]], k_range: Sequence[int], seed: int = 0) -> int:
    """Chord rule: k whose normalized inertia point is farthest from the
    line joining the curve's endpoints."""
    ks = sorted(k_range)
    if not ks:
        raise ValueError("empty k range")
    n = len(points)
    if ks[0] < 1 or ks[-1] > n:
        raise ValueError(f"k range {ks[0]}..{ks[-1]} outside 1..{n}")
    if len(ks) == 1:
        return ks[0]
    inertias = np.array([kmeans_inertia(points, k, seed) for k in ks])
    x = (np.array(ks) - ks[0]) / (ks[-1] - ks[0])
    span = inertias[0] - inertias[-1]
    if span <= 0:
        return ks[0]
    y = (inertias - inertias[-1]) / span
    # Perpendicular distance to the chord from (0, 1) to (1, 0).
    dist = np.abs(x + y - 1.0) / math.sqrt(2.0)
    return ks[int(np.argmax(dist))]


# -- personalization --------------------------------------------------------


def max_anxiety_spider(trace: SessionTrace) -> SpiderConfig:
    """Config of the anxious step with the highest estimate; earliest on ties."""
    if not trace.steps:
        raise ValueError("trace has no anxious steps")
    best = max(trace.steps, key=lambda s: s.estimate)  # max() keeps the earliest tie
    return best.config


def cross_cluster_matrix(
    traces_by_patient: dict[str, list[SessionTrace]],
    model: ClusterModel,
) -> tuple[np.ndarray, list[Optional[int]]]:
    """(k x k) mean of per-patient max estimates under other-cluster spiders.

    Row i = patients whose own max-anxiety spider sits in cluster i; column j =
    exposure to configs assigned to cluster j.  NaN marks never-encountered
    combinations.  Also returns each patient's cluster in input order.
    """
    k = model.k
    sums = np.zeros((k, k))
    counts = np.zeros((k, k))
    patient_clusters: list[Optional[int]] = []
    for patient, traces in traces_by_patient.items():
        all_steps = [s for tr in traces for s in tr.steps]
        if not all_steps:
            patient_clusters.append(None)
            continue
        top = max(all_steps, key=lambda s: s.estimate)
        own = model.assign(np.array(normalized_vector(top.config)))
        patient_clusters.append(own)
        max_by_cluster: dict[int, int] = {}
        for s in all_steps:
            c = model.assign(np.array(normalized_vector(s.config)))
            max_by_cluster[c] = max(max_by_cluster.get(c, -1), s.estimate)
        for c, est in max_by_cluster.items():
            sums[own, c] += est
            counts[own, c] += 1
    with np.errstate(invalid="ignore"):
        matrix = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return matrix, patient_clusters


def diagonal_dominant_rows(matrix: np.ndarray) -> list[int]:
    """Rows whose diagonal entry is the row maximum among non-missing entries."""
    out = []
    for i in range(matrix.shape[0]):
        row = matrix[i]
        if math.isnan(row[i]):
            continue
        finite = row[~np.isnan(row)]
        if len(finite) and row[i] >= finite.max() - 1e-12:
            out.append(i)
    return out
