"""Rankings, rank-correlation statistics, stratified sampling, and the
second-order expansion diagnostic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .scores import ScoreTable


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Ranking:
    """Descending-score order over a fixed id set.

    `ids` lists ids from highest to lowest score (ties broken by ascending
    id for display); `rank_of` assigns average ranks in 1..N, so tied
    scores share a fractional rank.
    """

    ids: tuple
    scores: tuple
    rank_of: dict

    def __len__(self):
        return len(self.ids)

    def rank_vector(self, id_order) -> np.ndarray:
        return np.array([self.rank_of[i] for i in id_order], dtype=np.float64)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"ids": list(self.ids), "scores": list(self.scores)}, fh)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "Ranking":
        with open(path) as fh:
            obj = json.load(fh)
        return rank_from_pairs(zip(obj["ids"], obj["scores"]))


def rank_from_pairs(pairs) -> Ranking:
    items = list(pairs)
    if not items:
        raise AnalysisError("cannot rank an empty table")
    for id_, s in items:
        if not math.isfinite(s):
            raise AnalysisError(f"non-finite score for id {id_}")
    items.sort(key=lambda kv: (-kv[1], kv[0]))
    ids = tuple(id_ for id_, _ in items)
    scores = tuple(s for _, s in items)
    rank_of = {}
    i = 0
    while i < len(items):
        j = i
        while j < len(items) and scores[j] == scores[i]:
            j += 1
        avg = (i + 1 + j) / 2.0  # mean of positions i+1 .. j
        for k in range(i, j):
            rank_of[ids[k]] = avg
        i = j
    return Ranking(ids=ids, scores=scores, rank_of=rank_of)


def rank_by_score(table: ScoreTable) -> Ranking:
    """Ranking induced by a score table: highest total first, average ranks on ties."""
    return rank_from_pairs(table.totals().items())


def _aligned_ranks(r_a: Ranking, r_b: Ranking):
    if set(r_a.ids) != set(r_b.ids):
        raise AnalysisError("rankings cover different id sets")
    order = sorted(r_a.ids)
    return r_a.rank_vector(order), r_b.rank_vector(order)


def spearman(r_a: Ranking, r_b: Ranking) -> float:
    """Pearson correlation of the two average-rank vectors."""
    if len(r_a) < 2:
        raise AnalysisError("need at least 2 samples")
    a, b = _aligned_ranks(r_a, r_b)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise AnalysisError("rank variance is zero (all scores tied)")
    return float(np.clip((a * b).sum() / denom, -1.0, 1.0))


def _merge_count(a: np.ndarray) -> int:
    """Number of strict inversions (pairs i<j with a[i] > a[j])."""
    n = len(a)
    if n < 2:
        return 0
    mid = n // 2
    left, right = a[:mid].copy(), a[mid:].copy()
    inv = _merge_count(left) + _merge_count(right)
    # positions of each right element among left elements that exceed it
    inv += int(np.sum(len(left) - np.searchsorted(left, right, side="right")))
    a[:] = np.sort(a, kind="mergesort")
    return inv


def _tie_pair_count(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(r_a: Ranking, r_b: Ranking) -> float:
    """Tie-corrected Kendall tau-b via O(N log N) merge counting."""
    if len(r_a) < 2:
        raise AnalysisError("need at least 2 samples")
    x, y = _aligned_ranks(r_a, r_b)
    n = len(x)
    perm = np.lexsort((y, x))
    x, y = x[perm], y[perm]

    tot = n * (n - 1) // 2
    xtie = _tie_pair_count(x)
    ytie = _tie_pair_count(y)
    both = np.rec.fromarrays([x, y])
    ntie = _tie_pair_count(both)
    if tot == xtie or tot == ytie:
        raise AnalysisError("rank variance is zero (all scores tied)")
    # x-ties are sorted by y, so within-group y pairs are never inversions
    dis = _merge_count(y.copy())
    con_minus_dis = tot - xtie - ytie + ntie - 2 * dis
    tau = con_minus_dis / math.sqrt((tot - xtie) * (tot - ytie))
    return float(np.clip(tau, -1.0, 1.0))


_STATS = {"spearman": spearman, "kendall": kendall_tau}


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple
    stat: str
    values: tuple  # tuple of row tuples, symmetric with unit diagonal

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {"labels": list(self.labels), "stat": self.stat,
                 "values": [list(r) for r in self.values]},
                fh, indent=2,
            )
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "CorrelationMatrix":
        with open(path) as fh:
            obj = json.load(fh)
        return cls(tuple(obj["labels"]), obj["stat"],
                   tuple(tuple(r) for r in obj["values"]))


def correlation_matrix(rankings, stat: str = "spearman") -> CorrelationMatrix:
    """Pairwise rank-correlation matrix over labeled rankings.

    `rankings` is a list of (label, Ranking) pairs sharing one id set.
    """
    if stat not in _STATS:
        raise AnalysisError(f"unknown stat {stat!r}")
    fn = _STATS[stat]
    labels = tuple(lbl for lbl, _ in rankings)
    rs = [r for _, r in rankings]
    k = len(rs)
    values = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            values[i, j] = values[j, i] = fn(rs[i], rs[j])
    return CorrelationMatrix(labels, stat, tuple(tuple(row) for row in values))


def stratified_sample(r: Ranking, bins: int, per_bin: int, seed: int):
    """Draw per_bin ids from each of `bins` contiguous strata of the ranking.

    Strata partition the descending order; any remainder is spread over the
    leading strata. Returns a list of id lists, highest-density stratum first.
    """
    n = len(r)
    if bins < 1 or bins > n:
        raise AnalysisError(f"bins must be in 1..{n}")
    base, extra = divmod(n, bins)
    rng = np.random.default_rng(seed)
    out = []
    start = 0
    for b in range(bins):
        size = base + (1 if b < extra else 0)
        stratum = r.ids[start : start + size]
        start += size
        if per_bin > size:
            raise AnalysisError(f"per_bin {per_bin} exceeds stratum size {size}")
        picks = rng.choice(size, size=per_bin, replace=False)
        out.append([stratum[i] for i in sorted(picks)])
    return out


def log_density_hessian_diag(scorer, x0: np.ndarray, eps: float) -> np.ndarray:
    """Diagonal Hessian of a scalar log-density by second differences."""
    x0 = np.asarray(x0, dtype=np.float64)
    s0 = scorer(x0)
    if not math.isfinite(s0):
        raise AnalysisError("non-finite score at expansion point")
    diag = np.empty(x0.shape[0])
    for j in range(x0.shape[0]):
        step = np.zeros_like(x0)
        step[j] = eps
        sp, sm = scorer(x0 + step), scorer(x0 - step)
        if not (math.isfinite(sp) and math.isfinite(sm)):
            raise AnalysisError(f"non-finite stencil value at dimension {j}")
        diag[j] = (sp - 2.0 * s0 + sm) / (eps * eps)
    return diag


def second_order_gap(hess_diag, var_q, var_p) -> float:
    """Variance-based log-density gap: (1/2) sum_j H_jj (var_q_j - var_p_j)."""
    hess_diag = np.asarray(hess_diag, dtype=np.float64)
    var_q = np.asarray(var_q, dtype=np.float64)
    var_p = np.asarray(var_p, dtype=np.float64)
    if not (hess_diag.shape == var_q.shape == var_p.shape):
        raise AnalysisError("length mismatch")
    return float(0.5 * np.sum(hess_diag * (var_q - var_p)))
