"""Set cover over the coverage matrix: greedy, greedy with redundancy removal, randomized rollouts."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SelectionResult:
    selected: list  # candidate ids in selection order
    covered: set
    coverage_rate: float
    reward_trace: list  # marginal reward at each selection step
    n_targets: int = 0
    coverage_trace: list = field(default_factory=list)  # cumulative coverage after each step

    @property
    def count(self) -> int:
        return len(self.selected)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "candidate_id", "marginal_reward", "cumulative_coverage"])
            for k, (cid, r) in enumerate(zip(self.selected, self.reward_trace)):
                cov = self.coverage_trace[k] if k < len(self.coverage_trace) else ""
                w.writerow([k, cid, r, f"{cov:.6f}" if cov != "" else ""])


def _rows(matrix) -> tuple[list, int]:
    """Accept a CoverageMatrix, a bool array or a list of id collections."""
    if hasattr(matrix, "visible"):
        vis = np.asarray(matrix.visible, dtype=bool)
        return [np.flatnonzero(r) for r in vis], vis.shape[1]
    if isinstance(matrix, np.ndarray):
        vis = np.asarray(matrix, dtype=bool)
        if vis.ndim != 2:
            raise ValueError("coverage matrix must be 2-D")
        return [np.flatnonzero(r) for r in vis], vis.shape[1]
    rows = [np.array(sorted(r), dtype=np.int64) for r in matrix]
    n = max((int(r.max()) + 1 for r in rows if len(r)), default=0)
    return rows, n


def _result(selected, gains, rows, n_targets) -> SelectionResult:
    covered = np.zeros(n_targets, dtype=bool)
    cov_trace = []
    for c in selected:
        covered[rows[c]] = True
        cov_trace.append(covered.sum() / n_targets if n_targets else 0.0)
    rate = float(covered.sum() / n_targets) if n_targets else 0.0
    return SelectionResult(list(selected), set(np.flatnonzero(covered).tolist()), rate, list(gains), n_targets,
                           cov_trace)


def select_greedy(matrix, min_reward: int = 0) -> SelectionResult:
    """Pick the largest marginal reward (lowest id on ties) while it exceeds ``min_reward``.

    Marginal rewards are refreshed lazily: a popped stale entry is re-scored and
    pushed back unless it still beats the next entry, which gives the same
    picks as eager recomputation because gains only shrink.
    """
    if min_reward < 0:
        raise ValueError("min_reward must be >= 0")
    rows, n = _rows(matrix)
    covered = np.zeros(n, dtype=bool)
    heap = [(-len(r), c) for c, r in enumerate(rows)]
    heapq.heapify(heap)
    selected, gains = [], []
    remaining = n
    while heap and remaining > 0:
        neg, c = heapq.heappop(heap)
        g = int(np.count_nonzero(~covered[rows[c]]))
        if g != -neg:
            if g > 0:
                heapq.heappush(heap, (-g, c))
            continue
        if g <= min_reward or g == 0:
            break
        selected.append(c)
        gains.append(g)
        covered[rows[c]] = True
        remaining -= g
    return _result(selected, gains, rows, n)


def _redundant_free(selected, rows, n) -> list:
    counts = np.zeros(n, dtype=np.int64)
    for c in selected:
        counts[rows[c]] += 1
    keep = list(selected)
    while True:
        # a candidate is redundant when every target it covers is covered at least twice
        redundant = [c for c in keep if len(rows[c]) == 0 or counts[rows[c]].min() >= 2]
        if not redundant:
            return keep
        victim = min(redundant, key=lambda c: (len(rows[c]), c))
        keep.remove(victim)
        counts[rows[victim]] -= 1


def select_backtracking(matrix, min_reward: int = 0) -> SelectionResult:
    """Greedy, then drop redundant picks (smallest own coverage first) until none remain."""
    greedy = select_greedy(matrix, min_reward)
    rows, n = _rows(matrix)
    keep = _redundant_free(greedy.selected, rows, n)
    # marginal gains recomputed in the surviving order
    covered = np.zeros(n, dtype=bool)
    gains = []
    for c in keep:
        gains.append(int(np.count_nonzero(~covered[rows[c]])))
        covered[rows[c]] = True
    return _result(keep, gains, rows, n)


def _rollout(rows, n, min_reward, lam, rng) -> tuple[list, list]:
    covered = np.zeros(n, dtype=bool)
    alive = [c for c in range(len(rows)) if len(rows[c]) > min_reward]
    selected, gains = [], []
    while alive:
        scored = [(int(np.count_nonzero(~covered[rows[c]])), c) for c in alive]
        scored = [(g, c) for g, c in scored if g > min_reward and g > 0]
        if not scored:
            break
        scored.sort(key=lambda x: (-x[0], x[1]))
        w = np.exp(-lam * np.arange(len(scored)))
        k = int(rng.choice(len(scored), p=w / w.sum()))
        g, c = scored[k]
        selected.append(c)
        gains.append(g)
        covered[rows[c]] = True
        alive = [x for _, x in scored if x != c]
    return selected, gains


def select_probabilistic(matrix, min_reward: int = 0, lam: float = 0.7, trials: int = 32,
                         seed: int = 0) -> SelectionResult:
    """Best of ``trials`` randomized greedy rollouts.

    At each step candidates are ranked by marginal reward (descending, ids
    ascending) and rank k is drawn with probability proportional to
    exp(-lam * k). The result with the highest coverage, then fewest picks,
    then earliest trial, wins. Trial t uses seed + t.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if min_reward < 0:
        raise ValueError("min_reward must be >= 0")
    rows, n = _rows(matrix)
    best = None
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        sel, gains = _rollout(rows, n, min_reward, lam, rng)
        cov = sum(gains)
        key = (-cov, len(sel))
        if best is None or key < best[0]:
            best = (key, sel, gains)
    return _result(best[1], best[2], rows, n)


def greedy_bound(max_row: int) -> float:
    """Approximation factor 1 + ln(max row size) of greedy set cover."""
    return 1.0 + math.log(max(1, max_row))


SOLVERS = {"greedy": select_greedy, "backtracking": select_backtracking, "probabilistic": select_probabilistic}
