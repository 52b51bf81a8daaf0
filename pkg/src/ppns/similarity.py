"""User-user similarity metrics and candidate-list construction.

Both metrics operate on the set of items co-rated by the two users.  Cosine
restricts its norms to the co-rated items as well, so any pair of parallel
co-rated vectors scores exactly 1 regardless of profile size.  Pearson
centres each user's co-rated ratings on that user's *full-profile* mean.
Degenerate cases (no co-rated items, a zero denominator) score 0, which
parks such candidates at the tail of the list without excluding them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO

import numpy as np

from .dataset import RatingDataError, RatingMatrix

METRICS = ("cosine", "pearson")


@dataclass(frozen=True)
class CandidateList:
    """A target user's candidate neighbours, sorted by similarity.

    Entries are (user_id, similarity) pairs in descending similarity order,
    ties broken by ascending user id; the target itself never appears.
    """

    target: int
    entries: tuple[tuple[int, float], ...]
    metric: str

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def users(self) -> np.ndarray:
        return np.array([u for u, _ in self.entries], dtype=np.int64)

    @cached_property
    def sims(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=np.float64)

    def kth_similarity(self, k: int) -> float:
        """Similarity of the k-th (1-based) candidate."""
        if not 1 <= k <= len(self.entries):
            raise ValueError(f"k={k} out of range for {len(self.entries)} candidates")
        return self.entries[k - 1][1]

    def top_k_sum(self, k: int) -> float:
        if not 1 <= k <= len(self.entries):
            raise ValueError(f"k={k} out of range for {len(self.entries)} candidates")
        return float(self.sims[:k].sum())

    def with_sims(self, sims: np.ndarray) -> "CandidateList":
        """Same candidates re-scored (and re-sorted) with new similarities."""
        if len(sims) != len(self.entries):
            raise ValueError("similarity vector length mismatch")
        pairs = [(int(u), float(s)) for (u, _), s in zip(self.entries, sims)]
        pairs.sort(key=lambda e: (-e[1], e[0]))
        return CandidateList(self.target, tuple(pairs), self.metric)


def corated_items(matrix: RatingMatrix, i: int, j: int) -> set[int]:
    """Items rated by both users.  The two users must be distinct."""
    if i == j:
        raise ValueError(f"co-rated items undefined for a user with itself ({i})")
    ri = matrix.user_vector(i)
    rj = matrix.user_vector(j)
    both = np.flatnonzero((ri > 0) & (rj > 0))
    items = matrix.item_ids
    return {items[c] for c in both}


def cosine_similarity(matrix: RatingMatrix, i: int, j: int) -> float:
    """Cosine of the two users' co-rated rating vectors; 0 when none co-rated."""
    ri = matrix.user_vector(i)
    rj = matrix.user_vector(j)
    both = (ri > 0) & (rj > 0)
    if not both.any():
        return 0.0
    u = ri[both]
    v = rj[both]
    denom = math.sqrt(float(u @ u)) * math.sqrt(float(v @ v))
    return float(u @ v) / denom if denom else 0.0


def pearson_similarity(matrix: RatingMatrix, i: int, j: int) -> float:
    """Pearson correlation over co-rated items, centred on full-profile means.

    Returns 0 when there are no co-rated items or either centred vector has
    zero norm (e.g. a user who rates everything the same).
    """
    ri = matrix.user_vector(i)
    rj = matrix.user_vector(j)
    both = (ri > 0) & (rj > 0)
    if not both.any():
        return 0.0
    mi = float(ri.sum() / np.count_nonzero(ri))
    mj = float(rj.sum() / np.count_nonzero(rj))
    du = ri[both] - mi
    dv = rj[both] - mj
    denom = math.sqrt(float(du @ du)) * math.sqrt(float(dv @ dv))
    return float(du @ dv) / denom if denom else 0.0


def _cosine_row(matrix: RatingMatrix, target: int) -> np.ndarray:
    """Cosine similarity of `target` against every user, vectorised."""
    row = matrix.require_user(target)
    dense = matrix.dense()
    mask = matrix.rated_mask()
    ra = dense[row]
    ra_sq = ra * ra
    num = dense @ ra
    own_sq = mask @ ra_sq  # per user: sum of target's squared ratings over co-rated
    other_sq = matrix.dense_squared() @ mask[row]  # per user: own squared sum over co-rated
    denom = np.sqrt(own_sq * other_sq)
    sims = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return sims


def _pearson_row(matrix: RatingMatrix, target: int) -> np.ndarray:
    row = matrix.require_user(target)
    dense = matrix.dense()
    mask = matrix.rated_mask()
    counts = mask.sum(axis=1)
    sums = dense.sum(axis=1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    centred = (dense - means[:, None]) * mask
    da = centred[row]
    num = centred @ da
    own_sq = mask @ (da * da)
    other_sq = (centred * centred) @ mask[row]
    denom = np.sqrt(own_sq * other_sq)
    sims = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return sims


def candidate_list(matrix: RatingMatrix, target: int, metric: str = "cosine") -> CandidateList:
    """Score and sort every other user as a candidate neighbour of `target`."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if matrix.n_users < 2:
        raise RatingDataError("candidate list needs at least two users")
    sims = _cosine_row(matrix, target) if metric == "cosine" else _pearson_row(matrix, target)
    row = matrix.require_user(target)
    pairs = [
        (uid, float(sims[k]))
        for k, uid in enumerate(matrix.user_ids)
        if k != row
    ]
    pairs.sort(key=lambda e: (-e[1], e[0]))
    return CandidateList(target=target, entries=tuple(pairs), metric=metric)


def export_candidates_csv(candidates: CandidateList, stream: IO[str]) -> int:
    """Write `rank,user_id,similarity` rows (6 decimal places); returns row count."""
    stream.write("rank,user_id,similarity\n")
    for rank, (uid, sim) in enumerate(candidates.entries, start=1):
        stream.write(f"{rank},{uid},{sim:.6f}\n")
    return len(candidates.entries)
