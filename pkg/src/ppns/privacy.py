"""Differential-privacy machinery for neighbour selection.

Selection weights follow the exponential mechanism with the similarity score
itself as the quality function:

    weight_i = exp(epsilon * sim(a, i) / (4 * k * RS))

where RS is the recommendation-aware sensitivity: the largest change either
bracketed similarity term can undergo when a single co-rated rating is
removed from the pair's data.  The Laplace mechanism here serves the
truncated-selection baseline, which perturbs similarities before the final
rating aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import RatingMatrix
from .similarity import CandidateList


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget and selection-size parameters shared by the strategies.

    `rs` is the sensitivity in effect (usually estimated from data);
    `rs_override` pins it to a constant instead, e.g. 1.0 for worked examples.
    """

    epsilon: float
    k: int
    rs: float = 1.0
    rho: float = 0.5
    rs_override: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.rs <= 0:
            raise ValueError(f"rs must be positive, got {self.rs}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.rs_override is not None and self.rs_override <= 0:
            raise ValueError(f"rs_override must be positive, got {self.rs_override}")

    @property
    def effective_rs(self) -> float:
        return self.rs_override if self.rs_override is not None else self.rs


def recommendation_aware_sensitivity(matrix: RatingMatrix, i: int, j: int) -> float:
    """Similarity sensitivity of the user pair under single-rating removal.

    Maximises, over each co-rated item s, the two change terms obtained by
    deleting the rating on s: the surviving product against the reduced
    norms, and the norm-shrinkage term.  A pair with exactly one co-rated
    item scores 1.0 (removal drops a perfect similarity to zero); a pair
    with none scores 0.
    """
    ri = matrix.user_vector(i)
    rj = matrix.user_vector(j)
    both = (ri > 0) & (rj > 0)
    if not both.any():
        return 0.0
    u = ri[both]
    v = rj[both]
    if u.size == 1:
        return 1.0
    prod = u * v
    full = math.sqrt(float(u @ u) * float(v @ v))
    reduced = np.sqrt((float(u @ u) - u * u) * (float(v @ v) - v * v))
    direct = prod / reduced
    shrink = prod * (full - reduced) / (full * reduced)
    return float(max(direct.max(), shrink.max()))


def estimate_sensitivity(matrix: RatingMatrix, target: int) -> float:
    """Global sensitivity estimate: max pair sensitivity over pairs with `target`.

    Vectorised equivalent of maximising recommendation_aware_sensitivity
    over every other user.
    """
    row = matrix.require_user(target)
    if matrix.n_users < 2:
        raise ValueError("sensitivity estimation needs at least two users")
    dense = matrix.dense()
    dense_sq = matrix.dense_squared()
    mask = matrix.rated_mask()
    ra = dense[row]
    ra_sq = ra * ra
    ma = mask[row]

    co = mask * ma  # 1 where the pair co-rates the item
    counts = co.sum(axis=1)
    own_sq = mask @ ra_sq  # per user: sum of target squares over co-rated
    other_sq = dense_sq @ ma  # per user: own squared sum over co-rated
    full = np.sqrt(own_sq * other_sq)

    prod = dense * ra
    reduced = np.sqrt(
        np.maximum(own_sq[:, None] - ra_sq[None, :], 0.0)
        * np.maximum(other_sq[:, None] - dense_sq, 0.0)
    )
    multi = (co > 0) & (counts[:, None] >= 2)
    direct = np.divide(prod, reduced, out=np.zeros_like(prod), where=multi)
    shrink = np.divide(
        prod * (full[:, None] - reduced),
        full[:, None] * reduced,
        out=np.zeros_like(prod),
        where=multi,
    )
    per_user = np.maximum(direct, shrink).max(axis=1)
    per_user[counts == 1] = 1.0
    per_user[row] = 0.0
    return float(per_user.max())


def selection_weights(candidates: CandidateList, params: PrivacyParams) -> np.ndarray:
    """Exponential-mechanism weight for each candidate, in list order.

    Strictly positive and strictly increasing in similarity, so no candidate
    is ever unselectable.
    """
    scale = params.epsilon / (4.0 * params.k * params.effective_rs)
    weights = np.exp(scale * candidates.sims)
    if not np.all(np.isfinite(weights)):
        raise ValueError("non-finite selection weight; check similarities and parameters")
    return weights


def compute_lambda(sim_k: float, n: int, params: PrivacyParams) -> float:
    """Truncation half-width for banded selection around the k-th similarity.

    The data-independent term grows like (4 k RS / epsilon) * ln(k(n-k)/rho),
    which dwarfs any similarity at realistic sizes, so the k-th similarity
    itself is almost always the binding value (making rho inert in practice).
    """
    k = params.k
    if n <= k:
        raise ValueError(f"need more candidates than k: n={n}, k={k}")
    bound = (4.0 * k * params.effective_rs / params.epsilon) * math.log(
        k * (n - k) / params.rho
    )
    return min(sim_k, bound)


def laplace_noise(value: float, sensitivity: float, epsilon: float, rng: np.random.Generator) -> float:
    """`value` plus Laplace(sensitivity / epsilon) noise."""
    if sensitivity <= 0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return float(value + rng.laplace(loc=0.0, scale=sensitivity / epsilon))
