"""Rating data handling: MovieLens-format ingestion, holdout sampling,
and forged-profile injection for attack experiments.

The on-disk format is one rating per line, four tab-separated fields::

    user_id<TAB>item_id<TAB>rating<TAB>timestamp

Ratings are integer stars in 1..5; timestamps are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

RATING_MIN = 1
RATING_MAX = 5


class RatingDataError(ValueError):
    """Malformed or inconsistent rating data; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TestPoint:
    """One held-out (user, item, rating) triple used as a prediction target."""

    user: int
    item: int
    true_rating: int


class RatingMatrix:
    """Immutable sparse user x item star-rating matrix.

    Internally stores a dense float64 array with 0.0 marking "unrated";
    ratings themselves are integers in 1..5, so 0 is unambiguous.  The
    matrix never mutates after construction, which makes it safe to share
    across parallel experiment trials.
    """

    def __init__(self, ratings: Mapping[tuple[int, int], int]):
        users = sorted({u for u, _ in ratings})
        items = sorted({i for _, i in ratings})
        self._init_from_ids(users, items)
        dense = np.zeros((len(users), len(items)), dtype=np.float64)
        for (u, i), r in ratings.items():
            if not (RATING_MIN <= int(r) <= RATING_MAX):
                raise RatingDataError(f"rating {r} for ({u}, {i}) outside {RATING_MIN}..{RATING_MAX}")
            dense[self._uindex[u], self._iindex[i]] = int(r)
        self._set_dense(dense)

    def _init_from_ids(self, users: list[int], items: list[int]) -> None:
        self._users = tuple(users)
        self._items = tuple(items)
        self._uindex = {u: k for k, u in enumerate(users)}
        self._iindex = {i: k for k, i in enumerate(items)}

    def _set_dense(self, dense: np.ndarray) -> None:
        dense.setflags(write=False)
        self._dense = dense
        self._mask_f: np.ndarray | None = None  # lazy float 0/1 rated mask
        self._dense_sq: np.ndarray | None = None  # lazy elementwise square

    @classmethod
    def _from_dense(cls, dense: np.ndarray, users: tuple[int, ...], items: tuple[int, ...]) -> "RatingMatrix":
        m = cls.__new__(cls)
        m._init_from_ids(list(users), list(items))
        m._set_dense(dense)
        return m

    # -- identity and size ------------------------------------------------

    @property
    def user_ids(self) -> tuple[int, ...]:
        return self._users

    @property
    def item_ids(self) -> tuple[int, ...]:
        return self._items

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    @property
    def n_ratings(self) -> int:
        return int(np.count_nonzero(self._dense))

    def has_user(self, user: int) -> bool:
        return user in self._uindex

    def require_user(self, user: int) -> int:
        """Return the row index of `user`, raising for unknown ids."""
        try:
            return self._uindex[user]
        except KeyError:
            raise RatingDataError(f"unknown user id {user}") from None

    def require_item(self, item: int) -> int:
        try:
            return self._iindex[item]
        except KeyError:
            raise RatingDataError(f"unknown item id {item}") from None

    # -- access ------------------------------------------------------------

    def rating(self, user: int, item: int) -> int | None:
        """The stored rating, or None when the pair is unrated (or unknown item)."""
        row = self.require_user(user)
        col = self._iindex.get(item)
        if col is None:
            return None
        value = self._dense[row, col]
        return int(value) if value else None

    def user_vector(self, user: int) -> np.ndarray:
        """Read-only dense rating row for `user` (0.0 = unrated)."""
        return self._dense[self.require_user(user)]

    def items_rated_by(self, user: int) -> tuple[int, ...]:
        row = self._dense[self.require_user(user)]
        return tuple(self._items[c] for c in np.flatnonzero(row))

    def dense(self) -> np.ndarray:
        """The full read-only dense array (users x items)."""
        return self._dense

    def rated_mask(self) -> np.ndarray:
        """Float 0/1 matrix marking rated cells (cached; used in similarity sums)."""
        if self._mask_f is None:
            self._mask_f = (self._dense > 0).astype(np.float64)
            self._mask_f.setflags(write=False)
        return self._mask_f

    def dense_squared(self) -> np.ndarray:
        if self._dense_sq is None:
            self._dense_sq = self._dense * self._dense
            self._dense_sq.setflags(write=False)
        return self._dense_sq

    def entries(self) -> Iterator[tuple[int, int, int]]:
        """All (user, item, rating) triples in (user, item) order."""
        for row, col in zip(*np.nonzero(self._dense)):
            yield self._users[row], self._items[col], int(self._dense[row, col])

    def user_mean(self, user: int) -> float | None:
        """Mean of the user's ratings, or None for a user with no ratings left."""
        row = self._dense[self.require_user(user)]
        count = np.count_nonzero(row)
        return float(row.sum() / count) if count else None

    def global_mean(self) -> float:
        count = np.count_nonzero(self._dense)
        if not count:
            raise RatingDataError("empty matrix has no global mean")
        return float(self._dense.sum() / count)

    # -- derived matrices ----------------------------------------------------

    def masked(self, user: int, item: int) -> "RatingMatrix":
        """A copy with one rating hidden (0), for leak-free per-trial prediction.

        The user/item id universe is preserved even if this removes the
        user's last rating, so candidate-list lengths do not shift.
        """
        row, col = self.require_user(user), self.require_item(item)
        if not self._dense[row, col]:
            raise RatingDataError(f"({user}, {item}) holds no rating to mask")
        dense = self._dense.copy()
        dense[row, col] = 0.0
        return RatingMatrix._from_dense(dense, self._users, self._items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (
            self._users == other._users
            and self._items == other._items
            and np.array_equal(self._dense, other._dense)
        )

    def __repr__(self) -> str:
        return f"RatingMatrix(users={self.n_users}, items={self.n_items}, ratings={self.n_ratings})"


# -- operations --------------------------------------------------------------


def _iter_lines(stream: IO | bytes | str | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        yield from stream.splitlines()
        return
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def parse_ratings(stream: IO | bytes | str | Iterable[str]) -> RatingMatrix:
    """Parse MovieLens-format rating lines into a RatingMatrix.

    Rejects (with the offending 1-based line number) out-of-range ratings,
    duplicate (user, item) pairs, and lines without exactly four
    tab-separated fields.  A trailing blank line is tolerated.
    """
    ratings: dict[tuple[int, int], int] = {}
    pending_blank: int | None = None
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            if pending_blank is not None:
                raise RatingDataError("blank line", pending_blank)
            pending_blank = lineno
            continue
        if pending_blank is not None:
            raise RatingDataError("blank line", pending_blank)
        fields = line.split("\t")
        if len(fields) != 4:
            raise RatingDataError(f"expected 4 tab-separated fields, got {len(fields)}", lineno)
        try:
            user, item, value = int(fields[0]), int(fields[1]), int(fields[2])
        except ValueError:
            raise RatingDataError(f"non-integer field in {fields[:3]}", lineno) from None
        if not (RATING_MIN <= value <= RATING_MAX):
            raise RatingDataError(f"rating {value} outside {RATING_MIN}..{RATING_MAX}", lineno)
        if (user, item) in ratings:
            raise RatingDataError(f"duplicate rating for user {user}, item {item}", lineno)
        ratings[(user, item)] = value
    if not ratings:
        raise RatingDataError("empty rating stream")
    return RatingMatrix(ratings)


def load_ratings(path: str | Path) -> RatingMatrix:
    with open(path, "rb") as fh:
        return parse_ratings(fh)


def serialize_ratings(matrix: RatingMatrix, stream: IO[str]) -> int:
    """Write the matrix back out in MovieLens format (timestamp column = 0).

    Returns the number of lines written; parse(serialize(m)) == m.
    """
    count = 0
    for user, item, value in matrix.entries():
        stream.write(f"{user}\t{item}\t{value}\t0\n")
        count += 1
    return count


def holdout_points(matrix: RatingMatrix, count: int, seed) -> list[TestPoint]:
    """Sample `count` existing ratings uniformly with replacement across draws.

    Reproducible from `seed`; one point per experiment trial.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    triples = list(matrix.entries())
    if not triples:
        raise RatingDataError("cannot sample holdout points from an empty matrix")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(triples), size=count)
    return [TestPoint(*triples[k]) for k in picks]


def inject_profiles(
    matrix: RatingMatrix, profiles: Iterable[tuple[int, Mapping[int, int]]]
) -> RatingMatrix:
    """Extend the matrix with fake user profiles; the input matrix is untouched.

    Profile user ids must be disjoint from existing ids (and from each other);
    ratings obey the usual 1..5 range.
    """
    ratings = {(u, i): r for u, i, r in matrix.entries()}
    seen_new: set[int] = set()
    for user, profile in profiles:
        if matrix.has_user(user) or user in seen_new:
            raise RatingDataError(f"profile user id {user} collides with an existing user")
        if not profile:
            raise RatingDataError(f"profile for user {user} contains no ratings")
        seen_new.add(user)
        for item, value in profile.items():
            if not (RATING_MIN <= int(value) <= RATING_MAX):
                raise RatingDataError(
                    f"profile rating {value} for ({user}, {item}) outside {RATING_MIN}..{RATING_MAX}"
                )
            ratings[(user, item)] = int(value)
    return RatingMatrix(ratings)
