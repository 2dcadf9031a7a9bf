"""
Prototype clustering of return series.

- ``corr_distance`` / ``distance_matrix``: d(r1, r2) = 1 - |corr(r1, r2)| over
  jointly observed weeks.
- ``pca_dim``: number of principal components reaching a variance share.
- ``minimax_cluster``: agglomerative clustering with minimax linkage; every
  merge records its height r(G u H) and the prototype attaining it.
- ``cut``: flat clusters (with prototypes) at a chosen cluster count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, FrozenSet, List, Tuple, Union

import numpy as np
import pandas as pd
from numba import njit

from ..logging import get_logger
from .errors import DegenerateSeriesError, DomainError, InsufficientOverlapError

if TYPE_CHECKING:
    from .panel import ReturnsPanel

log = get_logger(__name__)

MIN_OVERLAP = 3


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric correlation distances in [0, 1] with a zero diagonal."""

    d: np.ndarray
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        d = self.d
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DomainError(f"distance matrix must be square, got shape {d.shape}")
        if not np.array_equal(d, d.T):
            raise DomainError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0.0):
            raise DomainError("distance matrix must have a zero diagonal")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise DomainError("distances must lie in [0, 1]")
        if self.names and len(self.names) != d.shape[0]:
            raise DomainError(f"{len(self.names)} names for {d.shape[0]} points")

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    prototype: int


@dataclass(frozen=True)
class Dendrogram:
    """
    Merge tree over ``n_leaves`` points.

    Leaves are nodes ``0..n-1``; merge ``i`` creates node ``n + i``.
    ``prototype`` is always an original point index.
    """

    n_leaves: int
    merges: Tuple[Merge, ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.merges) != max(self.n_leaves - 1, 0):
            raise DomainError(
                f"dendrogram over {self.n_leaves} leaves needs {self.n_leaves - 1} merges, "
                f"got {len(self.merges)}"
            )

    @property
    def leaves(self) -> List[int]:
        return list(range(self.n_leaves))

    @property
    def heights(self) -> List[float]:
        return [m.height for m in self.merges]

    def members(self, node: int) -> FrozenSet[int]:
        """Original points under ``node``."""
        if node < self.n_leaves:
            return frozenset([node])
        stack, found = [node], set()
        while stack:
            current = stack.pop()
            if current < self.n_leaves:
                found.add(current)
            else:
                merge = self.merges[current - self.n_leaves]
                stack.extend([merge.left, merge.right])
        return frozenset(found)

    def prototype_of(self, node: int) -> int:
        if node < self.n_leaves:
            return node
        return self.merges[node - self.n_leaves].prototype

    def to_dict(self) -> dict:
        return {
            "n_leaves": self.n_leaves,
            "names": list(self.names),
            "merges": [
                {"left": m.left, "right": m.right, "height": m.height, "prototype": m.prototype}
                for m in self.merges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dendrogram":
        return cls(
            n_leaves=int(data["n_leaves"]),
            merges=tuple(
                Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["prototype"]))
                for m in data["merges"]
            ),
            names=tuple(data.get("names", ())),
        )


def corr_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """1 - |Pearson correlation| over weeks where both series are observed."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    joint = np.isfinite(r1) & np.isfinite(r2)
    if int(joint.sum()) < MIN_OVERLAP:
        raise InsufficientOverlapError(
            f"need at least {MIN_OVERLAP} jointly observed entries, got {int(joint.sum())}"
        )
    a = r1[joint] - r1[joint].mean()
    b = r2[joint] - r2[joint].mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateSeriesError("series has zero variance on the joint support")
    corr = float(a @ b) / np.sqrt(saa * sbb)
    return float(np.clip(1.0 - abs(corr), 0.0, 1.0))


def distance_matrix(data: Union[pd.DataFrame, "ReturnsPanel"]) -> DistanceMatrix:
    """Pairwise-complete correlation distances between all columns."""
    frame = data if isinstance(data, pd.DataFrame) else data.frame
    corr = frame.corr(method="pearson", min_periods=MIN_OVERLAP).to_numpy()
    np.fill_diagonal(corr, 1.0)
    missing = np.isnan(corr).sum(axis=0)
    if missing.any():
        column = frame.columns[int(np.argmax(missing))]
        raise DegenerateSeriesError(f"column {column!r} is degenerate or lacks overlap with another column")
    d = np.clip(1.0 - np.abs(corr), 0.0, 1.0)
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d=d, names=tuple(str(c) for c in frame.columns))


def pca_dim(X: Union[np.ndarray, pd.DataFrame], threshold: float = 0.80) -> int:
    """
    Smallest k whose top-k covariance eigenvalues explain ``threshold`` of the variance.

    A DataFrame with missing values uses the pairwise-complete covariance.
    """
    if not (0.0 < threshold <= 1.0):
        raise DomainError(f"threshold must be in (0, 1], got {threshold}")
    if isinstance(X, pd.DataFrame):
        if X.shape[1] < 2:
            raise DomainError("pca_dim needs at least 2 columns")
        cov = X.cov(min_periods=MIN_OVERLAP).to_numpy()
        cov = np.nan_to_num(cov, nan=0.0)
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] < 2:
            raise DomainError("pca_dim needs a matrix with at least 2 columns")
        centered = X - X.mean(axis=0)
        cov = centered.T @ centered / max(X.shape[0] - 1, 1)

    eigenvalues = np.clip(np.linalg.eigvalsh(cov), 0.0, None)[::-1]
    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise DegenerateSeriesError("all columns have zero variance")
    share = np.cumsum(eigenvalues) / total
    k = int(np.searchsorted(share, threshold - 1e-12, side="left")) + 1
    return min(max(k, 1), cov.shape[0])


@njit(cache=True, nogil=True)
def _minimax_agglomerate(d):
    n = d.shape[0]
    steps = n - 1
    left = np.empty(steps, dtype=np.int64)
    right = np.empty(steps, dtype=np.int64)
    height = np.empty(steps, dtype=np.float64)
    proto = np.empty(steps, dtype=np.int64)

    # dmax[x, s]: distance from point x to the farthest member of the cluster in slot s.
    # A cluster lives in the slot of its smallest member.
    dmax = d.copy()
    label = np.arange(n)
    node = np.arange(n)
    active = np.ones(n, dtype=np.bool_)
    link = np.full((n, n), np.inf)
    link_proto = np.zeros((n, n), dtype=np.int64)
    for s in range(n):
        for t in range(s + 1, n):
            link[s, t] = d[s, t]
            link_proto[s, t] = s

    for step in range(steps):
        best = np.inf
        bs = -1
        bt = -1
        for s in range(n):
            if not active[s]:
                continue
            for t in range(s + 1, n):
                if active[t] and link[s, t] < best:
                    best = link[s, t]
                    bs = s
                    bt = t

        left[step] = node[bs]
        right[step] = node[bt]
        height[step] = best
        proto[step] = link_proto[bs, bt]

        node[bs] = n + step
        active[bt] = False
        for x in range(n):
            if label[x] == bt:
                label[x] = bs
            if dmax[x, bt] > dmax[x, bs]:
                dmax[x, bs] = dmax[x, bt]

        for u in range(n):
            if not active[u] or u == bs:
                continue
            radius = np.inf
            arg = -1
            for x in range(n):
                if label[x] != bs and label[x] != u:
                    continue
                r = dmax[x, bs]
                if dmax[x, u] > r:
                    r = dmax[x, u]
                if r < radius:
                    radius = r
                    arg = x
            a = bs if bs < u else u
            b = u if bs < u else bs
            link[a, b] = radius
            link_proto[a, b] = arg

    return left, right, height, proto


def minimax_cluster(d: DistanceMatrix) -> Dendrogram:
    """Minimax-linkage agglomeration; ties go to the lowest index pair and lowest prototype."""
    if d.n < 2:
        raise DomainError(f"minimax_cluster needs at least 2 points, got {d.n}")
    left, right, height, proto = _minimax_agglomerate(np.ascontiguousarray(d.d, dtype=np.float64))
    merges = tuple(
        Merge(int(l), int(r), float(h), int(p)) for l, r, h, p in zip(left, right, height, proto)
    )
    return Dendrogram(n_leaves=d.n, merges=merges, names=d.names)


def cut(dendrogram: Dendrogram, k: int) -> List[Tuple[FrozenSet[int], int]]:
    """
    Undo the last ``k - 1`` merges.

    Returns ``(members, prototype)`` pairs ordered by smallest member.
    """
    n = dendrogram.n_leaves
    if not (1 <= k <= n):
        raise DomainError(f"k must be in [1, {n}], got {k}")
    roots = set(range(n))
    for i, merge in enumerate(dendrogram.merges[: n - k]):
        roots.discard(merge.left)
        roots.discard(merge.right)
        roots.add(n + i)
    clusters = [(dendrogram.members(node), dendrogram.prototype_of(node)) for node in roots]
    return sorted(clusters, key=lambda c: min(c[0]))
