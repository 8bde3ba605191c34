"""Proposal-to-instance matching over precomputed feature vectors.

Per-view cosine similarities are aggregated to per-instance scores by max,
thresholded, and resolved to pairs with either a greedy pass ("rank-select")
or proposal-proposing deferred acceptance ("stable"). All tie-breaking uses
ascending (proposal_id, instance_id) order so both matchers are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox


@dataclass(frozen=True)
class FeatureVector:
    """A real-valued embedding tagged with the id of what it describes."""

    source_id: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError(f"feature vector must be 1-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"non-finite entries in feature vector {self.source_id!r}")
        if float(np.linalg.norm(arr)) == 0.0:
            raise ValueError(f"zero-norm feature vector {self.source_id!r}")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass
class SimilarityMatrix:
    """Aggregated proposal-by-instance similarities with their id labels."""

    scores: np.ndarray  # (n_proposals, n_instances)
    proposal_ids: list[str]
    instance_ids: list[str]

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.proposal_ids), len(self.instance_ids)):
            raise ValueError(
                f"score shape {self.scores.shape} does not match "
                f"{len(self.proposal_ids)} proposals x {len(self.instance_ids)} instances"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


@dataclass
class MatchResult:
    pairs: list[tuple[str, str, float]]  # (proposal_id, instance_id, similarity)
    unmatched_proposals: list[str] = field(default_factory=list)
    unmatched_instances: list[str] = field(default_factory=list)


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    """cos(a, b) = dot / (|a| |b|); symmetric and invariant to positive scaling."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    denom = float(np.linalg.norm(av) * np.linalg.norm(bv))
    if denom == 0.0:
        raise ValueError("zero-norm feature vector")
    return float(np.dot(av, bv) / denom)


def aggregate_similarity(proposal: FeatureVector, profile_views: list[FeatureVector]) -> float:
    """Similarity of a proposal to an instance: max over that instance's views."""
    if not profile_views:
        raise ValueError("no profile views to aggregate over")
    return max(cosine_similarity(proposal, v) for v in profile_views)


def build_similarity_matrix(
    proposals: list[FeatureVector],
    profiles: dict[str, list[FeatureVector]],
) -> SimilarityMatrix:
    """Raw proposal-by-instance matrix; instance columns in sorted id order."""
    if not proposals:
        raise ValueError("no proposal features")
    if not profiles:
        raise ValueError("no profile features")
    instance_ids = sorted(profiles)
    scores = np.empty((len(proposals), len(instance_ids)), dtype=np.float64)
    for j, inst in enumerate(instance_ids):
        views = np.stack([v.values for v in profiles[inst]]).astype(np.float64)
        views = views / np.linalg.norm(views, axis=1, keepdims=True)
        for i, prop in enumerate(proposals):
            if prop.dim != views.shape[1]:
                raise ValueError(
                    f"dimension mismatch: proposal {prop.source_id!r} has dim "
                    f"{prop.dim}, profiles have dim {views.shape[1]}"
                )
            p = prop.values.astype(np.float64)
            p = p / np.linalg.norm(p)
            scores[i, j] = float((views @ p).max())
    return SimilarityMatrix(scores, [p.source_id for p in proposals], instance_ids)


def threshold_filter(matrix: SimilarityMatrix, tau: float) -> SimilarityMatrix:
    """Drop proposal rows and instance columns whose max similarity is below tau.

    Row and column maxima are taken on the incoming matrix, so raising tau can
    only remove rows/columns, never add them. May return an empty matrix.
    """
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"threshold must lie in [-1, 1], got {tau}")
    if matrix.scores.size == 0:
        return matrix
    keep_rows = matrix.scores.max(axis=1) >= tau
    keep_cols = matrix.scores.max(axis=0) >= tau
    return SimilarityMatrix(
        matrix.scores[np.ix_(keep_rows, keep_cols)],
        [pid for pid, k in zip(matrix.proposal_ids, keep_rows) if k],
        [iid for iid, k in zip(matrix.instance_ids, keep_cols) if k],
    )


def _ordered_entries(matrix: SimilarityMatrix) -> list[tuple[float, str, str, int, int]]:
    """All entries sorted by similarity descending, ids ascending on ties."""
    entries = [
        (float(matrix.scores[i, j]), pid, iid, i, j)
        for i, pid in enumerate(matrix.proposal_ids)
        for j, iid in enumerate(matrix.instance_ids)
    ]
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    return entries


def rank_select(matrix: SimilarityMatrix, remove_instances: bool = False) -> MatchResult:
    """Greedy matcher: repeatedly take the best remaining pair, drop its proposal.

    By default only the proposal leaves the pool, so one instance can collect
    several proposals. With ``remove_instances`` the matched instance leaves
    too, making the output one-to-one.
    """
    taken_rows: set[int] = set()
    taken_cols: set[int] = set()
    pairs: list[tuple[str, str, float]] = []
    for score, pid, iid, i, j in _ordered_entries(matrix):
        if i in taken_rows or (remove_instances and j in taken_cols):
            continue
        pairs.append((pid, iid, score))
        taken_rows.add(i)
        taken_cols.add(j)
    return MatchResult(
        pairs=pairs,
        unmatched_proposals=[p for i, p in enumerate(matrix.proposal_ids) if i not in taken_rows],
        unmatched_instances=[c for j, c in enumerate(matrix.instance_ids) if j not in taken_cols],
    )


def stable_matching(matrix: SimilarityMatrix) -> MatchResult:
    """Proposal-proposing deferred acceptance under similarity preferences.

    Preference lists on both sides sort by similarity descending with id-order
    tie-breaks. The result is one-to-one and contains no pair that both sides
    prefer to their assigned partners; leftovers on the longer side are
    reported unmatched.
    """
    n_p, n_i = matrix.shape
    if n_p == 0 or n_i == 0:
        return MatchResult(
            pairs=[],
            unmatched_proposals=list(matrix.proposal_ids),
            unmatched_instances=list(matrix.instance_ids),
        )

    prop_prefs = [
        sorted(range(n_i), key=lambda j: (-matrix.scores[i, j], matrix.instance_ids[j]))
        for i in range(n_p)
    ]
    # rank[j][i]: position of proposal i in instance j's preference list
    inst_rank = np.empty((n_i, n_p), dtype=np.int64)
    for j in range(n_i):
        order = sorted(range(n_p), key=lambda i: (-matrix.scores[i, j], matrix.proposal_ids[i]))
        for rank, i in enumerate(order):
            inst_rank[j, i] = rank

    next_choice = [0] * n_p
    held: dict[int, int] = {}  # instance index -> proposal index
    free = list(range(n_p - 1, -1, -1))
    while free:
        i = free.pop()
        if next_choice[i] >= n_i:
            continue
        j = prop_prefs[i][next_choice[i]]
        next_choice[i] += 1
        incumbent = held.get(j)
        if incumbent is None:
            held[j] = i
        elif inst_rank[j, i] < inst_rank[j, incumbent]:
            held[j] = i
            free.append(incumbent)
        else:
            free.append(i)

    pairs = sorted(
        (
            (matrix.proposal_ids[i], matrix.instance_ids[j], float(matrix.scores[i, j]))
            for j, i in held.items()
        ),
        key=lambda p: (-p[2], p[0], p[1]),
    )
    matched_rows = set(held.values())
    matched_cols = set(held.keys())
    return MatchResult(
        pairs=pairs,
        unmatched_proposals=[p for i, p in enumerate(matrix.proposal_ids) if i not in matched_rows],
        unmatched_instances=[c for j, c in enumerate(matrix.instance_ids) if j not in matched_cols],
    )


def to_detections(
    result: MatchResult,
    proposal_boxes: dict[str, BoundingBox],
) -> list[tuple[str, BoundingBox, float]]:
    """Turn matched pairs into (instance_id, box, score) detections.

    The similarity becomes the detection score, which drives AP/AR ranking
    downstream; the output depends only on the pair set, not on which matcher
    produced it.
    """
    detections = []
    for pid, iid, score in result.pairs:
        if pid not in proposal_boxes:
            raise KeyError(f"no box for matched proposal {pid!r}")
        detections.append((iid, proposal_boxes[pid], score))
    return detections
