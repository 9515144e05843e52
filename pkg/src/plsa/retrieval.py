"""Query/document scoring and the interpolated precision-recall harness.

Scorers: raw term-frequency cosine, cosine between latent mixing-weight
vectors, their convex blend, and a uniform average of latent scores across
several models.  Evaluation reports interpolated precision at the nine
recall levels 10% through 90%, macro-averaged over queries.
"""

import warnings
from dataclasses import dataclass

import numpy as np

RECALL_LEVELS = tuple(level / 10.0 for level in range(1, 10))


def cosine_score(doc_counts, query_counts) -> float:
    """Cosine between two raw term-count vectors; in [0, 1] for counts."""
    d = np.asarray(doc_counts, dtype=np.float64).ravel()
    q = np.asarray(query_counts, dtype=np.float64).ravel()
    nd = np.linalg.norm(d)
    nq = np.linalg.norm(q)
    if nd == 0.0 or nq == 0.0:
        raise ValueError("cosine of an all-zero vector is undefined")
    return float(np.dot(d, q) / (nd * nq))


def latent_score(rep_d, rep_q) -> float:
    """Cosine between two mixing-weight vectors; probability vectors are
    never zero, so this is total."""
    d = np.asarray(rep_d, dtype=np.float64).ravel()
    q = np.asarray(rep_q, dtype=np.float64).ravel()
    if d.size != q.size:
        raise ValueError("representations must have the same number of factors")
    return float(np.dot(d, q) / (np.linalg.norm(d) * np.linalg.norm(q)))


def combined_score(lam: float, cos: float, latent: float) -> float:
    """Convex blend lam * cos + (1 - lam) * latent."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    return lam * cos + (1.0 - lam) * latent


def plsi_star_score(doc_reps, query_reps, lam: float, cos: float) -> float:
    """Uniform average of per-model latent scores, blended with the cosine
    score.  `doc_reps` and `query_reps` are aligned lists, one entry per
    trained model."""
    if len(doc_reps) != len(query_reps):
        raise ValueError("doc_reps and query_reps must be aligned")
    if not doc_reps:
        raise ValueError("at least one model is required")
    avg = sum(latent_score(d, q) for d, q in zip(doc_reps, query_reps)) / len(doc_reps)
    return combined_score(lam, cos, avg)


@dataclass(frozen=True)
class RankedList:
    """All documents ranked for one query: descending score, ties broken by
    ascending doc id."""

    query_id: object
    doc_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "doc_ids", np.asarray(self.doc_ids, dtype=np.int64))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        if self.doc_ids.shape != self.scores.shape or self.doc_ids.ndim != 1:
            raise ValueError("doc_ids and scores must be parallel vectors")
        if np.unique(self.doc_ids).size != self.doc_ids.size:
            raise ValueError("ranked list contains duplicate documents")
        if self.doc_ids.size > 1:
            diff = np.diff(self.scores)
            if (diff > 0).any():
                raise ValueError("scores must be non-increasing")
            tied = diff == 0
            if np.any(tied & (np.diff(self.doc_ids) <= 0)):
                raise ValueError("tied scores must be ordered by ascending doc id")


@dataclass(frozen=True)
class RetrievalRun:
    """Ranked lists for a set of queries plus the judgments they are scored
    against.  Every ranked query must have a judgments entry."""

    rankings: list[RankedList]
    judgments: dict

    def __post_init__(self):
        for ranking in self.rankings:
            if ranking.query_id not in self.judgments:
                raise ValueError(f"query {ranking.query_id!r} has no judgments entry")


def rank_all(scorer, n_docs: int, query_ids) -> list[RankedList]:
    """Rank every document for every query with scorer(query_id, doc_id).

    A scorer error demotes that document to the bottom (score -inf); one
    warning per affected query is emitted.
    """
    rankings = []
    for qid in query_ids:
        scores = np.empty(n_docs)
        failures = 0
        for d in range(n_docs):
            try:
                scores[d] = scorer(qid, d)
            except Exception:
                scores[d] = -np.inf
                failures += 1
        if failures:
            warnings.warn(
                f"query {qid!r}: {failures} document(s) could not be scored and rank last",
                RuntimeWarning,
            )
        order = np.lexsort((np.arange(n_docs), -scores))
        rankings.append(RankedList(qid, order, scores[order]))
    return rankings


@dataclass(frozen=True)
class PrSummary:
    """Interpolated precision at the nine recall levels.

    per_query maps query id to its 9-vector; precision_at_level is the mean
    over queries at each level; average_precision is the mean over levels,
    then over queries.
    """

    recall_levels: tuple
    per_query: dict
    precision_at_level: np.ndarray
    average_precision: float
    n_queries: int


def precision_recall(run: RetrievalRun) -> PrSummary:
    """Interpolated precision at recall 10%..90% for each query.

    The interpolated precision at a level is the maximum precision attained
    at any rank whose recall reaches that level.  Queries without relevant
    documents are excluded with a warning.
    """
    levels = np.array(RECALL_LEVELS)
    per_query: dict = {}
    for ranking in run.rankings:
        relevant = run.judgments[ranking.query_id]
        if not relevant:
            warnings.warn(
                f"query {ranking.query_id!r} has no relevant documents; excluded",
                RuntimeWarning,
            )
            continue
        hits = np.fromiter((d in relevant for d in ranking.doc_ids), dtype=bool,
                           count=ranking.doc_ids.size)
        found = int(hits.sum())
        if found != len(relevant):
            raise ValueError(
                f"query {ranking.query_id!r}: {len(relevant) - found} relevant document(s) "
                "missing from the ranking"
            )
        cum = np.cumsum(hits)
        ranks = np.arange(1, hits.size + 1)
        precision = cum / ranks
        recall = cum / len(relevant)
        # max precision at this rank or any later one
        best_ahead = np.maximum.accumulate(precision[::-1])[::-1]
        first_reaching = np.searchsorted(recall, levels, side="left")
        per_query[ranking.query_id] = best_ahead[first_reaching]
    if not per_query:
        raise ValueError("no query has relevant documents; nothing to evaluate")
    table = np.vstack(list(per_query.values()))
    return PrSummary(
        recall_levels=RECALL_LEVELS,
        per_query=per_query,
        precision_at_level=table.mean(axis=0),
        average_precision=float(table.mean(axis=1).mean()),
        n_queries=len(per_query),
    )
