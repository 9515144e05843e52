"""The aspect model: a latent-class decomposition of a document/term
co-occurrence table.

A model with K factors holds a prior over factors together with
factor-conditional distributions over documents and over words.  The joint
cell probability is P(d,w) = sum_z P(z) P(d|z) P(w|z).  Everything asymmetric
(P(d), P(z|d), P(w|d)) is derived from these three blocks by Bayes' rule so
there is a single source of truth.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import serialize
from .corpus import CountMatrix

PROB_FLOOR = 1e-12
LOG_FLOOR = float(np.log(PROB_FLOOR))

_NORM_TOL = 1e-10
_DEFAULT_MAX_CELLS = 10_000_000
_CHUNK_CELLS = 1 << 22


class DegeneracyError(RuntimeError):
    """A probability computation has no valid normalization."""


@dataclass(frozen=True)
class AspectModel:
    """Symmetric parameter set of a K-factor aspect model.

    prior        : (K,)   P(z)
    doc_given_z  : (N, K) column k is the distribution P(.|z_k) over documents
    word_given_z : (M, K) column k is the distribution P(.|z_k) over words
    """

    prior: np.ndarray
    doc_given_z: np.ndarray
    word_given_z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prior", np.ascontiguousarray(self.prior, dtype=np.float64))
        object.__setattr__(self, "doc_given_z", np.ascontiguousarray(self.doc_given_z, dtype=np.float64))
        object.__setattr__(self, "word_given_z", np.ascontiguousarray(self.word_given_z, dtype=np.float64))
        if self.prior.ndim != 1 or self.doc_given_z.ndim != 2 or self.word_given_z.ndim != 2:
            raise ValueError("prior must be a vector and the conditionals matrices")
        k = self.prior.size
        if k < 1 or self.doc_given_z.shape[1] != k or self.word_given_z.shape[1] != k:
            raise ValueError("parameter blocks disagree on the number of factors")
        for name, block in (("prior", self.prior), ("doc_given_z", self.doc_given_z),
                            ("word_given_z", self.word_given_z)):
            if block.min(initial=0.0) < 0.0:
                raise ValueError(f"{name} contains negative entries")
            sums = block.sum(axis=0)
            if np.max(np.abs(sums - 1.0)) > _NORM_TOL:
                raise ValueError(f"{name} columns must sum to 1 within {_NORM_TOL}")

    @property
    def k(self) -> int:
        return self.prior.size

    @property
    def n_docs(self) -> int:
        return self.doc_given_z.shape[0]

    @property
    def n_terms(self) -> int:
        return self.word_given_z.shape[0]

    def save(self, path) -> None:
        serialize.save_arrays(path, "aspect-model", {
            "prior": self.prior,
            "doc_given_z": self.doc_given_z,
            "word_given_z": self.word_given_z,
        })

    @classmethod
    def load(cls, path) -> "AspectModel":
        arrays, _ = serialize.load_arrays(path, "aspect-model")
        return cls(arrays["prior"], arrays["doc_given_z"], arrays["word_given_z"])


def init_model(k: int, n_docs: int, n_terms: int, seed: int = 0) -> AspectModel:
    """Random starting point: uniform distributions plus small seeded noise.

    All entries are strictly positive, so every factor can receive mass.
    """
    if k < 1 or n_docs < 1 or n_terms < 1:
        raise ValueError("k, n_docs and n_terms must all be >= 1")
    # noise at 0.3 of the uniform level: enough to break factor symmetry
    # within a few sweeps, small enough to stay near the simplex center
    rng = np.random.default_rng(seed)
    prior = 1.0 + 0.3 * rng.random(k)
    prior /= prior.sum()
    doc = 1.0 + 0.3 * rng.random((n_docs, k))
    doc /= doc.sum(axis=0)
    word = 1.0 + 0.3 * rng.random((n_terms, k))
    word /= word.sum(axis=0)
    return AspectModel(prior, doc, word)


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _scale_log(lp: np.ndarray, beta: float) -> np.ndarray:
    """beta * lp with the convention that zero probabilities stay zero
    (log -inf) for every beta >= 0."""
    if beta == 1.0:
        return lp
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(lp), -np.inf, beta * lp)


def _tempered_softmax(lp: np.ndarray, beta: float) -> np.ndarray:
    """Row-normalize exp(beta * lp) stably; lp rows are log joint terms."""
    scaled = _scale_log(lp, beta)
    peak = scaled.max(axis=1)
    if np.isneginf(peak).any():
        raise DegeneracyError("observation has zero probability under every factor")
    p = np.exp(scaled - peak[:, None])
    p /= p.sum(axis=1, keepdims=True)
    return p


def _chunk_step(k: int) -> int:
    return max(1, _CHUNK_CELLS // max(1, k))


def _check_dims(model: AspectModel, counts: CountMatrix) -> None:
    if model.n_docs != counts.n_docs or model.n_terms != counts.n_terms:
        raise ValueError(
            f"model is {model.n_docs}x{model.n_terms} but counts are "
            f"{counts.n_docs}x{counts.n_terms}"
        )


def _scan_log_joint(model: AspectModel, counts: CountMatrix, betas=(1.0,)) -> list[np.ndarray]:
    """Per nonzero cell, logsumexp_z of beta * log[P(z)P(d|z)P(w|z)].

    Returns one array (length nnz) per requested beta, computed in one
    chunked pass.  No probability floor is applied here.
    """
    _check_dims(model, counts)
    outs = [np.empty(counts.nnz) for _ in betas]
    lprior = _safe_log(model.prior)
    ldoc = _safe_log(model.doc_given_z)
    lword = _safe_log(model.word_given_z)
    step = _chunk_step(model.k)
    for lo in range(0, counts.nnz, step):
        sl = slice(lo, min(lo + step, counts.nnz))
        lp = lprior[None, :] + ldoc[counts.doc_ids[sl]] + lword[counts.term_ids[sl]]
        for out, beta in zip(outs, betas):
            out[sl] = logsumexp(_scale_log(lp, beta), axis=1)
    return outs


def posterior(model: AspectModel, d: int, w: int, beta: float = 1.0) -> np.ndarray:
    """Tempered factor posterior for one cell:
    P(z; d, w) proportional to [P(z)P(d|z)P(w|z)]^beta.

    beta = 1 is the exact posterior; beta = 0 is uniform over the factors
    that give the cell nonzero probability.  Computed in the log domain with
    common-scale subtraction.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    lp = _safe_log(model.prior) + _safe_log(model.doc_given_z[d]) + _safe_log(model.word_given_z[w])
    return _tempered_softmax(lp[None, :], beta)[0]


def cell_posteriors(model: AspectModel, counts: CountMatrix, beta: float = 1.0) -> np.ndarray:
    """Tempered posteriors for every nonzero cell, shape (nnz, K), aligned
    with the counts' entry order."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    _check_dims(model, counts)
    out = np.empty((counts.nnz, model.k))
    lprior = _safe_log(model.prior)
    ldoc = _safe_log(model.doc_given_z)
    lword = _safe_log(model.word_given_z)
    step = _chunk_step(model.k)
    for lo in range(0, counts.nnz, step):
        sl = slice(lo, min(lo + step, counts.nnz))
        lp = lprior[None, :] + ldoc[counts.doc_ids[sl]] + lword[counts.term_ids[sl]]
        out[sl] = _tempered_softmax(lp, beta)
    return out


def doc_marginals(model: AspectModel) -> np.ndarray:
    """P(d) = sum_z P(z) P(d|z) for every document."""
    return model.doc_given_z @ model.prior


def mixing_weights(model: AspectModel, d: int) -> np.ndarray:
    """P(z|d) by Bayes' rule from the symmetric parameters."""
    joint = model.prior * model.doc_given_z[d]
    total = joint.sum()
    if total <= 0.0:
        raise DegeneracyError(f"document {d} has zero probability under the model")
    return joint / total


def mixing_weight_matrix(model: AspectModel) -> np.ndarray:
    """P(z|d) for all documents, shape (N, K).

    Rows of documents with zero marginal probability are NaN; callers that
    score documents should treat those as unmatchable.
    """
    joint = model.doc_given_z * model.prior[None, :]
    totals = joint.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = joint / totals[:, None]
    out[totals <= 0.0] = np.nan
    return out


def word_given_doc(model: AspectModel, d: int) -> np.ndarray:
    """P(w|d) = sum_z P(w|z) P(z|d); a convex combination of the factors'
    word distributions."""
    return model.word_given_z @ mixing_weights(model, d)


def joint_prob(model: AspectModel, d: int, w: int) -> float:
    """P(d, w) = sum_z P(z) P(d|z) P(w|z) for one cell."""
    return float(np.dot(model.prior * model.doc_given_z[d], model.word_given_z[w]))


def joint_matrix(model: AspectModel, max_cells: int = _DEFAULT_MAX_CELLS) -> np.ndarray:
    """Dense N x M joint probability table.  Entries are nonnegative and the
    grand sum is 1.  Guarded by `max_cells`; use joint_prob beyond it."""
    cells = model.n_docs * model.n_terms
    if cells > max_cells:
        raise ValueError(
            f"joint_matrix would materialize {cells} cells (> {max_cells}); use joint_prob"
        )
    return (model.doc_given_z * model.prior[None, :]) @ model.word_given_z.T


def log_likelihood(model: AspectModel, counts: CountMatrix) -> float:
    """sum over nonzero cells of n(d,w) * log P(d,w), in nats.

    Cell probabilities below PROB_FLOOR are clamped to it before the log, so
    events the model cannot produce yield a large finite penalty.
    """
    [log_joint] = _scan_log_joint(model, counts)
    return float(np.dot(counts.counts, np.maximum(log_joint, LOG_FLOOR)))


def perplexity(model: AspectModel, counts: CountMatrix, conditional: bool = False) -> float:
    """exp of the negative average log-probability per token.

    With `conditional` set the per-token probability is P(w|d), the
    document-specific word distribution; otherwise it is the joint P(d,w).
    Probabilities are floored as in log_likelihood.
    """
    total = counts.total
    if total == 0:
        raise ValueError("perplexity of an empty count matrix is undefined")
    if not conditional:
        return float(np.exp(-log_likelihood(model, counts) / total))
    [log_joint] = _scan_log_joint(model, counts)
    log_pd = logsumexp(_safe_log(model.doc_given_z * model.prior[None, :]), axis=1)
    per_doc = log_pd[counts.doc_ids]
    with np.errstate(invalid="ignore"):
        log_q = np.where(np.isneginf(per_doc), -np.inf, log_joint - per_doc)
    mean_log = np.dot(counts.counts, np.maximum(log_q, LOG_FLOOR)) / total
    return float(np.exp(-mean_log))


def unigram_baseline(counts: CountMatrix) -> AspectModel:
    """Single-factor model of marginal independence: P(d) from row sums,
    P(w) from column sums."""
    total = counts.total
    if total == 0:
        raise ValueError("cannot build a unigram model from empty counts")
    doc = (counts.row_sums() / total)[:, None]
    word = (counts.col_sums() / total)[:, None]
    return AspectModel(np.array([1.0]), doc, word)


def free_energy(model: AspectModel, counts: CountMatrix, posteriors: np.ndarray,
                beta: float) -> float:
    """Variational objective at inverse temperature beta:

        F = -beta * sum n(d,w) sum_z q(z) log[P(z)P(d|z)P(w|z)]
            + sum n(d,w) sum_z q(z) log q(z)

    where q are the supplied per-cell distributions over factors (shape
    (nnz, K), aligned with the counts' entry order) and 0 log 0 = 0.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    _check_dims(model, counts)
    q = np.asarray(posteriors, dtype=np.float64)
    if q.shape != (counts.nnz, model.k):
        raise ValueError(f"posteriors must have shape ({counts.nnz}, {model.k}), got {q.shape}")
    lprior = _safe_log(model.prior)
    ldoc = _safe_log(model.doc_given_z)
    lword = _safe_log(model.word_given_z)
    step = _chunk_step(model.k)
    result = 0.0
    for lo in range(0, counts.nnz, step):
        sl = slice(lo, min(lo + step, counts.nnz))
        lp = lprior[None, :] + ldoc[counts.doc_ids[sl]] + lword[counts.term_ids[sl]]
        qc = q[sl]
        positive = qc > 0.0
        if np.any(positive & np.isneginf(lp)):
            raise DegeneracyError("posterior mass on a zero-probability factor; log undefined")
        with np.errstate(invalid="ignore"):
            expected = np.where(positive, qc * lp, 0.0).sum(axis=1)
            entropy = np.where(positive, qc * np.log(np.where(positive, qc, 1.0)), 0.0).sum(axis=1)
        result += float(np.dot(counts.counts[sl], -beta * expected + entropy))
    return result


def top_words(model: AspectModel, z: int, count: int) -> list[tuple[int, float]]:
    """The `count` most probable term ids under factor z, descending, with
    ties broken by ascending term id."""
    if not 0 <= z < model.k:
        raise ValueError(f"factor index {z} out of range for k={model.k}")
    if count < 1:
        raise ValueError("count must be >= 1")
    probs = model.word_given_z[:, z]
    order = np.lexsort((np.arange(probs.size), -probs))
    return [(int(t), float(probs[t])) for t in order[:count]]
