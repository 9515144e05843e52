"""Shared test utilities: brute-force oracles kept deliberately independent
of the library's vectorized paths, plus random/synthetic data generators."""

import math

import numpy as np

from plsa import AspectModel, CountMatrix

PROB_FLOOR = 1e-12


# ----------------------------------------------------------- brute oracles
# Triple loops over (d, w, z) in plain Python floats.  The tempering
# convention matches the library: a zero joint term keeps zero mass for
# every beta >= 0.


def brute_joint(model, d, w):
    return sum(
        float(model.prior[z]) * float(model.doc_given_z[d, z]) * float(model.word_given_z[w, z])
        for z in range(model.k)
    )


def brute_posterior(model, d, w, beta):
    terms = []
    for z in range(model.k):
        p = float(model.prior[z]) * float(model.doc_given_z[d, z]) * float(model.word_given_z[w, z])
        terms.append(p ** beta if p > 0.0 else 0.0)
    total = sum(terms)
    if total == 0.0:
        raise ZeroDivisionError("no factor can generate this observation")
    return np.array([t / total for t in terms])


def brute_log_likelihood(model, counts, floor=PROB_FLOOR):
    result = 0.0
    for d, w, c in zip(counts.doc_ids, counts.term_ids, counts.counts):
        result += int(c) * math.log(max(brute_joint(model, int(d), int(w)), floor))
    return result


def brute_free_energy(model, counts, posteriors, beta):
    result = 0.0
    for i, (d, w, c) in enumerate(zip(counts.doc_ids, counts.term_ids, counts.counts)):
        for z in range(model.k):
            q = float(posteriors[i, z])
            if q <= 0.0:
                continue
            joint = (float(model.prior[z]) * float(model.doc_given_z[int(d), z])
                     * float(model.word_given_z[int(w), z]))
            result += int(c) * (-beta * q * math.log(joint) + q * math.log(q))
    return result


def entropy(p):
    return float(-sum(x * math.log(x) for x in np.asarray(p).ravel() if x > 0.0))


# ------------------------------------------------------------- generators


def random_model(rng, k, n_docs, n_terms):
    prior = 0.1 + rng.random(k)
    doc = 0.05 + rng.random((n_docs, k))
    word = 0.05 + rng.random((n_terms, k))
    return AspectModel(prior / prior.sum(), doc / doc.sum(axis=0), word / word.sum(axis=0))


def random_counts(rng, n_docs, n_terms, nnz, max_count=5):
    nnz = min(nnz, n_docs * n_terms)
    cells = rng.choice(n_docs * n_terms, size=nnz, replace=False)
    counts = rng.integers(1, max_count + 1, size=nnz)
    return CountMatrix.from_entries(
        n_docs, n_terms, cells // n_terms, cells % n_terms, counts)


def sample_corpus(model, n_tokens, rng):
    """Draw token occurrences (z, then d and w given z) from an aspect model
    and aggregate them into a count matrix."""
    z = rng.choice(model.k, size=n_tokens, p=model.prior)
    d = np.empty(n_tokens, dtype=np.int64)
    w = np.empty(n_tokens, dtype=np.int64)
    for zz in range(model.k):
        idx = np.flatnonzero(z == zz)
        if idx.size == 0:
            continue
        d[idx] = rng.choice(model.n_docs, size=idx.size, p=model.doc_given_z[:, zz])
        w[idx] = rng.choice(model.n_terms, size=idx.size, p=model.word_given_z[:, zz])
    keys, counts = np.unique(d * model.n_terms + w, return_counts=True)
    return CountMatrix(model.n_docs, model.n_terms,
                       keys // model.n_terms, keys % model.n_terms, counts)


def topic_generator(rng, k=4, n_docs=200, n_terms=50, doc_alpha=0.3, word_alpha=0.1):
    """A well-separated generating model: each factor concentrates on its own
    block of terms, documents mix factors with a sparse Dirichlet."""
    word = np.empty((n_terms, k))
    block = n_terms // k
    for z in range(k):
        alpha = np.full(n_terms, word_alpha)
        alpha[z * block:(z + 1) * block] = 5.0
        word[:, z] = rng.dirichlet(alpha)
    theta = rng.dirichlet(np.full(k, doc_alpha), size=n_docs)  # per-doc mixtures
    joint_dz = theta / n_docs
    prior = joint_dz.sum(axis=0)
    doc = joint_dz / prior[None, :]
    return AspectModel(prior, doc, word)
