"""Aspect-model topic analysis: latent-class decompositions of document/term
count tables fitted by EM and tempered EM, a truncated-SVD baseline, query
fold-in, and retrieval/perplexity evaluation harnesses."""

__version__ = "0.1.0"

from .aspect_model import (
    PROB_FLOOR,
    AspectModel,
    DegeneracyError,
    cell_posteriors,
    doc_marginals,
    free_energy,
    init_model,
    joint_matrix,
    joint_prob,
    log_likelihood,
    mixing_weight_matrix,
    mixing_weights,
    perplexity,
    posterior,
    top_words,
    unigram_baseline,
    word_given_doc,
)
from .corpus import (
    CountMatrix,
    ParseError,
    SmartRecord,
    SplitPair,
    Vocabulary,
    build_counts,
    load_stopwords,
    parse_qrels,
    parse_smart_collection,
    parse_smart_queries,
    split_heldout,
    tokenize,
)
from .lsa import SvdDecomposition, lsi_doc_coords, lsi_fold_in, truncated_svd
from .retrieval import (
    RECALL_LEVELS,
    PrSummary,
    RankedList,
    RetrievalRun,
    combined_score,
    cosine_score,
    latent_score,
    plsi_star_score,
    precision_recall,
    rank_all,
)
from .trainer import (
    StoppingReason,
    TemConfig,
    TraceRecord,
    TrainTrace,
    em_step,
    fit_em,
    fit_tem,
    fold_in,
    internal_split,
)

__all__ = [
    "PROB_FLOOR",
    "RECALL_LEVELS",
    "AspectModel",
    "CountMatrix",
    "DegeneracyError",
    "ParseError",
    "PrSummary",
    "RankedList",
    "RetrievalRun",
    "SmartRecord",
    "SplitPair",
    "StoppingReason",
    "SvdDecomposition",
    "TemConfig",
    "TraceRecord",
    "TrainTrace",
    "Vocabulary",
    "build_counts",
    "cell_posteriors",
    "combined_score",
    "cosine_score",
    "doc_marginals",
    "em_step",
    "fit_em",
    "fit_tem",
    "fold_in",
    "free_energy",
    "init_model",
    "internal_split",
    "joint_matrix",
    "joint_prob",
    "latent_score",
    "load_stopwords",
    "log_likelihood",
    "lsi_doc_coords",
    "lsi_fold_in",
    "mixing_weight_matrix",
    "mixing_weights",
    "parse_qrels",
    "parse_smart_collection",
    "parse_smart_queries",
    "perplexity",
    "plsi_star_score",
    "posterior",
    "precision_recall",
    "rank_all",
    "split_heldout",
    "tokenize",
    "top_words",
    "truncated_svd",
    "unigram_baseline",
    "word_given_doc",
]
