"""Command-line interface: ingest collections, train and evaluate models,
and run retrieval with plot-ready outputs.

Every command that writes files also writes a manifest.json recording the
resolved parameters and the checksums of inputs and outputs, so a run can be
reproduced bit-for-bit from the manifest alone.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical degeneracy.
"""

import argparse
import hashlib
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .aspect_model import (
    AspectModel,
    DegeneracyError,
    mixing_weight_matrix,
    perplexity,
    top_words,
)
from .corpus import (
    CountMatrix,
    ParseError,
    Vocabulary,
    build_counts,
    load_stopwords,
    parse_qrels,
    parse_smart_collection,
    parse_smart_queries,
    tokenize,
)
from .lsa import SvdDecomposition, lsi_doc_coords, truncated_svd
from .retrieval import RetrievalRun, precision_recall, rank_all
from .trainer import TemConfig, fit_em, fit_tem, fold_in

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, parameters: dict,
                    inputs: dict, outputs: dict) -> None:
    manifest = {
        "tool": f"plsa {__version__}",
        "command": command,
        "parameters": parameters,
        "inputs": {name: {"path": str(p), "sha256": _sha256(Path(p))}
                   for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": _sha256(Path(p))}
                    for name, p in outputs.items()},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _save_ids(path: Path, ids: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, ext in enumerate(ids):
            f.write(f"{i}\t{ext}\n")


def _load_ids(path: Path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                ids.append(line.split("\t", 1)[1])
    return ids


def _sidecar(counts_path: Path, explicit, name: str):
    if explicit:
        return Path(explicit)
    candidate = counts_path.parent / name
    return candidate if candidate.exists() else None


# ---------------------------------------------------------------- ingest


def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stopwords = load_stopwords(args.stopwords) if args.stopwords else None

    if args.format == "triples":
        counts = CountMatrix.load(args.inputs[0])
        vocab_path = _sidecar(Path(args.inputs[0]), args.vocab, "vocab.tsv")
        if vocab_path is not None:
            vocab = Vocabulary.load(vocab_path)
            if len(vocab) != counts.n_terms:
                raise ValueError(
                    f"vocabulary has {len(vocab)} terms but counts reference {counts.n_terms}")
        else:
            vocab = Vocabulary([f"t{i}" for i in range(counts.n_terms)])
        doc_ids = [str(i) for i in range(counts.n_docs)]
    else:
        texts: list[str] = []
        doc_ids = []
        if args.format == "smart":
            for path in args.inputs:
                for record in parse_smart_collection(path):
                    doc_ids.append(record.id)
                    texts.append(record.text)
        else:  # raw: one document per line
            for path in args.inputs:
                with open(path, encoding="utf-8") as f:
                    for line in f:
                        doc_ids.append(str(len(doc_ids) + 1))
                        texts.append(line.rstrip("\n"))
        if not texts:
            raise ValueError("no documents found in the input files")
        vocab, counts = build_counts([tokenize(t, stopwords) for t in texts])

    counts_path = out_dir / "counts.tsv"
    vocab_path = out_dir / "vocab.tsv"
    docids_path = out_dir / "docids.tsv"
    counts.save(counts_path)
    vocab.save(vocab_path)
    _save_ids(docids_path, doc_ids)
    _write_manifest(
        out_dir, "ingest",
        {"format": args.format, "stopwords": args.stopwords},
        {f"input{i}": p for i, p in enumerate(args.inputs)},
        {"counts": counts_path, "vocab": vocab_path, "docids": docids_path},
    )
    print(f"docs={counts.n_docs} terms={counts.n_terms} tokens={counts.total}")
    return EXIT_OK


# ----------------------------------------------------------------- train


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = CountMatrix.load(args.counts)

    if args.mode == "svd":
        decomp = truncated_svd(counts, args.k)
        model_path = out_dir / "svd.bin"
        decomp.save(model_path)
        _write_manifest(out_dir, "train", {"mode": "svd", "k": args.k},
                        {"counts": args.counts}, {"model": model_path})
        print(f"mode=svd k={args.k} sigma_max={decomp.sigma[0]:.6g}")
        return EXIT_OK

    config = TemConfig(
        eta=args.eta,
        beta_min=args.beta_min,
        improvement_tol=args.tol,
        max_iters_per_beta=args.max_iters_per_beta,
        max_total_iters=args.max_total_iters,
        seed=args.seed,
        heldout_fraction=args.heldout,
    )
    fit = fit_tem if args.mode == "tem" else fit_em
    model, trace = fit(counts, args.k, config)
    model_path = out_dir / "model.bin"
    trace_path = out_dir / "trace.tsv"
    model.save(model_path)
    trace.save(trace_path)
    _write_manifest(
        out_dir, "train",
        {"mode": args.mode, "k": args.k, "eta": args.eta, "beta_min": args.beta_min,
         "tol": args.tol, "heldout": args.heldout, "seed": args.seed,
         "max_iters_per_beta": args.max_iters_per_beta,
         "max_total_iters": args.max_total_iters},
        {"counts": args.counts},
        {"model": model_path, "trace": trace_path},
    )
    last = trace.records[-1]
    best = min(r.heldout_perplexity for r in trace.records)
    print(f"mode={args.mode} k={args.k} iterations={last.iteration} "
          f"final_beta={last.beta:.6g} best_heldout_ppx={best:.6g} "
          f"stopping={trace.stopping_reason.value}")
    return EXIT_OK


# ------------------------------------------------------------ perplexity


def cmd_perplexity(args) -> int:
    model = AspectModel.load(args.model)
    counts = CountMatrix.load(args.counts)
    value = perplexity(model, counts, conditional=args.conditional)
    lines = [f"perplexity {value:.10g}"]
    if args.baseline:
        base = AspectModel.load(args.baseline)
        base_value = perplexity(base, counts, conditional=args.conditional)
        lines.append(f"baseline_perplexity {base_value:.10g}")
        lines.append(f"reduction_factor {base_value / value:.10g}")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / "perplexity.txt"
        report_path.write_text(report, encoding="utf-8")
        inputs = {"model": args.model, "counts": args.counts}
        if args.baseline:
            inputs["baseline"] = args.baseline
        _write_manifest(out_dir, "perplexity",
                        {"conditional": args.conditional},
                        inputs, {"report": report_path})
    return EXIT_OK


# ----------------------------------------------------------------- query


def _load_queries(args) -> tuple[list[str], list[str]]:
    """Returns (external query ids, raw query texts)."""
    if args.queries_format == "smart":
        records = parse_smart_queries(args.queries)
        return [r.id for r in records], [r.text for r in records]
    ids, texts = [], []
    with open(args.queries, encoding="utf-8") as f:
        for line in f:
            ids.append(str(len(ids) + 1))
            texts.append(line.rstrip("\n"))
    return ids, texts


def _normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized copy plus the mask of rows with positive norm."""
    norms = np.linalg.norm(matrix, axis=1)
    valid = norms > 0.0
    out = np.zeros_like(matrix, dtype=np.float64)
    out[valid] = matrix[valid] / norms[valid, None]
    return out, valid


def _latent_scores_for_model(model: AspectModel, query_vectors,
                             fold_beta, threads) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(n_queries x n_docs latent cosine matrix, query validity, doc validity)."""
    doc_reps = mixing_weight_matrix(model)
    doc_valid = np.isfinite(doc_reps).all(axis=1)
    doc_reps = np.where(doc_valid[:, None], doc_reps, 0.0)
    doc_unit, doc_norm_ok = _normalize_rows(doc_reps)
    doc_valid &= doc_norm_ok

    def one_query(vec):
        if vec[0].size == 0:
            return None
        try:
            return fold_in(model, vec, beta=fold_beta)
        except (ValueError, DegeneracyError):
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(one_query, query_vectors))
    else:
        reps = [one_query(v) for v in query_vectors]
    query_valid = np.array([r is not None for r in reps])
    rep_matrix = np.zeros((len(reps), model.k))
    for i, r in enumerate(reps):
        if r is not None:
            rep_matrix[i] = r
    query_unit, query_norm_ok = _normalize_rows(rep_matrix)
    query_valid &= query_norm_ok
    return query_unit @ doc_unit.T, query_valid, doc_valid


def cmd_query(args) -> int:
    if not args.model and not args.svd and not args.baseline_only:
        raise ValueError("supply --model and/or --svd, or pass --baseline-only")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts_path = Path(args.counts)
    counts = CountMatrix.load(counts_path)
    vocab_path = _sidecar(counts_path, args.vocab, "vocab.tsv")
    if vocab_path is None:
        raise ValueError("no vocabulary file found; pass --vocab")
    vocab = Vocabulary.load(vocab_path)
    if len(vocab) != counts.n_terms:
        raise ValueError("vocabulary size does not match the count matrix")
    docids_path = _sidecar(counts_path, args.docids, "docids.tsv")
    doc_ext_ids = (_load_ids(docids_path) if docids_path is not None
                   else [str(i) for i in range(counts.n_docs)])
    if len(doc_ext_ids) != counts.n_docs:
        raise ValueError("document id map does not match the count matrix")

    stopwords = load_stopwords(args.stopwords) if args.stopwords else None
    query_ext_ids, query_texts = _load_queries(args)
    query_vectors = []
    for text in query_texts:
        per_term: dict[int, int] = {}
        for token in tokenize(text, stopwords):
            tid = vocab.index.get(token)
            if tid is not None:
                per_term[tid] = per_term.get(tid, 0) + 1
        ids = np.fromiter(sorted(per_term), dtype=np.int64, count=len(per_term))
        query_vectors.append((ids, np.array([per_term[t] for t in ids], dtype=np.float64)))

    n_docs, n_queries = counts.n_docs, len(query_ext_ids)
    doc_csr = counts.to_csr()
    doc_norms = np.sqrt(np.asarray(doc_csr.multiply(doc_csr).sum(axis=1)).ravel())
    query_dense = np.zeros((n_queries, counts.n_terms))
    for i, (ids, cnt) in enumerate(query_vectors):
        query_dense[i, ids] = cnt
    query_norms = np.linalg.norm(query_dense, axis=1)
    raw = (doc_csr @ query_dense.T).T
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_scores = raw / (query_norms[:, None] * doc_norms[None, :])
    cos_scores = np.nan_to_num(cos_scores, nan=0.0, posinf=0.0, neginf=0.0)
    doc_valid = doc_norms > 0.0
    query_valid = query_norms > 0.0

    lam = 1.0 if args.baseline_only else args.lam
    latent = np.zeros((n_queries, n_docs))
    method = "cos"
    # lam = 1 is the pure cosine ranking by definition, whatever was supplied
    if not args.baseline_only and lam < 1.0 and (args.model or args.svd):
        pieces = []
        if args.model:
            models = [AspectModel.load(p) for p in args.model]
            # fixed reduction order so permuting --model files cannot change a bit
            order = np.argsort([hashlib.sha256(m.prior.tobytes() + m.doc_given_z.tobytes()
                                               + m.word_given_z.tobytes()).hexdigest()
                                for m in models])
            for idx in order:
                model = models[idx]
                if model.n_terms != counts.n_terms or model.n_docs != counts.n_docs:
                    raise ValueError(f"model {args.model[idx]} does not match the count matrix")
                scores, q_ok, d_ok = _latent_scores_for_model(
                    model, query_vectors, args.fold_in_beta, args.threads)
                pieces.append(scores)
                query_valid &= q_ok
                doc_valid &= d_ok
            method = "plsi" if len(models) == 1 else "plsi-star"
        if args.svd:
            decomp = SvdDecomposition.load(args.svd)
            if decomp.v.shape[0] != counts.n_terms:
                raise ValueError("svd decomposition does not match the count matrix")
            doc_coords, d_ok = _normalize_rows(lsi_doc_coords(decomp))
            query_coords, q_ok = _normalize_rows(query_dense @ decomp.v)
            pieces.append(query_coords @ doc_coords.T)
            query_valid &= q_ok
            doc_valid &= d_ok
            method = "lsi" if not args.model else method
        latent = sum(pieces) / len(pieces)

    combined = lam * cos_scores + (1.0 - lam) * latent

    def scorer(qi, d):
        if not query_valid[qi] or not doc_valid[d]:
            raise ValueError("unmatchable pair")
        return float(combined[qi, d])

    rankings = rank_all(scorer, n_docs, range(n_queries))

    run_path = out_dir / "run.txt"
    with open(run_path, "w", encoding="utf-8") as f:
        for ranking in rankings:
            qid = query_ext_ids[ranking.query_id]
            for rank, (d, score) in enumerate(zip(ranking.doc_ids, ranking.scores), 1):
                f.write(f"{qid} {doc_ext_ids[d]} {rank} {score:.10g}\n")

    outputs = {"run": run_path}
    inputs = {"counts": args.counts, "queries": args.queries}
    for i, p in enumerate(args.model or []):
        inputs[f"model{i}"] = p
    if args.svd:
        inputs["svd"] = args.svd

    if args.qrels:
        inputs["qrels"] = args.qrels
        ext_judgments = parse_qrels(args.qrels)
        doc_index = {ext: i for i, ext in enumerate(doc_ext_ids)}
        judgments: dict[int, set[int]] = {qi: set() for qi in range(n_queries)}
        for qi, ext_qid in enumerate(query_ext_ids):
            for ext_doc in ext_judgments.get(ext_qid, ()):  # queries may lack judgments
                if ext_doc not in doc_index:
                    raise ValueError(f"qrels reference unknown document id {ext_doc!r}")
                judgments[qi].add(doc_index[ext_doc])
        summary = precision_recall(RetrievalRun(rankings, judgments))
        pr_path = out_dir / "pr.txt"
        with open(pr_path, "w", encoding="utf-8") as f:
            f.write("# recall\tprecision\n")
            for level, prec in zip(summary.recall_levels, summary.precision_at_level):
                f.write(f"{level:.1f}\t{prec:.6f}\n")
            f.write(f"# average_precision\t{summary.average_precision:.6f}"
                    f"\t({summary.n_queries} queries)\n")
        curve_path = out_dir / f"pr_curve_{method}.txt"
        with open(curve_path, "w", encoding="utf-8") as f:
            for level, prec in zip(summary.recall_levels, summary.precision_at_level):
                f.write(f"{level:.1f} {prec:.6f}\n")
        outputs["pr"] = pr_path
        outputs["pr_curve"] = curve_path
        print(f"method={method} queries={summary.n_queries} "
              f"average_precision={summary.average_precision:.4f}")
    else:
        print(f"method={method} queries={n_queries} ranked={n_docs} docs each")

    inputs["vocab"] = str(vocab_path)
    if docids_path is not None:
        inputs["docids"] = str(docids_path)
    _write_manifest(
        out_dir, "query",
        {"lambda": lam, "baseline_only": args.baseline_only, "method": method,
         "fold_in_beta": args.fold_in_beta, "threads": args.threads,
         "queries_format": args.queries_format, "stopwords": args.stopwords},
        inputs, outputs,
    )
    return EXIT_OK


# ---------------------------------------------------------------- topics


def cmd_topics(args) -> int:
    model = AspectModel.load(args.model)
    if not args.vocab:
        raise ValueError("a vocabulary file is required; pass --vocab")
    vocab = Vocabulary.load(args.vocab)
    if len(vocab) != model.n_terms:
        raise ValueError("vocabulary size does not match the model")
    for z in range(model.k):
        print(f"factor {z}\tP(z)={model.prior[z]:.6g}")
        for term_id, prob in top_words(model, z, args.top):
            print(f"  {vocab.term_of(term_id)}\t{prob:.6g}")
    return EXIT_OK


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsa",
        description="Aspect-model topic analysis with tempered EM, an SVD "
                    "baseline, and retrieval evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a sparse count matrix from documents")
    p.add_argument("inputs", nargs="+", help="input file(s)")
    p.add_argument("--format", choices=["raw", "smart", "triples"], default="raw")
    p.add_argument("--stopwords", help="stop-word list, one word per line")
    p.add_argument("--vocab", help="vocabulary sidecar for --format triples")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit an aspect model (or an SVD) on a count matrix")
    p.add_argument("--counts", required=True)
    p.add_argument("--k", type=int, required=True, help="number of factors / components")
    p.add_argument("--mode", choices=["em", "tem", "svd"], default="tem")
    p.add_argument("--eta", type=float, default=0.9, help="beta decay factor")
    p.add_argument("--beta-min", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-4,
                   help="relative held-out improvement counting as progress")
    p.add_argument("--heldout", type=float, default=0.1,
                   help="fraction of occurrences split off for early stopping")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters-per-beta", type=int, default=100)
    p.add_argument("--max-total-iters", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("perplexity", help="evaluate a model's perplexity on counts")
    p.add_argument("--model", required=True)
    p.add_argument("--counts", required=True)
    p.add_argument("--conditional", action="store_true",
                   help="score P(w|d) instead of the joint P(d,w)")
    p.add_argument("--baseline", help="second model; also report the reduction factor")
    p.add_argument("--out", help="optional output directory for the report")
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("query", help="rank documents for queries and evaluate")
    p.add_argument("--counts", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--queries-format", choices=["smart", "raw"], default="smart")
    p.add_argument("--model", nargs="*", default=[],
                   help="aspect model file(s); several trigger uniform averaging")
    p.add_argument("--svd", help="svd decomposition file for latent-space scoring")
    p.add_argument("--baseline-only", action="store_true",
                   help="rank by the raw term cosine only")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="weight of the cosine score in the blend")
    p.add_argument("--qrels", help="relevance judgments; enables precision-recall output")
    p.add_argument("--stopwords")
    p.add_argument("--vocab")
    p.add_argument("--docids")
    p.add_argument("--fold-in-beta", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("topics", help="print the most probable words per factor")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_topics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegeneracyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
