"""Corpus ingestion: tokenization, sparse count matrices, SMART-format
collections, relevance judgments, and reproducible held-out splits."""

import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse

_TOKEN_RE = re.compile(r"[^\W_]+")
_SECTION_RE = re.compile(r"^\.([A-Z])(?:\s+(.*))?$")

# Sections whose content is concatenated into the document text; every other
# marker ends the current text section and its lines are skipped.
_TEXT_SECTIONS = frozenset("TABW")


class ParseError(ValueError):
    """A collection file violates the expected format."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def tokenize(text: str, stopwords=None) -> list[str]:
    """Lowercase `text` and split it on runs of non-alphanumeric characters.

    Tokens found in `stopwords` are dropped.  Duplicates are preserved;
    counting happens in build_counts.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def load_stopwords(path) -> set[str]:
    """Read a stop-word list, one word per line (lowercased, blanks skipped)."""
    words = set()
    with open(path, encoding="utf-8") as f:
        for line in f:
            word = line.strip().lower()
            if word:
                words.add(word)
    return words


@dataclass
class Vocabulary:
    """Term strings with dense 0-based ids assigned in first-seen order."""

    terms: list[str]

    def __post_init__(self):
        self.index = {term: i for i, term in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise ValueError("vocabulary contains duplicate terms")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term) -> bool:
        return term in self.index

    def id_of(self, term: str) -> int:
        return self.index[term]

    def term_of(self, term_id: int) -> str:
        return self.terms[term_id]

    def save(self, path) -> None:
        """Write one `term_id<TAB>term` line per term."""
        with open(path, "w", encoding="utf-8") as f:
            for i, term in enumerate(self.terms):
                f.write(f"{i}\t{term}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        terms = []
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0].isdigit():
                    raise ParseError(path, line_no, "expected 'term_id<TAB>term'")
                if int(parts[0]) != len(terms):
                    raise ParseError(path, line_no, f"term ids must be dense, expected {len(terms)}")
                terms.append(parts[1])
        return cls(terms)


@dataclass(frozen=True)
class CountMatrix:
    """Sparse N x M table of document/term co-occurrence counts.

    Entries are stored sorted by (doc_id, term_id), with no duplicate pairs
    and strictly positive counts.  Documents without any entry are legal:
    they keep their row so ids stay aligned with external judgments.
    """

    n_docs: int
    n_terms: int
    doc_ids: np.ndarray
    term_ids: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "doc_ids", np.asarray(self.doc_ids, dtype=np.int64))
        object.__setattr__(self, "term_ids", np.asarray(self.term_ids, dtype=np.int64))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if self.n_docs < 1 or self.n_terms < 1:
            raise ValueError("count matrix needs at least one row and one column")
        if not (self.doc_ids.shape == self.term_ids.shape == self.counts.shape):
            raise ValueError("entry arrays must have identical shapes")
        if self.doc_ids.ndim != 1:
            raise ValueError("entry arrays must be one-dimensional")
        if self.nnz:
            if self.doc_ids.min() < 0 or self.doc_ids.max() >= self.n_docs:
                raise ValueError("doc_id out of range")
            if self.term_ids.min() < 0 or self.term_ids.max() >= self.n_terms:
                raise ValueError("term_id out of range")
            if self.counts.min() < 1:
                raise ValueError("counts must be >= 1")
            key = self.doc_ids * self.n_terms + self.term_ids
            if not np.all(np.diff(key) > 0):
                raise ValueError("entries must be sorted by (doc_id, term_id) with no duplicates")

    @property
    def nnz(self) -> int:
        return self.doc_ids.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.doc_ids, weights=self.counts, minlength=self.n_docs).astype(np.int64)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.term_ids, weights=self.counts, minlength=self.n_terms).astype(np.int64)

    def row(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Sparse view of document d: (term_ids, counts)."""
        lo = np.searchsorted(self.doc_ids, d, side="left")
        hi = np.searchsorted(self.doc_ids, d, side="right")
        return self.term_ids[lo:hi], self.counts[lo:hi]

    def row_dense(self, d: int) -> np.ndarray:
        term_ids, counts = self.row(d)
        out = np.zeros(self.n_terms)
        out[term_ids] = counts
        return out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_docs, self.n_terms), dtype=np.int64)
        out[self.doc_ids, self.term_ids] = self.counts
        return out

    def to_csr(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.counts.astype(np.float64), (self.doc_ids, self.term_ids)),
            shape=(self.n_docs, self.n_terms),
        )

    @classmethod
    def from_entries(cls, n_docs, n_terms, doc_ids, term_ids, counts) -> "CountMatrix":
        """Build from unordered entries; duplicates are rejected."""
        doc_ids = np.asarray(doc_ids, dtype=np.int64)
        term_ids = np.asarray(term_ids, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        order = np.lexsort((term_ids, doc_ids))
        return cls(n_docs, n_terms, doc_ids[order], term_ids[order], counts[order])

    def save(self, path) -> None:
        """Write one `doc_id<TAB>term_id<TAB>count` triple per line.

        A leading `#dims` comment records (N, M) so empty trailing rows and
        columns survive a round trip.
        """
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#dims\t{self.n_docs}\t{self.n_terms}\n")
            for d, w, c in zip(self.doc_ids, self.term_ids, self.counts):
                f.write(f"{d}\t{w}\t{c}\n")

    @classmethod
    def load(cls, path, n_docs=None, n_terms=None) -> "CountMatrix":
        """Read sparse triples; duplicate cells are merged by summation.

        Dimensions come from the `#dims` header when present, else from
        explicit arguments, else from the largest ids seen.
        """
        docs, terms, counts = [], [], []
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line.split("\t")
                    if parts[0] == "#dims" and len(parts) == 3:
                        n_docs = int(parts[1])
                        n_terms = int(parts[2])
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise ParseError(path, line_no, "expected 'doc_id term_id count'")
                try:
                    d, w, c = int(parts[0]), int(parts[1]), int(parts[2])
                except ValueError:
                    raise ParseError(path, line_no, "doc_id, term_id and count must be integers") from None
                if c < 1:
                    raise ParseError(path, line_no, "count must be >= 1")
                docs.append(d)
                terms.append(w)
                counts.append(c)
        if not docs:
            raise ParseError(path, 0, "no count entries found")
        doc_arr = np.array(docs, dtype=np.int64)
        term_arr = np.array(terms, dtype=np.int64)
        count_arr = np.array(counts, dtype=np.int64)
        if n_docs is None:
            n_docs = int(doc_arr.max()) + 1
        if n_terms is None:
            n_terms = int(term_arr.max()) + 1
        order = np.lexsort((term_arr, doc_arr))
        doc_arr, term_arr, count_arr = doc_arr[order], term_arr[order], count_arr[order]
        key = doc_arr * n_terms + term_arr
        uniq, inverse = np.unique(key, return_inverse=True)
        merged = np.zeros(uniq.size, dtype=np.int64)
        np.add.at(merged, inverse, count_arr)
        return cls(n_docs, n_terms, uniq // n_terms, uniq % n_terms, merged)


def build_counts(docs: list[list[str]]) -> tuple[Vocabulary, CountMatrix]:
    """Count term occurrences per document.

    Term ids are assigned in first-seen order across the corpus.  Documents
    with no tokens are retained as empty rows.
    """
    index: dict[str, int] = {}
    terms: list[str] = []
    doc_ids, term_ids, counts = [], [], []
    for d, tokens in enumerate(docs):
        per_doc: dict[int, int] = {}
        for token in tokens:
            tid = index.get(token)
            if tid is None:
                tid = len(terms)
                index[token] = tid
                terms.append(token)
            per_doc[tid] = per_doc.get(tid, 0) + 1
        for tid in sorted(per_doc):
            doc_ids.append(d)
            term_ids.append(tid)
            counts.append(per_doc[tid])
    if not terms:
        raise ValueError("all documents are empty; nothing to count")
    matrix = CountMatrix(
        len(docs), len(terms),
        np.array(doc_ids, dtype=np.int64),
        np.array(term_ids, dtype=np.int64),
        np.array(counts, dtype=np.int64),
    )
    return Vocabulary(terms), matrix


@dataclass(frozen=True)
class SplitPair:
    """A train/held-out partition of individual token occurrences.

    The two matrices share the source dimensions and their cell-wise sum
    reproduces the source exactly.  For large totals the held-out share
    concentrates tightly around `fraction`.
    """

    train: CountMatrix
    heldout: CountMatrix
    seed: int
    fraction: float

    def merged(self) -> CountMatrix:
        """Cell-wise sum of the two sides."""
        n_docs, n_terms = self.train.n_docs, self.train.n_terms
        doc_ids = np.concatenate([self.train.doc_ids, self.heldout.doc_ids])
        term_ids = np.concatenate([self.train.term_ids, self.heldout.term_ids])
        counts = np.concatenate([self.train.counts, self.heldout.counts])
        key = doc_ids * n_terms + term_ids
        uniq, inverse = np.unique(key, return_inverse=True)
        merged = np.zeros(uniq.size, dtype=np.int64)
        np.add.at(merged, inverse, counts)
        return CountMatrix(n_docs, n_terms, uniq // n_terms, uniq % n_terms, merged)


def split_heldout(counts: CountMatrix, fraction: float, seed: int) -> SplitPair:
    """Assign each token occurrence to the held-out side with probability
    `fraction`, independently, using a deterministic seeded generator.

    A cell's count can end up split between the two sides.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    held = rng.binomial(counts.counts, fraction)
    kept = counts.counts - held
    train = _select_entries(counts, kept)
    heldout = _select_entries(counts, held)
    return SplitPair(train=train, heldout=heldout, seed=seed, fraction=fraction)


def _select_entries(counts: CountMatrix, new_counts: np.ndarray) -> CountMatrix:
    keep = new_counts > 0
    return CountMatrix(
        counts.n_docs, counts.n_terms,
        counts.doc_ids[keep], counts.term_ids[keep], new_counts[keep],
    )


@dataclass(frozen=True)
class SmartRecord:
    """One record of a SMART-format file: the `.I` id and its text."""

    id: str
    text: str


def parse_smart_collection(path) -> list[SmartRecord]:
    """Parse a SMART collection file.

    Records start at `.I <id>` lines.  The `.W` body plus any `.T`, `.A`
    and `.B` sections are concatenated into the record text; other sections
    are skipped.  Records appear in file order.
    """
    records: list[SmartRecord] = []
    cur_id = None
    cur_parts: list[str] = []
    in_text = False

    def flush():
        if cur_id is not None:
            records.append(SmartRecord(cur_id, "\n".join(cur_parts).strip()))

    with open(path, encoding="utf-8", errors="replace") as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            m = _SECTION_RE.match(line)
            if m:
                tag, rest = m.group(1), m.group(2)
                if tag == "I":
                    flush()
                    if rest is None or not rest.strip():
                        raise ParseError(path, line_no, "'.I' marker without an id")
                    cur_id = rest.strip()
                    cur_parts = []
                    in_text = False
                else:
                    if cur_id is None:
                        raise ParseError(path, line_no, f"section '.{tag}' before any '.I' record")
                    in_text = tag in _TEXT_SECTIONS
                    if in_text and rest and rest.strip():
                        cur_parts.append(rest.strip())
            else:
                if cur_id is None:
                    if line.strip():
                        raise ParseError(path, line_no, "content before the first '.I' marker")
                    continue
                if in_text:
                    cur_parts.append(line)
    flush()
    return records


def parse_smart_queries(path) -> list[SmartRecord]:
    """Parse a SMART query file (same grammar as collections)."""
    return parse_smart_collection(path)


def parse_qrels(path) -> dict[str, set[str]]:
    """Parse relevance judgments into query_id -> set of relevant doc ids.

    The native layout is `query_id doc_id` with extra columns ignored.  When
    every line has at least four columns and a constant '0' second column,
    the classic `query_id 0 doc_id grade` layout is assumed and the doc id is
    taken from the third column.  Duplicate pairs collapse.
    """
    rows: list[list[str]] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ParseError(path, line_no, "expected at least 'query_id doc_id'")
            rows.append(parts)
    if not rows:
        raise ParseError(path, 0, "no judgment pairs found")
    trec_layout = all(len(p) >= 4 and p[1] == "0" for p in rows)
    doc_col = 2 if trec_layout else 1
    judgments: dict[str, set[str]] = {}
    for parts in rows:
        judgments.setdefault(parts[0], set()).add(parts[doc_col])
    return judgments
