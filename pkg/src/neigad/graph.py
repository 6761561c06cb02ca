"""Graph and feature storage, file ingestion, synthetic benchmarks and anomaly injection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """Raised when an edge list, MatrixMarket file or CSV table cannot be parsed."""


class ParameterError(ValueError):
    """Raised for invalid generator or injection parameters."""


@dataclass(frozen=True)
class SparseGraph:
    """Undirected, unweighted simple graph in CSR form.

    Neighbors of node ``i`` are ``col_indices[row_offsets[i]:row_offsets[i + 1]]``,
    sorted ascending. Binary edge weights are implied.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, src, dst) -> "SparseGraph":
        """Build from directed (src, dst) pairs: symmetrize, dedupe, drop self-loops."""
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ValueError("src and dst must have equal length")
        if n < 0:
            raise ParameterError("n must be non-negative")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise GraphFormatError(f"edge index out of range [0, {n})")
        keep = src != dst
        src, dst = src[keep], dst[keep]
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        if rows.size:
            keys = np.unique(rows * max(n, 1) + cols)
            rows, cols = keys // max(n, 1), keys % max(n, 1)
        counts = np.bincount(rows, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        # np.unique sorts by (row, col), so columns are already ascending per row
        return cls(n, offsets, cols.astype(np.int64))

    @classmethod
    def from_scipy(cls, mat) -> "SparseGraph":
        coo = sp.coo_matrix(mat)
        if coo.shape[0] != coo.shape[1]:
            raise ValueError("adjacency must be square")
        nz = coo.data != 0
        return cls.from_edges(coo.shape[0], coo.row[nz], coo.col[nz])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(self.row_offsets[-1]) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with i < j, lexicographically sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.col_indices
        return np.stack([rows[mask], self.col_indices[mask]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.col_indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices.copy(), self.row_offsets.copy()), shape=(self.n, self.n)
        )

    def dense(self) -> np.ndarray:
        return self.adjacency().toarray()

    def validate(self) -> None:
        """Check the CSR invariants; raises AssertionError on violation."""
        ro, ci = self.row_offsets, self.col_indices
        assert ro.shape == (self.n + 1,) and ro[0] == 0 and ro[-1] == ci.size
        assert np.all(np.diff(ro) >= 0)
        if ci.size:
            assert ci.min() >= 0 and ci.max() < self.n
        rows = np.repeat(np.arange(self.n), self.degrees)
        assert not np.any(rows == ci), "self-loop"
        for i in range(self.n):
            assert np.all(np.diff(self.neighbors(i)) > 0), f"row {i} unsorted or duplicated"
        adj = self.adjacency()
        assert (adj != adj.T).nnz == 0, "asymmetric"


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AttributedGraph:
    graph: SparseGraph
    features: FeatureMatrix
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.features.n != self.graph.n:
            raise ValueError(f"features have {self.features.n} rows, graph has {self.graph.n} nodes")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (self.graph.n,):
                raise ValueError("labels length must equal node count")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.graph.n


# ---------------------------------------------------------------- parsing


def parse_edge_list(text: str, n: Optional[int] = None) -> SparseGraph:
    """Parse whitespace-separated ``i j`` lines.

    ``#`` lines are comments. The node count comes from ``n`` or from an
    ``n=<int>`` header line; an explicit argument wins.
    """
    src, dst = [], []
    header_n = None
    pending = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("n="):
            try:
                header_n = int(line[2:])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: malformed header {line!r}") from None
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphFormatError(f"line {lineno}: expected 'i j', got {line!r}")
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer token in {line!r}") from None
        pending.append(lineno)
        src.append(i)
        dst.append(j)
    if n is None:
        n = header_n
    if n is None:
        raise GraphFormatError("node count not given and no 'n=<int>' header found")
    for lineno, i, j in zip(pending, src, dst):
        if not (0 <= i < n and 0 <= j < n):
            raise GraphFormatError(f"line {lineno}: index out of range [0, {n}): {i} {j}")
    return SparseGraph.from_edges(n, src, dst)


def parse_matrix_market(text: str) -> SparseGraph:
    """Parse a MatrixMarket coordinate file (1-based) into a graph; values, if any, are ignored."""
    lines = text.splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise GraphFormatError("line 1: missing %%MatrixMarket banner")
    banner = lines[0].lower().split()
    if len(banner) < 3 or banner[1] != "matrix" or banner[2] != "coordinate":
        raise GraphFormatError("line 1: only 'matrix coordinate' files are supported")
    size = None
    src, dst = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        tokens = line.split()
        try:
            if size is None:
                size = tuple(int(t) for t in tokens[:3])
                if len(size) != 3 or size[0] != size[1]:
                    raise GraphFormatError(f"line {lineno}: expected square 'rows cols nnz'")
                continue
            i, j = int(tokens[0]) - 1, int(tokens[1]) - 1
        except (ValueError, IndexError):
            raise GraphFormatError(f"line {lineno}: malformed entry {line!r}") from None
        if not (0 <= i < size[0] and 0 <= j < size[0]):
            raise GraphFormatError(f"line {lineno}: index out of range")
        src.append(i)
        dst.append(j)
    if size is None:
        raise GraphFormatError("missing size line")
    return SparseGraph.from_edges(size[0], src, dst)


def load_graph(path, n: Optional[int] = None) -> SparseGraph:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().lower().startswith("%%matrixmarket"):
        return parse_matrix_market(text)
    return parse_edge_list(text, n)


def load_features_csv(text: str) -> FeatureMatrix:
    rows = []
    width = None
    for r, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not record or all(not c.strip() for c in record):
            continue
        if width is None:
            width = len(record)
        elif len(record) != width:
            raise GraphFormatError(f"row {r}: ragged row with {len(record)} cells, expected {width}")
        row = []
        for c, cell in enumerate(record, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise GraphFormatError(f"row {r}, col {c}: non-numeric cell {cell!r}") from None
        rows.append(row)
    if not rows:
        raise GraphFormatError("empty feature table")
    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise GraphFormatError("non-finite feature value")
    return FeatureMatrix(values)


def load_labels(text: str) -> np.ndarray:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line not in ("0", "1"):
            raise GraphFormatError(f"line {lineno}: label must be 0 or 1, got {line!r}")
        out.append(int(line))
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------- operators


def normalized_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    inv_sqrt = 1.0 / np.sqrt(g.degrees.astype(np.float64) + 1.0)
    op = g.adjacency() + sp.identity(g.n, format="csr")
    op = sp.diags(inv_sqrt) @ op @ sp.diags(inv_sqrt)
    op = sp.csr_matrix(op)
    op.sort_indices()
    return op


# ---------------------------------------------------------------- generators


def generate_synthetic(
    n: int,
    blocks: int,
    p_in: float,
    p_out: float,
    d: int,
    seed: int = 0,
    feature_sep: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> AttributedGraph:
    """Stochastic block model graph with Gaussian features around per-community means.

    Nodes are assigned to communities in contiguous, near-equal ranges. Community
    means are drawn from N(0, feature_sep^2); each node adds N(0, 1) noise.
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ParameterError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if blocks < 1 or blocks > n:
        raise ParameterError(f"need 1 <= blocks <= n, got blocks={blocks}, n={n}")
    if d < 1:
        raise ParameterError("d must be >= 1")
    rng = np.random.default_rng(seed) if rng is None else rng
    membership = np.repeat(np.arange(blocks), np.diff(np.linspace(0, n, blocks + 1).astype(np.int64)))
    bounds = np.searchsorted(membership, np.arange(blocks + 1))

    src, dst = [], []
    for a in range(blocks):
        for b in range(a, blocks):
            p = p_in if a == b else p_out
            if p == 0.0:
                continue
            na = bounds[a + 1] - bounds[a]
            nb = bounds[b + 1] - bounds[b]
            # positions over the full na x nb rectangle; within a block only i < j is kept
            hit = _bernoulli_positions(rng, int(na * nb), p)
            pi, pj = hit // nb + bounds[a], hit % nb + bounds[b]
            if a == b:
                keep = pi < pj
                pi, pj = pi[keep], pj[keep]
            src.append(pi)
            dst.append(pj)
    if src:
        graph = SparseGraph.from_edges(n, np.concatenate(src), np.concatenate(dst))
    else:
        graph = SparseGraph.from_edges(n, [], [])

    means = rng.normal(0.0, feature_sep, size=(blocks, d))
    x = means[membership] + rng.normal(0.0, 1.0, size=(n, d))
    return AttributedGraph(graph, FeatureMatrix(x), np.zeros(n, dtype=np.int64))


def _bernoulli_positions(rng: np.random.Generator, size: int, p: float) -> np.ndarray:
    if p >= 1.0:
        return np.arange(size)
    # geometric skipping keeps sparse blocks O(hits) instead of O(pairs)
    if p < 0.05 and size > 10000:
        expected = int(size * p * 1.2 + 10 * np.sqrt(size * p + 1) + 16)
        gaps = rng.geometric(p, size=expected)
        pos = np.cumsum(gaps) - 1
        while pos[-1] < size:
            more = np.cumsum(rng.geometric(p, size=expected)) + pos[-1]
            pos = np.concatenate([pos, more])
        return pos[pos < size]
    return np.flatnonzero(rng.random(size) < p)


def sbm_for_degree(n: int, avg_degree: float, blocks: int, mix: float = 0.2):
    """Return (p_in, p_out) giving expected degree ``avg_degree`` with fraction ``mix`` across blocks."""
    size = n / blocks
    inside = max(size - 1.0, 1.0)
    outside = max(n - size, 1.0)
    p_in = min(1.0, avg_degree * (1.0 - mix) / inside)
    p_out = min(p_in, avg_degree * mix / outside) if blocks > 1 else 0.0
    return p_in, p_out


# ---------------------------------------------------------------- injection


def inject_structural_anomalies(g: SparseGraph, p: int, m: int, seed: int = 0, rng=None):
    """Turn ``p`` disjoint random node sets of size ``m`` into cliques.

    Returns the densified graph and 0/1 labels marking the clique members.
    Existing edges are never removed.
    """
    if m < 2:
        raise ParameterError(f"clique size m must be >= 2, got {m}")
    if p < 0 or p * m > g.n:
        raise ParameterError(f"need 0 <= p*m <= n, got p={p}, m={m}, n={g.n}")
    rng = np.random.default_rng(seed) if rng is None else rng
    labels = np.zeros(g.n, dtype=np.int64)
    if p == 0:
        return g, labels
    chosen = rng.permutation(g.n)[: p * m].reshape(p, m)
    old = g.edges()
    src, dst = [old[:, 0]], [old[:, 1]]
    iu, ju = np.triu_indices(m, k=1)
    for members in chosen:
        src.append(members[iu])
        dst.append(members[ju])
    labels[chosen.ravel()] = 1
    return SparseGraph.from_edges(g.n, np.concatenate(src), np.concatenate(dst)), labels


def inject_contextual_anomalies(
    g: SparseGraph, x: FeatureMatrix, q: int, k: int, seed: int = 0, rng=None, exclude=None
):
    """Replace the features of ``q`` random nodes with the farthest of ``k`` sampled candidates.

    Distances are measured against the original feature rows, so every replaced
    row equals some other node's original row. Nodes flagged in ``exclude`` are
    never chosen as targets (they may still serve as sources).
    """
    if k < 1:
        raise ParameterError(f"candidate pool size k must be >= 1, got {k}")
    if q < 0 or q > g.n:
        raise ParameterError(f"need 0 <= q <= n, got q={q}, n={g.n}")
    if x.n != g.n:
        raise ValueError("feature rows must match node count")
    rng = np.random.default_rng(seed) if rng is None else rng
    labels = np.zeros(g.n, dtype=np.int64)
    if q == 0:
        return x, labels
    if g.n < 2:
        raise ParameterError("contextual injection needs at least two nodes")
    orig = x.values
    out = orig.copy()
    pool = np.arange(g.n) if exclude is None else np.flatnonzero(~np.asarray(exclude, dtype=bool))
    if q > pool.size:
        raise ParameterError(f"q={q} exceeds the {pool.size} eligible target nodes")
    targets = pool[rng.permutation(pool.size)[:q]]
    k = min(k, g.n - 1)
    for target in targets:
        others = np.delete(np.arange(g.n), target)
        cand = rng.choice(others, size=k, replace=False)
        dist = np.linalg.norm(orig[cand] - orig[target], axis=1)
        out[target] = orig[cand[np.argmax(dist)]]
    labels[targets] = 1
    return FeatureMatrix(out), labels


def make_benchmark(
    n: int = 1000,
    blocks: int = 4,
    p_in: float = 0.015,
    p_out: float = 0.0005,
    d: int = 32,
    clique_count: int = 5,
    clique_size: int = 5,
    contextual: int = 25,
    candidates: int = 50,
    seed: int = 0,
) -> AttributedGraph:
    """SBM graph with injected clique (structural) and feature-swap (contextual) anomalies.

    The two anomaly sets are disjoint. Generation and injection draw from
    separate named streams of ``seed``.
    """
    from . import seeding

    base = generate_synthetic(n, blocks, p_in, p_out, d, rng=seeding.stream(seed, seeding.DATA))
    inj = seeding.stream(seed, seeding.INJECTION)
    graph, structural = inject_structural_anomalies(base.graph, clique_count, clique_size, rng=inj)
    features, ctx = inject_contextual_anomalies(
        graph, base.features, contextual, candidates, rng=inj, exclude=structural.astype(bool)
    )
    return AttributedGraph(graph, features, structural | ctx)
