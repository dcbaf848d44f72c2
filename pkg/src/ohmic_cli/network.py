from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence, TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.sparse import csgraph

from ohmic_cli.errors import (
    ComplementDisconnected,
    Disconnected,
    DuplicateEdge,
    EmptySet,
    NegativeConductance,
    NotReversible,
    NotStochastic,
    ParseError,
    UnknownLabel,
    ZeroMassNode,
)

logger = logging.getLogger(__name__)

Potential: TypeAlias = NDArray[np.float64]

DETAILED_BALANCE_RTOL = 1e-12
STOCHASTIC_ATOL = 1e-12

_COMMENT_RE = re.compile(r"#.*$")


@dataclass(frozen=True, slots=True, eq=False)
class Measure:
    values: NDArray[np.float64]
    total: float

    @staticmethod
    def of(values: ArrayLike) -> "Measure":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ZeroMassNode("measure must be a finite nonnegative vector")
        total = float(arr.sum())
        if total <= 0:
            raise ZeroMassNode("measure has zero total mass")
        return Measure(values=arr, total=total)

    def normalized(self) -> "Measure":
        return Measure(values=self.values / self.total, total=1.0)

    def __call__(self, nodes: "NodeSet | Iterable[int]") -> float:
        return float(self.values[as_indices(nodes, len(self.values))].sum())


@dataclass(frozen=True, slots=True)
class NodeSet:
    indices: tuple[int, ...]

    @staticmethod
    def of(nodes: Iterable[int], n: int | None = None) -> "NodeSet":
        idx = sorted({int(i) for i in nodes})
        if n is not None and idx and (idx[0] < 0 or idx[-1] >= n):
            raise UnknownLabel(f"node index out of range 0..{n - 1}: {idx}")
        return NodeSet(indices=tuple(idx))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, x: object) -> bool:
        return x in self.indices

    def array(self) -> NDArray[np.int64]:
        return np.asarray(self.indices, dtype=np.int64)

    def mask(self, n: int) -> NDArray[np.bool_]:
        m = np.zeros(n, dtype=bool)
        m[list(self.indices)] = True
        return m


def as_indices(nodes: NodeSet | Iterable[int] | int, n: int) -> NDArray[np.int64]:
    if isinstance(nodes, (int, np.integer)):
        nodes = [int(nodes)]
    if not isinstance(nodes, NodeSet):
        nodes = NodeSet.of(nodes, n)
    elif nodes.indices and (nodes.indices[0] < 0 or nodes.indices[-1] >= n):
        raise UnknownLabel(f"node index out of range 0..{n - 1}")
    return nodes.array()


class Network:
    """
    Finite electrical network on nodes 0..n-1.

    Each undirected pair is stored once with u < v; self-loop conductances
    are kept in a separate vector. Instances are immutable.
    """

    __slots__ = ("_n", "_u", "_v", "_c", "_loops", "_mu", "_labels", "_adj", "_index")

    def __init__(
        self,
        *,
        n: int,
        u: NDArray[np.int64],
        v: NDArray[np.int64],
        c: NDArray[np.float64],
        loops: NDArray[np.float64],
        labels: Sequence[str] | None = None,
    ) -> None:
        self._n = int(n)
        self._u = u
        self._v = v
        self._c = c
        self._loops = loops
        self._labels = tuple(labels) if labels is not None else None
        self._index: dict[str, int] | None = None
        for arr in (u, v, c, loops):
            arr.setflags(write=False)
        adj = sparse.coo_matrix(
            (np.concatenate([c, c]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self._n, self._n),
        ).tocsr()
        adj.eliminate_zeros()
        adj.sort_indices()
        self._adj = adj
        self._mu = np.asarray(adj.sum(axis=1)).ravel() + loops
        self._mu.setflags(write=False)

    # construction ---------------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        n: int,
        u: ArrayLike,
        v: ArrayLike,
        c: ArrayLike,
        loops: ArrayLike | None = None,
        *,
        labels: Sequence[str] | None = None,
        validate: bool = True,
    ) -> "Network":
        u_arr = np.asarray(u, dtype=np.int64).ravel()
        v_arr = np.asarray(v, dtype=np.int64).ravel()
        c_arr = np.asarray(c, dtype=float).ravel()
        loop_arr = np.zeros(n, dtype=float) if loops is None else np.asarray(loops, dtype=float).ravel().copy()
        if not (len(u_arr) == len(v_arr) == len(c_arr)) or len(loop_arr) != n:
            raise ValueError("edge arrays and loop vector have inconsistent lengths")
        if labels is not None and len(labels) != n:
            raise ValueError("label table length does not match node count")
        if np.any(u_arr == v_arr):
            # Self pairs in the edge arrays are folded into the loop vector.
            same = u_arr == v_arr
            np.add.at(loop_arr, u_arr[same], c_arr[same])
            u_arr, v_arr, c_arr = u_arr[~same], v_arr[~same], c_arr[~same]
        lo = np.minimum(u_arr, v_arr)
        hi = np.maximum(u_arr, v_arr)
        order = np.lexsort((hi, lo))
        lo, hi, c_arr = lo[order], hi[order], c_arr[order]
        if validate:
            _validate(n, lo, hi, c_arr, loop_arr, labels)
        return cls(n=n, u=lo, v=hi, c=c_arr, loops=loop_arr, labels=labels)

    # basic accessors ------------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def u(self) -> NDArray[np.int64]:
        return self._u

    @property
    def v(self) -> NDArray[np.int64]:
        return self._v

    @property
    def c(self) -> NDArray[np.float64]:
        return self._c

    @property
    def loops(self) -> NDArray[np.float64]:
        return self._loops

    @property
    def mu(self) -> NDArray[np.float64]:
        return self._mu

    @property
    def adjacency(self) -> sparse.csr_matrix:
        """Off-diagonal conductance matrix (symmetric CSR, zeros dropped)."""
        return self._adj

    @property
    def offdiag_degree(self) -> NDArray[np.float64]:
        return self._mu - self._loops

    @property
    def labels(self) -> tuple[str, ...]:
        if self._labels is None:
            return tuple(str(i) for i in range(self._n))
        return self._labels

    @property
    def total_mass(self) -> float:
        return float(self._mu.sum())

    def measure(self) -> Measure:
        return Measure(values=self._mu.copy(), total=self.total_mass)

    def label(self, x: int) -> str:
        return self._labels[x] if self._labels is not None else str(x)

    def index(self, label: str | int) -> int:
        if self._index is None:
            self._index = {lab: i for i, lab in enumerate(self.labels)}
        key = str(label)
        if key not in self._index:
            raise UnknownLabel(f"unknown node label: {key!r}")
        return self._index[key]

    def node_set(self, labels: Iterable[str | int]) -> NodeSet:
        return NodeSet.of((self.index(lab) for lab in labels), self._n)

    def conductance(self, x: int, y: int) -> float:
        if x == y:
            return float(self._loops[x])
        return float(self._adj[x, y])

    def conductances_of(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """Vectorized c(x_k, y_k) for off-diagonal pairs (0 for non-edges)."""
        xs = np.asarray(x, dtype=np.int64)
        ys = np.asarray(y, dtype=np.int64)
        if xs.size == 0:
            return np.zeros(0)
        return np.asarray(self._adj[xs, ys]).ravel()

    def conductance_matrix(self) -> sparse.csr_matrix:
        """Full conductance matrix including the diagonal self-loops."""
        return (self._adj + sparse.diags(self._loops)).tocsr()

    def laplacian(self) -> sparse.csr_matrix:
        return (sparse.diags(self.offdiag_degree) - self._adj).tocsr()

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(w)) for a, b, w in zip(self._u, self._v, self._c)]

    def normalized(self) -> "Network":
        """Same chain with conductances scaled so that mu is a probability."""
        z = self.total_mass
        return Network(n=self._n, u=self._u, v=self._v, c=self._c / z, loops=self._loops / z, labels=self._labels)

    def with_loops(self, loops: ArrayLike) -> "Network":
        return Network.from_arrays(self._n, self._u, self._v, self._c, loops, labels=self._labels)

    def __repr__(self) -> str:
        return f"Network(n={self._n}, edges={len(self._c)})"


def _validate(
    n: int,
    u: NDArray[np.int64],
    v: NDArray[np.int64],
    c: NDArray[np.float64],
    loops: NDArray[np.float64],
    labels: Sequence[str] | None,
) -> None:
    if n < 1:
        raise EmptySet("network has no nodes")
    if len(u) and (u.min() < 0 or v.max() >= n):
        raise UnknownLabel(f"edge endpoint out of range 0..{n - 1}")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(loops))):
        raise NegativeConductance("conductances must be finite")
    bad = np.flatnonzero(c < 0)
    if bad.size:
        k = int(bad[0])
        raise NegativeConductance(
            f"negative conductance {c[k]} on ({_lab(labels, u[k])}, {_lab(labels, v[k])})",
            pair=(int(u[k]), int(v[k])),
        )
    bad = np.flatnonzero(loops < 0)
    if bad.size:
        k = int(bad[0])
        raise NegativeConductance(f"negative self-loop {loops[k]} at {_lab(labels, k)}", pair=(k, k))
    if len(u) > 1:
        dup = np.flatnonzero((u[1:] == u[:-1]) & (v[1:] == v[:-1]))
        if dup.size:
            k = int(dup[0])
            raise DuplicateEdge(
                f"duplicate edge ({_lab(labels, u[k])}, {_lab(labels, v[k])})", pair=(int(u[k]), int(v[k]))
            )
    positive = c > 0
    if n > 1:
        g = sparse.coo_matrix((np.ones(int(positive.sum())), (u[positive], v[positive])), shape=(n, n))
        ncomp, comp = csgraph.connected_components(g, directed=False)
        if ncomp > 1:
            stray = int(np.flatnonzero(comp != comp[0])[0])
            raise Disconnected(
                f"network has {ncomp} connected components (node {_lab(labels, stray)} unreachable from "
                f"{_lab(labels, 0)})",
                components=int(ncomp),
            )
    mu = loops.copy()
    np.add.at(mu, u, c)
    np.add.at(mu, v, c)
    zero = np.flatnonzero(mu <= 0)
    if zero.size:
        raise ZeroMassNode(f"node {_lab(labels, int(zero[0]))} has zero mass", node=int(zero[0]))


def _lab(labels: Sequence[str] | None, x: int) -> str:
    return labels[int(x)] if labels is not None else str(int(x))


# builders -------------------------------------------------------------------


def build_network(
    edges: Iterable[tuple[Any, Any, float]],
    *,
    nodes: Iterable[Any] = (),
) -> Network:
    """
    Build a network from (x, y, c) triples with arbitrary labels.

    Node order follows first appearance (extra `nodes` first). A repeated
    undirected pair, in either orientation, is an error.
    """
    index: dict[str, int] = {}
    labels: list[str] = []

    def _idx(label: Any) -> int:
        key = str(label)
        if key not in index:
            index[key] = len(labels)
            labels.append(key)
        return index[key]

    for lab in nodes:
        _idx(lab)
    us: list[int] = []
    vs: list[int] = []
    cs: list[float] = []
    loop_pairs: dict[int, float] = {}
    seen: set[tuple[int, int]] = set()
    for x, y, w in edges:
        a, b = _idx(x), _idx(y)
        key = (min(a, b), max(a, b))
        if key in seen:
            raise DuplicateEdge(f"duplicate edge ({x}, {y})", pair=key)
        seen.add(key)
        if a == b:
            loop_pairs[a] = float(w)
        else:
            us.append(a)
            vs.append(b)
            cs.append(float(w))
    n = len(labels)
    loops = np.zeros(n)
    for a, w in loop_pairs.items():
        loops[a] = w
    net = Network.from_arrays(n, us, vs, cs, loops, labels=labels)
    logger.debug("built network with %d nodes and %d edges", net.n, len(net.c))
    return net


def parse_edge_list(text: str) -> list[tuple[str, str, float]]:
    out: list[tuple[str, str, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT_RE.sub("", raw).strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'x y c', got {raw.strip()!r}", line=lineno)
        try:
            w = float(parts[2])
        except ValueError as e:
            raise ParseError(f"line {lineno}: conductance {parts[2]!r} is not a number", line=lineno) from e
        out.append((parts[0], parts[1], w))
    return out


def load_edge_list(path: Path) -> Network:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read network file {path}: {e}") from e
    return build_network(parse_edge_list(text))


def from_chain(kernel: ArrayLike | sparse.spmatrix, mu: Measure | ArrayLike) -> Network:
    """Network with c(x,y) = mu(x) p(x,y); fails unless detailed balance holds."""
    P = sparse.csr_matrix(kernel, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise NotStochastic(f"kernel must be square, got shape {P.shape}")
    m = mu if isinstance(mu, Measure) else Measure.of(mu)
    if len(m.values) != n:
        raise NotStochastic(f"measure has {len(m.values)} entries for a {n}-state kernel")
    if P.nnz and P.data.min() < 0:
        raise NotStochastic("kernel has negative entries")
    rows = np.asarray(P.sum(axis=1)).ravel()
    worst_row = int(np.argmax(np.abs(rows - 1.0)))
    if abs(rows[worst_row] - 1.0) > STOCHASTIC_ATOL:
        raise NotStochastic(f"row {worst_row} sums to {rows[worst_row]!r}", row=worst_row)

    F = sparse.diags(m.values) @ P
    Ft = F.T.tocsr()
    diff = abs(F - Ft).tocoo()
    if diff.nnz:
        scale = np.maximum(np.abs(np.asarray(F[diff.row, diff.col]).ravel()), np.abs(np.asarray(Ft[diff.row, diff.col]).ravel()))
        rel = diff.data / np.where(scale > 0, scale, 1.0)
        k = int(np.argmax(rel))
        if rel[k] > DETAILED_BALANCE_RTOL:
            x, y = int(diff.row[k]), int(diff.col[k])
            raise NotReversible(
                f"detailed balance fails at ({x}, {y}): mu(x)p(x,y)={F[x, y]!r}, mu(y)p(y,x)={F[y, x]!r}",
                pair=(x, y),
                relative_error=float(rel[k]),
            )
    sym = ((F + Ft) * 0.5).tocoo()
    loops = np.zeros(n)
    on_diag = sym.row == sym.col
    np.add.at(loops, sym.row[on_diag], sym.data[on_diag])
    upper = sym.row < sym.col
    return Network.from_arrays(n, sym.row[upper], sym.col[upper], sym.data[upper], loops)


def transition_kernel(net: Network) -> sparse.csr_matrix:
    inv_mu = 1.0 / net.mu
    return (sparse.diags(inv_mu) @ net.conductance_matrix()).tocsr()


def apply_generator(net: Network, f: ArrayLike) -> Potential:
    """(Lf)(x) = sum_y p(x,y) (f(y) - f(x)); self-loops drop out."""
    fv = np.asarray(f, dtype=float)
    return (net.adjacency @ fv - net.offdiag_degree * fv) / net.mu


# structural transforms -----------------------------------------------------


def _quotient(net: Network, blocks: NDArray[np.int64], nblocks: int, *, keep_internal: bool) -> tuple:
    bu = blocks[net.u]
    bv = blocks[net.v]
    cross = bu != bv
    loops = np.zeros(nblocks)
    np.add.at(loops, blocks, net.loops)
    if keep_internal:
        np.add.at(loops, bu[~cross], 2.0 * net.c[~cross])
    lo = np.minimum(bu[cross], bv[cross])
    hi = np.maximum(bu[cross], bv[cross])
    w = sparse.coo_matrix((net.c[cross], (lo, hi)), shape=(nblocks, nblocks)).tocsr()
    w.sum_duplicates()
    coo = w.tocoo()
    return coo.row, coo.col, coo.data, loops


def lump(net: Network, blocks: ArrayLike, *, labels: Sequence[str] | None = None) -> Network:
    """
    Quotient network over a partition given as block ids per node.

    Conductances between blocks are summed and internal conductance moves
    to the block self-loop, so the block masses are preserved.
    """
    b = np.asarray(blocks, dtype=np.int64)
    if b.shape != (net.n,):
        raise ValueError("need one block id per node")
    uniq, dense = np.unique(b, return_inverse=True)
    u, v, c, loops = _quotient(net, dense, len(uniq), keep_internal=True)
    return Network.from_arrays(len(uniq), u, v, c, loops, labels=labels)


def collapse(net: Network, S: NodeSet | Iterable[int], label: str = "b") -> Network:
    """
    Merge the nodes of S into one new node (placed last).

    Edges from x outside S into S are summed onto (x, b); edges inside S
    and the self-loop of b are dropped.
    """
    idx = as_indices(S, net.n)
    if idx.size == 0:
        raise EmptySet("cannot collapse an empty set")
    inside = np.zeros(net.n, dtype=bool)
    inside[idx] = True
    rest = np.flatnonzero(~inside)
    if rest.size == 0:
        raise ComplementDisconnected("collapsed set has an empty complement")
    if rest.size > 1:
        sub = net.adjacency[rest][:, rest]
        ncomp, _ = csgraph.connected_components(sub, directed=False)
        if ncomp > 1:
            raise ComplementDisconnected(f"complement of the collapsed set has {ncomp} components")
    blocks = np.empty(net.n, dtype=np.int64)
    blocks[rest] = np.arange(rest.size)
    blocks[idx] = rest.size
    u, v, c, loops = _quotient(net, blocks, rest.size + 1, keep_internal=False)
    loops[-1] = 0.0
    labels = [net.label(int(x)) for x in rest] + [label]
    return Network.from_arrays(rest.size + 1, u, v, c, loops, labels=labels)


def induced(net: Network, nodes: NodeSet | Iterable[int]) -> Network:
    """Sub-network on `nodes`; edges leaving the subset are removed."""
    idx = as_indices(nodes, net.n)
    if idx.size == 0:
        raise EmptySet("induced sub-network needs at least one node")
    pos = np.full(net.n, -1, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    keep = (pos[net.u] >= 0) & (pos[net.v] >= 0)
    labels = [net.label(int(x)) for x in idx] if net._labels is not None else None
    return Network.from_arrays(idx.size, pos[net.u[keep]], pos[net.v[keep]], net.c[keep], net.loops[idx], labels=labels)


def lazy(net: Network) -> Network:
    """The chain (I + P) / 2 with the same reversible measure."""
    return Network(
        n=net.n, u=net.u, v=net.v, c=net.c / 2.0, loops=net.loops / 2.0 + net.mu / 2.0, labels=net._labels
    )


def random_network(
    n: int,
    seed: int,
    *,
    extra_edges: float = 1.0,
    low: float = 0.1,
    high: float = 10.0,
    loop_prob: float = 0.0,
) -> Network:
    """
    Seeded random connected network: a random recursive tree plus about
    `extra_edges * n` further edges, conductances uniform in [low, high].
    """
    rng = np.random.default_rng(seed)
    pairs: set[tuple[int, int]] = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        pairs.add((min(a, b), max(a, b)))
    target = len(pairs) + int(extra_edges * n)
    max_pairs = n * (n - 1) // 2
    while len(pairs) < min(target, max_pairs):
        a, b = (int(t) for t in rng.integers(0, n, size=2))
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    ordered = sorted(pairs)
    u = np.array([p[0] for p in ordered], dtype=np.int64)
    v = np.array([p[1] for p in ordered], dtype=np.int64)
    c = rng.uniform(low, high, size=len(ordered))
    loops = np.where(rng.random(n) < loop_prob, rng.uniform(low, high, size=n), 0.0)
    return Network.from_arrays(n, u, v, c, loops)
