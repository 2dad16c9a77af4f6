"""Exchange networks: construction, edge-list I/O and graph queries.

Agents are indexed ``0..n-1``. Every network is undirected, has no
self-loops and no isolated agents. Trade couplings follow from degree
normalisation alone: agent ``j`` spends its wealth evenly over its
``k_j`` neighbours, so ``J[i, j] = 1 / k_j`` when ``i`` neighbours ``j``.

Complete graphs are stored implicitly (no adjacency lists), which keeps
``complete(10_000)`` cheap for Monte-Carlo runs.
"""

from __future__ import annotations

import io
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .exceptions import (
    CapacityError,
    DisconnectedNetworkError,
    EdgeListError,
    InvalidPairError,
    InvalidSizeError,
)

#: Hard cap on agents for Monte-Carlo simulation.
MAX_AGENTS = 10_000
#: Hard cap on agents for dense pair-moment ODEs (O(N^2) state).
MAX_MOMENT_AGENTS = 2_000
#: Largest complete graph whose adjacency is ever materialised explicitly.
MAX_DENSE_COMPLETE = 4_000


class ExchangeNetwork:
    """Immutable undirected exchange graph.

    Parameters
    ----------
    n_agents : int
    indptr, indices : ndarray or None
        CSR adjacency (sorted neighbour lists). Both ``None`` means the
        complete graph on ``n_agents``.
    name : str
        Descriptor such as ``"ring:10"``; used in manifests and CSV headers.

    Use the ``build_*`` helpers or :func:`load_edge_list` rather than
    calling the constructor directly.
    """

    def __init__(self, n_agents, indptr=None, indices=None, name="custom"):
        self._n = int(n_agents)
        self.name = name
        if indptr is None:
            self._indptr = self._indices = None
            self._degrees = np.full(self._n, self._n - 1, dtype=np.int64)
        else:
            self._indptr = np.asarray(indptr, dtype=np.int64)
            self._indices = np.asarray(indices, dtype=np.int64)
            self._indptr.setflags(write=False)
            self._indices.setflags(write=False)
            self._degrees = np.diff(self._indptr)
        self._degrees.setflags(write=False)

    def __repr__(self):
        return f"ExchangeNetwork({self.name!r}, n_agents={self._n}, avg_degree={self.avg_degree:g})"

    def __eq__(self, other):
        if not isinstance(other, ExchangeNetwork):
            return NotImplemented
        if self._n != other._n:
            return False
        if self.is_complete and other.is_complete:
            return True
        a, b = self._csr_arrays(), other._csr_arrays()
        return np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    __hash__ = None

    @property
    def n_agents(self) -> int:
        return self._n

    @property
    def is_complete(self) -> bool:
        if self._indptr is None:
            return True
        return bool(np.all(self._degrees == self._n - 1))

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @property
    def avg_degree(self) -> float:
        """Average degree ``z``; exact mean of the degree sequence."""
        return float(self._degrees.sum()) / self._n

    def neighbours(self, i: int) -> frozenset:
        self._check_agent(i)
        if self._indptr is None:
            return frozenset(j for j in range(self._n) if j != i)
        return frozenset(self._indices[self._indptr[i]:self._indptr[i + 1]].tolist())

    @property
    def adjacency(self) -> tuple:
        """Per-agent neighbour sets."""
        if self._indptr is None:
            self._guard_dense()
        return tuple(self.neighbours(i) for i in range(self._n))

    def edges(self):
        """Yield each undirected edge once as ``(i, j)`` with ``i < j``."""
        indptr, indices = self._csr_arrays()
        for i in range(self._n):
            for j in indices[indptr[i]:indptr[i + 1]]:
                if i < j:
                    yield i, int(j)

    @property
    def n_edges(self) -> int:
        return int(self._degrees.sum()) // 2

    def _check_agent(self, i):
        if not 0 <= i < self._n:
            raise IndexError(f"agent index {i} out of range for {self._n} agents")

    def _guard_dense(self):
        if self._n > MAX_DENSE_COMPLETE:
            raise CapacityError(
                f"refusing to materialise complete graph adjacency for {self._n} agents "
                f"(cap {MAX_DENSE_COMPLETE})"
            )

    def _csr_arrays(self):
        if self._indptr is not None:
            return self._indptr, self._indices
        self._guard_dense()
        n = self._n
        indptr = np.arange(n + 1, dtype=np.int64) * (n - 1)
        cols = np.tile(np.arange(n, dtype=np.int64), (n, 1))
        indices = cols[~np.eye(n, dtype=bool)]
        return indptr, indices

    @cached_property
    def adjacency_matrix(self) -> sp.csr_matrix:
        indptr, indices = self._csr_arrays()
        data = np.ones(len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(self._n, self._n))

    @cached_property
    def transfer_matrix(self) -> sp.csr_matrix:
        """Sparse coupling matrix ``J`` with ``J[i, m] = 1/k_m`` for neighbours.

        ``(J @ v)[i]`` is the neighbour-weighted wealth received by agent
        ``i``; every column sums to one.
        """
        return (self.adjacency_matrix @ sp.diags(1.0 / self._degrees)).tocsr()

    @cached_property
    def is_connected(self) -> bool:
        if self._indptr is None:
            return True
        n_comp, _ = csgraph.connected_components(self.adjacency_matrix, directed=False)
        return n_comp == 1

    def require_connected(self):
        if not self.is_connected:
            raise DisconnectedNetworkError(
                f"network {self.name!r} is disconnected; wealth cannot circulate between components"
            )

    def to_edge_list(self) -> str:
        """Serialise in the same text format :func:`load_edge_list` reads."""
        lines = [f"# {self.name} n_agents={self._n}"]
        lines.extend(f"{i} {j}" for i, j in self.edges())
        return "\n".join(lines) + "\n"


def _from_edges(n: int, edges: Iterable[tuple[int, int]], name: str) -> ExchangeNetwork:
    neighbours = [set() for _ in range(n)]
    for i, j in edges:
        neighbours[i].add(j)
        neighbours[j].add(i)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in neighbours])
    indices = np.fromiter(
        (j for s in neighbours for j in sorted(s)), dtype=np.int64, count=int(indptr[-1])
    )
    return ExchangeNetwork(n, indptr, indices, name=name)


def build_complete(n: int) -> ExchangeNetwork:
    if n < 2:
        raise InvalidSizeError(f"complete network needs n >= 2, got {n}")
    if n > MAX_AGENTS:
        raise CapacityError(f"n={n} exceeds the agent cap {MAX_AGENTS}")
    return ExchangeNetwork(n, name=f"complete:{n}")


def build_ring(n: int) -> ExchangeNetwork:
    if n < 3:
        raise InvalidSizeError(f"ring network needs n >= 3, got {n}")
    if n > MAX_AGENTS:
        raise CapacityError(f"n={n} exceeds the agent cap {MAX_AGENTS}")
    return _from_edges(n, ((i, (i + 1) % n) for i in range(n)), name=f"ring:{n}")


def build_star(n: int) -> ExchangeNetwork:
    """Agent 0 is the hub; agents ``1..n-1`` are leaves."""
    if n < 2:
        raise InvalidSizeError(f"star network needs n >= 2, got {n}")
    if n > MAX_AGENTS:
        raise CapacityError(f"n={n} exceeds the agent cap {MAX_AGENTS}")
    return _from_edges(n, ((0, i) for i in range(1, n)), name=f"star:{n}")


def load_edge_list(source, name: str = "custom") -> ExchangeNetwork:
    """Parse ``"i j"`` lines of 0-based agent indices.

    ``source`` may be a str, bytes, or a text/binary file object. Blank
    lines and ``#`` comments are ignored, duplicate edges collapse, and
    the agent count is one more than the largest index seen.
    """
    if isinstance(source, bytes):
        source = source.decode()
    if isinstance(source, str):
        source = io.StringIO(source)

    edges = set()
    n = 0
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode()
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"expected two agent indices, got {raw.strip()!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"unparsable agent index in {raw.strip()!r}", lineno) from None
        if i < 0 or j < 0:
            raise EdgeListError(f"negative agent index in {raw.strip()!r}", lineno)
        if i == j:
            raise EdgeListError(f"self-loop on agent {i}", lineno)
        edges.add((min(i, j), max(i, j)))
        n = max(n, i + 1, j + 1)

    if not edges:
        raise EdgeListError("edge list contains no edges")
    if n > MAX_AGENTS:
        raise CapacityError(f"edge list has {n} agents, cap is {MAX_AGENTS}")
    net = _from_edges(n, sorted(edges), name=name)
    isolated = np.flatnonzero(net.degrees == 0)
    if isolated.size:
        raise EdgeListError(f"isolated agent(s) after load: {isolated[:10].tolist()}")
    return net


def from_descriptor(desc: str) -> ExchangeNetwork:
    """Build a network from ``complete:N``, ``ring:N``, ``star:N`` or ``file:PATH``."""
    kind, _, arg = desc.partition(":")
    if not arg:
        raise ValueError(f"network descriptor {desc!r} must look like KIND:ARG")
    if kind == "file":
        with open(arg) as fh:
            return load_edge_list(fh, name=desc)
    builders = {"complete": build_complete, "ring": build_ring, "star": build_star}
    if kind not in builders:
        raise ValueError(f"unknown network kind {kind!r}")
    try:
        n = int(arg)
    except ValueError:
        raise ValueError(f"network size {arg!r} is not an integer") from None
    return builders[kind](n)


def coupling(net: ExchangeNetwork, i: int, j: int) -> float:
    """Rate at which agent ``j``'s wealth flows to agent ``i``."""
    if i == j:
        raise InvalidPairError("coupling is undefined for i == j")
    net._check_agent(i)
    net._check_agent(j)
    if net._indptr is None:
        return 1.0 / (net.n_agents - 1)
    row = net._indices[net._indptr[j]:net._indptr[j + 1]]
    idx = np.searchsorted(row, i)
    if idx < len(row) and row[idx] == i:
        return 1.0 / net.degrees[j]
    return 0.0


def stationary_wealth(net: ExchangeNetwork) -> np.ndarray:
    """Expected stationary wealths ``k_i / z`` (mean exactly one)."""
    net.require_connected()
    return net.degrees / net.avg_degree


def stationary_residual(net: ExchangeNetwork, wealth) -> float:
    """Max-norm residual of ``w_i - sum_{m in N_i} w_m / k_m``."""
    w = np.asarray(wealth, dtype=float)
    if net.is_complete:
        received = (w.sum() - w) / (net.n_agents - 1)
    else:
        received = net.transfer_matrix @ w
    return float(np.max(np.abs(w - received)))


def shortest_path_lengths(net: ExchangeNetwork) -> np.ndarray:
    """Dense hop-distance matrix (int). Unweighted BFS from every source."""
    n = net.n_agents
    if net.is_complete:
        return np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    dist = csgraph.shortest_path(net.adjacency_matrix, method="D", directed=False, unweighted=True)
    if np.isinf(dist).any():
        i, j = np.argwhere(np.isinf(dist))[0]
        raise DisconnectedNetworkError(f"agents {i} and {j} are unreachable from each other")
    return dist.astype(np.int64)
