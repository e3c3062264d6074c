"""Closure of normalized cumulative metric states under one Viterbi step.

Starting from the all-zero metric vector, every reachable normalized metric
vector ``phi = mu[1:] - mu[0]`` is enumerated by breadth-first search over
all received tuples. For each (metric state, received tuple) the successor
metric state and, for every destination encoder state, the set of tied
surviving branches are recorded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .channel import Dmc
from .encoder import EncoderFSM, trellis
from .linalg import RowMatrix
from .scalar import Backend, Poly

log = logging.getLogger(__name__)

DEFAULT_CAP = 5_000_000

__all__ = [
    "ClosureCapError",
    "TrellisTables",
    "StepRecord",
    "MetricGraph",
    "viterbi_step",
    "closure",
    "phi_matrix",
    "recurrent_classes",
    "DEFAULT_CAP",
]


class ClosureCapError(RuntimeError):
    def __init__(self, cap: int, found: int, frontier: int, what: str = "metric states"):
        self.cap = cap
        self.found = found
        self.frontier = frontier
        super().__init__(
            f"metric state closure exceeded the cap of {cap} {what} "
            f"({found} states discovered, frontier size {frontier})"
        )


class TrellisTables:
    """Incoming-branch tables of an encoder plus branch metrics for a channel.

    ``inc_src[s, k]`` is the source state of the ``k``-th branch entering
    ``s``; ``bm[s, k, r]`` its metric for received tuple index ``r``.
    """

    def __init__(self, fsm: EncoderFSM, channel: Dmc):
        self.fsm = fsm
        self.channel = channel
        S = fsm.num_states
        incoming: list[list] = [[] for _ in range(S)]
        for br in trellis(fsm):
            incoming[br.dst].append(br)
        K = max(len(x) for x in incoming)
        if any(len(x) != K for x in incoming):
            raise ValueError("encoder states must all have the same number of incoming branches")
        self.S, self.K = S, K
        self.incoming = incoming
        self.inc_src = np.array([[br.src for br in x] for x in incoming], dtype=np.int64)
        self.inc_out = np.array([[br.output for br in x] for x in incoming], dtype=np.int64)
        self.inc_beta = np.array([[br.beta for br in x] for x in incoming], dtype=np.int64)
        self.inc_inp = np.array([[br.inp for br in x] for x in incoming], dtype=np.int64)
        c, L = fsm.c, channel.levels
        self.c, self.L = c, L
        self.R = L ** c
        table = channel.metric_table()
        rx = np.array(channel.received_tuples(c), dtype=np.int64).reshape(self.R, c)
        out_bits = np.array([fsm.output_bits(v) for v in range(1 << c)], dtype=np.int64)
        # branch metric of every output pattern against every received tuple
        bm_all = np.zeros((1 << c, self.R), dtype=np.int64)
        for i in range(c):
            bm_all += table[out_bits[:, i][:, None], rx[:, i][None, :]]
        self.bm_pattern = bm_all
        self.bm = bm_all[self.inc_out]  # (S, K, R)
        self.received = [tuple(r) for r in rx]
        self.max_symbol_metric = int(np.abs(table).max()) or 1


def viterbi_step(phi, r, fsm: EncoderFSM, channel: Dmc):
    """One add-compare-select step from normalized metrics ``phi``.

    Returns ``(phi_next, decisions)`` where ``decisions[s]`` lists the tied
    surviving branches into state ``s`` as ``(src, beta)`` pairs.
    """
    mu = [0] + [int(x) for x in phi]
    S = fsm.num_states
    best = [None] * S
    dec: list[list[tuple[int, int]]] = [[] for _ in range(S)]
    for br in trellis(fsm):
        m = mu[br.src] + channel.branch_metric(fsm.output_bits(br.output), r)
        if best[br.dst] is None or m > best[br.dst]:
            best[br.dst] = m
            dec[br.dst] = [(br.src, br.beta)]
        elif m == best[br.dst]:
            dec[br.dst].append((br.src, br.beta))
    new = tuple(best[s] - best[0] for s in range(1, S))
    return new, dec


@dataclass
class StepRecord:
    from_index: int
    received: tuple[int, ...]
    to_index: int
    decisions: dict[int, list[tuple[int, int]]]
    prob: object = None

    @property
    def tie_counts(self) -> dict[int, int]:
        return {s: len(v) for s, v in self.decisions.items()}


class MetricGraph:
    """Metric states with per-(state, received tuple) successors and decisions."""

    def __init__(self, tables: TrellisTables, states: np.ndarray, succ: np.ndarray, tiemask: np.ndarray):
        self.tables = tables
        self.states = states
        self.succ = succ
        self.tiemask = tiemask

    @property
    def fsm(self) -> EncoderFSM:
        return self.tables.fsm

    @property
    def channel(self) -> Dmc:
        return self.tables.channel

    @property
    def M(self) -> int:
        return len(self.states)

    def index_of(self, phi) -> int:
        target = np.asarray(phi, dtype=np.int64)
        hits = np.where((self.states == target).all(axis=1))[0]
        if not len(hits):
            raise KeyError(f"metric state {tuple(phi)} not in graph")
        return int(hits[0])

    def decisions(self, j: int, r: int) -> dict[int, list[tuple[int, int]]]:
        t = self.tables
        out = {}
        for s in range(t.S):
            mask = int(self.tiemask[j, r, s])
            out[s] = [(int(t.inc_src[s, k]), int(t.inc_beta[s, k])) for k in range(t.K) if mask >> k & 1]
        return out

    def records(self, probs: list | None = None) -> Iterator[StepRecord]:
        for j in range(self.M):
            for r in range(self.tables.R):
                yield StepRecord(
                    j,
                    self.tables.received[r],
                    int(self.succ[j, r]),
                    self.decisions(j, r),
                    None if probs is None else probs[r],
                )

    def to_json(self, backend: Backend | None = None) -> dict:
        probs = None
        if backend is not None:
            probs = self.channel.tuple_probs(self.fsm.c, backend)
        edges = []
        for rec in self.records(probs):
            e = {
                "from": rec.from_index,
                "received": "".join(str(x) for x in rec.received),
                "to": rec.to_index,
                "decisions": {str(s): [list(x) for x in v] for s, v in rec.decisions.items()},
            }
            if probs is not None:
                p = rec.prob
                e["prob"] = str(p) if backend.exact else float(p)
            edges.append(e)
        return {
            "M": self.M,
            "num_states": self.tables.S,
            "states": [[int(x) for x in row] for row in self.states],
            "edges": edges,
        }

    def to_dot(self, max_states: int = 64) -> str:
        if self.M > max_states:
            raise ValueError(f"DOT output is limited to {max_states} metric states (M={self.M})")
        lines = ["digraph metric_states {", "  rankdir=LR;"]
        for j, row in enumerate(self.states):
            label = " ".join(str(int(x)) for x in row)
            lines.append(f'  s{j} [label="{label}"];')
        pairs: dict[tuple[int, int], list[str]] = {}
        for j in range(self.M):
            for r in range(self.tables.R):
                k = int(self.succ[j, r])
                pairs.setdefault((j, k), []).append("".join(map(str, self.tables.received[r])))
        for (j, k), rs in sorted(pairs.items()):
            lines.append(f'  s{j} -> s{k} [label="{",".join(rs)}"];')
        lines.append("}")
        return "\n".join(lines)


def closure(fsm: EncoderFSM, channel: Dmc, cap: int = DEFAULT_CAP, phi_bound: int | None = None,
            batch: int = 4096) -> MetricGraph:
    """Breadth-first enumeration of metric states reachable from ``phi = 0``.

    States are indexed in discovery order; received tuples are visited in
    lexicographic order. Raises :class:`ClosureCapError` when more than
    ``cap`` states appear or a metric exceeds ``phi_bound`` in magnitude
    (default ``64 * c`` times the largest symbol metric).
    """
    t = TrellisTables(fsm, channel)
    S, K, R = t.S, t.K, t.R
    if phi_bound is None:
        phi_bound = 64 * t.c * t.max_symbol_metric
    if t.K > 8:
        raise ValueError("at most 8 branches per state are supported (b <= 3)")
    bm = t.bm.transpose(2, 0, 1)  # (R, S, K)
    weights = (1 << np.arange(K, dtype=np.uint8)).astype(np.uint8)

    zero = np.zeros(S - 1, dtype=np.int64)
    index = {zero.tobytes(): 0}
    store = [zero]
    succ_parts, mask_parts = [], []
    done = 0
    while done < len(store):
        hi = min(len(store), done + batch)
        F = np.stack(store[done:hi])
        n = len(F)
        mu = np.concatenate([np.zeros((n, 1), dtype=np.int64), F], axis=1)
        cand = mu[:, t.inc_src][:, None, :, :] + bm[None, :, :, :]  # (n, R, S, K)
        best = cand.max(axis=3)
        ties = cand == best[..., None]
        mask = (ties.astype(np.uint8) * weights).sum(axis=3, dtype=np.uint8)
        nxt = best[..., 1:] - best[..., :1]
        if np.abs(nxt).max(initial=0) > phi_bound:
            raise ClosureCapError(phi_bound, len(store), len(store) - done, what="(metric magnitude bound)")
        flat = np.ascontiguousarray(nxt.reshape(n * R, S - 1))
        ids = np.empty(n * R, dtype=np.int64)
        for i in range(n * R):
            key = flat[i].tobytes()
            k = index.get(key)
            if k is None:
                k = len(store)
                index[key] = k
                store.append(flat[i].copy())
                if k >= cap:
                    raise ClosureCapError(cap, len(store), len(store) - done)
            ids[i] = k
        succ_parts.append(ids.reshape(n, R))
        mask_parts.append(mask)
        done = hi
        if done % (batch * 16) == 0:
            log.info("closure: %d states expanded, %d discovered", done, len(store))
    states = np.stack(store)
    succ = np.concatenate(succ_parts).astype(np.int64)
    tiemask = np.concatenate(mask_parts)
    return MetricGraph(t, states, succ, tiemask)


def phi_matrix(g: MetricGraph, backend: Backend):
    """Transition matrix of the metric-state chain.

    Exact backends get a :class:`RowMatrix` of scalars; the numeric backend a
    ``scipy.sparse.csr_matrix``.
    """
    M, R, c = g.M, g.tables.R, g.fsm.c
    if backend.exact:
        polys = g.channel.tuple_probs_poly(c)
        acc: list[dict[int, Poly]] = [dict() for _ in range(M)]
        for j in range(M):
            row = acc[j]
            for r in range(R):
                k = int(g.succ[j, r])
                row[k] = row[k] + polys[r] if k in row else polys[r]
        out = RowMatrix(M, M)
        for j in range(M):
            out.rows[j] = {k: backend.from_poly(v) for k, v in acc[j].items() if not v.is_zero()}
        return out
    probs = np.array(g.channel.tuple_probs(c, backend), dtype=float)
    rows = np.repeat(np.arange(M), R)
    cols = g.succ.ravel()
    vals = np.tile(probs, M)
    return csr_matrix((vals, (rows, cols)), shape=(M, M))


def recurrent_classes(support: csr_matrix, start: int = 0) -> list[np.ndarray]:
    """Closed strongly connected classes reachable from ``start``."""
    n = support.shape[0]
    support = csr_matrix((np.ones(support.nnz), support.indices, support.indptr), shape=(n, n))
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    todo = [start]
    while todo:
        i = todo.pop()
        for j in support.indices[support.indptr[i]:support.indptr[i + 1]]:
            if not seen[j]:
                seen[j] = True
                todo.append(j)
    ncomp, labels = connected_components(support, directed=True, connection="strong")
    closed = np.ones(ncomp, dtype=bool)
    coo = support.tocoo()
    crossing = labels[coo.row] != labels[coo.col]
    closed[labels[coo.row[crossing]]] = False
    out = []
    for comp in np.unique(labels[seen]):
        if closed[comp]:
            out.append(np.where(labels == comp)[0])
    return out


def support_of(matrix, backend: Backend) -> csr_matrix:
    if isinstance(matrix, RowMatrix):
        rows, cols = [], []
        for i, j, v in matrix.items():
            if not backend.is_zero(v):
                rows.append(i)
                cols.append(j)
        n = matrix.n_rows
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, matrix.n_cols))
    m = csr_matrix(matrix)
    m.eliminate_zeros()
    return m


def graph_json(g: MetricGraph, backend: Backend | None = None) -> str:
    return json.dumps(g.to_json(backend), indent=1)
