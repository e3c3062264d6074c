"""Matrices ``A`` and ``B`` of the average information weight recursion.

Flat index layout is encoder-state major: ``index = sigma * M + j`` where
``j`` is the metric state index. For every (metric state ``j``, received
tuple ``r``) with successor ``k`` and every destination encoder state
``s'`` whose tied survivors are ``(s_i, beta_i), i = 1..kappa``::

    A[(s_i, j), (s', k)] += P(r) / kappa
    B[(s_i, j), (s', k)] += beta_i * P(r) / kappa
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .linalg import RowMatrix
from .metricgraph import MetricGraph
from .scalar import Backend, Poly, Rational, mpq

__all__ = ["WeightSystem", "assemble", "column_block_check", "block"]


@dataclass
class WeightSystem:
    A: object  # RowMatrix (exact backends) or csr_matrix (numeric)
    B: object
    M: int
    sigma: int
    b: int
    backend: Backend

    @property
    def n(self) -> int:
        return self.M * self.sigma

    def index(self, state: int, metric_index: int) -> int:
        return state * self.M + metric_index


def _tie_arrays(g: MetricGraph):
    """Flattened (row, col, r, weight, beta) arrays for every decided branch."""
    t = g.tables
    M, R, S, K = g.M, t.R, t.S, t.K
    bits = ((g.tiemask[..., None] >> np.arange(K, dtype=np.uint8)) & 1).astype(bool)  # (M,R,S,K)
    kappa = bits.sum(axis=3)  # (M,R,S)
    jj, rr, ss, kk = np.nonzero(bits)
    src = t.inc_src[ss, kk]
    rows = src * M + jj
    cols = ss * M + g.succ[jj, rr]
    return rows, cols, rr, kappa[jj, rr, ss], t.inc_beta[ss, kk]


def assemble(g: MetricGraph, backend: Backend) -> WeightSystem:
    """Build ``A`` and ``B`` from the decision records of ``g``."""
    fsm = g.fsm
    M, S = g.M, fsm.num_states
    n = M * S
    rows, cols, rr, kappa, beta = _tie_arrays(g)
    if not backend.exact:
        probs = np.array(g.channel.tuple_probs(fsm.c, backend), dtype=float)
        va = probs[rr] / kappa
        A = csr_matrix((va, (rows, cols)), shape=(n, n))
        B = csr_matrix((va * beta, (rows, cols)), shape=(n, n))
        A.sum_duplicates()
        B.sum_duplicates()
        return WeightSystem(A, B, M, S, fsm.b, backend)

    polys = g.channel.tuple_probs_poly(fsm.c)
    # accumulate rational weights per (row, col, received tuple) first
    acc_a: dict[tuple[int, int], dict[int, Rational]] = {}
    acc_b: dict[tuple[int, int], dict[int, Rational]] = {}
    inv = {k: mpq(1, k) for k in range(1, 9)}
    for i, j, r, kp, bt in zip(rows.tolist(), cols.tolist(), rr.tolist(), kappa.tolist(), beta.tolist()):
        w = inv[kp]
        da = acc_a.setdefault((i, j), {})
        da[r] = da.get(r, 0) + w
        if bt:
            db = acc_b.setdefault((i, j), {})
            db[r] = db.get(r, 0) + w * bt

    def build(acc) -> RowMatrix:
        out = RowMatrix(n, n)
        for (i, j), terms in acc.items():
            poly = Poly()
            for r, w in terms.items():
                poly = poly + polys[r].scale(w)
            if not poly.is_zero():
                out.rows[i][j] = backend.from_poly(poly)
        return out

    return WeightSystem(build(acc_a), build(acc_b), M, S, fsm.b, backend)


def block(matrix, i: int, j: int, M: int):
    """``M x M`` block ``(i, j)`` as a dense list of lists (``None`` = zero)."""
    if isinstance(matrix, RowMatrix):
        rows = list(range(i * M, (i + 1) * M))
        cols = list(range(j * M, (j + 1) * M))
        sub = matrix.submatrix(rows, cols)
        return [[row.get(k) for k in range(M)] for row in sub.rows]
    return matrix[i * M:(i + 1) * M, j * M:(j + 1) * M].toarray()


def column_block_check(ws: WeightSystem, phi, tol: float = 1e-12) -> dict:
    """Check ``sum_i A_ij == Phi`` for every destination block ``j``.

    Returns ``{"ok": bool, "failures": [...]}``; exact backends compare
    symbolically, the numeric backend with an absolute tolerance.
    """
    M, S = ws.M, ws.sigma
    failures = []
    if isinstance(ws.A, RowMatrix):
        zero = ws.backend.zero()
        for j in range(S):
            sums = [dict() for _ in range(M)]
            for row_idx, row in enumerate(ws.A.rows):
                a = row_idx % M
                for col, v in row.items():
                    if col // M == j:
                        k = col % M
                        sums[a][k] = sums[a].get(k, zero) + v
            for a in range(M):
                keys = set(sums[a]) | set(phi.rows[a])
                for k in keys:
                    if not ws.backend.is_zero(sums[a].get(k, zero) - phi.rows[a].get(k, zero)):
                        failures.append((j, a, k))
        return {"ok": not failures, "failures": failures}
    A = ws.A.tocsr()
    P = csr_matrix(phi)
    worst = 0.0
    for j in range(S):
        acc = csr_matrix((M, M))
        for i in range(S):
            acc = acc + A[i * M:(i + 1) * M, j * M:(j + 1) * M]
        diff = abs(acc - P)
        err = float(diff.max()) if diff.nnz else 0.0
        worst = max(worst, err)
        if err > tol:
            failures.append((j, err))
    return {"ok": not failures, "failures": failures, "max_residual": worst}
