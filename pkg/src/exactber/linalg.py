"""Sparse matrices and elimination over the exact scalar rings.

Only what the solver needs: row-dict storage, products with vectors, and a
Markowitz-style sparse Gaussian elimination whose pivot admissibility is
decided by the backend (any nonzero rational function, a series with a
nonzero constant term, or a nonzero float).
"""

from __future__ import annotations

from typing import Iterable

from .scalar import Backend

__all__ = ["SingularSystemError", "RowMatrix", "sparse_solve"]


class SingularSystemError(ArithmeticError):
    pass


class RowMatrix:
    """Sparse matrix stored as one ``{col: value}`` dict per row."""

    def __init__(self, n_rows: int, n_cols: int, rows: list[dict] | None = None):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.rows: list[dict] = rows if rows is not None else [dict() for _ in range(n_rows)]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def get(self, i: int, j: int, default=None):
        return self.rows[i].get(j, default)

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def items(self) -> Iterable[tuple[int, int, object]]:
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                yield i, j, v

    def transpose(self) -> "RowMatrix":
        out = RowMatrix(self.n_cols, self.n_rows)
        for i, j, v in self.items():
            out.rows[j][i] = v
        return out

    def matvec(self, x: list, zero):
        """``M @ x`` (x as a column)."""
        out = []
        for row in self.rows:
            acc = zero
            for j, v in row.items():
                xj = x[j]
                if xj is not None and not _is_zero(xj):
                    acc = acc + v * xj
            out.append(acc)
        return out

    def vecmat(self, x: list, zero):
        """``x @ M`` (x as a row)."""
        out = [zero] * self.n_cols
        for i, row in enumerate(self.rows):
            xi = x[i]
            if _is_zero(xi):
                continue
            for j, v in row.items():
                out[j] = out[j] + xi * v
        return out

    def dense(self, zero) -> list[list]:
        return [[row.get(j, zero) for j in range(self.n_cols)] for row in self.rows]

    def submatrix(self, rows: list[int], cols: list[int]) -> "RowMatrix":
        col_pos = {c: k for k, c in enumerate(cols)}
        out = RowMatrix(len(rows), len(cols))
        for k, i in enumerate(rows):
            out.rows[k] = {col_pos[j]: v for j, v in self.rows[i].items() if j in col_pos}
        return out


def _is_zero(x) -> bool:
    z = getattr(x, "is_zero", None)
    return z() if z is not None else x == 0


def sparse_solve(M: RowMatrix, rhs: list, backend: Backend) -> list:
    """Solve ``M x = rhs`` for square ``M`` by sparse elimination.

    The pivot is the admissible entry minimizing (backend rank, Markowitz
    cost). Raises :class:`SingularSystemError` when no admissible pivot is
    left, which for series means the system is not invertible over Q[[p]].
    """
    n = M.n_rows
    if M.n_cols != n or len(rhs) != n:
        raise ValueError("sparse_solve needs a square system")
    rows = [dict(r) for r in M.rows]
    b = list(rhs)
    col_rows: dict[int, set[int]] = {}
    for i, row in enumerate(rows):
        for j in row:
            col_rows.setdefault(j, set()).add(i)
    active = set(range(n))
    order: list[tuple[int, int]] = []

    for _ in range(n):
        best = None
        best_key = None
        for i in active:
            row = rows[i]
            for j, v in row.items():
                rank = backend.pivot_rank(v)
                if rank is None:
                    continue
                key = (rank, (len(row) - 1) * (len(col_rows[j]) - 1), i, j)
                if best_key is None or key < best_key:
                    best_key, best = key, (i, j)
        if best is None:
            raise SingularSystemError("no admissible pivot: system is singular over this ring")
        pi, pj = best
        prow = rows[pi]
        piv = prow[pj]
        active.discard(pi)
        for j in prow:
            col_rows[j].discard(pi)
        for i in list(col_rows[pj]):
            row = rows[i]
            factor = row[pj] / piv
            for j, v in prow.items():
                if j == pj:
                    continue
                new = row.get(j)
                new = -(factor * v) if new is None else new - factor * v
                if _is_zero(new):
                    if j in row:
                        del row[j]
                        col_rows[j].discard(i)
                else:
                    if j not in row:
                        col_rows[j].add(i)
                    row[j] = new
            del row[pj]
            col_rows[pj].discard(i)
            if not _is_zero(b[pi]):
                b[i] = b[i] - factor * b[pi]
        order.append((pi, pj))

    x: list = [None] * n
    for pi, pj in reversed(order):
        acc = b[pi]
        for j, v in rows[pi].items():
            if j != pj:
                acc = acc - v * x[j]
        x[pj] = acc / rows[pi][pj]
    return x
