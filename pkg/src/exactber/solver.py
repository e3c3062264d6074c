"""Stationary distribution, right eigenvector of ``A`` and the bit error probability.

With ``p_inf`` the stationary distribution of the metric-state chain,
``b_inf = e_L = (p_inf, ..., p_inf)`` and ``e_R`` the right eigenvector of
``A`` at eigenvalue 1 scaled so that ``e_L . e_R = 1``::

    P_b = b_inf @ B @ e_R / b

Exact backends run sparse elimination over their ring; the numeric backend
uses SuperLU and falls back to a lazy (half-shifted) power iteration.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, diags, identity
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .channel import Dmc
from .encoder import EncoderFSM, check_minimal_usable
from .linalg import RowMatrix, SingularSystemError, sparse_solve
from .metricgraph import DEFAULT_CAP, MetricGraph, closure, phi_matrix, recurrent_classes, support_of
from .scalar import Backend, NumericBackend, RatFn, Series
from .weightsys import WeightSystem, assemble

log = logging.getLogger(__name__)

__all__ = [
    "ReducibleChainError",
    "NonUniqueEigenvectorError",
    "ConvergenceError",
    "NonminimalEncoderError",
    "Solution",
    "stationary",
    "right_eigenvector",
    "exact_pb",
    "analyze",
    "pb_series",
    "pb_numeric",
    "pb_curve",
    "cesaro_pb",
]

DIRECT_LIMIT = 400_000
DIRECT_ROW_NNZ = 8


class ReducibleChainError(ArithmeticError):
    def __init__(self, classes):
        self.classes = classes
        sizes = [len(c) for c in classes]
        super().__init__(f"reducible metric chain: {len(classes)} recurrent classes of sizes {sizes}")


class NonUniqueEigenvectorError(ArithmeticError):
    pass


class ConvergenceError(ArithmeticError):
    pass


class NonminimalEncoderError(ValueError):
    pass


def _is_numeric(backend: Backend) -> bool:
    return not backend.exact


def stationary(phi, backend: Backend):
    """Stationary distribution of the metric chain, zero on transient states."""
    classes = recurrent_classes(support_of(phi, backend), 0)
    if len(classes) != 1:
        raise ReducibleChainError(classes)
    cls = [int(x) for x in classes[0]]
    M = phi.shape[0]
    if _is_numeric(backend):
        P = csr_matrix(phi)[cls][:, cls]
        if _prefer_direct(P):
            x = _pinned_null_vector((P.T - identity(len(cls), format="csr")).tocsc(), 0)
        else:
            x = _stationary_power(P)
        if x is None or not np.all(np.isfinite(x)) or x.sum() <= 0:
            raise ReducibleChainError([np.asarray(cls)])
        out = np.zeros(M)
        out[cls] = x / x.sum()
        return out
    sub = phi.submatrix(cls, cls).transpose()
    one, zero = backend.one(), backend.zero()
    n = len(cls)
    for i in range(n):
        sub.rows[i][i] = sub.rows[i].get(i, zero) - one
        if backend.is_zero(sub.rows[i][i]):
            del sub.rows[i][i]
    sub.rows[0] = {k: one for k in range(n)}
    rhs = [one] + [zero] * (n - 1)
    x = sparse_solve(sub, rhs, backend)
    out = [zero] * M
    for pos, i in enumerate(cls):
        out[i] = x[pos]
    return out


def _core_indices_exact(A: RowMatrix) -> list[int]:
    alive = {i for i, row in enumerate(A.rows) if row}
    while True:
        nxt = {i for i in alive if any(j in alive for j in A.rows[i])}
        if nxt == alive:
            return sorted(alive)
        alive = nxt


def _core_indices_numeric(A: csr_matrix) -> np.ndarray:
    A = csr_matrix(A)
    A.eliminate_zeros()
    alive = np.diff(A.indptr) > 0
    while True:
        hit = A @ alive.astype(float)
        nxt = alive & (hit > 0)
        if np.array_equal(nxt, alive):
            return np.where(alive)[0]
        alive = nxt


def right_eigenvector(ws: WeightSystem, p_inf, *, tol: float = 1e-13, max_iter: int = 100_000):
    """Right eigenvector ``e_R`` of ``A`` at eigenvalue 1 with ``e_L . e_R = 1``.

    All-zero rows (and, repeatedly, rows that only reach removed columns)
    are dropped together with their columns; ``e_R`` is zero there.
    """
    backend = ws.backend
    n, S = ws.n, ws.sigma
    if _is_numeric(backend):
        e_l = np.tile(np.asarray(p_inf, dtype=float), S)
        core = _core_indices_numeric(ws.A)
        if len(core) <= DIRECT_LIMIT and _prefer_direct(ws.A):
            try:
                return _eig_direct_numeric(ws.A, e_l, core)
            except (MemoryError, RuntimeError) as exc:
                log.warning("direct eigenvector solve failed (%s); using power iteration", exc)
        return _eig_power_numeric(ws, e_l, tol=tol, max_iter=max_iter)

    e_l = list(p_inf) * S
    core = _core_indices_exact(ws.A)
    if not core:
        raise NonUniqueEigenvectorError("A has no nonzero core")
    ranks = [(backend.pivot_rank(e_l[i]), i) for i in core]
    ranks = [x for x in ranks if x[0] is not None]
    if not ranks:
        raise NonUniqueEigenvectorError("stationary vector vanishes on the core of A")
    pivot_row = min(ranks)[1]
    sub = ws.A.submatrix(core, core)
    one, zero = backend.one(), backend.zero()
    m = len(core)
    for i in range(m):
        sub.rows[i][i] = sub.rows[i].get(i, zero) - one
        if backend.is_zero(sub.rows[i][i]):
            del sub.rows[i][i]
    pos = core.index(pivot_row)
    sub.rows[pos] = {k: e_l[i] for k, i in enumerate(core) if not backend.is_zero(e_l[i])}
    rhs = [zero] * m
    rhs[pos] = one
    try:
        x = sparse_solve(sub, rhs, backend)
    except SingularSystemError as exc:
        raise NonUniqueEigenvectorError(f"non-unique stationary eigenvector ({exc})") from exc
    out = [zero] * n
    for k, i in enumerate(core):
        out[i] = x[k]
    return out


def _eig_direct_numeric(A, e_l: np.ndarray, core: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    m = len(core)
    sub = csr_matrix(A)[core][:, core]
    weights = e_l[core]
    pos = int(np.argmax(weights))
    if weights[pos] <= 0:
        raise NonUniqueEigenvectorError("stationary vector vanishes on the core of A")
    x = _pinned_null_vector((sub - identity(m, format="csr")).tocsc(), pos)
    scale = float(weights @ x) if x is not None else 0.0
    if x is None or not np.all(np.isfinite(x)) or scale <= 0:
        raise NonUniqueEigenvectorError("non-unique stationary eigenvector (singular core system)")
    out = np.zeros(n)
    out[core] = x / scale
    return out


def _prefer_direct(P) -> bool:
    """Sparse LU only pays off while rows stay short; dense-ish rows fill in badly."""
    return P.nnz <= DIRECT_ROW_NNZ * P.shape[0]


def _stationary_power(P, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    """Lazy power iteration ``x <- (x + x P) / 2`` (safe for periodic chains)."""
    PT = csr_matrix(P.T)
    x = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        y = 0.5 * (x + PT @ x)
        if np.abs(y - x).sum() < tol:
            return y
        x = y
    raise ConvergenceError(f"stationary power iteration did not converge in {max_iter} steps")


def _pinned_null_vector(T, pos: int) -> np.ndarray | None:
    """Solve ``T x = 0`` with ``x[pos] = 1`` by dropping equation ``pos``.

    Keeps the system sparse (replacing a row by a normalization row would
    make it dense and ruin the LU fill). Returns ``None`` if singular.
    """
    m = T.shape[0]
    keep = np.r_[0:pos, pos + 1:m]
    x = np.zeros(m)
    x[pos] = 1.0
    if m == 1:
        return x
    T = T.tocsc()
    rhs = -np.asarray(T[keep][:, [pos]].toarray()).ravel()
    red = T[keep][:, keep].tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x[keep] = np.atleast_1d(spsolve(red, rhs))
        except (MatrixRankWarning, RuntimeError):
            return None
    return x


def _eig_power_numeric(ws: WeightSystem, e_l: np.ndarray, *, tol: float, max_iter: int) -> np.ndarray:
    A = csr_matrix(ws.A)
    M = ws.M
    x = np.zeros(ws.n)
    x[:M] = 1.0  # extraction vector; e_L . x = sum(p_inf) = 1 and A^t x -> e_R
    for it in range(max_iter):
        ax = A @ x
        res = float(np.abs(ax - x).max())
        if res < tol:
            break
        x = 0.5 * (x + ax)
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps (residual {res:.3g})")
    return x / float(e_l @ x)


def exact_pb(ws: WeightSystem, p_inf, e_r):
    """``P_b = b_inf B e_R / b``."""
    backend = ws.backend
    if _is_numeric(backend):
        b_inf = np.tile(np.asarray(p_inf, dtype=float), ws.sigma)
        return float(b_inf @ (csr_matrix(ws.B) @ np.asarray(e_r, dtype=float))) / ws.b
    zero = backend.zero()
    y = ws.B.matvec(e_r, zero)
    acc = zero
    M = ws.M
    for i, yi in enumerate(y):
        if backend.is_zero(yi):
            continue
        w = p_inf[i % M]
        if not backend.is_zero(w):
            acc = acc + w * yi
    return acc / backend.from_rational(ws.b)


@dataclass
class Solution:
    M: int
    sigma: int
    backend: Backend
    p_inf: object
    e_r: object
    pb: object
    graph: MetricGraph | None = field(default=None, repr=False)
    weights: WeightSystem | None = field(default=None, repr=False)
    phi: object = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def b_inf(self):
        if isinstance(self.p_inf, np.ndarray):
            return np.tile(self.p_inf, self.sigma)
        return list(self.p_inf) * self.sigma

    def to_json(self) -> dict:
        be = self.backend
        out = {"M": self.M, "sigma": self.sigma, "backend": be.name}
        if isinstance(be, NumericBackend):
            out["p"] = be.p
        if hasattr(be, "order"):
            out["order"] = be.order
        out["pb"] = be.to_json(self.pb)
        if self.M <= 64:
            out["p_inf"] = [be.to_json(x) for x in self.p_inf]
        else:
            vec = np.asarray([float(x) if not isinstance(x, (RatFn, Series)) else np.nan for x in self.p_inf])
            out["p_inf_summary"] = {"nonzero": int(np.count_nonzero(vec)) if be.name == "numeric" else None}
        return out


def analyze(fsm: EncoderFSM, channel: Dmc, backend: Backend, *, cap: int = DEFAULT_CAP,
            expect_states: int | None = None, allow_nonminimal: bool = False,
            graph: MetricGraph | None = None) -> Solution:
    """Full pipeline: closure, chain, weight system, eigenvector, ``P_b``."""
    warning = check_minimal_usable(fsm, expect_states)
    if warning and not allow_nonminimal:
        raise NonminimalEncoderError(warning + " (use allow_nonminimal to override)")
    timings = {}
    t0 = time.perf_counter()
    g = graph if graph is not None else closure(fsm, channel, cap=cap)
    timings["closure"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    phi = phi_matrix(g, backend)
    p_inf = stationary(phi, backend)
    timings["stationary"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    ws = assemble(g, backend)
    timings["assemble"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    e_r = right_eigenvector(ws, p_inf)
    pb = exact_pb(ws, p_inf, e_r)
    timings["eigen"] = time.perf_counter() - t0
    return Solution(g.M, fsm.num_states, backend, p_inf, e_r, pb, g, ws, phi, timings)


def pb_series(fsm: EncoderFSM, channel: Dmc, order: int = 10, **kw) -> Series:
    from .scalar import SeriesBackend

    return analyze(fsm, channel, SeriesBackend(order), **kw).pb


def pb_numeric(fsm: EncoderFSM, channel: Dmc, p: float | None = None, **kw) -> float:
    return float(analyze(fsm, channel, NumericBackend(p), **kw).pb)


def pb_curve(fsm: EncoderFSM, channel: Dmc, ps, **kw) -> list[tuple[float, float]]:
    """``P_b`` on a grid of ``p`` reusing one metric-state closure."""
    g = kw.pop("graph", None) or closure(fsm, channel, cap=kw.pop("cap", DEFAULT_CAP))
    out = []
    for p in ps:
        sol = analyze(fsm, channel, NumericBackend(float(p)), graph=g, **kw)
        out.append((float(p), float(sol.pb)))
    return out


def cesaro_pb(ws: WeightSystem, p_inf, steps: int) -> float:
    """Iterate ``w <- w A + b_inf B`` from ``w = 0`` and return ``w(sigma=0) . 1 / (t b)``."""
    A = csr_matrix(ws.A)
    B = csr_matrix(ws.B)
    b_inf = np.tile(np.asarray(p_inf, dtype=float), ws.sigma)
    drive = b_inf @ B
    w = np.zeros(ws.n)
    for _ in range(steps):
        w = w @ A + drive
    return float(w[: ws.M].sum()) / (steps * ws.b)


def cesaro_limit_matrix(A, log2_steps: int = 12, extrapolate: bool = True) -> np.ndarray:
    """``(1/T) sum_{t<T} A^t`` for ``T = 2**log2_steps`` by repeated doubling (dense).

    The mean approaches ``A^inf`` like ``Z / T``; with ``extrapolate`` the
    ``1/T`` term is cancelled by ``2 S_T - S_{T/2}``. Rounding in the squared
    powers grows roughly like ``T`` times machine epsilon, so long runs
    without extrapolation do not buy accuracy.
    """
    P = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    S = np.eye(P.shape[0])
    prev = S
    for _ in range(log2_steps):
        # S_{2T} = (S_T + P^T S_T) / 2
        prev, S = S, 0.5 * (S + P @ S)
        P = P @ P
    return 2.0 * S - prev if extrapolate else S


def residual_left(e_l: np.ndarray, A) -> float:
    return float(np.abs(e_l @ csr_matrix(A) - e_l).max())


def scale_rows(A, v):
    return diags(v) @ A
