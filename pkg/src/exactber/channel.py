"""Channel models: BSC and BPSK over AWGN with a quantized receiver.

Every channel is presented to the rest of the package as a discrete
memoryless channel (:class:`Dmc`) with ``L`` output symbols, the symbol
probabilities given a transmitted 0, and integer metric tables. The Viterbi
decoder maximizes the sum of metrics.

For the BSC the symbol probabilities are symbolic (``q = 1 - p`` and ``p``)
and the metric is the agreement count.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .scalar import Backend, Poly

__all__ = [
    "Dmc",
    "Quantizer",
    "QuantizerError",
    "bsc",
    "bsc_tuple_prob",
    "hamming_metric",
    "awgn_dmc",
    "cutoff_rate",
    "design_quantizer",
    "integer_metrics",
    "uniform_thresholds",
    "noise_sigma",
    "gaussian_tail",
]


class QuantizerError(ValueError):
    pass


def gaussian_tail(x):
    """Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass
class Dmc:
    """Binary-input DMC with ``L`` outputs.

    ``sym_poly`` holds symbolic ``P(j|0)`` (BSC only); ``prob0``/``prob1`` are
    numeric probability vectors (``None`` for a BSC with symbolic ``p``).
    ``metric0[j]``/``metric1[j]`` are the integer metrics of receiving ``j``
    when the branch bit is 0/1.
    """

    levels: int
    metric0: tuple[int, ...]
    metric1: tuple[int, ...]
    prob0: np.ndarray | None = None
    prob1: np.ndarray | None = None
    sym_poly: tuple[Poly, ...] | None = None
    name: str = "dmc"
    p: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.prob0 is not None:
            self.prob0 = np.asarray(self.prob0, dtype=float)
            if self.prob1 is None:
                self.prob1 = self.prob0[::-1].copy()
            self.prob1 = np.asarray(self.prob1, dtype=float)
            for vec in (self.prob0, self.prob1):
                if len(vec) != self.levels or abs(vec.sum() - 1.0) > 1e-12 or (vec < 0).any():
                    raise ValueError("symbol probabilities must be a length-L probability vector")

    @property
    def symbolic(self) -> bool:
        return self.sym_poly is not None

    def metric(self, bit: int, j: int) -> int:
        return self.metric1[j] if bit else self.metric0[j]

    def branch_metric(self, bits, received) -> int:
        return sum(self.metric(v, r) for v, r in zip(bits, received))

    def received_tuples(self, c: int) -> list[tuple[int, ...]]:
        """All received c-tuples in lexicographic order."""
        return list(itertools.product(range(self.levels), repeat=c))

    def tuple_probs_numeric(self, c: int, p: float | None = None) -> np.ndarray:
        """``P(r | all-zero c-tuple)`` for every received tuple, lexicographic order."""
        if self.prob0 is not None:
            vec = self.prob0
        else:
            pp = self.p if p is None else p
            if pp is None:
                raise ValueError("numeric probabilities need a value of p")
            vec = np.array([poly(float(pp)) for poly in self.sym_poly])
        out = np.ones(1)
        for _ in range(c):
            out = np.outer(out, vec).ravel()
        return out

    def tuple_probs_poly(self, c: int) -> list[Poly]:
        if self.sym_poly is None:
            raise ValueError(f"channel {self.name} has no symbolic probabilities")
        out = []
        for r in self.received_tuples(c):
            acc = Poly((1,))
            for j in r:
                acc = acc * self.sym_poly[j]
            out.append(acc)
        return out

    def tuple_probs(self, c: int, backend: Backend) -> list:
        """Received-tuple probabilities as scalars of ``backend``."""
        if backend.exact or (self.sym_poly is not None and getattr(backend, "p", None) is not None):
            return [backend.from_poly(poly) for poly in self.tuple_probs_poly(c)]
        return [backend.from_float(x) for x in self.tuple_probs_numeric(c)]

    def metric_table(self) -> np.ndarray:
        return np.array([self.metric0, self.metric1], dtype=np.int64)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "levels": self.levels,
            "metric0": list(self.metric0),
            "metric1": list(self.metric1),
        }
        if self.prob0 is not None:
            out["prob0"] = [float(x) for x in self.prob0]
        if self.p is not None:
            out["p"] = self.p
        out.update(self.info)
        return out


def bsc(p: float | None = None) -> Dmc:
    """BSC; symbol 0 means the received bit is 0. ``p`` may be left symbolic."""
    q_poly = Poly((1, -1))
    p_poly = Poly((0, 1))
    prob0 = None
    if p is not None:
        p = float(p)
        if not 0.0 <= p <= 0.5:
            raise ValueError("crossover probability must lie in [0, 1/2]")
        prob0 = np.array([1.0 - p, p])
    return Dmc(
        levels=2,
        metric0=(1, 0),
        metric1=(0, 1),
        prob0=prob0,
        sym_poly=(q_poly, p_poly),
        name="bsc",
        p=p,
    )


def bsc_tuple_prob(r, c: int, backend: Backend):
    """``p**w (1-p)**(c-w)`` for a received tuple of Hamming weight ``w``."""
    if isinstance(r, int):
        w = bin(r).count("1")
    else:
        w = sum(r)
    poly = Poly((0, 1)) ** w * Poly((1, -1)) ** (c - w)
    return backend.from_poly(poly)


def hamming_metric(v, r) -> int:
    """Number of positions where ``v`` and ``r`` agree."""
    return sum(1 for a, b in zip(v, r) if a == b)


# ----------------------------------------------------------------------------
# Quantized AWGN


def noise_sigma(snr_db: float, rate: float) -> float:
    """Noise std for unit-energy BPSK at the given Eb/N0 (dB) and code rate."""
    return math.sqrt(1.0 / (2.0 * rate * 10.0 ** (snr_db / 10.0)))


def uniform_thresholds(levels: int, delta: float) -> np.ndarray:
    if levels < 2:
        raise QuantizerError("need at least two quantization levels")
    if levels % 2 == 0:
        half = levels // 2 - 1
        ks = np.arange(-half, half + 1, dtype=float)
    else:
        half = (levels - 1) // 2
        pos = np.arange(half, dtype=float) + 0.5
        ks = np.concatenate([-pos[::-1], pos])
    return ks * delta


@dataclass
class Quantizer:
    levels: int
    thresholds: np.ndarray
    method: str
    snr_db: float
    rate: float
    r0: float | None = None
    delta: float | None = None

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        t = self.thresholds
        if len(t) != self.levels - 1:
            raise QuantizerError(f"{self.levels} levels need {self.levels - 1} thresholds")
        if np.any(np.diff(t) <= 0):
            raise QuantizerError("thresholds must be strictly increasing")
        if not np.allclose(t, -t[::-1], atol=1e-12):
            raise QuantizerError("thresholds must be symmetric about 0")

    @property
    def sigma(self) -> float:
        return noise_sigma(self.snr_db, self.rate)

    def quantize(self, y: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.thresholds, y, side="left")

    def to_json(self) -> dict:
        return {
            "levels": self.levels,
            "method": self.method,
            "snr_db": self.snr_db,
            "rate": self.rate,
            "thresholds": [float(x) for x in self.thresholds],
            "r0": self.r0,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "Quantizer":
        return cls(
            levels=int(obj["levels"]),
            thresholds=np.array(obj["thresholds"], dtype=float),
            method=obj["method"],
            snr_db=float(obj["snr_db"]),
            rate=float(obj["rate"]),
            r0=obj.get("r0"),
        )


def _bin_probs(thresholds: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
    tail = gaussian_tail((edges - 1.0) / sigma)
    p0 = tail[:-1] - tail[1:]
    # clip tiny negative round-off and renormalize
    p0 = np.clip(p0, 0.0, None)
    p0 = p0 / p0.sum()
    return p0, p0[::-1].copy()


def awgn_dmc(q: Quantizer, scale: float | None = 4.0) -> Dmc:
    """DMC seen through quantizer ``q``; metrics filled when ``scale`` is given."""
    p0, p1 = _bin_probs(q.thresholds, q.sigma)
    d = Dmc(
        levels=q.levels,
        metric0=tuple([0] * q.levels),
        metric1=tuple([0] * q.levels),
        prob0=p0,
        prob1=p1,
        name=f"awgn-{q.method}{q.levels}",
        info={"snr_db": q.snr_db, "method": q.method, "thresholds": [float(x) for x in q.thresholds]},
    )
    if scale is not None:
        d = integer_metrics(d, scale)
    return d


def _bhattacharyya(p0: np.ndarray, p1: np.ndarray) -> float:
    return float(np.sum(np.sqrt(p0 * p1)))


def cutoff_rate(d: Dmc | tuple[np.ndarray, np.ndarray]) -> float:
    """``R0 = 1 - log2(1 + sum_j sqrt(P(j|0) P(j|1)))`` in bits per channel use."""
    if isinstance(d, Dmc):
        if d.prob0 is None:
            raise ValueError("cutoff rate needs numeric probabilities")
        p0, p1 = d.prob0, d.prob1
    else:
        p0, p1 = d
    return 1.0 - math.log2(1.0 + _bhattacharyya(np.asarray(p0), np.asarray(p1)))


def _r0_of(thresholds: np.ndarray, sigma: float) -> float:
    return cutoff_rate(_bin_probs(thresholds, sigma))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-9) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    x = 0.5 * (a + b)
    return x, f(x)


def design_quantizer(levels: int, snr_db: float, rate: float, method: str = "uniform",
                     max_sweeps: int = 10_000) -> Quantizer:
    """Thresholds maximizing the cutoff rate.

    ``uniform``: golden-section search for the step on ``(0, 4]``.
    ``massey``: coordinate ascent over the positive thresholds, starting from
    the uniform optimum; mirrored thresholds are kept symmetric.
    """
    if not 2 <= levels <= 16:
        raise QuantizerError("levels must be in 2..16")
    sigma = noise_sigma(snr_db, rate)
    if levels == 2:
        t = np.zeros(1)
        return Quantizer(2, t, method, snr_db, rate, r0=_r0_of(t, sigma), delta=0.0)

    delta, r0 = _golden_max(lambda dl: _r0_of(uniform_thresholds(levels, dl), sigma), 1e-9, 4.0)
    uni = uniform_thresholds(levels, delta)
    if method == "uniform":
        return Quantizer(levels, uni, "uniform", snr_db, rate, r0=r0, delta=delta)
    if method != "massey":
        raise QuantizerError(f"unknown quantizer method {method!r}")

    even = levels % 2 == 0
    pos = list(uni[uni > 0])

    def assemble(ps):
        ps = np.asarray(ps)
        mid = [0.0] if even else []
        return np.concatenate([-ps[::-1], mid, ps])

    best = _r0_of(assemble(pos), sigma)
    for _ in range(max_sweeps):
        prev = best
        for i in range(len(pos)):
            lo = pos[i - 1] if i > 0 else 0.0
            hi = pos[i + 1] if i + 1 < len(pos) else pos[i] + 4.0
            eps = 1e-9 * max(1.0, hi - lo)

            def f(x, i=i):
                trial = list(pos)
                trial[i] = x
                return _r0_of(assemble(trial), sigma)

            x, val = _golden_max(f, lo + eps, hi - eps)
            if val > best:
                pos[i], best = x, val
        if best - prev < 1e-12:
            return Quantizer(levels, assemble(pos), "massey", snr_db, rate, r0=best)
    raise QuantizerError(f"massey quantizer did not converge in {max_sweeps} sweeps")


def integer_metrics(d: Dmc, scale: float = 4.0) -> Dmc:
    """Fill integer metric tables ``round(scale * log2 P(j|v))``.

    For each received symbol the larger of the two metrics is shifted to 0;
    a per-symbol shift does not change any Viterbi decision.
    """
    if scale <= 0:
        raise ValueError("metric scale must be positive")
    if d.prob0 is None:
        raise ValueError("integer metrics need numeric probabilities")
    with np.errstate(divide="ignore"):
        m0 = np.round(scale * np.log2(d.prob0))
        m1 = np.round(scale * np.log2(d.prob1))
    floor = -(2 ** 20)
    m0 = np.where(np.isfinite(m0), m0, floor)
    m1 = np.where(np.isfinite(m1), m1, floor)
    top = np.maximum(m0, m1)
    m0 = (m0 - top).astype(int)
    m1 = (m1 - top).astype(int)
    if not np.any(m0 != m1):
        raise ValueError("scale too small: all metrics are equal")
    return Dmc(
        levels=d.levels,
        metric0=tuple(int(x) for x in m0),
        metric1=tuple(int(x) for x in m1),
        prob0=d.prob0,
        prob1=d.prob1,
        sym_poly=d.sym_poly,
        name=d.name,
        p=d.p,
        info={**d.info, "metric_scale": scale},
    )
