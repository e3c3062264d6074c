"""Monte Carlo bit error rate of a streaming Viterbi decoder.

The decoder runs continuously with a sliding traceback (no block
termination) and breaks metric ties uniformly at random, or by the lowest
source state for comparison. Information bits, channel noise and tie coins
come from three independent PCG64 streams spawned from one seed.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .channel import Dmc, Quantizer
from .encoder import EncoderFSM, default_traceback, trellis

__all__ = ["SimConfig", "SimResult", "simulate", "simulate_many", "wilson_interval", "design_effect", "csv_rows"]

TIE_RULES = {"fair-random": 0, "fixed-lowest-state": 1}
CHUNK = 1 << 16


@dataclass
class SimConfig:
    fsm: EncoderFSM
    channel: Dmc
    info_bits: int = 1_000_000
    seed: int = 0
    traceback_depth: int | None = None
    tie_rule: str = "fair-random"
    p: float | None = None  # BSC crossover probability
    quantizer: Quantizer | None = None  # quantized AWGN instead of the BSC
    all_zero_data: bool = False
    encoder_label: str = ""

    def __post_init__(self):
        if self.traceback_depth is None:
            self.traceback_depth = default_traceback(self.fsm)
        if self.info_bits < 10_000:
            raise ValueError("info_bits must be at least 10^4")
        if self.traceback_depth < 5 * (self.fsm.memory + 1):
            raise ValueError("traceback depth must be at least 5 (m + 1)")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {sorted(TIE_RULES)}")
        if self.quantizer is None:
            if self.p is None:
                self.p = self.channel.p
            if self.p is None or not 0.0 <= self.p <= 0.5:
                raise ValueError("BSC simulation needs 0 <= p <= 1/2")


@dataclass
class SimResult:
    errors: int
    bits: int
    ber: float
    ci95: tuple[float, float]
    throughput: float
    seed: int
    design_effect: float = 1.0
    ci95_binomial: tuple[float, float] = field(default=(0.0, 1.0))

    def contains(self, value: float) -> bool:
        return self.ci95[0] <= value <= self.ci95[1]


def wilson_interval(errors: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    phat = errors / n
    den = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / den
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / den
    # the bounds bracket phat exactly; clamping removes round-off at 0 and n
    return min(phat, max(0.0, center - half)), max(phat, min(1.0, center + half))


@numba.njit(cache=True, nogil=True)
def _encode(inputs, next_state, output, state):
    n = inputs.shape[0]
    out = np.empty(n, dtype=np.int64)
    for t in range(n):
        u = inputs[t]
        out[t] = output[state, u]
        state = next_state[state, u]
    return out, state


@numba.njit(cache=True, nogil=True)
def _decode_chunk(rx, metric, inc_src, inc_bits, inc_inp, coins, tie_rule,
                  mu, ring, t0, depth, decided):
    """ACS plus sliding traceback over one chunk.

    ``decided[i]`` receives the input decided for step ``t0 + i - depth + 1``
    (only meaningful once that step is nonnegative).
    """
    T, c = rx.shape
    S, K = inc_src.shape
    new = np.empty(S, dtype=np.int64)
    cand = np.empty(K, dtype=np.int64)
    for i in range(T):
        t = t0 + i
        slot_row = t % depth
        for s in range(S):
            best = -(1 << 62)
            for k in range(K):
                m = mu[inc_src[s, k]]
                for j in range(c):
                    m += metric[inc_bits[s, k, j], rx[i, j]]
                cand[k] = m
                if m > best:
                    best = m
            if tie_rule == 1:
                chosen = -1
                low = S + 1
                for k in range(K):
                    if cand[k] == best and inc_src[s, k] < low:
                        low = inc_src[s, k]
                        chosen = k
            else:
                nt = 0
                for k in range(K):
                    if cand[k] == best:
                        nt += 1
                pick = int(coins[i, s] * nt)
                if pick >= nt:
                    pick = nt - 1
                chosen = -1
                for k in range(K):
                    if cand[k] == best:
                        if pick == 0:
                            chosen = k
                            break
                        pick -= 1
            new[s] = best
            ring[slot_row, s] = chosen
        top = new[0]
        arg = 0
        for s in range(1, S):
            if new[s] > top:
                top = new[s]
                arg = s
        for s in range(S):
            mu[s] = new[s] - top
        # trace back depth steps from the best state
        s = arg
        u = 0
        for d in range(depth):
            if t - d < 0:
                break
            k = ring[(t - d) % depth, s]
            u = inc_inp[s, k]
            s = inc_src[s, k]
        decided[i] = u
    return mu


def _incoming_tables(fsm: EncoderFSM):
    S = fsm.num_states
    incoming: list[list] = [[] for _ in range(S)]
    for br in trellis(fsm):
        incoming[br.dst].append(br)
    K = len(incoming[0])
    inc_src = np.array([[br.src for br in x] for x in incoming], dtype=np.int64)
    inc_inp = np.array([[br.inp for br in x] for x in incoming], dtype=np.int64)
    inc_bits = np.array([[fsm.output_bits(br.output) for br in x] for x in incoming], dtype=np.int64)
    return inc_src, inc_bits.reshape(S, K, fsm.c), inc_inp


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    out = np.zeros_like(x)
    while np.any(x):
        out += x & 1
        x >>= 1
    return out


def simulate(cfg: SimConfig) -> SimResult:
    """Estimate the information bit error rate; deterministic given the seed."""
    fsm = cfg.fsm
    b, c, S = fsm.b, fsm.c, fsm.num_states
    depth = int(cfg.traceback_depth)
    n_steps = -(-cfg.info_bits // b)
    total = n_steps + depth - 1
    data_ss, noise_ss, coin_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_data = np.random.Generator(np.random.PCG64(data_ss))
    rng_noise = np.random.Generator(np.random.PCG64(noise_ss))
    rng_coin = np.random.Generator(np.random.PCG64(coin_ss))

    next_state = np.array(fsm.next_state, dtype=np.int64)
    output = np.array(fsm.output, dtype=np.int64)
    inc_src, inc_bits, inc_inp = _incoming_tables(fsm)
    metric = cfg.channel.metric_table()
    shifts = np.arange(c - 1, -1, -1, dtype=np.int64)

    mu = np.full(S, -(1 << 40), dtype=np.int64)
    mu[0] = 0
    ring = np.zeros((depth, S), dtype=np.int64)
    enc_state = 0
    history = np.zeros(0, dtype=np.int64)  # true inputs not yet compared
    hist_start = 0
    errors = 0
    err_steps: list[np.ndarray] = []
    err_counts: list[np.ndarray] = []

    started = time.perf_counter()
    t0 = 0
    while t0 < total:
        T = min(CHUNK, total - t0)
        if cfg.all_zero_data:
            inputs = np.zeros(T, dtype=np.int64)
        else:
            inputs = rng_data.integers(0, 1 << b, size=T, dtype=np.int64)
        coded, enc_state = _encode(inputs, next_state, output, enc_state)
        bits = (coded[:, None] >> shifts[None, :]) & 1
        if cfg.quantizer is None:
            flips = rng_noise.random((T, c)) < cfg.p
            rx = (bits ^ flips).astype(np.int64)
        else:
            q = cfg.quantizer
            y = (1.0 - 2.0 * bits) + q.sigma * rng_noise.standard_normal((T, c))
            rx = q.quantize(y).astype(np.int64)
        coins = rng_coin.random((T, S))
        decided = np.empty(T, dtype=np.int64)
        mu = _decode_chunk(rx, metric, inc_src, inc_bits, inc_inp, coins,
                           TIE_RULES[cfg.tie_rule], mu, ring, t0, depth, decided)
        history = np.concatenate([history, inputs])
        # decided[i] belongs to step t0 + i - depth + 1
        first_step = t0 - depth + 1
        lo = max(0, -first_step)
        steps = np.arange(first_step + lo, first_step + T)
        keep = steps < n_steps
        steps = steps[keep]
        dec = decided[lo:][keep]
        if len(steps):
            truth = history[steps - hist_start]
            errs = _popcount(dec ^ truth)
            errors += int(errs.sum())
            hit = errs > 0
            err_steps.append(steps[hit])
            err_counts.append(errs[hit])
            drop = int(steps[-1] + 1 - hist_start)
            history = history[drop:]
            hist_start += drop
        t0 += T
    elapsed = time.perf_counter() - started

    n_bits = n_steps * b
    deff = design_effect(np.concatenate(err_steps) if err_steps else np.zeros(0, np.int64),
                         np.concatenate(err_counts) if err_counts else np.zeros(0, np.int64),
                         gap=depth)
    return SimResult(
        errors=errors,
        bits=n_bits,
        ber=errors / n_bits,
        ci95=wilson_interval(errors / deff, n_bits / deff),
        throughput=n_bits / max(elapsed, 1e-9),
        seed=cfg.seed,
        design_effect=deff,
        ci95_binomial=wilson_interval(errors, n_bits),
    )


def design_effect(steps: np.ndarray, counts: np.ndarray, gap: int) -> float:
    """Variance inflation of the error count caused by burst errors.

    Decoding errors arrive as bursts; bits in error closer than ``gap``
    steps are grouped into one burst. Treating the bursts as a compound
    Poisson process gives ``Var = N E[X^2]`` against the binomial ``N E[X]``,
    so the inflation is ``E[X^2] / E[X]`` over burst sizes ``X``.
    """
    if len(steps) == 0:
        return 1.0
    new_burst = np.empty(len(steps), dtype=bool)
    new_burst[0] = True
    new_burst[1:] = np.diff(steps) >= gap
    ids = np.cumsum(new_burst) - 1
    sizes = np.bincount(ids, weights=counts).astype(float)
    return max(1.0, float((sizes ** 2).sum() / sizes.sum()))


def _threads() -> int:
    env = os.environ.get("EXACTBER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_many(cfg: SimConfig, seeds, threads: int | None = None) -> list[SimResult]:
    """Run one simulation per seed; the decoder kernel releases the GIL."""
    from dataclasses import replace

    cfgs = [replace(cfg, seed=int(s)) for s in seeds]
    n = threads or _threads()
    if n <= 1 or len(cfgs) == 1:
        return [simulate(c) for c in cfgs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(simulate, cfgs))


CSV_FIELDS = ["encoder", "channel", "p_or_snr", "bits", "errors", "ber", "ci_lo", "ci_hi", "seed"]


def csv_rows(cfg: SimConfig, results: list[SimResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    chan = cfg.channel.name
    x = cfg.p if cfg.quantizer is None else cfg.quantizer.snr_db
    for r in results:
        w.writerow([cfg.encoder_label, chan, repr(float(x)), r.bits, r.errors, repr(r.ber),
                    repr(r.ci95[0]), repr(r.ci95[1]), r.seed])
    return buf.getvalue()
