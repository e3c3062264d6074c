"""Generator matrices over GF(2)(D) and their shift-register realizations.

Polynomials over GF(2) are stored as Python ints, bit ``k`` holding the
coefficient of ``D**k``.

Octal shorthand is read MSB-first, each entry on its own::

    "5"  -> 101  -> 1 + D^2
    "7"  -> 111  -> 1 + D + D^2
    "13" -> 1011 -> 1 + D^2 + D^3
    "3"  -> 11   -> 1 + D
    "1"  -> 1    -> 1

so ``"1,3"`` is ``G(D) = (1, 1+D)`` and ``"5,7"`` is ``(1+D^2, 1+D+D^2)``.

State numbering (fixed so golden tests stay stable):

* controller form: delay cells taken row by row; inside a row the cell
  holding ``w[t-1]`` is the lower bit, ``w[t-2]`` the next one, and so on;
* observer form: parity chains taken column by column; inside a chain the
  cell farthest from the output (fed by the inputs only) is the lower bit.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

log = logging.getLogger(__name__)

__all__ = [
    "GeneratorSyntaxError",
    "RealizationError",
    "GenMatrix",
    "EncoderFSM",
    "BranchLabel",
    "parse_generator",
    "realize",
    "trellis",
    "check_minimal_usable",
    "gf2_mul",
    "gf2_divmod",
    "gf2_str",
]


class GeneratorSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", pos: int | None = None):
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if pos is not None else ""
        super().__init__(f"{message}{where}" + (f": {text!r}" if text else ""))


class RealizationError(ValueError):
    pass


# ----------------------------------------------------------------------------
# GF(2)[D] arithmetic


def gf2_deg(a: int) -> int:
    return a.bit_length() - 1


def gf2_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def gf2_divmod(a: int, b: int) -> tuple[int, int]:
    if b == 0:
        raise ZeroDivisionError("GF(2) polynomial division by zero")
    q, db = 0, gf2_deg(b)
    while a and gf2_deg(a) >= db:
        s = gf2_deg(a) - db
        q ^= 1 << s
        a ^= b << s
    return q, a


def gf2_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, gf2_divmod(a, b)[1]
    return a


def gf2_lcm(a: int, b: int) -> int:
    return gf2_divmod(gf2_mul(a, b), gf2_gcd(a, b))[0]


def gf2_str(a: int) -> str:
    if a == 0:
        return "0"
    terms = []
    for k in range(a.bit_length()):
        if a >> k & 1:
            terms.append("1" if k == 0 else "D" if k == 1 else f"D^{k}")
    return "+".join(terms)


# ----------------------------------------------------------------------------
# Generator matrices


@dataclass(frozen=True)
class GenMatrix:
    """``b x c`` matrix of GF(2) rational functions ``num / den``."""

    num: tuple[tuple[int, ...], ...]
    den: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.num or len(self.num) != len(self.den):
            raise ValueError("generator matrix needs at least one row")
        c = len(self.num[0])
        for rn, rd in zip(self.num, self.den):
            if len(rn) != c or len(rd) != c:
                raise ValueError("generator matrix rows have different lengths")
            for d in rd:
                if not d & 1:
                    raise ValueError("non-realizable entry: denominator must have constant term 1")
        if len(self.num) >= c:
            raise ValueError(f"need b < c, got b={len(self.num)}, c={c}")

    @property
    def b(self) -> int:
        return len(self.num)

    @property
    def c(self) -> int:
        return len(self.num[0])

    def entry(self, i: int, j: int) -> tuple[int, int]:
        return self.num[i][j], self.den[i][j]

    def is_polynomial(self) -> bool:
        return all(d == 1 for row in self.den for d in row)

    def __str__(self) -> str:
        rows = []
        for rn, rd in zip(self.num, self.den):
            cells = [gf2_str(n) if d == 1 else f"({gf2_str(n)})/({gf2_str(d)})" for n, d in zip(rn, rd)]
            rows.append("[" + ",".join(cells) + "]")
        return "[" + ",".join(rows) + "]"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise GeneratorSyntaxError(msg, self.text, self.pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def integer(self) -> int:
        self.skip()
        m = re.match(r"\d+", self.text[self.pos:])
        if not m:
            self.error("expected an integer exponent")
        self.pos += m.end()
        return int(m.group())

    def term(self) -> int:
        ch = self.peek()
        if ch in ("0", "1"):
            self.pos += 1
            return int(ch)
        if ch == "D":
            self.pos += 1
            if self.peek() == "^":
                self.pos += 1
                k = self.integer()
            else:
                k = 1
            return 1 << k
        if ch == "-":
            self.error("negative powers of D are not allowed")
        self.error("expected 0, 1, D or D^k")

    def poly(self) -> int:
        acc = self.term()
        while self.peek() == "+":
            self.pos += 1
            acc ^= self.term()
        return acc

    def atom(self) -> int:
        if self.peek() == "(":
            self.pos += 1
            v = self.poly()
            self.expect(")")
            return v
        return self.poly()

    def entry(self) -> tuple[int, int]:
        start = self.pos
        num = self.atom()
        den = 1
        if self.peek() == "/":
            self.pos += 1
            den = self.atom()
            if den == 0:
                self.pos = start
                self.error("zero denominator")
            if not den & 1:
                self.pos = start
                self.error("non-realizable denominator (constant term must be 1)")
        g = gf2_gcd(num, den) if num else den
        if g != 1:
            num, den = gf2_divmod(num, g)[0], gf2_divmod(den, g)[0]
        if num == 0:
            den = 1
        return num, den

    def row(self) -> list[tuple[int, int]]:
        self.expect("[")
        out = [self.entry()]
        while self.peek() == ",":
            self.pos += 1
            out.append(self.entry())
        self.expect("]")
        return out

    def matrix(self) -> list[list[tuple[int, int]]]:
        self.expect("[")
        rows = [self.row()]
        while self.peek() == ",":
            self.pos += 1
            rows.append(self.row())
        self.expect("]")
        if self.peek():
            self.error("trailing characters")
        return rows


def _parse_octal(text: str) -> GenMatrix:
    polys = []
    pos = 0
    for tok in text.split(","):
        t = tok.strip()
        if not t or any(ch not in "01234567" for ch in t):
            raise GeneratorSyntaxError("bad octal generator", text, pos)
        bits = bin(int(t, 8))[2:]
        if int(t, 8) == 0:
            raise GeneratorSyntaxError("zero generator", text, pos)
        # MSB-first: the leading binary digit is the coefficient of D^0
        poly = sum(1 << k for k, ch in enumerate(bits) if ch == "1")
        polys.append(poly)
        pos += len(tok) + 1
    if len(polys) < 2:
        raise GeneratorSyntaxError("octal shorthand needs at least two generators", text, 0)
    return GenMatrix((tuple(polys),), (tuple([1] * len(polys)),))


def parse_generator(text: str) -> GenMatrix:
    """Parse ``"5,7"`` octal shorthand (rate 1/c) or ``"[[1,0,1+D],[0,1,1+D]]"``."""
    s = text.strip()
    if not s:
        raise GeneratorSyntaxError("empty generator", text, 0)
    if s.startswith("["):
        rows = _Parser(s).matrix()
        try:
            return GenMatrix(
                tuple(tuple(n for n, _ in r) for r in rows),
                tuple(tuple(d for _, d in r) for r in rows),
            )
        except ValueError as exc:
            raise GeneratorSyntaxError(str(exc), text, None) from exc
    return _parse_octal(s)


# ----------------------------------------------------------------------------
# Finite-state encoders


@dataclass(frozen=True)
class BranchLabel:
    src: int
    dst: int
    inp: int
    output: int  # c-bit tuple packed MSB-first: bit (c-1-j) is output j
    beta: int


@dataclass
class EncoderFSM:
    """Shift-register encoder: ``next_state[s][u]`` and ``output[s][u]``.

    Inputs ``u`` are b-bit integers where bit ``i`` is input ``i``; outputs
    are c-bit integers packed MSB-first (``v_1`` is the most significant bit),
    so ``format(v, f"0{c}b")`` reads like the usual written tuples.
    """

    b: int
    c: int
    nu: int
    next_state: list[list[int]]
    output: list[list[int]]
    form: str
    memory: int
    generator: GenMatrix | None = None
    _branches: list[BranchLabel] | None = field(default=None, repr=False)

    @property
    def num_states(self) -> int:
        return 1 << self.nu

    def step(self, state: int, u: int) -> tuple[int, int]:
        return self.next_state[state][u], self.output[state][u]

    def encode(self, inputs: Sequence[int], state: int = 0) -> list[int]:
        out = []
        for u in inputs:
            out.append(self.output[state][u])
            state = self.next_state[state][u]
        return out

    def output_bits(self, v: int) -> tuple[int, ...]:
        return tuple(v >> (self.c - 1 - j) & 1 for j in range(self.c))

    def is_strongly_connected(self) -> bool:
        n = self.num_states
        fwd = [set(row) for row in self.next_state]
        rev: list[set[int]] = [set() for _ in range(n)]
        for s, succ in enumerate(fwd):
            for t in succ:
                rev[t].add(s)
        for graph in (fwd, rev):
            seen = {0}
            todo = deque([0])
            while todo:
                s = todo.popleft()
                for t in graph[s]:
                    if t not in seen:
                        seen.add(t)
                        todo.append(t)
            if len(seen) != n:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "b": self.b,
            "c": self.c,
            "nu": self.nu,
            "memory": self.memory,
            "form": self.form,
            "num_states": self.num_states,
            "generator": str(self.generator) if self.generator else None,
            "transitions": [
                {
                    "from": br.src,
                    "input": format(br.inp, f"0{self.b}b")[::-1],
                    "to": br.dst,
                    "output": format(br.output, f"0{self.c}b"),
                    "beta": br.beta,
                }
                for br in trellis(self)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _pack_outputs(bits: Sequence[int]) -> int:
    v = 0
    for x in bits:
        v = (v << 1) | (x & 1)
    return v


def _realize_controller(G: GenMatrix) -> EncoderFSM:
    b, c = G.b, G.c
    rows = []
    for i in range(b):
        d = 1
        for j in range(c):
            d = gf2_lcm(d, G.den[i][j])
        nums = [gf2_mul(G.num[i][j], gf2_divmod(d, G.den[i][j])[0]) for j in range(c)]
        nu_i = max([gf2_deg(d)] + [gf2_deg(n) for n in nums])
        rows.append((d, nums, max(nu_i, 0)))
    offsets, nu = [], 0
    for _, _, nu_i in rows:
        offsets.append(nu)
        nu += nu_i
    n_states = 1 << nu
    next_state = [[0] * (1 << b) for _ in range(n_states)]
    output = [[0] * (1 << b) for _ in range(n_states)]
    for s in range(n_states):
        for u in range(1 << b):
            v = [0] * c
            ns = 0
            for i, (d, nums, nu_i) in enumerate(rows):
                # register holds w[t-1] .. w[t-nu_i]
                reg = [(s >> (offsets[i] + k)) & 1 for k in range(nu_i)]
                w = (u >> i) & 1
                for k in range(1, nu_i + 1):
                    if d >> k & 1:
                        w ^= reg[k - 1]
                hist = [w] + reg  # hist[k] = w[t-k]
                for j in range(c):
                    acc = 0
                    for k in range(nu_i + 1):
                        if nums[j] >> k & 1:
                            acc ^= hist[k]
                    v[j] ^= acc
                for k in range(nu_i):
                    ns |= hist[k] << (offsets[i] + k)
            next_state[s][u] = ns
            output[s][u] = _pack_outputs(v)
    memory = max(nu_i for _, _, nu_i in rows)
    return EncoderFSM(b, c, nu, next_state, output, "controller", memory, G)


def _realize_observer(G: GenMatrix) -> EncoderFSM:
    b, c = G.b, G.c
    for i in range(b):
        for j in range(b):
            want = 1 if i == j else 0
            if G.num[i][j] != want or G.den[i][j] != 1:
                raise RealizationError(
                    "observer canonical form is supported only for systematic matrices (I_b | P)"
                )
    chains = []
    for j in range(b, c):
        d = 1
        for i in range(b):
            d = gf2_lcm(d, G.den[i][j])
        nums = [gf2_mul(G.num[i][j], gf2_divmod(d, G.den[i][j])[0]) for i in range(b)]
        nu_j = max([gf2_deg(d)] + [gf2_deg(n) for n in nums] + [0])
        chains.append((d, nums, nu_j))
    offsets, nu = [], 0
    for _, _, nu_j in chains:
        offsets.append(nu)
        nu += nu_j
    n_states = 1 << nu
    next_state = [[0] * (1 << b) for _ in range(n_states)]
    output = [[0] * (1 << b) for _ in range(n_states)]
    for s in range(n_states):
        for u in range(1 << b):
            ubits = [(u >> i) & 1 for i in range(b)]
            v = list(ubits) + [0] * (c - b)
            ns = 0
            for jj, (d, nums, nu_j) in enumerate(chains):
                # cell k (1-based, k=1 next to the output) is stored at bit nu_j - k
                cell = [0] + [(s >> (offsets[jj] + nu_j - k)) & 1 for k in range(1, nu_j + 1)]
                y = cell[1] if nu_j else 0
                for i in range(b):
                    if nums[i] & 1:
                        y ^= ubits[i]
                v[b + jj] = y
                for k in range(1, nu_j + 1):
                    nxt = cell[k + 1] if k < nu_j else 0
                    for i in range(b):
                        if nums[i] >> k & 1:
                            nxt ^= ubits[i]
                    if d >> k & 1:
                        nxt ^= y
                    ns |= nxt << (offsets[jj] + nu_j - k)
            next_state[s][u] = ns
            output[s][u] = _pack_outputs(v)
    memory = max([nu_j for _, _, nu_j in chains] + [0])
    return EncoderFSM(b, c, nu, next_state, output, "observer", memory, G)


def realize(G: GenMatrix, form: str = "controller") -> EncoderFSM:
    """Build the shift-register encoder for ``G`` in the requested canonical form."""
    if form == "controller":
        fsm = _realize_controller(G)
    elif form == "observer":
        fsm = _realize_observer(G)
    else:
        raise RealizationError(f"unknown realization form {form!r}")
    if fsm.next_state[0][0] != 0 or fsm.output[0][0] != 0:
        raise RealizationError("zero input at the zero state must stay at the zero state")
    return fsm


def trellis(fsm: EncoderFSM) -> list[BranchLabel]:
    """All ``|S| * 2^b`` branches, grouped by destination state."""
    if fsm._branches is None:
        branches = [
            BranchLabel(s, fsm.next_state[s][u], u, fsm.output[s][u], bin(u).count("1"))
            for s in range(fsm.num_states)
            for u in range(1 << fsm.b)
        ]
        branches.sort(key=lambda br: (br.dst, br.src, br.inp))
        fsm._branches = branches
    return fsm._branches


def check_minimal_usable(fsm: EncoderFSM, expect_states: int | None = None) -> str | None:
    """Return a warning when the realization has more states than declared.

    Without a declaration nothing can be checked and ``None`` is returned.
    """
    if expect_states is None:
        return None
    if fsm.num_states > expect_states:
        msg = (
            f"realization has {fsm.num_states} states but {expect_states} were expected; "
            "the encoder is nonminimal and states equivalent to the zero state are not handled"
        )
        log.warning(msg)
        return msg
    return None


def default_traceback(fsm: EncoderFSM) -> int:
    return 10 * (fsm.memory + 1)


