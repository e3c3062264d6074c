from __future__ import annotations

import json
from collections import deque

import numpy as np
import pytest
from conftest import M1, M2, M3, R23, RATE23_CODES, fsm_of
from reference_r23 import PHI, PHI_VALUES

from exactber.channel import bsc
from exactber.metricgraph import ClosureCapError, closure, phi_matrix, viterbi_step
from exactber.scalar import NumericBackend, Poly, RationalBackend, mpq
from exactber.solver import stationary

EXACT = RationalBackend()


@pytest.fixture(scope="module")
def r23_graph():
    return closure(fsm_of(R23, "observer"), bsc())


def test_viterbi_step_all_zero_received():
    fsm = fsm_of(R23, "observer")
    phi, dec = viterbi_step((0,), (0, 0, 0), fsm, bsc())
    assert phi == (-1,)
    assert dec[0] == [(0, 0)]


def test_viterbi_step_tie_into_state_zero():
    fsm = fsm_of(R23, "observer")
    phi, dec = viterbi_step((0,), (0, 1, 0), fsm, bsc())
    assert phi == (1,)
    assert sorted(dec[0]) == [(0, 0), (0, 2)]
    assert len(dec[1]) == 1


@pytest.mark.parametrize("gen", [M1, M2, M3])
def test_viterbi_step_zero_tuple_keeps_zero_path(gen):
    fsm = fsm_of(gen)
    phi, dec = viterbi_step([0] * (fsm.num_states - 1), (0,) * fsm.c, fsm, bsc())
    assert dec[0] == [(0, 0)]
    assert all(x <= 0 for x in phi)


@pytest.mark.parametrize(
    "gen,form,M",
    [(M1, "controller", 5), (M2, "controller", 31), (R23, "observer", 5), (R23, "controller", 13),
     (RATE23_CODES[4], "controller", 19), (RATE23_CODES[8], "controller", 347)],
)
def test_closure_sizes(gen, form, M):
    assert closure(fsm_of(gen, form), bsc()).M == M


def test_m1_metric_states():
    g = closure(fsm_of(M1), bsc())
    assert sorted(int(x) for x in g.states[:, 0]) == [-2, -1, 0, 1, 2]


def test_r23_record_groups(r23_graph):
    assert sum(1 for _ in r23_graph.records()) == 40
    assert sorted(int(x) for x in r23_graph.states[:, 0]) == list(PHI_VALUES)


def test_closure_against_scalar_bfs():
    """Vectorized closure equals a plain BFS over viterbi_step."""
    for gen, form in [(M2, "controller"), (R23, "observer"), (RATE23_CODES[4], "controller")]:
        fsm = fsm_of(gen, form)
        ch = bsc()
        tuples = ch.received_tuples(fsm.c)
        start = tuple([0] * (fsm.num_states - 1))
        order, seen, todo = [start], {start: 0}, deque([start])
        succ = {}
        while todo:
            phi = todo.popleft()
            for r in tuples:
                nxt, dec = viterbi_step(phi, r, fsm, ch)
                if nxt not in seen:
                    seen[nxt] = len(order)
                    order.append(nxt)
                    todo.append(nxt)
                succ[seen[phi], r] = (seen[nxt], {s: sorted(v) for s, v in enumerate(dec)})
        g = closure(fsm, ch)
        assert [tuple(int(x) for x in row) for row in g.states] == order
        for rec in g.records():
            k, dec = succ[rec.from_index, rec.received]
            assert rec.to_index == k
            assert {s: sorted(v) for s, v in rec.decisions.items()} == dec


def test_closure_is_deterministic():
    a = closure(fsm_of(M2), bsc())
    b = closure(fsm_of(M2), bsc())
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.succ, b.succ)
    assert np.array_equal(a.tiemask, b.tiemask)


def test_cap_exceeded_names_cap_and_frontier():
    with pytest.raises(ClosureCapError, match="cap of 10") as info:
        closure(fsm_of(M2), bsc(), cap=10)
    assert info.value.cap == 10 and info.value.frontier > 0


def test_phi_bound():
    with pytest.raises(ClosureCapError):
        closure(fsm_of(M2), bsc(), phi_bound=1)


def _row_sums_exact(P):
    for row in P.rows:
        total = RationalBackend().zero()
        for v in row.values():
            total = total + v
        assert total == EXACT.one()


@pytest.mark.parametrize("gen,form", [(M1, "controller"), (M2, "controller"), (R23, "observer"),
                                      (RATE23_CODES[4], "controller")])
def test_phi_rows_sum_to_one_symbolically(gen, form):
    g = closure(fsm_of(gen, form), bsc())
    _row_sums_exact(phi_matrix(g, EXACT))


def test_phi_rows_numeric_m3():
    g = closure(fsm_of(M3), bsc())
    rng = np.random.default_rng(3)
    for p in rng.uniform(1e-4, 0.5, 20):
        P = phi_matrix(g, NumericBackend(float(p)))
        assert np.abs(np.asarray(P.sum(axis=1)).ravel() - 1).max() < 1e-12


def test_r23_phi_entries(r23_graph):
    P = phi_matrix(r23_graph, EXACT)
    i0 = r23_graph.index_of((0,))
    assert P.rows[i0][r23_graph.index_of((-1,))] == EXACT.from_poly(Poly([1, -2, 2]))
    assert P.rows[i0][r23_graph.index_of((1,))] == EXACT.from_poly(Poly([0, 2, -2]))


def test_r23_phi_display_comparison(r23_graph):
    """Entry-by-entry against the published display; two cells are known misprints."""
    P = phi_matrix(r23_graph, EXACT)
    idx = [r23_graph.index_of((v,)) for v in PHI_VALUES]
    bad = []
    for a, va in enumerate(PHI_VALUES):
        for b, vb in enumerate(PHI_VALUES):
            ours = P.rows[idx[a]].get(idx[b], EXACT.zero())
            if ours != EXACT.from_poly(PHI[a][b]):
                bad.append((va, vb))
    # the display puts 2p^2q in cells where total probability forces 2pq^2
    assert bad == [(1, 2), (2, 2)]


@pytest.mark.parametrize("gen,form", [(M1, "controller"), (M2, "controller"), (R23, "observer")])
def test_stationary_symbolic(gen, form):
    g = closure(fsm_of(gen, form), bsc())
    P = phi_matrix(g, EXACT)
    pi = stationary(P, EXACT)
    assert sum(pi[1:], pi[0]) == EXACT.one()
    left = P.vecmat(pi, EXACT.zero())
    assert all(a == b for a, b in zip(left, pi))


def test_stationary_m1_denominator():
    g = closure(fsm_of(M1), bsc())
    pi = stationary(phi_matrix(g, EXACT), EXACT)
    den = Poly([1, 0, 3, -2])
    for x in pi:
        if not x.is_zero():
            _, rem = den.divmod(x.den)
            assert rem.is_zero()


def test_stationary_concentrates_at_small_p():
    g = closure(fsm_of(M2), bsc())
    pi = stationary(phi_matrix(g, NumericBackend(1e-9)), NumericBackend(1e-9))
    assert pi.max() > 1 - 1e-6


def test_stationary_numeric_m3():
    g = closure(fsm_of(M3), bsc())
    be = NumericBackend(0.03)
    P = phi_matrix(g, be)
    pi = stationary(P, be)
    assert np.abs(pi @ P - pi).max() < 1e-13


def test_r23_stationary_matches_display_up_to_sign(r23_graph):
    """The published numerators are ours; the display's denominator sign is flipped."""
    from reference_r23 import P_INF_DEN, P_INF_NUM

    pi = stationary(phi_matrix(r23_graph, EXACT), EXACT)
    mismatched = []
    for k, v in enumerate(PHI_VALUES):
        ours = pi[r23_graph.index_of((v,))]
        flipped = EXACT.from_poly(P_INF_NUM[k]) / EXACT.from_poly(P_INF_DEN.scale(mpq(-1)))
        if ours != flipped:
            mismatched.append(v)
    # two numerators carry an extra sign slip: the constant at -2, the p^7 term at +1
    assert mismatched == [-2, 1]


def test_graph_json_and_dot(r23_graph):
    obj = json.loads(json.dumps(r23_graph.to_json(EXACT)))
    assert obj["M"] == 5 and len(obj["edges"]) == 40
    assert all(isinstance(e["prob"], str) for e in obj["edges"])
    dot = r23_graph.to_dot()
    assert dot.startswith("digraph") and dot.count("->") > 0
    with pytest.raises(ValueError):
        closure(fsm_of(M2), bsc()).to_dot(max_states=8)
