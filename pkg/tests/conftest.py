"""Shared fixtures and independent reference implementations (oracles)."""

import math

import numpy as np
import pytest

from diva.kg import KnowledgeGraph


def build_kg(named_triples):
    return KnowledgeGraph.from_named_triples(named_triples)


def random_named_triples(rng, n_entities, n_relations, n_triples):
    """Unique random triples over eN/rN name vocabularies."""
    seen = set()
    out = []
    guard = 0
    while len(out) < n_triples:
        guard += 1
        if guard > 100 * n_triples:
            break
        h = int(rng.integers(n_entities))
        t = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        if h == t or (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        out.append((f"e{h}", f"r{r}", f"e{t}"))
    return out


def naive_matmul(a, b):
    """Triple-loop matrix product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def scalar_lstm(w_x, w_h, b, x, h_prev, c_prev):
    """Hand-rolled scalar-loop gated recurrence (input/forget/output/candidate)."""
    hs = len(h_prev)
    z = []
    for k in range(4 * hs):
        acc = b[k]
        for j in range(len(x)):
            acc += w_x[k][j] * x[j]
        for j in range(hs):
            acc += w_h[k][j] * h_prev[j]
        z.append(acc)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    h = np.zeros(hs)
    c = np.zeros(hs)
    for j in range(hs):
        i_g = sig(z[j])
        f_g = sig(z[hs + j])
        o_g = sig(z[2 * hs + j])
        cand = math.tanh(z[3 * hs + j])
        c[j] = f_g * c_prev[j] + i_g * cand
        h[j] = o_g * math.tanh(c[j])
    return h, c


def enumerate_reached_steps(view, e_s, e_d, max_hops, action_cap=512):
    """All step sequences from e_s that arrive at e_d within the hop cap.

    Pure adjacency recursion: walks stop at the first arrival and never
    pass through the target.
    """
    if e_s == e_d:
        return [()]
    out = []

    def rec(cur, steps):
        if len(steps) == max_hops:
            return
        for a, e2 in view.outgoing(cur)[:action_cap]:
            ns = steps + ((a, e2),)
            if e2 == e_d:
                out.append(ns)
            else:
                rec(e2, ns)

    rec(e_s, ())
    return out


def enumerate_trajectories(view, e_s, e_d, max_hops, action_cap=512):
    """Every maximal walk: (steps, reached).  Their probabilities sum to 1."""
    if e_s == e_d:
        return [((), True)]
    out = []

    def rec(cur, steps):
        if len(steps) == max_hops:
            out.append((steps, False))
            return
        actions = view.outgoing(cur)[:action_cap]
        if not actions:
            out.append((steps, False))
            return
        for a, e2 in actions:
            ns = steps + ((a, e2),)
            if e2 == e_d:
                out.append((ns, True))
            else:
                rec(e2, ns)

    rec(e_s, ())
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
