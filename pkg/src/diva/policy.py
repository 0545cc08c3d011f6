"""Walk policies over a masked graph: prior, posterior, rollouts, beam search.

Both policies share the embeddings and the recurrent history encoder;
they differ only in the feed-forward head that turns (history, target
[, query relation]) into a scoring vector for the outgoing edges.

Sampling-heavy callers (rollouts, beam search, evaluation) use the
no-grad numpy path; ``path_log_prob`` rebuilds the same computation as
a differentiable graph.  The two paths share kernels and apply them in
the same order, so recomputed log-probabilities match the recorded
ones bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kg import MaskedView
from .model import Model
from .tensor import (Tensor, add, add_n, concat, embedding_lookup, log_softmax,
                     log_softmax_kernel, lstm_cell, lstm_kernel, matvec,
                     pair_rows, pair_rows_kernel, pick, relu)

PRIOR = "prior"
POSTERIOR = "posterior"

DEFAULT_ACTION_CAP = 512


@dataclass(frozen=True)
class Path:
    """Walk from ``start``: (relation, entity) steps plus generation log-probs."""

    start: int
    steps: tuple[tuple[int, int], ...]
    reached: bool
    step_log_probs: tuple[float, ...]

    @property
    def log_prob(self) -> float:
        return float(sum(self.step_log_probs))

    @property
    def end(self) -> int:
        return self.steps[-1][1] if self.steps else self.start

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class WalkState:
    """Current entity plus recurrent history; h and c start at zero."""

    entity: int
    h: np.ndarray
    c: np.ndarray
    t: int = 0


def initial_state(model: Model, entity: int) -> WalkState:
    hs = model.dims.hidden
    return WalkState(entity, np.zeros(hs), np.zeros(hs), 0)


def _actions(view: MaskedView, entity: int, action_cap: int) -> list[tuple[int, int]]:
    edges = view.outgoing(entity)
    return edges[:action_cap] if len(edges) > action_cap else edges


def _check_kind(kind: str, r: int | None) -> None:
    if kind not in (PRIOR, POSTERIOR):
        raise ValueError(f"unknown policy kind {kind!r}")
    if kind == POSTERIOR and r is None:
        raise ValueError("posterior policy requires a conditioning relation")


# --- no-grad step -----------------------------------------------------------


def _step_log_probs_np(model: Model, kind: str, h: np.ndarray, e_d: int,
                       r: int | None, actions: list[tuple[int, int]]) -> np.ndarray:
    rel_ids = np.fromiter((a for a, _ in actions), dtype=np.intp, count=len(actions))
    ent_ids = np.fromiter((e for _, e in actions), dtype=np.intp, count=len(actions))
    a_mat = pair_rows_kernel(model.relation_emb.data, model.entity_emb.data,
                             rel_ids, ent_ids)
    if kind == PRIOR:
        query = np.concatenate([h, model.entity_emb.data[e_d]])
        feat = np.maximum(model.prior_w.data @ query + model.prior_b.data, 0.0)
    else:
        query = np.concatenate([h, model.entity_emb.data[e_d],
                                model.relation_emb.data[r]])
        feat = np.maximum(model.posterior_w.data @ query + model.posterior_b.data, 0.0)
    return log_softmax_kernel(a_mat @ feat)


def step_distribution_prior(model: Model, state: WalkState, e_d: int,
                            actions: list[tuple[int, int]]) -> np.ndarray:
    """Probability vector over the given actions; errors on a dead end."""
    if not actions:
        raise DataError("dead end: no outgoing actions")
    return np.exp(_step_log_probs_np(model, PRIOR, state.h, e_d, None, actions))


def step_distribution_posterior(model: Model, state: WalkState, e_d: int,
                                r: int, actions: list[tuple[int, int]]) -> np.ndarray:
    if not actions:
        raise DataError("dead end: no outgoing actions")
    return np.exp(_step_log_probs_np(model, POSTERIOR, state.h, e_d, r, actions))


def advance(model: Model, state: WalkState, chosen: tuple[int, int]) -> WalkState:
    """Push one (relation, entity) decision through the history encoder."""
    a, e_next = chosen
    x = np.concatenate([model.relation_emb.data[a], model.entity_emb.data[e_next]])
    h, c = lstm_kernel(model.lstm_wx.data, model.lstm_wh.data, model.lstm_b.data,
                       x, state.h, state.c)
    return WalkState(e_next, h, c, state.t + 1)


def _sample_index(rng: np.random.Generator, log_probs: np.ndarray) -> int:
    cum = np.cumsum(np.exp(log_probs))
    j = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(j, len(cum) - 1)


def rollout(kind: str, model: Model, view: MaskedView, e_s: int, e_d: int,
            r: int | None, max_hops: int, rng: np.random.Generator,
            action_cap: int = DEFAULT_ACTION_CAP) -> Path:
    """Sample one walk; stops at the target, a dead end, or the hop cap."""
    _check_kind(kind, r)
    if e_s == e_d:
        return Path(e_s, (), True, ())
    state = initial_state(model, e_s)
    steps: list[tuple[int, int]] = []
    lps: list[float] = []
    for _ in range(max_hops):
        actions = _actions(view, state.entity, action_cap)
        if not actions:
            return Path(e_s, tuple(steps), False, tuple(lps))
        log_probs = _step_log_probs_np(model, kind, state.h, e_d, r, actions)
        j = _sample_index(rng, log_probs)
        steps.append(actions[j])
        lps.append(float(log_probs[j]))
        if actions[j][1] == e_d:
            return Path(e_s, tuple(steps), True, tuple(lps))
        state = advance(model, state, actions[j])
    return Path(e_s, tuple(steps), False, tuple(lps))


# --- differentiable log-probability -----------------------------------------


def path_log_prob(kind: str, model: Model, view: MaskedView, path: Path,
                  e_d: int, r: int | None = None,
                  action_cap: int = DEFAULT_ACTION_CAP) -> Tensor:
    """Log-probability of taking `path` under the chosen policy, as a graph."""
    _check_kind(kind, r)
    if not path.steps:
        return Tensor(0.0)
    hs = model.dims.hidden
    h = Tensor(np.zeros(hs))
    c = Tensor(np.zeros(hs))
    e_d_emb = embedding_lookup(model.entity_emb, e_d)
    r_emb = embedding_lookup(model.relation_emb, r) if kind == POSTERIOR else None
    terms: list[Tensor] = []
    cur = path.start
    for idx, (a, e_next) in enumerate(path.steps):
        actions = _actions(view, cur, action_cap)
        try:
            j = actions.index((a, e_next))
        except ValueError:
            raise DataError(
                f"illegal step ({a}, {e_next}) from entity {cur}: "
                f"not an available action") from None
        rel_ids = np.fromiter((x for x, _ in actions), dtype=np.intp, count=len(actions))
        ent_ids = np.fromiter((x for _, x in actions), dtype=np.intp, count=len(actions))
        a_mat = pair_rows(model.relation_emb, model.entity_emb, rel_ids, ent_ids)
        if kind == PRIOR:
            query = concat([h, e_d_emb])
            feat = relu(add(matvec(model.prior_w, query), model.prior_b))
        else:
            query = concat([h, e_d_emb, r_emb])
            feat = relu(add(matvec(model.posterior_w, query), model.posterior_b))
        terms.append(pick(log_softmax(matvec(a_mat, feat)), j))
        if idx + 1 < len(path.steps):
            x = concat([embedding_lookup(model.relation_emb, a),
                        embedding_lookup(model.entity_emb, e_next)])
            h, c = lstm_cell(model.lstm_wx, model.lstm_wh, model.lstm_b, x, h, c)
        cur = e_next
    return terms[0] if len(terms) == 1 else add_n(terms)


def path_log_prob_np(kind: str, model: Model, view: MaskedView, path: Path,
                     e_d: int, r: int | None = None,
                     action_cap: int = DEFAULT_ACTION_CAP) -> float:
    """No-grad twin of ``path_log_prob``."""
    _check_kind(kind, r)
    if not path.steps:
        return 0.0
    state = initial_state(model, path.start)
    total = 0.0
    for idx, (a, e_next) in enumerate(path.steps):
        actions = _actions(view, state.entity, action_cap)
        try:
            j = actions.index((a, e_next))
        except ValueError:
            raise DataError(
                f"illegal step ({a}, {e_next}) from entity {state.entity}: "
                f"not an available action") from None
        log_probs = _step_log_probs_np(model, kind, state.h, e_d, r, actions)
        total += float(log_probs[j])
        if idx + 1 < len(path.steps):
            state = advance(model, state, (a, e_next))
    return total


# --- beam search ------------------------------------------------------------


def beam_search(model: Model, view: MaskedView, e_s: int, e_d: int,
                beam_width: int, max_hops: int,
                action_cap: int = DEFAULT_ACTION_CAP) -> list[Path]:
    """Deterministic top-k reached walks under the prior.

    Keeps the ``beam_width`` highest-log-prob unreached partial walks per
    depth; a walk arriving at the target freezes into the result set and
    stops expanding.  Ties break by path length, then lexicographically
    on the (relation id, entity id) step sequence.
    """
    if beam_width < 1:
        raise DataError("beam width must be at least 1")
    if e_s == e_d:
        return [Path(e_s, (), True, ())]
    hs = model.dims.hidden
    # partial walk: (log_prob, steps, step_lps, entity, h, c)
    frontier = [(0.0, (), (), e_s, np.zeros(hs), np.zeros(hs))]
    results: list[Path] = []
    for depth in range(1, max_hops + 1):
        expansions = []
        for lp, steps, lps, cur, h, c in frontier:
            actions = _actions(view, cur, action_cap)
            if not actions:
                continue
            log_probs = _step_log_probs_np(model, PRIOR, h, e_d, None, actions)
            for j, (a, e_next) in enumerate(actions):
                new_lp = lp + float(log_probs[j])
                new_steps = steps + ((a, e_next),)
                new_lps = lps + (float(log_probs[j]),)
                if e_next == e_d:
                    results.append(Path(e_s, new_steps, True, new_lps))
                else:
                    expansions.append((new_lp, new_steps, new_lps, h, c, a, e_next))
        if depth == max_hops or not expansions:
            break
        expansions.sort(key=lambda x: (-x[0], len(x[1]), x[1]))
        frontier = []
        for lp, steps, lps, h, c, a, e_next in expansions[:beam_width]:
            x = np.concatenate([model.relation_emb.data[a],
                                model.entity_emb.data[e_next]])
            h2, c2 = lstm_kernel(model.lstm_wx.data, model.lstm_wh.data,
                                 model.lstm_b.data, x, h, c)
            frontier.append((lp, steps, lps, e_next, h2, c2))
    results.sort(key=lambda p: (-p.log_prob, len(p.steps), p.steps))
    return results[:beam_width]
