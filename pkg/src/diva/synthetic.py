"""Synthetic compositional-rule datasets for desk-scale verification.

A hidden rule ``r* := r1 ∘ r2`` is planted on top of random background
triples: every positive query pair (x, z) is connected by a planted
2-hop chain x --r1--> y --r2--> z, while r* itself never appears as an
edge.  Negatives are drawn from entities reachable from the query node
but connected by no r1∘r2 chain at all, so the rule is the only signal
separating candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph, RankingInstance, Triple


@dataclass(frozen=True)
class SyntheticConfig:
    num_entities: int = 200
    num_base_relations: int = 8
    num_background_triples: int = 3000
    rule_head: int = 0            # r*, appears only in instances
    rule_body: tuple[int, int] = (1, 2)
    num_rule_pairs: int = 90
    candidates_per_instance: int = 10
    train_fraction: float = 0.667
    reach_hops: int = 3           # negatives sampled within this radius

    def validate(self) -> None:
        if self.num_entities < 3:
            raise DataError("need at least 3 entities")
        if self.num_base_relations < 3:
            raise DataError("need at least 3 base relations (rule head + body)")
        rels = {self.rule_head, *self.rule_body}
        if len(rels) != 3 or not all(0 <= r < self.num_base_relations for r in rels):
            raise DataError("rule head and body must be three distinct base relations")
        if self.candidates_per_instance < 2:
            raise DataError("need at least 2 candidates per instance")
        if self.candidates_per_instance > self.num_entities - 1:
            raise DataError("candidate set larger than entity count")
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")
        if self.num_rule_pairs < 2:
            raise DataError("need at least 2 rule pairs to split")


def _reachable_within(adjacency: list[list[tuple[int, int]]], start: int,
                      hops: int) -> set[int]:
    frontier = {start}
    seen = {start}
    for _ in range(hops):
        nxt = set()
        for node in frontier:
            for _, dst in adjacency[node]:
                if dst not in seen:
                    seen.add(dst)
                    nxt.add(dst)
        frontier = nxt
    seen.discard(start)
    return seen


def generate_synthetic(cfg: SyntheticConfig, seed: int
                       ) -> tuple[KnowledgeGraph, list[RankingInstance], list[RankingInstance]]:
    """Deterministic function of (cfg, seed): graph, train and test instances."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    n = cfg.num_entities
    r_star, (r1, r2) = cfg.rule_head, cfg.rule_body

    entity_names = [f"e{i:03d}" for i in range(n)]
    relation_names = [f"rel{j}" for j in range(cfg.num_base_relations)]

    triples: list[tuple[int, int, int]] = []
    triple_set: set[tuple[int, int, int]] = set()

    def add(h: int, r: int, t: int) -> bool:
        if (h, r, t) in triple_set:
            return False
        triple_set.add((h, r, t))
        triples.append((h, r, t))
        return True

    # plant the rule chains
    pairs: list[tuple[int, int]] = []
    pair_set: set[tuple[int, int]] = set()
    guard = 0
    while len(pairs) < cfg.num_rule_pairs:
        guard += 1
        if guard > 100 * cfg.num_rule_pairs:
            raise DataError("could not plant the requested number of rule pairs")
        x, y, z = rng.choice(n, size=3, replace=False)
        x, y, z = int(x), int(y), int(z)
        if (x, z) in pair_set:
            continue
        pair_set.add((x, z))
        pairs.append((x, z))
        add(x, r1, y)
        add(y, r2, z)

    # random background over every base relation except r*
    background_rels = [r for r in range(cfg.num_base_relations) if r != r_star]
    guard = 0
    placed = 0
    while placed < cfg.num_background_triples:
        guard += 1
        if guard > 50 * cfg.num_background_triples:
            raise DataError("could not place the requested number of background triples")
        h, t = rng.choice(n, size=2, replace=False)
        r = background_rels[int(rng.integers(len(background_rels)))]
        if add(int(h), r, int(t)):
            placed += 1

    kg = KnowledgeGraph(entity_names, relation_names,
                        [Triple(h, r, t) for (h, r, t) in triples])

    # full rule closure (planted or accidental) for negative filtering
    out_r1: dict[int, list[int]] = {}
    out_r2: dict[int, list[int]] = {}
    for h, r, t in triples:
        if r == r1:
            out_r1.setdefault(h, []).append(t)
        elif r == r2:
            out_r2.setdefault(h, []).append(t)
    closure: set[tuple[int, int]] = set()
    for x, ys in out_r1.items():
        for y in ys:
            for z in out_r2.get(y, ()):
                closure.add((x, z))

    instances: list[RankingInstance] = []
    n_neg = cfg.candidates_per_instance - 1
    for x, z in pairs:
        reachable = _reachable_within(kg._out, x, cfg.reach_hops)
        pool = sorted(e for e in reachable
                      if e != z and (x, e) not in closure and (x, e) not in pair_set)
        if len(pool) < n_neg:
            raise DataError(
                f"infeasible config/seed: only {len(pool)} valid negatives for "
                f"query entity {x} (need {n_neg})")
        negs = rng.choice(len(pool), size=n_neg, replace=False)
        cands = [(pool[int(i)], False) for i in negs] + [(z, True)]
        order = rng.permutation(len(cands))
        instances.append(RankingInstance(
            x, r_star, tuple(cands[int(i)] for i in order)))

    split = rng.permutation(len(instances))
    n_train = int(round(cfg.train_fraction * len(instances)))
    n_train = min(max(n_train, 1), len(instances) - 1)
    train = [instances[int(i)] for i in split[:n_train]]
    test = [instances[int(i)] for i in split[n_train:]]
    return kg, train, test


def write_dataset(kg: KnowledgeGraph, train: list[RankingInstance],
                  test: list[RankingInstance], out_dir) -> None:
    """Write graph + instance files that reload into a self-contained task.

    The triple-file format can only declare relations through edges, so
    the positive pairs are appended as rule-relation triples; they are
    hidden by per-query masking exactly like task triples in the public
    benchmark releases.
    """
    from pathlib import Path

    from .kg import save_ranking_instances, save_triples

    out_dir = Path(out_dir)
    with open(out_dir / "graph.tsv", "w", encoding="utf-8", newline="\n") as fh:
        save_triples(kg, fh)
        for inst in train + test:
            fh.write(f"{kg.entity_name(inst.query_entity)}"
                     f"\t{kg.relation_name(inst.query_relation)}"
                     f"\t{kg.entity_name(inst.positive_entity)}\n")
    save_ranking_instances(train, kg, out_dir / "train_instances.tsv")
    save_ranking_instances(test, kg, out_dir / "test_instances.tsv")
