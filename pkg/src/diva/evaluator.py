"""Ranking evaluation: beam-searched candidate scores, MAP, HITS, sweeps.

A candidate's score is the mean reasoner probability of the query
relation over the beam-searched paths reaching it; candidates that no
path reaches stay unscored and rank below every scored candidate.
The query score is 1/(1+rank of the positive); the dataset metric kept
under the name MAP is the per-task mean of that quantity, macro
averaged across relation tasks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph, MaskedView, RankingInstance, mask_relation
from .model import Model
from .policy import DEFAULT_ACTION_CAP, beam_search
from .reasoner import classify_np, featurize_np


class ErrorClass(Enum):
    CORRECT = "correct"
    NEG_GT_POS_ZERO = "neg>pos=0"          # positive pathless, some negative scored
    NEG_GT_POS_GT_ZERO = "neg>pos>0"       # both scored, a negative outranks
    NEG_EQ_POS_EQ_ZERO = "neg=pos=0"       # no candidate has paths
    REASONER_OTHER = "reasoner-other"


ERROR_RATIO_CLASSES = (ErrorClass.NEG_GT_POS_ZERO, ErrorClass.NEG_GT_POS_GT_ZERO,
                       ErrorClass.NEG_EQ_POS_EQ_ZERO)


@dataclass(frozen=True)
class CandidateScore:
    entity: int
    num_paths: int
    score: float | None  # None = unscored (no connecting path found)

    @property
    def scored(self) -> bool:
        return self.score is not None


@dataclass(frozen=True)
class QueryResult:
    instance: RankingInstance
    scores: tuple[CandidateScore, ...]  # candidate order
    positive_rank: int                  # 0-based rank after sorting
    query_score: float                  # 1 / (1 + positive_rank)
    error_class: ErrorClass


def score_candidate(model: Model, view: MaskedView, e_q: int, r_q: int, e_i: int,
                    beam: int, max_hops: int,
                    action_cap: int = DEFAULT_ACTION_CAP) -> CandidateScore:
    """Mean reasoner probability of r_q over beam-searched paths to e_i."""
    paths = [p for p in beam_search(model, view, e_q, e_i, beam, max_hops,
                                    action_cap)
             if p.steps]  # zero-step walks carry no relation evidence
    if not paths:
        return CandidateScore(e_i, 0, None)
    cls = model.class_of_relation(r_q)
    probs = [float(classify_np(model, featurize_np(model, p))[cls]) for p in paths]
    return CandidateScore(e_i, len(paths), float(np.mean(probs)))


def _rank_key(cs: CandidateScore) -> tuple:
    # scored before unscored; higher score first; entity id breaks ties
    if cs.scored:
        return (0, -cs.score, cs.entity)
    return (1, 0.0, cs.entity)


def _error_class(instance: RankingInstance, scores: tuple[CandidateScore, ...],
                 positive_rank: int) -> ErrorClass:
    by_entity = {cs.entity: cs for cs in scores}
    pos_scored = by_entity[instance.positive_entity].scored
    neg_scored = sum(1 for e, pos in instance.candidates
                     if not pos and by_entity[e].scored)
    if not pos_scored and neg_scored == 0:
        return ErrorClass.NEG_EQ_POS_EQ_ZERO
    if not pos_scored:
        return ErrorClass.NEG_GT_POS_ZERO
    if positive_rank == 0:
        return ErrorClass.CORRECT
    if neg_scored > 0:
        return ErrorClass.NEG_GT_POS_GT_ZERO
    return ErrorClass.REASONER_OTHER


def rank_and_score(instance: RankingInstance,
                   scores: list[CandidateScore]) -> QueryResult:
    """Sort candidates, locate the positive, and classify the outcome."""
    if len(scores) != len(instance.candidates):
        raise DataError("one CandidateScore required per candidate")
    pos_index = next(i for i, (_, pos) in enumerate(instance.candidates) if pos)
    pos_key = _rank_key(scores[pos_index])
    positive_rank = sum(1 for i, cs in enumerate(scores)
                        if i != pos_index and _rank_key(cs) < pos_key)
    return QueryResult(
        instance=instance,
        scores=tuple(scores),
        positive_rank=positive_rank,
        query_score=1.0 / (1.0 + positive_rank),
        error_class=_error_class(instance, tuple(scores), positive_rank))


def evaluate_instance(model: Model, view: MaskedView, instance: RankingInstance,
                      beam: int, max_hops: int,
                      action_cap: int = DEFAULT_ACTION_CAP) -> QueryResult:
    scores = [score_candidate(model, view, instance.query_entity,
                              instance.query_relation, eid, beam, max_hops,
                              action_cap)
              for eid, _ in instance.candidates]
    return rank_and_score(instance, scores)


@dataclass
class MapReport:
    per_task: dict[str, float]       # relation name -> mean query score
    task_counts: dict[str, int]
    overall: float                   # macro average across tasks
    results: list[QueryResult]


def evaluate_map(kg: KnowledgeGraph, instances: list[RankingInstance],
                 model: Model, beam: int, max_hops: int,
                 action_cap: int = DEFAULT_ACTION_CAP,
                 threads: int = 1) -> MapReport:
    """Mean of 1/(1+rank) per relation task, macro averaged."""
    if not instances:
        raise DataError("cannot evaluate an empty dataset")
    views = {r: mask_relation(kg, r)
             for r in sorted({inst.query_relation for inst in instances})}

    def run(inst: RankingInstance) -> QueryResult:
        return evaluate_instance(model, views[inst.query_relation], inst,
                                 beam, max_hops, action_cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, instances))
    else:
        results = [run(inst) for inst in instances]

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for res in results:
        task = kg.relation_name(res.instance.query_relation)
        sums[task] = sums.get(task, 0.0) + res.query_score
        counts[task] = counts.get(task, 0) + 1
    per_task = {task: sums[task] / counts[task] for task in sums}
    overall = float(np.mean(list(per_task.values())))
    return MapReport(per_task=per_task, task_counts=counts, overall=overall,
                     results=results)


def hits_at_n(kg: KnowledgeGraph, instances: list[RankingInstance], model: Model,
              beam: int, max_hops: int, n: int,
              action_cap: int = DEFAULT_ACTION_CAP) -> float:
    """Fraction of positive pairs whose relation ranks in the top n classes.

    Relations are ranked by the mean reasoner probability over the
    positive pair's beam paths; pairs with empty beams count as misses.
    """
    if not instances:
        raise DataError("cannot evaluate an empty dataset")
    if n < 1:
        raise DataError("n must be at least 1")
    views: dict[int, MaskedView] = {}
    hits = 0
    for inst in instances:
        if inst.query_relation not in views:
            views[inst.query_relation] = mask_relation(kg, inst.query_relation)
        paths = [p for p in beam_search(model, views[inst.query_relation],
                                        inst.query_entity, inst.positive_entity,
                                        beam, max_hops, action_cap)
                 if p.steps]
        if not paths:
            continue
        probs = np.stack([classify_np(model, featurize_np(model, p))
                          for p in paths])
        relation_scores = probs.mean(axis=0)[:model.num_base_relations]
        order = sorted(range(model.num_base_relations),
                       key=lambda rid: (-relation_scores[rid], rid))
        if inst.query_relation in order[:n]:
            hits += 1
    return hits / len(instances)


def classify_errors(results: list[QueryResult]) -> dict[ErrorClass, int]:
    histogram = {cls: 0 for cls in ErrorClass}
    for res in results:
        histogram[res.error_class] += 1
    return histogram


@dataclass
class SweepRow:
    beam: int
    map_score: float
    error_ratios: dict[ErrorClass, float]


def beam_sweep(kg: KnowledgeGraph, instances: list[RankingInstance], model: Model,
               beams: list[int], max_hops: int,
               action_cap: int = DEFAULT_ACTION_CAP,
               threads: int = 1) -> list[SweepRow]:
    """Re-evaluate at each beam width, recording error-class ratios."""
    if not beams:
        raise DataError("beam sweep requires at least one beam width")
    rows = []
    for beam in beams:
        report = evaluate_map(kg, instances, model, beam, max_hops, action_cap,
                              threads)
        histogram = classify_errors(report.results)
        total = len(report.results)
        ratios = {cls: histogram[cls] / total for cls in ErrorClass}
        rows.append(SweepRow(beam=beam, map_score=report.overall,
                             error_ratios=ratios))
    return rows
