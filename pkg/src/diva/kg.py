"""Triple store: interned symbols, inverse-edge closure, relation masking.

Entities and base relations are interned to dense ids in first-appearance
order.  Base relations take ids ``[0, B)``; the inverse of base relation
``r`` is ``r + B``; id ``2B`` is reserved for the "n/a" classification
target and never labels an edge.  The outgoing index holds every stored
triple plus its inverse, sorted by ``(relation id, entity id)`` so that
walks, beam search, and ranking are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import DataError

NA_RELATION_NAME = "n/a"
INVERSE_SUFFIX = "^-1"


class TripleFormat(Enum):
    """Accepted triple-file separators."""

    TAB = "tab"
    WHITESPACE = "whitespace"


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


Edge = tuple[int, int]  # (relation id, neighbor entity id)


class KnowledgeGraph:
    """Immutable triple store with dense ids and inverse-edge closure."""

    def __init__(self, entity_names: list[str], relation_names: list[str],
                 triples: list[Triple]):
        self._entity_names = list(entity_names)
        self._relation_names = list(relation_names)
        self._entity_ids = {n: i for i, n in enumerate(self._entity_names)}
        self._relation_ids = {n: i for i, n in enumerate(self._relation_names)}
        if len(self._entity_ids) != len(self._entity_names):
            raise DataError("duplicate entity names")
        if len(self._relation_ids) != len(self._relation_names):
            raise DataError("duplicate relation names")
        self.triples = list(triples)
        b = len(self._relation_names)
        out: list[list[Edge]] = [[] for _ in self._entity_names]
        for t in self.triples:
            if not (0 <= t.head < len(out) and 0 <= t.tail < len(out)):
                raise DataError(f"triple references unknown entity: {t}")
            if not 0 <= t.relation < b:
                raise DataError(f"triple references non-base relation: {t}")
            out[t.head].append((t.relation, t.tail))
            out[t.tail].append((t.relation + b, t.head))
        for edges in out:
            edges.sort()
        self._out = out

    @classmethod
    def from_named_triples(cls, named: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Intern names in first-appearance order; duplicates are dropped."""
        entities: list[str] = []
        relations: list[str] = []
        eids: dict[str, int] = {}
        rids: dict[str, int] = {}
        seen: set[tuple[int, int, int]] = set()
        triples: list[Triple] = []
        for h, r, t in named:
            for name in (h, t):
                if name not in eids:
                    eids[name] = len(entities)
                    entities.append(name)
            if r not in rids:
                rids[r] = len(relations)
                relations.append(r)
            key = (eids[h], rids[r], eids[t])
            if key in seen:
                continue
            seen.add(key)
            triples.append(Triple(*key))
        if not triples:
            raise DataError("empty input: no triples")
        return cls(entities, relations, triples)

    # --- id space -------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self._entity_names)

    @property
    def num_base_relations(self) -> int:
        return len(self._relation_names)

    @property
    def na_relation(self) -> int:
        """Reserved classification-target id; never an edge label."""
        return 2 * self.num_base_relations

    def is_base(self, rid: int) -> bool:
        return 0 <= rid < self.num_base_relations

    def inverse(self, rid: int) -> int:
        b = self.num_base_relations
        if not 0 <= rid < 2 * b:
            raise DataError(f"relation id {rid} has no inverse")
        return rid + b if rid < b else rid - b

    def entity_name(self, eid: int) -> str:
        return self._entity_names[eid]

    def relation_name(self, rid: int) -> str:
        b = self.num_base_relations
        if 0 <= rid < b:
            return self._relation_names[rid]
        if b <= rid < 2 * b:
            return self._relation_names[rid - b] + INVERSE_SUFFIX
        if rid == self.na_relation:
            return NA_RELATION_NAME
        raise DataError(f"unknown relation id {rid}")

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise DataError(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise DataError(f"unknown relation {name!r}") from None

    @property
    def entity_names(self) -> list[str]:
        return list(self._entity_names)

    @property
    def relation_names(self) -> list[str]:
        return list(self._relation_names)

    # --- adjacency ------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return 2 * len(self.triples)

    def outgoing_all(self, eid: int) -> list[Edge]:
        """Unmasked adjacency, including inverse edges."""
        if not 0 <= eid < self.num_entities:
            raise DataError(f"entity id {eid} out of range")
        return self._out[eid]


class MaskedView:
    """Adjacency view hiding one query relation and its inverse.

    The underlying graph is untouched; the view precomputes filtered
    lists at construction and is safe for concurrent readers.
    """

    def __init__(self, kg: KnowledgeGraph, relation: int | None):
        self.kg = kg
        self.masked_relation = relation
        if relation is None:
            self._out = kg._out
        else:
            hidden = {relation, kg.inverse(relation)}
            self._out = [[e for e in edges if e[0] not in hidden]
                         for edges in kg._out]

    def outgoing(self, eid: int) -> list[Edge]:
        if not 0 <= eid < self.kg.num_entities:
            raise DataError(f"entity id {eid} out of range")
        return self._out[eid]

    @property
    def num_edges(self) -> int:
        return sum(len(edges) for edges in self._out)


def mask_relation(kg: KnowledgeGraph, r_q: int) -> MaskedView:
    if not kg.is_base(r_q):
        raise DataError(f"cannot mask relation id {r_q}: not a base relation")
    return MaskedView(kg, r_q)


def unmasked_view(kg: KnowledgeGraph) -> MaskedView:
    return MaskedView(kg, None)


def outgoing(view: MaskedView, eid: int) -> list[Edge]:
    return view.outgoing(eid)


# --- ranking instances ----------------------------------------------------


@dataclass(frozen=True)
class RankingInstance:
    """One query (e_q, r_q) plus candidates, exactly one of them positive."""

    query_entity: int
    query_relation: int
    candidates: tuple[tuple[int, bool], ...]  # (entity id, is positive)

    def __post_init__(self):
        if not self.candidates:
            raise DataError("ranking instance with no candidates")
        positives = sum(1 for _, pos in self.candidates if pos)
        if positives != 1:
            raise DataError(
                f"ranking instance requires exactly one positive candidate, got {positives}")

    @property
    def positive_entity(self) -> int:
        return next(e for e, pos in self.candidates if pos)


# --- file I/O ---------------------------------------------------------------


def _open_lines(source: str | Path | IO[str]) -> tuple[Iterator[str], str]:
    if isinstance(source, (str, Path)):
        handle = open(source, "r", encoding="utf-8")
        return iter(handle), str(source)
    return iter(source), getattr(source, "name", "<stream>")


def _data_lines(source) -> Iterator[tuple[int, str]]:
    lines, _ = _open_lines(source)
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def load_triples(source, fmt: TripleFormat = TripleFormat.TAB) -> KnowledgeGraph:
    """Parse `head <TAB> relation <TAB> tail` lines into a graph.

    `#`-prefixed lines and blank lines are skipped.  WHITESPACE format
    splits on any whitespace run instead of single tabs.
    """
    named: list[tuple[str, str, str]] = []
    for lineno, line in _data_lines(source):
        fields = line.split("\t") if fmt is TripleFormat.TAB else line.split()
        fields = [f.strip() for f in fields]
        if len(fields) != 3:
            raise DataError(f"line {lineno}: expected 3 {fmt.value}-separated "
                            f"fields, got {len(fields)}")
        if not all(fields):
            raise DataError(f"line {lineno}: empty field")
        named.append((fields[0], fields[1], fields[2]))
    if not named:
        raise DataError("empty input: no triples")
    return KnowledgeGraph.from_named_triples(named)


def save_triples(kg: KnowledgeGraph, dest: str | Path | IO[str]) -> None:
    """Write base triples in stored order, tab-separated."""
    close = False
    if isinstance(dest, (str, Path)):
        dest = open(dest, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        for t in kg.triples:
            dest.write(f"{kg.entity_name(t.head)}\t{kg.relation_name(t.relation)}"
                       f"\t{kg.entity_name(t.tail)}\n")
    finally:
        if close:
            dest.close()


def load_ranking_instances(source, kg: KnowledgeGraph) -> list[RankingInstance]:
    """Parse `e_q <TAB> r_q <TAB> e_cand <TAB> {+|-}` lines.

    Consecutive lines sharing (e_q, r_q) form one instance; a change of
    key always starts a new instance.  Every group must contain exactly
    one positive candidate.
    """
    instances: list[RankingInstance] = []
    group_key: tuple[str, str] | None = None
    group: list[tuple[int, bool]] = []

    def flush():
        if group_key is None:
            return
        e_name, r_name = group_key
        positives = sum(1 for _, pos in group if pos)
        if positives != 1:
            raise DataError(
                f"instance {len(instances) + 1} (e_q={e_name}, r_q={r_name}): "
                f"expected exactly one positive candidate, got {positives}")
        instances.append(RankingInstance(
            kg.entity_id(e_name), kg.relation_id(r_name), tuple(group)))

    for lineno, line in _data_lines(source):
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 4 or not all(fields):
            raise DataError(f"line {lineno}: expected 4 tab-separated fields")
        e_q, r_q, cand, label = fields
        if label not in ("+", "-"):
            raise DataError(f"line {lineno}: label must be '+' or '-', got {label!r}")
        key = (e_q, r_q)
        if key != group_key:
            flush()
            group_key = key
            group = []
        group.append((kg.entity_id(cand), label == "+"))
    flush()
    if not instances:
        raise DataError("empty input: no ranking instances")
    return instances


def save_ranking_instances(instances: Iterable[RankingInstance],
                           kg: KnowledgeGraph,
                           dest: str | Path | IO[str]) -> None:
    close = False
    if isinstance(dest, (str, Path)):
        dest = open(dest, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        for inst in instances:
            e_q = kg.entity_name(inst.query_entity)
            r_q = kg.relation_name(inst.query_relation)
            for eid, pos in inst.candidates:
                dest.write(f"{e_q}\t{r_q}\t{kg.entity_name(eid)}\t{'+' if pos else '-'}\n")
    finally:
        if close:
            dest.close()
