"""Parameter bundle for the three networks over one graph's vocabulary.

Ownership of parameters follows the training scheme: the posterior head
is the only phi-owned set; the prior head, the shared recurrent encoder,
and the shared embeddings belong to beta; the convolutional reasoner
(and its private embeddings when untied) belongs to theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph
from .tensor import Parameter, embedding_init, uniform_init


@dataclass(frozen=True)
class ModelDims:
    embed: int = 200          # E: entity/relation embedding width
    hidden: int = 200         # H: recurrent history width
    conv_channels: int = 128  # D: filters per window size
    mlp_hidden: int = 400     # M: reasoner MLP hidden width
    max_hops: int = 3         # N: walk cap and reasoner padding length
    tie_embeddings: bool = True

    def __post_init__(self):
        for name in ("embed", "hidden", "conv_channels", "mlp_hidden", "max_hops"):
            if getattr(self, name) < 1:
                raise DataError(f"model dimension {name} must be positive")


class Model:
    """All trainable tensors plus the id bookkeeping they imply."""

    def __init__(self, kg: KnowledgeGraph, dims: ModelDims, rng: np.random.Generator):
        self.dims = dims
        self.num_entities = kg.num_entities
        self.num_base_relations = kg.num_base_relations
        self.na_relation = kg.na_relation
        # embedding-table rows beyond the graph's id spaces
        self.pad_entity = kg.num_entities
        self.pad_relation = kg.na_relation + 1
        self.num_classes = kg.num_base_relations + 1  # base relations + "n/a"
        self.windows = tuple(w for w in (1, 2, 3) if w <= dims.max_hops)

        e, h = dims.embed, dims.hidden
        ent_rows = self.num_entities + 1
        rel_rows = self.pad_relation + 1

        def embeddings(prefix: str) -> tuple[Parameter, Parameter]:
            ent = Parameter(f"{prefix}.entity", embedding_init(rng, ent_rows, e),
                            frozen_rows=(self.pad_entity,))
            rel = Parameter(f"{prefix}.relation", embedding_init(rng, rel_rows, e),
                            frozen_rows=(self.pad_relation,))
            ent.data[self.pad_entity] = 0.0
            rel.data[self.pad_relation] = 0.0
            return ent, rel

        self.entity_emb, self.relation_emb = embeddings("embed")

        self.lstm_wx = Parameter("policy.lstm.w_x", uniform_init(rng, (4 * h, 2 * e)))
        self.lstm_wh = Parameter("policy.lstm.w_h", uniform_init(rng, (4 * h, h)))
        self.lstm_b = Parameter("policy.lstm.b", np.zeros(4 * h))
        self.prior_w = Parameter("policy.prior.w", uniform_init(rng, (2 * e, h + e)))
        self.prior_b = Parameter("policy.prior.b", np.zeros(2 * e))
        self.posterior_w = Parameter("policy.posterior.w",
                                     uniform_init(rng, (2 * e, h + 2 * e)))
        self.posterior_b = Parameter("policy.posterior.b", np.zeros(2 * e))

        d, m = dims.conv_channels, dims.mlp_hidden
        self.conv_w = {w: Parameter(f"reasoner.conv{w}.w",
                                    uniform_init(rng, (w * 2 * e, d)))
                       for w in self.windows}
        self.mlp1_w = Parameter("reasoner.mlp1.w",
                                uniform_init(rng, (m, len(self.windows) * d)))
        self.mlp1_b = Parameter("reasoner.mlp1.b", np.zeros(m))
        self.mlp2_w = Parameter("reasoner.mlp2.w",
                                uniform_init(rng, (self.num_classes, m)))
        self.mlp2_b = Parameter("reasoner.mlp2.b", np.zeros(self.num_classes))

        if dims.tie_embeddings:
            self.reasoner_entity_emb = self.entity_emb
            self.reasoner_relation_emb = self.relation_emb
        else:
            self.reasoner_entity_emb, self.reasoner_relation_emb = \
                embeddings("reasoner.embed")

    # --- class/relation mapping ----------------------------------------

    def class_of_relation(self, rid: int) -> int:
        """Reasoner class index of a base relation or the "n/a" target."""
        if 0 <= rid < self.num_base_relations:
            return rid
        if rid == self.na_relation:
            return self.num_base_relations
        raise DataError(f"relation id {rid} is not a valid reasoner class")

    def relation_of_class(self, cls: int) -> int:
        if 0 <= cls < self.num_base_relations:
            return cls
        if cls == self.num_base_relations:
            return self.na_relation
        raise DataError(f"class index {cls} out of range")

    @property
    def na_class(self) -> int:
        return self.num_base_relations

    # --- parameter groups (disjoint update sets) ------------------------

    def phi_params(self) -> list[Parameter]:
        return [self.posterior_w, self.posterior_b]

    def beta_params(self) -> list[Parameter]:
        return [self.prior_w, self.prior_b, self.lstm_wx, self.lstm_wh,
                self.lstm_b, self.entity_emb, self.relation_emb]

    def theta_params(self) -> list[Parameter]:
        params = [*self.conv_w.values(), self.mlp1_w, self.mlp1_b,
                  self.mlp2_w, self.mlp2_b]
        if not self.dims.tie_embeddings:
            params += [self.reasoner_entity_emb, self.reasoner_relation_emb]
        return params

    def all_params(self) -> list[Parameter]:
        seen: dict[int, Parameter] = {}
        for p in (*self.beta_params(), *self.phi_params(), *self.theta_params()):
            seen.setdefault(id(p), p)
        return list(seen.values())
