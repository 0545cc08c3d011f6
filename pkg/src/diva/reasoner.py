"""CNN path reasoner: classify a walk into the base relations plus "n/a".

A path's (relation, entity) steps become rows of concatenated
embeddings, padded to the hop cap with dedicated all-zero padding rows.
Three filter banks (windows 1, 2, 3) slide over the rows, max-pool over
positions, and feed a two-layer MLP ending in a softmax over classes.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, NumericError
from .model import Model
from .policy import Path
from .tensor import (Tensor, add, concat, conv_over_sequence, cross_entropy,
                     log_softmax_kernel, matvec, max_over_axis, pair_rows,
                     pair_rows_kernel, relu, softmax, softmax_kernel)


def featurize_ids(model: Model, path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Relation/entity id rows for a path, padded to the hop cap."""
    n = len(path.steps)
    cap = model.dims.max_hops
    if n == 0:
        raise DataError("cannot featurize an empty path")
    if n > cap:
        raise DataError(f"path length {n} exceeds padding length {cap}")
    rel_ids = [a for a, _ in path.steps] + [model.pad_relation] * (cap - n)
    ent_ids = [e for _, e in path.steps] + [model.pad_entity] * (cap - n)
    return np.array(rel_ids, dtype=np.intp), np.array(ent_ids, dtype=np.intp)


def featurize(model: Model, path: Path) -> Tensor:
    """Differentiable N x 2E feature matrix; row i = [emb(a_i); emb(e_i)]."""
    rel_ids, ent_ids = featurize_ids(model, path)
    return pair_rows(model.reasoner_relation_emb, model.reasoner_entity_emb,
                     rel_ids, ent_ids)


def featurize_np(model: Model, path: Path) -> np.ndarray:
    rel_ids, ent_ids = featurize_ids(model, path)
    return pair_rows_kernel(model.reasoner_relation_emb.data,
                            model.reasoner_entity_emb.data, rel_ids, ent_ids)


def _logits(model: Model, features: Tensor) -> Tensor:
    expected = (model.dims.max_hops, 2 * model.dims.embed)
    if features.shape != expected:
        raise DataError(f"feature matrix has shape {features.shape}, "
                        f"expected {expected}")
    pooled = [max_over_axis(relu(conv_over_sequence(model.conv_w[w], features, w)),
                            axis=0)
              for w in model.windows]
    combined = concat(pooled)
    hidden = relu(add(matvec(model.mlp1_w, combined), model.mlp1_b))
    return add(matvec(model.mlp2_w, hidden), model.mlp2_b)


def _logits_np(model: Model, features: np.ndarray) -> np.ndarray:
    pooled = []
    for w in model.windows:
        n, cols = features.shape
        p = n - w + 1
        unfolded = np.empty((p, w * cols), dtype=np.float64)
        for i in range(p):
            unfolded[i] = features[i:i + w].reshape(-1)
        pooled.append(np.maximum(unfolded @ model.conv_w[w].data, 0.0).max(axis=0))
    combined = np.concatenate(pooled)
    hidden = np.maximum(model.mlp1_w.data @ combined + model.mlp1_b.data, 0.0)
    return model.mlp2_w.data @ hidden + model.mlp2_b.data


def classify(model: Model, features: Tensor) -> Tensor:
    """Probability vector over base relations plus "n/a"; differentiable."""
    return softmax(_logits(model, features))


def classify_np(model: Model, features: np.ndarray) -> np.ndarray:
    probs = softmax_kernel(_logits_np(model, features))
    if not np.all(np.isfinite(probs)):
        raise NumericError("path classifier produced non-finite probabilities")
    return probs


def class_log_probs_np(model: Model, features: np.ndarray) -> np.ndarray:
    log_probs = log_softmax_kernel(_logits_np(model, features))
    if not np.all(np.isfinite(log_probs)):
        raise NumericError("path classifier produced non-finite log-probabilities")
    return log_probs


def reconstruction_loss(model: Model, features: Tensor, target_class: int) -> Tensor:
    """-log p(target | path); finite because softmax is strictly positive."""
    if not 0 <= target_class < model.num_classes:
        raise DataError(f"class {target_class} out of range for "
                        f"{model.num_classes} classes")
    return cross_entropy(_logits(model, features), target_class)
