"""Training loop: sample decomposition and the alternating updates.

Each ranking instance decomposes into one tuple per candidate; the
positive keeps the query relation and negatives get the pseudo "n/a"
class.  Per tuple, three updates run in fixed order (posterior head,
reasoner, prior), each on fresh posterior rollouts with unreached walks
discarded.  The marginal-likelihood baseline mode replaces the scheme
with prior rollouts driving a REINFORCE step on the finder and a
cross-entropy step on the reasoner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import NumericError
from .kg import KnowledgeGraph, MaskedView, RankingInstance, mask_relation
from .model import Model
from .policy import POSTERIOR, PRIOR, Path, path_log_prob, path_log_prob_np, rollout
from .reasoner import class_log_probs_np, featurize, featurize_np, reconstruction_loss
from .tensor import add_n, scale, sgd_step, zero_grad


@dataclass(frozen=True)
class TrainingSample:
    """(e_q, r', e_i) tuple; r' is the query relation or the "n/a" id."""

    query_entity: int
    candidate: int
    conditioned_relation: int
    masked_relation: int  # base relation of the originating instance


def decompose(instance: RankingInstance, na_relation: int) -> list[TrainingSample]:
    """One tuple per candidate, in candidate order."""
    return [TrainingSample(instance.query_entity, eid,
                           instance.query_relation if pos else na_relation,
                           instance.query_relation)
            for eid, pos in instance.candidates]


@dataclass
class LossReport:
    """Per-episode means and counters, all finite."""

    episode: int
    mean_reconstruction_loss: float
    mean_kl_estimate: float
    reached_fraction: float
    update_steps: dict[str, int] = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_record(self) -> dict:
        return {"episode": self.episode,
                "mean_reconstruction_loss": self.mean_reconstruction_loss,
                "mean_kl_estimate": self.mean_kl_estimate,
                "reached_fraction": self.reached_fraction,
                "update_steps": dict(self.update_steps),
                "wall_seconds": self.wall_seconds}


class MovingAverageBaseline:
    """Running mean of rewards for score-function variance reduction."""

    def __init__(self, decay: float = 0.99):
        self.decay = decay
        self.value = 0.0
        self._primed = False

    def update(self, reward: float) -> None:
        if not self._primed:
            self.value = reward
            self._primed = True
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * reward


def _kept(paths: list[Path]) -> list[Path]:
    # walks that failed to connect carry no usable relation evidence;
    # zero-step walks (query equals candidate) cannot be featurized
    return [p for p in paths if p.reached and p.steps]


def _sample_rollouts(kind: str, model: Model, view: MaskedView,
                     sample: TrainingSample, cfg: RunConfig,
                     rng: np.random.Generator) -> list[Path]:
    r = sample.conditioned_relation if kind == POSTERIOR else None
    return [rollout(kind, model, view, sample.query_entity, sample.candidate,
                    r, cfg.max_hops, rng, cfg.action_cap)
            for _ in range(cfg.rollouts)]


def _path_rewards(model: Model, view: MaskedView, sample: TrainingSample,
                  paths: list[Path], cfg: RunConfig) -> list[float]:
    """f_re per path: reasoner log-prob plus the optional KL-in-reward term."""
    cls = model.class_of_relation(sample.conditioned_relation)
    rewards = []
    for p in paths:
        reward = float(class_log_probs_np(model, featurize_np(model, p))[cls])
        if cfg.lambda_kl > 0.0:
            lp_prior = path_log_prob_np(PRIOR, model, view, p,
                                        sample.candidate, None, cfg.action_cap)
            reward += cfg.lambda_kl * (lp_prior - p.log_prob)
        rewards.append(reward)
    return rewards


def _advantages(rewards: list[float],
                baseline: MovingAverageBaseline | None) -> list[float]:
    if baseline is None:
        return rewards
    adv = [r - baseline.value for r in rewards]
    baseline.update(float(np.mean(rewards)))
    return adv


def posterior_update(model: Model, view: MaskedView, sample: TrainingSample,
                     cfg: RunConfig, rng: np.random.Generator,
                     baseline: MovingAverageBaseline | None = None) -> dict:
    """Score-function step on the posterior head; no-op without kept paths."""
    paths = _sample_rollouts(POSTERIOR, model, view, sample, cfg, rng)
    kept = _kept(paths)
    stats = {"rollouts": len(paths), "reached": sum(p.reached for p in paths),
             "kept": len(kept), "stepped": False}
    if not kept:
        return stats
    weights = _advantages(_path_rewards(model, view, sample, kept, cfg), baseline)
    zero_grad(model.all_params())
    terms = [scale(path_log_prob(POSTERIOR, model, view, p, sample.candidate,
                                 sample.conditioned_relation, cfg.action_cap),
                   -w)
             for p, w in zip(kept, weights)]
    loss = scale(add_n(terms), 1.0 / len(terms)) if len(terms) > 1 else terms[0]
    loss.backward()
    sgd_step(model.phi_params(), cfg.learning_rate)
    stats["stepped"] = True
    return stats


def likelihood_update(model: Model, view: MaskedView, sample: TrainingSample,
                      cfg: RunConfig, rng: np.random.Generator) -> dict:
    """Mean cross-entropy step on the reasoner over kept posterior rollouts."""
    paths = _sample_rollouts(POSTERIOR, model, view, sample, cfg, rng)
    kept = _kept(paths)
    stats = {"rollouts": len(paths), "reached": sum(p.reached for p in paths),
             "kept": len(kept), "stepped": False, "reconstruction_loss": None}
    if not kept:
        return stats
    cls = model.class_of_relation(sample.conditioned_relation)
    zero_grad(model.all_params())
    terms = [reconstruction_loss(model, featurize(model, p), cls) for p in kept]
    loss = scale(add_n(terms), 1.0 / len(terms)) if len(terms) > 1 else terms[0]
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError("non-finite reconstruction loss")
    loss.backward()
    sgd_step(model.theta_params(), cfg.learning_rate)
    stats["stepped"] = True
    stats["reconstruction_loss"] = value
    return stats


def prior_update(model: Model, view: MaskedView, sample: TrainingSample,
                 cfg: RunConfig, rng: np.random.Generator) -> dict:
    """Push the finder toward posterior paths: maximize their prior log-prob."""
    paths = _sample_rollouts(POSTERIOR, model, view, sample, cfg, rng)
    kept = _kept(paths)
    stats = {"rollouts": len(paths), "reached": sum(p.reached for p in paths),
             "kept": len(kept), "stepped": False, "kl_estimate": None}
    if not kept:
        return stats
    zero_grad(model.all_params())
    terms = [path_log_prob(PRIOR, model, view, p, sample.candidate, None,
                           cfg.action_cap)
             for p in kept]
    total = add_n(terms) if len(terms) > 1 else terms[0]
    loss = scale(total, -1.0 / len(terms))
    loss.backward()
    # sampled estimate of KL(q || p), using the recorded generation log-probs
    stats["kl_estimate"] = float(np.mean(
        [p.log_prob - t.item() for p, t in zip(kept, terms)]))
    sgd_step(model.beta_params(), cfg.learning_rate)
    stats["stepped"] = True
    return stats


def mml_update(model: Model, view: MaskedView, sample: TrainingSample,
               cfg: RunConfig, rng: np.random.Generator,
               baseline: MovingAverageBaseline | None = None) -> dict:
    """Marginal-likelihood mode: prior rollouts, REINFORCE finder + CE reasoner."""
    paths = _sample_rollouts(PRIOR, model, view, sample, cfg, rng)
    kept = _kept(paths)
    stats = {"rollouts": len(paths), "reached": sum(p.reached for p in paths),
             "kept": len(kept), "stepped": False, "reconstruction_loss": None}
    if not kept:
        return stats
    cls = model.class_of_relation(sample.conditioned_relation)
    rewards = [float(class_log_probs_np(model, featurize_np(model, p))[cls])
               for p in kept]
    weights = _advantages(rewards, baseline)

    zero_grad(model.all_params())
    terms = [scale(path_log_prob(PRIOR, model, view, p, sample.candidate, None,
                                 cfg.action_cap), -w)
             for p, w in zip(kept, weights)]
    loss_b = scale(add_n(terms), 1.0 / len(terms)) if len(terms) > 1 else terms[0]
    loss_b.backward()
    sgd_step(model.beta_params(), cfg.learning_rate)

    zero_grad(model.all_params())
    ce_terms = [reconstruction_loss(model, featurize(model, p), cls) for p in kept]
    loss_t = scale(add_n(ce_terms), 1.0 / len(ce_terms)) \
        if len(ce_terms) > 1 else ce_terms[0]
    value = loss_t.item()
    if not np.isfinite(value):
        raise NumericError("non-finite reconstruction loss")
    loss_t.backward()
    sgd_step(model.theta_params(), cfg.learning_rate)
    stats["stepped"] = True
    stats["reconstruction_loss"] = value
    return stats


def train(kg: KnowledgeGraph, instances: list[RankingInstance], cfg: RunConfig,
          on_episode=None) -> tuple[Model, list[LossReport]]:
    """Run the configured number of episodes; deterministic given the seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    model = Model(kg, cfg.dims(), rng)
    reports = train_model(kg, instances, cfg, model, rng, on_episode)
    return model, reports


def train_model(kg: KnowledgeGraph, instances: list[RankingInstance],
                cfg: RunConfig, model: Model, rng: np.random.Generator,
                on_episode=None) -> list[LossReport]:
    views: dict[int, MaskedView] = {}
    baseline = MovingAverageBaseline() if cfg.baseline == "moving_average" else None
    reports: list[LossReport] = []
    for episode in range(cfg.episodes):
        start = time.perf_counter()
        jr_values: list[float] = []
        kl_values: list[float] = []
        reached = 0
        rollouts = 0
        steps = {"posterior": 0, "likelihood": 0, "prior": 0, "mml": 0}
        for index, inst in enumerate(instances):
            if inst.query_relation not in views:
                views[inst.query_relation] = mask_relation(kg, inst.query_relation)
            view = views[inst.query_relation]
            for sample in decompose(inst, kg.na_relation):
                try:
                    if cfg.mode == "diva":
                        s1 = posterior_update(model, view, sample, cfg, rng, baseline)
                        s2 = likelihood_update(model, view, sample, cfg, rng)
                        s3 = prior_update(model, view, sample, cfg, rng)
                        steps["posterior"] += s1["stepped"]
                        steps["likelihood"] += s2["stepped"]
                        steps["prior"] += s3["stepped"]
                        if s2["reconstruction_loss"] is not None:
                            jr_values.append(s2["reconstruction_loss"])
                        if s3["kl_estimate"] is not None:
                            kl_values.append(s3["kl_estimate"])
                        for s in (s1, s2, s3):
                            reached += s["reached"]
                            rollouts += s["rollouts"]
                    else:
                        s = mml_update(model, view, sample, cfg, rng, baseline)
                        steps["mml"] += s["stepped"]
                        if s["reconstruction_loss"] is not None:
                            jr_values.append(s["reconstruction_loss"])
                        reached += s["reached"]
                        rollouts += s["rollouts"]
                except NumericError as exc:
                    raise NumericError(
                        f"episode {episode}, instance {index}, candidate "
                        f"{kg.entity_name(sample.candidate)}: {exc}") from exc
        report = LossReport(
            episode=episode,
            mean_reconstruction_loss=float(np.mean(jr_values)) if jr_values else 0.0,
            mean_kl_estimate=float(np.mean(kl_values)) if kl_values else 0.0,
            reached_fraction=reached / rollouts if rollouts else 0.0,
            update_steps=steps,
            wall_seconds=time.perf_counter() - start)
        reports.append(report)
        if on_episode is not None:
            on_episode(model, report)
    return reports
