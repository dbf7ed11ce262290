"""Federated round loop: client sampling, local semi-supervised training,
size-weighted aggregation, and per-round diagnostics.

Determinism contract: every random draw comes from a child stream derived
from (root seed, purpose, round, client), so results are independent of
client execution order and bit-identical across reruns.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import (
    AugmentConfig,
    ClientShard,
    PartitionConfig,
    SyntheticTaskSpec,
    class_distribution,
    dirichlet_partition,
    generate_with_holdout,
    strong_augment_batch,
    weak_augment_batch,
)
from .metrics import (
    RoundMetrics,
    confidence_entropy,
    lambda_statistics,
    prediction_rank,
    pseudo_label_accuracy,
    summarize_decisions,
)
from .model import (
    ModelSpec,
    ParameterVector,
    init_params,
    layout_for,
    predict_batch,
    sgd_step,
    supervised_loss_grad,
    unsupervised_loss_grad,
)
from .pseudo import CorrectionConfig, DecisionKind, strategy_assign
from .seeding import derive_seed, rng_for


class Strategy(str, Enum):
    SUPERVISED_ONLY = "supervised_only"
    SUPERVISED_UPPER_BOUND = "supervised_upper_bound"
    LPL = "lpl"
    GPL = "gpl"
    CPG = "cpg"
    SAGE = "sage"

    @property
    def pseudo_mode(self) -> str | None:
        """The pseudo-label dispatch mode, None for purely supervised modes."""
        return self.value if self.value in ("lpl", "gpl", "cpg", "sage") else None


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: Strategy
    rounds: int
    seed: int
    clients_per_round: int
    local_epochs: int
    learning_rate: float
    mu_u: float
    correction: CorrectionConfig
    batch_size_s: int
    batch_size_u: int
    task: SyntheticTaskSpec
    partition: PartitionConfig
    model: ModelSpec
    augment: AugmentConfig
    test_per_class: int
    oracle_filter: bool = False

    @property
    def num_clients(self) -> int:
        return self.partition.num_clients

    def __post_init__(self) -> None:
        if not 1 <= self.clients_per_round <= self.num_clients:
            raise ValueError(
                f"clients_per_round must be in [1, {self.num_clients}], got {self.clients_per_round}"
            )
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")
        # learning_rate = 0 stays constructible so a zero-step update can be
        # exercised directly; the config file layer insists on > 0
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.mu_u < 0:
            raise ValueError(f"mu_u must be >= 0, got {self.mu_u}")
        if self.batch_size_s < 1 or self.batch_size_u < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.test_per_class < 1:
            raise ValueError(f"test_per_class must be >= 1, got {self.test_per_class}")


@dataclass(frozen=True)
class RoundState:
    round_index: int
    global_params: ParameterVector
    selected_clients: tuple[int, ...] = ()


@dataclass
class ClientUpdateResult:
    params: ParameterVector
    n_s: int
    n_u: int
    decision_pairs: list = field(default_factory=list)   # (decision, true label)
    conf_local: list = field(default_factory=list)
    conf_global: list = field(default_factory=list)
    rank_local_in_global: list = field(default_factory=list)
    rank_global_in_local: list = field(default_factory=list)


def select_clients(num_clients: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m distinct client ids, uniform without replacement."""
    if not 1 <= m <= num_clients:
        raise ValueError(f"cannot select {m} of {num_clients} clients")
    return rng.choice(num_clients, size=m, replace=False)


def _cycling_batches(n: int, batch: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffling each pass over the pool."""
    queue: list[int] = []
    while True:
        while len(queue) < batch:
            queue.extend(rng.permutation(n).tolist())
        out, queue = queue[:batch], queue[batch:]
        yield np.asarray(out)


def client_update(
    global_params: ParameterVector,
    shard: ClientShard,
    cfg: ExperimentConfig,
    rng_sup: np.random.Generator,
    rng_unsup: np.random.Generator,
) -> ClientUpdateResult:
    """One client's local training pass starting from the global params.

    Semi-supervised strategies pace local_epochs over the unlabeled pool;
    each step combines a supervised batch from an endlessly cycling labeled
    stream with one unlabeled chunk. Pseudo-labels come from weak views
    scored by the current local model and the round-frozen global model;
    the unsupervised loss is applied to strong views of the non-abstained
    samples. The supervised-only modes consume the identical labeled stream
    so their parameter path is comparable step for step.
    """
    if global_params.layout != layout_for(cfg.model):
        raise ValueError("global parameter layout does not match the configured model")
    spec = cfg.model
    result = ClientUpdateResult(global_params.copy(), shard.n_labeled, shard.n_unlabeled)

    if cfg.strategy is Strategy.SUPERVISED_UPPER_BOUND:
        # diagnostic ceiling: all true labels revealed, copies excluded
        X = np.concatenate([shard.labeled_features, shard.unlabeled_features[: shard.n_originals]])
        y = np.concatenate([shard.labeled_labels, shard.unlabeled_true_labels[: shard.n_originals]])
        params = result.params
        n_steps = max(1, math.ceil(X.shape[0] / cfg.batch_size_u))
        for _ in range(cfg.local_epochs):
            order = rng_sup.permutation(X.shape[0])
            for step in range(n_steps):
                chunk = order[step * cfg.batch_size_u : (step + 1) * cfg.batch_size_u]
                _, grad = supervised_loss_grad(params, spec, X[chunk], y[chunk])
                params = sgd_step(params, grad, cfg.learning_rate)
        result.params = params
        return result

    mode = cfg.strategy.pseudo_mode
    tau = cfg.correction.tau
    n_u = shard.n_unlabeled
    steps_per_epoch = max(1, math.ceil(n_u / cfg.batch_size_u))
    labeled_stream = _cycling_batches(shard.n_labeled, cfg.batch_size_s, rng_sup)
    params = result.params
    for _ in range(cfg.local_epochs):
        u_order = rng_unsup.permutation(n_u) if (mode and n_u) else None
        for step in range(steps_per_epoch):
            s_idx = next(labeled_stream)
            _, grad_s = supervised_loss_grad(
                params, spec, shard.labeled_features[s_idx], shard.labeled_labels[s_idx]
            )
            grad_values = grad_s.values
            if mode and n_u:
                u_idx = u_order[step * cfg.batch_size_u : (step + 1) * cfg.batch_size_u]
                X_u = shard.unlabeled_features[u_idx]
                X_weak = weak_augment_batch(X_u, cfg.augment.sigma_weak, rng_unsup)
                p_l = predict_batch(params, spec, X_weak)
                p_g = predict_batch(global_params, spec, X_weak)
                truths = shard.unlabeled_true_labels[u_idx]
                keep = []
                targets = []
                for i in range(X_u.shape[0]):
                    d = strategy_assign(mode, p_l[i], p_g[i], cfg.correction)
                    result.decision_pairs.append((d, int(truths[i])))
                    result.conf_local.append(d.confidence_local)
                    result.conf_global.append(d.confidence_global)
                    if d.confidence_local > tau:
                        result.rank_local_in_global.append(prediction_rank(d.class_local, p_g[i]))
                    if d.confidence_global > tau:
                        result.rank_global_in_local.append(prediction_rank(d.class_global, p_l[i]))
                    if d.abstained:
                        continue
                    if cfg.oracle_filter and int(d.target.argmax()) != int(truths[i]):
                        continue
                    keep.append(i)
                    targets.append(d.target)
                if keep and cfg.mu_u != 0:
                    X_strong = strong_augment_batch(
                        X_u[keep], cfg.augment.sigma_strong, cfg.augment.p_drop, rng_unsup
                    )
                    _, grad_u = unsupervised_loss_grad(params, spec, X_strong, np.stack(targets))
                    grad_values = grad_values + cfg.mu_u * grad_u.values
            params = sgd_step(params, ParameterVector(grad_values, params.layout), cfg.learning_rate)
    result.params = params
    return result


def aggregate(updates) -> ParameterVector:
    """Data-size weighted mean of client parameter vectors."""
    updates = list(updates)
    if not updates:
        raise ValueError("cannot aggregate zero updates")
    layout = updates[0][0].layout
    if any(p.layout != layout for p, _, _ in updates):
        raise ValueError("aggregation requires identical parameter layouts")
    sizes = np.array([n_s + n_u for _, n_s, n_u in updates], dtype=np.float64)
    if np.any(sizes < 0) or sizes.sum() == 0:
        raise ValueError("aggregation weights must be nonnegative with positive total")
    weights = sizes / sizes.sum()
    stacked = np.stack([p.values for p, _, _ in updates])
    return ParameterVector(weights @ stacked, layout)


def evaluate_accuracy(params: ParameterVector, spec: ModelSpec, test) -> float:
    probs = predict_batch(params, spec, test.features)
    return float((probs.argmax(axis=1) == test.labels).mean())


def _mean_or_none(values) -> float | None:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def run_round(
    state: RoundState, shards: list[ClientShard], test, cfg: ExperimentConfig
) -> tuple[RoundState, RoundMetrics]:
    """Select clients, run their updates against the frozen global params,
    aggregate, and score the new global model."""
    t = state.round_index
    if not 0 <= t < cfg.rounds:
        raise ValueError(f"round index {t} outside [0, {cfg.rounds})")
    selected = select_clients(cfg.num_clients, cfg.clients_per_round, rng_for(cfg.seed, "select", t))
    results: dict[int, ClientUpdateResult] = {}
    for k in selected:
        k = int(k)
        results[k] = client_update(
            state.global_params,
            shards[k],
            cfg,
            rng_for(cfg.seed, "client", t, k, "sup"),
            rng_for(cfg.seed, "client", t, k, "unsup"),
        )
    new_global = aggregate([(results[int(k)].params, results[int(k)].n_s, results[int(k)].n_u) for k in selected])

    all_pairs = [p for k in selected for p in results[int(k)].decision_pairs]
    count, acc = pseudo_label_accuracy(all_pairs)
    kinds = summarize_decisions(all_pairs)

    num_classes = cfg.model.num_classes
    lams_all: list[float] = []
    lams_by_class: list[list[float]] = [[] for _ in range(num_classes)]
    lams_majority: list[float] = []
    lams_minority: list[float] = []
    per_client: dict[int, dict] = {}
    rank_lg: list[int] = []
    rank_gl: list[int] = []
    for k in selected:
        k = int(k)
        r = results[k]
        shard_dist = class_distribution(shards[k].unlabeled_true_labels, num_classes)
        stats = lambda_statistics((d for d, _ in r.decision_pairs), shard_dist)
        majority = set(stats.majority_classes)
        for d, _ in r.decision_pairs:
            if d.kind is DecisionKind.CORRECTED_SOFT:
                lams_all.append(d.lam)
                lams_by_class[d.class_local].append(d.lam)
                (lams_majority if d.class_local in majority else lams_minority).append(d.lam)
        rank_lg.extend(r.rank_local_in_global)
        rank_gl.extend(r.rank_global_in_local)
        c_count, c_acc = pseudo_label_accuracy(r.decision_pairs)
        per_client[k] = {
            "n_s": r.n_s,
            "n_u": r.n_u,
            "pl_count": c_count,
            "pl_acc": c_acc,
            "mean_lambda": stats.mean,
            "entropy_local": confidence_entropy(r.conf_local),
            "entropy_global": confidence_entropy(r.conf_global),
        }

    mean = lambda xs: (sum(xs) / len(xs)) if xs else None
    metrics = RoundMetrics(
        round=t,
        test_accuracy=evaluate_accuracy(new_global, cfg.model, test),
        pseudo_count=count,
        pseudo_accuracy=acc,
        mean_lambda=mean(lams_all),
        lambda_by_class=[mean(lams) for lams in lams_by_class],
        lambda_majority_mean=mean(lams_majority),
        lambda_minority_mean=mean(lams_minority),
        entropy_local=_mean_or_none([per_client[int(k)]["entropy_local"] for k in selected]),
        entropy_global=_mean_or_none([per_client[int(k)]["entropy_global"] for k in selected]),
        consensus_local_in_global=np.bincount(rank_lg, minlength=num_classes + 1)[1:].tolist(),
        consensus_global_in_local=np.bincount(rank_gl, minlength=num_classes + 1)[1:].tolist(),
        n_corrected_soft=kinds["corrected_soft"],
        n_hard_local=kinds["hard_local"],
        n_hard_global=kinds["hard_global"],
        n_abstain=kinds["abstain"],
        per_client=per_client,
    )
    next_state = RoundState(t + 1, new_global, tuple(int(k) for k in selected))
    return next_state, metrics


@dataclass
class ExperimentResult:
    metrics: list[RoundMetrics]
    final_params: ParameterVector


def build_environment(cfg: ExperimentConfig):
    """Materialize the dataset, test split, and client shards for a config."""
    train, test = generate_with_holdout(cfg.task, derive_seed(cfg.seed, "data"), cfg.test_per_class)
    shards = dirichlet_partition(train, cfg.partition)
    return train, test, shards


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Full run: environment setup, T federated rounds, metric trace."""
    _, test, shards = build_environment(cfg)
    state = RoundState(0, init_params(cfg.model, derive_seed(cfg.seed, "init")))
    trace: list[RoundMetrics] = []
    for _ in range(cfg.rounds):
        state, m = run_round(state, shards, test, cfg)
        trace.append(m)
    return ExperimentResult(trace, state.global_params)


CSV_COLUMNS = (
    "round",
    "test_acc",
    "pl_count",
    "pl_acc",
    "mean_lambda",
    "mean_entropy_local",
    "mean_entropy_global",
    "n_corrected_soft",
    "n_hard_local",
    "n_hard_global",
    "n_abstain",
    "lambda_majority",
    "lambda_minority",
)


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def trace_csv_lines(metrics: list[RoundMetrics]) -> list[str]:
    lines = [",".join(CSV_COLUMNS)]
    for m in metrics:
        row = (
            m.round, m.test_accuracy, m.pseudo_count, m.pseudo_accuracy, m.mean_lambda,
            m.entropy_local, m.entropy_global, m.n_corrected_soft, m.n_hard_local,
            m.n_hard_global, m.n_abstain, m.lambda_majority_mean, m.lambda_minority_mean,
        )
        lines.append(",".join(_fmt(v) for v in row))
    return lines


def write_trace_csv(metrics: list[RoundMetrics], path: str) -> None:
    with open(path, "w") as f:
        f.write("\n".join(trace_csv_lines(metrics)) + "\n")


def round_averaged_pl_accuracy(metrics: list[RoundMetrics]) -> float | None:
    """Mean pseudo-label accuracy over rounds that issued any labels."""
    return _mean_or_none([m.pseudo_accuracy for m in metrics])


def rounds_to_threshold(metrics: list[RoundMetrics], threshold: float) -> int | None:
    """First round index whose test accuracy reaches the threshold."""
    for m in metrics:
        if m.test_accuracy >= threshold:
            return m.round
    return None


def write_summary_json(metrics: list[RoundMetrics], cfg: ExperimentConfig, path: str) -> None:
    final = metrics[-1]
    summary = {
        "strategy": cfg.strategy.value,
        "dirichlet_alpha": cfg.partition.dirichlet_alpha,
        "seed": cfg.seed,
        "rounds": len(metrics),
        "final_test_acc": final.test_accuracy,
        "best_test_acc": max(m.test_accuracy for m in metrics),
        "round_averaged_pl_acc": round_averaged_pl_accuracy(metrics),
        "total_pseudo_labels": sum(m.pseudo_count for m in metrics),
        "final_mean_lambda": final.mean_lambda,
        "final_lambda_by_class": final.lambda_by_class,
        "final_consensus_local_in_global": final.consensus_local_in_global,
        "final_consensus_global_in_local": final.consensus_global_in_local,
        "mean_entropy_local": _mean_or_none([m.entropy_local for m in metrics]),
        "mean_entropy_global": _mean_or_none([m.entropy_global for m in metrics]),
    }
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
