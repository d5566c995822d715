"""Experiment driver: data, attack injection, metrics, runtime measurement.

Three entry points mirror the three experiments the CLI exposes:

* run_experiment — fixed client population, several seeds, per-round
  detection metrics (TPR/FPR/F1 against ground-truth malice flags) and
  global-model accuracy on a held-out evaluation set.
* sweep_malice — accuracy vs malicious fraction, with an extra arm that
  disables screening entirely for the degradation comparison.
* sweep_clients — judge-creation runtime vs client count, decomposed into
  model training / feature extraction / forest fit, median of repeated
  measurements.

Everything is a pure function of the config (seeds included); wall-clock
timings are recorded only where a config asks for them, so metric files and
chain exports are byte-identical across reruns.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .datasets import make_datasets, poison_labels
from .errors import ConfigError
from .judge import JudgeEvalConfig, JudgeTrainConfig, split_public, train_judge_timed
from .ledger import Chain, genesis, sha256_digest
from .nn import ArchConfig, TrainConfig, init_model
from .protocol import (
    ClientRuntime,
    ProtocolContext,
    RoundState,
    derive_seed,
    run_round,
    run_round_undefended,
)
from .signing import SigningKey
from .votecrypt import GroupParams, keygen

CSV_COLUMNS = (
    "experiment", "seed", "round", "n_clients", "malicious_frac",
    "tpr", "fpr", "f1", "global_acc",
    "judge_ms_train", "judge_ms_feat", "judge_ms_forest", "accepted_count",
)

# Seed-derivation domains local to the harness (the protocol owns 0-9).
_DOM_DATA = 100
_DOM_INIT = 101
_DOM_PRETRAIN = 102
_DOM_MALICE = 103
_DOM_POISON = 104
_DOM_VOTE_KEYS = 105
_DOM_SIGN_KEYS = 106

MALICE_SWEEP_FRACTIONS = (0.0, 0.05, 0.15, 0.25, 0.35)
CLIENT_SWEEP_COUNTS = (5, 10, 15, 20, 25, 30, 35, 40)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; all randomness flows from seeds."""

    name: str = "run"
    n_clients: int = 12
    malicious_fraction: float = 0.25
    flip_fraction: float = 0.35
    attack_mode: str = "targeted"
    attack_schedule: tuple | None = None  # None = attack every round
    shared_pool_split: float = 0.6
    per_client_samples: int = 240  # per class
    public_samples: int = 800      # per class
    input_dim: int = 16
    class_sep: float = 2.5
    eval_samples: int = 4000
    rounds: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)
    hidden: tuple = (8,)
    local_train: TrainConfig = TrainConfig(
        epochs=5, batch_size=8, learning_rate=5e-3)
    pretrain: TrainConfig | None = TrainConfig(
        epochs=20, batch_size=8, learning_rate=1e-2)
    judge: JudgeTrainConfig = JudgeTrainConfig(
        n_sim=60,
        sim_train_cfg=TrainConfig(epochs=5, batch_size=8, learning_rate=5e-3),
        score_threshold=0.6,
    )
    eval_cfg: JudgeEvalConfig = JudgeEvalConfig()
    screen_batch_size: int = 8
    group_name: str = "small"
    malicious_vote: str = "collude"
    defense: bool = True
    measure_timing: bool = False

    def __post_init__(self):
        if self.n_clients < 3:
            raise ConfigError(f"need at least 3 clients, got {self.n_clients}")
        if not 0 <= self.malicious_fraction < 1:
            raise ConfigError("malicious_fraction must lie in [0, 1)")
        if 2 * self.n_malicious >= self.n_clients:
            raise ConfigError(
                f"{self.n_malicious} malicious of {self.n_clients} clients "
                "breaks the non-majority bound")
        if not 0 <= self.flip_fraction <= 1:
            raise ConfigError("flip_fraction must lie in [0, 1]")
        if self.attack_mode not in ("targeted", "untargeted"):
            raise ConfigError(f"unknown attack_mode {self.attack_mode!r}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.attack_schedule is not None and \
                len(self.attack_schedule) != self.rounds:
            raise ConfigError("attack_schedule length must equal rounds")
        GroupParams.by_name(self.group_name)

    @property
    def n_malicious(self) -> int:
        return int(self.malicious_fraction * self.n_clients)

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig(input_dim=self.input_dim, hidden=tuple(self.hidden))

    def attacking(self, round_index: int) -> bool:
        if self.attack_schedule is None:
            return True
        return bool(self.attack_schedule[round_index - 1])


@dataclass(frozen=True)
class MetricsRecord:
    """One CSV row; rate fields are None where the quantity is undefined."""

    experiment: str
    seed: int
    round: int
    n_clients: int
    malicious_frac: float
    tpr: float | None
    fpr: float | None
    f1: float | None
    global_acc: float | None
    judge_ms_train: float
    judge_ms_feat: float
    judge_ms_forest: float
    accepted_count: int

    def csv_row(self) -> list:
        def num(x):
            return "" if x is None else format(float(x), ".10g")

        return [
            self.experiment, str(self.seed), str(self.round),
            str(self.n_clients), format(self.malicious_frac, ".10g"),
            num(self.tpr), num(self.fpr), num(self.f1), num(self.global_acc),
            num(self.judge_ms_train), num(self.judge_ms_feat),
            num(self.judge_ms_forest), str(self.accepted_count),
        ]


@dataclass
class ExperimentResult:
    records: list = field(default_factory=list)
    chains: dict = field(default_factory=dict)  # (name, seed) -> Chain


def linear_fit(xs, ys):
    """Least-squares line through (xs, ys): returns (slope, intercept, r2)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 2:
        raise ConfigError("linear fit needs at least two points")
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = ys - (slope * xs + intercept)
    total = ys - ys.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 - float(residual @ residual) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def screening_rates(verdicts, malicious_flags, attacking: bool):
    """Confusion rates of the judge over one round's updates.

    Positive = the update came from a malicious client in a round it
    attacked; predicted positive = judge verdict -1. Returns (tpr, fpr, f1)
    with None where a rate's denominator is zero.
    """
    tp = fp = fn = tn = 0
    for verdict, malicious in zip(verdicts, malicious_flags):
        positive = malicious and attacking
        flagged = verdict == -1
        if positive and flagged:
            tp += 1
        elif positive:
            fn += 1
        elif flagged:
            fp += 1
        else:
            tn += 1
    tpr = tp / (tp + fn) if tp + fn else None
    fpr = fp / (fp + tn) if fp + tn else None
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    return tpr, fpr, f1


def build_simulation(cfg: ExperimentConfig, seed: int):
    """Assemble one seeded simulation: data, warmed-up model, clients, chain.

    The starting model is pretrained on the public train split so the judge's
    clean probes — gradient observations of that very model — look like the
    simulated client submissions the forest is fit on.
    """
    group = GroupParams.by_name(cfg.group_name)
    arch = cfg.arch
    public, shards, eval_set = make_datasets(
        n_clients=cfg.n_clients,
        per_client_samples=cfg.per_client_samples,
        shared_pool_split=cfg.shared_pool_split,
        public_samples=cfg.public_samples,
        input_dim=cfg.input_dim,
        class_sep=cfg.class_sep,
        seed=derive_seed(seed, _DOM_DATA),
        eval_samples=cfg.eval_samples,
    )
    p_train, _ = split_public(public)
    m0 = init_model(arch, derive_seed(seed, _DOM_INIT))
    if cfg.pretrain is not None:
        m0, _ = nn.train(
            arch, m0, p_train,
            replace(cfg.pretrain, seed=derive_seed(seed, _DOM_PRETRAIN)))

    judge_cfg = cfg.judge
    if judge_cfg.sim_samples_per_class is None:
        # Simulations should look like clients: same shard size per class.
        judge_cfg = replace(judge_cfg,
                            sim_samples_per_class=cfg.per_client_samples)

    rng = np.random.default_rng(derive_seed(seed, _DOM_MALICE))
    malicious_ids = set(
        int(i) for i in rng.choice(cfg.n_clients, size=cfg.n_malicious,
                                   replace=False))
    clients = []
    for shard in shards:
        k = shard.client_id
        malicious = k in malicious_ids
        poisoned = poison_labels(
            shard.data, cfg.flip_fraction, cfg.attack_mode,
            derive_seed(seed, _DOM_POISON, k)) if malicious else None
        clients.append(ClientRuntime(
            client_id=k,
            clean_data=shard.data,
            poisoned_data=poisoned,
            malicious=malicious,
            elgamal=keygen(group, derive_seed(seed, _DOM_VOTE_KEYS, k)),
            signer=SigningKey(derive_seed(seed, _DOM_SIGN_KEYS, k), f"client-{k}"),
            vote_mode=cfg.malicious_vote if malicious else "honest",
        ))

    operator_key = SigningKey(derive_seed(seed, _DOM_SIGN_KEYS, cfg.n_clients),
                              "operator")
    forest_cfg_bytes = (
        f"n_sim={judge_cfg.n_sim},n_trees={judge_cfg.n_trees},"
        f"subsample={judge_cfg.subsample},"
        f"sim_samples={judge_cfg.sim_samples_per_class},"
        f"threshold={judge_cfg.score_threshold!r}"
    ).encode()
    chain = genesis(
        model_digest=sha256_digest(nn.params_to_bytes(m0)),
        data_digest=sha256_digest(public.to_bytes()),
        forest_config=forest_cfg_bytes,
        group_name=cfg.group_name,
        roster=[(c.client_id, c.signer.public_bytes) for c in clients],
        operator_key=operator_key,
        vote_pks=[(c.client_id, c.elgamal.pk) for c in clients],
    )
    ctx = ProtocolContext(
        arch=arch,
        public=public,
        group=group,
        judge_cfg=judge_cfg,
        eval_cfg=cfg.eval_cfg,
        local_cfg=cfg.local_train,
        screen_batch_size=cfg.screen_batch_size,
        base_seed=seed,
        operator_key=operator_key,
    )
    state = RoundState(round_index=1, global_params=m0, chain=chain)
    return ctx, clients, state, eval_set


def run_seed(cfg: ExperimentConfig, seed: int, sink=None):
    """One full simulation under one seed; returns (records, chain)."""
    ctx, clients, state, eval_set = build_simulation(cfg, seed)
    malicious_flags = [c.malicious for c in clients]
    records = []
    for _ in range(cfg.rounds):
        round_index = state.round_index
        attack_now = cfg.attacking(round_index)
        if cfg.defense:
            report = run_round(state, clients, ctx, attack_now)
            tpr, fpr, f1 = screening_rates(report.judge_verdicts,
                                           malicious_flags, attack_now)
        else:
            report = run_round_undefended(state, clients, ctx, attack_now)
            tpr = fpr = f1 = None
        acc = nn.evaluate_accuracy(ctx.arch, state.global_params, eval_set)
        timings = state.judge_timings
        timed = cfg.measure_timing and report.election is not None \
            and timings is not None
        record = MetricsRecord(
            experiment=cfg.name,
            seed=seed,
            round=round_index,
            n_clients=cfg.n_clients,
            malicious_frac=cfg.malicious_fraction,
            tpr=tpr,
            fpr=fpr,
            f1=f1,
            global_acc=acc,
            judge_ms_train=1e3 * timings.train_s if timed else 0.0,
            judge_ms_feat=1e3 * timings.feature_s if timed else 0.0,
            judge_ms_forest=1e3 * timings.fit_s if timed else 0.0,
            accepted_count=len(report.accepted),
        )
        records.append(record)
        if sink is not None:
            sink(record)
    return records, state.chain


def run_experiment(cfg: ExperimentConfig, sink=None) -> ExperimentResult:
    """Run every configured seed; metrics stream to sink as they are made."""
    result = ExperimentResult()
    for seed in cfg.seeds:
        records, chain = run_seed(cfg, seed, sink)
        result.records.extend(records)
        result.chains[(cfg.name, seed)] = chain
    return result


def sweep_malice(cfg: ExperimentConfig,
                 fractions=MALICE_SWEEP_FRACTIONS,
                 off_fraction: float = 0.35,
                 sink=None) -> ExperimentResult:
    """Accuracy vs malicious fraction, plus a screening-disabled arm."""
    result = ExperimentResult()
    for frac in fractions:
        sub = replace(cfg, name="sweep-malice", malicious_fraction=frac,
                      defense=True)
        part = run_experiment(sub, sink)
        result.records.extend(part.records)
        result.chains.update({(f"sweep-malice-{frac:.10g}", s): c
                              for (_, s), c in part.chains.items()})
    if off_fraction is not None:
        sub = replace(cfg, name="sweep-malice-off",
                      malicious_fraction=off_fraction, defense=False)
        part = run_experiment(sub, sink)
        result.records.extend(part.records)
        result.chains.update({(f"sweep-malice-off-{off_fraction:.10g}", s): c
                              for (_, s), c in part.chains.items()})
    return result


def sweep_clients(cfg: ExperimentConfig,
                  counts=CLIENT_SWEEP_COUNTS,
                  reps: int = 3,
                  sink=None) -> list:
    """Judge-creation runtime vs client count.

    One client simulates the data-collection process once per peer, so its
    simulation count equals the client count. The forest's subsample is
    pinned to the smallest sweep count so every tree sees an identical
    workload at every count — the controlled-variable form of the claim that
    forest fitting does not scale with the client population. Each count is
    measured `reps` times and the per-stage medians are reported (round
    column = repetition count used).
    """
    seed = cfg.seeds[0]
    fixed_subsample = min(cfg.judge.subsample, min(counts))
    records = []
    for count in counts:
        sub = replace(cfg, n_clients=count, malicious_fraction=0.0,
                      judge=replace(cfg.judge, n_sim=count,
                                    subsample=fixed_subsample),
                      name="sweep-clients")
        ctx, _, state, _ = build_simulation(sub, seed)
        cfg_judge = replace(ctx.judge_cfg,
                            seed=derive_seed(seed, _DOM_DATA, count))
        stage_times = []
        for _ in range(reps):
            _, timings = train_judge_timed(ctx.arch, ctx.public,
                                           state.global_params, cfg_judge)
            stage_times.append(timings)
        record = MetricsRecord(
            experiment="sweep-clients",
            seed=seed,
            round=reps,
            n_clients=count,
            malicious_frac=0.0,
            tpr=None,
            fpr=None,
            f1=None,
            global_acc=None,
            judge_ms_train=1e3 * statistics.median(
                t.train_s for t in stage_times),
            judge_ms_feat=1e3 * statistics.median(
                t.feature_s for t in stage_times),
            judge_ms_forest=1e3 * statistics.median(
                t.fit_s for t in stage_times),
            accepted_count=0,
        )
        records.append(record)
        if sink is not None:
            sink(record)
    return records
