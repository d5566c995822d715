"""Judge training, judge evaluation for consensus voting, and update screening.

A judge is an isolation forest fit on features of simulated client
submissions: each simulation draws a client-sized sample from the public
train split, trains the shared starting model on it under its own seed, and
the trained model's gradients are observed over the public test split and
summarized into one 45-dim feature row. Sampling at client size matters:
the forest has to learn the finite-sample spread of genuine client updates,
not the tighter spread of models trained on the whole public pool.
Screening a real candidate update runs the identical observe-and-summarize
pipeline (no parameters are applied), so simulated and real submissions
live in the same feature space: inliers pass (+1), outliers fail (-1).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import iforest, nn
from .errors import ConfigError
from .features import features_from_trace
from .iforest import JudgeForest
from .nn import LabeledDataset, TrainConfig

PUBLIC_TEST_FRACTION = 0.1


@dataclass(frozen=True)
class JudgeTrainConfig:
    """Knobs for building one judge: simulation count, trainer, forest.

    sim_samples_per_class sets how many samples per class each simulation
    draws from the public train split — normally the size of one client's
    shard. None means every simulation trains on the whole split.
    """

    n_sim: int = 30
    sim_train_cfg: TrainConfig = TrainConfig()
    sim_samples_per_class: int | None = None
    n_trees: int = 100
    subsample: int = 64
    score_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_sim < 2:
            raise ConfigError(f"n_sim must be >= 2, got {self.n_sim}")
        if self.sim_samples_per_class is not None and self.sim_samples_per_class < 1:
            raise ConfigError("sim_samples_per_class must be >= 1")


@dataclass(frozen=True)
class JudgeEvalConfig:
    """How a client probes a candidate judge with clean features."""

    k_probe: int = 10
    pass_fraction: float = 0.8
    batch_size: int = 8

    def __post_init__(self):
        if self.k_probe < 1:
            raise ConfigError(f"k_probe must be >= 1, got {self.k_probe}")
        if not 0 < self.pass_fraction <= 1:
            raise ConfigError("pass_fraction must lie in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class JudgeBuildTimings:
    """Wall-clock seconds per judge-building stage."""

    train_s: float
    feature_s: float
    fit_s: float

    @property
    def total_s(self) -> float:
        return self.train_s + self.feature_s + self.fit_s


def split_public(public: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic 90/10 train/test split of the public dataset (tail = test)."""
    n = len(public)
    n_test = max(1, int(n * PUBLIC_TEST_FRACTION))
    if n_test >= n:
        raise ConfigError(f"public dataset too small to split ({n} samples)")
    idx = np.arange(n)
    return public.subset(idx[: n - n_test]), public.subset(idx[n - n_test :])


def _sim_seeds(seed: int, n_sim: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_sim)]


def _client_sized_draw(p_train: LabeledDataset, per_class: int,
                       seed: int) -> LabeledDataset:
    """Seeded balanced draw of per_class samples per label, no replacement."""
    rng = np.random.default_rng(seed)
    picks = []
    for label in (0, 1):
        idx = np.flatnonzero(p_train.labels == label)
        if len(idx) < per_class:
            raise ConfigError(
                f"public train split has only {len(idx)} samples of class "
                f"{label}, simulation needs {per_class}")
        picks.append(rng.choice(idx, size=per_class, replace=False))
    order = rng.permutation(np.concatenate(picks))
    return p_train.subset(order)


def train_judge_timed(arch: nn.ArchConfig, public: LabeledDataset,
                      m0: np.ndarray, cfg: JudgeTrainConfig,
                      ) -> tuple[JudgeForest, JudgeBuildTimings]:
    """Build a judge and report how long each stage took.

    Runs cfg.n_sim seeded simulations — each draws a client-sized dataset
    from the public train split (see JudgeTrainConfig.sim_samples_per_class)
    and trains m0 on it; the seeds are the only source of variation between
    simulations. Each trained simulation's gradients are observed over the
    public test split to form one feature row, and the forest is fit on the
    stacked rows.
    """
    p_train, p_test = split_public(public)
    rows = []
    train_s = 0.0
    feature_s = 0.0
    seeds = _sim_seeds(cfg.seed, 3 * cfg.n_sim)
    for draw_seed, train_seed, observe_seed in zip(seeds[::3], seeds[1::3],
                                                   seeds[2::3]):
        sim_data = p_train
        if cfg.sim_samples_per_class is not None:
            sim_data = _client_sized_draw(p_train, cfg.sim_samples_per_class,
                                          draw_seed)
        sim_cfg = replace(cfg.sim_train_cfg, seed=train_seed)
        t0 = time.perf_counter()
        sim_model, _ = nn.train(arch, m0, sim_data, sim_cfg)
        t1 = time.perf_counter()
        trace = nn.observe_gradients(arch, sim_model, p_test,
                                     sim_cfg.batch_size, observe_seed)
        rows.append(features_from_trace(trace))
        t2 = time.perf_counter()
        train_s += t1 - t0
        feature_s += t2 - t1
    matrix = np.stack(rows)
    t0 = time.perf_counter()
    forest = iforest.fit(
        matrix,
        n_trees=cfg.n_trees,
        subsample=min(cfg.subsample, len(matrix)),
        seed=cfg.seed,
        score_threshold=cfg.score_threshold,
    )
    fit_s = time.perf_counter() - t0
    return forest, JudgeBuildTimings(train_s, feature_s, fit_s)


def train_judge(arch: nn.ArchConfig, public: LabeledDataset, m0: np.ndarray,
                cfg: JudgeTrainConfig) -> JudgeForest:
    """Build a judge forest (see train_judge_timed for the stages)."""
    forest, _ = train_judge_timed(arch, public, m0, cfg)
    return forest


def evaluate_judge(arch: nn.ArchConfig, candidate: JudgeForest,
                   public_test: LabeledDataset, m0: np.ndarray,
                   cfg: JudgeEvalConfig, seed: int) -> int:
    """Vote 1 if the candidate passes clean probe features, else 0.

    Each probe observes m0's gradients over the public test split under a
    distinct sub-seed; the candidate must predict +1 on at least
    pass_fraction of them.
    """
    passed = 0
    for probe_seed in _sim_seeds(seed, cfg.k_probe):
        trace = nn.observe_gradients(arch, m0, public_test, cfg.batch_size,
                                     probe_seed)
        if iforest.predict(candidate, features_from_trace(trace)) == 1:
            passed += 1
    return 1 if passed / cfg.k_probe >= cfg.pass_fraction else 0


def screen_update(arch: nn.ArchConfig, judge: JudgeForest, update: np.ndarray,
                  public_test: LabeledDataset, batch_size: int,
                  seed: int) -> int:
    """Judge one model update: +1 pass, -1 fail. The update is not applied."""
    trace = nn.observe_gradients(arch, update, public_test, batch_size, seed)
    return iforest.predict(judge, features_from_trace(trace))
