"""One training round: judge election, update screening, FedAvg aggregation.

The scheduler owns the round: clients train locally, the first round elects a
judge by homomorphically tallied encrypted ballots, every update is screened
by the elected judge, plain majority votes decide acceptance, and accepted
updates are averaged per Eq.-style sample-size weights. Every phase writes
signed blocks to the ledger in client-id order, so the chain (and therefore
the whole simulation) is deterministic for a fixed configuration.

Phases are strictly ordered: submission -> judge-election -> screening ->
aggregation. The judge is elected exactly once per run and frozen afterwards.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

import numpy as np

from . import iforest, ledger, nn, votecrypt
from .errors import ConfigError, ProtocolError
from .iforest import JudgeForest
from .judge import (
    JudgeBuildTimings,
    JudgeEvalConfig,
    JudgeTrainConfig,
    evaluate_judge,
    screen_update,
    split_public,
    train_judge_timed,
)
from .ledger import (
    AggregationResult,
    Chain,
    DecryptionShareSet,
    JudgeBallotList,
    JudgeSubmission,
    ModelSubmission,
    ScreeningVoteList,
    append_signed,
)
from .nn import ArchConfig, LabeledDataset, TrainConfig
from .signing import SigningKey
from .votecrypt import GroupParams

PHASES = ("submission", "judge-election", "screening", "aggregation")

# Seed-derivation domains, so independent random streams never collide.
_DOM_KEYS = 0
_DOM_LOCAL = 1
_DOM_JUDGE = 2
_DOM_EVAL = 3
_DOM_BALLOT = 4
_DOM_SCREEN = 5


def derive_seed(base: int, *key: int) -> int:
    """Stable sub-seed for a (domain, indices...) slot of the base seed."""
    seq = np.random.SeedSequence(entropy=base, spawn_key=tuple(key))
    return int(seq.generate_state(1)[0])


# --------------------------------------------------------------------------
# Participants and context
# --------------------------------------------------------------------------

@dataclass
class ClientRuntime:
    """Everything one simulated client owns: data, keys, and behavior."""

    client_id: int
    clean_data: LabeledDataset
    poisoned_data: LabeledDataset | None
    malicious: bool
    elgamal: votecrypt.KeyPair
    signer: SigningKey
    vote_mode: str = "honest"  # honest | collude | silent

    def __post_init__(self):
        if self.vote_mode not in ("honest", "collude", "silent"):
            raise ConfigError(f"unknown vote_mode {self.vote_mode!r}")
        if self.malicious and self.poisoned_data is None:
            raise ConfigError("malicious client needs a poisoned dataset")

    @property
    def n_samples(self) -> int:
        return len(self.clean_data)

    def training_data(self, attacking: bool) -> LabeledDataset:
        if attacking and self.malicious:
            return self.poisoned_data
        return self.clean_data


@dataclass
class ProtocolContext:
    """Shared wiring for a simulation: model, public data, crypto, seeds."""

    arch: ArchConfig
    public: LabeledDataset
    group: GroupParams
    judge_cfg: JudgeTrainConfig
    eval_cfg: JudgeEvalConfig
    local_cfg: TrainConfig
    screen_batch_size: int
    base_seed: int
    operator_key: SigningKey

    def __post_init__(self):
        self.p_train, self.p_test = split_public(self.public)


@dataclass
class RoundState:
    """Protocol state carried between rounds."""

    round_index: int
    global_params: np.ndarray
    chain: Chain
    judge: JudgeForest | None = None
    judge_digest: bytes | None = None
    judge_timings: JudgeBuildTimings | None = None
    phase: str = "submission"


@dataclass(frozen=True)
class ElectionReport:
    totals: tuple
    winner: int
    winner_digest: bytes


@dataclass(frozen=True)
class RoundReport:
    """What happened in one round, for metrics and debugging."""

    round_index: int
    judge_verdicts: tuple  # +1/-1 per update, client order
    vote_totals: tuple     # plain screening tallies per update
    accepted: tuple        # client ids whose updates were aggregated
    abstained: tuple       # clients whose vote lists were missing/invalid
    aggregated: bool       # False when every update was rejected
    blocks_added: int
    election: ElectionReport | None = None


# --------------------------------------------------------------------------
# Pure consensus and aggregation rules
# --------------------------------------------------------------------------

def accept_by_votes(vote_lists, n_clients: int) -> tuple[tuple, tuple]:
    """Strict-majority rule: update j passes iff sum of votes > n/2.

    vote_lists holds one {0,1} sequence per client, or None for an abstaining
    client (counted as all-zero votes). Returns (accepted indices, totals).
    """
    if len(vote_lists) != n_clients:
        raise ProtocolError("one vote list (or None) required per client")
    n_updates = None
    for votes in vote_lists:
        if votes is None:
            continue
        if n_updates is None:
            n_updates = len(votes)
        elif len(votes) != n_updates:
            raise ProtocolError("vote lists disagree on update count")
    if n_updates is None:
        raise ProtocolError("all clients abstained from screening")
    totals = [0] * n_updates
    for votes in vote_lists:
        if votes is None:
            continue
        for j, v in enumerate(votes):
            if v not in (0, 1):
                raise ProtocolError("screening votes must be 0 or 1")
            totals[j] += v
    accepted = tuple(j for j, t in enumerate(totals) if t * 2 > n_clients)
    return accepted, tuple(totals)


@dataclass(frozen=True)
class AggregationWeights:
    """Per-accepted-client sample counts n_k; weights are n_k / n."""

    sizes: tuple

    def __post_init__(self):
        if not self.sizes:
            raise ProtocolError("aggregation needs at least one accepted update")
        if any(int(s) < 1 for s in self.sizes):
            raise ProtocolError("sample counts must be >= 1")

    @property
    def total(self) -> int:
        return int(sum(self.sizes))


def fedavg(updates, weights: AggregationWeights) -> np.ndarray:
    """Sample-size weighted average of parameter vectors."""
    if len(updates) != len(weights.sizes):
        raise ProtocolError("one weight per accepted update required")
    dim = len(updates[0])
    if any(len(u) != dim for u in updates):
        raise ProtocolError("updates disagree on parameter count")
    out = np.zeros(dim)
    for u, n_k in zip(updates, weights.sizes):
        out += (n_k / weights.total) * np.asarray(u, dtype=np.float64)
    return out


def pick_winner(totals) -> int:
    """Argmax with ties broken by the lowest candidate index."""
    if len(totals) == 0:
        raise ProtocolError("no election totals")
    return int(np.argmax(totals))


def sum_ballot_columns(group: GroupParams, ballot_rows):
    """Homomorphically add ballot rows columnwise; None rows are an error."""
    n = len(ballot_rows)
    for i, row in enumerate(ballot_rows):
        if row is None:
            raise ProtocolError(f"client {i} posted no ballot list")
        if len(row) != n:
            raise ProtocolError(f"client {i} ballot list has wrong length")
    tallies = []
    for j in range(n):
        acc = ballot_rows[0][j]
        for i in range(1, n):
            acc = votecrypt.hom_add(group, acc, ballot_rows[i][j])
        tallies.append(acc)
    return tallies


def decrypt_totals(group: GroupParams, tallies, share_rows, n_clients: int,
                   max_v: int):
    """Combine per-client decryption shares and decode each column total."""
    for i, row in enumerate(share_rows):
        if row is None:
            raise ProtocolError(f"client {i} posted no decryption shares")
        if len(row) != len(tallies):
            raise ProtocolError(f"client {i} share set has wrong length")
    totals = []
    for j, tally in enumerate(tallies):
        shares = [row[j] for row in share_rows]
        plain = votecrypt.combine_decrypt(group, tally, shares, n_clients)
        totals.append(votecrypt.discrete_log_small(group, plain, max_v))
    return tuple(totals)


# --------------------------------------------------------------------------
# Round phases
# --------------------------------------------------------------------------

def _advance(state: RoundState, expected: str, new: str) -> None:
    if state.phase != expected:
        raise ProtocolError(f"phase {new!r} cannot follow {state.phase!r}")
    state.phase = new


def _local_training(state: RoundState, clients, ctx: ProtocolContext,
                    attack_now: bool):
    updates = []
    for c in clients:
        cfg = replace(ctx.local_cfg, seed=derive_seed(
            ctx.base_seed, _DOM_LOCAL, state.round_index, c.client_id))
        trained, _ = nn.train(ctx.arch, state.global_params,
                              c.training_data(attack_now), cfg)
        updates.append(trained)
        digest = ledger.sha256_digest(nn.params_to_bytes(trained))
        state.chain = append_signed(
            state.chain, ModelSubmission(c.client_id, digest),
            c.client_id, c.signer)
    return updates


def judge_consensus(state: RoundState, clients, ctx: ProtocolContext):
    """Elect the judge: candidates, encrypted ballots, collective decryption.

    Every client builds a candidate forest, probes every candidate against
    the public test split, and casts one encrypted pass/fail ballot per
    candidate. Ballots are tallied homomorphically, decrypted n-of-n, and the
    highest total wins (ties to the lowest index).
    """
    n = len(clients)
    pk_group = votecrypt.combine_pks(ctx.group, [c.elgamal.pk for c in clients])

    candidates = []
    timings0 = None
    for c in clients:
        cfg = replace(ctx.judge_cfg, seed=derive_seed(
            ctx.base_seed, _DOM_JUDGE, c.client_id))
        forest, timings = train_judge_timed(ctx.arch, ctx.public,
                                            state.global_params, cfg)
        if c.client_id == clients[0].client_id:
            timings0 = timings
        candidates.append(forest)
        state.chain = append_signed(
            state.chain, JudgeSubmission(c.client_id, iforest.forest_digest(forest)),
            c.client_id, c.signer)

    ballot_rows = []
    for c in clients:
        probe_seed = derive_seed(ctx.base_seed, _DOM_EVAL, c.client_id)
        row = []
        for j, candidate in enumerate(candidates):
            vote = evaluate_judge(ctx.arch, candidate, ctx.p_test,
                                  state.global_params, ctx.eval_cfg, probe_seed)
            r = random.Random(derive_seed(
                ctx.base_seed, _DOM_BALLOT, c.client_id, j,
            )).randrange(1, ctx.group.q)
            row.append(votecrypt.encrypt_vote(ctx.group, pk_group, vote, r))
        ballot_rows.append(row)
        state.chain = append_signed(
            state.chain,
            JudgeBallotList(c.client_id, tuple((b.a, b.b) for b in row)),
            c.client_id, c.signer)

    tallies = sum_ballot_columns(ctx.group, ballot_rows)
    share_rows = []
    for c in clients:
        shares = [votecrypt.partial_decrypt(ctx.group, c.elgamal.sk, t)
                  for t in tallies]
        share_rows.append(shares)
        state.chain = append_signed(
            state.chain, DecryptionShareSet(c.client_id, tuple(shares)),
            c.client_id, c.signer)

    totals = decrypt_totals(ctx.group, tallies, share_rows, n, max_v=n)
    winner = pick_winner(totals)
    winner_digest = iforest.forest_digest(candidates[winner])
    state.chain = append_signed(
        state.chain, JudgeSubmission(clients[winner].client_id, winner_digest),
        ledger.OPERATOR_ID, ctx.operator_key)

    state.judge = candidates[winner]
    state.judge_digest = winner_digest
    state.judge_timings = timings0
    return ElectionReport(totals=totals, winner=winner,
                          winner_digest=winner_digest)


def _screening(state: RoundState, clients, ctx: ProtocolContext, updates):
    screen_seed = derive_seed(ctx.base_seed, _DOM_SCREEN, state.round_index)
    verdicts = [screen_update(ctx.arch, state.judge, u, ctx.p_test,
                              ctx.screen_batch_size, screen_seed)
                for u in updates]
    vote_lists = []
    abstained = []
    for c in clients:
        if c.vote_mode == "silent":
            vote_lists.append(None)
            abstained.append(c.client_id)
            continue
        if c.vote_mode == "collude" and c.malicious:
            votes = tuple(1 if other.malicious else 0 for other in clients)
        else:
            votes = tuple(1 if v == 1 else 0 for v in verdicts)
        vote_lists.append(votes)
        state.chain = append_signed(
            state.chain, ScreeningVoteList(c.client_id, votes),
            c.client_id, c.signer)
    accepted, totals = accept_by_votes(vote_lists, len(clients))
    return verdicts, accepted, totals, tuple(abstained)


def run_round(state: RoundState, clients, ctx: ProtocolContext,
              attack_now: bool = True) -> RoundReport:
    """Run one full round, mutating state (params, judge, chain) in place."""
    if state.phase != "submission":
        raise ProtocolError(f"round must start in phase 'submission', "
                            f"not {state.phase!r}")
    if not clients:
        raise ConfigError("no clients")
    blocks_before = len(state.chain)

    updates = _local_training(state, clients, ctx, attack_now)

    election = None
    if state.judge is None:
        _advance(state, "submission", "judge-election")
        election = judge_consensus(state, clients, ctx)
        _advance(state, "judge-election", "screening")
    else:
        _advance(state, "submission", "screening")

    verdicts, accepted, totals, abstained = _screening(state, clients, ctx,
                                                       updates)
    _advance(state, "screening", "aggregation")

    if accepted:
        weights = AggregationWeights(
            sizes=tuple(clients[j].n_samples for j in accepted))
        state.global_params = fedavg([updates[j] for j in accepted], weights)
        aggregated = True
    else:
        aggregated = False  # keep the previous global model
    digest = ledger.sha256_digest(nn.params_to_bytes(state.global_params))
    state.chain = append_signed(
        state.chain,
        AggregationResult(digest, tuple(clients[j].client_id for j in accepted)),
        ledger.OPERATOR_ID, ctx.operator_key)

    report = RoundReport(
        round_index=state.round_index,
        judge_verdicts=tuple(verdicts),
        vote_totals=totals,
        accepted=tuple(clients[j].client_id for j in accepted),
        abstained=abstained,
        aggregated=aggregated,
        blocks_added=len(state.chain) - blocks_before,
        election=election,
    )
    state.round_index += 1
    state.phase = "submission"
    return report


def run_round_undefended(state: RoundState, clients, ctx: ProtocolContext,
                         attack_now: bool = True) -> RoundReport:
    """Plain FedAvg round with screening switched off: every update counts.

    Used as the no-defense comparison arm; no judge is elected and no
    screening votes are cast, so poisoned updates flow straight into the
    average.
    """
    if state.phase != "submission":
        raise ProtocolError(f"round must start in phase 'submission', "
                            f"not {state.phase!r}")
    if not clients:
        raise ConfigError("no clients")
    blocks_before = len(state.chain)

    updates = _local_training(state, clients, ctx, attack_now)
    weights = AggregationWeights(sizes=tuple(c.n_samples for c in clients))
    state.global_params = fedavg(updates, weights)
    digest = ledger.sha256_digest(nn.params_to_bytes(state.global_params))
    state.chain = append_signed(
        state.chain,
        AggregationResult(digest, tuple(c.client_id for c in clients)),
        ledger.OPERATOR_ID, ctx.operator_key)

    report = RoundReport(
        round_index=state.round_index,
        judge_verdicts=(),
        vote_totals=(),
        accepted=tuple(c.client_id for c in clients),
        abstained=(),
        aggregated=True,
        blocks_added=len(state.chain) - blocks_before,
    )
    state.round_index += 1
    return report
