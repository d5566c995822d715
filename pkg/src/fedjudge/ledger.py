"""Append-only hash-linked ledger with signed blocks.

Every protocol action — model submission, judge submission, encrypted ballot
lists, screening votes, decryption shares, aggregation results — lands here as
a signed block. Blocks link by digest, so any byte-level tamper of a non-tip
block breaks the link to its successor, and tip tampering breaks the tip's own
signature. There is no mining: the round scheduler appends in client-id order,
so the chain is deterministic for a fixed simulation seed.

Payloads use a canonical little-endian encoding (fixed-width counts, length-
prefixed big integers) so digests are stable across processes.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from .errors import AuthenticationError, ConfigError, InputError, OrderingError
from .signing import SigningKey, verify_signature

DIGEST_SIZE = 32
OPERATOR_ID = 0xFFFFFFFF

_EXPORT_MAGIC = b"FJLG"
_EXPORT_VERSION = 1


def sha256_digest(raw: bytes) -> bytes:
    """The build's canonical 32-byte content digest."""
    return hashlib.sha256(raw).digest()


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def _u64(v: int) -> bytes:
    return struct.pack("<Q", v)


def _blob(raw: bytes) -> bytes:
    return _u32(len(raw)) + raw


def _bigint(v: int) -> bytes:
    if v < 0:
        raise InputError("ledger integers must be non-negative")
    return _blob(v.to_bytes((v.bit_length() + 7) // 8, "little"))


class _Reader:
    """Cursor over a byte blob; every read is bounds-checked."""

    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise InputError("truncated ledger record")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def bigint(self) -> int:
        return int.from_bytes(self.blob(), "little")

    def done(self) -> bool:
        return self.pos == len(self.raw)


# --------------------------------------------------------------------------
# Payloads
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GenesisRecord:
    """Root-of-trust record: starting model, public data, configs, roster."""

    model_digest: bytes
    data_digest: bytes
    forest_config: bytes
    group_name: str
    roster: tuple  # ((client_id, signing_public_key_bytes), ...)
    vote_pks: tuple  # ((client_id, elgamal_public_key_int), ...)
    operator_pub: bytes

    TAG = 0

    def to_bytes(self) -> bytes:
        out = [
            _blob(self.model_digest),
            _blob(self.data_digest),
            _blob(self.forest_config),
            _blob(self.group_name.encode()),
            _u32(len(self.roster)),
        ]
        for client_id, pub in self.roster:
            out.append(_u32(client_id))
            out.append(_blob(pub))
        out.append(_u32(len(self.vote_pks)))
        for client_id, pk in self.vote_pks:
            out.append(_u32(client_id))
            out.append(_bigint(pk))
        out.append(_blob(self.operator_pub))
        return b"".join(out)

    @staticmethod
    def from_bytes(raw: bytes) -> "GenesisRecord":
        r = _Reader(raw)
        model_digest = r.blob()
        data_digest = r.blob()
        forest_config = r.blob()
        group_name = r.blob().decode()
        roster = tuple((r.u32(), r.blob()) for _ in range(r.u32()))
        vote_pks = tuple((r.u32(), r.bigint()) for _ in range(r.u32()))
        operator_pub = r.blob()
        return GenesisRecord(
            model_digest, data_digest, forest_config, group_name, roster,
            vote_pks, operator_pub,
        )


@dataclass(frozen=True)
class ModelSubmission:
    client_id: int
    param_digest: bytes

    TAG = 1

    def to_bytes(self) -> bytes:
        return _u32(self.client_id) + _blob(self.param_digest)

    @staticmethod
    def from_bytes(raw: bytes) -> "ModelSubmission":
        r = _Reader(raw)
        return ModelSubmission(r.u32(), r.blob())


@dataclass(frozen=True)
class JudgeSubmission:
    client_id: int
    forest_digest: bytes

    TAG = 2

    def to_bytes(self) -> bytes:
        return _u32(self.client_id) + _blob(self.forest_digest)

    @staticmethod
    def from_bytes(raw: bytes) -> "JudgeSubmission":
        r = _Reader(raw)
        return JudgeSubmission(r.u32(), r.blob())


@dataclass(frozen=True)
class JudgeBallotList:
    """One encrypted vote (a, b) per judge candidate."""

    client_id: int
    ballots: tuple  # ((a, b), ...)

    TAG = 3

    def to_bytes(self) -> bytes:
        out = [_u32(self.client_id), _u32(len(self.ballots))]
        for a, b in self.ballots:
            out.append(_bigint(a))
            out.append(_bigint(b))
        return b"".join(out)

    @staticmethod
    def from_bytes(raw: bytes) -> "JudgeBallotList":
        r = _Reader(raw)
        client_id = r.u32()
        ballots = tuple((r.bigint(), r.bigint()) for _ in range(r.u32()))
        return JudgeBallotList(client_id, ballots)


@dataclass(frozen=True)
class ScreeningVoteList:
    """Plain accept/reject votes, one per submitted update."""

    client_id: int
    votes: tuple  # of ints in {0, 1}

    TAG = 4

    def to_bytes(self) -> bytes:
        for v in self.votes:
            if v not in (0, 1):
                raise InputError("screening votes must be 0 or 1")
        return _u32(self.client_id) + _blob(bytes(self.votes))

    @staticmethod
    def from_bytes(raw: bytes) -> "ScreeningVoteList":
        r = _Reader(raw)
        client_id = r.u32()
        votes = tuple(r.blob())
        if any(v not in (0, 1) for v in votes):
            raise InputError("screening votes must be 0 or 1")
        return ScreeningVoteList(client_id, votes)


@dataclass(frozen=True)
class DecryptionShareSet:
    """One decryption share per tally column."""

    client_id: int
    shares: tuple  # of ints

    TAG = 5

    def to_bytes(self) -> bytes:
        out = [_u32(self.client_id), _u32(len(self.shares))]
        out.extend(_bigint(s) for s in self.shares)
        return b"".join(out)

    @staticmethod
    def from_bytes(raw: bytes) -> "DecryptionShareSet":
        r = _Reader(raw)
        client_id = r.u32()
        shares = tuple(r.bigint() for _ in range(r.u32()))
        return DecryptionShareSet(client_id, shares)


@dataclass(frozen=True)
class AggregationResult:
    param_digest: bytes
    accepted: tuple  # of client ids

    TAG = 6

    def to_bytes(self) -> bytes:
        out = [_blob(self.param_digest), _u32(len(self.accepted))]
        out.extend(_u32(c) for c in self.accepted)
        return b"".join(out)

    @staticmethod
    def from_bytes(raw: bytes) -> "AggregationResult":
        r = _Reader(raw)
        param_digest = r.blob()
        accepted = tuple(r.u32() for _ in range(r.u32()))
        return AggregationResult(param_digest, accepted)


_PAYLOAD_TYPES = (
    GenesisRecord,
    ModelSubmission,
    JudgeSubmission,
    JudgeBallotList,
    ScreeningVoteList,
    DecryptionShareSet,
    AggregationResult,
)
_BY_TAG = {cls.TAG: cls for cls in _PAYLOAD_TYPES}


# --------------------------------------------------------------------------
# Blocks and the chain
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    payload_tag: int
    payload_bytes: bytes
    signer_id: int
    signature: bytes

    @property
    def payload(self):
        cls = _BY_TAG.get(self.payload_tag)
        if cls is None:
            raise InputError(f"unknown payload tag {self.payload_tag}")
        return cls.from_bytes(self.payload_bytes)

    def signed_message(self) -> bytes:
        return sign_message(self.index, self.prev_hash, self.payload_tag,
                            self.payload_bytes)

    def digest(self) -> bytes:
        return hashlib.sha256(
            self.signed_message() + _u32(self.signer_id) + _blob(self.signature)
        ).digest()

    def to_bytes(self) -> bytes:
        return (
            _u64(self.index)
            + _blob(self.prev_hash)
            + struct.pack("<B", self.payload_tag)
            + _blob(self.payload_bytes)
            + _u32(self.signer_id)
            + _blob(self.signature)
        )

    @staticmethod
    def from_bytes(raw: bytes) -> "Block":
        r = _Reader(raw)
        block = Block(
            index=r.u64(),
            prev_hash=r.blob(),
            payload_tag=struct.unpack("<B", r.take(1))[0],
            payload_bytes=r.blob(),
            signer_id=r.u32(),
            signature=r.blob(),
        )
        if not r.done():
            raise InputError("trailing bytes after block record")
        return block


def sign_message(index: int, prev_hash: bytes, payload_tag: int,
                 payload_bytes: bytes) -> bytes:
    """Canonical bytes a block author signs: (index, prev hash, payload)."""
    return (
        _u64(index) + _blob(prev_hash) + struct.pack("<B", payload_tag)
        + _blob(payload_bytes)
    )


@dataclass(frozen=True)
class Chain:
    blocks: tuple
    keys: dict = field(compare=False)  # signer id -> public key bytes

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def genesis(self) -> GenesisRecord:
        return self.blocks[0].payload


def genesis(model_digest: bytes, data_digest: bytes, forest_config: bytes,
            group_name: str, roster, operator_key: SigningKey,
            vote_pks=()) -> Chain:
    """Start a chain with the root-of-trust block, signed by the operator."""
    roster = tuple(roster)
    if not roster:
        raise ConfigError("client roster must not be empty")
    record = GenesisRecord(
        model_digest=model_digest,
        data_digest=data_digest,
        forest_config=forest_config,
        group_name=group_name,
        roster=roster,
        vote_pks=tuple(vote_pks),
        operator_pub=operator_key.public_bytes,
    )
    payload_bytes = record.to_bytes()
    message = sign_message(0, b"\x00" * DIGEST_SIZE, GenesisRecord.TAG, payload_bytes)
    block = Block(
        index=0,
        prev_hash=b"\x00" * DIGEST_SIZE,
        payload_tag=GenesisRecord.TAG,
        payload_bytes=payload_bytes,
        signer_id=OPERATOR_ID,
        signature=operator_key.sign(message),
    )
    keys = {client_id: pub for client_id, pub in roster}
    keys[OPERATOR_ID] = operator_key.public_bytes
    return Chain(blocks=(block,), keys=keys)


def append_block(chain: Chain, payload, signer_id: int, signature: bytes,
                 index: int | None = None,
                 prev_hash: bytes | None = None) -> Chain:
    """Append a signed payload; callers sign sign_message(...) over the tip.

    index/prev_hash default to the chain head. Passing stale values (a replay
    of an old block) raises OrderingError before any signature check.
    """
    expected_index = len(chain.blocks)
    expected_prev = chain.tip.digest()
    if index is None:
        index = expected_index
    if prev_hash is None:
        prev_hash = expected_prev
    if index != expected_index or prev_hash != expected_prev:
        raise OrderingError(
            f"block targets index {index}, chain head is {expected_index}"
        )
    if signer_id not in chain.keys:
        raise AuthenticationError(f"signer {signer_id} is not in the roster")
    payload_bytes = payload.to_bytes()
    message = sign_message(index, prev_hash, payload.TAG, payload_bytes)
    verify_signature(chain.keys[signer_id], message, signature)
    block = Block(
        index=index,
        prev_hash=prev_hash,
        payload_tag=payload.TAG,
        payload_bytes=payload_bytes,
        signer_id=signer_id,
        signature=signature,
    )
    return Chain(blocks=chain.blocks + (block,), keys=chain.keys)


def append_signed(chain: Chain, payload, signer_id: int, key: SigningKey) -> Chain:
    """Convenience wrapper: sign against the current tip, then append."""
    message = sign_message(len(chain.blocks), chain.tip.digest(), payload.TAG,
                           payload.to_bytes())
    return append_block(chain, payload, signer_id, key.sign(message))


@dataclass(frozen=True)
class ChainVerdict:
    valid: bool
    index: int | None = None
    cause: str | None = None


def verify_chain(chain: Chain) -> ChainVerdict:
    """Walk links and signatures; report the first failure, if any."""
    if not chain.blocks:
        return ChainVerdict(valid=False, index=None, cause="empty chain")
    try:
        record = chain.blocks[0].payload
        if not isinstance(record, GenesisRecord):
            return ChainVerdict(False, 0, "first block is not a genesis record")
        keys = {client_id: pub for client_id, pub in record.roster}
        keys[OPERATOR_ID] = record.operator_pub
    except InputError as exc:
        return ChainVerdict(False, 0, f"genesis payload unreadable: {exc}")
    prev_digest = b"\x00" * DIGEST_SIZE
    for i, block in enumerate(chain.blocks):
        if block.index != i:
            return ChainVerdict(False, i, f"index {block.index} breaks contiguity")
        if block.prev_hash != prev_digest:
            return ChainVerdict(False, i, "hash link broken")
        pub = keys.get(block.signer_id)
        if pub is None:
            return ChainVerdict(False, i, f"unknown signer {block.signer_id}")
        try:
            verify_signature(pub, block.signed_message(), block.signature)
        except AuthenticationError:
            return ChainVerdict(False, i, "signature failure")
        try:
            block.payload
        except InputError as exc:
            return ChainVerdict(False, i, f"payload unreadable: {exc}")
        prev_digest = block.digest()
    return ChainVerdict(valid=True)


# --------------------------------------------------------------------------
# Export / import
# --------------------------------------------------------------------------

def chain_to_bytes(chain: Chain) -> bytes:
    """Length-prefixed binary log: magic, version, count, then blocks."""
    out = [_EXPORT_MAGIC, _u32(_EXPORT_VERSION), _u64(len(chain.blocks))]
    for block in chain.blocks:
        out.append(_blob(block.to_bytes()))
    return b"".join(out)


def chain_from_bytes(raw: bytes) -> Chain:
    """Parse an exported log. Structural errors raise; tampering that leaves
    the structure parseable is left for verify_chain to report."""
    r = _Reader(raw)
    if r.take(4) != _EXPORT_MAGIC:
        raise InputError("not a chain export (bad magic)")
    version = r.u32()
    if version != _EXPORT_VERSION:
        raise InputError(f"unsupported chain export version {version}")
    blocks = tuple(Block.from_bytes(r.blob()) for _ in range(r.u64()))
    if not r.done():
        raise InputError("trailing bytes after chain export")
    if not blocks:
        raise InputError("chain export holds no blocks")
    keys: dict = {}
    try:
        record = blocks[0].payload
        if isinstance(record, GenesisRecord):
            keys = {client_id: pub for client_id, pub in record.roster}
            keys[OPERATOR_ID] = record.operator_pub
    except InputError:
        pass  # verify_chain will name the broken genesis
    return Chain(blocks=blocks, keys=keys)


def chain_to_text(chain: Chain) -> str:
    """Human-readable dump, one block per record."""
    lines = []
    for block in chain.blocks:
        lines.append(f"block {block.index}")
        lines.append(f"  digest: {block.digest().hex()}")
        lines.append(f"  prev:   {block.prev_hash.hex()}")
        signer = "operator" if block.signer_id == OPERATOR_ID else str(block.signer_id)
        lines.append(f"  signer: {signer}")
        try:
            payload = block.payload
            lines.append(f"  type:   {type(payload).__name__}")
            lines.append(f"  data:   {payload}")
        except InputError:
            lines.append("  type:   <unreadable>")
        lines.append("")
    return "\n".join(lines)
