"""Exponential ElGamal over a prime-order group, for homomorphic vote tallies.

Votes are encoded in the exponent (g^v), so componentwise ciphertext
multiplication adds plaintexts; the total is recovered by a bounded
discrete-log table, which is exact because a tally never exceeds the client
count. Keys are n-of-n additive shares: the group public key is the product
of all per-client public keys and decryption needs a share from every client.

Two group backends are provided: a small safe-prime group whose exponents are
easy to check by hand in tests, and a 1536-bit safe-prime group for realistic
ciphertext sizes. Both are subgroups of quadratic residues mod p with prime
order q = (p - 1) / 2.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

from .errors import ConfigError, InputError, ProtocolError

# 1536-bit safe prime from the standard MODP series; 2 generates the
# order-q subgroup of quadratic residues.
_MODP_1536 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF",
    16,
)


@dataclass(frozen=True)
class GroupParams:
    """Cyclic group of prime order q: the QR subgroup of Z_p* for safe prime p."""

    p: int
    q: int
    g: int

    def __post_init__(self):
        if self.p != 2 * self.q + 1:
            raise ConfigError("p must be the safe prime 2q + 1")
        if not 1 < self.g < self.p:
            raise ConfigError("generator out of range")

    @property
    def element_size(self) -> int:
        """Fixed byte length used to encode group elements."""
        return (self.p.bit_length() + 7) // 8

    def element_to_bytes(self, e: int) -> bytes:
        return e.to_bytes(self.element_size, "little")

    def element_from_bytes(self, raw: bytes) -> int:
        if len(raw) != self.element_size:
            raise InputError("group element blob has the wrong length")
        return int.from_bytes(raw, "little")

    @staticmethod
    def small() -> "GroupParams":
        """Human-checkable group: p = 2039, q = 1019, g = 49 (= 7^2)."""
        return GroupParams(p=2039, q=1019, g=49)

    @staticmethod
    def modp_1536() -> "GroupParams":
        return GroupParams(p=_MODP_1536, q=(_MODP_1536 - 1) // 2, g=2)

    @staticmethod
    def by_name(name: str) -> "GroupParams":
        if name == "small":
            return GroupParams.small()
        if name == "modp_1536":
            return GroupParams.modp_1536()
        raise ConfigError(f"unknown crypto group {name!r}")


@dataclass(frozen=True)
class KeyPair:
    sk: int
    pk: int


@dataclass(frozen=True)
class EncryptedBallot:
    a: int  # g^r
    b: int  # g^v * pk^r


@dataclass(frozen=True)
class EncryptedTally:
    a: int
    b: int


def keygen(params: GroupParams, seed: int) -> KeyPair:
    """Seeded secret scalar in [1, q) and its public key g^sk."""
    sk = random.Random(seed).randrange(1, params.q)
    return KeyPair(sk=sk, pk=pow(params.g, sk, params.p))


def combine_pks(params: GroupParams, pks: list[int]) -> int:
    """Group public key: the product of all client public keys."""
    if not pks:
        raise InputError("need at least one public key")
    out = 1
    for pk in pks:
        out = out * pk % params.p
    return out


def encrypt_vote(params: GroupParams, pk_group: int, v: int, r: int) -> EncryptedBallot:
    """Ballot (g^r, g^v * pk^r). Votes must be 0 or 1; r in [0, q)."""
    if v not in (0, 1):
        raise InputError(f"vote must be 0 or 1, got {v}")
    if not 0 <= r < params.q:
        raise InputError("encryption randomness out of range")
    a = pow(params.g, r, params.p)
    b = pow(params.g, v, params.p) * pow(pk_group, r, params.p) % params.p
    return EncryptedBallot(a=a, b=b)


def hom_add(params: GroupParams, x, y) -> EncryptedTally:
    """Componentwise product of two ciphertexts; plaintexts add."""
    return EncryptedTally(a=x.a * y.a % params.p, b=x.b * y.b % params.p)


def partial_decrypt(params: GroupParams, sk_i: int, c) -> int:
    """One client's decryption share a^sk_i."""
    return pow(c.a, sk_i, params.p)


def combine_decrypt(params: GroupParams, c, shares: list[int], n_clients: int) -> int:
    """Strip all n shares off the ciphertext, leaving g^V."""
    if len(shares) != n_clients:
        raise ProtocolError(
            f"need exactly {n_clients} decryption shares, got {len(shares)}"
        )
    blind = 1
    for s in shares:
        blind = blind * s % params.p
    return c.b * pow(blind, -1, params.p) % params.p


@lru_cache(maxsize=None)
def _dlog_table(params: GroupParams, max_v: int) -> dict[int, int]:
    table = {}
    acc = 1
    for v in range(max_v + 1):
        table[acc] = v
        acc = acc * params.g % params.p
    return table


def discrete_log_small(params: GroupParams, y: int, max_v: int) -> int:
    """Recover V from g^V by table lookup over g^0 .. g^max_v."""
    table = _dlog_table(params, max_v)
    if y not in table:
        raise ProtocolError("malformed tally: value outside the decodable range")
    return table[y]


def ballot_to_bytes(params: GroupParams, c) -> bytes:
    return params.element_to_bytes(c.a) + params.element_to_bytes(c.b)


def ballot_from_bytes(params: GroupParams, raw: bytes) -> EncryptedBallot:
    n = params.element_size
    if len(raw) != 2 * n:
        raise InputError("ciphertext blob has the wrong length")
    return EncryptedBallot(
        a=params.element_from_bytes(raw[:n]),
        b=params.element_from_bytes(raw[n:]),
    )
