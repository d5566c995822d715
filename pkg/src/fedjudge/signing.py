"""Ed25519 signing helpers with deterministic, seed-derived keys.

Every ledger block is signed by its author; verifiers look the author's
public key up in the genesis roster. Key material is derived from a seed so
simulations are reproducible end to end.
"""
from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import AuthenticationError


class SigningKey:
    """Ed25519 private key derived from a 64-bit seed and a label."""

    def __init__(self, seed: int, label: str = ""):
        raw = hashlib.sha256(
            b"ed25519-key:" + seed.to_bytes(8, "little") + label.encode()
        ).digest()
        self._key = Ed25519PrivateKey.from_private_bytes(raw)
        self.public_bytes = self._key.public_key().public_bytes_raw()

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def verify_signature(public_bytes: bytes, message: bytes, signature: bytes) -> None:
    """Raise AuthenticationError unless signature is valid for message."""
    try:
        pub = Ed25519PublicKey.from_public_bytes(public_bytes)
        pub.verify(signature, message)
    except (InvalidSignature, ValueError) as exc:
        raise AuthenticationError("signature verification failed") from exc
