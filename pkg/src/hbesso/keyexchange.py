"""Key exchange layer: PIN-derived long-term keys, seal/open authenticated
encryption, challenge-response authentication, and session-key transport.

seal/open compose the block cipher in counter mode with the poly MAC
(encrypt-then-MAC).  Per message, counter blocks 0 and 1 of the keystream
become the one-time MAC key (r clamped from block 0, mask s from block 1);
payload keystream starts at counter 2.  The tag covers
aad || nonce || ciphertext || len64(aad) || len64(ciphertext).

Verification always precedes decryption: no plaintext is released on tag
failure, and tampering, wrong keys and truncation are indistinguishable.
"""

from __future__ import annotations

import base64
import binascii
import hmac
import secrets
import threading
import time
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional

from . import cipher, polymac
from .polymac import MacKey, mac_compute

KEY_SIZE = 16
NONCE_SIZE = 12
DEFAULT_KDF_ITERATIONS = 10_000
DEFAULT_CHALLENGE_EXPIRY = 60.0

ACCEPT = "accept"
REJECT_AUTH = "reject-auth"
REJECT_EXPIRED = "reject-expired"
REJECT_REPLAY = "reject-replay"


class SealRejected(Exception):
    """Tag verification failed; the cause is deliberately not disclosed."""


def rand_bytes(rng: Optional[Random], n: int) -> bytes:
    """n random octets from `rng` if given (deterministic tests), else the OS."""
    return rng.randbytes(n) if rng is not None else secrets.token_bytes(n)


def fresh_nonce(rng: Optional[Random] = None) -> bytes:
    return rand_bytes(rng, NONCE_SIZE)


def derive_long_term_key(pin: bytes, salt: bytes, iterations: int = DEFAULT_KDF_ITERATIONS) -> bytes:
    """Stretch a PIN into a 16-octet long-term key.

    The PIN is padded to one block (0x80 then zeros) and used as a cipher
    key for a one-way XOR iteration seeded with the salt:
    X0 = salt, X_{i+1} = E_pin(X_i) XOR X_i.
    """
    if not pin:
        raise ValueError("PIN must not be empty")
    if len(pin) > KEY_SIZE:
        raise ValueError(f"PIN must be at most {KEY_SIZE} octets, got {len(pin)}")
    if len(salt) != KEY_SIZE:
        raise ValueError(f"salt must be {KEY_SIZE} octets, got {len(salt)}")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    padded = pin if len(pin) == KEY_SIZE else pin + b"\x80" + bytes(KEY_SIZE - len(pin) - 1)
    schedule = cipher.expand_key(padded)
    x = bytes(salt)
    for _ in range(iterations):
        enc = cipher.encrypt_block(x, schedule)
        x = bytes(a ^ b for a, b in zip(enc, x))
    return x


@dataclass(frozen=True)
class SealedPayload:
    """Authenticated-encryption output: nonce, ciphertext, tag, key id."""

    nonce: bytes
    ciphertext: bytes
    tag: bytes
    key_id: str = ""


@dataclass(frozen=True)
class SessionKey:
    """Fresh per-session 16-octet key with issuance metadata."""

    k: bytes
    issued_at: float
    lifetime: float


def derive_mac_key(key: bytes, nonce: bytes) -> MacKey:
    """Per-message one-time MAC key from counter blocks 0 and 1."""
    schedule = cipher.expand_key(key)
    stream = cipher.ctr_keystream(schedule, nonce, 2, start=0)
    return MacKey.from_material(stream[:16], stream[16:32])


def _mac_input(aad: bytes, nonce: bytes, ciphertext: bytes, key_id: str) -> bytes:
    # the key id is part of the authenticated payload triple; its length
    # field keeps the aad/key-id split unambiguous
    kid = key_id.encode("utf-8")
    return (
        aad
        + kid
        + nonce
        + ciphertext
        + len(aad).to_bytes(8, "big")
        + len(kid).to_bytes(8, "big")
        + len(ciphertext).to_bytes(8, "big")
    )


def seal(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes = b"", key_id: str = "") -> SealedPayload:
    """Encrypt-then-MAC `plaintext`; the nonce must be fresh for this key.

    Protocol keys are 16 octets; the 24/32-octet cipher classes are
    accepted for benchmarking.
    """
    if len(key) not in cipher.ROUNDS:
        raise ValueError("sealing key must be 16, 24 or 32 octets")
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} octets")
    schedule = cipher.expand_key(key)
    nblocks = (len(plaintext) + 15) // 16
    stream = cipher.ctr_keystream(schedule, nonce, nblocks + 2, start=0)
    mac_key = MacKey.from_material(stream[:16], stream[16:32])
    pad = stream[32 : 32 + len(plaintext)]
    ciphertext = bytes(a ^ b for a, b in zip(plaintext, pad))
    tag = mac_compute(mac_key, _mac_input(aad, nonce, ciphertext, key_id))
    return SealedPayload(nonce=nonce, ciphertext=ciphertext, tag=tag, key_id=key_id)


def open_sealed(key: bytes, payload: SealedPayload, aad: bytes = b"") -> bytes:
    """Verify then decrypt; raises :class:`SealRejected` on any failure."""
    if len(key) not in cipher.ROUNDS:
        raise ValueError("opening key must be 16, 24 or 32 octets")
    if len(payload.nonce) != NONCE_SIZE or len(payload.tag) != polymac.TAG_SIZE:
        raise SealRejected("sealed payload rejected")
    schedule = cipher.expand_key(key)
    nblocks = (len(payload.ciphertext) + 15) // 16
    stream = cipher.ctr_keystream(schedule, payload.nonce, nblocks + 2, start=0)
    mac_key = MacKey.from_material(stream[:16], stream[16:32])
    expected = mac_compute(
        mac_key, _mac_input(aad, payload.nonce, payload.ciphertext, payload.key_id)
    )
    if not hmac.compare_digest(expected, payload.tag):
        raise SealRejected("sealed payload rejected")
    pad = stream[32 : 32 + len(payload.ciphertext)]
    return bytes(a ^ b for a, b in zip(payload.ciphertext, pad))


def encode_payload(payload: SealedPayload) -> str:
    """Wire form: base64(key-id-len:1 || key-id || nonce:12 || tag:16 || ciphertext)."""
    kid = payload.key_id.encode("utf-8")
    if len(kid) > 255:
        raise ValueError("key id longer than 255 octets")
    raw = bytes([len(kid)]) + kid + payload.nonce + payload.tag + payload.ciphertext
    return base64.b64encode(raw).decode("ascii")


def decode_payload(encoded: str) -> SealedPayload:
    """Inverse of :func:`encode_payload`; raises ValueError on malformed input."""
    try:
        raw = base64.b64decode(encoded.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise ValueError(f"sealed payload is not valid base64: {exc}") from exc
    if len(raw) < 1:
        raise ValueError("sealed payload too short")
    kid_len = raw[0]
    if len(raw) < 1 + kid_len + NONCE_SIZE + polymac.TAG_SIZE:
        raise ValueError("sealed payload truncated")
    kid = raw[1 : 1 + kid_len].decode("utf-8")
    rest = raw[1 + kid_len :]
    return SealedPayload(
        nonce=rest[:NONCE_SIZE],
        tag=rest[NONCE_SIZE : NONCE_SIZE + polymac.TAG_SIZE],
        ciphertext=rest[NONCE_SIZE + polymac.TAG_SIZE :],
        key_id=kid,
    )


@dataclass(frozen=True)
class Challenge:
    """Single-use authentication challenge bound to a user id."""

    challenge_id: str
    user_id: str
    nonce: bytes
    issued_at: float
    expires_at: float


def answer_challenge(ltk: bytes, ch: Challenge) -> bytes:
    """Prove knowledge of the long-term key for this challenge.

    The one-time MAC key derives from the long-term key and the leading
    12 octets of the challenge nonce (same derivation as seal); the full
    nonce is covered by the authenticated message.
    """
    mac_key = derive_mac_key(ltk, ch.nonce[:NONCE_SIZE])
    return mac_compute(mac_key, ch.user_id.encode("utf-8") + ch.nonce)


class ChallengeStore:
    """Shared table of outstanding challenges; check-and-consume is atomic.

    A challenge is consumed by its first verification attempt, accepted or
    not, so concurrent verifications admit at most one accept.
    """

    def __init__(
        self,
        expiry: float = DEFAULT_CHALLENGE_EXPIRY,
        clock: Callable[[], float] = time.time,
        rng: Optional[Random] = None,
    ) -> None:
        self.expiry = expiry
        self.clock = clock
        self.rng = rng
        self._lock = threading.Lock()
        self._table: dict[str, Challenge] = {}

    def issue(self, user_id: str) -> Challenge:
        now = self.clock()
        ch = Challenge(
            challenge_id=rand_bytes(self.rng, 16).hex(),
            user_id=user_id,
            nonce=rand_bytes(self.rng, 16),
            issued_at=now,
            expires_at=now + self.expiry,
        )
        with self._lock:
            self._table[ch.challenge_id] = ch
        return ch

    def consume(self, challenge_id: str) -> Optional[Challenge]:
        with self._lock:
            return self._table.pop(challenge_id, None)

    def verify(self, ltk: bytes, challenge_id: str, user_id: str, tag: bytes) -> str:
        """Consume the challenge and check the answer tag.

        Returns one of accept / reject-replay (unknown or already consumed)
        / reject-expired / reject-auth.
        """
        ch = self.consume(challenge_id)
        if ch is None:
            return REJECT_REPLAY
        if self.clock() >= ch.expires_at:
            return REJECT_EXPIRED
        if ch.user_id != user_id:
            return REJECT_AUTH
        expected = answer_challenge(ltk, ch)
        if not hmac.compare_digest(expected, tag):
            return REJECT_AUTH
        return ACCEPT


def wrap_session_key(
    ltk: bytes,
    sk: SessionKey,
    user_id: str,
    key_id: str = "",
    rng: Optional[Random] = None,
) -> SealedPayload:
    """Seal the session-key material under the long-term key; aad = user id."""
    return seal(ltk, fresh_nonce(rng), sk.k, aad=user_id.encode("utf-8"), key_id=key_id)


def unwrap_session_key(
    ltk: bytes,
    payload: SealedPayload,
    user_id: str,
    issued_at: Optional[float] = None,
    lifetime: float = 3600.0,
) -> SessionKey:
    """Open a wrapped session key; raises :class:`SealRejected` on failure."""
    k = open_sealed(ltk, payload, aad=user_id.encode("utf-8"))
    if len(k) != KEY_SIZE:
        raise SealRejected("sealed payload rejected")
    return SessionKey(k=k, issued_at=time.time() if issued_at is None else issued_at, lifetime=lifetime)
