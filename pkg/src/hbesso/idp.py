"""Identity provider: user directory, registration, PIN challenge-response
authentication, and SSO response issuance.

The directory persists one record per line (tab-separated, binary fields
base64): user id, salt, sealed long-term key, created-at.  Long-term keys
are stored sealed under the IdP master key, never in plaintext, and PINs
are never stored at all.

HTTP surface:
  GET  /challenge?user=U      -> challenge XML (id, nonce, expiry, salt,
                                 KDF iterations)
  POST /sso                   -> SAMLResponse (form-encoded) or 403 reason
  POST /register              -> 201, 409 duplicate-user or 400 invalid-pin
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional
from urllib.parse import urlencode

from . import keyexchange as kx
from . import saml
from .httpbase import ServiceHandler, SkewableClock
from .keyexchange import Challenge, SealedPayload
from .keystore import KeyStore

log = logging.getLogger("hbesso.idp")

UNKNOWN_SP = "unknown-sp"
DUPLICATE_USER = "duplicate-user"
INVALID_PIN = "invalid-pin"


class IdpReject(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class DuplicateUserError(Exception):
    pass


class UnknownUserError(Exception):
    pass


class CorruptDirectoryError(Exception):
    pass


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    salt: bytes
    wrapped_ltk: SealedPayload
    created_at: int


@dataclass
class IdpConfig:
    entity_id: str
    master_key_id: str
    # SP entity id -> federation key id (keys resolve in the key store)
    federation_keys: dict[str, str] = field(default_factory=dict)
    assertion_lifetime: float = 300.0
    challenge_expiry: float = 60.0
    kdf_iterations: int = kx.DEFAULT_KDF_ITERATIONS
    listen_address: str = "127.0.0.1:8443"
    directory_path: Optional[str] = None


class UserDirectory:
    """Registered identities; registrations and lookups serialize on a lock."""

    def __init__(self) -> None:
        self._records: dict[str, UserRecord] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def get(self, user_id: str) -> Optional[UserRecord]:
        with self._lock:
            return self._records.get(user_id)

    def add(self, record: UserRecord) -> None:
        with self._lock:
            if record.user_id in self._records:
                raise DuplicateUserError(record.user_id)
            self._records[record.user_id] = record

    def records(self) -> list[UserRecord]:
        with self._lock:
            return list(self._records.values())

    def salts(self) -> set[bytes]:
        with self._lock:
            return {r.salt for r in self._records.values()}


def persist_directory(directory: UserDirectory, path: str) -> None:
    """Atomic rewrite: temp file then rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in directory.records():
            fh.write(
                "\t".join(
                    (
                        record.user_id,
                        base64.b64encode(record.salt).decode("ascii"),
                        kx.encode_payload(record.wrapped_ltk),
                        str(record.created_at),
                    )
                )
                + "\n"
            )
    os.replace(tmp, path)


def load_directory(path: str) -> UserDirectory:
    """Load a persisted directory; any corrupt record aborts the whole load."""
    directory = UserDirectory()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                user_id, salt_b64, wrapped, created = line.split("\t")
                record = UserRecord(
                    user_id=user_id,
                    salt=base64.b64decode(salt_b64, validate=True),
                    wrapped_ltk=kx.decode_payload(wrapped),
                    created_at=int(created),
                )
                if len(record.salt) != 16:
                    raise ValueError("salt must be 16 octets")
            except Exception as exc:
                raise CorruptDirectoryError(f"{path} line {lineno}: {exc}") from exc
            directory.add(record)
    return directory


class IdentityProvider:
    def __init__(
        self,
        config: IdpConfig,
        key_store: KeyStore,
        directory: Optional[UserDirectory] = None,
        clock: Callable[[], float] = time.time,
        rng: Optional[Random] = None,
    ) -> None:
        key_store.get(config.master_key_id)  # every referenced id must resolve
        for sp, key_id in config.federation_keys.items():
            key_store.get(key_id)
        self.config = config
        self.key_store = key_store
        self.directory = directory if directory is not None else UserDirectory()
        self.clock = SkewableClock(clock)
        self.rng = rng
        self.challenges = kx.ChallengeStore(
            expiry=config.challenge_expiry, clock=self.clock, rng=rng
        )
        self._register_lock = threading.Lock()
        self._issued_ids: set[str] = set()
        self._issued_lock = threading.Lock()

    @property
    def _master_key(self) -> bytes:
        return self.key_store.get(self.config.master_key_id)

    def register_user(self, user_id: str, pin: bytes) -> UserRecord:
        """Create and persist a user record; the success reply comes after
        the record hits disk."""
        if not user_id or any(c in user_id for c in "\t\n"):
            raise ValueError(f"bad user id {user_id!r}")
        ltk_probe = kx.derive_long_term_key  # validates PIN shape first
        with self._register_lock:
            if self.directory.get(user_id) is not None:
                raise DuplicateUserError(user_id)
            salt = kx.rand_bytes(self.rng, 16)
            while salt in self.directory.salts():
                salt = kx.rand_bytes(self.rng, 16)
            ltk = ltk_probe(pin, salt, self.config.kdf_iterations)
            wrapped = kx.seal(
                self._master_key,
                kx.fresh_nonce(self.rng),
                ltk,
                aad=user_id.encode("utf-8"),
                key_id=self.config.master_key_id,
            )
            record = UserRecord(
                user_id=user_id,
                salt=salt,
                wrapped_ltk=wrapped,
                created_at=int(self.clock()),
            )
            self.directory.add(record)
            if self.config.directory_path:
                persist_directory(self.directory, self.config.directory_path)
        log.info("registered user %s", user_id)
        return record

    def issue_challenge(self, user_id: str) -> tuple[Challenge, bytes]:
        """Challenge plus the user's salt.

        Unknown users get a real (consumable) challenge and a stable dummy
        salt so the error shape does not leak whether the user exists;
        verification will end in reject-auth.
        """
        record = self.directory.get(user_id)
        salt = record.salt if record else self._dummy_salt(user_id)
        return self.challenges.issue(user_id), salt

    def _dummy_salt(self, user_id: str) -> bytes:
        # cipher-based CBC absorption of the user id under the master key;
        # deterministic so repeated probes see one consistent salt
        from . import cipher

        schedule = cipher.expand_key(self._master_key)
        data = user_id.encode("utf-8") + b"\x80"
        data += bytes(-len(data) % 16)
        state = bytes(16)
        for i in range(0, len(data), 16):
            block = bytes(a ^ b for a, b in zip(state, data[i : i + 16]))
            state = cipher.encrypt_block(block, schedule)
        return state

    def _user_ltk(self, user_id: str) -> Optional[bytes]:
        record = self.directory.get(user_id)
        if record is None:
            return None
        return kx.open_sealed(
            self._master_key, record.wrapped_ltk, aad=user_id.encode("utf-8")
        )

    def handle_sso(
        self,
        user_id: str,
        challenge_id: str,
        answer: bytes,
        request: saml.AuthnRequest,
    ) -> saml.SsoResponse:
        """Second SSO leg: verify the challenge answer, then issue the
        encrypted assertion.  Raises :class:`IdpReject` with the reason."""
        fed_key_id = self.config.federation_keys.get(request.sp_entity_id)
        if fed_key_id is None:
            raise IdpReject(UNKNOWN_SP)
        ltk = self._user_ltk(user_id)
        if ltk is None:
            # burn the challenge with an unusable key: unknown users look
            # exactly like a wrong PIN
            ltk = kx.rand_bytes(self.rng, 16)
        result = self.challenges.verify(ltk, challenge_id, user_id, answer)
        if result != kx.ACCEPT:
            raise IdpReject(result)
        assertion = self._build_unique_assertion(user_id, request.sp_entity_id)
        encrypted = saml.encrypt_assertion(
            assertion, self.key_store.get(fed_key_id), fed_key_id, rng=self.rng
        )
        log.info("issued assertion %s for %s -> %s", assertion.id, user_id, request.sp_entity_id)
        return saml.SsoResponse(
            in_response_to=request.id,
            issuer=self.config.entity_id,
            encrypted_assertion=encrypted,
        )

    def _build_unique_assertion(self, user_id: str, audience: str) -> saml.Assertion:
        while True:
            assertion = saml.build_assertion(
                issuer=self.config.entity_id,
                subject=user_id,
                audience=audience,
                now=self.clock(),
                lifetime=self.config.assertion_lifetime,
                rng=self.rng,
            )
            with self._issued_lock:
                if assertion.id not in self._issued_ids:
                    self._issued_ids.add(assertion.id)
                    return assertion


def challenge_document(ch: Challenge, salt: bytes, kdf_iterations: int) -> bytes:
    root = ET.Element(
        "Challenge", id=ch.challenge_id, **{"expires-at": saml.format_timestamp(ch.expires_at)}
    )
    ET.SubElement(root, "Nonce").text = base64.b64encode(ch.nonce).decode("ascii")
    ET.SubElement(root, "Salt").text = base64.b64encode(salt).decode("ascii")
    ET.SubElement(root, "KdfIterations").text = str(kdf_iterations)
    return ET.tostring(root, encoding="utf-8")


def parse_challenge_document(xml: bytes, user_id: str) -> tuple[Challenge, bytes, int]:
    """Client-side decode of the challenge wire document.

    Returns (challenge, salt, kdf-iterations); the challenge carries the
    user id it will be answered for.
    """
    root = ET.fromstring(xml)
    if root.tag != "Challenge":
        raise ValueError(f"expected a Challenge document, got {root.tag!r}")
    nonce = base64.b64decode(root.findtext("Nonce", ""), validate=True)
    salt = base64.b64decode(root.findtext("Salt", ""), validate=True)
    iterations = int(root.findtext("KdfIterations", ""))
    expires_at = saml.parse_timestamp(root.get("expires-at", ""))
    ch = Challenge(
        challenge_id=root.get("id", ""),
        user_id=user_id,
        nonce=nonce,
        issued_at=0.0,
        expires_at=expires_at,
    )
    return ch, salt, iterations


class IdpHandler(ServiceHandler):
    def do_GET(self):
        self.apply_test_clock()
        idp: IdentityProvider = self.service
        if self.path.split("?")[0] == "/challenge":
            user = self.query().get("user")
            if not user:
                self.respond(400, "missing user parameter")
                return
            ch, salt = idp.issue_challenge(user)
            self.respond(
                200,
                challenge_document(ch, salt, idp.config.kdf_iterations),
                content_type="application/xml",
            )
            return
        self.respond(404, "not found")

    def do_POST(self):
        self.apply_test_clock()
        idp: IdentityProvider = self.service
        fields = self.form()  # always drain the body; connections are reused
        if self.path == "/register":
            user, pin = fields.get("user", ""), fields.get("pin", "")
            try:
                idp.register_user(user, pin.encode("utf-8"))
            except DuplicateUserError:
                self.respond(409, DUPLICATE_USER)
            except ValueError:
                self.respond(400, INVALID_PIN)
            else:
                self.respond(201, "created")
            return
        if self.path == "/sso":
            self._handle_sso(idp, fields)
            return
        self.respond(404, "not found")

    def _handle_sso(self, idp: IdentityProvider, fields: dict[str, str]) -> None:
        try:
            request_xml = base64.b64decode(fields.get("SAMLRequest", ""), validate=True)
            request = saml.parse(request_xml)
            if not isinstance(request, saml.AuthnRequest):
                raise saml.MalformedXml("SAMLRequest is not an AuthnRequest")
            answer = base64.b64decode(fields.get("answer", ""), validate=True)
        except (ValueError, saml.SamlError):
            self.respond(400, "malformed")
            return
        try:
            response = idp.handle_sso(
                user_id=fields.get("user", ""),
                challenge_id=fields.get("challenge-id", ""),
                answer=answer,
                request=request,
            )
        except IdpReject as reject:
            log.info("sso rejected: %s", reject.reason)
            self.respond(403, reject.reason)
            return
        encoded = base64.b64encode(saml.serialize(response)).decode("ascii")
        self.respond(
            200,
            urlencode({"SAMLResponse": encoded}),
            content_type="application/x-www-form-urlencoded",
        )
