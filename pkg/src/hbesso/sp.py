"""Service provider: gates a protected resource behind SSO, consumes
encrypted assertions with replay protection, and mints short-lived
bearer sessions.

HTTP surface:
  GET  /resource   -> 200 (valid X-Session) | 302 redirect to the IdP
                      carrying a SAMLRequest | 401 (bad/expired session)
  POST /acs        -> 200 with an X-Session token, or 403 with the reason

Validation precedes the replay check so the replay cache only ever holds
authenticated assertion ids; replay entries expire once the time window
alone would reject the assertion.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional
from urllib.parse import quote

from . import keyexchange as kx
from . import saml
from .httpbase import ServiceHandler, SkewableClock
from .keystore import KeyStore

log = logging.getLogger("hbesso.sp")

UNKNOWN_REQUEST = "unknown-request"
REPLAYED = "replayed"
MALFORMED = "malformed"

SESSION_HEADER = "X-Session"


class SpReject(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class SpConfig:
    entity_id: str
    acs_url: str
    idp_url: str
    federation_key_id: str
    clock_skew: float = saml.DEFAULT_CLOCK_SKEW
    session_lifetime: float = 600.0
    pending_expiry: float = 300.0
    listen_address: str = "127.0.0.1:8444"


@dataclass(frozen=True)
class ResourceSession:
    token: str
    subject: str
    expires_at: float


class ReplayCache:
    """Consumed assertion ids with expiry; check-and-insert is atomic."""

    def __init__(self) -> None:
        self._entries: dict[str, float] = {}
        self._lock = threading.Lock()

    def check_and_insert(self, assertion_id: str, expires_at: float, now: float) -> bool:
        """True iff the id was absent (and is now recorded)."""
        with self._lock:
            self._evict(now)
            if assertion_id in self._entries:
                return False
            self._entries[assertion_id] = expires_at
            return True

    def _evict(self, now: float) -> None:
        stale = [aid for aid, exp in self._entries.items() if exp <= now]
        for aid in stale:
            del self._entries[aid]

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class _PendingEntry:
    issued_at: float
    consumed: bool = False


class PendingRequests:
    """Outstanding AuthnRequests; entries expire after a configured window.

    A consumed entry stays recognizable until expiry so a replayed response
    is rejected as `replayed` (by the replay cache) rather than mistaken
    for a response to a never-issued request.
    """

    def __init__(self, expiry: float) -> None:
        self.expiry = expiry
        self._entries: dict[str, _PendingEntry] = {}
        self._lock = threading.Lock()

    def add(self, request_id: str, now: float) -> None:
        with self._lock:
            self._evict(now)
            self._entries[request_id] = _PendingEntry(issued_at=now)

    def known(self, request_id: str, now: float) -> bool:
        with self._lock:
            self._evict(now)
            return request_id in self._entries

    def mark_consumed(self, request_id: str) -> None:
        with self._lock:
            entry = self._entries.get(request_id)
            if entry is not None:
                entry.consumed = True

    def issued_at(self, request_id: str) -> Optional[float]:
        with self._lock:
            entry = self._entries.get(request_id)
            return entry.issued_at if entry else None

    def __len__(self) -> int:
        return len(self._entries)

    def _evict(self, now: float) -> None:
        stale = [rid for rid, e in self._entries.items() if e.issued_at + self.expiry <= now]
        for rid in stale:
            del self._entries[rid]


class ServiceProvider:
    def __init__(
        self,
        config: SpConfig,
        key_store: KeyStore,
        clock: Callable[[], float] = time.time,
        rng: Optional[Random] = None,
    ) -> None:
        key_store.get(config.federation_key_id)
        self.config = config
        self.key_store = key_store
        self.clock = SkewableClock(clock)
        self.rng = rng
        self.pending = PendingRequests(expiry=config.pending_expiry)
        self.replay_cache = ReplayCache()
        self._sessions: dict[str, ResourceSession] = {}
        self._session_lock = threading.Lock()

    @property
    def _federation_key(self) -> bytes:
        return self.key_store.get(self.config.federation_key_id)

    def gate_resource(self) -> tuple[saml.AuthnRequest, str]:
        """Fresh AuthnRequest plus the redirect URL that carries it."""
        now = self.clock()
        request = saml.build_authn_request(
            self.config.entity_id, self.config.acs_url, now, rng=self.rng
        )
        self.pending.add(request.id, now)
        encoded = base64.b64encode(saml.serialize(request)).decode("ascii")
        redirect = f"{self.config.idp_url}/sso?SAMLRequest={quote(encoded)}"
        return request, redirect

    def consume_response(self, response: saml.SsoResponse) -> ResourceSession:
        """Validate an SSO response and mint a session.

        Check order: pending request, assertion validation (tag first),
        replay, then consumption.  Raises :class:`SpReject`.
        """
        now = self.clock()
        if not self.pending.known(response.in_response_to, now):
            raise SpReject(UNKNOWN_REQUEST)
        try:
            assertion = saml.decrypt_validate(
                response.encrypted_assertion,
                self._federation_key,
                now=now,
                skew=self.config.clock_skew,
                audience=self.config.entity_id,
            )
        except saml.AssertionReject as reject:
            raise SpReject(reject.reason) from None
        replay_expiry = assertion.not_on_or_after + self.config.clock_skew
        if not self.replay_cache.check_and_insert(assertion.id, replay_expiry, now):
            raise SpReject(REPLAYED)
        self.pending.mark_consumed(response.in_response_to)
        session = ResourceSession(
            token=kx.rand_bytes(self.rng, 16).hex(),
            subject=assertion.subject,
            expires_at=now + self.config.session_lifetime,
        )
        with self._session_lock:
            self._sessions[session.token] = session
        log.info("session minted for %s (assertion %s)", assertion.subject, assertion.id)
        return session

    def serve_resource(self, token: str) -> Optional[str]:
        """Demo resource body for a valid session, else None."""
        now = self.clock()
        with self._session_lock:
            session = self._sessions.get(token)
        if session is None or now >= session.expires_at:
            return None
        return f"protected resource for {session.subject}\n"


class SpHandler(ServiceHandler):
    def do_GET(self):
        self.apply_test_clock()
        sp: ServiceProvider = self.service
        if self.path.split("?")[0] != "/resource":
            self.respond(404, "not found")
            return
        token = self.headers.get(SESSION_HEADER)
        if token is None:
            _, redirect = sp.gate_resource()
            self.respond(302, "redirect to identity provider", headers={"Location": redirect})
            return
        body = sp.serve_resource(token)
        if body is None:
            self.respond(401, "unauthorized")
            return
        self.respond(200, body)

    def do_POST(self):
        self.apply_test_clock()
        sp: ServiceProvider = self.service
        fields = self.form()  # always drain the body; connections are reused
        if self.path != "/acs":
            self.respond(404, "not found")
            return
        try:
            xml = base64.b64decode(fields.get("SAMLResponse", ""), validate=True)
            response = saml.parse(xml)
            if not isinstance(response, saml.SsoResponse):
                raise saml.MalformedXml("SAMLResponse is not a Response")
        except (ValueError, saml.SamlError):
            self.respond(403, MALFORMED)
            return
        try:
            session = sp.consume_response(response)
        except SpReject as reject:
            log.info("acs rejected: %s", reject.reason)
            self.respond(403, reject.reason)
            return
        self.respond(
            200,
            f"authenticated {session.subject}",
            headers={SESSION_HEADER: session.token},
        )
