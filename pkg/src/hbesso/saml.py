"""Minimal SAML message dialect: assertions, authentication requests and
SSO responses, with canonical XML serialization and sealed-assertion
protection.

The dialect covers exactly what the SSO flows exercise:

  Assertion{Issuer, Subject/NameID, Conditions{NotBefore, NotOnOrAfter,
  AudienceRestriction/Audience}, AuthnStatement}, AuthnRequest, Response.

Serialization is canonical (fixed element order, UTF-8, no insignificant
whitespace, RFC 3339 UTC timestamps at whole-second precision); the parser
is order-tolerant.  Assertions are integrity-protected by the sealed
payload's MAC rather than an XML signature.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone
from random import Random
from typing import Optional, Union

from . import keyexchange as kx
from .keyexchange import SealedPayload

AUTHN_METHOD = "PIN-PAD"
DEFAULT_CLOCK_SKEW = 30.0


class SamlError(Exception):
    """Base for message-model errors."""


class MalformedXml(SamlError):
    pass


class UnknownRoot(SamlError):
    pass


class MissingField(SamlError):
    pass


class BadTimestamp(SamlError):
    pass


# decrypt_validate reject reasons, in check order
BAD_TAG = "bad-tag"
MALFORMED = "malformed"
WRONG_AUDIENCE = "wrong-audience"
EXPIRED = "expired"
NOT_YET_VALID = "not-yet-valid"


class AssertionReject(Exception):
    """Validation failure; `reason` names the first failed check."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def format_timestamp(ts: float) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> int:
    try:
        dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise BadTimestamp(f"unparseable timestamp {text!r}") from exc
    return int(dt.timestamp())


@dataclass(frozen=True)
class Assertion:
    """IdP statement that `subject` authenticated, bounded in time and audience."""

    id: str
    issuer: str
    subject: str
    issue_instant: int
    not_before: int
    not_on_or_after: int
    audience: str
    authn_method: str = AUTHN_METHOD

    def __post_init__(self) -> None:
        if not (self.not_before <= self.issue_instant < self.not_on_or_after):
            raise ValueError("assertion validity window is inconsistent")


@dataclass(frozen=True)
class AuthnRequest:
    id: str
    sp_entity_id: str
    acs_url: str
    issue_instant: int


@dataclass(frozen=True)
class EncryptedAssertion:
    sealed: SealedPayload


@dataclass(frozen=True)
class SsoResponse:
    in_response_to: str
    issuer: str
    encrypted_assertion: EncryptedAssertion


Message = Union[Assertion, AuthnRequest, SsoResponse]


def fresh_id(rng: Optional[Random] = None) -> str:
    return kx.rand_bytes(rng, 16).hex()


def build_assertion(
    issuer: str,
    subject: str,
    audience: str,
    now: float,
    lifetime: float,
    rng: Optional[Random] = None,
) -> Assertion:
    """Mint a fresh assertion valid for [now, now + lifetime)."""
    if lifetime <= 0:
        raise ValueError("assertion lifetime must be positive")
    instant = int(now)
    return Assertion(
        id=fresh_id(rng),
        issuer=issuer,
        subject=subject,
        issue_instant=instant,
        not_before=instant,
        not_on_or_after=instant + int(lifetime),
        audience=audience,
    )


def build_authn_request(sp_entity_id: str, acs_url: str, now: float, rng: Optional[Random] = None) -> AuthnRequest:
    return AuthnRequest(
        id=fresh_id(rng), sp_entity_id=sp_entity_id, acs_url=acs_url, issue_instant=int(now)
    )


def serialize(msg: Message) -> bytes:
    """Canonical XML octets for any of the three message kinds."""
    if isinstance(msg, Assertion):
        root = ET.Element("Assertion", ID=msg.id, IssueInstant=format_timestamp(msg.issue_instant))
        ET.SubElement(root, "Issuer").text = msg.issuer
        subject = ET.SubElement(root, "Subject")
        ET.SubElement(subject, "NameID").text = msg.subject
        conditions = ET.SubElement(
            root,
            "Conditions",
            NotBefore=format_timestamp(msg.not_before),
            NotOnOrAfter=format_timestamp(msg.not_on_or_after),
        )
        restriction = ET.SubElement(conditions, "AudienceRestriction")
        ET.SubElement(restriction, "Audience").text = msg.audience
        ET.SubElement(root, "AuthnStatement", AuthnMethod=msg.authn_method)
    elif isinstance(msg, AuthnRequest):
        root = ET.Element("AuthnRequest", ID=msg.id, IssueInstant=format_timestamp(msg.issue_instant))
        ET.SubElement(root, "Issuer").text = msg.sp_entity_id
        ET.SubElement(root, "AssertionConsumerServiceURL").text = msg.acs_url
    elif isinstance(msg, SsoResponse):
        root = ET.Element("Response", InResponseTo=msg.in_response_to)
        ET.SubElement(root, "Issuer").text = msg.issuer
        ET.SubElement(root, "EncryptedAssertion").text = kx.encode_payload(
            msg.encrypted_assertion.sealed
        )
    else:
        raise TypeError(f"cannot serialize {type(msg).__name__}")
    return ET.tostring(root, encoding="utf-8")


def parse(xml: bytes) -> Message:
    """Parse any dialect message; element order is tolerated.

    Raises MalformedXml / UnknownRoot / MissingField / BadTimestamp; never
    returns a partially populated message.
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedXml(f"not well-formed XML: {exc}") from exc
    if root.tag == "Assertion":
        conditions = _child(root, "Conditions")
        restriction = _child(conditions, "AudienceRestriction")
        try:
            return Assertion(
                id=_attr(root, "ID"),
                issuer=_text(_child(root, "Issuer")),
                subject=_text(_child(_child(root, "Subject"), "NameID")),
                issue_instant=parse_timestamp(_attr(root, "IssueInstant")),
                not_before=parse_timestamp(_attr(conditions, "NotBefore")),
                not_on_or_after=parse_timestamp(_attr(conditions, "NotOnOrAfter")),
                audience=_text(_child(restriction, "Audience")),
                authn_method=_attr(_child(root, "AuthnStatement"), "AuthnMethod"),
            )
        except ValueError as exc:
            raise MalformedXml(str(exc)) from exc
    if root.tag == "AuthnRequest":
        return AuthnRequest(
            id=_attr(root, "ID"),
            sp_entity_id=_text(_child(root, "Issuer")),
            acs_url=_text(_child(root, "AssertionConsumerServiceURL")),
            issue_instant=parse_timestamp(_attr(root, "IssueInstant")),
        )
    if root.tag == "Response":
        blob = _text(_child(root, "EncryptedAssertion"))
        try:
            sealed = kx.decode_payload(blob)
        except ValueError as exc:
            raise MalformedXml(f"EncryptedAssertion payload: {exc}") from exc
        return SsoResponse(
            in_response_to=_attr(root, "InResponseTo"),
            issuer=_text(_child(root, "Issuer")),
            encrypted_assertion=EncryptedAssertion(sealed=sealed),
        )
    raise UnknownRoot(f"unknown root element {root.tag!r}")


def _child(parent: ET.Element, tag: str) -> ET.Element:
    found = parent.find(tag)
    if found is None:
        raise MissingField(f"missing element {tag!r} under {parent.tag!r}")
    return found


def _attr(element: ET.Element, name: str) -> str:
    value = element.get(name)
    if value is None:
        raise MissingField(f"missing attribute {name!r} on {element.tag!r}")
    return value


def _text(element: ET.Element) -> str:
    return element.text or ""


def encrypt_assertion(
    assertion: Assertion,
    federation_key: bytes,
    key_id: str,
    rng: Optional[Random] = None,
) -> EncryptedAssertion:
    """Seal the canonical assertion XML under the shared federation key."""
    sealed = kx.seal(
        federation_key, kx.fresh_nonce(rng), serialize(assertion), key_id=key_id
    )
    return EncryptedAssertion(sealed=sealed)


def decrypt_validate(
    ea: EncryptedAssertion,
    federation_key: bytes,
    now: float,
    skew: float,
    audience: str,
) -> Assertion:
    """Open and validate a sealed assertion.

    Check order is fixed and observable via the reject reason: tag, then
    parseability, then audience, then the half-open validity window
    [not_before - skew, not_on_or_after + skew).
    """
    try:
        plaintext = kx.open_sealed(federation_key, ea.sealed)
    except kx.SealRejected:
        raise AssertionReject(BAD_TAG) from None
    try:
        assertion = parse(plaintext)
    except SamlError:
        raise AssertionReject(MALFORMED) from None
    if not isinstance(assertion, Assertion):
        raise AssertionReject(MALFORMED)
    if assertion.audience != audience:
        raise AssertionReject(WRONG_AUDIENCE)
    if now < assertion.not_before - skew:
        raise AssertionReject(NOT_YET_VALID)
    if now >= assertion.not_on_or_after + skew:
        raise AssertionReject(EXPIRED)
    return assertion
