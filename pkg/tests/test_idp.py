import base64

import pytest

from conftest import FED_KEY_ID, IDP_ENTITY, SP_ENTITY, TEST_KDF_ITERATIONS, make_idp
from hbesso import idp as idp_mod
from hbesso import keyexchange as kx
from hbesso import saml
from hbesso.idp import (
    CorruptDirectoryError,
    DuplicateUserError,
    IdpReject,
    UserDirectory,
    load_directory,
    persist_directory,
)


def make_request(idp, sp_entity=SP_ENTITY):
    return saml.build_authn_request(sp_entity, "http://sp/acs", idp.clock())


def solve(idp, user, pin: bytes):
    ch, salt = idp.issue_challenge(user)
    ltk = kx.derive_long_term_key(pin, salt, idp.config.kdf_iterations)
    return ch, kx.answer_challenge(ltk, ch)


def test_register_then_authenticate(idp, key_store):
    idp.register_user("alice", b"246813")
    ch, tag = solve(idp, "alice", b"246813")
    response = idp.handle_sso("alice", ch.challenge_id, tag, make_request(idp))
    assertion = saml.decrypt_validate(
        response.encrypted_assertion,
        key_store.get(FED_KEY_ID),
        now=idp.clock(),
        skew=0,
        audience=SP_ENTITY,
    )
    assert assertion.subject == "alice"
    assert assertion.audience == SP_ENTITY
    assert assertion.issuer == IDP_ENTITY
    assert response.issuer == IDP_ENTITY


def test_duplicate_registration_leaves_directory_unchanged(idp):
    idp.register_user("alice", b"1111")
    before = len(idp.directory)
    with pytest.raises(DuplicateUserError):
        idp.register_user("alice", b"2222")
    assert len(idp.directory) == before


def test_invalid_pins_rejected(idp):
    with pytest.raises(ValueError):
        idp.register_user("bob", b"")
    with pytest.raises(ValueError):
        idp.register_user("bob", b"x" * 17)
    assert idp.directory.get("bob") is None


def test_same_pin_users_get_distinct_blobs(idp):
    a = idp.register_user("alice", b"0000")
    b = idp.register_user("bob", b"0000")
    assert a.salt != b.salt
    assert kx.encode_payload(a.wrapped_ltk) != kx.encode_payload(b.wrapped_ltk)


def test_wrong_pin_yields_reject_auth(idp):
    idp.register_user("carol", b"13579")
    ch, _ = solve(idp, "carol", b"13579")
    wrong_ltk = kx.derive_long_term_key(b"99999", idp.directory.get("carol").salt, TEST_KDF_ITERATIONS)
    bad_tag = kx.answer_challenge(wrong_ltk, ch)
    with pytest.raises(IdpReject) as exc:
        idp.handle_sso("carol", ch.challenge_id, bad_tag, make_request(idp))
    assert exc.value.reason == kx.REJECT_AUTH


def test_unfederated_sp_rejected(idp):
    idp.register_user("dave", b"2222")
    ch, tag = solve(idp, "dave", b"2222")
    with pytest.raises(IdpReject) as exc:
        idp.handle_sso("dave", ch.challenge_id, tag, make_request(idp, "rogue.example"))
    assert exc.value.reason == idp_mod.UNKNOWN_SP
    # the challenge was not consumed by the config failure
    response = idp.handle_sso("dave", ch.challenge_id, tag, make_request(idp))
    assert response.in_response_to


def test_replayed_challenge_rejected(idp):
    idp.register_user("erin", b"3333")
    ch, tag = solve(idp, "erin", b"3333")
    idp.handle_sso("erin", ch.challenge_id, tag, make_request(idp))
    with pytest.raises(IdpReject) as exc:
        idp.handle_sso("erin", ch.challenge_id, tag, make_request(idp))
    assert exc.value.reason == kx.REJECT_REPLAY


def test_expired_challenge_rejected(idp, fake_clock):
    idp.register_user("frank", b"4444")
    ch, tag = solve(idp, "frank", b"4444")
    fake_clock.advance(idp.config.challenge_expiry + 1)
    with pytest.raises(IdpReject) as exc:
        idp.handle_sso("frank", ch.challenge_id, tag, make_request(idp))
    assert exc.value.reason == kx.REJECT_EXPIRED


def test_unknown_user_gets_dummy_challenge_then_reject_auth(idp):
    ch, salt = idp.issue_challenge("ghost")
    ch2, salt2 = idp.issue_challenge("ghost")
    assert salt == salt2  # stable dummy salt, no enumeration via salt churn
    assert ch.challenge_id != ch2.challenge_id
    ltk = kx.derive_long_term_key(b"1234", salt, TEST_KDF_ITERATIONS)
    tag = kx.answer_challenge(ltk, ch)
    with pytest.raises(IdpReject) as exc:
        idp.handle_sso("ghost", ch.challenge_id, tag, make_request(idp))
    assert exc.value.reason == kx.REJECT_AUTH


def test_assertion_ids_unique_across_lifetime(idp, key_store):
    idp.register_user("gina", b"5555")
    seen = set()
    for _ in range(50):
        ch, tag = solve(idp, "gina", b"5555")
        response = idp.handle_sso("gina", ch.challenge_id, tag, make_request(idp))
        assertion = saml.decrypt_validate(
            response.encrypted_assertion,
            key_store.get(FED_KEY_ID),
            idp.clock(),
            0,
            SP_ENTITY,
        )
        assert assertion.id not in seen
        seen.add(assertion.id)


def test_persist_load_round_trip(tmp_path, key_store, fake_clock):
    path = tmp_path / "directory.tsv"
    idp = make_idp(key_store, fake_clock, directory_path=str(path), kdf_iterations=1)
    for i in range(100):
        idp.register_user(f"user{i:03d}", f"pin{i:03d}".encode())
    loaded = load_directory(str(path))
    assert len(loaded) == 100
    for record in idp.directory.records():
        other = loaded.get(record.user_id)
        assert other == record


def test_empty_directory_round_trip(tmp_path):
    path = tmp_path / "empty.tsv"
    persist_directory(UserDirectory(), str(path))
    assert path.read_bytes() == b""
    assert len(load_directory(str(path))) == 0


def test_corrupt_line_aborts_load_naming_line(tmp_path, key_store, fake_clock):
    path = tmp_path / "directory.tsv"
    idp = make_idp(key_store, fake_clock, directory_path=str(path), kdf_iterations=1)
    for name in ("alice", "bob", "carol"):
        idp.register_user(name, b"9751")
    lines = path.read_text().splitlines()
    lines[1] = "bob\tnot!base64\tnope\tnan"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptDirectoryError, match="line 2"):
        load_directory(str(path))


def test_persisted_files_contain_no_pin_or_ltk(tmp_path, key_store, fake_clock):
    path = tmp_path / "directory.tsv"
    idp = make_idp(key_store, fake_clock, directory_path=str(path))
    pin = b"hunter2-pin-alpha"[:16]
    record = idp.register_user("alice", pin)
    ltk = kx.derive_long_term_key(pin, record.salt, TEST_KDF_ITERATIONS)
    raw = path.read_bytes()
    assert pin not in raw
    assert ltk not in raw
    assert base64.b64encode(pin) not in raw
    assert base64.b64encode(ltk) not in raw


def test_registration_persisted_before_success(tmp_path, key_store, fake_clock):
    path = tmp_path / "directory.tsv"
    idp = make_idp(key_store, fake_clock, directory_path=str(path))
    idp.register_user("walter", b"8642")
    on_disk = load_directory(str(path))
    assert on_disk.get("walter") is not None


def test_challenge_document_round_trip(idp):
    idp.register_user("henry", b"6666")
    ch, salt = idp.issue_challenge("henry")
    doc = idp_mod.challenge_document(ch, salt, idp.config.kdf_iterations)
    parsed, got_salt, iterations = idp_mod.parse_challenge_document(doc, "henry")
    assert parsed.challenge_id == ch.challenge_id
    assert parsed.nonce == ch.nonce
    assert got_salt == salt
    assert iterations == idp.config.kdf_iterations
    # the parsed challenge is answerable
    ltk = kx.derive_long_term_key(b"6666", got_salt, iterations)
    tag = kx.answer_challenge(ltk, parsed)
    assert idp.challenges.verify(ltk, ch.challenge_id, "henry", tag) == kx.ACCEPT


def test_config_requires_resolvable_key_ids(key_store, fake_clock):
    from hbesso.idp import IdentityProvider, IdpConfig
    from hbesso.keystore import KeyStoreError

    config = IdpConfig(
        entity_id=IDP_ENTITY,
        master_key_id="missing-master",
        federation_keys={SP_ENTITY: FED_KEY_ID},
    )
    with pytest.raises(KeyStoreError):
        IdentityProvider(config, key_store, clock=fake_clock)
