import pathlib

import pytest

from hbesso import agent as agent_mod
from hbesso.agent import (
    Scenario,
    Step,
    SuiteParseError,
    parse_suite,
    run_scenario,
    run_suite,
    summarize,
    transcript_bytes,
)
from live_services import start_pair

CANONICAL = pathlib.Path(__file__).resolve().parent.parent / "scenarios" / "canonical.txt"


@pytest.fixture(scope="module")
def pair():
    live = start_pair()
    yield live
    live.stop()


def test_parse_canonical_suite():
    scenarios = parse_suite(CANONICAL.read_text())
    assert [s.name for s in scenarios] == [
        "happy-path",
        "replayed-response",
        "tampered-assertion",
        "wrong-pin",
        "expired-assertion",
        "unknown-sp",
    ]
    happy = scenarios[0]
    assert [s.name for s in happy.steps] == [
        "register",
        "gate",
        "solve-challenge",
        "post-response",
        "fetch-resource",
    ]
    assert happy.steps[0].expect == "created"
    replay = scenarios[1]
    assert replay.steps[-1].expect == "replayed"


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("register a b", "line 1: step outside scenario"),
        ("scenario s\nscenario t", "line 2"),
        ("scenario s\nfrobnicate\nend", "unknown step"),
        ("scenario s\nregister onlyuser\nend", "argument"),
        ("scenario s\ngate expect", "line 2"),
        ("scenario s\nflip-bit-in nonsense\nend", "flip-bit-in target"),
        ("scenario s\ngate", "never ended"),
        ("end", "end outside scenario"),
    ],
)
def test_parse_errors_name_lines(text, fragment):
    with pytest.raises(SuiteParseError, match=fragment):
        parse_suite(text)


def test_comments_and_blanks_ignored():
    scenarios = parse_suite("# header\n\nscenario s\ngate # trailing\nend\n")
    assert len(scenarios) == 1
    assert scenarios[0].steps[0].name == "gate"


def test_empty_suite_passes(tmp_path, pair):
    suite = tmp_path / "empty.txt"
    suite.write_text("# nothing here\n")
    results = run_suite(str(suite), pair.idp_url, pair.sp_url)
    text, exit_code = summarize(results)
    assert results == []
    assert exit_code == 0
    assert "0/0" in text


def test_canonical_suite_passes(pair):
    results = run_suite(str(CANONICAL), pair.idp_url, pair.sp_url)
    text, exit_code = summarize(results)
    assert exit_code == 0, text
    assert all(r.passed for r in results), text
    # the happy path ends with the resource naming the user
    happy = results[0]
    final = happy.transcript[-1]
    assert final["status"] == 200
    assert "alice" in final["body"]


def test_wrong_expectation_fails_suite(tmp_path, pair):
    suite = tmp_path / "wrong.txt"
    suite.write_text(
        "scenario impossible\n"
        "register zelda pin-z-9\n"
        "gate\n"
        "use-wrong-pin zelda bogus-pin expect ok\n"
        "end\n"
    )
    results = run_suite(str(suite), pair.idp_url, pair.sp_url)
    text, exit_code = summarize(results)
    assert exit_code == 1
    assert "expected 'ok', got 'reject-auth'" in text


def test_scenario_stops_at_first_mismatch(pair):
    scenario = Scenario(
        name="stops",
        steps=[
            Step("register", ("yuri", "pin-y-1"), "created", 1),
            Step("register", ("yuri", "pin-y-1"), "created", 2),  # duplicate
            Step("gate", (), "redirect", 3),
        ],
    )
    result = run_scenario(scenario, pair.idp_url, pair.sp_url)
    assert not result.passed
    assert len(result.outcomes) == 2
    assert result.outcomes[-1].actual == "duplicate-user"


def test_missing_artifact_aborts_with_step_named(pair):
    scenario = Scenario(name="premature", steps=[Step("post-response", (), "ok", 1)])
    result = run_scenario(scenario, pair.idp_url, pair.sp_url)
    assert not result.passed
    assert result.aborted is not None
    assert "post-response" in result.aborted


def test_network_failure_aborts_with_step_named():
    scenario = Scenario(name="dead", steps=[Step("gate", (), "redirect", 1)])
    result = run_scenario(scenario, "http://127.0.0.1:9", "http://127.0.0.1:9")
    assert not result.passed
    assert result.aborted is not None
    assert "network failure" in result.aborted


def test_parallel_run_passes():
    live = start_pair()
    try:
        results = run_suite(str(CANONICAL), live.idp_url, live.sp_url, parallel=True)
        text, exit_code = summarize(results)
        assert exit_code == 0, text
        assert {r.name for r in results} == {
            "happy-path",
            "replayed-response",
            "tampered-assertion",
            "wrong-pin",
            "expired-assertion",
            "unknown-sp",
        }
    finally:
        live.stop()


def test_transcript_records_every_exchange(pair):
    scenario = parse_suite(
        "scenario t\nregister quinn pin-q-3\ngate\nsolve-challenge quinn pin-q-3\n"
        "post-response\nfetch-resource\nend\n"
    )[0]
    result = run_scenario(scenario, pair.idp_url, pair.sp_url)
    assert result.passed
    # register, gate, challenge, sso, acs, resource: six wire exchanges
    assert [e["target"].split("?")[0] for e in result.transcript] == [
        "/register",
        "/resource",
        "/challenge",
        "/sso",
        "/acs",
        "/resource",
    ]


def test_deterministic_transcripts_with_seed_and_clock():
    fixed_clock = lambda: 1_700_000_000.0
    suite_text = (
        "scenario det\nregister nadia pin-n-4\ngate\nsolve-challenge nadia pin-n-4\n"
        "post-response\nfetch-resource\nend\n"
    )
    scenario = parse_suite(suite_text)[0]

    first = start_pair(clock=fixed_clock, idp_seed=77, sp_seed=88)
    ports = (
        first.idp_server.server_address[1],
        first.sp_server.server_address[1],
    )
    try:
        run_a = run_scenario(scenario, first.idp_url, first.sp_url)
    finally:
        first.stop()

    second = start_pair(
        clock=fixed_clock, idp_seed=77, sp_seed=88, idp_port=ports[0], sp_port=ports[1]
    )
    try:
        run_b = run_scenario(scenario, second.idp_url, second.sp_url)
    finally:
        second.stop()

    assert run_a.passed and run_b.passed
    assert transcript_bytes(run_a) == transcript_bytes(run_b)


def test_default_expectations_cover_every_step():
    assert set(agent_mod.DEFAULT_EXPECT) == set(agent_mod.STEP_ARGC)
