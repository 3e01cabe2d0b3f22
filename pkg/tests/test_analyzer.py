import pytest

from dtcal.analyzer import (
    AllPathsEventBy, Atom, DeadlockFree, ExistsEvent, HandlerCoverage,
    NamedRequirement, NeverEvent, RecursWithin, check, check_suite,
    parse_pattern, parse_requirements,
)
from dtcal.explorer import build_lts, enumerate_paths
from dtcal.parser import parse
from dtcal.semantics import CommL, FaultL
from dtcal.terms import Diagnostic

from conftest import CORPUS


def lts_for(name):
    return build_lts(parse((CORPUS / name).read_text(encoding="utf-8"), name))


# ---------------------------------------------------------------------------
# Pattern parsing and matching


def test_parse_pattern_structure():
    p = parse_pattern("comm(a, x) & handler(S) | move(out, P)")
    assert len(p.alternatives) == 2
    assert p.alternatives[0] == (Atom("comm", ("a", "x")),
                                 Atom("handler", ("S",)))
    assert p.alternatives[1] == (Atom("move", ("out", "P")),)


@pytest.mark.parametrize("bad", [
    "", "comm", "comm(a))", "frob(a)", "comm(a,b,c,d,e)", "comm(a) &",
])
def test_parse_pattern_rejects_malformed(bad):
    with pytest.raises(ValueError):
        parse_pattern(bad)


def test_atom_matching_wildcards_and_prefix():
    comm = CommL("cs", "Fire", 1, 2, "SensorA", "ControlSystem")
    assert Atom("comm", ()).matches(comm)
    assert Atom("comm", ("cs",)).matches(comm)
    assert Atom("comm", ("*", "Fire", "Sensor*")).matches(comm)
    assert not Atom("comm", ("cs", "Smoke")).matches(comm)
    assert not Atom("fault", ()).matches(comm)
    fault = FaultL(3, "P1", "deadline")
    assert Atom("fault", ("P?", "dead*")).matches(fault)


# ---------------------------------------------------------------------------
# Requirement file parsing


def test_parse_requirements_happy_path():
    reqs = parse_requirements(
        "# comment\n"
        "r1: deadlock_free\n"
        "r2: all_paths_event_by(comm(a, x), 10)  # trailing\n"
        "r3: exists_event(fault(*))\n")
    assert [r.name for r in reqs] == ["r1", "r2", "r3"]
    assert isinstance(reqs[0].requirement, DeadlockFree)
    assert reqs[1].requirement.deadline == 10


@pytest.mark.parametrize("bad,frag", [
    ("oops", "malformed"),
    ("r: frobnicate(x)", "unknown form"),
    ("r: deadlock_free(3)", "argument"),
    ("r: all_paths_event_by(comm(a))", "argument"),
    ("r: all_paths_event_by(comm(a), soon)", "number"),
    ("r: all_paths_event_by(comm(a), -1)", "nonnegative"),
    ("r: never_event(zap(a))", "unknown event kind"),
])
def test_parse_requirements_diagnostics(bad, frag):
    out = parse_requirements(bad, "reqs.dtq")
    assert out and isinstance(out[0], Diagnostic)
    assert frag in str(out[0])
    assert "reqs.dtq:1" in str(out[0])


def test_sees_requirement_file_parses():
    out = parse_requirements((CORPUS / "sees.dtq").read_text(encoding="utf-8"),
                             "sees.dtq")
    assert all(isinstance(r, NamedRequirement) for r in out)
    assert len(out) == 5


# ---------------------------------------------------------------------------
# Checking


def test_deadlock_free_verdicts():
    good = check(lts_for("tiny/comm.dtc"), DeadlockFree(), name="df")
    assert good.holds and good.evidence is None
    bad = check(lts_for("tiny/choice.dtc"), DeadlockFree())
    assert not bad.holds
    assert bad.evidence is not None and bad.evidence.terminal == "deadlock"


def test_all_paths_event_by_deadline_monotone():
    lts = lts_for("tiny/comm.dtc")
    pat = parse_pattern("comm(a, x)")
    tight = check(lts, AllPathsEventBy(pat, 1))
    exact = check(lts, AllPathsEventBy(pat, 2))
    loose = check(lts, AllPathsEventBy(pat, 50))
    assert not tight.holds and tight.evidence is not None
    assert exact.holds and loose.holds


def test_exists_and_never_are_dual():
    lts = lts_for("tiny/choice.dtc")
    for text in ("comm(a)", "comm(b)", "comm(c)", "fault()"):
        pat = parse_pattern(text)
        ex = check(lts, ExistsEvent(pat))
        nv = check(lts, NeverEvent(pat))
        assert ex.holds != nv.holds
        if ex.holds:
            assert ex.evidence is not None


def test_never_event_counterexample_is_a_real_path():
    lts = lts_for("tiny/choice.dtc")
    v = check(lts, NeverEvent(parse_pattern("comm(a)")))
    assert not v.holds
    assert v.evidence in enumerate_paths(lts)


def test_handler_coverage_distinguishes_handled_from_faulting():
    ok = check(lts_for("tiny/timeout_handler.dtc"), HandlerCoverage("*"))
    assert ok.holds
    bad = check(lts_for("tiny/deadline_fault.dtc"), HandlerCoverage("*"))
    assert not bad.holds
    other = check(lts_for("tiny/deadline_fault.dtc"), HandlerCoverage("Nope*"))
    assert other.holds


def test_recurs_within_on_periodic_spec():
    # a matched periodic pair communicates once every three-tick cycle
    lts = build_lts(parse(
        "S := a!(x)[0,2,1,-]^(3,4) | a?(_)[0,2,1,-]^(3,4);"))
    tight_fails = check(lts, RecursWithin(parse_pattern("comm(a)"), 1))
    assert not tight_fails.holds
    period_ok = check(lts, RecursWithin(parse_pattern("comm(a)"), 3))
    assert period_ok.holds


def test_check_suite_order_and_bound_flag():
    lts = lts_for("tiny/comm.dtc")
    reqs = parse_requirements(
        "a: deadlock_free\nb: exists_event(comm(a, x))\n")
    verdicts = check_suite(lts, reqs)
    assert [v.name for v in verdicts] == ["a", "b"]
    assert all(v.holds for v in verdicts)
    assert all(v.bound_relative is False for v in verdicts)
    assert all(v.checked_paths == 1 for v in verdicts)
