import pytest
from hypothesis import given, settings

from dtcal.terms import (
    Act, Choice, DEFAULT_SPEC, Empty, Nest, Par, PeriodSpec, Periodic,
    Receive, Ref, Send, Seq, SpecFile, Stop, TemporalSpec, TimedProc,
    canonicalize, canonicalize_spec, choice_arms, free_channels, outranks,
    par_arms, subterms, validate,
)
from dtcal.parser import parse, parse_term

from strategies import terms


# ---------------------------------------------------------------------------
# Temporal specs and priorities


def test_temporal_spec_defaults():
    assert DEFAULT_SPEC == TemporalSpec(0, None, 1, None)


@pytest.mark.parametrize("kwargs", [
    {"ready": -1}, {"exec_time": -1}, {"timeout": -2}, {"deadline": -1},
])
def test_temporal_spec_rejects_negative(kwargs):
    with pytest.raises(ValueError):
        TemporalSpec(**kwargs)


def test_period_spec_bounds():
    with pytest.raises(ValueError):
        PeriodSpec(0)
    with pytest.raises(ValueError):
        PeriodSpec(3, 0)
    assert PeriodSpec(3, None).reps is None


def test_outranks_zero_is_highest():
    assert outranks(0, 1)
    assert outranks(0, 99)
    assert not outranks(1, 0)
    assert not outranks(99, 0)


def test_outranks_larger_beats_smaller():
    assert outranks(5, 2)
    assert not outranks(2, 5)


def test_outranks_explicit_beats_none():
    assert outranks(1, None)
    assert not outranks(None, 1)
    assert not outranks(None, None)


def test_outranks_irreflexive():
    for p in (None, 0, 1, 7):
        assert not outranks(p, p)


# ---------------------------------------------------------------------------
# Canonicalization


def test_canonicalize_defaults_bare_action():
    t = canonicalize(Act(Send("a", "x")))
    assert t == Act(Send("a", "x"), DEFAULT_SPEC)


def test_canonicalize_empty_keeps_only_exec():
    t = canonicalize(Act(Empty(1), TemporalSpec(2, 3, 4, 5)))
    assert t == Act(Empty(4), TemporalSpec(0, None, 4, None))


def test_canonicalize_timed_process_keeps_only_deadline():
    t = canonicalize(TimedProc(Act(Send("a", "x")), TemporalSpec(2, 3, 4, 5)))
    assert isinstance(t, TimedProc)
    assert t.temporal == TemporalSpec(0, None, 1, 5)


def test_canonicalize_lifts_action_period():
    t = canonicalize(Act(Send("a", "x"), None, PeriodSpec(3, 2)))
    assert t == Periodic(Act(Send("a", "x"), DEFAULT_SPEC), PeriodSpec(3, 2))


@settings(max_examples=100, deadline=None)
@given(terms)
def test_canonicalize_idempotent(t):
    once = canonicalize(t)
    assert canonicalize(once) == once


@settings(max_examples=100, deadline=None)
@given(terms)
def test_canonicalize_no_bare_temporals_left(t):
    for sub in subterms(canonicalize(t)):
        if isinstance(sub, Act):
            assert sub.temporal is not None
            assert sub.period is None
        if isinstance(sub, TimedProc):
            sp = sub.temporal
            assert (sp.ready, sp.timeout, sp.exec_time) == (0, None, 1)


# ---------------------------------------------------------------------------
# Traversal helpers


def test_par_and_choice_arms_flatten():
    t = parse_term("a!(x) | b!(x) | c!(x)")
    assert len(par_arms(t)) == 3
    t = parse_term("a!(x) + b!(x) + c!(x)")
    assert len(choice_arms(t)) == 3


def test_free_channels_scope_binds():
    t = parse_term("scope a in (a!(x) | b?(_))")
    assert free_channels(t) == frozenset({"b"})
    t = parse_term("a!(x) . scope a in a?(_)")
    assert free_channels(t) == frozenset({"a"})


# ---------------------------------------------------------------------------
# Validation


def _diags(text):
    spec = parse(text)
    assert isinstance(spec, SpecFile)
    return [str(d) for d in validate(spec)]


def test_validate_clean_spec():
    assert _diags("S := a!(x) | a?(_);") == []


def test_validate_unresolved_reference():
    msgs = _diags("S := T . a!(x);")
    assert any("unresolved" in m and "'T'" in m for m in msgs)


def test_validate_missing_root():
    spec = SpecFile({"A": Act(Empty(1))}, "Nope")
    assert any("root" in str(d) for d in validate(spec))


def test_validate_statically_dead_deadline():
    msgs = _diags("S := a!(x)[5,-,1,2];")
    assert any("statically dead" in m for m in msgs)


def test_validate_unguarded_recursion():
    msgs = _diags("A := B; B := A;")
    assert any("unguarded recursion" in m for m in msgs)


def test_validate_guarded_recursion_ok():
    assert _diags("A := a!(x) . A;") == []


def test_validate_new_priority_inversion():
    msgs = _diags("S := @1 (new W); W := @2 nil(1);")
    assert any("outranks its creator" in m for m in msgs)


def test_validate_new_priority_ok():
    assert _diags("S := @2 (new W); W := @1 nil(1);") == []


def test_canonicalize_spec_covers_all_definitions():
    spec = parse("S := a!(x); T := nil;")
    canon = canonicalize_spec(spec)
    assert canon.root == "S"
    for body in canon.definitions.values():
        for sub in subterms(body):
            if isinstance(sub, Act):
                assert sub.temporal is not None
