import random

import pytest

from dtcal.parser import parse, parse_term
from dtcal.semantics import (
    ChoiceL, CommL, CtrlL, Engine, FaultL, HandlerL, MoveL, PChoosing,
    PExecuting, PIdle, PReady, PWaiting, RearmL, Step, StepNotEnabled, TickL,
    render_label,
)
from dtcal.terms import Empty, MoveKind, Send, SpecFile

from genspec import random_spec


def engine_of(text):
    spec = parse(text)
    assert isinstance(spec, SpecFile), spec
    return Engine(spec)


def only_step(engine, config) -> Step:
    steps = engine.enabled_steps(config)
    assert len(steps) == 1, [render_label(s.label) for s in steps]
    return steps[0]


def run_until(engine, config, pred, limit=100):
    for _ in range(limit):
        if pred(config):
            return config
        steps = engine.enabled_steps(config)
        assert steps, "stuck before condition held"
        config = steps[0].config
    raise AssertionError("condition never held")


def tick(engine, config):
    step = only_step(engine, config)
    assert isinstance(step.label, TickL)
    return step.config


def the(config, name):
    matches = [i for i in config.instances if i.def_name == name]
    assert len(matches) == 1, matches
    return matches[0]


# ---------------------------------------------------------------------------
# The ten timed rules, each on a minimal configuration


def test_rule_tick_time_ready():
    e = engine_of("S := a!(x)[2,3,1,5];")
    c = e.init()
    s = the(c, "S")
    assert s.phase == PReady(2) and s.deadline_rem == 5
    c = tick(e, c)
    s = the(c, "S")
    assert s.phase == PReady(1) and s.deadline_rem == 4


def test_rule_tick_time_timeout():
    e = engine_of("S := a!(x)[0,3,1,5];")
    c = e.init()
    s = the(c, "S")
    assert s.phase == PWaiting(3) and s.deadline_rem == 5
    c = tick(e, c)
    s = the(c, "S")
    assert s.phase == PWaiting(2) and s.deadline_rem == 4


def test_rule_tick_time_end():
    e = engine_of("S := a!(x)[0,-,2,-] . b!(y) | a?(_)[0,-,2,-];")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, CommL)
    c = step.config
    sender = next(i for i in c.instances if isinstance(i.head, Send))
    assert sender.phase == PExecuting(2)
    c = tick(e, c)
    c = tick(e, c)
    # execution elapsed: the sender has advanced to its next action
    sender = c.get(sender.id)
    assert isinstance(sender.head, Send) and sender.head.channel == "b"


def test_rule_sync_execution_lockstep():
    e = engine_of("S := a!(x)[0,-,3,-] | a?(_)[0,-,3,-];")
    c = e.init()
    c = only_step(e, c).config  # the communication commits
    active = [i.id for i in c.instances if not i.finished()]
    assert [c.get(i).phase for i in active] == [PExecuting(3)] * 2
    c = tick(e, c)
    assert [c.get(i).phase for i in active] == [PExecuting(2)] * 2


def test_rule_async_execution_skips_waiting():
    e = engine_of("S := nil(2) . a!(x);")
    c = e.init()
    s = the(c, "S")
    # an empty action never waits for a partner
    assert s.phase == PExecuting(2)
    c = tick(e, c)
    assert the(c, "S").phase == PExecuting(1)


def test_rule_tick_time_process_deadline():
    e = engine_of("S := (dl(5) a?(_)) \\ nil(1);")
    c = e.init()
    assert [rem for _i, rem in the(c, "S").proc_deadlines] == [5]
    c = tick(e, c)
    assert [rem for _i, rem in the(c, "S").proc_deadlines] == [4]


def test_rule_timeout_fires_handler():
    e = engine_of("S := a!(x)[0,2,1,-] \\ nil(3);")
    c = e.init()
    c = tick(e, c)
    c = tick(e, c)
    step = only_step(e, c)
    assert step.label == HandlerL(the(c, "S").id, "S", "timeout")
    s = the(step.config, "S")
    assert isinstance(s.head, Empty) and s.phase == PExecuting(3)


def test_rule_deadline_faults_without_handler():
    e = engine_of("S := a!(x)[0,-,1,3];")
    c = e.init()
    for _ in range(3):
        c = tick(e, c)
    step = only_step(e, c)
    assert step.label == FaultL(the(c, "S").id, "S", "deadline")
    c = step.config
    assert c.faults and c.faults[0].cause == "deadline"
    assert e.classify(c) == "fault"


def test_rule_period_rearms_on_schedule():
    e = engine_of("S := nil(1)^(3,2);")
    c = e.init()
    while c.clock < 3:
        c = tick(e, c)
    step = only_step(e, c)
    assert isinstance(step.label, RearmL)
    c = step.config
    ps = the(c, "S").periods[0]
    assert ps.next_arm == 6 and ps.reps_left == 0


def test_rule_period_end_terminates():
    e = engine_of("S := nil(1)^(3,2);")
    c = e.init()
    c = run_until(e, c, lambda cfg: not e.enabled_steps(cfg))
    assert c.clock == 6
    assert the(c, "S").finished()
    assert e.classify(c) == "terminated"


# ---------------------------------------------------------------------------
# Communication details


def test_comm_requires_matching_message():
    e = engine_of("S := a!(x) | a?(y);")
    c = e.init()
    assert e.enabled_steps(c) == []
    assert e.classify(c) == "deadlock"


def test_comm_wildcard_receive():
    e = engine_of("S := a!(x) | a?(_);")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, CommL) and step.label.message == "x"


def test_comm_scope_isolation():
    e = engine_of("S := scope a in (a!(x) | a?(_)) | (a?(_)[0,4,1,-] \\ nil(1));")
    c = e.init()
    steps = e.enabled_steps(c)
    # only the scoped pair can meet; the outer receiver gets no partner
    comms = [s for s in steps if isinstance(s.label, CommL)]
    assert len(comms) == 1


def test_ready_time_delays_commitment():
    e = engine_of("S := a!(x)[2,-,1,-] | a?(_);")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, TickL)
    c = tick(e, tick(e, c))
    assert isinstance(only_step(e, c).label, CommL)


# ---------------------------------------------------------------------------
# Movements


def test_move_in_reparents_mover():
    e = engine_of("S := P | Q; P := in Q . nil; Q := acc in P;")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, MoveL) and step.label.kind is MoveKind.IN
    c = step.config
    assert c.get(the(c, "P").id).parent == the(c, "Q").id


def test_move_out_reparents_to_grandparent():
    e = engine_of("S := Q[P]; P := out Q; Q := acc out P . nil(3);")
    c = e.init()
    q = the(c, "Q")
    assert the(c, "P").parent == q.id
    step = only_step(e, c)
    assert isinstance(step.label, MoveL) and step.label.kind is MoveKind.OUT
    c = step.config
    assert the(c, "P").parent == q.parent


def test_move_get_pulls_sibling_inside():
    e = engine_of("S := P | Q; P := get Q . nil; Q := acc get P;")
    c = e.init()
    step = only_step(e, c)
    assert step.label.kind is MoveKind.GET
    assert step.label.mover_name == "Q"  # the movee moves
    c = step.config
    assert the(c, "Q").parent == the(c, "P").id


def test_move_put_pushes_child_out():
    e = engine_of("S := P[Q]; P := put Q . nil; Q := acc put P;")
    c = e.init()
    p = the(c, "P")
    assert the(c, "Q").parent == p.id
    step = only_step(e, c)
    assert step.label.kind is MoveKind.PUT and step.label.mover_name == "Q"
    c = step.config
    assert the(c, "Q").parent == p.parent


def test_move_unilateral_out_needs_outranking():
    e = engine_of("S := Q[P]; P := @3 out Q; Q := @1 nil(6);")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, MoveL) and step.label.unilateral


def test_move_out_blocked_without_rank_or_permit():
    e = engine_of("S := Q[P]; P := @1 out Q; Q := @3 nil(2);")
    c = e.init()
    steps = e.enabled_steps(c)
    assert not any(isinstance(s.label, MoveL) for s in steps)


def test_move_keys_must_match():
    e = engine_of("S := P | Q; P := in #k Q . nil; Q := acc in #j P;")
    c = e.init()
    assert not any(isinstance(s.label, MoveL)
                   for s in e.enabled_steps(c))


# ---------------------------------------------------------------------------
# Choice


def test_choice_resolves_then_communicates():
    e = engine_of("S := (a!(x) + b!(x)) | a?(_) | b?(_);")
    c = e.init()
    steps = e.enabled_steps(c)
    choices = [s for s in steps if isinstance(s.label, ChoiceL)]
    assert len(choices) == 2
    c2 = choices[0].config
    assert any(isinstance(s.label, CommL) for s in e.enabled_steps(c2))


def test_choice_branch_without_partner_not_resolvable():
    e = engine_of("S := (a!(x) + b!(x)) | a?(_);")
    c = e.init()
    chooser = next(i for i in c.instances if isinstance(i.phase, PChoosing))
    labels = [s.label for s in e.enabled_steps(c)]
    assert labels == [ChoiceL(chooser.id, chooser.def_name, 0)]


def test_choice_all_branches_dead_fires_handler():
    e = engine_of("S := (a!(x)[0,2,1,-] + b!(x)[0,2,1,-]) \\ nil(1);")
    c = e.init()
    c = tick(e, tick(e, c))
    step = only_step(e, c)
    assert isinstance(step.label, HandlerL) and step.label.cause == "timeout"


def test_choice_async_branch_always_resolvable():
    e = engine_of("S := nil(1) . a!(x) + b!(x);")
    c = e.init()
    labels = [s.label for s in e.enabled_steps(c)]
    assert labels == [ChoiceL(the(c, "S").id, "S", 0)]


# ---------------------------------------------------------------------------
# Control actions


def test_new_spawns_child():
    e = engine_of("S := new W . nil(2); W := nil(5);")
    c = e.init()
    step = only_step(e, c)
    assert isinstance(step.label, CtrlL)
    assert step.label.op == "new"
    c = step.config
    w = the(c, "W")
    assert w.parent == the(c, "S").id


def test_kill_removes_all_instances_of_name():
    e = engine_of("S := @1 (new W . new W . kill W . nil(1)); W := nil(9);")
    c = e.init()
    c = run_until(
        e, c, lambda cfg: any(
            isinstance(s.label, CtrlL) and s.label.op == "kill"
            for s in e.enabled_steps(cfg)))
    step = only_step(e, c)
    c = step.config
    assert not [i for i in c.instances if i.def_name == "W"]
    assert e.classify(c) != "fault"


def test_kill_denied_faults_killer():
    e = engine_of("S := @1 kill G | G; G := @2 nil(9);")
    c = e.init()
    steps = e.enabled_steps(c)
    faults = [s for s in steps if isinstance(s.label, FaultL)]
    assert faults and faults[0].label.cause == "kill_denied"


def test_exit_removes_subtree():
    e = engine_of("S := P | nil(4); P := new W . exit; W := nil(9);")
    c = e.init()
    c = run_until(
        e, c, lambda cfg: not any(i.def_name in ("P", "W")
                                  for i in cfg.instances))
    assert {i.def_name for i in c.instances} <= {"S", "S#1", "S#2"}


# ---------------------------------------------------------------------------
# Replay and classification


def test_apply_label_exact_and_rejects_unknown():
    e = engine_of("S := a!(x) | a?(_);")
    c = e.init()
    label = e.enabled_steps(c)[0].label
    c2 = e.apply_label(c, label)
    assert c2 is not c
    with pytest.raises(StepNotEnabled):
        e.apply_label(c2, label)


def test_classify_deadlock_on_unmatched_wait():
    e = engine_of("S := a!(x);")
    c = e.init()
    assert e.classify(c) == "deadlock"
    assert e.blocked_instances(c)


def test_classify_terminated():
    e = engine_of("S := nil(1);")
    c = e.init()
    c = tick(e, c)
    assert e.classify(c) == "terminated"


# ---------------------------------------------------------------------------
# Global invariants on random specifications


URGENT = (HandlerL, FaultL, CtrlL, RearmL)
SYNC = (CommL, MoveL, ChoiceL)


@pytest.mark.parametrize("seed", range(30))
def test_invariants_random_walks(seed):
    rng = random.Random(seed)
    spec = random_spec(rng)
    engine = Engine(spec)
    config = engine.init()
    for _ in range(60):
        steps = engine.enabled_steps(config)
        if not steps:
            break
        labels = [s.label for s in steps]
        # maximal progress: a tick is only ever offered alone
        if any(isinstance(l, TickL) for l in labels):
            assert len(labels) == 1
        # urgent steps preempt synchronizations
        if any(isinstance(l, URGENT) for l in labels):
            assert not any(isinstance(l, SYNC) for l in labels)
        step = steps[rng.randrange(len(steps))]
        # the clock only advances on ticks, by exactly one
        expected = config.clock + (1 if isinstance(step.label, TickL) else 0)
        assert step.config.clock == expected
        config = step.config
        # the containment graph stays a forest (no parent cycles)
        ids = {i.id for i in config.instances}
        for inst in config.instances:
            seen = set()
            cur = inst
            while cur.parent is not None:
                assert cur.parent in ids
                assert cur.id not in seen
                seen.add(cur.id)
                cur = config.get(cur.parent)
