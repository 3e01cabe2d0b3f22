"""Small-step timed operational semantics.

A `Configuration` is an immutable forest of process instances plus a
global discrete clock.  `Engine.enabled_steps` computes every enabled
transition; `Engine.apply_step` produces the successor configuration.

Step priority (maximal progress):

  (a) urgent zero-time steps: timeout/deadline/period violations firing
      a handler or fault, pending control actions, period re-arms;
  (b) synchronizations: channel communications, movements, and choice
      resolutions whose branch could fire;
  (c) a single clock tick, only when nothing else is enabled and at
      least one instance makes progress by waiting.

Structural bookkeeping (definition unfolding, sequencing, parallel
splitting, scope entry/exit) is performed eagerly inside `init` and
`apply_step`; it is not observable as separate steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

from .terms import (
    Act, ASYNC_ACTIONS, Action, ChannelScope, Choice, Empty, Exception_,
    Exit, Kill, MoveKind, MovePermit, MoveRequest, Nest, New, Par, Periodic,
    Receive, Ref, Send, Seq, SpecFile, Stop, TemporalSpec, Term, TimedProc,
    WithPriority, canonicalize_spec, choice_arms, outranks, par_arms,
    validate,
)

UNBOUNDED = None

TIMEOUT = "timeout"
DEADLINE = "deadline"
PROC_DEADLINE = "proc_deadline"
PERIOD_OVERRUN = "period_overrun"
KILL_DENIED = "kill_denied"


# ---------------------------------------------------------------------------
# Frames (the runtime cursor of one instance, innermost first)


@dataclass(frozen=True)
class FRun:
    term: Term


@dataclass(frozen=True)
class FHandler:
    handler: Term


@dataclass(frozen=True)
class FDlEnd:
    dl_id: int


@dataclass(frozen=True)
class FUnscope:
    channel: str
    scope_id: int


@dataclass(frozen=True)
class FPopPrio:
    old: Optional[int]


@dataclass(frozen=True)
class FCycleEnd:
    level: int


@dataclass(frozen=True)
class FJoin:
    child_ids: tuple[int, ...]


Frame = Union[FRun, FHandler, FDlEnd, FUnscope, FPopPrio, FCycleEnd, FJoin]


# ---------------------------------------------------------------------------
# Phases


@dataclass(frozen=True)
class PIdle:
    pass


@dataclass(frozen=True)
class PReady:
    remaining: int


@dataclass(frozen=True)
class PWaiting:
    remaining: Optional[int]  # None = unbounded


@dataclass(frozen=True)
class PExecuting:
    remaining: int


@dataclass(frozen=True)
class BranchState:
    term: Term
    action: Optional[Action]  # None: structural head, always resolvable
    ready: int = 0
    timeout: Optional[int] = None
    deadline: Optional[int] = None
    alive: bool = True


@dataclass(frozen=True)
class PChoosing:
    branches: tuple[BranchState, ...]


Phase = Union[PIdle, PReady, PWaiting, PExecuting, PChoosing]


@dataclass(frozen=True)
class PeriodState:
    template: Term
    period: int
    next_arm: int
    reps_left: Optional[int]  # remaining re-arms; None = infinite


@dataclass(frozen=True)
class ProcessInstance:
    id: int
    def_name: str
    parent: Optional[int] = None
    priority: Optional[int] = None
    frames: tuple[Frame, ...] = ()
    phase: Phase = PIdle()
    head: Optional[Action] = None
    deadline_rem: Optional[int] = None
    proc_deadlines: tuple[tuple[int, int], ...] = ()  # (dl_id, remaining)
    periods: tuple[PeriodState, ...] = ()
    scoped: frozenset[tuple[str, int]] = frozenset()
    faulted: bool = False

    def finished(self) -> bool:
        return not self.faulted and not self.frames and isinstance(self.phase, PIdle)


@dataclass(frozen=True)
class FaultRecord:
    instance_id: int
    def_name: str
    cause: str
    clock: int


@dataclass(frozen=True)
class Configuration:
    instances: tuple[ProcessInstance, ...] = ()
    clock: int = 0
    faults: tuple[FaultRecord, ...] = ()
    next_id: int = 0
    counter: int = 0  # scope / proc-deadline id source

    def get(self, iid: int) -> ProcessInstance:
        for inst in self.instances:
            if inst.id == iid:
                return inst
        raise KeyError(iid)

    def maybe(self, iid: Optional[int]) -> Optional[ProcessInstance]:
        if iid is None:
            return None
        for inst in self.instances:
            if inst.id == iid:
                return inst
        return None

    def children(self, iid: Optional[int]) -> list[ProcessInstance]:
        return [i for i in self.instances if i.parent == iid]

    def name_of(self, iid: Optional[int]) -> Optional[str]:
        inst = self.maybe(iid)
        return inst.def_name if inst else None


# ---------------------------------------------------------------------------
# Labels


@dataclass(frozen=True)
class TickL:
    pass


@dataclass(frozen=True)
class CommL:
    channel: str
    message: str
    sender: int
    receiver: int
    sender_name: str
    receiver_name: str


@dataclass(frozen=True)
class MoveL:
    kind: MoveKind
    mover: int
    mover_name: str
    from_parent: Optional[str]
    to_parent: Optional[str]
    key: Optional[str] = None
    unilateral: bool = False


@dataclass(frozen=True)
class CtrlL:
    op: str  # "new" | "kill" | "exit"
    actor: int
    actor_name: str
    subjects: tuple[str, ...] = ()


@dataclass(frozen=True)
class HandlerL:
    instance: int
    instance_name: str
    cause: str


@dataclass(frozen=True)
class FaultL:
    instance: int
    instance_name: str
    cause: str


@dataclass(frozen=True)
class ChoiceL:
    instance: int
    instance_name: str
    branch: int


@dataclass(frozen=True)
class RearmL:
    instance: int
    instance_name: str


Label = Union[TickL, CommL, MoveL, CtrlL, HandlerL, FaultL, ChoiceL, RearmL]

OBSERVABLE = (CommL, MoveL, CtrlL, HandlerL, FaultL)


def render_label(label: Label) -> str:
    if isinstance(label, TickL):
        return "tick"
    if isinstance(label, CommL):
        return (f"comm({label.channel},{label.message},"
                f"{label.sender_name},{label.receiver_name})")
    if isinstance(label, MoveL):
        extra = ",unilateral" if label.unilateral else ""
        return (f"move({label.kind.value},{label.mover_name},"
                f"{label.from_parent or 'root'},{label.to_parent or 'root'}{extra})")
    if isinstance(label, CtrlL):
        subj = "," + ",".join(label.subjects) if label.subjects else ""
        return f"ctrl({label.op},{label.actor_name}{subj})"
    if isinstance(label, HandlerL):
        return f"handler({label.instance_name},{label.cause})"
    if isinstance(label, FaultL):
        return f"fault({label.instance_name},{label.cause})"
    if isinstance(label, ChoiceL):
        return f"choice({label.instance_name},{label.branch})"
    if isinstance(label, RearmL):
        return f"rearm({label.instance_name})"
    raise TypeError(label)


@dataclass(frozen=True)
class Step:
    label: Label
    config: Configuration


class StepNotEnabled(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers


def _spec_of(act: Act) -> TemporalSpec:
    assert act.temporal is not None, "semantics requires canonicalized terms"
    return act.temporal


def _peek_head(term: Term) -> tuple[Optional[Act], Term]:
    """First engageable item of a branch: the head Act if statically
    reachable without structural effects, else None (structural head)."""
    t = term
    while True:
        if isinstance(t, Act):
            return t, term
        if isinstance(t, Seq):
            t = t.first
            continue
        if isinstance(t, Exception_):
            t = t.body
            continue
        return None, term


def _is_sync(action: Action) -> bool:
    return isinstance(action, (Send, Receive, MoveRequest, MovePermit))


def _scope_compatible(a: ProcessInstance, b: ProcessInstance,
                      channel: str) -> bool:
    sa = {sid for (ch, sid) in a.scoped if ch == channel}
    sb = {sid for (ch, sid) in b.scoped if ch == channel}
    return sa == sb


# ---------------------------------------------------------------------------
# Engine


class Engine:
    """Executes a validated specification step by step."""

    def __init__(self, spec: SpecFile):
        diags = validate(spec)
        errs = [d for d in diags if d.severity == "error"]
        if errs:
            raise ValueError("invalid specification: " + "; ".join(map(str, errs)))
        self.spec = canonicalize_spec(spec)
        self.defs = self.spec.definitions

    # -- initialization ----------------------------------------------------

    def init(self) -> Configuration:
        config = Configuration()
        root_body = self.defs[self.spec.root]
        config, _ = self._spawn(config, self.spec.root, root_body, parent=None,
                                scoped=frozenset(), priority=None)
        return self._normalize(config)

    def _spawn(self, config: Configuration, def_name: str, body: Term,
               parent: Optional[int], scoped: frozenset,
               priority: Optional[int]) -> tuple[Configuration, int]:
        iid = config.next_id
        inst = ProcessInstance(
            id=iid, def_name=def_name, parent=parent, priority=priority,
            frames=(FRun(body),), scoped=scoped,
        )
        config = replace(config, instances=config.instances + (inst,),
                         next_id=iid + 1)
        return config, iid

    # -- structural normalization -----------------------------------------

    def _normalize(self, config: Configuration) -> Configuration:
        changed = True
        while changed:
            changed = False
            for inst in config.instances:
                new_config = self._normalize_instance(config, inst.id)
                if new_config is not None:
                    config = new_config
                    changed = True
        return config

    def _normalize_instance(self, config: Configuration,
                            iid: int) -> Optional[Configuration]:
        """One normalization pass; returns None when already stable."""
        inst = config.get(iid)
        if inst.faulted or not isinstance(inst.phase, PIdle):
            return None
        if not inst.frames:
            return None
        top, rest = inst.frames[0], inst.frames[1:]

        def put(new_inst: ProcessInstance,
                cfg: Optional[Configuration] = None) -> Configuration:
            cfg = cfg if cfg is not None else config
            return replace(cfg, instances=tuple(
                new_inst if i.id == iid else i for i in cfg.instances))

        if isinstance(top, FRun):
            term = top.term
            if isinstance(term, Seq):
                return put(replace(inst, frames=(FRun(term.first),
                                                 FRun(term.rest)) + rest))
            if isinstance(term, Stop):
                return put(replace(inst, frames=(), periods=(),
                                   proc_deadlines=()))
            if isinstance(term, Ref):
                return put(replace(inst, frames=(FRun(self.defs[term.def_name]),)
                                   + rest))
            if isinstance(term, Act):
                return put(self._install_head(inst, term, rest))
            if isinstance(term, Choice):
                branches = []
                for arm in choice_arms(term):
                    head, _ = _peek_head(arm)
                    if head is None:
                        branches.append(BranchState(arm, None))
                    else:
                        sp = _spec_of(head)
                        branches.append(BranchState(
                            arm, head.action, sp.ready, sp.timeout, sp.deadline))
                return put(replace(inst, phase=PChoosing(tuple(branches))))
            if isinstance(term, Par):
                cfg = config
                ids = []
                for arm in par_arms(term):
                    cfg, cid = self._spawn_arm(cfg, inst, arm)
                    ids.append(cid)
                if rest:
                    frames: tuple[Frame, ...] = (FJoin(tuple(ids)),) + rest
                else:
                    frames = rest
                return put(replace(inst, frames=frames), cfg)
            if isinstance(term, Nest):
                cfg, _ = self._spawn_nest(config, term, inst.parent,
                                          inst.scoped, inst.priority)
                return put(replace(inst, frames=rest), cfg)
            if isinstance(term, Exception_):
                return put(replace(inst, frames=(FRun(term.body),
                                                 FHandler(term.handler)) + rest))
            if isinstance(term, TimedProc):
                d = term.temporal.deadline
                if d is None:
                    return put(replace(inst, frames=(FRun(term.body),) + rest))
                dl_id = config.counter
                cfg = replace(config, counter=dl_id + 1)
                return put(replace(
                    inst,
                    frames=(FRun(term.body), FDlEnd(dl_id)) + rest,
                    proc_deadlines=inst.proc_deadlines + ((dl_id, d),),
                ), cfg)
            if isinstance(term, Periodic):
                ps = term.period
                level = len(inst.periods)
                state = PeriodState(
                    template=term.body,
                    period=ps.period,
                    next_arm=config.clock + ps.period,
                    reps_left=None if ps.reps is None else ps.reps - 1,
                )
                return put(replace(
                    inst,
                    frames=(FRun(term.body), FCycleEnd(level)) + rest,
                    periods=inst.periods + (state,),
                ))
            if isinstance(term, ChannelScope):
                sid = config.counter
                cfg = replace(config, counter=sid + 1)
                return put(replace(
                    inst,
                    frames=(FRun(term.body), FUnscope(term.channel, sid)) + rest,
                    scoped=inst.scoped | {(term.channel, sid)},
                ), cfg)
            if isinstance(term, WithPriority):
                return put(replace(
                    inst,
                    frames=(FRun(term.body), FPopPrio(inst.priority)) + rest,
                    priority=term.level,
                ))
            raise TypeError(f"unexpected term {term!r}")

        if isinstance(top, FHandler):
            return put(replace(inst, frames=rest))
        if isinstance(top, FDlEnd):
            pds = tuple(pd for pd in inst.proc_deadlines if pd[0] != top.dl_id)
            return put(replace(inst, frames=rest, proc_deadlines=pds))
        if isinstance(top, FUnscope):
            return put(replace(inst, frames=rest,
                               scoped=inst.scoped - {(top.channel, top.scope_id)}))
        if isinstance(top, FPopPrio):
            return put(replace(inst, frames=rest, priority=top.old))
        if isinstance(top, FCycleEnd):
            # Cycle complete; re-arming is a labelled urgent step.
            return None
        if isinstance(top, FJoin):
            kids = [config.maybe(cid) for cid in top.child_ids]
            if all(k is None or k.finished() for k in kids):
                return put(replace(inst, frames=rest))
            return None
        raise TypeError(f"unexpected frame {top!r}")

    def _spawn_arm(self, config: Configuration, parent_inst: ProcessInstance,
                   arm: Term) -> tuple[Configuration, int]:
        if isinstance(arm, Ref):
            return self._spawn(config, arm.def_name, self.defs[arm.def_name],
                               parent_inst.parent, parent_inst.scoped,
                               parent_inst.priority)
        if isinstance(arm, Nest):
            return self._spawn_nest(config, arm, parent_inst.parent,
                                    parent_inst.scoped, parent_inst.priority)
        name = f"{parent_inst.def_name}#{config.next_id}"
        return self._spawn(config, name, arm, parent_inst.parent,
                           parent_inst.scoped, parent_inst.priority)

    def _spawn_nest(self, config: Configuration, nest: Nest,
                    parent: Optional[int], scoped: frozenset,
                    priority: Optional[int]) -> tuple[Configuration, int]:
        body = self.defs[nest.def_name]
        config, iid = self._spawn(config, nest.def_name, body, parent,
                                  scoped, priority)
        if nest.children is not None:
            container = config.get(iid)
            for arm in par_arms(nest.children):
                config, _ = self._spawn_arm(
                    config, replace(container, parent=iid), arm)
        return config, iid

    def _install_head(self, inst: ProcessInstance, act: Act,
                      rest: tuple[Frame, ...]) -> ProcessInstance:
        sp = _spec_of(act)
        phase: Phase
        if sp.ready > 0:
            phase = PReady(sp.ready)
        elif isinstance(act.action, Empty):
            phase = PExecuting(sp.exec_time)
        elif isinstance(act.action, ASYNC_ACTIONS):
            phase = PReady(0)  # awaits its labelled control step
        else:
            phase = PWaiting(sp.timeout)
        out = replace(inst, frames=(FRun(act),) + rest, phase=phase,
                      head=act.action, deadline_rem=sp.deadline)
        if isinstance(act.action, Empty) and sp.exec_time == 0:
            out = _complete_head(out)
        return out

    # -- enabled steps -----------------------------------------------------

    def enabled_steps(self, config: Configuration) -> list[Step]:
        urgent = self._urgent_steps(config)
        if urgent:
            return urgent
        sync = self._sync_steps(config)
        if sync:
            return sync
        if self._tick_progresses(config):
            return [Step(TickL(), self._apply_tick(config))]
        return []

    # class (a): urgent zero-time steps

    def _urgent_steps(self, config: Configuration) -> list[Step]:
        steps: list[Step] = []
        for inst in config.instances:
            if inst.faulted:
                continue
            violation = self._violation_of(config, inst)
            if violation is not None:
                steps.append(self._violation_step(config, inst, violation))
                continue
            # pending control action
            if (isinstance(inst.phase, PReady) and inst.phase.remaining == 0
                    and isinstance(inst.head, (New, Kill, Exit))):
                steps.append(self._ctrl_step(config, inst))
                continue
            # period re-arm
            if inst.frames and isinstance(inst.frames[0], FCycleEnd):
                level = inst.frames[0].level
                if level < len(inst.periods) \
                        and config.clock >= inst.periods[level].next_arm:
                    steps.append(self._rearm_step(config, inst, level))
        if not steps:
            return []
        # Urgent steps on distinct instances commute; keep a single
        # canonical one per round unless some step can affect other
        # instances (kill/exit), in which case all orders are explored.
        disruptive = any(isinstance(s.label, CtrlL)
                         and s.label.op in ("kill", "exit")
                         for s in steps)
        steps.sort(key=lambda s: render_label(s.label))
        if disruptive and len(steps) > 1:
            return steps
        return steps[:1]

    def _violation_of(self, config: Configuration,
                      inst: ProcessInstance) -> Optional[str]:
        ph = inst.phase
        if isinstance(ph, PWaiting) and ph.remaining == 0:
            return TIMEOUT
        if inst.deadline_rem == 0 and isinstance(ph, (PReady, PWaiting, PExecuting)):
            return DEADLINE
        if isinstance(ph, PChoosing):
            if any(b.alive and b.deadline == 0 for b in ph.branches):
                return DEADLINE
            if all(not b.alive for b in ph.branches):
                return TIMEOUT
        for pd_id, rem in inst.proc_deadlines:
            if rem == 0:
                return PROC_DEADLINE
        for level, ps in enumerate(inst.periods):
            waiting_here = (inst.frames
                            and isinstance(inst.frames[0], FCycleEnd)
                            and inst.frames[0].level == level)
            if config.clock >= ps.next_arm and not waiting_here:
                # inner cycle may legitimately be waiting at its own end
                inner_wait = (inst.frames
                              and isinstance(inst.frames[0], FCycleEnd)
                              and inst.frames[0].level > level)
                if not inner_wait:
                    return PERIOD_OVERRUN
        return None

    def _violation_step(self, config: Configuration, inst: ProcessInstance,
                        cause: str) -> Step:
        has_handler = any(isinstance(f, FHandler) for f in inst.frames)
        if has_handler:
            new_inst = _fire_handler(inst, cause)
            label: Label = HandlerL(inst.id, inst.def_name, cause)
        else:
            new_inst = replace(inst, faulted=True, frames=(), phase=PIdle(),
                               head=None, deadline_rem=None,
                               proc_deadlines=(), periods=())
            label = FaultL(inst.id, inst.def_name, cause)
        cfg = _swap(config, new_inst)
        if isinstance(label, FaultL):
            cfg = replace(cfg, faults=cfg.faults + (
                FaultRecord(inst.id, inst.def_name, cause, cfg.clock),))
        return Step(label, self._normalize(cfg))

    def _ctrl_step(self, config: Configuration, inst: ProcessInstance) -> Step:
        act = inst.head
        assert isinstance(act, (New, Kill, Exit))
        sp = _spec_of(inst.frames[0].term)  # type: ignore[union-attr]
        if isinstance(act, New):
            cfg, cid = self._spawn(config, act.def_name, self.defs[act.def_name],
                                   parent=inst.id, scoped=inst.scoped,
                                   priority=None)
            cfg = _swap(cfg, _start_exec(cfg.get(inst.id), sp))
            label: Label = CtrlL("new", inst.id, inst.def_name, (act.def_name,))
            return Step(label, self._normalize(cfg))
        if isinstance(act, Kill):
            victims = [i for i in config.instances
                       if i.def_name == act.proc_name and i.id != inst.id]
            denied = [v for v in victims if not outranks(inst.priority, v.priority)]
            if denied:
                new_inst = replace(inst, faulted=True, frames=(), phase=PIdle(),
                                   head=None, deadline_rem=None,
                                   proc_deadlines=(), periods=())
                cfg = _swap(config, new_inst)
                cfg = replace(cfg, faults=cfg.faults + (
                    FaultRecord(inst.id, inst.def_name, KILL_DENIED, cfg.clock),))
                return Step(FaultL(inst.id, inst.def_name, KILL_DENIED),
                            self._normalize(cfg))
            doomed: set[int] = set()
            for v in victims:
                doomed |= _subtree_ids(config, v.id)
            cfg = replace(config, instances=tuple(
                i for i in config.instances if i.id not in doomed))
            cfg = _swap(cfg, _start_exec(cfg.get(inst.id), sp))
            label = CtrlL("kill", inst.id, inst.def_name,
                          tuple(sorted({v.def_name for v in victims})))
            return Step(label, self._normalize(cfg))
        # Exit: remove self and whole subtree
        doomed = _subtree_ids(config, inst.id)
        cfg = replace(config, instances=tuple(
            i for i in config.instances if i.id not in doomed))
        return Step(CtrlL("exit", inst.id, inst.def_name, ()),
                    self._normalize(cfg))

    def _rearm_step(self, config: Configuration, inst: ProcessInstance,
                    level: int) -> Step:
        ps = inst.periods[level]
        rest = inst.frames[1:]
        if ps.reps_left is None or ps.reps_left > 0:
            new_state = PeriodState(
                ps.template, ps.period, ps.next_arm + ps.period,
                None if ps.reps_left is None else ps.reps_left - 1)
            periods = inst.periods[:level] + (new_state,) + inst.periods[level + 1:]
            frames = (FRun(ps.template), FCycleEnd(level)) + rest
            new_inst = replace(inst, frames=frames, periods=periods)
        else:
            periods = inst.periods[:level]
            new_inst = replace(inst, frames=rest, periods=periods)
        cfg = _swap(config, new_inst)
        return Step(RearmL(inst.id, inst.def_name), self._normalize(cfg))

    # class (b): synchronizations and choice resolutions

    def _sync_steps(self, config: Configuration) -> list[Step]:
        committed: list[tuple[ProcessInstance, Action]] = []
        choosing: list[tuple[ProcessInstance, int, BranchState]] = []
        for inst in config.instances:
            if inst.faulted:
                continue
            if isinstance(inst.phase, PWaiting) and inst.phase.remaining != 0 \
                    and inst.head is not None:
                committed.append((inst, inst.head))
            elif isinstance(inst.phase, PChoosing):
                for bi, b in enumerate(inst.phase.branches):
                    if b.alive and b.ready == 0 and b.timeout != 0:
                        choosing.append((inst, bi, b))

        steps: list[Step] = []
        seen: set[Label] = set()

        def offer_actions() -> list[tuple[ProcessInstance, Action]]:
            out = list(committed)
            for inst, _bi, b in choosing:
                if b.action is not None:
                    out.append((inst, b.action))
            return out

        # committed-committed pairings
        for si, sa in committed:
            for ri, ra in committed:
                if si.id == ri.id:
                    continue
                if isinstance(sa, Send) and isinstance(ra, Receive) \
                        and sa.channel == ra.channel and ra.matches(sa.message) \
                        and _scope_compatible(si, ri, sa.channel):
                    label = CommL(sa.channel, sa.message, si.id, ri.id,
                                  si.def_name, ri.def_name)
                    if label not in seen:
                        seen.add(label)
                        steps.append(Step(label, self._apply_comm(
                            config, si.id, ri.id)))
        steps.extend(self._move_steps(config, committed, seen))

        # choice resolutions whose branch head could fire
        others = offer_actions()
        for inst, bi, b in choosing:
            resolvable = False
            if b.action is None or isinstance(b.action, ASYNC_ACTIONS):
                resolvable = True
            else:
                resolvable = self._has_partner(config, inst, b.action, others)
            if resolvable:
                label = ChoiceL(inst.id, inst.def_name, bi)
                steps.append(Step(label, self._apply_resolution(config, inst, bi)))

        steps.sort(key=lambda s: render_label(s.label))
        return steps

    def _has_partner(self, config: Configuration, inst: ProcessInstance,
                     action: Action,
                     others: list[tuple[ProcessInstance, Action]]) -> bool:
        for oi, oa in others:
            if oi.id == inst.id:
                continue
            if isinstance(action, Send) and isinstance(oa, Receive) \
                    and action.channel == oa.channel \
                    and oa.matches(action.message) \
                    and _scope_compatible(inst, oi, action.channel):
                return True
            if isinstance(action, Receive) and isinstance(oa, Send) \
                    and action.channel == oa.channel \
                    and action.matches(oa.message) \
                    and _scope_compatible(inst, oi, action.channel):
                return True
            if isinstance(action, MoveRequest) or isinstance(action, MovePermit):
                if self._move_pair_ok(config, inst, action, oi, oa):
                    return True
        # unilateral out needs no partner
        if isinstance(action, MoveRequest) and action.kind is MoveKind.OUT:
            parent = config.maybe(inst.parent)
            prio = action.prio if action.prio is not None else inst.priority
            if parent is not None and parent.def_name == action.target \
                    and outranks(prio, parent.priority):
                return True
        return False

    def _move_pair_ok(self, config: Configuration, a_inst: ProcessInstance,
                      a_act: Action, b_inst: ProcessInstance,
                      b_act: Action) -> bool:
        req, req_inst, perm, perm_inst = None, None, None, None
        if isinstance(a_act, MoveRequest) and isinstance(b_act, MovePermit):
            req, req_inst, perm, perm_inst = a_act, a_inst, b_act, b_inst
        elif isinstance(a_act, MovePermit) and isinstance(b_act, MoveRequest):
            req, req_inst, perm, perm_inst = b_act, b_inst, a_act, a_inst
        else:
            return False
        if req.kind is not perm.kind:
            return False
        if (req.key is None) != (perm.key is None) or req.key != perm.key:
            return False
        kind = req.kind
        if kind is MoveKind.IN:
            return (perm_inst.def_name == req.target
                    and perm.subject == req_inst.def_name
                    and req_inst.parent == perm_inst.parent
                    and req_inst.id != perm_inst.id)
        if kind is MoveKind.OUT:
            return (req_inst.parent == perm_inst.id
                    and perm_inst.def_name == req.target
                    and perm.subject == req_inst.def_name)
        if kind is MoveKind.GET:
            # requester pulls sibling `target` inside itself
            return (perm_inst.def_name == req.target
                    and perm.subject == req_inst.def_name
                    and perm_inst.parent == req_inst.parent
                    and req_inst.id != perm_inst.id)
        if kind is MoveKind.PUT:
            # requester pushes child `target` out to its own parent level
            return (perm_inst.def_name == req.target
                    and perm.subject == req_inst.def_name
                    and perm_inst.parent == req_inst.id)
        return False

    def _move_steps(self, config: Configuration,
                    committed: list[tuple[ProcessInstance, Action]],
                    seen: set) -> list[Step]:
        steps: list[tuple[object, Step]] = []
        for qi, qa in committed:
            if not isinstance(qa, MoveRequest):
                continue
            for pi, pa in committed:
                if pi.id == qi.id or not isinstance(pa, MovePermit):
                    continue
                if self._move_pair_ok(config, qi, qa, pi, pa):
                    steps.append((pi.id, self._make_move_step(config, qi, qa, pi)))
            if qa.kind is MoveKind.OUT:
                parent = config.maybe(qi.parent)
                prio = qa.prio if qa.prio is not None else qi.priority
                if parent is not None and parent.def_name == qa.target \
                        and outranks(prio, parent.priority):
                    steps.append((None, self._make_move_step(config, qi, qa, None)))
        uniq = []
        for perm_id, s in steps:
            key = (s.label, perm_id)
            if key not in seen:
                seen.add(key)
                uniq.append(s)
        return uniq

    def _make_move_step(self, config: Configuration, req_inst: ProcessInstance,
                        req: MoveRequest,
                        perm_inst: Optional[ProcessInstance]) -> Step:
        kind = req.kind
        if kind in (MoveKind.IN, MoveKind.OUT):
            mover = req_inst
        else:
            assert perm_inst is not None
            mover = perm_inst  # movee
        if kind is MoveKind.IN:
            assert perm_inst is not None
            new_parent: Optional[int] = perm_inst.id
        elif kind is MoveKind.OUT:
            grand = config.maybe(req_inst.parent)
            new_parent = grand.parent if grand is not None else None
        elif kind is MoveKind.GET:
            new_parent = req_inst.id
        else:  # PUT
            new_parent = req_inst.parent
        label = MoveL(
            kind, mover.id, mover.def_name,
            config.name_of(mover.parent), config.name_of(new_parent),
            req.key, perm_inst is None,
        )
        cfg = config
        sp_req = _spec_of(req_inst.frames[0].term)  # type: ignore[union-attr]
        cfg = _swap(cfg, _start_exec(cfg.get(req_inst.id), sp_req))
        if perm_inst is not None:
            sp_perm = _spec_of(perm_inst.frames[0].term)  # type: ignore[union-attr]
            cfg = _swap(cfg, _start_exec(cfg.get(perm_inst.id), sp_perm))
        moved = cfg.get(mover.id)
        cfg = _swap(cfg, replace(moved, parent=new_parent))
        return Step(label, self._normalize(cfg))

    def _apply_comm(self, config: Configuration, sender: int,
                    receiver: int) -> Configuration:
        cfg = config
        for iid in (sender, receiver):
            inst = cfg.get(iid)
            sp = _spec_of(inst.frames[0].term)  # type: ignore[union-attr]
            cfg = _swap(cfg, _start_exec(inst, sp))
        return self._normalize(cfg)

    def _apply_resolution(self, config: Configuration, inst: ProcessInstance,
                          branch: int) -> Configuration:
        ph = inst.phase
        assert isinstance(ph, PChoosing)
        b = ph.branches[branch]
        rest = inst.frames[1:]
        new_inst = replace(inst, frames=(FRun(b.term),) + rest, phase=PIdle(),
                           head=None, deadline_rem=None)
        cfg = _swap(config, new_inst)
        cfg = self._normalize(cfg)
        # carry over the time already spent at the choice point
        resolved = cfg.get(inst.id)
        if b.action is not None and resolved.head == b.action:
            patch = replace(resolved, deadline_rem=b.deadline)
            if isinstance(resolved.phase, PWaiting):
                patch = replace(patch, phase=PWaiting(b.timeout))
            cfg = _swap(cfg, patch)
        return cfg

    # -- tick --------------------------------------------------------------

    def _tick_progresses(self, config: Configuration) -> bool:
        for inst in config.instances:
            if inst.faulted:
                continue
            ph = inst.phase
            if isinstance(ph, PReady) and ph.remaining > 0:
                return True
            if isinstance(ph, PWaiting):
                if ph.remaining is not None and ph.remaining > 0:
                    return True
                if inst.deadline_rem is not None:
                    return True
            if isinstance(ph, PExecuting) and ph.remaining > 0:
                return True
            if isinstance(ph, PChoosing):
                for b in ph.branches:
                    if not b.alive:
                        continue
                    if b.ready > 0 or (b.timeout is not None and b.timeout > 0) \
                            or b.deadline is not None:
                        return True
            if inst.frames and isinstance(inst.frames[0], FCycleEnd):
                level = inst.frames[0].level
                if level < len(inst.periods) \
                        and config.clock < inst.periods[level].next_arm:
                    return True
            if any(rem > 0 for _id, rem in inst.proc_deadlines):
                return True
        return False

    def _apply_tick(self, config: Configuration) -> Configuration:
        new_instances = []
        for inst in config.instances:
            if inst.faulted:
                new_instances.append(inst)
                continue
            new_instances.append(self._tick_instance(inst))
        cfg = replace(config, instances=tuple(new_instances),
                      clock=config.clock + 1)
        return self._normalize(cfg)

    def _tick_instance(self, inst: ProcessInstance) -> ProcessInstance:
        ph = inst.phase
        head = inst.head
        deadline = inst.deadline_rem
        completed = False
        if isinstance(ph, (PReady, PWaiting, PExecuting)) and deadline is not None:
            deadline -= 1
        new_phase: Phase = ph
        if isinstance(ph, PReady):
            if ph.remaining > 0:
                rem = ph.remaining - 1
                if rem == 0 and head is not None:
                    sp = _spec_of(inst.frames[0].term)  # type: ignore[union-attr]
                    if isinstance(head, Empty):
                        new_phase = PExecuting(sp.exec_time)
                        if sp.exec_time == 0:
                            completed = True
                    elif isinstance(head, ASYNC_ACTIONS):
                        new_phase = PReady(0)
                    else:
                        new_phase = PWaiting(sp.timeout)
                else:
                    new_phase = PReady(rem)
        elif isinstance(ph, PWaiting):
            if ph.remaining is not None and ph.remaining > 0:
                new_phase = PWaiting(ph.remaining - 1)
        elif isinstance(ph, PExecuting):
            rem = ph.remaining - 1
            if rem <= 0:
                completed = True
            else:
                new_phase = PExecuting(rem)
        elif isinstance(ph, PChoosing):
            branches = []
            for b in ph.branches:
                if not b.alive or b.action is None:
                    branches.append(b)
                    continue
                ready, timeout, bdl, alive = b.ready, b.timeout, b.deadline, True
                if bdl is not None:
                    bdl -= 1
                if ready > 0:
                    ready -= 1
                elif timeout is not None:
                    if timeout > 0:
                        timeout -= 1
                    if timeout == 0 and not isinstance(b.action, ASYNC_ACTIONS):
                        alive = False
                branches.append(BranchState(b.term, b.action, ready, timeout,
                                            bdl, alive))
            new_phase = PChoosing(tuple(branches))
        pds = tuple((pid, rem - 1 if rem > 0 else rem)
                    for pid, rem in inst.proc_deadlines)
        out = replace(inst, phase=new_phase, deadline_rem=deadline,
                      proc_deadlines=pds)
        if completed:
            out = _complete_head(out)
        return out

    # -- public application / classification -------------------------------

    def apply_step(self, config: Configuration, step: Step) -> Configuration:
        for s in self.enabled_steps(config):
            if s.label == step.label:
                return s.config
        raise StepNotEnabled(render_label(step.label))

    def apply_label(self, config: Configuration, label: Label) -> Configuration:
        for s in self.enabled_steps(config):
            if s.label == label:
                return s.config
        raise StepNotEnabled(render_label(label))

    def classify(self, config: Configuration) -> str:
        if config.faults:
            return "fault"
        if self.enabled_steps(config):
            return "running"
        if self.blocked_instances(config):
            return "deadlock"
        return "terminated"

    def blocked_instances(self, config: Configuration) -> list[tuple[int, str]]:
        """Instances stuck forever on an unmatchable synchronization."""
        out = []
        for inst in config.instances:
            if inst.faulted:
                continue
            if isinstance(inst.phase, PWaiting) and inst.phase.remaining is None \
                    and inst.deadline_rem is None and inst.head is not None:
                out.append((inst.id, _describe_action(inst.head)))
            elif isinstance(inst.phase, PChoosing):
                alive = [b for b in inst.phase.branches if b.alive]
                if alive and all(b.timeout is None and b.deadline is None
                                 and b.ready == 0 for b in alive):
                    out.append((inst.id, "choice:" + "|".join(
                        _describe_action(b.action) if b.action else "struct"
                        for b in alive)))
        return out


# ---------------------------------------------------------------------------
# Module-level helpers


def _describe_action(action: Action) -> str:
    from .parser import _render_action
    return _render_action(action)


def _swap(config: Configuration, inst: ProcessInstance) -> Configuration:
    return replace(config, instances=tuple(
        inst if i.id == inst.id else i for i in config.instances))


def _subtree_ids(config: Configuration, root: int) -> set[int]:
    out = {root}
    frontier = [root]
    while frontier:
        nxt = frontier.pop()
        for child in config.children(nxt):
            if child.id not in out:
                out.add(child.id)
                frontier.append(child.id)
    return out


def _start_exec(inst: ProcessInstance, sp: TemporalSpec) -> ProcessInstance:
    out = replace(inst, phase=PExecuting(sp.exec_time))
    if sp.exec_time == 0:
        out = _complete_head(out)
    return out


def _complete_head(inst: ProcessInstance) -> ProcessInstance:
    assert inst.frames and isinstance(inst.frames[0], FRun)
    return replace(inst, frames=inst.frames[1:], phase=PIdle(), head=None,
                   deadline_rem=None)


def _fire_handler(inst: ProcessInstance, cause: str) -> ProcessInstance:
    frames = list(inst.frames)
    idx = next(i for i, f in enumerate(frames) if isinstance(f, FHandler))
    dropped, handler_frame, rest = frames[:idx], frames[idx], frames[idx + 1:]
    assert isinstance(handler_frame, FHandler)
    pds = list(inst.proc_deadlines)
    periods = list(inst.periods)
    scoped = set(inst.scoped)
    for f in dropped:
        if isinstance(f, FDlEnd):
            pds = [pd for pd in pds if pd[0] != f.dl_id]
        elif isinstance(f, FUnscope):
            scoped.discard((f.channel, f.scope_id))
        elif isinstance(f, FCycleEnd):
            if f.level < len(periods):
                periods = periods[:f.level]
    if cause == PROC_DEADLINE:
        pds = [pd for pd in pds if pd[1] != 0]
    if cause == PERIOD_OVERRUN and periods:
        ps = periods[-1]
        periods[-1] = PeriodState(ps.template, ps.period,
                                  ps.next_arm + ps.period, ps.reps_left)
    return replace(
        inst,
        frames=(FRun(handler_frame.handler),) + tuple(rest),
        phase=PIdle(), head=None, deadline_rem=None,
        proc_deadlines=tuple(pds), periods=tuple(periods),
        scoped=frozenset(scoped),
    )
