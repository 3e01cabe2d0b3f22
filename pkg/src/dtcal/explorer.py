"""Bounded exhaustive state-space exploration.

`build_lts` runs a breadth-first closure of the step relation, merging
configurations at the same clock that are structurally identical up to
instance-id renaming.  `enumerate_paths` lists every maximal
walk, cutting cycles at the first repeated state, and
`scenario_classes` collapses paths into observable-event classes.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .semantics import (
    Configuration, CommL, CtrlL, Engine, FCycleEnd, FDlEnd, FHandler, FJoin,
    FPopPrio, FRun, FUnscope, FaultL, HandlerL, Label, MoveL, OBSERVABLE,
    PChoosing, PExecuting, PIdle, PReady, PWaiting, ProcessInstance, RearmL,
    Step, TickL, render_label,
)
from .terms import SpecFile

DEFAULT_MAX_CLOCK = 40
DEFAULT_MAX_STATES = 200000


@dataclass(frozen=True)
class ExploreBounds:
    max_clock: int = DEFAULT_MAX_CLOCK
    max_states: int = DEFAULT_MAX_STATES

    def __post_init__(self) -> None:
        if self.max_clock < 1 or self.max_states < 1:
            raise ValueError("bounds must be >= 1")


# ---------------------------------------------------------------------------
# Canonical structural key (id- and clock-independent)


def _phase_key(phase) -> tuple:
    if isinstance(phase, PIdle):
        return ("idle",)
    if isinstance(phase, PReady):
        return ("ready", phase.remaining)
    if isinstance(phase, PWaiting):
        return ("waiting", phase.remaining)
    if isinstance(phase, PExecuting):
        return ("executing", phase.remaining)
    if isinstance(phase, PChoosing):
        return ("choosing", tuple(
            (b.term, b.action, b.ready, b.timeout, b.deadline, b.alive)
            for b in phase.branches))
    raise TypeError(phase)


def _local_key(inst: ProcessInstance, renum_scope) -> tuple:
    frames = []
    dl_renum: dict[int, int] = {}
    for f in inst.frames:
        if isinstance(f, FRun):
            frames.append(("run", f.term))
        elif isinstance(f, FHandler):
            frames.append(("handler", f.handler))
        elif isinstance(f, FDlEnd):
            frames.append(("dlend", dl_renum.setdefault(f.dl_id, len(dl_renum))))
        elif isinstance(f, FUnscope):
            frames.append(("unscope", f.channel, renum_scope(f.scope_id)))
        elif isinstance(f, FPopPrio):
            frames.append(("popprio", f.old))
        elif isinstance(f, FCycleEnd):
            frames.append(("cycleend", f.level))
        elif isinstance(f, FJoin):
            frames.append(("join", tuple(sorted(f.child_ids))))
        else:
            raise TypeError(f)
    pds = tuple(sorted(
        (dl_renum.get(pid, -1), rem) for pid, rem in inst.proc_deadlines))
    periods = tuple((ps.template, ps.period, ps.next_arm, ps.reps_left)
                    for ps in inst.periods)
    scoped = tuple(sorted((ch, renum_scope(sid)) for ch, sid in inst.scoped))
    return (inst.def_name, inst.priority, inst.faulted, tuple(frames),
            _phase_key(inst.phase), inst.head, inst.deadline_rem,
            pds, periods, scoped)


def canonical_key(config: Configuration) -> tuple:
    live_sids = sorted({sid for inst in config.instances
                        for _ch, sid in inst.scoped})
    sid_map = {sid: i for i, sid in enumerate(live_sids)}

    def renum_scope(sid: int) -> int:
        return sid_map.get(sid, -1)

    by_parent: dict[Optional[int], list[ProcessInstance]] = {}
    for inst in config.instances:
        by_parent.setdefault(inst.parent, []).append(inst)

    def tree_key(inst: ProcessInstance) -> tuple:
        kids = tuple(sorted((tree_key(k) for k in by_parent.get(inst.id, ())),
                            key=repr))
        return (_local_key(inst, renum_scope), kids)

    roots = tuple(sorted((tree_key(r) for r in by_parent.get(None, ())),
                         key=repr))
    faults = tuple(sorted((f.def_name, f.cause, f.clock)
                          for f in config.faults))
    return (config.clock, roots, faults)


# ---------------------------------------------------------------------------
# LTS


@dataclass
class Lts:
    engine: Engine
    configs: list[Configuration] = field(default_factory=list)
    edges: list[tuple[int, Label, int]] = field(default_factory=list)
    out_edges: dict[int, list[tuple[Label, int]]] = field(default_factory=dict)
    classifications: list[str] = field(default_factory=list)
    frontier_cut: set[int] = field(default_factory=set)  # unexpanded states
    initial: int = 0
    bounds: ExploreBounds = field(default_factory=ExploreBounds)
    truncated: bool = False

    @property
    def n_states(self) -> int:
        return len(self.configs)


def build_lts(spec_or_engine, bounds: Optional[ExploreBounds] = None,
              jobs: int = 1) -> Lts:
    engine = (spec_or_engine if isinstance(spec_or_engine, Engine)
              else Engine(spec_or_engine))
    bounds = bounds or ExploreBounds()
    lts = Lts(engine=engine, bounds=bounds)

    init = engine.init()
    index: dict[tuple, int] = {canonical_key(init): 0}
    lts.configs.append(init)
    lts.classifications.append("")
    frontier = [0]

    def expand(sid: int) -> list[Step]:
        return engine.enabled_steps(lts.configs[sid])

    while frontier:
        # bound checks first: states past the horizon are not expanded
        workable = []
        for sid in frontier:
            if lts.configs[sid].clock > bounds.max_clock:
                lts.frontier_cut.add(sid)
                lts.truncated = True
            else:
                workable.append(sid)
        if jobs > 1 and len(workable) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(expand, workable))
        else:
            results = [expand(sid) for sid in workable]

        next_frontier: list[int] = []
        capped = False
        for sid, steps in zip(workable, results):
            cfg = lts.configs[sid]
            if cfg.faults:
                cls = "fault"
            elif steps:
                cls = "running"
            elif engine.blocked_instances(cfg):
                cls = "deadlock"
            else:
                cls = "terminated"
            lts.classifications[sid] = cls
            if capped:
                lts.frontier_cut.add(sid)
                continue
            for step in steps:
                key = canonical_key(step.config)
                tid = index.get(key)
                if tid is None:
                    if len(lts.configs) >= bounds.max_states:
                        lts.truncated = True
                        capped = True
                        lts.frontier_cut.add(sid)
                        break
                    tid = len(lts.configs)
                    index[key] = tid
                    lts.configs.append(step.config)
                    lts.classifications.append("")
                    next_frontier.append(tid)
                lts.edges.append((sid, step.label, tid))
                lts.out_edges.setdefault(sid, []).append((step.label, tid))
        frontier = next_frontier
        if capped:
            for sid in frontier:
                lts.frontier_cut.add(sid)
            break

    # classify any never-expanded states
    for sid in lts.frontier_cut:
        if not lts.classifications[sid]:
            cfg = lts.configs[sid]
            lts.classifications[sid] = "fault" if cfg.faults else "running"
    return lts


# ---------------------------------------------------------------------------
# Paths


@dataclass(frozen=True)
class ExecutionPath:
    labels: tuple[Label, ...]
    terminal: str  # terminated | deadlock | fault | truncated
    final_clock: int


def _terminal_of(lts: Lts, sid: int) -> str:
    cls = lts.classifications[sid]
    if sid in lts.frontier_cut or cls == "running":
        return "truncated"
    return cls


def enumerate_paths(lts: Lts, max_paths: int = 100000) -> list[ExecutionPath]:
    """All maximal label walks from the initial state; a revisited state
    ends its path (infinite periodic tails are represented once)."""
    paths: list[ExecutionPath] = []
    labels: list[Label] = []
    on_path: set[int] = set()

    def clock_of() -> int:
        return sum(1 for l in labels if isinstance(l, TickL))

    def walk(sid: int) -> None:
        if len(paths) >= max_paths:
            return
        succs = lts.out_edges.get(sid, [])
        if not succs:
            paths.append(ExecutionPath(tuple(labels), _terminal_of(lts, sid),
                                       clock_of()))
            return
        on_path.add(sid)
        for label, tid in succs:
            labels.append(label)
            if tid in on_path:
                paths.append(ExecutionPath(tuple(labels), "truncated",
                                           clock_of()))
            else:
                walk(tid)
            labels.pop()
        on_path.discard(sid)

    walk(lts.initial)
    return paths


# ---------------------------------------------------------------------------
# Scenario classes


def path_signature(path: ExecutionPath) -> tuple[str, ...]:
    """Observable-event signature: ticks, choice resolutions, and period
    re-arms erased; same-tick events sorted; repeats collapsed."""
    groups: list[list[str]] = [[]]
    for label in path.labels:
        if isinstance(label, TickL):
            groups.append([])
        elif isinstance(label, OBSERVABLE):
            groups[-1].append(render_label(label))
    sig: list[str] = []
    seen: set[str] = set()
    for group in groups:
        for text in sorted(group):
            if text not in seen:
                seen.add(text)
                sig.append(text)
    return tuple(sig)


@dataclass(frozen=True)
class ScenarioClass:
    signature: tuple[str, ...]
    members: tuple[ExecutionPath, ...]
    representative: ExecutionPath


def scenario_classes(paths: list[ExecutionPath]) -> list[ScenarioClass]:
    by_sig: dict[tuple[str, ...], list[ExecutionPath]] = {}
    for p in paths:
        by_sig.setdefault(path_signature(p), []).append(p)
    out = []
    for sig in sorted(by_sig):
        members = by_sig[sig]
        rep = min(members,
                  key=lambda p: tuple(render_label(l) for l in p.labels))
        out.append(ScenarioClass(sig, tuple(members), rep))
    return out


# ---------------------------------------------------------------------------
# Reports & export


def deadlock_report(lts: Lts) -> list[tuple[int, list[tuple[int, str]]]]:
    out = []
    for sid, cls in enumerate(lts.classifications):
        if cls == "deadlock":
            out.append((sid, lts.engine.blocked_instances(lts.configs[sid])))
    return out


def lts_to_dot(lts: Lts) -> str:
    lines = ["digraph lts {", "  node [shape=box];"]
    for sid, cls in enumerate(lts.classifications):
        extra = ""
        if cls in ("deadlock", "fault"):
            extra = ',style=filled,fillcolor="#ffcccc"'
        lines.append(f'  s{sid} [label="s{sid}\\n{cls}"{extra}];')
    for src, label, dst in lts.edges:
        lines.append(f'  s{src} -> s{dst} [label="{render_label(label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def lts_to_json(lts: Lts) -> str:
    data = {
        "version": 1,
        "states": [{"id": sid, "class": cls, "clock": lts.configs[sid].clock}
                   for sid, cls in enumerate(lts.classifications)],
        "edges": [{"from": src, "label": render_label(label), "to": dst}
                  for src, label, dst in lts.edges],
        "initial": lts.initial,
        "truncated": lts.truncated,
    }
    return json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n"
