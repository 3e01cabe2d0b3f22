"""Trace replay and seeded random simulation with geo-temporal output.

A trace is a list of events, one per applied step, each carrying the
clock, the step label, and the containment forest after the step.  The
JSON export writes a full snapshot for the first event and after every
step that can change containment; other events reference the last
snapshot by event index.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Optional, Union

from .explorer import ExploreBounds
from .parser import render
from .semantics import (
    ChoiceL, CommL, Configuration, CtrlL, Engine, FaultL, HandlerL, Label,
    MoveL, RearmL, StepNotEnabled, TickL,
)
from .terms import MoveKind, SpecFile, canonicalize_spec


@dataclass(frozen=True)
class Truncated:
    """Marker pseudo-label: a bound was hit before the run ended."""


@dataclass(frozen=True)
class TraceEvent:
    clock: int
    label: Union[Label, Truncated]
    parents: dict  # instance id -> parent id or None
    defs: dict  # instance id -> definition name


@dataclass(frozen=True)
class Replay:
    labels: tuple[Label, ...]


@dataclass(frozen=True)
class Random_:
    seed: int


Policy = Union[Replay, Random_]


def _snapshot(config: Configuration) -> tuple[dict, dict]:
    parents = {i.id: i.parent for i in config.instances}
    defs = {i.id: i.def_name for i in config.instances}
    return parents, defs


def simulate(spec_or_engine, policy: Policy,
             bounds: Optional[ExploreBounds] = None) -> list[TraceEvent]:
    engine = (spec_or_engine if isinstance(spec_or_engine, Engine)
              else Engine(spec_or_engine))
    bounds = bounds or ExploreBounds()
    config = engine.init()
    events: list[TraceEvent] = []

    def emit(label: Union[Label, Truncated], cfg: Configuration) -> None:
        parents, defs = _snapshot(cfg)
        events.append(TraceEvent(cfg.clock, label, parents, defs))

    if isinstance(policy, Replay):
        from .semantics import render_label
        for label in policy.labels:
            steps = engine.enabled_steps(config)
            # exact match first; fall back to the rendered (id-free) form,
            # since merged states may carry ids from another path prefix
            step = next((s for s in steps if s.label == label), None)
            if step is None:
                want = render_label(label)
                step = next((s for s in steps
                             if render_label(s.label) == want), None)
            if step is None:
                raise StepNotEnabled(render_label(label))
            config = step.config
            emit(step.label, config)
        return events

    rng = random.Random(policy.seed)
    while True:
        if config.clock > bounds.max_clock or len(events) >= bounds.max_states:
            emit(Truncated(), config)
            break
        steps = engine.enabled_steps(config)
        if not steps:
            break
        step = steps[rng.randrange(len(steps))] if len(steps) > 1 else steps[0]
        config = step.config
        emit(step.label, config)
    return events


# ---------------------------------------------------------------------------
# JSON export


def _label_json(label: Union[Label, Truncated]) -> dict:
    if isinstance(label, TickL):
        return {"kind": "tick"}
    if isinstance(label, CommL):
        return {"kind": "comm", "channel": label.channel,
                "message": label.message, "sender": label.sender_name,
                "receiver": label.receiver_name}
    if isinstance(label, MoveL):
        return {"kind": "move", "move": label.kind.value,
                "mover": label.mover_name, "from": label.from_parent,
                "to": label.to_parent, "key": label.key,
                "unilateral": label.unilateral}
    if isinstance(label, CtrlL):
        return {"kind": "ctrl", "op": label.op, "actor": label.actor_name,
                "subjects": list(label.subjects)}
    if isinstance(label, HandlerL):
        return {"kind": "handler", "instance": label.instance_name,
                "cause": label.cause}
    if isinstance(label, FaultL):
        return {"kind": "fault", "instance": label.instance_name,
                "cause": label.cause}
    if isinstance(label, ChoiceL):
        return {"kind": "choice", "instance": label.instance_name,
                "branch": label.branch}
    if isinstance(label, RearmL):
        return {"kind": "rearm", "instance": label.instance_name}
    if isinstance(label, Truncated):
        return {"kind": "truncated"}
    raise TypeError(label)


def spec_digest(spec: SpecFile) -> str:
    canonical_text = render(canonicalize_spec(spec))
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


def export_gts(trace: list[TraceEvent],
               spec: Optional[SpecFile] = None) -> str:
    out: dict = {"version": 1}
    if spec is not None:
        out["spec"] = spec_digest(spec)
    events = []
    last_snapshot: Optional[tuple[dict, dict]] = None
    last_snapshot_at = -1
    for i, ev in enumerate(trace):
        obj: dict = {"clock": ev.clock, "label": _label_json(ev.label)}
        snap = (ev.parents, ev.defs)
        fresh = (last_snapshot is None or snap != last_snapshot
                 or isinstance(ev.label, (MoveL, CtrlL)))
        if fresh:
            obj["snapshot"] = {
                "parents": {str(k): v for k, v in sorted(ev.parents.items())},
                "defs": {str(k): v for k, v in sorted(ev.defs.items())},
            }
            last_snapshot = snap
            last_snapshot_at = i
        else:
            obj["snapshotRef"] = last_snapshot_at
        events.append(obj)
    out["events"] = events
    return json.dumps(out, sort_keys=True, separators=(",", ":")) + "\n"
