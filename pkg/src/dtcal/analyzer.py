"""Requirement checking over the explored state space.

Requirements are written one per line in a `.dtq` file:

    name: form(args)            # comment

Forms:

    deadlock_free
    all_paths_event_by(PATTERN, DEADLINE)
    exists_event(PATTERN)
    never_event(PATTERN)
    handler_coverage(INSTANCE_PATTERN)
    recurs_within(PATTERN, MAX_GAP)

A PATTERN is an alternation (`|`) of conjunctions (`&`) of event atoms.
An atom is `kind(field, field, ...)` where fields use `*` wildcards and
trailing fields may be omitted.  Atom kinds and their fields:

    comm(channel, message, sender, receiver)
    move(direction, mover, from, to)
    ctrl(op, actor, subject)
    handler(instance, cause)
    fault(instance, cause)

A conjunction holds on a path when every atom is matched by some event
of that path.  `recurs_within` asks that matching events recur along
every path with gaps of at most MAX_GAP ticks, from the start to within
MAX_GAP of the end of the path.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fnmatch import fnmatchcase
from typing import Optional, Union

from .explorer import (
    ExecutionPath, Lts, deadlock_report, enumerate_paths,
)
from .semantics import (
    CommL, CtrlL, FaultL, HandlerL, Label, MoveL, TickL,
)
from .terms import Diagnostic, error


# ---------------------------------------------------------------------------
# Event patterns


@dataclass(frozen=True)
class Atom:
    kind: str
    fields: tuple[str, ...]

    def matches(self, label: Label) -> bool:
        got = _label_fields(label)
        if got is None or got[0] != self.kind:
            return False
        for want, have in zip(self.fields, got[1]):
            if not fnmatchcase(have, want):
                return False
        return len(self.fields) <= len(got[1])


@dataclass(frozen=True)
class Pattern:
    """Alternation of conjunctions of atoms."""

    alternatives: tuple[tuple[Atom, ...], ...]

    def atoms(self) -> list[Atom]:
        return [a for conj in self.alternatives for a in conj]


def _label_fields(label: Label) -> Optional[tuple[str, tuple[str, ...]]]:
    if isinstance(label, CommL):
        return "comm", (label.channel, label.message, label.sender_name,
                        label.receiver_name)
    if isinstance(label, MoveL):
        return "move", (label.kind.value, label.mover_name,
                        label.from_parent or "root", label.to_parent or "root")
    if isinstance(label, CtrlL):
        return "ctrl", (label.op, label.actor_name,
                        ",".join(label.subjects) or "-")
    if isinstance(label, HandlerL):
        return "handler", (label.instance_name, label.cause)
    if isinstance(label, FaultL):
        return "fault", (label.instance_name, label.cause)
    return None


_ATOM_RE = re.compile(r"\s*([a-z]+)\s*\(([^()]*)\)\s*$")

_KNOWN_ATOMS = {"comm": 4, "move": 4, "ctrl": 3, "handler": 2, "fault": 2}


def parse_pattern(text: str) -> Pattern:
    alternatives = []
    for alt in text.split("|"):
        conj = []
        for atom_text in alt.split("&"):
            m = _ATOM_RE.match(atom_text.strip())
            if not m:
                raise ValueError(f"malformed event atom {atom_text.strip()!r}")
            kind = m.group(1)
            if kind not in _KNOWN_ATOMS:
                raise ValueError(f"unknown event kind {kind!r}")
            fields = tuple(f.strip() for f in m.group(2).split(",")
                           if f.strip()) if m.group(2).strip() else ()
            if len(fields) > _KNOWN_ATOMS[kind]:
                raise ValueError(f"too many fields for {kind!r}")
            conj.append(Atom(kind, fields))
        if not conj:
            raise ValueError("empty pattern alternative")
        alternatives.append(tuple(conj))
    return Pattern(tuple(alternatives))


# ---------------------------------------------------------------------------
# Requirements


@dataclass(frozen=True)
class DeadlockFree:
    pass


@dataclass(frozen=True)
class AllPathsEventBy:
    pattern: Pattern
    deadline: int


@dataclass(frozen=True)
class ExistsEvent:
    pattern: Pattern


@dataclass(frozen=True)
class NeverEvent:
    pattern: Pattern


@dataclass(frozen=True)
class HandlerCoverage:
    instance_pattern: str


@dataclass(frozen=True)
class RecursWithin:
    pattern: Pattern
    max_gap: int


Requirement = Union[DeadlockFree, AllPathsEventBy, ExistsEvent, NeverEvent,
                    HandlerCoverage, RecursWithin]


@dataclass(frozen=True)
class NamedRequirement:
    name: str
    requirement: Requirement
    source: str


@dataclass(frozen=True)
class Verdict:
    name: str
    requirement: Requirement
    holds: bool
    evidence: Optional[ExecutionPath]  # witness or counterexample
    checked_paths: int
    bound_relative: bool


# ---------------------------------------------------------------------------
# Checking


def _timed_events(path: ExecutionPath) -> list[tuple[int, Label]]:
    clock = 0
    out = []
    for label in path.labels:
        if isinstance(label, TickL):
            clock += 1
        else:
            out.append((clock, label))
    return out


def _conj_satisfied(conj: tuple[Atom, ...],
                    events: list[tuple[int, Label]],
                    by: Optional[int] = None) -> bool:
    for atom in conj:
        if not any(atom.matches(l) for t, l in events
                   if by is None or t <= by):
            return False
    return True


def _pattern_satisfied(pattern: Pattern, events: list[tuple[int, Label]],
                       by: Optional[int] = None) -> bool:
    return any(_conj_satisfied(conj, events, by)
               for conj in pattern.alternatives)


def check(lts: Lts, req: Requirement,
          paths: Optional[list[ExecutionPath]] = None,
          name: str = "") -> Verdict:
    if paths is None:
        paths = enumerate_paths(lts)
    holds = True
    evidence: Optional[ExecutionPath] = None

    if isinstance(req, DeadlockFree):
        if deadlock_report(lts):
            holds = False
            evidence = next((p for p in paths if p.terminal == "deadlock"),
                            None)
    elif isinstance(req, AllPathsEventBy):
        for p in paths:
            events = _timed_events(p)
            if not _pattern_satisfied(req.pattern, events, by=req.deadline):
                holds = False
                evidence = p
                break
    elif isinstance(req, ExistsEvent):
        holds = False
        for p in paths:
            if _pattern_satisfied(req.pattern, _timed_events(p)):
                holds = True
                evidence = p
                break
    elif isinstance(req, NeverEvent):
        for p in paths:
            if _pattern_satisfied(req.pattern, _timed_events(p)):
                holds = False
                evidence = p
                break
    elif isinstance(req, HandlerCoverage):
        for p in paths:
            bad = any(isinstance(l, FaultL)
                      and fnmatchcase(l.instance_name, req.instance_pattern)
                      for _t, l in _timed_events(p))
            if bad:
                holds = False
                evidence = p
                break
    elif isinstance(req, RecursWithin):
        atoms = req.pattern.atoms()
        for p in paths:
            times = sorted({t for t, l in _timed_events(p)
                            if any(a.matches(l) for a in atoms)})
            ok = bool(times) and times[0] <= req.max_gap
            if ok:
                for a, b in zip(times, times[1:]):
                    if b - a > req.max_gap:
                        ok = False
                        break
            if ok and times[-1] < p.final_clock - req.max_gap:
                ok = False
            if not ok:
                holds = False
                evidence = p
                break
    else:
        raise TypeError(req)

    return Verdict(name, req, holds, evidence, len(paths), lts.truncated)


def check_suite(lts: Lts, reqs: list[NamedRequirement]) -> list[Verdict]:
    paths = enumerate_paths(lts)
    return [check(lts, nr.requirement, paths, nr.name) for nr in reqs]


# ---------------------------------------------------------------------------
# Requirement file parsing


_FORMS = {
    "deadlock_free": (0, 0),
    "all_paths_event_by": (2, 2),
    "exists_event": (1, 1),
    "never_event": (1, 1),
    "handler_coverage": (1, 1),
    "recurs_within": (2, 2),
}


def _split_args(text: str) -> list[str]:
    args, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            args.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        args.append(tail)
    return args


_REQ_RE = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_requirements(
        text: str,
        filename: str = "<req>") -> Union[list[NamedRequirement],
                                          list[Diagnostic]]:
    reqs: list[NamedRequirement] = []
    diags: list[Diagnostic] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _REQ_RE.match(line)
        if not m:
            diags.append(error(f"{filename}:{lineno}: malformed requirement"))
            continue
        name, form, argtext = m.group(1), m.group(2), m.group(3) or ""
        if form not in _FORMS:
            diags.append(error(f"{filename}:{lineno}: unknown form {form!r}"))
            continue
        args = _split_args(argtext)
        lo, hi = _FORMS[form]
        if not (lo <= len(args) <= hi):
            diags.append(error(
                f"{filename}:{lineno}: {form} takes {lo} argument(s)"))
            continue
        try:
            req = _build(form, args)
        except ValueError as e:
            diags.append(error(f"{filename}:{lineno}: {e}"))
            continue
        reqs.append(NamedRequirement(name, req, line))
    if diags:
        return diags
    return reqs


def _build(form: str, args: list[str]) -> Requirement:
    if form == "deadlock_free":
        return DeadlockFree()
    if form == "all_paths_event_by":
        return AllPathsEventBy(parse_pattern(args[0]), _nat(args[1]))
    if form == "exists_event":
        return ExistsEvent(parse_pattern(args[0]))
    if form == "never_event":
        return NeverEvent(parse_pattern(args[0]))
    if form == "handler_coverage":
        return HandlerCoverage(args[0])
    if form == "recurs_within":
        return RecursWithin(parse_pattern(args[0]), _nat(args[1]))
    raise ValueError(form)


def _nat(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}")
    if n < 0:
        raise ValueError("expected a nonnegative number")
    return n
