"""Abstract syntax for timed mobile process specifications.

All values here are immutable; operations are pure functions over them.
A specification is a set of named definitions plus a root name; a
definition body is a tree of `Term` nodes whose leaves are `Act` and
`Stop`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union


class MoveKind(enum.Enum):
    IN = "in"
    OUT = "out"
    GET = "get"
    PUT = "put"


@dataclass(frozen=True)
class TemporalSpec:
    """Four-field timing of an action: ready, timeout, exec, deadline.

    `timeout` and `deadline` may be None, meaning unbounded.
    """

    ready: int = 0
    timeout: Optional[int] = None
    exec_time: int = 1
    deadline: Optional[int] = None

    def __post_init__(self) -> None:
        if self.ready < 0 or self.exec_time < 0:
            raise ValueError("ready and exec must be nonnegative")
        if self.timeout is not None and self.timeout < 0:
            raise ValueError("timeout must be nonnegative or unbounded")
        if self.deadline is not None and self.deadline < 0:
            raise ValueError("deadline must be nonnegative or unbounded")


DEFAULT_SPEC = TemporalSpec(0, None, 1, None)


@dataclass(frozen=True)
class PeriodSpec:
    """Repetition of an action or group: cycle length and count.

    `reps` None means the repetition is unbounded.
    """

    period: int
    reps: Optional[int] = None

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.reps is not None and self.reps < 1:
            raise ValueError("reps must be >= 1 or unbounded")


def outranks(a: Optional[int], b: Optional[int]) -> bool:
    """Strict priority order. 0 beats everything, larger beats smaller,
    an explicit priority beats no priority at all."""
    if a is None or a == b:
        return False
    if b is None:
        return True
    if a == 0:
        return True
    if b == 0:
        return False
    return a > b


# ---------------------------------------------------------------------------
# Actions


@dataclass(frozen=True)
class Empty:
    exec_time: int = 1


@dataclass(frozen=True)
class Send:
    channel: str
    message: str


@dataclass(frozen=True)
class Receive:
    channel: str
    pattern: str  # literal name or "_" wildcard

    def matches(self, message: str) -> bool:
        return self.pattern == "_" or self.pattern == message


@dataclass(frozen=True)
class MoveRequest:
    kind: MoveKind
    target: str
    key: Optional[str] = None
    prio: Optional[int] = None


@dataclass(frozen=True)
class MovePermit:
    kind: MoveKind
    subject: str
    key: Optional[str] = None


@dataclass(frozen=True)
class New:
    def_name: str


@dataclass(frozen=True)
class Kill:
    proc_name: str


@dataclass(frozen=True)
class Exit:
    pass


Action = Union[Empty, Send, Receive, MoveRequest, MovePermit, New, Kill, Exit]

#: Actions that never wait for a partner: they run as soon as ready.
ASYNC_ACTIONS = (Empty, New, Kill, Exit)


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Act:
    action: Action
    temporal: Optional[TemporalSpec] = None
    period: Optional[PeriodSpec] = None


@dataclass(frozen=True)
class Seq:
    first: "Term"
    rest: "Term"


@dataclass(frozen=True)
class Choice:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Par:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Nest:
    def_name: str
    children: Optional["Term"] = None


@dataclass(frozen=True)
class Exception_:
    body: "Term"
    handler: "Term"


@dataclass(frozen=True)
class ChannelScope:
    channel: str
    body: "Term"


@dataclass(frozen=True)
class WithPriority:
    level: int
    body: "Term"


@dataclass(frozen=True)
class TimedProc:
    body: "Term"
    temporal: TemporalSpec


@dataclass(frozen=True)
class Periodic:
    body: "Term"
    period: PeriodSpec


@dataclass(frozen=True)
class Ref:
    def_name: str


@dataclass(frozen=True)
class Stop:
    pass


Term = Union[
    Act, Seq, Choice, Par, Nest, Exception_, ChannelScope, WithPriority,
    TimedProc, Periodic, Ref, Stop,
]


@dataclass(frozen=True)
class SpecFile:
    definitions: dict[str, Term] = field(default_factory=dict)
    root: str = ""


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 0


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        if self.span is None:
            return f"{self.severity}: {self.message}"
        s = self.span
        return f"{s.file}:{s.line}:{s.column}: {self.severity}: {self.message}"


def error(message: str, span: Optional[SourceSpan] = None) -> Diagnostic:
    return Diagnostic("error", message, span)


# ---------------------------------------------------------------------------
# Traversal helpers


def children_of(term: Term) -> tuple[Term, ...]:
    if isinstance(term, Seq):
        return (term.first, term.rest)
    if isinstance(term, (Choice, Par)):
        return (term.left, term.right)
    if isinstance(term, Exception_):
        return (term.body, term.handler)
    if isinstance(term, (ChannelScope, WithPriority, TimedProc, Periodic)):
        return (term.body,)
    if isinstance(term, Nest) and term.children is not None:
        return (term.children,)
    return ()


def subterms(term: Term) -> Iterator[Term]:
    """Pre-order walk of a term tree."""
    stack = [term]
    while stack:
        t = stack.pop()
        yield t
        stack.extend(reversed(children_of(t)))


def par_arms(term: Term) -> list[Term]:
    if isinstance(term, Par):
        return par_arms(term.left) + par_arms(term.right)
    return [term]


def choice_arms(term: Term) -> list[Term]:
    if isinstance(term, Choice):
        return choice_arms(term.left) + choice_arms(term.right)
    return [term]


# ---------------------------------------------------------------------------
# Free channels


def free_channels(term: Term) -> frozenset[str]:
    """Channel names used by sends/receives not bound by an enclosing scope."""
    if isinstance(term, Act):
        if isinstance(term.action, (Send, Receive)):
            return frozenset({term.action.channel})
        return frozenset()
    if isinstance(term, ChannelScope):
        return free_channels(term.body) - {term.channel}
    out: frozenset[str] = frozenset()
    for c in children_of(term):
        out |= free_channels(c)
    return out


# ---------------------------------------------------------------------------
# Canonicalization


def canonicalize(term: Term) -> Term:
    """Rewrite a term into canonical temporal form.

    - an action without a temporal spec gets the [0,-,1,-] default;
    - an empty action keeps only its execution time;
    - a timed process keeps only its deadline;
    - a periodic action is rewritten to a periodic wrapper around the
      plain action, so the runtime has a single periodic construct.

    Idempotent by construction.
    """
    if isinstance(term, Act):
        spec = term.temporal if term.temporal is not None else DEFAULT_SPEC
        act = term.action
        if isinstance(act, Empty):
            e = spec.exec_time if term.temporal is not None else act.exec_time
            act = Empty(e)
            spec = TemporalSpec(0, None, e, None)
        out: Term = Act(act, spec, None)
        if term.period is not None:
            out = Periodic(out, term.period)
        return out
    if isinstance(term, TimedProc):
        return TimedProc(
            canonicalize(term.body),
            TemporalSpec(0, None, 1, term.temporal.deadline),
        )
    if isinstance(term, Seq):
        return Seq(canonicalize(term.first), canonicalize(term.rest))
    if isinstance(term, Choice):
        return Choice(canonicalize(term.left), canonicalize(term.right))
    if isinstance(term, Par):
        return Par(canonicalize(term.left), canonicalize(term.right))
    if isinstance(term, Exception_):
        return Exception_(canonicalize(term.body), canonicalize(term.handler))
    if isinstance(term, ChannelScope):
        return ChannelScope(term.channel, canonicalize(term.body))
    if isinstance(term, WithPriority):
        return WithPriority(term.level, canonicalize(term.body))
    if isinstance(term, Periodic):
        return Periodic(canonicalize(term.body), term.period)
    if isinstance(term, Nest) and term.children is not None:
        return Nest(term.def_name, canonicalize(term.children))
    return term


def canonicalize_spec(spec: SpecFile) -> SpecFile:
    return SpecFile(
        {name: canonicalize(body) for name, body in spec.definitions.items()},
        spec.root,
    )


# ---------------------------------------------------------------------------
# Static validation


def _first_refs(term: Term) -> tuple[set[str], bool]:
    """Names a term may unfold before consuming any action, and whether the
    term can be passed through without consuming an action at all."""
    if isinstance(term, Act):
        return set(), False
    if isinstance(term, Stop):
        return set(), True
    if isinstance(term, Ref):
        return {term.def_name}, False
    if isinstance(term, Nest):
        refs = {term.def_name}
        if term.children is not None:
            refs |= _first_refs(term.children)[0]
        return refs, False
    if isinstance(term, Seq):
        refs, passthru = _first_refs(term.first)
        if passthru:
            r2, p2 = _first_refs(term.rest)
            return refs | r2, p2
        return refs, False
    if isinstance(term, (Choice, Par)):
        rl, pl = _first_refs(term.left)
        rr, pr = _first_refs(term.right)
        return rl | rr, pl or pr
    if isinstance(term, Exception_):
        return _first_refs(term.body)
    if isinstance(term, (ChannelScope, WithPriority, TimedProc, Periodic)):
        body = term.body
        return _first_refs(body)
    return set(), True


def _syntactic_priority(term: Term) -> Optional[int]:
    if isinstance(term, WithPriority):
        return term.level
    return None


def validate(spec: SpecFile) -> list[Diagnostic]:
    """Static checks; an empty result means the specification is valid."""
    diags: list[Diagnostic] = []
    defs = spec.definitions

    if spec.root not in defs:
        diags.append(error(f"root definition {spec.root!r} is not defined"))

    for name, body in defs.items():
        for t in subterms(body):
            if isinstance(t, (Ref, Nest)):
                target = t.def_name
                if target not in defs:
                    diags.append(error(
                        f"unresolved definition {target!r} referenced from {name}"))
            if isinstance(t, Act):
                sp = t.temporal
                if sp is not None and sp.deadline is not None \
                        and sp.deadline < sp.ready:
                    diags.append(error(
                        f"deadline {sp.deadline} < ready {sp.ready} "
                        f"in {name}: action is statically dead"))
            if isinstance(t, Act) and isinstance(t.action, New):
                target = t.action.def_name
                if target in defs:
                    child_prio = _syntactic_priority(defs[target])
                    parent_prio = _syntactic_priority(body)
                    if child_prio is not None and outranks(child_prio, parent_prio):
                        diags.append(error(
                            f"new {target} in {name}: created process priority "
                            f"{child_prio} outranks its creator"))

    # Guardedness: no cycle of definition references without an action.
    graph = {name: _first_refs(body)[0] & set(defs) for name, body in defs.items()}
    state: dict[str, int] = {}  # 0 = visiting, 1 = done

    def visit(node: str, path: list[str]) -> None:
        if state.get(node) == 1:
            return
        if state.get(node) == 0:
            cycle = path[path.index(node):]
            diags.append(error(
                "unguarded recursion at " + " -> ".join(cycle + [node])))
            return
        state[node] = 0
        for nxt in sorted(graph.get(node, ())):
            visit(nxt, path + [node])
        state[node] = 1

    for name in sorted(defs):
        visit(name, [])

    return diags
