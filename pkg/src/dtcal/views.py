"""Structure diagrams as Graphviz DOT.

Two views are produced from a specification:

- the system view (`export_itl`): static containment of the root
  definition as nested clusters, with an edge per channel shared by two
  processes;
- the process view (`export_its`): the action flow of one definition as
  a Start-to-End graph with branch/fork nodes and dashed handler edges.
"""

from __future__ import annotations

from typing import Optional

from .parser import _render_action, _render_temporal
from .terms import (
    Act, ChannelScope, Choice, Exception_, Nest, Par, Periodic, Receive,
    Ref, Send, Seq, SpecFile, Stop, Term, TimedProc, WithPriority,
    canonicalize, choice_arms, par_arms, subterms,
)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


# ---------------------------------------------------------------------------
# System view


def _containment(spec: SpecFile) -> list:
    """Nested (name, children) tree of the root definition's static
    structure; Ref leaves are (name, None)."""

    def of_arm(arm: Term):
        if isinstance(arm, Nest):
            kids = [] if arm.children is None else [
                of_arm(a) for a in par_arms(arm.children)]
            return (arm.def_name, kids)
        if isinstance(arm, Ref):
            return (arm.def_name, None)
        return None

    root_body = spec.definitions.get(spec.root)
    if root_body is None:
        return []
    out = [of_arm(a) for a in par_arms(root_body)]
    return [n for n in out if n is not None]


def _channel_uses(spec: SpecFile, name: str) -> tuple[set, set]:
    body = spec.definitions.get(name)
    sends: set = set()
    recvs: set = set()
    if body is None:
        return sends, recvs
    for t in subterms(body):
        if isinstance(t, Act):
            if isinstance(t.action, Send):
                sends.add(t.action.channel)
            elif isinstance(t.action, Receive):
                recvs.add(t.action.channel)
    return sends, recvs


def export_itl(spec: SpecFile) -> str:
    tree = _containment(spec)
    lines = ["digraph system {", "  compound=true;", "  node [shape=box];"]
    names: list[str] = []

    def emit(node, indent: str) -> None:
        name, kids = node
        names.append(name)
        if kids:
            lines.append(f'{indent}subgraph "cluster_{name}" {{')
            lines.append(f'{indent}  label="{_dot_escape(name)}";')
            lines.append(f'{indent}  "{name}" [shape=point,style=invis];')
            for k in kids:
                emit(k, indent + "  ")
            lines.append(f"{indent}}}")
        else:
            lines.append(f'{indent}"{name}";')

    for node in tree:
        emit(node, "  ")

    uses = {n: _channel_uses(spec, n) for n in names}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            shared = (uses[a][0] & uses[b][1]) | (uses[b][0] & uses[a][1])
            for ch in sorted(shared):
                lines.append(
                    f'  "{a}" -> "{b}" [label="{_dot_escape(ch)}", dir=none];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Process view


def export_its(spec: SpecFile, def_name: str) -> str:
    if def_name not in spec.definitions:
        raise KeyError(f"unknown definition {def_name!r}")
    body = canonicalize(spec.definitions[def_name])
    lines = [f'digraph "{_dot_escape(def_name)}" {{', "  node [shape=box];",
             '  start [shape=circle,label="Start"];',
             '  end [shape=doublecircle,label="End"];']
    counter = [0]
    edges: list[str] = []

    def fresh(kind: str, label: str, shape: Optional[str] = None) -> str:
        counter[0] += 1
        nid = f"{kind}{counter[0]}"
        attrs = f'label="{_dot_escape(label)}"'
        if shape:
            attrs += f",shape={shape}"
        lines.append(f"  {nid} [{attrs}];")
        return nid

    def connect(srcs: list[str], dst: str, style: str = "") -> None:
        for s in srcs:
            edges.append(f"  {s} -> {dst}{style};")

    def build(term: Term, entries: list[str]) -> tuple[list[str], Optional[str]]:
        """Wire `term` after `entries`; returns (exit nodes, first node)."""
        if isinstance(term, Act):
            label = _render_action(term.action)
            if term.temporal is not None:
                label += _render_temporal(term.temporal)
            nid = fresh("a", label)
            connect(entries, nid)
            return [nid], nid
        if isinstance(term, Seq):
            exits, first = build(term.first, entries)
            exits2, _ = build(term.rest, exits)
            return exits2, first
        if isinstance(term, Choice):
            nid = fresh("branch", "+", "diamond")
            connect(entries, nid)
            exits: list[str] = []
            for arm in choice_arms(term):
                e, _ = build(arm, [nid])
                exits.extend(e)
            return exits, nid
        if isinstance(term, Par):
            nid = fresh("fork", "|", "triangle")
            connect(entries, nid)
            exits = []
            for arm in par_arms(term):
                e, _ = build(arm, [nid])
                exits.extend(e)
            return exits, nid
        if isinstance(term, Exception_):
            exits, first = build(term.body, entries)
            hexits, hfirst = build(term.handler, [])
            if first is not None and hfirst is not None:
                edges.append(f"  {first} -> {hfirst} [style=dashed];")
            return exits + hexits, first
        if isinstance(term, (ChannelScope, WithPriority, TimedProc, Periodic)):
            return build(term.body, entries)
        if isinstance(term, Nest):
            nid = fresh("n", f"{term.def_name}[…]")
            connect(entries, nid)
            return [nid], nid
        if isinstance(term, Ref):
            nid = fresh("r", term.def_name)
            connect(entries, nid)
            return [nid], nid
        if isinstance(term, Stop):
            nid = fresh("s", "stop")
            connect(entries, nid)
            return [], nid
        raise TypeError(term)

    exits, _ = build(body, ["start"])
    connect(exits, "end")
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
