"""Concrete syntax: lexer, recursive-descent parser and renderer.

Spec files use the `.dtc` extension, UTF-8, `//` line comments.
Operator precedence, loosest to tightest: `+` choice, `|` parallel,
`.` sequence.  A temporal `[r,to,e,d]` or period `^(p,n)` suffix binds
to the immediately preceding action or parenthesized group; `\\`
attaches an exception handler to the immediately preceding unary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .terms import (
    Act, ChannelScope, Choice, Diagnostic, Empty, Exception_, Exit, Kill,
    MoveKind, MovePermit, MoveRequest, Nest, New, Par, PeriodSpec, Periodic,
    Receive, Ref, Send, Seq, SourceSpan, SpecFile, Stop, TemporalSpec, Term,
    TimedProc, WithPriority, error,
)

KEYWORDS = {
    "nil", "stop", "scope", "in", "out", "get", "put", "acc",
    "new", "kill", "exit", "dl", "inf",
}
MOVE_KINDS = {"in": MoveKind.IN, "out": MoveKind.OUT,
              "get": MoveKind.GET, "put": MoveKind.PUT}
SYMBOLS = (":=", "^", "\\", ";", "+", "|", ".", "(", ")", "[", "]",
           ",", "!", "?", "@", "#", "_", "-")


@dataclass(frozen=True)
class Token:
    kind: str  # "name", "nat", "kw", "sym", "eof"
    text: str
    span: SourceSpan


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(message)
        self.diagnostic = error(message, span)


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        span = SourceSpan(filename, line, col, 1)
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "name"
            tokens.append(Token(kind, word, SourceSpan(filename, line, col, j - i)))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("nat", text[i:j], SourceSpan(filename, line, col, j - i)))
            col += j - i
            i = j
            continue
        if text.startswith(":=", i):
            tokens.append(Token("sym", ":=", SourceSpan(filename, line, col, 2)))
            i += 2
            col += 2
            continue
        if ch in "^\\;+|.()[],!?@#_-":
            tokens.append(Token("sym", ch, span))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", span)
    tokens.append(Token("eof", "", SourceSpan(filename, line, col, 0)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.cur
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, text):
            return self.advance()
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if self.at(kind, text):
            return self.advance()
        want = text if text is not None else kind
        raise ParseError(f"expected {want!r}, found {self.cur.text!r}", self.cur.span)

    # grammar -------------------------------------------------------------

    def spec(self, filename: str) -> SpecFile:
        defs: dict[str, Term] = {}
        root: Optional[str] = None
        while not self.at("eof"):
            name_tok = self.expect("name")
            if name_tok.text in defs:
                raise ParseError(f"duplicate definition {name_tok.text!r}",
                                 name_tok.span)
            self.expect("sym", ":=")
            body = self.term()
            self.expect("sym", ";")
            defs[name_tok.text] = body
            if root is None:
                root = name_tok.text
        return SpecFile(defs, root or "")

    def term(self) -> Term:
        node = self.par()
        while self.accept("sym", "+"):
            node = Choice(node, self.par())
        return node

    def par(self) -> Term:
        node = self.seqt()
        while self.accept("sym", "|"):
            node = Par(node, self.seqt())
        return node

    def seqt(self) -> Term:
        node = self.unary()
        while self.accept("sym", "."):
            node = Seq(node, self.unary())
        return node

    def unary(self) -> Term:
        node = self.basic()
        if self.at("sym", "["):
            spec = self.temporal()
            if isinstance(node, Act):
                node = Act(node.action, spec, node.period)
            else:
                node = TimedProc(node, spec)
        if self.at("sym", "^"):
            ps = self.period()
            if isinstance(node, Act):
                node = Act(node.action, node.temporal, ps)
            else:
                node = Periodic(node, ps)
        if self.accept("sym", "\\"):
            handler = self.basic()
            node = Exception_(node, handler)
        return node

    def temporal(self) -> TemporalSpec:
        self.expect("sym", "[")
        r = self.timeval(allow_unbounded=False)
        self.expect("sym", ",")
        to = self.timeval(allow_unbounded=True)
        self.expect("sym", ",")
        e = self.timeval(allow_unbounded=False)
        self.expect("sym", ",")
        d = self.timeval(allow_unbounded=True)
        self.expect("sym", "]")
        return TemporalSpec(r, to, e, d)  # type: ignore[arg-type]

    def timeval(self, allow_unbounded: bool) -> Optional[int]:
        if self.at("sym", "-"):
            tok = self.advance()
            if not allow_unbounded:
                raise ParseError("this temporal field cannot be unbounded", tok.span)
            return None
        return int(self.expect("nat").text)

    def period(self) -> PeriodSpec:
        self.expect("sym", "^")
        self.expect("sym", "(")
        p = int(self.expect("nat").text)
        self.expect("sym", ",")
        if self.accept("kw", "inf"):
            n: Optional[int] = None
        else:
            n = int(self.expect("nat").text)
        self.expect("sym", ")")
        return PeriodSpec(p, n)

    def basic(self) -> Term:
        tok = self.cur
        if tok.kind == "kw":
            if tok.text == "stop":
                self.advance()
                return Stop()
            if tok.text == "nil":
                self.advance()
                e = 1
                if self.accept("sym", "("):
                    e = int(self.expect("nat").text)
                    self.expect("sym", ")")
                return Act(Empty(e))
            if tok.text == "scope":
                self.advance()
                chan = self.expect("name").text
                self.expect("kw", "in")
                return ChannelScope(chan, self.basic())
            if tok.text == "dl":
                self.advance()
                self.expect("sym", "(")
                d = int(self.expect("nat").text)
                self.expect("sym", ")")
                return TimedProc(self.basic(), TemporalSpec(0, None, 1, d))
            if tok.text in MOVE_KINDS:
                self.advance()
                prio = None
                if self.accept("sym", "@"):
                    prio = int(self.expect("nat").text)
                key = None
                if self.accept("sym", "#"):
                    key = self.expect("name").text
                target = self.expect("name").text
                return Act(MoveRequest(MOVE_KINDS[tok.text], target, key, prio))
            if tok.text == "acc":
                self.advance()
                kind_tok = self.expect("kw")
                if kind_tok.text not in MOVE_KINDS:
                    raise ParseError("expected a movement kind after 'acc'",
                                     kind_tok.span)
                key = None
                if self.accept("sym", "#"):
                    key = self.expect("name").text
                subject = self.expect("name").text
                return Act(MovePermit(MOVE_KINDS[kind_tok.text], subject, key))
            if tok.text == "new":
                self.advance()
                return Act(New(self.expect("name").text))
            if tok.text == "kill":
                self.advance()
                return Act(Kill(self.expect("name").text))
            if tok.text == "exit":
                self.advance()
                return Act(Exit())
            raise ParseError(f"unexpected keyword {tok.text!r}", tok.span)
        if tok.kind == "sym" and tok.text == "(":
            self.advance()
            node = self.term()
            self.expect("sym", ")")
            return node
        if tok.kind == "sym" and tok.text == "@":
            self.advance()
            level = int(self.expect("nat").text)
            return WithPriority(level, self.basic())
        if tok.kind == "name":
            self.advance()
            if self.accept("sym", "!"):
                self.expect("sym", "(")
                msg = self.expect("name").text
                self.expect("sym", ")")
                return Act(Send(tok.text, msg))
            if self.accept("sym", "?"):
                self.expect("sym", "(")
                if self.accept("sym", "_"):
                    pat = "_"
                else:
                    pat = self.expect("name").text
                self.expect("sym", ")")
                return Act(Receive(tok.text, pat))
            if self.accept("sym", "["):
                inner = self.term()
                self.expect("sym", "]")
                return Nest(tok.text, inner)
            return Ref(tok.text)
        raise ParseError(f"unexpected token {tok.text!r}", tok.span)


def parse(text: str, filename: str = "<input>") -> SpecFile | list[Diagnostic]:
    """Parse source text; returns a SpecFile or a list of diagnostics."""
    try:
        tokens = tokenize(text, filename)
        parser = _Parser(tokens)
        return parser.spec(filename)
    except ParseError as exc:
        return [exc.diagnostic]


def parse_term(text: str) -> Term:
    """Parse a single term (no definitions); raises ParseError on bad input."""
    tokens = tokenize(text)
    parser = _Parser(tokens)
    node = parser.term()
    parser.expect("eof")
    return node


# ---------------------------------------------------------------------------
# Rendering (inverse of parse, modulo whitespace)

_PREC_CHOICE, _PREC_PAR, _PREC_SEQ, _PREC_UNARY = 0, 1, 2, 3


def _render_temporal(spec: TemporalSpec) -> str:
    def tv(v: Optional[int]) -> str:
        return "-" if v is None else str(v)
    return f"[{tv(spec.ready)},{tv(spec.timeout)},{spec.exec_time},{tv(spec.deadline)}]"


def _render_period(ps: PeriodSpec) -> str:
    reps = "inf" if ps.reps is None else str(ps.reps)
    return f"^({ps.period},{reps})"


def _render_action(act) -> str:
    if isinstance(act, Empty):
        return f"nil({act.exec_time})"
    if isinstance(act, Send):
        return f"{act.channel}!({act.message})"
    if isinstance(act, Receive):
        return f"{act.channel}?({act.pattern})"
    if isinstance(act, MoveRequest):
        parts = [act.kind.value]
        if act.prio is not None:
            parts.append(f"@{act.prio}")
        if act.key is not None:
            parts.append(f"#{act.key}")
        parts.append(act.target)
        return " ".join(parts)
    if isinstance(act, MovePermit):
        parts = ["acc", act.kind.value]
        if act.key is not None:
            parts.append(f"#{act.key}")
        parts.append(act.subject)
        return " ".join(parts)
    if isinstance(act, New):
        return f"new {act.def_name}"
    if isinstance(act, Kill):
        return f"kill {act.proc_name}"
    if isinstance(act, Exit):
        return "exit"
    raise TypeError(f"unknown action {act!r}")


def render_term(term: Term, prec: int = _PREC_CHOICE) -> str:
    if isinstance(term, Choice):
        text = f"{render_term(term.left, _PREC_CHOICE)} + {render_term(term.right, _PREC_PAR)}"
        return f"({text})" if prec > _PREC_CHOICE else text
    if isinstance(term, Par):
        text = f"{render_term(term.left, _PREC_PAR)} | {render_term(term.right, _PREC_SEQ)}"
        return f"({text})" if prec > _PREC_PAR else text
    if isinstance(term, Seq):
        text = f"{render_term(term.first, _PREC_SEQ)} . {render_term(term.rest, _PREC_UNARY)}"
        return f"({text})" if prec > _PREC_SEQ else text
    if isinstance(term, Act):
        text = _render_action(term.action)
        if term.temporal is not None:
            text += _render_temporal(term.temporal)
        if term.period is not None:
            text += _render_period(term.period)
        return text
    if isinstance(term, Exception_):
        body = render_term(term.body, _PREC_UNARY)
        handler = render_term(term.handler, _PREC_UNARY)
        if not _is_basic(term.handler):
            handler = f"({handler})"
        text = f"{body} \\ {handler}"
        return f"({text})" if prec > _PREC_SEQ else text
    if isinstance(term, TimedProc):
        sp = term.temporal
        if sp.ready == 0 and sp.timeout is None and sp.exec_time == 1 \
                and sp.deadline is not None:
            body = render_term(term.body, _PREC_UNARY)
            if not _is_basic(term.body):
                body = f"({body})"
            return f"dl({sp.deadline}) {body}"
        return f"({render_term(term.body)}){_render_temporal(term.temporal)}"
    if isinstance(term, Periodic):
        return f"({render_term(term.body)}){_render_period(term.period)}"
    if isinstance(term, ChannelScope):
        body = render_term(term.body, _PREC_UNARY)
        if not _is_basic(term.body):
            body = f"({body})"
        return f"scope {term.channel} in {body}"
    if isinstance(term, WithPriority):
        body = render_term(term.body, _PREC_UNARY)
        if not _is_basic(term.body):
            body = f"({body})"
        return f"@{term.level} {body}"
    if isinstance(term, Nest):
        inner = render_term(term.children) if term.children is not None else ""
        return f"{term.def_name}[{inner}]"
    if isinstance(term, Ref):
        return term.def_name
    if isinstance(term, Stop):
        return "stop"
    raise TypeError(f"unknown term {term!r}")


def _is_basic(term: Term) -> bool:
    if isinstance(term, (Ref, Stop, Nest, ChannelScope, WithPriority)):
        return True
    if isinstance(term, Act):
        return term.temporal is None and term.period is None
    return False


def render(spec: SpecFile) -> str:
    """Render a spec file back to source text; parse(render(s)) == s."""
    lines = []
    names = list(spec.definitions)
    if spec.root in spec.definitions:
        names.remove(spec.root)
        names.insert(0, spec.root)
    for name in names:
        lines.append(f"{name} := {render_term(spec.definitions[name])};")
    return "\n".join(lines) + ("\n" if lines else "")
