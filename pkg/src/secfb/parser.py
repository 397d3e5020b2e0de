"""Reader and writer for the ``.fbs`` application language.

A document is a sequence of top-level sections::

    fbtype Toggler basic {
      input event REQ with X
      output event CNF with OUT
      input X : BOOL
      output OUT : BOOL
      ecc {
        initial START
        state START
        state FLIP do flip -> CNF
        START -> FLIP on REQ
        FLIP -> START always
      }
    }
    devices { D1 D2 }
    app {
      instance a : Toggler
      param a.X = true
      a.OUT -> b.IN @secure(C, AES, keysize=128, rekey=60s)
    }
    map {
      a -> D1
    }

Statements end at a newline.  ``//`` starts a comment.  Guards after
``when`` run to the end of the line.  Data literals are ``true``/``false``,
integers (``0x`` hex allowed), reals, ``"strings"``, ``x"hex"`` byte strings
and durations such as ``60s`` or ``500ms`` (stored as integer milliseconds).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from secfb.core import (
    Action,
    Application,
    Connection,
    DataKind,
    Diagnostic,
    ECC,
    Endpoint,
    FBInterface,
    FBKind,
    FBNetwork,
    FBType,
    SecGoal,
    SecureLink,
    SourceSpan,
    Transition,
    Variable,
)
from secfb.guards import GuardError, canonical_guard

__all__ = [
    "ParseError",
    "AnnotationAst",
    "parse_application",
    "parse_types",
    "parse_secure_annotation",
    "serialize_application",
    "serialize_types",
    "format_literal",
]


class ParseError(ValueError):
    """Carries every diagnostic found in a document."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        summary = str(first) if first else "parse failed"
        if len(self.diagnostics) > 1:
            summary += f" (and {len(self.diagnostics) - 1} more)"
        super().__init__(summary)


@dataclass(frozen=True)
class AnnotationAst:
    keyword: str
    args: tuple[str, ...]
    span: SourceSpan
    arg_spans: tuple[SourceSpan, ...] = field(default=(), compare=False)


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<comment>//[^\n]*)
  | (?P<nl>\n)
  | (?P<bytes>x"[^"\n]*")
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<duration>\d+(?:ms|s)(?![A-Za-z0-9_]))
  | (?P<hex>-?0[xX][0-9A-Fa-f]+)
  | (?P<float>-?\d+(?:\.\d+(?:[eE][-+]?\d+)?|[eE][-+]?\d+))
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->)
  | (?P<punct>[{}(),:=.;@])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int
    start: int
    end: int


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")


class _Lexer:
    def __init__(self, text: str, filename: str, diags: list[Diagnostic]):
        self.text = text
        self.filename = filename
        self.diags = diags
        self.pos = 0
        self.line = 1
        self.line_start = 0
        self._peeked: Optional[_Token] = None

    def span(self, line: int, col: int, length: int = 1) -> SourceSpan:
        return SourceSpan(self.filename, line, col, max(1, length))

    def _scan(self) -> _Token:
        text = self.text
        while self.pos < len(text):
            m = _TOKEN_RE.match(text, self.pos)
            col = self.pos - self.line_start + 1
            if m is None:
                self.diags.append(
                    Diagnostic("lex-error", f"unexpected character {text[self.pos]!r}", span=self.span(self.line, col))
                )
                self.pos += 1
                continue
            kind = m.lastgroup
            start, self.pos = self.pos, m.end()
            if kind in ("ws", "comment"):
                continue
            tok = _Token(kind, m.group(), self.line, col, start, self.pos)
            if kind == "nl":
                self.line += 1
                self.line_start = self.pos
            return tok
        col = self.pos - self.line_start + 1
        return _Token("eof", "", self.line, col, self.pos, self.pos)

    def peek(self) -> _Token:
        if self._peeked is None:
            self._peeked = self._scan()
        return self._peeked

    def next(self) -> _Token:
        tok = self.peek()
        self._peeked = None
        return tok

    def rest_of_line(self) -> tuple[str, int]:
        """Raw text up to the newline (comment stripped) and its start column."""
        if self._peeked is not None:
            self.pos = self._peeked.start
            self._peeked = None
        start = self.pos
        end = self.text.find("\n", start)
        end = len(self.text) if end < 0 else end
        raw = self.text[start:end]
        cut = _comment_start(raw)
        if cut is not None:
            raw = raw[:cut]
        self.pos = start + len(raw)
        lead = len(raw) - len(raw.lstrip())
        return raw.strip(), start + lead - self.line_start + 1


def _comment_start(raw: str) -> Optional[int]:
    in_str = False
    i = 0
    while i < len(raw):
        ch = raw[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif raw.startswith("//", i):
            return i
        i += 1
    return None


# -- raw syntax tree -------------------------------------------------------


class _Syntax(Exception):
    pass


@dataclass
class _Lit:
    value: Any
    form: str  # bool | int | float | duration | string | bytes | ident
    span: SourceSpan


@dataclass
class _RawConn:
    source: tuple[Optional[str], str]
    target: tuple[Optional[str], str]
    span: SourceSpan
    annotation: Optional[AnnotationAst] = None


@dataclass
class _RawNetwork:
    instances: list[tuple[str, str, SourceSpan]] = field(default_factory=list)
    params: list[tuple[tuple[Optional[str], str], _Lit, SourceSpan]] = field(default_factory=list)
    conns: list[_RawConn] = field(default_factory=list)


@dataclass
class _RawType:
    name: str
    kind: FBKind
    span: SourceSpan
    service: Optional[str] = None
    events_in: list[tuple[str, tuple[str, ...], SourceSpan]] = field(default_factory=list)
    events_out: list[tuple[str, tuple[str, ...], SourceSpan]] = field(default_factory=list)
    data_in: list[tuple[str, DataKind]] = field(default_factory=list)
    data_out: list[tuple[str, DataKind]] = field(default_factory=list)
    variables: list[tuple[str, DataKind, Optional[_Lit]]] = field(default_factory=list)
    ecc: Optional[dict] = None
    network: Optional[_RawNetwork] = None


@dataclass
class _RawDoc:
    types: list[_RawType] = field(default_factory=list)
    app: Optional[_RawNetwork] = None
    devices: list[str] = field(default_factory=list)
    mapping: list[tuple[str, str, SourceSpan]] = field(default_factory=list)


# -- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, filename: str):
        self.diags: list[Diagnostic] = []
        self.lex = _Lexer(text, filename, self.diags)
        self.filename = filename

    # token helpers
    def error(self, message: str, tok: _Token, code: str = "syntax-error") -> None:
        self.diags.append(Diagnostic(code, message, span=self.lex.span(tok.line, tok.col, len(tok.text))))

    def fail(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.lex.peek()
        self.error(message, tok)
        raise _Syntax()

    def span_of(self, tok: _Token) -> SourceSpan:
        return self.lex.span(tok.line, tok.col, len(tok.text))

    def skip_newlines(self) -> None:
        while self.lex.peek().kind == "nl" or self.lex.peek().text == ";":
            self.lex.next()

    def at(self, text: str) -> bool:
        tok = self.lex.peek()
        return tok.kind in ("punct", "arrow", "ident") and tok.text == text

    def expect(self, text: str) -> _Token:
        tok = self.lex.peek()
        if tok.text != text or tok.kind in ("string", "bytes"):
            self.fail(f"expected {text!r}, found {_describe(tok)}")
        return self.lex.next()

    def ident(self, what: str = "identifier") -> _Token:
        tok = self.lex.peek()
        if tok.kind != "ident":
            self.fail(f"expected {what}, found {_describe(tok)}")
        return self.lex.next()

    def end_statement(self) -> None:
        tok = self.lex.peek()
        if tok.kind in ("nl", "eof") or tok.text in (";", "}"):
            if tok.kind == "nl" or tok.text == ";":
                self.lex.next()
            return
        self.fail(f"unexpected {_describe(tok)} at end of statement")

    def recover(self) -> None:
        depth = 0
        while True:
            tok = self.lex.peek()
            if tok.kind == "eof":
                return
            if tok.kind == "nl" and depth <= 0:
                self.lex.next()
                return
            if tok.text == "{" and tok.kind == "punct":
                depth += 1
            elif tok.text == "}" and tok.kind == "punct":
                if depth <= 0:
                    return
                depth -= 1
            self.lex.next()

    def block(self, statement) -> None:
        """Parse ``{ statements }`` calling ``statement`` for each one."""
        self.expect("{")
        while True:
            self.skip_newlines()
            tok = self.lex.peek()
            if tok.kind == "eof":
                self.fail("unterminated block, expected '}'")
            if tok.kind == "punct" and tok.text == "}":
                self.lex.next()
                return
            try:
                statement()
            except _Syntax:
                self.recover()

    # document
    def document(self) -> _RawDoc:
        doc = _RawDoc()
        while True:
            self.skip_newlines()
            tok = self.lex.peek()
            if tok.kind == "eof":
                break
            try:
                if self.at("fbtype"):
                    doc.types.append(self.fbtype())
                elif self.at("app"):
                    self.lex.next()
                    if doc.app is not None:
                        self.error("duplicate app section", tok, "duplicate-definition")
                    net = _RawNetwork()
                    self.block(lambda: self.network_statement(net))
                    doc.app = doc.app or net
                elif self.at("devices"):
                    self.lex.next()
                    self.devices(doc)
                elif self.at("map"):
                    self.lex.next()
                    self.block(lambda: self.map_statement(doc))
                else:
                    self.fail(f"expected a section (fbtype, app, devices, map), found {_describe(tok)}")
                self.end_statement()
            except _Syntax:
                self.recover()
        return doc

    def devices(self, doc: _RawDoc) -> None:
        self.expect("{")
        while True:
            tok = self.lex.next()
            if tok.kind == "nl" or tok.text in (",", ";"):
                continue
            if tok.kind == "punct" and tok.text == "}":
                return
            if tok.kind != "ident":
                self.fail(f"expected device name, found {_describe(tok)}", tok)
            doc.devices.append(tok.text)

    def map_statement(self, doc: _RawDoc) -> None:
        inst = self.ident("instance name")
        self.expect("->")
        dev = self.ident("device name")
        doc.mapping.append((inst.text, dev.text, self.span_of(inst)))
        self.end_statement()

    def fbtype(self) -> _RawType:
        self.expect("fbtype")
        name = self.ident("type name")
        kind_tok = self.ident("type kind")
        try:
            kind = FBKind(kind_tok.text)
        except ValueError:
            self.fail(f"unknown type kind {kind_tok.text!r} (basic, composite or sifb)", kind_tok)
        raw = _RawType(name.text, kind, self.span_of(name))
        if self.at("service"):
            self.lex.next()
            svc = self.lex.next()
            if svc.kind != "string":
                self.fail("expected quoted service name", svc)
            raw.service = _unescape(svc.text[1:-1])
        self.block(lambda: self.type_statement(raw))
        return raw

    def type_statement(self, raw: _RawType) -> None:
        tok = self.ident("declaration")
        if tok.text in ("input", "output"):
            if self.at("event"):
                self.lex.next()
                name = self.ident("event name")
                assoc: list[str] = []
                if self.at("with"):
                    self.lex.next()
                    assoc.append(self.ident("data port").text)
                    while self.at(","):
                        self.lex.next()
                        assoc.append(self.ident("data port").text)
                target = raw.events_in if tok.text == "input" else raw.events_out
                target.append((name.text, tuple(assoc), self.span_of(name)))
            else:
                name = self.ident("port name")
                self.expect(":")
                kind = self.data_kind()
                (raw.data_in if tok.text == "input" else raw.data_out).append((name.text, kind))
        elif tok.text == "var":
            name = self.ident("variable name")
            self.expect(":")
            kind = self.data_kind()
            init = None
            if self.at("="):
                self.lex.next()
                init = self.literal()
            raw.variables.append((name.text, kind, init))
        elif tok.text == "ecc":
            if raw.ecc is not None:
                self.error("duplicate ecc block", tok, "duplicate-definition")
            ecc = {"initial": None, "states": [], "actions": {}, "transitions": [], "span": self.span_of(tok)}
            self.block(lambda: self.ecc_statement(ecc))
            raw.ecc = raw.ecc or ecc
        elif tok.text == "network":
            if raw.network is not None:
                self.error("duplicate network block", tok, "duplicate-definition")
            net = _RawNetwork()
            self.block(lambda: self.network_statement(net))
            raw.network = raw.network or net
        else:
            self.fail(f"unknown declaration {tok.text!r}", tok)
        self.end_statement()

    def data_kind(self) -> DataKind:
        tok = self.ident("data kind")
        try:
            return DataKind(tok.text)
        except ValueError:
            self.error(f"unknown data kind {tok.text!r}", tok, "unknown-kind")
            raise _Syntax()

    def ecc_statement(self, ecc: dict) -> None:
        first = self.ident("ECC statement")
        if first.text == "initial":
            ecc["initial"] = self.ident("state name").text
        elif first.text == "state":
            name = self.ident("state name").text
            ecc["states"].append(name)
            actions = []
            if self.at("do"):
                self.lex.next()
                actions.append(self.action())
                while self.at(","):
                    self.lex.next()
                    actions.append(self.action())
            if actions:
                ecc["actions"][name] = tuple(actions)
        else:
            self.expect("->")
            target = self.ident("state name").text
            event = None
            mode = self.ident("'on' or 'always'")
            if mode.text == "on":
                event = self.ident("event name").text
            elif mode.text != "always":
                self.fail(f"expected 'on' or 'always', found {mode.text!r}", mode)
            guard = None
            if self.at("when"):
                when = self.lex.next()
                text, col = self.lex.rest_of_line()
                if not text:
                    self.fail("empty guard after 'when'", when)
                try:
                    guard = canonical_guard(text)
                except GuardError as exc:
                    span = self.lex.span(when.line, col + exc.offset)
                    self.diags.append(Diagnostic("bad-guard", f"malformed guard: {exc}", span=span))
                    raise _Syntax()
            ecc["transitions"].append(Transition(first.text, target, event, guard))
        self.end_statement()

    def action(self) -> Action:
        alg = None
        if self.lex.peek().kind == "ident":
            alg = self.lex.next().text
        event = None
        if self.at("->"):
            self.lex.next()
            event = self.ident("event name").text
        if alg is None and event is None:
            self.fail("expected an algorithm or '-> EVENT'")
        return Action(alg, event)

    def endpoint(self) -> tuple[tuple[Optional[str], str], _Token]:
        first = self.ident("endpoint")
        if self.at("."):
            self.lex.next()
            port = self.ident("port name")
            return (first.text, port.text), first
        return (None, first.text), first

    def network_statement(self, net: _RawNetwork) -> None:
        tok = self.lex.peek()
        if self.at("instance"):
            self.lex.next()
            name = self.ident("instance name")
            self.expect(":")
            type_name = self.ident("type name")
            net.instances.append((name.text, type_name.text, self.span_of(type_name)))
        elif self.at("param"):
            self.lex.next()
            ep, ep_tok = self.endpoint()
            self.expect("=")
            net.params.append((ep, self.literal(), self.span_of(ep_tok)))
        else:
            src, src_tok = self.endpoint()
            self.expect("->")
            dst, _ = self.endpoint()
            conn = _RawConn(src, dst, self.lex.span(tok.line, tok.col))
            if self.at("@"):
                conn.annotation = self.annotation()
            net.conns.append(conn)
        self.end_statement()

    def annotation(self) -> AnnotationAst:
        at = self.expect("@")
        kw = self.ident("annotation keyword")
        if kw.text != "secure":
            self.diags.append(Diagnostic("bad-annotation", f"unknown annotation @{kw.text}", span=self.span_of(kw)))
            raise _Syntax()
        if not self.at("("):
            self.fail("expected '(' after @secure")
        open_tok = self.lex.next()
        # arguments are kept raw and split on top-level commas
        text = self.lex.text
        i = open_tok.end
        args, spans, start, in_str = [], [], i, False
        while True:
            if i >= len(text) or text[i] == "\n":
                self.fail("unterminated @secure(...)", open_tok)
            ch = text[i]
            if in_str:
                if ch == "\\":
                    i += 1
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch in ",)":
                piece = text[start:i]
                lead = len(piece) - len(piece.lstrip())
                col = start + lead - self.lex.line_start + 1
                args.append(piece.strip())
                spans.append(self.lex.span(at.line, col, len(piece.strip())))
                start = i + 1
                if ch == ")":
                    break
            i += 1
        self.lex.pos = i + 1
        self.lex._peeked = None
        span = self.lex.span(at.line, at.col, i + 1 - at.start)
        if args == [""]:
            args, spans = [], []
        for arg, sp in zip(args, spans):
            if not arg:
                self.diags.append(Diagnostic("bad-annotation", "empty @secure argument", span=sp))
                raise _Syntax()
        if len(args) < 2:
            self.diags.append(
                Diagnostic("bad-annotation", "@secure needs at least a goal and an algorithm", span=span)
            )
            raise _Syntax()
        return AnnotationAst("secure", tuple(args), span, tuple(spans))

    def literal(self) -> _Lit:
        tok = self.lex.next()
        span = self.span_of(tok)
        if tok.kind == "ident":
            if tok.text in ("true", "false"):
                return _Lit(tok.text == "true", "bool", span)
            return _Lit(tok.text, "ident", span)
        lit = _literal_from_token(tok.kind, tok.text, span)
        if lit is None:
            self.fail(f"expected a literal, found {_describe(tok)}", tok)
        return lit


def _literal_from_token(kind: str, text: str, span: SourceSpan) -> Optional[_Lit]:
    if kind == "int":
        return _Lit(int(text), "int", span)
    if kind == "hex":
        return _Lit(int(text, 16), "int", span)
    if kind == "float":
        return _Lit(float(text), "float", span)
    if kind == "duration":
        if text.endswith("ms"):
            return _Lit(int(text[:-2]), "duration", span)
        return _Lit(int(text[:-1]) * 1000, "duration", span)
    if kind == "string":
        return _Lit(_unescape(text[1:-1]), "string", span)
    if kind == "bytes":
        try:
            return _Lit(bytes.fromhex(text[2:-1]), "bytes", span)
        except ValueError:
            return None
    return None


def _describe(tok: _Token) -> str:
    if tok.kind == "eof":
        return "end of input"
    if tok.kind == "nl":
        return "end of line"
    return repr(tok.text)


# -- annotation semantics -------------------------------------------------------

_PARAM_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")


def _annotation_value(text: str, span: SourceSpan) -> Any:
    m = _TOKEN_RE.fullmatch(text)
    if m is not None:
        kind = m.lastgroup
        if kind == "ident":
            return {"true": True, "false": False}.get(text, text)
        lit = _literal_from_token(kind, text, span)
        if lit is not None:
            return lit.value
    raise ParseError([Diagnostic("bad-annotation", f"malformed parameter value {text!r}", span=span)])


def parse_secure_annotation(ast: AnnotationAst) -> tuple[SecGoal, str, dict[str, Any]]:
    """Turn raw ``@secure`` arguments into ``(goal, algorithm, params)``.

    Raises:
        ParseError: unknown goal, a trailing token that is not ``key=value``,
            or a repeated key.
    """
    spans = ast.arg_spans or (ast.span,) * len(ast.args)
    if len(ast.args) < 2:
        raise ParseError([Diagnostic("bad-annotation", "@secure needs a goal and an algorithm", span=ast.span)])
    try:
        goal = SecGoal.from_token(ast.args[0])
    except ValueError as exc:
        raise ParseError([Diagnostic("unknown-goal", str(exc), span=spans[0])]) from None
    alg = ast.args[1]
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_\-]*", alg):
        raise ParseError([Diagnostic("bad-annotation", f"malformed algorithm name {alg!r}", span=spans[1])])
    params: dict[str, Any] = {}
    for arg, span in zip(ast.args[2:], spans[2:]):
        m = _PARAM_RE.match(arg)
        if m is None:
            raise ParseError([Diagnostic("bad-annotation", f"expected key=value, found {arg!r}", span=span)])
        key, value = m.group(1), m.group(2).strip()
        if key in params:
            raise ParseError([Diagnostic("duplicate-param", f"parameter {key!r} given twice", span=span)])
        params[key] = _annotation_value(value, span)
    return goal, alg, params


# -- resolution -------------------------------------------------------------------


def _coerce(lit: _Lit, kind: DataKind) -> Any:
    value = lit.value
    if lit.form == "ident":
        raise ValueError(f"bare word {value!r} is not a {kind.value} literal")
    if kind is DataKind.LREAL and lit.form in ("int", "duration"):
        value = float(value)
    if kind in (DataKind.INT, DataKind.UINT, DataKind.BYTE) and lit.form == "float":
        raise ValueError(f"{value!r} is not a valid {kind.value} value")
    return kind.coerce(value)


def _build_interface(raw: _RawType) -> FBInterface:
    assoc = {}
    for name, ports, _ in raw.events_in + raw.events_out:
        if ports:
            assoc[name] = ports
    return FBInterface(
        tuple(n for n, _, _ in raw.events_in),
        tuple(n for n, _, _ in raw.events_out),
        tuple(raw.data_in),
        tuple(raw.data_out),
        assoc,
    )


class _Resolver:
    def __init__(self, diags: list[Diagnostic], interfaces: Mapping[str, FBInterface], library: Mapping[str, FBType]):
        self.diags = diags
        self.interfaces = interfaces
        self.library = library

    def interface_of(self, type_name: str) -> Optional[FBInterface]:
        if type_name in self.interfaces:
            return self.interfaces[type_name]
        fbt = self.library.get(type_name)
        return None if fbt is None else fbt.interface

    def port(self, ep, instances: Mapping[str, str], owner: Optional[FBInterface]):
        """Return ``(category, kind, is_input)`` as seen from outside, or None."""
        inst, port = ep
        if inst is None:
            itf = owner
        else:
            type_name = instances.get(inst)
            itf = self.interface_of(type_name) if type_name else None
        if itf is None:
            return None
        if port in itf.event_inputs:
            return "event", None, True
        if port in itf.event_outputs:
            return "event", None, False
        if (k := itf.input_kind(port)) is not None:
            return "data", k, True
        if (k := itf.output_kind(port)) is not None:
            return "data", k, False
        return None

    def network(self, raw: _RawNetwork, owner: Optional[FBInterface], allow_links: bool):
        instances: dict[str, str] = {}
        for name, type_name, span in raw.instances:
            if name in instances:
                self.diags.append(Diagnostic("duplicate-definition", f"instance {name} declared twice", span=span))
                continue
            if self.interface_of(type_name) is None:
                self.diags.append(Diagnostic("unknown-type", f"unknown FB type {type_name!r}", span=span))
            instances[name] = type_name
        event_conns, data_conns, links = [], [], []
        for rc in raw.conns:
            conn = Connection(Endpoint(*rc.source), Endpoint(*rc.target), rc.span)
            infos = []
            for ep in (rc.source, rc.target):
                if ep[0] is not None and ep[0] in instances and self.interface_of(instances[ep[0]]) is None:
                    infos.append(False)  # already reported as unknown type
                    continue
                info = self.port(ep, instances, owner)
                if info is None:
                    self.diags.append(
                        Diagnostic("dangling-endpoint", f"connection endpoint {Endpoint(*ep)} does not exist", span=rc.span)
                    )
                infos.append(info)
            if not all(infos):
                continue
            category = infos[0][0]
            (event_conns if category == "event" else data_conns).append(conn)
            if rc.annotation is not None:
                if not allow_links:
                    self.diags.append(
                        Diagnostic("bad-annotation", "@secure is only allowed in the app section", span=rc.annotation.span)
                    )
                elif category != "data":
                    self.diags.append(
                        Diagnostic("event-annotation", "event connections carry no data and cannot be secured", span=rc.annotation.span)
                    )
                else:
                    try:
                        goal, alg, params = parse_secure_annotation(rc.annotation)
                    except ParseError as exc:
                        self.diags.extend(exc.diagnostics)
                        continue
                    links.append(SecureLink(conn, goal, alg, params, rc.annotation.span))
        params: dict[tuple[str, str], Any] = {}
        for ep, lit, span in raw.params:
            if ep[0] is None:
                self.diags.append(Diagnostic("dangling-endpoint", f"param needs instance.port, got {ep[1]}", span=span))
                continue
            if ep[0] in instances and self.interface_of(instances[ep[0]]) is None:
                continue
            info = self.port(ep, instances, None)
            if info is None or info[0] != "data" or not info[2]:
                self.diags.append(
                    Diagnostic("dangling-endpoint", f"param target {Endpoint(*ep)} is not a data input", span=span)
                )
                continue
            if ep in params:
                self.diags.append(Diagnostic("duplicate-definition", f"param {Endpoint(*ep)} bound twice", span=span))
                continue
            try:
                params[ep] = _coerce(lit, info[1])
            except ValueError as exc:
                self.diags.append(Diagnostic("bad-literal", f"param {Endpoint(*ep)}: {exc}", span=lit.span))
        return FBNetwork(instances, tuple(event_conns), tuple(data_conns), params), links


def _resolve_types(raw_types: list[_RawType], resolver: _Resolver, diags) -> dict[str, FBType]:
    types: dict[str, FBType] = {}
    for raw in raw_types:
        itf = resolver.interfaces[raw.name]
        variables = []
        for name, kind, init in raw.variables:
            value = None
            if init is not None:
                try:
                    value = _coerce(init, kind)
                except ValueError as exc:
                    diags.append(Diagnostic("bad-literal", f"variable {name}: {exc}", span=init.span))
            variables.append(Variable(name, kind, value))
        ecc = None
        if raw.ecc is not None:
            states = tuple(raw.ecc["states"])
            initial = raw.ecc["initial"]
            if initial is None:
                if not states:
                    diags.append(Diagnostic("syntax-error", "ecc block declares no states", span=raw.ecc["span"]))
                    continue
                initial = states[0]
            ecc = ECC(states, initial, tuple(raw.ecc["transitions"]), dict(raw.ecc["actions"]))
        network = None
        if raw.network is not None:
            network, _ = resolver.network(raw.network, itf, allow_links=False)
        types[raw.name] = FBType(raw.name, raw.kind, itf, ecc, network, raw.service, tuple(variables))
    return types


def _parse(text: str, filename: str, library: Optional[Mapping[str, FBType]]):
    text = text.replace("\r\n", "\n")
    parser = _Parser(text, filename)
    doc = parser.document()
    diags = parser.diags
    if library is None:
        from secfb.library import standard_library

        library = standard_library()
    interfaces: dict[str, FBInterface] = {}
    kept = []
    for raw in doc.types:
        if raw.name in interfaces:
            diags.append(Diagnostic("duplicate-definition", f"fbtype {raw.name} defined twice", span=raw.span))
            continue
        interfaces[raw.name] = _build_interface(raw)
        kept.append(raw)
    resolver = _Resolver(diags, interfaces, library)
    types = _resolve_types(kept, resolver, diags)
    root, links = FBNetwork(), []
    if doc.app is not None:
        root, links = resolver.network(doc.app, None, allow_links=True)
    mapping: dict[str, str] = {}
    for inst, dev, span in doc.mapping:
        if inst in mapping:
            diags.append(Diagnostic("duplicate-definition", f"instance {inst} mapped twice", span=span))
            continue
        mapping[inst] = dev
    if diags:
        raise ParseError(diags)
    return Application(types, root, tuple(doc.devices), mapping, tuple(links))


def parse_application(text: str, filename: str = "<input>", library: Optional[Mapping[str, FBType]] = None) -> Application:
    """Parse a document into a resolved :class:`Application`.

    Args:
        text: Document source.  CRLF line endings are accepted.
        filename: Used in diagnostic spans.
        library: Types available without being defined in the document.
            Defaults to the packaged standard library.

    Raises:
        ParseError: With one diagnostic per problem found.
    """
    return _parse(text, filename, library)


def parse_types(text: str, filename: str = "<input>", library: Optional[Mapping[str, FBType]] = None) -> dict[str, FBType]:
    """Parse a document holding only ``fbtype`` sections."""
    return dict(_parse(text, filename, library if library is not None else {}).fb_types)


# -- serializer -----------------------------------------------------------------


def format_literal(value: Any, kind: Optional[DataKind] = None) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (bytes, bytearray)):
        return f'x"{bytes(value).hex()}"'
    if isinstance(value, str):
        return f'"{_escape(value)}"'
    raise TypeError(f"cannot serialize {value!r}")


def _format_param(key: str, value: Any) -> str:
    if key == "rekey" and isinstance(value, int) and not isinstance(value, bool) and value >= 0:
        text = f"{value // 1000}s" if value % 1000 == 0 else f"{value}ms"
    elif isinstance(value, str) and re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", value) and value not in ("true", "false"):
        text = value
    else:
        text = format_literal(value)
    return f"{key}={text}"


def _format_annotation(link: SecureLink) -> str:
    args = [link.sec_goal.value, link.alg] + [_format_param(k, v) for k, v in link.params.items()]
    return f"@secure({', '.join(args)})"


def _network_lines(net: FBNetwork, links: tuple[SecureLink, ...], indent: str) -> list[str]:
    lines = [f"{indent}instance {name} : {type_name}" for name, type_name in net.instances.items()]
    for (inst, port), value in net.params.items():
        lines.append(f"{indent}param {inst}.{port} = {format_literal(value)}")
    for conn in net.event_conns:
        lines.append(f"{indent}{conn.source} -> {conn.target}")
    annotated = {link.d_con: link for link in links}
    for conn in net.data_conns:
        line = f"{indent}{conn.source} -> {conn.target}"
        if conn in annotated:
            line += " " + _format_annotation(annotated[conn])
        lines.append(line)
    return lines


def _type_lines(fbt: FBType) -> list[str]:
    head = f"fbtype {fbt.name} {fbt.kind.value}"
    if fbt.service is not None:
        head += f' service "{_escape(fbt.service)}"'
    lines = [head + " {"]
    itf = fbt.interface
    for direction, events in (("input", itf.event_inputs), ("output", itf.event_outputs)):
        for ev in events:
            assoc = itf.with_assoc.get(ev)
            lines.append(f"  {direction} event {ev}" + (f" with {', '.join(assoc)}" if assoc else ""))
    for direction, ports in (("input", itf.data_inputs), ("output", itf.data_outputs)):
        for name, kind in ports:
            lines.append(f"  {direction} {name} : {kind.value}")
    for var in fbt.variables:
        init = "" if var.initial is None else f" = {format_literal(var.initial)}"
        lines.append(f"  var {var.name} : {var.kind.value}{init}")
    if fbt.ecc is not None:
        ecc = fbt.ecc
        lines.append("  ecc {")
        lines.append(f"    initial {ecc.initial}")
        for state in ecc.states:
            actions = ecc.actions.get(state, ())
            items = []
            for act in actions:
                if act.algorithm and act.event:
                    items.append(f"{act.algorithm} -> {act.event}")
                elif act.algorithm:
                    items.append(act.algorithm)
                else:
                    items.append(f"-> {act.event}")
            lines.append(f"    state {state}" + (f" do {', '.join(items)}" if items else ""))
        for tr in ecc.transitions:
            trigger = f"on {tr.event}" if tr.event is not None else "always"
            guard = f" when {tr.guard}" if tr.guard is not None else ""
            lines.append(f"    {tr.source} -> {tr.target} {trigger}{guard}")
        lines.append("  }")
    if fbt.network is not None:
        lines.append("  network {")
        lines.extend(_network_lines(fbt.network, (), "    "))
        lines.append("  }")
    lines.append("}")
    return lines


def serialize_types(types) -> str:
    blocks = ["\n".join(_type_lines(fbt)) for fbt in types]
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def serialize_application(app: Application) -> str:
    """Canonical text for ``app``; ``parse_application`` reads it back unchanged."""
    parts = []
    if app.fb_types:
        parts.append(serialize_types(app.fb_types.values()).rstrip("\n"))
    if app.devices:
        parts.append("devices { " + " ".join(app.devices) + " }")
    body = _network_lines(app.root, app.secure_links, "  ")
    parts.append("\n".join(["app {", *body, "}"]))
    if app.mapping:
        parts.append("\n".join(["map {", *(f"  {i} -> {d}" for i, d in app.mapping.items()), "}"]))
    return "\n\n".join(parts) + "\n"
