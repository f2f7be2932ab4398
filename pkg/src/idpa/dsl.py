"""Parser and canonical serializer for the line-oriented ``.idpa`` model format.

One statement per line, ``#`` comments, double-quoted strings with ``\\"`` and
``\\\\`` escapes. Errors are collected per statement (the parser skips to the
next line) and capped at :data:`MAX_DIAGNOSTICS`.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional

from idpa.model import (
    ID_PATTERN,
    NODE_KEYWORDS,
    AcaAnnotation,
    AccessControl,
    Answer,
    Capability,
    DataObject,
    Diagnostic,
    Flow,
    MisactorExclusion,
    MisactorKind,
    Model,
    Node,
    NodeKind,
    Policy,
    Severity,
    SourceSpan,
    Subjects,
    Transform,
    has_errors,
    sort_diagnostics,
    sort_misactors,
    validate,
)

MAX_DIAGNOSTICS = 50
_DECIMAL = re.compile(r"[0-9]+(\.[0-9]{1,2})?\Z")
_KEYWORDS = ("model", "entity", "process", "store", "data", "flow", "annotate", "exclude", "policy")
_ANNOTATION_KEYS = {
    "awareness.sender": ("awareness_sender", Answer),
    "awareness.stakeholders": ("awareness_stakeholders", Answer),
    "consent.sender": ("consent_sender", Answer),
    "consent.stakeholders": ("consent_stakeholders", Answer),
    "access-control": ("access_control", AccessControl),
}
_POLICY_KEYS = ("accountability", "auditability", "alignment")


class ParseFailure(Exception):
    """Raised when model text has errors; ``diagnostics`` holds all of them (warnings included)."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        first = errors[0].format() if errors else "parse failed"
        more = f" (+{len(errors) - 1} more)" if len(errors) > 1 else ""
        super().__init__(first + more)


@dataclass(frozen=True)
class ParseResult:
    model: Optional[Model]
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.model is not None and not has_errors(self.diagnostics)


def parse(text: str) -> Model:
    result = parse_document(text)
    if not result.ok:
        raise ParseFailure(result.diagnostics)
    return result.model


def parse_bytes(data: bytes) -> Model:
    return parse(decode_source(data))


def decode_source(data: bytes) -> str:
    if data.startswith(b"\xef\xbb\xbf"):
        raise ParseFailure([_bom_error()])
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise ParseFailure(
            [Diagnostic(Severity.ERROR, f"input is not valid UTF-8 (byte offset {exc.start})", "", SourceSpan(line, 1, 1))]
        ) from None


def _bom_error() -> Diagnostic:
    return Diagnostic(Severity.ERROR, "byte order mark not allowed; save the file as UTF-8 without BOM", "", SourceSpan(1, 1, 1))


def parse_document(text: str) -> ParseResult:
    """Parse text into a model plus every diagnostic (syntax and validation)."""
    if text.startswith("\ufeff"):
        return ParseResult(None, [_bom_error()])
    parser = _Parser()
    parser.run(text)
    diags = list(parser.diagnostics)
    if len(diags) >= MAX_DIAGNOSTICS:
        return ParseResult(None, sort_diagnostics(diags)[:MAX_DIAGNOSTICS])
    model = parser.build()
    for diag in validate(model):
        diags.append(
            Diagnostic(diag.severity, diag.message, diag.location, parser.spans.get(diag.location, parser.header_span))
        )
    diags = sort_diagnostics(diags)[:MAX_DIAGNOSTICS]
    return ParseResult(None if has_errors(diags) else model, diags)


# Tokenizer


@dataclass(frozen=True)
class _Token:
    kind: str  # "word", "string", or "attr" (key= followed by a string value)
    text: str
    col: int
    length: int
    value: str = ""


class _LineError(Exception):
    def __init__(self, message: str, col: int, length: int = 1):
        super().__init__(message)
        self.col = col
        self.length = max(1, length)


def _read_string(line: str, start: int) -> tuple[str, int]:
    """Read a quoted string starting at ``line[start] == '"'``; return (value, end index)."""
    out: list[str] = []
    i = start + 1
    while i < len(line):
        ch = line[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 < len(line) and line[i + 1] in '"\\':
                out.append(line[i + 1])
                i += 2
                continue
            raise _LineError("invalid escape in string (only \\\" and \\\\ are allowed)", i + 1, 2)
        if ch != "\t" and unicodedata.category(ch) == "Cc":
            raise _LineError("control character in string", i + 1)
        out.append(ch)
        i += 1
    raise _LineError("unterminated string", start + 1, len(line) - start)


def _tokenize(line: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
        elif ch == "#":
            break
        elif ch == '"':
            value, end = _read_string(line, i)
            tokens.append(_Token("string", line[i:end], i + 1, end - i, value))
            i = end
        else:
            j = i
            while j < n and line[j] not in ' \t"#':
                j += 1
            word = line[i:j]
            if j < n and line[j] == '"' and word.endswith("="):
                value, end = _read_string(line, j)
                tokens.append(_Token("attr", line[i:end], i + 1, end - i, value))
                i = end
            elif j < n and line[j] == '"':
                raise _LineError(f"unexpected string after {word!r}", j + 1)
            else:
                tokens.append(_Token("word", word, i + 1, j - i))
                i = j
    return tokens


# Statement parser


class _Parser:
    def __init__(self) -> None:
        self.diagnostics: list[Diagnostic] = []
        self.spans: dict[str, SourceSpan] = {}
        self.header_span: Optional[SourceSpan] = None
        self.name: Optional[str] = None
        self.nodes: list[Node] = []
        self.data: list[DataObject] = []
        self.flows: list[Flow] = []
        self.annotations: list[AcaAnnotation] = []
        self.exclusions: list[MisactorExclusion] = []
        self.policy: Optional[Policy] = None
        self._ids: dict[str, set[str]] = {"node": set(), "data": set(), "flow": set(), "annotate": set(), "exclude": set()}
        self._line = 0
        self._seen_statement = False

    def full(self) -> bool:
        return len(self.diagnostics) >= MAX_DIAGNOSTICS

    def error(self, message: str, col: int = 1, length: int = 1, location: str = "") -> None:
        if not self.full():
            span = SourceSpan(self._line, col, max(1, length))
            self.diagnostics.append(Diagnostic(Severity.ERROR, message, location, span))

    def run(self, text: str) -> None:
        for lineno, raw in enumerate(text.split("\n"), start=1):
            if self.full():
                return
            self._line = lineno
            line = raw[:-1] if raw.endswith("\r") else raw
            try:
                tokens = _tokenize(line)
            except _LineError as exc:
                self.error(str(exc), exc.col, exc.length)
                self._seen_statement = True
                continue
            if not tokens:
                continue
            try:
                self._statement(tokens)
            except _LineError as exc:
                self.error(str(exc), exc.col, exc.length)
            self._seen_statement = True
        if self.name is None and not self.full() and not self.diagnostics:
            self._line = 1
            self.error('missing header: the first statement must be model "<name>"')

    def build(self) -> Model:
        return Model(
            name=self.name or "",
            nodes=self.nodes,
            data_objects=self.data,
            flows=self.flows,
            aca_annotations=self.annotations,
            exclusions=self.exclusions,
            policy=self.policy or Policy(),
        )

    # helpers

    def _span(self, tok: _Token) -> SourceSpan:
        return SourceSpan(self._line, tok.col, max(1, tok.length))

    def _expect_id(self, tokens: list[_Token], idx: int, what: str, after: _Token) -> _Token:
        if idx >= len(tokens):
            raise _LineError(f"expected {what} after {after.text!r}", after.col + after.length, 1)
        tok = tokens[idx]
        if tok.kind != "word" or not ID_PATTERN.match(tok.text):
            raise _LineError(f"malformed {what} {tok.text!r} (ids match [a-z][a-z0-9-]*)", tok.col, tok.length)
        return tok

    def _expect_string(self, tokens: list[_Token], idx: int, what: str, after: _Token) -> str:
        if idx >= len(tokens):
            raise _LineError(f"expected {what} string after {after.text!r}", after.col + after.length, 1)
        tok = tokens[idx]
        if tok.kind != "string":
            raise _LineError(f"expected {what} as a quoted string, got {tok.text!r}", tok.col, tok.length)
        return tok.value

    def _attrs(self, tokens: list[_Token], allowed: tuple[str, ...]) -> dict[str, tuple[str, _Token]]:
        out: dict[str, tuple[str, _Token]] = {}
        for tok in tokens:
            if tok.kind == "string":
                raise _LineError(f"unexpected string {tok.text}", tok.col, tok.length)
            if tok.kind == "attr":
                key, value = tok.text.split("=", 1)[0], tok.value
            else:
                if "=" not in tok.text:
                    raise _LineError(f"malformed attribute {tok.text!r} (expected key=value)", tok.col, tok.length)
                key, value = tok.text.split("=", 1)
                if not value:
                    raise _LineError(f"malformed attribute {tok.text!r}: empty value", tok.col, tok.length)
            if key not in allowed:
                raise _LineError(
                    f"malformed attribute: unknown key {key!r} (allowed: {', '.join(allowed)})", tok.col, tok.length
                )
            if key in out:
                raise _LineError(f"malformed attribute: duplicate key {key!r}", tok.col, tok.length)
            if tok.kind == "attr" and key != "reason":
                raise _LineError(f"malformed attribute {key!r}: value must not be quoted", tok.col, tok.length)
            out[key] = (value, tok)
        return out

    @staticmethod
    def _enum(enum_cls, value: str, tok: _Token, key: str):
        try:
            return enum_cls(value)
        except ValueError:
            choices = "|".join(m.value for m in enum_cls)
            raise _LineError(f"malformed attribute {key}={value!r} (expected {choices})", tok.col, tok.length) from None

    @staticmethod
    def _list(value: str, tok: _Token, key: str, pattern=ID_PATTERN) -> list[str]:
        items = value.split(",")
        for item in items:
            if not pattern.match(item):
                raise _LineError(f"malformed attribute {key}: bad list item {item!r}", tok.col, tok.length)
        if len(set(items)) != len(items):
            raise _LineError(f"malformed attribute {key}: duplicate list item", tok.col, tok.length)
        return items

    @staticmethod
    def _yes_no(value: str, tok: _Token, key: str) -> bool:
        if value not in ("yes", "no"):
            raise _LineError(f"malformed attribute {key}={value!r} (expected yes|no)", tok.col, tok.length)
        return value == "yes"

    def _claim(self, ns: str, tok: _Token, location: str, what: str) -> bool:
        if tok.text in self._ids[ns]:
            self.error(f"duplicate {what} {tok.text}", tok.col, tok.length, location)
            return False
        self._ids[ns].add(tok.text)
        self.spans[location] = self._span(tok)
        return True

    # statements

    def _statement(self, tokens: list[_Token]) -> None:
        head = tokens[0]
        if head.kind != "word" or head.text not in _KEYWORDS:
            raise _LineError(f"unknown keyword {head.text!r}", head.col, head.length)
        if head.text == "model":
            self._header(tokens)
            return
        if self.name is None and not self._seen_statement:
            self.error('missing header: the first statement must be model "<name>"', head.col, head.length)
        getattr(self, "_st_" + head.text)(tokens)

    def _header(self, tokens: list[_Token]) -> None:
        head = tokens[0]
        if self._seen_statement or self.name is not None:
            raise _LineError("model header must be the first statement and appear once", head.col, head.length)
        name = self._expect_string(tokens, 1, "model name", head)
        if len(tokens) > 2:
            raise _LineError(f"unexpected token {tokens[2].text!r}", tokens[2].col, tokens[2].length)
        self.name = name
        self.header_span = SourceSpan(self._line, head.col, head.length)
        self.spans["model"] = self.header_span

    def _node_head(self, tokens: list[_Token]) -> tuple[_Token, str]:
        tok = self._expect_id(tokens, 1, "node id", tokens[0])
        label = self._expect_string(tokens, 2, "label", tok)
        return tok, label

    def _st_entity(self, tokens: list[_Token]) -> None:
        tok, label = self._node_head(tokens)
        self._attrs(tokens[3:], ())
        if self._claim("node", tok, f"entity {tok.text}", "node id"):
            self.nodes.append(Node(tok.text, label, NodeKind.ENTITY))

    def _st_process(self, tokens: list[_Token]) -> None:
        tok, label = self._node_head(tokens)
        attrs = self._attrs(tokens[3:], ("capabilities", "government-access"))
        caps: list[Capability] = []
        if "capabilities" in attrs:
            value, atok = attrs["capabilities"]
            caps = [self._enum(Capability, c, atok, "capabilities") for c in self._list(value, atok, "capabilities")]
        gov = self._yes_no(*attrs["government-access"], "government-access") if "government-access" in attrs else False
        if self._claim("node", tok, f"process {tok.text}", "node id"):
            self.nodes.append(Node(tok.text, label, NodeKind.PROCESS, frozenset(caps), gov))

    def _st_store(self, tokens: list[_Token]) -> None:
        tok, label = self._node_head(tokens)
        attrs = self._attrs(tokens[3:], ("government-access",))
        gov = self._yes_no(*attrs["government-access"], "government-access") if "government-access" in attrs else False
        if self._claim("node", tok, f"store {tok.text}", "node id"):
            self.nodes.append(Node(tok.text, label, NodeKind.STORE, frozenset(), gov))

    def _st_data(self, tokens: list[_Token]) -> None:
        tok = self._expect_id(tokens, 1, "data id", tokens[0])
        label = self._expect_string(tokens, 2, "label", tok)
        attrs = self._attrs(tokens[3:], ("subjects", "likelihood", "derived-from", "categories"))
        if "subjects" not in attrs:
            raise _LineError("data statement requires subjects=", tok.col, tok.length)
        subjects = self._enum(Subjects, *attrs["subjects"], "subjects")
        likelihood = None
        if "likelihood" in attrs:
            value, atok = attrs["likelihood"]
            if not _DECIMAL.match(value):
                raise _LineError(
                    f"malformed attribute likelihood={value!r} (decimal with at most 2 fraction digits)",
                    atok.col,
                    atok.length,
                )
            likelihood = Decimal(value)
        derived = self._list(*attrs["derived-from"], "derived-from") if "derived-from" in attrs else []
        cats = self._list(*attrs["categories"], "categories") if "categories" in attrs else []
        if self._claim("data", tok, f"data {tok.text}", "data id"):
            self.data.append(DataObject(tok.text, label, subjects, likelihood, frozenset(derived), frozenset(cats)))

    def _st_flow(self, tokens: list[_Token]) -> None:
        tok = self._expect_id(tokens, 1, "flow id", tokens[0])
        src = self._expect_id(tokens, 2, "source node id", tok)
        if len(tokens) < 4 or tokens[3].text != "->" or tokens[3].kind != "word":
            bad = tokens[3] if len(tokens) > 3 else src
            raise _LineError("expected '->' between source and destination", bad.col, bad.length)
        dst = self._expect_id(tokens, 4, "destination node id", tokens[3])
        attrs = self._attrs(tokens[5:], ("carries", "initiator", "transform"))
        if "carries" not in attrs:
            raise _LineError("flow statement requires carries=", tok.col, tok.length)
        carries = self._list(*attrs["carries"], "carries")
        initiator = None
        if "initiator" in attrs:
            value, atok = attrs["initiator"]
            if not ID_PATTERN.match(value):
                raise _LineError(f"malformed attribute initiator={value!r}", atok.col, atok.length)
            initiator = value
        transform = self._enum(Transform, *attrs["transform"], "transform") if "transform" in attrs else Transform.NONE
        if self._claim("flow", tok, f"flow {tok.text}", "flow id"):
            self.flows.append(Flow(tok.text, src.text, dst.text, tuple(carries), initiator, transform))

    def _st_annotate(self, tokens: list[_Token]) -> None:
        tok = self._expect_id(tokens, 1, "annotation target", tokens[0])
        if len(tokens) < 3:
            raise _LineError("annotate needs at least one key=value pair", tok.col, tok.length)
        attrs = self._attrs(tokens[2:], tuple(_ANNOTATION_KEYS))
        values = {}
        for key, (value, atok) in attrs.items():
            field_name, enum_cls = _ANNOTATION_KEYS[key]
            values[field_name] = self._enum(enum_cls, value, atok, key)
        if self._claim("annotate", tok, f"annotate {tok.text}", "annotation for"):
            self.annotations.append(AcaAnnotation(tok.text, **values))

    def _st_exclude(self, tokens: list[_Token]) -> None:
        tok = self._expect_id(tokens, 1, "flow id", tokens[0])
        attrs = self._attrs(tokens[2:], ("misactor", "reason"))
        if "misactor" not in attrs or "reason" not in attrs:
            raise _LineError("exclude statement requires misactor= and reason=", tok.col, tok.length)
        value, atok = attrs["misactor"]
        kinds = [
            self._enum(MisactorKind, k, atok, "misactor")
            for k in self._list(value, atok, "misactor", re.compile(r"[A-Z]+\Z"))
        ]
        reason, rtok = attrs["reason"]
        if rtok.kind != "attr":
            raise _LineError("malformed attribute reason: value must be a quoted string", rtok.col, rtok.length)
        if not reason.strip():
            raise _LineError("malformed attribute reason: must not be empty", rtok.col, rtok.length)
        if self._claim("exclude", tok, f"exclude {tok.text}", "exclusion for"):
            self.exclusions.append(MisactorExclusion(tok.text, frozenset(kinds), reason))

    def _st_policy(self, tokens: list[_Token]) -> None:
        head = tokens[0]
        if len(tokens) < 2:
            raise _LineError("policy needs at least one key=value pair", head.col, head.length)
        attrs = self._attrs(tokens[1:], _POLICY_KEYS)
        if self.policy is not None:
            raise _LineError("duplicate policy statement", head.col, head.length)
        values = {key: self._enum(Answer, value, atok, key) for key, (value, atok) in attrs.items()}
        self.policy = Policy(**values)
        self.spans["policy"] = self._span(head)


# Serializer


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_decimal(value: Decimal) -> str:
    text = format(value.normalize(), "f")
    return text


def serialize(model: Model) -> str:
    """Render a model in canonical form: sorted statements, fixed attribute order, LF endings."""
    lines = [f"model {_quote(model.name)}"]
    for kind in (NodeKind.ENTITY, NodeKind.PROCESS, NodeKind.STORE):
        for node in model.nodes:
            if node.kind is not kind:
                continue
            parts = [NODE_KEYWORDS[kind], node.id, _quote(node.label)]
            if node.capabilities:
                parts.append("capabilities=" + ",".join(sorted(c.value for c in node.capabilities)))
            if node.government_access:
                parts.append("government-access=yes")
            lines.append(" ".join(parts))
    for data in model.data_objects:
        parts = ["data", data.id, _quote(data.label), f"subjects={data.subjects.value}"]
        if data.likelihood is not None:
            parts.append(f"likelihood={format_decimal(data.likelihood)}")
        if data.derived_from:
            parts.append("derived-from=" + ",".join(sorted(data.derived_from)))
        if data.categories:
            parts.append("categories=" + ",".join(sorted(data.categories)))
        lines.append(" ".join(parts))
    for flow in model.flows:
        parts = ["flow", flow.id, flow.source, "->", flow.destination, "carries=" + ",".join(flow.carries)]
        if flow.initiator != flow.source:
            parts.append(f"initiator={flow.initiator}")
        if flow.transform is not Transform.NONE:
            parts.append(f"transform={flow.transform.value}")
        lines.append(" ".join(parts))
    for ann in model.aca_annotations:
        parts = ["annotate", ann.target]
        for key, (field_name, _) in _ANNOTATION_KEYS.items():
            parts.append(f"{key}={getattr(ann, field_name).value}")
        lines.append(" ".join(parts))
    for exc in model.exclusions:
        kinds = ",".join(k.value for k in sort_misactors(exc.excluded))
        lines.append(f"exclude {exc.flow} misactor={kinds} reason={_quote(exc.reason)}")
    if model.policy != Policy():
        parts = ["policy"] + [f"{key}={getattr(model.policy, key).value}" for key in _POLICY_KEYS]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
