"""Parser and canonical printer for the cQASM subset exchanged between runtimes.

Grammar (whitespace insignificant, ``#`` comments to end of line, statements
separated by ``;`` or newlines):

    circuit   := "version 1.0" SEP "qubits" INT (SEP statement)*
    statement := GATE1 qubit | ROT qubit "," REAL | GATE2 qubit "," qubit
               | "measure_all"
    qubit     := "q" "[" INT "]"

Gate names are case-insensitive on input and printed in canonical case.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

MAX_QUBITS = 20

GATE1_NAMES = ("H", "X", "Y", "Z", "S", "Sdag", "T", "Tdag")
ROT_NAMES = ("Rx", "Ry", "Rz")
GATE2_NAMES = ("CNOT", "CZ")

_CANONICAL = {n.lower(): n for n in GATE1_NAMES + ROT_NAMES + GATE2_NAMES}


class ParseError(Exception):
    """Base parse error carrying a 1-based (line, column) position."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class CircuitSyntaxError(ParseError):
    pass


class UnknownGate(ParseError):
    pass


class QubitOutOfRange(ParseError):
    pass


class MissingHeader(ParseError):
    pass


class TrailingAfterMeasure(ParseError):
    pass


@dataclass(frozen=True)
class Gate1:
    name: str
    target: int


@dataclass(frozen=True)
class Rot:
    name: str
    target: int
    angle: float


@dataclass(frozen=True)
class Gate2:
    name: str
    control: int
    target: int


@dataclass(frozen=True)
class MeasureAll:
    pass


Statement = Union[Gate1, Rot, Gate2, MeasureAll]


@dataclass(frozen=True)
class Circuit:
    qubits: int
    statements: tuple[Statement, ...]
    version: str = "1.0"

    def __post_init__(self) -> None:
        object.__setattr__(self, "statements", tuple(self.statements))

    @property
    def measures(self) -> bool:
        return bool(self.statements) and isinstance(self.statements[-1], MeasureAll)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[^\S\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<sep>[;\n])
  | (?P<real>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<lbrack>\[)
  | (?P<rbrack>\])
  | (?P<comma>,)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise CircuitSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, col))
        for ch in value:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def _here(self) -> tuple[int, int]:
        if self.pos < len(self.tokens):
            t = self.tokens[self.pos]
            return t.line, t.column
        if self.tokens:
            t = self.tokens[-1]
            return t.line, t.column + len(t.text)
        return 1, 1

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.next()
        if tok is None or tok.kind != kind:
            line, col = (tok.line, tok.column) if tok else self._here()
            found = tok.text if tok else "end of input"
            raise CircuitSyntaxError(f"expected {what}, found {found!r}", line, col)
        return tok

    def skip_separators(self) -> None:
        while (tok := self.peek()) is not None and tok.kind == "sep":
            self.pos += 1

    def expect_separator(self) -> None:
        tok = self.next()
        if tok is None:
            return
        if tok.kind != "sep":
            raise CircuitSyntaxError(
                f"expected ';' or newline, found {tok.text!r}", tok.line, tok.column
            )

    def parse_int(self, what: str) -> tuple[int, _Token]:
        tok = self.expect("real", what)
        try:
            value = int(tok.text)
        except ValueError:
            raise CircuitSyntaxError(f"expected {what}, found {tok.text!r}", tok.line, tok.column)
        return value, tok

    def parse_qubit(self, qubits: int) -> int:
        tok = self.expect("ident", "qubit operand 'q[<int>]'")
        if tok.text.lower() != "q":
            raise CircuitSyntaxError(
                f"expected qubit operand 'q[<int>]', found {tok.text!r}", tok.line, tok.column
            )
        self.expect("lbrack", "'['")
        index, itok = self.parse_int("qubit index")
        self.expect("rbrack", "']'")
        if index < 0 or index >= qubits:
            raise QubitOutOfRange(
                f"qubit index {index} out of range for {qubits} qubits", itok.line, itok.column
            )
        return index


def parse(text: str) -> Circuit:
    """Parse cQASM text into a :class:`Circuit` AST."""
    p = _Parser(_tokenize(text))
    p.skip_separators()

    tok = p.peek()
    if tok is None or tok.kind != "ident" or tok.text.lower() != "version":
        line, col = (tok.line, tok.column) if tok else p._here()
        raise MissingHeader("circuit must start with 'version 1.0'", line, col)
    p.next()
    vtok = p.expect("real", "version number")
    if vtok.text != "1.0":
        raise MissingHeader(f"unsupported version {vtok.text!r}", vtok.line, vtok.column)
    p.expect_separator()
    p.skip_separators()

    tok = p.peek()
    if tok is None or tok.kind != "ident" or tok.text.lower() != "qubits":
        line, col = (tok.line, tok.column) if tok else p._here()
        raise MissingHeader("'qubits <N>' must follow the version header", line, col)
    p.next()
    qubits, qtok = p.parse_int("qubit count")
    if qubits < 1 or qubits > MAX_QUBITS:
        raise CircuitSyntaxError(
            f"qubit count must be 1..{MAX_QUBITS}, got {qubits}", qtok.line, qtok.column
        )

    statements: list[Statement] = []
    measured = False
    while True:
        p.skip_separators()
        tok = p.peek()
        if tok is None:
            break
        if tok.kind != "ident":
            raise CircuitSyntaxError(f"expected statement, found {tok.text!r}", tok.line, tok.column)
        if measured:
            raise TrailingAfterMeasure(
                "no statements allowed after measure_all", tok.line, tok.column
            )
        p.next()
        lowered = tok.text.lower()
        if lowered == "measure_all":
            statements.append(MeasureAll())
            measured = True
        else:
            name = _CANONICAL.get(lowered)
            if name is None:
                raise UnknownGate(f"unknown gate {tok.text!r}", tok.line, tok.column)
            if name in GATE1_NAMES:
                statements.append(Gate1(name, p.parse_qubit(qubits)))
            elif name in ROT_NAMES:
                target = p.parse_qubit(qubits)
                p.expect("comma", "','")
                atok = p.expect("real", "rotation angle")
                angle = float(atok.text)
                if not math.isfinite(angle):
                    raise CircuitSyntaxError(
                        f"rotation angle must be finite, got {atok.text!r}", atok.line, atok.column
                    )
                statements.append(Rot(name, target, angle))
            else:
                control = p.parse_qubit(qubits)
                ctok = p.tokens[p.pos - 1]
                p.expect("comma", "','")
                target = p.parse_qubit(qubits)
                if control == target:
                    raise CircuitSyntaxError(
                        f"{name} control and target must differ", ctok.line, ctok.column
                    )
                statements.append(Gate2(name, control, target))
        tok = p.peek()
        if tok is not None:
            p.expect_separator()

    return Circuit(qubits=qubits, statements=tuple(statements))


def _format_angle(angle: float) -> str:
    # repr() gives the shortest decimal that round-trips through float()
    text = repr(angle)
    return text


def to_text(c: Circuit) -> str:
    """Print a circuit in canonical single-line form; parse(to_text(c)) == c."""
    parts = [f"version {c.version}", f"qubits {c.qubits}"]
    for stmt in c.statements:
        if isinstance(stmt, Gate1):
            parts.append(f"{stmt.name} q[{stmt.target}]")
        elif isinstance(stmt, Rot):
            parts.append(f"{stmt.name} q[{stmt.target}], {_format_angle(stmt.angle)}")
        elif isinstance(stmt, Gate2):
            parts.append(f"{stmt.name} q[{stmt.control}], q[{stmt.target}]")
        else:
            parts.append("measure_all")
    return "; ".join(parts)
