"""Expression grammar and the ``.hjs`` system-description format.

Grammar (Pratt parser)::

    expr    := expr ('+'|'-') expr | expr ('*'|'/') expr | '-' expr
             | expr '^' expr        (right associative, binds tighter than unary minus)
             | NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Numbers are integers or decimals; ``p/q`` is ordinary division and folds to
an exact rational.  Implicit multiplication is rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .canontrans import Transformation
from .symexpr import (
    ELEMENTARY,
    Expr,
    Func,
    Num,
    Sym,
    SymbolicError,
    SymbolTable,
    free_symbols,
    power,
    simplify,
    velocity_name,
)
from .symexpr.symbols import TIME_NAME


class ParseError(ValueError):
    """Syntax or validation error; ``offset`` is a 1-based byte offset."""

    def __init__(self, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        self.message = message
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} at {', '.join(where)}" if where else message)


# -- lexer ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>\d+(?:\.\d*)?|\.\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*'*)"
    r"|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, end
    text: str
    offset: int  # 1-based byte offset


def tokenize(src: str) -> List[Token]:
    out = []
    pos = 0
    raw = src.encode("utf-8", errors="surrogatepass")
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            offset = len(src[:pos].encode("utf-8", errors="surrogatepass")) + 1
            raise ParseError(f"unexpected character {src[pos]!r}", offset)
        if m.lastgroup != "ws":
            offset = len(src[:pos].encode("utf-8", errors="surrogatepass")) + 1
            out.append(Token(m.lastgroup, m.group(), offset))
        pos = m.end()
    out.append(Token("end", "", len(raw) + 1))
    return out


# -- parser ----------------------------------------------------------------------------

_BINARY = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (31, 30)}
_UNARY_BP = 25


class _Parser:
    def __init__(self, src: str, table: Optional[SymbolTable], functions: Optional[Dict[str, int]]):
        self.tokens = tokenize(src)
        self.i = 0
        self.table = table
        if functions is None and table is not None:
            functions = dict(table.arity)
        self.functions = functions or {}

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", tok.offset)
        return tok

    def parse(self) -> Expr:
        e = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.offset)
        return e

    def expr(self, min_bp: int) -> Expr:
        lhs = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind == "end" or tok.text in (")", ","):
                break
            if tok.kind != "op" or tok.text not in _BINARY:
                raise ParseError(f"unexpected {tok.text!r} (implicit multiplication is not allowed)",
                                 tok.offset)
            lbp, rbp = _BINARY[tok.text]
            if lbp < min_bp:
                break
            self.next()
            rhs = self.expr(rbp)
            lhs = self.combine(tok, lhs, rhs)
        return lhs

    def combine(self, tok: Token, lhs: Expr, rhs: Expr) -> Expr:
        op = tok.text
        if op == "+":
            return lhs + rhs
        if op == "-":
            return lhs - rhs
        if op == "*":
            return lhs * rhs
        if op == "/":
            return lhs / rhs
        try:
            return power(lhs, rhs)
        except SymbolicError as exc:
            raise ParseError(str(exc), tok.offset) from None

    def prefix(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            return Num(Fraction(tok.text))
        if tok.kind == "op" and tok.text in "+-":
            operand = self.expr(_UNARY_BP)
            return -operand if tok.text == "-" else operand
        if tok.kind == "op" and tok.text == "(":
            e = self.expr(0)
            self.expect(")")
            return e
        if tok.kind == "ident":
            if self.peek().text == "(":
                return self.call(tok)
            return self.symbol(tok)
        found = tok.text or "end of input"
        raise ParseError(f"unexpected {found!r}", tok.offset)

    def symbol(self, tok: Token) -> Expr:
        name = tok.text
        if "'" in name:
            raise ParseError(f"derivative mark on non-function {name!r}", tok.offset)
        if name in ELEMENTARY or name in self.functions:
            raise ParseError(f"function {name!r} used without argument", tok.offset)
        if self.table is not None and name not in self.table:
            raise ParseError(f"unknown identifier {name}", tok.offset)
        return Sym(name)

    def call(self, tok: Token) -> Expr:
        base = tok.text.rstrip("'")
        order = len(tok.text) - len(base)
        if base in ELEMENTARY:
            if order:
                raise ParseError(f"derivative mark on elementary function {base}", tok.offset)
            arity = 1
        elif base in self.functions:
            arity = self.functions[base]
        else:
            raise ParseError(f"unknown function {base}", tok.offset)
        self.expect("(")
        args = [self.expr(0)]
        while self.peek().text == ",":
            self.next()
            args.append(self.expr(0))
        close = self.expect(")")
        if len(args) != arity:
            raise ParseError(f"{base} expects {arity} argument(s), got {len(args)}", close.offset)
        if arity != 1:
            raise ParseError(f"only unary functions are supported ({base})", tok.offset)
        return Func(base, args[0], order)


def parse_expression(src: str, table: Optional[SymbolTable] = None,
                     functions: Optional[Dict[str, int]] = None) -> Expr:
    """Parse ``src`` into a normalized expression.

    With a symbol table, every identifier must be declared there.
    """
    raw = _Parser(src, table, functions).parse()
    try:
        return simplify(raw)
    except SymbolicError as exc:
        raise ParseError(str(exc)) from None


# -- system files --------------------------------------------------------------------

@dataclass
class SystemSpec:
    name: str
    coordinates: List[str]
    lagrangian: Expr
    constants: Dict[str, Optional[Fraction]]
    table: SymbolTable
    functions: Dict[str, int] = field(default_factory=dict)
    transformations: Dict[str, Transformation] = field(default_factory=dict)
    parameters: Optional[Tuple[str, ...]] = None
    lagrangian_source: str = ""

    @property
    def n(self) -> int:
        return len(self.coordinates)

    def constant_values(self) -> Dict[str, Fraction]:
        return {k: v for k, v in self.constants.items() if v is not None}


_SYSTEM_KEYS = {"name", "coordinates", "lagrangian", "potential", "parameters"}
_POTENTIAL = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*(\d+)\s*\)")


def _split_line(line: str):
    if "=" not in line:
        return line.strip(), None
    k, v = line.split("=", 1)
    return k.strip(), v.strip()


def parse_system(text: str) -> SystemSpec:
    """Parse and validate the contents of a ``.hjs`` file."""
    sections: Dict[str, List[Tuple[int, str, Optional[str]]]] = {}
    order: List[str] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("malformed section header", line=lineno)
            current = " ".join(line[1:-1].split())
            if current in sections:
                raise ParseError(f"duplicate section [{current}]", line=lineno)
            sections[current] = []
            order.append(current)
            continue
        if current is None:
            raise ParseError("content before first section", line=lineno)
        sections[current].append((lineno, *_split_line(line)))

    for s in order:
        if s not in ("system", "constants") and not s.startswith("transformation "):
            raise ParseError(f"unknown section [{s}]")
    if "system" not in sections:
        raise ParseError("missing required section [system]")

    sysvals: Dict[str, Tuple[int, str]] = {}
    functions: Dict[str, int] = {}
    for lineno, key, value in sections["system"]:
        if value is None and key.startswith("potential "):
            key, value = "potential", key[len("potential "):].strip()
        if key not in _SYSTEM_KEYS:
            raise ParseError(f"unknown key {key!r} in [system]", line=lineno)
        if value is None:
            raise ParseError(f"missing value for {key!r}", line=lineno)
        if key == "potential":
            for m in re.finditer(r"[^\s,]+(?:\s*\(\s*\d+\s*\))?", value):
                pm = _POTENTIAL.fullmatch(m.group())
                if pm is None:
                    raise ParseError(f"malformed potential declaration {m.group()!r}", line=lineno)
                if int(pm.group(2)) != 1:
                    raise ParseError("only unary potentials are supported", line=lineno)
                functions[pm.group(1)] = int(pm.group(2))
            continue
        if key in sysvals:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        sysvals[key] = (lineno, value)
    for key in ("coordinates", "lagrangian"):
        if key not in sysvals:
            raise ParseError(f"missing required key {key!r} in [system]")

    coords = sysvals["coordinates"][1].split()
    if not coords:
        raise ParseError("at least one coordinate is required", line=sysvals["coordinates"][0])
    if len(set(coords)) != len(coords):
        dup = next(c for c in coords if coords.count(c) > 1)
        raise ParseError(f"duplicate coordinate {dup}", line=sysvals["coordinates"][0])
    for c in coords:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", c):
            raise ParseError(f"invalid coordinate name {c!r}", line=sysvals["coordinates"][0])
        if c.endswith("_dot"):
            raise ParseError(f"velocity {c} may not be declared as a coordinate",
                             line=sysvals["coordinates"][0])

    constants: Dict[str, Optional[Fraction]] = {}
    for lineno, key, value in sections.get("constants", []):
        if key in constants:
            raise ParseError(f"duplicate constant {key}", line=lineno)
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
            raise ParseError(f"invalid constant name {key!r}", line=lineno)
        if value:
            try:
                constants[key] = Fraction(value)
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"constant {key} must be rational, got {value!r}", line=lineno) from None
        else:
            constants[key] = None

    try:
        table = SymbolTable.build(coords, constants=list(constants), functions=functions)
    except ValueError as exc:
        raise ParseError(str(exc), line=sysvals["coordinates"][0]) from None

    lineno, lsrc = sysvals["lagrangian"]
    allowed = {TIME_NAME} | set(coords) | {velocity_name(c) for c in coords} | set(constants)
    try:
        raw = _Parser(lsrc, None, functions).parse()
    except ParseError as exc:
        raise ParseError(exc.message, exc.offset, lineno) from None
    for name in sorted(free_symbols(raw)):
        if name not in allowed:
            raise ParseError(f"undeclared symbol {name}", line=lineno)
    lagrangian = simplify(raw)

    parameters = None
    if "parameters" in sysvals:
        plineno, pval = sysvals["parameters"]
        parameters = tuple(pval.split())
        for p in parameters:
            if p not in coords:
                raise ParseError(f"parameter {p} is not a coordinate", line=plineno)

    transformations = {}
    for s in order:
        if s.startswith("transformation "):
            tname = s.split(" ", 1)[1]
            transformations[tname] = _parse_transformation(tname, sections[s], table, constants, functions)

    return SystemSpec(
        name=sysvals.get("name", (0, "system"))[1],
        coordinates=coords,
        lagrangian=lagrangian,
        constants=constants,
        table=table,
        functions=functions,
        transformations=transformations,
        parameters=parameters,
        lagrangian_source=lsrc,
    )


def _parse_transformation(name, lines, old: SymbolTable, constants, functions) -> Transformation:
    meta: Dict[str, Tuple[int, str]] = {}
    subs_src: List[Tuple[int, str, str]] = []
    old_names = set(old.coordinates) | set(old.momenta)
    for lineno, key, value in lines:
        if value is None:
            raise ParseError(f"missing value for {key!r}", line=lineno)
        if key in ("new", "params", "momenta"):
            if key in meta:
                raise ParseError(f"duplicate key {key!r}", line=lineno)
            meta[key] = (lineno, value)
        elif key in old_names:
            if any(k == key for _, k, _ in subs_src):
                raise ParseError(f"duplicate substitution for {key}", line=lineno)
            subs_src.append((lineno, key, value))
        else:
            raise ParseError(f"unknown key {key!r} in [transformation {name}]", line=lineno)
    if "new" not in meta:
        raise ParseError(f"missing required key 'new' in [transformation {name}]")
    new = meta["new"][1].split()
    params = meta["params"][1].split() if "params" in meta else []
    for p in params:
        if p not in new:
            raise ParseError(f"parameter {p} is not a new coordinate", line=meta["params"][0])
    momenta = meta["momenta"][1].split() if "momenta" in meta else [f"P_{c}" for c in new]
    if len(momenta) != len(new):
        raise ParseError("momenta must match new coordinates", line=meta["momenta"][0])
    try:
        table = SymbolTable.build(new, constants=list(constants), functions=functions, momenta=momenta,
                                  with_velocities=False)
    except ValueError as exc:
        raise ParseError(str(exc), line=meta["new"][0]) from None
    subs = {}
    for lineno, key, value in subs_src:
        try:
            subs[key] = parse_expression(value, table)
        except ParseError as exc:
            raise ParseError(exc.message, exc.offset, lineno) from None
    return Transformation(name=name, new_coordinates=new, parameters=params, momenta=momenta,
                          substitutions=subs)
