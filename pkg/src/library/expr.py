"""Analytic expression language over named chart coordinates and parameters.

Grammar (precedence climbing, `^` binds tightest and is right associative):

    expr     := term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := ('-'|'+') factor | base ('^' exponent)?
    exponent := ['-'|'+'] (number | '(' ['-'|'+'] number ['/' ['-'|'+'] number] ')') ('^' exponent)?
    base     := number | ident | '(' expr ')' | func '(' expr ')'

Exponents are rational literals; a chain a^b^c folds b^c into one rational.
Expressions evaluate to floats or, when coordinates are bound to jets, to
`Jet`s carrying all partial derivatives up to the requested order.
"""

import abc
import dataclasses
import functools
import logging
import math
import re
import typing as T
from decimal import Decimal, InvalidOperation
from fractions import Fraction

import numpy as np

from library.errors import (
    DomainError,
    ExpressionSyntaxError,
    UnboundNameError,
    UnknownIdentifierError,
)
from library.jets import Jet, JetLike, check_order, lift

logger = logging.getLogger(__name__)

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan")


# ============== float versions of the elementary functions ==============


def _float_log(x: float) -> float:
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x}")
    return math.log(x)


def _float_sqrt(x: float) -> float:
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


def _float_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError as e:
        raise DomainError(f"exp overflow at {x}") from e


def _float_tan(x: float) -> float:
    if math.cos(x) == 0.0:
        raise DomainError(f"tan pole at {x}")
    return math.tan(x)


_FLOAT_FUNCTIONS: dict[str, T.Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": _float_tan,
    "exp": _float_exp,
    "log": _float_log,
    "sqrt": _float_sqrt,
    "atan": math.atan,
}

_JET_FUNCTIONS: dict[str, T.Callable[[Jet], Jet]] = {
    "sin": Jet.sin,
    "cos": Jet.cos,
    "tan": Jet.tan,
    "exp": Jet.exp,
    "log": Jet.log,
    "sqrt": Jet.sqrt,
    "atan": Jet.atan,
}


def _float_power(x: float, exponent: Fraction) -> float:
    if exponent.denominator == 1:
        if x == 0.0 and exponent < 0:
            raise DomainError("division by zero")
        return x ** exponent.numerator
    if x < 0.0:
        raise DomainError(f"non-integer power {exponent} of negative value {x}")
    if x == 0.0 and exponent < 0:
        raise DomainError("division by zero")
    return x ** float(exponent)


def _exponent_source(exponent: Fraction) -> str:
    if exponent.denominator == 1:
        if exponent >= 0:
            return str(exponent.numerator)
        return f"({exponent.numerator})"
    return f"({exponent.numerator}/{exponent.denominator})"


# ============== syntax tree ==============


@dataclasses.dataclass(frozen=True)
class _Context:
    coords: T.Sequence[JetLike]
    params: T.Mapping[str, float]


class Node(abc.ABC):
    @abc.abstractmethod
    def evaluate(self, ctx: _Context) -> JetLike: ...

    @abc.abstractmethod
    def to_source(self) -> str: ...

    def children(self) -> tuple["Node", ...]:
        return ()

    def walk(self) -> T.Iterator["Node"]:
        yield self
        for child in self.children():
            yield from child.walk()


@dataclasses.dataclass(frozen=True)
class Constant(Node):
    value: float

    def evaluate(self, ctx: _Context) -> JetLike:
        return self.value

    def to_source(self) -> str:
        text = repr(float(self.value))
        return f"({text})" if text.startswith("-") else text


@dataclasses.dataclass(frozen=True)
class CoordinateRef(Node):
    name: str
    index: int

    def evaluate(self, ctx: _Context) -> JetLike:
        return ctx.coords[self.index]

    def to_source(self) -> str:
        return self.name


@dataclasses.dataclass(frozen=True)
class ParameterRef(Node):
    name: str

    def evaluate(self, ctx: _Context) -> JetLike:
        return ctx.params[self.name]

    def to_source(self) -> str:
        return self.name


@dataclasses.dataclass(frozen=True)
class Negate(Node):
    operand: Node

    def evaluate(self, ctx: _Context) -> JetLike:
        return -self.operand.evaluate(ctx)

    def to_source(self) -> str:
        return f"(-{self.operand.to_source()})"

    def children(self) -> tuple[Node, ...]:
        return (self.operand,)


@dataclasses.dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, ctx: _Context) -> JetLike:
        a = self.left.evaluate(ctx)
        b = self.right.evaluate(ctx)
        try:
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            if isinstance(b, Jet):
                return a / b
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        except DomainError as e:
            if e.node is not None:
                raise
            raise DomainError(e.reason, node=self.to_source()) from e

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"

    def children(self) -> tuple[Node, ...]:
        return (self.left, self.right)


@dataclasses.dataclass(frozen=True)
class Power(Node):
    base: Node
    exponent: Fraction

    def evaluate(self, ctx: _Context) -> JetLike:
        b = self.base.evaluate(ctx)
        try:
            if isinstance(b, Jet):
                return b.power(self.exponent)
            return _float_power(b, self.exponent)
        except DomainError as e:
            if e.node is not None:
                raise
            raise DomainError(e.reason, node=self.to_source()) from e

    def to_source(self) -> str:
        return f"({self.base.to_source()})^{_exponent_source(self.exponent)}"

    def children(self) -> tuple[Node, ...]:
        return (self.base,)


@dataclasses.dataclass(frozen=True)
class FunctionCall(Node):
    name: str
    argument: Node

    def evaluate(self, ctx: _Context) -> JetLike:
        x = self.argument.evaluate(ctx)
        try:
            if isinstance(x, Jet):
                return _JET_FUNCTIONS[self.name](x)
            return _FLOAT_FUNCTIONS[self.name](x)
        except DomainError as e:
            if e.node is not None:
                raise
            raise DomainError(e.reason, node=self.to_source()) from e

    def to_source(self) -> str:
        return f"{self.name}({self.argument.to_source()})"

    def children(self) -> tuple[Node, ...]:
        return (self.argument,)


def _fold(node: Node) -> Node:
    """Replace a node whose children are all constants by its value."""
    children = node.children()
    if not children or not all(isinstance(c, Constant) for c in children):
        return node
    try:
        value = node.evaluate(_Context(coords=(), params={}))
    except (DomainError, OverflowError):
        return node
    if not math.isfinite(value):
        return node
    return Constant(float(value))


# ============== expressions ==============


@dataclasses.dataclass(frozen=True)
class Expression:
    ast: Node
    coords: tuple[str, ...]
    params: tuple[str, ...]
    source: str = dataclasses.field(default="", compare=False)

    @property
    def free_coords(self) -> tuple[str, ...]:
        used = {n.name for n in self.ast.walk() if isinstance(n, CoordinateRef)}
        return tuple(c for c in self.coords if c in used)

    @property
    def free_params(self) -> tuple[str, ...]:
        used = {n.name for n in self.ast.walk() if isinstance(n, ParameterRef)}
        return tuple(p for p in self.params if p in used)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.ast, Constant)

    def to_source(self) -> str:
        return self.ast.to_source()

    def __str__(self) -> str:
        return self.to_source()


# ============== tokenizer and parser ==============

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)
_WHITESPACE_RE = re.compile(r"\s*")

_BINARY_POWER = {"+": 10, "-": 10, "*": 20, "/": 20}
_UNARY_POWER = 25


@dataclasses.dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    position: int


def tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        ws = _WHITESPACE_RE.match(source, pos)
        pos = ws.end() if ws else pos
        if pos >= len(source):
            break
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            raise ExpressionSyntaxError(f"Unexpected character {source[pos]!r}", pos)
        kind = match.lastgroup
        assert kind is not None
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


def _to_fraction(text: str, position: int) -> Fraction:
    try:
        return Fraction(Decimal(text))
    except (InvalidOperation, ValueError) as e:
        raise ExpressionSyntaxError(f"Invalid number {text!r}", position) from e


class _Parser:
    def __init__(self, source: str, coords: tuple[str, ...], params: tuple[str, ...]):
        self.source = source
        self.coords = {name: i for i, name in enumerate(coords)}
        self.params = set(params)
        self.tokens = tokenize(source)
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        if token.kind != "end":
            self.index += 1
        return token

    def fail(self, token: _Token, expected: T.Sequence[str]) -> T.NoReturn:
        what = "end of input" if token.kind == "end" else f"token {token.text!r}"
        raise ExpressionSyntaxError(f"Unexpected {what}", token.position, expected)

    def expect_op(self, text: str) -> _Token:
        token = self.advance()
        if token.kind != "op" or token.text != text:
            self.fail(token, [repr(text)])
        return token

    def parse(self) -> Node:
        node = self.expression(0)
        token = self.peek()
        if token.kind != "end":
            self.fail(token, ["'+'", "'-'", "'*'", "'/'", "'^'", "end of input"])
        return node

    def expression(self, rbp: int) -> Node:
        left = self.factor()
        while True:
            token = self.peek()
            power = _BINARY_POWER.get(token.text) if token.kind == "op" else None
            if power is None or power <= rbp:
                return left
            self.advance()
            right = self.expression(power)
            left = _fold(BinaryOp(token.text, left, right))

    def factor(self) -> Node:
        token = self.peek()
        if token.kind == "op" and token.text in ("-", "+"):
            self.advance()
            operand = self.expression(_UNARY_POWER)
            return _fold(Negate(operand)) if token.text == "-" else operand
        base = self.base()
        token = self.peek()
        if token.kind == "op" and token.text == "^":
            self.advance()
            return _fold(Power(base, self.exponent()))
        return base

    def _signed_number(self) -> Fraction:
        sign = 1
        token = self.peek()
        if token.kind == "op" and token.text in ("-", "+"):
            self.advance()
            sign = -1 if token.text == "-" else 1
        token = self.advance()
        if token.kind != "number":
            self.fail(token, ["number"])
        return sign * _to_fraction(token.text, token.position)

    def exponent(self) -> Fraction:
        token = self.peek()
        sign = 1
        if token.kind == "op" and token.text in ("-", "+"):
            self.advance()
            sign = -1 if token.text == "-" else 1
            token = self.peek()
        if token.kind == "number":
            self.advance()
            value = _to_fraction(token.text, token.position)
        elif token.kind == "op" and token.text == "(":
            self.advance()
            value = self._signed_number()
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "/":
                self.advance()
                denominator = self._signed_number()
                if denominator == 0:
                    raise ExpressionSyntaxError("Zero denominator in exponent", nxt.position)
                value = value / denominator
            self.expect_op(")")
        else:
            self.fail(token, ["number", "'('", "'-'"])
        value = sign * value
        token = self.peek()
        if token.kind == "op" and token.text == "^":
            self.advance()
            inner = self.exponent()
            if inner.denominator != 1:
                raise ExpressionSyntaxError(
                    "Chained exponent must fold to a rational literal", token.position
                )
            if value == 0 and inner < 0:
                raise ExpressionSyntaxError("Zero raised to a negative power", token.position)
            value = value ** inner.numerator
        return value

    def base(self) -> Node:
        token = self.advance()
        if token.kind == "number":
            return Constant(float(token.text))
        if token.kind == "ident":
            name = token.text
            if name in FUNCTIONS:
                self.expect_op("(")
                argument = self.expression(0)
                self.expect_op(")")
                return _fold(FunctionCall(name, argument))
            if name in self.coords:
                return CoordinateRef(name, self.coords[name])
            if name in self.params:
                return ParameterRef(name)
            raise UnknownIdentifierError(name, token.position)
        if token.kind == "op" and token.text == "(":
            node = self.expression(0)
            self.expect_op(")")
            return node
        self.fail(token, ["number", "identifier", "'('"])


@functools.lru_cache(maxsize=4096)
def _parse_cached(source: str, coords: tuple[str, ...], params: tuple[str, ...]) -> Expression:
    overlap = (set(coords) & set(params)) | (set(coords + params) & set(FUNCTIONS))
    if overlap:
        msg = f"Names declared twice or shadowing functions: {sorted(overlap)}"
        raise ValueError(msg)
    if len(set(coords)) != len(coords) or len(set(params)) != len(params):
        raise ValueError(f"Duplicate names in coords={coords} or params={params}")
    ast = _Parser(source, coords, params).parse()
    return Expression(ast=ast, coords=coords, params=params, source=source)


def parse(source: str, coords: T.Sequence[str], params: T.Sequence[str] = ()) -> Expression:
    return _parse_cached(source, tuple(coords), tuple(params))


# ============== evaluation ==============


def _point_values(expr: Expression, point: T.Mapping[str, float] | T.Sequence[float]) -> list[float]:
    if isinstance(point, T.Mapping):
        missing = [c for c in expr.coords if c not in point]
        if missing:
            raise UnboundNameError(f"Unbound coordinates: {missing}")
        return [float(point[c]) for c in expr.coords]
    values = [float(v) for v in np.asarray(point, dtype=float).ravel()]
    if len(values) != len(expr.coords):
        msg = f"Point has {len(values)} values, expression declares {len(expr.coords)} coordinates"
        raise UnboundNameError(msg)
    return values


def _check_params(expr: Expression, params: T.Mapping[str, float]) -> dict[str, float]:
    missing = [p for p in expr.free_params if p not in params]
    if missing:
        raise UnboundNameError(f"Unbound parameters: {missing}")
    return {name: float(params[name]) for name in expr.free_params}


def eval_jet(
    expr: Expression,
    point: T.Mapping[str, float] | T.Sequence[float],
    params: T.Mapping[str, float] | None = None,
    order: int = 0,
) -> Jet:
    """Jet of `expr` at `point`, in the variables `expr.coords`."""
    check_order(order)
    values = _point_values(expr, point)
    bound = _check_params(expr, params or {})
    dim = len(expr.coords)
    coords = [Jet.variable(dim, order, i, v) for i, v in enumerate(values)]
    try:
        result = lift(expr.ast.evaluate(_Context(coords=coords, params=bound)), dim, order)
    except DomainError as e:
        at = dict(zip(expr.coords, values))
        raise DomainError(e.reason, node=e.node, point=at) from e
    if not np.all(np.isfinite(result.coeffs)):
        at = dict(zip(expr.coords, values))
        raise DomainError("non-finite value", node=expr.to_source(), point=at)
    return result


def evaluate(
    expr: Expression,
    bindings: T.Mapping[str, JetLike],
    params: T.Mapping[str, float] | None = None,
) -> JetLike:
    """Evaluate with coordinates bound to floats or jets (for composition)."""
    missing = [c for c in expr.free_coords if c not in bindings]
    if missing:
        raise UnboundNameError(f"Unbound coordinates: {missing}")
    coords = [bindings.get(c, 0.0) for c in expr.coords]
    return expr.ast.evaluate(_Context(coords=coords, params=_check_params(expr, params or {})))
