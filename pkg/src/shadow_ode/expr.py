"""Expression parsing and evaluation for ODE right-hand sides and integrands.

Grammar (standard precedence, ``^`` right-associative, unary minus binds
looser than ``^`` so ``-x^2 == -(x^2)``)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

A vector field is a ``;``-separated list of expressions over ``x`` and the
state variables ``y0 .. y{n-1}`` (scalar problems may also write ``t`` and
``y``).  Each parsed field is compiled once into a plain Python function for
the stepping loop and into a numpy function for array evaluation.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    ArityMismatch,
    DimensionMismatch,
    DomainError,
    ExpressionSyntaxError,
    UnknownIdentifier,
)

UNARY_FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign")
BINARY_FUNCTIONS = ("pow", "min", "max")
CONSTANTS = {"pi": math.pi, "e": math.e}


# --------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Const, Var, Unary, Binary, Call]


def to_text(node: Node) -> str:
    """Fully parenthesized rendering; reparses to an identical tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Const, Var)):
        return node.name
    if isinstance(node, Unary):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    return f"{node.name}({', '.join(to_text(a) for a in node.args)})"


def _walk(node):
    yield node
    if isinstance(node, Unary):
        yield from _walk(node.operand)
    elif isinstance(node, Binary):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _walk(a)


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int  # byte offset into the UTF-8 encoding


def _tokenize(text: str, base_offset: int = 0) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = base_offset
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"unexpected character {text[pos]!r}",
                byte_pos,
                ("number", "identifier", "operator"),
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), byte_pos))
        byte_pos += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind != "op":
            raise ExpressionSyntaxError(
                f"unexpected {self.tok.text or 'end of input'!r}",
                self.tok.offset,
                (repr(text),),
            )
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {self.tok.text!r}",
                self.tok.offset,
                ("operator", "end of input"),
            )
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(t)
            if t.text in self.variables:
                return Var(t.text)
            if t.text in CONSTANTS:
                return Const(t.text)
            raise UnknownIdentifier(t.text, t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected {t.text or 'end of input'!r}",
            t.offset,
            ("number", "identifier", "'('", "'-'"),
        )

    def call(self, name_tok):
        name = name_tok.text
        if name in UNARY_FUNCTIONS:
            arity = 1
        elif name in BINARY_FUNCTIONS:
            arity = 2
        else:
            raise UnknownIdentifier(name, name_tok.offset)
        self.expect("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != arity:
            raise ArityMismatch(name, arity, len(args), name_tok.offset)
        return Call(name, tuple(args))


# --------------------------------------------------------------------------
# public types


def state_names(dim: int) -> tuple[str, ...]:
    return tuple(f"y{i}" for i in range(dim))


def _aliases(dim: int, state: bool) -> dict[str, str]:
    """Map every accepted identifier to its canonical variable name."""
    names = {"x": "x", "t": "x"}
    if state:
        names.update({n: n for n in state_names(dim)})
        if dim == 1:
            names["y"] = "y0"
    return names


@dataclass(frozen=True)
class Expression:
    root: Node
    free_vars: tuple[str, ...]

    def __str__(self):
        return to_text(self.root)


def parse_expression(text: str, variables: Sequence[str] = ("x",), _offset: int = 0) -> Expression:
    """Parse a single expression over the given variable names."""
    tokens = _tokenize(text, _offset)
    root = _Parser(tokens, set(variables)).parse()
    seen = {n.name for n in _walk(root) if isinstance(n, Var)}
    return Expression(root, tuple(v for v in variables if v in seen))


_SCALAR_NS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_tan": math.tan,
    "_exp": math.exp,
    "_log": math.log,
    "_sqrt": math.sqrt,
    "_abs": abs,
    "_sign": lambda v: float((v > 0) - (v < 0)),
    "_pow": math.pow,
    "_min": min,
    "_max": max,
}

_ARRAY_NS = {
    "_sin": np.sin,
    "_cos": np.cos,
    "_tan": np.tan,
    "_exp": np.exp,
    "_log": np.log,
    "_sqrt": np.sqrt,
    "_abs": np.abs,
    "_sign": np.sign,
    "_pow": np.power,
    "_min": np.minimum,
    "_max": np.maximum,
}


def _source(node: Node, names: dict[str, str]) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return repr(CONSTANTS[node.name])
    if isinstance(node, Var):
        return names[node.name]
    if isinstance(node, Unary):
        return f"(-{_source(node.operand, names)})"
    if isinstance(node, Binary):
        left, right = _source(node.left, names), _source(node.right, names)
        if node.op == "^":
            return f"_pow({left}, {right})"
        return f"({left} {node.op} {right})"
    args = ", ".join(_source(a, names) for a in node.args)
    return f"_{node.name}({args})"


def _compile(body: str, params: Sequence[str], namespace: dict) -> Callable:
    src = f"lambda {', '.join(params)}: {body}"
    return eval(compile(src, "<shadow_ode.expr>", "eval"), dict(namespace))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Right-hand side ``F(x, y)`` with ``dim`` components.

    ``state=False`` fields depend on ``x`` only; they describe closed-form
    functions (known solutions, integrands) rather than ODE right-hand sides.
    """

    dim: int
    components: tuple[Expression, ...]
    text: str = ""
    state: bool = True
    declared_vars: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise DimensionMismatch(self.dim, len(self.components))

    def __getstate__(self):
        d = dict(self.__dict__)
        for key in ("_params", "step_function", "component_functions", "_array_function"):
            d.pop(key, None)
        return d

    def __setstate__(self, d):
        self.__dict__.update(d)

    def __repr__(self):
        return f"VectorField({self.text!r}, dim={self.dim})"

    @cached_property
    def _params(self):
        aliases = _aliases(self.dim, self.state)
        params = ["x"] + (list(state_names(self.dim)) if self.state else [])
        return params, aliases

    @cached_property
    def step_function(self) -> Callable:
        """Compiled ``f(x, y0, ..., y{n-1})``; a float for dim 1, else a tuple."""
        params, aliases = self._params
        bodies = [_source(c.root, aliases) for c in self.components]
        body = bodies[0] if self.dim == 1 else "(" + ", ".join(bodies) + ",)"
        return _compile(body, params, _SCALAR_NS)

    @cached_property
    def component_functions(self) -> tuple[Callable, ...]:
        params, aliases = self._params
        return tuple(
            _compile(_source(c.root, aliases), params, _SCALAR_NS) for c in self.components
        )

    @cached_property
    def _array_function(self) -> Callable:
        params, aliases = self._params
        body = "(" + ", ".join(_source(c.root, aliases) for c in self.components) + ",)"
        return _compile(body, params, _ARRAY_NS)

    def evaluate(self, x: float, y: Sequence[float] = ()) -> tuple[float, ...]:
        """Component-wise value at one point.

        Overflow is not an error: the offending components come back as
        ``±inf`` for the caller (blow-up detection) to act on.
        """
        args = (float(x), *map(float, y)) if self.state else (float(x),)
        if self.state and len(args) != self.dim + 1:
            raise DimensionMismatch(self.dim, len(args) - 1)
        try:
            out = self.step_function(*args)
        except OverflowError:
            return tuple(self._overflowing_component(f, args) for f in self.component_functions)
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"{self.text}: {exc}") from None
        return (float(out),) if self.dim == 1 else tuple(map(float, out))

    @staticmethod
    def _overflowing_component(f, args):
        try:
            return float(f(*args))
        except OverflowError:
            return math.inf
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(str(exc)) from None

    def evaluate_array(self, x, ys=None) -> np.ndarray:
        """Evaluate on arrays; returns shape ``(dim, *broadcast shape)``.

        ``ys`` is a sequence of ``dim`` arrays (ignored for x-only fields).
        Points outside the real domain raise DomainError carrying the flat
        index of the first offending point.
        """
        x = np.asarray(x, dtype=float)
        arrays = [x] + ([np.asarray(v, dtype=float) for v in ys] if self.state else [])
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        try:
            with np.errstate(divide="raise", invalid="raise", over="ignore"):
                out = self._array_function(*arrays)
        except FloatingPointError:
            raise self._locate_domain_error(arrays, shape) from None
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in out])

    def _locate_domain_error(self, arrays, shape):
        flat = [np.broadcast_to(a, shape).ravel() for a in arrays]
        for i in range(flat[0].size):
            try:
                self.evaluate(flat[0][i], [a[i] for a in flat[1:]])
            except DomainError as exc:
                return DomainError(str(exc), index=i)
        return DomainError(f"{self.text}: invalid array operation")

    def pretty(self) -> str:
        return "; ".join(str(c) for c in self.components)


def parse(text: str, dim: int, state: bool = True) -> VectorField:
    """Parse ``dim`` semicolon-separated component expressions."""
    if not isinstance(dim, int) or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    aliases = _aliases(dim, state)
    components = []
    byte_offset = 0
    for part in text.split(";"):
        components.append(_canonical(parse_expression(part, tuple(aliases), byte_offset), aliases))
        byte_offset += len(part.encode("utf-8")) + 1
    if len(components) != dim:
        raise DimensionMismatch(dim, len(components))
    declared = ("x",) + (state_names(dim) if state else ())
    return VectorField(dim, tuple(components), text, state, declared)


def _canonical(e: Expression, aliases: dict[str, str]) -> Expression:
    names = []
    for v in e.free_vars:
        c = aliases[v]
        if c not in names:
            names.append(c)
    return Expression(e.root, tuple(names))


def evaluate(field: VectorField, x: float, y: Sequence[float]) -> tuple[float, ...]:
    return field.evaluate(x, y)


def zero_field(dim: int = 1) -> VectorField:
    return parse(";".join(["0"] * dim), dim)
