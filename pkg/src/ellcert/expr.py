"""Small arithmetic expression language for problem data.

Nonlinearities f(x, s, xi), boundary weights and data functions are given as
strings in config files.  The grammar is ordinary infix arithmetic with
function-call syntax:

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Variables for a problem in dimension d are x1..xd (space), s (state),
xi1..xid (gradient components) and gnorm (the Euclidean norm of the
gradient slot).  Parsed expressions are immutable and may be evaluated
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownIdentifierError,
)

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "parse_expr",
    "eval_expr",
    "eval_array",
    "to_string",
    "substitute",
    "free_vars",
    "variable_names",
]


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Const | Var | Neg | Bin | Call

# name -> arity
FUNCTIONS = {
    "abs": 1,
    "sign": 1,
    "min": 2,
    "max": 2,
    "exp": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "pospart": 1,
}


def variable_names(dim: int) -> frozenset:
    """Variable names admitted for spatial dimension ``dim``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    names = {f"x{i}" for i in range(1, dim + 1)}
    names |= {f"xi{i}" for i in range(1, dim + 1)}
    names |= {"s", "gnorm"}
    return frozenset(names)


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text: str):
    tokens = []  # (kind, value, position)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad number literal '{text[i:j]}'", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character '{c}'", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, allowed: frozenset):
        self.tokens = tokens
        self.pos = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ExprSyntaxError(f"expected '{kind}', found '{tok[1]}'", tok[2])
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected trailing input '{tok[1]}'", tok[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            e = Bin(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            e = Bin(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, position = self.take()
        if kind == "num":
            return Const(value)
        if kind == "(":
            e = self.expr()
            self.take(")")
            return e
        if kind == "ident":
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, position)
                self.take("(")
                args = [self.expr()]
                while self.peek()[0] == ",":
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                if len(args) != FUNCTIONS[value]:
                    raise ExprSyntaxError(
                        f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}",
                        position,
                    )
                return Call(value, tuple(args))
            if value not in self.allowed:
                raise UnknownIdentifierError(value, position)
            return Var(value)
        raise ExprSyntaxError(f"unexpected token '{value}'", position)


def parse_expr(text: str, dim: int, constants=()) -> Expr:
    """Parse ``text`` into an expression tree for spatial dimension ``dim``.

    ``constants`` names extra identifiers (beyond the dimension's variables)
    that may appear and are bound later via :func:`substitute`.
    """
    allowed = variable_names(dim) | frozenset(constants)
    return _Parser(_tokenize(text), allowed).parse()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _eval(e: Expr, env: dict):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Bin):
        a = _eval(e.lhs, env)
        b = _eval(e.rhs, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0.0):
                raise ExprDomainError("division by zero")
            return a / b
        if e.op == "^":
            a_arr = np.asarray(a, dtype=float)
            b_arr = np.asarray(b, dtype=float)
            if np.any((a_arr < 0.0) & (b_arr != np.floor(b_arr))):
                raise ExprDomainError("negative base with non-integer exponent")
            return np.power(a, b)
        raise AssertionError(e.op)
    if isinstance(e, Call):
        args = [_eval(a, env) for a in e.args]
        fn = e.fn
        if fn == "abs":
            return np.abs(args[0])
        if fn == "sign":
            return np.sign(args[0])
        if fn == "min":
            return np.minimum(args[0], args[1])
        if fn == "max":
            return np.maximum(args[0], args[1])
        if fn == "exp":
            return np.exp(args[0])
        if fn == "sin":
            return np.sin(args[0])
        if fn == "cos":
            return np.cos(args[0])
        if fn == "sqrt":
            if np.any(np.asarray(args[0]) < 0.0):
                raise ExprDomainError("square root of a negative number")
            return np.sqrt(args[0])
        if fn == "pospart":
            return np.maximum(args[0], 0.0)
        raise AssertionError(fn)
    raise TypeError(f"not an expression node: {e!r}")


def eval_expr(e: Expr, env: dict) -> float:
    """Evaluate at a single point.  ``env`` maps variable names to reals."""
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        return float(_eval(e, env))


def eval_array(e: Expr, env: dict) -> np.ndarray:
    """Vectorized evaluation; ``env`` values broadcast as numpy arrays."""
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        out = _eval(e, env)
    return np.asarray(out, dtype=float)


# ---------------------------------------------------------------------------
# printing / substitution
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 2, "^": 3, "atom": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_string(e: Expr) -> str:
    """Render so that re-parsing yields a structurally identical tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < _PREC["neg"] or isinstance(e.arg, Neg):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Bin):
        p = _PREC[e.op]
        left, right = to_string(e.lhs), to_string(e.rhs)
        if e.op == "^":
            # right-associative; also guard a Neg base: -a^b parses as -(a^b)
            if _prec(e.lhs) <= p:
                left = f"({left})"
            if _prec(e.rhs) < p:
                right = f"({right})"
        else:
            if _prec(e.lhs) < p:
                left = f"({left})"
            # '-' and '/' do not associate on the right
            if _prec(e.rhs) < p or (_prec(e.rhs) == p and e.op in ("-", "/")):
                right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def _const(value: float) -> Expr:
    # negative literals are kept as Neg(Const) so printing round-trips
    if value < 0:
        return Neg(Const(-value))
    return Const(value)


def substitute(e: Expr, bindings: dict) -> Expr:
    """Replace named variables by constant values; other nodes are copied."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        if e.name in bindings:
            return _const(float(bindings[e.name]))
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, bindings))
    if isinstance(e, Bin):
        return Bin(e.op, substitute(e.lhs, bindings), substitute(e.rhs, bindings))
    if isinstance(e, Call):
        return Call(e.fn, tuple(substitute(a, bindings) for a in e.args))
    raise TypeError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, Bin):
        return free_vars(e.lhs) | free_vars(e.rhs)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= free_vars(a)
        return out
    raise TypeError(f"not an expression node: {e!r}")


def expr_from_number(value: float) -> Expr:
    """Constant expression, used where configs allow a bare number."""
    return _const(float(value))


def eval_constant(text: str, env: dict) -> float:
    """Parse and evaluate an expression over named constants only.

    Used for config scalars such as ``epsilon = "0.5*lambda1"`` or
    ``L = "0.3*Lmax"``.
    """
    allowed = frozenset(env.keys())
    e = _Parser(_tokenize(text), allowed).parse()
    return eval_expr(e, env)
