"""A small expression language for real functions of one positive variable.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | factor
    factor := atom ("^" factor)?
    atom   := number | "x" | "pi" | "e" | func "(" args ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``.  Negative exponents need parentheses: ``x^(-2)``.

Functions: ``exp``, ``ln``, ``sqrt``, ``abs`` (one argument),
``indicator(a, b)`` (1 on ``a <= x < b``; bounds may be ``inf``) and
``piecewise((cond, expr), ..., default)`` where each ``cond`` is an interval
membership test such as ``x < 1``, ``1 <= x < 2`` or ``x >= 3``.

Expressions evaluate on numpy arrays.  Calling an expression uses *extended*
semantics: limits such as ``ln(0) = -inf`` and ``1/0 = inf`` are returned as
signed infinities so that integrands can report endpoint blow-up.  The
module-level :func:`eval` is strict and raises instead.  Anything that would
produce NaN raises :class:`DomainError` in both modes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, Union

import numpy as np

from .errors import DomainError, DSLParseError, RangeError

__all__ = [
    "FunctionExpr",
    "Function",
    "Evaluable",
    "parse",
    "eval",
    "derivative",
    "as_function",
    "to_source",
    "DEFAULT_STEP",
]

DEFAULT_STEP = 1e-5
POSITIVE_AXIS = (0.0, math.inf)


# --------------------------------------------------------------------------
# expression tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


@dataclass(frozen=True)
class Interval:
    """Membership test ``lo <(=) x <(=) hi``."""

    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, x):
        lo_ok = x >= self.lo if self.lo_closed else x > self.lo
        hi_ok = x <= self.hi if self.hi_closed else x < self.hi
        return lo_ok & hi_ok


@dataclass(frozen=True)
class Indicator:
    lo: float
    hi: float


@dataclass(frozen=True)
class Piecewise:
    branches: tuple  # tuple[tuple[Interval, Node], ...]
    default: "Node"


Node = Union[Const, Var, Neg, BinOp, Call, Indicator, Piecewise]

UNARY_FUNCS = ("exp", "ln", "sqrt", "abs")


# --------------------------------------------------------------------------
# tokenizer / parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|[-+*/^(),<>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _line_col(source, pos):
    line = source.count("\n", 0, pos) + 1
    col = pos - (source.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _tokenize(source):
    text = source.replace("−", "-")
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = _line_col(source, pos)
            raise DSLParseError(f"unexpected character {text[pos]!r}", line, col, source)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, source):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0

    # helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        line, col = _line_col(self.source, tok.pos)
        return DSLParseError(message, line, col, self.source)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    # grammar
    def parse(self):
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            operand = self.unary()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Neg(operand)
        if self.accept("+"):
            return self.unary()
        return self.factor()

    def factor(self):
        base = self.atom()
        if self.accept("^"):
            if self.tok.kind == "op" and self.tok.text in "+-":
                raise self.error("negative exponents need parentheses, e.g. x^(-2)")
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            self.i += 1
            name = tok.text
            if name == "x":
                return Var()
            if name == "pi":
                return Const(math.pi)
            if name == "e":
                return Const(math.e)
            if name in UNARY_FUNCS:
                return self.unary_call(name, tok)
            if name == "indicator":
                return self.indicator(tok)
            if name == "piecewise":
                return self.piecewise(tok)
            raise self.error(f"unknown identifier {name!r}", tok)
        found = tok.text or "end of input"
        raise self.error(f"unexpected token {found!r}")

    def unary_call(self, name, tok):
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        if len(args) != 1:
            raise self.error(f"{name} takes 1 argument, got {len(args)}", tok)
        return Call(name, args[0])

    def bound(self):
        """A constant expression; ``inf`` is accepted here only."""
        if self.tok.kind == "name" and self.tok.text == "inf":
            self.i += 1
            return math.inf
        if self.tok.kind == "op" and self.tok.text == "-":
            nxt = self.toks[self.i + 1]
            if nxt.kind == "name" and nxt.text == "inf":
                self.i += 2
                return -math.inf
        start = self.tok
        node = self.expr()
        if _depends_on_x(node):
            raise self.error("bound must not depend on x", start)
        return float(_evaluate(node, np.array([1.0]), strict=True)[0])

    def indicator(self, tok):
        self.expect("(")
        args = [self.bound()]
        while self.accept(","):
            args.append(self.bound())
        self.expect(")")
        if len(args) != 2:
            raise self.error(f"indicator takes 2 arguments, got {len(args)}", tok)
        lo, hi = args
        if not lo < hi:
            raise self.error("indicator needs lower bound < upper bound", tok)
        return Indicator(lo, hi)

    def piecewise(self, tok):
        self.expect("(")
        branches = []
        default = None
        while True:
            if self.is_branch_start():
                if default is not None:
                    raise self.error("default value must be the last argument")
                self.expect("(")
                cond = self.condition()
                self.expect(",")
                branches.append((cond, self.expr()))
                self.expect(")")
            else:
                if default is not None:
                    raise self.error("piecewise takes exactly one default value")
                default = self.expr()
            if not self.accept(","):
                break
        self.expect(")")
        if not branches or default is None:
            raise self.error("piecewise needs at least one (condition, value) pair and a default", tok)
        return Piecewise(tuple(branches), default)

    def is_branch_start(self):
        # a branch is "(" ... "<" or ">" ... "," at paren depth 1
        if not (self.tok.kind == "op" and self.tok.text == "("):
            return False
        depth = 0
        for t in self.toks[self.i:]:
            if t.kind == "op" and t.text == "(":
                depth += 1
            elif t.kind == "op" and t.text == ")":
                depth -= 1
                if depth == 0:
                    return False
            elif depth == 1 and t.kind == "op" and t.text in ("<", "<=", ">", ">="):
                return True
            elif depth == 1 and t.kind == "op" and t.text == ",":
                return False
            elif t.kind == "end":
                return False
        return False

    def condition(self):
        start = self.tok
        items = [self.cond_operand()]
        ops = []
        while self.tok.kind == "op" and self.tok.text in ("<", "<=", ">", ">="):
            ops.append(self.tok.text)
            self.i += 1
            items.append(self.cond_operand())
        if not ops or len(ops) > 2:
            raise self.error("condition must be a comparison like 'x < 1' or '0 <= x < 2'", start)
        var_pos = [k for k, it in enumerate(items) if it is None]
        if len(var_pos) != 1:
            raise self.error("condition must mention x exactly once", start)
        k = var_pos[0]
        lo, hi, lo_closed, hi_closed = -math.inf, math.inf, False, False
        for j, op in enumerate(ops):
            left, right = items[j], items[j + 1]
            if op in ("<", "<="):
                closed = op == "<="
                if right is None:  # c < x
                    lo, lo_closed = left, closed
                elif left is None:  # x < c
                    hi, hi_closed = right, closed
                else:
                    raise self.error("comparison must involve x", start)
            else:
                closed = op == ">="
                if right is None:  # c > x
                    hi, hi_closed = left, closed
                elif left is None:  # x > c
                    lo, lo_closed = right, closed
                else:
                    raise self.error("comparison must involve x", start)
        if len(ops) == 2 and k != 1:
            raise self.error("x must sit between the two bounds", start)
        return Interval(lo, hi, lo_closed, hi_closed)

    def cond_operand(self):
        if self.tok.kind == "name" and self.tok.text == "x":
            nxt = self.toks[self.i + 1]
            if nxt.kind == "op" and nxt.text in ("<", "<=", ">", ">=", ","):
                self.i += 1
                return None
        return self.bound()


def _depends_on_x(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Const):
        return False
    if isinstance(node, Neg):
        return _depends_on_x(node.operand)
    if isinstance(node, BinOp):
        return _depends_on_x(node.left) or _depends_on_x(node.right)
    if isinstance(node, Call):
        return _depends_on_x(node.arg)
    return True


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _fail(kind, message, x, mask):
    where = np.asarray(x)[np.asarray(mask)]
    at = f" at x={float(where.flat[0])!r}" if where.size else ""
    return kind(message + at)


def _finite_or_raise(out, inputs, x, strict, what):
    """NaN always raises; in strict mode a new infinity is an overflow."""
    nan = np.isnan(out)
    if nan.any():
        raise _fail(DomainError, f"{what} is undefined", x, nan)
    if strict:
        blew = np.isinf(out)
        for arr in inputs:
            blew &= np.isfinite(arr)
        if blew.any():
            raise _fail(RangeError, f"{what} overflowed", x, blew)
    return out


def _evaluate(node, x, strict):
    if isinstance(node, Const):
        return np.full(x.shape, node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_evaluate(node.operand, x, strict)
    if isinstance(node, Indicator):
        return np.where((x >= node.lo) & (x < node.hi), 1.0, 0.0)
    if isinstance(node, Piecewise):
        out = np.empty(x.shape)
        remaining = np.ones(x.shape, dtype=bool)
        for cond, expr in node.branches:
            sel = remaining & cond.contains(x)
            if sel.any():
                out[sel] = _evaluate(expr, x[sel], strict)
            remaining &= ~sel
        if remaining.any():
            out[remaining] = _evaluate(node.default, x[remaining], strict)
        return out
    if isinstance(node, Call):
        a = _evaluate(node.arg, x, strict)
        with np.errstate(all="ignore"):
            if node.name == "exp":
                return _finite_or_raise(np.exp(a), [a], x, strict, "exp")
            if node.name == "ln":
                bad = a < 0
                if strict:
                    bad = a <= 0
                if bad.any():
                    raise _fail(DomainError, "ln of a non-positive value", x, bad)
                return _finite_or_raise(np.log(a), [], x, False, "ln")
            if node.name == "sqrt":
                if (a < 0).any():
                    raise _fail(DomainError, "sqrt of a negative value", x, a < 0)
                return np.sqrt(a)
            if node.name == "abs":
                return np.abs(a)
        raise AssertionError(node.name)
    if isinstance(node, BinOp):
        return _binop(node, x, strict)
    raise TypeError(f"not an expression node: {node!r}")


def _binop(node, x, strict):
    op = node.op
    if op == "*" and (isinstance(node.left, Indicator) or isinstance(node.right, Indicator)):
        # evaluate the other factor only on the indicator's support
        ind, other = (node.left, node.right) if isinstance(node.left, Indicator) else (node.right, node.left)
        out = np.zeros(x.shape)
        sel = (x >= ind.lo) & (x < ind.hi)
        if sel.any():
            out[sel] = _evaluate(other, x[sel], strict)
        return out
    a = _evaluate(node.left, x, strict)
    b = _evaluate(node.right, x, strict)
    with np.errstate(all="ignore"):
        if op == "+":
            return _finite_or_raise(a + b, [a, b], x, strict, "sum")
        if op == "-":
            return _finite_or_raise(a - b, [a, b], x, strict, "difference")
        if op == "*":
            return _finite_or_raise(a * b, [a, b], x, strict, "product")
        if op == "/":
            zero = b == 0
            if zero.any():
                if (zero & (a == 0)).any():
                    raise _fail(DomainError, "0/0", x, zero & (a == 0))
                if strict:
                    raise _fail(DomainError, "division by zero", x, zero)
            return _finite_or_raise(a / b, [a, b], x, strict, "quotient")
        if op == "^":
            frac = (a < 0) & (b != np.round(b))
            if frac.any():
                raise _fail(DomainError, "negative base with non-integer exponent", x, frac)
            pole = (a == 0) & (b < 0)
            if strict and pole.any():
                raise _fail(DomainError, "zero raised to a negative power", x, pole)
            return _finite_or_raise(np.power(a, b), [a, b], x, strict, "power")
    raise AssertionError(op)


def _breakpoints(node, acc):
    if isinstance(node, Indicator):
        acc.update(v for v in (node.lo, node.hi) if math.isfinite(v))
    elif isinstance(node, Piecewise):
        for cond, expr in node.branches:
            acc.update(v for v in (cond.lo, cond.hi) if math.isfinite(v))
            _breakpoints(expr, acc)
        _breakpoints(node.default, acc)
    elif isinstance(node, Neg):
        _breakpoints(node.operand, acc)
    elif isinstance(node, BinOp):
        _breakpoints(node.left, acc)
        _breakpoints(node.right, acc)
    elif isinstance(node, Call):
        _breakpoints(node.arg, acc)
    return acc


# --------------------------------------------------------------------------
# canonical printer
# --------------------------------------------------------------------------


def _num(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    text = repr(float(v))
    return f"({text})" if v < 0 or text.startswith("-") else text


def _print(node):
    if isinstance(node, Const):
        return _num(node.value)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        return f"(-{_print(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_print(node.left)} {node.op} {_print(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({_print(node.arg)})"
    if isinstance(node, Indicator):
        return f"indicator({_num(node.lo)}, {_num(node.hi)})"
    if isinstance(node, Piecewise):
        parts = [f"({_print_cond(c)}, {_print(e)})" for c, e in node.branches]
        parts.append(_print(node.default))
        return "piecewise(" + ", ".join(parts) + ")"
    raise TypeError(node)


def _print_cond(c):
    out = []
    if math.isfinite(c.lo):
        out.append(f"{_num(c.lo)} {'<=' if c.lo_closed else '<'} ")
    out.append("x")
    if math.isfinite(c.hi):
        out.append(f" {'<=' if c.hi_closed else '<'} {_num(c.hi)}")
    if len(out) == 1:
        return "-inf < x"
    return "".join(out)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


class Evaluable(Protocol):
    """Anything usable as a function of one variable by the numerical modules."""

    breakpoints: tuple

    def __call__(self, x): ...


@dataclass(frozen=True)
class FunctionExpr:
    """Parsed expression; immutable and safe to share between threads."""

    root: Node
    domain: tuple = POSITIVE_AXIS
    source: str = field(default="", compare=False)

    def __call__(self, x):
        """Extended evaluation on scalars or arrays."""
        arr = np.asarray(x, dtype=float)
        out = _evaluate(self.root, np.atleast_1d(arr), strict=False)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    @property
    def breakpoints(self):
        return tuple(sorted(_breakpoints(self.root, set())))

    @property
    def is_constant(self):
        return not _depends_on_x(self.root)

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"FunctionExpr({to_source(self)!r})"


@dataclass(frozen=True)
class Function:
    """Wraps a vectorised Python callable so it can stand in for a FunctionExpr."""

    fn: Callable
    breakpoints: tuple = ()
    label: str = "<callable>"

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(np.atleast_1d(arr)), dtype=float)
        return float(out.reshape(-1)[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def __str__(self):
        return self.label


def parse(source: str, domain=POSITIVE_AXIS) -> FunctionExpr:
    """Parse ``source`` into a :class:`FunctionExpr`.

    Raises :class:`DSLParseError` with line and column on syntax errors,
    unknown identifiers and arity mismatches.
    """
    if not isinstance(source, str):
        raise TypeError("source must be a string")
    root = _Parser(source).parse()
    return FunctionExpr(root, tuple(float(v) for v in domain), source)


def to_source(expr: FunctionExpr) -> str:
    """Canonical, fully parenthesised text that parses back to the same values."""
    return _print(expr.root)


def _in_domain(x, domain):
    lo, hi = domain
    return (x > lo) & (x < hi)


def eval(expr: FunctionExpr, x: float) -> float:  # noqa: A001 - public name by design
    """Strict scalar evaluation: returns a finite float or raises.

    ``DomainError`` for arguments outside the expression's domain or of
    ``ln``/``sqrt``/negative powers; ``RangeError`` on overflow.
    """
    x = float(x)
    if not _in_domain(x, expr.domain):
        raise DomainError(f"x={x!r} outside domain {expr.domain}")
    out = float(_evaluate(expr.root, np.array([x]), strict=True)[0])
    if not math.isfinite(out):
        raise RangeError(f"non-finite value at x={x!r}")
    return out


def derivative(expr, x: float, order: int = 1, step: float = DEFAULT_STEP, domain=None) -> float:
    """Central-difference derivative of order 1 or 2.

    The absolute step is ``step * max(|x|, 1)``.  Raises ``DomainError`` when
    a stencil point leaves the domain.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not step > 0:
        raise ValueError("step must be positive")
    if domain is None:
        domain = getattr(expr, "domain", POSITIVE_AXIS)
    h = step * max(abs(x), 1.0)
    pts = np.array([x - h, x, x + h])
    if not np.all(_in_domain(pts, domain)):
        raise DomainError(f"stencil around x={x!r} with step {h:g} leaves domain {tuple(domain)}")
    if isinstance(expr, FunctionExpr):
        vals = _evaluate(expr.root, pts, strict=True)
    else:
        vals = np.asarray(expr(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise RangeError(f"non-finite value in stencil around x={x!r}")
    if order == 1:
        return float((vals[2] - vals[0]) / (2.0 * h))
    return float((vals[2] - 2.0 * vals[1] + vals[0]) / (h * h))


def as_function(obj, domain=POSITIVE_AXIS):
    """Coerce a source string, FunctionExpr, number or callable to an Evaluable."""
    if isinstance(obj, (FunctionExpr, Function)):
        return obj
    if isinstance(obj, str):
        return parse(obj, domain)
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return FunctionExpr(Const(float(obj)), tuple(domain), repr(float(obj)))
    if callable(obj):
        return Function(obj, tuple(getattr(obj, "breakpoints", ())), getattr(obj, "label", "<callable>"))
    raise TypeError(f"cannot interpret {obj!r} as a function")


def product(*fns: Evaluable, label: str | None = None) -> Function:
    """Pointwise product of evaluables with the union of their breakpoints."""
    def fn(x):
        out = np.ones_like(x)
        with np.errstate(all="ignore"):
            for f in fns:
                out = out * f(x)
        return out
    return Function(fn, merge_breakpoints(*fns), label or " * ".join(map(str, fns)))


def merge_breakpoints(*fns) -> tuple:
    pts: set = set()
    for f in fns:
        pts.update(getattr(f, "breakpoints", ()))
    return tuple(sorted(pts))


def constant_value(fn) -> float | None:
    """The value of a constant FunctionExpr, else None."""
    if isinstance(fn, FunctionExpr) and fn.is_constant:
        return float(_evaluate(fn.root, np.array([1.0]), strict=True)[0])
    return None


def compose(outer: FunctionExpr, inner: FunctionExpr) -> FunctionExpr:
    """Substitute ``inner`` for ``x`` in ``outer``."""

    def sub(node):
        if isinstance(node, Var):
            return inner.root
        if isinstance(node, Neg):
            return Neg(sub(node.operand))
        if isinstance(node, BinOp):
            return BinOp(node.op, sub(node.left), sub(node.right))
        if isinstance(node, Call):
            return Call(node.name, sub(node.arg))
        if isinstance(node, (Indicator, Piecewise)):
            raise ValueError("cannot compose through indicator/piecewise")
        return node

    return FunctionExpr(sub(outer.root), inner.domain)


def ln_of(expr: FunctionExpr) -> FunctionExpr:
    return FunctionExpr(Call("ln", expr.root), expr.domain)


def sample_grid(domain: Sequence[float], n: int, window=(1e-3, 1e3)) -> np.ndarray:
    """Probe points: log-spaced over ``window`` intersected with ``domain``.

    Domains reaching below zero fall back to a linear grid on the clipped window.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if lo >= 0:
        a = max(lo, window[0])
        b = min(hi, window[1])
        if not a < b:
            raise ValueError(f"domain {domain} does not meet the probe window {window}")
        grid = np.geomspace(a, b, n)
    else:
        a = max(lo, -window[1])
        b = min(hi, window[1])
        grid = np.linspace(a, b, n)
    # keep probes strictly inside an open domain
    span = grid[-1] - grid[0]
    if grid[0] <= lo:
        grid[0] = lo + 1e-9 * span
    if grid[-1] >= hi:
        grid[-1] = hi - 1e-9 * span
    return grid
