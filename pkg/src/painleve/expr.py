"""Scalar symbolic expressions over named real coordinates.

Nodes are hash-consed: two structurally equal expressions are the same
Python object, so identity doubles as structural equality and every
traversal can memoize on ``id``.  Traversals are iterative because
operator compositions routinely produce trees deeper than the default
recursion limit.
"""

from __future__ import annotations

import math
import re
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "atan")

_BINARY = ("add", "sub", "mul", "div", "pow")
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_ATOM_PREC = 5
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ExprSyntaxError(ValueError):
    """Malformed source text.  ``offset`` is the 1-based byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class EvaluationError(ArithmeticError):
    """Raised for unbound variables and domain failures during evaluation."""

    def __init__(self, message: str, subexpr: "Expr | None" = None):
        if subexpr is not None:
            message = f"{message} in '{to_string(subexpr)}'"
        super().__init__(message)
        self.subexpr = subexpr


class ExpressionTooLarge(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# node storage

_TABLE: dict = {}
_TABLE_LOCK = threading.Lock()
_budget = threading.local()


class Expr:
    """Immutable interned expression node.

    ``op`` is one of ``const``, ``var``, ``neg``, ``add``, ``sub``, ``mul``,
    ``div``, ``pow`` or ``call``.  ``value`` holds the float of a constant,
    the name of a variable, or the function name of a call.
    """

    __slots__ = ("op", "value", "args", "free", "__weakref__")

    op: str
    value: object
    args: tuple
    free: frozenset

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (parse, (to_string(self),))

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def __repr__(self) -> str:
        return f"Expr({to_string(self)!r})"

    def __str__(self) -> str:
        return to_string(self)

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)


def _node(op: str, value, args: tuple = ()) -> Expr:
    key = (op, value, tuple(id(a) for a in args))
    found = _TABLE.get(key)
    if found is not None:
        return found
    node = object.__new__(Expr)
    object.__setattr__(node, "op", op)
    object.__setattr__(node, "value", value)
    object.__setattr__(node, "args", args)
    if op == "var":
        free = frozenset((value,))
    elif not args:
        free = frozenset()
    elif len(args) == 1 or args[0].free >= args[1].free:
        free = args[0].free
    elif args[1].free >= args[0].free:
        free = args[1].free
    else:
        free = args[0].free | args[1].free
    object.__setattr__(node, "free", free)
    with _TABLE_LOCK:
        found = _TABLE.setdefault(key, node)
    if found is node:
        limit = getattr(_budget, "limit", None)
        if limit is not None:
            _budget.created += 1
            if _budget.created > limit:
                raise ExpressionTooLarge(f"more than {limit} new expression nodes")
    return found


@contextmanager
def node_budget(limit: int):
    """Raise ExpressionTooLarge if more than ``limit`` new nodes are created."""
    previous = (getattr(_budget, "limit", None), getattr(_budget, "created", 0))
    _budget.limit, _budget.created = limit, 0
    try:
        yield
    finally:
        _budget.limit, _budget.created = previous


def const(v: float) -> Expr:
    v = float(v)
    if v == 0.0:
        v = 0.0
    return _node("const", v)


def var(name: str) -> Expr:
    if not _IDENT.match(name) or name in FUNCTIONS:
        raise ValueError(f"invalid variable name {name!r}")
    return _node("var", name)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return const(x)


ZERO = const(0.0)
ONE = const(1.0)


def free_variables(e: Expr) -> frozenset:
    return e.free


# ---------------------------------------------------------------------------
# numeric kernels shared by the interpreter and the compiled path

def _power_value(base: float, k: float) -> float:
    if float(k).is_integer() and abs(k) <= 1e6:
        return base ** int(k)
    if base < 0.0:
        raise ValueError("negative base with non-integer exponent")
    if base == 0.0 and k < 0.0:
        raise ZeroDivisionError("zero to a negative power")
    return math.pow(base, k)


_MATH = {name: getattr(math, name) for name in FUNCTIONS}


def _fold(op: str, fn, *vals) -> Expr | None:
    try:
        if op == "call":
            result = _MATH[fn](vals[0])
        elif op == "neg":
            result = -vals[0]
        elif op == "add":
            result = vals[0] + vals[1]
        elif op == "sub":
            result = vals[0] - vals[1]
        elif op == "mul":
            result = vals[0] * vals[1]
        elif op == "div":
            result = vals[0] / vals[1]
        else:
            result = _power_value(vals[0], vals[1])
    except (ArithmeticError, ValueError):
        return None
    if not math.isfinite(result):
        return None
    return const(result)


# ---------------------------------------------------------------------------
# smart constructors: light rewriting applied as nodes are built

def neg(a: Expr) -> Expr:
    if a.op == "const":
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return _node("neg", None, (a,))


def add(a: Expr, b: Expr) -> Expr:
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if a.op == "const" and b.op == "const":
        return _fold("add", None, a.value, b.value) or _node("add", None, (a, b))
    if b.op == "neg":
        return sub(a, b.args[0])
    if a.op == "neg":
        return sub(b, a.args[0])
    if a is b:
        return mul(const(2.0), a)
    return _node("add", None, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if b is ZERO:
        return a
    if a is ZERO:
        return neg(b)
    if a is b:
        return ZERO
    if a.op == "const" and b.op == "const":
        return _fold("sub", None, a.value, b.value) or _node("sub", None, (a, b))
    if b.op == "neg":
        return add(a, b.args[0])
    return _node("sub", None, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if b.op == "const" and a.op != "const":
        a, b = b, a
    if a.op == "const":
        if b.op == "const":
            return _fold("mul", None, a.value, b.value) or _node("mul", None, (a, b))
        if a.value == -1.0:
            return neg(b)
        if b.op == "mul" and b.args[0].op == "const":
            return mul(const(a.value * b.args[0].value), b.args[1])
        if b.op == "neg":
            return mul(const(-a.value), b.args[0])
    if a.op == "neg" and b.op == "neg":
        return mul(a.args[0], b.args[0])
    if a.op == "neg":
        return neg(mul(a.args[0], b))
    if b.op == "neg":
        return neg(mul(a, b.args[0]))
    if a is b:
        return power(a, const(2.0))
    return _node("mul", None, (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if a is ZERO:
        return ZERO
    if b is ONE:
        return a
    if a is b:
        return ONE
    if a.op == "const" and b.op == "const":
        return _fold("div", None, a.value, b.value) or _node("div", None, (a, b))
    if b.op == "const" and b.value == -1.0:
        return neg(a)
    if a.op == "neg":
        return neg(div(a.args[0], b))
    if b.op == "neg":
        return neg(div(a, b.args[0]))
    return _node("div", None, (a, b))


def power(base: Expr, exponent: Expr) -> Expr:
    if exponent is ZERO:
        return ONE
    if exponent is ONE:
        return base
    if base is ONE:
        return ONE
    if base.op == "const" and exponent.op == "const":
        return _fold("pow", None, base.value, exponent.value) or _node(
            "pow", None, (base, exponent)
        )
    if (
        base.op == "pow"
        and exponent.op == "const"
        and base.args[1].op == "const"
        and float(exponent.value).is_integer()
        and float(base.args[1].value).is_integer()
    ):
        return power(base.args[0], const(exponent.value * base.args[1].value))
    return _node("pow", None, (base, exponent))


def call(name: str, arg: Expr) -> Expr:
    if name not in _MATH:
        raise ValueError(f"unknown function {name!r}")
    if arg.op == "const":
        folded = _fold("call", name, arg.value)
        if folded is not None:
            return folded
    return _node("call", name, (arg,))


def sin(a): return call("sin", as_expr(a))
def cos(a): return call("cos", as_expr(a))
def tan(a): return call("tan", as_expr(a))
def exp(a): return call("exp", as_expr(a))
def log(a): return call("log", as_expr(a))
def sqrt(a): return call("sqrt", as_expr(a))
def sinh(a): return call("sinh", as_expr(a))
def cosh(a): return call("cosh", as_expr(a))
def atan(a): return call("atan", as_expr(a))


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    total = ZERO
    for t in terms:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# traversal

def _postorder(roots: Sequence[Expr]) -> list[Expr]:
    """Every node reachable from ``roots``, children before parents."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def node_count(roots: Expr | Sequence[Expr]) -> int:
    """Number of distinct nodes in the DAG below ``roots``."""
    if isinstance(roots, Expr):
        roots = [roots]
    return len(_postorder(list(roots)))


# ---------------------------------------------------------------------------
# differentiation

_DIFF_CACHE: dict = {}


def _exponent_value(e: Expr) -> float | None:
    if e.op == "const":
        return e.value
    if not e.free:
        return evaluate(e, {})
    return None


def _diff_rule(node: Expr, v: str, d: Callable[[Expr], Expr]) -> Expr:
    op = node.op
    if op == "var":
        return ONE if node.value == v else ZERO
    if op == "const":
        return ZERO
    if op == "neg":
        return neg(d(node.args[0]))
    if op in ("add", "sub"):
        a, b = node.args
        return (add if op == "add" else sub)(d(a), d(b))
    if op == "mul":
        a, b = node.args
        return add(mul(d(a), b), mul(a, d(b)))
    if op == "div":
        a, b = node.args
        return sub(div(d(a), b), div(mul(a, d(b)), power(b, const(2.0))))
    if op == "pow":
        b, e = node.args
        k = _exponent_value(e)
        if k is not None:
            return mul(mul(const(k), power(b, const(k - 1.0))), d(b))
        # variable exponent: b^e = exp(e log b)
        return mul(node, add(mul(d(e), log(b)), div(mul(e, d(b)), b)))
    a = node.args[0]
    da = d(a)
    if da is ZERO:
        return ZERO
    fn = node.value
    if fn == "sin":
        outer = cos(a)
    elif fn == "cos":
        outer = neg(sin(a))
    elif fn == "tan":
        outer = add(ONE, power(node, const(2.0)))
    elif fn == "exp":
        outer = node
    elif fn == "log":
        return div(da, a)
    elif fn == "sqrt":
        return div(da, mul(const(2.0), node))
    elif fn == "sinh":
        outer = cosh(a)
    elif fn == "cosh":
        outer = sinh(a)
    else:  # atan
        return div(da, add(ONE, power(a, const(2.0))))
    return mul(outer, da)


def differentiate(e: Expr, v: str) -> Expr:
    """Exact symbolic partial derivative of ``e`` with respect to ``v``."""
    if v not in e.free:
        return ZERO
    cached = _DIFF_CACHE.get((id(e), v))
    if cached is not None:
        return cached
    local: dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        if v not in node.free:
            return ZERO
        got = local.get(id(node))
        if got is None:
            got = _DIFF_CACHE[(id(node), v)]
        return got

    for node in _postorder([e]):
        if v not in node.free:
            continue
        key = (id(node), v)
        hit = _DIFF_CACHE.get(key)
        if hit is None:
            hit = _diff_rule(node, v, d)
            _DIFF_CACHE[key] = hit
        local[id(node)] = hit
    return local[id(e)]


def gradient(e: Expr, variables: Sequence[str]) -> list[Expr]:
    return [differentiate(e, v) for v in variables]


# ---------------------------------------------------------------------------
# simplification

def _split_coefficient(e: Expr) -> tuple[float, Expr | None]:
    if e.op == "const":
        return e.value, None
    if e.op == "neg":
        c, t = _split_coefficient(e.args[0])
        return -c, t
    if e.op == "mul" and e.args[0].op == "const":
        c, t = _split_coefficient(e.args[1])
        return e.args[0].value * c, t
    return 1.0, e


def _collect(e: Expr, sign: float, into: dict, order: list) -> None:
    stack = [(e, sign)]
    while stack:
        node, s = stack.pop()
        if node.op == "add":
            stack.append((node.args[1], s))
            stack.append((node.args[0], s))
        elif node.op == "sub":
            stack.append((node.args[1], -s))
            stack.append((node.args[0], s))
        elif node.op == "neg":
            stack.append((node.args[0], -s))
        else:
            c, t = _split_coefficient(node)
            key = id(t) if t is not None else None
            if key not in into:
                into[key] = [0.0, t]
                order.append(key)
            into[key][0] += s * c


def _rebuild_sum(e: Expr) -> Expr:
    terms: dict = {}
    order: list = []
    _collect(e, 1.0, terms, order)
    result = ZERO
    constant = 0.0
    for key in order:
        c, t = terms[key]
        if t is None:
            constant += c
        elif c != 0.0:
            piece = mul(const(abs(c)), t)
            result = add(result, piece) if c > 0 else sub(result, piece)
    if constant != 0.0:
        result = add(result, const(constant)) if result is not ZERO else const(constant)
    return result


def _rebuild_product(e: Expr) -> Expr:
    # Flatten a product, pull out the numeric coefficient and put the
    # remaining factors in a canonical order so like terms can meet.
    coefficient = 1.0
    factors: list[Expr] = []
    stack = [e]
    while stack:
        node = stack.pop()
        if node.op == "mul":
            stack.extend(node.args)
        elif node.op == "neg":
            coefficient = -coefficient
            stack.append(node.args[0])
        elif node.op == "const":
            coefficient *= node.value
        else:
            factors.append(node)
    factors.sort(key=to_string)
    product = ONE
    for f in factors:
        product = mul(product, f)
    return mul(const(coefficient), product)


def simplify(e: Expr) -> Expr:
    """Best-effort rewrite: constant folding, 0/1 identities, like terms."""
    done: dict[int, Expr] = {}
    for node in _postorder([e]):
        args = tuple(done[id(a)] for a in node.args)
        op = node.op
        if op in ("const", "var"):
            out = node
        elif op == "neg":
            out = neg(args[0])
        elif op == "add":
            out = add(*args)
        elif op == "sub":
            out = sub(*args)
        elif op == "mul":
            out = mul(*args)
        elif op == "div":
            out = div(*args)
        elif op == "pow":
            out = power(*args)
        else:
            out = call(node.value, args[0])
        if out.op == "mul":
            out = _rebuild_product(out)
        if out.op in ("add", "sub", "neg"):
            out = _rebuild_sum(out)
        done[id(node)] = out
    return done[id(e)]


# ---------------------------------------------------------------------------
# evaluation

def _apply(node: Expr, vals: Sequence[float]) -> float:
    op = node.op
    try:
        if op == "neg":
            return -vals[0]
        if op == "add":
            return vals[0] + vals[1]
        if op == "sub":
            return vals[0] - vals[1]
        if op == "mul":
            return vals[0] * vals[1]
        if op == "div":
            return vals[0] / vals[1]
        if op == "pow":
            return _power_value(vals[0], vals[1])
        return _MATH[node.value](vals[0])
    except ZeroDivisionError:
        raise EvaluationError("division by zero", node) from None
    except OverflowError:
        raise EvaluationError("overflow", node) from None
    except ValueError:
        raise EvaluationError("domain error", node) from None


def evaluate(e: Expr, binding: Mapping[str, float]) -> float:
    """Evaluate ``e`` under ``binding`` (variable name -> value)."""
    vals: dict[int, float] = {}
    for node in _postorder([e]):
        if node.op == "const":
            out = node.value
        elif node.op == "var":
            try:
                out = float(binding[node.value])
            except KeyError:
                raise EvaluationError(f"unbound variable '{node.value}'") from None
        else:
            out = _apply(node, [vals[id(a)] for a in node.args])
        vals[id(node)] = out
    return vals[id(e)]


class CompiledExprs:
    """Several expressions lowered to one straight-line Python function.

    Shared subexpressions are computed once.  Calling with a sequence of
    variable values (ordered as ``variables``) returns a tuple of floats.
    Any arithmetic failure is re-diagnosed through :func:`evaluate` so the
    error names the offending subexpression.
    """

    def __init__(self, exprs: Sequence[Expr], variables: Sequence[str]):
        self.exprs = tuple(exprs)
        self.variables = tuple(variables)
        missing = set().union(*(e.free for e in self.exprs)) - set(self.variables) if self.exprs else set()
        if missing:
            raise EvaluationError(f"unbound variable '{sorted(missing)[0]}'")
        self._fn = self._build()

    def _build(self):
        names: dict[int, str] = {}
        lines = ["def _compiled(_x):"]
        for i, v in enumerate(self.variables):
            lines.append(f"    {_local(v)} = _x[{i}]")
        counter = 0
        for node in _postorder(self.exprs):
            if node.op == "var":
                names[id(node)] = _local(node.value)
                continue
            if node.op == "const":
                names[id(node)] = f"({node.value!r})"
                continue
            a = [names[id(c)] for c in node.args]
            op = node.op
            if op == "neg":
                rhs = f"-{a[0]}"
            elif op in ("add", "sub", "mul", "div"):
                rhs = f"{a[0]} {_PYOP[op]} {a[1]}"
            elif op == "pow":
                k = node.args[1]
                if k.op == "const" and float(k.value).is_integer() and abs(k.value) <= 1e6:
                    rhs = f"{a[0]} ** {int(k.value)}"
                else:
                    rhs = f"_pow({a[0]}, {a[1]})"
            else:
                rhs = f"_{node.value}({a[0]})"
            name = f"t{counter}"
            counter += 1
            lines.append(f"    {name} = {rhs}")
            names[id(node)] = name
        outs = ", ".join(names[id(e)] for e in self.exprs)
        lines.append(f"    return ({outs}{',' if len(self.exprs) == 1 else ''})")
        namespace = {f"_{fn}": f for fn, f in _MATH.items()}
        namespace["_pow"] = _power_value
        exec(compile("\n".join(lines), "<painleve-expr>", "exec"), namespace)
        return namespace["_compiled"]

    def __call__(self, values: Sequence[float]) -> tuple:
        try:
            return self._fn(values)
        except (ArithmeticError, ValueError):
            binding = dict(zip(self.variables, values))
            for e in self.exprs:
                evaluate(e, binding)
            raise

    def at(self, binding: Mapping[str, float]) -> tuple:
        try:
            values = [float(binding[v]) for v in self.variables]
        except KeyError as exc:
            raise EvaluationError(f"unbound variable '{exc.args[0]}'") from None
        return self(values)


_PYOP = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _local(name: str) -> str:
    return f"v_{name}"


_COMPILE_CACHE: dict = {}


def compile_exprs(exprs: Sequence[Expr], variables: Sequence[str]) -> CompiledExprs:
    key = (tuple(id(e) for e in exprs), tuple(variables))
    hit = _COMPILE_CACHE.get(key)
    if hit is None:
        hit = CompiledExprs(exprs, variables)
        if len(_COMPILE_CACHE) > 4096:
            _COMPILE_CACHE.clear()
        _COMPILE_CACHE[key] = hit
    return hit


# ---------------------------------------------------------------------------
# jets

@dataclass(frozen=True)
class Jet:
    """Value and partial derivatives of an expression at a point.

    Partials are keyed by sorted tuples of variable names, so
    ``jet[("x2", "x1")]`` and ``jet[("x1", "x2")]`` are the same entry.
    """

    point: Mapping[str, float]
    value: float
    partials: Mapping[tuple, float] = field(default_factory=dict)
    order: int = 0

    def _key(self, names) -> tuple:
        if isinstance(names, str):
            names = (names,)
        rank = {v: i for i, v in enumerate(self.point)}
        return tuple(sorted(names, key=rank.__getitem__))

    def __getitem__(self, names) -> float:
        return self.partials[self._key(names)]

    def derivative(self, *names: str) -> float:
        return self.partials[self._key(names)]


def multi_indices(variables: Sequence[str], k: int) -> list[tuple]:
    """Non-decreasing index tuples of length 0..k over ``variables``."""
    out: list[tuple] = [()]
    level: list[tuple[tuple, int]] = [((), 0)]
    for _ in range(k):
        nxt = []
        for idx, start in level:
            for j in range(start, len(variables)):
                nxt.append((idx + (variables[j],), j))
        out.extend(i for i, _ in nxt)
        level = nxt
    return out


def derivative_table(e: Expr, variables: Sequence[str], k: int) -> dict[tuple, Expr]:
    table: dict[tuple, Expr] = {(): e}
    for idx in multi_indices(variables, k)[1:]:
        table[idx] = differentiate(table[idx[:-1]], idx[-1])
    return table


def jet_of(e: Expr, p: Mapping[str, float], k: int) -> Jet:
    """All partials of ``e`` up to order ``k`` at the point ``p``."""
    if not 0 <= k <= 4:
        raise ValueError("jet order must be between 0 and 4")
    variables = list(p)
    table = derivative_table(e, variables, k)
    keys = list(table)
    values = compile_exprs([table[i] for i in keys], variables)([float(p[v]) for v in variables])
    partials = dict(zip(keys, values))
    return Jet(point=dict(p), value=partials[()], partials=partials, order=k)


# ---------------------------------------------------------------------------
# printing

def _const_text(v: float) -> str:
    text = repr(float(v))
    if v < 0 or text in ("inf", "nan"):
        return f"({text})"
    return text


def to_string(e: Expr) -> str:
    """Render in the same grammar :func:`parse` accepts."""
    text: dict[int, tuple[str, int]] = {}
    for node in _postorder([e]):
        op = node.op
        if op == "const":
            text[id(node)] = (_const_text(node.value), _ATOM_PREC)
        elif op == "var":
            text[id(node)] = (node.value, _ATOM_PREC)
        elif op == "call":
            text[id(node)] = (f"{node.value}({text[id(node.args[0])][0]})", _ATOM_PREC)
        elif op == "neg":
            s, p = text[id(node.args[0])]
            text[id(node)] = (f"-{s}" if p >= 3 else f"-({s})", 3)
        else:
            prec = _PREC[op]
            (ls, lp), (rs, rp) = text[id(node.args[0])], text[id(node.args[1])]
            if op == "pow":
                left_paren, right_paren = lp <= prec, rp < 3
            else:
                left_paren, right_paren = lp < prec, rp <= prec
            if left_paren:
                ls = f"({ls})"
            if right_paren:
                rs = f"({rs})"
            sep = "^" if op == "pow" else f" {_SYMBOL[op]} "
            text[id(node)] = (f"{ls}{sep}{rs}", prec)
    return text[id(e)][0]


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(source) and source[pos].isspace():
                pos += 1
            if pos >= len(source):
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                raise ExprSyntaxError(f"unexpected character {source[pos]!r}", self._offset(pos))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), self._offset(start)))
            pos = m.end()
        self.tokens.append(("end", "", self._offset(len(source))))
        self.i = 0

    def _offset(self, char_index: int) -> int:
        return len(self.source[:char_index].encode("utf-8")) + 1

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, value, off = self.take()
        if value != text or kind != "op":
            what = "end of input" if kind == "end" else repr(value)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", off)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise ExprSyntaxError("empty expression", self.peek()[2])
        e = self.expression()
        kind, value, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", off)
        return e

    def expression(self) -> Expr:
        left = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.take()[1] == "+" else "sub"
            left = _node(op, None, (left, self.product()))
        return left

    def product(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.take()[1] == "*" else "div"
            left = _node(op, None, (left, self.unary()))
        return left

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            operand = self.unary()
            if operand.op == "const":
                # keeps parse(to_string(e)) == e for negative constants
                return const(-operand.value)
            return _node("neg", None, (operand,))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return _node("pow", None, (base, self.unary()))
        return base

    def atom(self) -> Expr:
        kind, value, off = self.take()
        if kind == "num":
            return const(float(value))
        if kind == "id":
            if self.peek()[:2] == ("op", "("):
                if value not in _MATH:
                    raise UnknownFunctionError(f"unknown function {value!r}", off)
                self.take()
                arg = self.expression()
                self.expect(")")
                return _node("call", value, (arg,))
            if value in _MATH:
                raise ExprSyntaxError(f"function {value!r} needs an argument", off)
            return _node("var", value)
        if (kind, value) == ("op", "("):
            inner = self.expression()
            self.expect(")")
            return inner
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse(source: str) -> Expr:
    """Parse infix source into an Expr without rewriting it."""
    if not isinstance(source, str):
        raise TypeError("parse expects a string")
    return _Parser(source).parse()
