"""Expression language for dynamics, region predicates, and noise densities.

Recursive-descent parser over a fixed identifier set:

  dynamics     x1..xn, u1..um, w1..wp
  densities    y1..yn (integration point), m1..mn (mean)
  predicates   x1..xn only

Arithmetic grammar (EBNF, the contract for config files):

  orexpr   = andexpr , { "|" , andexpr } ;
  andexpr  = notexpr , { "&" , notexpr } ;
  notexpr  = "!" , notexpr | "(" , orexpr , ")" | compare ;
  compare  = sum , ( "<=" | ">=" | "<" | ">" | "==" ) , sum ;
  sum      = product , { ( "+" | "-" ) , product } ;
  product  = unary , { ( "*" | "/" ) , unary } ;
  unary    = "-" , unary | power ;
  power    = atom , [ "^" , unary ]              (* right-associative *)
  atom     = number | ident | func , "(" , orexpr { "," , orexpr } , ")"
           | "(" , sum , ")" ;

"^" binds tighter than unary minus, which binds tighter than "*"/"/", which
bind tighter than "+"/"-"; all binary operators are left-associative except
"^".  Angle functions work in radians.

Evaluation is numpy-vectorized: variables may be bound to arrays of a common
shape and the expression broadcasts over them.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import EvalError, ParseError

__all__ = ["Expr", "PredicateExpr", "DynamicsSpec", "parse_expression",
           "parse_predicate", "parse_density"]

_FUNCS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "tan": (np.tan, 1),
    "atan": (np.arctan, 1),
    "asin": (np.arcsin, 1),
    "acos": (np.arccos, 1),
    "sqrt": (np.sqrt, 1),
    "exp": (np.exp, 1),
    "log": (np.log, 1),
    "abs": (np.abs, 1),
    "min": (np.minimum, 2),
    "max": (np.maximum, 2),
}

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<cmp><=|>=|==|<|>)
  | (?P<op>[-+*/^&|!(),])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", offset=pos)
        if m.lastgroup == "num":
            tokens.append(("num", m.group(), pos))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group(), pos))
        elif m.lastgroup == "cmp":
            tokens.append(("cmp", m.group(), pos))
        elif m.lastgroup == "op":
            tokens.append((m.group(), m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


# --- AST ---------------------------------------------------------------

class _Node:
    def compile(self):
        raise NotImplementedError

    def unparse(self):
        raise NotImplementedError

    def variables(self):
        out = set()
        self._collect(out)
        return out

    def _collect(self, out):
        pass

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash(self.unparse())

    def __repr__(self):
        return f"{type(self).__name__}({self.unparse()})"


class Num(_Node):
    def __init__(self, value):
        self.value = float(value)

    def compile(self):
        v = self.value
        return lambda env: v

    def unparse(self):
        return repr(self.value)


class Var(_Node):
    def __init__(self, name):
        self.name = name

    def compile(self):
        n = self.name
        return lambda env: env[n]

    def unparse(self):
        return self.name

    def _collect(self, out):
        out.add(self.name)


class Neg(_Node):
    def __init__(self, arg):
        self.arg = arg

    def compile(self):
        f = self.arg.compile()
        return lambda env: -f(env)

    def unparse(self):
        return f"(-{self.arg.unparse()})"

    def _collect(self, out):
        self.arg._collect(out)


class Bin(_Node):
    _OPS = {"+": np.add, "-": np.subtract, "*": np.multiply,
            "/": np.true_divide, "^": np.power}

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def compile(self):
        fn = self._OPS[self.op]
        fl = self.left.compile()
        fr = self.right.compile()
        return lambda env: fn(fl(env), fr(env))

    def unparse(self):
        return f"({self.left.unparse()} {self.op} {self.right.unparse()})"

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)


class Call(_Node):
    def __init__(self, name, args):
        self.name = name
        self.args = args

    def compile(self):
        fn = _FUNCS[self.name][0]
        compiled = [a.compile() for a in self.args]
        if len(compiled) == 1:
            fa = compiled[0]
            return lambda env: fn(fa(env))
        fa, fb = compiled
        return lambda env: fn(fa(env), fb(env))

    def unparse(self):
        return f"{self.name}({', '.join(a.unparse() for a in self.args)})"

    def _collect(self, out):
        for a in self.args:
            a._collect(out)


class Cmp(_Node):
    _OPS = {"<=": np.less_equal, ">=": np.greater_equal, "<": np.less,
            ">": np.greater, "==": np.equal}

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def compile(self):
        fn = self._OPS[self.op]
        fl = self.left.compile()
        fr = self.right.compile()
        return lambda env: fn(fl(env), fr(env))

    def unparse(self):
        return f"({self.left.unparse()} {self.op} {self.right.unparse()})"

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)


class BoolBin(_Node):
    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def compile(self):
        fn = np.logical_and if self.op == "&" else np.logical_or
        fl = self.left.compile()
        fr = self.right.compile()
        return lambda env: fn(fl(env), fr(env))

    def unparse(self):
        return f"({self.left.unparse()} {self.op} {self.right.unparse()})"

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)


class Not(_Node):
    def __init__(self, arg):
        self.arg = arg

    def compile(self):
        f = self.arg.compile()
        return lambda env: np.logical_not(f(env))

    def unparse(self):
        return f"(!{self.arg.unparse()})"

    def _collect(self, out):
        self.arg._collect(out)


# --- Wrappers -----------------------------------------------------------

class Expr:
    """A parsed arithmetic expression with vectorized evaluation."""

    def __init__(self, node, allowed):
        self._node = node
        self._allowed = allowed
        self._fn = node.compile()

    def evaluate_env(self, env):
        """Evaluate with env mapping variable names to scalars/arrays.

        No domain-error checking; non-finite values pass through (callers on
        hot paths check once at the end).
        """
        with np.errstate(all="ignore"):
            return self._fn(env)

    def evaluate(self, env):
        """Checked scalar/array evaluation; raises EvalError on domain errors."""
        out = self.evaluate_env(env)
        if not np.all(np.isfinite(out)):
            raise EvalError(f"domain error evaluating {self.unparse()!r}")
        return out

    def variables(self):
        return self._node.variables()

    def unparse(self):
        return self._node.unparse()

    def __eq__(self, other):
        return isinstance(other, Expr) and self._node == other._node

    def __repr__(self):
        return f"Expr({self.unparse()})"

    def __getstate__(self):
        # Compiled closures do not pickle; rebuild on load.
        return {"_node": self._node, "_allowed": self._allowed}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._fn = self._node.compile()


class PredicateExpr:
    """A parsed boolean expression over state coordinates x1..xn."""

    def __init__(self, node, allowed):
        self._node = node
        self._allowed = allowed
        self._fn = node.compile()

    def evaluate_env(self, env):
        with np.errstate(all="ignore"):
            return self._fn(env)

    def evaluate(self, x):
        """Evaluate at a single state vector; returns a bool."""
        x = np.asarray(x, dtype=float)
        env = {f"x{d + 1}": x[d] for d in range(len(x))}
        try:
            out = self.evaluate_env(env)
        except KeyError as exc:
            raise EvalError(f"unbound variable {exc} at point {x.tolist()}")
        return bool(out)

    def unparse(self):
        return self._node.unparse()

    def __eq__(self, other):
        return isinstance(other, PredicateExpr) and self._node == other._node

    def __repr__(self):
        return f"PredicateExpr({self.unparse()})"

    def __getstate__(self):
        return {"_node": self._node, "_allowed": self._allowed}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._fn = self._node.compile()


@dataclass(frozen=True)
class DynamicsSpec:
    """Noise-free next-state mean f(x, u, w), one expression per coordinate."""

    exprs: tuple
    dims: tuple  # (n, m, p)

    def __post_init__(self):
        n = self.dims[0]
        if len(self.exprs) != n:
            raise ParseError(
                f"need {n} dynamics expressions, got {len(self.exprs)}")

    def eval(self, x, u=(), w=()):
        env = _xuw_env(x, u, w, self.dims)
        out = np.empty(self.dims[0], dtype=float)
        for d, e in enumerate(self.exprs):
            out[d] = e.evaluate(env)
        return out

    def eval_env(self, env):
        """Vectorized: returns a list of per-coordinate arrays."""
        return [e.evaluate_env(env) for e in self.exprs]

    def state_dependencies(self, d):
        """Indices of state coordinates that expression d reads."""
        deps = set()
        for name in self.exprs[d].variables():
            if name.startswith("x"):
                deps.add(int(name[1:]) - 1)
        return deps

    def is_separable(self):
        """True when f_d depends on no state coordinate other than x_d."""
        return all(self.state_dependencies(d) <= {d}
                   for d in range(self.dims[0]))


def _xuw_env(x, u, w, dims):
    n, m, p = dims
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(x) != n or len(u) != m or len(w) != p:
        raise EvalError(f"dimension mismatch: expected {dims}, "
                        f"got ({len(x)}, {len(u)}, {len(w)})")
    env = {f"x{d + 1}": x[d] for d in range(n)}
    env.update({f"u{d + 1}": u[d] for d in range(m)})
    env.update({f"w{d + 1}": w[d] for d in range(p)})
    return env


# --- Parser -------------------------------------------------------------

class _Parser:
    def __init__(self, text, allowed):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}",
                             offset=tok[2])
        return tok

    def fail(self, msg):
        tok = self.peek()
        raise ParseError(f"{msg}, found {tok[1]!r}" if tok[1] else
                         f"{msg}, found end of input", offset=tok[2])

    # arithmetic

    def parse_sum(self):
        node = self.parse_product()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            node = Bin(op, node, self.parse_product())
        return node

    def parse_product(self):
        node = self.parse_unary()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            node = Bin(op, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.peek()[0] == "-":
            self.next()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        node = self.parse_atom()
        if self.peek()[0] == "^":
            self.next()
            node = Bin("^", node, self.parse_unary())
        return node

    def parse_atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.next()
            return Num(tok[1])
        if tok[0] == "ident":
            self.next()
            name = tok[1]
            if name in _FUNCS:
                arity = _FUNCS[name][1]
                self.expect("(")
                args = [self.parse_sum()]
                while self.peek()[0] == ",":
                    self.next()
                    args.append(self.parse_sum())
                self.expect(")")
                if len(args) != arity:
                    raise ParseError(
                        f"{name} takes {arity} argument(s), got {len(args)}",
                        offset=tok[2])
                return Call(name, args)
            if name not in self.allowed:
                raise ParseError(f"unknown identifier {name!r}", offset=tok[2])
            return Var(name)
        if tok[0] == "(":
            self.next()
            node = self.parse_sum()
            self.expect(")")
            return node
        self.fail("expected a number, identifier or '('")

    # booleans

    def parse_or(self):
        node = self.parse_and()
        while self.peek()[0] == "|":
            self.next()
            node = BoolBin("|", node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_not()
        while self.peek()[0] == "&":
            self.next()
            node = BoolBin("&", node, self.parse_not())
        return node

    def parse_not(self):
        if self.peek()[0] == "!":
            self.next()
            return Not(self.parse_not())
        if self.peek()[0] == "(":
            # '(' may open a boolean group or an arithmetic subexpression;
            # try the boolean reading first and backtrack on failure.
            saved = self.i
            try:
                self.next()
                node = self.parse_or()
                self.expect(")")
                if self.peek()[0] not in ("cmp", "+", "-", "*", "/", "^"):
                    return node
            except ParseError:
                pass
            self.i = saved
        return self.parse_compare()

    def parse_compare(self):
        left = self.parse_sum()
        tok = self.peek()
        if tok[0] != "cmp":
            self.fail("expected a comparison operator")
        self.next()
        right = self.parse_sum()
        return Cmp(tok[1], left, right)


def _allowed_names(prefix_limits):
    names = set()
    for prefix, limit in prefix_limits.items():
        names.update(f"{prefix}{i + 1}" for i in range(limit))
    return names


def parse_expression(text, dims) -> Expr:
    """Parse an arithmetic expression over x1..xn, u1..um, w1..wp."""
    n, m, p = dims
    allowed = _allowed_names({"x": n, "u": m, "w": p})
    parser = _Parser(text, allowed)
    node = parser.parse_sum()
    if parser.peek()[0] != "end":
        parser.fail("trailing input")
    return Expr(node, allowed)


def parse_density(text, n) -> Expr:
    """Parse a density expression over integration point y1..yn and mean m1..mn."""
    allowed = _allowed_names({"y": n, "m": n})
    parser = _Parser(text, allowed)
    node = parser.parse_sum()
    if parser.peek()[0] != "end":
        parser.fail("trailing input")
    return Expr(node, allowed)


def parse_predicate(text, n) -> PredicateExpr:
    """Parse a boolean predicate over state coordinates x1..xn."""
    allowed = _allowed_names({"x": n})
    parser = _Parser(text, allowed)
    node = parser.parse_or()
    if parser.peek()[0] != "end":
        parser.fail("trailing input")
    return PredicateExpr(node, allowed)
