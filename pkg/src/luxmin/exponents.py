"""Closed-form exponent maps p(x, y): parsing, validation and sampling.

Exponents are given as arithmetic expressions over x and y so the continuity
and smoothness hypotheses hold by construction and the field can be resampled
exactly under grid refinement.  Scaled exponents (l*p, j*q) reuse one parsed
expression with an integer multiplier.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .domain_grid import TriGrid
from .errors import ExprSyntaxError, NonAdmissibleExponent, UnknownIdentifier

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "sqrt": 1,
             "min": 2, "max": 2}


# -- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "x" or "y"


@dataclass(frozen=True)
class Neg:
    child: object


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


ExprAst = (Num, Var, Neg, BinOp, Call)


# -- tokenizer ---------------------------------------------------------------

def _tokenize(text):
    tokens = []  # (kind, value, offset)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
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
                val = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"malformed number {text[i:j]!r}", i)
            tokens.append(("num", val, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
        elif c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


# -- recursive-descent parser -------------------------------------------------
# precedence: ^ binds tighter than * /, which bind tighter than + -.
# all binary operators associate to the left.

class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse(self):
        node = self.sum()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def sum(self):
        node = self.product()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            node = BinOp(op, node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "-":
            self.next()
            return Neg(self.unary())
        if tok[0] == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        # ^ binds tighter than unary minus (-x^2 is -(x^2)) and associates
        # left like the other binaries; exponents may carry a sign (2^-3)
        node = self.atom()
        while self.peek()[0] == "^":
            self.next()
            node = BinOp("^", node, self._power_operand())
        return node

    def _power_operand(self):
        if self.peek()[0] == "-":
            self.next()
            return Neg(self._power_operand())
        if self.peek()[0] == "+":
            self.next()
            return self._power_operand()
        return self.atom()

    def atom(self):
        tok = self.next()
        if tok[0] == "num":
            return Num(tok[1])
        if tok[0] == "(":
            node = self.sum()
            self.expect(")")
            return node
        if tok[0] == "name":
            name = tok[1]
            if name in ("x", "y"):
                return Var(name)
            if name in FUNCTIONS:
                self.expect("(")
                args = [self.sum()]
                while self.peek()[0] == ",":
                    self.next()
                    args.append(self.sum())
                self.expect(")")
                if len(args) != FUNCTIONS[name]:
                    raise ExprSyntaxError(
                        f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", tok[2])
                return Call(name, tuple(args))
            raise UnknownIdentifier(f"unknown identifier {name!r}", tok[2])
        raise ExprSyntaxError(f"expected a value, found {tok[1]!r}", tok[2])


def parse_exponent(text: str):
    """Parse an exponent expression into its AST.

    Raises ExprSyntaxError (with byte offset) on malformed input and
    UnknownIdentifier for names other than x, y and the built-in functions.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# -- printing (canonical form; parse(print(ast)) == ast) ----------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3  # between * / and ^


def print_exponent(node) -> str:
    return _print(node, 0)


def _print(node, parent_prec):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        s = "-" + _print(node.child, _NEG_PREC - 1)
        return f"({s})" if parent_prec >= _NEG_PREC else s
    if isinstance(node, Call):
        return f"{node.fn}(" + ", ".join(_print(a, 0) for a in node.args) + ")"
    prec = _PREC[node.op]
    left = _print(node.left, prec - 1)      # left-assoc: same precedence ok on the left
    right = _print(node.right, prec)        # but needs parens on the right
    s = f"{left} {node.op} {right}"
    return f"({s})" if parent_prec >= prec else s


# -- evaluation ----------------------------------------------------------------

def evaluate(node, x, y):
    """Evaluate an AST over numpy coordinate arrays (or scalars)."""
    if isinstance(node, Num):
        return np.broadcast_to(np.float64(node.value), np.broadcast_shapes(np.shape(x), np.shape(y)))
    if isinstance(node, Var):
        return np.asarray(x if node.name == "x" else y, dtype=float)
    if isinstance(node, Neg):
        return -evaluate(node.child, x, y)
    if isinstance(node, Call):
        args = [evaluate(a, x, y) for a in node.args]
        with np.errstate(invalid="ignore", divide="ignore"):
            if node.fn == "min":
                return np.minimum(*args)
            if node.fn == "max":
                return np.maximum(*args)
            return getattr(np, node.fn)(args[0])
    a = evaluate(node.left, x, y)
    b = evaluate(node.right, x, y)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)


# -- sampled exponent fields ----------------------------------------------------

@dataclass
class ExponentField:
    """An exponent map sampled at triangle centroids.

    samples includes the integer scale (they are the values of scale*p).
    alpha is the integral of 1/p for the *unscaled* expression, which is the
    quantity controlling when norms become monotone in the scale.
    """

    ast: object
    grid: TriGrid
    scale: int
    samples: np.ndarray       # (T,) scaled values at centroids
    grad_samples: np.ndarray  # (T, 2) scaled gradient at centroids
    p_minus: float
    p_plus: float
    alpha: float

    @property
    def fd_step(self):
        return 1e-6 * self.grid.spec.diameter()

    def value_at(self, x, y):
        """Scaled exponent value at arbitrary points."""
        return self.scale * evaluate(self.ast, x, y)

    def grad_at(self, x, y):
        """Scaled exponent gradient by central differences, shape (..., 2)."""
        s = self.fd_step
        gx = (evaluate(self.ast, np.asarray(x) + s, y) - evaluate(self.ast, np.asarray(x) - s, y)) / (2 * s)
        gy = (evaluate(self.ast, x, np.asarray(y) + s) - evaluate(self.ast, x, np.asarray(y) - s)) / (2 * s)
        return self.scale * np.stack([gx, gy], axis=-1)

    def grad_log_at(self, x, y):
        """Gradient of log(p); independent of the scale factor."""
        base = evaluate(self.ast, x, y)
        return self.grad_at(x, y) / (self.scale * np.asarray(base)[..., None])


def sample_exponent(ast, grid: TriGrid, scale: int = 1) -> ExponentField:
    """Sample scale*p at the centroids and validate admissibility.

    Raises NonAdmissibleExponent when any scaled sample is <= 1 or non-finite.
    """
    if isinstance(ast, str):
        ast = parse_exponent(ast)
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale!r}")
    cx, cy = grid.tri_centroid[:, 0], grid.tri_centroid[:, 1]
    base = np.asarray(evaluate(ast, cx, cy), dtype=float)
    base = np.broadcast_to(base, (grid.n_triangles,)).copy()
    if not np.all(np.isfinite(base)):
        raise NonAdmissibleExponent("exponent evaluates to a non-finite value at a centroid")
    samples = scale * base
    pmin = float(samples.min())
    if pmin <= 1.0:
        raise NonAdmissibleExponent(
            f"exponent must exceed 1 everywhere; min sample is {pmin} (scale {scale})")

    step = 1e-6 * grid.spec.diameter()
    gx = (evaluate(ast, cx + step, cy) - evaluate(ast, cx - step, cy)) / (2 * step)
    gy = (evaluate(ast, cx, cy + step) - evaluate(ast, cx, cy - step)) / (2 * step)
    grad = scale * np.stack([np.broadcast_to(gx, base.shape),
                             np.broadcast_to(gy, base.shape)], axis=1)
    if not np.all(np.isfinite(grad)):
        raise NonAdmissibleExponent("exponent gradient is non-finite at a centroid")

    alpha = float(np.sum(grid.tri_area / base))
    return ExponentField(ast=ast, grid=grid, scale=int(scale), samples=samples,
                         grad_samples=grad, p_minus=pmin,
                         p_plus=float(samples.max()), alpha=alpha)


def check_subcritical(p: ExponentField, q: ExponentField) -> bool:
    """Warn (not fail) when q reaches the critical Sobolev threshold of p.

    In 2-D the critical exponent is 2p/(2-p) for p < 2 and infinite otherwise.
    Returns True when q is strictly subcritical at every centroid.
    """
    pv, qv = p.samples, q.samples
    crit = np.where(pv < 2.0, 2.0 * pv / np.maximum(2.0 - pv, 1e-300), np.inf)
    ok = qv < crit
    if not np.all(ok):
        worst = int(np.argmin(crit - qv))
        warnings.warn(
            f"q(x) is not subcritical at centroid {p.grid.tri_centroid[worst]}: "
            f"q={qv[worst]:.4g} vs critical {crit[worst]:.4g}; "
            "results remain defined but the compact-embedding rationale fails",
            stacklevel=2)
        return False
    return True
