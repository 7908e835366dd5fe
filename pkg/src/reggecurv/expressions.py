"""Small closed-form expression language for metric entries.

Grammar (weakest to strongest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative, 2^3^2 = 2^(3^2)
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Recognised names: coordinates ``x1 .. x9`` (with ``x``, ``y``, ``z`` as
aliases for ``x1``, ``x2``, ``x3``), constants ``pi`` and ``e``, and the
functions ``sin``, ``cos``, ``exp``, ``log``, ``sqrt``.

Expressions are parsed into small immutable trees that support numpy-
vectorised evaluation, exact symbolic differentiation and round-trippable
printing.  Constant folding and the usual 0/1 identities keep derivative
trees from blowing up.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ExpressionSyntaxError, UnknownSymbol

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}

CONSTANTS = {"pi": math.pi, "e": math.e}

ALIASES = {"x": "x1", "y": "x2", "z": "x3"}

MAX_SYMBOLS = 9


# ===========================================================================
# tokenizer
# ===========================================================================

class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind      # 'num' | 'name' | 'op' | 'end'
        self.text = text
        self.pos = pos


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_exp = False
            while j < n and (text[j].isdigit() or text[j] == "."
                             or (text[j] in "eE" and j + 1 < n
                                 and (text[j + 1].isdigit() or text[j + 1] in "+-")
                                 and not seen_exp)
                             or (seen_exp and text[j] in "+-"
                                 and text[j - 1] in "eE")):
                if text[j] in "eE":
                    seen_exp = True
                j += 1
            try:
                float(text[i:j])
            except ValueError:
                raise ExpressionSyntaxError("bad number %r" % text[i:j], i)
            tokens.append(_Token("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], i))
            i = j
            continue
        if c in "+-*/^()":
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        raise ExpressionSyntaxError("unexpected character %r" % c, i)
    tokens.append(_Token("end", "", n))
    return tokens


# ===========================================================================
# expression tree
# ===========================================================================

class Expr:
    """Base node.  Subclasses implement eval/diff/printing."""

    def eval(self, coords):
        """Evaluate with coords[i] bound to x_{i+1} (scalars or arrays)."""
        raise NotImplementedError

    def diff(self, index):
        """Exact derivative with respect to x_{index+1}, as a new tree."""
        raise NotImplementedError

    def max_symbol(self):
        """Largest coordinate index used (0-based), or -1."""
        raise NotImplementedError

    def __str__(self):
        raise NotImplementedError

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def eval(self, coords):
        return self.value

    def diff(self, index):
        return Const(0.0)

    def max_symbol(self):
        return -1

    def __str__(self):
        if self.value == int(self.value) and abs(self.value) < 1e16:
            return str(int(self.value))
        return repr(self.value)


class Sym(Expr):
    __slots__ = ("index",)

    def __init__(self, index):
        self.index = index

    def eval(self, coords):
        return coords[self.index]

    def diff(self, index):
        return Const(1.0 if index == self.index else 0.0)

    def max_symbol(self):
        return self.index

    def __str__(self):
        return "x%d" % (self.index + 1)


def _is_const(node, value=None):
    if not isinstance(node, Const):
        return False
    return value is None or node.value == value


class Add(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, coords):
        return self.a.eval(coords) + self.b.eval(coords)

    def diff(self, index):
        return add(self.a.diff(index), self.b.diff(index))

    def max_symbol(self):
        return max(self.a.max_symbol(), self.b.max_symbol())

    def __str__(self):
        return "%s + %s" % (self.a, self.b)


class Sub(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, coords):
        return self.a.eval(coords) - self.b.eval(coords)

    def diff(self, index):
        return sub(self.a.diff(index), self.b.diff(index))

    def max_symbol(self):
        return max(self.a.max_symbol(), self.b.max_symbol())

    def __str__(self):
        return "%s - %s" % (self.a, _wrap(self.b, ("Add", "Sub")))


class Mul(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, coords):
        return self.a.eval(coords) * self.b.eval(coords)

    def diff(self, index):
        return add(mul(self.a.diff(index), self.b),
                   mul(self.a, self.b.diff(index)))

    def max_symbol(self):
        return max(self.a.max_symbol(), self.b.max_symbol())

    def __str__(self):
        return "%s*%s" % (_wrap(self.a, ("Add", "Sub")),
                          _wrap(self.b, ("Add", "Sub")))


class Div(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, coords):
        return self.a.eval(coords) / self.b.eval(coords)

    def diff(self, index):
        # (a/b)' = a'/b - a b'/b^2
        return sub(div(self.a.diff(index), self.b),
                   div(mul(self.a, self.b.diff(index)), mul(self.b, self.b)))

    def max_symbol(self):
        return max(self.a.max_symbol(), self.b.max_symbol())

    def __str__(self):
        return "%s/%s" % (_wrap(self.a, ("Add", "Sub")),
                          _wrap(self.b, ("Add", "Sub", "Mul", "Div")))


class Pow(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, coords):
        return self.a.eval(coords) ** self.b.eval(coords)

    def diff(self, index):
        if _is_const(self.b):
            c = self.b.value
            # (u^c)' = c u^(c-1) u'
            return mul(mul(Const(c), pow_(self.a, Const(c - 1.0))),
                       self.a.diff(index))
        # general u^v: u^v (v' log u + v u'/u)
        return mul(self, add(mul(self.b.diff(index), Call("log", self.a)),
                             mul(self.b, div(self.a.diff(index), self.a))))

    def max_symbol(self):
        return max(self.a.max_symbol(), self.b.max_symbol())

    def __str__(self):
        return "%s^%s" % (_wrap(self.a, ("Add", "Sub", "Mul", "Div", "Neg", "Pow")),
                          _wrap(self.b, ("Add", "Sub", "Mul", "Div", "Neg")))


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def eval(self, coords):
        return -self.a.eval(coords)

    def diff(self, index):
        return neg(self.a.diff(index))

    def max_symbol(self):
        return self.a.max_symbol()

    def __str__(self):
        return "-%s" % _wrap(self.a, ("Add", "Sub"))


class Call(Expr):
    __slots__ = ("name", "a")

    def __init__(self, name, a):
        self.name = name
        self.a = a

    def eval(self, coords):
        return FUNCTIONS[self.name](self.a.eval(coords))

    def diff(self, index):
        inner = self.a.diff(index)
        if self.name == "sin":
            outer = Call("cos", self.a)
        elif self.name == "cos":
            outer = neg(Call("sin", self.a))
        elif self.name == "exp":
            outer = self
        elif self.name == "log":
            outer = div(Const(1.0), self.a)
        elif self.name == "sqrt":
            outer = div(Const(0.5), self)
        else:  # pragma: no cover - parser only admits the names above
            raise UnknownSymbol("cannot differentiate %r" % self.name)
        return mul(outer, inner)

    def max_symbol(self):
        return self.a.max_symbol()

    def __str__(self):
        return "%s(%s)" % (self.name, self.a)


def _wrap(node, kinds):
    if type(node).__name__ in kinds:
        return "(%s)" % node
    return str(node)


# ---------------------------------------------------------------------------
# smart constructors (constant folding, unit/zero elimination)
# ---------------------------------------------------------------------------

def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(b) and b.value != 0.0:
        if _is_const(a):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if _is_const(a, 0.0):
        return Const(0.0)
    return Div(a, b)


def pow_(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(a) and _is_const(b):
        return Const(a.value ** b.value)
    return Pow(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


# ===========================================================================
# parser
# ===========================================================================

class _Parser:
    def __init__(self, text, dim=None):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.k]

    def next(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op):
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise ExpressionSyntaxError("expected %r" % op, tok.pos)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionSyntaxError("unexpected %r" % tok.text, tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            self.next()
            inner = self.unary()
            return inner if tok.text == "+" else neg(inner)
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.next()
            exponent = self.unary()
            return pow_(base, exponent)
        return base

    def atom(self):
        tok = self.next()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "name":
            name = ALIASES.get(tok.text, tok.text)
            if name in FUNCTIONS:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return Call(name, inner)
            if name in CONSTANTS:
                return Const(CONSTANTS[name])
            if len(name) >= 2 and name[0] == "x" and name[1:].isdigit():
                index = int(name[1:]) - 1
                if not 0 <= index < MAX_SYMBOLS:
                    raise UnknownSymbol(
                        "coordinate %r out of range (at offset %d)" % (tok.text, tok.pos))
                if self.dim is not None and index >= self.dim:
                    raise UnknownSymbol(
                        "coordinate %r undefined in dimension %d (at offset %d)"
                        % (tok.text, self.dim, tok.pos))
                return Sym(index)
            raise UnknownSymbol("unknown symbol %r (at offset %d)" % (tok.text, tok.pos))
        if tok.kind == "op" and tok.text == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ExpressionSyntaxError("unexpected %r" % (tok.text or "end of input"), tok.pos)


def parse_expression(text, dim=None):
    """Parse ``text`` into an expression tree.

    ``dim`` (optional) bounds the admissible coordinate symbols; symbols
    beyond it raise :class:`UnknownSymbol`.
    """
    return _Parser(text, dim=dim).parse()
