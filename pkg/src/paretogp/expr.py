"""Expression-tree genotype: construction, evaluation, and serialization.

Trees are immutable after construction. Structural operations (subtree
replacement) build a new tree that shares untouched subtrees with the
originals, which is safe because nodes are never mutated in place.
"""

from __future__ import annotations

import re

import numpy as np

# Node kinds. DIV, SQRT and LOG are protected variants.
ADD, SUB, MUL, DIV, SQRT, LOG, VAR, CONST = range(8)

FUNCTIONS = (ADD, SUB, MUL, DIV, SQRT, LOG)
ARITY = {ADD: 2, SUB: 2, MUL: 2, DIV: 2, SQRT: 1, LOG: 1, VAR: 0, CONST: 0}

# |denominator| at or below this makes protected division return 1.0;
# same threshold guards the protected log.
PROTECT_EPS = 1e-6


class TreeDatasetMismatch(ValueError):
    """A variable node references a feature the dataset does not have."""


class Node:
    """One tree node; `size` caches the node count of the subtree."""

    __slots__ = ("kind", "children", "index", "value", "size")

    def __init__(self, kind, children=(), index=0, value=0.0):
        self.kind = kind
        self.children = tuple(children)
        self.index = index
        self.value = value
        self.size = 1 + sum(c.size for c in self.children)
        if len(self.children) != ARITY[kind]:
            raise ValueError(f"node kind {kind} expects {ARITY[kind]} children")

    def __repr__(self):
        return f"Node({to_string(self)!r})"


def add(a, b):
    return Node(ADD, (a, b))


def sub(a, b):
    return Node(SUB, (a, b))


def mul(a, b):
    return Node(MUL, (a, b))


def div(a, b):
    return Node(DIV, (a, b))


def sqrt(a):
    return Node(SQRT, (a,))


def log(a):
    return Node(LOG, (a,))


def var(index):
    return Node(VAR, index=int(index))


def const(value):
    return Node(CONST, value=float(value))


def _eval(node, X):
    kind = node.kind
    if kind == VAR:
        if node.index >= X.shape[1]:
            raise TreeDatasetMismatch(
                f"tree references feature x{node.index} but dataset has "
                f"{X.shape[1]} features"
            )
        return X[:, node.index]
    if kind == CONST:
        # Scalar; ufuncs broadcast it against the row dimension.
        return np.float64(node.value)
    a = _eval(node.children[0], X)
    if kind == SQRT:
        return np.sqrt(np.abs(a))
    if kind == LOG:
        absa = np.abs(a)
        guarded = np.where(absa <= PROTECT_EPS, 1.0, absa)
        return np.where(absa <= PROTECT_EPS, 0.0, np.log(guarded))
    b = _eval(node.children[1], X)
    if kind == ADD:
        return a + b
    if kind == SUB:
        return a - b
    if kind == MUL:
        return a * b
    # DIV
    tiny = np.abs(b) <= PROTECT_EPS
    return np.where(tiny, 1.0, a / np.where(tiny, 1.0, b))


def evaluate(tree, X):
    """Evaluate `tree` on each row of the n-by-d feature matrix `X`.

    Protected operators never raise; overflow of the unprotected arithmetic
    may produce non-finite outputs, which the fitness layer absorbs.
    """
    X = np.asarray(X, dtype=np.float64)
    with np.errstate(all="ignore"):
        out = _eval(tree, X)
    if np.ndim(out) == 0:
        return np.full(X.shape[0], float(out))
    if out.base is not None:  # bare-variable trees return a column view
        return out.copy()
    return out


def size(tree):
    """Total node count."""
    return tree.size


def subtree_at(tree, index):
    """Return the node at preorder position `index` (root is 0)."""
    if index == 0:
        return tree
    offset = 1
    for child in tree.children:
        if index < offset + child.size:
            return subtree_at(child, index - offset)
        offset += child.size
    raise IndexError(f"node index {index} out of range for tree of size {tree.size}")


def replace_subtree(tree, index, replacement):
    """New tree with the subtree at preorder `index` swapped for `replacement`."""
    if index == 0:
        return replacement
    offset = 1
    new_children = []
    replaced = False
    for child in tree.children:
        if not replaced and offset <= index < offset + child.size:
            new_children.append(replace_subtree(child, index - offset, replacement))
            replaced = True
        else:
            new_children.append(child)
        offset += child.size
    if not replaced:
        raise IndexError(f"node index {index} out of range for tree of size {tree.size}")
    return Node(tree.kind, tuple(new_children), index=tree.index, value=tree.value)


def random_subtree_locator(tree, rng):
    """Preorder index of a node chosen uniformly among all nodes."""
    return int(rng.integers(tree.size))


_OP_TEXT = {ADD: "+", SUB: "-", MUL: "*", DIV: "/"}
_UNARY_TEXT = {SQRT: "sqrt", LOG: "log"}


def _format_constant(value):
    # Prefer the fixed 8-decimal form when it is lossless; otherwise fall
    # back to the shortest exact representation.
    s = f"{value:.8f}"
    if float(s) == value:
        return s
    return repr(value)


def to_string(tree):
    """Parenthesized infix text; `parse` reproduces an identical tree."""
    kind = tree.kind
    if kind == VAR:
        return f"x{tree.index}"
    if kind == CONST:
        return _format_constant(tree.value)
    if kind in _UNARY_TEXT:
        return f"{_UNARY_TEXT[kind]}({to_string(tree.children[0])})"
    a, b = tree.children
    return f"({to_string(a)} {_OP_TEXT[kind]} {to_string(b)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<fn>sqrt|log)"
    r"|(?P<var>x\d+)"
    r"|(?P<num>-?\d+\.?\d*(?:[eE][+-]?\d+)?|-?\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<op>[-+*/]))"
)

_OP_KIND = {"+": ADD, "-": SUB, "*": MUL, "/": DIV}
_FN_KIND = {"sqrt": SQRT, "log": LOG}


class ParseError(ValueError):
    pass


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character at position {pos}: {text[pos:pos + 10]!r}")
        tokens.append(m)
        pos = m.end()
    return tokens


def _parse_expr(tokens, i):
    if i >= len(tokens):
        raise ParseError("unexpected end of expression")
    tok = tokens[i]
    if tok.group("num"):
        return const(float(tok.group("num"))), i + 1
    if tok.group("var"):
        return var(int(tok.group("var")[1:])), i + 1
    if tok.group("fn"):
        kind = _FN_KIND[tok.group("fn")]
        if i + 1 >= len(tokens) or not tokens[i + 1].group("lpar"):
            raise ParseError(f"expected '(' after {tok.group('fn')}")
        inner, j = _parse_expr(tokens, i + 2)
        if j >= len(tokens) or not tokens[j].group("rpar"):
            raise ParseError("expected ')'")
        return Node(kind, (inner,)), j + 1
    if tok.group("lpar"):
        left, j = _parse_expr(tokens, i + 1)
        if j >= len(tokens) or not tokens[j].group("op"):
            raise ParseError("expected binary operator")
        kind = _OP_KIND[tokens[j].group("op")]
        right, k = _parse_expr(tokens, j + 1)
        if k >= len(tokens) or not tokens[k].group("rpar"):
            raise ParseError("expected ')'")
        return Node(kind, (left, right)), k + 1
    raise ParseError(f"unexpected token {tok.group()!r}")


def parse(text):
    """Inverse of `to_string`."""
    tokens = _tokenize(text)
    tree, i = _parse_expr(tokens, 0)
    if i != len(tokens):
        raise ParseError(f"trailing tokens after expression: {tokens[i].group()!r}")
    return tree


def trees_equal(a, b):
    """Structural equality: same kinds, indices, and exact constant values."""
    if a.kind != b.kind or a.index != b.index or a.value != b.value:
        return False
    if len(a.children) != len(b.children):
        return False
    return all(trees_equal(x, y) for x, y in zip(a.children, b.children))
