from __future__ import annotations

from xml.etree import ElementTree

import pytest
from hypothesis import given, strategies as st

from math_cases import CASES
from texml.errors import MathError, UnbalancedScripts, UnknownMathCommand
from texml.mathml import (
    Mi, Mn, Mo, Mrow, Msup, leaves, mathml_serialize, parse_math, sexpr, tree_from_element,
)
from texml.tokens import tokenize
from texml.xmlio import MATHML_NS, Element, Text, fragment, serialize


def parse(src: str, **kw):
    return parse_math(tokenize(src), **kw)


@pytest.mark.parametrize("src, want", CASES)
def test_golden(src, want):
    assert sexpr(parse(src)) == want


def test_decimal_number():
    assert parse("3.14") == Mn("3.14")


def test_serialize_inline_identifier():
    el = mathml_serialize(Mi("x"))
    assert fragment(el) == f'<math xmlns="{MATHML_NS}" display="inline"><mi>x</mi></math>'


def test_serialize_empty_row():
    assert fragment(mathml_serialize(Mrow(()), "block")).endswith('display="block"><mrow/></math>')


def test_arity_is_enforced():
    with pytest.raises(TypeError):
        Msup(Mi("x"))  # type: ignore[call-arg]
    with pytest.raises(TypeError):
        Msup(Mi("x"), "2")  # type: ignore[arg-type]
    lopsided = Element("msup", [], [Element("mi", [], [Text("x")])])
    with pytest.raises(MathError):
        tree_from_element(lopsided)


def test_double_superscript():
    with pytest.raises(UnbalancedScripts):
        parse("x^2^3")


def test_unknown_command():
    warnings = []
    assert parse(r"\foo x", warn=warnings.append) == Mrow((Mo(r"\foo"), Mi("x")))
    assert warnings == [r"unknown math command \foo"]
    with pytest.raises(UnknownMathCommand):
        parse(r"\foo", strict=True)


def test_unbalanced_right():
    with pytest.raises(MathError):
        parse(r"x \right)")


# Random expressions: identifiers, numbers, operators, fences and scripts.
atoms = st.sampled_from(["a", "b", "x", "7", "42", r"\alpha", r"\pi", r"\infty"])
ops = st.sampled_from(["+", "-", "=", "<", "*", "/", ",", r"\times", r"\leq", r"\pm", r"\cdot"])


def _combine(children):
    return st.one_of(
        st.tuples(children, ops, children).map(lambda t: f"{t[0]}{t[1]} {t[2]}"),
        children.map(lambda c: f"({c})"),
        children.map(lambda c: rf"\left[{c}\right]"),
        st.tuples(children, children).map(lambda t: rf"\frac{{{t[0]}}}{{{t[1]}}}"),
        children.map(lambda c: rf"\sqrt{{{c}}}"),
        st.tuples(atoms, children).map(lambda t: f"{t[0]}^{{{t[1]}}}"),
        st.tuples(atoms, children).map(lambda t: f"{t[0]}_{{{t[1]}}}"),
        st.tuples(children, children).map(lambda t: f"{t[0]} {t[1]}"),
    )


exprs = st.recursive(atoms, _combine, max_leaves=12)

_OP_TOKENS = ("+", "-", "=", "<", "*", "/", ",", "(", ")", "[", "]")
_OP_NAMES = {"times", "leq", "pm", "cdot"}


def _operator_tokens(src: str) -> int:
    toks = tokenize(src)
    n = 0
    for t in toks:
        if hasattr(t, "cat") and t.char in _OP_TOKENS:
            n += 1
        elif hasattr(t, "name") and t.name in _OP_NAMES:
            n += 1
    return n


@given(exprs)
def test_operator_count_preserved(src):
    tree = parse(src)
    assert sum(isinstance(leaf, Mo) for leaf in leaves(tree)) == _operator_tokens(src)


@given(exprs)
def test_serialization_well_formed(src):
    data = serialize(mathml_serialize(parse(src)))
    root = ElementTree.fromstring(data)
    assert root.tag == f"{{{MATHML_NS}}}math"
