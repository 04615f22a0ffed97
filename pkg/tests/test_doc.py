from __future__ import annotations

from xml.etree import ElementTree

import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS, TESTS
from texml import convert, parse_xml, serialize_xml, validate
from texml.doc import Document, MathNode
from texml.errors import SchemaViolation
from texml.mathml import Mi
from texml.xmlio import Element, Text


def doc_of(*children) -> Document:
    return Document(Element("document", [], list(children)))


def section(n: int, *body) -> Element:
    return Element("section", [("level", "1"), ("xml:id", f"S{n}")],
                   [Element("title", [], [Text(f"T{n}")]), *body])


def test_empty_document():
    assert serialize_xml(doc_of()) == b'<?xml version="1.0" encoding="UTF-8"?><document/>'


def test_text_is_escaped():
    doc = doc_of(Element("para", [], [Element("p", [], [Text("a<b")])]))
    assert b"<p>a&lt;b</p>" in serialize_xml(doc)


def test_attribute_quotes_escaped():
    doc = doc_of(Element("para", [], [Element("p", [], [Element("ref", [("labelref", 'a"&b')])])]))
    assert b'labelref="a&quot;&amp;b"' in serialize_xml(doc)


def test_duplicate_attribute_refused():
    doc = doc_of(Element("section", [("level", "1"), ("level", "2")], [Element("title")]))
    with pytest.raises(SchemaViolation):
        serialize_xml(doc)


def test_section_inside_p_names_both():
    doc = doc_of(Element("para", [], [Element("p", [], [section(1)])]))
    (v,) = validate(doc)
    assert "section" in v.detail and "p" in v.detail


def test_duplicate_ids():
    doc = doc_of(section(1), section(1))
    assert [v.rule for v in validate(doc)] == ["duplicate-id"]


def test_conforming_document():
    assert validate(doc_of(section(1), section(2))) == []


def test_title_must_come_first():
    bad = Element("section", [("level", "1")], [Element("para"), Element("title")])
    rules = {v.rule for v in validate(doc_of(bad))}
    assert "bad-order" in rules and "missing-child" in rules


def test_golden_section(registry):
    golden = (TESTS / "golden" / "section.xml").read_bytes()
    assert serialize_xml(convert(r"\section{A}x", registry)) == golden


def test_math_survives_parse(registry):
    doc = doc_of(Element("para", [], [Element("p", [], [MathNode("x", Mi("x"))])]))
    data = serialize_xml(doc)
    assert b'<math xmlns="http://www.w3.org/1998/Math/MathML" display="inline"><mi>x</mi></math>' in data
    assert serialize_xml(parse_xml(data)) == data


def _reparse(data: bytes) -> bytes:
    """Round trip through the stdlib parser, independent of our reader."""
    ElementTree.fromstring(data)
    return serialize_xml(parse_xml(data))


@pytest.mark.parametrize("name", sorted(p.name for p in CORPUS.glob("*.tex")))
def test_corpus_documents_valid_and_round_trip(registry, name):
    doc = convert((CORPUS / name).read_text(encoding="utf-8"), registry)
    assert validate(doc) == []
    data = serialize_xml(doc)
    assert _reparse(data) == data


# Random well-formed invocations of the standard bindings.
words = st.text("abcdefxyz", min_size=1, max_size=6)
inline = st.one_of(
    words,
    words.map(lambda w: rf"\textbf{{{w}}}"),
    words.map(lambda w: rf"\emph{{{w}}}"),
    words.map(lambda w: rf"\texttt{{\textit{{{w}}}}}"),
    words.map(lambda w: f"${w}^2$"),
    words.map(lambda w: rf"\ref{{{w}}}"),
    st.just(r"\&"),
)
block = st.one_of(
    st.lists(inline, min_size=1, max_size=5).map(" ".join),
    words.map(lambda w: rf"\section{{{w}}}"),
    words.map(lambda w: rf"\subsection{{{w}}}\label{{{w}}}"),
    st.just(r"\begin{gpicture}\line(0,0)(5,5)\end{gpicture}"),
    st.just(""),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(block, max_size=8).map("\n\n".join))
def test_random_binding_use_stays_valid(registry, source):
    doc = convert(source, registry)
    assert validate(doc) == []
    data = serialize_xml(doc)
    assert _reparse(data) == data
