"""The intermediate semantic XML document: node types, schema, serialization."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple
from xml.etree import ElementTree

from .errors import SchemaViolation
from .mathml import MathTree, mathml_serialize, tree_from_element
from .xmlio import MATHML_NS, SVG_NS, Element, Text, from_etree, serialize

SCHEMA_VERSION = "1"

TEXT = "#text"
MATH = "Math"
GRAPHICS = "#graphics"


@dataclass
class MathNode:
    tex: str
    content: MathTree
    display: str = "inline"


@dataclass
class GraphicsNode:
    svg: Element


DocNode = Element | Text | MathNode | GraphicsNode


class Rule(NamedTuple):
    children: frozenset
    attrs: dict            # attribute -> allowed values, or None for free text
    required: tuple = ()
    first: str | None = None      # child that may only appear first
    first_required: bool = False


INLINE = frozenset({TEXT, "text", "emph", MATH, "ref", "anchor", "error"})
BLOCK = frozenset({"para", "section", "picture"})
GLOBAL_ATTRS = frozenset({"xml:id", "labels"})

# Single source of truth for element vocabulary and parenting.
SCHEMA: dict[str, Rule] = {
    "document": Rule(BLOCK | {"title"}, {}, first="title"),
    "section": Rule(BLOCK | {"title"}, {"level": {"1", "2", "3", "4", "5", "6"}},
                    required=("level",), first="title", first_required=True),
    "title": Rule(INLINE, {}),
    "para": Rule(frozenset({"p"}), {}),
    "p": Rule(INLINE, {}),
    "text": Rule(INLINE, {"font": {"bold", "italic", "typewriter"}}, required=("font",)),
    "emph": Rule(INLINE, {}),
    "ref": Rule(frozenset(), {"labelref": None, "href": None, "class": None, "reftext": None},
                required=("labelref",)),
    "anchor": Rule(frozenset(), {}),
    "error": Rule(frozenset({TEXT}), {}),
    "picture": Rule(frozenset({GRAPHICS}), {}),
}
BLOCK_CONTAINERS = frozenset({"document", "section"})
OPEN_ENDED = frozenset({"section"})


def kind(node) -> str:
    if isinstance(node, Text):
        return TEXT
    if isinstance(node, MathNode):
        return MATH
    if isinstance(node, GraphicsNode):
        return GRAPHICS
    return node.name


def allowed(parent: str, child: str) -> bool:
    rule = SCHEMA.get(parent)
    return rule is not None and child in rule.children


@dataclass
class Document:
    root: Element
    labels: dict[str, str] = field(default_factory=dict)
    messages: list = field(default_factory=list, compare=False)
    profile: list | None = field(default=None, compare=False)

    def copy(self) -> Document:
        return Document(copy.deepcopy(self.root), dict(self.labels), list(self.messages), self.profile)

    def warnings(self) -> list:
        return [m for m in self.messages if m.level == "warning"]


def collect_labels(root: Element) -> dict[str, str]:
    labels = {}
    for el in root.iter():
        keys = el.get("labels")
        if keys and el.get("xml:id"):
            for key in keys.split():
                labels.setdefault(key, el.get("xml:id"))
    return labels


# -- validation ----------------------------------------------------------------

class Violation(NamedTuple):
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.detail}"


def validate(doc: Document | Element) -> list[Violation]:
    root = doc.root if isinstance(doc, Document) else doc
    out: list[Violation] = []
    if not isinstance(root, Element) or root.name != "document":
        out.append(Violation("root", "root element must be <document>"))
        return out
    seen_ids: dict[str, str] = {}
    _validate_element(root, out, seen_ids)
    return out


def _validate_element(el: Element, out: list, ids: dict) -> None:
    rule = SCHEMA.get(el.name)
    if rule is None:
        out.append(Violation("unknown-element", f"<{el.name}> is not in the vocabulary"))
        return
    names = [k for k, _ in el.attrs]
    if len(set(names)) != len(names):
        out.append(Violation("duplicate-attribute", f"<{el.name}> repeats an attribute"))
    for k, v in el.attrs:
        if k in GLOBAL_ATTRS:
            if k == "xml:id":
                if v in ids:
                    out.append(Violation("duplicate-id", f"xml:id {v!r} on <{el.name}> and <{ids[v]}>"))
                ids[v] = el.name
            continue
        if k not in rule.attrs:
            out.append(Violation("unknown-attribute", f"<{el.name}> has no attribute {k!r}"))
        elif rule.attrs[k] is not None and v not in rule.attrs[k]:
            out.append(Violation("bad-attribute-value", f"<{el.name} {k}={v!r}>"))
    for req in rule.required:
        if req not in names:
            out.append(Violation("missing-attribute", f"<{el.name}> requires {req!r}"))
    kinds = [kind(c) for c in el.children]
    for i, (child, k) in enumerate(zip(el.children, kinds)):
        if k not in rule.children:
            out.append(Violation("bad-child", f"<{k}> is not allowed inside <{el.name}>"))
            continue
        if rule.first == k and i != 0:
            out.append(Violation("bad-order", f"<{k}> must be the first child of <{el.name}>"))
        if isinstance(child, Text) and not child.text:
            out.append(Violation("empty-text", f"empty text inside <{el.name}>"))
        elif isinstance(child, Element):
            _validate_element(child, out, ids)
        elif isinstance(child, GraphicsNode):
            _collect_svg_ids(child.svg, ids, out)
    if rule.first_required and (not kinds or kinds[0] != rule.first):
        out.append(Violation("missing-child", f"<{el.name}> must start with <{rule.first}>"))
    if el.name == "picture" and len(kinds) != 1:
        out.append(Violation("bad-child", "<picture> must hold exactly one graphic"))


def _collect_svg_ids(svg: Element, ids: dict, out: list) -> None:
    for el in svg.iter():
        v = el.get("id") or el.get("xml:id")
        if v:
            if v in ids:
                out.append(Violation("duplicate-id", f"id {v!r} on <{el.name}> and <{ids[v]}>"))
            ids[v] = el.name


# -- serialization -------------------------------------------------------------

def to_tree(node):
    """Lower DocNodes to plain XML elements (Math and graphics become markup)."""
    if isinstance(node, Text):
        return node
    if isinstance(node, MathNode):
        return Element("Math", [("tex", node.tex), ("mode", node.display)],
                       [mathml_serialize(node.content, node.display)])
    if isinstance(node, GraphicsNode):
        return node.svg
    return Element(node.name, list(node.attrs), [to_tree(c) for c in node.children], node.ns)


def serialize_xml(doc: Document) -> bytes:
    problems = validate(doc)
    if problems:
        raise SchemaViolation("; ".join(str(p) for p in problems))
    return serialize(to_tree(doc.root))


def _from_tree(el: Element):
    if el.name == "Math" and el.ns is None:
        maths = [c for c in el.children if isinstance(c, Element)]
        if len(maths) != 1:
            raise SchemaViolation("<Math> must wrap one <math> element")
        return MathNode(el.get("tex", ""), tree_from_element(maths[0]), el.get("mode", "inline"))
    if el.name == "svg" and el.ns == SVG_NS:
        return GraphicsNode(el)
    if el.ns == MATHML_NS:
        raise SchemaViolation("bare MathML outside <Math>")
    el.children = [_from_tree(c) if isinstance(c, Element) else c for c in el.children]
    return el


def parse_xml(data: bytes) -> Document:
    """Read a serialized document back (via the stdlib XML parser)."""
    root = _from_tree(from_etree(ElementTree.fromstring(data)))
    if not isinstance(root, Element) or root.name != "document":
        raise SchemaViolation("root element must be <document>")
    return Document(root, collect_labels(root))
