"""Minimal, byte-stable XML tree and writer shared by every output format."""

from __future__ import annotations

from dataclasses import dataclass, field

MATHML_NS = "http://www.w3.org/1998/Math/MathML"
SVG_NS = "http://www.w3.org/2000/svg"
XHTML_NS = "http://www.w3.org/1999/xhtml"
XML_NS = "http://www.w3.org/XML/1998/namespace"

DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>'


@dataclass
class Text:
    text: str


@dataclass
class Element:
    """An element with ordered attributes.

    ``ns`` is the element's namespace when it differs from its parent's;
    ``None`` means inherit, ``""`` means no namespace.
    """

    name: str
    attrs: list[tuple[str, str]] = field(default_factory=list)
    children: list = field(default_factory=list)
    ns: str | None = None

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.attrs:
            if k == key:
                return v
        return default

    def set(self, key: str, value: str) -> None:
        for i, (k, _) in enumerate(self.attrs):
            if k == key:
                self.attrs[i] = (key, value)
                return
        self.attrs.append((key, value))

    def iter(self):
        yield self
        for child in self.children:
            if isinstance(child, Element):
                yield from child.iter()


def escape_text(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def escape_attr(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;").replace("\n", "&#10;").replace("\t", "&#9;")
            .replace("\r", "&#13;"))


HTML_VOID = frozenset({"area", "base", "br", "col", "embed", "hr", "img", "input", "link",
                       "meta", "source", "track", "wbr"})


def _write(node, out: list[str], scope_ns: str, html: bool = False) -> None:
    if isinstance(node, Text):
        out.append(escape_text(node.text))
        return
    out.append("<" + node.name)
    ns = scope_ns
    if node.ns is not None and node.ns != scope_ns:
        ns = node.ns
        out.append(f' xmlns="{escape_attr(ns)}"')
    for k, v in node.attrs:
        out.append(f' {k}="{escape_attr(v)}"')
    if not node.children:
        if html and ns == XHTML_NS and node.name not in HTML_VOID:
            out.append(f"></{node.name}>")
        else:
            out.append("/>")
        return
    out.append(">")
    for child in node.children:
        _write(child, out, ns, html)
    out.append(f"</{node.name}>")


def serialize(root: Element, *, declaration: bool = True, doctype: str | None = None,
              newline: bool = False, html: bool = False) -> bytes:
    """Compact UTF-8 XML. With ``html``, empty non-void XHTML elements get
    an explicit end tag so the output is also valid HTML syntax."""
    out: list[str] = []
    if declaration:
        out.append(DECLARATION)
        if newline:
            out.append("\n")
    if doctype:
        out.append(doctype)
        if newline:
            out.append("\n")
    _write(root, out, "", html)
    if newline:
        out.append("\n")
    return "".join(out).encode("utf-8")


def fragment(node) -> str:
    out: list[str] = []
    _write(node, out, "")
    return "".join(out)


def _split_tag(tag: str) -> tuple[str, str]:
    if tag.startswith("{"):
        ns, _, local = tag[1:].partition("}")
        return ns, local
    return "", tag


def _attr_name(key: str) -> str:
    if key.startswith("{" + XML_NS + "}"):
        return "xml:" + key[len(XML_NS) + 2:]
    return key


def from_etree(el, parent_ns: str = "") -> Element:
    """Convert an ElementTree element into our tree, preserving order."""
    ns, local = _split_tag(el.tag)
    node = Element(local, [(_attr_name(k), v) for k, v in el.attrib.items()],
                   ns=ns if ns != parent_ns else None)
    if el.text:
        node.children.append(Text(el.text))
    for child in el:
        node.children.append(from_etree(child, ns))
        if child.tail:
            node.children.append(Text(child.tail))
    return node
