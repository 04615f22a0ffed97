"""Cross-reference resolution, page splitting and lowering to HTML5 (XHTML syntax)."""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path

from .doc import Document, to_tree
from .errors import IoError, UnmappedElement
from .xmlio import MATHML_NS, SVG_NS, XHTML_NS, Element, Text, serialize

SPLIT_LEVELS = ("none", "section")
INDEX = "index.xhtml"
DOCTYPE = "<!DOCTYPE html>"

STYLE = """body{max-width:42em;margin:auto;padding:0 1em;font-family:serif;line-height:1.4}
div.para{margin:0.6em 0}
div.picture{margin:1em 0;text-align:center}
span.error{color:#b00;font-family:monospace}
a.undefined{color:#b00}
nav.toc ol{list-style:none}"""


@dataclass
class NavEntry:
    title: str
    href: str
    children: list[NavEntry] = field(default_factory=list)


@dataclass
class Page:
    id: str
    title: str
    source: Element
    path: str
    nav_children: list[str] = field(default_factory=list)
    outline: list[NavEntry] = field(default_factory=list)
    toc: list[NavEntry] = field(default_factory=list)


def text_of(node) -> str:
    """Concatenated character content of a node (Math contributes its TeX)."""
    from .doc import MathNode
    if isinstance(node, Text):
        return node.text
    if isinstance(node, MathNode):
        return node.tex
    if isinstance(node, Element):
        return "".join(text_of(c) for c in node.children)
    return ""


def title_of(el: Element) -> str:
    for child in el.children:
        if isinstance(child, Element) and child.name == "title":
            return " ".join(text_of(child).split())
    return ""


def slugify(title: str, limit: int = 40) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", title.lower())[:limit].strip("-")
    return slug or "section"


def _top_sections(root: Element) -> list[Element]:
    return [c for c in root.children if isinstance(c, Element) and c.name == "section"]


def page_paths(doc: Document, splitat: str = "none") -> dict[int, str]:
    """Output path for each top-level section (keyed by ``id(element)``)."""
    if splitat not in SPLIT_LEVELS:
        raise ValueError(f"unknown split level {splitat!r}")
    paths: dict[int, str] = {}
    if splitat == "none":
        return paths
    used = {INDEX}
    for n, sec in enumerate(_top_sections(doc.root), 1):
        base = f"s{n}-{slugify(title_of(sec))}"
        name, k = base + ".xhtml", 2
        while name in used:
            name, k = f"{base}-{k}.xhtml", k + 1
        used.add(name)
        paths[id(sec)] = name
    return paths


def _locate_ids(root: Element, paths: dict[int, str]) -> dict[str, str]:
    """Map every xml:id to the page file that will hold it."""
    where: dict[str, str] = {}

    def walk(el: Element, page: str) -> None:
        page = paths.get(id(el), page)
        xid = el.get("xml:id")
        if xid:
            where[xid] = page
        for c in el.children:
            if isinstance(c, Element):
                walk(c, page)

    walk(root, INDEX)
    return where


def _page_of(root: Element, paths: dict[int, str]):
    """Yield (element, page) for every element in document order."""
    stack = [(root, INDEX)]
    while stack:
        el, page = stack.pop()
        page = paths.get(id(el), page)
        yield el, page
        for c in reversed(el.children):
            if isinstance(c, Element):
                stack.append((c, page))


def section_number(xml_id: str) -> str:
    return ".".join(part[1:] for part in xml_id.split("."))


def resolve_refs(doc: Document, splitat: str = "none") -> Document:
    """Return a copy of ``doc`` whose refs carry ``href`` and ``reftext``."""
    from .engine import Message
    out = doc.copy()
    paths = page_paths(out, splitat)
    where = _locate_ids(out.root, paths)
    targets = {el.get("xml:id"): el for el in out.root.iter() if el.get("xml:id")}
    for el, page in _page_of(out.root, paths):
        if el.name != "ref":
            continue
        key = el.get("labelref")
        target_id = out.labels.get(key)
        if target_id is None or target_id not in where:
            el.set("class", "undefined")
            out.messages.append(Message("warning", f"reference to undefined label {key!r}"))
            continue
        target_page = where[target_id]
        el.set("href", ("" if target_page == page else target_page) + "#" + target_id)
        target = targets[target_id]
        el.set("reftext", section_number(target_id) if target.name == "section" else key)
    return out


def _outline(el: Element, page_path: str) -> list[NavEntry]:
    return [NavEntry(title_of(c) or "Section", page_path + "#" + c.get("xml:id", ""),
                     _outline(c, page_path))
            for c in el.children if isinstance(c, Element) and c.name == "section"]


def split_pages(doc: Document, splitat: str = "none") -> list[Page]:
    """Partition the document into pages (index first, then top-level sections)."""
    paths = page_paths(doc, splitat)
    root = doc.root
    title = title_of(root) or (title_of(_top_sections(root)[0]) if _top_sections(root) else "") \
        or "Untitled"
    if splitat == "none":
        page = Page("index", title, root, INDEX)
        page.outline = _outline(root, INDEX)
        return [page]
    front = Element(root.name, list(root.attrs),
                    [c for c in root.children if id(c) not in paths], root.ns)
    index = Page("index", title, front, INDEX)
    pages = [index]
    for n, sec in enumerate(_top_sections(root), 1):
        path = paths[id(sec)]
        page = Page(f"s{n}", title_of(sec) or f"Section {n}", sec, path)
        page.outline = _outline(sec, path)
        pages.append(page)
        index.nav_children.append(page.id)
        index.toc.append(NavEntry(page.title, path, page.outline))
    return pages


# -- lowering -------------------------------------------------------------------

_FONT_TAGS = {"bold": "b", "italic": "i", "typewriter": "code"}


def _h(tag: str, attrs=None, children=None) -> Element:
    return Element(tag, list(attrs or []), list(children or []))


class _Lowerer:
    def children(self, el: Element) -> list:
        out = []
        for c in el.children:
            lowered = self.node(c)
            if lowered is not None:
                out.append(lowered)
        return out

    def node(self, node):
        if isinstance(node, Text):
            return Text(node.text)
        name = node.name
        if node.ns == SVG_NS and name == "svg":
            return self.svg(node)
        attrs = [("id", node.get("xml:id"))] if node.get("xml:id") else []
        if name == "section":
            return _h("section", attrs, self.children(node))
        if name == "title":
            return _h(self.heading, attrs, self.children(node))
        if name == "para":
            return _h("div", attrs + [("class", "para")], self.children(node))
        if name == "p":
            return _h("p", attrs, self.children(node))
        if name == "text":
            return _h(_FONT_TAGS[node.get("font")], attrs, self.children(node))
        if name == "emph":
            return _h("em", attrs, self.children(node))
        if name == "Math":
            math = next(c for c in node.children if isinstance(c, Element))
            out = copy.deepcopy(math)
            out.ns = MATHML_NS
            out.set("alttext", node.get("tex", ""))
            return out
        if name == "picture":
            return _h("div", attrs + [("class", "picture")], self.children(node))
        if name == "ref":
            href = node.get("href")
            if href is None:
                return _h("a", [("class", "ref undefined")], [Text("??")])
            return _h("a", [("class", "ref"), ("href", href)],
                      [Text(node.get("reftext") or node.get("labelref"))])
        if name == "anchor":
            return _h("a", attrs)
        if name == "error":
            return _h("span", [("class", "error")], self.children(node))
        raise UnmappedElement(f"no HTML mapping for <{name}>")

    heading = "h1"

    def svg(self, svg: Element) -> Element:
        out = Element(svg.name, list(svg.attrs), [], SVG_NS)
        for c in svg.children:
            if isinstance(c, Element) and c.name == "foreignObject":
                inner = Element("div", [], [self.node(x) for x in c.children], XHTML_NS)
                out.children.append(Element(c.name, list(c.attrs), [inner]))
            else:
                out.children.append(copy.deepcopy(c))
        return out


class _SectionLowerer(_Lowerer):
    """Tracks section depth so titles get h1-h6."""

    def __init__(self, base_level: int = 0):
        self.level = base_level

    def node(self, node):
        if isinstance(node, Element) and node.name == "section":
            saved = self.level
            self.level = int(node.get("level", "1"))
            try:
                return super().node(node)
            finally:
                self.level = saved
        return super().node(node)

    @property
    def heading(self) -> str:
        return f"h{min(max(self.level, 1), 6)}"


def _toc_list(entries: list[NavEntry]) -> Element:
    ol = _h("ol")
    for e in entries:
        li = _h("li", [], [_h("a", [("href", e.href)], [Text(e.title)])])
        if e.children:
            li.children.append(_toc_list(e.children))
        ol.children.append(li)
    return ol


def to_html5(page: Page) -> Element:
    """Lower one page's intermediate XML to an XHTML-namespaced HTML tree."""
    tree = to_tree(page.source)
    low = _SectionLowerer()
    body = low.children(tree) if tree.name == "document" else [low.node(tree)]
    if page.toc:
        body.append(_h("nav", [("class", "toc")],
                       [_h("h2", [], [Text("Contents")]), _toc_list(page.toc)]))
    head = _h("head", [], [
        _h("meta", [("charset", "utf-8")]),
        _h("title", [], [Text(page.title)]),
        _h("style", [], [Text(STYLE)]),
    ])
    return Element("html", [("lang", "en")], [head, _h("body", [], body)], XHTML_NS)


def render_page(page: Page) -> bytes:
    return serialize(to_html5(page), doctype=DOCTYPE, newline=True, html=True)


def build_site(doc: Document, splitat: str = "none") -> tuple[Document, list[Page], dict[str, bytes]]:
    """resolve_refs + split_pages + lowering; returns the resolved document,
    its pages and the rendered bytes per page path."""
    resolved = resolve_refs(doc, splitat)
    pages = split_pages(resolved, splitat)
    return resolved, pages, {p.path: render_page(p) for p in pages}


def write_site(pages: list[Page], dest) -> list[str]:
    """Write one XHTML file per page under ``dest``; returns relative paths."""
    dest = Path(dest)
    written = []
    try:
        dest.mkdir(parents=True, exist_ok=True)
        for page in pages:
            (dest / page.path).write_bytes(render_page(page))
            written.append(page.path)
    except OSError as exc:
        raise IoError(f"cannot write site to {dest}: {exc}") from exc
    return written
