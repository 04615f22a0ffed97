"""EPUB 3 packaging (reproducible zip) and a structural validator."""

from __future__ import annotations

import io
import mimetypes
import posixpath
import re
import struct
import uuid
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone
from urllib.parse import unquote
from xml.etree import ElementTree

from .doc import Violation
from .errors import ManifestCollision, MetadataInvalid, NotAZip
from .post import NavEntry, Page, render_page
from .xmlio import MATHML_NS, SVG_NS, XHTML_NS, Element, Text, serialize

MIMETYPE = b"application/epub+zip"
CONTAINER_NS = "urn:oasis:names:tc:opendocument:xmlns:container"
OPF_NS = "http://www.idpf.org/2007/opf"
DC_NS = "http://purl.org/dc/elements/1.1/"
OPS_NS = "http://www.idpf.org/2007/ops"
OPF_PATH = "OEBPS/content.opf"
NAV_HREF = "nav.xhtml"
XHTML_TYPE = "application/xhtml+xml"

_MODIFIED = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")
_LANG = re.compile(r"^[A-Za-z]{2,8}(-[A-Za-z0-9]{1,8})*$")
_MEDIA_TYPES = {".xhtml": XHTML_TYPE, ".css": "text/css", ".svg": "image/svg+xml",
                ".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
                ".gif": "image/gif"}


@dataclass(frozen=True)
class EpubMetadata:
    identifier: str
    title: str
    language: str
    modified: str

    def check(self) -> None:
        for name in ("identifier", "title", "language", "modified"):
            if not getattr(self, name).strip():
                raise MetadataInvalid(f"metadata field {name!r} is empty")
        if not _LANG.match(self.language):
            raise MetadataInvalid(f"not a language tag: {self.language!r}")
        if not _MODIFIED.match(self.modified):
            raise MetadataInvalid(f"modified must look like CCYY-MM-DDThh:mm:ssZ, got {self.modified!r}")
        try:
            stamp = datetime.strptime(self.modified, "%Y-%m-%dT%H:%M:%SZ")
        except ValueError as exc:
            raise MetadataInvalid(f"invalid modified timestamp: {exc}") from exc
        if stamp.year < 1980:
            raise MetadataInvalid("modified must not predate 1980 (zip timestamp range)")

    @property
    def date_time(self) -> tuple:
        t = datetime.strptime(self.modified, "%Y-%m-%dT%H:%M:%SZ")
        return (t.year, t.month, t.day, t.hour, t.minute, t.second)


def timestamp(when: float | None = None) -> str:
    """Format a POSIX time (default: now) as an EPUB modified timestamp."""
    dt = datetime.now(timezone.utc) if when is None else datetime.fromtimestamp(when, timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def default_identifier(title: str, payload: bytes = b"") -> str:
    """Stable identifier derived from the book's title and content."""
    return "urn:uuid:" + str(uuid.uuid5(uuid.NAMESPACE_URL, title + "\0" + payload.hex()[:4096]))


@dataclass(frozen=True)
class ManifestItem:
    id: str
    href: str
    media_type: str
    properties: tuple[str, ...] = ()


def media_type(href: str) -> str:
    ext = posixpath.splitext(href)[1].lower()
    return _MEDIA_TYPES.get(ext) or mimetypes.guess_type(href)[0] or "application/octet-stream"


def content_properties(data: bytes) -> tuple[str, ...]:
    """``mathml``/``svg`` properties for an XHTML document, by namespace scan."""
    root = ElementTree.fromstring(data)
    found = set()
    for el in root.iter():
        if el.tag.startswith("{" + MATHML_NS + "}"):
            found.add("mathml")
        elif el.tag.startswith("{" + SVG_NS + "}"):
            found.add("svg")
    return tuple(p for p in ("mathml", "svg") if p in found)


def _nav_list(entries: list[NavEntry]) -> Element:
    ol = Element("ol")
    for e in entries:
        li = Element("li", [], [Element("a", [("href", e.href)], [Text(e.title)])])
        if e.children:
            li.children.append(_nav_list(e.children))
        ol.children.append(li)
    return ol


def make_nav(pages: list[Page], language: str = "en") -> bytes:
    """The EPUB navigation document: one entry per page, nested by outline."""
    if not pages:
        raise ValueError("a book needs at least one page")
    entries = [NavEntry(p.title, p.path, p.outline) for p in pages]
    html = Element("html", [("xmlns:epub", OPS_NS), ("lang", language), ("xml:lang", language)], [
        Element("head", [], [Element("meta", [("charset", "utf-8")]),
                             Element("title", [], [Text("Contents")])]),
        Element("body", [], [Element("nav", [("epub:type", "toc"), ("id", "toc")], [
            Element("h1", [], [Text("Contents")]), _nav_list(entries)])]),
    ], XHTML_NS)
    return serialize(html, doctype="<!DOCTYPE html>", newline=True, html=True)


def _opf(meta: EpubMetadata, items: list[ManifestItem], spine: list[str]) -> bytes:
    metadata = Element("metadata", [("xmlns:dc", DC_NS)], [
        Element("dc:identifier", [("id", "bookid")], [Text(meta.identifier)]),
        Element("dc:title", [], [Text(meta.title)]),
        Element("dc:language", [], [Text(meta.language)]),
        Element("meta", [("property", "dcterms:modified")], [Text(meta.modified)]),
    ])
    manifest = Element("manifest", [], [
        Element("item", [("id", it.id), ("href", it.href), ("media-type", it.media_type)]
                + ([("properties", " ".join(it.properties))] if it.properties else []))
        for it in items])
    spine_el = Element("spine", [], [Element("itemref", [("idref", i)]) for i in spine])
    package = Element("package", [("version", "3.0"), ("unique-identifier", "bookid"),
                                  ("xml:lang", meta.language)],
                      [metadata, manifest, spine_el], OPF_NS)
    return serialize(package, newline=True)


def _container() -> bytes:
    root = Element("container", [("version", "1.0")], [
        Element("rootfiles", [], [Element("rootfile", [("full-path", OPF_PATH),
                                                       ("media-type", "application/oebps-package+xml")])])
    ], CONTAINER_NS)
    return serialize(root, newline=True)


def _check_href(href: str) -> None:
    parts = href.split("/")
    if href.startswith("/") or ".." in parts or not href or "\\" in href:
        raise ManifestCollision(f"resource path must be relative and inside the book: {href!r}")


def build_package(pages: list[Page], resources: dict[str, bytes] | None = None,
                  meta: EpubMetadata | None = None, *, rendered: dict[str, bytes] | None = None) -> bytes:
    """Assemble an EPUB 3 archive. ``rendered`` may supply pre-rendered page bytes."""
    if meta is None:
        raise MetadataInvalid("metadata is required")
    meta.check()
    if not pages:
        raise ValueError("a book needs at least one page")
    resources = dict(resources or {})
    files: dict[str, bytes] = {}
    items = [ManifestItem("nav", NAV_HREF, XHTML_TYPE, ("nav",))]
    reserved = {NAV_HREF, "content.opf"}
    ids = {"nav"}
    spine = []
    for page in pages:
        _check_href(page.path)
        if page.path in files or page.path in reserved:
            raise ManifestCollision(f"two manifest items would share {page.path!r}")
        data = rendered[page.path] if rendered and page.path in rendered else render_page(page)
        files[page.path] = data
        item_id = f"page-{page.id}"
        if item_id in ids:
            raise ManifestCollision(f"duplicate page id {page.id!r}")
        ids.add(item_id)
        items.append(ManifestItem(item_id, page.path, XHTML_TYPE, content_properties(data)))
        spine.append(item_id)
    for n, (href, data) in enumerate(sorted(resources.items()), 1):
        _check_href(href)
        if href in files or href in reserved:
            raise ManifestCollision(f"two manifest items would share {href!r}")
        files[href] = data
        mt = media_type(href)
        props = content_properties(data) if mt == XHTML_TYPE else ()
        items.append(ManifestItem(f"res-{n}", href, mt, props))

    entries = [("META-INF/container.xml", _container()),
               (OPF_PATH, _opf(meta, items, spine)),
               ("OEBPS/" + NAV_HREF, make_nav(pages, meta.language))]
    entries += [("OEBPS/" + href, data) for href, data in files.items()]

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr(_zipinfo("mimetype", meta.date_time, zipfile.ZIP_STORED), MIMETYPE)
        for name, data in entries:
            zf.writestr(_zipinfo(name, meta.date_time, zipfile.ZIP_DEFLATED), data)
    return buf.getvalue()


def _zipinfo(name: str, date_time: tuple, method: int) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time)
    info.compress_type = method
    info.create_system = 0
    info.external_attr = 0
    return info


# -- validation -----------------------------------------------------------------

def _local_extra_len(data: bytes, offset: int) -> int:
    sig, = struct.unpack_from("<I", data, offset)
    if sig != 0x04034B50:
        return -1
    return struct.unpack_from("<H", data, offset + 28)[0]


def _parses(data: bytes) -> ElementTree.Element | None:
    try:
        return ElementTree.fromstring(data)
    except ElementTree.ParseError:
        return None


def validate_structure(data: bytes) -> list[Violation]:
    """Check an archive against the structural rules of EPUB 3 packaging."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, ValueError) as exc:
        raise NotAZip(f"not a zip archive: {exc}") from exc
    out: list[Violation] = []
    with zf:
        infos = zf.infolist()
        names = [i.filename for i in infos]
        if not infos or infos[0].filename != "mimetype" or infos[0].header_offset != 0:
            out.append(Violation("mimetype-first", "the first entry must be 'mimetype'"))
        mt = next((i for i in infos if i.filename == "mimetype"), None)
        if mt is not None:
            if mt.compress_type != zipfile.ZIP_STORED or mt.extra or \
                    _local_extra_len(data, mt.header_offset) != 0:
                out.append(Violation("mimetype-stored", "mimetype must be stored without extra fields"))
            if zf.read(mt) != MIMETYPE:
                out.append(Violation("mimetype-content-exact", "mimetype must be 'application/epub+zip'"))
        else:
            out.append(Violation("mimetype-content-exact", "mimetype entry missing"))

        opf_path = None
        container = _parses(zf.read("META-INF/container.xml")) if "META-INF/container.xml" in names else None
        if container is not None:
            rf = container.find(f"{{{CONTAINER_NS}}}rootfiles/{{{CONTAINER_NS}}}rootfile")
            if rf is not None and rf.get("full-path") in names and \
                    rf.get("media-type") == "application/oebps-package+xml":
                opf_path = rf.get("full-path")
        if opf_path is None:
            out.append(Violation("container-present-and-points-to-opf",
                                 "META-INF/container.xml missing or not pointing at a package document"))
            return out

        opf = _parses(zf.read(opf_path))
        o = f"{{{OPF_NS}}}"
        if opf is None or opf.tag != o + "package" or opf.find(o + "metadata") is None or \
                opf.find(o + "manifest") is None or opf.find(o + "spine") is None:
            out.append(Violation("opf-parses", f"{opf_path} is not a well-formed OPF package"))
            return out
        if opf.get("version") != "3.0":
            out.append(Violation("opf-parses", "package version must be 3.0"))
        base = posixpath.dirname(opf_path)
        items = opf.findall(f"{o}manifest/{o}item")
        ids = [it.get("id") for it in items]
        if len(set(ids)) != len(ids) or None in ids:
            out.append(Violation("unique-ids", "manifest item ids must be present and unique"))
        hrefs = {}
        for it in items:
            full = posixpath.normpath(posixpath.join(base, unquote(it.get("href", ""))))
            hrefs[full] = it
            if full not in names:
                out.append(Violation("all-manifest-hrefs-exist-in-zip", f"missing {full}"))
        for n in names:
            if n == "mimetype" or n.startswith("META-INF/") or n == opf_path or n.endswith("/"):
                continue
            if n not in hrefs:
                out.append(Violation("all-zip-content-files-in-manifest", f"{n} is not in the manifest"))
        itemrefs = opf.findall(f"{o}spine/{o}itemref")
        if not itemrefs or any(r.get("idref") not in ids for r in itemrefs):
            out.append(Violation("spine-idrefs-resolve", "spine is empty or references unknown ids"))
        navs = [it for it in items if "nav" in (it.get("properties") or "").split()]
        nav_ok = False
        if len(navs) == 1:
            full = posixpath.normpath(posixpath.join(base, navs[0].get("href", "")))
            nav = _parses(zf.read(full)) if full in names else None
            if nav is not None:
                nav_ok = any(el.get(f"{{{OPS_NS}}}type") == "toc"
                             for el in nav.iter(f"{{{XHTML_NS}}}nav"))
        if not nav_ok:
            out.append(Violation("nav-present", "need exactly one nav item with an epub:type=toc nav"))
        unique = opf.get("unique-identifier")
        idents = [e for e in opf.iter(f"{{{DC_NS}}}identifier") if e.get("id") == unique]
        if not idents or not (idents[0].text or "").strip():
            out.append(Violation("opf-parses", "unique-identifier does not name a dc:identifier"))
        mods = [m for m in opf.iter(o + "meta") if m.get("property") == "dcterms:modified"]
        if len(mods) != 1 or not _MODIFIED.match((mods[0].text or "").strip()):
            out.append(Violation("modified-timestamp-format",
                                 "need exactly one dcterms:modified as CCYY-MM-DDThh:mm:ssZ"))
        for full, it in hrefs.items():
            mtype = it.get("media-type", "")
            if full in names and (mtype == XHTML_TYPE or mtype == "image/svg+xml"):
                if _parses(zf.read(full)) is None:
                    out.append(Violation("pages-well-formed-xml", f"{full} is not well-formed XML"))
    return out
