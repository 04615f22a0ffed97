"""Convert TeX/LaTeX sources to semantic XML, HTML5 and EPUB."""

from .doc import Document, parse_xml, serialize_xml, validate
from .engine import convert, profile_report
from .registry import Registry, load_bindings, standard_registry
from .tokens import CatcodeTable, tokenize

__all__ = ["CatcodeTable", "Document", "Registry", "convert", "load_bindings", "parse_xml",
           "profile_report", "serialize_xml", "standard_registry", "tokenize", "validate"]
