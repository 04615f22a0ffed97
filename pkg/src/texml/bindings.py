"""Binding variants (macros, primitives, constructors) and constructor templates."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .doc import SCHEMA
from .errors import BadParameterIndex, ConstructorTemplateInvalid
from .tokens import Char, Param


# -- parameter texts ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Undelimited:
    pass


@dataclass(frozen=True, slots=True)
class Delimited:
    terminator: tuple

    def __post_init__(self):
        if not self.terminator:
            raise ValueError("terminator must be nonempty")


@dataclass(frozen=True, slots=True)
class LiteralMatch:
    tokens: tuple


ArgSpec = tuple  # of Undelimited | Delimited | LiteralMatch

UNDELIMITED = Undelimited()


def arity(spec: ArgSpec) -> int:
    return sum(1 for item in spec if not isinstance(item, LiteralMatch))


def check_body(spec: ArgSpec, body) -> None:
    n = arity(spec)
    if n > 9:
        raise BadParameterIndex("more than 9 parameters")
    for tok in body:
        if type(tok) is Param and not 1 <= tok.index <= n:
            raise BadParameterIndex(f"illegal parameter number #{tok.index} (macro takes {n})")


# -- bindings ------------------------------------------------------------------

@dataclass(frozen=True)
class Macro:
    spec: ArgSpec
    body: tuple
    expandable: bool = True
    has_params: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "has_params", any(type(t) is Param for t in self.body))


@dataclass(frozen=True)
class Primitive:
    """A builtin handled by Python code; ``name`` doubles as the handler id."""

    name: str
    handler: Callable = field(compare=False, repr=False)
    expandable: bool = False
    conditional: bool = False
    assignment: bool = False
    reader: Callable | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LetChar:
    """Meaning acquired by ``\\let\\x=<character>``."""

    token: Char


# -- constructor templates -----------------------------------------------------

@dataclass(frozen=True, slots=True)
class ElementOpen:
    name: str
    attrs: tuple  # of (name, tuple of str | int)   ints are verbatim arg refs


@dataclass(frozen=True, slots=True)
class ElementClose:
    name: str


@dataclass(frozen=True, slots=True)
class ArgInsert:
    index: int
    mode: str = "digested"  # or "verbatim"


@dataclass(frozen=True, slots=True)
class LiteralText:
    text: str


@dataclass(frozen=True)
class ConstructorTemplate:
    items: tuple
    source: str = ""


@dataclass(frozen=True)
class Constructor:
    spec: ArgSpec
    template: ConstructorTemplate


Binding = Macro | Primitive | Constructor | LetChar

_TAG = re.compile(r"<(/?)([A-Za-z][\w.-]*)((?:\s+[\w:.-]+\s*=\s*\"[^\"]*\")*)\s*(/?)>")
_ATTR = re.compile(r"([\w:.-]+)\s*=\s*\"([^\"]*)\"")
_ARG = re.compile(r"#(#|[1-9])")
_ENTITIES = {"&lt;": "<", "&gt;": ">", "&quot;": '"', "&amp;": "&"}


def _unescape(s: str) -> str:
    return re.sub(r"&(lt|gt|quot|amp);", lambda m: _ENTITIES[m.group(0)], s)


def _split_args(text: str, n: int, where: str) -> list:
    if re.search(r"#(?![1-9])", text.replace("##", "")):
        raise ConstructorTemplateInvalid(f"stray # in {where}")
    parts: list = []
    pos = 0
    for m in _ARG.finditer(text):
        if m.start() > pos:
            parts.append(_unescape(text[pos:m.start()]))
        if m.group(1) == "#":
            parts.append("#")
        else:
            idx = int(m.group(1))
            if idx > n:
                raise ConstructorTemplateInvalid(f"#{idx} in {where} exceeds arity {n}")
            parts.append(idx)
        pos = m.end()
    if pos < len(text):
        parts.append(_unescape(text[pos:]))
    return parts


def parse_template(text: str, n: int) -> ConstructorTemplate:
    """Parse literal-XML template syntax with ``#n`` insertion points.

    ``#n`` in element content inserts the digested argument; inside an
    attribute value it inserts the argument's verbatim text.
    """
    items: list = []
    stack: list[str] = []
    pos = 0

    def content(chunk: str):
        if "<" in chunk or ">" in chunk:
            raise ConstructorTemplateInvalid(f"malformed markup near {chunk!r}")
        for part in _split_args(chunk, n, "content"):
            if isinstance(part, int):
                items.append(ArgInsert(part))
            elif part:
                items.append(LiteralText(part))

    for m in _TAG.finditer(text):
        content(text[pos:m.start()])
        pos = m.end()
        closing, name, attr_text, selfclose = m.groups()
        if name not in SCHEMA:
            raise ConstructorTemplateInvalid(f"<{name}> is not in the document vocabulary")
        if closing:
            if attr_text or selfclose:
                raise ConstructorTemplateInvalid(f"malformed closing tag </{name}>")
            if not stack or stack[-1] != name:
                raise ConstructorTemplateInvalid(f"unbalanced </{name}>")
            stack.pop()
            items.append(ElementClose(name))
            continue
        attrs = []
        seen = set()
        for am in _ATTR.finditer(attr_text):
            key = am.group(1)
            if key in seen:
                raise ConstructorTemplateInvalid(f"duplicate attribute {key} on <{name}>")
            seen.add(key)
            attrs.append((key, tuple(_split_args(am.group(2), n, f"attribute {key}"))))
        items.append(ElementOpen(name, tuple(attrs)))
        if selfclose:
            items.append(ElementClose(name))
        else:
            stack.append(name)
    content(text[pos:])
    if stack:
        raise ConstructorTemplateInvalid(f"unclosed <{stack[-1]}>")
    return ConstructorTemplate(tuple(items), text)
