"""Immutable binding registries built from Python primitives and binding files."""

from __future__ import annotations

from collections.abc import Mapping
from importlib import resources
from pathlib import Path
from types import MappingProxyType

from .engine import Engine
from .errors import BindingParseError, ConstructorTemplateInvalid, TexmlError
from .tokens import Catcode


class Registry(Mapping):
    """Read-only map from control-sequence name (or active char) to binding."""

    def __init__(self, bindings: Mapping, sources: tuple[str, ...] = ()):
        self._bindings = MappingProxyType(dict(bindings))
        self.sources = tuple(sources)

    @property
    def bindings(self) -> Mapping:
        return self._bindings

    def __getitem__(self, key):
        return self._bindings[key]

    def __iter__(self):
        return iter(self._bindings)

    def __len__(self) -> int:
        return len(self._bindings)

    def __repr__(self) -> str:
        return f"Registry({len(self)} bindings from {list(self.sources)})"


def primitive_registry() -> Registry:
    from .primitives import PRIMITIVES
    return Registry(PRIMITIVES, ("<primitives>",))


def standard_source() -> str:
    return resources.files("texml").joinpath("data/standard.tex").read_text(encoding="utf-8")


def load_binding_text(text: str, base: Registry, name: str = "<string>") -> Registry:
    """Execute one binding file on top of ``base``; return the extended registry.

    The file is read with ``@`` as a letter. Catcode changes made inside it
    do not leak into documents; only definitions are kept.
    """
    engine = Engine(base, strict=True)
    engine.catcodes["@"] = Catcode.LETTER
    try:
        engine.run_bindings(text)
    except ConstructorTemplateInvalid as exc:
        line = engine.position()[0]
        raise ConstructorTemplateInvalid(f"{name}:{line}: {exc}") from exc
    except TexmlError as exc:
        line = getattr(exc, "line", None) or engine.position()[0]
        raise BindingParseError(name, line, getattr(exc, "message", str(exc))) from exc
    return Registry(engine.defs, base.sources + (name,))


def standard_registry() -> Registry:
    return load_binding_text(standard_source(), primitive_registry(), "standard.tex")


def load_bindings(paths=()) -> Registry:
    """Standard bindings plus the given binding files, applied in order.

    All-or-nothing: any error aborts the whole load.
    """
    reg = standard_registry()
    for path in paths:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise BindingParseError(str(path), None, f"cannot read binding file: {exc}") from exc
        reg = load_binding_text(text, reg, str(path))
    return reg
