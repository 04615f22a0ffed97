"""Math-mode token lists to presentation MathML."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import MathError, UnbalancedScripts, UnknownMathCommand
from .tokens import CS, Catcode, Char, Token
from .xmlio import MATHML_NS, Element, Text


# -- trees --------------------------------------------------------------------

class MathTree:
    __slots__ = ()


def _check(*nodes):
    for n in nodes:
        if not isinstance(n, MathTree):
            raise TypeError(f"expected a MathTree node, got {n!r}")


@dataclass(frozen=True, slots=True)
class Mi(MathTree):
    text: str


@dataclass(frozen=True, slots=True)
class Mn(MathTree):
    text: str


@dataclass(frozen=True, slots=True)
class Mo(MathTree):
    text: str
    stretchy: bool = False


@dataclass(frozen=True, slots=True)
class Mrow(MathTree):
    children: tuple = ()

    def __post_init__(self):
        _check(*self.children)


@dataclass(frozen=True, slots=True)
class Msup(MathTree):
    base: MathTree
    script: MathTree

    def __post_init__(self):
        _check(self.base, self.script)


@dataclass(frozen=True, slots=True)
class Msub(MathTree):
    base: MathTree
    script: MathTree

    def __post_init__(self):
        _check(self.base, self.script)


@dataclass(frozen=True, slots=True)
class Msubsup(MathTree):
    base: MathTree
    sub: MathTree
    sup: MathTree

    def __post_init__(self):
        _check(self.base, self.sub, self.sup)


@dataclass(frozen=True, slots=True)
class Mfrac(MathTree):
    num: MathTree
    den: MathTree

    def __post_init__(self):
        _check(self.num, self.den)


@dataclass(frozen=True, slots=True)
class Msqrt(MathTree):
    child: MathTree

    def __post_init__(self):
        _check(self.child)


def sexpr(tree: MathTree) -> str:
    """Compact rendering used by golden tests, e.g. ``mrow[mi:a,mo:+,mi:b]``."""
    if isinstance(tree, Mi):
        return "mi:" + tree.text
    if isinstance(tree, Mn):
        return "mn:" + tree.text
    if isinstance(tree, Mo):
        return ("mo!:" if tree.stretchy else "mo:") + tree.text
    if isinstance(tree, Mrow):
        return "mrow[" + ",".join(sexpr(c) for c in tree.children) + "]"
    name = type(tree).__name__.lower()
    parts = [getattr(tree, f) for f in tree.__dataclass_fields__]
    return name + "[" + ",".join(sexpr(p) for p in parts) + "]"


def leaves(tree: MathTree):
    if isinstance(tree, (Mi, Mn, Mo)):
        yield tree
        return
    if isinstance(tree, Mrow):
        for c in tree.children:
            yield from leaves(c)
        return
    for f in tree.__dataclass_fields__:
        yield from leaves(getattr(tree, f))


# -- symbol tables ------------------------------------------------------------

GREEK = {
    "alpha": "α", "beta": "β", "gamma": "γ", "delta": "δ", "epsilon": "ϵ",
    "varepsilon": "ε", "zeta": "ζ", "eta": "η", "theta": "θ", "vartheta": "ϑ",
    "iota": "ι", "kappa": "κ", "lambda": "λ", "mu": "μ", "nu": "ν", "xi": "ξ",
    "pi": "π", "varpi": "ϖ", "rho": "ρ", "varrho": "ϱ", "sigma": "σ",
    "varsigma": "ς", "tau": "τ", "upsilon": "υ", "phi": "ϕ", "varphi": "φ",
    "chi": "χ", "psi": "ψ", "omega": "ω",
    "Gamma": "Γ", "Delta": "Δ", "Theta": "Θ", "Lambda": "Λ", "Xi": "Ξ",
    "Pi": "Π", "Sigma": "Σ", "Upsilon": "Υ", "Phi": "Φ", "Psi": "Ψ", "Omega": "Ω",
}
IDENTIFIERS = {
    "infty": "∞", "partial": "∂", "nabla": "∇", "ell": "ℓ", "hbar": "ℏ",
    "emptyset": "∅", "forall": "∀", "exists": "∃",
    "sin": "sin", "cos": "cos", "tan": "tan", "log": "log", "ln": "ln",
    "exp": "exp", "lim": "lim", "max": "max", "min": "min", "det": "det",
}
REL_CMDS = {
    "leq": "≤", "le": "≤", "geq": "≥", "ge": "≥", "neq": "≠", "ne": "≠",
    "approx": "≈", "equiv": "≡", "sim": "∼", "simeq": "≃", "to": "→",
    "rightarrow": "→", "leftarrow": "←", "Rightarrow": "⇒", "Leftrightarrow": "⇔",
    "mapsto": "↦", "in": "∈", "notin": "∉", "subset": "⊂", "subseteq": "⊆",
    "supset": "⊃", "ll": "≪", "gg": "≫", "propto": "∝", "mid": "∣", "perp": "⊥",
}
ADD_CMDS = {"pm": "±", "mp": "∓", "cup": "∪", "cap": "∩", "setminus": "∖", "oplus": "⊕"}
MUL_CMDS = {"times": "×", "cdot": "⋅", "div": "÷", "ast": "∗", "circ": "∘", "otimes": "⊗"}
OPERATOR_ATOMS = {
    "sum": "∑", "prod": "∏", "int": "∫", "oint": "∮", "bigcup": "⋃", "bigcap": "⋂",
    "ldots": "…", "cdots": "⋯", "dots": "…", "prime": "′",
    "{": "{", "}": "}", "langle": "⟨", "rangle": "⟩", "|": "‖", "lvert": "|",
    "rvert": "|", "lfloor": "⌊", "rfloor": "⌋", "lceil": "⌈", "rceil": "⌉",
}
SPACING = {",", ";", ":", "!", " ", "quad", "qquad", "relax"}

REL_CHARS = {"=": "=", "<": "<", ">": ">"}
ADD_CHARS = {"+": "+", "-": "−"}
MUL_CHARS = {"*": "∗", "/": "/"}
CHAR_OPS = {"'": "′"}
FENCES = {"(": ")", "[": "]", "{": "}", "|": "|"}

REL, ADD, MUL = "rel", "add", "mul"


def _op_class(tok: Token) -> tuple[str, str] | None:
    if type(tok) is Char:
        if tok.cat != Catcode.OTHER:
            return None
        c = tok.char
        if c in REL_CHARS:
            return REL, REL_CHARS[c]
        if c in ADD_CHARS:
            return ADD, ADD_CHARS[c]
        if c in MUL_CHARS:
            return MUL, MUL_CHARS[c]
        return None
    if type(tok) is CS:
        n = tok.name
        if n in REL_CMDS:
            return REL, REL_CMDS[n]
        if n in ADD_CMDS:
            return ADD, ADD_CMDS[n]
        if n in MUL_CMDS:
            return MUL, MUL_CMDS[n]
    return None


def _is_digit(tok) -> bool:
    return type(tok) is Char and tok.cat == Catcode.OTHER and tok.char.isdigit()


def _is_cat(tok, cat) -> bool:
    return type(tok) is Char and tok.cat == cat


def _is_cs(tok, name) -> bool:
    return type(tok) is CS and tok.name == name


def _wrap(items: list[MathTree]) -> MathTree | None:
    if not items:
        return None
    if len(items) == 1:
        return items[0]
    return Mrow(tuple(items))


class _Parser:
    def __init__(self, tokens: Sequence[Token], strict: bool, warn):
        self.toks = [t for t in tokens if not _is_cat(t, Catcode.SPACE)
                     and not (type(t) is CS and t.name in SPACING)]
        self.i = 0
        self.strict = strict
        self.warn = warn
        self.limits: list[int] = []

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def at_stop(self) -> bool:
        t = self.peek()
        if self.limits and self.i >= self.limits[-1]:
            return True
        return t is None or _is_cat(t, Catcode.END_GROUP) or _is_cs(t, "right")

    def find_closer(self, opening: str) -> int | None:
        """Index of the fence closing ``opening`` (just consumed), if balanced."""
        closing = FENCES[opening]
        braces = lefts = depth = 0
        j = self.i
        end = self.limits[-1] if self.limits else len(self.toks)
        while j < end:
            t = self.toks[j]
            if _is_cat(t, Catcode.BEGIN_GROUP):
                braces += 1
            elif _is_cat(t, Catcode.END_GROUP):
                if braces == 0:
                    return None
                braces -= 1
            elif braces == 0 and type(t) is CS and t.name in ("left", "right"):
                lefts += 1 if t.name == "left" else -1
                if lefts < 0:
                    return None
                j += 1
            elif braces == 0 and lefts == 0 and _is_cat(t, Catcode.OTHER):
                if t.char == opening and opening != closing:
                    depth += 1
                elif t.char == closing:
                    if depth == 0:
                        return j
                    depth -= 1
            j += 1
        return None

    def fenced(self, opening: str, end: int) -> MathTree:
        self.limits.append(end)
        try:
            inner = self.expr()
            if self.i != end:
                raise MathError(f"unexpected token {self.peek()!r} inside {opening}...")
        finally:
            self.limits.pop()
        self.take()
        items = [Mo(opening)] + ([inner] if inner is not None else []) + [Mo(FENCES[opening])]
        return Mrow(tuple(items))

    # relations -> additive -> juxtaposition -> scripts
    def expr(self) -> MathTree | None:
        items = []
        first = self.additive()
        if first is not None:
            items.append(first)
        while not self.at_stop():
            cls = _op_class(self.peek())
            if cls is None or cls[0] != REL:
                raise MathError(f"unexpected token {self.peek()!r} in math")
            self.take()
            items.append(Mo(cls[1]))
            rhs = self.additive()
            if rhs is not None:
                items.append(rhs)
        return _wrap(items)

    def additive(self) -> MathTree | None:
        items = []
        while not self.at_stop():
            cls = _op_class(self.peek())
            if cls is not None and cls[0] == ADD:
                self.take()
                items.append(Mo(cls[1]))
                continue
            if cls is not None and cls[0] == REL:
                break
            term = self.juxtaposition()
            if term is None:
                break
            items.append(term)
        return _wrap(items)

    def juxtaposition(self) -> MathTree | None:
        items = []
        while not self.at_stop():
            cls = _op_class(self.peek())
            if cls is not None:
                if cls[0] != MUL:
                    break
                self.take()
                items.append(Mo(cls[1]))
                continue
            items.append(self.scripted())
        return _wrap(items)

    def scripted(self) -> MathTree:
        tok = self.peek()
        if _is_cat(tok, Catcode.SUPERSCRIPT) or _is_cat(tok, Catcode.SUBSCRIPT):
            base: MathTree = Mrow(())
        else:
            base = self.atom()
        sup = sub = None
        while True:
            tok = self.peek()
            if _is_cat(tok, Catcode.SUPERSCRIPT):
                self.take()
                if sup is not None:
                    raise UnbalancedScripts("double superscript")
                sup = self.script_arg()
            elif _is_cat(tok, Catcode.SUBSCRIPT):
                self.take()
                if sub is not None:
                    raise UnbalancedScripts("double subscript")
                sub = self.script_arg()
            else:
                break
        if sup is not None and sub is not None:
            return Msubsup(base, sub, sup)
        if sup is not None:
            return Msup(base, sup)
        if sub is not None:
            return Msub(base, sub)
        return base

    def script_arg(self) -> MathTree:
        tok = self.peek()
        if tok is None or _is_cat(tok, Catcode.END_GROUP):
            raise UnbalancedScripts("missing script argument")
        return self.atom(single=True)

    def group(self) -> MathTree:
        self.take()
        inner = self.expr()
        if not _is_cat(self.peek(), Catcode.END_GROUP):
            raise MathError("missing } in math")
        self.take()
        return inner if inner is not None else Mrow(())

    def delimiter(self) -> str | None:
        tok = self.take()
        if tok is None:
            raise MathError("missing delimiter after \\left or \\right")
        if type(tok) is Char:
            return None if tok.char == "." else tok.char
        if tok.name in OPERATOR_ATOMS:
            return OPERATOR_ATOMS[tok.name]
        raise MathError(f"bad delimiter \\{tok.name}")

    def atom(self, single: bool = False) -> MathTree:
        tok = self.peek()
        if tok is None:
            raise MathError("unexpected end of math")
        if _is_cat(tok, Catcode.BEGIN_GROUP):
            return self.group()
        self.take()
        if type(tok) is Char:
            if tok.cat == Catcode.LETTER:
                return Mi(tok.char)
            if _is_digit(tok):
                if single:
                    return Mn(tok.char)
                text = tok.char
                while True:
                    nxt = self.peek()
                    if _is_digit(nxt):
                        text += nxt.char
                        self.take()
                    elif (type(nxt) is Char and nxt.char == "." and
                          self.i + 1 < len(self.toks) and _is_digit(self.toks[self.i + 1])):
                        text += "."
                        self.take()
                    else:
                        break
                return Mn(text)
            if tok.cat in (Catcode.SUPERSCRIPT, Catcode.SUBSCRIPT):
                raise UnbalancedScripts("script without argument")
            if tok.cat == Catcode.OTHER and tok.char in FENCES and not single:
                end = self.find_closer(tok.char)
                if end is not None:
                    return self.fenced(tok.char, end)
            cls = _op_class(tok)
            return Mo(cls[1] if cls else CHAR_OPS.get(tok.char, tok.char))
        name = tok.name
        if name in GREEK:
            return Mi(GREEK[name])
        if name in IDENTIFIERS:
            return Mi(IDENTIFIERS[name])
        if name in OPERATOR_ATOMS:
            return Mo(OPERATOR_ATOMS[name])
        cls = _op_class(tok)
        if cls is not None:
            return Mo(cls[1])
        if name == "frac":
            num = self.atom(single=True)
            den = self.atom(single=True)
            return Mfrac(num, den)
        if name == "sqrt":
            return Msqrt(self.atom(single=True))
        if name == "left":
            opening = self.delimiter()
            inner = self.expr()
            if not _is_cs(self.peek(), "right"):
                raise MathError("\\left without matching \\right")
            self.take()
            closing = self.delimiter()
            items = []
            if opening is not None:
                items.append(Mo(opening, stretchy=True))
            if inner is not None:
                items.append(inner)
            if closing is not None:
                items.append(Mo(closing, stretchy=True))
            return Mrow(tuple(items))
        if self.strict:
            raise UnknownMathCommand(f"unknown math command \\{name}")
        if self.warn is not None:
            self.warn(f"unknown math command \\{name}")
        return Mo("\\" + name)


def parse_math(tokens: Sequence[Token], *, strict: bool = False,
               warn: Callable[[str], None] | None = None) -> MathTree:
    """Parse a math-mode token list; an empty list gives an empty mrow."""
    p = _Parser(tokens, strict, warn)
    tree = p.expr()
    if p.peek() is not None:
        tok = p.peek()
        raise MathError("unbalanced }" if type(tok) is Char else "\\right without \\left")
    return tree if tree is not None else Mrow(())


# -- serialization ------------------------------------------------------------

def _to_element(tree: MathTree) -> Element:
    if isinstance(tree, Mo):
        attrs = [("stretchy", "true")] if tree.stretchy else []
        return Element("mo", attrs, [Text(tree.text)])
    if isinstance(tree, (Mi, Mn)):
        return Element(type(tree).__name__.lower(), [], [Text(tree.text)])
    if isinstance(tree, Mrow):
        return Element("mrow", [], [_to_element(c) for c in tree.children])
    parts = [getattr(tree, f) for f in tree.__dataclass_fields__]
    return Element(type(tree).__name__.lower(), [], [_to_element(p) for p in parts])


def mathml_serialize(tree: MathTree, display: str = "inline") -> Element:
    if display not in ("inline", "block"):
        raise ValueError(f"display must be inline or block, not {display!r}")
    return Element("math", [("display", display)], [_to_element(tree)], ns=MATHML_NS)


_ARITY = {"msup": Msup, "msub": Msub, "msubsup": Msubsup, "mfrac": Mfrac, "msqrt": Msqrt}


def tree_from_element(el: Element) -> MathTree:
    """Inverse of the serializer, used when reading documents back."""
    text = "".join(c.text for c in el.children if isinstance(c, Text))
    kids = [tree_from_element(c) for c in el.children if isinstance(c, Element)]
    if el.name == "math":
        if len(kids) != 1:
            raise MathError("math element must have exactly one child")
        return kids[0]
    if el.name == "mi":
        return Mi(text)
    if el.name == "mn":
        return Mn(text)
    if el.name == "mo":
        return Mo(text, el.get("stretchy") == "true")
    if el.name == "mrow":
        return Mrow(tuple(kids))
    if el.name in _ARITY:
        try:
            return _ARITY[el.name](*kids)
        except TypeError as exc:
            raise MathError(f"bad arity for {el.name}") from exc
    raise MathError(f"unsupported MathML element {el.name}")
