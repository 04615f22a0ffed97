"""TeX emulation: macro expansion, grouped state and digestion into DocNodes."""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass

from .bindings import (ArgInsert, Constructor, Delimited, ElementClose, ElementOpen, LetChar,
                       LiteralMatch, LiteralText, Macro, Primitive, Undelimited, UNDELIMITED,
                       check_body)
from .dimen import INFINITY, UNITS, to_sp
from .doc import BLOCK_CONTAINERS, INLINE, OPEN_ENDED, SCHEMA, Document, MathNode, kind
from .errors import (BadParameterIndex, ConversionTimeout, EngineError, ExpansionLimitExceeded,
                     FatalConversionError, MissingUnit, NumberTooLarge, ProfilerDisabled,
                     RunawayArgument, TexmlError, UnbalancedConditional, UnbalancedGroup,
                     UndefinedControlSequence)
from .graphics import FontModel
from .mathml import parse_math
from .profiler import TOPLEVEL, Profiler
from .tokens import (CS, Catcode, CatcodeTable, Char, Param, Tokenizer, detokenize,
                     is_control_word)
from .xmlio import Element, Text

log = logging.getLogger(__name__)

VERTICAL, HORIZONTAL, MATH = "vertical", "horizontal", "math"
CATCODES, DEFS, COUNTS, DIMENS = range(4)
MISSING = object()
DEFAULT_EXPANSION_LIMIT = 10000

_XML_ILLEGAL = re.compile("[^\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")


class _EndArg:
    __slots__ = ()

    def __repr__(self):
        return "END_ARG"


END_ARG = _EndArg()


class NoExpand:
    """Wrapper for a token protected by \\noexpand; means \\relax if executed."""

    __slots__ = ("token",)

    def __init__(self, token):
        self.token = token

    def __repr__(self):
        return f"NoExpand({self.token!r})"


@dataclass
class Message:
    level: str
    text: str
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        return f"{where}{self.level}: {self.text}"


class Group:
    __slots__ = ("kind", "saved", "line")

    def __init__(self, kind: str, line: int | None = None):
        self.kind = kind
        self.saved: dict = {}
        self.line = line


def _is_digit(tok) -> bool:
    return type(tok) is Char and tok.cat == Catcode.OTHER and "0" <= tok.char <= "9"


def _is_other(tok, c: str) -> bool:
    return type(tok) is Char and tok.cat == Catcode.OTHER and tok.char == c


def parse_param_text(tokens) -> tuple:
    """Turn a \\def parameter text (raw tokens) into an ArgSpec."""
    items: list = []
    literal: list = []
    n = 0
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if type(t) is Char and t.cat == Catcode.PARAMETER:
            d = tokens[i + 1] if i + 1 < len(tokens) else None
            if not _is_digit(d) or int(d.char) != n + 1:
                raise BadParameterIndex("parameters must be numbered consecutively")
            if n == 0:
                if literal:
                    items.append(LiteralMatch(tuple(literal)))
            else:
                items.append(Delimited(tuple(literal)) if literal else UNDELIMITED)
            literal = []
            n += 1
            i += 2
            continue
        if type(t) is Char and t.cat in (Catcode.BEGIN_GROUP, Catcode.END_GROUP):
            raise EngineError("braces are not allowed in a parameter text")
        literal.append(t)
        i += 1
    if n == 0:
        if literal:
            items.append(LiteralMatch(tuple(literal)))
    else:
        items.append(Delimited(tuple(literal)) if literal else UNDELIMITED)
    if n > 9:
        raise BadParameterIndex("you already have nine parameters")
    return tuple(items)


def convert_params(body, n: int) -> tuple:
    """Replace ``#k`` with Param(k) and ``##`` with a single parameter char."""
    out = []
    i = 0
    while i < len(body):
        t = body[i]
        if type(t) is Char and t.cat == Catcode.PARAMETER:
            nxt = body[i + 1] if i + 1 < len(body) else None
            if type(nxt) is Char and nxt.cat == Catcode.PARAMETER:
                out.append(nxt)
            elif _is_digit(nxt) and 1 <= int(nxt.char) <= n:
                out.append(Param(int(nxt.char)))
            else:
                raise BadParameterIndex("illegal parameter number in definition")
            i += 2
            continue
        out.append(t)
        i += 1
    return tuple(out)


def show_tokens(tokens, catcodes: CatcodeTable | None = None) -> str:
    """Render tokens the way TeX's \\message displays them."""
    out = []
    for t in tokens:
        if type(t) is Char:
            out.append(t.char * 2 if t.cat == Catcode.PARAMETER else t.char)
        elif type(t) is CS:
            name = t.name
            if len(name) == 1:
                is_letter = (catcodes[name] == Catcode.LETTER) if catcodes is not None else is_control_word(name)
                out.append("\\" + name + (" " if is_letter else ""))
            else:
                out.append("\\" + name + " ")
        elif type(t) is Param:
            out.append(f"#{t.index}")
    return "".join(out)


def verbatim_text(tokens) -> str:
    out = []
    for t in tokens:
        if type(t) is Char:
            out.append(t.char)
        elif type(t) is CS:
            out.append("\\" + t.name)
    return "".join(out).strip()


class Engine:
    """Mutable interpreter state for one conversion (never shared)."""

    def __init__(self, registry, *, strict: bool = False, profiler: Profiler | None = None,
                 timeout: float | None = None, font: FontModel | None = None,
                 expansion_limit: int = DEFAULT_EXPANSION_LIMIT):
        self.registry = registry
        self.strict = strict
        self.font = font or FontModel()
        self.catcodes = CatcodeTable()
        self.defs: dict = dict(registry.bindings)
        self.counts: dict[int, int] = {}
        self.dimens: dict[int, int] = {}
        self._tables = (self.catcodes, self.defs, self.counts, self.dimens)
        self.groups = [Group("bottom")]
        self.conds: list[str] = []
        self.pending: list = []
        self.mouth: Tokenizer | None = None
        self.profiler = profiler
        self.messages: list[Message] = []
        self.tex_messages: list[str] = []
        self.expansion_limit = expansion_limit
        self._expansions = 0
        self._deadline = time.monotonic() + timeout if timeout else None
        self._ticks = 0
        self.global_prefix = False
        self.definitions_only = False
        self.in_math = False
        self.root = Element("document")
        self.stack: list[Element] = [self.root]
        self._text: list[str] = []
        self.picture = None
        self._child_sections: dict = {}
        self._anchors = 0
        self.labels: dict[str, str] = {}

    # -- diagnostics ---------------------------------------------------------

    def position(self) -> tuple[int | None, int | None]:
        if self.mouth is None:
            return None, None
        return self.mouth.line, self.mouth.column

    def warn(self, text: str) -> None:
        line, col = self.position()
        self.messages.append(Message("warning", text, line, col))
        log.debug("warning at %s:%s: %s", line, col, text)

    def _tick(self) -> None:
        self._ticks += 1
        if (self._ticks & 1023) == 0 and self._deadline is not None:
            if time.monotonic() > self._deadline:
                raise ConversionTimeout("conversion exceeded its time limit")

    @property
    def mode(self) -> str:
        if self.in_math:
            return MATH
        return VERTICAL if self.stack[-1].name in BLOCK_CONTAINERS else HORIZONTAL

    # -- input ---------------------------------------------------------------

    def next_raw(self):
        if self.pending:
            return self.pending.pop()
        if self.mouth is None:
            return None
        return self.mouth.next_token()

    def back(self, tok) -> None:
        self.pending.append(tok)

    def push(self, tokens) -> None:
        self.pending.extend(reversed(tokens))

    def meaning(self, tok):
        t = type(tok)
        if t is CS:
            return self.defs.get(tok.name)
        if t is Char and tok.cat == Catcode.ACTIVE:
            return self.defs.get(tok)
        return None

    def key(self, tok):
        if type(tok) is CS:
            return tok.name
        if type(tok) is Char and tok.cat == Catcode.ACTIVE:
            return tok
        raise EngineError(f"missing control sequence (got {tok!r})")

    # -- grouped state -------------------------------------------------------

    def assign(self, table: int, key, value) -> None:
        """Set a table entry locally (or globally after \\global)."""
        tbl = self._tables[table]
        slot = (table, key)
        if self.global_prefix:
            for g in self.groups:
                if slot in g.saved:
                    g.saved[slot] = value
        elif len(self.groups) > 1:
            saved = self.groups[-1].saved
            if slot not in saved:
                saved[slot] = tbl.get(key, MISSING)
        if value is MISSING or value is None:
            tbl.pop(key, None)
        else:
            tbl[key] = value

    def begin_group(self, kind: str) -> None:
        self.groups.append(Group(kind, self.position()[0]))

    def end_group(self, kind: str) -> None:
        if len(self.groups) == 1:
            raise UnbalancedGroup("too many }'s" if kind == "simple" else f"extra end of {kind} group")
        g = self.groups[-1]
        if g.kind != kind:
            raise UnbalancedGroup(f"{kind} group end while a {g.kind} group is open")
        self.groups.pop()
        for (table, key), old in reversed(list(g.saved.items())):
            tbl = self._tables[table]
            if old is MISSING:
                tbl.pop(key, None)
            else:
                tbl[key] = old

    def define_macro(self, name, spec, body) -> None:
        check_body(spec, body)
        self.assign(DEFS, name, Macro(tuple(spec), tuple(body)))

    # -- expansion -----------------------------------------------------------

    def label_of(self, tok) -> str:
        return "\\" + tok.name if type(tok) is CS else tok.char

    def get_x(self):
        """Next unexpandable token, expanding macros and expandable primitives."""
        pending = self.pending
        defs = self.defs
        while True:
            if pending:
                tok = pending.pop()
            elif self.mouth is not None:
                tok = self.mouth.next_token()
                if tok is None:
                    return None
            else:
                return None
            tt = type(tok)
            if tt is CS:
                b = defs.get(tok.name)
            elif tt is Char and tok.cat == Catcode.ACTIVE:
                b = defs.get(tok)
            else:
                self._expansions = 0
                return tok
            if b is not None:
                bt = type(b)
                if bt is Macro:
                    self.expand_macro(tok, b)
                    continue
                if bt is Primitive and b.expandable:
                    self.call(tok, b)
                    continue
            self._expansions = 0
            return tok

    def expand_once(self, tok) -> None:
        """Expand ``tok`` one level (as \\expandafter does) or push it back."""
        b = self.meaning(tok)
        if type(b) is Macro:
            self.expand_macro(tok, b)
        elif type(b) is Primitive and b.expandable:
            self.call(tok, b)
        else:
            self.back(tok)

    def is_expandable(self, tok) -> bool:
        b = self.meaning(tok)
        return type(b) is Macro or (type(b) is Primitive and b.expandable)

    def expand_macro(self, tok, m: Macro) -> None:
        self._expansions += 1
        if self._expansions > self.expansion_limit:
            raise ExpansionLimitExceeded(
                f"expansion depth exceeded {self.expansion_limit} while expanding {self.label_of(tok)}")
        self._tick()
        prof = self.profiler
        if prof is not None:
            prof.enter(self.label_of(tok))
        try:
            if m.spec:
                args = self.match_args(tok, m.spec)
            if m.has_params:
                body = []
                for t in m.body:
                    if type(t) is Param:
                        body.extend(args[t.index - 1])
                    else:
                        body.append(t)
                self.pending.extend(reversed(body))
            else:
                self.pending.extend(reversed(m.body))
        finally:
            if prof is not None:
                prof.exit()

    def call(self, tok, prim: Primitive):
        prof = self.profiler
        if prof is None:
            return prim.handler(self, tok)
        prof.enter(self.label_of(tok))
        try:
            return prim.handler(self, tok)
        finally:
            prof.exit()

    # -- argument matching ---------------------------------------------------

    def _runaway(self, what: str = "argument"):
        return RunawayArgument(f"runaway {what}: input ended while scanning")

    def match_args(self, tok, spec) -> list:
        args = []
        for item in spec:
            it = type(item)
            if it is Undelimited:
                args.append(self.read_undelimited())
            elif it is Delimited:
                args.append(self.read_delimited(item.terminator))
            else:
                for expected in item.tokens:
                    t = self.next_raw()
                    if t is None or t is END_ARG:
                        raise self._runaway()
                    if t != expected:
                        raise EngineError(f"use of {self.label_of(tok)} doesn't match its definition")
        return args

    def read_balanced(self) -> list:
        """Tokens up to the '}' matching an already-consumed '{'."""
        depth = 1
        out = []
        while True:
            t = self.next_raw()
            if t is None or t is END_ARG:
                raise self._runaway("text")
            if type(t) is Char:
                if t.cat == Catcode.BEGIN_GROUP:
                    depth += 1
                elif t.cat == Catcode.END_GROUP:
                    depth -= 1
                    if depth == 0:
                        return out
            out.append(t)

    def read_undelimited(self) -> list:
        while True:
            t = self.next_raw()
            if t is None or t is END_ARG:
                raise self._runaway()
            if not (type(t) is Char and t.cat == Catcode.SPACE):
                break
        if type(t) is Char:
            if t.cat == Catcode.BEGIN_GROUP:
                return self.read_balanced()
            if t.cat == Catcode.END_GROUP:
                raise EngineError("argument has an extra }")
        return [t]

    def read_delimited(self, term: tuple) -> list:
        acc: list = []
        depth = 0
        n = len(term)
        last = term[-1]
        while True:
            t = self.next_raw()
            if t is None or t is END_ARG:
                raise self._runaway()
            if type(t) is Char:
                if t.cat == Catcode.BEGIN_GROUP:
                    depth += 1
                elif t.cat == Catcode.END_GROUP:
                    depth -= 1
                    if depth < 0:
                        raise EngineError("argument has an extra }")
            acc.append(t)
            if depth == 0 and t == last and len(acc) >= n and tuple(acc[-n:]) == term:
                break
        arg = acc[:-n]
        if len(arg) >= 2 and _brace_wrapped(arg):
            arg = arg[1:-1]
        return arg

    # -- scanning ------------------------------------------------------------

    def get_x_nonspace(self):
        while True:
            t = self.get_x()
            if not (type(t) is Char and t.cat == Catcode.SPACE):
                return t

    def scan_optional_equals(self) -> None:
        t = self.get_x_nonspace()
        if not _is_other(t, "="):
            self.back(t)

    def scan_keyword(self, word: str) -> bool:
        seen = []
        for i, ch in enumerate(word):
            t = self.get_x_nonspace() if i == 0 else self.get_x()
            if type(t) is Char and t.char.lower() == ch and t.cat in (Catcode.LETTER, Catcode.OTHER):
                seen.append(t)
                continue
            if t is not None:
                self.back(t)
            self.push(seen)
            return False
        return True

    def _skip_one_space(self) -> None:
        t = self.get_x()
        if t is not None and not (type(t) is Char and t.cat == Catcode.SPACE):
            self.back(t)

    def _signs(self) -> tuple[bool, object]:
        negative = False
        while True:
            t = self.get_x_nonspace()
            if _is_other(t, "-"):
                negative = not negative
            elif _is_other(t, "+"):
                pass
            else:
                return negative, t

    def _internal(self, t):
        b = self.meaning(t)
        if type(b) is Primitive and b.reader is not None:
            return b.reader(self)
        return None

    def scan_char_code(self) -> int:
        return self.scan_int()

    def scan_int(self) -> int:
        negative, t = self._signs()
        value = self._scan_unsigned_int(t)
        return -value if negative else value

    def _scan_unsigned_int(self, t) -> int:
        if _is_other(t, "`"):
            c = self.next_raw()
            if type(c) is CS and len(c.name) == 1:
                value = ord(c.name)
            elif type(c) is Char:
                value = ord(c.char)
            else:
                raise EngineError("improper alphabetic constant")
            self._skip_one_space()
            return value
        radix = 10
        if _is_other(t, "'"):
            radix, t = 8, self.get_x()
        elif _is_other(t, '"'):
            radix, t = 16, self.get_x()
        internal = self._internal(t)
        if internal is not None:
            return internal[1]
        digits = []
        while t is not None and type(t) is Char and t.cat in (Catcode.OTHER, Catcode.LETTER) and \
                _digit_value(t.char, radix) is not None and (t.cat == Catcode.OTHER or radix == 16):
            digits.append(t.char)
            t = self.get_x()
        if not digits:
            if t is not None:
                self.back(t)
            if self.strict:
                raise EngineError("missing number")
            self.warn("missing number, treated as zero")
            return 0
        if t is not None and not (type(t) is Char and t.cat == Catcode.SPACE):
            self.back(t)
        value = int("".join(digits), radix)
        if value > INFINITY:
            raise NumberTooLarge("number too big")
        return value

    def scan_register(self) -> int:
        n = self.scan_int()
        if not 0 <= n <= 255:
            raise EngineError(f"bad register code {n}")
        return n

    def scan_dimen(self, default_unit: str | None = None) -> int:
        negative, t = self._signs()
        internal = self._internal(t)
        if internal is not None:
            kind_, value = internal
            if kind_ == "dimen":
                return -value if negative else value
            integer, frac = value, ""
            if integer < 0:
                negative, integer = not negative, -integer
        else:
            digits, frac = [], []
            seen_point = False
            while t is not None and type(t) is Char and t.cat == Catcode.OTHER:
                if "0" <= t.char <= "9":
                    (frac if seen_point else digits).append(t.char)
                elif t.char in ".," and not seen_point:
                    seen_point = True
                else:
                    break
                t = self.get_x()
            if not digits and not seen_point:
                if t is not None:
                    self.back(t)
                raise EngineError("missing number in dimension")
            if t is not None:
                self.back(t)
            integer = int("".join(digits) or "0")
            if integer > INFINITY:
                raise NumberTooLarge("number too big")
            frac = "".join(frac)
        # coefficient times an internal dimension
        t = self.get_x_nonspace()
        internal = self._internal(t)
        if internal is not None and internal[0] == "dimen":
            from .dimen import nx_plus_y, round_decimals, xn_over_d
            v = internal[1]
            f = round_decimals(frac) if frac else 0
            val = nx_plus_y(integer, v, xn_over_d(v, f, 65536)[0])
            return -val if negative else val
        if t is not None:
            self.back(t)
        for unit in UNITS:
            if self.scan_keyword(unit):
                break
        else:
            if default_unit is None:
                raise MissingUnit("illegal unit of measure (missing unit)")
            unit = default_unit
        self._skip_one_space()
        return to_sp(integer, frac, unit, em=self.font.em, ex=self.font.ex, negative=negative)

    def _scan_from(self, tokens, scanner):
        self.pending.append(END_ARG)
        self.push(tokens)
        value = scanner()
        while True:
            t = self.next_raw()
            if t is END_ARG:
                return value
            if t is None:
                raise self._runaway()
            if not (type(t) is Char and t.cat == Catcode.SPACE):
                self._drain_to_end_arg()
                raise EngineError(f"unexpected {t!r} after a value")

    def _drain_to_end_arg(self) -> None:
        while True:
            t = self.next_raw()
            if t is END_ARG or t is None:
                return

    def scan_dimen_from(self, tokens, default_unit: str | None = None) -> int:
        return self._scan_from(tokens, lambda: self.scan_dimen(default_unit))

    def scan_int_from(self, tokens) -> int:
        return self._scan_from(tokens, self.scan_int)

    # -- expanded token lists (\edef, \message) ------------------------------

    def scan_expanded_balanced(self) -> list:
        """Expand up to the '}' matching an already consumed '{'."""
        out = []
        depth = 1
        while True:
            t = self.next_raw()
            if t is None or t is END_ARG:
                raise self._runaway("definition")
            tt = type(t)
            if tt is NoExpand:
                out.append(t.token)
                continue
            if tt is Char and t.cat != Catcode.ACTIVE:
                if t.cat == Catcode.BEGIN_GROUP:
                    depth += 1
                elif t.cat == Catcode.END_GROUP:
                    depth -= 1
                    if depth == 0:
                        return out
                out.append(t)
                continue
            b = self.meaning(t)
            if type(b) is Macro:
                self.expand_macro(t, b)
                continue
            if type(b) is Primitive and b.expandable:
                self.call(t, b)
                continue
            out.append(t)

    def scan_left_brace(self) -> None:
        while True:
            t = self.get_x()
            if t is None:
                raise self._runaway()
            if type(t) is Char and t.cat == Catcode.BEGIN_GROUP:
                return
            if type(t) is Char and t.cat == Catcode.SPACE:
                continue
            if type(t) is CS and t.name == "relax":
                continue
            raise EngineError("missing { inserted")

    # -- conditionals --------------------------------------------------------

    def conditional(self, result: bool) -> None:
        if result:
            self.conds.append("if")
            return
        if self.skip_conditional(stop_at_else=True) == "else":
            self.conds.append("else")

    def skip_conditional(self, stop_at_else: bool) -> str:
        depth = 0
        while True:
            t = self.next_raw()
            if t is None or t is END_ARG:
                raise UnbalancedConditional("incomplete conditional: end of input while skipping")
            b = self.meaning(t)
            if type(b) is not Primitive:
                continue
            if b.conditional:
                depth += 1
            elif b.name == "fi":
                if depth == 0:
                    return "fi"
                depth -= 1
            elif b.name == "else" and depth == 0 and stop_at_else:
                return "else"

    # -- digestion -----------------------------------------------------------

    def flush_text(self) -> None:
        if not self._text:
            return
        s = "".join(self._text)
        self._text.clear()
        if _XML_ILLEGAL.search(s):
            self.warn("dropped characters that cannot appear in XML")
            s = _XML_ILLEGAL.sub("", s)
            if not s:
                return
        top = self.stack[-1]
        if top.children and isinstance(top.children[-1], Text):
            top.children[-1].text += s
        else:
            top.children.append(Text(s))

    def _content_check(self, what: str) -> None:
        if self.definitions_only:
            raise EngineError(f"unexpected {what} in a binding file")

    def add_char(self, c: str) -> None:
        if self.stack[-1].name in BLOCK_CONTAINERS:
            self._content_check(f"text {c!r}")
            self.start_paragraph()
        self._text.append(c)

    def add_text(self, s: str) -> None:
        for c in s:
            if c == " ":
                self.add_space()
            else:
                self.add_char(c)

    def add_space(self) -> None:
        top = self.stack[-1]
        if top.name in BLOCK_CONTAINERS:
            return
        buf = self._text
        if buf:
            if buf[-1] != " ":
                buf.append(" ")
            return
        if not top.children:
            if top.name in ("p", "title"):
                return
        elif isinstance(top.children[-1], Text) and top.children[-1].text.endswith(" "):
            return
        buf.append(" ")

    def add_text_space(self) -> None:
        """An explicit space: kept unless one was just emitted."""
        buf = self._text
        if buf and buf[-1] == " ":
            return
        if not buf:
            top = self.stack[-1]
            if top.children and isinstance(top.children[-1], Text) and top.children[-1].text.endswith(" "):
                return
        buf.append(" ")

    def push_container(self, el: Element) -> None:
        self.flush_text()
        self.stack.append(el)

    def pop_container(self) -> Element:
        self.flush_text()
        if len(self.stack) == 1:
            raise EngineError("cannot close the document element")
        return self.stack.pop()

    def start_paragraph(self) -> None:
        self.flush_text()
        para = Element("para")
        p = Element("p")
        para.children.append(p)
        self.stack[-1].children.append(para)
        self.stack.append(para)
        self.stack.append(p)

    def end_paragraph(self) -> None:
        if len(self.stack) < 3 or self.stack[-1].name != "p" or self.stack[-2].name != "para":
            return
        self.flush_text()
        p = self.stack.pop()
        para = self.stack.pop()
        if p.children and isinstance(p.children[-1], Text):
            stripped = p.children[-1].text.rstrip(" ")
            if stripped:
                p.children[-1].text = stripped
            else:
                p.children.pop()
        if not p.children:
            self.stack[-1].children.remove(para)

    def insert_node(self, node) -> bool:
        """Attach a node at the current point, opening/closing paragraphs and
        sections as the schema requires. Returns False if it had to be refused."""
        k = kind(node)
        self._content_check(f"<{k}>")
        if k in INLINE:
            if self.stack[-1].name in BLOCK_CONTAINERS:
                self.start_paragraph()
        else:
            self.end_paragraph()
        self.flush_text()
        if k == "section":
            level = int(node.get("level", "1"))
            while self.stack[-1].name == "section" and int(self.stack[-1].get("level")) >= level:
                self.stack.pop()
        top = self.stack[-1]
        rule = SCHEMA.get(top.name)
        ok = rule is not None and k in rule.children
        if ok and rule.first == k:
            ok = not (top.children and kind(top.children[0]) == k)
        if not ok:
            msg = f"<{k}> is not allowed inside <{top.name}>"
            if self.strict:
                raise EngineError(msg)
            self.warn(msg)
            self.insert_node(Element("error", [], [Text(f"<{k}>")]))
            return False
        if k == "section":
            parent_id = top.get("xml:id") if top.name == "section" else None
            n = self._child_sections[parent_id] = self._child_sections.get(parent_id, 0) + 1
            node.set("xml:id", f"{parent_id}.S{n}" if parent_id else f"S{n}")
        if rule.first == k:
            top.children.insert(0, node)
        else:
            top.children.append(node)
        return True

    def add_label(self, key: str) -> None:
        target = None
        for el in reversed(self.stack):
            if el.name == "section":
                target = el
                break
        if target is None:
            self._anchors += 1
            target = Element("anchor", [("xml:id", f"A{self._anchors}")])
            if not self.insert_node(target):
                return
        if key in self.labels:
            self.warn(f"label {key!r} multiply defined")
            return
        labels = target.get("labels")
        target.set("labels", f"{labels} {key}" if labels else key)
        self.labels[key] = target.get("xml:id")

    def undefined(self, tok) -> None:
        name = self.label_of(tok)
        if self.strict or self.definitions_only:
            raise UndefinedControlSequence(f"undefined control sequence {name}")
        self.warn(f"undefined control sequence {name}")
        self.insert_node(Element("error", [], [Text(name)]))

    def misplaced(self, tok) -> None:
        msg = f"misplaced character {tok.char!r}"
        if self.strict or self.definitions_only:
            raise EngineError(msg)
        self.warn(msg)
        self.insert_node(Element("error", [], [Text(tok.char)]))

    def dispatch(self, tok) -> None:
        tt = type(tok)
        if tt is Char:
            cat = tok.cat
            if cat == Catcode.LETTER or cat == Catcode.OTHER:
                self.add_char(tok.char)
            elif cat == Catcode.SPACE:
                self.add_space()
            elif cat == Catcode.BEGIN_GROUP:
                self.begin_group("simple")
            elif cat == Catcode.END_GROUP:
                self.end_group("simple")
            elif cat == Catcode.MATH_SHIFT:
                self.math()
            elif cat == Catcode.ACTIVE:
                self._dispatch_binding(tok, self.defs.get(tok))
            else:
                self.misplaced(tok)
        elif tt is CS:
            self._dispatch_binding(tok, self.defs.get(tok.name))
        elif tt is NoExpand:
            pass
        else:
            raise EngineError(f"unexpected token {tok!r}")

    def _dispatch_binding(self, tok, b) -> None:
        if b is None:
            self.undefined(tok)
            return
        bt = type(b)
        if bt is Primitive:
            self.call(tok, b)
        elif bt is Constructor:
            self.construct(tok, b)
        elif bt is LetChar:
            self.dispatch(b.token)
        else:
            # unexpandable macro: nothing to do in this engine
            self.expand_macro(tok, b)

    def digest_loop(self):
        while True:
            tok = self.get_x()
            if tok is None or tok is END_ARG:
                return tok
            self._tick()
            self.dispatch(tok)

    def digest_arg(self, tokens) -> None:
        """Digest an argument's tokens in a group into the current container."""
        self.begin_group("arg")
        depth = len(self.stack)
        self.pending.append(END_ARG)
        self.push(tokens)
        if self.digest_loop() is not END_ARG:
            raise self._runaway()
        if len(self.stack) > depth:
            self.end_paragraph()
        while len(self.stack) > depth:
            self.pop_container()
        self.flush_text()
        self.end_group("arg")

    def digest(self, tokens) -> list:
        """Digest a token list into a scratch block container; return its nodes."""
        scratch = Element("document")
        self.push_container(scratch)
        try:
            self.digest_arg(tokens)
        finally:
            while self.stack and self.stack[-1] is not scratch:
                self.stack.pop()
            self.stack.pop()
        return scratch.children

    def construct(self, tok, c: Constructor) -> None:
        prof = self.profiler
        if prof is not None:
            prof.enter(self.label_of(tok))
        try:
            self._construct(tok, c)
        finally:
            if prof is not None:
                prof.exit()

    def _construct(self, tok, c: Constructor) -> None:
        args = self.match_args(tok, c.spec) if c.spec else []
        opened: list[Element] = []
        root_inserted = False
        for item in c.template.items:
            it = type(item)
            if it is ElementOpen:
                attrs = [(k, "".join(verbatim_text(args[p - 1]) if isinstance(p, int) else p
                                     for p in v)) for k, v in item.attrs]
                el = Element(item.name, attrs)
                if not opened:
                    root_inserted = self.insert_node(el)
                else:
                    self.flush_text()
                    self.stack[-1].children.append(el)
                self.push_container(el)
                opened.append(el)
            elif it is ElementClose:
                el = opened.pop()
                if self.stack[-1] is not el:
                    self.end_paragraph()
                    while len(self.stack) > 1 and self.stack[-1] is not el:
                        self.pop_container()
                if not opened and root_inserted and el.name in OPEN_ENDED:
                    self.flush_text()
                else:
                    self.pop_container()
            elif it is ArgInsert:
                if item.mode == "digested":
                    self.digest_arg(args[item.index - 1])
                else:
                    self.add_text(verbatim_text(args[item.index - 1]))
            elif it is LiteralText:
                self.add_text(item.text)

    def math(self) -> None:
        display = False
        t = self.next_raw()
        if type(t) is Char and t.cat == Catcode.MATH_SHIFT:
            display = True
        elif t is not None:
            self.back(t)
        self._content_check("math")
        toks = []
        depth = 0
        self.in_math = True
        try:
            while True:
                t = self.get_x()
                if t is None or t is END_ARG:
                    raise EngineError("missing $ inserted: math not closed")
                tt = type(t)
                if tt is NoExpand:
                    t = t.token
                elif tt is Char:
                    if t.cat == Catcode.MATH_SHIFT and depth == 0:
                        if display:
                            t2 = self.next_raw()
                            if not (type(t2) is Char and t2.cat == Catcode.MATH_SHIFT):
                                raise EngineError("display math should end with $$")
                        break
                    if t.cat == Catcode.BEGIN_GROUP:
                        depth += 1
                    elif t.cat == Catcode.END_GROUP:
                        depth -= 1
                        if depth < 0:
                            raise UnbalancedGroup("extra } in math")
                elif tt is CS:
                    b = self.defs.get(t.name)
                    if type(b) is LetChar:
                        t = b.token
                    elif type(b) is Primitive:
                        if b.name == "relax":
                            continue
                        if b.name == "par":
                            raise EngineError("missing $ inserted before paragraph end")
                        self.call(t, b)
                        continue
                toks.append(t)
        finally:
            self.in_math = False
        tree = parse_math(toks, strict=self.strict, warn=self.warn)
        self.insert_node(MathNode(detokenize(toks).strip(), tree, "block" if display else "inline"))

    # -- driver --------------------------------------------------------------

    def finish(self) -> None:
        self.end_paragraph()
        while len(self.stack) > 1:
            self.pop_container()
        self.flush_text()
        if len(self.groups) > 1:
            g = self.groups[-1]
            raise UnbalancedGroup(f"{len(self.groups) - 1} unclosed {g.kind} group(s) at end of input",
                                  g.line, None)
        if self.conds:
            raise UnbalancedConditional(f"{len(self.conds)} unterminated conditional(s) at end of input")
        if self.picture is not None:
            raise EngineError("gpicture environment not closed")

    def _fatal(self, exc: TexmlError) -> FatalConversionError:
        line = getattr(exc, "line", None)
        col = getattr(exc, "column", None)
        if line is None:
            line, col = self.position()
        return FatalConversionError(exc, line, col)

    def run(self, source: str) -> Document:
        try:
            self.mouth = Tokenizer(source, self.catcodes)
            if self.digest_loop() is END_ARG:
                raise EngineError("internal error: stray argument end")
            self.finish()
        except TexmlError as exc:
            raise self._fatal(exc) from exc
        return Document(self.root, dict(self.labels), list(self.messages))

    def run_bindings(self, source: str) -> None:
        """Execute a binding file: definitions only, no document content."""
        self.definitions_only = True
        self.mouth = Tokenizer(source, self.catcodes)
        self.digest_loop()
        self.finish()

    def profile_report(self):
        if self.profiler is None:
            raise ProfilerDisabled("profiling was not enabled for this conversion")
        return self.profiler.records()


def _brace_wrapped(arg: list) -> bool:
    first, last = arg[0], arg[-1]
    if not (type(first) is Char and first.cat == Catcode.BEGIN_GROUP and
            type(last) is Char and last.cat == Catcode.END_GROUP):
        return False
    depth = 0
    for i, t in enumerate(arg):
        if type(t) is Char:
            if t.cat == Catcode.BEGIN_GROUP:
                depth += 1
            elif t.cat == Catcode.END_GROUP:
                depth -= 1
                if depth == 0 and i != len(arg) - 1:
                    return False
    return True


def _digit_value(c: str, radix: int) -> int | None:
    v = "0123456789ABCDEF".find(c)
    if v < 0 or v >= radix:
        return None
    return v


def convert(source: str, registry, *, strict: bool = False, profile: bool = False,
            timeout: float | None = None, font: FontModel | None = None,
            expansion_limit: int = DEFAULT_EXPANSION_LIMIT) -> Document:
    """Convert TeX source into a semantic Document using ``registry``."""
    profiler = Profiler() if profile else None
    if profiler is not None:
        profiler.enter(TOPLEVEL)
    try:
        engine = Engine(registry, strict=strict, profiler=profiler, timeout=timeout, font=font,
                        expansion_limit=expansion_limit)
        doc = engine.run(source)
    finally:
        if profiler is not None:
            profiler.unwind()
    if profiler is not None:
        doc.profile = profiler.records()
    return doc


def profile_report(target) -> list:
    """Profile records of a Document or Engine, sorted by exclusive time."""
    if isinstance(target, Engine):
        return target.profile_report()
    if getattr(target, "profile", None) is None:
        raise ProfilerDisabled("profiling was not enabled for this conversion")
    return target.profile
