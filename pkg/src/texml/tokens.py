"""Lexical layer: category codes, tokens and the TeX input scanner."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from string import ascii_letters
from typing import Iterable, Iterator

from .errors import InvalidCharacter, UnterminatedControlSequence


class Catcode(IntEnum):
    ESCAPE = 0
    BEGIN_GROUP = 1
    END_GROUP = 2
    MATH_SHIFT = 3
    ALIGNMENT = 4
    END_OF_LINE = 5
    PARAMETER = 6
    SUPERSCRIPT = 7
    SUBSCRIPT = 8
    IGNORED = 9
    SPACE = 10
    LETTER = 11
    OTHER = 12
    ACTIVE = 13
    COMMENT = 14
    INVALID = 15


DEFAULT_CATCODES: dict[str, int] = {
    "\\": Catcode.ESCAPE,
    "{": Catcode.BEGIN_GROUP,
    "}": Catcode.END_GROUP,
    "$": Catcode.MATH_SHIFT,
    "&": Catcode.ALIGNMENT,
    "\n": Catcode.END_OF_LINE,
    "#": Catcode.PARAMETER,
    "^": Catcode.SUPERSCRIPT,
    "_": Catcode.SUBSCRIPT,
    " ": Catcode.SPACE,
    "\t": Catcode.SPACE,
    "%": Catcode.COMMENT,
}
DEFAULT_CATCODES.update((c, Catcode.LETTER) for c in ascii_letters)


class CatcodeTable(dict):
    """Total character -> catcode mapping; unlisted characters are OTHER."""

    def __init__(self, entries=None):
        super().__init__(DEFAULT_CATCODES if entries is None else entries)

    def __missing__(self, key):
        return Catcode.OTHER

    def copy(self) -> CatcodeTable:
        return CatcodeTable(self)


# -- tokens -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class CS:
    """A control sequence token (control word or control symbol)."""

    name: str

    def __repr__(self) -> str:
        return f"CS({self.name!r})"


@dataclass(frozen=True, slots=True)
class Char:
    """A character token paired with the catcode it was read under."""

    char: str
    cat: int

    def __repr__(self) -> str:
        return f"Char({self.char!r},{int(self.cat)})"


@dataclass(frozen=True, slots=True)
class Param:
    """A macro parameter reference #1..#9 inside a stored macro body."""

    index: int

    def __repr__(self) -> str:
        return f"Param({self.index})"


Token = CS | Char | Param

_chars: dict[tuple[str, int], Char] = {}
_css: dict[str, CS] = {}


def char(c: str, cat: int) -> Char:
    """Interned Char constructor; tokens are immutable so sharing is safe."""
    tok = _chars.get((c, cat))
    if tok is None:
        tok = _chars[(c, cat)] = Char(c, int(cat))
    return tok


def cs(name: str) -> CS:
    tok = _css.get(name)
    if tok is None:
        tok = _css[name] = CS(name)
    return tok


SPACE = char(" ", Catcode.SPACE)
BEGIN = char("{", Catcode.BEGIN_GROUP)
END = char("}", Catcode.END_GROUP)
PAR = cs("par")


def letter(c: str) -> Char:
    return char(c, Catcode.LETTER)


def other(c: str) -> Char:
    return char(c, Catcode.OTHER)


# -- scanner ----------------------------------------------------------------

LINE_START, MID_LINE, SKIPPING_BLANKS = "N", "M", "S"


def _normalize(source: str) -> list[str]:
    text = source.replace("\r\n", "\n").replace("\r", "\n")
    if not text.endswith("\n"):
        text += "\n"
    # TeX strips trailing blanks from every input line before appending
    # the end-of-line character.
    return [line.rstrip(" ") for line in text.split("\n")[:-1]]


class Tokenizer:
    """Incremental scanner over a source text.

    Catcodes are looked up in ``table`` at the moment each character is
    read, so an engine that mutates the table between tokens sees the
    change take effect immediately, as TeX does.
    """

    def __init__(self, source: str, table: CatcodeTable | None = None):
        self.table = table if table is not None else CatcodeTable()
        self._lines = _normalize(source)
        self._index = -1
        self._buf = ""
        self._pos = 0
        self.state = LINE_START
        self._next_line()

    def _next_line(self) -> bool:
        self._index += 1
        if self._index >= len(self._lines):
            self._buf = ""
            self._pos = 0
            return False
        line = self._lines[self._index]
        # The final line's end-of-line acts as end of input and yields nothing.
        if self._index < len(self._lines) - 1:
            line += "\n"
        self._buf = line
        self._pos = 0
        self.state = LINE_START
        return True

    @property
    def line(self) -> int:
        return min(self._index, len(self._lines) - 1) + 1

    @property
    def column(self) -> int:
        return self._pos + 1

    def at_end(self) -> bool:
        return self._index >= len(self._lines)

    def next_token(self) -> Token | None:
        table = self.table
        while True:
            buf, pos = self._buf, self._pos
            if pos >= len(buf):
                if not self._next_line():
                    return None
                continue
            c = buf[pos]
            cat = table[c]
            if cat == Catcode.ESCAPE:
                return self._control_sequence(buf, pos)
            if cat == Catcode.LETTER or cat == Catcode.OTHER:
                self._pos = pos + 1
                self.state = MID_LINE
                return char(c, cat)
            if cat == Catcode.SPACE:
                self._pos = pos + 1
                if self.state == MID_LINE:
                    self.state = SKIPPING_BLANKS
                    return SPACE
                continue
            if cat == Catcode.END_OF_LINE:
                state = self.state
                self._pos = len(buf)
                if state == LINE_START:
                    return PAR
                if state == MID_LINE:
                    return SPACE
                continue
            if cat == Catcode.COMMENT:
                self._pos = len(buf)
                # skip the end-of-line too: the next line starts afresh
                self.state = LINE_START
                if not self._next_line():
                    return None
                continue
            if cat == Catcode.IGNORED:
                self._pos = pos + 1
                continue
            if cat == Catcode.INVALID:
                raise InvalidCharacter(f"invalid character {c!r}", self.line, pos + 1)
            if cat == Catcode.SUPERSCRIPT and pos + 2 < len(buf) and buf[pos + 1] == c:
                # ^^ notation is deliberately unsupported
                raise InvalidCharacter(f"unsupported {c}{c} notation", self.line, pos + 1)
            self._pos = pos + 1
            self.state = MID_LINE
            return char(c, cat)

    def _control_sequence(self, buf: str, pos: int) -> CS:
        start = pos + 1
        if start >= len(buf):
            raise UnterminatedControlSequence("escape character at end of input", self.line, pos + 1)
        table = self.table
        if table[buf[start]] == Catcode.LETTER:
            end = start + 1
            while end < len(buf) and table[buf[end]] == Catcode.LETTER:
                end += 1
            self._pos = end
            self.state = SKIPPING_BLANKS
            return cs(buf[start:end])
        c = buf[start]
        self._pos = start + 1
        self.state = SKIPPING_BLANKS if table[c] == Catcode.SPACE else MID_LINE
        return cs(c)

    def __iter__(self) -> Iterator[Token]:
        while True:
            tok = self.next_token()
            if tok is None:
                return
            yield tok


def tokenize(source: str, table: CatcodeTable | None = None) -> list[Token]:
    return list(Tokenizer(source, table))


def is_control_word(name: str) -> bool:
    return len(name) > 1 or name in ascii_letters


def detokenize(tokens: Iterable[Token]) -> str:
    """Render tokens back to source text under default catcodes."""
    out = []
    for tok in tokens:
        if type(tok) is Char:
            out.append(tok.char)
        elif type(tok) is CS:
            out.append("\\" + tok.name + " " if is_control_word(tok.name) else "\\" + tok.name)
        elif type(tok) is Param:
            out.append(f"#{tok.index}")
        else:
            raise TypeError(f"not a token: {tok!r}")
    return "".join(out)
