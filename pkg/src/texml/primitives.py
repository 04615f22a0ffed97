"""Builtin control sequences implemented in Python."""

from __future__ import annotations

from .bindings import Constructor, LetChar, Macro, Primitive, arity, parse_template
from .dimen import INFINITY, MAX_DIMEN, Dimension, print_scaled
from .engine import (COUNTS, DEFS, DIMENS, CATCODES, END_ARG, Engine, Message, NoExpand,
                     convert_params, parse_param_text, show_tokens, verbatim_text)
from .errors import (ArithmeticOverflow, EngineError, GraphicsError,
                     UnbalancedConditional)
from .graphics import (Affine, ClosePath, CurveTo, GraphicsState, LineTo, MoveTo, emit_picture,
                       fill, path_extend, place_text, stroke)
from .tokens import CS, SPACE, Catcode, Char, cs, other
from .xmlio import Element

PRIMITIVES: dict[str, Primitive] = {}


def primitive(name: str, **flags):
    def register(fn):
        PRIMITIVES[name] = Primitive(name, fn, **flags)
        return fn
    return register


RELAX = Primitive("relax", lambda e, tok: None)
PRIMITIVES["relax"] = RELAX


# -- definitions -----------------------------------------------------------

def _read_param_text(e: Engine) -> list:
    toks = []
    while True:
        t = e.next_raw()
        if t is None or t is END_ARG:
            raise e._runaway("definition")
        if type(t) is Char and t.cat == Catcode.BEGIN_GROUP:
            return toks
        toks.append(t)


def _define(e: Engine, expand: bool) -> None:
    target = e.next_raw()
    key = e.key(target)
    spec = parse_param_text(_read_param_text(e))
    body = e.scan_expanded_balanced() if expand else e.read_balanced()
    e.assign(DEFS, key, Macro(spec, convert_params(body, arity(spec))))


@primitive("def", assignment=True)
def _def(e, tok):
    _define(e, expand=False)


@primitive("edef", assignment=True)
def _edef(e, tok):
    _define(e, expand=True)


@primitive("gdef", assignment=True)
def _gdef(e, tok):
    e.global_prefix = True
    try:
        _define(e, expand=False)
    finally:
        e.global_prefix = False


@primitive("let", assignment=True)
def _let(e, tok):
    key = e.key(e.next_raw())
    t = e.next_raw()
    while type(t) is Char and t.cat == Catcode.SPACE:
        t = e.next_raw()
    if type(t) is Char and t.cat == Catcode.OTHER and t.char == "=":
        t = e.next_raw()
        if type(t) is Char and t.cat == Catcode.SPACE:
            t = e.next_raw()
    if t is None or t is END_ARG:
        raise e._runaway()
    if type(t) is CS or (type(t) is Char and t.cat == Catcode.ACTIVE):
        e.assign(DEFS, key, e.meaning(t))
    else:
        e.assign(DEFS, key, LetChar(t))


@primitive("global")
def _global(e, tok):
    t = e.get_x_nonspace()
    b = e.meaning(t)
    if not (type(b) is Primitive and b.assignment):
        raise EngineError(f"you can't use a prefix with {t!r}")
    e.global_prefix = True
    try:
        e.call(t, b)
    finally:
        e.global_prefix = False


@primitive("constructor", assignment=True)
def _constructor(e, tok):
    target = [t for t in e.read_undelimited() if not (type(t) is Char and t.cat == Catcode.SPACE)]
    if len(target) != 1:
        raise EngineError("\\constructor needs a single control sequence to define")
    key = e.key(target[0])
    spec = parse_param_text(e.read_undelimited())
    text = "".join(t.char if type(t) is Char else "\\" + t.name for t in e.read_undelimited()
                   if type(t) in (Char, CS))
    e.assign(DEFS, key, Constructor(spec, parse_template(text, arity(spec))))


# -- grouping and paragraphs -------------------------------------------------

@primitive("begingroup")
def _begingroup(e, tok):
    e.begin_group("semi")


@primitive("endgroup")
def _endgroup(e, tok):
    e.end_group("semi")


@primitive("par")
def _par(e, tok):
    e.end_paragraph()


@primitive(" ")
def _control_space(e, tok):
    if e.stack[-1].name in ("document", "section"):
        e.start_paragraph()
    e.add_text_space()


@primitive("label")
def _label(e, tok):
    key = verbatim_text(e.read_undelimited())
    if not key:
        raise EngineError("empty label key")
    e.add_label(key)


@primitive("message")
def _message(e, tok):
    e.scan_left_brace()
    text = show_tokens(e.scan_expanded_balanced(), e.catcodes)
    e.tex_messages.append(text)
    line, col = e.position()
    e.messages.append(Message("info", text, line, col))


# -- registers ---------------------------------------------------------------

def _check_count(v: int) -> int:
    if abs(v) > INFINITY:
        raise ArithmeticOverflow("arithmetic overflow")
    return v


def _check_dimen(v: int) -> int:
    if abs(v) > MAX_DIMEN:
        raise ArithmeticOverflow("dimension too large")
    return v


@primitive("count", assignment=True, reader=lambda e: ("int", e.counts.get(e.scan_register(), 0)))
def _count(e, tok):
    n = e.scan_register()
    e.scan_optional_equals()
    e.assign(COUNTS, n, _check_count(e.scan_int()))


@primitive("dimen", assignment=True, reader=lambda e: ("dimen", e.dimens.get(e.scan_register(), 0)))
def _dimen(e, tok):
    n = e.scan_register()
    e.scan_optional_equals()
    e.assign(DIMENS, n, _check_dimen(e.scan_dimen()))


def _read_catcode(e):
    return "int", int(e.catcodes[chr(_char_code(e))])


def _char_code(e) -> int:
    c = e.scan_int()
    if not 0 <= c <= 0x10FFFF:
        raise EngineError(f"bad character code {c}")
    return c


@primitive("catcode", assignment=True, reader=_read_catcode)
def _catcode(e, tok):
    c = _char_code(e)
    e.scan_optional_equals()
    v = e.scan_int()
    if not 0 <= v <= 15:
        raise EngineError(f"invalid code {v}, should be between 0 and 15")
    e.assign(CATCODES, chr(c), Catcode(v))


def _register_target(e):
    t = e.get_x_nonspace()
    b = e.meaning(t)
    if not (type(b) is Primitive and b.name in ("count", "dimen")):
        raise EngineError(f"you can't use {t!r} after an arithmetic command")
    return b.name, e.scan_register()


def _arith(e, op: str) -> None:
    reg, n = _register_target(e)
    e.scan_keyword("by")
    table = e.counts if reg == "count" else e.dimens
    cur = table.get(n, 0)
    check = _check_count if reg == "count" else _check_dimen
    if op == "advance":
        v = e.scan_int() if reg == "count" else e.scan_dimen()
        new = cur + v
    elif op == "multiply":
        new = cur * e.scan_int()
    else:
        d = e.scan_int()
        if d == 0:
            raise ArithmeticOverflow("arithmetic overflow: division by zero")
        q = abs(cur) // abs(d)
        new = q if (cur >= 0) == (d > 0) else -q
    e.assign(COUNTS if reg == "count" else DIMENS, n, check(new))


@primitive("advance", assignment=True)
def _advance(e, tok):
    _arith(e, "advance")


@primitive("multiply", assignment=True)
def _multiply(e, tok):
    _arith(e, "multiply")


@primitive("divide", assignment=True)
def _divide(e, tok):
    _arith(e, "divide")


def _chars(s: str) -> list:
    return [SPACE if c == " " else other(c) for c in s]


@primitive("the", expandable=True)
def _the(e, tok):
    t = e.get_x()
    internal = e._internal(t)
    if internal is None:
        raise EngineError(f"you can't use {t!r} after \\the")
    kind_, v = internal
    e.push(_chars(str(v) if kind_ == "int" else print_scaled(v) + "pt"))


@primitive("number", expandable=True)
def _number(e, tok):
    e.push(_chars(str(e.scan_int())))


# -- conditionals ------------------------------------------------------------

def _relation(e) -> str:
    t = e.get_x_nonspace()
    if type(t) is Char and t.cat == Catcode.OTHER and t.char in "<=>":
        return t.char
    raise EngineError("missing = inserted for a comparison")


def _compare(a, rel: str, b) -> bool:
    return a < b if rel == "<" else a > b if rel == ">" else a == b


@primitive("ifnum", expandable=True, conditional=True)
def _ifnum(e, tok):
    a = e.scan_int()
    rel = _relation(e)
    e.conditional(_compare(a, rel, e.scan_int()))


@primitive("ifdim", expandable=True, conditional=True)
def _ifdim(e, tok):
    a = e.scan_dimen()
    rel = _relation(e)
    e.conditional(_compare(a, rel, e.scan_dimen()))


def _meaning_key(e, t):
    if type(t) is NoExpand:
        return ("prim", "relax")
    if type(t) is Char and t.cat != Catcode.ACTIVE:
        return ("char", t.char, t.cat)
    b = e.meaning(t)
    if b is None:
        return ("undefined",)
    if type(b) is LetChar:
        return ("char", b.token.char, b.token.cat)
    if type(b) is Primitive:
        return ("prim", b.name)
    if type(b) is Macro:
        return ("macro", b.spec, b.body)
    return ("binding", id(b))


@primitive("ifx", expandable=True, conditional=True)
def _ifx(e, tok):
    a, b = e.next_raw(), e.next_raw()
    if a is None or b is None or a is END_ARG or b is END_ARG:
        raise e._runaway("conditional")
    e.conditional(_meaning_key(e, a) == _meaning_key(e, b))


def _char_code_of(e, t):
    if type(t) is Char:
        return (t.char, 0)
    if type(t) is CS:
        b = e.meaning(t)
        if type(b) is LetChar:
            return (b.token.char, 0)
    return (None, 256)


@primitive("if", expandable=True, conditional=True)
def _if(e, tok):
    a, b = e.get_x(), e.get_x()
    if a is None or b is None:
        raise e._runaway("conditional")
    e.conditional(_char_code_of(e, a) == _char_code_of(e, b))


@primitive("else", expandable=True)
def _else(e, tok):
    if not e.conds or e.conds[-1] != "if":
        raise UnbalancedConditional("extra \\else")
    e.skip_conditional(stop_at_else=False)
    e.conds.pop()


@primitive("fi", expandable=True)
def _fi(e, tok):
    if not e.conds:
        raise UnbalancedConditional("extra \\fi")
    e.conds.pop()


# -- expansion control -------------------------------------------------------

@primitive("csname", expandable=True)
def _csname(e, tok):
    chars = []
    while True:
        t = e.get_x()
        if t is None or t is END_ARG:
            raise e._runaway("\\csname")
        if type(t) is Char and t.cat != Catcode.ACTIVE:
            chars.append(t.char)
            continue
        b = e.meaning(t)
        if type(b) is Primitive and b.name == "endcsname":
            break
        raise EngineError("missing \\endcsname inserted")
    name = "".join(chars)
    if not name:
        raise EngineError("empty control sequence name in \\csname")
    if name not in e.defs:
        e.assign(DEFS, name, RELAX)
    e.back(cs(name))


@primitive("endcsname")
def _endcsname(e, tok):
    raise EngineError("extra \\endcsname")


@primitive("expandafter", expandable=True)
def _expandafter(e, tok):
    first, second = e.next_raw(), e.next_raw()
    if first is None or second is None or first is END_ARG or second is END_ARG:
        raise e._runaway()
    e.expand_once(second)
    e.back(first)


@primitive("noexpand", expandable=True)
def _noexpand(e, tok):
    t = e.next_raw()
    if t is None or t is END_ARG:
        raise e._runaway()
    e.back(NoExpand(t) if e.is_expandable(t) else t)


# -- graphics driver ---------------------------------------------------------

def _picture(e) -> GraphicsState:
    if e.picture is None:
        raise GraphicsError("graphics command outside a gpicture environment")
    return e.picture


def _pt(e) -> float:
    return Dimension(e.scan_dimen_from(e.read_undelimited(), default_unit="pt")).pt


@primitive("gdv@begin")
def _gdv_begin(e, tok):
    if e.picture is not None:
        raise GraphicsError("gpicture environments cannot be nested")
    e.picture = GraphicsState()


@primitive("gdv@end")
def _gdv_end(e, tok):
    gs = _picture(e)
    if gs.path:
        e.warn("unpainted path discarded at end of picture")
    e.picture = None
    node, warnings = emit_picture(gs)
    for w in warnings:
        e.warn(w)
    e.insert_node(Element("picture", [], [node]))


@primitive("gdv@moveto")
def _gdv_moveto(e, tok):
    gs = _picture(e)
    x, y = _pt(e), _pt(e)
    path_extend(gs, MoveTo(x, y))


@primitive("gdv@lineto")
def _gdv_lineto(e, tok):
    gs = _picture(e)
    x, y = _pt(e), _pt(e)
    path_extend(gs, LineTo(x, y))


@primitive("gdv@curveto")
def _gdv_curveto(e, tok):
    gs = _picture(e)
    path_extend(gs, CurveTo(*(_pt(e) for _ in range(6))))


@primitive("gdv@closepath")
def _gdv_closepath(e, tok):
    path_extend(_picture(e), ClosePath())


@primitive("gdv@stroke")
def _gdv_stroke(e, tok):
    stroke(_picture(e))


@primitive("gdv@fill")
def _gdv_fill(e, tok):
    fill(_picture(e))


@primitive("gdv@linewidth")
def _gdv_linewidth(e, tok):
    gs = _picture(e)
    gs.set_line_width(Dimension(e.scan_dimen_from(e.read_undelimited(), default_unit="pt")))


@primitive("gdv@color")
def _gdv_color(e, tok):
    gs = _picture(e)
    gs.set_color(tuple(e.scan_int_from(e.read_undelimited()) for _ in range(3)))


@primitive("gdv@transform")
def _gdv_transform(e, tok):
    gs = _picture(e)
    a, b, c, d, x, y = (_pt(e) for _ in range(6))
    gs.concat(Affine(a, b, c, d, x, y))


@primitive("gdv@setdim", assignment=True)
def _gdv_setdim(e, tok):
    n = e.scan_int_from(e.read_undelimited())
    if not 0 <= n <= 255:
        raise EngineError(f"bad register code {n}")
    e.assign(DIMENS, n, e.scan_dimen_from(e.read_undelimited(), default_unit="pt"))


@primitive("gdv@text")
def _gdv_text(e, tok):
    gs = _picture(e)
    x, y = _pt(e), _pt(e)
    toks = e.read_undelimited()
    holder = Element("p")
    e.push_container(holder)
    try:
        e.digest_arg(toks)
    finally:
        e.pop_container()
    place_text(gs, x, y, holder.children, e.font)
