"""Graphics primitives that accumulate paths and emit SVG with bounding boxes."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

from .dimen import UNITY, Dimension, print_scaled, xn_over_d
from .doc import MathNode, GraphicsNode, to_tree
from .errors import EmptyPath, GraphicsError, NoCurrentPoint
from .mathml import leaves
from .xmlio import SVG_NS, Element, Text


def to_sp(x: float) -> int:
    return math.floor(x * UNITY + 0.5)


def _sp_str(sp: int) -> str:
    s = print_scaled(sp)
    return s[:-2] if s.endswith(".0") else s


def fmt(x: float) -> str:
    """Coordinate numeral: the value rounded to scaled points, printed the
    way TeX prints dimensions (shortest decimal that reads back exactly)."""
    return _sp_str(to_sp(x))


@dataclass(frozen=True)
class Affine:
    """x' = a x + c y + e,  y' = b x + d y + f  (units: pt)."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    e: float = 0.0
    f: float = 0.0

    def __post_init__(self):
        if abs(self.a * self.d - self.b * self.c) <= 1e-9:
            raise GraphicsError("singular transformation matrix")

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return self.a * x + self.c * y + self.e, self.b * x + self.d * y + self.f

    def __matmul__(self, other: Affine) -> Affine:
        """``self @ other`` maps a point through ``other`` first, then ``self``."""
        a, b, c, d, e, f = self.a, self.b, self.c, self.d, self.e, self.f
        return Affine(a * other.a + c * other.b, b * other.a + d * other.b,
                      a * other.c + c * other.d, b * other.c + d * other.d,
                      a * other.e + c * other.f + e, b * other.e + d * other.f + f)


IDENTITY = Affine()


# -- path operations ----------------------------------------------------------

@dataclass(frozen=True)
class MoveTo:
    x: float
    y: float


@dataclass(frozen=True)
class LineTo:
    x: float
    y: float


@dataclass(frozen=True)
class CurveTo:
    c1x: float
    c1y: float
    c2x: float
    c2y: float
    x: float
    y: float


@dataclass(frozen=True)
class ClosePath:
    pass


PathOp = MoveTo | LineTo | CurveTo | ClosePath


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pt; ``BBox()`` is the explicit empty box."""

    min_x: float | None = None
    min_y: float | None = None
    max_x: float | None = None
    max_y: float | None = None

    def __post_init__(self):
        vals = (self.min_x, self.min_y, self.max_x, self.max_y)
        if any(v is None for v in vals) and not all(v is None for v in vals):
            raise ValueError("partially specified bbox")
        if not self.is_empty and (self.min_x > self.max_x or self.min_y > self.max_y):
            raise ValueError("inverted bbox bounds")

    @property
    def is_empty(self) -> bool:
        return self.min_x is None

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.max_x - self.min_x

    @property
    def height(self) -> float:
        return 0.0 if self.is_empty else self.max_y - self.min_y

    def add_point(self, x: float, y: float) -> BBox:
        if self.is_empty:
            return BBox(x, y, x, y)
        return BBox(min(self.min_x, x), min(self.min_y, y), max(self.max_x, x), max(self.max_y, y))

    def union(self, other: BBox) -> BBox:
        if other.is_empty:
            return self
        if self.is_empty:
            return other
        return BBox(min(self.min_x, other.min_x), min(self.min_y, other.min_y),
                    max(self.max_x, other.max_x), max(self.max_y, other.max_y))

    def inflate(self, r: float) -> BBox:
        if self.is_empty:
            return self
        return BBox(self.min_x - r, self.min_y - r, self.max_x + r, self.max_y + r)


EMPTY = BBox()


@dataclass(frozen=True)
class FontModel:
    size: Dimension = Dimension(10 * UNITY)

    def __post_init__(self):
        if self.size.sp <= 0:
            raise ValueError("font size must be positive")

    @property
    def em(self) -> int:
        return self.size.sp

    @property
    def ex(self) -> int:
        return xn_over_d(self.size.sp, 45, 100)[0]

    @property
    def advance_pt(self) -> float:
        return 0.5 * self.size.pt

    @property
    def ascent_pt(self) -> float:
        return 0.7 * self.size.pt

    @property
    def descent_pt(self) -> float:
        return 0.3 * self.size.pt


Color = tuple[int, int, int]


@dataclass
class TextBox:
    x: float
    y: float
    width: float
    height: float
    nodes: list


@dataclass
class GraphicsState:
    transform: Affine = IDENTITY
    line_width: Dimension = Dimension(UNITY)
    stroke_color: Color | None = (0, 0, 0)
    fill_color: Color | None = (0, 0, 0)
    path: list = field(default_factory=list)
    current: tuple[float, float] | None = None
    path_bbox: BBox = EMPTY
    extent: BBox = EMPTY
    shapes: list = field(default_factory=list)
    texts: list = field(default_factory=list)

    def concat(self, t: Affine) -> None:
        """Apply ``t`` in the current user space (it acts before the old CTM)."""
        self.transform = self.transform @ t

    def set_line_width(self, w: Dimension) -> None:
        if w.sp < 0:
            raise GraphicsError("negative line width")
        self.line_width = w

    def set_color(self, rgb: Color) -> None:
        if any(not 0 <= v <= 255 for v in rgb):
            raise GraphicsError(f"color component out of range: {rgb}")
        self.stroke_color = self.fill_color = tuple(rgb)


def path_extend(gs: GraphicsState, op: PathOp) -> None:
    """Append ``op`` (user coordinates, pt) with the current transform applied."""
    t = gs.transform
    if isinstance(op, ClosePath):
        if gs.current is None:
            raise NoCurrentPoint("closepath without a current point")
        gs.path.append(op)
        return
    if isinstance(op, MoveTo):
        x, y = t.apply(op.x, op.y)
        rec: PathOp = MoveTo(x, y)
        pts = [(x, y)]
    elif isinstance(op, LineTo):
        if gs.current is None:
            raise NoCurrentPoint("lineto without a current point")
        x, y = t.apply(op.x, op.y)
        rec = LineTo(x, y)
        pts = [(x, y)]
    elif isinstance(op, CurveTo):
        if gs.current is None:
            raise NoCurrentPoint("curveto without a current point")
        c1 = t.apply(op.c1x, op.c1y)
        c2 = t.apply(op.c2x, op.c2y)
        x, y = t.apply(op.x, op.y)
        rec = CurveTo(*c1, *c2, x, y)
        # control-point hull bounds the curve
        pts = [c1, c2, (x, y)]
    else:
        raise TypeError(f"not a path operation: {op!r}")
    gs.path.append(rec)
    gs.current = (x, y)
    bb = gs.path_bbox
    for px, py in pts:
        bb = bb.add_point(px, py)
    gs.path_bbox = bb


def path_data(path: list) -> str:
    parts = []
    for op in path:
        if isinstance(op, MoveTo):
            parts.append(f"M {fmt(op.x)} {fmt(op.y)}")
        elif isinstance(op, LineTo):
            parts.append(f"L {fmt(op.x)} {fmt(op.y)}")
        elif isinstance(op, CurveTo):
            parts.append("C " + " ".join(fmt(v) for v in (op.c1x, op.c1y, op.c2x, op.c2y, op.x, op.y)))
        else:
            parts.append("Z")
    return " ".join(parts)


def _rgb(c: Color | None) -> str:
    return "none" if c is None else f"rgb({c[0]},{c[1]},{c[2]})"


def _paint(gs: GraphicsState, fill: bool) -> Element:
    if not gs.path:
        raise EmptyPath("nothing to paint: the current path is empty")
    if fill:
        attrs = [("d", path_data(gs.path)), ("fill", _rgb(gs.fill_color)), ("stroke", "none")]
        bbox = gs.path_bbox
    else:
        w = gs.line_width.pt
        attrs = [("d", path_data(gs.path)), ("fill", "none"),
                 ("stroke", _rgb(gs.stroke_color)), ("stroke-width", fmt(w))]
        bbox = gs.path_bbox.inflate(w / 2)
    el = Element("path", attrs)
    gs.shapes.append(el)
    gs.extent = gs.extent.union(bbox)
    gs.path = []
    gs.current = None
    gs.path_bbox = EMPTY
    return el


def stroke(gs: GraphicsState) -> Element:
    return _paint(gs, fill=False)


def fill(gs: GraphicsState) -> Element:
    return _paint(gs, fill=True)


def _char_count(nodes) -> int:
    n = 0
    for node in nodes:
        if isinstance(node, Text):
            n += len(node.text)
        elif isinstance(node, MathNode):
            n += sum(len(leaf.text) for leaf in leaves(node.content))
        elif isinstance(node, Element):
            n += _char_count(node.children)
    return n


def estimate_size(nodes, font: FontModel = FontModel()) -> BBox:
    """Rough box for inline content: fixed advance per character."""
    count = _char_count(nodes)
    if count == 0:
        return EMPTY
    return BBox(0.0, 0.0, count * font.advance_pt, font.ascent_pt + font.descent_pt)


def place_text(gs: GraphicsState, x: float, y: float, nodes: list,
               font: FontModel = FontModel()) -> TextBox:
    """Anchor inline content with its lower-left corner at user point (x, y)."""
    px, py = gs.transform.apply(x, y)
    size = estimate_size(nodes, font)
    box = TextBox(px, py, size.width, size.height, nodes)
    gs.texts.append(box)
    gs.extent = gs.extent.add_point(px, py).add_point(px + size.width, py + size.height)
    return box


def emit_picture(gs: GraphicsState) -> tuple[GraphicsNode, list[str]]:
    """Build the SVG for a finished picture; returns the node and warnings."""
    if not gs.shapes and not gs.texts:
        svg = Element("svg", [("viewBox", "0 0 0 0")], [], ns=SVG_NS)
        return GraphicsNode(svg), ["empty picture"]
    bb = gs.extent
    x0, y0, x1, y1 = (to_sp(v) for v in (bb.min_x, bb.min_y, bb.max_x, bb.max_y))
    w, h = _sp_str(x1 - x0), _sp_str(y1 - y0)
    flip = (y1 + y0) / UNITY
    svg = Element("svg", [("version", "1.1"), ("width", w + "pt"), ("height", h + "pt"),
                          ("viewBox", f"{_sp_str(x0)} {_sp_str(y0)} {w} {h}")],
                  [], ns=SVG_NS)
    if gs.shapes:
        svg.children.append(Element("g", [("transform", f"matrix(1,0,0,-1,0,{fmt(flip)})")],
                                    [copy.deepcopy(s) for s in gs.shapes]))
    for box in gs.texts:
        content = []
        for node in box.nodes:
            lowered = to_tree(node)
            if isinstance(lowered, Element):
                lowered.ns = ""
            content.append(lowered)
        svg.children.append(Element("foreignObject", [
            ("x", fmt(box.x)), ("y", fmt(flip - (box.y + box.height))),
            ("width", fmt(box.width)), ("height", fmt(box.height))], content))
    return GraphicsNode(svg), []
