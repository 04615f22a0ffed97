"""Random group/assignment scenarios and a copy-the-world model of scoping.

The model keeps one full dictionary per open group: a local assignment
writes the innermost copy, a global one writes every copy, and leaving a
group throws the innermost copy away. The engine's save stack must agree.
"""

from __future__ import annotations

import random

MACROS = ("ma", "mb", "mc")
COUNTS = (10, 11, 12)
DIMENS = (3, 4)
CHARS = ("!", "?")


def initial() -> dict:
    state = {("def", m): None for m in MACROS}
    state.update({("count", n): 0 for n in COUNTS})
    state.update({("dimen", n): 0 for n in DIMENS})
    state.update({("catcode", c): 12 for c in CHARS})
    return state


def render(ops) -> str:
    out = []
    for op in ops:
        kind = op[0]
        if kind == "group":
            _, brace, body = op
            inner = render(body)
            out.append("{" + inner + "}" if brace else r"\begingroup " + inner + r"\endgroup ")
            continue
        _, key, value, glob = op
        pre = r"\global" if glob else ""
        if kind == "def":
            out.append(pre + rf"\def\{key}{{{value}}}")
        elif kind == "let":
            out.append(pre + rf"\let\{key}\{value}")
        elif kind == "count":
            out.append(pre + rf"\count{key}={value} ")
        elif kind == "advance":
            out.append(pre + rf"\advance\count{key} by {value} ")
        elif kind == "dimen":
            out.append(pre + rf"\dimen{key}={value}sp ")
        elif kind == "catcode":
            out.append(pre + rf"\catcode`\{key}={value} ")
    return "".join(out)


def run_model(ops, frames=None) -> tuple[list[dict], set]:
    """Apply ``ops``; returns the frames and the keys assigned globally."""
    frames = frames if frames is not None else [initial()]
    touched: set = set()
    for op in ops:
        if op[0] == "group":
            frames.append(dict(frames[-1]))
            touched |= run_model(op[2], frames)[1]
            frames.pop()
            continue
        kind, key, value, glob = op
        if kind == "let":
            slot, new = ("def", key), frames[-1][("def", value)]
        elif kind == "advance":
            slot = ("count", key)
            new = frames[-1][slot] + value
        else:
            slot, new = ("def" if kind == "def" else kind, key), value
        if glob:
            touched.add(slot)
            for f in frames:
                f[slot] = new
        else:
            frames[-1][slot] = new
    return frames, touched


def engine_state(engine) -> dict:
    from texml.bindings import Macro
    from texml.engine import show_tokens
    state = {}
    for m in MACROS:
        b = engine.defs.get(m)
        state[("def", m)] = show_tokens(b.body) if isinstance(b, Macro) else b
    for n in COUNTS:
        state[("count", n)] = engine.counts.get(n, 0)
    for n in DIMENS:
        state[("dimen", n)] = engine.dimens.get(n, 0)
    for c in CHARS:
        state[("catcode", c)] = int(engine.catcodes[c])
    return state


def random_op(rng: random.Random, depth: int, allow_global: bool = True):
    glob = allow_global and rng.random() < 0.2
    roll = rng.random()
    if roll < 0.15 and depth < 3:
        body = [random_op(rng, depth + 1, allow_global) for _ in range(rng.randint(0, 5))]
        return ("group", rng.random() < 0.5, body)
    if roll < 0.35:
        return ("def", rng.choice(MACROS), "".join(rng.choice("xyz") for _ in range(rng.randint(1, 3))), glob)
    if roll < 0.45:
        return ("let", rng.choice(MACROS), rng.choice(MACROS), glob)
    if roll < 0.6:
        return ("count", rng.choice(COUNTS), rng.randint(-1000, 1000), glob)
    if roll < 0.7:
        return ("advance", rng.choice(COUNTS), rng.randint(-50, 50), glob)
    if roll < 0.85:
        return ("dimen", rng.choice(DIMENS), rng.randint(-10**6, 10**6), glob)
    return ("catcode", rng.choice(CHARS), rng.choice((11, 12)), glob)


def random_scenario(rng: random.Random):
    """A few top-level assignments, then one group to check."""
    prefix = [random_op(rng, 3, allow_global=False) for _ in range(rng.randint(0, 4))]
    body = [random_op(rng, 1) for _ in range(rng.randint(1, 8))]
    return prefix, ("group", rng.random() < 0.5, body)
