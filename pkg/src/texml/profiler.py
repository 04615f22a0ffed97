"""Per-binding inclusive/exclusive timing via a shadow call stack."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

TOPLEVEL = "<toplevel>"


@dataclass
class ProfileRecord:
    name: str
    calls: int
    inclusive: float  # seconds
    exclusive: float


class Profiler:
    """Accumulates timings for bindings dispatched during a conversion.

    Each frame on the shadow stack is ``[name, start, child_time]``. Time
    not spent inside any binding is charged to a synthetic toplevel frame,
    so the exclusive times always sum to the profiled wall-clock span.
    """

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self.clock = clock
        self._stack: list[list] = []
        self._calls: dict[str, int] = {}
        self._incl: dict[str, float] = {}
        self._excl: dict[str, float] = {}

    def enter(self, name: str) -> None:
        self._stack.append([name, self.clock(), 0.0])

    def exit(self) -> None:
        end = self.clock()
        name, start, child = self._stack.pop()
        elapsed = end - start
        self._calls[name] = self._calls.get(name, 0) + 1
        self._incl[name] = self._incl.get(name, 0.0) + elapsed
        self._excl[name] = self._excl.get(name, 0.0) + max(elapsed - child, 0.0)
        if self._stack:
            self._stack[-1][2] += elapsed

    def unwind(self) -> None:
        """Close frames left open by an exception."""
        while self._stack:
            self.exit()

    @property
    def depth(self) -> int:
        return len(self._stack)

    def records(self) -> list[ProfileRecord]:
        recs = [ProfileRecord(n, self._calls[n], self._incl[n], self._excl[n]) for n in self._calls]
        recs.sort(key=lambda r: (-r.exclusive, r.name))
        return recs


def format_tsv(records: list[ProfileRecord]) -> str:
    lines = ["name\tcalls\tinclusive-ms\texclusive-ms"]
    for r in records:
        lines.append(f"{r.name}\t{r.calls}\t{r.inclusive * 1000:.3f}\t{r.exclusive * 1000:.3f}")
    return "\n".join(lines) + "\n"
