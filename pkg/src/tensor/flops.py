"""
Counted-operation accounting.

Ops report their floating point operation counts here while a counter is active.
Matmul counts 2*m*k*n per batch entry, conv2d counts 2*C_in*kh*kw per output
element, and elementwise ops count one per output element.
"""

import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

_local = threading.local()


@dataclass
class FlopCounter:
    total: int = 0
    by_op: Counter = field(default_factory=Counter)
    by_scope: Counter = field(default_factory=Counter)

    def scope(self, name: str) -> int:
        return self.by_scope.get(name, 0)


def _counters() -> list[FlopCounter]:
    if not hasattr(_local, "counters"):
        _local.counters = []
    return _local.counters


def _scopes() -> list[str]:
    if not hasattr(_local, "scopes"):
        _local.scopes = []
    return _local.scopes


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Count operations executed on this thread inside the block."""
    counter = FlopCounter()
    _counters().append(counter)
    try:
        yield counter
    finally:
        _counters().pop()


@contextmanager
def flop_scope(name: str) -> Iterator[None]:
    """Attribute operations inside the block to ``name`` (scopes nest)."""
    _scopes().append(name)
    try:
        yield
    finally:
        _scopes().pop()


def add_flops(op: str, count: int) -> None:
    counters = _counters()
    if not counters:
        return
    scopes = set(_scopes())
    for counter in counters:
        counter.total += count
        counter.by_op[op] += count
        for name in scopes:
            counter.by_scope[name] += count
