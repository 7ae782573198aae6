"""Resource caps and the exceptions shared by every module.

Caps live in a context variable so a CLI invocation (or a test) can tighten
or loosen them for one block of work without touching global state::

    with use_caps(subspaces=10_000):
        rigidity_value(q, 3)
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
from typing import Iterator


class CapExceeded(RuntimeError):
    """An exhaustive computation would exceed a configured cap."""

    def __init__(self, cap: str, requested: int, limit: int, what: str = ""):
        self.cap = cap
        self.requested = requested
        self.limit = limit
        msg = f"{what or cap} too large: {requested} > cap {cap}={limit}"
        super().__init__(msg)


class InvariantViolation(RuntimeError):
    """A guarantee that must hold by construction was observed to fail."""


@dataclasses.dataclass(frozen=True)
class Caps:
    subspaces: int = 250_000  # subspaces scanned by one enumeration
    input_space: int = 1 << 20  # 2^n points scanned exhaustively
    coset_dim: int = 24  # 2^dim coset elements in a distance query
    matrices: int = 1 << 16  # 2^(root^2) matrices enumerated


_CAPS: contextvars.ContextVar[Caps] = contextvars.ContextVar("rigidlab_caps", default=Caps())


def current_caps() -> Caps:
    return _CAPS.get()


@contextlib.contextmanager
def use_caps(**overrides: int) -> Iterator[Caps]:
    caps = dataclasses.replace(_CAPS.get(), **overrides)
    token = _CAPS.set(caps)
    try:
        yield caps
    finally:
        _CAPS.reset(token)


def check_cap(name: str, requested: int, what: str = "") -> None:
    limit = getattr(current_caps(), name)
    if requested > limit:
        raise CapExceeded(name, requested, limit, what)
