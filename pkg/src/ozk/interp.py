"""Session assembly: a store, a scheduler, builtins and the prelude.

A Session keeps one global environment across feeds, so it backs both
one-shot program runs and the interactive loop.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional

from .builtins import make_builtins
from .parser import parse_interactive
from .prelude import PRELUDE
from .runtime import RunResult, Runtime, env_child
from .terms import Store, Term


@lru_cache(maxsize=64)
def _parse_cached(text: str, global_names: tuple):
    # Statements are immutable, so a parse can be shared between sessions;
    # this mostly pays off for the prelude, parsed once per process.
    return parse_interactive(text, global_names)


class Session:
    def __init__(self, policy: str = "fifo", seed: Optional[int] = None,
                 max_steps: Optional[int] = None, real_time: bool = False,
                 on_browse: Optional[Callable[[str], None]] = None,
                 on_trace: Optional[Callable[[str, dict], None]] = None,
                 store: Optional[Store] = None, prelude: bool = True):
        funcs, native = make_builtins()
        self.rt = Runtime(store=store, builtins=funcs, policy=policy,
                          seed=seed, max_steps=max_steps, real_time=real_time,
                          on_browse=on_browse, on_trace=on_trace)
        self.store = self.rt.store
        # the global frame is shared, not copied: later feeds add names to it
        self.globals: dict = env_child(None, native)
        self.env = self.globals
        if prelude:
            result = self.feed(PRELUDE)
            if result.status != "done":
                raise AssertionError(f"prelude failed: {result}")

    def names(self) -> tuple:
        return tuple(n for n in self.globals if not n.startswith("\x00"))

    def feed(self, text: str) -> RunResult:
        """Parse a chunk, expose its declarations globally, run to rest."""
        stmt, new_names = _parse_cached(text, self.names())
        for name in new_names:
            self.globals[name] = self.store.new_var()
        self.rt.spawn(stmt, self.env)
        return self.rt.run()

    def lookup(self, name: str) -> Term:
        return self.globals[name]


def run_text(text: str, **options) -> RunResult:
    """Run a whole program in a fresh session."""
    session = Session(**options)
    return session.feed(text)
