"""Pause cyclic garbage collection around bulk allocation phases."""

import contextlib
import gc


@contextlib.contextmanager
def gc_paused():
    """Bulk loads and diffs allocate millions of acyclic tuples; GC passes only slow them down."""
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()
