"""Pick the event engine at import time.

The compiled engine is used when it imports; ``RUMORWALK_BACKEND=python`` forces
the pure-Python one.  Both expose the same ``Engine`` class.
"""

import os

from . import _pyengine

PyEngine = _pyengine.Engine

try:
    from ._cengine import Engine as CEngine
except ImportError:  # extension not built
    CEngine = None

if os.environ.get("RUMORWALK_BACKEND", "").lower() == "python" or CEngine is None:
    Engine = PyEngine
    BACKEND = "python"
else:
    Engine = CEngine
    BACKEND = "compiled"


def engine_class(name=None):
    """Return the engine class for ``name`` ('compiled', 'python' or None for the default)."""
    if name is None:
        return Engine
    if name == "python":
        return PyEngine
    if name == "compiled":
        if CEngine is None:
            raise RuntimeError("compiled engine is not built")
        return CEngine
    raise ValueError(f"unknown backend {name!r}")
