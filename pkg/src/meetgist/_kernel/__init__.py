"""Sampling kernel backend selection.

Imports the compiled extension when it was built, otherwise the pure-Python
twin. Set ``MEETGIST_PURE=1`` to force the pure backend (used by the parity
tests and the benchmark). Both backends produce bit-identical training runs.
"""

import os

if os.environ.get("MEETGIST_PURE"):
    from ._pykernel import BACKEND, run_chain
else:
    try:
        from ._ckernel import BACKEND, run_chain
    except ImportError:
        from ._pykernel import BACKEND, run_chain

__all__ = ["BACKEND", "run_chain"]
