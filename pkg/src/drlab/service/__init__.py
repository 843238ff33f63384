"""HTTP service wrapping the drlab engine.

The FastAPI app in :mod:`drlab.service.app` exposes the same operations
the CLI runs locally; :mod:`drlab.service.handlers` holds the shared
implementation so both entry points produce byte-identical outputs.
"""

from .app import create_app

__all__ = ["create_app"]
