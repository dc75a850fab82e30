"""Selects the compiled kernels when built, else the numpy fallback.

Set ZKNOCK_BACKEND=python (or =compiled) to force a choice; the default
`auto` prefers the compiled extension.
"""
from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("ZKNOCK_BACKEND", "auto").lower()

if _choice not in ("auto", "python", "compiled"):
    raise RuntimeError(f"unknown ZKNOCK_BACKEND value: {_choice!r}")

if _choice == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "ZKNOCK_BACKEND=compiled but the extension is not built; "
                "reinstall with a C compiler available"
            ) from None
        kernels = _kernels_py
        BACKEND = "python"


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _kernels_cy  # noqa: F401

        out.append("compiled")
    except ImportError:
        pass
    return out


def get_kernels(name: str):
    """Fetch a kernel module by name, independent of the active default."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown backend: {name!r}")
