"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``ATTNEDIT_BACKEND=python`` forces the fallback, ``compiled``
makes a missing extension an ImportError.
"""
import importlib
import os

_choice = os.environ.get("ATTNEDIT_BACKEND", "auto").lower()


def _load(name):
    if name == "python":
        return importlib.import_module("attnedit._kernels_py")
    if name == "compiled":
        return importlib.import_module("attnedit._kernels")
    if name == "auto":
        try:
            return importlib.import_module("attnedit._kernels")
        except ImportError:
            return importlib.import_module("attnedit._kernels_py")
    raise ValueError(f"unknown backend {name!r}; expected auto, compiled or python")


kernels = _load(_choice)


def use(name):
    """Switch the active backend process-wide; returns the previous one's name."""
    global kernels
    previous = kernels.BACKEND
    kernels = _load(name)
    return previous


def available():
    names = ["python"]
    try:
        importlib.import_module("attnedit._kernels")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
