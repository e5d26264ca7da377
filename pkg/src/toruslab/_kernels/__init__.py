"""Kernel backend selection: compiled Cython core with a numpy fallback.

The environment variable TORUSLAB_KERNEL picks a backend explicitly:
"cy" (fail if the extension is missing), "py", or "auto" (default).
"""
import os

from . import _impl_py
from .pack import ModelPack  # noqa: F401

_choice = os.environ.get("TORUSLAB_KERNEL", "auto")

if _choice == "py":
    impl = _impl_py
elif _choice == "cy":
    from . import _impl_cy as impl  # hard import: surface build problems
else:
    try:
        from . import _impl_cy as impl
    except ImportError:
        impl = _impl_py

BACKEND = impl.BACKEND


def available_backends():
    out = {"py": _impl_py}
    try:
        from . import _impl_cy

        out["cy"] = _impl_cy
    except ImportError:
        pass
    return out
