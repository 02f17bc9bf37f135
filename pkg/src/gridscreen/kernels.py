"""Hot-kernel backend, chosen once at import.

The compiled extension is used when it imports; otherwise (or when the
``GRIDSCREEN_PURE_PYTHON`` environment variable is set to a non-empty value
other than ``0``) the numpy implementations are used.  Both backends expose
the same five functions.
"""
from __future__ import annotations

import logging
import os
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)


def _load_compiled() -> ModuleType | None:
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
_force_python = os.environ.get("GRIDSCREEN_PURE_PYTHON", "") not in ("", "0")

if _compiled is not None and not _force_python:
    impl: ModuleType = _compiled
    BACKEND = "cython"
else:
    impl = _pykernels
    BACKEND = "python"
    if _compiled is None:
        log.debug("compiled kernels unavailable; using pure-Python fallback")


def available_backends() -> dict[str, ModuleType]:
    out = {"python": _pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def get_backend(name: str) -> ModuleType:
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


build_tree = impl.build_tree
predict_forest = impl.predict_forest
subgroup_screens = impl.subgroup_screens
cd_lasso = impl.cd_lasso
lasso_newton = impl.lasso_newton
