"""Backend selection for the GGM-tree kernels.

The compiled extension is used when it imports; set ``FSLKIT_PURE_PYTHON=1`` to
force the numpy fallback. Both backends produce identical bytes.
"""
from __future__ import annotations

import importlib
import os
from types import ModuleType

BACKENDS = ("cython", "python")


def load_backend(name: str) -> ModuleType:
    if name == "cython":
        return importlib.import_module("fslkit._ckernels")
    if name == "python":
        return importlib.import_module("fslkit._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    found = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        found.append(name)
    return found


def _select() -> tuple[str, ModuleType]:
    if os.environ.get("FSLKIT_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

prg_expand = _impl.prg_expand
prg_expand_many = _impl.prg_expand_many
eval_path = _impl.eval_path
eval_full_many = _impl.eval_full_many
convert_many = _impl.convert_many
convert = _impl.convert
gen_tree = _impl.gen_tree
ro_hash_many = _impl.ro_hash_many
