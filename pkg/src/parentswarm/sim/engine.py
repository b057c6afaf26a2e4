"""Engine selection: compiled kernel when importable, pure Python otherwise.

Set PARENTSWARM_PURE_PYTHON=1 to force the fallback.
"""

from __future__ import annotations

import os

from .problem import Problem
from .pyengine import PythonEngine

ENV_FORCE_PYTHON = "PARENTSWARM_PURE_PYTHON"

try:
    from . import _ckernel
except ImportError:  # pragma: no cover - exercised only without a build
    _ckernel = None

HAVE_COMPILED = _ckernel is not None


def default_engine() -> str:
    if os.environ.get(ENV_FORCE_PYTHON, "").strip() not in ("", "0") or not HAVE_COMPILED:
        return "python"
    return "compiled"


def run_problem(prob: Problem, engine: str | None = None):
    """Returns (log array, status code, t_fail, engine name)."""
    engine = engine or default_engine()
    if engine == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        log, status, t_fail = _ckernel.run(prob)
    elif engine == "python":
        log, status, t_fail = PythonEngine(prob).run()
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return log, status, t_fail, engine
