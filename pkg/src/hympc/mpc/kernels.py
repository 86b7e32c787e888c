"""Backend selection for the MPC hot loop.

The compiled extension is used when importable; set ``HYMPC_PURE_PYTHON=1``
to force the numpy implementation.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("HYMPC_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # pragma: no cover - depends on build environment
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = backend.BACKEND

rollout = backend.rollout
trajectory_cost = backend.trajectory_cost
cost = backend.cost
gradient = backend.gradient
solve = backend.solve
