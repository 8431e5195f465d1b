"""Backend selection for the hot tree-recursion kernel.

The compiled Cython kernel is preferred when it imported cleanly; the numpy
twin is used otherwise.  Set ``NEBSDE_PURE_PYTHON=1`` to force the fallback.
Both backends expose ``tree_backward_value`` with identical semantics.
"""
import os

import numpy as np

if os.environ.get("NEBSDE_PURE_PYTHON"):
    from ._tree_np import tree_backward_value

    BACKEND = "python"
else:
    try:
        from ._tree_cy import tree_backward_value

        BACKEND = "cython"
    except ImportError:
        from ._tree_np import tree_backward_value

        BACKEND = "python"

__all__ = ["BACKEND", "tree_backward_value", "kappa_continuation"]


def kappa_continuation(values, dt, steps, kappa, include_y):
    """Propagate node values through ``steps`` zero-noise implicit steps.

    With z frozen at 0 the driver ``kappa*(|y| + |z|)`` reduces to a scalar
    ODE per node whose implicit step is ``y -> y / (1 - kappa*sign(y)*dt)``.
    The sign of each value is preserved step by step, so the whole
    continuation collapses to one scale factor per sign.
    """
    values = np.asarray(values, dtype=float)
    if steps == 0 or not include_y or kappa == 0.0:
        return values.copy()
    if abs(kappa) * dt >= 1.0:
        raise ValueError("kappa * dt must be < 1 for the implicit step")
    pos = (1.0 - kappa * dt) ** (-steps)
    neg = (1.0 + kappa * dt) ** (-steps)
    return np.where(values >= 0.0, values * pos, values * neg)
