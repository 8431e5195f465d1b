"""Numpy fallback for the compiled tree kernel."""
import numpy as np


def tree_backward_value(terminal, dt, kappa, include_y):
    """Backward value at the root of a recombining binomial tree.

    ``terminal`` holds the claim on some level with ``n + 1`` nodes; the
    recursion runs ``n`` steps down to the root.  The driver is
    ``kappa*(|y| + |z|)`` when ``include_y`` else ``kappa*|z|`` (``kappa``
    may be negative).  The y-part is handled implicitly:
    ``y = a / (1 - kappa*sign(a)*dt)`` for ``a = E[next] + kappa*|z|*dt``.
    """
    w = np.array(terminal, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("terminal must be a non-empty 1-d array")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if include_y and abs(kappa) * dt >= 1.0:
        raise ValueError("kappa * dt must be < 1 for the implicit step")
    half_inv_sq = 0.5 / np.sqrt(dt)
    kdt = kappa * dt
    for level in range(w.size - 2, -1, -1):
        lo = w[: level + 1]
        hi = w[1 : level + 2]
        a = 0.5 * (lo + hi) + np.abs((hi - lo) * half_inv_sq) * kdt
        if include_y:
            a = a / np.where(a >= 0.0, 1.0 - kdt, 1.0 + kdt)
        w[: level + 1] = a
    return float(w[0])
