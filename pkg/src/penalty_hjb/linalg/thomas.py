import numpy as np
from numba import njit


# ---------- NUMERIC CORE: nopython ----------
# fastmath stays off: the solvers rely on bit-identical repeats to detect fixed points.

@njit(cache=True)
def thomas_solve(lower, diag, upper, rhs, threshold):
    """
    lower     : (n-1,) sub-diagonal, lower[i-1] multiplies x[i-1] in row i
    diag      : (n,)
    upper     : (n-1,) super-diagonal, upper[i] multiplies x[i+1] in row i
    rhs       : (n,)
    threshold : smallest admissible pivot magnitude

    Returns:
        x       : (n,) solution (partially filled on failure)
        bad_row : -1 on success, else the row whose pivot fell below threshold
        pivot   : the offending pivot (0.0 on success)
    """
    n = diag.shape[0]
    cp = np.empty(n, dtype=np.float64)
    dp = np.empty(n, dtype=np.float64)
    x = np.zeros(n, dtype=np.float64)

    den = diag[0]
    if abs(den) < threshold:
        return x, 0, den
    cp[0] = upper[0] / den if n > 1 else 0.0
    dp[0] = rhs[0] / den

    for i in range(1, n):
        den = diag[i] - lower[i - 1] * cp[i - 1]
        if abs(den) < threshold:
            return x, i, den
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / den

    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]

    return x, -1, 0.0
