"""Pure-numpy implementations of the hot elementwise kernels.

These are the reference implementations; `dgpinn._kernels` provides fused
Cython versions of the same operations.  `dgpinn.backend` picks one set at
import time.  Both operate on float64 arrays and compute identical formulas,
so they agree to rounding.

The Taylor kernels propagate truncated univariate Taylor coefficients of a
network layer through tanh.  Writing the layer input along a ray as
u(s) = u0 + u1*s + u2*s^2 + ... , the output y(s) = tanh(u(s)) satisfies
y' = (1 - y^2) u', which gives the coefficient recurrence

    (k+1) * y_{k+1} = sum_{i+j=k} p_i * (j+1) * u_{j+1},   p = 1 - y*y

unrolled below up to 4th order.  Coefficient k carries the k-th derivative
divided by k!.
"""

from __future__ import annotations

import numpy as np

name = "python"


def tanh_bwd(g, y):
    """Adjoint of y = tanh(x): returns g * (1 - y^2)."""
    return g * (1.0 - y * y)


def tanh_bwd_inplace(g, y):
    """Adjoint of tanh written into g's buffer; returns g."""
    g *= 1.0 - y * y
    return g


def tanh_taylor_fwd(y0, us):
    """Propagate Taylor coefficients u_1..u_K through tanh given y0 = tanh(u0).

    Args:
        y0: value-slot output of the layer, shape (n, w).
        us: list of K coefficient arrays u_1..u_K, each shape (n, w), 1 <= K <= 4.

    Returns:
        (ys, ps): output coefficients y_1..y_K and the p_0..p_{K-1} series of
        1 - y^2 needed by the backward pass.
    """
    k = len(us)
    p0 = 1.0 - y0 * y0
    y1 = p0 * us[0]
    if k == 1:
        return [y1], [p0]
    p1 = -2.0 * y0 * y1
    y2 = p0 * us[1] + 0.5 * p1 * us[0]
    if k == 2:
        return [y1, y2], [p0, p1]
    p2 = -(2.0 * y0 * y2 + y1 * y1)
    y3 = p0 * us[2] + (2.0 * p1 * us[1] + p2 * us[0]) / 3.0
    if k == 3:
        return [y1, y2, y3], [p0, p1, p2]
    p3 = -2.0 * (y0 * y3 + y1 * y2)
    y4 = p0 * us[3] + (3.0 * p1 * us[2] + 2.0 * p2 * us[1] + p3 * us[0]) / 4.0
    return [y1, y2, y3, y4], [p0, p1, p2, p3]


def tanh_taylor_bwd(gys, y0, us, ys, ps):
    """Adjoint of tanh_taylor_fwd.

    Args:
        gys: list of K adjoint arrays for y_1..y_K (entries may be None).
        y0, us, ys, ps: values saved from the forward pass.

    Returns:
        (gy0, gus): adjoint for y0 and a list of adjoints for u_1..u_K.
    """
    k = len(us)
    zeros = None

    def adj(i):
        nonlocal zeros
        if gys[i] is not None:
            return gys[i]
        if zeros is None:
            zeros = np.zeros_like(y0)
        return zeros

    gy = [adj(i) for i in range(k)]
    gus = [None] * k
    gy0 = np.zeros_like(y0)
    gp = [np.zeros_like(y0) for _ in range(k)]

    # Reverse sweep over the unrolled recurrence, highest order first.
    if k >= 4:
        g4 = gy[3]
        gp[0] += g4 * us[3]
        gus[3] = g4 * ps[0]
        gp[1] += 0.75 * g4 * us[2]
        gus[2] = 0.75 * g4 * ps[1]
        gp[2] += 0.5 * g4 * us[1]
        gus[1] = 0.5 * g4 * ps[2]
        gp[3] += 0.25 * g4 * us[0]
        gus[0] = 0.25 * g4 * ps[3]
        # p3 = -2*(y0*y3 + y1*y2)
        gy0 += -2.0 * gp[3] * ys[2]
        gy[2] = gy[2] + (-2.0 * gp[3] * y0)
        gy[0] = gy[0] + (-2.0 * gp[3] * ys[1])
        gy[1] = gy[1] + (-2.0 * gp[3] * ys[0])
    if k >= 3:
        g3 = gy[2]
        gp[0] += g3 * us[2]
        gus[2] = _acc(gus[2], g3 * ps[0])
        gp[1] += (2.0 / 3.0) * g3 * us[1]
        gus[1] = _acc(gus[1], (2.0 / 3.0) * g3 * ps[1])
        gp[2] += (1.0 / 3.0) * g3 * us[0]
        gus[0] = _acc(gus[0], (1.0 / 3.0) * g3 * ps[2])
        # p2 = -(2*y0*y2 + y1^2)
        gy0 += -2.0 * gp[2] * ys[1]
        gy[1] = gy[1] + (-2.0 * gp[2] * y0)
        gy[0] = gy[0] + (-2.0 * gp[2] * ys[0])
    if k >= 2:
        g2 = gy[1]
        gp[0] += g2 * us[1]
        gus[1] = _acc(gus[1], g2 * ps[0])
        gp[1] += 0.5 * g2 * us[0]
        gus[0] = _acc(gus[0], 0.5 * g2 * ps[1])
        # p1 = -2*y0*y1
        gy0 += -2.0 * gp[1] * ys[0]
        gy[0] = gy[0] + (-2.0 * gp[1] * y0)
    g1 = gy[0]
    gp[0] += g1 * us[0]
    gus[0] = _acc(gus[0], g1 * ps[0])
    # p0 = 1 - y0^2
    gy0 += -2.0 * gp[0] * y0
    return gy0, gus


def _acc(dst, contrib):
    if dst is None:
        return contrib
    dst += contrib
    return dst


def mean_sq(x):
    """Mean of squared entries."""
    return float(np.mean(x * x))


def mean_sq_bwd(g, x, out=None):
    """Adjoint of mean_sq: (2 g / n) * x."""
    return np.multiply(x, 2.0 * g / x.size, out=out)
