# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused Cython versions of the hot elementwise kernels.

Same formulas as dgpinn.kernels_py, but each kernel runs in a single pass
over the arrays instead of allocating a chain of numpy temporaries.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

name = "compiled"

ctypedef double f64


cdef cnp.ndarray _c(object a):
    # No-op for C-contiguous float64 input; copies otherwise.
    return np.ascontiguousarray(a, dtype=np.float64)


def tanh_bwd(object g_in, object y_in):
    cdef cnp.ndarray g = _c(g_in)
    cdef cnp.ndarray y = _c(y_in)
    cdef cnp.ndarray out = np.empty_like(g)
    cdef f64[::1] gv = g.ravel()
    cdef f64[::1] yv = y.ravel()
    cdef f64[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    for i in range(n):
        ov[i] = gv[i] * (1.0 - yv[i] * yv[i])
    return out


def tanh_bwd_inplace(cnp.ndarray g, object y_in):
    # g must be C-contiguous float64 (the fast path owns its buffers).
    cdef cnp.ndarray y = _c(y_in)
    cdef f64[::1] gv = g.ravel()
    cdef f64[::1] yv = y.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    for i in range(n):
        gv[i] *= 1.0 - yv[i] * yv[i]
    return g


def tanh_taylor_fwd(object y0_in, list us_in):
    cdef cnp.ndarray y0 = _c(y0_in)
    us = [_c(u) for u in us_in]
    cdef int k = len(us)
    ys = [np.empty_like(y0) for _ in range(k)]
    ps = [np.empty_like(y0) for _ in range(k)]
    cdef f64[::1] y0v = y0.ravel()
    cdef f64[::1] u1v = (<cnp.ndarray> us[0]).ravel()
    cdef f64[::1] y1v = (<cnp.ndarray> ys[0]).ravel()
    cdef f64[::1] p0v = (<cnp.ndarray> ps[0]).ravel()
    cdef f64[::1] u2v, u3v, u4v, y2v, y3v, y4v, p1v, p2v, p3v
    cdef Py_ssize_t i, n = y0v.shape[0]
    cdef f64 y0i, p0, p1, p2, p3, y1, y2, y3

    if k == 1:
        for i in range(n):
            y0i = y0v[i]
            p0 = 1.0 - y0i * y0i
            p0v[i] = p0
            y1v[i] = p0 * u1v[i]
        return ys, ps
    u2v = (<cnp.ndarray> us[1]).ravel()
    y2v = (<cnp.ndarray> ys[1]).ravel()
    p1v = (<cnp.ndarray> ps[1]).ravel()
    if k == 2:
        for i in range(n):
            y0i = y0v[i]
            p0 = 1.0 - y0i * y0i
            y1 = p0 * u1v[i]
            p1 = -2.0 * y0i * y1
            p0v[i] = p0
            y1v[i] = y1
            p1v[i] = p1
            y2v[i] = p0 * u2v[i] + 0.5 * p1 * u1v[i]
        return ys, ps
    u3v = (<cnp.ndarray> us[2]).ravel()
    y3v = (<cnp.ndarray> ys[2]).ravel()
    p2v = (<cnp.ndarray> ps[2]).ravel()
    if k == 3:
        for i in range(n):
            y0i = y0v[i]
            p0 = 1.0 - y0i * y0i
            y1 = p0 * u1v[i]
            p1 = -2.0 * y0i * y1
            y2 = p0 * u2v[i] + 0.5 * p1 * u1v[i]
            p2 = -(2.0 * y0i * y2 + y1 * y1)
            p0v[i] = p0
            y1v[i] = y1
            p1v[i] = p1
            y2v[i] = y2
            p2v[i] = p2
            y3v[i] = p0 * u3v[i] + (2.0 * p1 * u2v[i] + p2 * u1v[i]) / 3.0
        return ys, ps
    u4v = (<cnp.ndarray> us[3]).ravel()
    y4v = (<cnp.ndarray> ys[3]).ravel()
    p3v = (<cnp.ndarray> ps[3]).ravel()
    for i in range(n):
        y0i = y0v[i]
        p0 = 1.0 - y0i * y0i
        y1 = p0 * u1v[i]
        p1 = -2.0 * y0i * y1
        y2 = p0 * u2v[i] + 0.5 * p1 * u1v[i]
        p2 = -(2.0 * y0i * y2 + y1 * y1)
        y3 = p0 * u3v[i] + (2.0 * p1 * u2v[i] + p2 * u1v[i]) / 3.0
        p3 = -2.0 * (y0i * y3 + y1 * y2)
        p0v[i] = p0
        y1v[i] = y1
        p1v[i] = p1
        y2v[i] = y2
        p2v[i] = p2
        y3v[i] = y3
        p3v[i] = p3
        y4v[i] = p0 * u4v[i] + (3.0 * p1 * u3v[i] + 2.0 * p2 * u2v[i] + p3 * u1v[i]) / 4.0
    return ys, ps


def tanh_taylor_bwd(list gys, object y0_in, list us_in, list ys_in, list ps_in):
    cdef cnp.ndarray y0 = _c(y0_in)
    us = [_c(u) for u in us_in]
    ys = [_c(y) for y in ys_in]
    ps = [_c(p) for p in ps_in]
    cdef int k = len(us)
    cdef cnp.ndarray gy0 = np.empty_like(y0)
    gus = [np.empty_like(y0) for _ in range(k)]
    zeros = None
    gl = []
    for i_ in range(k):
        if gys[i_] is None:
            if zeros is None:
                zeros = np.zeros_like(y0)
            gl.append(zeros)
        else:
            gl.append(_c(gys[i_]))

    cdef f64[::1] y0v = y0.ravel()
    cdef f64[::1] gy0v = gy0.ravel()
    cdef f64[::1] u1v = (<cnp.ndarray> us[0]).ravel()
    cdef f64[::1] y1v = (<cnp.ndarray> ys[0]).ravel()
    cdef f64[::1] p0v = (<cnp.ndarray> ps[0]).ravel()
    cdef f64[::1] g1v = (<cnp.ndarray> gl[0]).ravel()
    cdef f64[::1] gu1v = (<cnp.ndarray> gus[0]).ravel()
    cdef f64[::1] u2v, u3v, u4v, y2v, y3v, y4v, p1v, p2v, p3v
    cdef f64[::1] g2v, g3v, g4v, gu2v, gu3v, gu4v
    cdef Py_ssize_t i, n = y0v.shape[0]
    cdef f64 gp0, gp1, gp2, gp3, g1, g2, g3, g4, y0i, gy0i

    if k >= 2:
        u2v = (<cnp.ndarray> us[1]).ravel()
        y2v = (<cnp.ndarray> ys[1]).ravel()
        p1v = (<cnp.ndarray> ps[1]).ravel()
        g2v = (<cnp.ndarray> gl[1]).ravel()
        gu2v = (<cnp.ndarray> gus[1]).ravel()
    if k >= 3:
        u3v = (<cnp.ndarray> us[2]).ravel()
        y3v = (<cnp.ndarray> ys[2]).ravel()
        p2v = (<cnp.ndarray> ps[2]).ravel()
        g3v = (<cnp.ndarray> gl[2]).ravel()
        gu3v = (<cnp.ndarray> gus[2]).ravel()
    if k >= 4:
        u4v = (<cnp.ndarray> us[3]).ravel()
        y4v = (<cnp.ndarray> ys[3]).ravel()
        p3v = (<cnp.ndarray> ps[3]).ravel()
        g4v = (<cnp.ndarray> gl[3]).ravel()
        gu4v = (<cnp.ndarray> gus[3]).ravel()

    for i in range(n):
        y0i = y0v[i]
        gy0i = 0.0
        gp0 = 0.0
        gp1 = 0.0
        gp2 = 0.0
        gp3 = 0.0
        g1 = g1v[i]
        if k >= 4:
            g4 = g4v[i]
            g3 = g3v[i]
            g2 = g2v[i]
            gp0 += g4 * u4v[i]
            gu4v[i] = g4 * p0v[i]
            gp1 += 0.75 * g4 * u3v[i]
            gu3v[i] = 0.75 * g4 * p1v[i]
            gp2 += 0.5 * g4 * u2v[i]
            gu2v[i] = 0.5 * g4 * p2v[i]
            gp3 += 0.25 * g4 * u1v[i]
            gu1v[i] = 0.25 * g4 * p3v[i]
            gy0i += -2.0 * gp3 * y3v[i]
            g3 += -2.0 * gp3 * y0i
            g1 += -2.0 * gp3 * y2v[i]
            g2 += -2.0 * gp3 * y1v[i]
        elif k >= 3:
            g3 = g3v[i]
            g2 = g2v[i]
            gu3v[i] = 0.0
            gu2v[i] = 0.0
            gu1v[i] = 0.0
        elif k >= 2:
            g2 = g2v[i]
            gu2v[i] = 0.0
            gu1v[i] = 0.0
        else:
            gu1v[i] = 0.0
        if k >= 3:
            gp0 += g3 * u3v[i]
            gu3v[i] += g3 * p0v[i]
            gp1 += (2.0 / 3.0) * g3 * u2v[i]
            gu2v[i] += (2.0 / 3.0) * g3 * p1v[i]
            gp2 += (1.0 / 3.0) * g3 * u1v[i]
            gu1v[i] += (1.0 / 3.0) * g3 * p2v[i]
            gy0i += -2.0 * gp2 * y2v[i]
            g2 += -2.0 * gp2 * y0i
            g1 += -2.0 * gp2 * y1v[i]
        if k >= 2:
            gp0 += g2 * u2v[i]
            gu2v[i] += g2 * p0v[i]
            gp1 += 0.5 * g2 * u1v[i]
            gu1v[i] += 0.5 * g2 * p1v[i]
            gy0i += -2.0 * gp1 * y1v[i]
            g1 += -2.0 * gp1 * y0i
        gp0 += g1 * u1v[i]
        gu1v[i] += g1 * p0v[i]
        gy0i += -2.0 * gp0 * y0i
        gy0v[i] = gy0i
    return gy0, gus


def mean_sq(object x_in):
    cdef cnp.ndarray x = _c(x_in)
    cdef f64[::1] xv = x.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef f64 acc = 0.0
    for i in range(n):
        acc += xv[i] * xv[i]
    return acc / n


def mean_sq_bwd(f64 g, object x_in, out=None):
    cdef cnp.ndarray x = _c(x_in)
    cdef cnp.ndarray res = np.empty_like(x) if out is None else out
    cdef f64[::1] xv = x.ravel()
    cdef f64[::1] ov = res.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef f64 c = 2.0 * g / n
    for i in range(n):
        ov[i] = c * xv[i]
    return res
