"""First-order and quasi-Newton minimizers on flat parameter vectors.

Adam is the standard bias-corrected variant.  The quasi-Newton minimizer is
L-BFGS with a bounded (s, y) history, two-loop recursion, and a strong
Wolfe line search; the configured step scale multiplies the search
direction, so the line search's unit trial step realizes a base step of
step_scale times the two-loop direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimizationError(RuntimeError):
    """Non-finite gradient or loss where a finite one is required."""


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; mutates `state`, returns new theta."""
    if grad.shape != theta.shape:
        raise ValueError("gradient length does not match parameter vector")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise OptimizationError(f"non-finite gradient entry at index {bad}")
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1**t)
    vhat = state.v / (1.0 - state.beta2**t)
    return theta - state.lr * mhat / (np.sqrt(vhat) + state.eps)


@dataclass
class LbfgsConfig:
    history: int = 50
    step_scale: float = 1.0
    c1: float = 1e-4  # sufficient decrease
    c2: float = 0.9  # curvature
    grad_tol: float = 1e-9  # max-norm termination
    rel_loss_tol: float = 1e-15
    ls_max_trials: int = 25
    max_ls_failures: int = 5  # consecutive failures before giving up
    fallback_step: float = 1e-3  # times step_scale, steepest-descent length
    curvature_floor: float = 1e-14  # relative floor on s.y for stored pairs


@dataclass
class LbfgsResult:
    x: np.ndarray
    loss: float
    iterations: int
    n_evals: int
    converged: bool
    reason: str
    ls_failures: int = 0
    trace: list = field(default_factory=list)  # (iteration, loss, grad_max, n_evals)


def lbfgs_minimize(fg, x0: np.ndarray, config: LbfgsConfig, max_iterations: int,
                   callback=None) -> LbfgsResult:
    """Minimize fg(x) -> (loss, grad) starting from x0.

    Terminates at max_iterations, gradient max-norm < grad_tol, relative
    loss change < rel_loss_tol, or after max_ls_failures consecutive line
    search failures (converged=False).  Always returns the best-seen point.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fg(x)
    if not np.isfinite(f):
        raise OptimizationError("initial loss is not finite")
    n_evals = 1
    best_f, best_x = f, x.copy()
    s_hist: list = []
    y_hist: list = []
    rho_hist: list = []
    consecutive_failures = 0
    total_failures = 0
    trace = []
    converged = False
    reason = "max_iterations"
    it = 0

    for it in range(1, max_iterations + 1):
        gmax = float(np.max(np.abs(g)))
        if gmax < config.grad_tol:
            converged = True
            reason = "gradient"
            it -= 1
            break

        d = config.step_scale * _two_loop(g, s_hist, y_hist, rho_hist)
        dg0 = float(d @ g)
        if dg0 >= 0.0:
            # Not a descent direction (stale curvature); drop memory.
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            d = -config.step_scale * g
            dg0 = float(d @ g)

        alpha, f_new, g_new, evals, ok = _strong_wolfe(
            fg, x, f, g, d, dg0, config.c1, config.c2, config.ls_max_trials
        )
        n_evals += evals

        if not ok:
            total_failures += 1
            consecutive_failures += 1
            if consecutive_failures >= config.max_ls_failures:
                reason = "line_search_failures"
                converged = False
                trace.append((it, float(f), gmax, n_evals))
                break
            # Flagged fallback: short steepest-descent step, no pair stored.
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0:
                converged = True
                reason = "gradient"
                break
            x_new = x - (config.step_scale * config.fallback_step / gnorm) * g
            f_new, g_new = fg(x_new)
            n_evals += 1
            x, f_prev, f, g = x_new, f, f_new, g_new
        else:
            consecutive_failures = 0
            x_new = x + alpha * d
            s = x_new - x
            y = g_new - g
            sy = float(s @ y)
            if sy > config.curvature_floor * max(
                1e-300, float(np.linalg.norm(s)) * float(np.linalg.norm(y))
            ):
                s_hist.append(s)
                y_hist.append(y)
                rho_hist.append(1.0 / sy)
                if len(s_hist) > config.history:
                    s_hist.pop(0)
                    y_hist.pop(0)
                    rho_hist.pop(0)
            x, f_prev, f, g = x_new, f, f_new, g_new

        if not np.isfinite(f):
            raise OptimizationError(f"loss became non-finite at iteration {it}")
        if f < best_f:
            best_f, best_x = f, x.copy()
        trace.append((it, float(f), float(np.max(np.abs(g))), n_evals))
        if callback is not None:
            callback(it, f, g)
        if abs(f_prev - f) < config.rel_loss_tol * max(abs(f_prev), 1e-300):
            converged = True
            reason = "loss_change"
            break
    else:
        converged = True
        reason = "max_iterations"

    if best_f < f:
        x, f = best_x, best_f
    return LbfgsResult(x, float(f), it, n_evals, converged, reason, total_failures, trace)


def _two_loop(g, s_hist, y_hist, rho_hist):
    """Two-loop recursion for the L-BFGS search direction (returns -H g)."""
    q = g.copy()
    k = len(s_hist)
    alphas = np.empty(k)
    for i in range(k - 1, -1, -1):
        alphas[i] = rho_hist[i] * (s_hist[i] @ q)
        q -= alphas[i] * y_hist[i]
    if k > 0:
        sy = s_hist[-1] @ y_hist[-1]
        yy = y_hist[-1] @ y_hist[-1]
        q *= sy / yy
    for i in range(k):
        beta = rho_hist[i] * (y_hist[i] @ q)
        q += (alphas[i] - beta) * s_hist[i]
    return -q


def _strong_wolfe(fg, x, f0, g0, d, dg0, c1, c2, max_trials):
    """Strong Wolfe line search along d (bracket + zoom).

    phi(a) = f(x + a d).  Returns (alpha, f, g, n_evals, ok); on failure the
    last trial's values are returned with ok=False.  When the curvature
    condition fails at a trial (slope still steep), the next trial comes
    from cubic extrapolation toward the predicted valley, safeguarded to
    [2a, 10a]; with a damped step scale this reaches the full quasi-Newton
    step in one jump instead of a doubling cascade.
    """
    evals = 0

    def phi(a):
        nonlocal evals
        fa, ga = fg(x + a * d)
        evals += 1
        return fa, ga, float(ga @ d)

    a_max = 1e4
    a_prev, f_prev_, dphi_prev = 0.0, f0, dg0
    a = 1.0
    f_last, g_last = f0, g0

    for trial in range(max_trials):
        fa, ga, dphia = phi(a)
        f_last, g_last = fa, ga
        if not np.isfinite(fa):
            # Overshot into a bad region; treat as a bracketing high end.
            out = _zoom(phi, f0, dg0, a_prev, f_prev_, dphi_prev,
                        a, None, None, c1, c2, max_trials - evals)
            if out is not None:
                return (*out, evals, True)
            return a, f_last, g_last, evals, False
        if fa > f0 + c1 * a * dg0 or (trial > 0 and fa >= f_prev_):
            out = _zoom(phi, f0, dg0, a_prev, f_prev_, dphi_prev,
                        a, fa, dphia, c1, c2, max_trials - evals)
            if out is not None:
                return (*out, evals, True)
            return a, f_last, g_last, evals, False
        if abs(dphia) <= -c2 * dg0:
            if dphia < 0.5 * dg0 and evals < max_trials:
                # Accepted, but the slope says the valley is much further out
                # (typical with a damped step scale).  One secant probe toward
                # the zero of phi'; keep it only if it is also a Wolfe point
                # with a lower value.
                az = a * dg0 / (dg0 - dphia) if dg0 != dphia else 2.0 * a
                az = min(max(min(az, 10.0 * a), 2.0 * a), a_max)
                fz, gz, dphiz = phi(az)
                if (np.isfinite(fz) and fz <= f0 + c1 * az * dg0 and fz < fa
                        and abs(dphiz) <= -c2 * dg0):
                    return az, fz, gz, evals, True
            return a, fa, ga, evals, True
        if dphia >= 0.0:
            out = _zoom(phi, f0, dg0, a, fa, dphia,
                        a_prev, f_prev_, dphi_prev, c1, c2, max_trials - evals)
            if out is not None:
                return (*out, evals, True)
            return a, f_last, g_last, evals, False
        if evals >= max_trials or a >= a_max:
            break
        nxt = _cubic_step(a_prev, f_prev_, dphi_prev, a, fa, dphia)
        a_prev, f_prev_, dphi_prev = a, fa, dphia
        if nxt is None or not np.isfinite(nxt) or nxt <= a:
            nxt = 2.0 * a
        a = min(max(min(nxt, 10.0 * a), 2.0 * a), a_max)

    return a, f_last, g_last, evals, False


def _cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
    """Minimizer of the cubic Hermite interpolant; None when degenerate."""
    h = a_hi - a_lo
    if h == 0.0:
        return None
    d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi)
    disc = d1 * d1 - d_lo * d_hi
    if disc < 0.0:
        return None
    d2 = np.copysign(np.sqrt(disc), h)
    denom = d_hi - d_lo + 2.0 * d2
    if denom == 0.0:
        return None
    return a_hi - h * (d_hi + d2 - d1) / denom


def _zoom(phi, f0, dg0, a_lo, f_lo, dphi_lo, a_hi, f_hi, dphi_hi, c1, c2, budget):
    """Zoom phase: shrink [a_lo, a_hi] keeping the strong Wolfe invariants."""
    for _ in range(max(0, budget)):
        a = None
        if f_hi is not None and np.isfinite(f_hi) and dphi_hi is not None:
            a = _cubic_step(a_lo, f_lo, dphi_lo, a_hi, f_hi, dphi_hi)
        if a is None and f_hi is not None and np.isfinite(f_hi) and dphi_lo != 0.0:
            denom = 2.0 * (f_hi - f_lo - dphi_lo * (a_hi - a_lo))
            if denom != 0.0:
                a = a_lo - dphi_lo * (a_hi - a_lo) ** 2 / denom
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        width = hi - lo
        if a is None or not np.isfinite(a) or not (lo + 0.05 * width <= a <= hi - 0.05 * width):
            a = 0.5 * (a_lo + a_hi)
        fa, ga, dphia = phi(a)
        if not np.isfinite(fa) or fa > f0 + c1 * a * dg0 or fa >= f_lo:
            a_hi, f_hi, dphi_hi = a, fa, dphia
        else:
            if abs(dphia) <= -c2 * dg0:
                return a, fa, ga
            if dphia * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, dphi_hi = a_lo, f_lo, dphi_lo
            a_lo, f_lo, dphi_lo = a, fa, dphia
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
    return None
