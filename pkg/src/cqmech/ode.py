"""Adaptive Dormand-Prince 5(4) integrator with projection and stop hooks.

scipy's ``solve_ivp`` has no way to modify the state after an accepted step,
which the rotor integrator needs (orientation re-orthonormalisation), so the
stepper is written out here.  Coefficients are the standard DOPRI5 tableau
with the 4th-order continuous extension of Hairer, Norsett & Wanner.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import StepSizeUnderflow, NumericalError

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
D1, D3, D4, D5, D6, D7 = (
    -12715105075 / 11282082432, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423)

_C = np.array([0.0, C2, C3, C4, C5, 1.0, 1.0])
_A = np.zeros((6, 6))
_A[1, :1] = [A21]
_A[2, :2] = [A31, A32]
_A[3, :3] = [A41, A42, A43]
_A[4, :4] = [A51, A52, A53, A54]
_A[5, :5] = [A61, A62, A63, A64, A65]
_B = np.array([A71, 0.0, A73, A74, A75, A76])
_E = np.array([E1, 0.0, E3, E4, E5, E6, E7])
_D = np.array([D1, 0.0, D3, D4, D5, D6, D7])


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray            # shape (len(t), n)
    n_steps: int = 0
    n_rejected: int = 0
    stopped: bool = False    # True if the stop hook ended the run early
    t_steps: list = field(default_factory=list, repr=False)


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return np.sqrt(np.mean((err / scale) ** 2))


def dopri5(f, t_span, y0, rtol=1e-9, atol=1e-12, t_eval=None, project=None,
           stop=None, h0=None, max_step=np.inf, max_steps=10_000_000,
           record_steps=False):
    """Integrate ``y' = f(t, y)`` over ``t_span`` (which may run backwards).

    ``project(y)`` is applied to every accepted step and to interpolated
    outputs.  ``stop(t, y)`` is called after every accepted step; a truthy
    return ends the integration at that step, which is then appended to the
    output.  Without ``t_eval`` every accepted step is returned.
    ``max_step`` bounds the step so narrow features in ``f`` cannot be jumped.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float)
    if project is not None:
        y = project(y)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(direction * np.diff(t_eval) <= 0):
            raise ValueError("t_eval must be strictly monotone in the direction of integration")
    out_t, out_y = [], []
    next_out = 0
    if t_eval is None:
        out_t.append(t0)
        out_y.append(y.copy())
    else:
        while next_out < len(t_eval) and t_eval[next_out] == t0:
            out_t.append(t0)
            out_y.append(y.copy())
            next_out += 1

    res = OdeResult(t=np.empty(0), y=np.empty((0, y.size)))
    if span == 0.0:
        res.t, res.y = np.array(out_t), np.array(out_y).reshape(len(out_t), y.size)
        return res

    t = t0
    k1 = np.asarray(f(t, y), dtype=float)
    if h0 is None:
        # Hairer's starting-step heuristic, simplified
        scale = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((k1 / scale) ** 2))
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, span, max_step)
    else:
        h = min(abs(h0), span, max_step)
    h_min_rel = 16 * np.finfo(float).eps
    fac_max, fac_min, safety = 5.0, 0.2, 0.9
    err_old = 1e-4
    K = np.empty((7, y.size))

    while True:
        if res.n_steps >= max_steps:
            raise NumericalError(f"dopri5 exceeded max_steps={max_steps} at t={t}")
        remaining = abs(t1 - t)
        if remaining <= h_min_rel * max(1.0, abs(t)):
            break
        if h > remaining:
            h = remaining
        if h < h_min_rel * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g} (stiff region?)", t, y)
        hs = direction * h
        K[0] = k1
        for st in range(1, 6):
            K[st] = f(t + _C[st] * hs, y + hs * (_A[st, :st] @ K[:st]))
        y_new = y + hs * (_B @ K[:6])
        K[6] = f(t + hs, y_new)
        k7 = K[6]
        err = hs * (_E @ K)
        en = _error_norm(err, y, y_new, rtol, atol)
        if not np.isfinite(en):
            h *= 0.1
            res.n_rejected += 1
            continue
        if en > 1.0:
            h *= max(fac_min, safety * en ** -0.2)
            res.n_rejected += 1
            continue

        t_new = t1 if h == remaining else t + hs
        if t_eval is not None and next_out < len(t_eval):
            ydiff = y_new - y
            bspl = hs * k1 - ydiff
            rc5 = hs * (_D @ K)
            rc4 = ydiff - hs * k7 - bspl
            while next_out < len(t_eval) and direction * (t_eval[next_out] - t_new) <= 0:
                th = (t_eval[next_out] - t) / hs
                yi = y + th * (ydiff + (1 - th) * (bspl + th * (rc4 + (1 - th) * rc5)))
                if project is not None:
                    yi = project(yi)
                out_t.append(t_eval[next_out])
                out_y.append(yi)
                next_out += 1

        if project is not None:
            y_new = project(y_new)
            k7 = np.asarray(f(t_new, y_new), dtype=float)
        t, y, k1 = t_new, y_new, np.array(k7)
        res.n_steps += 1
        if record_steps:
            res.t_steps.append(t)
        if t_eval is None:
            out_t.append(t)
            out_y.append(y.copy())

        # PI step-size controller
        fac = safety * en ** -0.17 * err_old ** 0.04 if en > 0 else fac_max
        h = min(h * min(fac_max, max(fac_min, fac)), max_step)
        err_old = max(en, 1e-4)

        if stop is not None and stop(t, y):
            res.stopped = True
            if t_eval is not None and (not out_t or out_t[-1] != t):
                out_t.append(t)
                out_y.append(y.copy())
            break

    res.t = np.array(out_t)
    res.y = np.array(out_y).reshape(len(out_t), y.size)
    return res
