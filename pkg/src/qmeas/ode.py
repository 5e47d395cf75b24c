"""Fixed-step classical Runge-Kutta integration."""
import numpy as np

from .errors import InvalidArgumentError


def step_count(t_final, dt):
    """Number of steps of size ``dt`` covering ``t_final``; must be near-integer."""
    if not (dt > 0 and t_final >= 0):
        raise InvalidArgumentError("need dt > 0 and t_final >= 0")
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise InvalidArgumentError(f"t_final={t_final} is not a multiple of dt={dt}")
    return n


def rk4(f, y0, dt, n_steps, sample_every=1):
    """Integrate the autonomous system ``y' = f(y)`` with classical RK4.

    Returns ``(times, samples)`` where samples are taken at step indices
    ``0, sample_every, 2*sample_every, ...`` up to and including ``n_steps``
    when it is a multiple of ``sample_every``.
    """
    y = np.array(y0, dtype=np.result_type(y0, float))
    out = [y.copy()]
    idx = [0]
    h2 = 0.5 * dt
    for k in range(1, n_steps + 1):
        k1 = f(y)
        k2 = f(y + h2 * k1)
        k3 = f(y + h2 * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % sample_every == 0:
            out.append(y.copy())
            idx.append(k)
    return np.asarray(idx) * dt, np.stack(out)
