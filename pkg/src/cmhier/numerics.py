"""Dense numeric kernel: linear solves, Newton iteration, finite differences, RK4.

Everything operates on plain 1-D/2-D float ndarrays. Problem sizes are tiny
(N up to a few tens), so clarity wins over asymptotics throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence, SingularJacobian, SingularMatrix

PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class NewtonSettings:
    """Controls for the damped Newton iteration.

    tolerance is a max-norm bound on the residual; damping scales every
    update step and must lie in (0, 1].
    """

    tolerance: float = 1e-12
    max_iterations: int = 50
    damping: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")


DEFAULT_NEWTON = NewtonSettings()


def linear_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ v = b by LU with partial pivoting.

    Raises SingularMatrix when the best available pivot drops below
    PIVOT_RTOL times the largest entry of `a`.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if b.shape != (n,):
        raise ValueError("right-hand side length must match")
    threshold = PIVOT_RTOL * max(np.max(np.abs(a)), 1e-300)
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        if np.abs(a[pivot_row, col]) < threshold:
            raise SingularMatrix(f"pivot {a[pivot_row, col]:.3e} below threshold in column {col}")
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            b[[col, pivot_row]] = b[[pivot_row, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= np.outer(factors, a[col, col:])
        b[col + 1:] -= factors * b[col]
    v = np.empty(n)
    for row in range(n - 1, -1, -1):
        v[row] = (b[row] - a[row, row + 1:] @ v[row + 1:]) / a[row, row]
    return v


def fd_jacobian(residual_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Forward-difference Jacobian with per-coordinate step 1e-7 * (1 + |x_i|)."""
    f0 = np.asarray(residual_fn(x), dtype=float)
    n = len(x)
    jac = np.empty((len(f0), n))
    for i in range(n):
        h = 1e-7 * (1.0 + abs(x[i]))
        xp = x.copy()
        xp[i] += h
        jac[:, i] = (np.asarray(residual_fn(xp), dtype=float) - f0) / h
    return jac


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    guess: np.ndarray,
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    settings: NewtonSettings = DEFAULT_NEWTON,
) -> np.ndarray:
    """Damped Newton iteration for residual_fn(x) = 0.

    The Jacobian is formed by finite differences when jacobian_fn is absent.
    Steps that land on a non-finite residual (a pole of the residual) are
    halved until the residual is evaluable again; the nominal damping factor
    from `settings` scales every accepted update.
    """
    x = np.array(guess, dtype=float)
    f = np.asarray(residual_fn(x), dtype=float)
    if len(f) != len(x):
        raise ValueError("residual length must match guess length")
    for _ in range(settings.max_iterations):
        if np.all(np.isfinite(f)) and np.max(np.abs(f)) <= settings.tolerance:
            assert np.max(np.abs(residual_fn(x))) <= settings.tolerance
            return x
        jac = jacobian_fn(x) if jacobian_fn is not None else fd_jacobian(residual_fn, x)
        try:
            step = linear_solve(jac, f)
        except SingularMatrix as exc:
            raise SingularJacobian(str(exc)) from exc
        scale = settings.damping
        for _ in range(60):
            x_new = x - scale * step
            f_new = np.asarray(residual_fn(x_new), dtype=float)
            if np.all(np.isfinite(f_new)):
                break
            scale *= 0.5
        else:
            raise NonConvergence("could not find a finite residual along the Newton step")
        x, f = x_new, f_new
    if np.all(np.isfinite(f)) and np.max(np.abs(f)) <= settings.tolerance:
        return x
    raise NonConvergence(
        f"residual {np.max(np.abs(f)):.3e} above tolerance {settings.tolerance:.1e} "
        f"after {settings.max_iterations} iterations"
    )


def fd_derivative(f: Callable[[np.ndarray], float], point: np.ndarray, index: int, step: float) -> float:
    """Central difference of a scalar function along one coordinate; O(step^2)."""
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=float)
    e = np.zeros_like(point)
    e[index] = step
    return (f(point + e) - f(point - e)) / (2.0 * step)


def rk4_step(field: Callable[[np.ndarray], np.ndarray], state: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta update; field failures propagate."""
    state = np.asarray(state, dtype=float)
    k1 = np.asarray(field(state), dtype=float)
    k2 = np.asarray(field(state + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(field(state + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(field(state + dt * k3), dtype=float)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
