"""Continuous-time rational Calogero-Moser hierarchy.

Implements the first two members (flows labelled k=2 and k=3): Lagrangians,
Hamiltonians with analytic gradients, the velocity constraint linking the two
flows, Legendre-transform checks, and the Lax pair with its trace invariants.

Coupling convention: the off-diagonal Lax coefficient is a single real
parameter gamma (default -2), fixed so that (1/2)Tr L^2 and (1/3)Tr L^3
reproduce the two Hamiltonians exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollisionSingularity

COLLISION_TOL = 1e-12

FLOW_INDICES = (2, 3)


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("expected a non-empty 1-D array")
    return arr


def min_gap(x: np.ndarray) -> float:
    """Smallest pairwise distance; inf for a single particle."""
    if len(x) < 2:
        return np.inf
    d = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def check_collision_free(x: np.ndarray, tol: float = COLLISION_TOL, s=None) -> None:
    g = min_gap(x)
    if g < tol:
        raise CollisionSingularity(f"minimum gap {g:.3e} below {tol:.1e}", s=s)


def check_flow_index(k: int) -> None:
    if k not in FLOW_INDICES:
        raise ValueError(f"flow index must be one of {FLOW_INDICES}, got {k}")


@dataclass(frozen=True)
class PhaseState:
    """Positions and momenta of N particles on the line."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "p", _as_vector(self.p))
        if len(self.x) != len(self.p):
            raise ValueError("x and p must have equal length")
        check_collision_free(self.x)

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class VelocityState:
    """Positions plus the two hierarchy velocities dX/dt2 and dX/dt3."""

    x: np.ndarray
    v2: np.ndarray
    v3: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "v2", _as_vector(self.v2))
        object.__setattr__(self, "v3", _as_vector(self.v3))
        if not (len(self.x) == len(self.v2) == len(self.v3)):
            raise ValueError("x, v2 and v3 must have equal length")
        check_collision_free(self.x)

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class CouplingConvention:
    """Off-diagonal Lax coefficient; gamma**2 = 4 matches the Hamiltonians."""

    gamma: float = -2.0

    def __post_init__(self):
        if self.gamma == 0:
            raise ValueError("gamma must be nonzero")


DEFAULT_COUPLING = CouplingConvention()


def _inv_gap(x: np.ndarray) -> np.ndarray:
    """Matrix 1/(x_i - x_j) with zero diagonal."""
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return 1.0 / d


def inverse_square_sums(x: np.ndarray) -> np.ndarray:
    """Per-particle interaction sums sum_{j != i} 1/(x_i - x_j)^2."""
    return (_inv_gap(x) ** 2).sum(axis=1)


def hamiltonian(k: int, state: PhaseState) -> float:
    """H_(t2) = sum p^2/2 - sum' 2/(x_i-x_j)^2, H_(t3) = sum p^3/3 - sum' 4 p_i/(x_i-x_j)^2."""
    check_flow_index(k)
    check_collision_free(state.x)
    w = inverse_square_sums(state.x)
    if k == 2:
        return float(0.5 * np.sum(state.p**2) - 2.0 * np.sum(w))
    return float(np.sum(state.p**3) / 3.0 - 4.0 * np.sum(state.p * w))


def hamiltonian_grad(k: int, state: PhaseState) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dH/dx, dH/dp) for either flow."""
    check_flow_index(k)
    check_collision_free(state.x)
    x, p = state.x, state.p
    inv = _inv_gap(x)
    inv3 = inv**3
    if k == 2:
        dx = 8.0 * inv3.sum(axis=1)
        return dx, p.copy()
    dx = 8.0 * ((p[:, None] + p[None, :]) * inv3).sum(axis=1)
    dp = p**2 - 4.0 * inverse_square_sums(x)
    return dx, dp


def lagrangian(k: int, state: VelocityState) -> float:
    """L_(t2) = sum v2^2/2 + sum' 2/(x_i-x_j)^2,
    L_(t3) = sum (v2 v3 + v2^3/4) - sum' 3 v2_i/(x_i-x_j)^2."""
    check_flow_index(k)
    check_collision_free(state.x)
    w = inverse_square_sums(state.x)
    if k == 2:
        return float(0.5 * np.sum(state.v2**2) + 2.0 * np.sum(w))
    return float(np.sum(state.v2 * state.v3 + 0.25 * state.v2**3) - 3.0 * np.sum(state.v2 * w))


def lagrangian_dx(k: int, x: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Analytic dL_(tk)/dx; the t3 member needs the t2-velocity."""
    check_flow_index(k)
    inv3 = _inv_gap(x) ** 3
    if k == 2:
        return -8.0 * inv3.sum(axis=1)
    return 6.0 * ((v2[:, None] + v2[None, :]) * inv3).sum(axis=1)


def constraint_residual(state: VelocityState) -> np.ndarray:
    """Per-particle residual of the transversal constraint tying v3 to v2:
    v2^2/4 + v3/3 - sum_{j != i} 1/(x_i - x_j)^2."""
    check_collision_free(state.x)
    return 0.25 * state.v2**2 + state.v3 / 3.0 - inverse_square_sums(state.x)


def constraint_velocity(x: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """The v3 value that zeroes constraint_residual at given (x, v2)."""
    return 3.0 * inverse_square_sums(x) - 0.75 * v2**2


def legendre_check(k: int, state: VelocityState) -> float:
    """H_(tk)(x, P=v2) - (sum P_i v_k,i - L_(tk)).

    Vanishes identically for k=2. For k=3 the value is generally nonzero with
    the momentum identification P=v2; it is reported as a diagnostic.
    """
    check_flow_index(k)
    phase = PhaseState(state.x, state.v2)
    vk = state.v2 if k == 2 else state.v3
    return hamiltonian(k, phase) - (float(np.sum(state.v2 * vk)) - lagrangian(k, state))


def build_lax_pair(state: PhaseState, conv: CouplingConvention = DEFAULT_COUPLING) -> tuple[np.ndarray, np.ndarray]:
    """Lax pair for the t2 flow.

    L has the momenta on the diagonal and gamma/(x_i - x_j) off it. M carries
    gamma/(x_i - x_j)^2 off-diagonal and minus the row interaction sum on the
    diagonal, which makes every row of M sum to zero and zeroes the Lax
    residual pointwise.
    """
    check_collision_free(state.x)
    inv = _inv_gap(state.x)
    L = conv.gamma * inv
    np.fill_diagonal(L, state.p)
    M = conv.gamma * inv**2
    np.fill_diagonal(M, -conv.gamma * inverse_square_sums(state.x))
    return L, M


def invariants(state: PhaseState, conv: CouplingConvention = DEFAULT_COUPLING, kmax: int = 3) -> np.ndarray:
    """Trace invariants I_l = Tr(L^l)/l for l = 1..kmax.

    With gamma = -2, I_2 and I_3 coincide with the two Hamiltonians.
    """
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    L, _ = build_lax_pair(state, conv)
    out = np.empty(kmax)
    power = np.eye(state.n)
    for l in range(1, kmax + 1):
        power = power @ L
        out[l - 1] = np.trace(power) / l
    return out


def lax_residual(state: PhaseState, conv: CouplingConvention = DEFAULT_COUPLING) -> float:
    """Max-norm of dL/dt2 + [L, M] along the t2 flow; zero in exact arithmetic."""
    L, M = build_lax_pair(state, conv)
    dx_h, _ = hamiltonian_grad(2, state)
    xdot, pdot = state.p, -dx_h
    d = state.x[:, None] - state.x[None, :]
    np.fill_diagonal(d, np.inf)
    dL = -conv.gamma * (xdot[:, None] - xdot[None, :]) / d**2
    np.fill_diagonal(dL, pdot)
    return float(np.max(np.abs(dL + (L @ M - M @ L))))
