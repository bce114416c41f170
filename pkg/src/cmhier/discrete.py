"""Fully discrete Calogero-Moser dynamics on a 2-D lattice.

One lattice direction advances by the implicit three-point equation of
motion; the second direction is reached through the four corner constraints
that couple neighbouring sites with lattice parameters p1, p2. On top of the
stepping live the verification quantities: the two-point Lagrangian, the
momentum routes, the plaquette closure and log-det identities, the discrete
Lax pair with its trace invariants, and the discrete Hamilton equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionSingularity, LogSingularity, NonConvergence, SingularMatrix
from .hierarchy import check_collision_free, min_gap
from .numerics import DEFAULT_NEWTON, NewtonSettings, newton_solve

LOG_TOL = 1e-12

CORNER_VARIANTS = ("a", "b", "c", "d")


@dataclass(frozen=True)
class LatticeParams:
    """Lattice parameters of the two discrete directions plus solver controls."""

    p1: float
    p2: float
    n: int
    newton: NewtonSettings = field(default_factory=lambda: DEFAULT_NEWTON)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("particle count must be at least 1")


@dataclass(frozen=True)
class Plaquette:
    """Elementary lattice square: site, both single shifts, double shift."""

    x00: np.ndarray
    x10: np.ndarray
    x01: np.ndarray
    x11: np.ndarray

    def __post_init__(self):
        for name in ("x00", "x10", "x01", "x11"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            check_collision_free(arr)
        for a, b in (
            (self.x00, self.x10),
            (self.x00, self.x01),
            (self.x10, self.x11),
            (self.x01, self.x11),
        ):
            if np.min(np.abs(a[:, None] - b[None, :])) < LOG_TOL:
                raise CollisionSingularity("coinciding coordinates across plaquette corners")


@dataclass(frozen=True)
class LatticeSheet:
    """Map from lattice sites (n1, n2) to particle configurations."""

    sites: dict
    params: LatticeParams


def _cross(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix 1/(x_m - y_l); infinite entries flagged by the caller's checks."""
    return 1.0 / (x[:, None] - y[None, :])


def _pair_sums(x: np.ndarray) -> np.ndarray:
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return (1.0 / d).sum(axis=1)


def discrete_el_residual(x_prev: np.ndarray, x_cur: np.ndarray, x_next: np.ndarray) -> np.ndarray:
    """Three-point equation of motion, per particle:
    sum_l [1/(x_m - x_next_l) + 1/(x_m - x_prev_l)] - sum_{l != m} 2/(x_m - x_l)."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_cur = np.asarray(x_cur, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    for arr in (x_prev, x_cur, x_next):
        check_collision_free(arr)
    return (
        _cross(x_cur, x_next).sum(axis=1)
        + _cross(x_cur, x_prev).sum(axis=1)
        - 2.0 * _pair_sums(x_cur)
    )


def discrete_step(x_prev: np.ndarray, x_cur: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Advance one lattice step by Newton on the implicit equation of motion.

    Initial guess is the uniform-motion extrapolation 2 x_cur - x_prev.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    x_cur = np.asarray(x_cur, dtype=float)
    check_collision_free(x_prev)
    check_collision_free(x_cur)
    const = _cross(x_cur, x_prev).sum(axis=1) - 2.0 * _pair_sums(x_cur)

    def residual(u):
        return const + _cross(x_cur, u).sum(axis=1)

    def jacobian(u):
        return _cross(x_cur, u) ** 2

    return newton_solve(residual, 2.0 * x_cur - x_prev, jacobian_fn=jacobian, settings=params.newton)


def _corner_system(variant: str, x: np.ndarray, known: np.ndarray, params: LatticeParams):
    """Residual of the printed corner constraint as const_m + sgn * sum_l 1/(x_m - u_l)."""
    if variant not in CORNER_VARIANTS:
        raise ValueError(f"variant must be one of {CORNER_VARIANTS}")
    d = params.p1 - params.p2
    known_sum = _cross(x, known).sum(axis=1)
    if variant == "a":      # known T1 x, solve T2 x
        const, sgn = known_sum - d, -1.0
    elif variant == "b":    # known T1^-1 x, solve T2^-1 x
        const, sgn = known_sum + d, -1.0
    elif variant == "c":    # known T1^-1 x, solve T2 x
        const, sgn = known_sum - 2.0 * _pair_sums(x) + d, +1.0
    else:                   # "d": known T2^-1 x, solve T1 x
        const, sgn = known_sum - 2.0 * _pair_sums(x) - d, +1.0

    def residual(u):
        return const + sgn * _cross(x, u).sum(axis=1)

    def jacobian(u):
        return sgn * _cross(x, u) ** 2

    return residual, jacobian, const, sgn


def _mean_field_guess(x: np.ndarray, const: np.ndarray, sgn: float) -> np.ndarray:
    """Solve each particle's own pole with cross terms frozen; exact for N=1."""
    n = len(x)
    u = x + 1e-3
    for _ in range(8):
        cross = np.array(
            [sum(1.0 / (x[m] - u[l]) for l in range(n) if l != m) for m in range(n)]
        )
        w = -sgn * (const + sgn * cross)
        with np.errstate(divide="ignore"):
            u_new = x - 1.0 / w
        if not np.all(np.isfinite(u_new)):
            return u
        if np.max(np.abs(u_new - u)) < 1e-10:
            return u_new
        u = u_new
    return u


def corner_solve(variant: str, known1: np.ndarray, known2: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Solve the printed corner constraint for the missing neighbour.

    known1 is the corner site itself, known2 its already-known neighbour:
    variant a solves the second-direction shift from (x, T1 x), b the inverse
    shifts, c the second-direction shift from (x, T1^-1 x), d the
    first-direction shift from (x, T2^-1 x).
    """
    x = np.asarray(known1, dtype=float)
    known = np.asarray(known2, dtype=float)
    check_collision_free(x)
    check_collision_free(known)
    residual, jacobian, const, sgn = _corner_system(variant, x, known, params)
    guess = _mean_field_guess(x, const, sgn)
    try:
        return newton_solve(residual, guess, jacobian_fn=jacobian, settings=params.newton)
    except NonConvergence:
        retry = NewtonSettings(
            tolerance=params.newton.tolerance,
            max_iterations=4 * params.newton.max_iterations,
            damping=0.5,
        )
        return newton_solve(residual, guess, jacobian_fn=jacobian, settings=retry)


def corner_residual(
    variant: str, x: np.ndarray, known: np.ndarray, solved: np.ndarray, params: LatticeParams
) -> np.ndarray:
    """Left-minus-right of the printed corner constraint, per particle."""
    x = np.asarray(x, dtype=float)
    known = np.asarray(known, dtype=float)
    solved = np.asarray(solved, dtype=float)
    residual, _, _, _ = _corner_system(variant, x, known, params)
    return residual(solved)


def build_plaquette(x00: np.ndarray, x10: np.ndarray, params: LatticeParams) -> tuple[Plaquette, float]:
    """Complete a plaquette from its base edge and measure route consistency.

    x01 comes from variant (a) at x00; the double shift is solved twice,
    through variant (c) at x10 and variant (d) at x01, and the max-norm gap
    between the two routes is the consistency defect. Route 1 is stored.
    """
    x00 = np.asarray(x00, dtype=float)
    x10 = np.asarray(x10, dtype=float)
    x01 = corner_solve("a", x00, x10, params)
    x11_route1 = corner_solve("c", x10, x00, params)
    x11_route2 = corner_solve("d", x01, x00, params)
    defect = float(np.max(np.abs(x11_route1 - x11_route2)))
    return Plaquette(x00, x10, x01, x11_route1), defect


def _check_log_args(x: np.ndarray, tx: np.ndarray) -> None:
    n = len(x)
    if np.min(np.abs(x[:, None] - tx[None, :])) < LOG_TOL:
        raise LogSingularity("vanishing cross-gap between a site and its shift")
    if n > 1:
        if min_gap(x) < LOG_TOL or min_gap(tx) < LOG_TOL:
            raise LogSingularity("vanishing within-site gap")
        # a sign flip of any ordered pair across the step means two particles crossed
        iu = np.triu_indices(n, 1)
        if np.any(np.sign((x[:, None] - x[None, :])[iu]) != np.sign((tx[:, None] - tx[None, :])[iu])):
            raise LogSingularity("particle ordering changed across the step")


def discrete_lagrangian(x: np.ndarray, tx: np.ndarray, p: float) -> float:
    """Two-point lattice Lagrangian:
    sum log|x_m - tx_l| - (1/2) sum' [log|x_m - x_l| + log|tx_m - tx_l|]
    - p sum (x_m - tx_m)."""
    x = np.asarray(x, dtype=float)
    tx = np.asarray(tx, dtype=float)
    _check_log_args(x, tx)
    n = len(x)
    total = float(np.sum(np.log(np.abs(x[:, None] - tx[None, :]))))
    if n > 1:
        iu = np.triu_indices(n, 1)
        total -= float(
            np.sum(np.log(np.abs((x[:, None] - x[None, :])[iu])))
            + np.sum(np.log(np.abs((tx[:, None] - tx[None, :])[iu])))
        )
    return total - p * float(np.sum(x - tx))


MOMENTUM_ROUTES = ("outgoing-1", "outgoing-2", "incoming-1", "incoming-2")


def discrete_momentum(route: str, x: np.ndarray, neighbor: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Per-particle momentum by one of the four routes.

    The outgoing routes differentiate the Lagrangian of the edge leaving the
    site in lattice direction 1 or 2 (neighbor = T1 x or T2 x); the incoming
    routes use the edge arriving at the site (neighbor = T1^-1 x or T2^-1 x).
    On corner-consistent data the routes agree pairwise exactly as the corner
    constraints equate them.
    """
    if route not in MOMENTUM_ROUTES:
        raise ValueError(f"route must be one of {MOMENTUM_ROUTES}")
    x = np.asarray(x, dtype=float)
    neighbor = np.asarray(neighbor, dtype=float)
    check_collision_free(x)
    cross = _cross(x, neighbor).sum(axis=1)
    pair = _pair_sums(x)
    if route == "outgoing-1":
        return cross - pair - params.p1
    if route == "outgoing-2":
        return cross - pair - params.p2
    if route == "incoming-1":
        return -cross + pair - params.p1
    return -cross + pair - params.p2


def _plaquette_lagrangians(pl: Plaquette, params: LatticeParams, sign: float) -> float:
    return (
        sign * discrete_lagrangian(pl.x00, pl.x01, params.p2)
        - sign * discrete_lagrangian(pl.x00, pl.x10, params.p1)
        - sign * discrete_lagrangian(pl.x10, pl.x11, params.p2)
        + sign * discrete_lagrangian(pl.x01, pl.x11, params.p1)
    )


def discrete_closure_values(pl: Plaquette, params: LatticeParams) -> tuple[float, float]:
    """Plaquette closure sum under the printed Lagrangian and its negation."""
    printed = _plaquette_lagrangians(pl, params, +1.0)
    return printed, -printed


def discrete_closure_residual(pl: Plaquette, params: LatticeParams) -> float:
    """Smaller-magnitude closure residual of the two sign conventions."""
    printed, negated = discrete_closure_values(pl, params)
    return min(abs(printed), abs(negated))


def center_of_mass_term(pl: Plaquette) -> float:
    """sum (x00 + x11 - x10 - x01); separates the closure sum from the
    log-det identity and vanishes on consistent plaquettes."""
    return float(np.sum(pl.x00 + pl.x11 - pl.x10 - pl.x01))


def _edge_logdet(a: np.ndarray, b: np.ndarray) -> float:
    m = -_cross(b, a)  # M_ij = -1/(b_i - a_j) for the edge a -> b
    sign, logdet = np.linalg.slogdet(m)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularMatrix("edge matrix determinant underflow")
    return float(logdet)


def logdet_identity_residual(pl: Plaquette) -> float:
    """|ln|det M| combination around the plaquette|; the temporal Lax
    compatibility makes it vanish on consistent plaquettes."""
    return abs(
        _edge_logdet(pl.x01, pl.x11)
        + _edge_logdet(pl.x00, pl.x01)
        - _edge_logdet(pl.x10, pl.x11)
        - _edge_logdet(pl.x00, pl.x10)
    )


def edge_logdet_values(x: np.ndarray, tx: np.ndarray, p: float) -> tuple[float, float]:
    """Per-edge residual of the Lagrangian/log-det relation, both conventions.

    Returns (printed, negated) residuals of
    L = +/- (ln|det M| + p sum(x - tx)). The Cauchy-determinant expansion
    validates the negated convention exactly.
    """
    lag = discrete_lagrangian(x, tx, p)
    rhs = _edge_logdet(np.asarray(x, dtype=float), np.asarray(tx, dtype=float)) + p * float(
        np.sum(np.asarray(x) - np.asarray(tx))
    )
    return lag - rhs, lag + rhs


def build_discrete_lax(x: np.ndarray, tx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Lax pair on the edge x -> tx.

    L = diag(p) - [1/(x_i - x_j)] with p_i = sum_j 1/(x_i - tx_j)
    - sum_{j != i} 1/(x_i - x_j); M = -[1/(tx_i - x_j)] in full.
    """
    x = np.asarray(x, dtype=float)
    tx = np.asarray(tx, dtype=float)
    check_collision_free(x)
    check_collision_free(tx)
    if np.min(np.abs(x[:, None] - tx[None, :])) < LOG_TOL:
        raise CollisionSingularity("site and shifted site share a coordinate")
    p = _cross(x, tx).sum(axis=1) - _pair_sums(x)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    L = -1.0 / d
    np.fill_diagonal(L, p)
    M = -_cross(tx, x)
    return L, M


def discrete_lax_residual(x_prev: np.ndarray, x_cur: np.ndarray, x_next: np.ndarray) -> float:
    """Max-norm of (T L) M - M L across the edge pair of an orbit triple.

    L lives on the incoming edge (x_prev, x_cur), its shift on the outgoing
    edge (x_cur, x_next), and M connects x_prev to x_cur; the combination
    vanishes on solutions of the discrete equation of motion.
    """
    L, M = build_discrete_lax(np.asarray(x_prev, float), np.asarray(x_cur, float))
    TL, _ = build_discrete_lax(np.asarray(x_cur, float), np.asarray(x_next, float))
    return float(np.max(np.abs(TL @ M - M @ L)))


def discrete_invariants(x: np.ndarray, tx: np.ndarray, kmax: int) -> np.ndarray:
    """Traces of powers 1..kmax of the discrete L; conserved along orbits."""
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    L, _ = build_discrete_lax(x, tx)
    out = np.empty(kmax)
    power = np.eye(len(np.atleast_1d(x)))
    for l in range(1, kmax + 1):
        power = power @ L
        out[l - 1] = np.trace(power)
    return out


def discrete_hamiltonian_diag(
    x: np.ndarray,
    tx: np.ndarray,
    params: LatticeParams,
    direction: int = 1,
    x_prev: np.ndarray | None = None,
) -> dict:
    """Discrete Legendre/Hamilton diagnostics on the edge x -> tx.

    Builds the momentum-like variables P_ml = 1/(x_m - tx_l) and
    rho_ml = -1/(tx_m - tx_l), evaluates the edge Hamiltonian, and reports
    the residuals of the three discrete Hamilton equations. The two
    definitional ones vanish identically; the position equation needs the
    incoming edge (x_prev) and reproduces the three-point equation of motion,
    with the incoming-edge momentum paired as 1/(x_m - x_prev_l) (pinned by
    numerical agreement with the Euler-Lagrange residual).
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    x = np.asarray(x, dtype=float)
    tx = np.asarray(tx, dtype=float)
    _check_log_args(x, tx)
    p_lattice = params.p1 if direction == 1 else params.p2
    n = len(x)
    P = _cross(x, tx)
    dtx = tx[:, None] - tx[None, :]
    np.fill_diagonal(dtx, np.inf)
    rho = -1.0 / dtx

    ham = float(np.sum(np.log(np.abs(P))))
    if n > 1:
        iu = np.triu_indices(n, 1)
        ham -= float(np.sum(np.log(np.abs(rho[iu]))) + np.sum(np.log(np.abs(rho.T[iu])))) / 2.0
        dx = x[:, None] - x[None, :]
        ham += float(np.sum(np.log(np.abs(dx[iu]))))
    ham += p_lattice * float(np.sum(1.0 / np.diag(P)))

    hep = float(np.max(np.abs(1.0 / P - (x[:, None] - tx[None, :]))))
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        herho = float(np.max(np.abs(-0.5 / rho[off] - 0.5 * (tx[:, None] - tx[None, :])[off])))
    else:
        herho = 0.0

    result = {
        "lattice_parameter": p_lattice,
        "hamiltonian": ham,
        "momentum_residual": hep,
        "pair_residual": herho,
        "position_residual": None,
    }
    if x_prev is not None:
        x_prev = np.asarray(x_prev, dtype=float)
        incoming = _cross(x, x_prev)
        dHdx = _pair_sums(x)
        # the unshifted rho lives on the current site, not the edge
        dx_site = x[:, None] - x[None, :]
        np.fill_diagonal(dx_site, np.inf)
        rho_site = -1.0 / dx_site
        rhs = (P + incoming).sum(axis=1) + 0.5 * (rho_site - rho_site.T).sum(axis=1)
        result["position_residual"] = rhs - dHdx
    return result


def build_lattice_sheet(
    x00: np.ndarray, x10: np.ndarray, params: LatticeParams, n1: int, n2: int
) -> LatticeSheet:
    """Grow an (n1+1) x (n2+1) sheet from a base edge.

    Row 0 extends by the equation of motion in direction 1; each next row
    starts with a variant-(a) solve and continues with variant-(c) solves.
    """
    if n1 < 1 or n2 < 0:
        raise ValueError("need n1 >= 1 and n2 >= 0")
    sites = {(0, 0): np.asarray(x00, dtype=float), (1, 0): np.asarray(x10, dtype=float)}
    for i in range(1, n1):
        sites[(i + 1, 0)] = discrete_step(sites[(i - 1, 0)], sites[(i, 0)], params)
    for j in range(n2):
        sites[(0, j + 1)] = corner_solve("a", sites[(0, j)], sites[(1, j)], params)
        for i in range(1, n1 + 1):
            sites[(i, j + 1)] = corner_solve("c", sites[(i, j)], sites[(i - 1, j)], params)
    return LatticeSheet(sites, params)


def sheet_corner_residuals(sheet: LatticeSheet) -> float:
    """Max-norm over all four corner constraints at every interior site."""
    sites = sheet.sites
    params = sheet.params
    n1 = max(i for i, _ in sites)
    n2 = max(j for _, j in sites)
    worst = 0.0
    for (i, j), x in sites.items():
        if 0 < i < n1 and 0 < j < n2:
            checks = (
                ("a", sites[(i + 1, j)], sites[(i, j + 1)]),
                ("b", sites[(i - 1, j)], sites[(i, j - 1)]),
                ("c", sites[(i - 1, j)], sites[(i, j + 1)]),
                ("d", sites[(i, j - 1)], sites[(i + 1, j)]),
            )
            for variant, known, solved in checks:
                worst = max(worst, float(np.max(np.abs(corner_residual(variant, x, known, solved, params)))))
    return worst
