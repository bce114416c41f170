"""Seeded random data for tests, scenarios and the verification suite.

Positions are sorted uniforms with minimum-gap rejection so every consumer
sees collision-free, reproducible configurations; momenta are uniform in
[-1, 1]. Discrete seeds pair a configuration with a displaced copy whose
step size suits the corner solves.
"""

from __future__ import annotations

import numpy as np

from .hierarchy import PhaseState


def sorted_positions(rng: np.random.Generator, n: int, min_gap: float = 0.5, span: float = 3.0) -> np.ndarray:
    """Sorted positions in [-span, span] with all gaps at least min_gap."""
    if n * min_gap > 2 * span:
        raise ValueError("span too small for the requested minimum gap")
    for _ in range(10_000):
        x = np.sort(rng.uniform(-span, span, n))
        if n == 1 or np.min(np.diff(x)) >= min_gap:
            return x
    raise RuntimeError("rejection sampling failed; loosen min_gap or widen span")


def random_phase_state(rng: np.random.Generator, n: int, min_gap: float = 0.5, span: float = 3.0) -> PhaseState:
    x = sorted_positions(rng, n, min_gap, span)
    p = rng.uniform(-1.0, 1.0, n)
    return PhaseState(x, p)


def plaquette_seed(
    rng: np.random.Generator, n: int, p1: float, p2: float, min_gap: float = 1.2, span: float = 3.0
) -> tuple[np.ndarray, np.ndarray]:
    """Base edge (x00, x10) with displacement ~ 1/(p1+p2), jittered 10%.

    Keeping the edge displacement well below 1/|p1-p2| avoids the degenerate
    plaquettes where a corner shift runs off to infinity.
    """
    x00 = sorted_positions(rng, n, min_gap, span)
    x10 = x00 + rng.uniform(0.9, 1.1, n) / (abs(p1) + abs(p2))
    return x00, x10


def orbit_seed(
    rng: np.random.Generator, n: int, min_gap: float = 3.5, step_scale: float = 0.3, span: float = 6.0
) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated (x_prev, x_cur) pair for long discrete orbits."""
    x_prev = sorted_positions(rng, n, min_gap, span)
    x_cur = x_prev + step_scale * rng.uniform(0.9, 1.1, n)
    return x_prev, x_cur
