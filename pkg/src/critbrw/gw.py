"""Exact Galton-Watson survival analytics.

Conventions: q[n] = P{N_n >= 1}, the probability the process is alive at
generation n, i.e. P{extinction time > n}.  Some asymptotic statements are
written with ">= n" instead; on this table that is q[n-1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParticleOverflow
from .laws import OffspringLaw


@dataclass(frozen=True)
class Censored:
    """Sentinel for an observation cut off at generation `at`."""

    at: int


@dataclass(frozen=True, eq=False)
class SurvivalTable:
    """q[n] for n = 0..n_max, computed by generating-function iteration."""

    q: np.ndarray
    law: OffspringLaw


def survival_probabilities(law: OffspringLaw, n_max: int) -> SurvivalTable:
    """Survival table of length n_max + 1.

    Iterates q <- q - h(q), algebraically the same as 1 - f(1 - q) but free of
    the 1 - (1 - q) cancellation once q reaches the 1e-5 range.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    # Scalar Horner loop: the recursion is inherently sequential and a single
    # float pass over n_max=1e5 must stay well under a second.
    coeffs = tuple(float(c) for c in law.pgf_coeffs[::-1])
    out = np.empty(n_max + 1)
    out[0] = 1.0
    cur = 1.0
    for n in range(1, n_max + 1):
        t = 1.0 - cur
        acc = 0.0
        for c in coeffs:
            acc = acc * t + c
        nxt = 1.0 - acc          # Q(cur)
        if nxt > cur:
            nxt = cur
        if nxt <= 0.0:
            raise ArithmeticError("survival probability underflowed to 0")
        out[n] = cur = nxt
    return SurvivalTable(out, law)


def kolmogorov_diagnostic(table: SurvivalTable) -> np.ndarray:
    """Normalized sequence n*q[n]*sigma^2/2, which approaches 1."""
    n = np.arange(len(table.q), dtype=np.float64)
    return n * table.q * table.law.variance / 2.0


def sample_extinction_time(law: OffspringLaw, gen_cap: int, rng: np.random.Generator):
    """First generation with zero particles, or Censored(gen_cap).

    Returns n such that N_n = 0 and N_{n-1} >= 1, i.e. the extinction time
    under the q[n] = P{zeta > n} convention.
    """
    if gen_cap < 1:
        raise ValueError("gen_cap must be >= 1")
    kvals = law.support.astype(np.int64)
    alive = 1
    for n in range(1, gen_cap + 1):
        if alive > 2**62:
            raise ParticleOverflow(f"population {alive} beyond the 64-bit guard")
        counts = rng.multinomial(alive, law.probs)
        alive = int(counts @ kvals)
        if alive == 0:
            return n
    return Censored(gen_cap)
