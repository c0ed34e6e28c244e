"""Offspring and step laws on the integer lattice.

Laws are finitely supported, validated at construction, and immutable
afterwards, so they can be shared freely across threads.  Sampling goes
through a precomputed inverse CDF and requires an exclusive generator per
caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.special import zeta

from .errors import (
    BadLawSpec,
    CutoffTooSmall,
    DegenerateVariance,
    NonzeroDrift,
    NotCritical,
    NotNormalized,
    OutOfRange,
)

# Raw input mass may be off by decimal rounding; anything worse is an error,
# and the mean is never adjusted (a wrong mean is a modelling error, not noise).
MASS_TOL = 1e-6
MEAN_TOL = 1e-9


def _validated_table(probs: Mapping[int, float], what: str):
    if not probs:
        raise BadLawSpec(f"{what}: empty probability table")
    support = np.array(sorted(probs), dtype=np.int64)
    weights = np.array([float(probs[int(k)]) for k in support], dtype=np.float64)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise BadLawSpec(f"{what}: probabilities must be finite and nonnegative")
    total = float(weights.sum())
    if abs(total - 1.0) > MASS_TOL:
        raise NotNormalized(f"{what}: mass {total!r} differs from 1 by more than {MASS_TOL}")
    return support, weights / total


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Validated critical offspring distribution {p_k} with mean 1."""

    support: np.ndarray        # offspring counts k, sorted ascending
    probs: np.ndarray          # p_k aligned with support, mass exactly renormalized
    variance: float            # sigma^2 = sum k^2 p_k - mean^2
    third_moment: float        # sum k^3 p_k
    truncation_deficit: float = 0.0   # mass dropped before renormalization

    @cached_property
    def p0(self) -> float:
        idx = np.searchsorted(self.support, 0)
        if idx < len(self.support) and self.support[idx] == 0:
            return float(self.probs[idx])
        return 0.0

    @cached_property
    def pgf_coeffs(self) -> np.ndarray:
        """Dense coefficients c[i] = p_i of the generating polynomial."""
        coeffs = np.zeros(int(self.support[-1]) + 1)
        coeffs[self.support] = self.probs
        return coeffs

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def as_mapping(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.support, self.probs)}


@dataclass(frozen=True, eq=False)
class StepLaw:
    """Validated drift-free step distribution {a_x} on the integers."""

    support: np.ndarray        # displacements x, sorted ascending
    probs: np.ndarray          # a_x aligned with support
    variance: float            # eta^2
    verified_moment_order: float   # inf for finite support; intended tail index otherwise
    truncation_deficit: float = 0.0

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    @cached_property
    def reflected(self) -> "StepLaw":
        """Step law of the sign-flipped walk, P(y) = a_{-y}."""
        return StepLaw(
            support=-self.support[::-1],
            probs=self.probs[::-1].copy(),
            variance=self.variance,
            verified_moment_order=self.verified_moment_order,
            truncation_deficit=self.truncation_deficit,
        )

    def as_mapping(self) -> dict[int, float]:
        return {int(x): float(a) for x, a in zip(self.support, self.probs)}


@dataclass(frozen=True, eq=False)
class ModelParams:
    """One branching random walk model: offspring law, step law, tail constants."""

    offspring: OffspringLaw
    step: StepLaw

    @property
    def sigma2(self) -> float:
        return self.offspring.variance

    @property
    def eta2(self) -> float:
        return self.step.variance

    @property
    def c_const(self) -> float:
        """Tail constant 6*eta^2/sigma^2."""
        return 6.0 * self.eta2 / self.sigma2

    @property
    def beta(self) -> float:
        return math.sqrt(self.sigma2) / math.sqrt(6.0 * self.eta2)


def make_offspring_law(probs: Mapping[int, float], truncation_deficit: float = 0.0) -> OffspringLaw:
    """Validate and freeze an offspring table; mass is renormalized, the mean is not."""
    support, weights = _validated_table(probs, "offspring law")
    if support[0] < 0:
        raise BadLawSpec("offspring law: negative offspring counts")
    kf = support.astype(np.float64)
    mean = float(kf @ weights)
    if abs(mean - 1.0) > MEAN_TOL:
        raise NotCritical(f"offspring mean {mean!r} is not 1 within {MEAN_TOL}")
    variance = float((kf * kf) @ weights) - mean * mean
    if variance <= 0.0:
        raise DegenerateVariance("offspring variance is zero")
    third = float((kf ** 3) @ weights)
    return OffspringLaw(support, weights, variance, third, truncation_deficit)


def make_step_law(
    probs: Mapping[int, float],
    verified_moment_order: float = math.inf,
    truncation_deficit: float = 0.0,
) -> StepLaw:
    """Validate and freeze a step table; mass is renormalized, the drift is not."""
    support, weights = _validated_table(probs, "step law")
    xf = support.astype(np.float64)
    mean = float(xf @ weights)
    if abs(mean) > MEAN_TOL:
        raise NonzeroDrift(f"step mean {mean!r} is not 0 within {MEAN_TOL}")
    variance = float((xf * xf) @ weights) - mean * mean
    if variance <= 0.0:
        raise DegenerateVariance("step variance is zero")
    return StepLaw(support, weights, variance, verified_moment_order, truncation_deficit)


def heavy_tail_step_law(epsilon: float, cutoff: int) -> StepLaw:
    """Symmetric step law a_x ∝ |x|^(eps-5) on 1 <= |x| <= cutoff.

    The untruncated version has infinite 4th moment for eps > 0; truncation
    makes all moments finite, so verified_moment_order records the intended
    tail index 4 - eps instead.  The dropped tail mass is reported, not hidden.
    """
    if not 0.0 < epsilon < 2.0:
        raise OutOfRange(f"epsilon must lie in (0, 2), got {epsilon}")
    cutoff = int(cutoff)
    if cutoff < 1000:
        raise CutoffTooSmall(f"cutoff {cutoff} < 1000 would leave >1e-6 truncation error")
    power = 5.0 - epsilon
    xs = np.arange(1, cutoff + 1, dtype=np.int64)
    half = xs.astype(np.float64) ** (-power)
    total_one_side = float(half.sum())
    # Tail mass beyond the cutoff of the untruncated (zeta-normalized) law.
    deficit = float(1.0 - total_one_side / zeta(power))
    weights = np.concatenate([half[::-1], half]) / (2.0 * total_one_side)
    support = np.concatenate([-xs[::-1], xs])
    variance = float((support.astype(np.float64) ** 2) @ weights)
    return StepLaw(
        support=support,
        probs=weights,
        variance=variance,
        verified_moment_order=4.0 - epsilon,
        truncation_deficit=deficit,
    )


# -- the nonlinear maps Q, h, H ------------------------------------------------


def _check_unit_interval(s) -> np.ndarray:
    arr = np.asarray(s, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise OutOfRange("argument must lie in [0, 1]")
    return arr


def q_eval(law: OffspringLaw, s):
    """Q(s) = 1 - sum_i p_i (1-s)^i, evaluated by Horner in (1-s).

    Accepts scalars or arrays.  Output is clamped into [0, s]: the bound holds
    exactly in real arithmetic and enforcing it keeps h = s - Q nonnegative.
    """
    arr = _check_unit_interval(s)
    t = 1.0 - arr
    # Horner on the dense coefficient vector; degree is small (<= max offspring).
    coeffs = law.pgf_coeffs
    acc = np.full_like(t, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc *= t
        acc += c
    q = 1.0 - acc
    q = np.minimum(np.maximum(q, 0.0), arr)
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(q)
    return q


def h_eval(law: OffspringLaw, s):
    """h(s) = s - Q(s); nonnegative, of order variance*s^2/2 near 0."""
    arr = _check_unit_interval(s)
    h = arr - q_eval(law, arr)
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(h)
    return h


def H_eval(law: OffspringLaw, s):
    """H(s) = h(s)/s with the limit value 0 at s = 0."""
    arr = _check_unit_interval(s)
    h = arr - q_eval(law, arr)
    out = np.zeros_like(h)
    np.divide(h, arr, out=out, where=arr > 0.0)
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out)
    return out


# -- sampling -------------------------------------------------------------------


def _sample_indices(cdf: np.ndarray, rng: np.random.Generator, size) -> np.ndarray:
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size=None):
    """Draw offspring counts; scalar when size is None."""
    if size is None:
        return int(law.support[_sample_indices(law.cdf, rng, 1)[0]])
    return law.support[_sample_indices(law.cdf, rng, size)]


def sample_step(law: StepLaw, rng: np.random.Generator, size=None):
    """Draw displacements; scalar when size is None."""
    if size is None:
        return int(law.support[_sample_indices(law.cdf, rng, 1)[0]])
    return law.support[_sample_indices(law.cdf, rng, size)]


# -- mini-language -----------------------------------------------------------------

POISSON_GEOM_CUTOFF = 60

OFFSPRING_SPEC_HELP = (
    "offspring law spec: 'don' (0 or 2 children, probability 1/2 each), "
    "'geom' (p_k = 2^-(k+1), truncated at k=60, renormalized), "
    "'poisson' (Poisson(1), truncated at k=60, renormalized), "
    "or 'table:k1=p1,k2=p2,...'"
)

STEP_SPEC_HELP = (
    "step law spec: 'rademacher' (+-1 with probability 1/2), "
    "'lazy:q=Q' (stay put with probability 1-Q, else +-1), "
    "'heavy:eps=E,cutoff=N' (symmetric |x|^(E-5) tail truncated at N), "
    "or 'table:x1=p1,x2=p2,...'"
)


def _parse_table(body: str) -> dict[int, float]:
    table: dict[int, float] = {}
    for item in body.split(","):
        if "=" not in item:
            raise BadLawSpec(f"bad table entry {item!r}")
        key, val = item.split("=", 1)
        try:
            k = int(key.strip())
            p = float(val.strip())
        except ValueError as exc:
            raise BadLawSpec(f"bad table entry {item!r}") from exc
        if k in table:
            raise BadLawSpec(f"duplicate table key {k}")
        table[k] = p
    return table


def _parse_kwargs(body: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in body.split(","):
        if "=" not in item:
            raise BadLawSpec(f"bad parameter {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def parse_offspring_spec(spec: str) -> OffspringLaw:
    """Resolve an offspring mini-language string to a validated law."""
    spec = spec.strip()
    try:
        if spec == "don":
            return make_offspring_law({0: 0.5, 2: 0.5})
        if spec == "geom":
            ks = np.arange(POISSON_GEOM_CUTOFF + 1)
            pk = 0.5 ** (ks + 1.0)
            return make_offspring_law(dict(zip(ks.tolist(), pk.tolist())),
                                      truncation_deficit=float(1.0 - pk.sum()))
        if spec == "poisson":
            ks = np.arange(POISSON_GEOM_CUTOFF + 1)
            pk = np.exp(-1.0) / np.array([math.factorial(int(k)) for k in ks], dtype=np.float64)
            return make_offspring_law(dict(zip(ks.tolist(), pk.tolist())),
                                      truncation_deficit=float(1.0 - pk.sum()))
        if spec.startswith("table:"):
            return make_offspring_law(_parse_table(spec[len("table:"):]))
    except (NotNormalized, NotCritical, DegenerateVariance) as exc:
        raise BadLawSpec(f"offspring spec {spec!r}: {exc}") from exc
    raise BadLawSpec(f"unknown offspring spec {spec!r}; expected {OFFSPRING_SPEC_HELP}")


def parse_step_spec(spec: str) -> StepLaw:
    """Resolve a step mini-language string to a validated law."""
    spec = spec.strip()
    try:
        if spec == "rademacher":
            return make_step_law({-1: 0.5, 1: 0.5})
        if spec.startswith("lazy:"):
            kwargs = _parse_kwargs(spec[len("lazy:"):])
            q = float(kwargs.pop("q"))
            if kwargs:
                raise BadLawSpec(f"unexpected lazy parameters {sorted(kwargs)}")
            if not 0.0 < q <= 1.0:
                raise BadLawSpec("lazy walk needs 0 < q <= 1")
            return make_step_law({-1: q / 2.0, 0: 1.0 - q, 1: q / 2.0})
        if spec.startswith("heavy:"):
            kwargs = _parse_kwargs(spec[len("heavy:"):])
            eps = float(kwargs.pop("eps"))
            cutoff = int(kwargs.pop("cutoff"))
            if kwargs:
                raise BadLawSpec(f"unexpected heavy parameters {sorted(kwargs)}")
            return heavy_tail_step_law(eps, cutoff)
        if spec.startswith("table:"):
            return make_step_law(_parse_table(spec[len("table:"):]))
    except (KeyError, ValueError) as exc:
        raise BadLawSpec(f"step spec {spec!r}: {exc}") from exc
    except (NotNormalized, NonzeroDrift, DegenerateVariance, CutoffTooSmall, OutOfRange) as exc:
        raise BadLawSpec(f"step spec {spec!r}: {exc}") from exc
    raise BadLawSpec(f"unknown step spec {spec!r}; expected {STEP_SPEC_HELP}")
