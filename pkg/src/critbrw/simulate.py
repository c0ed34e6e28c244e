"""Monte Carlo simulation of the branching random walk.

Rules per generation: every particle first jumps, then reproduces at the
jumped position, and only post-reproduction positions count toward maxima
(generation 0, a single particle at the origin, counts as well).

The frontier is kept as a position -> count table rather than a particle
list: long-lived critical trees have O(n) particles on O(sqrt(n)) distinct
sites, and per-site multinomial stepping plus batched offspring draws
reproduce the exact joint law of per-particle (step, offspring) pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AttemptBudgetExceeded, ParticleOverflow
from .gw import Censored
from .laws import ModelParams
from .streams import StreamKey

_OVERFLOW_GUARD = 2**62


@dataclass(eq=False)
class RunRecord:
    """Summary of one simulated tree (or superposition of trees)."""

    max_overall: int                    # M, rightmost position ever occupied; >= 0
    min_overall: int                    # leftmost analogue; <= 0
    extinction_gen: int | Censored      # first n with N_n = 0, or Censored(gen_cap)
    gen_maxima: list | None = None      # M_n per generation, None once extinct
    gen_counts: list | None = None      # N_n per generation
    seed_info: tuple | None = None      # (master_seed, stream_id) when known
    attempts: int = 1                   # rejection attempts (conditioned runs)


def _evolve_generation(pos, cnt, step_sup, step_probs, off_probs, kvals, rng):
    """One (disperse, reproduce) sweep over a sorted frontier.

    Returns the next sorted frontier and the exact total of offspring draws,
    which must equal the next generation size (bookkeeping identity).
    """
    step_mat = rng.multinomial(cnt, step_probs)         # (sites, step support)
    dest = (pos[:, None] + step_sup[None, :]).ravel()
    dest_cnt = step_mat.ravel()
    occupied = dest_cnt > 0
    dest = dest[occupied]
    dest_cnt = dest_cnt[occupied]
    upos, inverse = np.unique(dest, return_inverse=True)
    ucnt = np.bincount(inverse, weights=dest_cnt, minlength=len(upos)).astype(np.int64)
    off_mat = rng.multinomial(ucnt, off_probs)          # (sites, offspring support)
    children = off_mat @ kvals
    total_children = int(children.sum())
    alive = children > 0
    return upos[alive], children[alive], total_children


def simulate_tree(params: ModelParams, gen_cap: int, record_trajectory: bool = False,
                  rng: np.random.Generator | None = None,
                  seed_info: tuple | None = None) -> RunRecord:
    """Evolve a single tree from one particle at the origin up to gen_cap."""
    if gen_cap < 1:
        raise ValueError("gen_cap must be >= 1")
    if rng is None:
        raise ValueError("an explicit generator is required for reproducibility")
    step_sup = params.step.support.astype(np.int64)
    step_probs = params.step.probs
    off_probs = params.offspring.probs
    kvals = params.offspring.support.astype(np.int64)

    pos = np.zeros(1, dtype=np.int64)
    cnt = np.ones(1, dtype=np.int64)
    max_seen = 0
    min_seen = 0
    gen_maxima = [0] if record_trajectory else None
    gen_counts = [1] if record_trajectory else None
    extinction: int | Censored = Censored(gen_cap)

    for n in range(1, gen_cap + 1):
        if int(cnt.sum()) > _OVERFLOW_GUARD:
            raise ParticleOverflow(f"generation {n - 1} population beyond the guard")
        pos, cnt, total_children = _evolve_generation(
            pos, cnt, step_sup, step_probs, off_probs, kvals, rng)
        if int(cnt.sum()) != total_children:
            raise AssertionError("offspring draws do not match the next generation size")
        if len(pos) == 0:
            extinction = n
            if record_trajectory:
                gen_maxima.append(None)
                gen_counts.append(0)
            break
        m_n = int(pos[-1])
        max_seen = max(max_seen, m_n)
        min_seen = min(min_seen, int(pos[0]))
        if record_trajectory:
            gen_maxima.append(m_n)
            gen_counts.append(total_children)

    return RunRecord(max_seen, min_seen, extinction, gen_maxima, gen_counts, seed_info)


def simulate_superposition(params: ModelParams, n_particles: int, gen_cap: int,
                           stream: StreamKey) -> RunRecord:
    """Maximum over n_particles independent trees sharing one stream family.

    Tree i always uses stream.child(i), so the combined summary is identical
    for any scheduling or chunking of the work.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    max_seen = 0
    min_seen = 0
    last_extinction = 0
    censored = False
    for i in range(n_particles):
        rec = simulate_tree(params, gen_cap, rng=stream.child(i).generator())
        max_seen = max(max_seen, rec.max_overall)
        min_seen = min(min_seen, rec.min_overall)
        if isinstance(rec.extinction_gen, Censored):
            censored = True
        else:
            last_extinction = max(last_extinction, rec.extinction_gen)
    extinction = Censored(gen_cap) if censored else last_extinction
    return RunRecord(max_seen, min_seen, extinction,
                     seed_info=(stream.master_seed, stream.stream_id))


def simulate_conditioned(params: ModelParams, n_target: int, stream: StreamKey,
                         attempt_cap: int = 1_000_000) -> RunRecord:
    """Rejection-sample one tree surviving to generation n_target.

    Expected attempts are about 1/q[n_target].  The returned record carries
    the trajectory (so gen_maxima[n_target] is the conditioned M_n) and the
    attempt count.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    for attempt in range(1, attempt_cap + 1):
        key = stream.child(attempt - 1)
        rec = simulate_tree(params, n_target, record_trajectory=True,
                            rng=key.generator(),
                            seed_info=(key.master_seed, key.stream_id))
        if isinstance(rec.extinction_gen, Censored):
            rec.attempts = attempt
            return rec
    raise AttemptBudgetExceeded(
        f"no tree survived to generation {n_target} in {attempt_cap} attempts")


def tail_hit_counts(params: ModelParams, levels, trees: int, gen_cap: int,
                    stream: StreamKey, start_index: int = 0) -> np.ndarray:
    """Count trees whose maximum reaches each level; deterministic per index.

    Tree i uses stream.child(start_index + i), so partial tallies computed by
    different workers over disjoint index ranges sum to the same totals as a
    serial run.
    """
    levels = np.asarray(levels, dtype=np.int64)
    hits = np.zeros(len(levels), dtype=np.int64)
    for i in range(trees):
        rec = simulate_tree(params, gen_cap,
                            rng=stream.child(start_index + i).generator())
        hits += rec.max_overall >= levels
    return hits
