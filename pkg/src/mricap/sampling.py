"""Deterministic random streams and outage-path sampling.

Replications are grouped in fixed blocks of ``BLOCK_SIZE``. Every
(seed, block, stream name) triple owns an independent generator, so a
replication's draws depend only on the seed, its index and the name of
the resource they belong to. Changing one resource's capacity, adding a
resource or changing the worker count leaves every other draw untouched.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .system import LoadModel, OutageMode, ThermalSpec

BLOCK_SIZE = 8192
LOAD_STREAM = "__load_profile__"


def stream_tag(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


def block_rng(seed: int, block: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block), stream_tag(name)))
    return np.random.Generator(np.random.PCG64(ss))


def n_blocks(replications: int) -> int:
    return -(-replications // BLOCK_SIZE)


def sample_profile_indices(load: LoadModel, seed: int, block: int) -> np.ndarray:
    rng = block_rng(seed, block, LOAD_STREAM)
    u = rng.random(BLOCK_SIZE)
    cdf = np.cumsum(load.weights)
    cdf[-1] = 1.0
    # zero-weight profiles are never chosen
    return np.searchsorted(cdf, u, side="right").clip(0, load.n_profiles - 1)


def thermal_key(name: str, spec: ThermalSpec) -> tuple:
    return (name, spec.for_rate, spec.mttr_hours, spec.outage_mode.value)


def sample_thermal_states(name: str, spec: ThermalSpec, seed: int, block: int,
                          horizon: int) -> np.ndarray:
    """Availability (True = up) for one unit, shape (BLOCK_SIZE, horizon)."""
    n = BLOCK_SIZE
    if spec.for_rate == 0.0:
        return np.ones((n, horizon), dtype=bool)
    if spec.for_rate == 1.0:
        return np.zeros((n, horizon), dtype=bool)
    rng = block_rng(seed, block, name)
    if spec.outage_mode is OutageMode.IID:
        return rng.random((n, horizon)) >= spec.for_rate
    return _markov_paths(rng, spec, n, horizon)


def _markov_paths(rng: np.random.Generator, spec: ThermalSpec, n: int, horizon: int) -> np.ndarray:
    lam, mu = spec.transition_probabilities()
    up0 = rng.random(n) >= spec.for_rate
    # sojourns are geometric; the first one too, by memorylessness
    toggles = np.zeros((n, horizon), dtype=bool)
    state = up0.copy()
    clock = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    while True:
        stay = rng.geometric(np.where(state, lam, mu))
        clock += stay
        alive &= clock < horizon
        if not alive.any():
            break
        rows = np.flatnonzero(alive)
        toggles[rows, clock[rows]] = True
        state = ~state
    flipped = np.logical_xor.accumulate(toggles, axis=1)
    return flipped != up0[:, None]
