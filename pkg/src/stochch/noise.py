"""Seedable Brownian paths with exact coarse/fine coupling.

Each realization owns an independent counter-based stream (Philox4x64-10)
keyed by ``(master_seed, realization)``; increment ``k`` is the ``k``-th normal
draw of that stream, so paths are reproducible regardless of which worker
generates them.
"""
from dataclasses import dataclass

import numpy as np

GENERATOR_ID = "numpy.random.Philox(key=(master_seed, realization))"
NORMAL_METHOD = "numpy Generator.standard_normal (ziggurat)"


def n_steps(T, tau, rtol=1e-9):
    """Number of steps of size ``tau`` in ``[0, T]``; raises if not integral."""
    if T <= 0 or tau <= 0:
        raise ValueError(f"T and tau must be positive, got T={T}, tau={tau}")
    k = round(T / tau)
    if k < 1 or abs(k * tau - T) > rtol * T:
        raise ValueError(f"tau={tau} does not divide T={T}")
    return int(k)


def step_ratio(tau, tau_ref, rtol=1e-9):
    """Integer ``tau / tau_ref``; raises if ``tau`` is not a multiple."""
    k = round(tau / tau_ref)
    if k < 1 or abs(k * tau_ref - tau) > rtol * tau:
        raise ValueError(f"tau={tau} is not an integer multiple of tau_ref={tau_ref}")
    return int(k)


def realization_rng(master_seed, realization=0):
    """Independent generator for one Monte Carlo realization."""
    key = np.array([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(realization)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Wiener increments at the reference resolution."""

    increments: np.ndarray
    tau_ref: float
    T: float
    seed: int
    realization: int = 0

    def __len__(self):
        return len(self.increments)

    @property
    def W_T(self):
        return float(np.sum(self.increments))

    def values(self):
        """``W`` at every reference time point, starting from ``W_0 = 0``."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def coarsen(self, tau):
        return coarsen(self, tau)


def generate_path(seed, T, tau_ref, realization=0):
    """Draw ``round(T / tau_ref)`` increments ``N(0, tau_ref)``."""
    n = n_steps(T, tau_ref)
    z = realization_rng(seed, realization).standard_normal(n)
    inc = np.sqrt(tau_ref) * z
    inc.setflags(write=False)
    return BrownianPath(inc, float(tau_ref), float(T), int(seed), int(realization))


def coarsen(path, tau):
    """Increments over steps of size ``tau``, summed left to right from the fine path."""
    k = step_ratio(tau, path.tau_ref)
    n_steps(path.T, tau)
    fine = np.asarray(path.increments)
    if len(fine) % k:
        raise ValueError(f"tau={tau} does not divide T={path.T}")
    if k == 1:
        return fine.copy()
    blocks = fine.reshape(-1, k)
    # fixed left-to-right accumulation order
    out = blocks[:, 0].copy()
    for j in range(1, k):
        out += blocks[:, j]
    return out
