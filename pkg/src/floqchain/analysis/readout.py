"""Single-shot readout: confusion model, shot sampling, calibration and post-selection.

Counts are dictionaries mapping bitstrings (site 1 first) to shot numbers.
Random draws use numpy's PCG64 generator seeded explicitly, so identical seeds
give identical counts on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..model import PAPER_F_EXCITED, PAPER_F_GROUND, StateVector


@dataclass(frozen=True, eq=False)
class ConfusionModel:
    """Per-site readout fidelities F_g (read 0 given 0) and F_e (read 1 given 1)."""

    f_ground: np.ndarray
    f_excited: np.ndarray

    def __post_init__(self):
        fg = np.array(self.f_ground, dtype=float)
        fe = np.array(self.f_excited, dtype=float)
        if fg.shape != fe.shape or fg.ndim != 1:
            raise ValueError("F_g and F_e must be 1-d arrays of equal length")
        if np.any((fg <= 0.5) | (fg > 1)) or np.any((fe <= 0.5) | (fe > 1)):
            raise ValueError("readout fidelities must lie in (0.5, 1]")
        for arr in (fg, fe):
            arr.flags.writeable = False
        object.__setattr__(self, "f_ground", fg)
        object.__setattr__(self, "f_excited", fe)

    @property
    def n_sites(self) -> int:
        return self.f_ground.size

    @classmethod
    def perfect(cls, n_sites: int) -> "ConfusionModel":
        return cls(np.ones(n_sites), np.ones(n_sites))

    @classmethod
    def paper(cls) -> "ConfusionModel":
        return cls(PAPER_F_GROUND, PAPER_F_EXCITED)

    def matrix(self, site: int) -> np.ndarray:
        """T_j mapping true (P0, P1) to measured (P0, P1)."""
        fg, fe = self.f_ground[site], self.f_excited[site]
        return np.array([[fg, 1 - fe], [1 - fg, fe]])


def qubit_outcome_probabilities(state: StateVector):
    """Probabilities of each basis state and its readout bits (level 2 reads as 1)."""
    probs = state.probabilities()
    bits = (state.basis.occupations >= 1).astype(np.int8)
    return probs, bits


def _counts_from_bits(bits: np.ndarray) -> dict:
    keys, freq = np.unique(bits, axis=0, return_counts=True)
    return {"".join(map(str, row)): int(c) for row, c in zip(keys, freq)}


def sample_shots(state: StateVector, confusion: ConfusionModel, n_shots: int, seed: int) -> dict:
    """Draw ``n_shots`` projective outcomes, then flip each bit per the confusion model.

    Weight on level 2 is read as "1" before the confusion step (dispersive
    readout cannot tell 1 and 2 apart); post_select can then remove it.
    """
    if confusion.n_sites != state.basis.n_sites:
        raise ValueError("confusion model and state disagree on the number of sites")
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    probs, bits = qubit_outcome_probabilities(state)
    probs = probs / probs.sum()
    idx = rng.choice(probs.size, size=n_shots, p=probs)
    shots = bits[idx]
    u = rng.random(shots.shape)
    flip = np.where(shots == 1, u < 1 - confusion.f_excited, u < 1 - confusion.f_ground)
    return _counts_from_bits(np.where(flip, 1 - shots, shots).astype(np.int8))


def counts_to_array(counts: dict) -> tuple[np.ndarray, np.ndarray]:
    """(bits of shape (n_outcomes, n_sites), shot numbers) from a counts dictionary."""
    if not counts:
        return np.zeros((0, 0), dtype=np.int8), np.zeros(0, dtype=np.int64)
    keys = sorted(counts)
    bits = np.array([[int(c) for c in k] for k in keys], dtype=np.int8)
    return bits, np.array([counts[k] for k in keys], dtype=np.int64)


class CalibratedMarginals(NamedTuple):
    probabilities: np.ndarray  # corrected P(site reads 1), clipped to [0, 1]
    raw: np.ndarray  # measured one-fractions
    clipped: np.ndarray  # bool per site
    n_shots: int
    corrected: np.ndarray  # T_j^-1 applied without clipping; unbiased, may leave [0, 1]

    def sigma(self, confusion: ConfusionModel) -> np.ndarray:
        """Binomial standard error of the corrected marginals."""
        scale = confusion.f_ground + confusion.f_excited - 1.0
        return np.sqrt(self.raw * (1 - self.raw) / self.n_shots) / scale


def calibrate_counts(counts: dict, confusion: ConfusionModel) -> CalibratedMarginals:
    """Per-site marginals corrected by the inverse calibration matrix T_j^-1."""
    bits, freq = counts_to_array(counts)
    n = int(freq.sum())
    if n == 0:
        raise ValueError("no shots to calibrate")
    if bits.shape[1] != confusion.n_sites:
        raise ValueError("counts and confusion model disagree on the number of sites")
    raw = (freq @ bits) / n
    corrected = np.empty_like(raw)
    for j in range(raw.size):
        t = confusion.matrix(j)
        if abs(np.linalg.det(t)) < 1e-12:
            raise ValueError(f"calibration matrix of site {j + 1} is singular")
        corrected[j] = np.linalg.solve(t, [1 - raw[j], raw[j]])[1]
    clipped = (corrected < 0) | (corrected > 1)
    return CalibratedMarginals(np.clip(corrected, 0.0, 1.0), raw, clipped, n, corrected)


def post_select(counts: dict, n_excitations: int) -> tuple[dict, float]:
    """Keep bitstrings with ``n_excitations`` ones; returns (kept counts, kept fraction)."""
    total = sum(counts.values())
    kept = {k: v for k, v in counts.items() if k.count("1") == n_excitations}
    n_kept = sum(kept.values())
    if n_kept == 0:
        raise ValueError(f"post-selection on {n_excitations} excitations retains no shots")
    return kept, n_kept / total
