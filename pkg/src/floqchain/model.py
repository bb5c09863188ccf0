"""Chain description, truncated Fock space, states and site-local operators.

Frequencies are linear and in MHz everywhere in this module; conversion to
angular units happens only when a Hamiltonian is assembled.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

MAX_DIMENSION = 10**7

#: Table S1 style device data for the 10-qubit chain.
PAPER_NN_COUPLINGS = (10.72, 10.73, 10.99, 11.05, 10.88, 10.48, 10.86, 10.79, 10.78)
PAPER_NNN_COUPLINGS = (0.98, 0.49, 0.96, 0.49, 0.96, 0.49, 0.97, 0.48)
PAPER_ANHARMONICITIES = (-212.0, -264.0, -210.0, -268.0, -212.0, -268.0, -214.0, -264.0, -214.0, -264.0)
PAPER_F_GROUND = (0.972, 0.992, 0.992, 0.997, 0.981, 0.994, 0.993, 0.994, 0.993, 0.993)
PAPER_F_EXCITED = (0.904, 0.926, 0.924, 0.907, 0.903, 0.917, 0.899, 0.917, 0.925, 0.856)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DeviceSpec:
    """Geometry and static parameters of an open chain of transmons.

    Parameters
    ----------
    nn_couplings : sequence of float
        Nearest-neighbour couplings g_{j,j+1}/2pi in MHz, length ``n_sites - 1``.
    nnn_couplings : sequence of float, optional
        Next-nearest-neighbour couplings g_{j,j+2}/2pi in MHz, length
        ``n_sites - 2``. Defaults to zeros.
    anharmonicities : sequence of float, optional
        U_j/2pi in MHz (negative for transmons). Ignored when ``levels == 2``.
    levels : int
        Local truncation, 2 (hard-core) or 3.
    """

    nn_couplings: Sequence[float]
    nnn_couplings: Sequence[float] | None = None
    anharmonicities: Sequence[float] | None = None
    levels: int = 2

    def __post_init__(self):
        nn = _frozen(self.nn_couplings)
        n = nn.size + 1
        if n < 2:
            raise ValueError("a chain needs at least two sites")
        if not np.all(np.isfinite(nn)) or np.any(nn <= 0):
            raise ValueError("nearest-neighbour couplings must be finite and strictly positive")
        nnn = _frozen(np.zeros(max(n - 2, 0)) if self.nnn_couplings is None else self.nnn_couplings)
        if nnn.size != max(n - 2, 0):
            raise ValueError(f"expected {n - 2} next-nearest-neighbour couplings, got {nnn.size}")
        anh = _frozen(np.zeros(n) if self.anharmonicities is None else self.anharmonicities)
        if anh.size != n:
            raise ValueError(f"expected {n} anharmonicities, got {anh.size}")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        object.__setattr__(self, "nn_couplings", nn)
        object.__setattr__(self, "nnn_couplings", nnn)
        object.__setattr__(self, "anharmonicities", anh)

    @property
    def n_sites(self) -> int:
        return self.nn_couplings.size + 1

    @property
    def has_nnn(self) -> bool:
        return bool(np.any(self.nnn_couplings != 0))

    def with_levels(self, levels: int) -> "DeviceSpec":
        return DeviceSpec(self.nn_couplings, self.nnn_couplings, self.anharmonicities, levels)

    def without_nnn(self) -> "DeviceSpec":
        return DeviceSpec(self.nn_couplings, None, self.anharmonicities, self.levels)

    def subchain(self, start: int, stop: int) -> "DeviceSpec":
        """Sites ``start`` to ``stop - 1`` (0-based) as a new device."""
        if not 0 <= start < stop <= self.n_sites or stop - start < 2:
            raise ValueError(f"invalid subchain [{start}, {stop})")
        return DeviceSpec(
            self.nn_couplings[start:stop - 1],
            self.nnn_couplings[start:max(stop - 2, start)],
            self.anharmonicities[start:stop],
            self.levels,
        )

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "levels": self.levels,
            "nn_couplings": self.nn_couplings.tolist(),
            "nnn_couplings": self.nnn_couplings.tolist(),
            "anharmonicities": self.anharmonicities.tolist(),
        }


def paper_device(levels: int = 2) -> DeviceSpec:
    """The 10-qubit chain of the reference device."""
    return DeviceSpec(PAPER_NN_COUPLINGS, PAPER_NNN_COUPLINGS, PAPER_ANHARMONICITIES, levels)


def uniform_device(n_sites: int, g: float, levels: int = 2, anharmonicity: float = -212.0) -> DeviceSpec:
    return DeviceSpec(np.full(n_sites - 1, float(g)), None, np.full(n_sites, anharmonicity), levels)


@dataclass(frozen=True, eq=False)
class DrivePattern:
    """Per-site flux-drive amplitudes eps_j/2pi (MHz) at a common frequency nu/2pi.

    The sign of an amplitude encodes a drive phase of 0 or pi.
    """

    amplitudes: Sequence[float]
    drive_frequency: float = 120.0

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if not np.all(np.isfinite(amps)):
            raise ValueError("drive amplitudes must be finite")
        if not self.drive_frequency > 0:
            raise ValueError("drive frequency must be positive")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "drive_frequency", float(self.drive_frequency))

    @property
    def n_sites(self) -> int:
        return self.amplitudes.size

    @property
    def period(self) -> float:
        """Floquet period in ns."""
        return 1e3 / self.drive_frequency

    @property
    def is_active(self) -> bool:
        return bool(np.any(self.amplitudes != 0))

    @classmethod
    def undriven(cls, n_sites: int, drive_frequency: float = 120.0) -> "DrivePattern":
        return cls(np.zeros(n_sites), drive_frequency)

    @classmethod
    def staggered(cls, n_sites: int, eps: float, drive_frequency: float = 120.0, first_site: int = 1) -> "DrivePattern":
        """Drive odd sites (1-based labels counted from ``first_site``) with alternating sign.

        For the 10-site chain this gives eps_1 = eps_5 = eps_9 = eps and
        eps_3 = eps_7 = -eps with even sites undriven. ``first_site`` is the
        1-based label of the first site, so a subchain Q2..Q10 keeps the
        parent chain's pattern.
        """
        amps = np.zeros(n_sites)
        for k in range(n_sites):
            label = first_site + k
            if label % 2 == 1:
                amps[k] = eps if (label // 2) % 2 == 0 else -eps
        return cls(amps, drive_frequency)

    @classmethod
    def on_sites(cls, n_sites: int, sites: Sequence[int], eps: float, drive_frequency: float = 120.0) -> "DrivePattern":
        """Drive the given 1-based sites with the same amplitude ``eps``."""
        amps = np.zeros(n_sites)
        for s in sites:
            if not 1 <= s <= n_sites:
                raise ValueError(f"site {s} outside 1..{n_sites}")
            amps[s - 1] = eps
        return cls(amps, drive_frequency)


GATE_KINDS = ("X", "Z", "Y_half_pi", "SigmaX")


@dataclass(frozen=True)
class Gate:
    time: float
    site: int
    kind: str
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant drive segments plus instantaneous gates.

    ``segments`` is a sequence of ``(duration_ns, DrivePattern)`` pairs. Gates at
    identical times are applied in list order; a gate at a segment boundary is
    applied before the following segment starts.
    """

    segments: tuple
    gates: tuple = ()

    def __post_init__(self):
        segs = tuple((float(d), p) for d, p in self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        for d, _ in segs:
            if not d > 0:
                raise ValueError("segment durations must be strictly positive")
        total = sum(d for d, _ in segs)
        gates = tuple(self.gates)
        for g in gates:
            if not 0 <= g.time <= total + 1e-9:
                raise ValueError(f"gate time {g.time} outside [0, {total}]")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "gates", gates)

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.segments)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Lexicographically ordered occupation basis (site 1 most significant)."""

    n_sites: int
    levels: int
    sector: int | None
    occupations: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.codes.size

    @property
    def full_space(self) -> bool:
        return self.sector is None

    def index(self, occupation) -> int:
        occ = tuple(int(x) for x in occupation)
        if len(occ) != self.n_sites or any(not 0 <= x < self.levels for x in occ):
            raise ValueError(f"occupation {occ} is not valid for {self.n_sites} sites with d={self.levels}")
        if self.sector is not None and sum(occ) != self.sector:
            raise ValueError(f"occupation {occ} lies outside the N={self.sector} sector")
        code = self.encode(np.array([occ]))[0]
        return int(self._lookup(np.array([code]))[0])

    def occupation(self, index: int) -> tuple:
        return tuple(int(x) for x in self.occupations[index])

    def encode(self, occupations: np.ndarray) -> np.ndarray:
        weights = self.levels ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return np.asarray(occupations, dtype=np.int64) @ weights

    def _lookup(self, codes: np.ndarray) -> np.ndarray:
        """Indices of the given codes; -1 where a code is not in the basis."""
        if self.sector is None:
            return codes.astype(np.int64)
        pos = np.searchsorted(self.codes, codes)
        pos = np.clip(pos, 0, self.dim - 1)
        return np.where(self.codes[pos] == codes, pos, -1)

    def same_as(self, other: "FockBasis") -> bool:
        return self is other or (
            self.n_sites == other.n_sites and self.levels == other.levels and self.sector == other.sector
        )

    def total_number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)


def build_basis(n_sites: int, levels: int, sector: int | None = None) -> FockBasis:
    """Enumerate the truncated occupation basis, optionally restricted to N = ``sector``."""
    if n_sites < 2:
        raise ValueError("n_sites must be at least 2")
    if levels not in (2, 3):
        raise ValueError(f"levels must be 2 or 3, got {levels}")
    if levels ** n_sites > MAX_DIMENSION:
        raise ValueError(f"dimension {levels}^{n_sites} exceeds the {MAX_DIMENSION:g} guard")
    if sector is not None and not 0 <= sector <= n_sites * (levels - 1):
        raise ValueError(f"sector {sector} outside [0, {n_sites * (levels - 1)}]")
    occ = np.array(list(itertools.product(range(levels), repeat=n_sites)), dtype=np.int8)
    if sector is not None:
        occ = occ[occ.sum(axis=1, dtype=np.int64) == sector]
    occ.flags.writeable = False
    weights = levels ** np.arange(n_sites - 1, -1, -1, dtype=np.int64)
    codes = occ.astype(np.int64) @ weights
    codes.flags.writeable = False
    return FockBasis(n_sites, levels, sector, occ, codes)


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise FloatingPointError("non-finite amplitudes")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state is not normalised (norm {norm:.12f})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def product_state(basis: FockBasis, occupations) -> StateVector:
    """Computational basis state, e.g. ``(0, 1, 0, 1)``; strings like ``"0101"`` also work."""
    if isinstance(occupations, str):
        occupations = [int(c) for c in occupations]
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(occupations)] = 1.0
    return StateVector(basis, amps)


def plus_product_state(basis: FockBasis) -> StateVector:
    """|+>^n restricted to the two lowest levels of every site."""
    if basis.sector is not None:
        raise ValueError("|+>^n is not number-conserving; use an unrestricted basis")
    qubit_part = np.all(basis.occupations <= 1, axis=1)
    amps = np.where(qubit_part, 2.0 ** (-basis.n_sites / 2), 0.0).astype(complex)
    return StateVector(basis, amps)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    basis: FockBasis
    matrix: sp.csr_matrix

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_same(self.basis, other.basis)
            return OperatorMatrix(self.basis, (self.matrix @ other.matrix).tocsr())
        if isinstance(other, StateVector):
            _check_same(self.basis, other.basis)
            return self.matrix @ other.amplitudes
        return self.matrix @ other

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_same(self.basis, other.basis)
        return OperatorMatrix(self.basis, (self.matrix + other.matrix).tocsr())

    def scaled(self, factor) -> "OperatorMatrix":
        return OperatorMatrix(self.basis, (factor * self.matrix).tocsr())

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= atol

    def is_unitary(self, atol: float = 1e-12) -> bool:
        prod = (self.matrix.conj().T @ self.matrix).toarray()
        return bool(np.allclose(prod, np.eye(self.basis.dim), atol=atol, rtol=0))


def _check_same(a: FockBasis, b: FockBasis) -> None:
    if not a.same_as(b):
        raise ValueError("basis mismatch")


# Local matrices in occupation order (|0>, |1>, |2>). Pauli kinds act on the
# two lowest levels and vanish on level 2; sz = diag(-1, +1) so <sz> = 2P - 1.
def local_matrix(kind: str, levels: int, eta: float = 1.0) -> np.ndarray:
    d = levels
    m = np.zeros((d, d), dtype=complex)
    if kind == "lower":
        for n in range(1, d):
            m[n - 1, n] = math.sqrt(n)
    elif kind == "raise":
        for n in range(1, d):
            m[n, n - 1] = math.sqrt(n)
    elif kind == "number":
        m[:] = np.diag(np.arange(d))
    elif kind == "sx":
        m[0, 1] = m[1, 0] = 1
    elif kind == "sy":
        m[0, 1], m[1, 0] = 1j, -1j
    elif kind == "sz":
        m[0, 0], m[1, 1] = -1, 1
    elif kind == "sigma_plus":
        m[1, 0] = 1
    elif kind == "sigma_minus":
        m[0, 1] = 1
    elif kind == "SigmaX":
        m[0, 1] = m[1, 0] = 1
        if d == 3:
            m[2, 2] = eta
        else:
            warnings.warn("SigmaX on a two-level basis degenerates to the Pauli sx", stacklevel=3)
    elif kind == "projector0":
        m[0, 0] = 1
    elif kind == "projector1":
        m[1, 1] = 1
    elif kind == "projector2":
        if d == 3:
            m[2, 2] = 1
    else:
        raise ValueError(f"unknown site operator kind {kind!r}")
    return m


def embed_local(basis: FockBasis, site: int, local: np.ndarray) -> OperatorMatrix:
    """Identity on every other site tensored with ``local`` on ``site`` (0-based)."""
    if not 0 <= site < basis.n_sites:
        raise IndexError(f"site {site} outside 0..{basis.n_sites - 1}")
    d = basis.levels
    occ = basis.occupations[:, site].astype(np.int64)
    place = d ** (basis.n_sites - 1 - site)
    rows, cols, vals = [], [], []
    for new in range(d):
        for old in range(d):
            amp = local[new, old]
            if amp == 0:
                continue
            src = np.nonzero(occ == old)[0]
            target_codes = basis.codes[src] + (new - old) * place
            dst = basis._lookup(target_codes)
            if np.any(dst < 0):
                raise ValueError("operator leaves the number sector of this basis")
            rows.append(dst)
            cols.append(src)
            vals.append(np.full(src.size, amp, dtype=complex))
    if rows:
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(basis.dim, basis.dim)
        )
    else:
        mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return OperatorMatrix(basis, mat)


def site_operator(basis: FockBasis, site: int, kind: str, eta: float = 1.0) -> OperatorMatrix:
    """Site-local operator; ``site`` is 0-based.

    ``kind`` is one of lower, raise, number, sx, sy, sz, sigma_plus, sigma_minus,
    SigmaX (with ``eta`` on the level-2 diagonal), projector0/1/2.
    """
    return embed_local(basis, site, local_matrix(kind, basis.levels, eta))


def diagonal_operator(basis: FockBasis, diagonal: np.ndarray) -> OperatorMatrix:
    return OperatorMatrix(basis, sp.diags(np.asarray(diagonal, dtype=complex), format="csr"))


def hopping_operator(basis: FockBasis, i: int, j: int) -> OperatorMatrix:
    """a_i^dagger a_j + a_j^dagger a_i, closed within any number sector."""
    d = basis.levels
    occ = basis.occupations.astype(np.int64)
    pi, pj = d ** (basis.n_sites - 1 - i), d ** (basis.n_sites - 1 - j)
    src = np.nonzero((occ[:, j] > 0) & (occ[:, i] < d - 1))[0]
    amp = np.sqrt(occ[src, j] * (occ[src, i] + 1.0))
    dst = basis._lookup(basis.codes[src] + pi - pj)
    fwd = sp.csr_matrix((amp.astype(complex), (dst, src)), shape=(basis.dim, basis.dim))
    return OperatorMatrix(basis, (fwd + fwd.conj().T).tocsr())


def expectation(state: StateVector, op: OperatorMatrix) -> float:
    _check_same(state.basis, op.basis)
    value = np.vdot(state.amplitudes, op.matrix @ state.amplitudes)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"expectation value has imaginary part {value.imag:.3e}; operator not Hermitian?")
    return float(value.real)


def site_populations(basis: FockBasis, amplitudes: np.ndarray, level: int = 1) -> np.ndarray:
    """Probability of finding each site in ``level``; works on a stack of states (last axis)."""
    probs = np.abs(amplitudes) ** 2
    mask = (basis.occupations == level).astype(float)
    return mask.T @ probs


def site_numbers(basis: FockBasis, amplitudes: np.ndarray) -> np.ndarray:
    probs = np.abs(amplitudes) ** 2
    return basis.occupations.T.astype(float) @ probs
