"""Lab-frame driven Bose-Hubbard chain, its Floquet effective XY model, and the SSH view."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .bessel import bessel_j0
from .model import (
    DeviceSpec,
    DrivePattern,
    FockBasis,
    OperatorMatrix,
    build_basis,
    diagonal_operator,
    hopping_operator,
)


def angular(freq_mhz):
    """Linear frequency in MHz -> angular frequency in rad/ns. The only unit conversion."""
    return 2.0 * math.pi * 1e-3 * np.asarray(freq_mhz, dtype=float)


def effective_coupling(g: float, eps_left: float, eps_right: float, nu: float) -> float:
    """Bessel-renormalised hopping g * J0((eps_left - eps_right) / nu); all in MHz."""
    if not nu > 0:
        raise ValueError("drive frequency must be positive")
    return g * bessel_j0((eps_left - eps_right) / nu)


def _resolve_basis(device: DeviceSpec, basis: FockBasis | None, levels: int) -> FockBasis:
    if basis is None:
        return build_basis(device.n_sites, levels)
    if basis.n_sites != device.n_sites or basis.levels != levels:
        raise ValueError(
            f"basis ({basis.n_sites} sites, d={basis.levels}) does not match device "
            f"({device.n_sites} sites, d={levels})"
        )
    return basis


def _check_drive(device: DeviceSpec, drive: DrivePattern) -> None:
    if drive.n_sites != device.n_sites:
        raise ValueError(f"drive has {drive.n_sites} sites, device has {device.n_sites}")


def _hopping_sum(basis: FockBasis, couplings_mhz, offset: int) -> sp.csr_matrix:
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for j, g in enumerate(np.asarray(couplings_mhz, dtype=float)):
        if g != 0:
            out = out + angular(g) * hopping_operator(basis, j, j + offset).matrix
    return out.tocsr()


@dataclass(frozen=True, eq=False)
class LabHamiltonian:
    """H(t) = H_static + cos(nu t) * sum_j eps_j n_j, stored in rad/ns.

    ``static`` holds nearest- and next-nearest-neighbour hopping plus the
    on-site interaction; ``drive_diagonal`` is sum_j eps_j n_j on the basis.
    """

    basis: FockBasis
    static: sp.csr_matrix
    drive_amplitudes: np.ndarray
    drive_diagonal: np.ndarray
    drive_frequency: float

    time_dependent = True

    @property
    def nu(self) -> float:
        return float(angular(self.drive_frequency))

    @property
    def period(self) -> float:
        return 1e3 / self.drive_frequency

    @property
    def is_driven(self) -> bool:
        return bool(np.any(self.drive_diagonal != 0))

    def modulation(self, t):
        return np.cos(self.nu * np.asarray(t, dtype=float))

    def evaluate_at(self, t: float) -> OperatorMatrix:
        mat = self.static + sp.diags(self.modulation(t) * self.drive_diagonal, format="csr")
        return OperatorMatrix(self.basis, mat.tocsr())

    @cached_property
    def static_norm(self) -> float:
        return float(abs(self.static).sum(axis=0).max()) if self.static.nnz else 0.0

    @cached_property
    def drive_norm(self) -> float:
        return float(np.max(np.abs(self.drive_diagonal))) if self.drive_diagonal.size else 0.0


def build_lab_hamiltonian(
    device: DeviceSpec,
    drive: DrivePattern,
    basis: FockBasis | None = None,
) -> LabHamiltonian:
    """Assemble the driven Bose-Hubbard Hamiltonian for ``device``.

    Next-nearest-neighbour hopping is included whenever the device carries
    nonzero NNN couplings (use ``device.without_nnn()`` to drop it). The
    on-site interaction only exists for ``device.levels == 3``.
    """
    _check_drive(device, drive)
    basis = _resolve_basis(device, basis, device.levels)
    static = _hopping_sum(basis, device.nn_couplings, 1)
    if device.has_nnn:
        static = static + _hopping_sum(basis, device.nnn_couplings, 2)
    occ = basis.occupations.astype(float)
    if device.levels == 3:
        u = angular(device.anharmonicities)
        static = static + sp.diags((occ * (occ - 1) / 2) @ u, format="csr")
    drive_diag = occ @ angular(drive.amplitudes)
    drive_diag.flags.writeable = False
    return LabHamiltonian(basis, static.tocsr(), drive.amplitudes, drive_diag, drive.drive_frequency)


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """Time-independent spin-1/2 Hamiltonian (rad/ns) with its renormalised couplings in MHz."""

    operator: OperatorMatrix
    couplings: np.ndarray
    nnn_couplings: np.ndarray
    include_nnn: bool = False
    include_zz: bool = False
    zz_strength: float = 0.0

    time_dependent = False
    is_driven = False

    @property
    def basis(self) -> FockBasis:
        return self.operator.basis

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.operator.matrix

    @property
    def intracell(self) -> np.ndarray:
        """Bonds (1,2), (3,4), ... in 1-based labels: g_o^eff of the SSH picture."""
        return self.couplings[0::2]

    @property
    def intercell(self) -> np.ndarray:
        """Bonds (2,3), (4,5), ...: g_e^eff."""
        return self.couplings[1::2]

    @property
    def is_topological(self) -> bool:
        return bool(np.mean(np.abs(self.intracell)) < np.mean(np.abs(self.intercell)))

    def evaluate_at(self, t: float = 0.0) -> OperatorMatrix:
        return self.operator

    def negated(self) -> "EffectiveHamiltonian":
        """Exact -H. Reference mode for oracle tests; protocols reverse via the drive instead."""
        return EffectiveHamiltonian(
            self.operator.scaled(-1.0), -self.couplings, -self.nnn_couplings,
            self.include_nnn, self.include_zz, -self.zz_strength,
        )

    @cached_property
    def static_norm(self) -> float:
        return float(abs(self.matrix).sum(axis=0).max()) if self.matrix.nnz else 0.0


def effective_couplings(device: DeviceSpec, drive: DrivePattern, include_nnn: bool = False):
    """Renormalised (nearest, next-nearest) couplings in MHz; NNN zeros unless requested."""
    _check_drive(device, drive)
    eps, nu = drive.amplitudes, drive.drive_frequency
    g_eff = np.array([effective_coupling(g, eps[j], eps[j + 1], nu) for j, g in enumerate(device.nn_couplings)])
    g_nnn = np.zeros(device.nnn_couplings.size)
    if include_nnn:
        g_nnn = np.array([effective_coupling(g, eps[j], eps[j + 2], nu) if g else 0.0
                          for j, g in enumerate(device.nnn_couplings)])
    for arr in (g_eff, g_nnn):
        arr.flags.writeable = False
    return g_eff, g_nnn


def build_effective_hamiltonian(
    device: DeviceSpec,
    drive: DrivePattern,
    include_nnn: bool = False,
    include_zz: bool = False,
    zz_strength: float = 0.065,
    basis: FockBasis | None = None,
) -> EffectiveHamiltonian:
    """Floquet effective XY chain.

    Each bond gets g_j J0((eps_j - eps_{j+1}) / nu). With ``include_nnn`` the
    next-nearest-neighbour bonds are renormalised the same way by
    J0((eps_j - eps_{j+2}) / nu), which extrapolates the nearest-neighbour
    result and is only an approximation. With ``include_zz`` the diagonal term
    -(zz_strength / 2) sum_j (1 + sz_j sz_{j+1}) is added (zz_strength in MHz).
    """
    if device.levels != 2:
        raise ValueError("the effective model is a spin-1/2 construction; use a levels=2 device")
    g_eff, g_nnn = effective_couplings(device, drive, include_nnn)
    basis = _resolve_basis(device, basis, 2)
    mat = _hopping_sum(basis, g_eff, 1)
    if include_nnn:
        mat = mat + _hopping_sum(basis, g_nnn, 2)
    if include_zz:
        sz = 2.0 * basis.occupations.astype(float) - 1.0
        diag = -0.5 * angular(zz_strength) * np.sum(1.0 + sz[:, :-1] * sz[:, 1:], axis=1)
        mat = mat + diagonal_operator(basis, diag).matrix
    return EffectiveHamiltonian(
        OperatorMatrix(basis, mat.tocsr()), g_eff, g_nnn, include_nnn, include_zz,
        float(zz_strength) if include_zz else 0.0,
    )


def build_ssh_hamiltonian(device: DeviceSpec, drive: DrivePattern, basis: FockBasis | None = None) -> EffectiveHamiltonian:
    """SSH labelling of the effective chain: Q_{2j-1} -> (A, j), Q_{2j} -> (B, j)."""
    if device.n_sites % 2:
        raise ValueError("the SSH picture needs an even number of sites")
    return build_effective_hamiltonian(device.with_levels(2), drive, basis=basis)


def number_operator_total(basis: FockBasis) -> OperatorMatrix:
    return diagonal_operator(basis, basis.total_number().astype(float))
