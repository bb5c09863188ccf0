"""Single-particle route for nearest-neighbour XY chains.

A hard-core chain with only nearest-neighbour hopping maps onto free fermions
(the Jordan-Wigner string cancels between neighbours), so walks and the ZZ
OTOC reduce to n x n linear algebra. This is what makes 25-site chains cheap,
and it doubles as an independent check on the many-body propagator.
"""
from __future__ import annotations

import numpy as np

from .hamiltonian import angular


def hopping_matrix(couplings_mhz, nnn_couplings_mhz=None) -> np.ndarray:
    """Real symmetric single-particle Hamiltonian in rad/ns.

    Next-nearest-neighbour bonds are exact for one particle but break the
    free-fermion mapping for several, so only single_particle_walk accepts them.
    """
    g = angular(np.asarray(couplings_mhz, dtype=float))
    h = np.diag(g, 1) + np.diag(g, -1)
    if nnn_couplings_mhz is not None:
        g2 = angular(np.asarray(nnn_couplings_mhz, dtype=float))
        h = h + np.diag(g2, 2) + np.diag(g2, -2)
    return h


def _propagators(h: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(-i h t) for every t, shape (n_t, n, n)."""
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * np.outer(times, w))
    return np.einsum("ik,tk,jk->tij", v, phases, v.conj())


def single_particle_walk(couplings_mhz, site: int, times, nnn_couplings_mhz=None) -> np.ndarray:
    """P_j(t) for one excitation starting on ``site`` (0-based); shape (n_t, n)."""
    h = hopping_matrix(couplings_mhz, nnn_couplings_mhz)
    times = np.asarray(times, dtype=float)
    w, v = np.linalg.eigh(h)
    amps = (v * np.exp(-1j * np.outer(times, w))[:, None, :]) @ v[site].conj()
    return np.abs(amps) ** 2


def zz_otoc(couplings_a, times, occupations, couplings_b=None, butterfly_site: int = -1) -> np.ndarray:
    """ZZ OTOC of a free-fermion chain.

    Forward evolution under ``couplings_a`` for t, sigma^z on ``butterfly_site``,
    then evolution under ``couplings_b`` for t (exact reversal, -h_a, when
    omitted). sigma^z_k = -exp(i pi n_k) up to sign acts on orbitals as
    diag(1, ..., -1, ..., 1), so the state stays a Slater determinant.
    Returns C_j(t) = lambda_j <sz_j>, with lambda_j the sz eigenvalue of the
    initial occupation; shape (n_t, n).
    """
    occ = np.asarray(occupations, dtype=int)
    n = occ.size
    ha = hopping_matrix(couplings_a)
    hb = -ha if couplings_b is None else hopping_matrix(couplings_b)
    if ha.shape[0] != n or hb.shape[0] != n:
        raise ValueError("couplings and occupations disagree on the chain length")
    times = np.asarray(times, dtype=float)
    filled = np.flatnonzero(occ)
    phi = np.zeros((n, filled.size), dtype=complex)
    phi[filled, np.arange(filled.size)] = 1.0
    flip = np.ones(n)
    flip[butterfly_site] = -1.0
    ua = _propagators(ha, times)
    ub = _propagators(hb, times)
    orbitals = ub @ (flip[None, :, None] * (ua @ phi))
    density = np.sum(np.abs(orbitals) ** 2, axis=2)
    lam = 2.0 * occ - 1.0
    return lam * (2.0 * density - 1.0)
