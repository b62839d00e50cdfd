"""Lowest band of the three-beam triangular optical lattice.

Three beams of wavelength ``lambda`` crossing at 120 degrees give

    V(r) = (V0 / 9) |sum_j exp(i k_j . r)|^2
         = V0/3 + (V0/9) sum_{G in first shell} exp(i G . r),

whose minima (value ``V0``) form a triangular lattice of spacing
``a = 2 lambda / 3``. Lengths are in units of ``lambda`` and energies in
``E_r = h^2 / (2 m lambda^2)``, so a plane wave ``k`` costs ``|k|^2 / kappa^2``
with ``kappa = 2 pi / lambda``.

The direct basis ``a1, a2`` sits at 120 degrees so that the nearest
neighbours are ``(1,0), (0,1), (1,1)``; the reciprocal basis obeys
``a_i . b_j = 2 pi delta_ij`` and the potential's first shell is
``(1,0), (0,1), (1,-1)`` in reciprocal integer coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from bloch2d.lattice import TRIANGULAR_SHELLS, HoppingSet, Offset

log = logging.getLogger(__name__)

WAVELENGTH = 1.0
KAPPA = 2.0 * np.pi / WAVELENGTH
SPACING = 2.0 * WAVELENGTH / 3.0

A1 = SPACING * np.array([1.0, 0.0])
A2 = SPACING * np.array([-0.5, np.sqrt(3.0) / 2.0])
B1 = (2.0 * np.pi / SPACING) * np.array([1.0, 1.0 / np.sqrt(3.0)])
B2 = (2.0 * np.pi / SPACING) * np.array([0.0, 2.0 / np.sqrt(3.0)])
RECIPROCAL = np.stack([B1, B2])

POTENTIAL_SHELL: tuple[Offset, ...] = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))

# 60-degree rotation a1 -> a1 + a2, a2 -> -a1 acting on site labels, and the
# a1 <-> a2 mirror. Reduced wave vectors transform with the inverse transpose.
_ROT_SITE = np.array([[1, -1], [1, 0]])
_MIRROR_SITE = np.array([[0, 1], [1, 0]])


def point_group_sites() -> list[np.ndarray]:
    """The twelve D6 operations as integer matrices on site labels."""
    ops = []
    g = np.eye(2, dtype=int)
    for _ in range(6):
        ops.append(g.copy())
        ops.append(g @ _MIRROR_SITE)
        g = _ROT_SITE @ g
    return ops


def point_group_reduced() -> list[np.ndarray]:
    """The same operations acting on reduced wave vectors ``theta``."""
    return [np.rint(np.linalg.inv(g).T).astype(int) for g in point_group_sites()]


class BandSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class OpticalPotentialSpec:
    V0: float = -1.5

    def __post_init__(self) -> None:
        if not np.isfinite(self.V0) or self.V0 > 0:
            raise ValueError(f"V0 must be finite and <= 0 (red detuning), got {self.V0}")


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Reciprocal vectors ``n1 b1 + n2 b2`` with ``|n1|, |n2| <= cutoff``."""

    cutoff: int = 7

    def __post_init__(self) -> None:
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff}")

    @property
    def indices(self) -> np.ndarray:
        n = np.arange(-self.cutoff, self.cutoff + 1)
        n1, n2 = np.meshgrid(n, n, indexing="ij")
        return np.stack([n1.ravel(), n2.ravel()], axis=1)

    @property
    def dim(self) -> int:
        return (2 * self.cutoff + 1) ** 2


@dataclass
class BandSample:
    """Lowest-band energies on the ``M x M`` grid ``theta = (j1, j2) / M``."""

    values: np.ndarray
    V0: float = 0.0
    cutoff: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("band sample must be a square grid")
        if not np.all(np.isfinite(self.values)):
            raise BandSolverError("band sample contains non-finite energies")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def thetas(self) -> np.ndarray:
        j = np.arange(self.M) / self.M
        t1, t2 = np.meshgrid(j, j, indexing="ij")
        return np.stack([t1, t2], axis=-1)


def potential_fourier_components(spec: OpticalPotentialSpec) -> dict[Offset, float]:
    comps = {(0, 0): spec.V0 / 3.0}
    for g in POTENTIAL_SHELL:
        comps[g] = spec.V0 / 9.0
    return comps


def potential(spec: OpticalPotentialSpec, r: np.ndarray) -> np.ndarray:
    """Evaluate ``V(r)`` from its Fourier components; ``r`` has trailing axis 2."""
    r = np.asarray(r, dtype=float)
    total = np.zeros(r.shape[:-1], dtype=complex)
    for (n1, n2), c in potential_fourier_components(spec).items():
        G = n1 * B1 + n2 * B2
        total += c * np.exp(1j * (r @ G))
    return total.real


def _coupling_matrix(spec: OpticalPotentialSpec, basis: PlaneWaveBasis) -> np.ndarray:
    idx = basis.indices
    diff = idx[:, None, :] - idx[None, :, :]
    out = np.zeros((basis.dim, basis.dim))
    for g, c in potential_fourier_components(spec).items():
        if g == (0, 0):
            continue
        out[(diff[..., 0] == g[0]) & (diff[..., 1] == g[1])] = c
    return out


def _kinetic(basis: PlaneWaveBasis, theta: np.ndarray) -> np.ndarray:
    k = (theta + basis.indices) @ RECIPROCAL
    return np.einsum("ij,ij->i", k, k) / KAPPA**2


def bloch_matrix(
    spec: OpticalPotentialSpec, basis: PlaneWaveBasis, theta: Sequence[float]
) -> np.ndarray:
    """Real symmetric plane-wave Hamiltonian at reduced wave vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2,) or np.any(theta < 0) or np.any(theta >= 1):
        raise ValueError(f"theta must lie in [0, 1)^2, got {theta}")
    H = _coupling_matrix(spec, basis)
    H[np.diag_indices_from(H)] = _kinetic(basis, theta) + spec.V0 / 3.0
    return H


def lowest_band(spec: OpticalPotentialSpec, basis: PlaneWaveBasis, M: int) -> BandSample:
    if M < 8:
        raise ValueError(f"band grid needs M >= 8, got {M}")
    if basis.cutoff < 3:
        raise ValueError(f"plane-wave cutoff needs N_c >= 3, got {basis.cutoff}")
    H = _coupling_matrix(spec, basis)
    diag = np.diag_indices_from(H)
    values = np.empty((M, M))
    for j1 in range(M):
        for j2 in range(M):
            theta = np.array([j1, j2]) / M
            H[diag] = _kinetic(basis, theta) + spec.V0 / 3.0
            try:
                values[j1, j2] = scipy.linalg.eigh(
                    H, eigvals_only=True, subset_by_index=[0, 0], check_finite=False
                )[0]
            except np.linalg.LinAlgError as exc:
                raise BandSolverError(
                    f"eigensolver failed at theta=({j1}/{M}, {j2}/{M}), "
                    f"V0={spec.V0}, N_c={basis.cutoff}: {exc}"
                ) from exc
    log.debug("lowest band: V0=%g N_c=%d M=%d range [%g, %g]",
              spec.V0, basis.cutoff, M, values.min(), values.max())
    return BandSample(values, V0=spec.V0, cutoff=basis.cutoff)


def fourier_coefficients(
    band: BandSample, offsets: Sequence[Offset]
) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of ``-(1/M^2) sum_theta E(theta) exp(-2 pi i theta.m)``.

    The real part is ``J_m`` under ``E = -sum_m J_m exp(i k.m)``. It is built
    from ``cos`` of the signed integer phase so that ``J_m`` and ``J_-m`` come
    out bitwise equal.
    """
    M = band.M
    j = np.arange(M)
    j1, j2 = np.meshgrid(j, j, indexing="ij")
    re = np.empty(len(offsets))
    im = np.empty(len(offsets))
    for i, (m1, m2) in enumerate(offsets):
        phase = 2.0 * np.pi * (j1 * m1 + j2 * m2) / M
        re[i] = -np.mean(band.values * np.cos(phase))
        im[i] = np.mean(band.values * np.sin(phase))
    return re, im


@dataclass
class HoppingFit:
    hoppings: HoppingSet
    constant: float
    max_imag: float
    shells: tuple[tuple[Offset, ...], ...] = field(default=TRIANGULAR_SHELLS)

    def shell_values(self) -> list[float]:
        """First listed member of every shell."""
        return [self.hoppings[shell[0]] for shell in self.shells]


def extract_hoppings(
    band: BandSample,
    shells: Sequence[Sequence[Offset]] = TRIANGULAR_SHELLS,
    imag_tol: float = 1e-10,
) -> HoppingFit:
    """Inverse-transform the band and keep the requested shells (and negatives)."""
    offsets: list[Offset] = []
    for shell in shells:
        for m1, m2 in shell:
            for m in ((m1, m2), (-m1, -m2)):
                if m not in offsets:
                    offsets.append(m)
    reach = max(max(abs(m1), abs(m2)) for m1, m2 in offsets)
    if band.M <= 2 * reach:
        raise ValueError(
            f"band grid M={band.M} aliases offsets up to {reach}; need M > {2 * reach}"
        )
    re, im = fourier_coefficients(band, offsets)
    max_imag = float(np.abs(im).max())
    if max_imag >= imag_tol:
        raise BandSolverError(
            f"band transform has imaginary part {max_imag:.3e} >= {imag_tol:.1e}; "
            "the sample is not inversion symmetric"
        )
    return HoppingFit(
        hoppings=HoppingSet(dict(zip(offsets, re))),
        constant=-float(band.values.mean()),
        max_imag=max_imag,
        shells=tuple(tuple(s) for s in shells),
    )


def solve_hoppings(
    V0: float = -1.5, cutoff: int = 7, M: int = 32,
    shells: Sequence[Sequence[Offset]] = TRIANGULAR_SHELLS,
) -> HoppingFit:
    """Band sample plus transform in one call, with the default parameters."""
    band = lowest_band(OpticalPotentialSpec(V0), PlaneWaveBasis(cutoff), M)
    return extract_hoppings(band, shells)
