"""Wave-packet dynamics on a finite ``L x L`` patch of the lattice.

Two independent routes to the same dynamics under

    H = H_TB - sum_m (F . m) |m><m|,

* :func:`rk4_evolve` integrates the Schroedinger equation in real space with
  classic fourth-order Runge-Kutta and hard-wall edges;
* :func:`spectral_propagate` works in the acceleration gauge, where every
  Bloch component only picks up the phase ``int_0^t E(k + F s) ds``, and
  jumps to any time in one shot on a torus.

Both are valid only while the packet keeps away from the edges, which the
boundary-mass monitor checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bloch2d import _kernels
from bloch2d.lattice import ForceSpec, HoppingSet
from bloch2d.semiclassics import closed_form_displacement

log = logging.getLogger(__name__)

# Step size as a fraction of 1/rho, rho the spectral-radius bound of H.
DEFAULT_STEP_FACTOR = 0.2
# Share of the norm tolerance the default step may spend on RK4 damping.
NORM_BUDGET_SHARE = 0.25
DEFAULT_BOUNDARY_BAND = 3
DEFAULT_BOUNDARY_TOL = 1e-4
DEFAULT_NORM_TOL = 1e-6


class EvolutionError(RuntimeError):
    """A run stopped early; ``record`` holds every row up to ``t_last``."""

    def __init__(self, message: str, t_last: float, record: TrajectoryRecord | None = None):
        super().__init__(message)
        self.t_last = t_last
        self.record = record


class NormDriftError(EvolutionError):
    pass


class BoundaryContaminationError(EvolutionError):
    pass


@dataclass
class WavePacketGrid:
    """Amplitudes ``psi[i, j]`` for site ``m = (i - h, j - h)``, ``h = (L - 1) / 2``."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"amplitudes must be a square array, got shape {a.shape}")
        if a.shape[0] % 2 == 0:
            raise ValueError(f"grid side must be odd so the origin is a site, got {a.shape[0]}")
        self.amplitudes = a

    @property
    def L(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def half(self) -> int:
        return (self.L - 1) // 2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.L) - self.half
        return np.meshgrid(idx, idx, indexing="ij")

    def copy(self) -> WavePacketGrid:
        return WavePacketGrid(self.amplitudes.copy())


def _gaussian_tail(half: int, sigma: float) -> float:
    """Mass of ``exp(-2 m^2 / sigma^2)`` outside ``|m| <= half`` in 2D, infinite lattice."""
    reach = half + int(10 * sigma) + 10
    m = np.arange(-reach, reach + 1)
    w = np.exp(-2.0 * m**2 / sigma**2)
    inside = w[np.abs(m) <= half].sum() / w.sum()
    return float(1.0 - inside**2)


def gaussian_packet(
    L: int, sigma: float, k0: Sequence[float], tail_tol: float = 1e-8
) -> WavePacketGrid:
    """``A exp(-(m1^2 + m2^2) / sigma^2 + i k0 . m)`` normalized on the grid."""
    if L % 2 == 0 or L < 3:
        raise ValueError(f"L must be odd and >= 3, got {L}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    tail = _gaussian_tail((L - 1) // 2, sigma)
    if tail > tail_tol:
        raise ValueError(
            f"sigma={sigma} leaves {tail:.2e} of the packet outside an {L}x{L} grid "
            f"(limit {tail_tol:.0e}); enlarge L"
        )
    grid = WavePacketGrid(np.zeros((L, L), dtype=complex))
    m1, m2 = grid.coords()
    psi = np.exp(-(m1**2 + m2**2) / sigma**2 + 1j * (k0[0] * m1 + k0[1] * m2))
    grid.amplitudes = psi / np.sqrt(np.sum(np.abs(psi) ** 2))
    return grid


def _force_vector(F: ForceSpec | Sequence[float] | np.ndarray) -> np.ndarray:
    return F.vector if isinstance(F, ForceSpec) else np.asarray(F, dtype=float)


def _tilt(F: ForceSpec | Sequence[float] | np.ndarray, L: int) -> np.ndarray:
    f = _force_vector(F)
    idx = np.arange(L) - (L - 1) // 2
    m1, m2 = np.meshgrid(idx, idx, indexing="ij")
    return -(f[0] * m1 + f[1] * m2)


def _amplitudes(psi: WavePacketGrid | np.ndarray) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, WavePacketGrid) else np.asarray(psi)


def apply_hamiltonian(
    J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, psi: WavePacketGrid | np.ndarray
) -> np.ndarray:
    """``(H psi)_m = -sum_m' J_m' psi_{m+m'} - (F . m) psi_m`` with open edges.

    Plain numpy reference for the compiled stencil used inside the RK4 loop.
    """
    a = _amplitudes(psi)
    L = a.shape[0]
    out = _tilt(F, L) * a
    for (d1, d2), value in J.entries.items():
        if abs(d1) >= L or abs(d2) >= L:
            continue
        dst = (slice(max(0, -d1), L - max(0, d1)), slice(max(0, -d2), L - max(0, d2)))
        src = (slice(max(0, d1), L - max(0, -d1)), slice(max(0, d2), L - max(0, -d2)))
        out[dst] -= value * a[src]
    return out


def norm(psi: WavePacketGrid | np.ndarray) -> float:
    return float(np.sum(np.abs(_amplitudes(psi)) ** 2))


def _checked_norm(a: np.ndarray) -> float:
    n = float(np.sum(np.abs(a) ** 2))
    if not n > 0.0:
        raise ValueError("wave function has zero norm")
    return n


def center_of_mass(psi: WavePacketGrid | np.ndarray) -> np.ndarray:
    a = _amplitudes(psi)
    prob = np.abs(a) ** 2
    total = _checked_norm(a)
    idx = np.arange(a.shape[0]) - (a.shape[0] - 1) // 2
    return np.array([prob.sum(axis=1) @ idx, prob.sum(axis=0) @ idx]) / total


def energy(
    psi: WavePacketGrid | np.ndarray, J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray
) -> float:
    """``<psi|H|psi> / <psi|psi>``; the imaginary part is rounding only."""
    a = _amplitudes(psi)
    total = _checked_norm(a)
    return float(np.vdot(a, apply_hamiltonian(J, F, a)).real / total)


def boundary_mass(psi: WavePacketGrid | np.ndarray, band: int = DEFAULT_BOUNDARY_BAND) -> float:
    """Probability within ``band`` sites of any edge."""
    a = _amplitudes(psi)
    prob = np.abs(a) ** 2
    total = _checked_norm(a)
    inner = prob[band:-band, band:-band].sum() if 2 * band < a.shape[0] else 0.0
    return float((prob.sum() - inner) / total)


def spectral_radius_bound(J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, L: int) -> float:
    return 2.0 * J.abs_sum() + float(np.abs(_tilt(F, L)).max())


def default_time_step(
    J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, L: int,
    factor: float = DEFAULT_STEP_FACTOR,
) -> float:
    return factor / spectral_radius_bound(J, F, L)


def accurate_time_step(
    psi0: WavePacketGrid | np.ndarray,
    J: HoppingSet,
    F: ForceSpec | Sequence[float] | np.ndarray,
    t_end: float,
    norm_tol: float = DEFAULT_NORM_TOL,
    factor: float = DEFAULT_STEP_FACTOR,
) -> float:
    """Largest step whose RK4 norm loss over ``t_end`` stays inside the budget.

    One RK4 step multiplies an eigencomponent of energy ``x / dt`` by a factor
    of modulus ``1 - x^6 / 144 + ...``, so the norm loses ``<H^6> dt^6 / 72``
    per step and ``<H^6> dt^5 t_end / 72`` over the run. ``<H^6>`` is conserved
    by the exact dynamics and read off ``psi0``. The result never exceeds the
    stability-based :func:`default_time_step`.
    """
    a = _amplitudes(psi0)
    stable = default_time_step(J, F, a.shape[0], factor)
    state = _PaddedState(J, F, a)
    for _ in range(2):
        state.set_interior(state.hamiltonian())
    h6 = norm(state.hamiltonian()) / _checked_norm(a)
    if not h6 > 0:
        return stable
    budget = NORM_BUDGET_SHARE * norm_tol
    return min(stable, (72.0 * budget / (h6 * t_end)) ** 0.2)


def reference_hopping(J: HoppingSet) -> float:
    """Largest ``|J_m|``: the nearest-neighbour ``J1`` for the triangular tables."""
    if len(J) == 0:
        return 1.0
    return float(np.abs(J.values).max())


@dataclass
class EvolutionConfig:
    """Knobs of an RK4 run. Times are in ``1/E_r``.

    ``dt=None`` picks :func:`accurate_time_step`; ``sample_stride=None`` picks
    the step count closest to ``sample_dt``, itself ``0.5 / J1`` when unset.
    """

    t_end: float
    dt: float | None = None
    sample_stride: int | None = None
    sample_dt: float | None = None
    boundary_band: int = DEFAULT_BOUNDARY_BAND
    boundary_tol: float = DEFAULT_BOUNDARY_TOL
    norm_tol: float = DEFAULT_NORM_TOL

    def __post_init__(self) -> None:
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.sample_stride is not None and self.sample_stride < 1:
            raise ValueError(f"sample_stride must be >= 1, got {self.sample_stride}")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError(f"sample_dt must be positive, got {self.sample_dt}")
        if self.boundary_band < 1:
            raise ValueError(f"boundary_band must be >= 1, got {self.boundary_band}")


@dataclass
class TrajectoryRecord:
    t: list[float] = field(default_factory=list)
    com: list[tuple[float, float]] = field(default_factory=list)
    norm: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    boundary_mass: list[float] = field(default_factory=list)
    dt: float = 0.0

    def append(self, t: float, com: np.ndarray, nrm: float, en: float, bm: float) -> None:
        if self.t and t <= self.t[-1]:
            raise ValueError("trajectory times must increase")
        self.t.append(float(t))
        self.com.append((float(com[0]), float(com[1])))
        self.norm.append(float(nrm))
        self.energy.append(float(en))
        self.boundary_mass.append(float(bm))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.t)

    @property
    def centers(self) -> np.ndarray:
        return np.asarray(self.com).reshape(-1, 2)

    def rows(self) -> list[tuple[float, float, float, float, float, float]]:
        return [
            (t, c[0], c[1], n, e, b)
            for t, c, n, e, b in zip(self.t, self.com, self.norm, self.energy, self.boundary_mass)
        ]


class _PaddedState:
    """Zero-padded real/imaginary planes of a grid plus the kernel's stencil tables."""

    def __init__(self, J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, a: np.ndarray):
        L = a.shape[0]
        if J.m_max >= L:
            raise ValueError(f"hopping reach {J.m_max} does not fit an {L}x{L} grid")
        self.L = L
        self.pad = max(J.m_max, 1)
        self.width = L + 2 * self.pad
        inner = slice(self.pad, self.pad + L)
        self.inner = (inner, inner)
        self.planes = np.zeros((2, self.width, self.width))
        self.set_interior(a)
        diag = np.zeros((self.width, self.width))
        diag[self.inner] = _tilt(F, L)
        self.diag = diag.ravel()
        mask = np.zeros((self.width, self.width))
        mask[self.inner] = 1.0
        self.mask = mask.ravel()
        # hoppings with equal values share one multiply in the kernel
        shifts = J.offsets[:, 0] * self.width + J.offsets[:, 1]
        groups: dict[float, list[int]] = {}
        for shift, value in zip(shifts.tolist(), J.values.tolist()):
            groups.setdefault(value, []).append(shift)
        self.group_ptr = np.cumsum([0] + [len(g) for g in groups.values()]).astype(np.int64)
        self.shifts = np.array([s for g in groups.values() for s in g], dtype=np.int64)
        self.coefs = -np.array(list(groups), dtype=float)
        self.start = self.pad * self.width + self.pad
        self.stop = (self.pad + L - 1) * self.width + self.pad + L
        self.work = np.zeros((3, 2, self.width * self.width))

    @property
    def flat(self) -> np.ndarray:
        return self.planes.reshape(2, -1)

    def set_interior(self, a: np.ndarray) -> None:
        self.planes[0][self.inner] = a.real
        self.planes[1][self.inner] = a.imag

    def interior(self) -> np.ndarray:
        return self.planes[0][self.inner] + 1j * self.planes[1][self.inner]

    def step(self, nsteps: int, dt: float) -> None:
        _kernels.rk4_steps(
            self.flat, nsteps, dt, self.group_ptr, self.shifts, self.coefs, self.diag,
            self.mask, self.start, self.stop, self.work,
        )

    def hamiltonian(self) -> np.ndarray:
        out = np.zeros((2, self.width * self.width))
        for plane in range(2):
            _kernels.apply_stencil(
                self.flat[plane], out[plane], self.group_ptr, self.shifts, self.coefs,
                self.diag, self.mask, self.start, self.stop,
            )
        out = out.reshape(2, self.width, self.width)
        return out[0][self.inner] + 1j * out[1][self.inner]


def apply_hamiltonian_compiled(
    J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, psi: WavePacketGrid | np.ndarray
) -> np.ndarray:
    """Same operator as :func:`apply_hamiltonian`, via the compiled stencil."""
    return _PaddedState(J, F, _amplitudes(psi)).hamiltonian()


def rk4_evolve(
    psi0: WavePacketGrid,
    J: HoppingSet,
    F: ForceSpec | Sequence[float] | np.ndarray,
    cfg: EvolutionConfig,
) -> tuple[TrajectoryRecord, WavePacketGrid]:
    """Classic RK4 for ``i dpsi/dt = H psi``; one observable row per stride.

    Raises :class:`NormDriftError` when ``|norm - norm0| > norm_tol`` (this
    also catches blow-up) and :class:`BoundaryContaminationError` when the
    edge band holds more than ``boundary_tol``. Both carry the rows recorded
    so far and the last valid time.
    """
    state = _PaddedState(J, F, psi0.amplitudes)
    L = psi0.L
    if cfg.dt is not None:
        dt_max = cfg.dt
    else:
        dt_max = accurate_time_step(psi0, J, F, cfg.t_end, cfg.norm_tol)
    n_steps = max(1, math.ceil(cfg.t_end / dt_max - 1e-9))
    dt = cfg.t_end / n_steps
    if cfg.sample_stride is not None:
        stride = cfg.sample_stride
    else:
        interval = cfg.sample_dt if cfg.sample_dt is not None else 0.5 / reference_hopping(J)
        stride = max(1, round(interval / dt))
    record = TrajectoryRecord(dt=dt)
    norm0 = _checked_norm(psi0.amplitudes)

    def observe(t: float) -> None:
        a = state.interior()
        nrm = norm(a)
        if not math.isfinite(nrm) or abs(nrm - norm0) > cfg.norm_tol:
            raise NormDriftError(
                f"norm drifted to {nrm!r} (start {norm0!r}) at t={t:.6g}",
                record.t[-1] if record.t else 0.0, record,
            )
        en = float(np.vdot(a, state.hamiltonian()).real / nrm)
        bm = boundary_mass(a, cfg.boundary_band)
        record.append(t, center_of_mass(a), nrm, en, bm)
        if bm > cfg.boundary_tol:
            raise BoundaryContaminationError(
                f"boundary mass {bm:.3e} exceeds {cfg.boundary_tol:.1e} at t={t:.6g}; "
                "enlarge L or shorten t_end",
                record.t[-2] if len(record) > 1 else 0.0, record,
            )

    log.info("rk4: L=%d dt=%.6g steps=%d stride=%d", L, dt, n_steps, stride)
    observe(0.0)
    done = 0
    while done < n_steps:
        chunk = min(stride, n_steps - done)
        state.step(chunk, dt)
        done += chunk
        observe(cfg.t_end if done == n_steps else done * dt)
    return record, WavePacketGrid(state.interior())


def acceleration_gauge_phase(
    J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray, k: np.ndarray, t: float
) -> np.ndarray:
    """``Phi(k, t) = int_0^t E(k + F s) ds`` in closed form, ``k`` with trailing axis 2.

    Per hopping, ``int_0^t cos(a + b s) ds = t cos(a + b t/2) sinc(b t / 2)``.
    """
    k = np.asarray(k, dtype=float)
    if len(J) == 0:
        return np.zeros(k.shape[:-1])
    offsets = J.offsets.astype(float)
    a = k @ offsets.T
    b = offsets @ _force_vector(F)
    half = 0.5 * b * t
    per_term = t * np.cos(a + half) * np.sinc(half / np.pi)
    return -(per_term @ J.values)


def spectral_propagate(
    psi0: WavePacketGrid,
    J: HoppingSet,
    F: ForceSpec | Sequence[float] | np.ndarray,
    t: float,
    boundary_band: int = 1,
    boundary_tol: float = 1e-8,
) -> WavePacketGrid:
    """Exact evolution to time ``t`` through the acceleration gauge.

    ``psi_m(t) = sum_k f(k) exp(i (k + F t) . m) exp(-i Phi(k, t))`` with
    ``f`` the discrete Fourier transform of ``psi0`` on the ``L x L`` torus.
    Matches the infinite lattice as long as the packet stays clear of the
    torus seam, which is checked before and after.
    """
    bm0 = boundary_mass(psi0, boundary_band)
    if bm0 > boundary_tol:
        raise BoundaryContaminationError(
            f"initial boundary mass {bm0:.3e} exceeds {boundary_tol:.1e}", 0.0
        )
    L = psi0.L
    centred = np.fft.ifftshift(psi0.amplitudes)
    spectrum = np.fft.fft2(centred)
    kk = 2.0 * np.pi * np.fft.fftfreq(L)
    k1, k2 = np.meshgrid(kk, kk, indexing="ij")
    phase = acceleration_gauge_phase(J, F, np.stack([k1, k2], axis=-1), t)
    moved = np.fft.fftshift(np.fft.ifft2(spectrum * np.exp(-1j * phase)))
    m1, m2 = psi0.coords()
    f = _force_vector(F)
    out = WavePacketGrid(moved * np.exp(1j * t * (f[0] * m1 + f[1] * m2)))
    bm = boundary_mass(out, boundary_band)
    if bm > boundary_tol:
        raise BoundaryContaminationError(
            f"boundary mass {bm:.3e} at t={t:.6g} exceeds {boundary_tol:.1e}; "
            "torus images overlap",
            0.0,
        )
    return out


def overlap(a: WavePacketGrid | np.ndarray, b: WavePacketGrid | np.ndarray) -> complex:
    """Normalized ``<a|b>``."""
    x, y = _amplitudes(a), _amplitudes(b)
    return complex(np.vdot(x, y) / math.sqrt(_checked_norm(x) * _checked_norm(y)))


def predicted_extent(
    J: HoppingSet,
    k0: Sequence[float],
    F: ForceSpec | Sequence[float] | np.ndarray,
    sigma: float,
    t_end: float,
    n_samples: int = 400,
) -> float:
    """Largest site coordinate the packet is expected to reach by ``t_end``.

    The centre follows the semiclassical path; the width grows from
    ``sigma/2`` by the spread of that path over momenta ``1/sigma`` from ``k0``,
    probed in eight directions. Four widths are added on top of the farthest
    centre coordinate.
    """
    t = np.linspace(0.0, t_end, n_samples)
    k0 = np.asarray(k0, dtype=float)
    centre = closed_form_displacement(J, k0, F, t)
    spread = np.zeros_like(t)
    # the worst spreading direction is generally off-axis
    for angle in np.linspace(0.0, np.pi, 8, endpoint=False):
        dk = np.array([math.cos(angle), math.sin(angle)]) / sigma
        shifted = closed_form_displacement(J, k0 + dk, F, t)
        spread = np.maximum(spread, np.abs(shifted - centre).max(axis=-1))
    width = np.sqrt((sigma / 2.0) ** 2 + spread**2)
    return float(np.max(np.abs(centre).max(axis=-1) + 4.0 * width))


def recommended_grid(
    J: HoppingSet,
    k0: Sequence[float],
    F: ForceSpec | Sequence[float] | np.ndarray,
    sigma: float,
    t_end: float,
    minimum: int = 121,
    boundary_band: int = DEFAULT_BOUNDARY_BAND,
) -> int:
    """Smallest odd ``L >= minimum`` whose edge band clears :func:`predicted_extent`."""
    reach = predicted_extent(J, k0, F, sigma, t_end)
    half = max((minimum - 1) // 2, math.ceil(reach) + boundary_band)
    return 2 * half + 1
