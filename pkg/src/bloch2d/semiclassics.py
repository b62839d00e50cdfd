"""Closed-form semiclassical dynamics under a static force.

The wave vector moves as ``k(t) = k0 + F t`` and the packet centre follows
``r(t) - r(0) = int_0^t grad E(k0 + F s) ds``. For a band that is a finite
cosine series the time integral is elementary, term by term:

    I_m(t) = int_0^t sin(k0.m + (F.m) s) ds
           = t sin(k0.m + (F.m) t / 2) sinc((F.m) t / 2),

which is the same expression whether or not ``F.m`` vanishes. When ``F T``
is a reciprocal vector ``2 pi (q, r)`` every oscillating term integrates to
zero over ``T`` and only offsets with ``q m1 + r m2 = 0`` survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from bloch2d.lattice import ForceSpec, HoppingSet, Offset, canonicalize_k


class IncommensurateForceError(ValueError):
    """The force has no exact lattice direction, so there is no Bloch period."""


def _force_vector(F: ForceSpec | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(F, ForceSpec):
        return F.vector
    vec = np.asarray(F, dtype=float)
    if vec.shape != (2,):
        raise ValueError(f"force must have two components, got shape {vec.shape}")
    return vec


def _require_commensurate(F: ForceSpec) -> tuple[int, int]:
    if not isinstance(F, ForceSpec) or F.direction is None:
        raise IncommensurateForceError(
            "force has no declared (q, r) direction; call rationalize_force() "
            "and use the result's .commensurate() projection"
        )
    if not F.is_commensurate:
        raise IncommensurateForceError(
            f"force ({F.F1}, {F.F2}) deviates from direction {F.direction} by "
            f"{F.mismatch():.3e}; use .commensurate() to project it"
        )
    return F.direction


def _perpendicular_mask(J: HoppingSet, F: ForceSpec | np.ndarray) -> np.ndarray:
    """Offsets with ``F.m == 0``; integer test whenever a direction is known."""
    if isinstance(F, ForceSpec) and F.direction is not None and F.is_commensurate:
        q, r = F.direction
        return (J.offsets @ np.array([q, r])) == 0
    return (J.offsets @ _force_vector(F)) == 0.0


def bloch_period(F: ForceSpec) -> float:
    """Smallest ``T > 0`` with ``F T = 2 pi (q, r)``."""
    q, r = _require_commensurate(F)
    if q != 0:
        return 2.0 * math.pi * q / F.F1
    return 2.0 * math.pi * r / F.F2


def closed_form_displacement(
    J: HoppingSet,
    k0: Sequence[float] | np.ndarray,
    F: ForceSpec | Sequence[float] | np.ndarray,
    t: float | np.ndarray,
) -> np.ndarray:
    """Packet-centre displacement ``r(t) - r(0)`` in sites.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (2,)``.
    """
    t = np.asarray(t, dtype=float)
    if len(J) == 0:
        return np.zeros(t.shape + (2,))
    offsets = J.offsets.astype(float)
    a = offsets @ np.asarray(k0, dtype=float)
    b = offsets @ _force_vector(F)
    b = np.where(_perpendicular_mask(J, F), 0.0, b)
    tt = t[..., None]
    half = 0.5 * b * tt
    integrals = tt * np.sin(a + half) * np.sinc(half / np.pi)
    return (integrals * J.values) @ offsets


@dataclass
class DriftResult:
    """Net motion per Bloch period for a commensurate force."""

    period: float
    displacement: np.ndarray
    velocity: np.ndarray
    contributing: list[Offset] = field(default_factory=list)
    direction: Offset = (0, 0)

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


def drift_vector(
    J: HoppingSet, k0: Sequence[float] | np.ndarray, F: ForceSpec
) -> DriftResult:
    """Displacement per period ``D_T = T sum_{F.m=0} m J_m sin(m.k0)``.

    Only offsets on the line ``q m1 + r m2 = 0`` contribute, so ``D_T`` is
    assembled as a multiple of the integer vector ``(-r, q)``.
    """
    q, r = _require_commensurate(F)
    T = bloch_period(F)
    mask = _perpendicular_mask(J, F)
    perp = np.array([-r, q], dtype=float)
    offsets = J.offsets[mask]
    # m = c * (-r, q) for every contributing offset
    coeff = (offsets @ np.array([-r, q])) / float(q * q + r * r)
    phases = offsets.astype(float) @ np.asarray(k0, dtype=float)
    s = float(np.sum(coeff * J.values[mask] * np.sin(phases)))
    velocity = s * perp
    return DriftResult(
        period=T,
        displacement=T * velocity,
        velocity=velocity,
        contributing=[tuple(int(x) for x in m) for m in offsets],
        direction=(q, r),
    )


def oscillation_bound(J: HoppingSet, F: ForceSpec | Sequence[float] | np.ndarray) -> float:
    """Upper bound on ``|r(t) - t v|`` from the oscillating terms alone."""
    mask = _perpendicular_mask(J, F)
    b = np.abs(J.offsets @ _force_vector(F))[~mask]
    norms = np.hypot(*J.offsets[~mask].T)
    return float(np.sum(2.0 * norms * np.abs(J.values[~mask]) / b))


def _convergents(x: Fraction, bound: int) -> list[tuple[int, int]]:
    """Continued-fraction convergents ``p/s`` of ``x >= 0`` with ``s <= bound``."""
    out = []
    p_prev, p = 1, math.floor(x)
    s_prev, s = 0, 1
    rest = x - p
    out.append((p, s))
    while rest != 0:
        x = 1 / rest
        a = math.floor(x)
        rest = x - a
        p_prev, p = p, a * p + p_prev
        s_prev, s = s, a * s + s_prev
        if s > bound:
            break
        out.append((p, s))
    return out


def rationalize_force(F: Sequence[float] | np.ndarray, q_max: int) -> ForceSpec:
    """Attach the coprime direction ``(q, r)``, ``|q|, |r| <= q_max``, closest to ``F``.

    Closeness is ``|F1 r - F2 q| / |F|``, stored as the spec's ``residual``.
    With ``x`` the smaller-over-larger component ratio this is a best
    approximation of the second kind, so the optimum is the last convergent
    of ``x`` whose denominator fits in ``q_max``.
    """
    F1, F2 = (float(c) for c in F)
    if F1 == 0.0 and F2 == 0.0:
        raise ValueError("cannot rationalize a zero force")
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    a, b = abs(F1), abs(F2)
    swap = a > b
    small, large = (b, a) if swap else (a, b)
    x = Fraction(small) / Fraction(large)
    best = min(_convergents(x, q_max), key=lambda ps: abs(ps[1] * x - ps[0]))
    num, den = best
    q_abs, r_abs = (den, num) if swap else (num, den)
    q = int(math.copysign(q_abs, F1)) if q_abs else 0
    r = int(math.copysign(r_abs, F2)) if r_abs else 0
    residual = abs(F1 * r - F2 * q) / math.hypot(F1, F2)
    return ForceSpec(F1, F2, (q, r), residual=residual)


@dataclass
class SemiclassicalTrajectory:
    """Sampled ``(t, k(t), r(t) - r(0))`` with ``k`` reduced to the zone."""

    t: np.ndarray
    k: np.ndarray
    r: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(x), float(y)) for t, (x, y) in zip(self.t, self.r)]


def semiclassical_trajectory(
    J: HoppingSet,
    k0: Sequence[float] | np.ndarray,
    F: ForceSpec | Sequence[float] | np.ndarray,
    t_end: float,
    dt_sample: float,
) -> SemiclassicalTrajectory:
    if dt_sample <= 0:
        raise ValueError("dt_sample must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = int(math.floor(t_end / dt_sample * (1 + 1e-12))) + 1
    t = np.arange(n) * dt_sample
    k0 = np.asarray(k0, dtype=float)
    k = canonicalize_k(k0 + t[:, None] * _force_vector(F))
    return SemiclassicalTrajectory(t=t, k=k, r=closed_form_displacement(J, k0, F, t))
