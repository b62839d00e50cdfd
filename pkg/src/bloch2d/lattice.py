"""Single-band tight-binding model on the integer-labelled 2D Bravais lattice.

Sites are integer pairs ``m = (m1, m2)``; the lattice constant is one in both
directions, so wave vectors live in the zone ``[-pi, pi) x [-pi, pi)``. Any
real Bravais lattice is reached by an affine map that never changes the
quantities computed here.

With real, symmetric hoppings ``J_m = J_{-m}`` the band is

    E(k) = -sum_m J_m cos(k . m),   grad E(k) = sum_m m J_m sin(k . m).
"""

from __future__ import annotations

import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

Offset = tuple[int, int]

# Shells of the triangular lattice written in the (a1, a2) basis with a1, a2
# at 120 degrees. Only one member of each +/- pair is listed.
TRIANGULAR_SHELLS: tuple[tuple[Offset, ...], ...] = (
    ((1, 0), (0, 1), (1, 1)),
    ((2, 1), (1, 2), (-1, 1)),
    ((2, 0), (0, 2), (2, 2)),
)

# Reference three-shell values at V0 = -1.5 E_r, to three significant figures.
REFERENCE_HOPPINGS: tuple[float, float, float] = (0.0765, -0.0149, -0.0078)


def _as_offset(m: Sequence[int]) -> Offset:
    m1, m2 = m
    if int(m1) != m1 or int(m2) != m2:
        raise ValueError(f"hopping offset must be integer, got {m!r}")
    return (int(m1), int(m2))


@dataclass(frozen=True)
class HoppingSet:
    """Hopping amplitudes ``J_m`` keyed by integer offset.

    The on-site term ``(0, 0)`` is not a hopping and is rejected; it only
    shifts the band by a constant. Both ``m`` and ``-m`` are stored
    explicitly. Their equality is checked by :func:`validate_hopping_set`
    rather than forced here, so malformed tables can still be inspected.
    """

    entries: Mapping[Offset, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[Offset, float] = {}
        for m, value in self.entries.items():
            key = _as_offset(m)
            if key == (0, 0):
                raise ValueError("offset (0, 0) is the band constant, not a hopping")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite hopping at {key}: {value}")
            clean[key] = value
        # deterministic order: everything downstream iterates this
        ordered = dict(sorted(clean.items()))
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(
            self, "_offsets", np.array(list(ordered), dtype=np.int64).reshape(-1, 2)
        )
        object.__setattr__(self, "_values", np.array(list(ordered.values()), dtype=float))

    @classmethod
    def from_shells(
        cls, shells: Iterable[Iterable[Offset]], values: Iterable[float]
    ) -> HoppingSet:
        """One value per shell, applied to every listed offset and its negative."""
        entries: dict[Offset, float] = {}
        for shell, value in zip(shells, values, strict=True):
            for m in shell:
                m1, m2 = _as_offset(m)
                entries[(m1, m2)] = float(value)
                entries[(-m1, -m2)] = float(value)
        return cls(entries)

    @property
    def offsets(self) -> np.ndarray:
        """(n, 2) integer array of offsets, in sorted order."""
        return self._offsets  # type: ignore[attr-defined]

    @property
    def values(self) -> np.ndarray:
        return self._values  # type: ignore[attr-defined]

    @property
    def m_max(self) -> int:
        if not self.entries:
            return 0
        return int(np.abs(self.offsets).max())

    def abs_sum(self) -> float:
        """``sum_m |J_m|``, an upper bound on ``|E(k)|``."""
        return float(np.abs(self.values).sum())

    def scaled(self, factor: float) -> HoppingSet:
        return HoppingSet({m: factor * v for m, v in self.entries.items()})

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, m: Offset) -> float:
        return self.entries[_as_offset(m)]

    def get(self, m: Offset, default: float = 0.0) -> float:
        return self.entries.get(_as_offset(m), default)


def triangular_hoppings(
    j1: float = REFERENCE_HOPPINGS[0],
    j2: float = REFERENCE_HOPPINGS[1],
    j3: float = REFERENCE_HOPPINGS[2],
) -> HoppingSet:
    """Three-shell triangular model; defaults are the V0 = -1.5 E_r values."""
    return HoppingSet.from_shells(TRIANGULAR_SHELLS, (j1, j2, j3))


def canonicalize_k(k: np.ndarray | Sequence[float]) -> np.ndarray:
    """Map wave-vector components into ``[-pi, pi)``.

    Values already inside the interval are returned untouched, which makes
    the map idempotent even where ``k + pi`` would round up to ``2 pi``.
    """
    k = np.asarray(k, dtype=float)
    two_pi = 2.0 * np.pi
    wrapped = np.remainder(k + np.pi, two_pi) - np.pi
    wrapped = np.where(wrapped >= np.pi, -np.pi, wrapped)
    inside = (k >= -np.pi) & (k < np.pi)
    return np.where(inside, k, wrapped)


def _phases(J: HoppingSet, k: np.ndarray) -> np.ndarray:
    return np.asarray(k, dtype=float) @ J.offsets.T.astype(float)


def dispersion_energy(J: HoppingSet, k: np.ndarray | Sequence[float]) -> np.ndarray | float:
    """Band energy ``E(k) = -sum_m J_m cos(k . m)``.

    ``k`` may carry leading batch dimensions, its last axis has length 2.
    """
    k = np.asarray(k, dtype=float)
    if len(J) == 0:
        out = np.zeros(k.shape[:-1])
    else:
        out = -(np.cos(_phases(J, k)) @ J.values)
    return float(out) if out.ndim == 0 else out


def group_velocity(J: HoppingSet, k: np.ndarray | Sequence[float]) -> np.ndarray:
    """Gradient of the band, ``sum_m m J_m sin(k . m)``, shape ``k.shape``."""
    k = np.asarray(k, dtype=float)
    if len(J) == 0:
        return np.zeros_like(k)
    weights = np.sin(_phases(J, k)) * J.values
    return weights @ J.offsets.astype(float)


@dataclass
class HoppingReport:
    """Outcome of :func:`validate_hopping_set`; never raised, only returned."""

    symmetry_violations: list[tuple[Offset, float, float | None]] = field(default_factory=list)
    shell_spread: dict[int, float] = field(default_factory=dict)
    missing: list[Offset] = field(default_factory=list)
    tol: float = 1e-12

    @property
    def ok(self) -> bool:
        return (
            not self.symmetry_violations
            and not self.missing
            and all(s <= self.tol for s in self.shell_spread.values())
        )

    def lines(self) -> list[str]:
        out = []
        for m, jm, jneg in self.symmetry_violations:
            neg = "missing" if jneg is None else repr(jneg)
            out.append(f"asymmetric hopping at {m}: J_m={jm!r}, J_-m={neg}")
        for m in self.missing:
            out.append(f"shell offset {m} absent from table")
        for s, spread in self.shell_spread.items():
            flag = "" if spread <= self.tol else "  <-- exceeds tolerance"
            out.append(f"shell {s + 1}: spread {spread:.3e}{flag}")
        return out


def validate_hopping_set(
    J: HoppingSet,
    tol: float = 1e-12,
    shells: Sequence[Sequence[Offset]] | None = None,
) -> HoppingReport:
    """Check ``J_m = J_{-m}`` and, when shells are given, intra-shell equality.

    ``shell_spread[i]`` is max minus min of ``J`` over shell ``i`` including
    negated offsets. The spread is compared against ``tol`` as well.
    """
    report = HoppingReport(tol=tol)
    for (m1, m2), jm in J.entries.items():
        neg = J.entries.get((-m1, -m2))
        if neg is None or abs(neg - jm) > tol:
            report.symmetry_violations.append(((m1, m2), jm, neg))
    if shells is not None:
        for s, shell in enumerate(shells):
            vals = []
            for m in shell:
                m1, m2 = _as_offset(m)
                for key in ((m1, m2), (-m1, -m2)):
                    if key in J.entries:
                        vals.append(J.entries[key])
                    else:
                        report.missing.append(key)
            report.shell_spread[s] = (max(vals) - min(vals)) if vals else 0.0
    return report


def write_hopping_table(
    J: HoppingSet,
    dest: str | Path | TextIO,
    header: Mapping[str, object] | Sequence[str] | None = None,
) -> None:
    """Write ``m1 m2 J`` rows at full precision, ``#`` header lines first."""
    buf = io.StringIO()
    if header:
        items = header.items() if isinstance(header, Mapping) else ((h, None) for h in header)
        for key, value in items:
            buf.write(f"# {key}\n" if value is None else f"# {key} = {value}\n")
    buf.write("# m1 m2 J\n")
    for (m1, m2), value in J.entries.items():
        buf.write(f"{m1} {m2} {value!r}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def read_hopping_table(src: str | Path | TextIO) -> HoppingSet:
    if isinstance(src, (str, Path)):
        text = Path(src).read_text()
    else:
        text = src.read()
    entries: dict[Offset, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'm1 m2 J', got {raw!r}")
        try:
            m = (int(parts[0]), int(parts[1]))
            value = float(parts[2])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if m in entries:
            raise ValueError(f"line {lineno}: duplicate offset {m}")
        entries[m] = value
    return HoppingSet(entries)


@dataclass(frozen=True)
class ForceSpec:
    """Static force ``(F1, F2)`` with an optional coprime direction ``(q, r)``.

    ``residual`` is ``|F1 r - F2 q| / |F|`` as declared by whoever chose the
    direction (see :func:`bloch2d.semiclassics.rationalize_force`); a spec
    with nonzero residual is only approximately commensurate. The stored
    direction is flipped if needed so that it points along ``F``.
    """

    F1: float
    F2: float
    direction: Offset | None = None
    residual: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.F1) and math.isfinite(self.F2)):
            raise ValueError("force components must be finite")
        if self.direction is None:
            return
        q, r = _as_offset(self.direction)
        if (q, r) == (0, 0):
            raise ValueError("direction (0, 0) is not a lattice direction")
        if math.gcd(abs(q), abs(r)) != 1:
            raise ValueError(f"direction {(q, r)} is not coprime")
        if self.magnitude == 0.0:
            raise ValueError("a zero force has no direction")
        if self.F1 * q + self.F2 * r < 0:
            q, r = -q, -r
        object.__setattr__(self, "direction", (q, r))
        mismatch = self.mismatch()
        allowed = self.residual + 1e-12 * math.hypot(q, r)
        if mismatch > allowed:
            raise ValueError(
                f"force ({self.F1}, {self.F2}) is not along {(q, r)}: "
                f"|F1 r - F2 q|/|F| = {mismatch:.3e} exceeds {allowed:.3e}"
            )

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.F1, self.F2], dtype=float)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.F1, self.F2)

    def mismatch(self) -> float:
        """Actual ``|F1 r - F2 q| / |F|`` for the stored direction."""
        if self.direction is None:
            return math.inf
        q, r = self.direction
        return abs(self.F1 * r - self.F2 * q) / self.magnitude

    @property
    def is_commensurate(self) -> bool:
        if self.direction is None:
            return False
        return self.mismatch() <= 1e-12 * math.hypot(*self.direction)

    def commensurate(self) -> ForceSpec:
        """Projection of ``F`` onto its declared direction, exactly commensurate."""
        if self.direction is None:
            raise ValueError("no direction declared; rationalize the force first")
        if self.is_commensurate:
            return self
        q, r = self.direction
        norm2 = q * q + r * r
        scale = (self.F1 * q + self.F2 * r) / norm2
        return ForceSpec(scale * q, scale * r, (q, r))

    def scaled(self, factor: float) -> ForceSpec:
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return ForceSpec(self.F1 * factor, self.F2 * factor, self.direction, self.residual)
