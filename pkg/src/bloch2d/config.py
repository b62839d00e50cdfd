"""Line-based run configuration.

Every non-blank, non-comment line reads ``section.key = value``. Lists are
whitespace separated; several force cases are separated by ``;``::

    potential.V0 = -1.5
    packet.sigma = 20
    force.F = 0.5 -0.5 ; 0.7 -0.7 ; 0.4 -0.8

Forces are in units of ``J1`` and times (``t_end``, ``dt``, ``sample_dt``) in
units of ``1/J1``, where ``J1`` is the largest ``|J_m|`` of the active table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

from bloch2d.lattice import HoppingSet, Offset


class ConfigError(ValueError):
    """Malformed or out-of-range configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class PotentialSection:
    V0: float = -1.5
    N_c: int = 7
    M: int = 32


@dataclass(frozen=True)
class HoppingsSection:
    file: Path | None = None
    table: tuple[tuple[Offset, float], ...] = ()


@dataclass(frozen=True)
class PacketSection:
    # None: smallest odd L >= 121 that keeps the packet off the edges
    L: int | None = None
    sigma: float = 20.0
    k0: tuple[float, float] = (0.05, 0.03)


@dataclass(frozen=True)
class ForceCase:
    F: tuple[float, float]
    qr: tuple[int, int] | None = None


@dataclass(frozen=True)
class ForceSection:
    cases: tuple[ForceCase, ...] = (ForceCase((0.5, -0.5), (1, -1)),)
    q_max: int = 12


@dataclass(frozen=True)
class EvolutionSection:
    t_end: float = 200.0
    dt: float | None = None
    stride: int | None = None
    sample_dt: float = 0.5
    boundary_band: int = 3
    boundary_tol: float = 1e-4
    norm_tol: float = 1e-6


@dataclass(frozen=True)
class OutputsSection:
    directory: Path = Path("out")
    plot: bool = True


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSection | None = field(default_factory=PotentialSection)
    hoppings: HoppingsSection | None = None
    packet: PacketSection = field(default_factory=PacketSection)
    force: ForceSection = field(default_factory=ForceSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)

    def provenance(self) -> list[str]:
        """``key = value`` lines that reproduce this configuration."""
        out = []
        if self.potential is not None:
            for f in fields(self.potential):
                out.append(f"potential.{f.name} = {_show(getattr(self.potential, f.name))}")
        if self.hoppings is not None:
            if self.hoppings.file is not None:
                out.append(f"hoppings.file = {self.hoppings.file}")
            if self.hoppings.table:
                rows = " ; ".join(f"{m1} {m2} {v!r}" for (m1, m2), v in self.hoppings.table)
                out.append(f"hoppings.table = {rows}")
        p = self.packet
        out.append(f"packet.L = {'auto' if p.L is None else p.L}")
        out.append(f"packet.sigma = {p.sigma!r}")
        out.append(f"packet.k0 = {_show(p.k0)}")
        out.append("force.F = " + " ; ".join(_show(c.F) for c in self.force.cases))
        if any(c.qr is not None for c in self.force.cases):
            out.append("force.qr = " + " ; ".join(
                "auto" if c.qr is None else _show(c.qr) for c in self.force.cases))
        out.append(f"force.q_max = {self.force.q_max}")
        for f in fields(self.evolution):
            value = getattr(self.evolution, f.name)
            out.append(f"evolution.{f.name} = {'auto' if value is None else _show(value)}")
        out.append(f"outputs.directory = {self.outputs.directory}")
        out.append(f"outputs.plot = {'true' if self.outputs.plot else 'false'}")
        return out


def _show(value: object) -> str:
    if isinstance(value, tuple):
        return " ".join(_show(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# parsing helpers: each takes the raw value string and raises ValueError


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _int(text: str) -> int:
    return int(text)


def _optional(parse: Callable[[str], object]) -> Callable[[str], object]:
    def inner(text: str) -> object:
        return None if text.lower() == "auto" else parse(text)
    return inner


def _pair(parse: Callable[[str], object]) -> Callable[[str], tuple]:
    def inner(text: str) -> tuple:
        parts = text.split()
        if len(parts) != 2:
            raise ValueError(f"expected two values, got {len(parts)}")
        return tuple(parse(p) for p in parts)
    return inner


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _cases(parse: Callable[[str], object]) -> Callable[[str], tuple]:
    def inner(text: str) -> tuple:
        return tuple(parse(part.strip()) for part in text.split(";"))
    return inner


def _table(text: str) -> tuple[tuple[Offset, float], ...]:
    rows = []
    for part in text.split(";"):
        cols = part.split()
        if len(cols) != 3:
            raise ValueError(f"table rows need 'm1 m2 J', got {part.strip()!r}")
        rows.append(((int(cols[0]), int(cols[1])), _float(cols[2])))
    return tuple(rows)


_KEYS: dict[str, Callable[[str], object]] = {
    "potential.V0": _float,
    "potential.N_c": _int,
    "potential.M": _int,
    "hoppings.file": Path,
    "hoppings.table": _table,
    "packet.L": _optional(_int),
    "packet.sigma": _float,
    "packet.k0": _pair(_float),
    "force.F": _cases(_pair(_float)),
    "force.qr": _cases(_optional(_pair(_int))),
    "force.q_max": _int,
    "evolution.t_end": _float,
    "evolution.dt": _optional(_float),
    "evolution.stride": _optional(_int),
    "evolution.sample_dt": _float,
    "evolution.boundary_band": _int,
    "evolution.boundary_tol": _float,
    "evolution.norm_tol": _float,
    "outputs.directory": Path,
    "outputs.plot": _bool,
}

KNOWN_KEYS = tuple(_KEYS)


def _check_ranges(values: dict[str, object]) -> None:
    def need(key: str, ok: bool, what: str) -> None:
        if key in values and not ok:
            raise ConfigError(f"{key} {what}, got {values[key]!r}", key=key)

    get = values.get
    need("potential.V0", get("potential.V0", -1.0) < 0, "must be negative (V0 = 0 has no tight-binding limit)")
    need("potential.N_c", get("potential.N_c", 3) >= 3, "must be >= 3")
    need("potential.M", get("potential.M", 8) >= 8, "must be >= 8")
    L = get("packet.L")
    need("packet.L", L is None or (L >= 3 and L % 2 == 1), "must be odd and >= 3")
    need("packet.sigma", get("packet.sigma", 1.0) > 0, "must be positive")
    need("force.q_max", get("force.q_max", 1) >= 1, "must be >= 1")
    need("evolution.t_end", get("evolution.t_end", 1.0) > 0, "must be positive")
    dt = get("evolution.dt")
    need("evolution.dt", dt is None or dt > 0, "must be positive")
    stride = get("evolution.stride")
    need("evolution.stride", stride is None or stride >= 1, "must be >= 1")
    need("evolution.sample_dt", get("evolution.sample_dt", 1.0) > 0, "must be positive")
    need("evolution.boundary_band", get("evolution.boundary_band", 1) >= 1, "must be >= 1")
    need("evolution.boundary_tol", get("evolution.boundary_tol", 1.0) > 0, "must be positive")
    need("evolution.norm_tol", get("evolution.norm_tol", 1.0) > 0, "must be positive")
    for qr in get("force.qr", ()) or ():
        if qr is not None and math.gcd(*qr) != 1:
            raise ConfigError(f"force.qr entries must be coprime, got {qr}", key="force.qr")


def parse_config(text: str, base_dir: Path | str | None = None) -> RunConfig:
    """Parse ``section.key = value`` lines into a :class:`RunConfig`.

    Relative ``hoppings.file`` paths resolve against ``base_dir``; the file
    must exist. Later lines override earlier ones.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if not value:
            raise ConfigError(f"{key} has no value", lineno, key)
        try:
            values[key] = _KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno, key) from exc
        lines[key] = lineno
    try:
        _check_ranges(values)
    except ConfigError as exc:
        raise ConfigError(str(exc), lines.get(exc.key), exc.key) from None
    return _assemble(values, lines, Path(base_dir) if base_dir is not None else None)


def _section(cls: type, prefix: str, values: dict[str, object]) -> object:
    kwargs = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}
    return cls(**kwargs)


def _assemble(values: dict[str, object], lines: dict[str, int], base: Path | None) -> RunConfig:
    has_potential = any(k.startswith("potential.") for k in values)
    has_hoppings = any(k.startswith("hoppings.") for k in values)
    if has_potential and has_hoppings:
        key = min((k for k in values if k.startswith("hoppings.")), key=lines.__getitem__)
        raise ConfigError("give either potential.* or hoppings.*, not both", lines[key], key)
    if "hoppings.file" in values and "hoppings.table" in values:
        raise ConfigError("give either hoppings.file or hoppings.table, not both",
                          lines["hoppings.table"], "hoppings.table")

    hoppings = None
    if has_hoppings:
        path = values.get("hoppings.file")
        if path is not None:
            path = Path(path)
            if base is not None and not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise ConfigError(f"hoppings.file {str(path)!r} does not exist",
                                  lines["hoppings.file"], "hoppings.file")
        hoppings = HoppingsSection(file=path, table=values.get("hoppings.table", ()))

    force_values = dict(values)
    Fs = force_values.pop("force.F", None)
    qrs = force_values.pop("force.qr", None)
    force = ForceSection()
    if Fs is not None or qrs is not None:
        if Fs is None:
            raise ConfigError("force.qr given without force.F", lines["force.qr"], "force.qr")
        if qrs is None:
            qrs = (None,) * len(Fs)
        if len(qrs) != len(Fs):
            raise ConfigError(f"force.qr lists {len(qrs)} cases but force.F lists {len(Fs)}",
                              lines["force.qr"], "force.qr")
        force = ForceSection(cases=tuple(ForceCase(F, qr) for F, qr in zip(Fs, qrs)))
    if "force.q_max" in values:
        force = replace(force, q_max=values["force.q_max"])

    return RunConfig(
        potential=None if has_hoppings else _section(PotentialSection, "potential", values),
        hoppings=hoppings,
        packet=_section(PacketSection, "packet", values),
        force=force,
        evolution=_section(EvolutionSection, "evolution", values),
        outputs=_section(OutputsSection, "outputs", values),
    )


def inline_hoppings(section: HoppingsSection) -> HoppingSet:
    return HoppingSet(dict(section.table))
