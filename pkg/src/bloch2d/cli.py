"""Command-line pipeline: bands, hoppings, drift, semiclassical, evolve, compare.

Exit codes: 0 success, 2 configuration error, 3 numerical-validity abort.
The output directory comes from ``--output-dir``, else ``$BLOCH2D_OUTPUT_DIR``,
else ``outputs.directory`` in the config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from bloch2d import __version__
from bloch2d import evolution as ev
from bloch2d.bands import (
    BandSolverError,
    OpticalPotentialSpec,
    PlaneWaveBasis,
    extract_hoppings,
    fourier_coefficients,
    lowest_band,
)
from bloch2d.config import (
    ConfigError,
    ForceCase,
    RunConfig,
    inline_hoppings,
    parse_config,
)
from bloch2d.lattice import ForceSpec, HoppingSet, read_hopping_table, write_hopping_table
from bloch2d.plotting import Series, line_plot_svg
from bloch2d.semiclassics import (
    DriftResult,
    closed_form_displacement,
    drift_vector,
    rationalize_force,
    semiclassical_trajectory,
)

log = logging.getLogger("bloch2d")

OUTPUT_ENV = "BLOCH2D_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
# Offsets shown in the ln|J| summary grid.
LOG_GRID_REACH = 3


@dataclass
class Model:
    """Active hopping table and what produced it."""

    J: HoppingSet
    J1: float
    table_text: str
    source: list[str]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.table_text.encode()).hexdigest()


@dataclass
class Case:
    index: int
    spec: ForceCase
    unit: ForceSpec  # in J1 per site
    force: ForceSpec  # in E_r per site

    @property
    def tag(self) -> str:
        return f"case{self.index}"

    def describe(self) -> str:
        F1, F2 = self.spec.F
        if self.unit.direction is None:
            return f"F/J1 = ({F1!r}, {F2!r}) no direction"
        q, r = self.unit.direction
        return (f"F/J1 = ({F1!r}, {F2!r}) direction (q, r) = ({q}, {r}) "
                f"residual = {self.unit.residual!r}")


def _table_text(J: HoppingSet, header: dict[str, object] | None = None) -> str:
    buf = io.StringIO()
    write_hopping_table(J, buf, header)
    return buf.getvalue()


def load_model(cfg: RunConfig) -> Model:
    if cfg.hoppings is not None:
        if cfg.hoppings.file is not None:
            try:
                J = read_hopping_table(cfg.hoppings.file)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"hoppings.file: {exc}", key="hoppings.file") from exc
            source = [f"hoppings.file = {cfg.hoppings.file}"]
        else:
            try:
                J = inline_hoppings(cfg.hoppings)
            except ValueError as exc:
                raise ConfigError(f"hoppings.table: {exc}", key="hoppings.table") from exc
            source = ["hoppings.table (inline)"]
    else:
        p = cfg.potential
        band = lowest_band(OpticalPotentialSpec(p.V0), PlaneWaveBasis(p.N_c), p.M)
        J = extract_hoppings(band).hoppings
        source = [f"V0 = {p.V0!r}", f"N_c = {p.N_c}", f"M = {p.M}"]
    if len(J) == 0:
        raise ConfigError("hopping table is empty")
    return Model(J=J, J1=ev.reference_hopping(J), table_text=_table_text(J), source=source)


def build_cases(cfg: RunConfig, model: Model) -> list[Case]:
    cases = []
    for i, spec in enumerate(cfg.force.cases, start=1):
        if spec.qr is not None:
            try:
                unit = ForceSpec(spec.F[0], spec.F[1], spec.qr)
            except ValueError as exc:
                raise ConfigError(f"force case {i}: {exc}", key="force.qr") from exc
        elif spec.F == (0.0, 0.0):
            unit = ForceSpec(0.0, 0.0)
        else:
            unit = rationalize_force(spec.F, cfg.force.q_max)
        force = ForceSpec(unit.F1 * model.J1, unit.F2 * model.J1, unit.direction, unit.residual)
        cases.append(Case(i, spec, unit, force))
    return cases


def output_dir(cfg: RunConfig, override: str | None) -> Path:
    if override:
        path = Path(override)
    elif os.environ.get(OUTPUT_ENV):
        path = Path(os.environ[OUTPUT_ENV])
    else:
        path = cfg.outputs.directory
    path.mkdir(parents=True, exist_ok=True)
    return path


def _provenance(command: str, cfg: RunConfig, model: Model | None, extra: Sequence[str] = ()) -> list[str]:
    lines = [f"bloch2d {__version__} {command}"]
    lines += cfg.provenance()
    if model is not None:
        lines.append(f"hoppings_sha256 = {model.sha256}")
        lines.append(f"J1_Er = {model.J1!r}")
    lines += list(extra)
    return lines


def _write_csv(path: Path, comments: Sequence[str], header: Sequence[str],
               rows: Sequence[Sequence[object]], footer: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    for line in footer:
        buf.write(f"# {line}\n")
    path.write_text(buf.getvalue())


def _drift(case: Case, model: Model, k0: Sequence[float]) -> DriftResult | None:
    if case.force.direction is None:
        return None
    return drift_vector(model.J, k0, case.force.commensurate())


# commands


def cmd_bands(cfg: RunConfig, out: Path) -> int:
    if cfg.potential is None:
        raise ConfigError("bands needs potential.* settings, not a hopping table")
    p = cfg.potential
    band = lowest_band(OpticalPotentialSpec(p.V0), PlaneWaveBasis(p.N_c), p.M)
    thetas = band.thetas().reshape(-1, 2)
    rows = [(t[0], t[1], e) for t, e in zip(thetas, band.values.ravel())]
    path = out / "bands.csv"
    _write_csv(path, _provenance("bands", cfg, None), ("theta1", "theta2", "E"), rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_hoppings(cfg: RunConfig, out: Path) -> int:
    if cfg.potential is None:
        raise ConfigError("hoppings needs potential.* settings, not a hopping table")
    p = cfg.potential
    band = lowest_band(OpticalPotentialSpec(p.V0), PlaneWaveBasis(p.N_c), p.M)
    fit = extract_hoppings(band)
    header = {"bloch2d": __version__, "V0": repr(p.V0), "N_c": p.N_c, "M": p.M,
              "J0": repr(fit.constant), "max_imag": repr(fit.max_imag)}
    table = out / "hoppings.txt"
    table.write_text(_table_text(fit.hoppings, header))

    reach = LOG_GRID_REACH
    offsets = [(m1, m2) for m1 in range(-reach, reach + 1) for m2 in range(-reach, reach + 1)
               if (m1, m2) != (0, 0)]
    re, _ = fourier_coefficients(band, offsets)
    rows = [(m1, m2, v, math.log(abs(v)) if v != 0 else "") for (m1, m2), v in zip(offsets, re)]
    grid = out / "hoppings_log.csv"
    _write_csv(grid, _provenance("hoppings", cfg, None), ("m1", "m2", "J", "ln_abs_J"), rows)
    for i, (shell, value) in enumerate(zip(fit.shells, fit.shell_values()), start=1):
        print(f"J{i} = {value:.6f} E_r  offsets {list(shell)} and negatives")
    print(f"wrote {table}")
    print(f"wrote {grid}")
    return EXIT_OK


def cmd_drift(cfg: RunConfig, out: Path) -> int:
    model = load_model(cfg)
    k0 = cfg.packet.k0
    lines = []
    for case in build_cases(cfg, model):
        res = _drift(case, model, k0)
        lines.append(f"[{case.tag}] {case.describe()}")
        if res is None:
            lines.append("  zero force: no Bloch period")
            continue
        D = [float(x) for x in res.displacement]
        v = [float(x) for x in res.velocity]
        lines.append(f"  T = {res.period!r} 1/E_r = {res.period * model.J1!r} 1/J1")
        lines.append(f"  D_T = ({D[0]!r}, {D[1]!r}) sites")
        lines.append(f"  velocity = ({v[0]!r}, {v[1]!r}) sites*E_r"
                     f" = ({v[0] / model.J1!r}, {v[1] / model.J1!r}) sites*J1")
        lines.append(f"  contributing offsets = {res.contributing}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    path = out / "drift.txt"
    path.write_text("".join(f"# {c}\n" for c in _provenance("drift", cfg, model)) + text)
    return EXIT_OK


def cmd_semiclassical(cfg: RunConfig, out: Path) -> int:
    model = load_model(cfg)
    k0 = cfg.packet.k0
    J1 = model.J1
    for case in build_cases(cfg, model):
        traj = semiclassical_trajectory(model.J, k0, case.force, cfg.evolution.t_end / J1,
                                        cfg.evolution.sample_dt / J1)
        rows = [(t, t * J1, x, y) for t, x, y in traj.rows()]
        path = out / f"semiclassical_{case.tag}.csv"
        _write_csv(path, _provenance("semiclassical", cfg, model, [case.describe()]),
                   ("t_Er", "t_J1", "x", "y"), rows)
        print(f"wrote {path}")
    return EXIT_OK


@dataclass
class EvolveResult:
    record: ev.TrajectoryRecord
    L: int
    aborted: str | None


def _evolve_case(cfg: RunConfig, model: Model, case: Case) -> EvolveResult:
    p, e = cfg.packet, cfg.evolution
    J1 = model.J1
    t_end = e.t_end / J1
    L = p.L
    if L is None:
        L = ev.recommended_grid(model.J, p.k0, case.force.vector, p.sigma, t_end,
                                boundary_band=e.boundary_band)
    try:
        psi0 = ev.gaussian_packet(L, p.sigma, p.k0)
    except ValueError as exc:
        raise ConfigError(f"packet: {exc}", key="packet.sigma") from exc
    evo_cfg = ev.EvolutionConfig(
        t_end=t_end,
        dt=None if e.dt is None else e.dt / J1,
        sample_stride=e.stride,
        sample_dt=e.sample_dt / J1,
        boundary_band=e.boundary_band,
        boundary_tol=e.boundary_tol,
        norm_tol=e.norm_tol,
    )
    try:
        record, _ = ev.rk4_evolve(psi0, model.J, case.force.vector, evo_cfg)
        return EvolveResult(record, L, None)
    except ev.EvolutionError as exc:
        return EvolveResult(exc.record or ev.TrajectoryRecord(), L,
                            f"{type(exc).__name__}: {exc} (last valid t = {exc.t_last!r} 1/E_r)")


def cmd_evolve(cfg: RunConfig, out: Path) -> int:
    model = load_model(cfg)
    J1 = model.J1
    status = EXIT_OK
    for case in build_cases(cfg, model):
        res = _evolve_case(cfg, model, case)
        rec = res.record
        rows = [(t, t * J1, c1, c2, n, en, b) for t, c1, c2, n, en, b in rec.rows()]
        extra = [case.describe(), f"L = {res.L}", f"dt_Er = {rec.dt!r}"]
        footer = [f"aborted = {res.aborted}"] if res.aborted else ["status = ok"]
        path = out / f"evolve_{case.tag}.csv"
        _write_csv(path, _provenance("evolve", cfg, model, extra),
                   ("t_Er", "t_J1", "com1", "com2", "norm", "energy", "boundary_mass"),
                   rows, footer)
        print(f"wrote {path}" + (f" ({res.aborted})" if res.aborted else ""))
        if res.aborted:
            status = EXIT_NUMERIC
    return status


def compare_rows(model: Model, case: Case, k0: Sequence[float], rec: ev.TrajectoryRecord
                 ) -> list[tuple[float, ...]]:
    t = rec.times
    sc = closed_form_displacement(model.J, k0, case.force.vector, t)
    res = _drift(case, model, k0)
    v = res.velocity if res is not None else np.zeros(2)
    rows = []
    for i, (ti, (c1, c2)) in enumerate(zip(t, rec.com)):
        rows.append((float(ti), float(ti * model.J1), c1, c2, float(sc[i, 0]), float(sc[i, 1]),
                     float(ti * v[0]), float(ti * v[1])))
    return rows


COMPARE_HEADER = ("t_Er", "t_J1", "exact_com1", "exact_com2", "semiclassical_com1",
                  "semiclassical_com2", "drift_line1", "drift_line2")


def compare_svg(rows: Sequence[Sequence[float]], title: str) -> str:
    """Trajectory plot ``<m1>`` versus ``<m2>`` from the compare CSV rows."""
    cols = list(zip(*rows)) if rows else [()] * len(COMPARE_HEADER)
    return line_plot_svg(
        [
            Series("exact (RK4)", cols[2], cols[3], "#1f77b4"),
            Series("semiclassical", cols[4], cols[5], "#d62728", "6 3"),
            Series("drift line", cols[6], cols[7], "#2ca02c", "2 3"),
        ],
        title, "<m1>", "<m2>",
    )


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    model = load_model(cfg)
    k0 = cfg.packet.k0
    status = EXIT_OK
    for case in build_cases(cfg, model):
        res = _evolve_case(cfg, model, case)
        rows = compare_rows(model, case, k0, res.record)
        drift = _drift(case, model, k0)
        extra = [case.describe(), f"L = {res.L}", f"dt_Er = {res.record.dt!r}"]
        if drift is not None:
            extra.append(f"drift_velocity_Er = {float(drift.velocity[0])!r} {float(drift.velocity[1])!r}")
        footer = [f"aborted = {res.aborted}"] if res.aborted else ["status = ok"]
        path = out / f"compare_{case.tag}.csv"
        _write_csv(path, _provenance("compare", cfg, model, extra), COMPARE_HEADER, rows, footer)
        print(f"wrote {path}" + (f" ({res.aborted})" if res.aborted else ""))
        if cfg.outputs.plot:
            F1, F2 = case.spec.F
            svg = out / f"compare_{case.tag}.svg"
            svg.write_text(compare_svg(rows, f"{case.tag}: F/J1 = ({F1:g}, {F2:g})"))
            print(f"wrote {svg}")
        if res.aborted:
            status = EXIT_NUMERIC
    return status


COMMANDS = {
    "bands": (cmd_bands, "lowest band on the M x M grid -> bands.csv"),
    "hoppings": (cmd_hoppings, "hopping table and ln|J| grid -> hoppings.txt, hoppings_log.csv"),
    "drift": (cmd_drift, "Bloch period, drift per period and velocity for each force case"),
    "semiclassical": (cmd_semiclassical, "closed-form centre trajectory -> semiclassical_caseN.csv"),
    "evolve": (cmd_evolve, "RK4 wave-packet run -> evolve_caseN.csv"),
    "compare": (cmd_compare, "RK4 vs semiclassics vs drift line -> compare_caseN.csv/.svg"),
}

CONFIG_HELP = """configuration keys (file lines 'section.key = value', or --set):
  potential.V0 = -1.5        lattice depth in E_r (negative)
  potential.N_c = 7          plane-wave cutoff
  potential.M = 32           band grid size
  hoppings.file = PATH       'm1 m2 J' table (instead of potential.*)
  hoppings.table = 1 0 0.07 ; -1 0 0.07   inline table
  packet.L = auto            odd grid side; auto = smallest L >= 121 clearing the edges
  packet.sigma = 20.0        Gaussian width in sites
  packet.k0 = 0.05 0.03      initial wave vector
  force.F = 0.5 -0.5         force in units of J1; several cases separated by ';'
  force.qr = 1 -1            lattice direction per case (auto = rationalize)
  force.q_max = 12           bound for rationalizing undeclared directions
  evolution.t_end = 200.0    run length in 1/J1
  evolution.dt = auto        RK4 step in 1/J1
  evolution.stride = auto    steps per recorded row
  evolution.sample_dt = 0.5  row spacing in 1/J1 when stride is auto
  evolution.boundary_band = 3
  evolution.boundary_tol = 1e-4
  evolution.norm_tol = 1e-6
  outputs.directory = out    (overridden by $BLOCH2D_OUTPUT_DIR and --output-dir)
  outputs.plot = true        write SVG plots
"""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--output-dir", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    packet = common.add_argument_group("packet and force shortcuts")
    packet.add_argument("--L", help="grid side (odd) or 'auto'")
    packet.add_argument("--sigma", help="packet width in sites")
    packet.add_argument("--k0", nargs=2, metavar=("K1", "K2"), help="initial wave vector")
    packet.add_argument("--F", nargs=2, metavar=("F1", "F2"), help="force in units of J1")
    packet.add_argument("--qr", nargs=2, metavar=("Q", "R"), help="force lattice direction")
    packet.add_argument("--dt", help="RK4 step in 1/J1")
    packet.add_argument("--t-end", help="run length in 1/J1")

    parser = argparse.ArgumentParser(
        prog="bloch2d",
        description="Directed transport from 2D Bloch oscillations in a triangular optical lattice.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"bloch2d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _override_lines(args: argparse.Namespace) -> list[str]:
    lines = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        lines.append(item)
    shortcuts = {
        "L": "packet.L", "sigma": "packet.sigma", "k0": "packet.k0", "F": "force.F",
        "qr": "force.qr", "dt": "evolution.dt", "t_end": "evolution.t_end",
    }
    for attr, key in shortcuts.items():
        value = getattr(args, attr)
        if value is not None:
            lines.append(f"{key} = {' '.join(value) if isinstance(value, list) else value}")
    return lines


def load_config(args: argparse.Namespace) -> RunConfig:
    text, base = "", None
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = path.parent
    overrides = _override_lines(args)
    file_lines = text.splitlines()
    # overrides come last so they win; their errors name the override, not a line
    try:
        return parse_config("\n".join(file_lines + overrides), base)
    except ConfigError as exc:
        if exc.line is not None and exc.line > len(file_lines):
            message = str(exc).split(": ", 1)[1]
            raise ConfigError(f"override {overrides[exc.line - len(file_lines) - 1]!r}: {message}",
                              None, exc.key) from None
        raise


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args)
        out = output_dir(cfg, args.output_dir)
        return func(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BandSolverError, ev.EvolutionError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
