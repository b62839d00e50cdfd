"""Shared fixtures: the solved V0 = -1.5 E_r band and the long wave-packet runs.

Long RK4 runs are expensive, so each (force case, sigma) pair is integrated
at most once per session and shared between modules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from bloch2d import evolution as ev
from bloch2d.bands import OpticalPotentialSpec, PlaneWaveBasis, extract_hoppings, lowest_band
from bloch2d.lattice import ForceSpec

K0 = (0.05, 0.03)
# force cases in units of J1 with their lattice directions
CASES = {
    "i": ((0.5, -0.5), (1, -1)),
    "ii": ((0.7, -0.7), (1, -1)),
    "iii": ((0.4, -0.8), (1, -2)),
}
T_END_J1 = 200.0
SAMPLE_DT_J1 = 0.1


@dataclass
class SolvedBand:
    band: object
    fit: object
    seconds: float

    @property
    def J(self):
        return self.fit.hoppings

    @property
    def J1(self) -> float:
        return self.fit.shell_values()[0]


@pytest.fixture(scope="session")
def solved():
    start = time.perf_counter()
    band = lowest_band(OpticalPotentialSpec(-1.5), PlaneWaveBasis(7), 32)
    fit = extract_hoppings(band)
    return SolvedBand(band, fit, time.perf_counter() - start)


def case_force(name: str, J1: float) -> ForceSpec:
    (f1, f2), qr = CASES[name]
    return ForceSpec(f1 * J1, f2 * J1, qr)


@dataclass
class LongRun:
    case: str
    sigma: float
    L: int
    force: ForceSpec
    record: ev.TrajectoryRecord
    seconds: float


class RunCache:
    def __init__(self, solved: SolvedBand):
        self.solved = solved
        self.runs: dict[tuple[str, float], LongRun] = {}

    def get(self, case: str, sigma: float = 20.0) -> LongRun:
        key = (case, sigma)
        if key not in self.runs:
            J, J1 = self.solved.J, self.solved.J1
            F = case_force(case, J1)
            t_end = T_END_J1 / J1
            L = ev.recommended_grid(J, K0, F, sigma, t_end)
            cfg = ev.EvolutionConfig(t_end=t_end, sample_dt=SAMPLE_DT_J1 / J1)
            start = time.perf_counter()
            record, _ = ev.rk4_evolve(ev.gaussian_packet(L, sigma, K0), J, F, cfg)
            self.runs[key] = LongRun(case, sigma, L, F, record, time.perf_counter() - start)
        return self.runs[key]


@pytest.fixture(scope="session")
def long_runs(solved) -> RunCache:
    return RunCache(solved)


# acceptance summary: one line per criterion, printed at the end of the session

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    missing = [n for n in range(1, 11) if n not in ACCEPTANCE]
    for number in missing:
        terminalreporter.write_line(f"criterion {number:2d}: NOT RUN")


def np_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
