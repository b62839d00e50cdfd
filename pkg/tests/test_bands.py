import numpy as np
import pytest

from bloch2d.bands import (
    A1,
    A2,
    B1,
    B2,
    KAPPA,
    SPACING,
    BandSample,
    BandSolverError,
    OpticalPotentialSpec,
    PlaneWaveBasis,
    bloch_matrix,
    extract_hoppings,
    lowest_band,
    point_group_reduced,
    point_group_sites,
    potential,
    potential_fourier_components,
)
from bloch2d.lattice import TRIANGULAR_SHELLS, validate_hopping_set


def test_geometry_is_dual_and_triangular():
    np.testing.assert_allclose(np.array([A1, A2]) @ np.array([B1, B2]).T,
                               2 * np.pi * np.eye(2), atol=1e-12)
    assert SPACING == pytest.approx(2 / 3)
    # nearest neighbours (1,0), (0,1), (1,1) all at distance a
    for m1, m2 in TRIANGULAR_SHELLS[0]:
        assert np.linalg.norm(m1 * A1 + m2 * A2) == pytest.approx(SPACING)


def test_point_group_has_twelve_distinct_operations_preserving_shells():
    ops = point_group_sites()
    assert len({g.tobytes() for g in ops}) == 12
    for g in ops:
        for shell in TRIANGULAR_SHELLS:
            members = {m for s in shell for m in (s, (-s[0], -s[1]))}
            assert {tuple(int(x) for x in g @ np.array(m)) for m in members} == members


def test_potential_components():
    zero = potential_fourier_components(OpticalPotentialSpec(0.0))
    assert all(v == 0 for v in zero.values())
    comps = potential_fourier_components(OpticalPotentialSpec(-1.5))
    assert comps[(0, 0)] == -0.5
    assert len(comps) == 7
    for g in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)):
        assert comps[g] == pytest.approx(-1 / 6)


def test_potential_minimum_sits_on_lattice_sites():
    spec = OpticalPotentialSpec(-1.5)
    sites = np.array([m1 * A1 + m2 * A2 for m1 in range(-2, 3) for m2 in range(-2, 3)])
    np.testing.assert_allclose(potential(spec, sites), -1.5, atol=1e-12)
    # brute-force: nowhere lower than V0, and the three-beam form agrees
    rng = np.random.default_rng(3)
    r = rng.uniform(-2, 2, (2000, 2))
    ks = [KAPPA * np.array([np.cos(a), np.sin(a)]) for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)]
    beams = sum(np.exp(1j * (r @ k)) for k in ks)
    np.testing.assert_allclose(potential(spec, r), -1.5 / 9 * np.abs(beams) ** 2, atol=1e-12)
    assert potential(spec, r).min() >= -1.5 - 1e-12


def test_spec_rejects_blue_detuning():
    with pytest.raises(ValueError, match="V0"):
        OpticalPotentialSpec(0.5)


def test_free_particle_matrix_is_diagonal():
    H = bloch_matrix(OpticalPotentialSpec(0.0), PlaneWaveBasis(3), (0.0, 0.0))
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    assert np.linalg.eigvalsh(H)[0] == 0.0


def test_small_basis_coupling_count():
    H = bloch_matrix(OpticalPotentialSpec(-1.5), PlaneWaveBasis(1), (0.0, 0.0))
    assert H.shape == (9, 9)
    assert np.array_equal(H, H.T)
    off = H - np.diag(np.diag(H))
    # 6 pairs along each of (1,0), (0,1) plus 4 along (1,-1), both orientations
    assert np.count_nonzero(off) == 32
    assert set(np.unique(off[off != 0])) == {-1.5 / 9}


def test_theta_outside_zone_rejected():
    with pytest.raises(ValueError, match="theta"):
        bloch_matrix(OpticalPotentialSpec(-1.5), PlaneWaveBasis(3), (1.0, 0.0))


def test_lowest_band_argument_guards():
    with pytest.raises(ValueError, match="M >= 8"):
        lowest_band(OpticalPotentialSpec(-1.5), PlaneWaveBasis(7), 6)
    with pytest.raises(ValueError, match="N_c >= 3"):
        lowest_band(OpticalPotentialSpec(-1.5), PlaneWaveBasis(2), 8)


def test_free_band_is_folded_parabola():
    band = lowest_band(OpticalPotentialSpec(0.0), PlaneWaveBasis(3), 8)
    assert band.values[0, 0] == 0.0
    n = np.arange(-2, 3)
    shifts = np.array([(a, b) for a in n for b in n])
    for (j1, j2) in [(1, 3), (4, 4), (7, 2)]:
        k = (np.array([j1, j2]) / 8 + shifts) @ np.array([B1, B2])
        expected = np.min(np.einsum("ij,ij->i", k, k)) / KAPPA**2
        assert band.values[j1, j2] == pytest.approx(expected, rel=1e-12)


def test_band_is_variational_in_cutoff():
    spec = OpticalPotentialSpec(-1.5)
    coarse = lowest_band(spec, PlaneWaveBasis(5), 8)
    fine = lowest_band(spec, PlaneWaveBasis(7), 8)
    assert np.all(coarse.values >= fine.values - 1e-12)


def test_band_has_hexagonal_symmetry(solved):
    band = solved.band
    M = band.M
    j = np.arange(M)
    j1, j2 = np.meshgrid(j, j, indexing="ij")
    for g in point_group_reduced():
        t1 = (g[0, 0] * j1 + g[0, 1] * j2) % M
        t2 = (g[1, 0] * j1 + g[1, 1] * j2) % M
        assert np.abs(band.values[t1, t2] - band.values).max() < 1e-10


def test_band_lies_above_potential_minimum(solved):
    assert solved.band.values.min() >= -1.5
    assert solved.band.V0 == -1.5 and solved.band.cutoff == 7


def test_synthetic_two_harmonic_band_inverts_exactly():
    M = 16
    t = np.arange(M) / M
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    E = -2 * np.cos(2 * np.pi * t1) - 2 * np.cos(2 * np.pi * t2)
    fit = extract_hoppings(BandSample(E), TRIANGULAR_SHELLS)
    for m in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert fit.hoppings[m] == pytest.approx(1.0, abs=1e-12)
    for m, v in fit.hoppings.entries.items():
        if m not in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            assert abs(v) < 1e-12
    assert abs(fit.constant) < 1e-12


def test_extraction_guards():
    M = 8
    t = np.arange(M) / M
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    with pytest.raises(ValueError, match="alias"):
        extract_hoppings(BandSample(np.zeros((4, 4))), TRIANGULAR_SHELLS)
    odd = np.sin(2 * np.pi * t1)
    with pytest.raises(BandSolverError, match="imaginary"):
        extract_hoppings(BandSample(odd), TRIANGULAR_SHELLS)
    with pytest.raises(BandSolverError, match="non-finite"):
        BandSample(np.full((8, 8), np.nan))


def test_reference_hoppings_reproduced(solved):
    J1, J2, J3 = solved.fit.shell_values()
    for got, want in zip((J1, J2, J3), (0.0765, -0.0149, -0.0078)):
        assert abs(got - want) <= 0.02 * abs(want)
    assert solved.fit.max_imag < 1e-10


def test_shells_are_degenerate_and_symmetric(solved):
    report = validate_hopping_set(solved.J, tol=1e-8, shells=TRIANGULAR_SHELLS)
    assert report.ok, report.lines()
    assert max(report.shell_spread.values()) < 1e-8
    assert validate_hopping_set(solved.J, tol=0.0).symmetry_violations == []


def test_hoppings_decay_with_shell_distance(solved):
    mags = [abs(v) for v in solved.fit.shell_values()]
    assert mags[0] > mags[1] > mags[2]


def test_cutoff_convergence():
    spec = OpticalPotentialSpec(-1.5)
    J1 = [extract_hoppings(lowest_band(spec, PlaneWaveBasis(nc), 8)).shell_values()[0]
          for nc in (5, 7)]
    assert abs(J1[1] - J1[0]) < 1e-4
