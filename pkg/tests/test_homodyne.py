import math
from dataclasses import replace

import numpy as np
import pytest

from arrayhd.config import LOConfig, MixerConfig
from arrayhd.fock import (
    FockSpace,
    annihilation,
    expectation,
    minimal_cutoff,
    perelomov_state,
    quadrature,
    truncated_perelomov_state,
    vacuum,
)
from arrayhd.homodyne import (
    DegenerateMixingError,
    PixelOperatorField,
    SettingsMismatchError,
    complex_single_mode_quadrature,
    decomposed_mixed_quadratures,
    difference_field,
    lo_shifted,
    mixed_mode_operators,
    mixed_quadrature,
    mixed_quadrature_direct,
    mixed_quadratures_from_counts,
    pixel_counts,
    r_field,
    r_field_direct,
    real_mode_quadrature,
    signal_quadratures_direct,
    two_nu_inversion,
)
from arrayhd.modes import PixelGrid, build_basis, gram_schmidt, sample_mode, uniform_lo_mode

TOL = 1e-10


def _setup(preset="vortex", theta=0.5 * math.pi, nu=0.25 * math.pi, phi=0.25 * math.pi):
    space = FockSpace(3)
    grid = PixelGrid(8, 8, 0.125, 0.125)
    basis = build_basis(grid, preset)
    ops = mixed_mode_operators(space, MixerConfig(theta=theta, nu=nu))
    lo = LOConfig(beta=1000.0, phi=phi)
    return space, grid, basis, ops, lo


def _difference_pair(basis, ops, lo):
    nd_phi = pixel_counts(basis, ops, lo, 1) - pixel_counts(basis, ops, lo, 2)
    shifted = lo_shifted(lo)
    nd_plus = pixel_counts(basis, ops, shifted, 1) - pixel_counts(basis, ops, shifted, 2)
    return nd_phi, nd_plus


def test_mixing_matrix_is_unitary():
    _, _, _, ops, _ = _setup(theta=1.1, nu=0.7)
    mix = ops.mixing_matrix
    assert np.max(np.abs(mix @ mix.conj().T - np.eye(2))) < 1e-15


def test_pixel_counts_are_hermitian_per_pixel():
    _, _, basis, ops, lo = _setup()
    counts = pixel_counts(basis, ops, lo, 1)
    assert counts.op_at((3, 4)).hermiticity_deviation() < 1e-9


def test_port_must_be_one_or_two():
    _, _, basis, ops, lo = _setup()
    with pytest.raises(ValueError, match="port"):
        pixel_counts(basis, ops, lo, 3)


def test_difference_counts_match_closed_form():
    _, _, basis, ops, lo = _setup()
    nd_phi, _ = _difference_pair(basis, ops, lo)
    assert nd_phi.settings.kind == "difference"
    assert nd_phi.max_deviation(difference_field(basis, ops, lo)) < TOL


def test_vacuum_difference_counts_vanish():
    space, _, basis, ops, lo = _setup()
    nd = difference_field(basis, ops, lo)
    assert np.max(np.abs(nd.expectation_map(vacuum(space)))) < TOL


def test_subtracting_fields_with_different_phases_is_rejected():
    _, _, basis, ops, lo = _setup()
    with pytest.raises(SettingsMismatchError):
        pixel_counts(basis, ops, lo, 1) - pixel_counts(basis, ops, lo_shifted(lo), 2)


def test_r_field_matches_closed_form():
    _, grid, basis, ops, lo = _setup()
    nd_phi, nd_plus = _difference_pair(basis, ops, lo)
    r = r_field(nd_phi, nd_plus, lo, grid)
    assert r.max_deviation(r_field_direct(basis, ops, lo)) < TOL


def test_r_field_rejects_wrong_phase_pair():
    _, grid, basis, ops, lo = _setup()
    nd_phi, _ = _difference_pair(basis, ops, lo)
    with pytest.raises(SettingsMismatchError, match="phi \\+ pi/2"):
        r_field(nd_phi, nd_phi, lo, grid)
    with pytest.raises(SettingsMismatchError, match="beta"):
        r_field(nd_phi, nd_phi, replace(lo, beta=10.0), grid)


def test_r_field_rejects_fields_from_different_mixers():
    _, grid, basis, ops, lo = _setup()
    nd_phi, _ = _difference_pair(basis, ops, lo)
    other = mixed_mode_operators(ops.space, MixerConfig(theta=0.0, nu=0.25 * math.pi))
    _, nd_plus = _difference_pair(basis, other, lo)
    with pytest.raises(SettingsMismatchError, match="Signal settings differ"):
        r_field(nd_phi, nd_plus, lo, grid)


@pytest.mark.parametrize("preset", ["vortex", "real-hermite-gauss", "hermite-gauss"])
@pytest.mark.parametrize("theta", [0.0, 0.5 * math.pi, math.pi])
def test_mixed_quadratures_match_definition(preset, theta):
    space, grid, basis, ops, lo = _setup(preset=preset, theta=theta)
    nd_phi, nd_plus = _difference_pair(basis, ops, lo)
    r = r_field(nd_phi, nd_plus, lo, grid)
    decomposed = decomposed_mixed_quadratures(space, ops.mixer, lo.phi)
    for k in (1, 2):
        direct = mixed_quadrature_direct(ops, k, lo.phi)
        assert mixed_quadrature(r, k, basis).deviation(direct) < TOL
        assert direct.deviation(decomposed[k - 1]) < TOL


def test_mixed_quadrature_needs_r_field():
    _, _, basis, ops, lo = _setup()
    with pytest.raises(SettingsMismatchError, match="R field"):
        mixed_quadrature(difference_field(basis, ops, lo), 1, basis)


def test_mixed_quadrature_moments_on_truncated_state():
    space, _, basis, ops, lo = _setup()
    state = truncated_perelomov_state(space, 1 / math.sqrt(2), 1 / math.sqrt(2), math.pi / 8)
    recovered = mixed_quadratures_from_counts(basis, ops, lo)
    for k in (1, 2):
        direct = mixed_quadrature_direct(ops, k, lo.phi)
        second_moment = expectation(state, recovered[k - 1] @ recovered[k - 1])
        assert abs(second_moment - expectation(state, direct @ direct)) < TOL


def test_complex_mode_recovery_matches_definition():
    _, _, basis, ops, lo = _setup(preset="vortex")
    nd_phi, nd_plus = _difference_pair(basis, ops, lo)
    for k in (1, 2):
        recovered = complex_single_mode_quadrature(nd_phi, nd_plus, basis[k - 1], lo)
        assert recovered.deviation(mixed_quadrature_direct(ops, k, lo.phi)) < TOL


def test_real_mode_recovery_needs_one_run():
    _, _, basis, ops, lo = _setup(preset="real-hermite-gauss")
    nd = difference_field(basis, ops, lo)
    for k in (1, 2):
        recovered = real_mode_quadrature(nd, basis[k - 1], lo)
        assert recovered.deviation(mixed_quadrature_direct(ops, k, lo.phi)) < TOL


def test_real_mode_recovery_rejects_complex_modes():
    _, _, basis, ops, lo = _setup(preset="vortex")
    with pytest.raises(ValueError, match="complex"):
        real_mode_quadrature(difference_field(basis, ops, lo), basis[0], lo)


@pytest.mark.parametrize("theta", [0.0, 0.5 * math.pi, math.pi])
@pytest.mark.parametrize("phi", [0.0, 0.25 * math.pi, 0.5 * math.pi])
def test_two_nu_inversion_recovers_signal_quadratures(theta, phi):
    space, _, basis, _, lo = _setup(theta=theta, phi=phi)
    nu1, nu2 = math.pi / 6, math.pi / 3
    xp1 = mixed_quadratures_from_counts(basis, mixed_mode_operators(space, MixerConfig(theta, nu1)), lo)
    xp2 = mixed_quadratures_from_counts(basis, mixed_mode_operators(space, MixerConfig(theta, nu2)), lo)
    recovered = two_nu_inversion(xp1, xp2, nu1, nu2).as_dict()
    direct = signal_quadratures_direct(space, theta, phi).as_dict()
    for name, op in recovered.items():
        assert op.deviation(direct[name]) < TOL


def test_swapped_convention_flips_every_sign():
    space = FockSpace(3)
    theta, phi, nu1, nu2 = 0.5 * math.pi, 0.3, math.pi / 6, math.pi / 3
    direct = signal_quadratures_direct(space, theta, phi)
    xp = []
    for nu in (nu1, nu2):
        xp.append(decomposed_mixed_quadratures(space, MixerConfig(theta, nu), phi))
    swapped = two_nu_inversion(xp[0], xp[1], nu1, nu2, convention="swapped")
    assert swapped.x1.deviation(-1.0 * direct.x1) < TOL
    assert swapped.x2_shifted.deviation(-1.0 * direct.x2_shifted) < TOL
    assert swapped.x1.deviation(direct.x1) > 1.0


def test_equal_mixing_angles_are_degenerate():
    space = FockSpace(2)
    x = quadrature(annihilation(space, 1), 0.0)
    with pytest.raises(DegenerateMixingError, match="Degenerate"):
        two_nu_inversion((x, x), (x, x), 0.4, 0.4)
    with pytest.raises(ValueError, match="convention"):
        two_nu_inversion((x, x), (x, x), 0.1, 0.4, convention="legacy")


def test_recovery_is_independent_of_lo_mode_matching():
    space, grid, _, ops, lo = _setup()
    lo_mode = uniform_lo_mode(grid)
    hg10 = sample_mode(grid, "hermite-gauss", m=1, n=0)
    hg01 = sample_mode(grid, "hermite-gauss", m=0, n=1)
    matched = gram_schmidt([lo_mode.values, hg10], grid)
    unmatched = gram_schmidt([hg10, hg01], grid)
    a = mixed_quadratures_from_counts(matched, ops, lo)
    b = mixed_quadratures_from_counts(unmatched, ops, lo)
    assert a[0].deviation(b[0]) < TOL
    assert a[1].deviation(b[1]) < TOL


def _max_pixel_deviation(field, expected):
    return max(field.op_at(p).deviation(expected(p)) for p in field.pixels())


def test_swapping_ports_negates_difference_counts():
    _, _, basis, ops, lo = _setup()
    nd = difference_field(basis, ops, lo)
    swapped = pixel_counts(basis, ops, lo, 2) - pixel_counts(basis, ops, lo, 1)
    assert _max_pixel_deviation(swapped, lambda p: -nd.op_at(p)) < TOL


def test_difference_counts_are_linear_in_beta():
    space, _, basis, ops, lo = _setup()
    nd = difference_field(basis, ops, lo)
    doubled = difference_field(basis, ops, replace(lo, beta=2.0 * lo.beta))
    for name, coeff in nd.coefficients.items():
        assert np.allclose(doubled.coefficients[name], 2.0 * coeff, rtol=1e-15, atol=0.0)
    state = truncated_perelomov_state(space, 0.6, 0.8, 0.3)
    assert np.allclose(doubled.expectation_map(state), 2.0 * nd.expectation_map(state), rtol=1e-12, atol=1e-12)


def test_full_lo_turn_leaves_counts_and_quadratures_unchanged():
    _, _, basis, ops, lo = _setup()
    turned = replace(lo, phi=lo.phi + 2.0 * math.pi)
    assert difference_field(basis, ops, turned).max_deviation(difference_field(basis, ops, lo)) < TOL
    for k in (1, 2):
        a = mixed_quadrature_direct(ops, k, turned.phi)
        assert a.deviation(mixed_quadrature_direct(ops, k, lo.phi)) < 1e-12


def test_summed_port_counts_do_not_depend_on_lo_phase():
    _, _, basis, ops, lo = _setup()

    def total(phase_lo):
        c1 = pixel_counts(basis, ops, phase_lo, 1)
        c2 = pixel_counts(basis, ops, phase_lo, 2)
        return c1.combine(c2, 1.0, 1.0, c1.settings, hermitian=True)

    assert total(lo).max_deviation(total(replace(lo, phi=lo.phi + 1.0))) < TOL


def test_vacuum_counts_are_the_lo_share_of_each_pixel():
    space, grid, basis, ops, lo = _setup()
    expected = grid.pixel_area * lo.beta**2 / (2.0 * grid.Dx * grid.Dy)
    for port in (1, 2):
        counts = pixel_counts(basis, ops, lo, port).expectation_map(vacuum(space))
        assert np.allclose(counts, expected, rtol=1e-12, atol=0.0)


def test_total_counts_of_perelomov_state():
    grid = PixelGrid(8, 8, 0.125, 0.125)
    basis = build_basis(grid, "vortex")
    space = FockSpace(minimal_cutoff(1.0, 1e-10))
    ops = mixed_mode_operators(space, MixerConfig(theta=0.5 * math.pi, nu=0.25 * math.pi))
    lo = LOConfig(beta=10.0, phi=0.25 * math.pi)
    state = perelomov_state(space, 1.0, 0.25 * math.pi)
    total = sum(float(np.sum(pixel_counts(basis, ops, lo, port).expectation_map(state))) for port in (1, 2))
    assert total == pytest.approx(lo.beta**2 + 2.0 * math.sinh(1.0) ** 2, abs=1e-6)


@pytest.mark.parametrize("k", [1, 2])
def test_r_field_pixel_sum_isolates_one_raising_operator(k):
    _, grid, basis, ops, lo = _setup()
    nd_phi, nd_plus = _difference_pair(basis, ops, lo)
    r = r_field(nd_phi, nd_plus, lo, grid)
    expected = ops.term(f"a{k}d") * (np.exp(1j * lo.phi) / math.sqrt(2.0))
    assert r.weighted_sum(basis[k - 1].values).deviation(expected) < TOL


def test_mixed_quadratures_at_quarter_turn_mixer():
    space = FockSpace(3)
    phi = 0.3
    ops = mixed_mode_operators(space, MixerConfig(theta=0.0, nu=0.25 * math.pi))
    a1 = annihilation(space, 1)
    a2 = annihilation(space, 2)
    half_turn = 0.5 * math.pi
    expected_1 = (quadrature(a1, phi) + quadrature(a2, phi + half_turn)) / math.sqrt(2.0)
    expected_2 = (quadrature(a2, phi) + quadrature(a1, phi + half_turn)) / math.sqrt(2.0)
    assert mixed_quadrature_direct(ops, 1, phi).deviation(expected_1) < 1e-12
    assert mixed_quadrature_direct(ops, 2, phi).deviation(expected_2) < 1e-12


def test_hermitian_flag_is_checked_not_forced():
    _, grid, basis, ops, lo = _setup()
    nd = difference_field(basis, ops, lo)
    one_sided = PixelOperatorField(grid, ops, {"a1": nd.coefficients["a1"]}, nd.settings, hermitian=True)
    with pytest.raises(ValueError, match="Hermitian deviates"):
        one_sided.op_at((3, 4))
    counts = pixel_counts(basis, ops, lo, 1)
    assert counts.weighted_sum(np.ones(grid.shape), hermitian=True).hermitian
    with pytest.raises(ValueError, match="Hermitian deviates"):
        counts.weighted_sum(1j * np.ones(grid.shape), hermitian=True)
