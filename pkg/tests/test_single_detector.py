import math

import numpy as np
import pytest

from arrayhd.config import LOConfig, MixerConfig
from arrayhd.fock import FockSpace, expectation, minimal_cutoff, perelomov_state
from arrayhd.homodyne import (
    difference_field,
    mixed_mode_operators,
    mixed_quadrature_direct,
    mixed_quadratures_from_counts,
    pixel_counts,
)
from arrayhd.modes import PixelGrid, mode_pair
from arrayhd.single_detector import (
    PixelSelection,
    SingularSelectionError,
    build_m_matrix,
    condition_number,
    feature_rank,
    quadratures_from_v,
    recover_v,
    select_pixels,
    single_detector_quadratures,
    single_port_differences,
    v_vector_direct,
)

SEEDS = 20


def _grid() -> PixelGrid:
    return PixelGrid(16, 16, 0.0625, 0.0625)


def _lo() -> LOConfig:
    return LOConfig(beta=1000.0, phi=0.25 * math.pi)


def test_default_basis_yields_invertible_selection():
    grid = _grid()
    modes = mode_pair(grid, "hermite-gauss")
    result = select_pixels(modes, grid, _lo(), seeds=SEEDS)
    assert len(set(result.selection.pixels)) == 9
    assert result.m_matrix.entries.shape == (8, 8)
    assert result.m_matrix.condition < 1e6
    assert 0 <= result.seed_index < SEEDS
    assert result.to_dict()["reference"] == list(result.selection.pixels[0])


def test_selection_is_deterministic_and_worker_independent():
    grid = _grid()
    modes = mode_pair(grid, "hermite-gauss")
    a = select_pixels(modes, grid, _lo(), seeds=SEEDS, seed=3, workers=1)
    b = select_pixels(modes, grid, _lo(), seeds=SEEDS, seed=3, workers=4)
    assert a.selection.pixels == b.selection.pixels
    assert a.m_matrix.condition == b.m_matrix.condition
    assert a.seed_index == b.seed_index


def test_random_restart_reports_condition_of_winner():
    grid = _grid()
    modes = mode_pair(grid, "vortex")
    result = select_pixels(modes, grid, _lo(), strategy="random-restart", seeds=SEEDS, max_condition=math.inf)
    rebuilt = build_m_matrix(modes, result.selection, _lo())
    assert result.m_matrix.condition == pytest.approx(condition_number(rebuilt.entries))
    assert result.strategy == "random-restart"


@pytest.mark.parametrize("preset", ["constant", "real-hermite-gauss"])
def test_degenerate_bases_are_rejected(preset):
    grid = _grid()
    modes = mode_pair(grid, preset)
    with pytest.raises(SingularSelectionError, match="No invertible pixel selection"):
        select_pixels(modes, grid, _lo(), seeds=4)
    assert feature_rank(modes, _lo()) < 8


def test_feature_rank_of_complex_bases_is_full():
    grid = _grid()
    assert feature_rank(mode_pair(grid, "hermite-gauss"), _lo()) == 8
    assert feature_rank(mode_pair(grid, "vortex"), _lo()) == 8


def test_unknown_strategy_and_small_grid():
    grid = _grid()
    modes = mode_pair(grid, "hermite-gauss")
    with pytest.raises(ValueError, match="Unknown selection strategy"):
        select_pixels(modes, grid, _lo(), strategy="annealing")
    tiny = PixelGrid(2, 2, 0.5, 0.5)
    with pytest.raises(ValueError, match="at least 9"):
        select_pixels(mode_pair(tiny, "constant"), tiny, _lo())


def test_pixel_selection_validation():
    grid = PixelGrid(4, 4, 0.25, 0.25)
    pixels = [(j, jp) for j in range(3) for jp in range(3)]
    assert PixelSelection(grid, tuple(pixels)).reference == (0, 0)
    with pytest.raises(ValueError, match="exactly 9"):
        PixelSelection(grid, tuple(pixels[:8]))
    with pytest.raises(ValueError, match="distinct"):
        PixelSelection(grid, tuple(pixels[:8] + [pixels[0]]))
    with pytest.raises(ValueError, match="outside"):
        PixelSelection(grid, tuple(pixels[:8] + [(4, 0)]))


def test_single_port_recovery_matches_two_port_pipeline():
    grid = _grid()
    lo = _lo()
    modes = mode_pair(grid, "hermite-gauss")
    ops = mixed_mode_operators(FockSpace(3), MixerConfig(theta=0.5 * math.pi, nu=0.25 * math.pi))
    result = select_pixels(modes, grid, lo, seeds=SEEDS)
    cond = result.m_matrix.condition

    v, (x1p, x2p) = single_detector_quadratures(pixel_counts(modes, ops, lo, 1), modes, result, lo)
    v_direct = v_vector_direct(ops, lo)
    assert max(v[i].deviation(v_direct[i]) for i in range(8)) < 1e-9 * cond
    assert v_direct.pairing_deviation() < 1e-14

    two_port = mixed_quadratures_from_counts(modes, ops, lo)
    assert x1p.deviation(two_port[0]) < 1e-9 * cond
    assert x2p.deviation(two_port[1]) < 1e-9 * cond


def test_quadratures_from_direct_v_are_mixed_quadratures():
    lo = _lo()
    ops = mixed_mode_operators(FockSpace(3), MixerConfig(theta=1.0, nu=0.6))
    x1p, x2p = quadratures_from_v(v_vector_direct(ops, lo))
    grid = _grid()
    modes = mode_pair(grid, "vortex")
    two_port = mixed_quadratures_from_counts(modes, ops, lo)
    assert x1p.deviation(two_port[0]) < 1e-10
    assert x2p.deviation(two_port[1]) < 1e-10


def test_count_expansion_through_m_matrix():
    grid = _grid()
    lo = _lo()
    modes = mode_pair(grid, "hermite-gauss")
    ops = mixed_mode_operators(FockSpace(2), MixerConfig())
    result = select_pixels(modes, grid, lo, seeds=SEEDS)
    nd = single_port_differences(pixel_counts(modes, ops, lo, 1), result.selection)
    v_direct = np.stack([op.entries for op in v_vector_direct(ops, lo).entries])
    for k, op in enumerate(nd):
        rebuilt = 0.5 * grid.pixel_area * np.tensordot(result.m_matrix.entries[k], v_direct, axes=1)
        assert np.max(np.abs(op.entries - rebuilt)) < 1e-10 * max(1.0, float(np.max(np.abs(op.entries))))


def test_differences_need_count_field():
    grid = _grid()
    lo = _lo()
    modes = mode_pair(grid, "hermite-gauss")
    ops = mixed_mode_operators(FockSpace(2), MixerConfig())
    sel = PixelSelection(grid, tuple((0, jp) for jp in range(9)))
    with pytest.raises(ValueError, match="pixel-count field"):
        single_port_differences(difference_field(modes, ops, lo), sel)


def test_recover_v_rejects_singular_matrix():
    grid = _grid()
    lo = _lo()
    modes = mode_pair(grid, "constant")
    ops = mixed_mode_operators(FockSpace(2), MixerConfig())
    sel = PixelSelection(grid, tuple((0, jp) for jp in range(9)))
    m = build_m_matrix(modes, sel, lo)
    assert math.isinf(m.condition)
    nd = single_port_differences(pixel_counts(modes, ops, lo, 1), sel)
    with pytest.raises(SingularSelectionError):
        recover_v(nd, m, grid)
    with pytest.raises(ValueError, match="8 difference-count"):
        recover_v(nd[:7], m, grid)


def test_recovered_quadratures_ignore_global_mode_phases():
    grid = _grid()
    lo = _lo()
    ops = mixed_mode_operators(FockSpace(3), MixerConfig(theta=0.5 * math.pi, nu=0.25 * math.pi))
    u1, u2 = mode_pair(grid, "hermite-gauss")
    rotated = (u1.with_phase(0.7), u2.with_phase(-1.3))
    result = select_pixels(rotated, grid, lo, seeds=SEEDS)
    cond = result.m_matrix.condition

    _, recovered = single_detector_quadratures(pixel_counts(rotated, ops, lo, 1), rotated, result, lo)
    two_port = mixed_quadratures_from_counts(rotated, ops, lo)
    for k in (1, 2):
        direct = mixed_quadrature_direct(ops, k, lo.phi)
        assert recovered[k - 1].deviation(direct) < 1e-9 * cond
        assert two_port[k - 1].deviation(direct) < 1e-10


def test_recovered_v_reproduces_perelomov_photon_number():
    grid = _grid()
    lo = _lo()
    space = FockSpace(minimal_cutoff(1.0, 1e-10))
    state = perelomov_state(space, 1.0, 0.0)
    ops = mixed_mode_operators(space, MixerConfig(theta=0.0, nu=0.0))
    modes = mode_pair(grid, "hermite-gauss")
    result = select_pixels(modes, grid, lo, seeds=SEEDS)

    v, _ = single_detector_quadratures(pixel_counts(modes, ops, lo, 1), modes, result, lo)
    v1 = expectation(state, v[0])
    assert v1.real == pytest.approx(math.sinh(1.0) ** 2, abs=1e-9 * result.m_matrix.condition + 1e-6)
    assert abs(v1.imag) < 1e-6
