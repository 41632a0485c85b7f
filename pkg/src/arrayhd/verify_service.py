from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Sequence
import math

import numpy as np

from .config import AppConfig, LOConfig, MixerConfig
from .densities import (
    PerelomovDensity,
    PerelomovDensityParams,
    TruncatedDensity,
    TruncatedDensityParams,
    analytic_grid,
    grid_axis,
    oracle_grid,
    vacuum_density,
)
from .fock import (
    DEFAULT_TRUNCATION_TOLERANCE,
    FockSpace,
    OperatorMatrix,
    StateVector,
    annihilation,
    commutator,
    creation,
    expectation,
    identity,
    perelomov_state,
    quadrature,
    truncated_perelomov_state,
    vacuum,
    variance,
)
from .homodyne import (
    DegenerateMixingError,
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
from .logging_config import log_stage
from .metrics import (
    IdentityCheck,
    check,
    expected_failure,
    operator_deviation,
    subspace_deviation,
)
from .modes import ModeBasis, PixelGrid, build_basis, gram_schmidt, mode_pair, sample_mode, uniform_lo_mode
from .single_detector import (
    SingularSelectionError,
    feature_rank,
    select_pixels,
    single_detector_quadratures,
    single_port_differences,
    v_vector_direct,
)

# states whose two-mode Fock weight fits inside the operator-suite cutoff
SUITE_PERELOMOV_R = 0.3
SUITE_PERELOMOV_GAMMA = 0.4
OPERATOR_BASES = ("real-hermite-gauss", "vortex")
DEGENERATE_SELECTION_SEEDS = 16


@dataclass
class VerifyOutcome:
    checks: list[IdentityCheck] = field(default_factory=list)
    inversion: dict[str, Any] = field(default_factory=dict)

    def extend(self, items: Sequence[IdentityCheck]) -> None:
        self.checks.extend(items)

    @property
    def failed(self) -> list[IdentityCheck]:
        return [c for c in self.checks if not c.passed]


def suite_states(
    space: FockSpace, truncation_weight: float = DEFAULT_TRUNCATION_TOLERANCE
) -> dict[str, StateVector]:
    return {
        "vacuum": vacuum(space),
        "truncated": truncated_perelomov_state(space, 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), math.pi / 8.0),
        "perelomov": perelomov_state(space, SUITE_PERELOMOV_R, SUITE_PERELOMOV_GAMMA, tolerance=truncation_weight),
    }


def suite_mixers(cfg: AppConfig) -> list[MixerConfig]:
    """Every verify theta at the configured nu and at nu1 of the inversion pair."""
    nus = list(dict.fromkeys((cfg.mixer.nu, cfg.verify.nu1)))
    return [MixerConfig(theta=theta, nu=nu) for nu in nus for theta in cfg.verify.thetas]


def _grid(cfg: AppConfig) -> PixelGrid:
    return PixelGrid(cfg.grid.nx, cfg.grid.ny, cfg.grid.dx, cfg.grid.dy)


def _moment_deviation(
    states: dict[str, StateVector], recovered: OperatorMatrix, direct: OperatorMatrix
) -> float:
    worst = 0.0
    for state in states.values():
        worst = max(
            worst,
            abs(expectation(state, recovered) - expectation(state, direct)),
            abs(variance(state, recovered) - variance(state, direct)),
        )
    return worst


def fock_checks(space: FockSpace, tolerance: float) -> list[IdentityCheck]:
    a1, a2 = annihilation(space, 1), annihilation(space, 2)
    ident = identity(space)
    return [
        check(
            "fock.commutator_a1",
            subspace_deviation(commutator(a1, creation(space, 1)), ident),
            tolerance,
            cutoff=space.cutoff,
        ),
        check(
            "fock.commutator_a2",
            subspace_deviation(commutator(a2, creation(space, 2)), ident),
            tolerance,
            cutoff=space.cutoff,
        ),
        check(
            "fock.commutator_cross",
            float(np.max(np.abs(commutator(a1, creation(space, 2)).entries))),
            tolerance,
            cutoff=space.cutoff,
        ),
    ]


def array_checks(
    space: FockSpace,
    basis_name: str,
    basis: ModeBasis,
    mixer: MixerConfig,
    lo: LOConfig,
    tolerance: float,
    states: dict[str, StateVector],
) -> list[IdentityCheck]:
    """Per-pixel difference counts, R field, mixed-quadrature decomposition and mode recovery."""
    ops = mixed_mode_operators(space, mixer)
    grid = basis.grid
    tag = {"basis": basis_name, "theta": mixer.theta, "nu": mixer.nu, "phi": lo.phi}
    out: list[IdentityCheck] = []

    nd_phi = pixel_counts(basis, ops, lo, 1) - pixel_counts(basis, ops, lo, 2)
    shifted = lo_shifted(lo)
    nd_plus = pixel_counts(basis, ops, shifted, 1) - pixel_counts(basis, ops, shifted, 2)
    out.append(
        check("array.difference_counts", nd_phi.max_deviation(difference_field(basis, ops, lo)), tolerance, **tag)
    )

    r = r_field(nd_phi, nd_plus, lo, grid)
    out.append(check("array.r_field", r.max_deviation(r_field_direct(basis, ops, lo)), tolerance, **tag))

    decomposed = decomposed_mixed_quadratures(space, mixer, lo.phi)
    for k in (1, 2):
        recovered = mixed_quadrature(r, k, basis)
        direct = mixed_quadrature_direct(ops, k, lo.phi)
        out.append(
            check(
                f"array.mixed_quadrature_{k}",
                max(operator_deviation(recovered, direct), operator_deviation(direct, decomposed[k - 1])),
                tolerance,
                **tag,
            )
        )
        out.append(
            check(f"array.mixed_quadrature_{k}_moments", _moment_deviation(states, recovered, direct), tolerance, **tag)
        )
        complex_mode = complex_single_mode_quadrature(nd_phi, nd_plus, basis[k - 1], lo)
        out.append(
            check(f"array.complex_mode_{k}", operator_deviation(complex_mode, direct), tolerance, **tag)
        )
        if basis[k - 1].is_real():
            real_mode = real_mode_quadrature(nd_phi, basis[k - 1], lo)
            out.append(check(f"array.real_mode_{k}", operator_deviation(real_mode, direct), tolerance, **tag))
    return out


def inversion_checks(cfg: AppConfig, space: FockSpace, basis: ModeBasis) -> tuple[list[IdentityCheck], dict[str, Any]]:
    nu1, nu2 = cfg.verify.nu1, cfg.verify.nu2
    tolerance = cfg.verify.tolerance
    out: list[IdentityCheck] = []
    swapped_worst = 0.0
    for theta in cfg.verify.thetas:
        ops1 = mixed_mode_operators(space, MixerConfig(theta=theta, nu=nu1))
        ops2 = mixed_mode_operators(space, MixerConfig(theta=theta, nu=nu2))
        for phi in cfg.verify.phis:
            lo = replace(cfg.lo, phi=phi)
            tag = {"theta": theta, "phi": phi, "nu1": nu1, "nu2": nu2}
            xp1 = mixed_quadratures_from_counts(basis, ops1, lo)
            xp2 = mixed_quadratures_from_counts(basis, ops2, lo)
            try:
                resolved = two_nu_inversion(xp1, xp2, nu1, nu2)
                swapped = two_nu_inversion(xp1, xp2, nu1, nu2, convention="swapped")
            except DegenerateMixingError as exc:
                out.append(expected_failure("inversion.degenerate", str(exc), **tag))
                continue
            direct = signal_quadratures_direct(space, theta, phi).as_dict()
            for name, op in resolved.as_dict().items():
                out.append(check(f"inversion.{name}", operator_deviation(op, direct[name]), tolerance, **tag))
            for name, op in swapped.as_dict().items():
                swapped_worst = max(swapped_worst, operator_deviation(op, direct[name]))
    summary = {
        "convention": "resolved",
        "denominator": "sin(nu2 - nu1)",
        "x1": "[sin(nu2) X1'(nu1) - sin(nu1) X1'(nu2)] / sin(nu2 - nu1)",
        "x2_shifted": "[cos(nu1) X1'(nu2) - cos(nu2) X1'(nu1)] / sin(nu2 - nu1)",
        "x2": "[sin(nu2) X2'(nu1) - sin(nu1) X2'(nu2)] / sin(nu2 - nu1)",
        "x1_shifted": "[cos(nu1) X2'(nu2) - cos(nu2) X2'(nu1)] / sin(nu2 - nu1)",
        "swapped_denominators_max_deviation": swapped_worst,
    }
    return out, summary


def single_detector_checks(cfg: AppConfig, space: FockSpace, grid: PixelGrid) -> list[IdentityCheck]:
    tolerance = cfg.verify.tolerance
    lo = cfg.lo
    ops = mixed_mode_operators(space, cfg.mixer)
    modes = mode_pair(grid, cfg.basis.preset, waist=cfg.basis.waist, tilt=cfg.basis.tilt)
    out: list[IdentityCheck] = []

    result = select_pixels(
        modes,
        grid,
        lo,
        strategy=cfg.selection.strategy,
        seeds=cfg.selection.seeds,
        seed=cfg.selection.seed,
        max_condition=cfg.selection.max_condition,
        workers=cfg.selection.workers,
    )
    cond = result.m_matrix.condition
    tag = {"basis": cfg.basis.preset, "condition": cond}
    counts = pixel_counts(modes, ops, lo, 1)

    v_direct = v_vector_direct(ops, lo)
    nd = single_port_differences(counts, result.selection)
    worst = 0.0
    scale = 1.0
    for k, op in enumerate(nd):
        rebuilt = np.tensordot(result.m_matrix.entries[k], np.stack([e.entries for e in v_direct.entries]), axes=1)
        rebuilt = 0.5 * grid.pixel_area * rebuilt
        worst = max(worst, float(np.max(np.abs(op.entries - rebuilt))))
        scale = max(scale, float(np.max(np.abs(op.entries))))
    out.append(check("single.count_expansion", worst, tolerance * scale, **tag))

    v, (x1p, x2p) = single_detector_quadratures(counts, modes, result, lo)
    out.append(
        check(
            "single.v_vector",
            max(v[i].deviation(v_direct[i]) for i in range(8)),
            1e-9 * cond,
            **tag,
        )
    )
    two_port = mixed_quadratures_from_counts(modes, ops, lo)
    out.append(check("single.mixed_quadrature_1", operator_deviation(x1p, two_port[0]), 1e-9 * cond, **tag))
    out.append(check("single.mixed_quadrature_2", operator_deviation(x2p, two_port[1]), 1e-9 * cond, **tag))

    for preset in ("constant", "real-hermite-gauss"):
        degenerate = mode_pair(grid, preset, waist=cfg.basis.waist)
        try:
            select_pixels(
                degenerate,
                grid,
                lo,
                strategy=cfg.selection.strategy,
                seeds=min(cfg.selection.seeds, DEGENERATE_SELECTION_SEEDS),
                seed=cfg.selection.seed,
                max_condition=cfg.selection.max_condition,
            )
        except SingularSelectionError as exc:
            out.append(
                check(
                    f"single.rejects_{preset}",
                    0.0,
                    tolerance,
                    condition=exc.condition,
                    feature_rank=feature_rank(degenerate, lo),
                )
            )
        else:
            out.append(check(f"single.rejects_{preset}", math.inf, tolerance, reason="selection succeeded"))
    return out


def mode_matching_checks(cfg: AppConfig, space: FockSpace, grid: PixelGrid) -> list[IdentityCheck]:
    """Recovery must not depend on how much the signal modes overlap the uniform LO."""
    tolerance = cfg.verify.tolerance
    ops = mixed_mode_operators(space, cfg.mixer)
    lo_mode = uniform_lo_mode(grid)
    w = cfg.basis.waist
    params = {} if w is None else {"waist": w}
    hg10 = sample_mode(grid, "hermite-gauss", m=1, n=0, **params)
    hg01 = sample_mode(grid, "hermite-gauss", m=0, n=1, **params)
    matched = gram_schmidt([lo_mode.values, hg10], grid, labels=["lo", "hg10"])
    unmatched = gram_schmidt([hg10, hg01], grid, labels=["hg10", "hg01"])
    overlap_matched = abs(grid.pixel_area * np.sum(np.conj(lo_mode.values) * matched[0].values))
    overlap_unmatched = abs(grid.pixel_area * np.sum(np.conj(lo_mode.values) * unmatched[0].values))

    rec_matched = mixed_quadratures_from_counts(matched, ops, cfg.lo)
    rec_unmatched = mixed_quadratures_from_counts(unmatched, ops, cfg.lo)
    out = []
    for k in (1, 2):
        direct = mixed_quadrature_direct(ops, k, cfg.lo.phi)
        deviation = max(
            operator_deviation(rec_matched[k - 1], rec_unmatched[k - 1]),
            operator_deviation(rec_unmatched[k - 1], direct),
        )
        out.append(
            check(
                f"mode_matching.mixed_quadrature_{k}",
                deviation,
                tolerance,
                lo_overlap_matched=float(overlap_matched),
                lo_overlap_unmatched=float(overlap_unmatched),
            )
        )
    return out


def state_checks(
    space: FockSpace, tolerance: float, truncation_weight: float = DEFAULT_TRUNCATION_TOLERANCE
) -> list[IdentityCheck]:
    """Fock-space quadrature moments against the analytic marginal variances."""
    phi1, phi2 = 0.25 * math.pi, 0.5 * math.pi
    x1 = quadrature(annihilation(space, 1), phi1)
    x2 = quadrature(annihilation(space, 2), phi2)
    c = 1.0 / math.sqrt(2.0)
    states = suite_states(space, truncation_weight)
    analytic: dict[str, PerelomovDensity | TruncatedDensity] = {
        "vacuum": vacuum_density(phi1, phi2),
        "truncated": TruncatedDensity(TruncatedDensityParams(c, c, math.pi / 8.0, phi1, phi2)),
        "perelomov": PerelomovDensity(
            PerelomovDensityParams(SUITE_PERELOMOV_R, SUITE_PERELOMOV_GAMMA, phi1, phi2)
        ),
    }
    out = []
    for name, density in analytic.items():
        state = states[name]
        var1, var2 = density.marginal_variances()
        deviation = max(
            abs(variance(state, x1) - var1),
            abs(variance(state, x2) - var2),
            abs(expectation(state, x1 @ x2).real - density.covariance()),
        )
        out.append(check(f"state.moments_{name}", deviation, tolerance, state=name))
    return out


def density_checks(cfg: AppConfig) -> list[IdentityCheck]:
    axis = grid_axis(cfg.verify.density_points, cfg.verify.density_range)
    tolerance = cfg.verify.density_tolerance
    weight = cfg.fock.density_truncation_weight
    quarter = 0.25 * math.pi
    settings = {
        "fig1": PerelomovDensityParams(1.0, quarter, quarter, 0.5 * math.pi),
        "fig2": PerelomovDensityParams(1.0, quarter, quarter, -quarter),
        "off_axis": PerelomovDensityParams(0.6, 0.3, 0.2, 1.1),
    }
    out = []
    for name, params in settings.items():
        density = PerelomovDensity(params)
        delta = np.max(np.abs(analytic_grid(density, axis) - oracle_grid(density, axis, weight)))
        out.append(check(f"density.perelomov_{name}", float(delta), tolerance, A=params.A, B=params.B))
    c = 1.0 / math.sqrt(2.0)
    truncated_settings = {
        "fig3": TruncatedDensityParams(c, c, math.pi / 8.0, quarter, quarter),
        "off_axis": TruncatedDensityParams(0.6, 0.8, 0.3, 0.2, 1.1),
        "anticorrelated": TruncatedDensityParams(0.8, 0.6, 1.2, -0.4, 0.5),
    }
    for name, tparams in truncated_settings.items():
        truncated = TruncatedDensity(tparams)
        delta = np.max(np.abs(analytic_grid(truncated, axis) - oracle_grid(truncated, axis, weight)))
        out.append(check(f"density.truncated_{name}", float(delta), tolerance))
    fig1 = settings["fig1"]
    out.append(
        check(
            "density.fig1_printed_constants",
            max(abs(fig1.A - math.exp(-2.0)), abs(fig1.B - math.exp(2.0))),
            1e-12,
            A=fig1.A,
            B=fig1.B,
        )
    )
    return out


def run_identity_suite(cfg: AppConfig, log) -> VerifyOutcome:
    space = FockSpace(cfg.fock.cutoff)
    grid = _grid(cfg)
    tolerance = cfg.verify.tolerance
    states = suite_states(space, cfg.fock.truncation_weight)
    outcome = VerifyOutcome()

    with log_stage(log, "verify.fock", cutoff=space.cutoff):
        outcome.extend(fock_checks(space, tolerance))
        outcome.extend(state_checks(space, tolerance, cfg.fock.truncation_weight))

    with log_stage(log, "verify.array"):
        for basis_name in OPERATOR_BASES:
            basis = build_basis(grid, basis_name, waist=cfg.basis.waist, tilt=cfg.basis.tilt)
            for mixer in suite_mixers(cfg):
                outcome.extend(array_checks(space, basis_name, basis, mixer, cfg.lo, tolerance, states))

    with log_stage(log, "verify.inversion", nu1=cfg.verify.nu1, nu2=cfg.verify.nu2):
        basis = build_basis(grid, "vortex", waist=cfg.basis.waist)
        checks, summary = inversion_checks(cfg, space, basis)
        outcome.extend(checks)
        outcome.inversion = summary

    with log_stage(log, "verify.single_detector", basis=cfg.basis.preset):
        outcome.extend(single_detector_checks(cfg, space, grid))

    with log_stage(log, "verify.mode_matching"):
        outcome.extend(mode_matching_checks(cfg, space, grid))

    with log_stage(log, "verify.densities"):
        outcome.extend(density_checks(cfg))

    for item in outcome.failed:
        log.bind(event="verify.check", stage="verify", status="failed", check=item.name).warning(
            "identity_failed deviation={} tolerance={}", item.deviation, item.tolerance
        )
    return outcome
