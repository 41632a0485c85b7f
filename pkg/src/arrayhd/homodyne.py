"""Operator-level array-detector balanced homodyning.

Pixel photocounts, difference counts and the derived R field are stored as
coefficient maps over a small fixed set of mixed-mode operator terms, so a
pixel operator is ``sum_t coefficient_t(j, j') * term_t``.  Pixel sums are
therefore exact linear combinations of the terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence
import math

import numpy as np

from .config import LOConfig, MixerConfig
from .fock import (
    FockSpace,
    OperatorMatrix,
    StateVector,
    annihilation,
    expectation,
    identity,
    ladder_products,
    quadrature,
)
from .modes import ModeFunction, PixelGrid, modes_fingerprint

DEGENERATE_SIN_THRESHOLD = 1e-6
PHASE_TOLERANCE = 1e-12
INVERSION_CONVENTIONS = ("resolved", "swapped")

TERM_NAMES = ("id", "a1", "a2", "a1d", "a2d", "a1d_a1", "a1d_a2", "a2d_a1", "a2d_a2")


class SettingsMismatchError(ValueError):
    pass


class DegenerateMixingError(ValueError):
    def __init__(self, nu1: float, nu2: float) -> None:
        self.nu1 = nu1
        self.nu2 = nu2
        super().__init__(
            f"Degenerate mixing angles nu1={nu1!r}, nu2={nu2!r}: "
            f"|sin(nu2 - nu1)| <= {DEGENERATE_SIN_THRESHOLD:.0e}"
        )


@dataclass(frozen=True, eq=False)
class MixedModeOperators:
    """a'_1, a'_2 after the linear mixer, plus cached normally ordered products."""

    space: FockSpace
    mixer: MixerConfig
    _terms: dict[str, OperatorMatrix] = field(default_factory=dict, repr=False)

    @cached_property
    def mixing_matrix(self) -> np.ndarray:
        c = math.cos(self.mixer.nu)
        s = math.sin(self.mixer.nu)
        return np.array(
            [
                [c, -1j * s * np.exp(-1j * self.mixer.theta)],
                [-1j * s * np.exp(1j * self.mixer.theta), c],
            ],
            dtype=np.complex128,
        )

    @cached_property
    def a1(self) -> OperatorMatrix:
        return self.term("a1")

    @cached_property
    def a2(self) -> OperatorMatrix:
        return self.term("a2")

    def lowering(self, mode: int) -> OperatorMatrix:
        if mode not in (1, 2):
            raise ValueError(f"Mode index must be 1 or 2. Got {mode!r}")
        return self.a1 if mode == 1 else self.a2

    def term(self, name: str) -> OperatorMatrix:
        if name not in self._terms:
            self._terms[name] = self._build_term(name)
        return self._terms[name]

    def _build_term(self, name: str) -> OperatorMatrix:
        mix = self.mixing_matrix
        if name == "id":
            return identity(self.space)
        if name in ("a1", "a2"):
            p = int(name[1]) - 1
            base = (annihilation(self.space, 1), annihilation(self.space, 2))
            return OperatorMatrix(self.space, mix[p, 0] * base[0].entries + mix[p, 1] * base[1].entries)
        if name in ("a1d", "a2d"):
            return self.term(name[:2]).adjoint()
        if name in ("a1d_a1", "a1d_a2", "a2d_a1", "a2d_a2"):
            p = int(name[1]) - 1
            q = int(name[5]) - 1
            products = ladder_products(self.space)
            entries = np.zeros((self.space.dim, self.space.dim), dtype=np.complex128)
            for (m, n), op in products.items():
                entries += np.conj(mix[p, m - 1]) * mix[q, n - 1] * op.entries
            return OperatorMatrix(self.space, entries, hermitian=p == q)
        raise ValueError(f"Unknown operator term '{name}'. Expected one of {list(TERM_NAMES)}")


@dataclass(frozen=True)
class FieldSettings:
    kind: str
    phi: float
    theta: float
    nu: float
    beta: float
    grid_fingerprint: str
    basis_fingerprint: str
    port: int | None = None

    def signal_key(self) -> tuple[float, float, float, str, str]:
        return (self.theta, self.nu, self.beta, self.grid_fingerprint, self.basis_fingerprint)


@dataclass(frozen=True, eq=False)
class PixelOperatorField:
    grid: PixelGrid
    operators: MixedModeOperators
    coefficients: Mapping[str, np.ndarray]
    settings: FieldSettings
    hermitian: bool = False

    def __post_init__(self) -> None:
        coefficients: dict[str, np.ndarray] = {}
        for name, values in self.coefficients.items():
            if name not in TERM_NAMES:
                raise ValueError(f"Unknown operator term '{name}'")
            arr = np.array(values, dtype=np.complex128)
            if arr.shape != self.grid.shape:
                raise ValueError(f"Coefficient map '{name}' has shape {arr.shape}, grid is {self.grid.shape}")
            arr.setflags(write=False)
            coefficients[name] = arr
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def space(self) -> FockSpace:
        return self.operators.space

    def pixels(self) -> list[tuple[int, int]]:
        return [(j, jp) for j in range(self.grid.nx) for jp in range(self.grid.ny)]

    def op_at(self, pixel: tuple[int, int]) -> OperatorMatrix:
        weights = np.zeros(self.grid.shape, dtype=np.complex128)
        weights[pixel] = 1.0
        return self.weighted_sum(weights, hermitian=self.hermitian)

    def weighted_sum(self, weights: np.ndarray, hermitian: bool = False) -> OperatorMatrix:
        """sum over pixels of weights(j, j') times the pixel operator.

        ``hermitian=True`` only flags the result; OperatorMatrix rejects it when the
        coefficients do not actually produce a Hermitian operator.
        """
        w = np.asarray(weights, dtype=np.complex128)
        entries = np.zeros((self.space.dim, self.space.dim), dtype=np.complex128)
        for name, coeff in self.coefficients.items():
            scale = complex(np.sum(w * coeff))
            if scale != 0.0:
                entries += scale * self.operators.term(name).entries
        return OperatorMatrix(self.space, entries, hermitian=hermitian)

    def expectation_map(self, state: StateVector) -> np.ndarray:
        values = np.zeros(self.grid.shape, dtype=np.complex128)
        for name, coeff in self.coefficients.items():
            values += coeff * expectation(state, self.operators.term(name))
        return values.real if self.hermitian else values

    def max_deviation(self, other: PixelOperatorField) -> float:
        """Largest entry deviation between the two fields over all pixels."""
        if other.grid != self.grid or other.space != self.space:
            raise SettingsMismatchError("Fields live on different grids or Fock spaces")
        worst = 0.0
        for pixel in self.pixels():
            worst = max(worst, self.op_at(pixel).deviation(other.op_at(pixel)))
        return worst

    def combine(
        self,
        other: PixelOperatorField,
        scale_self: complex,
        scale_other: complex,
        settings: FieldSettings,
        hermitian: bool = False,
    ) -> PixelOperatorField:
        if other.grid != self.grid:
            raise SettingsMismatchError("Fields live on different pixel grids")
        if other.operators is not self.operators:
            if other.space != self.space or other.operators.mixer != self.operators.mixer:
                raise SettingsMismatchError("Fields were built from different mixed-mode operators")
        names = [n for n in TERM_NAMES if n in self.coefficients or n in other.coefficients]
        zeros = np.zeros(self.grid.shape, dtype=np.complex128)
        coefficients = {
            name: scale_self * self.coefficients.get(name, zeros)
            + scale_other * other.coefficients.get(name, zeros)
            for name in names
        }
        return PixelOperatorField(self.grid, self.operators, coefficients, settings, hermitian=hermitian)

    def __sub__(self, other: PixelOperatorField) -> PixelOperatorField:
        if replace(self.settings, port=None) != replace(other.settings, port=None):
            raise SettingsMismatchError(f"Cannot subtract fields with settings {self.settings} and {other.settings}")
        settings = replace(self.settings, kind="difference", port=None)
        return self.combine(other, 1.0, -1.0, settings, hermitian=self.hermitian and other.hermitian)


@dataclass(frozen=True)
class SignalQuadratures:
    """X1(phi), X2(phi), X1(phi - theta + pi/2), X2(phi + theta + pi/2)."""

    x1: OperatorMatrix
    x2: OperatorMatrix
    x1_shifted: OperatorMatrix
    x2_shifted: OperatorMatrix

    def as_dict(self) -> dict[str, OperatorMatrix]:
        return {
            "x1": self.x1,
            "x2": self.x2,
            "x1_shifted": self.x1_shifted,
            "x2_shifted": self.x2_shifted,
        }


def mixed_mode_operators(space: FockSpace, mix: MixerConfig) -> MixedModeOperators:
    return MixedModeOperators(space, mix)


def _signal_modes(basis: Sequence[ModeFunction]) -> tuple[np.ndarray, np.ndarray, PixelGrid]:
    modes = list(basis)
    if len(modes) != 2:
        raise ValueError(f"Two-mode homodyning needs exactly 2 signal modes. Got {len(modes)}")
    grid = modes[0].grid
    if modes[1].grid != grid:
        raise ValueError("Signal modes must share one pixel grid")
    return modes[0].values, modes[1].values, grid


def _settings(
    kind: str, basis: Sequence[ModeFunction], ops: MixedModeOperators, lo: LOConfig, port: int | None
) -> FieldSettings:
    grid = basis[0].grid
    return FieldSettings(
        kind=kind,
        phi=lo.phi,
        theta=ops.mixer.theta,
        nu=ops.mixer.nu,
        beta=lo.beta,
        grid_fingerprint=grid.fingerprint(),
        basis_fingerprint=modes_fingerprint(list(basis)),
        port=port,
    )


def pixel_counts(
    basis: Sequence[ModeFunction], mixed_ops: MixedModeOperators, lo: LOConfig, port: int
) -> PixelOperatorField:
    if port not in (1, 2):
        raise ValueError(f"Detector port must be 1 or 2. Got {port!r}")
    u1, u2, grid = _signal_modes(basis)
    half_area = 0.5 * grid.pixel_area
    detector_area = grid.Dx * grid.Dy
    s_factor = lo.beta / math.sqrt(detector_area)
    cross = (1.0 if port == 1 else -1.0) * half_area * s_factor
    lo_phase = np.exp(-1j * lo.phi)
    coefficients = {
        "id": np.full(grid.shape, half_area * lo.beta * lo.beta / detector_area, dtype=np.complex128),
        "a1d_a1": half_area * np.abs(u1) ** 2,
        "a1d_a2": half_area * np.conj(u1) * u2,
        "a2d_a1": half_area * np.conj(u2) * u1,
        "a2d_a2": half_area * np.abs(u2) ** 2,
        "a1": cross * lo_phase * u1,
        "a2": cross * lo_phase * u2,
        "a1d": cross * np.conj(lo_phase) * np.conj(u1),
        "a2d": cross * np.conj(lo_phase) * np.conj(u2),
    }
    settings = _settings("counts", basis, mixed_ops, lo, port)
    return PixelOperatorField(grid, mixed_ops, coefficients, settings, hermitian=True)


def difference_field(
    basis: Sequence[ModeFunction], mixed_ops: MixedModeOperators, lo: LOConfig
) -> PixelOperatorField:
    u1, u2, grid = _signal_modes(basis)
    scale = grid.pixel_area * lo.beta / math.sqrt(grid.Dx * grid.Dy)
    lo_phase = np.exp(-1j * lo.phi)
    coefficients = {
        "a1": scale * lo_phase * u1,
        "a2": scale * lo_phase * u2,
        "a1d": scale * np.conj(lo_phase) * np.conj(u1),
        "a2d": scale * np.conj(lo_phase) * np.conj(u2),
    }
    settings = _settings("difference", basis, mixed_ops, lo, None)
    return PixelOperatorField(grid, mixed_ops, coefficients, settings, hermitian=True)


def _same_phase(a: float, b: float) -> bool:
    delta = math.remainder(a - b, 2.0 * math.pi)
    return abs(delta) <= PHASE_TOLERANCE


def _check_quadrature_pair(
    nd_phi: PixelOperatorField, nd_phi_plus: PixelOperatorField, lo: LOConfig, grid: PixelGrid
) -> None:
    for label, fld in (("nd_phi", nd_phi), ("nd_phi_plus", nd_phi_plus)):
        if fld.settings.kind != "difference":
            raise SettingsMismatchError(f"{label} must be a difference field, got '{fld.settings.kind}'")
        if fld.settings.grid_fingerprint != grid.fingerprint():
            raise SettingsMismatchError(f"{label} was built on a different pixel grid")
        if fld.settings.beta != lo.beta:
            raise SettingsMismatchError(f"{label} has beta={fld.settings.beta!r}, expected {lo.beta!r}")
    if nd_phi.settings.signal_key() != nd_phi_plus.settings.signal_key():
        raise SettingsMismatchError(
            f"Signal settings differ between runs: {nd_phi.settings} vs {nd_phi_plus.settings}"
        )
    if not _same_phase(nd_phi.settings.phi, lo.phi):
        raise SettingsMismatchError(f"nd_phi measured at phi={nd_phi.settings.phi!r}, expected {lo.phi!r}")
    if not _same_phase(nd_phi_plus.settings.phi, lo.phi + 0.5 * math.pi):
        raise SettingsMismatchError(
            f"nd_phi_plus measured at phi={nd_phi_plus.settings.phi!r}, expected phi + pi/2"
        )


def r_field(
    nd_phi: PixelOperatorField, nd_phi_plus: PixelOperatorField, lo: LOConfig, grid: PixelGrid
) -> PixelOperatorField:
    _check_quadrature_pair(nd_phi, nd_phi_plus, lo, grid)
    prefactor = math.sqrt(grid.Dx * grid.Dy / 2.0) / (2.0 * lo.beta)
    settings = replace(nd_phi.settings, kind="r")
    return nd_phi.combine(nd_phi_plus, prefactor, -1j * prefactor, settings)


def r_field_direct(
    basis: Sequence[ModeFunction], mixed_ops: MixedModeOperators, lo: LOConfig
) -> PixelOperatorField:
    """Closed form (dxdy/sqrt(2)) e^{i phi} (a'_1^dagger U1* + a'_2^dagger U2*)."""
    u1, u2, grid = _signal_modes(basis)
    scale = grid.pixel_area / math.sqrt(2.0) * np.exp(1j * lo.phi)
    coefficients = {"a1d": scale * np.conj(u1), "a2d": scale * np.conj(u2)}
    return PixelOperatorField(grid, mixed_ops, coefficients, _settings("r", basis, mixed_ops, lo, None))


def lo_shifted(lo: LOConfig, shift: float = 0.5 * math.pi) -> LOConfig:
    return replace(lo, phi=lo.phi + shift)


def mixed_quadrature(r: PixelOperatorField, mode_index: int, basis: Sequence[ModeFunction]) -> OperatorMatrix:
    if mode_index not in (1, 2):
        raise ValueError(f"Mode index must be 1 or 2. Got {mode_index!r}")
    if r.settings.kind != "r":
        raise SettingsMismatchError(f"Expected an R field, got '{r.settings.kind}'")
    u = list(basis)[mode_index - 1]
    half = r.weighted_sum(u.values)
    return OperatorMatrix(r.space, half.entries + half.entries.conj().T, hermitian=True)


def mixed_quadrature_direct(mixed_ops: MixedModeOperators, mode_index: int, phi: float) -> OperatorMatrix:
    return quadrature(mixed_ops.lowering(mode_index), phi)


def decomposed_mixed_quadratures(
    space: FockSpace, mix: MixerConfig, phi: float
) -> tuple[OperatorMatrix, OperatorMatrix]:
    """cos(nu) X1(phi) + sin(nu) X2(phi+theta+pi/2) and its mode-2 partner."""
    a1 = annihilation(space, 1)
    a2 = annihilation(space, 2)
    c = math.cos(mix.nu)
    s = math.sin(mix.nu)
    x1p = c * quadrature(a1, phi) + s * quadrature(a2, phi + mix.theta + 0.5 * math.pi)
    x2p = c * quadrature(a2, phi) + s * quadrature(a1, phi - mix.theta + 0.5 * math.pi)
    return x1p, x2p


def signal_quadratures_direct(space: FockSpace, theta: float, phi: float) -> SignalQuadratures:
    a1 = annihilation(space, 1)
    a2 = annihilation(space, 2)
    return SignalQuadratures(
        x1=quadrature(a1, phi),
        x2=quadrature(a2, phi),
        x1_shifted=quadrature(a1, phi - theta + 0.5 * math.pi),
        x2_shifted=quadrature(a2, phi + theta + 0.5 * math.pi),
    )


def two_nu_inversion(
    xp_nu1: tuple[OperatorMatrix, OperatorMatrix],
    xp_nu2: tuple[OperatorMatrix, OperatorMatrix],
    nu1: float,
    nu2: float,
    convention: str = "resolved",
) -> SignalQuadratures:
    """Recover the four signal quadratures from mixed quadratures measured at two mixing angles.

    The ``swapped`` convention exchanges the two denominators sin(nu2 - nu1) and
    sin(nu1 - nu2); it returns every operator with the wrong sign and exists only
    so that reports can show how far it lands from the direct definitions.
    """
    if convention not in INVERSION_CONVENTIONS:
        raise ValueError(f"Unknown inversion convention '{convention}'. Expected {list(INVERSION_CONVENTIONS)}")
    det = math.sin(nu2 - nu1)
    if abs(det) <= DEGENERATE_SIN_THRESHOLD:
        raise DegenerateMixingError(nu1, nu2)
    if convention == "swapped":
        det = -det
    x1p_a, x2p_a = xp_nu1
    x1p_b, x2p_b = xp_nu2
    s1, s2 = math.sin(nu1), math.sin(nu2)
    c1, c2 = math.cos(nu1), math.cos(nu2)
    return SignalQuadratures(
        x1=(s2 * x1p_a - s1 * x1p_b) / det,
        x2=(s2 * x2p_a - s1 * x2p_b) / det,
        x1_shifted=(c1 * x2p_b - c2 * x2p_a) / det,
        x2_shifted=(c1 * x1p_b - c2 * x1p_a) / det,
    )


def complex_mode_terms(
    nd_phi: PixelOperatorField, nd_phi_plus: PixelOperatorField, u: ModeFunction, lo: LOConfig
) -> tuple[OperatorMatrix, OperatorMatrix]:
    """The two pixel sums of the complex-mode recovery, already scaled."""
    grid = u.grid
    _check_quadrature_pair(nd_phi, nd_phi_plus, lo, grid)
    prefactor = math.sqrt(grid.Dx * grid.Dy) / (2.0 * math.sqrt(2.0) * lo.beta)
    first = nd_phi.weighted_sum(u.values + np.conj(u.values), hermitian=True) * prefactor
    second = nd_phi_plus.weighted_sum(1j * (np.conj(u.values) - u.values), hermitian=True) * prefactor
    return first, second


def complex_single_mode_quadrature(
    nd_phi: PixelOperatorField, nd_phi_plus: PixelOperatorField, u: ModeFunction, lo: LOConfig
) -> OperatorMatrix:
    first, second = complex_mode_terms(nd_phi, nd_phi_plus, u, lo)
    return first + second


def real_mode_quadrature(nd: PixelOperatorField, u: ModeFunction, lo: LOConfig) -> OperatorMatrix:
    """Single-run recovery sqrt(DxDy)/(sqrt(2) beta) * sum N_d U, valid for real U only."""
    if not u.is_real():
        raise ValueError(f"Mode '{u.label}' is complex; use complex_single_mode_quadrature")
    grid = u.grid
    if nd.settings.grid_fingerprint != grid.fingerprint():
        raise SettingsMismatchError("Difference field was built on a different pixel grid")
    prefactor = math.sqrt(grid.Dx * grid.Dy) / (math.sqrt(2.0) * lo.beta)
    return nd.weighted_sum(u.values.real, hermitian=True) * prefactor


def mixed_quadratures_from_counts(
    basis: Sequence[ModeFunction], mixed_ops: MixedModeOperators, lo: LOConfig
) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Two-detector pipeline: N_d at phi and phi + pi/2, R field, then both X'_k."""
    grid = list(basis)[0].grid
    nd_phi = pixel_counts(basis, mixed_ops, lo, 1) - pixel_counts(basis, mixed_ops, lo, 2)
    shifted = lo_shifted(lo)
    nd_plus = pixel_counts(basis, mixed_ops, shifted, 1) - pixel_counts(basis, mixed_ops, shifted, 2)
    r = r_field(nd_phi, nd_plus, lo, grid)
    return mixed_quadrature(r, 1, basis), mixed_quadrature(r, 2, basis)
