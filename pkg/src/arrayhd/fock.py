"""Truncated two-mode Fock space.

Basis states |n1, n2> with 0 <= n1, n2 <= cutoff are stored row-major:
index(n1, n2) = n1 * (cutoff + 1) + n2.  Quadratures follow
X(phi) = (a exp(-i phi) + a^dagger exp(i phi)) / sqrt(2), so the vacuum
variance is 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import trapezoid

HERMITIAN_TOLERANCE = 1e-12
NORM_TOLERANCE = 1e-12
DEFAULT_TRUNCATION_TOLERANCE = 1e-10


class CutoffTooSmallError(ValueError):
    def __init__(self, cutoff: int, r: float, weight: float, tolerance: float) -> None:
        self.cutoff = cutoff
        self.r = r
        self.weight = weight
        self.tolerance = tolerance
        super().__init__(
            f"Fock cutoff {cutoff} too small for r={r}: truncation weight {weight:.3e} "
            f"exceeds tolerance {tolerance:.1e} (need cutoff >= {minimal_cutoff(r, tolerance)})"
        )


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FockSpace:
    cutoff: int

    def __post_init__(self) -> None:
        if int(self.cutoff) < 1:
            raise ValueError(f"Fock cutoff must be >= 1. Got {self.cutoff!r}")

    @property
    def levels(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.levels * self.levels

    def index(self, n1: int, n2: int) -> int:
        if not (0 <= n1 <= self.cutoff and 0 <= n2 <= self.cutoff):
            raise ValueError(f"Occupation ({n1}, {n2}) outside cutoff {self.cutoff}")
        return n1 * self.levels + n2

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = np.divmod(np.arange(self.dim), self.levels)
        return n1, n2

    def low_indices(self, margin: int = 1) -> np.ndarray:
        """Indices of |n1, n2> with both occupations <= cutoff - margin."""
        n1, n2 = self.occupations()
        return np.flatnonzero((n1 <= self.cutoff - margin) & (n2 <= self.cutoff - margin))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    space: FockSpace
    entries: np.ndarray
    hermitian: bool = False

    __array_ufunc__ = None

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.complex128)
        if entries.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"Operator shape {entries.shape} does not match space dim {self.space.dim}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.hermitian:
            deviation = self.hermiticity_deviation()
            if deviation >= _hermitian_tolerance(entries):
                raise ValueError(f"Operator flagged Hermitian deviates by {deviation:.3e}")

    def adjoint(self) -> OperatorMatrix:
        return OperatorMatrix(self.space, self.entries.conj().T, hermitian=self.hermitian)

    def hermiticity_deviation(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def deviation(self, other: OperatorMatrix) -> float:
        self._check_space(other)
        return float(np.max(np.abs(self.entries - other.entries)))

    def apply(self, state: StateVector) -> np.ndarray:
        self._check_space(state)
        return self.entries @ state.amplitudes

    def __add__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check_space(other)
        return OperatorMatrix(
            self.space, self.entries + other.entries, hermitian=self.hermitian and other.hermitian
        )

    def __sub__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check_space(other)
        return OperatorMatrix(
            self.space, self.entries - other.entries, hermitian=self.hermitian and other.hermitian
        )

    def __neg__(self) -> OperatorMatrix:
        return OperatorMatrix(self.space, -self.entries, hermitian=self.hermitian)

    def __mul__(self, scalar: complex) -> OperatorMatrix:
        keeps_hermitian = self.hermitian and complex(scalar).imag == 0.0
        return OperatorMatrix(self.space, self.entries * scalar, hermitian=keeps_hermitian)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> OperatorMatrix:
        keeps_hermitian = self.hermitian and complex(scalar).imag == 0.0
        return OperatorMatrix(self.space, self.entries / scalar, hermitian=keeps_hermitian)

    def __matmul__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check_space(other)
        return OperatorMatrix(self.space, self.entries @ other.entries)

    def _check_space(self, other: OperatorMatrix | StateVector) -> None:
        if other.space != self.space:
            raise SpaceMismatchError(f"Space mismatch: {self.space} vs {other.space}")


@dataclass(frozen=True, eq=False)
class StateVector:
    space: FockSpace
    amplitudes: np.ndarray
    truncation_weight: float = 0.0

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.space.dim,):
            raise ValueError(f"State length {amps.shape} does not match space dim {self.space.dim}")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"State is not normalized: norm={norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(
        cls, space: FockSpace, amplitudes: np.ndarray, truncation_weight: float = 0.0
    ) -> StateVector:
        amps = np.asarray(amplitudes, dtype=np.complex128)
        norm = float(np.linalg.norm(amps))
        if norm == 0.0:
            raise ValueError("Cannot normalize the zero vector")
        return cls(space, amps / norm, truncation_weight=truncation_weight)

    def coefficient_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to C[n1, n2]."""
        return self.amplitudes.reshape(self.space.levels, self.space.levels)


def _hermitian_tolerance(entries: np.ndarray) -> float:
    scale = float(np.max(np.abs(entries))) if entries.size else 0.0
    return HERMITIAN_TOLERANCE * max(1.0, scale)


def _single_mode_lowering(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=np.float64)), k=1).astype(np.complex128)


def identity(space: FockSpace) -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim, dtype=np.complex128), hermitian=True)


def annihilation(space: FockSpace, mode: int) -> OperatorMatrix:
    lowering = _single_mode_lowering(space.levels)
    eye = np.eye(space.levels, dtype=np.complex128)
    if mode == 1:
        return OperatorMatrix(space, np.kron(lowering, eye))
    if mode == 2:
        return OperatorMatrix(space, np.kron(eye, lowering))
    raise ValueError(f"Mode index must be 1 or 2. Got {mode!r}")


def creation(space: FockSpace, mode: int) -> OperatorMatrix:
    return annihilation(space, mode).adjoint()


def number(space: FockSpace, mode: int) -> OperatorMatrix:
    a = annihilation(space, mode)
    return OperatorMatrix(space, (a.adjoint() @ a).entries, hermitian=True)


def ladder_products(space: FockSpace) -> dict[tuple[int, int], OperatorMatrix]:
    """All a_m^dagger a_n built as Kronecker products, keyed by (m, n)."""
    lowering = _single_mode_lowering(space.levels)
    raising = lowering.conj().T
    num = raising @ lowering
    eye = np.eye(space.levels, dtype=np.complex128)
    return {
        (1, 1): OperatorMatrix(space, np.kron(num, eye), hermitian=True),
        (1, 2): OperatorMatrix(space, np.kron(raising, lowering)),
        (2, 1): OperatorMatrix(space, np.kron(lowering, raising)),
        (2, 2): OperatorMatrix(space, np.kron(eye, num), hermitian=True),
    }


def quadrature(a: OperatorMatrix, phi: float) -> OperatorMatrix:
    rotated = a.entries * np.exp(-1j * phi)
    return OperatorMatrix(a.space, (rotated + rotated.conj().T) / math.sqrt(2.0), hermitian=True)


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return (a @ b) - (b @ a)


def truncated_block(op: OperatorMatrix, margin: int = 1) -> np.ndarray:
    """Matrix block on the subspace where truncation cannot be felt."""
    idx = op.space.low_indices(margin)
    return op.entries[np.ix_(idx, idx)]


def vacuum(space: FockSpace) -> StateVector:
    return fock_state(space, 0, 0)


def fock_state(space: FockSpace, n1: int, n2: int) -> StateVector:
    amps = np.zeros(space.dim, dtype=np.complex128)
    amps[space.index(n1, n2)] = 1.0
    return StateVector(space, amps)


def minimal_cutoff(r: float, truncation_weight: float) -> int:
    """Smallest cutoff whose Perelomov truncation weight tanh(r)^(2(N+1)) is <= the target."""
    if r < 0.0:
        raise ValueError(f"Squeeze parameter must be >= 0. Got {r!r}")
    if not 0.0 < truncation_weight < 1.0:
        raise ValueError(f"Truncation weight must be in (0, 1). Got {truncation_weight!r}")
    t = math.tanh(r)
    if t == 0.0:
        return 1
    cutoff = max(1, math.ceil(math.log(truncation_weight) / (2.0 * math.log(t))) - 1)
    while t ** (2 * (cutoff + 1)) > truncation_weight:
        cutoff += 1
    while cutoff > 1 and t ** (2 * cutoff) <= truncation_weight:
        cutoff -= 1
    return cutoff


def perelomov_state(
    space: FockSpace,
    r: float,
    gamma: float,
    tolerance: float = DEFAULT_TRUNCATION_TOLERANCE,
) -> StateVector:
    if r < 0.0:
        raise ValueError(f"Squeeze parameter must be >= 0. Got {r!r}")
    t = math.tanh(r)
    weight = t ** (2 * space.levels)
    if weight > tolerance:
        raise CutoffTooSmallError(space.cutoff, r, weight, tolerance)
    n = np.arange(space.levels)
    ratio = complex(np.exp(-1j * gamma)) * t
    coeffs = np.concatenate([[1.0 + 0.0j], np.cumprod(np.full(space.cutoff, ratio))]) / math.cosh(r)
    amps = np.zeros(space.dim, dtype=np.complex128)
    amps[n * space.levels + n] = coeffs
    return StateVector.normalized(space, amps, truncation_weight=weight)


def truncated_perelomov_state(
    space: FockSpace, c1: float, c2: float, delta: float
) -> StateVector:
    if abs(c1 * c1 + c2 * c2 - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"Coefficients must satisfy c1^2 + c2^2 = 1. Got c1={c1!r}, c2={c2!r}")
    amps = np.zeros(space.dim, dtype=np.complex128)
    amps[space.index(0, 0)] = c1
    amps[space.index(1, 1)] = c2 * np.exp(-1j * delta)
    return StateVector(space, amps)


def expectation(state: StateVector, op: OperatorMatrix) -> complex:
    if state.space != op.space:
        raise SpaceMismatchError(f"Space mismatch: {state.space} vs {op.space}")
    value = complex(np.vdot(state.amplitudes, op.entries @ state.amplitudes))
    if op.hermitian:
        return complex(value.real, 0.0)
    return value


def variance(state: StateVector, op: OperatorMatrix) -> float:
    mean = expectation(state, op).real
    return expectation(state, op @ op).real - mean * mean


def hermite_functions(cutoff: int, x: np.ndarray) -> np.ndarray:
    """psi_0..psi_cutoff evaluated at x; shape (cutoff + 1, *x.shape)."""
    x = np.asarray(x, dtype=np.float64)
    psi = np.empty((cutoff + 1, *x.shape), dtype=np.float64)
    psi[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if cutoff >= 1:
        psi[1] = math.sqrt(2.0) * x * psi[0]
    for n in range(1, cutoff):
        psi[n + 1] = math.sqrt(2.0 / (n + 1)) * x * psi[n] - math.sqrt(n / (n + 1)) * psi[n - 1]
    return psi


def _phased_coefficients(state: StateVector, phi1: float, phi2: float) -> np.ndarray:
    n = np.arange(state.space.levels)
    phase = np.exp(-1j * (n[:, None] * phi1 + n[None, :] * phi2))
    return state.coefficient_matrix() * phase


def quadrature_density_oracle(
    state: StateVector, phi1: float, phi2: float, points: np.ndarray
) -> np.ndarray:
    """Joint density p(x1, phi1, x2, phi2) at an (M, 2) array of points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    coeffs = _phased_coefficients(state, phi1, phi2)
    psi1 = hermite_functions(state.space.cutoff, pts[:, 0])
    psi2 = hermite_functions(state.space.cutoff, pts[:, 1])
    amplitude = np.sum(psi1 * (coeffs @ psi2), axis=0)
    return np.abs(amplitude) ** 2


def quadrature_density_grid(
    state: StateVector, phi1: float, phi2: float, x1: np.ndarray, x2: np.ndarray
) -> np.ndarray:
    """Density on the tensor grid x1 (rows) by x2 (columns)."""
    coeffs = _phased_coefficients(state, phi1, phi2)
    psi1 = hermite_functions(state.space.cutoff, np.asarray(x1))
    psi2 = hermite_functions(state.space.cutoff, np.asarray(x2))
    return np.abs(psi1.T @ coeffs @ psi2) ** 2


def oracle_normalization(
    state: StateVector, phi1: float, phi2: float, extent: float = 6.0, points: int = 241
) -> float:
    axis = np.linspace(-extent, extent, points)
    grid = quadrature_density_grid(state, phi1, phi2, axis, axis)
    return float(trapezoid(trapezoid(grid, axis, axis=1), axis))

