"""Analytic joint quadrature densities for the Perelomov and truncated Perelomov states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence
import math

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erf
from scipy.stats import norm

from .fock import (
    FockSpace,
    StateVector,
    minimal_cutoff,
    perelomov_state,
    quadrature_density_grid,
    quadrature_density_oracle,
    truncated_perelomov_state,
)

# Frozen by reconcile_perelomov_constants against the Fock-space oracle.  With
# these values the Gaussian reads exp[-(x1+x2)^2/(2A) - (x1-x2)^2/(2B)] / (pi sqrt(AB)).
VARIANCE_CONVENTION_FACTOR = 2.0
NORMALIZATION_EXPONENT = 0.5
COEFFICIENT_TOLERANCE = 1e-12
ORACLE_TRUNCATION_WEIGHT = 1e-22


@dataclass(frozen=True)
class ProposalConfig:
    """Isotropic product-Gaussian proposal and the envelope constant M with p <= M q."""

    sigma: float
    envelope: float

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise ValueError(f"Proposal sigma must be > 0. Got {self.sigma!r}")
        if not self.envelope >= 1.0:
            raise ValueError(f"Envelope constant must be >= 1. Got {self.envelope!r}")

    def pdf(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        var = self.sigma * self.sigma
        return np.exp(-(np.asarray(x1) ** 2 + np.asarray(x2) ** 2) / (2.0 * var)) / (2.0 * math.pi * var)

    @property
    def expected_acceptance(self) -> float:
        return 1.0 / self.envelope


class JointDensity(Protocol):
    family: str
    phi1: float
    phi2: float

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray: ...

    def marginal_variances(self) -> tuple[float, float]: ...

    def marginal_cdf(self, x: np.ndarray, axis: int) -> np.ndarray: ...

    def fock_state(self, truncation_weight: float = ORACLE_TRUNCATION_WEIGHT) -> StateVector: ...

    def default_proposal(self) -> ProposalConfig: ...

    def describe(self) -> dict[str, float | str]: ...


@dataclass(frozen=True)
class PerelomovDensityParams:
    r: float
    gamma: float
    phi1: float
    phi2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r >= 0.0):
            raise ValueError(f"Squeeze parameter r must be >= 0. Got {self.r!r}")

    @property
    def tanh_r(self) -> float:
        return math.tanh(self.r)

    @property
    def z(self) -> complex:
        return self.tanh_r * complex(np.exp(-1j * (self.phi1 + self.phi2 + self.gamma)))

    @property
    def A(self) -> float:
        return abs(1.0 + self.z) ** 2 / (1.0 - self.tanh_r**2)

    @property
    def B(self) -> float:
        return abs(1.0 - self.z) ** 2 / (1.0 - self.tanh_r**2)


@dataclass(frozen=True)
class TruncatedDensityParams:
    c1: float
    c2: float
    delta: float
    phi1: float
    phi2: float

    def __post_init__(self) -> None:
        if abs(self.c1 * self.c1 + self.c2 * self.c2 - 1.0) > COEFFICIENT_TOLERANCE:
            raise ValueError(f"Coefficients must satisfy c1^2 + c2^2 = 1. Got c1={self.c1!r}, c2={self.c2!r}")


def perelomov_density(p: PerelomovDensityParams, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    a, b = p.A, p.B
    u = np.asarray(x1, dtype=np.float64) + np.asarray(x2, dtype=np.float64)
    v = np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    exponent = -(u * u) / (VARIANCE_CONVENTION_FACTOR * a) - (v * v) / (VARIANCE_CONVENTION_FACTOR * b)
    return np.exp(exponent) / (math.pi * (a * b) ** NORMALIZATION_EXPONENT)


def unreconciled_perelomov_density(p: PerelomovDensityParams, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Literal form 2/(pi A B) exp[-(x1+x2)^2/A - (x1-x2)^2/B], kept for comparison reports."""
    a, b = p.A, p.B
    u = np.asarray(x1, dtype=np.float64) + np.asarray(x2, dtype=np.float64)
    v = np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    return 2.0 / (math.pi * a * b) * np.exp(-(u * u) / a - (v * v) / b)


def truncated_density(p: TruncatedDensityParams, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    cross = x1 * x2
    bracket = (
        p.c1 * p.c1
        + 4.0 * p.c2 * p.c2 * cross * cross
        + 4.0 * cross * p.c1 * p.c2 * math.cos(p.phi1 + p.phi2 + p.delta)
    )
    return np.exp(-x1 * x1 - x2 * x2) / math.pi * bracket


@dataclass(frozen=True)
class PerelomovDensity:
    params: PerelomovDensityParams
    family: str = "perelomov"

    @property
    def phi1(self) -> float:
        return self.params.phi1

    @property
    def phi2(self) -> float:
        return self.params.phi2

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return perelomov_density(self.params, x1, x2)

    def marginal_variances(self) -> tuple[float, float]:
        var = (self.params.A + self.params.B) / (2.0 * VARIANCE_CONVENTION_FACTOR)
        return var, var

    def covariance(self) -> float:
        return (self.params.A - self.params.B) / (2.0 * VARIANCE_CONVENTION_FACTOR)

    def marginal_cdf(self, x: np.ndarray, axis: int) -> np.ndarray:
        var = self.marginal_variances()[axis]
        return norm.cdf(np.asarray(x, dtype=np.float64), scale=math.sqrt(var))

    def fock_state(self, truncation_weight: float = ORACLE_TRUNCATION_WEIGHT) -> StateVector:
        space = FockSpace(minimal_cutoff(self.params.r, truncation_weight))
        return perelomov_state(space, self.params.r, self.params.gamma, tolerance=truncation_weight)

    def default_proposal(self) -> ProposalConfig:
        """Per-axis variance max(A, B)/2, the largest covariance eigenvalue; M = sqrt(max/min)."""
        a, b = self.params.A, self.params.B
        largest, smallest = max(a, b), min(a, b)
        sigma = math.sqrt(largest * VARIANCE_CONVENTION_FACTOR / 4.0)
        return ProposalConfig(sigma=sigma, envelope=math.sqrt(largest / smallest))

    def describe(self) -> dict[str, float | str]:
        var1, var2 = self.marginal_variances()
        return {
            "family": self.family,
            "r": self.params.r,
            "gamma": self.params.gamma,
            "phi1": self.params.phi1,
            "phi2": self.params.phi2,
            "A": self.params.A,
            "B": self.params.B,
            "marginal_variance_x1": var1,
            "marginal_variance_x2": var2,
        }


@dataclass(frozen=True)
class TruncatedDensity:
    params: TruncatedDensityParams
    family: str = "truncated"

    @property
    def phi1(self) -> float:
        return self.params.phi1

    @property
    def phi2(self) -> float:
        return self.params.phi2

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return truncated_density(self.params, x1, x2)

    def marginal_variances(self) -> tuple[float, float]:
        var = 0.5 * (self.params.c1**2 + 3.0 * self.params.c2**2)
        return var, var

    def covariance(self) -> float:
        p = self.params
        return p.c1 * p.c2 * math.cos(p.phi1 + p.phi2 + p.delta)

    def marginal_cdf(self, x: np.ndarray, axis: int) -> np.ndarray:
        # marginal pdf is exp(-x^2)/sqrt(pi) (c1^2 + 2 c2^2 x^2) on either axis
        x = np.asarray(x, dtype=np.float64)
        c2sq = self.params.c2**2
        return 0.5 * (1.0 + erf(x)) - c2sq * x * np.exp(-x * x) / math.sqrt(math.pi)

    def fock_state(self, truncation_weight: float = ORACLE_TRUNCATION_WEIGHT) -> StateVector:
        return truncated_perelomov_state(FockSpace(1), self.params.c1, self.params.c2, self.params.delta)

    def default_proposal(self) -> ProposalConfig:
        """Unit-variance proposal; M bounds 2 e^{-s} (|c1| + 2|c2| s)^2 over s = |x1 x2| >= 0."""
        c1 = abs(self.params.c1)
        c2 = abs(self.params.c2)

        def bound(s: float) -> float:
            return 2.0 * math.exp(-s) * (c1 + 2.0 * c2 * s) ** 2

        if c2 == 0.0:
            return ProposalConfig(sigma=1.0, envelope=max(1.0, bound(0.0)))
        peak = max(0.0, 2.0 - c1 / (2.0 * c2))
        return ProposalConfig(sigma=1.0, envelope=max(1.0, bound(peak)))

    def describe(self) -> dict[str, float | str]:
        var1, var2 = self.marginal_variances()
        return {
            "family": self.family,
            "c1": self.params.c1,
            "c2": self.params.c2,
            "delta": self.params.delta,
            "phi1": self.params.phi1,
            "phi2": self.params.phi2,
            "marginal_variance_x1": var1,
            "marginal_variance_x2": var2,
        }


def vacuum_density(phi1: float = 0.0, phi2: float = 0.0) -> PerelomovDensity:
    return PerelomovDensity(PerelomovDensityParams(r=0.0, gamma=0.0, phi1=phi1, phi2=phi2), family="vacuum")


def grid_axis(points: int, extent: float) -> np.ndarray:
    return np.linspace(-extent, extent, points)


def analytic_grid(density: JointDensity, axis: np.ndarray) -> np.ndarray:
    """Density on the tensor grid, rows indexed by x1 and columns by x2."""
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return np.asarray(density(x1, x2), dtype=np.float64)


def oracle_grid(
    density: JointDensity, axis: np.ndarray, truncation_weight: float = ORACLE_TRUNCATION_WEIGHT
) -> np.ndarray:
    state = density.fock_state(truncation_weight)
    return quadrature_density_grid(state, density.phi1, density.phi2, axis, axis)


def numerical_normalization(density: JointDensity, extent: float = 6.0, points: int = 241) -> float:
    axis = grid_axis(points, extent)
    values = analytic_grid(density, axis)
    return float(trapezoid(trapezoid(values, axis, axis=1), axis))


@dataclass(frozen=True)
class ReconciliationResult:
    """Least-squares fit of log(pi p) = offset - exponent log(AB) - (u^2/A + v^2/B)/factor."""

    variance_factor: float
    normalization_exponent: float
    offset: float
    max_residual: float
    points_used: int
    settings_used: int

    def to_dict(self) -> dict[str, float | int]:
        return {
            "variance_factor": self.variance_factor,
            "normalization_exponent": self.normalization_exponent,
            "offset": self.offset,
            "max_residual": self.max_residual,
            "points_used": self.points_used,
            "settings_used": self.settings_used,
            "frozen_variance_factor": VARIANCE_CONVENTION_FACTOR,
            "frozen_normalization_exponent": NORMALIZATION_EXPONENT,
        }


def reconcile_perelomov_constants(
    settings: Sequence[PerelomovDensityParams],
    points: int = 21,
    extent: float = 3.0,
    truncation_weight: float = ORACLE_TRUNCATION_WEIGHT,
    floor: float = 1e-10,
) -> ReconciliationResult:
    rows: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    axis = grid_axis(points, extent)
    x1, x2 = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
    for params in settings:
        state = perelomov_state(
            FockSpace(minimal_cutoff(params.r, truncation_weight)),
            params.r,
            params.gamma,
            tolerance=truncation_weight,
        )
        values = quadrature_density_oracle(state, params.phi1, params.phi2, np.column_stack([x1, x2]))
        keep = values > floor
        u = x1[keep] + x2[keep]
        v = x1[keep] - x2[keep]
        a, b = params.A, params.B
        rows.append(
            np.column_stack(
                [np.ones(u.size), np.full(u.size, -math.log(a * b)), -(u * u / a + v * v / b)]
            )
        )
        targets.append(np.log(values[keep]) + math.log(math.pi))
    design = np.vstack(rows)
    target = np.concatenate(targets)
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.max(np.abs(design @ coeffs - target)))
    return ReconciliationResult(
        variance_factor=float(1.0 / coeffs[2]),
        normalization_exponent=float(coeffs[1]),
        offset=float(coeffs[0]),
        max_residual=residual,
        points_used=int(target.size),
        settings_used=len(settings),
    )


def density_for_state(
    family: str,
    *,
    r: float = 0.0,
    gamma: float = 0.0,
    c1: float = 1.0,
    c2: float = 0.0,
    delta: float = 0.0,
    phi1: float = 0.0,
    phi2: float = 0.0,
) -> JointDensity:
    if family == "perelomov":
        return PerelomovDensity(PerelomovDensityParams(r=r, gamma=gamma, phi1=phi1, phi2=phi2))
    if family == "truncated":
        return TruncatedDensity(TruncatedDensityParams(c1=c1, c2=c2, delta=delta, phi1=phi1, phi2=phi2))
    if family == "vacuum":
        return vacuum_density(phi1, phi2)
    raise ValueError(f"Unknown state family '{family}'")
