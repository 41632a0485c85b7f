from __future__ import annotations

from dataclasses import dataclass
from typing import Any
import math

import numpy as np
from scipy.stats import chi2, kstest

from .densities import JointDensity
from .sampling import SampleBatch

LEGENDRE_ORDER = 8
MIN_EXPECTED = 5.0


class InsufficientSamplesError(ValueError):
    pass


class InsufficientCoverageError(ValueError):
    def __init__(self, coverage: float, minimum: float, extent: tuple[float, float, float, float]) -> None:
        self.coverage = coverage
        self.minimum = minimum
        super().__init__(
            f"Histogram range {extent} holds {coverage:.5f} of the density mass, below {minimum:.5f}"
        )


@dataclass(frozen=True, eq=False)
class Histogram2D:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    overflow: int
    sample_count: int

    def __post_init__(self) -> None:
        if int(self.counts.sum()) + self.overflow != self.sample_count:
            raise ValueError("Histogram counts plus overflow must equal the sample count")

    @property
    def bins(self) -> tuple[int, int]:
        return (self.counts.shape[0], self.counts.shape[1])

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            float(self.x_edges[0]),
            float(self.x_edges[-1]),
            float(self.y_edges[0]),
            float(self.y_edges[-1]),
        )

    @property
    def bin_areas(self) -> np.ndarray:
        return np.outer(np.diff(self.x_edges), np.diff(self.y_edges))

    @property
    def in_range(self) -> int:
        return self.sample_count - self.overflow

    @property
    def density(self) -> np.ndarray:
        """Normalized estimate over the in-range samples; integrates to one over the range."""
        if self.in_range == 0:
            return np.zeros(self.counts.shape)
        return self.counts / (self.in_range * self.bin_areas)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1]), 0.5 * (self.y_edges[1:] + self.y_edges[:-1])


def symmetric_edges(bins: int, half_range: float) -> np.ndarray:
    return np.linspace(-half_range, half_range, bins + 1)


def histogram(
    batch: SampleBatch,
    bins: int = 50,
    ranges: tuple[tuple[float, float], tuple[float, float]] = ((-5.0, 5.0), (-5.0, 5.0)),
    density: JointDensity | None = None,
    min_coverage: float = 0.999,
) -> Histogram2D:
    if batch.count == 0:
        raise InsufficientSamplesError("Cannot histogram an empty sample batch")
    x_edges = np.linspace(ranges[0][0], ranges[0][1], bins + 1)
    y_edges = np.linspace(ranges[1][0], ranges[1][1], bins + 1)
    if density is not None:
        check_coverage(density, x_edges, y_edges, min_coverage)
    counts, _, _ = np.histogram2d(batch.x1, batch.x2, bins=[x_edges, y_edges])
    counts = counts.astype(np.int64)
    return Histogram2D(
        x_edges=x_edges,
        y_edges=y_edges,
        counts=counts,
        overflow=batch.count - int(counts.sum()),
        sample_count=batch.count,
    )


def bin_probabilities(
    density: JointDensity, x_edges: np.ndarray, y_edges: np.ndarray, order: int = LEGENDRE_ORDER
) -> np.ndarray:
    """Gauss-Legendre integral of the density over every bin."""
    nodes, weights = np.polynomial.legendre.leggauss(order)

    def expand(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        scaled = (half[:, None] * weights[None, :]).ravel()
        return points, scaled

    xs, wx = expand(np.asarray(x_edges, dtype=np.float64))
    ys, wy = expand(np.asarray(y_edges, dtype=np.float64))
    x1, x2 = np.meshgrid(xs, ys, indexing="ij")
    weighted = density(x1, x2) * wx[:, None] * wy[None, :]
    nx = len(x_edges) - 1
    ny = len(y_edges) - 1
    return weighted.reshape(nx, order, ny, order).sum(axis=(1, 3))


def coverage(density: JointDensity, x_edges: np.ndarray, y_edges: np.ndarray) -> float:
    return float(bin_probabilities(density, x_edges, y_edges).sum())


def check_coverage(
    density: JointDensity, x_edges: np.ndarray, y_edges: np.ndarray, min_coverage: float
) -> float:
    mass = coverage(density, x_edges, y_edges)
    if mass < min_coverage:
        extent = (float(x_edges[0]), float(x_edges[-1]), float(y_edges[0]), float(y_edges[-1]))
        raise InsufficientCoverageError(mass, min_coverage, extent)
    return mass


def mean_absolute_bin_error(h: Histogram2D, density: JointDensity) -> float:
    if h.sample_count == 0:
        raise InsufficientSamplesError("Histogram holds no samples")
    areas = h.bin_areas
    estimate = h.counts / (h.sample_count * areas)
    analytic = bin_probabilities(density, h.x_edges, h.y_edges) / areas
    return float(np.mean(np.abs(estimate - analytic)))


def max_absolute_bin_error(h: Histogram2D, density: JointDensity) -> float:
    if h.sample_count == 0:
        raise InsufficientSamplesError("Histogram holds no samples")
    areas = h.bin_areas
    estimate = h.counts / (h.sample_count * areas)
    analytic = bin_probabilities(density, h.x_edges, h.y_edges) / areas
    return float(np.max(np.abs(estimate - analytic)))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float


@dataclass(frozen=True)
class GoodnessOfFit:
    chi2: float
    dof: int
    p_value: float
    cells: int
    pooled_bins: int
    overflow: int
    ks_x1: KSResult | None
    ks_x2: KSResult | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
            "cells": self.cells,
            "pooled_bins": self.pooled_bins,
            "overflow": self.overflow,
            "ks_x1": None if self.ks_x1 is None else {"statistic": self.ks_x1.statistic, "p_value": self.ks_x1.p_value},
            "ks_x2": None if self.ks_x2 is None else {"statistic": self.ks_x2.statistic, "p_value": self.ks_x2.p_value},
        }


def goodness_of_fit(
    h: Histogram2D,
    density: JointDensity,
    batch: SampleBatch | None = None,
    min_expected: float = MIN_EXPECTED,
) -> GoodnessOfFit:
    """Pearson chi-square over the bins plus one overflow cell; KS on both marginals when samples are given.

    Bins whose expected count is below ``min_expected`` are pooled together with
    the overflow.  A pooled cell still below the threshold is merged into the
    cell with the smallest expectation.
    """
    n = h.sample_count
    if n == 0:
        raise InsufficientSamplesError("Goodness of fit needs at least one sample")
    probs = bin_probabilities(density, h.x_edges, h.y_edges).ravel()
    expected = n * probs
    observed = h.counts.ravel().astype(np.float64)
    keep = expected >= min_expected
    cell_obs = list(observed[keep])
    cell_exp = list(expected[keep])
    pooled_obs = float(observed[~keep].sum()) + h.overflow
    pooled_exp = float(expected[~keep].sum()) + n * max(0.0, 1.0 - float(probs.sum()))
    if pooled_exp >= min_expected:
        cell_obs.append(pooled_obs)
        cell_exp.append(pooled_exp)
    elif cell_exp:
        target = int(np.argmin(cell_exp))
        cell_obs[target] += pooled_obs
        cell_exp[target] += pooled_exp
    if len(cell_exp) < 2:
        raise InsufficientSamplesError(
            f"Only {len(cell_exp)} chi-square cell(s) reach the expected-count threshold {min_expected}"
        )
    obs_arr = np.array(cell_obs)
    exp_arr = np.array(cell_exp)
    statistic = float(np.sum((obs_arr - exp_arr) ** 2 / exp_arr))
    dof = len(cell_exp) - 1
    ks_x1 = ks_x2 = None
    if batch is not None and batch.count > 0:
        ks_x1 = _marginal_ks(batch.x1, density, 0)
        ks_x2 = _marginal_ks(batch.x2, density, 1)
    return GoodnessOfFit(
        chi2=statistic,
        dof=dof,
        p_value=float(chi2.sf(statistic, dof)),
        cells=len(cell_exp),
        pooled_bins=int((~keep).sum()),
        overflow=h.overflow,
        ks_x1=ks_x1,
        ks_x2=ks_x2,
    )


def _marginal_ks(values: np.ndarray, density: JointDensity, axis: int) -> KSResult:
    result = kstest(values, lambda x: density.marginal_cdf(x, axis))
    return KSResult(statistic=float(result.statistic), p_value=float(result.pvalue))


def relative_variance_error(sample_variance: float, analytic_variance: float) -> float:
    return abs(sample_variance - analytic_variance) / analytic_variance if analytic_variance else math.inf
