"""Rejection sampling from product-Gaussian proposals.

Proposals are drawn in fixed-size chunks; chunk ``i`` uses its own Philox
stream spawned from ``SeedSequence(seed)``.  Chunks are merged in index order,
so the accepted samples depend on the seed, the count and the chunk size but
never on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from .densities import JointDensity, ProposalConfig

DEFAULT_CHUNK_SIZE = 20000
ENVELOPE_SLACK = 1e-9
RNG_NAME = "numpy.random.Philox"


class EnvelopeViolationError(ValueError):
    def __init__(self, ratio: float, point: tuple[float, float]) -> None:
        self.ratio = ratio
        self.point = point
        super().__init__(
            f"Proposal envelope violated: p/(M q) = {ratio:.6f} > 1 at x1={point[0]:.4f}, x2={point[1]:.4f}"
        )


@dataclass(frozen=True, eq=False)
class SampleBatch:
    seed: int
    count: int
    samples: np.ndarray
    acceptance_rate: float
    proposals: int
    chunk_size: int

    def __post_init__(self) -> None:
        if self.samples.shape != (self.count, 2):
            raise ValueError(f"Sample array shape {self.samples.shape} does not match count {self.count}")
        if self.count > 0 and not 0.0 < self.acceptance_rate <= 1.0:
            raise ValueError(f"Acceptance rate must be in (0, 1]. Got {self.acceptance_rate!r}")
        self.samples.setflags(write=False)

    @property
    def x1(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def x2(self) -> np.ndarray:
        return self.samples[:, 1]


@dataclass(frozen=True)
class EnvelopeCheck:
    max_ratio: float
    extent: float
    points: int


def envelope_for(density: JointDensity) -> ProposalConfig:
    return density.default_proposal()


def verify_envelope(
    density: JointDensity,
    proposal: ProposalConfig,
    extent: float = 8.0,
    points: int = 161,
) -> EnvelopeCheck:
    axis = np.linspace(-extent, extent, points)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    ratio = density(x1, x2) / (proposal.envelope * proposal.pdf(x1, x2))
    worst = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    max_ratio = float(ratio[worst])
    if max_ratio > 1.0 + ENVELOPE_SLACK:
        raise EnvelopeViolationError(max_ratio, (float(x1[worst]), float(x2[worst])))
    return EnvelopeCheck(max_ratio=max_ratio, extent=extent, points=points)


def _draw_chunk(
    density: JointDensity, proposal: ProposalConfig, child: np.random.SeedSequence, size: int
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(child))
    candidates = rng.standard_normal((size, 2)) * proposal.sigma
    uniforms = rng.random(size)
    x1 = candidates[:, 0]
    x2 = candidates[:, 1]
    accepted = uniforms * proposal.envelope * proposal.pdf(x1, x2) < density(x1, x2)
    index = np.flatnonzero(accepted)
    return candidates[index], index


def rejection_sample(
    density: JointDensity,
    proposal: ProposalConfig,
    seed: int,
    count: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    verify: bool = True,
    check_extent: float = 8.0,
    check_points: int = 161,
) -> SampleBatch:
    if count < 0:
        raise ValueError(f"Sample count must be >= 0. Got {count!r}")
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"Seed must be an unsigned 64-bit integer. Got {seed!r}")
    if chunk_size < 1:
        raise ValueError(f"Chunk size must be >= 1. Got {chunk_size!r}")
    if verify:
        verify_envelope(density, proposal, extent=check_extent, points=check_points)
    if count == 0:
        return SampleBatch(seed, 0, np.empty((0, 2)), 0.0, 0, chunk_size)

    root = np.random.SeedSequence(int(seed))
    wave = max(1, int(workers))
    accepted: list[np.ndarray] = []
    total = 0
    proposals = 0
    with ThreadPoolExecutor(max_workers=wave) as pool:
        while total < count:
            children = root.spawn(wave)
            results = list(pool.map(lambda c: _draw_chunk(density, proposal, c, chunk_size), children))
            for samples, index in results:
                needed = count - total
                if needed <= 0:
                    break
                if samples.shape[0] >= needed:
                    accepted.append(samples[:needed])
                    proposals += int(index[needed - 1]) + 1
                    total = count
                    break
                accepted.append(samples)
                proposals += chunk_size
                total += samples.shape[0]
    merged = np.concatenate(accepted, axis=0)
    return SampleBatch(
        seed=int(seed),
        count=count,
        samples=np.ascontiguousarray(merged),
        acceptance_rate=count / proposals,
        proposals=proposals,
        chunk_size=chunk_size,
    )


def acceptance_standard_error(batch: SampleBatch, expected: float) -> float:
    return math.sqrt(expected * (1.0 - expected) / batch.proposals)


@dataclass(frozen=True)
class SampleMoments:
    mean: tuple[float, float]
    variance: tuple[float, float]
    mean_standard_error: tuple[float, float]
    variance_standard_error: tuple[float, float]


def sample_moments(batch: SampleBatch) -> SampleMoments:
    if batch.count < 2:
        raise ValueError("Need at least two samples for moments")
    n = batch.count
    mean = batch.samples.mean(axis=0)
    centered = batch.samples - mean
    var = np.mean(centered**2, axis=0)
    fourth = np.mean(centered**4, axis=0)
    var_se = np.sqrt(np.maximum(fourth - var * var, 0.0) / n)
    return SampleMoments(
        mean=(float(mean[0]), float(mean[1])),
        variance=(float(var[0]), float(var[1])),
        mean_standard_error=(float(math.sqrt(var[0] / n)), float(math.sqrt(var[1] / n))),
        variance_standard_error=(float(var_se[0]), float(var_se[1])),
    )
