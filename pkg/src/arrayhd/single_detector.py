"""Nine-pixel recovery of both mixed quadratures from one detector port."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence
import math

import numpy as np

from .config import LOConfig
from .fock import OperatorMatrix
from .homodyne import MixedModeOperators, PixelOperatorField
from .modes import ModeFunction, PixelGrid

SELECTION_SIZE = 9
MAX_CONDITION = 1e8
STRATEGIES = ("greedy-condition", "random-restart")
V_ENTRY_NAMES = (
    "a1d_a1",
    "a2d_a2",
    "a1d_a2",
    "a2d_a1",
    "exp(-i phi) a1",
    "exp(i phi) a1d",
    "exp(-i phi) a2",
    "exp(i phi) a2d",
)


class SingularSelectionError(ValueError):
    def __init__(self, message: str, condition: float) -> None:
        self.condition = condition
        super().__init__(message)


@dataclass(frozen=True)
class PixelSelection:
    grid: PixelGrid
    pixels: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pixels = tuple((int(j), int(jp)) for j, jp in self.pixels)
        if len(pixels) != SELECTION_SIZE:
            raise ValueError(f"Selection needs exactly {SELECTION_SIZE} pixels. Got {len(pixels)}")
        if len(set(pixels)) != SELECTION_SIZE:
            raise ValueError(f"Selection pixels must be distinct. Got {pixels}")
        for pixel in pixels:
            if not self.grid.contains(pixel):
                raise ValueError(f"Pixel {pixel} is outside the {self.grid.nx}x{self.grid.ny} grid")
        object.__setattr__(self, "pixels", pixels)

    @property
    def reference(self) -> tuple[int, int]:
        return self.pixels[0]

    @classmethod
    def from_flat(cls, grid: PixelGrid, flat: Sequence[int]) -> PixelSelection:
        return cls(grid, tuple(divmod(int(i), grid.ny) for i in flat))


@dataclass(frozen=True, eq=False)
class MMatrix:
    entries: np.ndarray
    s_factor: float
    condition: float

    def is_invertible(self, max_condition: float = MAX_CONDITION) -> bool:
        return math.isfinite(self.condition) and self.condition <= max_condition


@dataclass(frozen=True, eq=False)
class VVector:
    """Entries in the order a1'^+a1', a2'^+a2', a1'^+a2', a2'^+a1', e^{-i phi}a1', ... ."""

    entries: tuple[OperatorMatrix, ...]

    def __post_init__(self) -> None:
        if len(self.entries) != 8:
            raise ValueError(f"VVector needs 8 entries. Got {len(self.entries)}")

    def __getitem__(self, index: int) -> OperatorMatrix:
        return self.entries[index]

    def pairing_deviation(self) -> float:
        """Largest violation of the Hermitian and adjoint-pair structure."""
        e = self.entries
        checks = [
            e[0].hermiticity_deviation(),
            e[1].hermiticity_deviation(),
            e[3].deviation(e[2].adjoint()),
            e[5].deviation(e[4].adjoint()),
            e[7].deviation(e[6].adjoint()),
        ]
        return float(max(checks))


@dataclass(frozen=True)
class SelectionResult:
    selection: PixelSelection
    m_matrix: MMatrix
    strategy: str
    seed: int
    seed_index: int
    seeds_evaluated: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "pixels": [list(p) for p in self.selection.pixels],
            "reference": list(self.selection.reference),
            "condition_number": self.m_matrix.condition,
            "strategy": self.strategy,
            "seed": self.seed,
            "seed_index": self.seed_index,
            "seeds_evaluated": self.seeds_evaluated,
        }


def _mode_values(modes: Sequence[ModeFunction]) -> tuple[np.ndarray, np.ndarray, PixelGrid]:
    modes = list(modes)
    if len(modes) != 2:
        raise ValueError(f"Single-detector scheme needs exactly 2 modes. Got {len(modes)}")
    if modes[0].grid != modes[1].grid:
        raise ValueError("Signal modes must share one pixel grid")
    return modes[0].values, modes[1].values, modes[0].grid


def _s_factor(grid: PixelGrid, lo: LOConfig) -> float:
    return lo.beta / math.sqrt(grid.Dx * grid.Dy)


def pixel_features(modes: Sequence[ModeFunction], lo: LOConfig) -> np.ndarray:
    """Per-pixel row template, shape (nx, ny, 8); M rows are f(reference) - f(k)."""
    u1, u2, grid = _mode_values(modes)
    s = _s_factor(grid, lo)
    return np.stack(
        [
            np.abs(u1) ** 2,
            np.abs(u2) ** 2,
            np.conj(u1) * u2,
            u1 * np.conj(u2),
            s * u1,
            s * np.conj(u1),
            s * u2,
            s * np.conj(u2),
        ],
        axis=-1,
    ).astype(np.complex128)


def condition_number(matrix: np.ndarray) -> float:
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[-1] <= 0.0 or not np.isfinite(singular[-1]):
        return math.inf
    return float(singular[0] / singular[-1])


def feature_rank(modes: Sequence[ModeFunction], lo: LOConfig, tolerance: float = 1e-10) -> int:
    """Rank of every reference-minus-pixel row at once; below 8 no selection can succeed."""
    features = pixel_features(modes, lo).reshape(-1, 8)
    rows = features[0][None, :] - features[1:]
    singular = np.linalg.svd(rows, compute_uv=False)
    if singular.size == 0 or singular[0] == 0.0:
        return 0
    return int(np.sum(singular > tolerance * singular[0]))


def build_m_matrix(modes: Sequence[ModeFunction], sel: PixelSelection, lo: LOConfig) -> MMatrix:
    features = pixel_features(modes, lo)
    ref = features[sel.reference]
    rows = np.array([ref - features[pixel] for pixel in sel.pixels[1:]], dtype=np.complex128)
    return MMatrix(entries=rows, s_factor=_s_factor(sel.grid, lo), condition=condition_number(rows))


def v_vector_direct(mixed_ops: MixedModeOperators, lo: LOConfig) -> VVector:
    down = np.exp(-1j * lo.phi)
    up = np.exp(1j * lo.phi)
    return VVector(
        (
            mixed_ops.term("a1d_a1"),
            mixed_ops.term("a2d_a2"),
            mixed_ops.term("a1d_a2"),
            mixed_ops.term("a2d_a1"),
            mixed_ops.term("a1") * down,
            mixed_ops.term("a1d") * up,
            mixed_ops.term("a2") * down,
            mixed_ops.term("a2d") * up,
        )
    )


def single_port_differences(counts: PixelOperatorField, sel: PixelSelection) -> list[OperatorMatrix]:
    """n_d(k) = N(reference) - N(k) for k = 2..9, all from one port."""
    if counts.settings.kind != "counts":
        raise ValueError(f"Expected a pixel-count field, got '{counts.settings.kind}'")
    if counts.grid != sel.grid:
        raise ValueError("Selection and count field use different grids")
    out = []
    for pixel in sel.pixels[1:]:
        weights = np.zeros(sel.grid.shape, dtype=np.complex128)
        weights[sel.reference] = 1.0
        weights[pixel] = -1.0
        out.append(counts.weighted_sum(weights, hermitian=True))
    return out


def recover_v(
    nd: Sequence[OperatorMatrix], m: MMatrix, grid: PixelGrid, max_condition: float = MAX_CONDITION
) -> VVector:
    if len(nd) != 8:
        raise ValueError(f"Need 8 difference-count operators. Got {len(nd)}")
    if not m.is_invertible(max_condition):
        raise SingularSelectionError(f"M matrix is singular (condition {m.condition:.3e})", m.condition)
    space = nd[0].space
    inverse = np.linalg.inv(m.entries)
    stacked = np.stack([op.entries for op in nd])
    recovered = (2.0 / grid.pixel_area) * np.tensordot(inverse, stacked, axes=1)
    return VVector(tuple(OperatorMatrix(space, block) for block in recovered))


def quadratures_from_v(v: VVector) -> tuple[OperatorMatrix, OperatorMatrix]:
    root2 = math.sqrt(2.0)
    return (v[4] + v[5]) / root2, (v[6] + v[7]) / root2


def _partial_conditions(blocks: np.ndarray) -> np.ndarray:
    singular = np.linalg.svd(blocks, compute_uv=False)
    smallest = singular[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = singular[..., 0] / smallest
    return np.where(smallest > 0.0, ratio, np.inf)


def _greedy(features: np.ndarray, rng: np.random.Generator) -> tuple[list[int], float]:
    n_pixels = features.shape[0]
    first = [int(i) for i in rng.choice(n_pixels, size=2, replace=False)]
    reference = features[first[0]]
    chosen = list(first)
    rows = [reference - features[first[1]]]
    while len(chosen) < SELECTION_SIZE:
        available = np.setdiff1d(np.arange(n_pixels), chosen)
        candidates = reference[None, :] - features[available]
        blocks = np.concatenate(
            [np.broadcast_to(np.array(rows), (available.size, len(rows), 8)), candidates[:, None, :]],
            axis=1,
        )
        best = int(np.argmin(_partial_conditions(blocks)))
        chosen.append(int(available[best]))
        rows.append(candidates[best])
    return chosen, condition_number(np.array(rows))


def _random_restart(features: np.ndarray, rng: np.random.Generator) -> tuple[list[int], float]:
    chosen = [int(i) for i in rng.choice(features.shape[0], size=SELECTION_SIZE, replace=False)]
    rows = features[chosen[0]][None, :] - features[chosen[1:]]
    return chosen, condition_number(rows)


def select_pixels(
    modes: Sequence[ModeFunction],
    grid: PixelGrid,
    lo: LOConfig,
    strategy: str = "greedy-condition",
    seeds: int = 500,
    seed: int = 0,
    max_condition: float = MAX_CONDITION,
    workers: int = 1,
) -> SelectionResult:
    """Search pixel sets for a well-conditioned M; the winner is the lowest (condition, seed index)."""
    if strategy not in STRATEGIES:
        raise ValueError(f"Unknown selection strategy '{strategy}'. Expected one of {list(STRATEGIES)}")
    if grid.size < SELECTION_SIZE:
        raise ValueError(f"Grid has {grid.size} pixels; the scheme needs at least {SELECTION_SIZE}")
    features = pixel_features(modes, lo).reshape(-1, 8)
    search = _greedy if strategy == "greedy-condition" else _random_restart
    children = np.random.SeedSequence(seed).spawn(seeds)

    def run(child: np.random.SeedSequence) -> tuple[list[int], float]:
        return search(features, np.random.Generator(np.random.Philox(child)))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(run, children))

    best_index = min(range(len(outcomes)), key=lambda i: (outcomes[i][1], i))
    flat, condition = outcomes[best_index]
    if not math.isfinite(condition) or condition > max_condition:
        raise SingularSelectionError(
            f"No invertible pixel selection found with strategy '{strategy}' over {seeds} seeds "
            f"(best condition {condition:.3e} > {max_condition:.1e})",
            condition,
        )
    selection = PixelSelection.from_flat(grid, flat)
    return SelectionResult(
        selection=selection,
        m_matrix=build_m_matrix(modes, selection, lo),
        strategy=strategy,
        seed=seed,
        seed_index=best_index,
        seeds_evaluated=seeds,
    )


def single_detector_quadratures(
    counts: PixelOperatorField, modes: Sequence[ModeFunction], result: SelectionResult, lo: LOConfig
) -> tuple[VVector, tuple[OperatorMatrix, OperatorMatrix]]:
    nd = single_port_differences(counts, result.selection)
    v = recover_v(nd, build_m_matrix(modes, result.selection, lo), result.selection.grid)
    return v, quadratures_from_v(v)
