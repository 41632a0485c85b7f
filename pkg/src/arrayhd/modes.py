from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence
import hashlib
import math

import numpy as np
from scipy.special import eval_hermite

MODE_NORMALIZATION_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-8
MODE_FAMILIES = ("hermite-gauss", "vortex", "constant")
BASIS_PRESETS = ("hermite-gauss", "real-hermite-gauss", "vortex", "constant")


class RankDeficiencyError(ValueError):
    def __init__(self, index: int, residual: float) -> None:
        self.index = index
        self.residual = residual
        super().__init__(
            f"Mode field {index} is linearly dependent on the previous fields "
            f"(residual norm^2 {residual:.3e} <= {RANK_TOLERANCE:.0e})"
        )


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PixelGrid:
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self) -> None:
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError(f"Pixel counts must be >= 1. Got nx={self.nx!r}, ny={self.ny!r}")
        if not (float(self.dx) > 0.0 and float(self.dy) > 0.0):
            raise ValueError(f"Pixel dimensions must be > 0. Got dx={self.dx!r}, dy={self.dy!r}")

    @property
    def Dx(self) -> float:
        return self.nx * self.dx

    @property
    def Dy(self) -> float:
        return self.ny * self.dy

    @property
    def pixel_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates, centered on the detector, indexed [j, j']."""
        x = (np.arange(self.nx) + 0.5) * self.dx - 0.5 * self.Dx
        y = (np.arange(self.ny) + 0.5) * self.dy - 0.5 * self.Dy
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, pixel: tuple[int, int]) -> bool:
        j, jp = pixel
        return 0 <= j < self.nx and 0 <= jp < self.ny

    def fingerprint(self) -> str:
        token = f"{self.nx}:{self.ny}:{float(self.dx)!r}:{float(self.dy)!r}"
        return hashlib.sha256(token.encode("utf-8")).hexdigest()[:16]

    def refined(self, factor: int) -> PixelGrid:
        if int(factor) < 1:
            raise ValueError(f"Refinement factor must be >= 1. Got {factor!r}")
        return PixelGrid(self.nx * factor, self.ny * factor, self.dx / factor, self.dy / factor)


@dataclass(frozen=True, eq=False)
class ModeFunction:
    grid: PixelGrid
    values: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"Mode shape {values.shape} does not match grid {self.grid.shape}")
        norm = self.grid.pixel_area * float(np.sum(np.abs(values) ** 2))
        if abs(norm - 1.0) > MODE_NORMALIZATION_TOLERANCE:
            raise ValueError(f"Mode '{self.label}' is not normalized: dxdy*sum|U|^2={norm!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid: PixelGrid, field: np.ndarray, label: str = "") -> ModeFunction:
        values = np.asarray(field, dtype=np.complex128)
        norm = math.sqrt(grid.pixel_area * float(np.sum(np.abs(values) ** 2)))
        if norm == 0.0:
            raise ValueError(f"Mode field '{label}' is identically zero")
        return cls(grid, values / norm, label=label)

    def with_phase(self, alpha: float) -> ModeFunction:
        return ModeFunction(self.grid, self.values * np.exp(1j * alpha), label=self.label)

    def is_real(self, tolerance: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.values.imag)) <= tolerance)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    modes: tuple[ModeFunction, ...]

    def __post_init__(self) -> None:
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("Mode basis must contain at least one mode")
        object.__setattr__(self, "modes", modes)
        grid = modes[0].grid
        for mode in modes[1:]:
            if mode.grid != grid:
                raise GridMismatchError("All basis modes must share one pixel grid")
        deviation = float(np.max(np.abs(gram_matrix(modes) - np.eye(len(modes)))))
        if deviation > MODE_NORMALIZATION_TOLERANCE:
            raise ValueError(f"Basis is not orthonormal: Gram deviation {deviation:.3e}")

    @property
    def grid(self) -> PixelGrid:
        return self.modes[0].grid

    def __len__(self) -> int:
        return len(self.modes)

    def __getitem__(self, index: int) -> ModeFunction:
        return self.modes[index]

    def __iter__(self) -> Iterator[ModeFunction]:
        return iter(self.modes)

    def with_phase(self, alpha: float) -> ModeBasis:
        return ModeBasis(tuple(mode.with_phase(alpha) for mode in self.modes))

    def fingerprint(self) -> str:
        return modes_fingerprint(self.modes)


def modes_fingerprint(modes: Sequence[ModeFunction]) -> str:
    digest = hashlib.sha256()
    for mode in modes:
        digest.update(mode.grid.fingerprint().encode("utf-8"))
        digest.update(np.ascontiguousarray(mode.values).tobytes())
    return digest.hexdigest()[:16]


def uniform_lo_mode(grid: PixelGrid) -> ModeFunction:
    value = 1.0 / math.sqrt(grid.Dx * grid.Dy)
    return ModeFunction(grid, np.full(grid.shape, value, dtype=np.complex128), label="lo")


def overlap(u: ModeFunction, v: ModeFunction) -> complex:
    if u.grid != v.grid:
        raise GridMismatchError(f"Cannot overlap modes on different grids: {u.grid} vs {v.grid}")
    return complex(u.grid.pixel_area * np.sum(np.conj(u.values) * v.values))


def gram_matrix(modes: Sequence[ModeFunction]) -> np.ndarray:
    return np.array([[overlap(u, v) for v in modes] for u in modes], dtype=np.complex128)


def gram_schmidt(
    raw: Sequence[np.ndarray], grid: PixelGrid, labels: Sequence[str] | None = None
) -> ModeBasis:
    """Modified Gram-Schmidt with one re-orthogonalization pass; input order is kept."""
    area = grid.pixel_area
    names = list(labels) if labels is not None else [f"mode{i + 1}" for i in range(len(raw))]
    ortho: list[np.ndarray] = []
    for index, field in enumerate(raw):
        v = np.array(field, dtype=np.complex128)
        if v.shape != grid.shape:
            raise GridMismatchError(f"Field {index} shape {v.shape} does not match grid {grid.shape}")
        norm = math.sqrt(area * float(np.sum(np.abs(v) ** 2)))
        if norm == 0.0:
            raise RankDeficiencyError(index, 0.0)
        v /= norm
        for _ in range(2):
            for q in ortho:
                v -= (area * np.sum(np.conj(q) * v)) * q
        residual = area * float(np.sum(np.abs(v) ** 2))
        if residual <= RANK_TOLERANCE:
            raise RankDeficiencyError(index, residual)
        ortho.append(v / math.sqrt(residual))
    return ModeBasis(tuple(ModeFunction(grid, v, label=name) for v, name in zip(ortho, names)))


def default_waist(grid: PixelGrid) -> float:
    return 0.25 * min(grid.Dx, grid.Dy)


def sample_mode(grid: PixelGrid, family: str, **params: float) -> np.ndarray:
    """Un-normalized complex pixel field for one mode family."""
    x, y = grid.coordinates()
    waist = float(params.get("waist", default_waist(grid)))
    if waist <= 0.0:
        raise ValueError(f"Mode waist must be > 0. Got {waist!r}")
    if family == "hermite-gauss":
        m = int(params.get("m", 0))
        n = int(params.get("n", 0))
        if m < 0 or n < 0:
            raise ValueError(f"Hermite-Gauss indices must be >= 0. Got m={m}, n={n}")
        envelope = np.exp(-(x * x + y * y) / (waist * waist))
        field = eval_hermite(m, math.sqrt(2.0) * x / waist) * eval_hermite(
            n, math.sqrt(2.0) * y / waist
        ) * envelope
        tilt = 2.0 * math.pi * (
            float(params.get("tilt_x", 0.0)) * x / grid.Dx + float(params.get("tilt_y", 0.0)) * y / grid.Dy
        )
        return field.astype(np.complex128) * np.exp(1j * tilt)
    if family == "vortex":
        ell = int(params.get("ell", 1))
        radius = np.hypot(x, y)
        theta = np.arctan2(y, x)
        return (radius / waist) ** abs(ell) * np.exp(-(radius / waist) ** 2) * np.exp(1j * ell * theta)
    if family == "constant":
        return np.ones(grid.shape, dtype=np.complex128)
    raise ValueError(f"Unknown mode family '{family}'. Expected one of {list(MODE_FAMILIES)}")


def _preset_fields(
    grid: PixelGrid, preset: str, waist: float | None, tilt: float
) -> tuple[list[np.ndarray], list[str]]:
    w = default_waist(grid) if waist is None else waist
    if preset == "hermite-gauss":
        return (
            [
                sample_mode(grid, "hermite-gauss", m=0, n=0, waist=w, tilt_x=tilt),
                sample_mode(grid, "hermite-gauss", m=1, n=0, waist=w, tilt_y=tilt),
            ],
            ["hg00-tilted", "hg10-tilted"],
        )
    if preset == "real-hermite-gauss":
        return (
            [
                sample_mode(grid, "hermite-gauss", m=0, n=0, waist=w),
                sample_mode(grid, "hermite-gauss", m=1, n=0, waist=w),
            ],
            ["hg00", "hg10"],
        )
    if preset == "vortex":
        return (
            [sample_mode(grid, "vortex", ell=1, waist=w), sample_mode(grid, "vortex", ell=2, waist=w)],
            ["vortex1", "vortex2"],
        )
    if preset == "constant":
        constant = sample_mode(grid, "constant")
        return [constant, constant.copy()], ["constant", "constant"]
    raise ValueError(f"Unknown basis preset '{preset}'. Expected one of {list(BASIS_PRESETS)}")


def build_basis(
    grid: PixelGrid, preset: str, waist: float | None = None, tilt: float = 0.5
) -> ModeBasis:
    fields, labels = _preset_fields(grid, preset, waist, tilt)
    return gram_schmidt(fields, grid, labels=labels)


def mode_pair(
    grid: PixelGrid, preset: str, waist: float | None = None, tilt: float = 0.5
) -> tuple[ModeFunction, ModeFunction]:
    """Two normalized signal modes; only the constant preset is not orthonormal."""
    if preset == "constant":
        lo = uniform_lo_mode(grid)
        return (
            ModeFunction(grid, lo.values, label="constant"),
            ModeFunction(grid, lo.values, label="constant"),
        )
    basis = build_basis(grid, preset, waist=waist, tilt=tilt)
    return basis[0], basis[1]
