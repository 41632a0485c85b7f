from __future__ import annotations

from pathlib import Path
import csv

import numpy as np

from .modes import ModeFunction, PixelGrid


def ensure_dir(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: str | Path) -> Path:
    in_path = Path(path)
    if not in_path.exists():
        raise FileNotFoundError(f"Input file not found: {in_path}")
    return in_path


def _check_header(path: Path, header: list[str], expected: list[str]) -> None:
    if header != expected:
        raise ValueError(f"Unexpected CSV header in {path}: {header}, expected {expected}")


def write_mode_csv(path: str | Path, mode: ModeFunction) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "jprime", "re", "im"])
        for j in range(mode.grid.nx):
            for jp in range(mode.grid.ny):
                value = mode.values[j, jp]
                writer.writerow([j, jp, repr(float(value.real)), repr(float(value.imag))])
    return out


def read_mode_csv(path: str | Path, grid: PixelGrid, label: str = "") -> ModeFunction:
    in_path = _require(path)
    values = np.zeros(grid.shape, dtype=np.complex128)
    seen = np.zeros(grid.shape, dtype=bool)
    with in_path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(in_path, next(reader, []), ["j", "jprime", "re", "im"])
        for row in reader:
            j, jp = int(row[0]), int(row[1])
            if not grid.contains((j, jp)):
                raise ValueError(f"Pixel ({j}, {jp}) in {in_path} is outside the grid")
            values[j, jp] = complex(float(row[2]), float(row[3]))
            seen[j, jp] = True
    if not seen.all():
        raise ValueError(f"Mode file {in_path} does not cover every pixel")
    return ModeFunction(grid, values, label=label)


def write_map_csv(path: str | Path, values: np.ndarray) -> Path:
    """Per-pixel map with header j, jprime, value."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(values, dtype=np.float64)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "jprime", "value"])
        for j in range(arr.shape[0]):
            for jp in range(arr.shape[1]):
                writer.writerow([j, jp, repr(float(arr[j, jp]))])
    return out


def read_map_csv(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    in_path = _require(path)
    values = np.zeros(shape, dtype=np.float64)
    with in_path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(in_path, next(reader, []), ["j", "jprime", "value"])
        for row in reader:
            values[int(row[0]), int(row[1])] = float(row[2])
    return values


def write_samples_csv(path: str | Path, samples: np.ndarray) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2"])
        for x1, x2 in samples:
            writer.writerow([repr(float(x1)), repr(float(x2))])
    return out


def read_samples_csv(path: str | Path) -> np.ndarray:
    in_path = _require(path)
    with in_path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(in_path, next(reader, []), ["x1", "x2"])
        rows = [(float(a), float(b)) for a, b in reader]
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def write_grid_csv(path: str | Path, x1: np.ndarray, x2: np.ndarray, values: np.ndarray) -> Path:
    """Tensor-grid values with header x1, x2, value; rows follow x1 then x2."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (len(x1), len(x2)):
        raise ValueError(f"Grid values shape {arr.shape} does not match axes ({len(x1)}, {len(x2)})")
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "value"])
        for i, a in enumerate(x1):
            for k, b in enumerate(x2):
                writer.writerow([repr(float(a)), repr(float(b)), repr(float(arr[i, k]))])
    return out


def read_grid_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    in_path = _require(path)
    with in_path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(in_path, next(reader, []), ["x1", "x2", "value"])
        rows = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    x1 = np.unique(rows[:, 0])
    x2 = np.unique(rows[:, 1])
    if rows.shape[0] != x1.size * x2.size:
        raise ValueError(f"Grid file {in_path} is not a full tensor grid")
    return x1, x2, rows[:, 2].reshape(x1.size, x2.size)
