from __future__ import annotations

import argparse

from .config import BASIS_PRESETS, PRESET_NAMES, SELECTION_STRATEGIES


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _common() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="Config file (toml/json/yaml)")
    parent.add_argument("--preset", choices=list(PRESET_NAMES), default=None, help="In-package preset")
    parent.add_argument("--out", default="out", help="Output directory")
    parent.add_argument("--debug", action="store_true", help="Debug-level console logging")
    parent.add_argument(
        "--seed",
        type=_seed,
        default=None,
        help="Master seed (sampling, or pixel selection for verify and single-detector)",
    )
    parent.add_argument("--samples", type=_positive_int, default=None, help="Accepted sample count")
    parent.add_argument("--bins", type=_positive_int, default=None, help="Histogram bins per axis")
    parent.add_argument(
        "--range", type=_positive_float, default=None, help="Histogram half-width (densities: grid half-width)"
    )
    parent.add_argument("--workers", type=_positive_int, default=None, help="Worker threads")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arrayhd", description="Array-detector balanced homodyne tomography"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    sub.add_parser("verify", parents=[common], help="Run the operator identity suite")

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo density reconstruction")
    simulate.add_argument("--plots", action="store_true", help="Save PNG comparison figure")

    single = sub.add_parser("single-detector", parents=[common], help="Nine-pixel single-port recovery")
    single.add_argument("--basis", choices=list(BASIS_PRESETS), default=None, help="Signal-mode preset")
    single.add_argument("--strategy", choices=list(SELECTION_STRATEGIES), default=None)
    single.add_argument("--seeds", type=_positive_int, default=None, help="Selection restarts")

    densities = sub.add_parser("densities", parents=[common], help="Analytic vs Fock-oracle density grids")
    densities.add_argument("--points", type=_positive_int, default=None, help="Grid points per axis")
    densities.add_argument("--plots", action="store_true", help="Save PNG delta map")
    return parser
