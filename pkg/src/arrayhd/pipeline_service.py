from __future__ import annotations

from pathlib import Path
import argparse
import json
import subprocess

import numpy as np

from .config import AppConfig, resolve_workers
from .densities import (
    JointDensity,
    PerelomovDensity,
    analytic_grid,
    density_for_state,
    grid_axis,
    oracle_grid,
    unreconciled_perelomov_density,
)
from .fock import FockSpace, vacuum
from .histogram import (
    check_coverage,
    goodness_of_fit,
    histogram,
    max_absolute_bin_error,
    mean_absolute_bin_error,
)
from .homodyne import mixed_mode_operators, mixed_quadratures_from_counts, pixel_counts
from .io_utils import ensure_dir, write_grid_csv, write_map_csv, write_mode_csv, write_samples_csv
from .logging_config import build_run_id, log_artifact, log_stage, setup_logging
from .modes import PixelGrid, gram_matrix, mode_pair
from .report import dumps_report, write_report
from .report_builder import (
    build_densities_report,
    build_header,
    build_simulate_report,
    build_single_detector_report,
    build_verify_report,
)
from .sampling import rejection_sample, sample_moments
from .single_detector import (
    V_ENTRY_NAMES,
    SingularSelectionError,
    feature_rank,
    select_pixels,
    single_detector_quadratures,
    v_vector_direct,
)
from .verify_service import run_identity_suite


def apply_cli_overrides(cfg: AppConfig, args: argparse.Namespace) -> AppConfig:
    command = getattr(args, "command", None)
    seed = getattr(args, "seed", None)
    if seed is not None:
        if command in ("single-detector", "verify"):
            cfg.selection.seed = seed
        else:
            cfg.sampling.seed = seed
    if getattr(args, "samples", None) is not None:
        cfg.sampling.samples = args.samples
    if getattr(args, "bins", None) is not None:
        cfg.histogram.bins = args.bins
    value_range = getattr(args, "range", None)
    if value_range is not None:
        if command == "densities":
            cfg.densities.range = value_range
        else:
            cfg.histogram.range = value_range
    if getattr(args, "points", None) is not None:
        cfg.densities.points = args.points
    if getattr(args, "basis", None) is not None:
        cfg.basis.preset = args.basis
    if getattr(args, "strategy", None) is not None:
        cfg.selection.strategy = args.strategy
    if getattr(args, "seeds", None) is not None:
        cfg.selection.seeds = args.seeds
    if getattr(args, "workers", None) is not None:
        cfg.sampling.workers = args.workers
        cfg.selection.workers = args.workers
    cfg.validate()
    return cfg


def _start(args: argparse.Namespace):
    out_dir = ensure_dir(args.out)
    run_id = build_run_id()
    log = setup_logging(out_dir=out_dir, run_id=run_id, debug=args.debug)
    log.bind(event="pipeline.start", stage="pipeline", status="started", command=args.command).info(
        "pipeline_started"
    )
    cfg = AppConfig.load(path=args.config, preset=args.preset)
    cfg = apply_cli_overrides(cfg, args)
    log.bind(event="config.loaded", stage="config", status="ok", preset=args.preset).info("config_loaded")
    return out_dir, run_id, log, cfg


def _finish(log, out_dir: Path, report: dict, stage: str) -> int:
    path = out_dir / "report.json"
    write_report(report, path)
    log_artifact(log, "report.write", "report_json", path)
    status = report["status"]
    log.bind(event="pipeline.end", stage=stage, status=status).info("pipeline_finished")
    print(dumps_report(report))
    return 0 if status == "ok" else 1


def _fmt(value: float) -> str:
    return f"{value:.4f}".replace("-", "m")


def run_tag(cfg: AppConfig) -> str:
    """File stem naming the state family and its parameters."""
    s = cfg.state
    phases = f"p{_fmt(s.phi1)}_{_fmt(s.phi2)}"
    if s.family == "perelomov":
        return f"perelomov_r{_fmt(s.r)}_g{_fmt(s.gamma)}_{phases}"
    if s.family == "truncated":
        return f"truncated_c{_fmt(s.c1)}_{_fmt(s.c2)}_d{_fmt(s.delta)}_{phases}"
    return f"vacuum_{phases}"


def density_from_config(cfg: AppConfig) -> JointDensity:
    s = cfg.state
    return density_for_state(
        s.family, r=s.r, gamma=s.gamma, c1=s.c1, c2=s.c2, delta=s.delta, phi1=s.phi1, phi2=s.phi2
    )


def run_verify(args: argparse.Namespace) -> int:
    out_dir, run_id, log, cfg = _start(args)
    with log_stage(log, "verify"):
        outcome = run_identity_suite(cfg, log)
    report = build_verify_report(
        cfg=cfg,
        header=build_header(run_id, _git_commit()),
        checks=outcome.checks,
        inversion=outcome.inversion,
    )
    return _finish(log, out_dir, report, "verify")


def run_simulate(args: argparse.Namespace) -> int:
    out_dir, run_id, log, cfg = _start(args)
    density = density_from_config(cfg)
    proposal = density.default_proposal()
    half = cfg.histogram.range
    edges = np.linspace(-half, half, cfg.histogram.bins + 1)

    with log_stage(log, "simulate.coverage"):
        mass = check_coverage(density, edges, edges, cfg.histogram.min_coverage)

    with log_stage(log, "simulate.sample", seed=cfg.sampling.seed, samples=cfg.sampling.samples):
        batch = rejection_sample(
            density,
            proposal,
            seed=cfg.sampling.seed,
            count=cfg.sampling.samples,
            chunk_size=cfg.sampling.chunk_size,
            workers=resolve_workers(cfg.sampling.workers),
            check_extent=cfg.sampling.envelope_check_range,
            check_points=cfg.sampling.envelope_check_points,
        )
    log.bind(
        event="simulate.acceptance",
        stage="simulate.sample",
        status="ok",
        acceptance_rate=batch.acceptance_rate,
        expected=proposal.expected_acceptance,
    ).info("acceptance_measured")

    with log_stage(log, "simulate.histogram", bins=cfg.histogram.bins):
        hist = histogram(batch, cfg.histogram.bins, ((-half, half), (-half, half)))
        gof = goodness_of_fit(hist, density, batch, cfg.histogram.min_expected)
        moments = sample_moments(batch)
        mean_error = mean_absolute_bin_error(hist, density)
        max_error = max_absolute_bin_error(hist, density)

    stem = f"{run_tag(cfg)}_seed{cfg.sampling.seed}"
    artifacts: dict[str, Path] = {}
    with log_stage(log, "simulate.export"):
        cx, cy = hist.centers()
        artifacts["samples_csv"] = write_samples_csv(out_dir / f"{stem}_samples.csv", batch.samples)
        artifacts["histogram_csv"] = write_grid_csv(out_dir / f"{stem}_histogram.csv", cx, cy, hist.density)
        x1, x2 = np.meshgrid(cx, cy, indexing="ij")
        analytic = np.asarray(density(x1, x2), dtype=np.float64)
        artifacts["analytic_csv"] = write_grid_csv(out_dir / f"{stem}_analytic.csv", cx, cy, analytic)
        hist_json = out_dir / f"{stem}_histogram.json"
        hist_json.write_text(
            json.dumps(
                {
                    "x_edges": hist.x_edges.tolist(),
                    "y_edges": hist.y_edges.tolist(),
                    "counts": hist.counts.tolist(),
                    "overflow": hist.overflow,
                    "sample_count": hist.sample_count,
                },
                indent=2,
            ),
            encoding="utf-8",
        )
        artifacts["histogram_json"] = hist_json
        if args.plots:
            from .visualize import save_density_comparison

            artifacts["comparison_png"] = out_dir / f"{stem}_comparison.png"
            save_density_comparison(artifacts["comparison_png"], cx, cy, analytic, hist.density, title=stem)
        for name, path in artifacts.items():
            log_artifact(log, "simulate.export", name, path)

    report = build_simulate_report(
        cfg=cfg,
        header=build_header(run_id, _git_commit()),
        density=density,
        proposal=proposal,
        batch=batch,
        hist=hist,
        gof=gof,
        moments=moments,
        coverage=mass,
        mean_bin_error=mean_error,
        max_bin_error=max_error,
        artifacts=artifacts,
    )
    return _finish(log, out_dir, report, "simulate")


def run_densities(args: argparse.Namespace) -> int:
    out_dir, run_id, log, cfg = _start(args)
    density = density_from_config(cfg)
    axis = grid_axis(cfg.densities.points, cfg.densities.range)
    weight = cfg.fock.density_truncation_weight

    with log_stage(log, "densities.evaluate", family=density.family):
        analytic = analytic_grid(density, axis)
        oracle = oracle_grid(density, axis, weight)
        delta = analytic - oracle
        unreconciled = None
        if isinstance(density, PerelomovDensity):
            x1, x2 = np.meshgrid(axis, axis, indexing="ij")
            literal = unreconciled_perelomov_density(density.params, x1, x2)
            unreconciled = float(np.max(np.abs(literal - oracle)))

    stem = f"densities_{run_tag(cfg)}"
    artifacts: dict[str, Path] = {}
    with log_stage(log, "densities.export"):
        artifacts["analytic_csv"] = write_grid_csv(out_dir / f"{stem}_analytic.csv", axis, axis, analytic)
        artifacts["oracle_csv"] = write_grid_csv(out_dir / f"{stem}_oracle.csv", axis, axis, oracle)
        artifacts["delta_csv"] = write_grid_csv(out_dir / f"{stem}_delta.csv", axis, axis, delta)
        if args.plots:
            from .visualize import save_delta_map

            artifacts["delta_png"] = out_dir / f"{stem}_delta.png"
            save_delta_map(artifacts["delta_png"], axis, axis, delta)
        for name, path in artifacts.items():
            log_artifact(log, "densities.export", name, path)

    report = build_densities_report(
        cfg=cfg,
        header=build_header(run_id, _git_commit()),
        density=density,
        max_delta=float(np.max(np.abs(delta))),
        unreconciled_max_delta=unreconciled,
        oracle_cutoff=density.fock_state(weight).space.cutoff,
        artifacts=artifacts,
    )
    return _finish(log, out_dir, report, "densities")


def run_single_detector(args: argparse.Namespace) -> int:
    out_dir, run_id, log, cfg = _start(args)
    grid = PixelGrid(cfg.grid.nx, cfg.grid.ny, cfg.grid.dx, cfg.grid.dy)
    space = FockSpace(cfg.fock.cutoff)
    modes = mode_pair(grid, cfg.basis.preset, waist=cfg.basis.waist, tilt=cfg.basis.tilt)
    header = build_header(run_id, _git_commit())

    artifacts: dict[str, Path] = {
        "mode1_csv": write_mode_csv(out_dir / f"mode1_{cfg.basis.preset}.csv", modes[0]),
        "mode2_csv": write_mode_csv(out_dir / f"mode2_{cfg.basis.preset}.csv", modes[1]),
    }
    for name, path in artifacts.items():
        log_artifact(log, "single.modes", name, path)

    try:
        with log_stage(log, "single.select", strategy=cfg.selection.strategy, seeds=cfg.selection.seeds):
            result = select_pixels(
                modes,
                grid,
                cfg.lo,
                strategy=cfg.selection.strategy,
                seeds=cfg.selection.seeds,
                seed=cfg.selection.seed,
                max_condition=cfg.selection.max_condition,
                workers=resolve_workers(cfg.selection.workers),
            )
    except SingularSelectionError as exc:
        gram = gram_matrix(list(modes))
        diagnosis = {
            "reason": str(exc),
            "best_condition": exc.condition,
            "max_condition": cfg.selection.max_condition,
            "feature_rank": feature_rank(modes, cfg.lo),
            "required_rank": 8,
            "mode_overlap": abs(complex(gram[0, 1])),
            "modes_real": [m.is_real() for m in modes],
        }
        report = build_single_detector_report(
            cfg=cfg,
            header=header,
            status="failed",
            selection=None,
            deviations=[],
            diagnosis=diagnosis,
            artifacts=artifacts,
        )
        return _finish(log, out_dir, report, "single-detector")

    with log_stage(log, "single.recover", condition=result.m_matrix.condition):
        ops = mixed_mode_operators(space, cfg.mixer)
        counts = pixel_counts(modes, ops, cfg.lo, 1)
        v, single = single_detector_quadratures(counts, modes, result, cfg.lo)
        two_port = mixed_quadratures_from_counts(modes, ops, cfg.lo)
        direct = v_vector_direct(ops, cfg.lo)

    tolerance = 1e-9 * result.m_matrix.condition
    pairs = [(f"mixed_quadrature_{k + 1}", single[k], two_port[k]) for k in (0, 1)]
    pairs += [(f"v[{name}]", v[i], direct[i]) for i, name in enumerate(V_ENTRY_NAMES)]
    deviations = []
    for quantity, recovered, reference in pairs:
        deviation = recovered.deviation(reference)
        deviations.append(
            {
                "quantity": quantity,
                "deviation": deviation,
                "tolerance": tolerance,
                "passed": deviation <= tolerance,
            }
        )

    artifacts["counts_vacuum_csv"] = write_map_csv(
        out_dir / f"counts_vacuum_{cfg.basis.preset}.csv", counts.expectation_map(vacuum(space))
    )
    log_artifact(log, "single.export", "counts_vacuum_csv", artifacts["counts_vacuum_csv"])

    status = "ok" if all(d["passed"] for d in deviations) else "failed"
    report = build_single_detector_report(
        cfg=cfg,
        header=header,
        status=status,
        selection=result,
        deviations=deviations,
        diagnosis=None,
        artifacts=artifacts,
    )
    return _finish(log, out_dir, report, "single-detector")


COMMANDS = {
    "verify": run_verify,
    "simulate": run_simulate,
    "single-detector": run_single_detector,
    "densities": run_densities,
}


def _git_commit() -> str | None:
    try:
        return (
            subprocess.check_output(["git", "rev-parse", "HEAD"], stderr=subprocess.DEVNULL)
            .decode("utf-8")
            .strip()
        )
    except (FileNotFoundError, OSError, subprocess.CalledProcessError):
        return None
