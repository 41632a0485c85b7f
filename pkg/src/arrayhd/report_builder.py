from __future__ import annotations

from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .config import AppConfig
from .densities import JointDensity, ProposalConfig
from .histogram import GoodnessOfFit, Histogram2D
from .metrics import IdentityCheck, summarize_checks
from .sampling import RNG_NAME, SampleBatch, SampleMoments
from .single_detector import V_ENTRY_NAMES, SelectionResult


def build_header(run_id: str, git_commit: str | None) -> dict[str, Any]:
    """The only report section allowed to change between identical runs."""
    return {
        "run_id": run_id,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "git_commit": git_commit,
    }


def _base(command: str, status: str, cfg: AppConfig, header: dict[str, Any]) -> dict[str, Any]:
    return {"header": header, "command": command, "status": status, "config": cfg.to_dict()}


def _artifacts(paths: dict[str, Path]) -> dict[str, str]:
    return {name: str(Path(path).resolve()) for name, path in paths.items()}


def build_verify_report(
    *,
    cfg: AppConfig,
    header: dict[str, Any],
    checks: list[IdentityCheck],
    inversion: dict[str, Any],
) -> dict[str, Any]:
    summary = summarize_checks(checks)
    status = "ok" if summary.failed == 0 else "failed"
    report = _base("verify", status, cfg, header)
    report["summary"] = asdict(summary)
    report["inversion"] = inversion
    report["checks"] = [c.to_dict() for c in checks]
    return report


def build_simulate_report(
    *,
    cfg: AppConfig,
    header: dict[str, Any],
    density: JointDensity,
    proposal: ProposalConfig,
    batch: SampleBatch,
    hist: Histogram2D,
    gof: GoodnessOfFit,
    moments: SampleMoments,
    coverage: float,
    mean_bin_error: float,
    max_bin_error: float,
    artifacts: dict[str, Path],
) -> dict[str, Any]:
    analytic_var = density.marginal_variances()
    report = _base("simulate", "ok", cfg, header)
    report["state"] = density.describe()
    report["sampling"] = {
        "rng": RNG_NAME,
        "seed": batch.seed,
        "count": batch.count,
        "proposals": batch.proposals,
        "chunk_size": batch.chunk_size,
        "acceptance_rate": batch.acceptance_rate,
        "expected_acceptance": proposal.expected_acceptance,
        "proposal_sigma": proposal.sigma,
        "envelope": proposal.envelope,
    }
    report["histogram"] = {
        "bins": list(hist.bins),
        "extent": list(hist.extent),
        "overflow": hist.overflow,
        "coverage": coverage,
        "mean_absolute_bin_error": mean_bin_error,
        "max_absolute_bin_error": max_bin_error,
    }
    report["moments"] = {
        "mean": list(moments.mean),
        "variance": list(moments.variance),
        "analytic_variance": list(analytic_var),
        "variance_relative_error": [
            abs(moments.variance[i] - analytic_var[i]) / analytic_var[i] for i in (0, 1)
        ],
        "mean_standard_error": list(moments.mean_standard_error),
        "variance_standard_error": list(moments.variance_standard_error),
    }
    report["goodness_of_fit"] = gof.to_dict()
    report["artifacts"] = _artifacts(artifacts)
    return report


def build_densities_report(
    *,
    cfg: AppConfig,
    header: dict[str, Any],
    density: JointDensity,
    max_delta: float,
    unreconciled_max_delta: float | None,
    oracle_cutoff: int,
    artifacts: dict[str, Path],
) -> dict[str, Any]:
    report = _base("densities", "ok", cfg, header)
    report["state"] = density.describe()
    report["grid"] = {"points": cfg.densities.points, "range": cfg.densities.range}
    report["comparison"] = {
        "max_abs_delta": max_delta,
        "tolerance": cfg.verify.density_tolerance,
        "within_tolerance": max_delta < cfg.verify.density_tolerance,
        "unreconciled_max_abs_delta": unreconciled_max_delta,
        "oracle_cutoff": oracle_cutoff,
    }
    report["artifacts"] = _artifacts(artifacts)
    return report


def build_single_detector_report(
    *,
    cfg: AppConfig,
    header: dict[str, Any],
    status: str,
    selection: SelectionResult | None,
    deviations: list[dict[str, Any]],
    diagnosis: dict[str, Any] | None,
    artifacts: dict[str, Path],
) -> dict[str, Any]:
    report = _base("single-detector", status, cfg, header)
    report["basis"] = cfg.basis.preset
    report["selection"] = selection.to_dict() if selection is not None else None
    report["v_entries"] = list(V_ENTRY_NAMES)
    report["deviations"] = deviations
    report["diagnosis"] = diagnosis
    report["artifacts"] = _artifacts(artifacts)
    return report
