from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .fock import OperatorMatrix, truncated_block

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_EXPECTED_FAILURE = "expected_failure"


@dataclass
class IdentityCheck:
    name: str
    deviation: float
    tolerance: float
    status: str
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != STATUS_FAIL

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class CheckSummary:
    total: int
    passed: int
    failed: int
    expected_failures: int
    worst_check: str | None
    worst_ratio: float


def check(name: str, deviation: float, tolerance: float, **details: Any) -> IdentityCheck:
    ok = bool(np.isfinite(deviation)) and deviation <= tolerance
    return IdentityCheck(
        name=name,
        deviation=float(deviation),
        tolerance=float(tolerance),
        status=STATUS_PASS if ok else STATUS_FAIL,
        details=dict(details),
    )


def expected_failure(name: str, reason: str, **details: Any) -> IdentityCheck:
    return IdentityCheck(
        name=name,
        deviation=float("nan"),
        tolerance=0.0,
        status=STATUS_EXPECTED_FAILURE,
        details={"reason": reason, **details},
    )


def operator_deviation(a: OperatorMatrix, b: OperatorMatrix) -> float:
    return a.deviation(b)


def subspace_deviation(a: OperatorMatrix, b: OperatorMatrix, margin: int = 1) -> float:
    """Deviation restricted to the occupations that truncation cannot reach."""
    return float(np.max(np.abs(truncated_block(a, margin) - truncated_block(b, margin))))


def summarize_checks(checks: list[IdentityCheck]) -> CheckSummary:
    if not checks:
        return CheckSummary(0, 0, 0, 0, None, 0.0)
    failed = [c for c in checks if c.status == STATUS_FAIL]
    expected = [c for c in checks if c.status == STATUS_EXPECTED_FAILURE]
    scored = [c for c in checks if c.status != STATUS_EXPECTED_FAILURE and c.tolerance > 0.0]
    worst = max(scored, key=lambda c: c.deviation / c.tolerance, default=None)
    return CheckSummary(
        total=len(checks),
        passed=len(checks) - len(failed) - len(expected),
        failed=len(failed),
        expected_failures=len(expected),
        worst_check=worst.name if worst else None,
        worst_ratio=float(worst.deviation / worst.tolerance) if worst else 0.0,
    )
