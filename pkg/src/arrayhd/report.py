from __future__ import annotations

from pathlib import Path
from typing import Any
import json
import math


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_report(report: dict, path: str | Path) -> None:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(_jsonable(report), indent=2, ensure_ascii=False), encoding="utf-8")


def read_report(path: str | Path) -> dict[str, Any]:
    in_path = Path(path)
    if not in_path.exists():
        raise FileNotFoundError(f"Report not found: {in_path}")
    return json.loads(in_path.read_text(encoding="utf-8"))


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, ensure_ascii=False)
