"""Summary statistics for firedrill runs."""

from __future__ import annotations

import numpy as np


def compute_percentiles(values: list[float], percentiles: list[int] | None = None) -> dict:
    """Compute percentile statistics for a list of values."""
    if not values:
        return {}
    if percentiles is None:
        percentiles = [50, 90, 95, 99]
    arr = np.array(values)
    result = {
        "mean": float(np.mean(arr)),
        "std": float(np.std(arr)),
        "min": float(np.min(arr)),
        "max": float(np.max(arr)),
    }
    for p in percentiles:
        result[f"p{p}"] = float(np.percentile(arr, p))
    return result


def summarize_upgrades(upgrade_hours: np.ndarray, window_h: float = 48.0) -> dict:
    """Upgrade-time summary; ``nan`` entries are appliances that never upgraded."""
    done = upgrade_hours[~np.isnan(upgrade_hours)]
    n = len(upgrade_hours)
    return {
        "appliances": n,
        "upgraded": int(done.size),
        f"within_{window_h:g}h": float(np.count_nonzero(done <= window_h) / n) if n else 0.0,
        "hours": compute_percentiles(done.tolist()),
    }


def render_summary(summary: dict) -> str:
    lines = [f"{k}={v}" for k, v in summary.items() if k != "hours"]
    lines += [f"hours.{k}={v:.3f}" for k, v in summary["hours"].items()]
    return "\n".join(lines) + "\n"
