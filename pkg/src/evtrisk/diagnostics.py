"""Data behind the usual threshold and fit diagnostics.

Plotting positions: ``(i - 0.5)/n`` for normal QQ pairs and ``i/(N_u + 1)``
for the empirical CDF of exceedances. Nothing here renders images; the
CLI writes these tables as CSV.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from evtrisk.errors import DataError, EvtRiskError
from evtrisk.gpd import GpdFit, exceedances, fit_gpd, gpd_cdf, threshold_from_count
from evtrisk.timeseries import LossSeries, ReturnSeries

QQ_PLOTTING_POSITION = "(i-0.5)/n"
ECDF_PLOTTING_POSITION = "i/(N_u+1)"

__all__ = [
    "ScanEntry",
    "StabilityScan",
    "qq_normal",
    "tail_stability_scan",
    "threshold_from_count",
    "fitted_exceedance_curve",
]


def qq_normal(r: ReturnSeries | np.ndarray, mu: float | None = None, sigma: float | None = None) -> np.ndarray:
    """``(theoretical, empirical)`` pairs against a fitted normal, shape ``(n, 2)``.

    ``mu``/``sigma`` default to the sample mean and standard deviation.
    """
    x = np.sort(np.asarray(getattr(r, "returns", r), dtype=float))
    n = len(x)
    if n < 10:
        raise DataError(f"need at least 10 observations for a QQ plot, got {n}")
    mu = float(np.mean(x)) if mu is None else mu
    sigma = float(np.std(x, ddof=1)) if sigma is None else sigma
    if not sigma > 0:
        raise DataError("degenerate series: zero standard deviation")
    z = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([mu + sigma * z, x])


@dataclass(frozen=True)
class ScanEntry:
    n_u: int
    u: float
    xi_hat: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    requested: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def tail_index(self) -> float:
        return math.inf if self.xi_hat == 0 else 1.0 / self.xi_hat


@dataclass(frozen=True)
class StabilityScan:
    entries: tuple[ScanEntry, ...]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def rows(self) -> list[tuple]:
        return [(e.n_u, e.u, e.xi_hat, e.ci_low, e.ci_high, e.tail_index, e.error or "") for e in self.entries]


def _scan_one(x: np.ndarray, count: int) -> ScanEntry:
    try:
        u = threshold_from_count(x, count)
    except DataError as exc:
        return ScanEntry(count, math.nan, requested=count, error=str(exc))
    try:
        fit = fit_gpd(x, threshold_value=u)
    except (EvtRiskError, ValueError) as exc:
        return ScanEntry(int(np.sum(x > u)), u, requested=count, error=str(exc))
    if fit.se_xi is None:
        return ScanEntry(fit.n_u, u, fit.xi, requested=count, error="standard error unavailable")
    half = 1.96 * fit.se_xi
    return ScanEntry(fit.n_u, u, fit.xi, fit.xi - half, fit.xi + half, requested=count)


def tail_stability_scan(losses: LossSeries | np.ndarray, counts: Sequence[int], workers: int = 1) -> StabilityScan:
    """Shape estimates with 95% Wald bands across exceedance counts.

    Failures are reported per entry; output order follows ``counts``.
    """
    x = np.asarray(getattr(losses, "losses", losses), dtype=float)
    counts = [int(c) for c in counts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda c: _scan_one(x, c), counts))
    else:
        entries = [_scan_one(x, c) for c in counts]
    return StabilityScan(tuple(entries))


def fitted_exceedance_curve(fit: GpdFit, excesses) -> np.ndarray:
    """``(x, empirical CDF, model CDF)`` for sorted excesses over ``fit.u``."""
    y = np.sort(np.asarray(excesses, dtype=float))
    m = len(y)
    ecdf = np.arange(1, m + 1) / (m + 1)
    return np.column_stack([y, ecdf, gpd_cdf(y, fit.params)])


def exceedance_curve_from_losses(fit: GpdFit, losses) -> np.ndarray:
    return fitted_exceedance_curve(fit, exceedances(losses, fit.u))
