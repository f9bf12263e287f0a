"""Price ingestion, percent log returns, loss transforms and summary statistics.

Returns are expressed in percent (``100 * ln(P[t+1] / P[t])``) so that
thresholds and every downstream risk measure are in percent of position
value. Losses carry a positive sign: a long position loses when returns are
negative, a short position when they are positive.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Literal, TextIO

import numpy as np
from scipy import special, stats

from evtrisk.errors import DataError

Position = Literal["long", "short"]

JB_PVALUE_FLOOR = 1e-12
SUMMARY_COLUMNS = ("mean", "std_dev", "skewness", "kurtosis", "jb_stat", "jb_pvalue")


@dataclass(frozen=True)
class PriceSeries:
    label: str
    dates: np.ndarray  # datetime64[D]
    prices: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.prices):
            raise DataError("dates and prices differ in length")
        if np.any(~np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise DataError("prices must be finite and strictly positive")
        if len(self.dates) > 1 and np.any(np.diff(self.dates).astype(np.int64) <= 0):
            raise DataError("dates must be strictly increasing")

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    label: str
    returns: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        if not np.all(np.isfinite(r)):
            raise DataError("returns must be finite")
        object.__setattr__(self, "returns", r)

    @property
    def n(self) -> int:
        return len(self.returns)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class LossSeries:
    label: str
    losses: np.ndarray
    position: Position = "long"

    def __post_init__(self):
        if self.position not in ("long", "short"):
            raise ValueError(f"position must be 'long' or 'short', got {self.position!r}")
        object.__setattr__(self, "losses", np.asarray(self.losses, dtype=float))

    @property
    def n(self) -> int:
        return len(self.losses)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std_dev: float
    skewness: float
    kurtosis: float
    jb_stat: float
    jb_pvalue: float

    def to_dict(self) -> dict:
        return {"n": self.n, **{k: getattr(self, k) for k in SUMMARY_COLUMNS}}


# -- ingestion ---------------------------------------------------------------


def _open_source(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data), True
    raise TypeError(f"cannot read price data from {type(source).__name__}")


def load_price_series(source, column: str | int | None = None, delimiter: str = ",") -> PriceSeries:
    """Read one price column from delimited text.

    The first column holds ISO-8601 dates and a header row is required.
    Lines starting with ``#`` are comments and are skipped.
    ``column`` is a header name or a 0-based index into the price columns
    (i.e. excluding the date column); ``None`` picks the first price column.
    Missing values are rejected, never imputed.
    """
    fh, owned = _open_source(source)
    try:
        numbered = [(i, ln) for i, ln in enumerate(fh, start=1) if not ln.lstrip().startswith("#")]
    finally:
        if owned:
            fh.close()
    linenos = [i for i, _ in numbered]
    reader = csv.reader((ln for _, ln in numbered), delimiter=delimiter)
    try:
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty input: header row required", line=1) from None
        hline = linenos[0]
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise DataError("need a date column and at least one price column", line=hline)
        if column is None:
            col = 1
        elif isinstance(column, int) or (isinstance(column, str) and column.isdigit() and column not in header):
            col = int(column) + 1
        else:
            if column not in header[1:]:
                raise DataError(f"column {column!r} not found in header {header[1:]}", line=hline)
            col = header.index(column)
        if not 1 <= col < len(header):
            raise DataError(f"column index {column} out of range", line=hline)

        dates, prices = [], []
        for idx, row in enumerate(reader, start=1):
            lineno = linenos[idx]
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                d = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"invalid ISO-8601 date {row[0]!r}", line=lineno) from None
            cell = row[col].strip()
            try:
                p = float(cell)
            except ValueError:
                raise DataError(f"non-numeric price {cell!r}", line=lineno) from None
            if not math.isfinite(p) or p <= 0:
                raise DataError(f"price must be positive, got {cell!r}", line=lineno)
            if dates and d <= dates[-1]:
                raise DataError(f"date {d} does not increase on {dates[-1]}", line=lineno)
            dates.append(d)
            prices.append(p)
    except csv.Error as exc:
        raise DataError(f"malformed CSV: {exc}") from None
    if not prices:
        raise DataError("no observations after header")
    return PriceSeries(header[col], np.array(dates, dtype="datetime64[D]"), np.array(prices, dtype=float))


def price_column_names(source, delimiter: str = ",") -> list[str]:
    """Labels of the price columns (header entries after the date column)."""
    fh, owned = _open_source(source)
    try:
        for line in fh:
            if line.strip() and not line.lstrip().startswith("#"):
                return [h.strip() for h in next(csv.reader([line], delimiter=delimiter))[1:]]
    finally:
        if owned:
            fh.close()
    raise DataError("empty input: header row required", line=1)


def write_price_csv(series: Iterable[PriceSeries], fh: TextIO, delimiter: str = ",") -> None:
    """Write one or more aligned price series (same dates) as ``date,<label>...``."""
    series = list(series)
    dates = series[0].dates
    for s in series[1:]:
        if not np.array_equal(s.dates, dates):
            raise DataError("series dates are not aligned")
    w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
    w.writerow(["date", *[s.label for s in series]])
    for i, d in enumerate(dates):
        w.writerow([str(d), *[repr(float(s.prices[i])) for s in series]])


# -- transforms --------------------------------------------------------------


def log_returns(p: PriceSeries) -> ReturnSeries:
    if len(p) < 2:
        raise DataError("need at least two prices to form a return")
    return ReturnSeries(p.label, 100.0 * np.diff(np.log(p.prices)))


def to_loss_series(r: ReturnSeries, position: Position) -> LossSeries:
    if position == "long":
        losses = -r.returns
    elif position == "short":
        losses = r.returns.copy()
    else:
        raise ValueError(f"position must be 'long' or 'short', got {position!r}")
    return LossSeries(r.label, losses, position)


def prices_from_returns(
    r: ReturnSeries,
    start_price: float = 100.0,
    start_date: dt.date = dt.date(1979, 1, 5),
    step_days: int = 7,
) -> PriceSeries:
    """Invert :func:`log_returns`: cumulative exponentiation on a weekly calendar."""
    rel = np.exp(np.concatenate([[0.0], np.cumsum(r.returns / 100.0)]))
    dates = np.datetime64(start_date, "D") + step_days * np.arange(len(rel))
    return PriceSeries(r.label, dates, start_price * rel)


# -- statistics --------------------------------------------------------------


def jarque_bera(n: int, skewness: float, kurtosis: float) -> tuple[float, float]:
    """JB statistic and its chi-square(2) upper-tail p-value (tiny values reported as 0)."""
    jb = n * (skewness**2 / 6.0 + (kurtosis - 3.0) ** 2 / 24.0)
    pval = float(stats.chi2.sf(jb, 2))
    if pval < JB_PVALUE_FLOOR:
        pval = 0.0
    return float(jb), pval


def summary_stats(r: ReturnSeries | np.ndarray) -> SummaryStats:
    x = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    n = len(x)
    if n < 4:
        raise DataError(f"need at least 4 observations, got {n}")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        raise DataError("zero variance: skewness and kurtosis undefined")
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    skew = m3 / m2**1.5
    kurt = m4 / m2**2
    jb, pval = jarque_bera(n, skew, kurt)
    return SummaryStats(n, mean, float(np.std(x, ddof=1)), skew, kurt, jb, pval)


# -- synthetic data ----------------------------------------------------------


@dataclass(frozen=True)
class GaussianSpec:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class TailSpec:
    """GPD tail attached beyond ``u``: ``prob`` is the tail mass P(loss > u)."""

    xi: float
    beta: float
    u: float
    prob: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("tail beta must be positive")
        if not 0 < self.prob < 1:
            raise ValueError("tail prob must lie in (0, 1)")


@dataclass(frozen=True)
class CompositeSpec:
    """Gaussian body with GPD tails on either side.

    ``lower`` models the loss tail of a long position (returns below
    ``-lower.u``); ``upper`` models the loss tail of a short position
    (returns above ``upper.u``). The body is the normal(mu, sigma) law
    truncated to the interval between the two thresholds.

    Tail counts are fixed rather than random: exactly
    ``round(n * tail.prob)`` observations land in each tail, so a fit at
    threshold ``u`` sees a known exceedance count.
    """

    mu: float = 0.0
    sigma: float = 1.0
    lower: TailSpec | None = None
    upper: TailSpec | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        lo = -self.lower.u if self.lower else -math.inf
        hi = self.upper.u if self.upper else math.inf
        if not lo < hi:
            raise ValueError("tail thresholds overlap")


def _body_quantile(v: np.ndarray, mu: float, sigma: float, lo: float, hi: float) -> np.ndarray:
    a = special.ndtr((lo - mu) / sigma)
    b = special.ndtr((hi - mu) / sigma)
    return mu + sigma * special.ndtri(a + v * (b - a))


def generate_synthetic_returns(
    spec: GaussianSpec | CompositeSpec, n: int, seed: int, label: str = "synthetic"
) -> ReturnSeries:
    """Seeded synthetic percent returns.

    Generator contract: ``numpy.random.default_rng(seed)`` (PCG64). A
    Gaussian spec maps ``rng.random(n)`` through the normal quantile. A
    composite spec first permutes the region labels with ``rng.permutation``
    and then maps ``rng.random(n)`` through each region's conditional
    quantile function. Same seed, same spec, same n -> identical output.
    """
    from evtrisk.gpd import GpdParams, gpd_quantile

    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(spec, GaussianSpec):
        return ReturnSeries(label, spec.mu + spec.sigma * special.ndtri(rng.random(n)))
    if not isinstance(spec, CompositeSpec):
        raise ValueError(f"unsupported synthetic spec {spec!r}")

    n_lo = int(round(n * spec.lower.prob)) if spec.lower else 0
    n_hi = int(round(n * spec.upper.prob)) if spec.upper else 0
    if n_lo + n_hi > n:
        raise ValueError("tail masses exceed the sample size")
    region = np.zeros(n, dtype=np.int8)
    region[:n_lo] = -1
    region[n_lo : n_lo + n_hi] = 1
    region = rng.permutation(region)
    v = rng.random(n)

    out = np.empty(n)
    body = region == 0
    lo = -spec.lower.u if spec.lower else -math.inf
    hi = spec.upper.u if spec.upper else math.inf
    out[body] = _body_quantile(v[body], spec.mu, spec.sigma, lo, hi)
    if spec.lower:
        t = spec.lower
        m = region == -1
        out[m] = -(t.u + gpd_quantile(v[m], GpdParams(t.xi, t.beta)))
    if spec.upper:
        t = spec.upper
        m = region == 1
        out[m] = t.u + gpd_quantile(v[m], GpdParams(t.xi, t.beta))
    return ReturnSeries(label, out)
