"""Reference parameter sets shipped with the package.

``reference_values.json`` holds, for 16 weekly contracts (corn and soybean,
seven spot regions plus futures):

* ``summary_stats``: mean, std_dev, skewness, kurtosis of percent returns;
* ``gaussian``: normal-model VaR/ES at alpha in {0.99, 0.995, 0.999} and
  SRM at R in {20, 100, 200};
* ``gpd_fits``: 32 long/short GPD fits (u, prob, n_u, xi, beta and their
  standard errors, n = 1462);
* ``pot_risk``: POT VaR/ES/SRM point values with bootstrap SEs and
  standardized 90% intervals for each fit;
* ``quadrature_benchmark``: averaged parameters and SRM estimates at
  R = 100 across rules and slice counts.

Contract keys look like ``corn-reg1``; fit keys add the position,
``corn-reg1-long``.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from evtrisk.gpd import GpdFit, GpdParams
from evtrisk.timeseries import CompositeSpec, TailSpec

CONTRACTS = tuple(
    f"{crop}-{r}" for crop in ("corn", "soybean") for r in [f"reg{i}" for i in range(1, 8)] + ["futures"]
)
FIT_NAMES = tuple(f"{c}-{pos}" for c in CONTRACTS for pos in ("long", "short"))


@lru_cache(maxsize=1)
def reference_values() -> dict:
    with resources.files("evtrisk").joinpath("data/reference_values.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def reference_fit(name: str) -> GpdFit:
    try:
        d = reference_values()["gpd_fits"][name]
    except KeyError:
        raise KeyError(f"unknown reference fit {name!r}; choose from {', '.join(FIT_NAMES)}") from None
    return GpdFit(
        params=GpdParams(d["xi"], d["beta"]),
        u=d["u"],
        n=d["n"],
        n_u=d["n_u"],
        prob=d["prob"],
        se_xi=d["se_xi"],
        se_beta=d["se_beta"],
        label=name,
    )


def reference_fits() -> dict[str, GpdFit]:
    return {name: reference_fit(name) for name in FIT_NAMES}


def reference_stats(contract: str) -> dict:
    return dict(reference_values()["summary_stats"][contract])


def benchmark_fit() -> GpdFit:
    """Averaged parameters used for the quadrature benchmark (fractional n_u)."""
    p = reference_values()["quadrature_benchmark"]["params"]
    return GpdFit(GpdParams(p["xi"], p["beta"]), u=p["u"], n=p["n"], n_u=p["n_u"], label="benchmark")


def reference_composite(contract: str) -> CompositeSpec:
    """Synthetic-return model for a contract: normal body, both fitted tails.

    The long-position fit becomes the lower return tail and the short fit the
    upper one. The normal body uses the contract's mean and std_dev.
    """
    st = reference_stats(contract)
    lo, hi = reference_fit(f"{contract}-long"), reference_fit(f"{contract}-short")
    return CompositeSpec(
        mu=st["mean"],
        sigma=st["std_dev"],
        lower=TailSpec(lo.xi, lo.beta, lo.u, lo.n_u / lo.n),
        upper=TailSpec(hi.xi, hi.beta, hi.u, hi.n_u / hi.n),
    )
