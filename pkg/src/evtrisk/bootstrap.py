"""Semi-parametric bootstrap of POT risk measures.

Each resample draws uniforms, sorts them into cumulative probabilities and
maps them through the fitted loss quantile function, giving a sorted
resample of losses drawn from the fitted model. Risk measures are
recomputed on every resample; their spread yields standard errors and
percentile confidence intervals, which are also reported divided by the
mean resample estimate ("standardized").

Resample ``j`` uses its own generator, seeded from ``SeedSequence(seed,
spawn_key=(j,))``, so results do not depend on how resamples are
distributed across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from evtrisk.gpd import GpdFit
from evtrisk.risk import RiskSpec, es_from_var, evaluate, exp_weight, pot_quantile

BLOCK = 250


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``srm_draws`` is the number of uniforms in the Monte-Carlo evaluation of
    a resample's spectral measure; ``None`` uses the fit's sample size.
    ``es_method`` selects how a resample's ES is formed: ``"formula"``
    applies the GPD tail-mean formula to the resample VaR, ``"tail_mean"``
    averages the resample losses at and beyond the VaR index.
    """

    resamples: int = 5000
    seed: int = 0
    ci_level: float = 0.90
    srm_draws: int | None = 5000
    es_method: str = "formula"
    workers: int = 1
    keep_estimates: bool = False

    def __post_init__(self):
        if self.resamples < 2:
            raise ValueError("need at least 2 resamples")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
        if self.srm_draws is not None and self.srm_draws < 2:
            raise ValueError("srm_draws must be >= 2")
        if self.es_method not in ("formula", "tail_mean"):
            raise ValueError(f"unknown es_method {self.es_method!r}")

    def to_dict(self) -> dict:
        return {
            "resamples": self.resamples,
            "seed": self.seed,
            "ci_level": self.ci_level,
            "srm_draws": self.srm_draws,
            "es_method": self.es_method,
        }


@dataclass(frozen=True)
class BootstrapResult:
    spec: RiskSpec
    point: float
    se: float
    mean: float
    ci_raw: tuple[float, float]
    ci_standardized: tuple[float, float]
    resample_estimates: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "point": self.point,
            "se": self.se,
            "mean": self.mean,
            "ci_raw": list(self.ci_raw),
            "ci_standardized": list(self.ci_standardized),
        }
        if self.resample_estimates is not None:
            d["resample_estimates"] = self.resample_estimates.tolist()
        return d


def substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def resample_losses(fit: GpdFit, seed: int, index: int = 0, size: int | None = None, probs: np.ndarray | None = None):
    """One resample: sorted cumulative probabilities and their losses.

    Returns ``(p, q)`` with ``p`` ascending and ``q = pot_quantile(fit, p)``
    (hence nondecreasing). ``probs`` replaces the random uniforms, e.g. with
    the grid ``i/(n+1)`` to recover the fitted quantile curve.
    """
    if probs is None:
        n = fit.n if size is None else size
        p = np.sort(substream(seed, index).random(n))
    else:
        p = np.sort(np.asarray(probs, dtype=float))
    return p, pot_quantile(fit, p)


def var_index(alpha: float, n: int) -> int:
    """0-based position of the ``ceil(alpha*n)``-th smallest resample loss."""
    k = math.ceil(round(alpha * n, 9))
    if not 1 <= k < n:
        raise ValueError(f"alpha={alpha} is too extreme for a resample of n={n} (index {k})")
    return k - 1


def _resample_estimates(fit: GpdFit, specs: Sequence[RiskSpec], config: BootstrapConfig, j: int) -> np.ndarray:
    out = np.empty(len(specs))
    p = q = None
    srm_p = srm_q = None
    for i, s in enumerate(specs):
        if s.measure in ("VaR", "ES"):
            if p is None:
                p, q = resample_losses(fit, config.seed, j)
            k = var_index(s.alpha, fit.n)
            if s.measure == "VaR":
                out[i] = q[k]
            elif config.es_method == "formula":
                out[i] = es_from_var(fit, q[k])
            else:
                out[i] = float(np.mean(q[k:]))
        else:
            if srm_p is None:
                if config.srm_draws is None or config.srm_draws == fit.n:
                    if p is None:
                        p, q = resample_losses(fit, config.seed, j)
                    srm_p, srm_q = p, q
                else:
                    srm_p, srm_q = resample_losses(fit, config.seed, j, size=config.srm_draws)
            out[i] = float(np.mean(exp_weight(srm_p, s.risk_aversion) * srm_q))
    return out


def _block(fit, specs, config, lo, hi):
    return np.stack([_resample_estimates(fit, specs, config, j) for j in range(lo, hi)])


def bootstrap_many(fit: GpdFit, specs: Sequence[RiskSpec], config: BootstrapConfig = BootstrapConfig()) -> list[BootstrapResult]:
    """Bootstrap several measures on shared resamples.

    Identical to calling :func:`bootstrap_risk` once per spec (same seed means
    same resamples), but each resample is generated only once.
    """
    specs = list(specs)
    for s in specs:
        if s.model != "POT":
            raise ValueError("the bootstrap applies to POT measures only")
        if s.measure in ("VaR", "ES"):
            var_index(s.alpha, fit.n)
    B = config.resamples
    bounds = [(lo, min(lo + BLOCK, B)) for lo in range(0, B, BLOCK)]
    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(lambda b: _block(fit, specs, config, *b), bounds))
    else:
        blocks = [_block(fit, specs, config, lo, hi) for lo, hi in bounds]
    est = np.concatenate(blocks, axis=0)

    lo_pct = 100 * (1 - config.ci_level) / 2
    hi_pct = 100 * (1 + config.ci_level) / 2
    results = []
    for i, s in enumerate(specs):
        e = est[:, i]
        mean = float(np.mean(e))
        lo, hi = (float(v) for v in np.percentile(e, [lo_pct, hi_pct]))
        point = evaluate(s, fit=fit).value
        results.append(
            BootstrapResult(
                spec=s,
                point=point,
                se=float(np.std(e, ddof=1)),
                mean=mean,
                ci_raw=(lo, hi),
                ci_standardized=(lo / mean, hi / mean),
                resample_estimates=e.copy() if config.keep_estimates else None,
            )
        )
    return results


def bootstrap_risk(fit: GpdFit, spec: RiskSpec, config: BootstrapConfig = BootstrapConfig()) -> BootstrapResult:
    return bootstrap_many(fit, [spec], config)[0]
