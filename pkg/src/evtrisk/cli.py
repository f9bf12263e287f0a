"""Command-line front end.

Every output starts with metadata (package version, effective config,
seed, quadrature node scheme): a ``meta`` object in JSON, ``#`` comment
lines in CSV. Outputs contain no timestamps, so identical invocations give
identical bytes. ``--workers`` only changes speed, never output, and is
left out of the echoed config.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure. Failures also print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from evtrisk import __version__
from evtrisk import fixtures
from evtrisk.bootstrap import BootstrapConfig, bootstrap_many
from evtrisk.diagnostics import exceedance_curve_from_losses, qq_normal, tail_stability_scan
from evtrisk.errors import DataError, NumericalError
from evtrisk.gpd import GpdFit, fit_gpd
from evtrisk.quadrature import (
    NIEDERREITER_CONSTRUCTION,
    NODE_SCHEME,
    RULES,
    WEYL_IRRATIONAL,
    QuadratureSpec,
    integrate,
)
from evtrisk.risk import (
    DEFAULT_ALPHAS,
    DEFAULT_RISK_AVERSIONS,
    RiskSpec,
    evaluate,
    exp_weight,
    pot_quantile,
)
from evtrisk.timeseries import (
    SUMMARY_COLUMNS,
    GaussianSpec,
    generate_synthetic_returns,
    load_price_series,
    log_returns,
    price_column_names,
    prices_from_returns,
    summary_stats,
    to_loss_series,
    write_price_csv,
)

COMMANDS = ("summarize", "fit", "risk", "bootstrap", "scan", "quadbench", "simulate", "qq", "curve")
QUADBENCH_SLICES = (1_000, 10_000, 100_000, 1_000_000, 10_000_000, 20_000_000)
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    format: str = "csv"
    options: dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    def echo(self) -> dict:
        return {"command": self.command, "input": self.input, "format": self.format, **self.options}


# -- formatting ----------------------------------------------------------------


def _fmt(x, digits: int) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{digits}g}"
    return str(x)


def _meta(cfg: RunConfig, extra: dict | None = None) -> dict:
    m = {"artifact": "evtrisk", "version": __version__, "config": cfg.echo(), "seed": cfg.options.get("seed")}
    m["quadrature"] = {
        "node_scheme": NODE_SCHEME,
        "weyl_irrational": WEYL_IRRATIONAL,
        "niederreiter": NIEDERREITER_CONSTRUCTION,
    }
    if extra:
        m.update(extra)
    return m


def _render(cfg: RunConfig, tables: dict[str, tuple[list[str], list[list]]], json_payload: Any, extra_meta: dict | None = None) -> str:
    meta = _meta(cfg, extra_meta)
    if cfg.format == "json":
        return json.dumps({"meta": meta, "data": json_payload}, indent=2, sort_keys=True, allow_nan=True) + "\n"
    digits = cfg.options.get("digits", 6)
    buf = io.StringIO()
    buf.write(f"# evtrisk {__version__}\n")
    buf.write("# meta: " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for i, (name, (header, rows)) in enumerate(tables.items()):
        if len(tables) > 1:
            if i:
                buf.write("\n")
            buf.write(f"# table: {name}\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v, digits) for v in r])
    return buf.getvalue()


def _write(cfg: RunConfig, text: str) -> None:
    if cfg.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- input helpers ---------------------------------------------------------------


def _price_columns(path: str, columns: list[str] | None):
    return [load_price_series(path, c) for c in (columns or price_column_names(path))]


def _positions(opt: str) -> list[str]:
    return ["long", "short"] if opt == "both" else [opt]


def _load_fits(cfg: RunConfig) -> list[GpdFit]:
    names = cfg.options.get("fixture") or []
    fits: list[GpdFit] = []
    for name in names:
        if name == "all":
            fits.extend(fixtures.reference_fits().values())
        elif name == "benchmark":
            fits.append(fixtures.benchmark_fit())
        else:
            try:
                fits.append(fixtures.reference_fit(name))
            except KeyError as exc:
                raise UsageError(str(exc)) from None
    if cfg.input:
        try:
            with open(cfg.input, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read fit file {cfg.input}: {exc}") from None
        if isinstance(doc, dict) and "data" in doc:
            doc = doc["data"]
        if isinstance(doc, dict):
            doc = [doc]
        try:
            fits.extend(GpdFit.from_dict(d) for d in doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed GpdFit record: {exc}") from None
    if not fits:
        raise UsageError("no fits given: use --input FITS.json or --fixture NAME")
    positions = cfg.options.get("position", "both")
    if positions != "both":
        fits = [f for f in fits if not f.label.endswith(("-long", "-short")) or f.label.endswith("-" + positions)]
    return fits


def _quad(cfg: RunConfig) -> QuadratureSpec:
    return QuadratureSpec(cfg.options.get("rule", "trapezoid"), cfg.options.get("slices", 1_000_000))


def _risk_specs(cfg: RunConfig, model: str) -> list[RiskSpec]:
    quad = _quad(cfg)
    alphas = cfg.options.get("alpha") or list(DEFAULT_ALPHAS)
    Rs = cfg.options.get("risk_aversion") or list(DEFAULT_RISK_AVERSIONS)
    specs = [RiskSpec("VaR", model, alpha=a) for a in alphas]
    specs += [RiskSpec("ES", model, alpha=a) for a in alphas]
    specs += [RiskSpec("SRM", model, risk_aversion=R, quadrature=quad) for R in Rs]
    return specs


def _level_name(s: RiskSpec) -> str:
    return f"{s.measure}@{s.alpha:g}" if s.measure != "SRM" else f"SRM@R={s.risk_aversion:g}"


# -- commands ------------------------------------------------------------------


def cmd_summarize(cfg: RunConfig) -> str:
    if not cfg.input:
        raise UsageError("summarize needs --input")
    rows, payload = [], []
    for ps in _price_columns(cfg.input, cfg.options.get("column")):
        st = summary_stats(log_returns(ps))
        rows.append([ps.label, st.n, *[getattr(st, k) for k in SUMMARY_COLUMNS]])
        payload.append({"label": ps.label, **st.to_dict()})
    return _render(cfg, {"summary": (["label", "n", *SUMMARY_COLUMNS], rows)}, payload)


def cmd_fit(cfg: RunConfig) -> str:
    if not cfg.input:
        raise UsageError("fit needs --input")
    tv, tc = cfg.options.get("threshold_value"), cfg.options.get("threshold_count")
    if (tv is None) == (tc is None):
        raise UsageError("fit needs exactly one of --threshold-value or --threshold-count")
    fits = []
    for ps in _price_columns(cfg.input, cfg.options.get("column")):
        r = log_returns(ps)
        for pos in _positions(cfg.options.get("position", "both")):
            fits.append(fit_gpd(to_loss_series(r, pos), threshold_value=tv, threshold_count=tc))
    header = ["label", "u", "prob", "n_u", "n", "xi", "se_xi", "beta", "se_beta", "loglik"]
    rows = [[f.label, f.u, f.prob, f.n_u, f.n, f.xi, f.se_xi, f.beta, f.se_beta, f.loglik] for f in fits]
    return _render(cfg, {"fits": (header, rows)}, [f.to_dict() for f in fits])


def cmd_risk(cfg: RunConfig) -> str:
    model = cfg.options.get("model", "pot")
    if model == "gaussian":
        return _risk_gaussian(cfg)
    fits = _load_fits(cfg)
    specs = _risk_specs(cfg, "POT")
    rows, payload = [], []
    for f in fits:
        ests = []
        for s in specs:
            try:
                ests.append(evaluate(s, fit=f, workers=cfg.workers).value)
            except ValueError as exc:
                if len(fits) == 1:
                    raise
                ests.append(math.nan)
        rows.append([f.label, *ests])
        payload.append({"label": f.label, "fit": f.to_dict(), "estimates": [{"spec": s.to_dict(), "value": v} for s, v in zip(specs, ests)]})
    return _render(cfg, {"risk": (["label", *[_level_name(s) for s in specs]], rows)}, payload)


def _risk_gaussian(cfg: RunConfig) -> str:
    sources: list[tuple[str, float, float]] = []
    for name in cfg.options.get("fixture") or []:
        names = fixtures.CONTRACTS if name == "all" else [name]
        for c in names:
            try:
                st = fixtures.reference_stats(c)
            except KeyError:
                raise UsageError(f"unknown contract {c!r}; choose from {', '.join(fixtures.CONTRACTS)}") from None
            sources.append((c, st["mean"], st["std_dev"]))
    if cfg.input:
        for ps in _price_columns(cfg.input, cfg.options.get("column")):
            st = summary_stats(log_returns(ps))
            sources.append((ps.label, st.mean, st.std_dev))
    if cfg.options.get("mu") is not None or cfg.options.get("sigma") is not None:
        if cfg.options.get("mu") is None or cfg.options.get("sigma") is None:
            raise UsageError("give both --mu and --sigma")
        sources.append(("gaussian", cfg.options["mu"], cfg.options["sigma"]))
    if not sources:
        raise UsageError("gaussian risk needs --input prices, --fixture CONTRACT or --mu/--sigma")
    specs = _risk_specs(cfg, "Gaussian")
    rows, payload = [], []
    for label, mu, sigma in sources:
        vals = [evaluate(s, mu=mu, sigma=sigma, workers=cfg.workers).value for s in specs]
        rows.append([label, *vals])
        payload.append({"label": label, "mu": mu, "sigma": sigma, "estimates": [{"spec": s.to_dict(), "value": v} for s, v in zip(specs, vals)]})
    return _render(cfg, {"risk": (["label", *[_level_name(s) for s in specs]], rows)}, payload)


def cmd_bootstrap(cfg: RunConfig) -> str:
    fits = _load_fits(cfg)
    specs = _risk_specs(cfg, "POT")
    bc = BootstrapConfig(
        resamples=cfg.options.get("resamples", 5000),
        seed=cfg.options.get("seed", 0),
        ci_level=cfg.options.get("ci_level", 0.90),
        srm_draws=cfg.options.get("srm_draws", 5000),
        es_method=cfg.options.get("es_method", "formula"),
        workers=cfg.workers,
    )
    header = ["label", "measure", "level", "point", "se", "mean", "ci_low", "ci_high", "lb", "ub"]
    rows, payload = [], []
    for f in fits:
        res = bootstrap_many(f, specs, bc)
        for r in res:
            rows.append([f.label, r.spec.measure, r.spec.level, r.point, r.se, r.mean, *r.ci_raw, *r.ci_standardized])
        payload.append({"label": f.label, "fit": f.to_dict(), "results": [r.to_dict() for r in res]})
    return _render(cfg, {"bootstrap": (header, rows)}, payload, {"bootstrap": bc.to_dict()})


def _loss_inputs(cfg: RunConfig):
    if not cfg.input:
        raise UsageError(f"{cfg.command} needs --input")
    for ps in _price_columns(cfg.input, cfg.options.get("column")):
        r = log_returns(ps)
        for pos in _positions(cfg.options.get("position", "both")):
            yield to_loss_series(r, pos)


def cmd_scan(cfg: RunConfig) -> str:
    counts = cfg.options.get("counts") or list(range(20, 401, 10))
    header = ["label", "n_u", "u", "xi_hat", "ci_low", "ci_high", "tail_index", "error"]
    rows, payload = [], []
    for ls in _loss_inputs(cfg):
        label = f"{ls.label}-{ls.position}"
        valid = [c for c in counts if c < ls.n]
        scan = tail_stability_scan(ls, valid, workers=cfg.workers)
        for row in scan.rows():
            rows.append([label, *row])
        payload.append({"label": label, "entries": [dict(zip(header[1:], row)) for row in scan.rows()]})
    return _render(cfg, {"scan": (header, rows)}, payload, {"shape_label": "xi (shape); tail_index = 1/xi"})


def cmd_qq(cfg: RunConfig) -> str:
    if not cfg.input:
        raise UsageError("qq needs --input")
    rows, payload = [], []
    for ps in _price_columns(cfg.input, cfg.options.get("column")):
        pairs = qq_normal(log_returns(ps))
        rows.extend([ps.label, a, b] for a, b in pairs)
        payload.append({"label": ps.label, "pairs": pairs.tolist()})
    return _render(cfg, {"qq": (["label", "theoretical", "empirical"], rows)}, payload, {"plotting_position": "(i-0.5)/n"})


def cmd_curve(cfg: RunConfig) -> str:
    tv, tc = cfg.options.get("threshold_value"), cfg.options.get("threshold_count")
    if (tv is None) == (tc is None):
        raise UsageError("curve needs exactly one of --threshold-value or --threshold-count")
    rows, payload = [], []
    for ls in _loss_inputs(cfg):
        fit = fit_gpd(ls, threshold_value=tv, threshold_count=tc)
        curve = exceedance_curve_from_losses(fit, ls.losses)
        rows.extend([fit.label, *r] for r in curve)
        payload.append({"label": fit.label, "fit": fit.to_dict(), "curve": curve.tolist()})
    return _render(cfg, {"curve": (["label", "x", "ecdf", "gpd_cdf"], rows)}, payload, {"plotting_position": "i/(N_u+1)"})


def cmd_quadbench(cfg: RunConfig) -> str:
    fit = fixtures.benchmark_fit()
    R = (cfg.options.get("risk_aversion") or [100.0])[0]
    rules = cfg.options.get("rules") or list(RULES)
    ns = cfg.options.get("ns") or list(QUADBENCH_SLICES)
    ref_n = max(ns)
    f = lambda p: exp_weight(p, R) * pot_quantile(fit, p)
    est = {rule: {N: integrate(f, QuadratureSpec(rule, N), workers=cfg.workers) for N in ns} for rule in rules}
    cols = [str(N) for N in ns]
    rows_est = [[rule, *[est[rule][N] for N in ns]] for rule in rules]
    rows_err = [[rule, *[100.0 * (est[rule][N] - est[rule][ref_n]) / est[rule][ref_n] if N != ref_n else None for N in ns]] for rule in rules]
    payload = {
        "benchmark": fit.to_dict(),
        "risk_aversion": R,
        "reference_slices": ref_n,
        "estimates": {rule: {str(N): v for N, v in est[rule].items()} for rule in rules},
        "pct_errors": {r[0]: dict(zip(cols, r[1:])) for r in rows_err},
    }
    tables = {"estimates": (["rule", *cols], rows_est), "pct_errors": (["rule", *cols], rows_err)}
    return _render(cfg, tables, payload)


def cmd_simulate(cfg: RunConfig) -> str:
    n = cfg.options.get("n", 1461)
    seed = cfg.options.get("seed", 0)
    if n < 2:
        raise UsageError("--n must be at least 2 price observations")
    names = cfg.options.get("fixture") or []
    series = []
    if names:
        for i, name in enumerate(fixtures.CONTRACTS if names == ["all"] else names):
            try:
                spec = fixtures.reference_composite(name)
            except KeyError:
                raise UsageError(f"unknown contract {name!r}; choose from {', '.join(fixtures.CONTRACTS)}") from None
            series.append(prices_from_returns(generate_synthetic_returns(spec, n - 1, seed + i, label=name)))
    else:
        spec = GaussianSpec(cfg.options.get("mu") or 0.0, cfg.options.get("sigma") or 3.5)
        series.append(prices_from_returns(generate_synthetic_returns(spec, n - 1, seed, label="synthetic")))
    buf = io.StringIO()
    buf.write(f"# evtrisk {__version__}\n")
    buf.write("# meta: " + json.dumps(_meta(cfg), sort_keys=True) + "\n")
    write_price_csv(series, buf)
    return buf.getvalue()


HANDLERS = {
    "summarize": cmd_summarize,
    "fit": cmd_fit,
    "risk": cmd_risk,
    "bootstrap": cmd_bootstrap,
    "scan": cmd_scan,
    "quadbench": cmd_quadbench,
    "simulate": cmd_simulate,
    "qq": cmd_qq,
    "curve": cmd_curve,
}


def run(cfg: RunConfig) -> str:
    """Execute a command and return its output text (also written to ``cfg.output``)."""
    if cfg.command not in HANDLERS:
        raise UsageError(f"unknown command {cfg.command!r}")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg.format!r}")
    text = HANDLERS[cfg.command](cfg)
    _write(cfg, text)
    return text


# -- argument parsing --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(s: str) -> list[int]:
    if ":" in s:
        parts = [int(float(x)) for x in s.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return [int(float(x)) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evtrisk", description="Peaks-over-threshold tail risk measures.")
    p.add_argument("--version", action="version", version=f"evtrisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, inputs=True):
        if inputs:
            sp.add_argument("--input", help="price CSV, or GpdFit JSON for risk/bootstrap")
        sp.add_argument("--output", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--digits", type=int, default=6, help="significant digits in CSV output")
        sp.add_argument("--workers", type=int, default=1, help="threads for internal parallelism")

    def prices(sp):
        sp.add_argument("--column", action="append", help="price column name (repeatable; default all)")

    def threshold(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--threshold-value", type=float)
        g.add_argument("--threshold-count", type=int)

    def position(sp):
        sp.add_argument("--position", choices=("long", "short", "both"), default="both")

    def levels(sp):
        sp.add_argument("--alpha", type=float, action="append", help="confidence level (repeatable)")
        sp.add_argument("--risk-aversion", type=float, action="append", help="SRM coefficient R (repeatable)")
        sp.add_argument("--rule", choices=RULES, default="trapezoid")
        sp.add_argument("--slices", type=int, default=1_000_000)

    def fixture(sp, what):
        sp.add_argument("--fixture", action="append", help=f"reference {what} name, or 'all' (repeatable)")

    sp = sub.add_parser("summarize", help="summary statistics of percent log returns")
    common(sp), prices(sp)

    sp = sub.add_parser("fit", help="fit GPD tails (long and/or short)")
    common(sp), prices(sp), threshold(sp), position(sp)

    sp = sub.add_parser("risk", help="VaR / ES / SRM grids")
    common(sp), prices(sp), levels(sp), position(sp), fixture(sp, "fit (POT) or contract (gaussian)")
    sp.add_argument("--model", choices=("pot", "gaussian"), default="pot")
    sp.add_argument("--mu", type=float)
    sp.add_argument("--sigma", type=float)

    sp = sub.add_parser("bootstrap", help="semi-parametric bootstrap SEs and standardized CIs")
    common(sp), levels(sp), position(sp), fixture(sp, "fit")
    sp.add_argument("--resamples", type=int, default=5000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ci-level", type=float, default=0.90)
    sp.add_argument("--srm-draws", type=int, default=5000)
    sp.add_argument("--es-method", choices=("formula", "tail_mean"), default="formula")

    sp = sub.add_parser("scan", help="shape-parameter stability across exceedance counts")
    common(sp), prices(sp), position(sp)
    sp.add_argument("--counts", type=_int_list, help="e.g. 20:400:10 or 50,100,150")

    sp = sub.add_parser("qq", help="normal QQ pairs")
    common(sp), prices(sp)

    sp = sub.add_parser("curve", help="empirical vs fitted exceedance CDF")
    common(sp), prices(sp), threshold(sp), position(sp)

    sp = sub.add_parser("quadbench", help="SRM quadrature benchmark across rules and slice counts")
    common(sp, inputs=False)
    sp.add_argument("--rule", dest="rules", choices=RULES, action="append")
    sp.add_argument("--ns", type=_int_list, help="slice counts, e.g. 1000,10000")
    sp.add_argument("--risk-aversion", type=float, action="append")

    sp = sub.add_parser("simulate", help="write a seeded synthetic price file")
    common(sp, inputs=False), fixture(sp, "contract")
    sp.add_argument("--n", type=int, default=1461, help="number of price observations")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--sigma", type=float)
    return p


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    cfg = RunConfig(
        command=command,
        input=ns.pop("input", None),
        output=ns.pop("output", None),
        format=ns.pop("format", "csv"),
        workers=ns.pop("workers", 1) or 1,
    )
    # record the levels actually used so the echoed config reproduces the run
    if command in ("risk", "bootstrap"):
        ns["alpha"] = ns["alpha"] or list(DEFAULT_ALPHAS)
        ns["risk_aversion"] = ns["risk_aversion"] or list(DEFAULT_RISK_AVERSIONS)
    cfg.options = {k: v for k, v in sorted(ns.items()) if v is not None}
    return cfg


def _error_record(kind: str, exc: BaseException, code: int) -> None:
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    diag = getattr(exc, "diagnostics", None)
    if diag:
        rec["diagnostics"] = diag
    sys.stderr.write(json.dumps(rec, sort_keys=True, default=str) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        run(cfg)
    except UsageError as exc:
        _error_record("usage", exc, EXIT_USAGE)
        return EXIT_USAGE
    except DataError as exc:
        _error_record("data", exc, EXIT_DATA)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        _error_record("numerical", exc, EXIT_NUMERIC)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        _error_record("usage", exc, EXIT_USAGE)
        return EXIT_USAGE
    except OSError as exc:
        _error_record("data", exc, EXIT_DATA)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
