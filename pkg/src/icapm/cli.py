"""Command-line entry point: describe, estimate, test, simulate, correlations, hp."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .data import (
    ModelSpec,
    apply_window,
    ingest_panel,
    layout,
    write_instrument_csvs,
    write_returns_csv,
)
from .errors import ConfigurationError, IcapmError
from .estimation import fit_prepared
from .filters import DEFAULT_LAMBDA, hp_filter
from .garch import conditional_correlations
from .inference import (
    available_hypotheses,
    hypothesis_indices,
    lr_test,
    wald_test,
)
from .inference import sandwich_covariance as _sandwich
from .likelihood import evaluate_model, prepare
from .reports import describe_report, estimate_report, tests_report
from .simulation import (
    InstrumentProcess,
    SimulationConfig,
    plausible_theta,
    simulate_panel,
)
from .utils import sha256_file

EXIT_NOT_CONVERGED = 3


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise click.ClickException("--config must contain a JSON object")
    return cfg


def _pick(flag, cfg: dict, key: str, default=None):
    if flag is not None and flag != ():
        return flag
    return cfg.get(key, default)


def _parse_window(window: str | None):
    if not window:
        return None
    try:
        start, end = window.split(":")
    except ValueError:
        raise click.ClickException("window must look like YYYY-MM:YYYY-MM")
    return start.strip(), end.strip()


def _parse_locals(pairs, cfg: dict) -> dict:
    if pairs:
        out = {}
        for item in pairs:
            if "=" not in item:
                raise click.ClickException(
                    f"--local expects asset=path, got {item!r}"
                )
            asset, path = item.split("=", 1)
            out[asset.strip()] = path.strip()
        return out
    local = cfg.get("local", {})
    if not isinstance(local, dict):
        raise click.ClickException("config key 'local' must map asset -> path")
    return dict(local)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    x if isinstance(x, str) else repr(float(x)) for x in row
                )
                + "\n"
            )


def _manifest(out_dir: Path, command: str, effective: dict, inputs: list) -> None:
    digests = {str(p): sha256_file(p) for p in inputs if p and Path(p).exists()}
    _write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "config": effective,
            "inputs": digests,
            "version": __version__,
        },
    )


def _ingest(returns, global_instruments, local_map, world, window):
    panel, instruments = ingest_panel(returns, global_instruments, local_map, world)
    if window is not None:
        panel, instruments = apply_window(panel, instruments, *window)
    return panel, instruments


data_options = [
    click.option("--returns", "returns_csv", type=click.Path(), help="Returns CSV."),
    click.option(
        "--global-instruments",
        "global_csv",
        type=click.Path(),
        help="Global instrument CSV.",
    ),
    click.option(
        "--local",
        "local_pairs",
        multiple=True,
        help="Local instrument file as asset=path (repeatable).",
    ),
    click.option("--world", help="Name of the world market column."),
    click.option("--window", help="Estimation window YYYY-MM:YYYY-MM."),
    click.option("--config", "config_path", type=click.Path(), help="JSON config."),
    click.option("--out", "out_dir", type=click.Path(), help="Output directory."),
]


def _with_data_options(fn):
    for opt in reversed(data_options):
        fn = opt(fn)
    return fn


def _resolve_data(cfg, returns_csv, global_csv, local_pairs, world, window, out_dir):
    returns_csv = _pick(returns_csv, cfg, "returns")
    global_csv = _pick(global_csv, cfg, "global_instruments")
    world = _pick(world, cfg, "world")
    window = _parse_window(_pick(window, cfg, "window"))
    out_dir = Path(_pick(out_dir, cfg, "out", "icapm-out"))
    local_map = _parse_locals(local_pairs, cfg)
    for key, val in (("--returns", returns_csv), ("--global-instruments", global_csv), ("--world", world)):
        if val is None:
            raise click.ClickException(f"{key} is required (flag or config)")
    if not local_map:
        raise click.ClickException("local instrument files are required")
    return returns_csv, global_csv, local_map, world, window, out_dir


@click.group()
@click.version_option(version=__version__, prog_name="icapm")
def main():
    """Partially segmented international CAPM estimation toolkit."""


@main.command()
@_with_data_options
@click.option("--emit-csv", is_flag=True, help="Also write correlation tables as CSV.")
def describe(returns_csv, global_csv, local_pairs, world, window, config_path, out_dir, emit_csv):
    """Summary statistics and correlation diagnostics of the panel."""
    cfg = _load_config(config_path)
    returns_csv, global_csv, local_map, world, window, out = _resolve_data(
        cfg, returns_csv, global_csv, local_pairs, world, window, out_dir
    )
    try:
        panel, _ = _ingest(returns_csv, global_csv, local_map, world, window)
        report = describe_report(panel)
    except IcapmError as exc:
        raise click.ClickException(str(exc))
    _write_json(out / "describe.json", report)
    if emit_csv:
        corr = report["panel_b_unconditional_correlations"]
        _write_csv(
            out / "unconditional_correlations.csv",
            ["asset", *corr["assets"]],
            [[a, *row] for a, row in zip(corr["assets"], corr["matrix"])],
        )
        rows = []
        for asset, entries in report[
            "panel_e_squared_cross_correlations_world"
        ].items():
            for e in entries:
                rows.append([asset, str(e["lag"]), e["value"]])
        _write_csv(
            out / "squared_cross_correlations.csv",
            ["asset", "lag", "value"],
            rows,
        )
    _manifest(
        out,
        "describe",
        {
            "returns": str(returns_csv),
            "global_instruments": str(global_csv),
            "local": {k: str(v) for k, v in local_map.items()},
            "world": world,
            "window": list(window) if window else None,
            "emit_csv": bool(emit_csv),
        },
        [returns_csv, global_csv, *local_map.values()],
    )
    click.echo(f"describe: wrote {out / 'describe.json'}")


def _spec_from(cfg, model, panel, instruments, window):
    variant = _pick(model, cfg, "model", "asymmetric")
    return ModelSpec(
        variant=variant,
        n_assets=panel.n_assets,
        n_global=instruments.n_global,
        n_local=instruments.n_local,
        window=window,
    )


@main.command()
@_with_data_options
@click.option("--model", type=click.Choice(["symmetric", "asymmetric", "augmented"]))
@click.option("--hp-lambda", "hp_lambda", type=float, help="HP smoothing weight.")
@click.option("--seed", type=int, help="Recorded in the manifest.")
@click.option("--simplex-budget", type=int, help="Simplex evaluations (default 200K).")
@click.option("--max-iter", type=int, help="BHHH iteration cap.")
@click.option("--tol", type=float, help="BHHH gradient tolerance.")
@click.option("--rel-tol", type=float, help="BHHH relative objective tolerance.")
@click.option("--emit-prices", is_flag=True, help="Write the domestic price paths.")
def estimate(
    returns_csv,
    global_csv,
    local_pairs,
    world,
    window,
    config_path,
    out_dir,
    model,
    hp_lambda,
    seed,
    simplex_budget,
    max_iter,
    tol,
    rel_tol,
    emit_prices,
):
    """Fit the model by simplex warm-up plus BHHH and report the optimum."""
    cfg = _load_config(config_path)
    returns_csv, global_csv, local_map, world, window, out = _resolve_data(
        cfg, returns_csv, global_csv, local_pairs, world, window, out_dir
    )
    hp_lambda = float(_pick(hp_lambda, cfg, "hp_lambda", DEFAULT_LAMBDA))
    seed = _pick(seed, cfg, "seed")
    simplex_budget = _pick(simplex_budget, cfg, "simplex_budget")
    max_iter = int(_pick(max_iter, cfg, "max_iter", 200))
    tol = float(_pick(tol, cfg, "tol", 1e-5))
    rel_tol = float(_pick(rel_tol, cfg, "rel_tol", 1e-9))
    emit_prices = bool(emit_prices or cfg.get("emit_prices", False))

    try:
        panel, instruments = _ingest(returns_csv, global_csv, local_map, world, window)
        spec = _spec_from(cfg, model, panel, instruments, window)
        prep = prepare(panel, instruments, spec)
        result = fit_prepared(
            prep,
            simplex_budget=simplex_budget,
            max_iter=max_iter,
            tol=tol,
            rel_tol=rel_tol,
        )
        sandwich = _sandwich(result, prep) if result.converged else None
        report = estimate_report(
            result,
            sandwich,
            panel,
            instruments.global_names,
            instruments.local_names,
        )
        if sandwich is not None:
            report["vcov"] = [[float(x) for x in row] for row in sandwich.V]
            report["vcov_pseudo_inverse"] = sandwich.pseudo_inverse
    except IcapmError as exc:
        raise click.ClickException(str(exc))

    _write_json(out / "report.json", report)

    trend, _cycle = hp_filter(result.prices.delta_world, hp_lambda)
    _write_csv(
        out / "delta_world.csv",
        ["date", "delta_world", "hp_trend"],
        [
            [d, v, tr]
            for d, v, tr in zip(panel.dates, result.prices.delta_world, trend)
        ],
    )
    rho = conditional_correlations(result.cov_path, panel.world_index)
    non_world = panel.asset_names[:-1]
    _write_csv(
        out / "correlations.csv",
        ["date", *[f"rho_{a}" for a in non_world]],
        [[d, *row] for d, row in zip(panel.dates, rho)],
    )
    if emit_prices:
        _write_csv(
            out / "prices.csv",
            ["date", "delta_world", *[f"delta_{a}" for a in non_world]],
            [
                [d, dw, *dl]
                for d, dw, dl in zip(
                    panel.dates,
                    result.prices.delta_world,
                    result.prices.delta_local,
                )
            ],
        )
    _manifest(
        out,
        "estimate",
        {
            "returns": str(returns_csv),
            "global_instruments": str(global_csv),
            "local": {k: str(v) for k, v in local_map.items()},
            "world": world,
            "window": list(window) if window else None,
            "model": spec.variant,
            "hp_lambda": hp_lambda,
            "seed": seed,
            "simplex_budget": simplex_budget,
            "max_iter": max_iter,
            "tol": tol,
            "rel_tol": rel_tol,
            "emit_prices": emit_prices,
        },
        [returns_csv, global_csv, *local_map.values()],
    )
    click.echo(
        f"estimate: loglik={report['loglik']:.4f} converged={result.converged} "
        f"({out / 'report.json'})"
    )
    if not result.converged:
        sys.exit(EXIT_NOT_CONVERGED)


@main.command(name="test")
@_with_data_options
@click.option("--model", type=click.Choice(["symmetric", "asymmetric", "augmented"]))
@click.option(
    "--hypothesis",
    "hypotheses",
    multiple=True,
    help="Named hypothesis (repeatable); defaults to every applicable one.",
)
@click.option(
    "--params",
    "params_path",
    type=click.Path(),
    help="report.json from a previous estimate run (else fits inline).",
)
@click.option(
    "--params-restricted",
    "restricted_path",
    type=click.Path(),
    help="report.json of a nested restricted fit; adds a likelihood-ratio test.",
)
@click.option("--simplex-budget", type=int)
@click.option("--max-iter", type=int)
@click.option("--tol", type=float)
@click.option("--rel-tol", type=float)
def run_test(
    returns_csv,
    global_csv,
    local_pairs,
    world,
    window,
    config_path,
    out_dir,
    model,
    hypotheses,
    params_path,
    restricted_path,
    simplex_budget,
    max_iter,
    tol,
    rel_tol,
):
    """Robust Wald tests of named pricing hypotheses (plus LR when nested fits exist)."""
    cfg = _load_config(config_path)
    returns_csv, global_csv, local_map, world, window, out = _resolve_data(
        cfg, returns_csv, global_csv, local_pairs, world, window, out_dir
    )
    try:
        panel, instruments = _ingest(returns_csv, global_csv, local_map, world, window)
        spec = _spec_from(cfg, model, panel, instruments, window)
        lay = layout(spec)
        if params_path:
            with open(params_path, "r", encoding="utf-8") as fh:
                saved = json.load(fh)
            if saved.get("model") != spec.variant:
                raise ConfigurationError(
                    f"saved fit is {saved.get('model')!r}, requested {spec.variant!r}"
                )
            theta = np.asarray(saved["theta_hat"], dtype=float)
            if "vcov" not in saved:
                raise ConfigurationError(
                    "saved report carries no vcov; re-run estimate to convergence"
                )
            vcov = np.asarray(saved["vcov"], dtype=float)
            loglik_u = float(saved["loglik"])
        else:
            prep = prepare(panel, instruments, spec)
            result = fit_prepared(
                prep,
                simplex_budget=_pick(simplex_budget, cfg, "simplex_budget"),
                max_iter=int(_pick(max_iter, cfg, "max_iter", 200)),
                tol=float(_pick(tol, cfg, "tol", 1e-5)),
                rel_tol=float(_pick(rel_tol, cfg, "rel_tol", 1e-9)),
            )
            if not result.converged:
                raise ConfigurationError(
                    "inline estimation did not converge; fix the fit first"
                )
            sandwich = _sandwich(result, prep)
            theta = result.theta_hat
            vcov = sandwich.V
            loglik_u = result.loglik_unpenalized

        names = list(
            _pick(tuple(hypotheses), cfg, "hypotheses")
            or available_hypotheses(lay, panel.asset_names)
        )
        results = []
        for name in names:
            label, idx = hypothesis_indices(name, lay, panel.asset_names)
            results.append(wald_test(theta, vcov, idx, hypothesis=label))
        rows = tests_report(results)
        for name, row in zip(names, rows):
            row["name"] = name
            row["kind"] = "wald"

        if restricted_path:
            with open(restricted_path, "r", encoding="utf-8") as fh:
                restricted = json.load(fh)
            df = int(len(theta) - restricted["n_params"])
            lr = lr_test(
                float(restricted["loglik"]),
                loglik_u,
                df,
                hypothesis=(
                    f"{restricted.get('model')} restriction of {spec.variant}"
                ),
            )
            rows.append(
                {
                    "name": "likelihood-ratio",
                    "kind": "lr",
                    "hypothesis": lr.hypothesis,
                    "statistic": lr.statistic,
                    "df": lr.df,
                    "p_value": lr.p_value,
                    "stars": tests_report([lr])[0]["stars"],
                }
            )
    except IcapmError as exc:
        raise click.ClickException(str(exc))

    _write_json(out / "tests.json", rows)
    _manifest(
        out,
        "test",
        {
            "returns": str(returns_csv),
            "global_instruments": str(global_csv),
            "local": {k: str(v) for k, v in local_map.items()},
            "world": world,
            "window": list(window) if window else None,
            "model": spec.variant,
            "hypotheses": names,
            "params": str(params_path) if params_path else None,
            "params_restricted": str(restricted_path) if restricted_path else None,
        },
        [returns_csv, global_csv, *local_map.values()],
    )
    click.echo(f"test: wrote {out / 'tests.json'} ({len(rows)} rows)")


@main.command()
@_with_data_options
@click.option(
    "--params",
    "params_path",
    type=click.Path(),
    help="report.json from a previous estimate run (else fits inline).",
)
@click.option("--model", type=click.Choice(["symmetric", "asymmetric", "augmented"]))
def correlations(
    returns_csv, global_csv, local_pairs, world, window, config_path, out_dir,
    params_path, model,
):
    """Export conditional correlations of each asset with the world market."""
    cfg = _load_config(config_path)
    returns_csv, global_csv, local_map, world, window, out = _resolve_data(
        cfg, returns_csv, global_csv, local_pairs, world, window, out_dir
    )
    try:
        panel, instruments = _ingest(returns_csv, global_csv, local_map, world, window)
        spec = _spec_from(cfg, model, panel, instruments, window)
        prep = prepare(panel, instruments, spec)
        if params_path:
            with open(params_path, "r", encoding="utf-8") as fh:
                saved = json.load(fh)
            theta = np.asarray(saved["theta_hat"], dtype=float)
        else:
            result = fit_prepared(prep)
            theta = result.theta_hat
        path = evaluate_model(theta, prep)
        rho = conditional_correlations(path.cov_path, panel.world_index)
    except IcapmError as exc:
        raise click.ClickException(str(exc))
    non_world = panel.asset_names[:-1]
    _write_csv(
        out / "correlations.csv",
        ["date", *[f"rho_{a}" for a in non_world]],
        [[d, *row] for d, row in zip(panel.dates, rho)],
    )
    _manifest(
        out,
        "correlations",
        {
            "returns": str(returns_csv),
            "global_instruments": str(global_csv),
            "local": {k: str(v) for k, v in local_map.items()},
            "world": world,
            "window": list(window) if window else None,
            "params": str(params_path) if params_path else None,
        },
        [returns_csv, global_csv, *local_map.values()],
    )
    click.echo(f"correlations: wrote {out / 'correlations.csv'}")


@main.command()
@click.option("--input", "input_csv", type=click.Path(), required=True)
@click.option("--column", required=True, help="Column to filter.")
@click.option("--hp-lambda", "hp_lambda", type=float, default=DEFAULT_LAMBDA)
@click.option("--out", "out_dir", type=click.Path(), default="icapm-out")
def hp(input_csv, column, hp_lambda, out_dir):
    """Hodrick-Prescott trend/cycle decomposition of one CSV column."""
    out = Path(out_dir)
    df = pd.read_csv(input_csv)
    if column not in df.columns:
        raise click.ClickException(
            f"column {column!r} not in {list(df.columns)}"
        )
    series = pd.to_numeric(df[column], errors="coerce")
    if series.isna().any():
        raise click.ClickException(f"column {column!r} has missing values")
    try:
        trend, cycle = hp_filter(series.to_numpy(dtype=float), hp_lambda)
    except IcapmError as exc:
        raise click.ClickException(str(exc))
    dates = (
        df["date"].astype(str).tolist()
        if "date" in df.columns
        else [str(i) for i in range(len(series))]
    )
    _write_csv(
        out / "hp.csv",
        ["date", column, "trend", "cycle"],
        [
            [d, v, tr, cy]
            for d, v, tr, cy in zip(dates, series, trend, cycle)
        ],
    )
    _manifest(
        out,
        "hp",
        {"input": str(input_csv), "column": column, "hp_lambda": hp_lambda},
        [input_csv],
    )
    click.echo(f"hp: wrote {out / 'hp.csv'}")


@main.command()
@click.option("--model", type=click.Choice(["symmetric", "asymmetric", "augmented"]), default="asymmetric")
@click.option("--n-assets", type=int, default=5, show_default=True)
@click.option("--n-global", type=int, default=5, show_default=True)
@click.option("--n-local", type=int, default=4, show_default=True)
@click.option("--t", "n_periods", type=int, default=407, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--burn-in", type=int, default=200, show_default=True)
@click.option(
    "--process",
    type=click.Choice(["constant", "iid-gaussian", "ar1"]),
    default="iid-gaussian",
    show_default=True,
)
@click.option("--scale", type=float, default=0.1, show_default=True)
@click.option("--rho", type=float, default=0.0, show_default=True)
@click.option("--start-month", default="1970-02", show_default=True)
@click.option("--theta", "theta_path", type=click.Path(), help="JSON list overriding the default truth.")
@click.option("--out", "out_dir", type=click.Path(), default="icapm-out")
def simulate(
    model,
    n_assets,
    n_global,
    n_local,
    n_periods,
    seed,
    burn_in,
    process,
    scale,
    rho,
    start_month,
    theta_path,
    out_dir,
):
    """Write a synthetic sample in the CSV formats the other commands consume."""
    out = Path(out_dir)
    try:
        spec = ModelSpec(
            variant=model, n_assets=n_assets, n_global=n_global, n_local=n_local
        )
        if theta_path:
            with open(theta_path, "r", encoding="utf-8") as fh:
                theta = np.asarray(json.load(fh), dtype=float)
        else:
            theta = plausible_theta(spec)
        config = SimulationConfig(
            theta_true=theta,
            spec=spec,
            n_periods=n_periods,
            seed=seed,
            instrument_process=InstrumentProcess(kind=process, scale=scale, rho=rho),
            burn_in=burn_in,
            start_month=start_month,
        )
        sim = simulate_panel(config)
    except IcapmError as exc:
        raise click.ClickException(str(exc))

    out.mkdir(parents=True, exist_ok=True)
    non_world = sim.panel.asset_names[:-1]
    write_returns_csv(sim.panel, out / "returns.csv")
    local_paths = {a: out / f"local_{a}.csv" for a in non_world}
    write_instrument_csvs(
        sim.instruments, sim.panel.dates, out / "global.csv", local_paths, non_world
    )
    _write_json(
        out / "theta_true.json",
        {
            "theta": [float(x) for x in sim.theta_true],
            "model": model,
            "n_assets": n_assets,
            "n_global": n_global,
            "n_local": n_local,
            "seed": seed,
            "world": sim.panel.world_name,
        },
    )
    _manifest(
        out,
        "simulate",
        {
            "model": model,
            "n_assets": n_assets,
            "n_global": n_global,
            "n_local": n_local,
            "t": n_periods,
            "seed": seed,
            "burn_in": burn_in,
            "process": process,
            "scale": scale,
            "rho": rho,
            "start_month": start_month,
        },
        [],
    )
    click.echo(f"simulate: wrote sample to {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
