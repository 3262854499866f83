"""Command-line interface.

Exit codes: 0 success (whatever the test decision), 2 usage, I/O or parse
errors, 3 numerical failures.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
import time
import warnings

import click
import numpy as np

from .errors import ConfigurationError, UniformLRError
from .limit_law import DEFAULT_DRAWS, default_surface_grid, quantile_surface, write_surface_csv
from .report import RunManifest

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class InputError(click.ClickException):
    exit_code = EXIT_USAGE


class NumericalFailure(click.ClickException):
    exit_code = EXIT_NUMERICAL


def _set_threads(threads: int) -> None:
    import numba

    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _guarded(fn):
    """Map library exceptions to exit codes and echo the seed on failure."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        seed = kwargs.get("seed")
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except ConfigurationError as exc:
            raise InputError(str(exc)) from exc
        except UniformLRError as exc:
            raise NumericalFailure(f"{type(exc).__name__}: {exc} [seed={seed}]") from exc
        except (OSError, ValueError, csv.Error, json.JSONDecodeError) as exc:
            raise InputError(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv_columns(path: str) -> tuple[list[str], np.ndarray]:
    """Read a headed numeric CSV into ``(names, values)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header) or len(set(header)) != len(header) or all(_is_number(h) for h in header):
        raise InputError(f"{path}: malformed header {rows[0]!r}")
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric value ({exc})") from exc
    if any(len(r) != len(header) for r in body):
        raise InputError(f"{path}: rows do not match the header width")
    return header, values


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _write_manifest(path: str | None, command: str, params: dict, seed: int, t0: float) -> None:
    if path:
        manifest = RunManifest(command=command, config=params, seed=seed, wall_time=time.perf_counter() - t0)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(manifest.to_json() + "\n")


def _split_floats(text: str | None):
    if text is None:
        return None
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.split(",")]


def _grid(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise InputError(f"grid {spec!r} must look like start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if not step > 0:
        raise InputError("grid step must be positive")
    if stop < start:
        return []
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


seed_option = click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
threads_option = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                              help="Worker cap; results do not depend on it.")
draws_option = click.option("--draws", type=click.IntRange(min=100), default=DEFAULT_DRAWS, show_default=True,
                            help="Monte Carlo draws per simulated quantile.")
level_options = [
    click.option("--alpha", type=float, default=0.05, show_default=True, help="Nominal level."),
    click.option("--eta", type=float, default=None, help="Bonferroni split (default alpha/10)."),
]
manifest_option = click.option("--manifest", type=click.Path(dir_okay=False), default=None,
                               help="Write a JSON run manifest here.")


def _level_options(fn):
    for opt in reversed(level_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Uniform LR tests with nuisance parameters near the boundary."""
    warnings.simplefilter("default")


def _roles_for(columns, gamma, beta, delta):
    roles = {}
    for role, cols in (("gamma", gamma), ("beta", beta), ("delta", delta)):
        for c in cols:
            if c not in columns:
                raise InputError(f"unknown column {c!r}; available: {columns}")
            if c in roles:
                raise InputError(f"column {c!r} assigned two roles")
            roles[c] = role
    return roles


@main.command("test-regression")
@click.argument("csv_path", type=click.Path(dir_okay=False))
@click.option("--y", "y_col", default=None, help="Response column (default: first column).")
@click.option("--gamma", multiple=True, help="Tested column (repeatable).")
@click.option("--beta", multiple=True, help="Nonnegative nuisance column (repeatable).")
@click.option("--delta", multiple=True, help="Unrestricted column (repeatable).")
@click.option("--gamma-interior", multiple=True, help="Tested column left unrestricted under the alternative.")
@click.option("--constrained-residuals", is_flag=True, help="Eicker-White from constrained residuals.")
@_level_options
@draws_option
@seed_option
@threads_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the JSON report here.")
@manifest_option
@click.pass_context
@_guarded
def test_regression_cmd(ctx, csv_path, y_col, gamma, beta, delta, gamma_interior, constrained_residuals,
                        alpha, eta, draws, seed, threads, out, manifest):
    """Uniform LR test of gamma = 0 in a sign-constrained regression."""
    from .regression import RegressionData, regression_test

    t0 = time.perf_counter()
    _set_threads(threads)
    names, values = read_csv_columns(csv_path)
    y_col = names[0] if y_col is None else y_col
    if y_col not in names:
        raise InputError(f"unknown response column {y_col!r}")
    regressors = [c for c in names if c != y_col]
    roles = _roles_for(regressors, gamma, beta, delta)
    missing = [c for c in regressors if c not in roles]
    if missing:
        raise InputError(f"columns without a role: {missing}")
    if any(c not in gamma for c in gamma_interior):
        raise InputError("--gamma-interior columns must also be passed with --gamma")
    idx = [names.index(c) for c in regressors]
    data = RegressionData(
        y=values[:, names.index(y_col)],
        x=values[:, idx],
        roles=[roles[c] for c in regressors],
        gamma_interior=[c in gamma_interior for c in regressors if roles[c] == "gamma"],
        names=regressors,
    )
    report = regression_test(data, alpha=alpha, eta=eta, draws=draws, seed=seed,
                             constrained_residuals=constrained_residuals)
    _emit(report.to_json() + "\n", out)
    _write_manifest(manifest, "test-regression", ctx.params, seed, t0)


@main.command("test-arch")
@click.argument("csv_path", type=click.Path(dir_okay=False))
@click.option("--y", "y_col", default=None, help="Return column (default: first column).")
@click.option("--q", type=click.IntRange(min=0), default=1, show_default=True, help="Squared-return lags.")
@click.option("--gamma", multiple=True, help="Tested covariate (repeatable).")
@click.option("--beta", multiple=True, help="Nonnegative nuisance covariate (repeatable).")
@click.option("--delta", multiple=True, help="Covariate treated as interior (repeatable).")
@click.option("--lag-role", type=click.Choice(["delta", "beta", "gamma"]), multiple=True,
              help="Role of each ARCH lag in order (default: all delta).")
@click.option("--naive", is_flag=True, help="Also print the comparison with the naive boundary CV.")
@_level_options
@draws_option
@seed_option
@threads_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the JSON report here.")
@manifest_option
@click.pass_context
@_guarded
def test_arch_cmd(ctx, csv_path, y_col, q, gamma, beta, delta, lag_role, naive, alpha, eta, draws, seed,
                  threads, out, manifest):
    """Uniform LR test of gamma = 0 in an ARCH-X model.

    Row t of the covariate columns must hold the covariate dated t-1.
    """
    from .arch import ArchData, ArchParamSpace, arch_test

    t0 = time.perf_counter()
    _set_threads(threads)
    names, values = read_csv_columns(csv_path)
    y_col = names[0] if y_col is None else y_col
    if y_col not in names:
        raise InputError(f"unknown response column {y_col!r}")
    covariates = [c for c in names if c != y_col]
    roles = _roles_for(covariates, gamma, beta, delta)
    used = [c for c in covariates if c in roles]
    lag_roles = list(lag_role) if lag_role else ["delta"] * q
    if len(lag_roles) != q:
        raise InputError(f"--lag-role given {len(lag_roles)} times for q={q}")
    if not used and q == 0:
        raise InputError("model has neither lags nor covariates")
    x = values[:, [names.index(c) for c in used]] if used else None
    data = ArchData(values[:, names.index(y_col)], x, q=q, names=used)
    space = ArchParamSpace.for_data(data, [roles[c] for c in used], lag_roles)
    report = arch_test(data, space, alpha=alpha, eta=eta, draws=draws, seed=seed)
    _emit(report.to_json() + "\n", out)
    if naive:
        click.echo(
            f"LR={report.lr_stat:.4f}  uniform CV={report.critical_value:.4f} ({report.decision})  "
            f"naive CV={report.naive_cv:.4f} ({report.naive_decision})",
            err=True,
        )
    _write_manifest(manifest, "test-arch", ctx.params, seed, t0)


def _load_configs(path: str, reps, seed, draws):
    from .simulation import DgpConfig

    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    items = raw["cells"] if isinstance(raw, dict) and "cells" in raw else raw
    items = items if isinstance(items, list) else [items]
    configs = []
    for item in items:
        if not isinstance(item, dict):
            raise ConfigurationError("each config must be a JSON object")
        item = dict(item)
        if reps is not None:
            item["replications"] = reps
        if seed is not None:
            item["master_seed"] = seed
        if draws is not None:
            item["draws"] = draws
        configs.append(DgpConfig.from_dict(item))
    return configs


@main.command("mc")
@click.argument("table", required=False)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON DgpConfig (or {'cells': [...]}) instead of a table id.")
@click.option("--reps", type=click.IntRange(min=1), default=None, help="Replications per cell (default 10000).")
@click.option("--seed", type=int, default=None, help="Master seed (default 0).")
@click.option("--draws", type=click.IntRange(min=100), default=None, help="Draws per simulated quantile.")
@click.option("--rho", "rho", type=float, multiple=True, help="Keep only cells with this rho (repeatable).")
@click.option("--n", "n", type=int, multiple=True, help="Keep only cells with this n (repeatable).")
@click.option("--gamma", "gamma", type=float, multiple=True, help="Keep only cells with this gamma.")
@click.option("--beta", "beta", type=float, multiple=True, help="Keep only cells with this (last) beta.")
@threads_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Result CSV (default stdout).")
@manifest_option
@click.option("--quiet", is_flag=True, help="No progress lines on stderr.")
@click.pass_context
@_guarded
def mc_cmd(ctx, table, config_path, reps, seed, draws, rho, n, gamma, beta, threads, out, manifest, quiet):
    """Rejection frequencies for a paper table (t1-t6, t8) or a config file."""
    import io

    from .simulation import TABLES, rejection_study, table_cells, write_results_csv

    t0 = time.perf_counter()
    if (table is None) == (config_path is None):
        raise InputError("give exactly one of TABLE or --config")
    if table is not None:
        if table not in TABLES:
            raise InputError(f"unknown table {table!r}; expected one of {sorted(TABLES)}")
        configs = table_cells(
            table,
            replications=10_000 if reps is None else reps,
            master_seed=0 if seed is None else seed,
            draws=DEFAULT_DRAWS if draws is None else draws,
            rho=rho or None,
            n=n or None,
            gamma=gamma or None,
            beta=beta or None,
        )
    else:
        configs = _load_configs(config_path, reps, seed, draws)
    if not configs:
        raise InputError("no cells selected")

    def progress(res):
        if not quiet:
            c = res.config
            click.echo(
                f"[{c.family} gamma={c.gamma:g} beta={','.join(f'{b:g}' for b in c.beta)} rho={c.rho} n={c.n}] "
                f"LR={res.naive:.4f} LR-uniform={res.uniform:.4f} ({res.seconds:.1f}s)",
                err=True,
            )

    results = rejection_study(configs, threads=threads, progress=progress)
    buf = io.StringIO()
    write_results_csv(results, buf)
    _emit(buf.getvalue(), out)
    manifest = manifest or (f"{out}.manifest.json" if out else None)
    _write_manifest(manifest, "mc", ctx.params, configs[0].master_seed, t0)


@main.command("quantile-surface")
@click.option("--rhos", default=None, help="Comma-separated rho values (overrides --rho-grid).")
@click.option("--bs", default=None, help="Comma-separated b values, 'inf' allowed (overrides --b-grid).")
@click.option("--rho-grid", default=None, help="start:stop:step (default -0.95:0.95:0.05).")
@click.option("--b-grid", default=None, help="start:stop:step (default 0:5:0.1).")
@click.option("--level", type=float, default=0.95, show_default=True)
@draws_option
@seed_option
@threads_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (default stdout).")
@manifest_option
@click.pass_context
@_guarded
def quantile_surface_cmd(ctx, rhos, bs, rho_grid, b_grid, level, draws, seed, threads, out, manifest):
    """Quantiles of L(b, b) in the bivariate Gaussian model over a (rho, b) grid."""
    import io

    t0 = time.perf_counter()
    _set_threads(threads)
    default_rhos, default_bs = default_surface_grid()
    rho_list = _split_floats(rhos)
    if rho_list is None:
        rho_list = _grid(rho_grid) if rho_grid else list(default_rhos)
    b_list = _split_floats(bs)
    if b_list is None:
        b_list = _grid(b_grid) if b_grid else list(default_bs)
    rows = quantile_surface(rho_list, b_list, level=level, draws=draws, seed=seed)
    buf = io.StringIO()
    write_surface_csv(rows, buf)
    _emit(buf.getvalue(), out)
    _write_manifest(manifest, "quantile-surface", ctx.params, seed, t0)


@main.command("replay")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Override the recorded output path.")
@click.pass_context
def replay_cmd(ctx, manifest_path, out):
    """Re-run the command recorded in a manifest."""
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            m = RunManifest.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read manifest: {exc}") from exc
    cmd = main.get_command(ctx, m.command)
    if cmd is None or m.command == "replay":
        raise InputError(f"manifest names unknown command {m.command!r}")
    params = dict(m.config)
    params["manifest"] = None
    if out is not None:
        params["out"] = out
    for p in cmd.params:
        if p.name in params and p.multiple and params[p.name] is not None:
            params[p.name] = tuple(params[p.name])
    ctx.invoke(cmd, **params)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
