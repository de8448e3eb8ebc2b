"""CLI for the orientation percolation lab."""

import json
import logging
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from opl import __version__
from opl.asymptotics import (
    critical_p,
    find_c_roots,
    main_formula,
    pa_asymptotic,
    quartic,
    quartic_discriminant,
    truncated_series,
)
from opl.config import Config, ConfigError, get_data_dir
from opl.exact import (
    DEEP_CAP,
    DEFAULT_CAP,
    CountsTable,
    check_budget,
    consistency_table,
    enumerate_counts,
    prob_from_counts,
)
from opl.graph import BudgetExceededError, ContractError, ParameterError, Params
from opl.models import RunRecord, format_rational, parse_rational
from opl.montecarlo import locate_sign_change, mc_estimate, mc_scan, write_estimates_csv
from opl.pairs import cov_pairsum, default_cutoff
from opl.polynomial import cov_polynomial, find_critical_exact
from opl.sampling import RngStream
from opl.storage import CountsCache, RecordStore, StorageError

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("opl")


class RationalType(click.ParamType):
    """Accepts "a/b" or a decimal literal, parsed exactly."""

    name = "rational"

    def convert(self, value, param, ctx):
        if isinstance(value, Fraction):
            return value
        try:
            return parse_rational(value)
        except ParameterError as e:
            self.fail(str(e), param, ctx)


RATIONAL = RationalType()


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ParameterError(f"Not a comma-separated list of integers: {text!r}") from e


def setup_logging(config: Config, verbose: bool = False, debug: bool = False) -> None:
    """Rich console handler on stderr plus a file handler in the data directory."""
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    console_handler = RichHandler(console=err_console, show_path=False)
    console_handler.setLevel(logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING)
    logger.addHandler(console_handler)

    file_handler = logging.FileHandler(config.log_path)
    file_handler.setLevel(logging.DEBUG if debug else logging.INFO)
    file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logger.addHandler(file_handler)


@contextmanager
def handle_errors():
    """Map library errors onto exit codes."""
    try:
        yield
    except BudgetExceededError as e:
        err_console.print(f"[red]Refused:[/red] {e}", markup=True, highlight=False)
        raise SystemExit(3)
    except (ParameterError, ContractError, ConfigError) as e:
        err_console.print(f"[red]Error:[/red] {e}", highlight=False)
        raise SystemExit(2)
    except StorageError as e:
        err_console.print(f"[red]Storage error:[/red] {e}", highlight=False)
        raise SystemExit(1)


class Session:
    """Per-invocation state: config, logging, record store, cache."""

    def __init__(
        self,
        threads: Optional[int] = None,
        out: Optional[str] = None,
        cache: Optional[str] = None,
        deep: bool = False,
        verbose: bool = False,
        debug: bool = False,
    ):
        self.config = Config(data_dir=get_data_dir()).load_if_present()
        setup_logging(self.config, verbose=verbose, debug=debug)
        if threads is not None:
            if threads < 1:
                raise ParameterError(f"--threads must be at least 1, got {threads}")
            self.threads = threads
        else:
            self.threads = self.config.threads
        self.store = RecordStore(Path(out) if out else self.config.records_path)
        self.cache = CountsCache(Path(cache) if cache else self.config.cache_dir)
        self.cap = DEEP_CAP if (deep or self.config.deep) else DEFAULT_CAP

    def ensure_budget(self, n: int) -> None:
        """Refuse an uncached n whose enumeration exceeds the cap."""
        if not self.cache.path_for(n).exists():
            check_budget(n, self.cap)

    def counts(self, n: int) -> CountsTable:
        """Cached census for n, enumerating (within the cap) on a miss."""
        table = self.cache.load(n)
        if table is not None:
            return table
        required = check_budget(n, self.cap)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=err_console,
            transient=True,
        ) as progress:
            progress.add_task(f"Enumerating {required:,} configurations for n={n}...", total=None)
            table = enumerate_counts(n, cap=self.cap, threads=self.threads)
        self.cache.save(table)
        return table

    def record(self, command: str, params: dict, result, seed=None, stream=None) -> None:
        self.store.append(RunRecord(command=command, params=params, result=result, seed=seed, stream=stream))


def run_options(f):
    """--threads, --out, --verbose, --debug."""
    f = click.option("--debug", is_flag=True, help="Show debug logging")(f)
    f = click.option("--verbose", is_flag=True, help="Show progress logging")(f)
    f = click.option("--out", type=click.Path(dir_okay=False), help="JSON-lines record file")(f)
    f = click.option("--threads", type=int, help="Worker processes (default: config)")(f)
    return f


def exact_options(f):
    """--cache and --deep for commands that need a counts table."""
    f = click.option("--deep", is_flag=True, help="Raise the enumeration budget to 3^21")(f)
    f = click.option("--cache", type=click.Path(file_okay=False), help="Counts cache directory")(f)
    return f


def _write_csv(path: str, writer) -> None:
    with open(path, "w", newline="") as f:
        writer(f)
    console.print(f"[dim]CSV written to {path}[/dim]")


def probability_options(f):
    """--p or --c, exactly one."""
    f = click.option("--c", "c", type=RATIONAL, help="Scaled parameter, p = 2c/n exactly")(f)
    f = click.option("--p", "p", type=RATIONAL, help="Edge probability, a/b or decimal")(f)
    return f


def _params(n: int, p: Optional[Fraction], c: Optional[Fraction]) -> Params:
    if p is not None and c is not None:
        raise ParameterError("Give either --p or --c, not both")
    if c is not None:
        return Params.from_c(n, c)
    if p is None:
        raise ParameterError("Give --p or --c")
    return Params(n=n, p=p)


def _probability_record(params: Params) -> dict:
    record = {"n": params.n, "p": format_rational(params.p)}
    if params.c is not None:
        record["c"] = format_rational(params.c)
    return record


@click.group()
@click.version_option(version=__version__)
def cli():
    """Correlation of a->s and s->b in randomly oriented G(n, p)."""
    pass


@cli.command()
def setup():
    """Interactive wizard for run defaults."""
    config = Config(data_dir=get_data_dir())
    if config.exists():
        console.print(f"[yellow]Configuration already exists at:[/yellow] {config.config_path}")
        if not click.confirm("Overwrite existing configuration?"):
            console.print("[dim]Setup cancelled.[/dim]")
            return
        with handle_errors():
            config.load()

    console.print("\n[bold]opl setup[/bold]\n")
    with handle_errors():
        config.set_threads(click.prompt("Worker processes", type=int, default=config.threads))
        config.set_seed(click.prompt("Default seed", type=int, default=config.seed))
        config.set_samples(click.prompt("Default Monte Carlo samples", type=int, default=config.samples))
        config.deep = click.confirm("Allow deep enumeration (n=7)?", default=config.deep)
        config.set_scan_points(click.prompt("Default scan points", type=int, default=config.scan_points))
    config.save()

    console.print("\n[green]✓ Setup complete![/green]")
    console.print(f"  Config saved to: {config.config_path}")


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), help="JSON-lines record file")
def status(out):
    """Show configuration, cached tables and recorded runs."""
    with handle_errors():
        config = Config(data_dir=get_data_dir()).load_if_present()
        store = RecordStore(Path(out) if out else config.records_path)
        cache = CountsCache(config.cache_dir)
        records = store.load_records()

    table = Table(title="opl status")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Config file", str(config.config_path) if config.exists() else "(defaults)")
    for key, value in config.summary():
        table.add_row(key, str(value))
    cached = cache.cached()
    table.add_row("Cached n", ", ".join(str(n) for n in cached) if cached else "none")
    table.add_row("Records", str(len(records)))
    console.print(table)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@probability_options
@exact_options
@run_options
def exact(n, p, c, cache, deep, threads, out, verbose, debug):
    """Exact P(A), P(B), P(A and B) and Cov(A, B)."""
    with handle_errors():
        session = Session(threads, out, cache, deep, verbose, debug)
        session.ensure_budget(n)
        params = _params(n, p, c)
        p_a, p_b, p_ab = prob_from_counts(session.counts(n), params.p)
        cov = p_ab - p_a * p_b
        result = {
            "pA": format_rational(p_a),
            "pB": format_rational(p_b),
            "pAB": format_rational(p_ab),
            "cov": format_rational(cov),
        }
        session.record("exact", _probability_record(params), result)

    click.echo(f"P(A)       = {result['pA']}")
    click.echo(f"P(B)       = {result['pB']}")
    click.echo(f"P(A and B) = {result['pAB']}")
    click.echo(f"cov = {result['cov']} (~ {float(cov):.6e})")


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@exact_options
@run_options
def poly(n, cache, deep, threads, out, verbose, debug):
    """Coefficients of the covariance polynomial in p."""
    with handle_errors():
        if n < 3:
            raise ParameterError(f"n must be at least 3, got {n}")
        session = Session(threads, out, cache, deep, verbose, debug)
        polynomial = cov_polynomial(n, counts=session.counts(n))
        session.record("poly", {"n": n}, polynomial.to_dict())

    click.echo(f"Cov(A, B) for n={n}, degree <= {len(polynomial.coefficients) - 1}:")
    for k, coef in enumerate(polynomial.coefficients):
        if coef:
            click.echo(f"  p^{k}: {format_rational(coef)}")


@cli.command()
@click.option("--n", "n", type=int, help="Number of vertices")
@click.option("--asymptotic", is_flag=True, help="Roots c1, c2 of the limiting quartic instead")
@click.option("--lo", type=RATIONAL, default="0", show_default=True, help="Lower end of the search interval")
@click.option("--hi", type=RATIONAL, default="1", show_default=True, help="Upper end of the search interval")
@click.option("--grid", type=int, help="Scan grid size (default: config)")
@exact_options
@run_options
def roots(n, asymptotic, lo, hi, grid, cache, deep, threads, out, verbose, debug):
    """Critical probabilities for fixed n, or the asymptotic constants."""
    with handle_errors():
        session = Session(threads, out, cache, deep, verbose, debug)
        if asymptotic:
            c1, c2 = find_c_roots()
            result = {"c1": c1, "c2": c2, "C1": 2 * c1, "discriminant": quartic_discriminant()}
            if n is not None:
                result["critical_p"] = critical_p(n)
            session.record("roots", {"asymptotic": True, "n": n}, result)
        else:
            if n is None:
                raise ParameterError("--n is required unless --asymptotic is given")
            if n < 3:
                raise ParameterError(f"n must be at least 3, got {n}")
            grid = grid or session.config.root_grid
            brackets = find_critical_exact(n, (lo, hi), grid=grid, counts=session.counts(n))
            session.record(
                "roots",
                {"n": n, "lo": format_rational(lo), "hi": format_rational(hi), "grid": grid},
                [b.to_dict() for b in brackets],
            )

    if asymptotic:
        click.echo(f"c1 = {c1:.6f}")
        click.echo(f"c2 = {c2:.6f}")
        click.echo(f"C1 = 2*c1 = {2 * c1:.6f}")
        click.echo(f"discriminant = {result['discriminant']}")
        if n is not None:
            click.echo(f"first critical p for n={n}: {result['critical_p']:.6e}")
        return
    if not brackets:
        click.echo(f"No sign change of Cov(A, B) on ({lo}, {hi}) for n={n}")
    for b in brackets:
        if b.exact:
            click.echo(f"root at p = {format_rational(b.root)} in [{float(b.lo):.12f}, {float(b.hi):.12f}]")
        else:
            click.echo(f"root in [{float(b.lo):.12f}, {float(b.hi):.12f}] (~ {float(b.midpoint):.10f})")


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@click.option("--L", "L", type=int, help="Path length cut-off (default: ceil(ln(n)^2))")
@probability_options
@click.option(
    "--method",
    type=click.Choice(["pattern", "concrete"]),
    default="pattern",
    show_default=True,
    help="Enumerate relabeling patterns or concrete path pairs",
)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write per-class rows as CSV")
@run_options
def pairs(n, L, p, c, method, csv_path, threads, out, verbose, debug):
    """Cov(X'_A, X'_B) as a sum over classified path pairs."""
    with handle_errors():
        params = _params(n, p, c)
        session = Session(threads, out, verbose=verbose, debug=debug)
        cutoff = L if L is not None else default_cutoff(n).L
        breakdown = cov_pairsum(n, cutoff, params.p, method=method, max_n=session.config.pair_max_n)
        session.record(
            "pairs",
            {**_probability_record(params), "L": cutoff, "method": method},
            breakdown.to_dict(),
        )

    table = Table(title=f"Path pairs, n={n}, L={cutoff}, p={format_rational(params.p)}")
    table.add_column("Class", style="cyan")
    table.add_column("Subtotal", style="green")
    for variant, value in breakdown.by_class.items():
        table.add_row(variant.value, f"{float(value):.6e}")
    table.add_row("total", f"{float(breakdown.total):.6e}")
    console.print(table)
    click.echo(f"total = {format_rational(breakdown.total)}")
    if csv_path:
        _write_csv(csv_path, breakdown.write_csv)


@cli.command()
@click.option("--c", "c", type=float, required=True, help="Scaled parameter, p = 2c/n")
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@click.option("--terms", type=int, help="Also show the series truncated after this many terms")
@run_options
def asym(c, n, terms, threads, out, verbose, debug):
    """Leading-order covariance and its Type 1 / Type 2 split."""
    with handle_errors():
        session = Session(threads, out, verbose=verbose, debug=debug)
        formula = main_formula(c, n)
        result = formula.to_dict()
        result["quartic"] = quartic(c)
        result["pA"] = pa_asymptotic(c, n)
        if terms is not None:
            series1, series2 = truncated_series(c, terms)
            result["series"] = {"terms": terms, "type1": series1, "type2": series2}
        session.record("asym", {"c": c, "n": n, "terms": terms}, result)

    click.echo(f"cov ~ {formula.value:.6e}")
    click.echo(f"  type 1: {formula.type1:.6e}")
    click.echo(f"  type 2: {formula.type2:.6e}")
    click.echo(f"P(A) ~ {result['pA']:.6e}")
    if terms is not None:
        click.echo(f"series to {terms} terms: type 1 {series1:.10f}, type 2 {series2:.10f}")


def _mc_options(f):
    f = click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write estimates as CSV")(f)
    f = click.option("--stream", type=int, default=0, show_default=True, help="Stream id")(f)
    f = click.option("--seed", type=int, help="Seed (default: config)")(f)
    f = click.option("--samples", type=int, help="Samples per point (default: config)")(f)
    return f


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@probability_options
@_mc_options
@run_options
def mc(n, p, c, samples, seed, stream, csv_path, threads, out, verbose, debug):
    """Monte Carlo estimate of Cov(A, B)."""
    with handle_errors():
        params = _params(n, p, c)
        session = Session(threads, out, verbose=verbose, debug=debug)
        samples = samples or session.config.samples
        seed = session.config.seed if seed is None else seed
        estimate = mc_estimate(params, samples, RngStream(seed=seed, key=(stream,)), threads=session.threads)
        session.record(
            "mc",
            {**_probability_record(params), "samples": samples},
            estimate.to_dict(),
            seed=seed,
            stream=stream,
        )

    click.echo(f"P(A)  ~ {estimate.pA_hat:.6f}")
    click.echo(f"P(B)  ~ {estimate.pB_hat:.6f}")
    click.echo(f"P(AB) ~ {estimate.pAB_hat:.6f}")
    click.echo(f"cov ~ {estimate.cov_hat:.6e} ± {estimate.std_err:.2e}")
    if csv_path:
        _write_csv(csv_path, lambda f: write_estimates_csv(f, [estimate]))


def _scan_grid(lo: Fraction, hi: Fraction, points: int, grid: Optional[str]) -> List[Fraction]:
    if grid:
        return [parse_rational(x) for x in grid.split(",") if x.strip()]
    if points < 1:
        raise ParameterError(f"points must be at least 1, got {points}")
    if points == 1:
        return [lo]
    return [lo + (hi - lo) * i / (points - 1) for i in range(points)]


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@click.option("--lo", type=RATIONAL, help="First grid point")
@click.option("--hi", type=RATIONAL, help="Last grid point")
@click.option("--points", type=int, help="Evenly spaced points from lo to hi (default: config)")
@click.option("--grid", "grid", help="Explicit comma-separated grid instead of lo/hi/points")
@click.option("--scaled", is_flag=True, help="Read lo/hi/grid as c with p = 2c/n")
@_mc_options
@run_options
def scan(n, lo, hi, points, grid, scaled, samples, seed, stream, csv_path, threads, out, verbose, debug):
    """Monte Carlo covariance curve over a grid of p."""
    with handle_errors():
        if grid is None and (lo is None or hi is None):
            raise ParameterError("Give either --grid or both --lo and --hi")
        session = Session(threads, out, verbose=verbose, debug=debug)
        samples = samples or session.config.samples
        seed = session.config.seed if seed is None else seed
        values = _scan_grid(lo, hi, points or session.config.scan_points, grid)
        if scaled:
            values = [c * 2 / n for c in values]
        curve = mc_scan(n, values, samples, RngStream(seed=seed, key=(stream,)), threads=session.threads)
        session.record(
            "scan",
            {"n": n, "grid": [format_rational(v) for v in values], "samples": samples},
            curve.to_dict(),
            seed=seed,
            stream=stream,
        )

    table = Table(title=f"Cov(A, B) scan, n={n}")
    table.add_column("p", style="cyan")
    table.add_column("cov_hat", style="green")
    table.add_column("std_err")
    table.add_column("sign")
    for p, estimate in curve.rows:
        sign = "+" if estimate.cov_hat > 0 else "-" if estimate.cov_hat < 0 else "0"
        if not estimate.significant():
            sign = "?"
        table.add_row(f"{float(p):.6f}", f"{estimate.cov_hat:.3e}", f"{estimate.std_err:.1e}", sign)
    console.print(table)
    if csv_path:
        _write_csv(csv_path, curve.write_csv)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vertices")
@click.option("--lo", type=RATIONAL, required=True, help="Lower end of the range")
@click.option("--hi", type=RATIONAL, required=True, help="Upper end of the range")
@click.option("--budget", type=int, default=10_000_000, show_default=True, help="Total samples")
@click.option("--depth", type=int, default=8, show_default=True, help="Maximum bisection steps")
@click.option("--seed", type=int, help="Seed (default: config)")
@click.option("--stream", type=int, default=0, show_default=True, help="Stream id")
@run_options
def locate(n, lo, hi, budget, depth, seed, stream, threads, out, verbose, debug):
    """Bracket a sign change of Cov(A, B) in p by sampling."""
    with handle_errors():
        session = Session(threads, out, verbose=verbose, debug=debug)
        seed = session.config.seed if seed is None else seed
        found = locate_sign_change(
            n,
            lo,
            hi,
            budget,
            RngStream(seed=seed, key=(stream,)),
            max_depth=depth,
            threads=session.threads,
        )
        session.record(
            "locate",
            {"n": n, "lo": format_rational(lo), "hi": format_rational(hi), "budget": budget, "depth": depth},
            found.to_dict(),
            seed=seed,
            stream=stream,
        )

    if found.determined:
        p_lo, p_hi = found.bracket
        click.echo(f"sign change in [{float(p_lo):.6f}, {float(p_hi):.6f}], confidence {found.confidence:.4f}")
    else:
        click.echo("undetermined")
    click.echo(f"samples used: {found.samples_used} of {budget}")


@cli.command()
@click.option("--c", "c", type=RATIONAL, default="1/10", show_default=True, help="Scaled parameter")
@click.option("--ns", default="4,5,6", show_default=True, help="Comma-separated vertex counts")
@exact_options
@run_options
def consistency(c, ns, cache, deep, threads, out, verbose, debug):
    """n^3 Cov(A, B) at p = 2c/n next to the limiting formula."""
    with handle_errors():
        session = Session(threads, out, cache, deep, verbose, debug)
        sizes = _int_list(ns)
        for n in sizes:
            Params.from_c(n, c)
        rows, limit = consistency_table(c, sizes, counts_for=session.counts)
        agree = all((row.scaled < 0) == (limit < 0) for row in rows)
        session.record(
            "consistency",
            {"c": format_rational(c), "ns": sizes},
            {
                "rows": [
                    {"n": r.n, "p": format_rational(r.p), "cov": format_rational(r.cov), "scaled": r.scaled}
                    for r in rows
                ],
                "limit": limit,
                "signs_agree": agree,
            },
        )

    table = Table(title=f"n^3 Cov(A, B) at c={format_rational(c)}")
    table.add_column("n", style="cyan")
    table.add_column("p")
    table.add_column("n^3 cov", style="green")
    for row in rows:
        table.add_row(str(row.n), format_rational(row.p), f"{row.scaled:.6e}")
    table.add_row("limit", "", f"{limit:.6e}")
    console.print(table)
    click.echo(f"signs agree: {'yes' if agree else 'no'}")


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), help="JSON-lines record file")
@click.option("--command", "command", help="Only records of this command")
@click.option("--json", "as_json", is_flag=True, help="Re-emit the records as JSON lines")
def report(out, command, as_json):
    """Summarize recorded runs."""
    with handle_errors():
        config = Config(data_dir=get_data_dir()).load_if_present()
        records = RecordStore(Path(out) if out else config.records_path).load_records()
    if command:
        records = [r for r in records if r.command == command]

    if as_json:
        for record in records:
            click.echo(json.dumps(record.to_dict(), sort_keys=True))
        return

    if not records:
        console.print("[yellow]No recorded runs.[/yellow]")
        return

    summary = {}
    for record in records:
        runs, _ = summary.get(record.command, (0, None))
        summary[record.command] = (runs + 1, record.timestamp)

    table = Table(title="Recorded runs")
    table.add_column("Command", style="cyan")
    table.add_column("Runs", style="green")
    table.add_column("Last run")
    for name in sorted(summary):
        runs, last = summary[name]
        table.add_row(name, str(runs), last)
    console.print(table)
