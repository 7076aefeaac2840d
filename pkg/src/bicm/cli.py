"""Command-line interface for bicm-mmse."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .constellation import Constellation, ConstellationError, build_constellation, resolve_constellation
from .quadrature import DEFAULT_ORDER, MAX_ORDER, gauss_hermite

console = Console(stderr=True)

DEFAULT_SNR_DB = "-20:30:101"
DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPUTE = 2

COMMANDS = ("mi", "mmse", "derivative", "slope", "allocate", "figure1")

FIGURE1_COLUMNS = (
    "gaussian_mmse",
    "qam16_cm_mmse",
    "qam16_bicm_gray_derivative",
    "qam16_bicm_sp_derivative",
)


@dataclass(frozen=True)
class SnrRange:
    """Evenly spaced dB grid ``start:stop:steps``."""

    start_db: float
    stop_db: float
    steps: int

    @property
    def db(self) -> np.ndarray:
        return np.linspace(self.start_db, self.stop_db, self.steps)

    @property
    def linear(self) -> np.ndarray:
        return 10.0 ** (self.db / 10.0)


def parse_snr_range(text: str) -> SnrRange:
    """Parse ``start:stop:steps`` (dB, dB, count)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:steps, got {text!r}")
    try:
        start, stop = float(parts[0]), float(parts[1])
        steps = int(parts[2])
    except ValueError:
        raise ValueError(f"expected numbers in start:stop:steps, got {text!r}") from None
    if not (math.isfinite(start) and math.isfinite(stop)):
        raise ValueError("start and stop must be finite dB values")
    if steps == 1:
        if start != stop:
            raise ValueError("a single step needs start == stop")
    elif steps < 2:
        raise ValueError(f"steps must be >= 1, got {steps}")
    elif not start < stop:
        raise ValueError(f"start ({start:g} dB) must be below stop ({stop:g} dB)")
    return SnrRange(start, stop, steps)


class SnrRangeType(click.ParamType):
    name = "start:stop:steps"

    def convert(self, value, param, ctx):
        if isinstance(value, SnrRange):
            return value
        try:
            return parse_snr_range(value)
        except ValueError as e:
            self.fail(str(e), param, ctx)


class ConstellationType(click.ParamType):
    name = "constellation"

    def convert(self, value, param, ctx):
        if isinstance(value, Constellation):
            return value
        try:
            return resolve_constellation(value)
        except ConstellationError as e:
            self.fail(str(e), param, ctx)


SNR_RANGE = SnrRangeType()
CONSTELLATION = ConstellationType()


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs."""

    command: str
    constellation: Optional[Constellation] = None
    snr: SnrRange = field(default_factory=lambda: parse_snr_range(DEFAULT_SNR_DB))
    units: str = "nats"
    order: int = DEFAULT_ORDER
    jobs: int = 1
    mc_samples: Optional[int] = None
    seed: int = DEFAULT_SEED
    output: Optional[Path] = None
    problem: Optional[Path] = None
    tol: float = 1e-6
    verbose: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.units not in ("nats", "bits"):
            raise ValueError(f"unknown units {self.units!r}")
        if not 1 <= self.order <= MAX_ORDER:
            raise ValueError(f"quadrature order must be in 1..{MAX_ORDER}")

    @property
    def mc_check(self) -> Optional[Tuple[int, int]]:
        """(samples, seed) when a Monte Carlo check was requested."""
        if self.mc_samples is None:
            return None
        return self.mc_samples, self.seed

    @property
    def scale(self) -> float:
        """Factor applied to information columns."""
        return 1.0 / math.log(2) if self.units == "bits" else 1.0


@click.group()
@click.version_option(version=__version__, prog_name="bicm-mmse")
@click.option("-v", "--verbose", is_flag=True, help="Enable verbose output")
@click.option(
    "--order",
    type=click.IntRange(1, MAX_ORDER),
    default=DEFAULT_ORDER,
    show_default=True,
    help="Gauss-Hermite order per dimension (about 1e-6 accurate at high SNR; use 128 for tighter values)",
)
@click.option(
    "--units",
    type=click.Choice(["nats", "bits"]),
    default="nats",
    show_default=True,
    help="Units of information columns",
)
@click.option(
    "-j", "--jobs", type=click.IntRange(min=1), default=1, help="Concurrent grid points"
)
@click.pass_context
def cli(ctx: click.Context, verbose: bool, order: int, units: str, jobs: int) -> None:
    """Mutual information, MMSE and power allocation for CM and BICM.

    SNR grids are given in dB, snr_dB = 10 log10(snr), as start:stop:steps.
    """
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    ctx.obj["order"] = order
    ctx.obj["units"] = units
    ctx.obj["jobs"] = jobs


def _config(ctx: click.Context, command: str, **options) -> RunConfig:
    return RunConfig(
        command=command,
        units=ctx.obj["units"],
        order=ctx.obj["order"],
        jobs=ctx.obj["jobs"],
        verbose=ctx.obj["verbose"],
        **options,
    )


def _dispatch(ctx: click.Context, config: RunConfig) -> None:
    if ctx.obj.get("parse_only"):
        ctx.obj["config"] = config
        return
    ctx.exit(run(config))


def curve_options(f: Callable) -> Callable:
    f = click.option(
        "-o", "--output", type=click.Path(dir_okay=False, path_type=Path),
        help="CSV file (default: stdout)",
    )(f)
    f = click.option(
        "--snr-db", "snr", type=SNR_RANGE, default=DEFAULT_SNR_DB, show_default=True,
        help="SNR grid in dB, start:stop:steps",
    )(f)
    f = click.option(
        "-c", "--constellation", type=CONSTELLATION, required=True,
        help="family,m[,labeling[,bit_order]] or a constellation file",
    )(f)
    return f


def mc_options(f: Callable) -> Callable:
    f = click.option(
        "--seed", type=int, default=DEFAULT_SEED, show_default=True,
        help="Monte Carlo seed",
    )(f)
    f = click.option(
        "--mc-samples", type=click.IntRange(min=1),
        help="Cross-check against Monte Carlo with this many samples",
    )(f)
    return f


@cli.command()
@curve_options
@mc_options
@click.pass_context
def mi(ctx: click.Context, constellation, snr, output, mc_samples, seed) -> None:
    """CM and BICM mutual information."""
    _dispatch(ctx, _config(
        ctx, "mi", constellation=constellation, snr=snr, output=output,
        mc_samples=mc_samples, seed=seed,
    ))


@cli.command()
@curve_options
@mc_options
@click.pass_context
def mmse(ctx: click.Context, constellation, snr, output, mc_samples, seed) -> None:
    """MMSE of the constellation input."""
    _dispatch(ctx, _config(
        ctx, "mmse", constellation=constellation, snr=snr, output=output,
        mc_samples=mc_samples, seed=seed,
    ))


@cli.command()
@curve_options
@click.pass_context
def derivative(ctx: click.Context, constellation, snr, output) -> None:
    """Derivative of the BICM mutual information."""
    _dispatch(ctx, _config(
        ctx, "derivative", constellation=constellation, snr=snr, output=output
    ))


@cli.command()
@click.option(
    "-c", "--constellation", type=CONSTELLATION, required=True,
    help="family,m[,labeling[,bit_order]] or a constellation file",
)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def slope(ctx: click.Context, constellation, output) -> None:
    """Low-SNR slope of the BICM mutual information and minimum Eb/N0."""
    _dispatch(ctx, _config(ctx, "slope", constellation=constellation, output=output))


@cli.command()
@click.option(
    "-p", "--problem", required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Problem file: 'budget <P>' then '<gain> <constellation> <mode>' lines",
)
@click.option(
    "--tol", type=click.FloatRange(min=0, min_open=True), default=1e-6,
    show_default=True, help="KKT residual tolerance",
)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def allocate(ctx: click.Context, problem, tol, output) -> None:
    """Optimal power allocation over parallel channels."""
    _dispatch(ctx, _config(ctx, "allocate", problem=problem, tol=tol, output=output))


@cli.command()
@click.option(
    "--snr-db", "snr", type=SNR_RANGE, default=DEFAULT_SNR_DB, show_default=True,
    help="SNR grid in dB, start:stop:steps",
)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def figure1(ctx: click.Context, snr, output) -> None:
    """Gaussian and 16-QAM MMSE / BICM derivative curve family."""
    _dispatch(ctx, _config(ctx, "figure1", snr=snr, output=output))


# Runners


def _sweep_columns(
    config: RunConfig, requests: Sequence[Tuple[str, Constellation, str]]
) -> Dict[str, np.ndarray]:
    """Evaluate each (column, constellation, kind) over the configured grid."""
    from .infotheory import sweep

    grid = config.snr.linear
    rule = gauss_hermite(config.order)
    columns: Dict[str, np.ndarray] = {}
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        console=console,
        transient=True,
    ) as progress:
        for name, c, kind in requests:
            task = progress.add_task(f"{name} ({c.name})", total=len(grid))
            curve = sweep(
                c, grid, kind, rule, jobs=config.jobs,
                on_point=lambda k, v, task=task: progress.advance(task),
            )
            columns[name] = curve.values * config.scale
    return columns


def _curve_table(config: RunConfig, columns: Dict[str, np.ndarray]) -> Tuple[List[str], List[list]]:
    header = ["snr_db", "snr_linear", *columns]
    rows = [
        [db, lin, *(values[k] for values in columns.values())]
        for k, (db, lin) in enumerate(zip(config.snr.db, config.snr.linear))
    ]
    return header, rows


def _mc_table(
    config: RunConfig, quantities: Sequence[Tuple[str, Callable, np.ndarray]]
) -> Tuple[List[str], List[list]]:
    """Monte Carlo estimates next to quadrature values (both already scaled)."""
    from .montecarlo import cross_check

    samples, seed = config.mc_check
    header = ["snr_db", "snr_linear", "quantity", "quadrature", "mc_mean", "mc_std_error", "pass"]
    rows = []
    failures = 0
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        console=console,
        transient=True,
    ) as progress:
        for name, estimator, reference in quantities:
            task = progress.add_task(f"Monte Carlo {name}", total=len(reference))
            for k, (db, lin) in enumerate(zip(config.snr.db, config.snr.linear)):
                estimate = estimator(config.constellation, float(lin), samples, seed, config.jobs)
                passed, sigmas = cross_check(estimate, reference[k] / config.scale)
                if not passed:
                    failures += 1
                    console.print(
                        f"[yellow]{name} at {db:g} dB: Monte Carlo deviates by {sigmas:.2f} sigma[/yellow]"
                    )
                rows.append([
                    db, lin, name, reference[k],
                    estimate.mean * config.scale, estimate.std_error * config.scale, passed,
                ])
                progress.advance(task)
    if config.verbose:
        colour = "green" if failures == 0 else "yellow"
        console.print(f"[{colour}]Monte Carlo check: {len(rows) - failures}/{len(rows)} passed[/{colour}]")
    return header, rows


def _mc_path(output: Optional[Path]) -> Optional[Path]:
    if output is None:
        return None
    return output.with_name(f"{output.stem}.mc.csv")


def _run_curves(config: RunConfig) -> None:
    from .exporter import CsvExporter
    from .infotheory import CurveKind
    from .montecarlo import mc_mi_bicm, mc_mi_cm, mc_mmse

    c = config.constellation
    if config.command == "mi":
        requests = [("mi_cm", c, CurveKind.MI_CM), ("mi_bicm", c, CurveKind.MI_BICM)]
        estimators = {"mi_cm": mc_mi_cm, "mi_bicm": mc_mi_bicm}
    elif config.command == "mmse":
        requests = [("mmse", c, CurveKind.MMSE)]
        estimators = {"mmse": mc_mmse}
    else:
        requests = [("bicm_derivative", c, CurveKind.BICM_DERIVATIVE)]
        estimators = {}

    columns = _sweep_columns(config, requests)
    tables = [(*_curve_table(config, columns), config.output)]
    if config.mc_check and estimators:
        quantities = [(name, estimators[name], columns[name]) for name in estimators]
        tables.append((*_mc_table(config, quantities), _mc_path(config.output)))
    CsvExporter(verbose=config.verbose).export_many(tables)


def _run_figure1(config: RunConfig) -> None:
    from .exporter import CsvExporter
    from .infotheory import CurveKind, gaussian_mmse

    gray = build_constellation("qam", 4, "gray")
    sp = build_constellation("qam", 4, "set_partitioning")
    swept = _sweep_columns(config, [
        ("qam16_cm_mmse", gray, CurveKind.MMSE),
        ("qam16_bicm_gray_derivative", gray, CurveKind.BICM_DERIVATIVE),
        ("qam16_bicm_sp_derivative", sp, CurveKind.BICM_DERIVATIVE),
    ])
    gaussian = np.array([gaussian_mmse(float(s)) for s in config.snr.linear]) * config.scale
    swept["gaussian_mmse"] = gaussian
    columns = {name: swept[name] for name in FIGURE1_COLUMNS}
    CsvExporter(verbose=config.verbose).export(*_curve_table(config, columns), config.output)


def _run_slope(config: RunConfig) -> None:
    from .exporter import CsvExporter
    from .infotheory import low_snr_slope, minimum_ebno_db

    c = config.constellation
    value = low_snr_slope(c)
    ebno = minimum_ebno_db(c)
    if config.verbose:
        console.print(
            f"[green]{c.name}: low-SNR slope {value:.6g} nats, "
            f"minimum Eb/N0 {ebno:.4g} dB[/green]"
        )
    CsvExporter(verbose=config.verbose).export(
        ["constellation", "low_snr_slope", "min_ebno_db"],
        [[c.name, value * config.scale, ebno]],
        config.output,
    )


def _run_allocate(config: RunConfig) -> None:
    from .exporter import CsvExporter
    from .powerfill import PowerAllocator, channel_mi, load_problem, marginal_utility

    with open(config.problem, "r", encoding="utf-8") as f:
        problem = load_problem(f, base_dir=config.problem.parent)
    rule = gauss_hermite(config.order)
    allocation = PowerAllocator(rule=rule, verbose=config.verbose).allocate(problem, config.tol)

    table = Table(title=f"Power allocation, budget {problem.budget:g}")
    for column in ("channel", "gain", "mode", "power", f"utility ({config.units})", f"MI ({config.units})"):
        table.add_column(column, justify="right")
    rows = []
    for k, (ch, p) in enumerate(zip(problem.channels, allocation.powers)):
        utility = marginal_utility(ch, float(p), rule) * config.scale
        info = channel_mi(ch, float(p), rule) * config.scale
        rows.append([k, ch.gain, str(ch.mode), p, utility, info])
        table.add_row(str(k), f"{ch.gain:g}", str(ch.mode), f"{p:.6g}", f"{utility:.6g}", f"{info:.6g}")
    console.print(table)
    console.print(
        f"Total MI {allocation.objective * config.scale:.6g} {config.units}, "
        f"multiplier {allocation.multiplier * config.scale:.6g}, "
        f"KKT residual {allocation.kkt_residual:.2g}",
        soft_wrap=True,
    )
    CsvExporter(verbose=config.verbose).export(
        ["channel", "gain", "mode", "power", "marginal_utility", "mi"], rows, config.output
    )


_RUNNERS: Dict[str, Callable[[RunConfig], None]] = {
    "mi": _run_curves,
    "mmse": _run_curves,
    "derivative": _run_curves,
    "slope": _run_slope,
    "allocate": _run_allocate,
    "figure1": _run_figure1,
}


def run(config: RunConfig) -> int:
    """Execute one configured command; returns the exit status."""
    try:
        _RUNNERS[config.command](config)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as e:
        console.print(f"[red]Error: {e}[/red]", soft_wrap=True)
        if config.verbose:
            console.print_exception()
        return EXIT_COMPUTE
    return EXIT_OK


def parse_args(argv: Sequence[str]) -> RunConfig:
    """Parse a command line into a RunConfig without running it.

    Raises click.UsageError (or another click.ClickException) on bad input.
    """
    obj = {"parse_only": True}
    cli.main(args=list(argv), prog_name="bicm-mmse", standalone_mode=False, obj=obj)
    if "config" not in obj:
        raise click.UsageError("no command given")
    return obj["config"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point; maps usage errors to 1 and computation errors to 2."""
    try:
        status = cli.main(
            args=None if argv is None else list(argv),
            prog_name="bicm-mmse",
            standalone_mode=False,
        )
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_COMPUTE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    return status if isinstance(status, int) else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
