"""CLI entry point for the conductance lab."""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import asdict
from pathlib import Path

import click
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.errors import ConfigurationError, SimulationAbort
from src.lattice.models import Boundary, LatticeSpec, LawKind

console = Console()
logger = logging.getLogger("conductance_lab")

EXIT_CONFIG = 2
EXIT_ABORT = 3


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


class LabGroup(click.Group):
    """Maps configuration errors to exit code 2 and simulation aborts to 3.

    A registered experiment name that is not itself a command runs that
    experiment, so ``conductance-lab mixing`` is ``conductance-lab run mixing``.
    """

    def resolve_command(self, ctx: click.Context, args: list[str]):
        if args and args[0] not in self.commands:
            from src.runner.registry import EXPERIMENTS

            if args[0] in EXPERIMENTS:
                args = ["run", *args]
        return super().resolve_command(ctx, args)

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (ConfigurationError, ValidationError) as e:
            console.print(f"[red]Configuration error:[/red] {e}")
            ctx.exit(EXIT_CONFIG)
        except SimulationAbort as e:
            console.print(f"[red]Simulation aborted:[/red] {e}")
            ctx.exit(EXIT_ABORT)


def lattice_options(f):
    """Adds lattice options and passes the built (or loaded) field as the first argument."""

    @click.option("--d", default=2, show_default=True, help="Dimension")
    @click.option("--side", default=32, show_default=True, help="Box side length")
    @click.option(
        "--boundary",
        type=click.Choice([b.value for b in Boundary]),
        default=Boundary.TORUS.value,
        show_default=True,
    )
    @click.option(
        "--law",
        type=click.Choice([k.value for k in LawKind if k != LawKind.EXPLICIT]),
        default=LawKind.CONSTANT.value,
        show_default=True,
    )
    @click.option("--c-m", "c_m", default=2.0, show_default=True, help="Ellipticity constant C_M")
    @click.option("--p0", default=0.0, show_default=True, help="Zero-weight probability (dilute)")
    @click.option("--lattice-seed", default=0, show_default=True, help="Seed of the environment")
    @click.option(
        "--field", "field_path", type=click.Path(exists=True), default=None,
        help="Load a saved field instead of sampling one",
    )
    @functools.wraps(f)
    def wrapper(d, side, boundary, law, c_m, p0, lattice_seed, field_path, **kwargs):
        from src.lattice.io import load_field
        from src.runner.registry import build_field

        if field_path:
            fld = load_field(field_path)
        else:
            spec = LatticeSpec(
                d=d, side=side, boundary=boundary, law=law, c_m=c_m, p0=p0, seed=lattice_seed
            )
            fld = build_field(spec)
        return f(fld, **kwargs)

    return wrapper


def _print_rows(title: str, rows: list[dict], limit: int = 40) -> None:
    if not rows:
        console.print(f"[yellow]{title}: no rows[/yellow]")
        return
    from src.runner.output import columns, format_value

    table = Table(title=title)
    cols = columns(rows)
    for col in cols:
        table.add_column(col)
    for row in rows[:limit]:
        table.add_row(*(_short(format_value(row.get(c))) for c in cols))
    console.print(table)
    if len(rows) > limit:
        console.print(f"... {len(rows) - limit} more rows")


def _short(text: str) -> str:
    try:
        return f"{float(text):.6g}" if "." in text or "e" in text else text
    except ValueError:
        return text


@click.group(cls=LabGroup)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
def main(verbose: bool) -> None:
    """Random-conductance lattice simulation and verification lab."""
    setup_logging(verbose)


# --- Experiment runner ---


@main.command()
@click.argument("experiment")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML/TOML/JSON config")
@click.option("--seed", type=int, default=None, help="Master seed")
@click.option("--reps", type=int, default=None, help="Number of replicas")
@click.option("--out", type=click.Path(), default=None, help="Output directory")
@click.option("--workers", type=int, default=None, help="Worker processes for replicas")
def run(
    experiment: str,
    config_path: str | None,
    seed: int | None,
    reps: int | None,
    out: str | None,
    workers: int | None,
) -> None:
    """Run a registered experiment and write tables plus a manifest.

    The experiment name also works as a command of its own, except for
    ``surface``, which names the surface command group.

    Example:
        conductance-lab run mixing --reps 50 --workers 4
        conductance-lab mixing --reps 50
    """
    from src.runner.config import build_config, load_config, load_defaults
    from src.runner.output import read_table
    from src.runner.runner import SUMMARY_FILE, output_dir, run_experiment

    overrides = {"seed": seed, "reps": reps, "out": out, "workers": workers}
    if config_path:
        config = load_config(config_path, experiment, **overrides)
        if config.experiment != experiment:
            raise ConfigurationError(
                f"{config_path} configures {config.experiment!r}, not {experiment!r}"
            )
    else:
        config = build_config(load_defaults(experiment), **overrides)

    console.print(Panel(f"[bold]{experiment}[/bold]: {config.reps} replicas, seed {config.seed}"))
    manifest = run_experiment(config)
    header, summary = read_table(output_dir(config) / SUMMARY_FILE)
    console.print(f"[dim]{header.get('statement', '')}[/dim]")
    _print_rows("Summary", summary)
    console.print(
        f"\n[green]Done in {manifest.wall_clock:.1f}s; outputs in {output_dir(config)}[/green]"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--experiment", default=None, help="Block to check in a multi-experiment file")
def validate(config_path: str, experiment: str | None) -> None:
    """Check inter-parameter rules of a config without running it."""
    from src.runner.config import load_config, validate_config

    config = load_config(config_path, experiment)
    violations = validate_config(config)
    if not violations:
        console.print(f"[green]{config.experiment}: no violations[/green]")
        return
    table = Table(title=f"{config.experiment}: violations")
    table.add_column("#", width=4)
    table.add_column("Rule")
    for i, v in enumerate(violations, 1):
        table.add_row(str(i), v)
    console.print(table)


@main.command(name="list")
def list_experiments() -> None:
    """List registered experiments and the statement each one checks."""
    from src.runner.registry import EXPERIMENTS

    table = Table(title="Experiments")
    table.add_column("Name")
    table.add_column("Statement", max_width=80)
    for name in sorted(EXPERIMENTS):
        table.add_row(name, EXPERIMENTS[name].statement)
    console.print(table)


# --- Lattice ---


@main.group()
def lattice() -> None:
    """Conductance environments."""


@lattice.command(name="sample")
@lattice_options
@click.option("--out", type=click.Path(), default=None, help="Save as .json or .npz")
def lattice_sample(fld, out: str | None) -> None:
    """Sample an environment and report its cluster structure."""
    from src.lattice.clusters import largest_cluster
    from src.lattice.io import save_field

    cmap = largest_cluster(fld)
    table = Table(title=f"{fld.box.d}-d box of side {fld.box.side} ({fld.box.boundary.value})")
    table.add_column("Quantity")
    table.add_column("Value")
    table.add_row("law", fld.law_spec.describe() if fld.law_spec else fld.law.value)
    table.add_row("zero-weight fraction", f"{fld.zero_fraction():.4f}")
    table.add_row("components", str(cmap.n_components))
    table.add_row("largest cluster", f"{cmap.largest_size} ({cmap.largest_fraction:.1%})")
    table.add_row("origin in largest", str(cmap.origin_in_largest))
    table.add_row("mu(origin)", f"{fld.mu[fld.box.origin]:.4f}")
    console.print(table)
    if out:
        console.print(f"[green]Saved: {save_field(fld, out)}[/green]")


# --- Walks ---


@main.group()
def walk() -> None:
    """Continuous-time random walks."""


@walk.command(name="simulate")
@lattice_options
@click.option("--horizon", default=100.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rho", type=float, default=None, help="Confine displacement to a cube of side rho")
@click.option("--out", type=click.Path(), default=None, help="Trajectory JSONL")
def walk_simulate(fld, horizon: float, seed: int, rho: float | None, out: str | None) -> None:
    """Simulate one walk from the origin."""
    from src.walk.engine import WalkConfig, simulate_confined_walk, simulate_walk

    cfg = WalkConfig(horizon=horizon, seed=seed, rho=rho)
    x = fld.box.origin
    if rho is None:
        traj = simulate_walk(fld, x, cfg)
    else:
        confined = simulate_confined_walk(fld, x, cfg)
        traj = confined.trajectory
        console.print(f"Rejection acceptance: {confined.acceptance:.4f}")
    console.print(
        f"{traj.n_jumps} jumps up to t={horizon:g}; endpoint {traj.endpoint}, "
        f"max excursion {traj.max_excursion(fld)}"
    )
    if out:
        traj.to_jsonl(out)
        console.print(f"[green]Trajectory saved: {out}[/green]")


@walk.command(name="exit-tail")
@lattice_options
@click.option("--r", "radii", type=int, multiple=True, default=(10, 15, 20), show_default=True)
@click.option("--t", "times", type=float, multiple=True, default=(10.0, 50.0), show_default=True)
@click.option("--n", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def walk_exit_tail(fld, radii: tuple[int, ...], times: tuple[float, ...], n: int, seed: int) -> None:
    """Exit frequencies P[tau(0, r) < t] and the (c3, c4) fit."""
    from src.walk.exit_times import fit_exit_tail

    result = fit_exit_tail(fld, fld.box.origin, list(radii), list(times), n, seed)
    _print_rows(
        "Exit frequencies",
        [{"r": p.r, "t": p.t, "frequency": p.frequency, "ci": str(p.estimate)} for p in result.points],
    )
    console.print(f"\n[bold]{result}[/bold]")


# --- Spectral ---


@main.group()
def spectral() -> None:
    """Heat kernels, Harnack and Poincare constants."""


@spectral.command(name="kernel")
@lattice_options
@click.option("--t", "t", default=10.0, show_default=True)
@click.option("--sources", default=None, help="Comma-separated vertex indices (default: origin)")
@click.option("--out", type=click.Path(), default=None, help="CSV (source, vertex, value)")
def spectral_kernel(fld, t: float, sources: str | None, out: str | None) -> None:
    """Exact heat kernel q_t(x, .) by uniformization."""
    from src.spectral.heat_kernel import heat_kernel_exact

    xs = [fld.box.origin] if not sources else [int(s) for s in sources.split(",")]
    table = heat_kernel_exact(fld, t, xs)
    rows = [
        {
            "source": int(x),
            "q_t(x,x)": table.q(int(x), int(x)),
            "mass": float(m),
        }
        for x, m in zip(table.sources, table.mass())
    ]
    _print_rows(f"Heat kernel at t={t:g}", rows)
    console.print(f"Truncation error bound: {table.truncation_error:.3e}")
    if out:
        console.print(f"[green]Saved: {table.to_csv(out)}[/green]")


@spectral.command(name="phi")
@lattice_options
@click.option("--R", "R", default=8, show_default=True, help="Cylinder radius")
def spectral_phi(fld, R: int) -> None:
    """Lower estimate of the parabolic Harnack constant at the origin."""
    from src.spectral.harnack import harnack_constant, oscillation_decay_check

    est = harnack_constant(fld, fld.box.origin, R)
    console.print(f"[bold]{est}[/bold]")
    osc = oscillation_decay_check(fld, fld.box.origin, 2 * R, c_h=est.c_h)
    _print_rows(
        "Oscillation decay",
        [{"scale": r, "ratio": q, "bound": osc.bound} for r, q in zip(osc.scales, osc.ratios)],
    )


@spectral.command(name="poincare")
@lattice_options
@click.option("--r", "radii", type=int, multiple=True, default=(1, 2, 3), show_default=True)
@click.option("--c-w", "c_w", default=2.0, show_default=True)
def spectral_poincare(fld, radii: tuple[int, ...], c_w: float) -> None:
    """Weak Poincare constants on balls around the origin."""
    from src.spectral.poincare import poincare_constant

    rows = []
    for r in radii:
        res = poincare_constant(fld, fld.box.origin, r, c_w)
        rows.append({"r": r, "ball": int(res.problem.ball.size), "C_P": res.c_p})
    _print_rows("Poincare constants", rows)


# --- Epidemics ---


@main.group()
def epi() -> None:
    """Infection among moving particles."""


def _print_series(run, out: str | None) -> None:
    from src.epidemic.front import front_speed

    series = run.series
    console.print(
        f"{run.n_infections} infection events, {series.infected_count[-1]} infected at the end, "
        f"front {series.front[-1]:g}"
    )
    if series.extinct:
        console.print(f"[yellow]Extinct at t={series.extinction_time:.4f}[/yellow]")
    console.print(f"[bold]{front_speed(series)}[/bold]")
    if out:
        console.print(f"[green]Saved: {series.to_csv(out)}[/green]")


@epi.command(name="si")
@lattice_options
@click.option("--lambda0", default=2.0, show_default=True)
@click.option("--horizon", default=200.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Front series CSV")
def epi_si(fld, lambda0: float, horizon: float, seed: int, out: str | None) -> None:
    """SI epidemic from the origin."""
    from src.epidemic.dynamics import run_si

    _print_series(run_si(fld, lambda0, horizon, seed, keep_trace=False), out)


@epi.command(name="sis")
@lattice_options
@click.option("--lambda0", default=2.0, show_default=True)
@click.option("--gamma", default=0.01, show_default=True, help="Recovery rate")
@click.option("--horizon", default=200.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Front series CSV")
def epi_sis(fld, lambda0: float, gamma: float, horizon: float, seed: int, out: str | None) -> None:
    """SIS epidemic from the origin."""
    from src.epidemic.dynamics import run_sis

    _print_series(run_sis(fld, lambda0, gamma, horizon, seed, keep_trace=False), out)


@epi.command(name="cell")
@lattice_options
@click.option("--ell", default=4, show_default=True)
@click.option("--eta", default=1, show_default=True)
@click.option("--lambda0", default=4.0, show_default=True)
@click.option("--gamma", default=0.0, show_default=True)
@click.option("--reps", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Report JSON")
def epi_cell(
    fld, ell: int, eta: int, lambda0: float, gamma: float, reps: int, seed: int, out: str | None
) -> None:
    """Empirical probability of the space-time cell event."""
    from src.epidemic.cells import estimate_cell_event
    from src.epidemic.models import CellEventSpec

    spec = CellEventSpec(ell=ell, eta=eta, lambda0=lambda0, gamma=gamma)
    spec.require_valid()
    report = estimate_cell_event(fld, spec, reps, seed)
    console.print(f"[bold]{report}[/bold]")
    _print_rows(
        "Decomposition", [{"event": k, "frequency": str(v)} for k, v in report.decomposition().items()]
    )
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "mode": report.mode,
            "spec": spec.model_dump(mode="json"),
            "probability": report.probability,
            "reps": [asdict(r) for r in report.reps],
        }
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        console.print(f"[green]Saved: {path}[/green]")


@epi.command(name="chernoff")
@click.option("--lam", "lams", type=float, multiple=True, default=(1.0, 10.0, 100.0), show_default=True)
@click.option("--eps", "epss", type=float, multiple=True, default=(0.1, 0.5, 0.9), show_default=True)
def epi_chernoff(lams: tuple[float, ...], epss: tuple[float, ...]) -> None:
    """Poisson tail bounds against the exact tails."""
    from src.epidemic.chernoff import chernoff_grid

    _print_rows("Poisson tails", [asdict(c) | {"holds": c.holds} for c in chernoff_grid(lams, epss)])


# --- Surfaces ---


@main.group()
def surface() -> None:
    """Lipschitz surfaces of good cells."""


def _report_surface(cells, D: int, out: str | None) -> None:
    from src.surface.relaxation import two_sided_surface
    from src.surface.surrounds import surrounds_origin

    surf = two_sided_surface(cells)
    console.print(f"Bad fraction {cells.bad_fraction():.4f}; [bold]{surf}[/bold]")
    if surf.exists:
        console.print(f"Surrounds the origin within l1 distance {D}: {surrounds_origin(surf, cells, D)}")
    if cells.disclaimer:
        console.print(f"[yellow]{cells.disclaimer}[/yellow]")
    if out:
        console.print(f"[green]Saved: {surf.to_json(out)}[/green]")


@surface.command(name="build")
@click.option("--p-bad", default=0.01, show_default=True)
@click.option("--base", "base", type=int, multiple=True, default=(32, 32), show_default=True)
@click.option("--levels", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--D", "D", default=8, show_default=True)
@click.option("--cells-out", type=click.Path(), default=None, help="Save the cell field as JSON")
@click.option("--out", type=click.Path(), default=None, help="Save the surface as JSON")
def surface_build(
    p_bad: float, base: tuple[int, ...], levels: int, seed: int, D: int,
    cells_out: str | None, out: str | None,
) -> None:
    """Minimal two-sided surface of an i.i.d. cell field."""
    from src.surface.fields import simulate_iid_field

    cells = simulate_iid_field(p_bad, base, levels, seed)
    if cells_out:
        cells.to_json(cells_out)
    _report_surface(cells, D, out)


@surface.command(name="surrounds")
@click.option("--cells", "cells_path", type=click.Path(exists=True), required=True)
@click.option("--surface", "surface_path", type=click.Path(exists=True), required=True)
@click.option("--D", "D", default=8, show_default=True)
def surface_surrounds(cells_path: str, surface_path: str, D: int) -> None:
    """Whether a saved surface encloses the origin cell."""
    from src.surface.models import CellField, LipschitzSurface
    from src.surface.surrounds import surrounds_origin

    cells = CellField.from_json(cells_path)
    surf = LipschitzSurface.from_json(surface_path)
    console.print(str(surrounds_origin(surf, cells, D)))


@surface.command(name="from-sim")
@lattice_options
@click.option("--ell", default=4, show_default=True)
@click.option("--eta", default=1, show_default=True)
@click.option("--lambda0", default=4.0, show_default=True)
@click.option("--base", "base", type=int, multiple=True, default=(3, 3), show_default=True)
@click.option("--levels", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--D", "D", default=4, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Save the surface as JSON")
def surface_from_sim(
    fld, ell: int, eta: int, lambda0: float, base: tuple[int, ...], levels: int, seed: int,
    D: int, out: str | None,
) -> None:
    """Classify cells by simulating their cell events, then build the surface."""
    from src.epidemic.models import CellEventSpec
    from src.surface.fields import classify_cells_from_sim

    spec = CellEventSpec(ell=ell, eta=eta, lambda0=lambda0)
    spec.require_valid()
    cells = classify_cells_from_sim(fld, spec, base, levels, seed)
    _report_surface(cells, D, out)


if __name__ == "__main__":
    main()
