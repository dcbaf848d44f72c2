from __future__ import annotations

import functools
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from ohmic_cli.config import configure_logging, load_settings
from ohmic_cli.errors import OhmicError, UsageError
from ohmic_cli.flow import dirichlet_upper_bound, thomson_lower_bound
from ohmic_cli.formatting import lattice_csv, print_key_values, print_rows, report, to_json, write_output
from ohmic_cli.glauber import DEFAULT_BETAS, GlauberParams, glauber_sweep, predicted_nucleation_time
from ohmic_cli.lattice import DEFAULT_DIRECTIONS, lattice_experiment
from ohmic_cli.mc import coupling_time, escape_time_law, net_flux, simulate_hitting
from ohmic_cli.models import RunConfig
from ohmic_cli.network import Network, NodeSet, load_edge_list
from ohmic_cli.potential import equilibrium, hitting_time_from_harmonic
from ohmic_cli.spectral import (
    SCHEMES,
    cheeger_constant,
    current_family,
    flow_poincare,
    geodesic_family,
    mixing_time,
    pairwise_total_variation,
    potential_gap_upper,
    resistance_poincare,
    spectrum,
)
from ohmic_cli.util import load_flow, load_potential, parse_float_list, parse_select_spec, resolve_sets

try:  # recent typer releases vendor their own click
    from typer._click.exceptions import Abort, ClickException
except ImportError:
    from click.exceptions import Abort, ClickException

app = typer.Typer(add_completion=False, no_args_is_help=True)
mc_app = typer.Typer(add_completion=False, no_args_is_help=True, help="Monte Carlo checks of exact quantities.")
app.add_typer(mc_app, name="mc")

_err = Console(stderr=True)


class OutputFormat(str, Enum):
    json = "json"
    table = "table"


class LatticeFormat(str, Enum):
    csv = "csv"
    json = "json"
    table = "table"


class PathKind(str, Enum):
    geodesic = "geodesic"
    current = "current"


@app.callback()
def _root() -> None:
    """Reversible Markov chains as electrical networks."""
    try:
        configure_logging(load_settings().log_level)
    except OhmicError as e:
        _err.print(f"[red]{type(e).__name__}[/red]: {e}")
        raise typer.Exit(code=e.exit_code)


def _handled(fn: Callable[..., None]) -> Callable[..., None]:
    """Turn library errors into a message on stderr and the family exit code."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            fn(*args, **kwargs)
        except OhmicError as e:
            _err.print(f"[red]{type(e).__name__}[/red]: {e}")
            raise typer.Exit(code=e.exit_code)

    return wrapper


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("{task.description}"),
        BarColumn(),
        TimeElapsedColumn(),
        console=_err,
        transient=True,
    )


def _pair(net: Network, sets: list[str]) -> tuple[NodeSet, NodeSet]:
    resolved = resolve_sets(net, sets)
    unknown = sorted(set(resolved) - {"A", "B"})
    if unknown:
        raise UsageError(f"only sets A and B are understood, got {unknown}")
    if "A" not in resolved or "B" not in resolved:
        raise UsageError("both --set A=... and --set B=... are required")
    return resolved["A"], resolved["B"]


def _labels(net: Network, nodes: Sequence[int]) -> list[str]:
    return [net.label(int(x)) for x in nodes]


def _emit(
    command: str,
    config: RunConfig,
    result: dict[str, Any],
    fmt: str,
    out: Optional[Path],
    overwrite: bool,
    *,
    table: Callable[[Console], None] | None = None,
) -> None:
    if fmt == "table" and table is not None:
        table(Console())
        return
    text = to_json(report(command, config, result))
    path = write_output(text, out, overwrite=overwrite)
    if path is None:
        typer.echo(text)
    else:
        _err.print(f"wrote {path}")


_FORMAT = typer.Option(OutputFormat.json, "--format", case_sensitive=False)
_OUT = typer.Option(None, "--out", dir_okay=False)
_OVERWRITE = typer.Option(False, "--overwrite/--no-overwrite")
_SETS = typer.Option([], "--set", help="Node set as NAME=label,label (A and B).")


@app.command()
@_handled
def solve(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    sets: list[str] = _SETS,
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """
    Equilibrium potential, capacity, charges and harmonic measure of (A, B).
    """
    net = load_edge_list(network)
    A, B = _pair(net, sets)
    sol = equilibrium(net, A, B)
    result = sol.to_dict(net)
    result["expected_hitting_time"] = hitting_time_from_harmonic(net, A, B)
    config = RunConfig(command="solve", inputs=(str(network),), output=str(out) if out else None, options={"sets": sets}, format=fmt.value)

    def _table(console: Console) -> None:
        print_key_values("equilibrium", {k: result[k] for k in ("A", "B", "capacity", "resistance", "expected_hitting_time")}, console=console)
        print_rows(
            "potential",
            [{"node": net.label(x), "V": float(sol.V[x]), "charge": float(sol.charge[x])} for x in range(net.n)],
            console=console,
        )

    _emit("solve", config, result, fmt.value, out, overwrite, table=_table)


@app.command()
@_handled
def bounds(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    sets: list[str] = _SETS,
    potential: Optional[Path] = typer.Option(None, "--potential", exists=True, dir_okay=False, help="Test potential: 'label value' lines."),
    flow: Optional[Path] = typer.Option(None, "--flow", exists=True, dir_okay=False, help="Unit flow: 'x y value' lines."),
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """
    Exact capacity sandwiched by Thomson (flow) and Dirichlet (potential) certificates.
    """
    net = load_edge_list(network)
    A, B = _pair(net, sets)
    exact = equilibrium(net, A, B).capacity
    result: dict[str, Any] = {"capacity": exact, "lower": None, "upper": None, "lower_gap": None, "upper_gap": None}
    if flow is not None:
        lower = thomson_lower_bound(net, A, B, load_flow(net, flow))
        result["lower"] = lower
        result["lower_gap"] = exact - lower
    if potential is not None:
        upper = dirichlet_upper_bound(net, A, B, load_potential(net, potential))
        result["upper"] = upper
        result["upper_gap"] = upper - exact
    inputs = tuple(str(p) for p in (network, potential, flow) if p is not None)
    config = RunConfig(command="bounds", inputs=inputs, output=str(out) if out else None, options={"sets": sets}, format=fmt.value)
    _emit("bounds", config, result, fmt.value, out, overwrite, table=lambda c: print_key_values("capacity bounds", result, console=c))


@app.command()
@_handled
def spectral(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    paths: PathKind = typer.Option(PathKind.geodesic, "--paths", case_sensitive=False),
    schemes: list[str] = typer.Option([], "--scheme", help="Weight scheme w1..w4 (repeatable)."),
    cheeger: bool = typer.Option(True, "--cheeger/--no-cheeger"),
    resistance: bool = typer.Option(True, "--resistance/--no-resistance"),
    mixing: bool = typer.Option(False, "--mixing/--no-mixing"),
    sets: list[str] = _SETS,
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """
    Spectrum, gap and the Cheeger, resistance, flow and potential bounds on it.
    """
    for s in schemes:
        if s not in SCHEMES:
            raise UsageError(f"unknown scheme {s!r}, expected one of {sorted(SCHEMES)}")
    net = load_edge_list(network)
    spec = spectrum(net)
    result: dict[str, Any] = {
        "eigenvalues": spec.eigenvalues,
        "gap": spec.gap,
        "relaxation_time": 1.0 / spec.gap if spec.gap > 0 else None,
        "lambda_bar": spec.lambda_bar,
        "periodic": spec.periodic,
        "complete": spec.complete,
    }
    if cheeger:
        ch = cheeger_constant(net)
        result["cheeger"] = {
            "constant": ch.constant,
            "subset": _labels(net, ch.subset),
            "mass": ch.mass,
            "lower": ch.constant**2 / 2.0,
            "upper": 2.0 * ch.constant,
        }
    if resistance:
        result["resistance_poincare"] = resistance_poincare(net)
    family = geodesic_family(net) if paths is PathKind.geodesic else current_family(net)
    rows = []
    for s in schemes or [family.scheme]:
        b = flow_poincare(net, family, scheme=s)
        rows.append({"scheme": b.scheme, "bound": b.bound, "bottleneck": _labels(net, b.bottleneck)})
    result["flow_poincare"] = {"paths": paths.value, "bounds": rows}
    if sets:
        A, B = _pair(net, sets)
        result["potential_gap_upper"] = potential_gap_upper(net, A, B)
    if mixing:
        result["mixing"] = mixing_time(net).to_dict()
    options = {"paths": paths.value, "schemes": schemes, "cheeger": cheeger, "resistance": resistance, "mixing": mixing, "sets": sets}
    config = RunConfig(command="spectral", inputs=(str(network),), output=str(out) if out else None, options=options, format=fmt.value)

    def _table(console: Console) -> None:
        print_key_values("spectrum", {k: v for k, v in result.items() if k != "flow_poincare"}, console=console)
        print_rows("flow Poincare bounds", [{**r, "bottleneck": "->".join(r["bottleneck"])} for r in rows], console=console)

    _emit("spectral", config, result, fmt.value, out, overwrite, table=_table)


@app.command()
@_handled
def lattice(
    d: int = typer.Argument(..., help="Dimension (1, 2 or 3)."),
    n_max: int = typer.Argument(..., min=1),
    ns: Optional[str] = typer.Option(None, "--ns", help="Explicit half-widths, e.g. 2,4,8 or 1-6."),
    directions: int = typer.Option(DEFAULT_DIRECTIONS, "--directions", min=1),
    threads: Optional[int] = typer.Option(None, "--threads", min=1),
    fmt: LatticeFormat = typer.Option(LatticeFormat.csv, "--format", case_sensitive=False),
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """
    Capacity of the origin against the outside of [-n, n]^d, with bounds.
    """
    chosen = [n for n in parse_select_spec(ns)] if ns else list(range(1, n_max + 1))
    chosen = [n for n in chosen if 1 <= n <= n_max]
    if not chosen:
        raise UsageError(f"no half-width in 1..{n_max} selected")
    with _progress() as progress:
        task = progress.add_task(f"box capacities (d={d})", total=len(chosen))
        rows = lattice_experiment(d, chosen, directions=directions, threads=threads, on_done=lambda _: progress.advance(task, 1))
    if fmt is LatticeFormat.table:
        print_rows(f"Z^{d} boxes", [r.to_dict() for r in rows])
        return
    if fmt is LatticeFormat.csv:
        text = lattice_csv(rows)
        path = write_output(text, out, overwrite=overwrite)
        if path is None:
            typer.echo(text, nl=False)
        else:
            _err.print(f"wrote {path}")
        return
    options = {"d": d, "n_max": n_max, "ns": chosen, "directions": directions}
    config = RunConfig(command="lattice", output=str(out) if out else None, options=options, format=fmt.value)
    _emit("lattice", config, {"rows": [r.to_dict() for r in rows]}, "json", out, overwrite)


@app.command()
@_handled
def glauber(
    side: int = typer.Argument(..., min=2, metavar="L", help="Torus side."),
    coupling: float = typer.Argument(..., metavar="J", help="Coupling."),
    field: float = typer.Argument(..., metavar="H", help="External field."),
    beta: str = typer.Option(",".join(f"{b:g}" for b in DEFAULT_BETAS), "--beta", help="Inverse temperatures, e.g. 2,3,4."),
    threads: Optional[int] = typer.Option(None, "--threads", min=1),
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """
    Exact metastability analysis of Metropolis Glauber dynamics on the L x L torus.
    """
    betas = parse_float_list(beta)
    if not betas:
        raise UsageError("--beta needs at least one value")
    params = GlauberParams(L=side, J=coupling, h=field)
    with _progress() as progress:
        task = progress.add_task("exact nucleation times", total=len(betas))
        rep, sweep = glauber_sweep(params, betas, threads=threads, on_done=lambda _: progress.advance(task, 1))
    result = {
        "landscape": rep.to_dict(),
        "prefactor": 3.0 * rep.critical_length / ((2 * rep.critical_length - 1) * rep.gate_count_formula),
        "sweep": [r.to_dict() for r in sweep],
    }
    result["landscape"]["gate"] = len(rep.gate)
    options = {"L": side, "J": coupling, "h": field, "beta": betas}
    config = RunConfig(command="glauber", output=str(out) if out else None, options=options, format=fmt.value)

    def _table(console: Console) -> None:
        print_key_values("landscape", result["landscape"], console=console)
        print_rows(
            "nucleation times",
            [
                {
                    "beta": r.beta,
                    "E_a[tau_b]": r.exact_mean_direct,
                    "predicted": predicted_nucleation_time(params.with_beta(r.beta), rep),
                    "ratio": r.predicted_ratio,
                    "ln E / beta": r.log_slope,
                    "C ratio": r.capacity_ratio,
                }
                for r in sweep
            ],
            console=console,
        )

    _emit("glauber", config, result, fmt.value, out, overwrite, table=_table)


_SAMPLES = typer.Option(1000, "--samples")
_SEED = typer.Option(0, "--seed")
_MAX_STEPS = typer.Option(10**9, "--max-steps", min=1)


def _mc_config(command: str, inputs: tuple[str, ...], out: Optional[Path], fmt: OutputFormat, **options: Any) -> RunConfig:
    return RunConfig(command=f"mc {command}", inputs=inputs, output=str(out) if out else None, options=options, format=fmt.value)


@mc_app.command("hitting")
@_handled
def mc_hitting(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    sets: list[str] = _SETS,
    start: Optional[str] = typer.Option(None, "--start", help="Start label; the harmonic measure of A when omitted."),
    samples: int = _SAMPLES,
    seed: int = _SEED,
    max_steps: int = _MAX_STEPS,
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """P(tau_A < tau_B) and E[tau_B] by simulation, next to the exact values."""
    if samples < 1:
        raise UsageError(f"--samples must be >= 1, got {samples}")
    net = load_edge_list(network)
    A, B = _pair(net, sets)
    sol = equilibrium(net, A, B)
    if start is None:
        law: Any = sol.harmonic_measure
        exact_time = hitting_time_from_harmonic(net, A, B)
        exact_prob = 1.0
    else:
        law = net.index(start)
        exact_time = None
        exact_prob = float(sol.V[law])
    est = simulate_hitting(net, law, A, B, samples, seed, max_steps=max_steps)
    result = {**est.to_dict(), "exact_prob_a_first": exact_prob, "exact_time_to_b": exact_time}
    config = _mc_config("hitting", (str(network),), out, fmt, sets=sets, start=start, samples=samples, seed=seed, max_steps=max_steps)
    _emit("mc hitting", config, result, fmt.value, out, overwrite, table=lambda c: print_key_values("hitting", result, console=c))


@mc_app.command("flux")
@_handled
def mc_flux(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    edge: str = typer.Option(..., "--edge", help="Oriented edge as x,y."),
    sets: list[str] = _SETS,
    samples: int = _SAMPLES,
    seed: int = _SEED,
    max_steps: int = _MAX_STEPS,
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """Net crossings of an edge from nu_A until tau_B, against the unit current."""
    if samples < 1:
        raise UsageError(f"--samples must be >= 1, got {samples}")
    net = load_edge_list(network)
    A, B = _pair(net, sets)
    ends = [s.strip() for s in edge.split(",")]
    if len(ends) != 2:
        raise UsageError(f"--edge expects x,y got {edge!r}")
    x, y = net.index(ends[0]), net.index(ends[1])
    est = net_flux(net, A, B, (x, y), samples, seed, max_steps=max_steps)
    exact = equilibrium(net, A, B).unitary_current.value(x, y)
    result = {**est.to_dict(), "exact": exact}
    config = _mc_config("flux", (str(network),), out, fmt, sets=sets, edge=edge, samples=samples, seed=seed, max_steps=max_steps)
    _emit("mc flux", config, result, fmt.value, out, overwrite, table=lambda c: print_key_values("net flux", result, console=c))


@mc_app.command("escape")
@_handled
def mc_escape(
    network: Optional[Path] = typer.Argument(None, exists=True, dir_okay=False),
    glauber_params: Optional[str] = typer.Option(None, "--glauber", help="Glauber model as L,J,h."),
    beta: float = typer.Option(1.0, "--beta"),
    source: Optional[str] = typer.Option(None, "--source"),
    sets: list[str] = _SETS,
    samples: int = _SAMPLES,
    seed: int = _SEED,
    max_steps: int = _MAX_STEPS,
    dump: Optional[Path] = typer.Option(None, "--dump", dir_okay=False, help="Write raw tau samples as .npy."),
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """Law of tau_B / E[tau_B] against Exp(1) (KS distance, 1/e quantile)."""
    if samples < 1:
        raise UsageError(f"--samples must be >= 1, got {samples}")
    if (network is None) == (glauber_params is None):
        raise UsageError("give either a network file or --glauber L,J,h")
    if network is None:
        values = parse_float_list(glauber_params or "")
        if len(values) != 3 or values[0] != int(values[0]):
            raise UsageError(f"--glauber expects L,J,h got {glauber_params!r}")
        law = escape_time_law(
            GlauberParams(L=int(values[0]), J=values[1], h=values[2], beta=beta),
            samples,
            seed,
            max_steps=max_steps,
            dump=dump,
        )
        inputs: tuple[str, ...] = ()
    else:
        net = load_edge_list(network)
        targets = resolve_sets(net, sets)
        if source is None or "B" not in targets:
            raise UsageError("a network needs --source and --set B=...")
        law = escape_time_law(net, samples, seed, source=net.index(source), target=targets["B"], max_steps=max_steps, dump=dump)
        inputs = (str(network),)
    result = law.to_dict()
    result.pop("normalized_samples")
    options = {"glauber": glauber_params, "beta": beta, "source": source, "sets": sets, "samples": samples, "seed": seed, "dump": str(dump) if dump else None}
    config = _mc_config("escape", inputs, out, fmt, **options)
    _emit("mc escape", config, result, fmt.value, out, overwrite, table=lambda c: print_key_values("escape law", result, console=c))


@mc_app.command("coupling")
@_handled
def mc_coupling(
    network: Path = typer.Argument(..., exists=True, dir_okay=False),
    x: str = typer.Argument(...),
    y: str = typer.Argument(...),
    times: str = typer.Option("1,5,10", "--times"),
    samples: int = _SAMPLES,
    seed: int = _SEED,
    max_steps: int = _MAX_STEPS,
    fmt: OutputFormat = _FORMAT,
    out: Optional[Path] = _OUT,
    overwrite: bool = _OVERWRITE,
) -> None:
    """Meeting time of independent copies, with the exact TV distance at the sampled times."""
    if samples < 1:
        raise UsageError(f"--samples must be >= 1, got {samples}")
    net = load_edge_list(network)
    ts = parse_select_spec(times)
    i, j = net.index(x), net.index(y)
    rep = coupling_time(net, i, j, samples, seed, times=ts, max_steps=max_steps)
    result = rep.to_dict()
    if net.n <= load_settings().dense_limit:
        result["exact_tv"] = {str(t): pairwise_total_variation(net, i, j, t) for t in ts}
    config = _mc_config("coupling", (str(network),), out, fmt, x=x, y=y, times=ts, samples=samples, seed=seed, max_steps=max_steps)
    _emit("mc coupling", config, result, fmt.value, out, overwrite, table=lambda c: print_key_values("coupling", result, console=c))


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point: exit 0 ok, 1 usage, 2 domain error, 3 resource limit."""
    try:
        rv = app(args=list(argv) if argv is not None else None, standalone_mode=False)
    except ClickException as e:
        e.show()
        return 1
    except Abort:
        return 1
    return rv if isinstance(rv, int) else 0
