"""
Command-line front door for the KAM toolkit.

Every subcommand loads a run configuration, applies its command-line
overrides, runs one stage of the pipeline and writes its tables and a
manifest.json into the output directory.

Exit status:
- 0: success
- 2: invalid configuration
- 3: the frequency was excluded (witnesses printed and stored)
- 4: numerical failure
"""

import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import typer
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table
from tabulate import tabulate

from .birkhoff import build_generator, check_cube_identity_on_support, normal_form_test_point, verify_normal_form
from .charts import ChartGenerator
from .config import LOG_LEVEL, RunConfig, load_run_config, run_config_from_dict, s0_for
from .errors import ConfigValidationError, DomainError, ExcisionError, NumericalFailureError, ResonantWitness, \
    RunStatus
from .evolve import EvolutionSettings, integrate, torus_defect
from .exporters import CSVExporter, JSONExporter, ManifestWriter
from .fourier import x_points, x_to_grid
from .hamiltonian import Model
from .measure import empty_shell_check, excluded_fraction, reduced_eigen_provider
from .nash_moser import cantor_trace, nm_iterate
from .reducibility import fit_floquet_constants, floquet_evolve, reduce_to_constant, stability_report
from .reduction import assemble_L_omega, reduce_operator, stage_report
from .sites import admissible, exhaustive_cube_check
from .torus import F_operator, Params, TorusProblem, embedding_from_dict, freq_amp, \
    model_from_config, residual_norm, solution_coeffs, trivial_embedding, xi_of_omega

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXCLUDED = 3
EXIT_NUMERICAL = 4

NEWTON_TOL = 1e-11
REDUCIBILITY_TOL = 1e-12
FLOQUET_HORIZON = 1000.0

Overrides = Callable[[], Dict[str, Dict[str, Any]]]

app = typer.Typer(help="KAM toolkit for quasi-periodic solutions of quasi-linear mKdV equations")
console = Console()
logger = logging.getLogger(__name__)


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


@dataclass
class GlobalOptions:
    config_path: Optional[str] = None
    out: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    tol_scale: Optional[float] = None
    plots: bool = False


@dataclass
class RunSetup:
    """Validated configuration with the model, the parameters and the chosen (xi, omega)."""
    config: RunConfig
    model: Model
    params: Params
    xi: np.ndarray
    omega: np.ndarray
    rng: np.random.Generator

    @property
    def tol_scale(self) -> float:
        return self.config.run.tol_scale

    def problem(self, params: Optional[Params] = None, xi: Optional[np.ndarray] = None) -> TorusProblem:
        return TorusProblem(self.model, params or self.params, self.xi if xi is None else xi)


# ---------------------------------------------------------------------------
# Configuration plumbing
# ---------------------------------------------------------------------------

def parse_sites(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigValidationError("model.sites", f"expected comma-separated integers, got {text!r}")


def load_density_file(path: Optional[str]) -> Optional[List[Dict[str, Any]]]:
    """A density file holds a list of monomials or an object with a ``density`` list."""
    if path is None:
        return None
    try:
        data = JSONExporter().load(path)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigValidationError("model.density", f"cannot read {path}: {e}")
    if isinstance(data, dict):
        data = data.get("density")
    if not isinstance(data, list):
        raise ConfigValidationError("model.density", "density file must hold a list of monomials")
    return data


def resolve_config(options: GlobalOptions, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Config file, then global flags, then subcommand flags; validated once at the end."""
    data = load_run_config(options.config_path).to_dict()
    layers = [{"run": {"out_dir": options.out, "seed": options.seed, "threads": options.threads,
                       "tol_scale": options.tol_scale, "plots": options.plots or None}}]
    layers.append(overrides or {})
    for layer in layers:
        for section, values in layer.items():
            for key, value in values.items():
                if value is not None:
                    data[section][key] = value
    return run_config_from_dict(data)


def build_setup(config: RunConfig) -> RunSetup:
    """Model, parameters and (xi, omega); xi is drawn from [1, 2]^nu with the run seed when not given."""
    rng = np.random.default_rng(config.run.seed)
    try:
        model = model_from_config(config)
        params = Params.from_config(config)
    except DomainError as e:
        raise ConfigValidationError("params", str(e))
    sites, sign, lv = model.sites, model.sign, model.lambda_variant
    if config.params.xi is not None:
        xi = np.asarray(config.params.xi, dtype=float)
    elif config.params.omega is not None:
        xi = xi_of_omega(sites, sign, params.eps, config.params.omega, lv)
        if np.any(xi <= 0):
            raise ConfigValidationError("params.omega", "omega is not alpha(xi) for positive amplitudes xi")
    else:
        xi = rng.uniform(1.0, 2.0, sites.nu)
    if config.params.omega is not None:
        omega = np.asarray(config.params.omega, dtype=float)
    else:
        omega = freq_amp(sites, sign, params.eps, xi, lv)
    if config.run.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(config.run.threads)
    logger.debug(f"setup: sites {sites.plus}, xi {xi}, omega {omega}, gamma {params.gamma:.3e}")
    return RunSetup(config, model, params, xi, omega, rng)


def load_embedding(setup: RunSetup, path: str):
    """Embedding, omega and xi stored by `solve`; the parameters take the embedding's box."""
    data = JSONExporter().load(path)
    try:
        emb = embedding_from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigValidationError("<embedding>", f"malformed embedding file {path}: {e}")
    omega = np.asarray(data.get("omega", setup.omega), dtype=float)
    xi = np.asarray(data.get("xi", setup.xi), dtype=float)
    params = replace(setup.params, n_phi=emb.n_phi, n_x=emb.n_x)
    return setup.problem(params, xi), emb, omega


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_json(manifest: ManifestWriter, name: str, data: Dict[str, Any], kind: str = "json") -> str:
    path = manifest.path(name)
    JSONExporter().export(data, path)
    return manifest.register(path, kind)


def write_csv(manifest: ManifestWriter, name: str, rows: List[Dict[str, Any]],
              fieldnames: Optional[List[str]] = None) -> str:
    path = manifest.path(name)
    CSVExporter().export_rows(rows, path, fieldnames)
    return manifest.register(path, "csv")


def write_chart(setup: RunSetup, manifest: ManifestWriter, name: str, render: Callable[[ChartGenerator], bytes]):
    if not setup.config.run.plots:
        return None
    charts = ChartGenerator()
    return manifest.register(charts.save(render(charts), manifest.path(name)), "png")


def print_witnesses(witnesses: List[ResonantWitness], title: str) -> None:
    table = Table(title=title, box=box.ROUNDED)
    table.add_column("l", style="cyan")
    table.add_column("j", justify="right")
    table.add_column("k", justify="right")
    table.add_column("|divisor|", justify="right", style="red")
    table.add_column("bound", justify="right")
    for w in witnesses:
        table.add_row(str(list(w.l)), str(w.j), str(w.k), f"{w.divisor:.3e}", f"{w.bound:.3e}")
    console.print(table)


def log_table(rows: List[Dict[str, Any]], title: str) -> None:
    if rows:
        logger.info(f"{title}\n" + tabulate(rows, headers="keys", floatfmt=".4g"))


def spinner(message: str) -> Progress:
    progress = Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                        console=console, transient=True)
    progress.add_task(description=message, total=None)
    return progress


def run_command(ctx: typer.Context, name: str, overrides: Optional[Overrides],
                body: Callable[[RunSetup, ManifestWriter], int]) -> None:
    """Resolve the configuration, run `body` and map failures to exit codes.

    Once the configuration validates, the manifest is written whatever the outcome.
    """
    options: GlobalOptions = ctx.obj or GlobalOptions()
    manifest = None
    code, status = EXIT_OK, "ok"
    try:
        config = resolve_config(options, overrides() if overrides else None)
        setup = build_setup(config)
        manifest = ManifestWriter(config.run.out_dir, name, config.config_hash(), config.run.seed)
        code = body(setup, manifest)
        status = {EXIT_OK: "ok", EXIT_EXCLUDED: "excluded"}.get(code, "failed")
    except ConfigValidationError as e:
        console.print(f"[bold red]❌ Invalid configuration:[/bold red] {e}")
        code, status = EXIT_CONFIG, "invalid"
    except DomainError as e:
        console.print(f"[bold red]❌ Invalid input:[/bold red] {e}")
        code, status = EXIT_CONFIG, "invalid"
    except ExcisionError as e:
        console.print(f"[bold yellow]⚠ Frequency excluded ({e.stage}):[/bold yellow] {e}")
        print_witnesses(e.witnesses, "Resonance witnesses")
        if manifest is not None:
            write_json(manifest, "witnesses.json", {"stage": e.stage, "message": str(e),
                                                    "witnesses": [w.to_dict() for w in e.witnesses]})
        code, status = EXIT_EXCLUDED, "excluded"
    except NumericalFailureError as e:
        console.print(f"[bold red]❌ Numerical failure:[/bold red] {e}")
        logger.error(f"diagnostics: {e.diagnostics}")
        if manifest is not None:
            write_json(manifest, "failure.json", {"message": str(e), "diagnostics": e.diagnostics})
        code, status = EXIT_NUMERICAL, "failed"
    finally:
        if manifest is not None:
            manifest.write(status)
    if code != EXIT_OK:
        sys.exit(code)


# ---------------------------------------------------------------------------
# Global options
# ---------------------------------------------------------------------------

@app.callback()
def cli_root(
    ctx: typer.Context,
    config: Optional[str] = typer.Option(None, "--config", help="Run configuration (JSON)"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for every random draw"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Thread count for the linear algebra backends"),
    tol_scale: Optional[float] = typer.Option(None, "--tol-scale", help="Multiplier for the solver tolerances"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    plots: bool = typer.Option(False, "--plots", help="Also render PNG charts"),
):
    """Quasi-periodic solutions of Hamiltonian quasi-linear perturbations of mKdV."""
    setup_logging(verbose)
    ctx.obj = GlobalOptions(config, out, seed, threads, tol_scale, plots)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

@app.command("sites-check")
def sites_check(
    ctx: typer.Context,
    sites: Optional[str] = typer.Option(None, help="Tangential sites, comma separated"),
    cube_bound: int = typer.Option(12, help="Bound for the exhaustive cube-identity check (0 skips it)"),
):
    """Admissibility of the tangential sites and the cube identity."""

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        site_set, lv = setup.model.sites, setup.model.lambda_variant
        result = admissible(site_set, lv)
        verdict = "admissible" if result.admissible else "not admissible"
        quadruples = exhaustive_cube_check(cube_bound) if cube_bound > 0 else None

        table = Table(title="Tangential sites", box=box.ROUNDED)
        table.add_column("Check", style="cyan")
        table.add_column("Result")
        table.add_row("Sites", str(list(site_set.plus)))
        table.add_row("Target 2/(2nu-1) sum j^2", f"{result.target:g}")
        table.add_row("Verdict", f"[green]{verdict}[/green]" if result.admissible else f"[red]{verdict}[/red]")
        if result.witness:
            table.add_row("Witness (j, k)", str(result.witness))
        if result.skipped:
            table.add_row("Note", "lambda-variant: no admissibility needed")
        if quadruples is not None:
            table.add_row(f"Cube identity |j| <= {cube_bound}", f"{quadruples} quadruples, no violation")
        console.print(table)

        write_json(manifest, "sites_check.json", {
            "sites": list(site_set.plus),
            "lambda_variant": lv,
            "verdict": verdict,
            **result.to_dict(),
            "cube_bound": cube_bound,
            "cube_quadruples": quadruples,
        })
        return EXIT_OK

    run_command(ctx, "sites-check", lambda: {"model": {"sites": parse_sites(sites)}}, body)


@app.command()
def bnf(
    ctx: typer.Context,
    amplitude: float = typer.Option(0.1, help="Base amplitude for the quartic fit"),
    normal_size: float = typer.Option(0.3, help="Size of the random normal component"),
):
    """Check the weak Birkhoff normal form on a tangential-plus-normal test point."""

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        model = setup.model
        gen = build_generator(model.sites, model.sign, model.lambda_variant)
        vc, zc = normal_form_test_point(model.sites, setup.xi, setup.rng, normal_size)
        with spinner("Fitting the quartic part of H o Phi_B..."):
            report = verify_normal_form(model, gen, vc, zc, base_amplitude=amplitude)

        table = Table(title="Weak Birkhoff normal form", box=box.ROUNDED)
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", justify="right")
        for key, value in report.to_dict().items():
            if key != "amplitudes":
                table.add_row(key, f"{value:.4e}")
        table.add_row("support size", str(gen.support_size))
        console.print(table)

        write_json(manifest, "bnf.json", {
            **report.to_dict(),
            "support_size": gen.support_size,
            "support_cube_sums_nonzero": check_cube_identity_on_support(gen),
        })
        return EXIT_OK

    run_command(ctx, "bnf", None, body)


@app.command()
def residual(
    ctx: typer.Context,
    embedding: str = typer.Option(..., help="Embedding JSON written by solve"),
    s: Optional[float] = typer.Option(None, help="Sobolev index (default s0)"),
):
    """Print ||F(i, zeta)||_s for a stored embedding."""

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        problem, emb, omega = load_embedding(setup, embedding)
        index = s0_for(problem.nu) if s is None else s
        value = residual_norm(F_operator(problem, emb, omega), index)
        console.print(f"||F||_{index:g} = [bold]{value:.6e}[/bold]")
        write_json(manifest, "residual.json", {"embedding": embedding, "s": index, "residual": value,
                                               "omega": omega.tolist()})
        return EXIT_OK

    run_command(ctx, "residual", None, body)


@app.command()
def solve(
    ctx: typer.Context,
    sites: Optional[str] = typer.Option(None, help="Tangential sites, comma separated"),
    epsilon: Optional[float] = typer.Option(None, help="Amplitude scale eps"),
    a: Optional[float] = typer.Option(None, help="Exponent a in (0, 1/6)"),
    tau: Optional[float] = typer.Option(None, help="Diophantine exponent (>= nu + 2)"),
    density_file: Optional[str] = typer.Option(None, help="JSON file with the density monomials"),
    max_steps: Optional[int] = typer.Option(None, help="Maximum Nash-Moser steps"),
    out: Optional[str] = typer.Option(None, help="Output directory"),
):
    """Run the Nash-Moser iteration and store the torus embedding."""
    def overrides() -> Dict[str, Dict[str, Any]]:
        return {
            "model": {"sites": parse_sites(sites), "density": load_density_file(density_file)},
            "params": {"eps": epsilon, "a": a, "tau": tau},
            "run": {"max_steps": max_steps, "out_dir": out},
        }

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        run = setup.config.run
        problem = setup.problem()
        console.print(Panel.fit(
            f"[bold cyan]Nash-Moser[/bold cyan]\n"
            f"sites {list(problem.sites.plus)}, eps {setup.params.eps}, gamma {setup.params.gamma:.3e}\n"
            f"omega {np.array2string(setup.omega, precision=8)}\nsolver {run.linear_solver}",
            border_style="cyan"))
        with spinner("Iterating..."):
            result = nm_iterate(problem, setup.omega, run.max_steps, solver=run.linear_solver,
                                tol=NEWTON_TOL * setup.tol_scale, eigen_source=run.eigen_source)

        history = [rec.to_dict() for rec in result.history]
        table = Table(title="Nash-Moser history", box=box.ROUNDED)
        for column in ("step", "scale", "residual", "zeta", "cantor"):
            table.add_column(column, justify="right")
        for rec in result.history:
            table.add_row(str(rec.step), f"{rec.scale:.3g}", f"{rec.residual:.3e}", f"{rec.zeta:.2e}", rec.cantor)
        console.print(table)
        log_table(history, "Nash-Moser history")

        write_json(manifest, "solution.json", {
            **result.embedding_dict(),
            "status": result.status.value,
            "energy_constant": problem.energy_constant(),
            "run": result.to_dict(),
        })
        if history:
            write_csv(manifest, "history.csv", history)
        write_json(manifest, "cantor_trace.json", {"trace": cantor_trace(result)})
        scales = [rec.scale for rec in result.history]
        write_chart(setup, manifest, "residual_history.png",
                    lambda charts: charts.residual_history(result.residuals, scales))

        if result.status == RunStatus.EXCLUDED:
            console.print(f"[bold yellow]⚠ Frequency excluded:[/bold yellow] {result.message}")
            print_witnesses(result.witnesses, "Resonance witnesses")
            return EXIT_EXCLUDED
        if result.converged:
            console.print(f"[bold green]✅ Converged[/bold green] after {len(result.history) - 1} step(s)")
        else:
            console.print(f"[yellow]Stopped after {run.max_steps} steps without reaching the tolerance[/yellow]")
        return EXIT_OK

    run_command(ctx, "solve", overrides, body)


def _torus_for(setup: RunSetup, embedding: Optional[str]):
    if embedding:
        return load_embedding(setup, embedding)
    problem = setup.problem()
    return problem, trivial_embedding(problem), setup.omega


@app.command()
def reduce(
    ctx: typer.Context,
    embedding: Optional[str] = typer.Option(None, help="Embedding JSON (default: the trivial torus)"),
):
    """Reduce the linearized operator to constant coefficients up to a smoothing remainder."""

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        problem, emb, omega = _torus_for(setup, embedding)
        with spinner("Running the reduction stages..."):
            reduction = reduce_operator(assemble_L_omega(problem, emb, omega), problem, check=True,
                                        seed=setup.config.run.seed)
        rows = stage_report(reduction)

        table = Table(title=f"Reduction: m3 = {reduction.m3:.12f}, m1 = {reduction.m1:.6e}", box=box.ROUNDED)
        for column in ("stage", "status", "order3_variation", "order1_variation",
                       "conjugation_residual", "remainder_decay_norm"):
            table.add_column(column, justify="right")
        for row in rows:
            table.add_row(row["stage"], row["status"], *(
                "-" if row[key] is None else f"{row[key]:.2e}"
                for key in ("order3_variation", "order1_variation", "conjugation_residual",
                            "remainder_decay_norm")))
        console.print(table)
        log_table(rows, "Reduction stages")

        write_json(manifest, "reduction.json", reduction.to_dict())
        write_csv(manifest, "reduction_stages.csv", rows)
        return EXIT_OK

    run_command(ctx, "reduce", None, body)


@app.command()
def floquet(
    ctx: typer.Context,
    embedding: Optional[str] = typer.Option(None, help="Embedding JSON (default: the trivial torus)"),
    horizon: float = typer.Option(FLOQUET_HORIZON, help="Time span of the Floquet norm check"),
):
    """Diagonalize the reduced operator and report the Floquet exponents."""

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        problem, emb, omega = _torus_for(setup, embedding)
        params = problem.params
        with spinner("Reducing to constant coefficients..."):
            reduction = reduce_operator(assemble_L_omega(problem, emb, omega), problem, check=False)
            state = reduce_to_constant(reduction.op, omega, params.gamma, params.tau,
                                       tol=REDUCIBILITY_TOL * setup.tol_scale)
        fit = fit_floquet_constants(state.modes, state.mu)
        report = stability_report(state, fit)

        v0 = setup.rng.normal(size=state.modes.size) + 1j * setup.rng.normal(size=state.modes.size)
        times = np.linspace(0.0, horizon, 11)
        norms = np.linalg.norm(floquet_evolve(state.mu, v0, times), axis=-1)
        report["norm_drift"] = float(np.max(np.abs(norms - norms[0])) / norms[0])

        rows = [{"j": int(j), "re_mu": float(m.real), "im_mu": float(m.imag), "r_j": float(r.imag)}
                for j, m, r in zip(state.modes, state.mu, fit.residual)]
        verdict = "linearly stable" if report["linearly_stable"] else "not linearly stable"
        console.print(Panel.fit(
            f"m3 = {fit.m3:.12f}\nm1 = {fit.m1:.6e}\nsup |j| |r_j| = {fit.weighted_residual():.3e}\n"
            f"max |Re mu| = {report['max_real_part']:.3e}\nremainder = {report['remainder']:.3e}\n"
            f"verdict: [bold]{verdict}[/bold]",
            title="Floquet exponents", border_style="green" if report["linearly_stable"] else "red"))

        write_csv(manifest, "floquet.csv", rows, ["j", "re_mu", "im_mu", "r_j"])
        write_json(manifest, "floquet.json", {"stability": report, "verdict": verdict,
                                              "reduction": {"m3": reduction.m3, "m1": reduction.m1},
                                              "state": state.to_dict()})
        write_chart(setup, manifest, "floquet_spectrum.png",
                    lambda charts: charts.floquet_spectrum(state.modes, state.mu, fit.m3, fit.m1))
        return EXIT_OK

    run_command(ctx, "floquet", None, body)


@app.command()
def measure(
    ctx: typer.Context,
    points: Optional[int] = typer.Option(None, help="Number of frequency samples"),
    eigen_source: Optional[str] = typer.Option(None, help="analytic or final"),
):
    """Excluded fraction of the frequency set against gamma, and the empty-shell check."""
    def overrides() -> Dict[str, Dict[str, Any]]:
        return {"run": {"grid_points": points, "eigen_source": eigen_source}}

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        model, params, run = setup.model, setup.params, setup.config.run
        sites, sign, lv = model.sites, model.sign, model.lambda_variant
        gammas = [g * params.gamma for g in run.gamma_sweep]
        band, jmax = params.n_phi, params.n_x
        provider = reduced_eigen_provider(model, params) if run.eigen_source == "final" else None
        with spinner(f"Sampling {run.grid_points} frequencies..."):
            report = excluded_fraction(sites, sign, params.eps, gammas, params.tau, run.grid_points, band, jmax,
                                       lv, provider)
            shell = empty_shell_check(sites, sign, params.eps, setup.xi, params.gamma, params.tau, band, jmax, lv)

        rows = []
        for row in report.rows:
            for gamma, flag in zip(report.gammas, row["excluded"]):
                entry = {f"omega_{i + 1}": w for i, w in enumerate(row["omega"])}
                entry.update({"gamma": gamma, "excluded": flag,
                              "witness": json.dumps(row["witness"]) if flag and row["witness"] else ""})
                rows.append(entry)

        table = Table(title="Excluded fraction", box=box.ROUNDED)
        table.add_column("gamma", justify="right")
        table.add_column("fraction", justify="right")
        for gamma, fraction in zip(report.gammas, report.fractions):
            table.add_row(f"{gamma:.3e}", f"{fraction:.4f}")
        console.print(table)
        slope = "n/a" if report.slope is None else f"{report.slope:.3f}"
        console.print(f"log-log slope: [bold]{slope}[/bold]; empty shell: "
                      f"{'[green]yes[/green]' if shell.empty else '[red]no[/red]'} (C1 = {shell.c1:.4g})")

        write_csv(manifest, "measure.csv", rows)
        write_json(manifest, "measure_summary.json", {
            **report.to_dict(),
            "eigen_source": run.eigen_source,
            "shell": shell.to_dict(),
        })
        write_chart(setup, manifest, "excluded_fraction.png",
                    lambda charts: charts.excluded_fraction(report.gammas, report.fractions, report.slope))
        return EXIT_OK

    run_command(ctx, "measure", overrides, body)


@app.command()
def evolve(
    ctx: typer.Context,
    density_file: Optional[str] = typer.Option(None, help="JSON file with the density monomials"),
    t: Optional[float] = typer.Option(None, "--t", help="Final time"),
    dt: Optional[float] = typer.Option(None, help="Time step"),
    scheme: Optional[str] = typer.Option(None, help="exponential or midpoint"),
    embedding: Optional[str] = typer.Option(None, help="Embedding JSON; also measures the torus defect"),
    snapshots: int = typer.Option(100, help="Number of stored snapshots"),
):
    """Integrate the PDE from a torus point and store snapshots on the x-grid."""
    def overrides() -> Dict[str, Dict[str, Any]]:
        return {
            "model": {"density": load_density_file(density_file)},
            "run": {"t_final": t, "dt": dt, "scheme": scheme},
        }

    def body(setup: RunSetup, manifest: ManifestWriter) -> int:
        run = setup.config.run
        settings = EvolutionSettings(dt=run.dt, t_final=run.t_final, scheme=run.scheme,
                                     snapshot_every=max(run.dt, run.t_final / max(snapshots, 1)))
        summary: Dict[str, Any] = {"settings": vars(settings)}
        with spinner(f"Integrating to t = {run.t_final:g}..."):
            if embedding:
                problem, emb, omega = load_embedding(setup, embedding)
                defect = torus_defect(problem, emb, omega, settings)
                traj = defect.trajectory
                summary["torus_defect"] = defect.to_dict()
            else:
                problem = setup.problem()
                u0 = solution_coeffs(problem, trivial_embedding(problem), setup.omega, 0.0)
                traj = integrate(setup.model, u0, settings)

        m = traj.snapshots[0].shape[-1]
        rows = []
        for time, snap in zip(traj.times, traj.snapshots):
            values = x_to_grid(snap, m).real
            rows.append({"t": time, **{f"x{k}": float(v) for k, v in enumerate(values)}})
        summary.update(traj.to_dict())
        summary["x_grid"] = x_points(m).tolist()

        drift = traj.drift()
        console.print(Panel.fit(
            f"scheme {settings.scheme}, dt {settings.dt:g}, t {settings.t_final:g}\n"
            f"energy drift {drift['energy']:.3e}\nmass drift {drift['mass']:.3e}"
            + (f"\nmax torus distance {summary['torus_defect']['max_distance']:.3e}" if embedding else ""),
            title="Evolution", border_style="cyan"))

        write_csv(manifest, "snapshots.csv", rows)
        write_json(manifest, "evolve.json", summary)
        series = {"energy drift": [abs(e - traj.energy[0]) for e in traj.energy]}
        if embedding:
            series["distance to torus"] = summary["torus_defect"]["distance"]
        write_chart(setup, manifest, "evolution.png", lambda charts: charts.torus_defect(traj.times, series))
        return EXIT_OK

    run_command(ctx, "evolve", overrides, body)


def main() -> None:
    try:
        app()
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user[/yellow]")
        sys.exit(130)
