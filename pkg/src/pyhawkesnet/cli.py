import json
import logging
import os
import sys

import click

from .errors import (
    EXIT_DOMAIN,
    EXIT_IO,
    EXIT_OK,
    ConfigError,
    EventBudgetExceeded,
    ValidationFailed,
    exit_code_for,
)
from .file_io import (
    read_events,
    read_graph,
    read_json,
    write_events,
    write_flat_csv,
    write_graph,
    write_json,
    write_qq_csv,
)
from .graph import graph_limits, sample_graph
from .harness import ExperimentConfig, run_experiment
from .kernel import KernelSpec
from .simulator import DEFAULT_EVENT_BUDGET, simulate
from .subcritical import DEFAULT_ALPHA, DEFAULT_Q, CIMode, estimate
from .supercritical import estimate_super
from .utils import derive_seeds, entropy_seed, jsonable
from .version import __version__

logger = logging.getLogger("pyhawkesnet.cli")


class KernelParam(click.ParamType):
    name = "kernel"

    def convert(self, value, param, ctx):
        if isinstance(value, KernelSpec):
            return value
        try:
            return KernelSpec.parse(value)
        except ValueError as e:
            self.fail(str(e), param, ctx)


KERNEL = KernelParam()


def _emit(data: dict, out, fmt: str) -> None:
    if out is None:
        click.echo(json.dumps(jsonable(data), indent=2))
    elif fmt == "csv":
        write_flat_csv(out, data)
    else:
        write_json(out, data)


@click.group()
@click.version_option(__version__, prog_name="pyhawkesnet")
@click.option("--verbose", "-v", count=True, help="-v for INFO, -vv for DEBUG.")
@click.pass_context
def cli(ctx: click.Context, verbose):
    """📈 pyhawkesnet: Hawkes processes on Bernoulli random graphs."""
    ctx.ensure_object(dict)
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose >= 2:
        level = logging.DEBUG
    logging.getLogger("pyhawkesnet").setLevel(level)


@cli.command("simulate", help="🎲 Simulate one sample path and write the event CSV.")
@click.option("--n", "n", type=click.IntRange(min=1), help="Population size N.")
@click.option("--p", "p", type=click.FloatRange(0, 1), help="Edge probability.")
@click.option("--mu", type=float, required=True, help="Baseline rate μ.")
@click.option("--kernel", "kernel", type=KERNEL, required=True, help="exp:<b> or unif:<a>.")
@click.option("--horizon", type=float, required=True, help="Simulation end T.")
@click.option("--seed", type=int, default=None, help="Base seed (entropy when absent).")
@click.option(
    "--graph",
    "graph_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Reuse a saved graph instead of sampling one.",
)
@click.option("--graph-out", type=click.Path(dir_okay=False), help="Save the sampled graph.")
@click.option("--max-events", type=click.IntRange(min=1), default=DEFAULT_EVENT_BUDGET, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True, help="Event CSV path.")
def simulate_cmd(n, p, mu, kernel, horizon, seed, graph_path, graph_out, max_events, out):
    seed_source = "flag"
    if seed is None:
        seed, seed_source = entropy_seed(), "entropy"
    graph_seed, sim_seed = derive_seeds(seed, 2)

    if graph_path:
        g = read_graph(graph_path)
    else:
        if n is None or p is None:
            raise click.UsageError("simulate needs --n and --p, or --graph.")
        g = sample_graph(n, p, graph_seed)
    if graph_out:
        write_graph(graph_out, g)

    meta = {"seed": seed, "seed_source": seed_source, "graph_file": graph_path}
    try:
        log = simulate(g, kernel, mu, horizon, sim_seed, max_events)
    except EventBudgetExceeded as e:
        if e.partial is not None:
            write_events(out, e.partial, {**meta, "truncated": True})
        raise
    write_events(out, log, meta)
    click.secho(f"✅ {log.total_events} events for N={g.n} written to '{out}'", fg="green")


@cli.command("graph-limits", help="🧮 Deterministic graph functionals (ℓ_N, 𝒱_∞, 𝒳_∞, Perron data).")
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "n", type=click.IntRange(min=1))
@click.option("--p", "p", type=click.FloatRange(0, 1))
@click.option("--seed", type=int, default=None, help="Graph seed when sampling.")
@click.option("--k", "k", type=click.IntRange(min=1), required=True, help="Observed block size K.")
@click.option("--kernel", "kernel", type=KERNEL, help="Kernel giving Λ (and b when exponential).")
@click.option("--lam", type=float, default=None, help="Λ, overrides --kernel.")
@click.option("--b", "b", type=float, default=None, help="Decay rate b, overrides --kernel.")
@click.option("--mu", type=float, default=1.0, show_default=True)
@click.option("--no-positivity-check", is_flag=True, help="Skip the A_N² > 0 gate.")
@click.option("--vectors", is_flag=True, help="Include ℓ_N and V_N in the output.")
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def graph_limits_cmd(graph_path, n, p, seed, k, kernel, lam, b, mu, no_positivity_check, vectors, out):
    if graph_path:
        g = read_graph(graph_path)
    else:
        if n is None or p is None:
            raise click.UsageError("graph-limits needs --n and --p, or --graph.")
        g = sample_graph(n, p, entropy_seed() if seed is None else seed)
    if kernel is not None:
        lam = kernel.lam if lam is None else lam
        if kernel.is_exponential and b is None:
            b = kernel.rate
    if lam is None and b is None:
        raise click.UsageError("graph-limits needs --kernel, --lam or --b.")

    limits = graph_limits(g, k, lam=lam, mu=mu, b=b, check_positivity=not no_positivity_check)
    data = {
        "graph": {"n": g.n, "p": g.p, "seed": g.seed, "edges": g.edge_count},
        "lam": lam,
        "b": b,
        "mu": mu,
        **limits.to_dict(include_vectors=vectors),
    }
    _emit(data, out, "json")


@cli.command("estimate-sub", help="📐 Subcritical estimates (μ̂, Λ̂, p̂) with a confidence interval.")
@click.option("--events", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", "k", type=click.IntRange(min=1), required=True)
@click.option("--t", "t", type=float, required=True)
@click.option("--q", "q", type=float, default=DEFAULT_Q, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--ci-mode", type=click.Choice([m.value for m in CIMode]), default=CIMode.DELTA.value, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def estimate_sub_cmd(events, k, t, q, alpha, ci_mode, fmt, out):
    log = read_events(events)
    est = estimate(log, k, t, q, alpha, CIMode(ci_mode))
    _emit({**est.to_dict(), "source": {"events": events, "meta": log.meta}}, out, fmt)


@cli.command("estimate-super", help="🚀 Supercritical estimates 𝒰_t and 𝒫_t.")
@click.option("--events", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", "k", type=click.IntRange(min=1), required=True)
@click.option("--t", "t", type=float, required=True)
@click.option("--p", "p", type=float, default=None, help="True p (validation mode).")
@click.option("--b", "b", type=float, default=None, help="True b (validation mode).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False))
def estimate_super_cmd(events, k, t, p, b, fmt, out):
    log = read_events(events)
    est = estimate_super(log, k, t, p, b)
    _emit({**est.to_dict(), "source": {"events": events, "meta": log.meta}}, out, fmt)


@cli.command("validate", help="🧪 Run a Monte Carlo experiment and check its criteria.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Override the config's base seed.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker processes (default: all cores).")
@click.option("--qq-out", type=click.Path(dir_okay=False), help="QQ points as CSV.")
@click.option("--quiet", is_flag=True, help="No progress bar.")
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
def validate_cmd(config_path, seed, threads, qq_out, quiet, out):
    data = read_json(config_path)
    if seed is not None:
        data = {**data, "seed": seed}
    if data.get("seed") is None:
        raise ConfigError("validate needs an explicit seed (config 'seed' or --seed).")
    cfg = ExperimentConfig.from_dict(data)

    threads = threads or os.cpu_count() or 1
    report = run_experiment(cfg, threads=threads, progress=not quiet)
    write_json(out, report.to_dict())
    if qq_out:
        write_qq_csv(qq_out, report.qq_rows())

    if not report.passed:
        failed = [c.name for c in report.criteria if not c.passed]
        raise ValidationFailed(f"{cfg.target.value} failed: {', '.join(failed)}", report)
    click.secho(f"✅ {cfg.target.value} passed ({len(report.values)} replicas)", fg="green")


def main(argv=None) -> int:
    """Run the CLI and return its exit code; errors go to stderr as ``E<code>: message``."""
    try:
        result = cli.main(args=argv, prog_name="pyhawkesnet", standalone_mode=False)
    except click.exceptions.Abort:
        click.secho(f"E{EXIT_DOMAIN}: aborted", err=True, fg="red")
        return EXIT_DOMAIN
    except click.ClickException as e:
        click.secho(f"E{EXIT_IO}: {e.format_message()}", err=True, fg="red")
        return EXIT_IO
    except Exception as e:
        code = exit_code_for(e)
        logger.debug("Command failed", exc_info=True)
        click.secho(f"E{code}: {e}", err=True, fg="red")
        return code
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
