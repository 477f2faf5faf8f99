"""
cellmode - transportation mode detection from serving-cell traces

Subcommands compose through files:

    simulate -> trace.csv -> smooth -> features -> instances.csv
             -> train -> model.txt -> predict / eval / report
"""

import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click
from dotenv import load_dotenv

from classifier_lib import TreeParams, load_model_file, predict_all, save_model, train
from errors import CellModeError
from eval_lib import (
    ABLATION_SCALES,
    ablation,
    cross_validate,
    evaluate_model,
    metrics,
    render_ablation,
    render_report,
)
from features_lib import check_window_sizes, extract_instances, feature_indices
from ingest_lib import (
    parse_trace,
    read_instances,
    read_trace,
    save_trace,
    write_instances,
    write_predictions,
    write_trace,
)
from layouts.cli_help import EXAMPLES
from preprocess_lib import SmoothingParams, count_handoffs, longest_run, smooth_pingpong
from run_config import CONFIG_ENV, load_config, to_default_map
from synth_lib import PathLossParams, SynthParams, generate_suite, simulate_mode
from trace_model import MODE_ORDER, FeatureVector, Mode, Trace

load_dotenv()  # Load environment variables from .env file

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class CellModeGroup(click.Group):
    """Command group turning CellModeError into a one-line message and exit code 2"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except CellModeError as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"❌ {e}", err=True)
            raise click.exceptions.Exit(2)


def _int_list(ctx, param, value: Optional[str]) -> Optional[Tuple[int, ...]]:
    if value is None:
        return None
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, e.g. 10,30,60")


def _labeled(instances: Sequence[FeatureVector]) -> List[FeatureVector]:
    """Keep labeled instances, noting how many were dropped"""
    labeled = [inst for inst in instances if inst.label is not None]
    if len(labeled) < len(instances):
        click.echo(f"📊 Ignoring {len(instances) - len(labeled)} unlabeled instance(s)", err=True)
    return labeled


def _tree_params(max_depth: int, min_leaf: int, min_split: Optional[int]) -> TreeParams:
    return TreeParams(max_depth=max_depth, min_leaf=min_leaf, min_split=min_split)


def _run_jobs(func, items: Sequence, jobs: int) -> list:
    """map() over items, on a thread pool when jobs > 1; results keep input order"""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


smoothing_options = [
    click.option("--max-gap", type=click.IntRange(min=1), default=2, show_default=True,
                  help="Longest interloper run (samples) that smoothing replaces"),
    click.option("--min-flank", type=click.IntRange(min=1), default=3, show_default=True,
                  help="Shortest flanking run (samples) that counts as dominant"),
]

tree_options = [
    click.option("--max-depth", type=click.IntRange(min=1), default=12, show_default=True,
                  help="Maximum tree depth"),
    click.option("--min-leaf", type=click.IntRange(min=1), default=5, show_default=True,
                  help="Minimum instances per leaf"),
    click.option("--min-split", type=click.IntRange(min=2), default=None,
                  help="Minimum instances to split a node  [default: 2 x min-leaf]"),
]

jobs_option = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                           help="Worker threads")


def add_options(options):
    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func
    return decorator


@click.group(cls=CellModeGroup, epilog=EXAMPLES)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), envvar=CONFIG_ENV,
              help=f"JSON RunConfig file (or ${CONFIG_ENV}); explicit flags override it")
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False),
              envvar="CELLMODE_LOG_LEVEL", default="WARNING", show_default=True,
              help="Logging level on stderr (or $CELLMODE_LOG_LEVEL)")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], log_level: str) -> None:
    """Detect stationary / walking / driving from cell ID and RSS traces."""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)
    config = load_config(config_path)
    ctx.obj = config
    ctx.default_map = to_default_map(config)


@main.command()
@click.argument("traces", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False),
              help="Write a normalized copy of the (single) input trace here")
def ingest(traces: Tuple[str, ...], out: Optional[str]) -> None:
    """Parse and validate traces, and print a summary of each."""
    if out and len(traces) != 1:
        raise click.UsageError("--out needs exactly one input trace")
    for path in traces:
        trace = read_trace(path)
        labeled = {mode: 0.0 for mode in MODE_ORDER}
        for seg in trace.segments:
            labeled[seg.mode] += (seg.end_ms - seg.start_ms) / 1000.0
        duration = (trace.samples[-1].timestamp - trace.samples[0].timestamp) / 1000.0 if len(trace) else 0.0
        fields = [
            f"samples={len(trace)}",
            f"duration_s={duration:g}",
            f"unique_cells={len(set(trace.cell_ids))}",
            f"handoffs={count_handoffs(trace)}",
            f"longest_run={longest_run(trace)}",
        ] + [f"{mode.value}_s={labeled[mode]:g}" for mode in MODE_ORDER]
        click.echo(f"{path}: " + " ".join(fields))
        if out:
            save_trace(trace, out)
            click.echo(f"✅ Normalized trace written to {out}", err=True)


@main.command()
@click.argument("trace", type=click.File("rb"))
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Output trace CSV")
@add_options(smoothing_options)
def smooth(trace, out, max_gap: int, min_flank: int) -> None:
    """Remove ping-pong handoffs from a trace."""
    original = parse_trace(trace)
    smoothed = smooth_pingpong(original, SmoothingParams(max_gap, min_flank))
    write_trace(smoothed, out)
    click.echo(
        f"✅ Handoffs: {count_handoffs(original)} -> {count_handoffs(smoothed)}", err=True
    )


@main.command()
@click.argument("traces", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Output instance CSV")
@click.option("--window-sizes", callback=_int_list, default="10,30,60", show_default=True,
              help="Three window sizes in seconds, each dividing the largest")
@click.option("--smooth/--no-smooth", "do_smooth", default=True, show_default=True,
              help="Apply ping-pong smoothing first")
@add_options(smoothing_options)
@jobs_option
def features(traces, out, window_sizes, do_smooth: bool, max_gap: int, min_flank: int, jobs: int) -> None:
    """Extract 36-feature instances from traces."""
    sizes = check_window_sizes(window_sizes)
    params = SmoothingParams(max_gap, min_flank)

    def extract(path: str) -> List[FeatureVector]:
        trace = read_trace(path)
        if do_smooth:
            trace = smooth_pingpong(trace, params)
        return extract_instances(trace, sizes)

    instances = [inst for batch in _run_jobs(extract, traces, jobs) for inst in batch]
    write_instances(instances, out)
    click.echo(f"✅ {len(instances)} instance(s) from {len(traces)} trace(s)", err=True)


@main.command(name="train")
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Output model file")
@add_options(tree_options)
def train_command(instances, out, max_depth: int, min_leaf: int, min_split: Optional[int]) -> None:
    """Train a decision tree on labeled instances."""
    tree = train(_labeled(read_instances(instances)), _tree_params(max_depth, min_leaf, min_split))
    save_model(tree, out)
    click.echo(f"🌳 Tree: {len(tree.nodes)} nodes, {len(tree.leaves)} leaves, depth {tree.depth}", err=True)


@main.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Output prediction CSV")
def predict(model, instances, out) -> None:
    """Predict the mode of every instance."""
    tree = load_model_file(model)
    vectors = read_instances(instances)
    write_predictions(vectors, predict_all(tree, vectors), out)


@main.command(name="eval")
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=click.IntRange(min=2), default=5, show_default=True, help="Number of folds")
@click.option("--seed", type=int, default=0, show_default=True, help="Fold shuffle seed")
@click.option("--stratified/--no-stratified", default=False, show_default=True,
              help="Shuffle each class separately before dealing folds")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("--scales", type=click.Choice(list(ABLATION_SCALES)), default="both", show_default=True,
              help="Feature scales the trees may split on")
@click.option("--windows", callback=_int_list, default=None,
              help="Only use features of these window sizes, e.g. 10,60  [default: all]")
@click.option("--window-sizes", callback=_int_list, default="10,30,60", show_default=True,
              help="Window sizes the instances were extracted with")
@click.option("--ablation", "run_ablation", is_flag=True, help="Compare log, linear and both scales")
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Report destination")
@add_options(tree_options)
@jobs_option
def eval_command(instances, k, seed, stratified, fmt, scales, windows, window_sizes, run_ablation, out,
                 max_depth, min_leaf, min_split, jobs) -> None:
    """Cross-validate the classifier and report precision and recall."""
    vectors = _labeled(read_instances(instances))
    sizes = check_window_sizes(window_sizes)
    params = _tree_params(max_depth, min_leaf, min_split)

    if run_ablation:
        reports = ablation(vectors, k, params, seed, stratified, windows, sizes, jobs)
        out.write(render_ablation(reports, fmt))
        return

    if scales != "both" or windows is not None:
        params = params.with_features(feature_indices(ABLATION_SCALES[scales], windows, sizes))
    matrix = cross_validate(vectors, k, params, seed, stratified, jobs)
    out.write(render_report(metrics(matrix), fmt, title=f"{k}-fold cross-validation, scales: {scales}"))


@main.command()
@click.option("--mode", type=click.Choice([m.value for m in MODE_ORDER]),
              help="Mode to simulate (all modes with --suite when omitted)")
@click.option("--duration-s", type=click.IntRange(min=1), default=600, show_default=True)
@click.option("--extent-m", type=float, default=3000.0, show_default=True, help="Side of the square area")
@click.option("--spacing-m", type=float, default=500.0, show_default=True, help="Tower grid pitch")
@click.option("--jitter-frac", type=float, default=0.2, show_default=True,
              help="Tower displacement, as a fraction of the pitch")
@click.option("--p0-dbm", type=float, default=-40.0, show_default=True, help="Power at 1 m")
@click.option("--alpha", type=float, default=3.0, show_default=True, help="Path loss exponent")
@click.option("--shadow-sigma", type=float, default=6.0, show_default=True, help="Shadowing std (dB)")
@click.option("--decorrelation-m", type=float, default=50.0, show_default=True,
              help="Shadowing decorrelation distance")
@click.option("--hysteresis-db", type=float, default=4.0, show_default=True, help="Handoff margin")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--suite", type=click.IntRange(min=0), default=0, show_default=True,
              help="Write this many traces per mode into the --out directory")
@click.option("--out", default="-", show_default=True,
              help="Trace CSV, or the output directory with --suite")
@jobs_option
def simulate(mode, duration_s, extent_m, spacing_m, jitter_frac, p0_dbm, alpha, shadow_sigma,
             decorrelation_m, hysteresis_db, seed, suite, out, jobs) -> None:
    """Generate synthetic labeled traces."""
    params = SynthParams(
        duration_s=duration_s,
        extent_m=extent_m,
        spacing_m=spacing_m,
        jitter_frac=jitter_frac,
        path_loss=PathLossParams(p0_dbm=p0_dbm, alpha=alpha, shadow_sigma_db=shadow_sigma,
                                 decorrelation_m=decorrelation_m),
        hysteresis_db=hysteresis_db,
        seed=seed,
        suite=max(suite, 1),
    )

    if suite:
        if out == "-":
            raise click.UsageError("--suite needs --out DIRECTORY")
        modes = [Mode.parse(mode)] if mode else list(MODE_ORDER)
        directory = Path(out)
        directory.mkdir(parents=True, exist_ok=True)
        for name, trace in generate_suite(params, modes, jobs):
            save_trace(trace, directory / f"{name}.csv")
        click.echo(f"📡 {len(modes) * suite} trace(s) written to {directory}", err=True)
        return

    if not mode:
        raise click.UsageError("--mode is required unless --suite is given")
    trace = simulate_mode(Mode.parse(mode), params)
    _write_trace(trace, out)
    click.echo(f"📡 {mode}: {len(trace)} samples, {count_handoffs(trace)} handoffs", err=True)


def _write_trace(trace: Trace, out: str) -> None:
    if out == "-":
        write_trace(trace, click.get_binary_stream("stdout"))
    else:
        save_trace(trace, out)


@main.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("instances", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("--out", type=click.File("wb"), default="-", show_default=True, help="Report destination")
def report(model, instances, fmt, out) -> None:
    """Evaluate a saved model on labeled instances."""
    tree = load_model_file(model)
    matrix = evaluate_model(tree, _labeled(read_instances(instances)))
    out.write(render_report(metrics(matrix), fmt, title=f"Held-out report: {os.path.basename(model)}"))


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit code

    0 on success, 1 on usage errors, 2 on data or validation errors.
    """
    try:
        code = main.main(args=list(argv) if argv is not None else None, prog_name="cellmode",
                         standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(run())
