#!/usr/bin/env python3
"""
MPC Meta-Tuner
==============

Event-triggered, adaptive-horizon MPC with an LQR fallback, tuned by PPO on
an inverted pendulum.

Usage:
    python main.py sweep                      # Baseline grid of horizons x recompute periods
    python main.py train --mode joint         # Train the meta-policy (joint|recompute|horizon|lqr)
    python main.py train --resume             # Continue every seed from its latest checkpoint
    python main.py eval CHECKPOINT            # Evaluate a checkpoint on the test set
    python main.py ablate CHECKPOINT          # Alter one aspect of a trained policy at a time
    python main.py plots                      # Emit plot data from existing outputs

Common flags: --config PATH, --seed INT, --mode MODE, --out DIR, --steps INT, --workers INT
Exit codes: 0 ok, 2 config error, 3 solver failure, 4 numeric failure
"""

import argparse
import logging
import sys
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

console = Console()

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from config import ExperimentConfig, Settings, get_settings, load_experiment_config  # noqa: E402
from src.errors import ConfigError, MetaMpcError  # noqa: E402
from src.policy.params import PolicyMode  # noqa: E402

logger = logging.getLogger("metampc")


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
    )


def load_context(args: argparse.Namespace) -> tuple[Settings, ExperimentConfig]:
    """Settings and experiment config with CLI overrides applied."""
    settings = get_settings()
    updates = {}
    if args.out is not None:
        updates["output_dir"] = Path(args.out).resolve()
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        updates["workers"] = args.workers
    if updates:
        settings = settings.model_copy(update=updates)
    config_path = Path(args.config) if args.config else settings.resolve(settings.config_path)
    config = load_experiment_config(config_path)
    if args.steps is not None:
        config = config.with_overrides(ppo={"total_steps": args.steps})
    settings.ensure_directories()
    return settings, config


def model_seeds(args: argparse.Namespace, config: ExperimentConfig) -> tuple[int, ...]:
    return (args.seed,) if args.seed is not None else tuple(config.experiment.seeds)


def run_sweep(args: argparse.Namespace) -> None:
    """Run the baseline sweep over the configured grid."""
    console.print(Panel("[bold]Baseline Sweep[/bold]", subtitle="fixed horizon x periodic recompute"))
    settings, config = load_context(args)

    from src.harness import baseline_sweep, config_testset

    testset = config_testset(config)
    testset.save(settings.sweep_dir / "testset.json")
    result = baseline_sweep(config, testset, workers=settings.workers)
    result.save(settings.sweep_dir)

    table = Table(title="Mean episode cost (rows: recompute every k steps)")
    table.add_column("k", justify="right")
    surface = result.surface()
    for horizon in surface.columns:
        table.add_column(f"N={horizon}", justify="right")
    for period, row in surface.iterrows():
        table.add_row(str(period), *(f"{v:.1f}" for v in row.to_numpy()))
    console.print(table)

    best = result.argmin
    if best is None:
        console.print("[red]Every cell failed[/red]")
    else:
        console.print(f"\n[green]Minimum[/green] at k={best['period']}, N={best['horizon']}: {best['cost']:.2f}")
    console.print(f"[dim]Grid written to {settings.sweep_dir}[/dim]")


def run_train(args: argparse.Namespace) -> None:
    """Train the meta-policy for each model seed."""
    mode = PolicyMode(args.mode)
    console.print(Panel(f"[bold]Training ({mode.value})[/bold]"))
    settings, config = load_context(args)

    from src.harness import config_testset, train

    testset = config_testset(config)
    tables = train(config, mode, model_seeds(args, config), settings.training_dir, testset,
                   threads=settings.workers, resume=args.resume)

    table = Table(title="Final update per seed")
    for column in ("seed", "env steps", "train cost", "best eval cost", "recompute", "mean N"):
        table.add_column(column, justify="right")
    for seed, metrics in tables.items():
        if metrics.empty:
            continue
        last = metrics.iloc[-1]
        table.add_row(str(seed), str(int(last["env_steps"])), f"{last['train_cost']:.2f}",
                      f"{metrics['eval_cost'].min():.2f}", f"{last['recompute_fraction']:.2f}",
                      f"{last['mean_horizon']:.1f}")
    console.print(table)
    console.print(f"[dim]Checkpoints and metrics in {settings.training_dir}[/dim]")


def baseline_comparison(settings: Settings, config: ExperimentConfig, report) -> dict | None:
    """Relative change of cost terms versus the every-step reference cell, if a matching sweep exists."""
    from src.harness import load_sweep

    if not (settings.sweep_dir / "baseline_grid.csv").exists():
        return None
    sweep = load_sweep(settings.sweep_dir)
    if sweep.stamp.get("testset_hash") != report.stamp.get("testset_hash"):
        logger.warning("baseline sweep was run on a different test set; skipping comparison")
        return None
    try:
        cell = sweep.cell(1, config.sweep.reference_horizon)
    except KeyError:
        return None
    terms = report.term_summary()
    processing = terms["ocp_time"]["mean"] + terms["overhead_time"]["mean"]
    baseline_processing = float(cell["ocp_time"] + cell["overhead_time"])
    comparison = {
        term: 100.0 * (terms[term]["mean"] - float(cell[term])) / abs(float(cell[term]))
        for term in ("cost", "control_cost", "computation_cost")
    }
    if baseline_processing > 0.0:
        comparison["processing_time"] = 100.0 * (processing - baseline_processing) / baseline_processing
    return comparison


def run_eval(args: argparse.Namespace) -> None:
    """Evaluate a checkpoint in exploitation mode."""
    console.print(Panel("[bold]Evaluation[/bold]", subtitle=str(args.checkpoint)))
    settings, config = load_context(args)

    from src.harness import config_testset, evaluate_checkpoint

    testset = config_testset(config)
    checkpoint = Path(args.checkpoint)
    name = f"evaluation_{checkpoint.parent.name}_{checkpoint.stem}"
    report = evaluate_checkpoint(config, checkpoint, testset, workers=settings.workers,
                                 artifacts_dir=settings.reports_dir / name)
    comparison = baseline_comparison(settings, config, report)
    if comparison is not None:
        report.stamp["baseline_change_pct"] = comparison
    path = report.save(settings.reports_dir, name=name)

    table = Table(title=f"Test set ({len(testset)} episodes x {len(config.experiment.eval_seeds)} seeds)")
    table.add_column("Term")
    table.add_column("Mean", justify="right")
    table.add_column("Std over seeds", justify="right")
    table.add_column("vs baseline", justify="right")
    for term, stats in report.term_summary().items():
        delta = "" if comparison is None or term not in comparison else f"{comparison[term]:+.1f}%"
        table.add_row(term, f"{stats['mean']:.3f}", f"{stats['std']:.3f}", delta)
    console.print(table)
    console.print(f"Recompute fraction: [bold]{report.recompute_fraction:.3f}[/bold]   "
                  f"Violations: [bold]{report.violations}[/bold]")
    console.print(f"[dim]Report written to {path}[/dim]")


def run_ablate(args: argparse.Namespace) -> None:
    """Run the three single-change ablations of a trained policy."""
    console.print(Panel("[bold]Ablation[/bold]", subtitle=str(args.checkpoint)))
    settings, config = load_context(args)

    from src.harness import ablate, config_testset

    testset = config_testset(config)
    report = ablate(config, Path(args.checkpoint), testset, workers=settings.workers)
    path = report.save(settings.reports_dir)

    table = Table(title="Cost change versus the unmodified policy")
    table.add_column("Scenario")
    table.add_column("Cost", justify="right")
    table.add_column("Change", justify="right")
    table.add_column("Recompute", justify="right")
    for row in report.frame().itertuples():
        table.add_row(row.scenario, f"{row.cost:.3f}", f"{row.change_pct:+.2f}%", f"{row.recompute_fraction:.2f}")
    console.print(table)
    console.print(f"[dim]Test set {testset.hash[:12]}, report written to {path}[/dim]")


def run_plots(args: argparse.Namespace) -> None:
    """Emit plot data from whatever outputs exist."""
    console.print(Panel("[bold]Plot Data[/bold]"))
    settings, _ = load_context(args)

    from src.harness import emit_plots

    written = emit_plots(settings.sweep_dir, settings.training_dir, settings.reports_dir, settings.plots_dir)
    for path in written:
        console.print(f"  [green]✓[/green] {path}")
    if not written:
        console.print("[yellow]No sweep, training or evaluation outputs found[/yellow]")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config (YAML)")
    common.add_argument("--seed", type=int, help="Single model seed instead of the configured list")
    common.add_argument("--mode", default=PolicyMode.JOINT.value, choices=[m.value for m in PolicyMode])
    common.add_argument("--out", help="Output root directory")
    common.add_argument("--steps", type=int, help="Override ppo.total_steps")
    common.add_argument("--workers", type=int, help="Worker processes (threads for rollouts)")

    parser = argparse.ArgumentParser(description="Event-triggered adaptive-horizon MPC meta-tuner")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="Baseline grid sweep").set_defaults(func=run_sweep)
    train_cmd = sub.add_parser("train", parents=[common], help="Train the meta-policy")
    train_cmd.add_argument("--resume", action="store_true", help="Continue each seed from its latest.npz")
    train_cmd.set_defaults(func=run_train)
    for name, func, text in (("eval", run_eval, "Evaluate a checkpoint"), ("ablate", run_ablate, "Ablate a checkpoint")):
        command = sub.add_parser(name, parents=[common], help=text)
        command.add_argument("checkpoint", help="Checkpoint archive (.npz)")
        command.set_defaults(func=func)
    sub.add_parser("plots", parents=[common], help="Emit plot data").set_defaults(func=run_plots)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(get_settings().log_level)
    try:
        args.func(args)
    except MetaMpcError as exc:
        console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
