"""Command-line entry points for exporting and verifying bundles."""

from __future__ import annotations

import functools
import sys

import click

from .export import export_checkpoint, verify_roundtrip
from .rules import ExporterError, load_rules


def _errors_to_exit(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ExporterError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Turn framework checkpoints into raw-float32 checkpoint bundles."""


@main.command("export")
@click.option("--checkpoint", required=True, type=click.Path(exists=True), help="Source checkpoint file.")
@click.option("--out", required=True, type=click.Path(), help="Bundle directory to create.")
@click.option("--seed", required=True, type=int, help="Training seed of the run.")
@click.option("--step", required=True, type=int, help="Checkpoint step index.")
@click.option("--eval-acc", default=None, type=float, help="Evaluation accuracy at this step.")
@click.option("--rules", "rules_path", default=None, type=click.Path(exists=True), help="rules.json overrides.")
@_errors_to_exit
def cmd_export(checkpoint, out, seed, step, eval_acc, rules_path):
    """Write one checkpoint as a bundle."""
    rules = load_rules(rules_path) if rules_path else None
    manifest = export_checkpoint(checkpoint, out, seed=seed, step=step, eval_accuracy=eval_acc, rules=rules)
    kinds = [t["kind"] for t in manifest["tensors"]]
    click.echo(
        f"wrote {out}: {kinds.count('weight')} weight, {kinds.count('bias')} bias, "
        f"{kinds.count('excluded')} excluded"
    )


@main.command("verify")
@click.option("--checkpoint", required=True, type=click.Path(exists=True), help="Source checkpoint file.")
@click.option("--bundle", required=True, type=click.Path(exists=True), help="Bundle directory to check.")
@click.option("--rules", "rules_path", default=None, type=click.Path(exists=True), help="rules.json overrides.")
@_errors_to_exit
def cmd_verify(checkpoint, bundle, rules_path):
    """Confirm bundle tensors match the float32-cast source exactly."""
    rules = load_rules(rules_path) if rules_path else None
    report = verify_roundtrip(checkpoint, bundle, rules)
    click.echo(
        f"{len(report.checks)} tensors exact after f32 cast; "
        f"max cast deviation {report.max_cast_deviation:.3e}"
    )


if __name__ == "__main__":
    main()
