"""Command-line front end for the staged pipeline.

Every subcommand operates on a run directory that pins its own resolved
configuration; flags given on the first invocation are remembered, and
conflicting flags on later invocations are rejected rather than silently
changing a half-finished run.

Exit codes: 0 success, 1 usage or config problem, 2 missing upstream stage,
3 backend failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Sequence

import click

from .config import (
    BACKENDS,
    COMBINE_MODES,
    DECIDE_BY,
    EMBEDDERS,
    INFER_SCOPES,
    PROMPT_STYLES,
    resolve_config,
)
from .errors import (
    BackendError,
    ClauseFinderError,
    ConfigError,
    DependencyError,
)
from .pipeline import MANIFEST_JSON, REPORT_TXT, Pipeline, combined_report


@click.group()
@click.version_option(package_name="clausefinder")
@click.option("--config", "config_file", type=click.Path(), default=None,
              help="JSON config file.")
@click.option("--run-dir", type=click.Path(), default=None,
              help="Directory holding this run's artifacts and manifest.")
@click.option("--force", is_flag=True, help="Re-run stages that are already done.")
@click.option("--chunk-size", type=int, default=None)
@click.option("--augment/--no-augment", default=None)
@click.option("--prompt-style", type=click.Choice(PROMPT_STYLES), default=None)
@click.option("--techniques", default=None,
              help="Comma-separated technique kinds to decorate the prompt with.")
@click.option("--paraphrase-pool", type=click.Path(), default=None,
              help="Pattern-with-slots JSON file of base template paraphrases.")
@click.option("--temperature", type=float, default=None)
@click.option("--model", default=None)
@click.option("--backend", type=click.Choice(BACKENDS), default=None)
@click.option("--embedder", type=click.Choice(EMBEDDERS), default=None)
@click.option("--embed-model", default=None)
@click.option("--base-url", default=None)
@click.option("--timeout", type=float, default=None)
@click.option("--retries", type=int, default=None)
@click.option("--max-in-flight", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--min-points", type=int, default=None)
@click.option("--combine", type=click.Choice(COMBINE_MODES), default=None)
@click.option("--decide-by", type=click.Choice(DECIDE_BY), default=None)
@click.option("--infer-scope", type=click.Choice(INFER_SCOPES), default=None)
@click.option("--max-test-doc-words", type=int, default=None)
@click.pass_context
def cli(ctx, config_file, run_dir, force, techniques, paraphrase_pool, **overrides):
    """Clause-level question answering over long contracts."""
    if techniques is not None:
        overrides["techniques"] = tuple(
            part.strip() for part in techniques.split(",") if part.strip()
        )
    if paraphrase_pool is not None:
        overrides["paraphrase_pool"] = str(Path(paraphrase_pool).resolve())
    ctx.obj = {
        "config_file": config_file,
        "run_dir": run_dir,
        "force": force,
        "overrides": overrides,
    }


def _pipeline(ctx) -> Pipeline:
    obj = ctx.obj
    if obj["run_dir"] is None:
        raise click.UsageError("--run-dir is required for this command")
    run_dir = Path(obj["run_dir"])
    base = None
    manifest_path = run_dir / MANIFEST_JSON
    if manifest_path.exists():
        base = json.loads(manifest_path.read_text(encoding="utf-8"))["config"]
    config = resolve_config(
        flags=obj["overrides"],
        env=os.environ,
        file=obj["config_file"],
        base=base,
    )
    return Pipeline(run_dir, config)


def _run_stages(ctx, *stages: str) -> None:
    with _pipeline(ctx) as pipeline:
        for stage in stages:
            pipeline.run_stage(stage, force=ctx.obj["force"])


@cli.command()
@click.argument("corpus_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def ingest(ctx, corpus_file):
    """Load and validate the corpus file into the run directory."""
    ctx.obj["overrides"]["corpus"] = str(Path(corpus_file).resolve())
    _run_stages(ctx, "ingest")


@cli.command()
@click.pass_context
def split(ctx):
    """Partition documents into test and verification sets."""
    _run_stages(ctx, "split")


@cli.command()
@click.pass_context
def chunk(ctx):
    """Cut documents into word chunks (plus bridging chunks when enabled)."""
    _run_stages(ctx, "chunk")


@cli.command()
@click.pass_context
def prompts(ctx):
    """Build (and optionally rank) the prompt template for this run."""
    _run_stages(ctx, "prompts")


@cli.command()
@click.pass_context
def infer(ctx):
    """Ask the backend for an answer per (document, category, chunk)."""
    _run_stages(ctx, "infer")


@cli.command()
@click.pass_context
def dbl(ctx):
    """Build per-category answer-location distributions from the test split."""
    _run_stages(ctx, "dbl")


@cli.command()
@click.pass_context
def select(ctx):
    """Pick one answer per (document, category) from the chunk candidates."""
    _run_stages(ctx, "select")


@cli.command()
@click.pass_context
def judge(ctx):
    """Score selected answers against gold and label their outcomes."""
    _run_stages(ctx, "judge")


@cli.command()
@click.option("--combine", "combine_dirs", type=click.Path(), multiple=True,
              help="Merge judged outcomes from these run directories instead "
                   "of reporting on --run-dir alone.")
@click.pass_context
def report(ctx, combine_dirs):
    """Render the factorial comparison table."""
    if combine_dirs:
        text, payload = combined_report(list(combine_dirs))
        click.echo(text)
        if ctx.obj["run_dir"] is not None:
            out_dir = Path(ctx.obj["run_dir"])
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "combined_report.json").write_text(
                json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            (out_dir / "combined_report.txt").write_text(text + "\n", encoding="utf-8")
        return
    with _pipeline(ctx) as pipeline:
        pipeline.run_stage("report", force=ctx.obj["force"])
        click.echo((pipeline.run_dir / REPORT_TXT).read_text(encoding="utf-8").rstrip())


@cli.command(name="run-all")
@click.argument("corpus_file", type=click.Path(exists=True, dir_okay=False), required=False)
@click.pass_context
def run_all(ctx, corpus_file):
    """Run every stage in order: ingest through report."""
    if corpus_file is not None:
        ctx.obj["overrides"]["corpus"] = str(Path(corpus_file).resolve())
    with _pipeline(ctx) as pipeline:
        pipeline.run_all(force=ctx.obj["force"])
        click.echo((pipeline.run_dir / REPORT_TXT).read_text(encoding="utf-8").rstrip())


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point mapping error classes onto the documented exit codes."""
    try:
        cli.main(args=argv, prog_name="clausefinder", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DependencyError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except BackendError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except (ConfigError, ClauseFinderError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
