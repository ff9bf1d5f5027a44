"""Command-line entry point.

One executable, ``kr``, with a subcommand per pipeline depth plus a session
server.  Every stage command loads a JSON config, applies command-line
overrides, runs the pipeline to its depth, and writes artifacts plus a
content-hash manifest into the output directory.

Exit codes: 0 on success, 2 for invalid configuration or arguments, 3 for
failures during an otherwise valid run.  When a run fails and an output
directory is known, a structured ``error.json`` describing the failure is
written there.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .config import load_config
from .errors import ConfigError, KrouletteError
from .experiment import run_experiment

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _error_payload(exc: Exception) -> dict:
    payload = {"code": type(exc).__name__, "message": str(exc)}
    for attr in ("component", "time", "sample_index"):
        if hasattr(exc, attr):
            payload[attr] = getattr(exc, attr)
    return payload


def _write_error_report(out_dir: Path | None, exc: Exception) -> None:
    if out_dir is None:
        return
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "error.json", "w", encoding="utf-8") as fh:
            json.dump(_error_payload(exc), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError:
        pass  # reporting must never mask the original failure


def _load_with_overrides(config_path: str, seed: int | None, out: str | None):
    config = load_config(config_path)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out_dir"] = out
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _run_stage(config_path: str, seed: int | None, out: str | None,
               reveal_hidden: bool, last_stage: str) -> None:
    out_dir = Path(out) if out is not None else None
    try:
        config = _load_with_overrides(config_path, seed, out)
        if config.out_dir is None:
            raise ConfigError("no output directory: pass --out or set out_dir in the config")
        out_dir = Path(config.out_dir)
        result = run_experiment(config, reveal_hidden=reveal_hidden, last_stage=last_stage)
    except ConfigError as exc:
        _write_error_report(out_dir, exc)
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except KrouletteError as exc:
        _write_error_report(out_dir, exc)
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    except Exception as exc:  # noqa: BLE001 - boundary: map anything to exit 3
        _write_error_report(out_dir, exc)
        click.echo(f"unexpected error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"wrote {len(result.files)} artifacts to {result.out_dir}")
    if result.manifest_hash:
        click.echo(f"manifest hash {result.manifest_hash}")


def _stage_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=False, dir_okay=False),
                      help="JSON scenario config.")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None,
                      help="Override the config's seed.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help="Override the config's output directory.")(fn)
    fn = click.option("--reveal-hidden", is_flag=True, default=False,
                      help="Also export the hidden feedback ground truth.")(fn)
    return fn


@click.group()
def kr() -> None:
    """Deterministic roulette-game simulator and analysis pipeline."""


def _make_stage_command(name: str, depth: str, doc: str):
    @kr.command(name=name, help=doc)
    @_stage_options
    def _cmd(config_path: str, seed: int | None, out: str | None, reveal_hidden: bool,
             _depth: str = depth) -> None:
        _run_stage(config_path, seed, out, reveal_hidden, _depth)

    return _cmd


_make_stage_command(
    "simulate", "simulate",
    "Play the match and export the trajectory and recovered feedback trace.")
_make_stage_command(
    "verbalize", "verbalize",
    "Simulate, then export the word sequence and per-set match log.")
_make_stage_command(
    "resonance", "resonance",
    "Verbalize, then run the randomness suite and the resonance detector.")
_make_stage_command(
    "bet", "bet",
    "Full pipeline through the predictive-betting backtest.")
_make_stage_command(
    "run", "bet",
    "Run the complete pipeline and write every artifact plus the manifest.")


@kr.command(name="serve")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=False, dir_okay=False),
              help="Default session config served when a request omits one.")
@click.option("--seed", type=click.IntRange(min=0), default=None,
              help="Override the default config's seed.")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", type=int, default=8000, show_default=True, help="Bind port.")
def serve(config_path: str | None, seed: int | None, host: str, port: int) -> None:
    """Start the turn-based session service over HTTP."""
    try:
        default_config = None
        if config_path is not None:
            default_config = _load_with_overrides(config_path, seed, None)
        import uvicorn

        from .service import create_app

        app = create_app(default_config=default_config)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except KrouletteError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main() -> None:
    kr(prog_name="kr")


if __name__ == "__main__":
    main()
