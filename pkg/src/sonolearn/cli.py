"""Command-line entry point: generate sound libraries, run seeded
simulation cohorts, analyze results, serve the session API, replay logs."""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from . import analysis, eventlog, service, simulate, sound
from .bandit import Hyperparameters, session_summary
from .sessions import PHASE_DONE, StudySession


@click.group()
@click.version_option(package_name="sonolearn")
def main() -> None:
    """Learn state-to-sound mappings from per-trial listener feedback."""


@main.command("gen-sounds")
@click.option("--base", "base_path", default="builtin", show_default=True,
              help="Path to a mono 16-bit WAV base sample, or 'builtin'.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path),
              help="Output directory for the WAV files and manifest.")
@click.option("--grid", "grid_counts", default="3,3,3", show_default=True,
              help="Level counts per parameter (bpm,bpl,pitch), prefixes of the defaults.")
@click.option("--bpm", default=None, help="Comma-separated tempo values, e.g. 100,140,180.")
@click.option("--bpl", default=None, help="Comma-separated beats-per-loop values, e.g. 1,2,4.")
@click.option("--pitch", default=None, help="Comma-separated pitch sweep semitones, e.g. -4,0,4.")
@click.option("--sample-rate", default=44100, show_default=True)
@click.option("--library-id", default="default", show_default=True)
def cmd_gen_sounds(base_path, out_dir, grid_counts, bpm, bpl, pitch, sample_rate, library_id):
    """Render one audio loop per grid action plus a manifest."""
    try:
        if bpm or bpl or pitch:
            mapping = sound.LevelMapping(
                bpm_levels=tuple(float(v) for v in (bpm or "100,140,180").split(",")),
                bpl_levels=tuple(int(v) for v in (bpl or "1,2,4").split(",")),
                pitch_levels=tuple(float(v) for v in (pitch or "-4,0,4").split(",")),
            )
        else:
            counts = [int(v) for v in grid_counts.split(",")]
            mapping = sound.mapping_from_counts(counts)
        if base_path == "builtin":
            base = sound.default_base_sample(sample_rate)
        else:
            base = sound.read_wav(base_path)
        config = sound.RenderConfig(sample_rate=sample_rate)
        library = sound.generate_library(
            base, mapping.grid(), mapping, config, out_dir, library_id=library_id
        )
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    manifest = Path(out_dir) / sound.MANIFEST_NAME
    click.echo(f"rendered {len(library.files)} files, manifest at {manifest}")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON simulation config; omit to use defaults.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--cohort", type=int, default=None, help="Override the cohort size.")
@click.option("--error-rate", type=float, default=None, help="Override the responder error rate.")
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_simulate(config_path, out_dir, seed, cohort, error_rate, workers):
    """Run a seeded cohort of simulated users through both init modes."""
    try:
        raw = {}
        if config_path is not None:
            raw = json.loads(Path(config_path).read_text())
        if seed is not None:
            raw["seed"] = seed
        if cohort is not None:
            raw["cohort"] = cohort
        if error_rate is not None:
            raw["error_rate"] = error_rate
        config = simulate.SimulationConfig.from_dict(raw)
        result = simulate.run_cohort(config, out_dir, workers=workers)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    summary = analysis.steps_summary(result)
    click.echo(json.dumps(summary, indent=2))
    click.echo(f"wrote {len(result.runs)} runs to {out_dir}")


@main.command("analyze")
@click.argument("cohort_dir", type=click.Path(path_type=Path))
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory (defaults to the cohort directory).")
def cmd_analyze(cohort_dir, out_dir):
    """Write step summaries, rank statistics, heatmaps, and the trials CSV."""
    try:
        paths = analysis.analyze_cohort(cohort_dir, out_dir)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--data-dir", type=click.Path(path_type=Path), default=None)
@click.option("--library-dir", type=click.Path(path_type=Path), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def cmd_serve(config_path, data_dir, library_dir, host, port):
    """Serve the session API until terminated."""
    try:
        overrides = {
            "data_dir": data_dir,
            "library_dir": library_dir,
            "host": host,
            "port": port,
        }
        values = {}
        if config_path is not None:
            values.update(json.loads(Path(config_path).read_text()))
        values.update({k: v for k, v in overrides.items() if v is not None})
        missing = [k for k in ("data_dir", "library_dir") if k not in values]
        if missing:
            raise ValueError(f"service config missing: {missing}")
        config = service.ServiceConfig(
            data_dir=Path(values["data_dir"]),
            library_dir=Path(values["library_dir"]),
            host=str(values.get("host", "127.0.0.1")),
            port=int(values.get("port", 8765)),
        )
        # Surface port conflicts as a clean nonzero exit before uvicorn starts.
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            probe.bind((config.host, config.port))
        except OSError as exc:
            raise ValueError(f"cannot bind {config.host}:{config.port}: {exc}") from exc
        finally:
            probe.close()
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"serving on http://{config.host}:{config.port}")
    service.serve(config)


@main.command("replay")
@click.argument("log_path", type=click.Path(path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Write the reconstructed report to a file as well.")
def cmd_replay(log_path, out_path):
    """Rebuild a session from its JSONL log and print its report."""
    try:
        header, _, _ = eventlog.read_log(log_path)
        kind = header.get("kind")
        if kind == "learner":
            session, truncated = eventlog.replay_log(log_path)
            report = session_summary(session)
        elif kind == "study":
            study, truncated = StudySession.load(
                log_path, _study_library_resolver(log_path)
            )
            if study.phase == PHASE_DONE:
                report = study.report()
            else:
                report = study.status_view()
        else:
            raise eventlog.LogFormatError(f"unknown log kind {kind!r}")
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    if truncated:
        report = {"truncated": True, "notice": "log ended mid-record; replayed the complete prefix", **report}
    text = json.dumps(report, indent=2)
    click.echo(text)
    if out_path is not None:
        Path(out_path).write_text(text + "\n")


def _study_library_resolver(log_path: Path):
    """Find the log's sound library under SONOLEARN_LIBRARY_DIR, next to the
    session data directory, or by treating the name as a path."""
    import os

    def resolve(name: str):
        candidates = []
        env_dir = os.environ.get("SONOLEARN_LIBRARY_DIR")
        if env_dir:
            candidates.append(Path(env_dir) / name)
        candidates.append(Path(log_path).parent.parent / "libraries" / name)
        candidates.append(Path(name))
        for candidate in candidates:
            if (candidate / sound.MANIFEST_NAME).is_file():
                return sound.load_library(candidate)
        raise FileNotFoundError(
            f"cannot locate library {name!r}; set SONOLEARN_LIBRARY_DIR"
        )

    return resolve


@main.command("print-config")
def cmd_print_config():
    """Print every built-in default as JSON."""
    defaults = {
        "hyperparameters": Hyperparameters().to_dict(),
        "level_mapping": sound.LevelMapping().to_dict(),
        "render": sound.RenderConfig().to_dict(),
        "simulation": simulate.SimulationConfig().to_dict(),
        "service": {"data_dir": "<required>", "library_dir": "<required>",
                    "host": "127.0.0.1", "port": 8765},
    }
    click.echo(json.dumps(defaults, indent=2))


if __name__ == "__main__":
    sys.exit(main())
