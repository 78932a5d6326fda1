"""Experiment command line.

Each subcommand runs one experiment and writes ``<name>.csv`` plus
``<name>.meta.json`` into the output directory.  Failures exit nonzero
with a one-line JSON error object on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .harness import ExperimentConfig, run_experiment

_DEFAULTS = {
    "fig2a": {"n_qubits": 12},
    "fig2b": {"n_qubits": 6, "shadow_m": 480_000},
    "fig2c": {"n_qubits": 6},
    "fig3a": {"n_qubits": 12},
    "fig3b": {"n_qubits": 6, "shadow_m": 3_200_000},
    "fig3c": {"n_qubits": 6},
    "figS3": {"n_qubits": 2},
}


def _load_config(experiment: str, config_path: str | None, overrides: dict) -> ExperimentConfig:
    data = dict(_DEFAULTS.get(experiment, {}))
    data["experiment"] = experiment
    if config_path:
        file_data = json.loads(Path(config_path).read_text())
        data.update(file_data)
        if experiment != "custom":
            data["experiment"] = experiment
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    if data.get("experiment") in (None, "custom"):
        raise ValueError("custom runs need an 'experiment' field in the config file")
    return ExperimentConfig.from_json(data)


def _run(experiment: str, config_path, out_dir, overrides: dict) -> None:
    try:
        config = _load_config(experiment, config_path, overrides)
        record = run_experiment(config)
        csv_path, meta_path = record.write(out_dir)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        click.echo(json.dumps(payload), err=True)
        sys.exit(1)
    click.echo(f"wrote {csv_path} and {meta_path}")


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                      help="JSON config file; CLI flags override it.")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default=".")(fn)
    fn = click.option("--workers", type=int, default=None)(fn)
    fn = click.option("--shadow-budget", "shadow_m", type=int, default=None,
                      help="Total snapshot budget M for shadow experiments.")(fn)
    fn = click.option("--epsilon", type=float, default=None,
                      help="Planner accuracy target for the subsample size.")(fn)
    fn = click.option("--delta", type=float, default=None,
                      help="Planner failure probability for the subsample count.")(fn)
    fn = click.option("--n-qubits", type=int, default=None)(fn)
    return fn


def _make_command(name: str, doc: str):
    @_common_options
    def cmd(config_path, seed, out_dir, workers, shadow_m, epsilon, delta, n_qubits):
        overrides = {
            "seed": seed,
            "workers": workers,
            "shadow_m": shadow_m,
            "epsilon": epsilon,
            "delta": delta,
            "n_qubits": n_qubits,
        }
        _run(name, config_path, out_dir, overrides)

    cmd.__name__ = name
    cmd.__doc__ = doc
    return cmd


@click.group()
def main():
    """Sweeps, scaling studies, and detection-ratio experiments for the
    Krylov QFI bounds."""


for _name, _doc in [
    ("fig2a", "Exact-bound relative errors across the pseudo-pure sweep."),
    ("fig2b", "Shadow-estimated bound across the pseudo-pure sweep."),
    ("fig2c", "Shadow-budget scaling study for the pseudo-pure family."),
    ("fig3a", "Exact-bound relative errors across the bound-entangled grid."),
    ("fig3b", "Shadow-estimated bound across the bound-entangled grid."),
    ("fig3c", "Shadow-budget scaling study for the bound-entangled family."),
    ("figS3", "Detection-ratio study over random two-qubit states."),
    ("custom", "Run the experiment named in the --config file."),
]:
    main.command(name=_name)(_make_command(_name, _doc))


if __name__ == "__main__":
    main()
