"""Command-line surface: run/test experiments, predict, introspect,
download data and serve models.

Exit codes are fixed for scripting: 0 success, 2 configuration or usage
errors, 1 runtime errors.  Every failure prints a single line to stderr
prefixed ``error:``.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import corpus, metrics
from .components import DatasetSpec, TrainConfig, builtin_registry
from .engine import train_experiment
from .errors import ConfigError, SeqlabError, UnknownTask
from .graphconfig import ComponentGraph, instantiate, parse_experiment_text, topo_order
from .infer import (
    ClassifiedText,
    LoadedModel,
    TaggedText,
    evaluate_on_dataset,
    format_prediction,
    load_model,
    predict_for_file,
    predict_for_text,
)


def data_dir() -> Path:
    return Path(os.environ.get("SEQLAB_DATA_DIR", "~/.seqlab")).expanduser()


def load_dataset_and_engine(config_text: str) -> tuple[DatasetSpec, TrainConfig]:
    """Instantiate just the dataset and engine sections of an experiment."""
    graph = parse_experiment_text(
        config_text, required_sections=("dataset", "model", "engine")
    )
    keep = {
        nid for nid in graph.nodes if nid.split(".")[0].split("[")[0] in ("dataset", "engine")
    }
    sub = ComponentGraph(
        nodes={nid: graph.nodes[nid] for nid in keep},
        edges=[(u, v) for u, v in graph.edges if u in keep and v in keep],
    )
    built = instantiate(topo_order(sub), sub, builtin_registry(), None)
    return built["dataset"], built["engine"]


@click.group()
def cli():
    """Sequence labeling and text classification for scholarly documents."""


@cli.command()
@click.argument("experiment", type=click.Path(exists=True, dir_okay=False))
def run(experiment):
    """Train the experiment and save the best checkpoint."""
    config_text = Path(experiment).read_text(encoding="utf-8")
    _, cfg = load_dataset_and_engine(config_text)
    if not cfg.checkpoint_dir:
        raise ConfigError("engine.checkpoint_dir is required to run an experiment")
    result = train_experiment(
        config_text, progress=lambda line: click.echo(line, err=True)
    )
    dataset, _ = load_dataset_and_engine(config_text)
    model = LoadedModel.from_checkpoint(result.checkpoint)
    dev_result = evaluate_on_dataset(model, dataset.load("dev"))
    click.echo(f"best epoch: {result.best_epoch}")
    click.echo(
        f"dev {result.checkpoint.metric_name}: {result.checkpoint.best_metric:.4f}"
    )
    click.echo(metrics.format_report(dev_result.report, percent=True))
    click.echo(f"checkpoint: {result.checkpoint_dir}")


@cli.command()
@click.argument("experiment", type=click.Path(exists=True, dir_okay=False))
def test(experiment):
    """Evaluate the experiment's best checkpoint on its test split."""
    config_text = Path(experiment).read_text(encoding="utf-8")
    dataset, cfg = load_dataset_and_engine(config_text)
    if not cfg.checkpoint_dir or not Path(cfg.checkpoint_dir).is_dir():
        raise SeqlabError(
            f"no checkpoint at {cfg.checkpoint_dir or '<unset>'!s}; run before test"
        )
    model = load_model(cfg.checkpoint_dir)
    result = evaluate_on_dataset(model, dataset.load("test"))
    click.echo(metrics.format_report(result.report, percent=True))


def _echo_prediction(result: TaggedText | ClassifiedText) -> None:
    if isinstance(result, TaggedText):
        click.echo(" ".join(f"{t}|{l}" for t, l in zip(result.tokens, result.labels)))
    else:
        click.echo(f"label: {result.label}")
        click.echo(
            "scores: "
            + " ".join(f"{k}={result.scores[k]:.6f}" for k in sorted(result.scores))
        )


@cli.command()
@click.argument("checkpoint", type=click.Path(exists=True, file_okay=False))
@click.option("--text", default=None, help="Tag or classify one string.")
@click.option("--file", "file_", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Predict for every line of a file.")
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Write file predictions here instead of stdout.")
def predict(checkpoint, text, file_, out):
    """Predict with a trained checkpoint for ad hoc text or a file."""
    if (text is None) == (file_ is None):
        raise click.UsageError("provide exactly one of --text or --file")
    model = load_model(checkpoint)
    if text is not None:
        _echo_prediction(predict_for_text(model, text))
        return
    lines = [format_prediction(r) for r in predict_for_file(model, file_)]
    if out:
        Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"wrote {len(lines)} lines to {out}")
    else:
        for line in lines:
            click.echo(line)


_INTERACT_HELP = """commands:
  cm                  confusion matrix on the dev split
  prf                 per-class precision/recall/F1 table
  errors GOLD PRED    error instances where GOLD was predicted as PRED
  predict TEXT        tag or classify ad hoc input
  quit                leave the shell"""


@cli.command()
@click.argument("checkpoint", type=click.Path(exists=True, file_okay=False))
def interact(checkpoint):
    """Interactive introspection shell over a checkpoint's dev split."""
    model = load_model(checkpoint)
    dataset, _ = load_dataset_and_engine(model.checkpoint.config_text)
    dev = dataset.load("dev")
    result = evaluate_on_dataset(model, dev)
    click.echo(
        f"loaded {model.kind} with {len(model.label_set)} labels; "
        f"dev split: {len(dev)} sequences"
    )
    token_report = result.token_report or result.report
    prompt = sys.stdin.isatty()
    while True:
        if prompt:
            click.echo("> ", nl=False)
        line = sys.stdin.readline()
        if not line:
            break
        parts = line.strip().split()
        if not parts:
            continue
        command, args = parts[0], parts[1:]
        try:
            if command == "quit":
                break
            elif command == "cm":
                click.echo(metrics.format_confusion(token_report.confusion))
            elif command == "prf":
                click.echo(metrics.format_report(result.report, percent=True))
            elif command == "errors" and len(args) == 2:
                rows = result.query_errors(args[0], args[1])
                for err in rows:
                    click.echo(
                        f"seq {err.sequence_index} pos {err.position}: {err.token} "
                        f"gold={err.gold_label} pred={err.pred_label} | "
                        + " ".join(err.context)
                    )
                click.echo(f"{len(rows)} instances")
            elif command == "predict" and args:
                _echo_prediction(predict_for_text(model, line.strip()[len("predict "):]))
            else:
                click.echo(_INTERACT_HELP)
        except SeqlabError as exc:
            click.echo(f"error: {exc}")


@cli.group()
def download():
    """Download registered datasets."""


@download.command("data")
@click.option("--task", required=True, help="Registered task name.")
@click.option("--registry", "registry_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Task registry file (default: $SEQLAB_DATA_DIR/registry.toml).")
@click.option("--dest", default=None, type=click.Path(file_okay=False),
              help="Destination directory (default: $SEQLAB_DATA_DIR/data).")
def download_data(task, registry_path, dest):
    """Fetch a registered dataset and verify its checksum."""
    if registry_path is None:
        registry_path = data_dir() / "registry.toml"
        if not registry_path.exists():
            raise click.UsageError(
                f"no registry at {registry_path}; pass --registry"
            )
    registry = corpus.TaskRegistry.from_file(registry_path)
    dest = Path(dest) if dest else data_dir() / "data"
    path = corpus.download_task(task, registry, dest)
    click.echo(str(path))


def _parse_model_args(pairs: tuple[str, ...]) -> dict[str, str]:
    models = {}
    for pair in pairs:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise click.UsageError(f"--model expects name=checkpoint, got {pair!r}")
        models[name] = path
    if not models:
        raise click.UsageError("at least one --model name=checkpoint is required")
    return models


@cli.command()
@click.option("--model", "models", multiple=True,
              help="name=checkpoint pair; repeatable.")
@click.option("--port", default=8000, help="TCP port to bind.")
@click.option("--host", default="127.0.0.1", help="Interface to bind.")
@click.option("--allow-origin", default="*", help="CORS allow-origin header.")
@click.option("--demo-dir", default=None, type=click.Path(file_okay=False),
              help="Static web demo directory served at /demo.")
def serve(models, port, host, allow_origin, demo_dir):
    """Serve loaded models over the HTTP API."""
    if not 1 <= port <= 65535:
        raise click.UsageError(f"port {port} out of range")
    from .service import create_app

    app = create_app(_parse_model_args(models), allow_origin=allow_origin,
                     demo_dir=demo_dir)
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    """Entry point with centralized error formatting and exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("error: aborted", err=True)
        return 1
    except UnknownTask as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except SeqlabError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
