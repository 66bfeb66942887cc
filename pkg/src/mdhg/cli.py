"""Command-line entry point: ``mdhg <subcommand> --config run.yaml``."""

import logging
import sys

import click

from .config import RunConfig
from .exceptions import MDHGError
from .export import POLARITY, diff_periods, read_layer, write_table
from .ingest import CATEGORIES
from .pipeline import Pipeline, write_artifacts

log = logging.getLogger("mdhg")


def _hour(value):
    if value in (None, "all"):
        return None
    h = int(value)
    if not 0 <= h <= 23:
        raise click.BadParameter("hour must be 0-23 or 'all'")
    return h


def _pipeline(ctx, config, period, strict, output):
    cfg = RunConfig.from_file(config)
    if strict:
        cfg.strict_paper = True
    if output:
        cfg.output_dir = output
    ctx.obj = cfg
    return Pipeline(cfg, [period] if period else None)


def common(f):
    f = click.option("--output", "-o", type=click.Path(), default=None, help="Override output_dir.")(f)
    f = click.option("--strict-paper", "strict", is_flag=True,
                     help="Zero out-of-range availability and use the rectangle rule for SR.")(f)
    f = click.option("--period", type=str, default=None, help="before|after (default: all configured).")(f)
    f = click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                     help="Run configuration (YAML).")(f)
    return f


def _emit(pipe, collect):
    arts = {}
    for p in pipe.period_names:
        arts.update(collect(p))
    manifest = write_artifacts(arts, pipe.config.output_dir)
    click.echo(f"wrote {len(arts)} artifacts; manifest {manifest}")


@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Transportation equity metrics from shared-mobility trip data."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@common
@click.option("--write-trips", is_flag=True, help="Also write the cleaned trip table.")
@click.pass_context
def ingest(ctx, config, period, strict, output, write_trips):
    """Parse and clean trip dumps; report row tallies."""
    pipe = _pipeline(ctx, config, period, strict, output)
    _emit(pipe, lambda p: pipe.ingest_artifacts(p, include_trips=write_trips))


@cli.command()
@common
@click.option("--hour", default="all", help="0-23 or all.")
@click.pass_context
def availability(ctx, config, period, strict, output, hour):
    """Station reconstruction, zone availability and performance rank layers."""
    pipe = _pipeline(ctx, config, period, strict, output)
    _emit(pipe, lambda p: pipe.availability_artifacts(p, _hour(hour)))


@cli.command()
@common
@click.option("--hour", default="all", help="0-23 or all.")
@click.option("--category", type=click.Choice(CATEGORIES), default=None)
@click.pass_context
def metrics(ctx, config, period, strict, output, hour, category):
    """Service disparity, access insufficiency and the integrated index."""
    pipe = _pipeline(ctx, config, period, strict, output)
    cats = (category,) if category else CATEGORIES
    _emit(pipe, lambda p: pipe.metric_artifacts(p, _hour(hour), cats))


@cli.command()
@common
@click.pass_context
def recovery(ctx, config, period, strict, output):
    """Recovery times per threshold and the SR integral."""
    pipe = _pipeline(ctx, config, period, strict, output)
    _emit(pipe, pipe.recovery_artifacts)


@cli.command()
@common
@click.pass_context
def overlay(ctx, config, period, strict, output):
    """Demographic combination overlays (75th-percentile masks)."""
    pipe = _pipeline(ctx, config, period, strict, output)
    arts = pipe.overlay_artifacts()
    manifest = write_artifacts(arts, pipe.config.output_dir)
    click.echo(f"wrote {len(arts)} artifacts; manifest {manifest}")


@cli.command()
@common
@click.pass_context
def compare(ctx, config, period, strict, output):
    """Welch t and KS tests of SR, disadvantaged vs other zones, per combination."""
    pipe = _pipeline(ctx, config, period, strict, output)
    _emit(pipe, pipe.compare_artifacts)


@cli.command()
@common
@click.option("--hour", default="all", help="Cluster on the integrated index at this hour instead of I_access.")
@click.option("--category", type=click.Choice(CATEGORIES), default="commute")
@click.pass_context
def cluster(ctx, config, period, strict, output, hour, category):
    """k-means on standardized zone attributes, scored against parent areas."""
    pipe = _pipeline(ctx, config, period, strict, output)
    _emit(pipe, lambda p: pipe.cluster_artifacts(p, category, _hour(hour)))


@cli.command()
@common
@click.pass_context
def run(ctx, config, period, strict, output):
    """Full pipeline: every layer and report for every period, plus diffs."""
    pipe = _pipeline(ctx, config, period, strict, output)
    pipe.check_invariants()
    arts = pipe.full_artifacts()
    manifest = write_artifacts(arts, pipe.config.output_dir)
    click.echo(f"wrote {len(arts)} artifacts; manifest {manifest}")


@cli.command()
@click.argument("before", type=click.Path(dir_okay=False))
@click.argument("after", type=click.Path(dir_okay=False))
@click.option("--polarity", type=click.Choice(["higher-better", "higher-worse"]), default=None,
              help=f"Defaults by metric name: {sorted(POLARITY)}.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def diff(before, after, polarity, output):
    """Per-zone change between two exported layers."""
    b, a = read_layer(before), read_layer(after)
    pol = None if polarity is None else (1 if polarity == "higher-better" else -1)
    table, summary = diff_periods(b, a, polarity=pol)
    if output:
        write_table(table, output)
    else:
        click.echo(table.to_csv(index=False), nl=False)
    click.echo(summary.to_string(index=False), err=True)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except MDHGError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except Exception as exc:  # anything unclassified is an internal fault
        log.debug("internal error", exc_info=True)
        click.echo(f"internal error: {exc!r}", err=True)
        sys.exit(3)
    sys.exit(0)


if __name__ == "__main__":
    main()
