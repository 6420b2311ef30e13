"""
Command-line entry point.

    stmdplus [--config FILE] [--set key=value]... COMMAND [options]
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Tuple

import click
import numpy as np
from dotenv import load_dotenv

load_dotenv()

from .app_settings import app_settings
from .config import get_run_dir
from .engine import bench, direction_profile, layer_profile, run
from .errors import ConfigError, StmdPlusError
from .evaluation import TUNING_AXES, match_and_score, roc_sweep, tuning_experiment
from .frames import read_frames, write_frames
from .motion import MotionPathway
from .mushroom import LABEL_TARGET, LABEL_UNDECIDED, Detection
from .params import RunConfig, load_run_config, parse_number_list, parse_overrides
from .presets import load_presets, summarize_presets, validate_builtin_presets
from .records import (
    DirectionRecord,
    LayerRow,
    RocPoint,
    StageTiming,
    TuningPoint,
    read_detections,
    read_ground_truth,
    write_ground_truth,
    write_records,
)
from .synth import GroundTruth, SequenceSpec, generate_sequence, load_sequence_spec
from .version import __version__

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class StmdPlusGroup(click.Group):
    """Maps package errors to `error: ...` on stderr and the error's exit code."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except StmdPlusError as exc:
            logger.debug("[cli] command failed", exc_info=True)
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)


@dataclass
class SequenceSource:
    frames: Callable[[], Iterable[np.ndarray]]
    ground_truth: Optional[GroundTruth]
    label: str


def _config(ctx: click.Context) -> RunConfig:
    return ctx.obj["config"]


def _resolve_source(
    ctx: click.Context,
    spec_path: Optional[Path],
    preset: Optional[str],
    spec_set: Tuple[str, ...],
    frames: Optional[Path],
    ground_truth: Optional[Path],
    default_preset: Optional[str] = None,
) -> SequenceSource:
    config = _config(ctx)
    overrides = parse_overrides(spec_set)
    if spec_path is not None and preset is not None:
        raise ConfigError("use either --spec or --preset, not both")
    frames = frames if frames is not None else config.frames
    if spec_path is None and preset is None and frames is None:
        if default_preset is None:
            raise ConfigError("no input: pass --frames, --spec or --preset")
        preset = default_preset
    if spec_path is not None or preset is not None:
        if spec_path is not None:
            spec = load_sequence_spec(spec_path, overrides)
            base_dir: Optional[Path] = spec_path.parent
        else:
            spec = load_presets().sequence(preset).with_overrides(overrides)
            base_dir = None
        sequence = generate_sequence(spec, base_dir)
        return SequenceSource(sequence.frames, sequence.ground_truth, str(spec_path or preset))
    if overrides:
        raise ConfigError("--spec-set only applies to generated sequences")
    gt_path = ground_truth if ground_truth is not None else config.ground_truth
    gt = read_ground_truth(gt_path) if gt_path is not None else None
    return SequenceSource(lambda: read_frames(frames), gt, str(frames))


def sequence_options(fn):
    fn = click.option("--ground-truth", "ground_truth", type=click.Path(path_type=Path), help="Ground-truth CSV for --frames input.")(fn)
    fn = click.option("--frames", "frames", type=click.Path(path_type=Path), help="Frame directory or manifest.")(fn)
    fn = click.option("--spec-set", "spec_set", multiple=True, metavar="KEY=VALUE", help="Override a sequence spec key.")(fn)
    fn = click.option("--preset", "preset", help="Named sequence preset.")(fn)
    fn = click.option("--spec", "spec_path", type=click.Path(path_type=Path, dir_okay=False), help="Sequence spec file.")(fn)
    return fn


def _require_gt(source: SequenceSource) -> GroundTruth:
    if source.ground_truth is None:
        raise ConfigError(f"{source.label}: ground truth is required (set --ground-truth)")
    return source.ground_truth


@click.group(cls=StmdPlusGroup)
@click.version_option(__version__, prog_name="stmdplus")
@click.option("--config", "config_path", type=click.Path(path_type=Path, dir_okay=False), help="key = value run config file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key (repeatable).")
@click.option("--log-level", default=None, help="Logging level (default from STMDPLUS_LOG_LEVEL).")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], overrides: Tuple[str, ...], log_level: Optional[str]) -> None:
    """Small target motion detection in cluttered scenes."""
    settings = replace(app_settings, log_level=log_level) if log_level else app_settings
    logging.basicConfig(level=settings.level, format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_run_config(config_path, parse_overrides(overrides))


@cli.command("run")
@sequence_options
@click.option("--output", type=click.Path(path_type=Path, file_okay=False), help="Output directory.")
@click.pass_context
def run_cmd(ctx, spec_path, preset, spec_set, frames, ground_truth, output) -> None:
    """Detect targets and write detections.csv and traces.csv."""
    config = _config(ctx)
    source = _resolve_source(ctx, spec_path, preset, spec_set, frames, ground_truth)
    if output is not None:
        config = config.with_overrides({"output": str(output)})
    outputs = run(config, source.frames())
    if source.ground_truth is not None:
        gt_path = outputs.detections_path.parent / "ground_truth.csv"
        write_ground_truth(source.ground_truth, gt_path)
        score = match_and_score(
            outputs.result.scored_detections(config.include_undecided),
            source.ground_truth,
            config.eval_radius,
            outputs.result.scored_frames,
        )
        click.echo(f"detection_rate={score.detection_rate:.4f} false_alarm_rate={score.false_alarm_rate:.4f}")
    click.echo(str(outputs.detections_path))
    click.echo(str(outputs.traces_path))


@cli.command("synth")
@click.option("--spec", "spec_path", type=click.Path(path_type=Path, dir_okay=False), help="Sequence spec file.")
@click.option("--preset", help="Named sequence preset.")
@click.option("--spec-set", "spec_set", multiple=True, metavar="KEY=VALUE", help="Override a sequence spec key.")
@click.option("--output", type=click.Path(path_type=Path, file_okay=False), required=True, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["pgm", "png"]), default="pgm", show_default=True)
@click.pass_context
def synth_cmd(ctx, spec_path, preset, spec_set, output, fmt) -> None:
    """Render a synthetic sequence to NNNNNN.pgm frames plus ground_truth.csv."""
    if spec_path is None and preset is None:
        raise ConfigError("synth needs --spec or --preset")
    overrides = parse_overrides(spec_set)
    if spec_path is not None and preset is not None:
        raise ConfigError("use either --spec or --preset, not both")
    if spec_path is not None:
        spec = load_sequence_spec(spec_path, overrides)
        sequence = generate_sequence(spec, spec_path.parent)
    else:
        sequence = generate_sequence(load_presets().sequence(preset).with_overrides(overrides))
    write_frames(sequence.frames(), output / "frames", suffix=f".{fmt}")
    write_ground_truth(sequence.ground_truth, output / "ground_truth.csv")
    click.echo(str(output))


@cli.command("eval")
@click.option("--detections", type=click.Path(path_type=Path, dir_okay=False), required=True)
@click.option("--ground-truth", "ground_truth", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.option("--all-labels", is_flag=True, help="Score every detection regardless of label.")
@click.pass_context
def eval_cmd(ctx, detections, ground_truth, all_labels) -> None:
    """Score a detections CSV against ground truth (warm-up frames are skipped)."""
    config = _config(ctx)
    gt_path = ground_truth if ground_truth is not None else config.ground_truth
    if gt_path is None:
        raise ConfigError("eval needs --ground-truth")
    gt = read_ground_truth(gt_path)
    warmup = MotionPathway(config.pipeline).warmup_frames
    accepted = {LABEL_TARGET, LABEL_UNDECIDED} if config.include_undecided else {LABEL_TARGET}
    dets = [
        Detection(t=r.frame, x=r.x, y=r.y, theta=0.0, response=r.response)
        for r in read_detections(detections)
        if all_labels or r.label in accepted
    ]
    scored = [p.t for p in gt if p.t >= warmup]
    score = match_and_score(dets, gt, config.eval_radius, scored)
    click.echo(
        f"detection_rate={score.detection_rate:.4f} false_alarm_rate={score.false_alarm_rate:.4f} "
        f"true={score.true_detections} targets={score.actual_targets} "
        f"false={score.false_detections} frames={score.frames}"
    )


@cli.command("roc")
@sequence_options
@click.option("--betas", required=True, help="Strictly increasing comma-separated thresholds.")
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.pass_context
def roc_cmd(ctx, spec_path, preset, spec_set, frames, ground_truth, betas, output) -> None:
    """Detection rate and false alarm rate for every beta from one cached pass."""
    config = _config(ctx)
    source = _resolve_source(ctx, spec_path, preset, spec_set, frames, ground_truth)
    points = roc_sweep(
        source.frames(),
        _require_gt(source),
        parse_number_list(betas),
        config.pipeline,
        config.classifier,
        config.contrast_pathway,
        config.eval_radius,
        config.include_undecided,
    )
    target = output if output is not None else get_run_dir("roc") / "roc.csv"
    write_records(points, target, kind=RocPoint)
    click.echo(str(target))


@cli.command("tune")
@click.option("--preset", help="Named sweep preset.")
@click.option("--axis", type=click.Choice(TUNING_AXES), default=None)
@click.option("--grid", default=None, help="Comma-separated sweep values.")
@click.option("--base", default="tuning-base", show_default=True, help="Sequence preset the sweep varies.")
@click.option("--spec-set", "spec_set", multiple=True, metavar="KEY=VALUE", help="Override a base spec key.")
@click.option("--workers", type=int, default=None, help="Concurrent grid values (default STMDPLUS_MAX_WORKERS).")
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.pass_context
def tune_cmd(ctx, preset, axis, grid, base, spec_set, workers, output) -> None:
    """Mean target response along one tuning axis."""
    config = _config(ctx)
    presets = load_presets()
    if preset is not None:
        sweep = presets.sweep(preset)
        axis = axis or sweep.axis
        values = parse_number_list(grid) if grid else tuple(sweep.grid)
        base = sweep.base
    else:
        if axis is None or grid is None:
            raise ConfigError("tune needs --preset, or both --axis and --grid")
        values = parse_number_list(grid)
    base_spec: SequenceSpec = presets.sequence(base).with_overrides(parse_overrides(spec_set))
    points = tuning_experiment(axis, values, base_spec, config.pipeline, config.eval_radius, workers)
    target = output if output is not None else get_run_dir("tune") / f"{axis}.csv"
    write_records(points, target, kind=TuningPoint)
    click.echo(str(target))


@cli.command("directions")
@sequence_options
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.pass_context
def directions_cmd(ctx, spec_path, preset, spec_set, frames, ground_truth, output) -> None:
    """Eight directional responses near the target for every scored frame."""
    config = _config(ctx)
    source = _resolve_source(ctx, spec_path, preset, spec_set, frames, ground_truth, default_preset="directional")
    rows = direction_profile(source.frames(), _require_gt(source), config.pipeline, config.eval_radius)
    target = output if output is not None else get_run_dir("directions") / "directions.csv"
    write_records(rows, target, kind=DirectionRecord)
    click.echo(str(target))


@cli.command("profile")
@sequence_options
@click.option("--frame", "frame_index", type=int, required=True, help="Frame to sample.")
@click.option("--row", type=int, default=None, help="Image row (default: target row, else the middle row).")
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.pass_context
def profile_cmd(ctx, spec_path, preset, spec_set, frames, ground_truth, frame_index, row, output) -> None:
    """Every layer's output along one image row."""
    config = _config(ctx)
    source = _resolve_source(ctx, spec_path, preset, spec_set, frames, ground_truth, default_preset="initial")
    stream = iter(source.frames())
    if row is None:
        point = source.ground_truth.at(frame_index) if source.ground_truth is not None else None
        if point is not None:
            row = int(round(point.y))
        else:
            first = next(stream, None)
            if first is None:
                raise ConfigError(f"{source.label} holds no frames")
            row = first.shape[0] // 2
            stream = _prepend(first, stream)
    rows = layer_profile(stream, config.pipeline, frame_index, row)
    target = output if output is not None else get_run_dir("profile") / f"layers_{frame_index}_{row}.csv"
    write_records(rows, target, kind=LayerRow)
    click.echo(str(target))


def _prepend(first: np.ndarray, rest: Iterable[np.ndarray]) -> Iterable[np.ndarray]:
    yield first
    yield from rest


@cli.command("bench")
@sequence_options
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), default=None)
@click.pass_context
def bench_cmd(ctx, spec_path, preset, spec_set, frames, ground_truth, output) -> None:
    """Seconds per frame of every pipeline stage (beta must be configured)."""
    config = _config(ctx)
    source = _resolve_source(ctx, spec_path, preset, spec_set, frames, ground_truth, default_preset="initial")
    timings = bench(source.frames(), config.pipeline, config.classifier, config.contrast_pathway)
    target = output if output is not None else get_run_dir("bench") / "bench.csv"
    write_records(timings, target, kind=StageTiming)
    for item in timings:
        click.echo(f"{item.stage:<12} {item.seconds_per_frame * 1e3:9.3f} ms/frame")


@cli.command("presets")
@click.option("--check", is_flag=True, help="Validate the built-in presets and exit.")
def presets_cmd(check: bool) -> None:
    """List sequence and sweep presets."""
    if check:
        count = validate_builtin_presets()
        click.echo(f"{count} built-in presets OK")
        return
    for item in summarize_presets(load_presets()):
        click.echo(f"{item['kind']:<8} {item['name']:<22} {item['description']}")


def main() -> None:
    cli(prog_name="stmdplus")
