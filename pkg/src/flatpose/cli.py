"""Command-line entry point: convert, gen, eval, and serve subcommands.

Every subcommand is deterministic for a fixed (inputs, seed) pair and
writes a ``manifest.json`` next to its outputs recording the resolved
parameters, so runs can be reproduced bit for bit. Options may come from
flags, ``FLATPOSE_``-prefixed environment variables, or an INI config file
with one section per subcommand; flags win over the environment, which
wins over the file.

Exit codes: 0 on success, 1 on runtime failures (bad input data, IO), 2
on usage or configuration errors.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import FlatposeError


@dataclass(frozen=True)
class RunManifest:
    """What a subcommand ran with, minus anything time-dependent.

    Output locations are recorded relative to the manifest file itself,
    so two runs with the same inputs and seed produce byte-identical
    output trees wherever they land.
    """

    subcommand: str
    inputs: dict
    outputs: dict
    seed: int | None
    parameters: dict
    version: str


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(asdict(manifest), indent=1, sort_keys=True)
                    + "\n", encoding="utf-8")
    return path


def _load_config(ctx: click.Context, _param, value):
    """Eager ``--config`` callback: INI section becomes the default map."""
    if value is None:
        return None
    parser = configparser.ConfigParser()
    try:
        loaded = parser.read(value)
    except configparser.Error as e:
        raise click.UsageError(f"config file {value} is not valid INI: {e}")
    if not loaded:
        raise click.UsageError(f"config file {value} is unreadable")
    section = ctx.info_name
    if parser.has_section(section):
        overrides = {k.replace("-", "_"): v
                     for k, v in parser.items(section)}
        ctx.default_map = {**(ctx.default_map or {}), **overrides}
    return value


def config_option(fn):
    return click.option(
        "--config", type=click.Path(dir_okay=False), is_eager=True,
        expose_value=False, callback=_load_config,
        help="INI file with a [SUBCOMMAND] section of option defaults.")(fn)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, prog_name="flatpose")
def cli():
    """Flat-part pose toolkit: document conversion, synthetic dataset
    generation, pose evaluation, and a streaming pose service."""


def main(argv=None):
    return cli(args=argv, auto_envvar_prefix="FLATPOSE")


# ---------------------------------------------------------------------------
# convert


@cli.command("convert")
@click.argument("xml_path", type=click.Path(exists=True, dir_okay=False,
                                            path_type=Path))
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory receiving the model files.")
@click.option("--thickness", type=float, default=1.0, show_default=True,
              help="Extrusion thickness in mm.")
@click.option("--tolerance", type=float, default=0.1, show_default=True,
              help="Curve flattening tolerance in mm.")
@click.option("--symmetry-step", type=float, default=1.0, show_default=True,
              help="Angular grid in degrees for symmetry detection.")
@config_option
def cmd_convert(xml_path: Path, out_dir: Path, thickness: float,
                tolerance: float, symmetry_step: float):
    """Convert a manufacturing document into mesh models.

    Reads the part outlines from XML_PATH, extrudes each into a watertight
    mesh, detects its discrete symmetries, and writes PLY files plus
    models_info.json and models_edges.json sidecars under --out.
    """
    from . import docparse, geometry

    if thickness <= 0:
        raise click.UsageError("--thickness must be positive")
    try:
        doc = docparse.parse_document(xml_path.read_bytes())
        if not doc.parts:
            click.echo(f"warning: {xml_path} contains no parts", err=True)
        profiles = docparse.profiles_from_document(doc, tolerance)
        models = {}
        for profile in profiles:
            mesh = geometry.extrude(profile, thickness)
            syms = geometry.detect_symmetries(mesh,
                                              angular_step=symmetry_step)
            models[profile.category_id] = (mesh, syms)
        geometry.write_models(models, out_dir)
    except (FlatposeError, OSError) as e:
        raise click.ClickException(str(e))
    write_manifest(out_dir, RunManifest(
        subcommand="convert",
        inputs={"document": str(xml_path)},
        outputs={"models_dir": "."},
        seed=None,
        parameters={"thickness": thickness, "tolerance": tolerance,
                    "symmetry_step": symmetry_step},
        version=__version__,
    ))
    click.echo(f"wrote {len(models)} models to {out_dir}")


# ---------------------------------------------------------------------------
# gen


@cli.command("gen")
@click.option("--models", "models_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Model directory produced by convert.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Dataset root to create.")
@click.option("--count", type=int, required=True,
              help="Total number of images to render.")
@click.option("--images-per-scene", type=int, default=5, show_default=True,
              help="Images sharing one part arrangement.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", default="train", show_default=True)
@config_option
def cmd_gen(models_dir: Path, out_dir: Path, count: int,
            images_per_scene: int, seed: int, split: str):
    """Generate a synthetic pose dataset from converted models.

    Scenes are random non-overlapping arrangements of the parts on a
    plane, rendered to depth images and masks from random cameras with
    full ground-truth annotations. A fixed seed reproduces the dataset
    byte for byte.
    """
    from . import geometry, scenegen

    if count <= 0:
        raise click.UsageError("--count must be a positive image count")
    if images_per_scene <= 0:
        raise click.UsageError("--images-per-scene must be positive")
    if count % images_per_scene != 0:
        raise click.UsageError(
            f"--count {count} is not a multiple of --images-per-scene "
            f"{images_per_scene}")
    try:
        models = geometry.read_models(models_dir)
        if not models:
            raise click.ClickException(f"{models_dir} holds no models")
        scenegen.write_dataset(out_dir, models,
                               n_scenes=count // images_per_scene,
                               images_per_scene=images_per_scene,
                               seed=seed, split=split)
    except (FlatposeError, OSError) as e:
        raise click.ClickException(str(e))
    write_manifest(out_dir, RunManifest(
        subcommand="gen",
        inputs={"models_dir": str(models_dir)},
        outputs={"dataset": "."},
        seed=seed,
        parameters={"count": count, "images_per_scene": images_per_scene,
                    "split": split},
        version=__version__,
    ))
    click.echo(f"wrote {count} images to {out_dir}")


# ---------------------------------------------------------------------------
# eval


@cli.command("eval")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Dataset root produced by gen.")
@click.option("--estimates", "estimates_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON-lines pose estimates to score.")
@click.option("--estimator", "estimator_name",
              type=click.Choice(["oracle"]),
              help="Produce estimates internally instead of --estimates.")
@click.option("--noise", nargs=3, type=float, default=(0.0, 0.0, 0.0),
              show_default=True, metavar="ROT_DEG TRANS_MM DROP",
              help="Oracle perturbation: rotation sigma, translation "
                   "sigma, drop probability.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Oracle noise seed.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory receiving report.json and report.txt.")
@click.option("--split", default="train", show_default=True)
@config_option
def cmd_eval(dataset_dir: Path, estimates_path: Path | None,
             estimator_name: str | None, noise, seed: int, out_dir: Path,
             split: str):
    """Score pose estimates against a dataset's ground truth.

    Produces the symmetry-aware recall table over the threshold grid plus
    detection mAP, written as report.json and report.txt.
    """
    from . import geometry, metrics, scenegen

    if (estimates_path is None) == (estimator_name is None):
        raise click.UsageError(
            "provide exactly one of --estimates or --estimator")
    try:
        models = geometry.read_models(Path(dataset_dir) / "models")
        if estimates_path is not None:
            estimates = metrics.read_estimates(estimates_path)
        else:
            estimates = _oracle_estimates(dataset_dir, models, noise, seed,
                                          split)
        report = metrics.evaluate_poses(estimates, dataset_dir, models,
                                        split=split)
    except (FlatposeError, OSError) as e:
        raise click.ClickException(str(e))
    out_dir.mkdir(parents=True, exist_ok=True)
    text = metrics.report_to_text(report)
    (out_dir / "report.json").write_text(
        json.dumps(metrics.report_to_json(report), indent=1, sort_keys=True)
        + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(text + "\n", encoding="utf-8")
    write_manifest(out_dir, RunManifest(
        subcommand="eval",
        inputs={"dataset": str(dataset_dir),
                "estimates": str(estimates_path) if estimates_path
                else f"estimator:{estimator_name}"},
        outputs={"report_dir": "."},
        seed=seed if estimator_name else None,
        parameters={"noise": list(noise), "split": split},
        version=__version__,
    ))
    click.echo(text)


def _oracle_estimates(dataset_dir, models, noise, seed, split):
    """Run the perturbation oracle over every annotated image."""
    from .estimator import oracle_estimate
    from .metrics import PoseEstimate
    from .scenegen import read_annotations

    estimates = []
    for ann in read_annotations(dataset_dir, split=split):
        output = oracle_estimate(ann, noise=tuple(noise),
                                 rng_seed=seed * 100003 + ann.image_id,
                                 models=models)
        estimates.extend(
            PoseEstimate(image_id=ann.image_id,
                         category_id=det.category_id,
                         pose=det.pose, score=det.score)
            for det in output.detections)
    return estimates


# ---------------------------------------------------------------------------
# serve


def _build_contour_estimator(document: Path | None, plane_path: Path | None,
                             tolerance: float):
    """Estimator factory for the outline matcher on a fixed camera rig."""
    from . import docparse, geometry
    from .estimator import contour_estimate
    from .transforms import Pose

    if document is None or plane_path is None:
        raise click.UsageError(
            "--estimator contour needs --document (part outlines) and "
            "--plane (fixed rig extrinsics JSON with 'rotation' and "
            "'translation' keys)")
    try:
        doc = docparse.parse_document(document.read_bytes())
        library = []
        for profile in docparse.profiles_from_document(doc, tolerance):
            mesh = geometry.extrude(profile)
            syms = geometry.detect_symmetries(mesh, angular_step=5.0)
            library.append((mesh, profile, syms))
        raw = json.loads(plane_path.read_text(encoding="utf-8"))
        plane = Pose(np.array(raw["rotation"], dtype=float).reshape(3, 3),
                     np.array(raw["translation"], dtype=float))
    except (FlatposeError, OSError, KeyError, ValueError) as e:
        raise click.UsageError(f"contour estimator setup failed: {e}")
    if not library:
        raise click.UsageError(f"{document} contains no parts")
    return lambda inp: contour_estimate(inp, library, plane)


ESTIMATOR_NAMES = ("null", "contour")


@cli.command("serve")
@click.option("--bind", default="127.0.0.1:8765", show_default=True,
              help="host:port to listen on.")
@click.option("--max-fps", type=float, default=5.0, show_default=True,
              help="Per-connection result rate cap.")
@click.option("--estimator", "estimator_name", default="null",
              show_default=True, help="Estimator to serve.")
@click.option("--models-dir",
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Directory exported at /models for web clients.")
@click.option("--document",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Manufacturing document for the contour estimator.")
@click.option("--plane",
              "plane_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Camera-frame ground plane JSON for the contour "
                   "estimator.")
@click.option("--tolerance", type=float, default=0.1, show_default=True,
              help="Curve flattening tolerance in mm.")
@click.option("--dry-run", is_flag=True,
              help="Validate configuration and exit without binding.")
@config_option
def cmd_serve(bind: str, max_fps: float, estimator_name: str,
              models_dir: Path | None, document: Path | None,
              plane_path: Path | None, tolerance: float, dry_run: bool):
    """Run the streaming pose service.

    Clients connect over a WebSocket at /ws, complete a hello handshake,
    and stream PNG frames; the service answers with detections and poses,
    keeping only the newest frame under load.
    """
    from .server import run_server

    if max_fps <= 0:
        raise click.UsageError("--max-fps must be positive")
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError(
            f"--bind must look like host:port, got {bind!r}")
    if estimator_name == "null":
        from .server import null_estimator as estimator_fn
    elif estimator_name == "contour":
        estimator_fn = _build_contour_estimator(document, plane_path,
                                                tolerance)
    else:
        raise click.UsageError(
            f"unknown estimator {estimator_name!r}; valid names: "
            + ", ".join(ESTIMATOR_NAMES))
    click.echo(f"listening on ws://{bind}/ws "
               f"(estimator={estimator_name}, max_fps={max_fps:g})")
    if dry_run:
        click.echo("dry run: configuration ok, not binding")
        return
    try:
        run_server(bind=bind, estimator_fn=estimator_fn, max_fps=max_fps,
                   models_dir=models_dir)
    except OSError as e:
        raise click.ClickException(f"cannot serve on {bind}: {e}")


if __name__ == "__main__":
    main()
