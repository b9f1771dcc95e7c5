"""Pipeline driver: slice, dataset, train, sample, edit, export, serve.

Every subcommand reads declared inputs and writes declared outputs only.
Progress and results stream to stdout as NDJSON records; diagnostics go to
stderr. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
health abort.
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from .data import DatasetConfig, build_dataset, load_dataset, make_plane_schedule
from .decode import (
    EosStop,
    PlaneCountStop,
    apply_edit,
    interpolate as interpolate_latents,
    new_session,
    parse_edit_script,
    run,
    sample as sample_decode,
    to_sequence,
)
from .errors import InvalidInputError, LoopForgeError, NumericalHealthError
from .geometry import PlaneList, load_obj, plane_basis, slice_mesh
from .model import ModelConfig, load_checkpoint, loss_gradcheck, save_checkpoint
from .model import train as train_model
from .recon import export_ply, oriented_cloud
from .sequence import deserialize, encode_sequence, serialize

AXES = {"x": 0, "y": 1, "z": 2}


def _emit(record):
    click.echo(json.dumps(record))


def _read_json(path, what):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{what} {path} is not valid JSON: {exc}")


def _load_z(path, latent_dim):
    values = _read_json(path, "latent file")
    if not isinstance(values, list) or len(values) != latent_dim:
        raise InvalidInputError(
            f"latent file {path} must hold a JSON list of {latent_dim} numbers"
        )
    return np.array([float(v) for v in values], dtype=np.float64)


def _dataset_config(raw):
    if not isinstance(raw, dict):
        raise InvalidInputError("dataset config must be a JSON object")
    cfg = dict(raw)
    if cfg.get("plane_range") is not None:
        cfg["plane_range"] = tuple(cfg["plane_range"])
    return DatasetConfig(**cfg)


def _planes_from_extras(extras):
    if isinstance(extras, dict) and "dataset_config" in extras:
        return make_plane_schedule(_dataset_config(extras["dataset_config"]))
    return None


def _stop_rule(spec, extras):
    """Parse --stop; default is plane-count from the checkpoint's dataset."""
    if spec is None:
        if isinstance(extras, dict) and "dataset_config" in extras:
            return PlaneCountStop(k=int(extras["dataset_config"]["plane_count"]))
        return EosStop()
    kind, _, arg = spec.partition(":")
    if kind == "plane-count":
        if not arg:
            raise click.UsageError("--stop plane-count needs a count, e.g. plane-count:16")
        return PlaneCountStop(k=int(arg))
    if kind == "eos":
        return EosStop(eps=float(arg)) if arg else EosStop()
    raise click.UsageError(f"unknown stop rule {spec!r}; use plane-count:<k> or eos[:<eps>]")


@click.group()
def cli():
    """Cross-sectional loop sequences: slicing, training, decoding, export."""


@cli.command("slice")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(), help="OBJ mesh file")
@click.option("--planes", "plane_count", required=True, type=int, help="number of slice planes")
@click.option("--axis", type=click.Choice(sorted(AXES)), default="z", show_default=True)
@click.option("--range", "axis_range", default=None,
              help="lo,hi along the axis; defaults to the mesh extent with half-slab margins")
@click.option("--points", "n_points", default=32, show_default=True, help="points per loop")
@click.option("--out", "out_path", required=True, type=click.Path())
def slice_cmd(mesh_path, plane_count, axis, axis_range, n_points, out_path):
    """Slice an OBJ mesh into a .loopseq file."""
    if plane_count < 1:
        raise click.UsageError("--planes must be at least 1")
    mesh = load_obj(mesh_path)
    axis_idx = AXES[axis]
    lo_v = mesh.vertices.min(axis=0)
    hi_v = mesh.vertices.max(axis=0)
    if axis_range is not None:
        try:
            lo, hi = (float(v) for v in axis_range.split(","))
        except ValueError:
            raise click.UsageError("--range must be lo,hi with lo < hi")
        if not lo < hi:
            raise click.UsageError("--range must be lo,hi with lo < hi")
    else:
        half = (hi_v[axis_idx] - lo_v[axis_idx]) / (2.0 * plane_count)
        lo, hi = lo_v[axis_idx] + half, hi_v[axis_idx] - half
    normal = np.zeros(3)
    normal[axis_idx] = 1.0
    center = (lo_v + hi_v) / 2.0
    planes = []
    for t in np.linspace(lo, hi, plane_count):
        origin = center.copy()
        origin[axis_idx] = t
        planes.append(plane_basis(normal, origin=origin))
    planes = PlaneList(planes)
    per_plane = slice_mesh(mesh, planes, n_points=n_points)
    seq = encode_sequence(per_plane, len(planes))
    Path(out_path).write_bytes(serialize(seq, planes=planes))
    _emit({
        "event": "slice",
        "tokens": len(seq),
        "planes": plane_count,
        "occupied_planes": int(seq.tokens[:, -1].sum()),
        "out": str(out_path),
    })


@cli.command("dataset")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--obj-dir", default=None, type=click.Path(), help="OBJ directory for category 'custom'")
def dataset_cmd(config_path, out_dir, obj_dir):
    """Generate (or ingest) shapes, slice them, and write a dataset directory."""
    cfg = _dataset_config(_read_json(config_path, "dataset config"))
    records, manifest = build_dataset(cfg, out_dir=out_dir, obj_dir=obj_dir)
    _emit({
        "event": "dataset",
        "accepted": len(records),
        "stats": manifest["stats"],
        "out": str(out_dir),
    })


@cli.command("train")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=None, type=int, help="overrides the config file")
@click.option("--seed", default=None, type=int, help="overrides the config file")
@click.option("--work-dir", default=None, type=click.Path(),
              help="directory for periodic checkpoints and the training log")
@click.option("--checkpoint-every", default=100, show_default=True)
def train_cmd(dataset_dir, config_path, out_path, epochs, seed, work_dir, checkpoint_every):
    """Train on a dataset directory and write the final checkpoint."""
    raw = _read_json(config_path, "model config")
    if not isinstance(raw, dict):
        raise InvalidInputError("model config must be a JSON object")
    file_epochs = raw.pop("epochs", None)
    if seed is not None:
        raw["seed"] = seed
    cfg = ModelConfig.from_dict(raw)
    if epochs is None:
        epochs = file_epochs
    records, planes, manifest = load_dataset(dataset_dir)
    sequences = [r.sequence for r in records]
    extras = {"dataset_config": manifest["config"]}
    model, log = train_model(
        sequences,
        cfg,
        out_dir=work_dir,
        epochs=epochs,
        checkpoint_every=checkpoint_every,
        extras=extras,
        progress=lambda rec: _emit({"event": "epoch", **rec}),
    )
    steps = len(log) * math.ceil(len(sequences) / cfg.batch_size)
    save_checkpoint(model, out_path, step=steps, extras=extras)
    _emit({
        "event": "train",
        "epochs": len(log),
        "final_L_R": log[-1]["L_R"] if log else None,
        "out": str(out_path),
    })


@cli.command("gradcheck")
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="model config JSON; defaults to the standard tiny probe model")
@click.option("--probes", default=200, show_default=True)
@click.option("--step-size", "h", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tolerance", default=1e-5, show_default=True)
def gradcheck_cmd(config_path, probes, h, seed, tolerance):
    """Finite-difference check of the full loss gradient."""
    if config_path is not None:
        cfg = ModelConfig.from_dict(_read_json(config_path, "model config"))
    else:
        cfg = ModelConfig(n_points=32, d_model=32, n_layers=2, n_heads=2, ffn_dim=48,
                          latent_dim=8, max_seq_len=16, mlp_hidden=(16,), seed=11)
    err = loss_gradcheck(cfg, probes=probes, h=h, seed=seed)
    passed = bool(err <= tolerance)
    _emit({
        "event": "gradcheck",
        "max_rel_error": err,
        "tolerance": tolerance,
        "probes": probes,
        "passed": passed,
    })
    if not passed:
        raise NumericalHealthError(
            f"gradient check failed: max relative error {err:.3e} > {tolerance:.3e}"
        )


@cli.command("sample")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stop", default=None, help="plane-count:<k> or eos[:<eps>]; defaults to the checkpoint's dataset plane count")
def sample_cmd(ckpt_path, seed, out_path, stop):
    """Decode one latent draw from the seed into a .loopseq file."""
    model, _, extras = load_checkpoint(ckpt_path)
    session = sample_decode(model, seed, _stop_rule(stop, extras))
    seq = to_sequence(session)
    Path(out_path).write_bytes(serialize(seq, planes=_planes_from_extras(extras)))
    _emit({
        "event": "sample",
        "seed": seed,
        "status": session.status,
        "tokens": len(seq),
        "out": str(out_path),
    })


@cli.command("interpolate")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--za", "za_path", required=True, type=click.Path(), help="JSON list latent")
@click.option("--zb", "zb_path", required=True, type=click.Path(), help="JSON list latent")
@click.option("-k", "k", required=True, type=int, help="number of interpolants, endpoints included")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--stop", default=None)
def interpolate_cmd(ckpt_path, za_path, zb_path, k, out_dir, stop):
    """Decode k evenly spaced latents between two endpoints."""
    model, _, extras = load_checkpoint(ckpt_path)
    z_a = _load_z(za_path, model.config.latent_dim)
    z_b = _load_z(zb_path, model.config.latent_dim)
    rule = _stop_rule(stop, extras)
    planes = _planes_from_extras(extras)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, z in enumerate(interpolate_latents(z_a, z_b, k)):
        session = run(new_session(model, z, rule))
        record = {"event": "interpolate", "index": i, "status": session.status}
        if session.emitted:
            path = out / f"interp_{i:03d}.loopseq"
            path.write_bytes(serialize(to_sequence(session), planes=planes))
            record["out"] = str(path)
        _emit(record)


@cli.command("edit")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--z", "z_path", required=True, type=click.Path(), help="JSON list latent")
@click.option("--script", "script_path", required=True, type=click.Path(), help="edit script JSON")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stop", default=None)
def edit_cmd(ckpt_path, z_path, script_path, out_path, stop):
    """Decode a latent with an edit script applied mid-stream."""
    model, _, extras = load_checkpoint(ckpt_path)
    z = _load_z(z_path, model.config.latent_dim)
    ops = parse_edit_script(_read_json(script_path, "edit script"), model.config.n_points)
    session = new_session(model, z, _stop_rule(stop, extras))
    for op in ops:
        apply_edit(session, op)
    run(session)
    seq = to_sequence(session)
    Path(out_path).write_bytes(serialize(seq, planes=_planes_from_extras(extras)))
    _emit({
        "event": "edit",
        "edits": len(ops),
        "status": session.status,
        "tokens": len(seq),
        "out": str(out_path),
    })


@cli.command("export-ply")
@click.option("--loopseq", "loopseq_path", required=True, type=click.Path())
@click.option("--density", default=200.0, show_default=True, help="cap samples per unit area")
@click.option("--seed", default=0, show_default=True, help="cap sampling seed")
@click.option("--out", "out_path", required=True, type=click.Path())
def export_ply_cmd(loopseq_path, density, seed, out_path):
    """Oriented point cloud PLY from a .loopseq file (for Poisson tools)."""
    if density <= 0:
        raise click.UsageError("--density must be positive")
    seq, planes = deserialize(Path(loopseq_path).read_bytes())
    if planes is None:
        raise InvalidInputError(
            f"{loopseq_path} carries no plane schedule, so 3D positions are unknown"
        )
    cloud = oriented_cloud(seq, planes, density, seed=seed)
    export_ply(cloud, out_path)
    _emit({"event": "export-ply", "points": len(cloud), "out": str(out_path)})


@cli.command("serve")
@click.option("--port", default=None, type=int,
              help="listen port; defaults to LOOPFORGE_PORT or 8080")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--session-cap", default=64, show_default=True)
@click.option("--static", "static_dir", default=None, type=click.Path(),
              help="directory of UI assets to serve under /ui")
def serve_cmd(port, host, session_cap, static_dir):
    """Run the HTTP session service."""
    if port is None:
        port = int(os.environ.get("LOOPFORGE_PORT", "8080"))
    from .service import serve

    serve(port=port, host=host, session_cap=session_cap, static_dir=static_dir)


def main(argv=None):
    args = list(argv) if argv is not None else sys.argv[1:]
    if not args:
        args = ["--help"]
    try:
        cli.main(args=args, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except LoopForgeError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
