"""Command-line interface: fixtures, ingest, manifest, train, train-embedders,
generate, evaluate, serve."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .checkpoint import checkpoint_checksum
from .conditions import ConditionBundle, MaskSet
from .curriculum import (
    CurriculumSpec,
    TrainingData,
    load_curriculum,
    load_trained_model,
    save_curriculum,
    train_curriculum,
)
from .evaluation import (
    EmbedderConfig,
    load_embedders,
    run_benchmark,
    save_embedders,
    train_embedders,
)
from .features import MotionFeatures
from .generate import SessionState, continue_clip, save_session, stitch
from .ingest import RetargetPlan, ingest_directory
from .masks import TASK_KINDS, TaskMaskSpec, make_task_mask
from .model import ModelConfig, load_config, save_config
from .schedule import build_schedule
from .skeleton import load_skeleton, save_skeleton
from .store import ClipRecord, ClipStore, build_manifest, read_clip_bytes, write_clip_bytes

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@click.group()
@click.version_option(__version__)
def main():
    """Multimodal whole-body motion generation toolkit."""


@main.command("fixtures")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--frames", default=330, show_default=True)
@click.option("--seed", default=0, show_default=True)
def fixtures_cmd(out_dir, frames, seed):
    """Write the synthetic BVH fixture corpus plus desk-scale configs."""
    from . import fixtures as fx

    out = Path(out_dir)
    skeleton = fx.desk_skeleton()
    fx.write_fixture_corpus(out / "bvh", skeleton, sequence_frames=frames, seed=seed)
    save_skeleton(skeleton, out / "skeleton.json")
    RetargetPlan.identity(skeleton).save(out / "retarget.json")
    save_config(ModelConfig.desk(), out / "model.cfg")
    save_curriculum(CurriculumSpec.paper_default(sigma=1 / 2300), out / "curriculum.cfg")
    click.echo(f"fixture corpus written under {out}")


@main.command("ingest")
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--retarget", "retarget_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_store", required=True, type=click.Path())
@click.option("--sigma", default=1.0, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--test-per-dataset", default=0, show_default=True)
def ingest_cmd(input_dir, skeleton_path, retarget_path, out_store, sigma, seed,
               test_per_dataset):
    """Parse, retarget, normalize, and segment BVH files into a clip store."""
    skeleton = load_skeleton(skeleton_path)
    plan = RetargetPlan.load(retarget_path)
    store = ingest_directory(input_dir, skeleton, plan, out_store, sigma=sigma,
                             seed=seed, test_per_dataset=test_per_dataset)
    manifest = store.manifest()
    click.echo(f"ingested {len(manifest.clips)} clips "
               f"(train {manifest.split_counts['train']}, "
               f"test {manifest.split_counts['test']}) into {store.root}")


@main.command("manifest")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--test-per-dataset", default=10, show_default=True)
@click.option("--seed", default=7, show_default=True)
def manifest_cmd(store_path, test_per_dataset, seed):
    """Re-split the store: a seeded uniform sample per dataset goes to test."""
    store = ClipStore(store_path)
    skeleton = store.skeleton()
    records = [store.read_clip(cid) for cid in store.clip_ids()]
    manifest, updated = build_manifest(records, test_per_dataset=test_per_dataset,
                                       seed=seed)
    with store.writer_lock():
        for record in updated:
            store.write_clip(record, skeleton)
        store.write_manifest(manifest)
    click.echo(f"split: {manifest.split_counts}")


@main.command("train")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--curriculum", "curriculum_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=7, show_default=True)
@click.option("--resume", type=click.Path(exists=True))
@click.option("--checkpoint-every", default=0, show_default=True)
def train_cmd(store_path, config_path, curriculum_path, out_dir, seed, resume,
              checkpoint_every):
    """Run the weak-to-strong curriculum on a clip store."""
    store = ClipStore(store_path)
    skeleton = store.skeleton()
    config = load_config(config_path)
    curriculum = load_curriculum(curriculum_path)
    ckpt = train_curriculum(config, skeleton, curriculum, store, out_dir,
                            seed=seed, resume=resume,
                            checkpoint_every=checkpoint_every or None)
    click.echo(f"final checkpoint: {ckpt} ({checkpoint_checksum(ckpt)[:12]})")


@main.command("train-embedders")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--embed-dim", default=16, show_default=True)
@click.option("--epochs", default=40, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_embedders_cmd(store_path, out_path, embed_dim, epochs, seed):
    """Train the contrastive text/motion embedder pair on the train split."""
    store = ClipStore(store_path)
    skeleton = store.skeleton()
    records = [store.read_clip(cid) for cid in store.clip_ids("train")]
    config = EmbedderConfig(embed_dim=embed_dim, epochs=epochs)
    pair, losses = train_embedders(records, skeleton, config, seed=seed)
    checksum = save_embedders(pair, out_path)
    click.echo(f"embedders saved to {out_path} ({checksum[:12]}); "
               f"final epoch loss {losses[-1]:.4f}")


@main.command("generate")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--task", default="t2m", show_default=True,
              type=click.Choice(("t2m", "s2g", "m2d") + TASK_KINDS))
@click.option("--text", default=None)
@click.option("--audio", "audio_path", type=click.Path(exists=True))
@click.option("--ref", "ref_path", type=click.Path(exists=True),
              help="clip container used as starter reference / task condition")
@click.option("--clips", "clip_count", default=1, show_default=True)
@click.option("--frames", default=0, help="frames per clip (default: model max)")
@click.option("--seed", default=7, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--session-out", type=click.Path(), help="also save the session JSON")
def generate_cmd(ckpt_path, task, text, audio_path, ref_path, clip_count, frames,
                 seed, out_path, session_out):
    """Autoregressively generate clips and write a clip container or BVH."""
    model, _, checksum = load_trained_model(ckpt_path)
    schedule = build_schedule(model.config.schedule_steps, model.config.schedule_kind)
    skeleton = model.skeleton
    frames = frames or model.config.max_frames

    session = SessionState("cli", skeleton, seed=seed)
    reference = None
    if ref_path:
        record, _ = read_clip_bytes(Path(ref_path).read_bytes())
        reference = record.features
        session.user_reference = reference

    audio = None
    if audio_path:
        import struct

        blob = Path(audio_path).read_bytes()
        count, dim = struct.unpack_from("<2I", blob, 0)
        audio = np.frombuffer(blob, dtype="<f4", count=count * dim,
                              offset=8).reshape(count, dim)

    for k in range(clip_count):
        bundle = ConditionBundle(text=text)
        masks = MaskSet()
        if task == "s2g" and audio is not None:
            rows = np.zeros((frames, audio.shape[1]), dtype=np.float32)
            rows[: min(frames, len(audio))] = audio[:frames]
            bundle.speech = rows
        if task == "m2d" and audio is not None:
            rows = np.zeros((frames, audio.shape[1]), dtype=np.float32)
            rows[: min(frames, len(audio))] = audio[:frames]
            bundle.music = rows
        if task in TASK_KINDS:
            if reference is None:
                raise click.UsageError(f"task {task} needs --ref")
            data = np.zeros((frames, skeleton.feature_dim), dtype=np.float32)
            rows = min(frames, reference.frame_count)
            data[:rows] = reference.data[-rows:]
            bundle.global_motion = MotionFeatures(data, 30.0)
            spec = TaskMaskSpec(task) if task != "predict" else \
                TaskMaskSpec("predict", prefix_frames=min(30, max(1, frames - 1)))
            masks = MaskSet(task_mask=make_task_mask(spec, skeleton, frames),
                            task_kind=task)
        continue_clip(model, schedule, session, bundle, masks=masks, frames=frames)
        click.echo(f"generated clip {k + 1}/{clip_count}")

    out = Path(out_path)
    if out.suffix == ".bvh":
        from .bvh import write_bvh
        from .pipeline import motion_to_document

        motion = stitch(session)
        out.write_text(write_bvh(motion_to_document(motion, skeleton)),
                       encoding="utf-8")
    else:
        stacked = np.concatenate([c.data for c in session.clips])
        record = ClipRecord(clip_id=out.stem, source_dataset="generated",
                            task="T2M" if task in ("t2m", "predict", "inbetween",
                                                   "complete", "trajectory", "dense")
                            else task.upper(),
                            features=MotionFeatures(stacked, 30.0),
                            captions=[text or task])
        out.write_bytes(write_clip_bytes(record, skeleton))
    if session_out:
        save_session(session, session_out)
    click.echo(f"wrote {out} (model {checksum[:12]})")


@main.command("evaluate")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--embedders", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", default="t2m", show_default=True,
              help="comma list from t2m,gstc,s2g,m2d")
@click.option("--repeats", default=20, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--pool", default=32, show_default=True)
@click.option("--mm-conditions", default=5, show_default=True)
@click.option("--gt-row/--no-gt-row", default=False, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate_cmd(ckpt_path, emb_path, store_path, tasks, repeats, seed, pool,
                 mm_conditions, gt_row, out_path):
    """Run the benchmark battery on the store's test split."""
    model, _, _ = load_trained_model(ckpt_path)
    schedule = build_schedule(model.config.schedule_steps, model.config.schedule_kind)
    embedders, checksum = load_embedders(emb_path)
    store = ClipStore(store_path)
    task_tuple = tuple(t.strip() for t in tasks.split(",") if t.strip())
    report = run_benchmark(model, schedule, store, embedders, repeats=repeats,
                           seed=seed, pool=pool, tasks=task_tuple,
                           mm_conditions=mm_conditions,
                           gt_row=gt_row, embedder_checksum=checksum)
    text = report.to_text()
    Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text)


@main.command("serve")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(exists=True))
@click.option("--bind", default="127.0.0.1:8730", show_default=True)
@click.option("--sessions", "sessions_dir", type=click.Path())
@click.option("--static", "static_dir", type=click.Path())
def serve_cmd(ckpt_path, store_path, bind, sessions_dir, static_dir):
    """Serve the interactive generation API (and the studio UI if built)."""
    import uvicorn

    from .service import create_app

    model, _, checksum = load_trained_model(ckpt_path)
    schedule = build_schedule(model.config.schedule_steps, model.config.schedule_kind)
    store = ClipStore(store_path) if store_path else None
    app = create_app(model, schedule, store=store, sessions_dir=sessions_dir,
                     checkpoint_checksum=checksum, static_dir=static_dir)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


if __name__ == "__main__":
    main()
