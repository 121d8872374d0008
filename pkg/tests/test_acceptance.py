"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured value against its pinned tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from motiongen import fixtures
from motiongen import rotations as rot
from motiongen.bvh import parse_bvh, structurally_equal, write_bvh
from motiongen.conditions import ConditionBundle, MaskSet
from motiongen.curriculum import (
    CurriculumSpec,
    StageSpec,
    TrainingData,
    load_trained_model,
    lr_at,
    train_curriculum,
)
from motiongen.diffusion import ddpm_sample, q_sample, training_loss
from motiongen.evaluation import (
    EmbedderConfig,
    contrastive_loss,
    fid,
    retrieval_metrics,
    run_benchmark,
    train_embedders,
)
from motiongen.features import (
    FeatureLayout,
    MotionFeatures,
    extract_features,
    recover_motion,
)
from motiongen.generate import SessionState, continue_clip
from motiongen.kinematics import forward_kinematics
from motiongen.masks import TaskMaskSpec, make_task_mask
from motiongen.model import Denoiser, ModelConfig, build_denoiser
from motiongen.pipeline import motion_to_document, normalize_clip, resample, segment
from motiongen.schedule import build_schedule
from motiongen.skeleton import feature_dim
from motiongen.store import ClipRecord


def criterion(name: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# rotation / FK suite


def test_rotation_fk_suite(desk):
    start = time.time()
    rng = np.random.default_rng(0)
    q = rng.normal(size=(10_000, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)

    worst = 0.0
    forms = ["sixd", "matrix", "quaternion", "axis_angle"]
    for src, dst in zip(forms, forms[1:] + forms[:1]):
        a = rot.convert_rotation(q, "quaternion", src)
        b = rot.convert_rotation(a, src, dst)
        c = rot.convert_rotation(b, dst, src)
        err = rot.rotation_angle_between(
            rot.convert_rotation(a, src, "quaternion"),
            rot.convert_rotation(c, src, "quaternion")).max()
        worst = max(worst, float(err))

    quats = rng.normal(size=(desk.rotated_count, 4))
    quats /= np.linalg.norm(quats, axis=-1, keepdims=True)
    g = rng.normal(size=4)
    g /= np.linalg.norm(g)
    t = rng.normal(size=3)
    base = forward_kinematics(desk, t, quats)
    spun = quats.copy()
    spun[desk.rotated_slot(0)] = rot.quat_multiply(g, spun[desk.rotated_slot(0)])
    moved = forward_kinematics(desk, rot.quat_apply(g, t), spun)
    fk_err = float(np.abs(moved - rot.quat_apply(g, base)).max())

    elapsed = time.time() - start
    criterion("rotation round trips < 1e-6 rad over 1e4 rotations",
              worst < 1e-6, f"max angular error {worst:.3e}")
    criterion("FK rigid equivariance exact to 1e-9",
              fk_err < 1e-9, f"max position error {fk_err:.3e}")
    criterion("rotation/FK suite runtime < 5 s", elapsed < 5.0, f"{elapsed:.2f} s")


# ---------------------------------------------------------------------------
# representation oracle


def test_representation_oracle(desk, whole_body):
    d_paper = feature_dim(127, 53)
    d_desk = feature_dim(24, 24)
    criterion("feature dimension formula", d_paper == 1185 and d_desk == 393,
              f"D(127,53)={d_paper}, D(24,24)={d_desk}")

    worst = 0.0
    for maker in (fixtures.walk_clip, fixtures.turn_clip):
        clip = maker(desk, frames=150)
        feats = extract_features(clip, desk)
        root_slot = desk.rotated_slot(0)
        yaw0, _ = rot.yaw_twist_split(clip.local_rotations[0, root_slot], desk.up_index)
        lat, fwd = desk.plane_indices
        rec = recover_motion(feats, desk, initial_yaw=float(yaw0),
                             initial_xz=(clip.root_translation[0, lat],
                                         clip.root_translation[0, fwd]))
        p0 = forward_kinematics(desk, clip.root_translation, clip.local_rotations)
        p1 = forward_kinematics(desk, rec.root_translation, rec.local_rotations)
        worst = max(worst, float(np.abs(p0 - p1).max()))
    criterion("recover(extract) joint positions within 1e-4 m on 150-frame clips",
              worst < 1e-4, f"max position error {worst:.3e} m")


# ---------------------------------------------------------------------------
# ingestion suite


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory, desk):
    path = tmp_path_factory.mktemp("accept_corpus")
    fixtures.write_fixture_corpus(path, desk, sequence_frames=90)
    return path


def _store_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != ".lock":
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_ingestion_suite(tmp_path, desk, small_corpus):
    ok_round = True
    for bvh_path in sorted(small_corpus.rglob("*.bvh"))[:4]:
        doc = parse_bvh(bvh_path.read_text())
        ok_round &= structurally_equal(doc, parse_bvh(write_bvh(doc)))
    criterion("BVH parse/serialize round trip on fixture corpus", ok_round,
              "structural equality holds")

    motion = fixtures.walk_clip(desk, frames=120, fps=24.0)
    out = resample(motion, 30.0)
    criterion("resample 24 to 30 fps frame count exact",
              out.frame_count == 150 and out.fps == 30.0,
              f"120@24fps -> {out.frame_count}@30fps")

    clip = fixtures.walk_clip(desk, frames=30, heading=0.9)
    once = normalize_clip(clip, desk)
    twice = normalize_clip(once, desk)
    norm_err = float(np.abs(once.root_translation - twice.root_translation).max())
    criterion("normalize_clip idempotent", norm_err < 1e-9,
              f"second-pass drift {norm_err:.2e}")

    lengths = {}
    for frames in (149, 150, 151, 179, 180):
        pieces = segment(fixtures.walk_clip(desk, frames=frames))
        lengths[frames] = [p.frame_count for p in pieces]
    expected = {149: [149], 150: [150], 151: [150], 179: [150], 180: [150, 30]}
    criterion("segmentation boundary cases per rule", lengths == expected,
              f"{lengths}")

    from motiongen.ingest import RetargetPlan, ingest_directory

    plan = RetargetPlan.identity(desk)
    a = ingest_directory(small_corpus, desk, plan, tmp_path / "sa", seed=7,
                         test_per_dataset=2)
    b = ingest_directory(small_corpus, desk, plan, tmp_path / "sb", seed=7,
                         test_per_dataset=2)
    same = _store_digest(a.root) == _store_digest(b.root)
    criterion("deterministic store bytes under fixed seed", same,
              f"sha256 {_store_digest(a.root)[:12]} twice")


# ---------------------------------------------------------------------------
# diffusion correctness


def test_diffusion_correctness(desk):
    schedule = build_schedule(50, "cosine")
    n = 100_000
    gen = torch.Generator().manual_seed(0)
    noise = torch.randn(n, 1, 1, generator=gen, dtype=torch.float64)
    x0 = torch.full((n, 1, 1), 0.7, dtype=torch.float64)
    draws = q_sample(x0, 25, noise, schedule).squeeze()
    ab = float(schedule.alpha_bar(25))
    se_mean = np.sqrt((1 - ab) / n)
    se_var = (1 - ab) * np.sqrt(2.0 / (n - 1))
    mean_err = abs(draws.mean().item() - np.sqrt(ab) * 0.7)
    var_err = abs(draws.var(correction=1).item() - (1 - ab))
    criterion("q_sample moments within 3 SE over 1e5 draws",
              mean_err < 3 * se_mean and var_err < 3 * se_var,
              f"mean err {mean_err:.2e} (3SE {3*se_mean:.2e}), "
              f"var err {var_err:.2e} (3SE {3*se_var:.2e})")

    # finite-difference gradient check, 64-bit, desk configuration
    torch.manual_seed(0)
    model = build_denoiser(ModelConfig(max_frames=6, max_text_tokens=4),
                           desk, seed=1).double()
    model.eval()
    rng = np.random.default_rng(0)
    x = torch.tensor(rng.normal(size=(1, 4, desk.feature_dim)), dtype=torch.float64)
    bundle = ConditionBundle(text="walk fast")
    t = torch.tensor([3])

    def objective():
        prefix, mask = model.build_prefix([bundle])
        return (model.denoise(x, t, prefix, mask) ** 2).sum()

    loss = objective()
    model.zero_grad()
    loss.backward()
    eps, atol = 1e-6, 1e-5
    worst_rel = 0.0
    for name, param in model.named_parameters():
        if param.grad is None:   # unused condition channels get no gradient
            continue
        flat, gflat = param.data.view(-1), param.grad.view(-1)
        for c in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            orig = flat[c].item()
            flat[c] = orig + eps
            with torch.no_grad():
                up = objective().item()
            flat[c] = orig - eps
            with torch.no_grad():
                down = objective().item()
            flat[c] = orig
            fd = (up - down) / (2 * eps)
            an = gflat[c].item()
            err = abs(fd - an)
            assert err <= atol + 1e-4 * max(abs(fd), abs(an)), name
            if max(abs(fd), abs(an)) > 1e-3:
                worst_rel = max(worst_rel, err / max(abs(fd), abs(an)))
    criterion("full-model finite-difference gradient check < 1e-4 relative",
              worst_rel < 1e-4, f"worst relative error {worst_rel:.2e}")

    # oracle-denoiser sampler exactness
    class Oracle(Denoiser):
        def __init__(self, config, skeleton, clip):
            super().__init__(config, skeleton)
            self.register_buffer("clip", clip)

        def denoise(self, x_t, t_, prefix, mask, frame_valid=None):
            return self.clip[None].expand(x_t.shape[0], -1, -1).to(x_t.dtype)

    clip = torch.tensor(extract_features(
        fixtures.walk_clip(desk, frames=8), desk).data)
    exact = True
    for steps in (10, 50):
        for kind in ("linear", "cosine"):
            sched = build_schedule(steps, kind)
            oracle = Oracle(ModelConfig(max_frames=16, schedule_steps=steps), desk, clip)
            out = ddpm_sample(oracle, ConditionBundle(), MaskSet(), sched,
                              frames=8, seed=4)
            exact &= torch.equal(out, clip)
    criterion("oracle-denoiser sampler returns the oracle clip exactly "
              "(T in {10,50}, both schedules)", exact, "bit-equal")

    # GSTC projection for all five kinds
    model32 = build_denoiser(ModelConfig(max_frames=16, schedule_steps=10), desk, seed=0)
    sched = build_schedule(10, "cosine")
    layout = FeatureLayout(desk)
    condition = torch.tensor(extract_features(
        fixtures.walk_clip(desk, frames=8), desk).data)
    all_exact = True
    for kind, kwargs in (("predict", {"prefix_frames": 3}),
                         ("inbetween", {"prefix_frames": 2, "suffix_frames": 2}),
                         ("complete", {"cells": ((0, 0), (5, 7))}),
                         ("trajectory", {}),
                         ("dense", {})):
        joint_mask = make_task_mask(TaskMaskSpec(kind, **kwargs), desk, 8)
        mode = "trajectory" if kind == "trajectory" else "full"
        cols = torch.tensor(layout.expand_joint_mask(joint_mask, root_columns=mode))
        masks = MaskSet(task_mask=joint_mask, task_kind=kind)
        bundle = ConditionBundle(global_motion=MotionFeatures(
            condition.numpy().copy(), 30.0))
        out = ddpm_sample(model32, bundle, masks, sched, frames=8, seed=2,
                          observed_values=condition, observed_mask=cols)
        all_exact &= torch.equal(out[cols], condition[cols])
    criterion("GSTC projection: observed cells bit-equal for all five kinds",
              all_exact, "projection exact")


# ---------------------------------------------------------------------------
# mask soundness


def test_mask_soundness(desk):
    model = build_denoiser(ModelConfig(max_frames=16, schedule_steps=10), desk, seed=0)
    schedule = build_schedule(10, "cosine")
    feats = extract_features(fixtures.walk_clip(desk, frames=8), desk)
    x = torch.tensor(feats.data)[None].float()

    with torch.no_grad():
        prefix, mask = model.build_prefix([ConditionBundle(text="wave")])
        out_a = model.denoise(x, torch.tensor([2]), prefix, mask)
        poisoned = prefix.clone()
        poisoned[~mask] = 1e6
        out_b = model.denoise(x, torch.tensor([2]), poisoned, mask)
    attn_err = float((out_a - out_b).abs().max())
    criterion("output invariance to masked prefix-token content (1e-12)",
              attn_err <= 1e-12, f"max difference {attn_err:.2e}")

    layout = FeatureLayout(desk)
    joint_mask = np.ones((8, desk.joint_count), dtype=bool)
    joint_mask[:, list(desk.hand_joints)] = False
    masksets = [MaskSet(recon_mask=joint_mask)]
    bundles = [ConditionBundle(text="wave")]

    grads = []
    for delta in (0.0, 77.0):
        x0 = torch.tensor(feats.data)[None].float()
        for j in desk.hand_joints:
            x0[:, :, layout.joint_columns(j)] += delta
        model.zero_grad()
        loss = training_loss(model, x0, bundles, masksets, schedule,
                             torch.Generator().manual_seed(6))
        loss.backward()
        grads.append(torch.cat([p.grad.flatten() for p in model.parameters()
                                if p.grad is not None]))
    grad_err = float((grads[0] - grads[1]).abs().max())
    criterion("loss gradient invariance to GT at recon-masked cells (1e-12)",
              grad_err <= 1e-12, f"max gradient difference {grad_err:.2e}")


# ---------------------------------------------------------------------------
# curriculum


def test_curriculum_criteria(tmp_path, desk):
    spec = CurriculumSpec.paper_default(sigma=1.0)
    budgets = [spec.scaled_steps(s) for s in spec.stages]
    batches = [s.batch_size for s in spec.stages]
    criterion("stage budgets and batch sizes at sigma=1",
              budgets == [460_000, 460_000, 230_000, 920_000]
              and batches == [48, 48, 48, 16],
              f"budgets {budgets}, batches {batches}")

    horizon = spec.decay_horizon
    endpoints_ok = (abs(lr_at(0, horizon) - 1e-4) < 1e-12
                    and abs(lr_at(horizon, horizon) - 1e-5) < 1e-12
                    and abs(lr_at(horizon // 2, horizon) - 5.5e-5) < 1e-9)
    criterion("lr endpoints 1e-4 -> 1e-5 with per-stage reset", endpoints_ok,
              f"lr(0)={lr_at(0, horizon):.1e}, lr(H)={lr_at(horizon, horizon):.1e}, "
              f"lr(H/2)={lr_at(horizon // 2, horizon):.3e}")

    # resume equivalence, bit-exact
    config = ModelConfig(layers=1, heads=2, d_model=24, ff_dim=48,
                         max_frames=24, max_text_tokens=8, schedule_steps=10)
    curriculum = CurriculumSpec(stages=(StageSpec("text", ("text",), 6, 2),),
                                sigma=1.0)
    records = []
    for i in range(4):
        feats = extract_features(fixtures.walk_clip(desk, frames=24,
                                                    speed=0.01 + 0.01 * i), desk)
        records.append(ClipRecord(clip_id=f"r{i}", source_dataset="fix", task="T2M",
                                  features=feats, captions=[f"clip {i}"],
                                  face_present=True))
    data = TrainingData(desk, records, {})

    train_curriculum(config, desk, curriculum, store=None,
                     out_dir=tmp_path / "full", seed=2, data=data)

    import motiongen.curriculum as cur

    real, calls = cur.training_loss, {"n": 0}

    def interrupting(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 4:
            raise KeyboardInterrupt
        return real(*args, **kwargs)

    cur.training_loss = interrupting
    try:
        with pytest.raises(KeyboardInterrupt):
            train_curriculum(config, desk, curriculum, store=None,
                             out_dir=tmp_path / "part", seed=2, data=data,
                             checkpoint_every=3)
    finally:
        cur.training_loss = real
    train_curriculum(config, desk, curriculum, store=None,
                     out_dir=tmp_path / "resumed", seed=2, data=data,
                     resume=tmp_path / "part" / "latest.ckpt")

    full = (tmp_path / "full" / "train.log").read_text().splitlines()
    part = (tmp_path / "part" / "train.log").read_text().splitlines()
    resumed = (tmp_path / "resumed" / "train.log").read_text().splitlines()
    criterion("resume-equivalence bit-exact",
              part == full[:3] and resumed == full[3:],
              f"{len(part)} + {len(resumed)} steps == {len(full)}")


# ---------------------------------------------------------------------------
# overfit reproduction (trains the desk model once for this module)


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory, desk):
    corpus = fixtures.overfit_corpus(desk, frames=32)
    records = []
    for i, (caption, clip) in enumerate(corpus):
        feats = extract_features(clip, desk)
        records.append(ClipRecord(clip_id=f"o{i}", source_dataset="overfit",
                                  task="T2M", features=feats, captions=[caption],
                                  face_present=True))
    data = TrainingData(desk, records, {})
    config = ModelConfig(max_frames=32, max_text_tokens=8)  # desk: 2 layers, d96, T=50
    curriculum = CurriculumSpec(stages=(
        StageSpec("text", ("text",), 2000, 8, dropout=0.1),), sigma=1.0)
    out_dir = tmp_path_factory.mktemp("overfit")
    start = time.time()
    ckpt = train_curriculum(config, desk, curriculum, store=None,
                            out_dir=out_dir, seed=11, data=data)
    elapsed = time.time() - start
    model, _, _ = load_trained_model(ckpt)
    losses = [float(line.split("loss=")[1].split()[0])
              for line in (out_dir / "train.log").read_text().splitlines()]
    return model, records, losses, elapsed


def test_overfit_loss_under_budget(overfit_run):
    model, records, losses, elapsed = overfit_run
    reached = next((i for i, v in enumerate(losses) if v < 0.01), None)
    criterion("overfit loss < 0.01 within 2000 steps",
              reached is not None, f"first step under 0.01: {reached}, "
              f"final {losses[-1]:.4f}, wall time {elapsed:.0f} s")
    criterion("overfit trains in < 10 min", elapsed < 600, f"{elapsed:.0f} s")


def test_overfit_sampling_recovers_clips(overfit_run, desk):
    model, records, _, _ = overfit_run
    schedule = build_schedule(50, "cosine")
    worst = 0.0
    for i, record in enumerate(records):
        sample = ddpm_sample(model, ConditionBundle(text=record.captions[0]),
                             MaskSet(), schedule, frames=32, seed=100 + i)
        mse = float(np.mean((sample.numpy() - record.features.data) ** 2))
        worst = max(worst, mse)
    criterion("caption-conditioned sampling recovers clips (MSE < 0.05)",
              worst < 0.05, f"worst clip MSE {worst:.4f}")


@pytest.fixture(scope="module")
def loop_run(tmp_path_factory, desk):
    loop = fixtures.looping_walk(desk, period_frames=30, loops=2)
    pieces = segment(loop, clip_frames=30, min_remainder=30)
    records, prev = [], None
    for i, piece in enumerate(pieces):
        feats = extract_features(piece, desk)
        records.append(ClipRecord(clip_id=f"loop{i}", source_dataset="loop",
                                  task="T2M", features=feats,
                                  captions=["a person walks a repeating loop"],
                                  prev_clip_id=prev, face_present=True))
        prev = f"loop{i}"
    data = TrainingData(desk, records, {})
    config = ModelConfig(max_frames=32, max_text_tokens=8)
    curriculum = CurriculumSpec(stages=(
        StageSpec("text", ("text",), 800, 2, dropout=0.1),
        StageSpec("reference", ("text", "reference"), 800, 2, dropout=0.1),
    ), sigma=1.0)
    out_dir = tmp_path_factory.mktemp("loop")
    ckpt = train_curriculum(config, desk, curriculum, store=None,
                            out_dir=out_dir, seed=3, data=data)
    model, _, _ = load_trained_model(ckpt)
    return model, records


def test_overfit_loop_continuation(loop_run, desk):
    model, records = loop_run
    schedule = build_schedule(50, "cosine")
    session = SessionState("loop", desk, seed=5,
                           user_reference=MotionFeatures(
                               records[0].features.data.copy(), 30.0))
    out = continue_clip(model, schedule, session,
                        ConditionBundle(text="a person walks a repeating loop"),
                        frames=30)
    boundary_mse = float(np.mean((out.data[0] - records[1].features.data[0]) ** 2))
    criterion("continue_clip boundary pose MSE < 0.05 on the loop fixture",
              boundary_mse < 0.05, f"frame-0 MSE {boundary_mse:.5f}")


# ---------------------------------------------------------------------------
# metrics


def test_metric_criteria(desk, tmp_path):
    cases = [
        (np.array([1.0, 2, 3]), np.array([1.0, 2, 3]), 0, 0.0),
        (np.array([0.0]), np.array([12.0]), 1, 0.0),
        (np.array([3.0, 4]), np.array([0.0, 0]), 0, 25.0),
        (np.array([3.0, 4]), np.array([0.0, 0]), 1, 25.0),
        (np.array([2.0]), np.array([0.0]), 0, 4.0),
        (np.array([7.0]), np.array([0.0]), 1, 9.0),
    ]
    exact = all(contrastive_loss(a, b, y, 10.0).item() == e for a, b, y, e in cases)
    criterion("contrastive loss matches the 6-case hand table exactly", exact,
              "all cases equal")

    rng = np.random.default_rng(0)
    a = rng.normal(size=(500, 8))
    self_fid = fid(a, a)
    criterion("fid(A,A) = 0 +- 1e-8", abs(self_fid) < 1e-8, f"{self_fid:.2e}")

    m = 2.0
    b = rng.normal(size=(10_000, 16))
    c = rng.normal(size=(10_000, 16))
    c[:, 0] += m
    shifted = fid(b, c)
    criterion("shifted-Gaussian FID within 5% of |dmu|^2 at 1e4 samples",
              abs(shifted - m * m) / (m * m) < 0.05,
              f"fid {shifted:.4f} vs {m * m}")

    text = rng.normal(size=(512, 4))
    motion = rng.normal(size=(512, 4))
    out = retrieval_metrics(text, motion, batch=32, pools=10_000,
                            rng=np.random.default_rng(1))
    p1 = 1 / 32
    se1 = np.sqrt(p1 * (1 - p1) / 10_000)
    criterion("random-embedding R@1 = 1/32 +- 3 SE",
              abs(out["r1"] - p1) < 3 * se1,
              f"R@1 {out['r1']:.4f} vs {p1:.4f} (3SE {3*se1:.4f})")
    ordered = True
    for trial in range(5):
        o = retrieval_metrics(rng.normal(size=(64, 6)), rng.normal(size=(64, 6)),
                              batch=32, rng=np.random.default_rng(trial))
        ordered &= o["r1"] <= o["r2"] <= o["r3"]
    criterion("R@1 <= R@2 <= R@3 universally", ordered, "ordering holds")


@pytest.fixture(scope="module")
def fixture_store(tmp_path_factory, desk):
    from motiongen.store import ClipStore, build_manifest

    store = ClipStore(tmp_path_factory.mktemp("accept_store") / "store")
    store.initialize(desk)
    records = []
    makers = [
        lambda i: fixtures.walk_clip(desk, frames=24, speed=0.01 + 0.003 * i),
        lambda i: fixtures.gesture_clip(desk, frames=24, amplitude=0.5 + 0.05 * i),
    ]
    captions = ["a person walks forward pace {}", "a person waves the arms take {}"]
    for g in range(2):
        for i in range(10):
            feats = extract_features(makers[g](i), desk)
            records.append(ClipRecord(
                clip_id=f"g{g}_{i}", source_dataset=f"set{g}", task="T2M",
                features=feats, captions=[captions[g].format(i)],
                face_present=True))
    manifest, updated = build_manifest(records, test_per_dataset=5, seed=1)
    with store.writer_lock():
        for r in updated:
            store.write_clip(r, desk)
        store.write_manifest(manifest)
    return store


def test_benchmark_criteria(desk, fixture_store):
    records = [fixture_store.read_clip(c) for c in fixture_store.clip_ids("train")]
    config = EmbedderConfig(embed_dim=8, d_model=32, layers=1, heads=2,
                            ff_dim=64, epochs=25, batch_size=8, lr=2e-3)
    pair, _ = train_embedders(records, desk, config, seed=0)
    model = build_denoiser(ModelConfig(max_frames=24, schedule_steps=5), desk, seed=0)
    schedule = build_schedule(5, "cosine")

    report = run_benchmark(model, schedule, fixture_store, pair, repeats=20,
                           seed=3, pool=10, gt_row=True, mm_conditions=0,
                           embedder_checksum="accept")
    has_cis = all(len(v) == 2 for v in report.metrics.values())
    criterion("benchmark runs 20 repeats with 95% CIs",
              report.repeats == 20 and has_cis,
              f"repeats {report.repeats}, metrics {sorted(report.metrics)}")
    gt_fid = report.metrics["t2m/fid"][0]
    criterion("GT-vs-GT FID < 0.05 on the fixture store", gt_fid < 0.05,
              f"fid {gt_fid:.2e}")


# ---------------------------------------------------------------------------
# end-to-end CLI


def test_end_to_end_cli(tmp_path, desk):
    from click.testing import CliRunner

    from motiongen.cli import main as cli_main

    start = time.time()
    runner = CliRunner()
    work = tmp_path

    def run(args):
        result = runner.invoke(cli_main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result.output

    run(["fixtures", "--out", str(work / "fx"), "--frames", "90"])

    # shrink the curriculum for the desk run: same proportions, tiny sigma
    from motiongen.curriculum import save_curriculum

    save_curriculum(CurriculumSpec.paper_default(sigma=20 / 460_000),
                    work / "fx" / "curriculum.cfg")
    from motiongen.model import load_config, save_config

    config = load_config(work / "fx" / "model.cfg")
    config.max_frames = 90
    save_config(config, work / "fx" / "model.cfg")

    run(["ingest", "--input", str(work / "fx" / "bvh"),
         "--skeleton", str(work / "fx" / "skeleton.json"),
         "--retarget", str(work / "fx" / "retarget.json"),
         "--out", str(work / "store"), "--seed", "7"])
    run(["manifest", "--store", str(work / "store"), "--test-per-dataset", "2",
         "--seed", "7"])
    run(["train", "--store", str(work / "store"),
         "--config", str(work / "fx" / "model.cfg"),
         "--curriculum", str(work / "fx" / "curriculum.cfg"),
         "--out", str(work / "run"), "--seed", "7"])
    run(["generate", "--ckpt", str(work / "run" / "latest.ckpt"),
         "--text", "a person walks forward", "--clips", "2", "--seed", "9",
         "--frames", "30", "--out", str(work / "out.bvh")])
    assert (work / "out.bvh").exists()
    run(["train-embedders", "--store", str(work / "store"),
         "--out", str(work / "emb.ckpt"), "--embed-dim", "8", "--epochs", "15"])
    run(["evaluate", "--ckpt", str(work / "run" / "latest.ckpt"),
         "--embedders", str(work / "emb.ckpt"), "--store", str(work / "store"),
         "--repeats", "3", "--seed", "7", "--mm-conditions", "2",
         "--out", str(work / "report_a.txt")])
    run(["evaluate", "--ckpt", str(work / "run" / "latest.ckpt"),
         "--embedders", str(work / "emb.ckpt"), "--store", str(work / "store"),
         "--repeats", "3", "--seed", "7", "--mm-conditions", "2",
         "--out", str(work / "report_b.txt")])

    elapsed = time.time() - start
    identical = (work / "report_a.txt").read_bytes() == (work / "report_b.txt").read_bytes()
    criterion("end-to-end CLI ingest->train->generate->evaluate < 15 min",
              elapsed < 900, f"{elapsed:.0f} s")
    criterion("end-to-end report deterministic", identical,
              "evaluate twice gives identical bytes")
