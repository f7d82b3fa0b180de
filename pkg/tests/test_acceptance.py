"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and time limits are pinned as module constants. The MNIST check
reads IDX files from ``$KPCANET_MNIST_DIR`` when set; otherwise it converts
the 5000-digit MNIST sample shipped with mlxtend to IDX files and reads them
back through the package's own IDX reader.
"""
import glob
import os
import time

import numpy as np
import pytest
from scipy.linalg import subspace_angles
from scipy.signal import correlate2d

from conftest import record, write_idx_set
from kpcanet import kernels
from kpcanet.classifier import evaluate, train_linear_ovr
from kpcanet.cli import main
from kpcanet.core import Dataset, NetConfig, make_rng, split_dataset
from kpcanet.ingest import read_idx_images, read_idx_labels, write_idx_images, write_idx_labels
from kpcanet.kernels import KINDS, KernelSpec
from kpcanet.kpca import center_gram, learn_filters, project, reconstruct_linear_filters
from kpcanet.network import apply_stage, fit, train_network
from kpcanet.patches import extract_dense
from kpcanet.pooling import Pooler, hash_maps
from kpcanet.synthetic import oriented_stripes

ANGLE_TOL = 1e-6
CENTER_TOL = 1e-9
PSD_TOL = 1e-8
PROJECTION_TOL = 1e-8
RAW_BASELINE_FLOOR = 0.95
MNIST_CEILING = 0.10

STRIPES_NET = dict(patch_rows=5, patch_cols=5, block_rows=8, block_cols=8, train_patch_budget=1000, seed=0)


def _stripes():
    return oriented_stripes(100, seed=101), oriented_stripes(100, seed=202)


def _raw_error(train, test):
    model = train_linear_ovr(train.images.reshape(len(train), -1), train.labels, class_count=train.class_count)
    return evaluate(model, test.images.reshape(len(test), -1), test.labels)[0]


def _kpcanet_error(train, test, cfg):
    model, _ = fit(train, cfg)
    return evaluate(model.classifier, model.features(test.images), test.labels)[0]


def test_criterion_1_linear_filters_span_pca_subspace():
    t0 = time.perf_counter()
    images = make_rng(1).random((20, 16, 16))
    cfg = NetConfig(stages=1, filters_per_stage=(8,), remove_patch_mean=True)
    basis = train_network(images, cfg, make_rng(cfg.seed))[0]
    patches = np.asarray(basis.basis_patches)

    # the basis is a subset of the mean-removed dense patches of the 20 images
    every = np.concatenate([extract_dense(im, 8, 8, remove_patch_mean=True) for im in images])
    known = {row.tobytes() for row in every}
    subset_ok = all(row.tobytes() in known for row in patches)

    centred = patches - patches.mean(axis=0)
    _, vecs = np.linalg.eigh(centred.T @ centred)
    pca = vecs[:, ::-1][:, :8]
    worst = subspace_angles(reconstruct_linear_filters(basis).T, pca).max()
    elapsed = time.perf_counter() - t0
    record(1, "PCANet degeneration", subset_ok and worst < ANGLE_TOL and elapsed < 10,
           f"max principal angle {worst:.2e} rad over M={len(patches)} patches, {elapsed:.1f}s")


def test_criterion_2_centering_identity():
    t0 = time.perf_counter()
    rng = make_rng(2)
    worst = 0.0
    for _ in range(200):
        M, D = int(rng.integers(2, 60)), int(rng.integers(1, 65))
        pts = rng.random((M, D)) * rng.uniform(0.05, 1.0)
        for kind in KINDS:
            K = kernels.gram(KernelSpec(kind), pts)
            Kc = center_gram(K)
            bound = CENTER_TOL * M * np.abs(K).max()
            err = max(np.abs(Kc.sum(axis=0)).max(), np.abs(Kc.sum(axis=1)).max())
            worst = max(worst, err / bound)
    elapsed = time.perf_counter() - t0
    record(2, "centering identity", worst <= 1.0 and elapsed < 30,
           f"worst row/col sum is {worst:.2e} of the bound, 2000 Gram matrices, {elapsed:.1f}s")


def test_criterion_3_psd_gram_matrices():
    t0 = time.perf_counter()
    rng = make_rng(3)
    worst = {}
    for kind in KINDS:
        spec = KernelSpec(kind)
        if not spec.psd_guaranteed:
            continue
        ratios = []
        for scale in (1.0, 0.1, 0.02):
            ev = np.linalg.eigvalsh(kernels.gram(spec, rng.random((50, 64)) * scale))
            ratios.append(ev.min() / ev.max())
        worst[kind] = min(ratios)
    elapsed = time.perf_counter() - t0
    ok = all(r >= -PSD_TOL for r in worst.values()) and "sigmoid" not in worst and elapsed < 30
    low = min(worst, key=worst.get)
    record(3, "PSD Gram matrices", ok,
           f"{len(worst)} kernels, lowest min/max eigenvalue ratio {worst[low]:.2e} ({low}), {elapsed:.1f}s")


def test_criterion_4_hashing_and_pooling_conservation():
    rng = make_rng(4)
    codes_ok = True
    for bits in range(1, 17):
        codes = hash_maps(rng.choice([-1.0, 1.0], size=(bits, 28, 28)))
        codes_ok &= int(codes.min()) >= 0 and int(codes.max()) <= 2 ** bits - 1
    pooler = Pooler(28, 28, 8, 8, 0.5, 8)
    maps = rng.choice([-1.0, 1.0], size=(3, 64, 28, 28))
    feats = pooler(maps)
    blocks = len(pooler.blocks)
    sums = feats.reshape(3, 8, blocks, 256).sum(axis=-1)
    ok = (codes_ok and blocks == 36 and pooler.feature_length(8) == 73728 and feats.shape == (3, 73728)
          and bool(np.all(sums == 64)))
    record(4, "hashing/pooling conservation", ok,
           f"B={blocks}, feature length {feats.shape[1]}, every histogram sums to 64")


@pytest.mark.parametrize("kind", ["linear", "gaussian"])
def test_criterion_5_synthetic_separability(kind):
    t0 = time.perf_counter()
    train, test = _stripes()
    raw_acc = 1.0 - _raw_error(train, test)
    cfg = NetConfig(stages=2, filters_per_stage=(4, 4), kernel=KernelSpec(kind), **STRIPES_NET)
    acc = 1.0 - _kpcanet_error(train, test, cfg)
    elapsed = time.perf_counter() - t0
    record(5, f"stripes separability, {kind}", acc == 1.0 and raw_acc > RAW_BASELINE_FLOOR and elapsed < 120,
           f"test accuracy {acc:.2%}, raw-pixel baseline {raw_acc:.2%}, {elapsed:.1f}s")


def _mnist_idx(tmp_path):
    """Return (images_path, labels_path) for the MNIST source in use."""
    root = os.environ.get("KPCANET_MNIST_DIR")
    if root:
        imgs = sorted(glob.glob(os.path.join(root, "train-images*")))
        labs = sorted(glob.glob(os.path.join(root, "train-labels*")))
        if imgs and labs:
            return imgs[0], labs[0]
    mlx = pytest.importorskip("mlxtend.data")
    X, y = mlx.mnist_data()
    write_idx_images(tmp_path / "mnist-images.idx", X.reshape(-1, 28, 28).astype(np.uint8))
    write_idx_labels(tmp_path / "mnist-labels.idx", y)
    return tmp_path / "mnist-images.idx", tmp_path / "mnist-labels.idx"


@pytest.mark.slow
def test_criterion_6_mnist_desk_scale(tmp_path):
    t0 = time.perf_counter()
    img_path, lab_path = _mnist_idx(tmp_path)
    data = Dataset(read_idx_images(img_path), read_idx_labels(lab_path), 10)
    rng = make_rng(0)
    chosen, _ = split_dataset(data, rng=rng, train_count=4000)
    train, test = split_dataset(chosen, rng=rng, train_count=2000)
    raw = _raw_error(train, test)
    cfg = NetConfig(patch_rows=8, patch_cols=8, filters_per_stage=(8, 8), block_rows=8, block_cols=8,
                    overlap_ratio=0.5, train_patch_budget=3000)
    err = _kpcanet_error(train, test, cfg)
    elapsed = time.perf_counter() - t0
    record(6, "MNIST desk scale", err < raw and err <= MNIST_CEILING and elapsed < 900,
           f"KPCANet error {err:.2%} vs raw-pixel {raw:.2%} on 2000/2000, {elapsed:.1f}s")


def test_criterion_7_determinism(tmp_path):
    train, test = _stripes()
    write_idx_set(tmp_path, "train", train)
    write_idx_set(tmp_path, "test", test)
    (tmp_path / "run.cfg").write_text(
        "stages = 2\nfilters_per_stage = 4, 4\npatch_rows = 5\npatch_cols = 5\ntrain_patch_budget = 1000\n"
        "kernel = gaussian\nseed = 5\ntrain_data = train.manifest\ntest_data = test.manifest\n")
    errors, blobs = [], []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--config", str(tmp_path / "run.cfg"), "--out", str(out)]) == 0
        assert main(["eval", "--model", str(out / "model.kpcn"), "--data", str(tmp_path / "test.manifest"),
                     "--out", str(out)]) == 0
        blobs.append((out / "model.kpcn").read_bytes())
        errors.append((out / "eval_report.jsonl").read_text())
    record(7, "determinism", blobs[0] == blobs[1] and errors[0] == errors[1],
           f"model files {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}, "
           f"eval reports identical={errors[0] == errors[1]}")


def test_criterion_8_projection_consistency():
    rng = make_rng(8)
    X = rng.random((300, 25))
    worst_scores = 0.0
    for kind in KINDS:
        spec = KernelSpec(kind)
        basis = learn_filters(X, spec, 6)
        expected = basis.alphas @ center_gram(kernels.gram(spec, X))
        worst_scores = max(worst_scores, np.abs(project(basis, X) - expected).max())

    lin = learn_filters(X, KernelSpec("linear"), 6)
    img = rng.random((12, 14))
    W = reconstruct_linear_filters(lin)
    mean = np.asarray(lin.basis_patches).mean(axis=0)
    padded = np.pad(img, ((2, 2), (2, 2)))
    conv = np.array([correlate2d(padded, w.reshape(5, 5), mode="valid") - mean @ w for w in W])
    via_project = project(lin, extract_dense(img, 5, 5)).reshape(6, 12, 14)
    via_stage = apply_stage(img, lin, 5, 5)[0]
    worst_conv = max(np.abs(via_project - conv).max(), np.abs(via_stage - conv).max())
    record(8, "projection consistency", worst_scores < PROJECTION_TOL and worst_conv < PROJECTION_TOL,
           f"training scores off by {worst_scores:.2e}, convolution oracle off by {worst_conv:.2e}")


def test_criterion_9_multi_stage():
    train, test = _stripes()
    results = []
    for filters in [(4,), (4, 4), (4, 4, 4)]:
        cfg = NetConfig(stages=len(filters), filters_per_stage=filters, **STRIPES_NET)
        results.append(1.0 - _kpcanet_error(train, test, cfg))
    detail = ", ".join(f"S={s}: {a:.0%}" for s, a in enumerate(results, 1))
    record(9, "multi-stage operability", all(0.0 <= a <= 1.0 for a in results), f"test accuracy {detail}")
