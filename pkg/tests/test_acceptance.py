"""Acceptance gate: one test per release criterion, each at a pinned
tolerance, each printing a single summary line.

Full-corpus image benchmarks are out of scope at this scale; the gate
covers the closed-form identities, the adversarial optimum, gradient
correctness, small-scale end-to-end clustering, the metric oracle, and
run determinism. The IDX smoke test runs only when image files are
available locally (see MNIST_DIR below).
"""

import os
import time

import numpy as np
import pytest

from advclust import cli, clustering, losses
from advclust.cli import gradcheck_cases, lemma1_sweep, lemma2_pairs
from advclust.data import gen_blobs, load_idx_images
from advclust.evaluation import acc_exhaustive, acc_hungarian, \
    clustering_accuracy
from advclust.losses import LN2, GaussianDiag
from advclust.numerics import OptState, mlp_forward
from advclust.training import TrainConfig, build_discriminator, build_encoder, \
    discriminator_step, train_dcan

MNIST_DIR = os.environ.get("ADVCLUST_MNIST_DIR", os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data"))
MNIST_IMAGES = os.path.join(MNIST_DIR, "train-images-idx3-ubyte")
MNIST_LABELS = os.path.join(MNIST_DIR, "train-labels-idx1-ubyte")

IDENTITY_TOL = 1e-12
MC_TOL = 5e-3
DISC_GRID_TOL = 0.05
GRAD_TOL = 1e-4
E2E_ACC_FLOOR = 0.95
E2E_SEEDS = (1, 6, 8)
KLD_GAP_FLOOR = 0.01
JSD_SYM_TOL = 1e-10


def _report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")


def test_criterion_1_unit_variance_kld_equals_euclidean_loss():
    t0 = time.perf_counter()
    worst = lemma1_sweep(pairs=1000, max_dim=16, seed=0)
    elapsed = time.perf_counter() - t0
    ok = worst <= IDENTITY_TOL and elapsed < 1.0
    _report(1, ok, f"max |kld - abc| = {worst:.3e} over 1000 pairs "
                   f"(tol {IDENTITY_TOL:.0e}), {elapsed:.2f}s")
    assert worst <= IDENTITY_TOL
    assert elapsed < 1.0


def test_criterion_2_objective_at_optimal_discriminator_is_2jsd_minus_2ln2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for p, q in lemma2_pairs(20, seed=0):
        target = 2.0 * losses.jsd_quadrature(p, q) - 2.0 * LN2
        measured = losses.optimal_objective_monte_carlo(p, q, 1_000_000, rng)
        worst = max(worst, abs(measured - target))
    elapsed = time.perf_counter() - t0
    ok = worst <= MC_TOL and elapsed < 30.0
    _report(2, ok, f"worst |objective - (2 JSD - 2 ln 2)| = {worst:.3e} "
                   f"over 20 pairs at 1e6 samples (tol {MC_TOL:.0e}), {elapsed:.1f}s")
    assert worst <= MC_TOL
    assert elapsed < 30.0


def test_criterion_3_trained_discriminator_approximates_density_ratio():
    t0 = time.perf_counter()
    p = GaussianDiag([-1.0], [1.0])
    q = GaussianDiag([1.0], [1.0])
    rng = np.random.default_rng(0)
    disc = build_discriminator([1, 16, 1], rng)
    state = OptState.fresh(disc, lr=1e-3, momentum=0.9)
    for _ in range(2000):
        z_pos = p.sample(64, rng)
        z_neg = q.sample(64, rng)
        disc, state, _, _, _ = discriminator_step(disc, state, z_pos, z_neg)

    grid = np.linspace(-4.0, 4.0, 41)[:, None]
    d, _ = mlp_forward(disc, grid)
    target = losses.optimal_discriminator(p, q, grid)
    err = float(np.abs(d[:, 0] - target).mean())
    elapsed = time.perf_counter() - t0
    ok = err <= DISC_GRID_TOL and elapsed < 60.0
    _report(3, ok, f"mean |D(z) - p/(p+q)| = {err:.4f} on 41-point grid "
                   f"(tol {DISC_GRID_TOL}), {elapsed:.1f}s")
    assert err <= DISC_GRID_TOL
    assert elapsed < 60.0


def test_criterion_4_all_losses_pass_finite_difference_checks():
    results = list(gradcheck_cases(seed=0))
    worst_name, worst_err = max(((n, e) for n, e, _ in results),
                                key=lambda t: t[1])
    ok = len(results) == 6 and worst_err < GRAD_TOL
    _report(4, ok, f"{len(results)} losses checked, worst relative error "
                   f"{worst_err:.3e} ({worst_name}, tol {GRAD_TOL:.0e})")
    assert len(results) == 6
    for name, err, _ in results:
        assert err < GRAD_TOL, name


def test_criterion_5_end_to_end_beats_raw_kmeans_on_blobs():
    t0 = time.perf_counter()
    finals, baselines = [], []
    for seed in E2E_SEEDS:
        ds = gen_blobs(3, 10, 300, separation=1.0, sigma=0.07, seed=100 + seed)
        config = TrainConfig(encoder_layers=[10, 16, 2],
                             discriminator_layers=[2, 16, 1], k=3, seed=seed)
        encoder, model, history = train_dcan(ds, config)
        finals.append(history.records[-1].acc)

        rng = np.random.default_rng(seed)
        untrained = build_encoder([10, 16, 2], rng)
        z0, _ = mlp_forward(untrained, ds.features)
        _, assign0 = clustering.kmeans(z0, 3, np.random.default_rng(seed))
        baselines.append(clustering_accuracy(assign0, ds.labels))
    elapsed = time.perf_counter() - t0

    ok = all(f >= E2E_ACC_FLOOR and f > b for f, b in zip(finals, baselines)) \
        and elapsed < 300.0
    detail = ", ".join(f"seed {s}: ACC {f:.4f} vs baseline {b:.4f}"
                       for s, f, b in zip(E2E_SEEDS, finals, baselines))
    _report(5, ok, f"{detail} (floor {E2E_ACC_FLOOR}), {elapsed:.0f}s")
    for seed, f, b in zip(E2E_SEEDS, finals, baselines):
        assert f >= E2E_ACC_FLOOR, f"seed {seed}"
        assert f > b, f"seed {seed}"
    assert elapsed < 300.0


@pytest.mark.skipif(not (os.path.exists(MNIST_IMAGES)
                         and os.path.exists(MNIST_LABELS)),
                    reason="IDX image files not available")
def test_criterion_6_idx_digits_smoke():
    t0 = time.perf_counter()
    full = load_idx_images(MNIST_IMAGES, MNIST_LABELS, downsample="2x")
    keep = np.isin(full.labels, (0, 1, 2))
    features = full.features[keep][:1000]
    labels = full.labels[keep][:1000]
    from advclust.data import Dataset
    ds = Dataset(features, labels, 3, provenance="idx-subset")

    _, raw_assign = clustering.kmeans(ds.features, 3, np.random.default_rng(0))
    raw_acc = clustering_accuracy(raw_assign, ds.labels)

    wins = 0
    accs = []
    for seed in (0, 1, 2):
        config = TrainConfig(encoder_layers=[196, 256, 16],
                             discriminator_layers=[16, 16, 1], k=3, seed=seed)
        _, _, history = train_dcan(ds, config)
        acc = history.records[-1].acc
        accs.append(acc)
        wins += acc >= raw_acc + 0.05
    elapsed = time.perf_counter() - t0
    ok = wins >= 2 and elapsed < 900.0
    _report(6, ok, f"digit ACCs {[f'{a:.3f}' for a in accs]} vs raw-pixel "
                   f"k-means {raw_acc:.3f}; {wins}/3 seeds win by 0.05, {elapsed:.0f}s")
    assert wins >= 2
    assert elapsed < 900.0


def test_criterion_7_hungarian_matches_exhaustive_exactly():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(2, 9))
        c = int(rng.integers(2, 9))
        table = rng.integers(0, 30, size=(k, c))
        if table.sum() == 0:
            table[0, 0] = 1
        assert acc_hungarian(table) == acc_exhaustive(table)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 10.0
    _report(7, ok, f"1000 random contingency tables (K,C <= 8) agree exactly, "
                   f"{elapsed:.1f}s")
    assert elapsed < 10.0


def test_criterion_8_kld_asymmetric_jsd_symmetric():
    p = GaussianDiag([0.0], [1.0])
    q = GaussianDiag([0.0], [0.25])
    gap = abs(losses.kld_diag_gaussians(p, q) - losses.kld_diag_gaussians(q, p))
    sym = abs(losses.jsd_quadrature(p, q) - losses.jsd_quadrature(q, p))
    ok = gap > KLD_GAP_FLOOR and sym <= JSD_SYM_TOL
    _report(8, ok, f"KLD gap {gap:.4f} (> {KLD_GAP_FLOOR}), "
                   f"JSD asymmetry {sym:.1e} (<= {JSD_SYM_TOL:.0e})")
    assert gap > KLD_GAP_FLOOR
    assert sym <= JSD_SYM_TOL


def test_criterion_9_repeated_runs_emit_identical_history_logs(tmp_path):
    data = str(tmp_path / "blobs.csv")
    assert cli.main(["synth", "--output", data, "--separation", "1.0",
                     "--sigma", "0.07", "--seed", "101"]) == cli.EXIT_OK
    config = tmp_path / "run.cfg"
    config.write_text("encoder_layers = 10,16,2\n"
                      "discriminator_layers = 2,16,1\n"
                      "k = 3\niterations = 50\nseed = 1\n")
    logs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert cli.main(["train", "--config", str(config), "--dataset", data,
                         "--out", out]) == cli.EXIT_OK
        with open(os.path.join(out, "history.jsonl"), "rb") as f:
            logs.append(f.read())
    ok = logs[0] == logs[1]
    _report(9, ok, f"two runs, {len(logs[0])} bytes of history each, "
                   f"byte-identical = {ok}")
    assert ok
