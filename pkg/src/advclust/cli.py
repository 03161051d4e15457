"""Command-line driver.

Subcommands: train, eval, gradcheck, lemma-check, synth.
Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime divergence.

The config file is flat ``key = value`` text mirroring TrainConfig field
names exactly; unknown keys are rejected. CLI flags override file values
and the seed precedence is flag > file > default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import clustering, losses, report, serialize
from .data import Dataset, FormatError, gen_blobs, load_dense_features, \
    load_idx_images, save_dense_features
from .evaluation import clustering_accuracy, summarize_run
from .losses import GaussianDiag
from .numerics import GradBundle, finite_diff_grad, max_relative_error, mlp_forward
from .training import (ConfigError, DivergenceError, TrainConfig,
                       build_discriminator, build_encoder, discriminator_step,
                       encoder_step, train_abc, train_dcan)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


# ---------------------------------------------------------------- config

_LIST_FIELDS = {"encoder_layers", "discriminator_layers"}
_BOOL_FIELDS = {"allow_lr_outside_range"}


def parse_config_file(path: str) -> dict:
    """Strict flat key = value parser; unknown keys are errors."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = (s.strip() for s in line.partition("="))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, val, path, lineno)
    return values


def _coerce(key: str, val: str, path: str, lineno: int):
    try:
        if key in _LIST_FIELDS:
            return [int(v) for v in val.split(",")]
        if key in _BOOL_FIELDS:
            return val.lower() in ("1", "true", "yes")
        if key in ("lr", "momentum", "abc_lambda"):
            return float(val)
        if key in ("clustering_mode", "encoder_mode"):
            return val
        return int(val)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc


def build_config(args) -> TrainConfig:
    values = parse_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    missing = {"encoder_layers", "discriminator_layers", "k"} - values.keys()
    if missing:
        raise ConfigError(f"config missing required keys: {sorted(missing)}")
    config = TrainConfig(**values)
    config.validate()
    return config


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps({f.name: getattr(config, f.name) for f in fields(config)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_dataset(args) -> Dataset:
    if getattr(args, "idx_images", None):
        if not args.idx_labels:
            raise ConfigError("--idx-images requires --idx-labels")
        return load_idx_images(args.idx_images, args.idx_labels,
                               downsample=args.downsample, limit=args.limit)
    if not args.dataset:
        raise ConfigError("no dataset given (use --dataset or --idx-images)")
    return load_dense_features(args.dataset, has_labels=not args.no_labels)


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    config = build_config(args)
    dataset = resolve_dataset(args)
    os.makedirs(args.out, exist_ok=True)
    chash = config_hash(config)
    t0 = time.perf_counter()
    try:
        if args.mode == "dcan":
            encoder, model, history = train_dcan(dataset, config)
            nets = {"encoder_params.txt": encoder}
        else:
            (encoder, decoder), model, history = train_abc(dataset, config)
            nets = {"encoder_params.txt": encoder, "decoder_params.txt": decoder}
    except DivergenceError as exc:
        diag = {"error": str(exc), "config_hash": chash, "seed": config.seed,
                "iterations_completed": len(exc.history) if exc.history else 0}
        with open(os.path.join(args.out, "divergence.json"), "w") as f:
            json.dump(diag, f, indent=2)
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    history_path = os.path.join(args.out, "history.jsonl")
    with open(history_path, "w") as f:
        meta = {"meta": {"config_hash": chash, "seed": config.seed,
                         "mode": args.mode, "dataset": dataset.provenance}}
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in history.records:
            f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    summary = summarize_run(history).to_dict()
    summary.update({
        "config_hash": chash,
        "seed": config.seed,
        "mode": args.mode,
        "dataset": dataset.provenance,
        "wall_clock_total": time.perf_counter() - t0,
    })
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)

    for name, params in nets.items():
        serialize.save_mlp(os.path.join(args.out, name), params)

    report.plot_history(history.records, os.path.join(args.out, "history.png"),
                        title=f"{args.mode} run (seed {config.seed})")
    latents, _ = mlp_forward(encoder, dataset.features)
    colors = dataset.labels if dataset.labels is not None \
        else clustering.assign_max_likelihood(latents, model)
    report.plot_latents(latents, colors, os.path.join(args.out, "latents.png"))

    acc = summary["final_acc"]
    print(f"done: {len(history)} iterations, final ACC "
          f"{'n/a' if acc is None else f'{acc:.4f}'}, outputs in {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    dataset = resolve_dataset(args)
    encoder = serialize.load_mlp(args.params)
    latents, _ = mlp_forward(encoder, dataset.features)
    k = args.k or dataset.class_count
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    _, assignments = clustering.kmeans(latents, k, rng)
    out = {"k": k, "n": dataset.n}
    if dataset.labels is not None:
        out["acc"] = clustering_accuracy(assignments, dataset.labels)
        print(f"ACC = {out['acc']:.4f} (K={k}, N={dataset.n})")
    else:
        print(f"no labels; clustered {dataset.n} points into {k} clusters")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w") as f:
            json.dump(out, f, indent=2)
        report.plot_latents(latents, assignments,
                            os.path.join(args.out, "latents.png"))
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck

def _worst_coordinate(analytic: GradBundle, numeric: GradBundle):
    """(layer, kind, index, relerr) of the worst-matching parameter."""
    worst = (0, "weight", (0,), 0.0)
    for li, (ga, gn) in enumerate(zip(analytic.weight_grads, numeric.weight_grads)):
        rel = np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        idx = np.unravel_index(np.argmax(rel), rel.shape)
        if rel[idx] >= worst[3]:
            worst = (li, "weight", idx, float(rel[idx]))
    for li, (ga, gn) in enumerate(zip(analytic.bias_grads, numeric.bias_grads)):
        rel = np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        idx = np.unravel_index(np.argmax(rel), rel.shape)
        if rel[idx] >= worst[3]:
            worst = (li, "bias", idx, float(rel[idx]))
    return worst


def gradcheck_cases(seed: int = 0, corrupt: bool = False):
    """Analytic-vs-finite-difference checks for every loss.

    Yields ``(name, max_rel_error, worst_coordinate)`` tuples.
    """
    from .numerics import mlp_backward

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((8, 5))
    encoder = build_encoder([5, 7, 3], rng)
    disc = build_discriminator([3, 6, 1], rng)
    eta = rng.standard_normal((8, 3))
    tau = rng.uniform(0.5, 2.0, size=(8, 3))

    def scale(bundle):
        if corrupt:
            return GradBundle([g * 1.001 for g in bundle.weight_grads],
                              [g * 1.001 for g in bundle.bias_grads])
        return bundle

    def enc_backward(out_grad_fn):
        z, tape = mlp_forward(encoder, x)
        bundle, _ = mlp_backward(encoder, tape, out_grad_fn(z))
        return scale(bundle)

    # ABC clustering loss through the encoder
    analytic = enc_backward(lambda z: losses.abc_loss_grad(z, eta))
    numeric = finite_diff_grad(encoder, lambda p: losses.abc_loss(
        mlp_forward(p, x)[0], eta))
    yield "abc", max_relative_error(analytic, numeric), \
        _worst_coordinate(analytic, numeric)

    # KLD clustering loss through the encoder
    analytic = enc_backward(lambda z: losses.kld_clustering_loss_grad(z, eta, 1.3))
    numeric = finite_diff_grad(encoder, lambda p: losses.kld_clustering_loss(
        mlp_forward(p, x)[0], eta, tau, 1.3))
    yield "kld", max_relative_error(analytic, numeric), \
        _worst_coordinate(analytic, numeric)

    # discriminator objective w.r.t. discriminator weights
    z_pos = rng.standard_normal((8, 3))
    z_neg = rng.standard_normal((8, 3))

    d_pos, tape_p = mlp_forward(disc, z_pos)
    d_neg, tape_n = mlp_forward(disc, z_neg)
    g_pos, g_neg = losses.dcan_discriminator_objective_grad(d_pos, d_neg)
    bp, _ = mlp_backward(disc, tape_p, g_pos)
    bn, _ = mlp_backward(disc, tape_n, g_neg)
    analytic = scale(GradBundle(
        [a + b for a, b in zip(bp.weight_grads, bn.weight_grads)],
        [a + b for a, b in zip(bp.bias_grads, bn.bias_grads)]))
    numeric = finite_diff_grad(disc, lambda p: losses.dcan_discriminator_objective(
        mlp_forward(p, z_pos)[0], mlp_forward(p, z_neg)[0]))
    yield "dcan-discriminator", max_relative_error(analytic, numeric), \
        _worst_coordinate(analytic, numeric)

    # encoder objective (both modes) through the frozen discriminator
    for mode in ("minimax", "non-saturating"):
        def enc_obj_grad(z, mode=mode):
            d, tape_d = mlp_forward(disc, z)
            g_d = losses.dcan_encoder_objective_grad(d, mode)
            _, z_grad = mlp_backward(disc, tape_d, g_d)
            return z_grad

        analytic = enc_backward(enc_obj_grad)
        numeric = finite_diff_grad(encoder, lambda p, mode=mode:
                                   losses.dcan_encoder_objective(
                                       mlp_forward(disc, mlp_forward(p, x)[0])[0],
                                       mode)[0])
        yield f"dcan-encoder-{mode}", max_relative_error(analytic, numeric), \
            _worst_coordinate(analytic, numeric)

    # full two-sided objective composed through encoder -> discriminator
    def composed_grad(z):
        d, tape_d = mlp_forward(disc, z)
        _, g_neg = losses.dcan_discriminator_objective_grad(d_pos, d)
        _, z_grad = mlp_backward(disc, tape_d, g_neg)
        return z_grad

    analytic = enc_backward(composed_grad)
    numeric = finite_diff_grad(encoder, lambda p: losses.dcan_discriminator_objective(
        d_pos, mlp_forward(disc, mlp_forward(p, x)[0])[0]))
    yield "composed-encoder-discriminator", max_relative_error(analytic, numeric), \
        _worst_coordinate(analytic, numeric)


def cmd_gradcheck(args) -> int:
    tol = args.tolerance
    ok = True
    for name, err, (layer, kind, idx, _) in gradcheck_cases(args.seed or 0,
                                                            corrupt=args.corrupt_gradient):
        status = "PASS" if err < tol else "FAIL"
        ok &= err < tol
        print(f"[{status}] {name}: max relative error {err:.3e} "
              f"(tol {tol:.0e}; worst at layer {layer} {kind}{list(idx)})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- lemma-check

def lemma1_sweep(pairs: int = 1000, max_dim: int = 16, seed: int = 0) -> float:
    """Max |closed-form KLD - Euclidean clustering loss| over unit-variance
    Gaussian pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        dim = int(rng.integers(1, max_dim + 1))
        eta = rng.standard_normal(dim)
        mu = rng.standard_normal(dim)
        kld = losses.kld_diag_gaussians(GaussianDiag(eta, np.ones(dim)),
                                        GaussianDiag(mu, np.ones(dim)))
        worst = max(worst, abs(kld - losses.abc_loss(eta[None, :], mu[None, :])))
    return worst


def lemma2_pairs(n_pairs: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        mp, mq = rng.uniform(-2, 2, size=2)
        sp, sq = rng.uniform(0.6, 1.8, size=2)
        yield (GaussianDiag([mp], [1.0 / sp ** 2]),
               GaussianDiag([mq], [1.0 / sq ** 2]))


def cmd_lemma_check(args) -> int:
    failures = []

    err1 = lemma1_sweep(seed=args.seed or 0)
    ok1 = err1 <= args.identity_tolerance
    print(f"[{'PASS' if ok1 else 'FAIL'}] unit-variance KLD == Euclidean loss: "
          f"max abs error {err1:.3e} (tol {args.identity_tolerance:.0e})")
    if not ok1:
        failures.append("identity")

    rng = np.random.default_rng((args.seed or 0) + 1)
    worst2 = 0.0
    for i, (p, q) in enumerate(lemma2_pairs(args.pairs, seed=args.seed or 0)):
        target = 2.0 * losses.jsd_quadrature(p, q) - 2.0 * losses.LN2
        measured = losses.optimal_objective_monte_carlo(p, q, args.mc_samples, rng)
        gap = abs(measured - target)
        worst2 = max(worst2, gap)
        print(f"  pair {i:2d}: 2*JSD - 2 ln 2 = {target:+.6f}, "
              f"objective at D=p/(p+q) = {measured:+.6f}, |gap| = {gap:.2e}")
    ok2 = worst2 <= args.mc_tolerance
    print(f"[{'PASS' if ok2 else 'FAIL'}] optimal-discriminator objective matches "
          f"2*JSD - 2 ln 2: worst gap {worst2:.3e} (tol {args.mc_tolerance:.0e})")
    if not ok2:
        failures.append("optimal-discriminator")

    if failures:
        print(f"failed checks: {', '.join(failures)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    dataset = gen_blobs(args.k, args.dim, args.per_cluster, args.separation,
                        args.sigma, args.seed if args.seed is not None else 0)
    out_dir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(out_dir, exist_ok=True)
    save_dense_features(args.output, dataset)
    if args.figure:
        report.plot_latents(dataset.features, dataset.labels, args.figure,
                            title=f"blobs k={args.k} dim={args.dim}")
    print(f"wrote {dataset.n} points ({args.k} blobs, dim {args.dim}) to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advclust",
                                     description="adversarial deep clustering lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p):
        p.add_argument("--dataset", help="delimited feature file (label in last column)")
        p.add_argument("--no-labels", action="store_true",
                       help="dataset file has no label column")
        p.add_argument("--idx-images", help="IDX image file")
        p.add_argument("--idx-labels", help="IDX label file")
        p.add_argument("--downsample", choices=["none", "2x"], default="2x",
                       help="IDX downsampling (default 2x)")
        p.add_argument("--limit", type=int, help="use only the first N samples")

    p = sub.add_parser("train", help="run a training loop")
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="seed override (flag > file > default)")
    p.add_argument("--mode", choices=["dcan", "abc"], default="dcan")
    add_dataset_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cluster a dataset in a saved encoder's latent space")
    p.add_argument("--params", required=True, help="serialized encoder parameters")
    p.add_argument("--k", type=int, help="cluster count (default: class count)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="optional output directory")
    add_dataset_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every loss")
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-gradient", action="store_true",
                   help="debug: corrupt analytic gradients to exercise the failure path")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("lemma-check", help="closed-form identity and optimal-discriminator checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--mc-samples", type=int, default=1_000_000)
    p.add_argument("--mc-tolerance", type=float, default=5e-3)
    p.add_argument("--identity-tolerance", type=float, default=1e-12)
    p.set_defaults(func=cmd_lemma_check)

    p = sub.add_parser("synth", help="generate a seeded Gaussian-blob dataset")
    p.add_argument("--output", required=True, help="delimited output file")
    p.add_argument("--figure", help="optional scatter figure path")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--per-cluster", type=int, default=300)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
