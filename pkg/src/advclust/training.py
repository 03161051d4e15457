"""Alternating adversarial clustering trainer plus the closed-form
Euclidean-loss autoencoder baseline.

Per iteration the adversarial loop (1) re-encodes a buffer of at least
``buffer_min`` points and refreshes the cluster parameters with one
Lloyd step, (2) draws a minibatch, labels encoder outputs negative and
per-sample cluster draws positive, (3) ascends the discriminator on the
two-sided log objective, and (4) updates the encoder through the frozen
discriminator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import clustering, losses
from .clustering import ClusterModel
from .data import Dataset
from .evaluation import clustering_accuracy
from .numerics import (GradBundle, MlpParams, OptState, init_mlp, mlp_backward,
                       mlp_forward, sgd_momentum_step)

LR_RANGE = (1e-5, 1e-3)
OBJECTIVE_GUARD = 50.0


class ConfigError(ValueError):
    """Invalid training configuration."""


class DivergenceError(RuntimeError):
    """An objective left the guard interval or went non-finite."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    encoder_layers: list[int]
    discriminator_layers: list[int]
    k: int
    batch_size: int = 16
    iterations: int = 500
    lr: float = 1e-4
    momentum: float = 0.9
    clustering_mode: str = "kmeans"
    encoder_mode: str = "minimax"
    buffer_min: int = 600
    seed: int = 0
    disc_steps_per_enc_step: int = 1
    abc_lambda: float = 1.0
    allow_lr_outside_range: bool = False

    def validate(self):
        if len(self.encoder_layers) < 2 or len(self.discriminator_layers) < 2:
            raise ConfigError("encoder and discriminator need >= 2 layer sizes")
        if self.encoder_layers[-1] != self.discriminator_layers[0]:
            raise ConfigError(
                f"encoder output dim {self.encoder_layers[-1]} != "
                f"discriminator input dim {self.discriminator_layers[0]}"
            )
        if self.discriminator_layers[-1] != 1:
            raise ConfigError("discriminator must have output dimension 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not (LR_RANGE[0] <= self.lr <= LR_RANGE[1]) and not self.allow_lr_outside_range:
            raise ConfigError(
                f"lr {self.lr} outside [{LR_RANGE[0]}, {LR_RANGE[1]}] "
                "(set allow_lr_outside_range to override)"
            )
        if self.clustering_mode not in ("kmeans", "gmm-hard"):
            raise ConfigError(f"unknown clustering_mode {self.clustering_mode!r}")
        if self.encoder_mode not in ("minimax", "non-saturating"):
            raise ConfigError(f"unknown encoder_mode {self.encoder_mode!r}")
        if self.disc_steps_per_enc_step < 1:
            raise ConfigError("disc_steps_per_enc_step must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    disc_objective: float
    enc_objective: float
    mean_d_pos: float | None = None
    mean_d_neg: float | None = None
    recon_loss: float | None = None
    cluster_loss: float | None = None
    acc: float | None = None
    wall_clock: float = 0.0

    def to_dict(self, with_timing: bool = False) -> dict:
        d = {
            "iteration": self.iteration,
            "disc_objective": self.disc_objective,
            "enc_objective": self.enc_objective,
            "mean_d_pos": self.mean_d_pos,
            "mean_d_neg": self.mean_d_neg,
            "recon_loss": self.recon_loss,
            "cluster_loss": self.cluster_loss,
            "acc": self.acc,
        }
        if with_timing:
            d["wall_clock"] = self.wall_clock
        return d


@dataclass
class RunHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord):
        if self.records and record.iteration != self.records[-1].iteration + 1:
            raise ValueError("iteration index must be monotone")
        self.records.append(record)

    def __len__(self):
        return len(self.records)


def build_encoder(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Tanh hidden layers, linear latent output."""
    acts = ["tanh"] * (len(layer_sizes) - 2) + ["identity"]
    return init_mlp(layer_sizes, acts, rng)


def build_discriminator(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Tanh hidden layers, sigmoid scalar output."""
    acts = ["tanh"] * (len(layer_sizes) - 2) + ["sigmoid"]
    return init_mlp(layer_sizes, acts, rng)


def refresh_clustering(encoder: MlpParams, sample: np.ndarray,
                       prev: ClusterModel | None, k: int,
                       rng: np.random.Generator,
                       mode: str = "kmeans") -> ClusterModel:
    """Encode the sample, run exactly one Lloyd step (warm-started from the
    previous centers when available), then re-estimate cluster parameters."""
    latents, _ = mlp_forward(encoder, sample)
    if k == 1:
        assignments = np.zeros(latents.shape[0], dtype=np.int64)
        model = clustering.estimate_cluster_params(latents, assignments, mode=mode)
        return model
    centers = prev.means if prev is not None else clustering.init_centers(latents, k, rng)
    _, assignments, repaired = clustering.kmeans_step(latents, centers)
    model = clustering.estimate_cluster_params(latents, assignments, mode=mode)
    model.repaired = repaired
    return model


def draw_positives(model: ClusterModel, latents: np.ndarray,
                   rng: np.random.Generator):
    """One positive draw per latent, from that latent's own max-likelihood
    cluster. Returns ``(positives, assignment_indices)``."""
    idx = clustering.assign_max_likelihood(latents, model)
    positives = np.empty_like(latents)
    for n, k in enumerate(idx):
        positives[n] = clustering.sample_assigned(model, int(k), 1, rng)[0]
    return positives, idx


def discriminator_step(disc: MlpParams, state: OptState, z_pos: np.ndarray,
                       z_neg: np.ndarray):
    """One ascent step on ln D(pos) + ln(1 - D(neg)). Touches only the
    discriminator; the latents are treated as constants."""
    d_pos, tape_p = mlp_forward(disc, z_pos)
    d_neg, tape_n = mlp_forward(disc, z_neg)
    objective = losses.dcan_discriminator_objective(d_pos, d_neg)
    g_pos, g_neg = losses.dcan_discriminator_objective_grad(d_pos, d_neg)
    bundle_p, _ = mlp_backward(disc, tape_p, g_pos)
    bundle_n, _ = mlp_backward(disc, tape_n, g_neg)
    total = GradBundle(
        [a + b for a, b in zip(bundle_p.weight_grads, bundle_n.weight_grads)],
        [a + b for a, b in zip(bundle_p.bias_grads, bundle_n.bias_grads)],
    )
    disc, state = sgd_momentum_step(disc, total, state, "ascend")
    return disc, state, objective, float(d_pos.mean()), float(d_neg.mean())


def encoder_step(encoder: MlpParams, state: OptState, disc: MlpParams,
                 batch: np.ndarray, mode: str):
    """One encoder update through the frozen discriminator.

    minimax descends ln(1 - D(G(x))); non-saturating ascends ln D(G(x)).
    The discriminator's own gradients are computed and discarded.
    """
    z, tape_e = mlp_forward(encoder, batch)
    d, tape_d = mlp_forward(disc, z)
    objective, _ = losses.dcan_encoder_objective(d, mode)
    g_d = losses.dcan_encoder_objective_grad(d, mode)
    _, z_grad = mlp_backward(disc, tape_d, g_d)
    bundle, _ = mlp_backward(encoder, tape_e, z_grad)
    direction = "descend" if mode == "minimax" else "ascend"
    encoder, state = sgd_momentum_step(encoder, bundle, state, direction)
    return encoder, state, objective, float(d.mean())


def _guard(name: str, value: float, history: RunHistory):
    if not np.isfinite(value) or abs(value) > OBJECTIVE_GUARD:
        raise DivergenceError(
            f"{name} objective diverged to {value} at iteration {len(history)}",
            history=history,
        )


class _Stream:
    """Deterministic shuffled minibatch stream; reshuffles per epoch and
    exposes the epoch's leading points as the clustering buffer."""

    def __init__(self, n: int, batch_size: int, buffer_size: int,
                 rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.rng = rng
        self._new_epoch()

    def _new_epoch(self):
        self.order = self.rng.permutation(self.n)
        self.buffer_idx = self.order[: self.buffer_size]
        self.cursor = 0

    def next_batch(self) -> np.ndarray:
        if self.cursor + self.batch_size > self.n:
            self._new_epoch()
        batch = self.order[self.cursor: self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return batch


def _acc_full_dataset(encoder, model, dataset: Dataset):
    if dataset.labels is None:
        return None
    latents, _ = mlp_forward(encoder, dataset.features)
    pred = clustering.assign_max_likelihood(latents, model)
    return clustering_accuracy(pred, dataset.labels)


def _check_dataset(dataset: Dataset, config: TrainConfig):
    config.validate()
    if dataset.n < config.buffer_min:
        raise ConfigError(
            f"dataset has {dataset.n} points, below buffer_min {config.buffer_min}"
        )
    if dataset.dim != config.encoder_layers[0]:
        raise ConfigError(
            f"feature dim {dataset.dim} != encoder input dim {config.encoder_layers[0]}"
        )


def train_dcan(dataset: Dataset, config: TrainConfig):
    """Run the adversarial clustering loop.

    Returns ``(encoder, cluster_model, history)``; deterministic per seed.
    """
    _check_dataset(dataset, config)
    rng = np.random.default_rng(config.seed)
    encoder = build_encoder(config.encoder_layers, rng)
    disc = build_discriminator(config.discriminator_layers, rng)
    enc_state = OptState.fresh(encoder, config.lr, config.momentum)
    disc_state = OptState.fresh(disc, config.lr, config.momentum)

    z_dim = config.encoder_layers[-1]
    buffer_size = min(dataset.n, max(config.buffer_min, 4 * config.k * z_dim))
    stream = _Stream(dataset.n, config.batch_size, buffer_size, rng)

    history = RunHistory()
    model = None
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        model = refresh_clustering(encoder, dataset.features[stream.buffer_idx],
                                   model, config.k, rng, config.clustering_mode)
        batch = dataset.features[stream.next_batch()]
        z_neg, _ = mlp_forward(encoder, batch)
        for _ in range(config.disc_steps_per_enc_step):
            z_pos, _ = draw_positives(model, z_neg, rng)
            disc, disc_state, disc_obj, d_pos_mean, d_neg_mean = discriminator_step(
                disc, disc_state, z_pos, z_neg)
        encoder, enc_state, enc_obj, d_neg_after = encoder_step(
            encoder, enc_state, disc, batch, config.encoder_mode)
        _guard("discriminator", disc_obj, history)
        _guard("encoder", enc_obj, history)
        history.append(IterationRecord(
            iteration=it,
            disc_objective=disc_obj,
            enc_objective=enc_obj,
            mean_d_pos=d_pos_mean,
            mean_d_neg=d_neg_mean,
            acc=_acc_full_dataset(encoder, model, dataset),
            wall_clock=time.perf_counter() - t0,
        ))
    return encoder, model, history


def train_abc(dataset: Dataset, config: TrainConfig):
    """Autoencoder baseline: minimize reconstruction plus lambda times the
    Euclidean clustering loss, with the same clustering-refresh protocol.

    Returns ``((encoder, decoder), cluster_model, history)``.
    """
    _check_dataset(dataset, config)
    rng = np.random.default_rng(config.seed)
    encoder = build_encoder(config.encoder_layers, rng)
    decoder = build_encoder(list(reversed(config.encoder_layers)), rng)
    enc_state = OptState.fresh(encoder, config.lr, config.momentum)
    dec_state = OptState.fresh(decoder, config.lr, config.momentum)

    z_dim = config.encoder_layers[-1]
    buffer_size = min(dataset.n, max(config.buffer_min, 4 * config.k * z_dim))
    stream = _Stream(dataset.n, config.batch_size, buffer_size, rng)

    history = RunHistory()
    model = None
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        model = refresh_clustering(encoder, dataset.features[stream.buffer_idx],
                                   model, config.k, rng, config.clustering_mode)
        batch = dataset.features[stream.next_batch()]
        z, tape_e = mlp_forward(encoder, batch)
        recon, tape_d = mlp_forward(decoder, z)
        recon_loss = float(0.5 * ((recon - batch) ** 2).sum(axis=1).mean())
        idx = clustering.assign_max_likelihood(z, model)
        eta = model.means[idx]
        cluster_loss = losses.abc_loss(z, eta)
        total_loss = recon_loss + config.abc_lambda * cluster_loss
        _guard("abc", total_loss, history)

        g_recon = (recon - batch) / batch.shape[0]
        dec_bundle, z_grad = mlp_backward(decoder, tape_d, g_recon)
        z_grad = z_grad + config.abc_lambda * losses.abc_loss_grad(z, eta)
        enc_bundle, _ = mlp_backward(encoder, tape_e, z_grad)
        decoder, dec_state = sgd_momentum_step(decoder, dec_bundle, dec_state, "descend")
        encoder, enc_state = sgd_momentum_step(encoder, enc_bundle, enc_state, "descend")

        # audit losses on the full dataset post-update; minibatch noise would
        # otherwise swamp the recorded curves
        z_all, _ = mlp_forward(encoder, dataset.features)
        recon_all, _ = mlp_forward(decoder, z_all)
        full_recon = float(0.5 * ((recon_all - dataset.features) ** 2).sum(axis=1).mean())
        idx_all = clustering.assign_max_likelihood(z_all, model)
        full_cluster = losses.abc_loss(z_all, model.means[idx_all])

        history.append(IterationRecord(
            iteration=it,
            disc_objective=full_recon + config.abc_lambda * full_cluster,
            enc_objective=full_recon + config.abc_lambda * full_cluster,
            recon_loss=full_recon,
            cluster_loss=full_cluster,
            acc=_acc_full_dataset(encoder, model, dataset),
            wall_clock=time.perf_counter() - t0,
        ))
    return (encoder, decoder), model, history
