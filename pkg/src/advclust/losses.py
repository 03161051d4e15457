"""Loss and divergence functions.

Covers the Euclidean clustering loss, the closed-form KLD between two
diagonal Gaussians, a 1-D quadrature oracle for the Jensen-Shannon
divergence, the density-ratio optimal discriminator, and the two-sided
adversarial clustering objectives (with analytic gradients w.r.t. the
discriminator outputs, used by the trainer).

All logs are natural; discriminator outputs are clamped to
[CLAMP_EPS, 1 - CLAMP_EPS] before any log so no objective can produce
NaN/Inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLAMP_EPS = 1e-7
LN2 = float(np.log(2.0))
# below this log-density, float64 density evaluation underflows to 0
_UNDERFLOW_LOG = -745.0


@dataclass
class GaussianDiag:
    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.precision = np.atleast_1d(np.asarray(self.precision, dtype=np.float64))
        if self.mean.shape != self.precision.shape:
            raise ValueError("mean and precision must have the same shape")
        if np.any(self.precision <= 0) or not np.all(np.isfinite(self.precision)):
            raise ValueError("precision entries must be finite and positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.precision)

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        diff = z - self.mean
        return 0.5 * (np.log(self.precision) - np.log(2.0 * np.pi)
                      - self.precision * diff * diff).sum(axis=1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((count, self.dim))


def abc_loss(latents: np.ndarray, assigned_means: np.ndarray) -> float:
    """Mean over the batch of half the squared distance to the assigned
    cluster mean."""
    z = np.asarray(latents, dtype=np.float64)
    eta = np.asarray(assigned_means, dtype=np.float64)
    if z.shape != eta.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {eta.shape}")
    return float(0.5 * ((z - eta) ** 2).sum(axis=-1).mean())


def abc_loss_grad(latents: np.ndarray, assigned_means: np.ndarray) -> np.ndarray:
    """d(abc_loss)/d(latents): (z - eta) / N."""
    z = np.asarray(latents, dtype=np.float64)
    eta = np.asarray(assigned_means, dtype=np.float64)
    return (z - eta) / z.shape[0]


def kld_diag_gaussians(p: GaussianDiag, q: GaussianDiag) -> float:
    """Closed-form KL(p || q) for diagonal Gaussians, summed over dims:
    per dim, ln s_q - ln s_p + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    var_p = 1.0 / p.precision
    var_q = 1.0 / q.precision
    per_dim = (0.5 * np.log(var_q / var_p)
               + (var_p + (p.mean - q.mean) ** 2) / (2.0 * var_q)
               - 0.5)
    return float(per_dim.sum())


def kld_clustering_loss(latents: np.ndarray, assigned_means: np.ndarray,
                        assigned_precisions: np.ndarray,
                        latent_precision: float = 1.0) -> float:
    """Batch-mean KLD(assigned cluster Gaussian || N(z_n, 1/latent_precision)).

    The latent point plays the role of the encoder-side mean. With unit
    precisions on both sides this reduces exactly to :func:`abc_loss`.
    """
    z = np.asarray(latents, dtype=np.float64)
    eta = np.asarray(assigned_means, dtype=np.float64)
    tau = np.asarray(assigned_precisions, dtype=np.float64)
    per_dim = (0.5 * np.log(tau / latent_precision)
               + latent_precision / (2.0 * tau)
               + latent_precision * (eta - z) ** 2 / 2.0
               - 0.5)
    return float(per_dim.sum(axis=-1).mean())


def kld_clustering_loss_grad(latents: np.ndarray, assigned_means: np.ndarray,
                             latent_precision: float = 1.0) -> np.ndarray:
    """d(kld_clustering_loss)/d(latents): tau_q (z - eta) / N."""
    z = np.asarray(latents, dtype=np.float64)
    eta = np.asarray(assigned_means, dtype=np.float64)
    return latent_precision * (z - eta) / z.shape[0]


def jsd_quadrature(p: GaussianDiag, q: GaussianDiag,
                   lo: float | None = None, hi: float | None = None,
                   n: int = 100001) -> float:
    """Jensen-Shannon divergence of two 1-D Gaussians by trapezoid
    quadrature of both KLD-to-midpoint integrals.

    The grid must cover at least 8 standard deviations around both means;
    the default grid covers 12.
    """
    if p.dim != 1 or q.dim != 1:
        raise ValueError("quadrature oracle is 1-D only")
    sp, sq = float(p.std[0]), float(q.std[0])
    mp, mq = float(p.mean[0]), float(q.mean[0])
    need_lo = min(mp - 8.0 * sp, mq - 8.0 * sq)
    need_hi = max(mp + 8.0 * sp, mq + 8.0 * sq)
    if lo is None:
        lo = min(mp - 12.0 * sp, mq - 12.0 * sq)
    if hi is None:
        hi = max(mp + 12.0 * sp, mq + 12.0 * sq)
    if lo > need_lo or hi < need_hi:
        raise ValueError(f"grid [{lo}, {hi}] does not cover 8 sigma of both Gaussians")

    z = np.linspace(lo, hi, n)[:, None]
    lp = p.log_pdf(z)
    lq = q.log_pdf(z)
    lm = np.logaddexp(lp, lq) - LN2
    integrand = 0.5 * np.exp(lp) * (lp - lm) + 0.5 * np.exp(lq) * (lq - lm)
    val = float(np.trapezoid(integrand, z[:, 0]))
    # quadrature noise can dip a hair below 0 at p == q
    return min(max(val, 0.0), LN2)


def optimal_discriminator(p: GaussianDiag, q: GaussianDiag, z: np.ndarray,
                          return_degenerate: bool = False):
    """Density ratio p/(p+q) at z, computed in log-space.

    Points where both densities underflow to zero are reported as 0.5 (and
    flagged when requested).
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    lp = p.log_pdf(z)
    lq = q.log_pdf(z)
    d = np.exp(lp - np.logaddexp(lp, lq))
    degenerate = (lp < _UNDERFLOW_LOG) & (lq < _UNDERFLOW_LOG)
    d = np.where(degenerate, 0.5, d)
    if return_degenerate:
        return d, degenerate
    return d


def clamp_d(d: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(d, dtype=np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)


def dcan_discriminator_objective(d_pos: np.ndarray, d_neg: np.ndarray) -> float:
    """(1/N) sum ln D(positives) + (1/N) sum ln(1 - D(negatives)).

    The discriminator ascends this; maximum 0, and -2 ln 2 when D == 1/2
    everywhere.
    """
    d_pos = clamp_d(d_pos)
    d_neg = clamp_d(d_neg)
    return float(np.log(d_pos).mean() + np.log(1.0 - d_neg).mean())


def dcan_discriminator_objective_grad(d_pos: np.ndarray, d_neg: np.ndarray):
    """Gradients of the objective w.r.t. raw discriminator outputs.

    Zero where the clamp is active, matching finite differences of the
    clamped objective.
    """
    d_pos = np.asarray(d_pos, dtype=np.float64)
    d_neg = np.asarray(d_neg, dtype=np.float64)
    cp = clamp_d(d_pos)
    cn = clamp_d(d_neg)
    g_pos = np.where(d_pos == cp, 1.0 / (cp * d_pos.size), 0.0)
    g_neg = np.where(d_neg == cn, -1.0 / ((1.0 - cn) * d_neg.size), 0.0)
    return g_pos, g_neg


def dcan_encoder_objective(d_neg: np.ndarray, mode: str = "minimax"):
    """Encoder-side objective on D(G(x)), with its update direction.

    minimax (default): (1/N) sum ln(1 - d), encoder DESCENDS.
    non-saturating:    (1/N) sum ln d,      encoder ASCENDS.
    Returns ``(value, mode)``.
    """
    d = clamp_d(d_neg)
    if mode == "minimax":
        return float(np.log(1.0 - d).mean()), mode
    if mode == "non-saturating":
        return float(np.log(d).mean()), mode
    raise ValueError(f"unknown encoder mode {mode!r}")


def dcan_encoder_objective_grad(d_neg: np.ndarray, mode: str = "minimax") -> np.ndarray:
    d_neg = np.asarray(d_neg, dtype=np.float64)
    c = clamp_d(d_neg)
    active = d_neg == c
    if mode == "minimax":
        return np.where(active, -1.0 / ((1.0 - c) * d_neg.size), 0.0)
    if mode == "non-saturating":
        return np.where(active, 1.0 / (c * d_neg.size), 0.0)
    raise ValueError(f"unknown encoder mode {mode!r}")


def optimal_objective_monte_carlo(p: GaussianDiag, q: GaussianDiag,
                                  n_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of the adversarial objective at the optimal
    discriminator D = p/(p+q): E_p[ln D] + E_q[ln(1-D)].

    At the optimum this equals 2*JSD(p, q) - 2 ln 2.
    """
    zp = p.sample(n_samples, rng)
    zq = q.sample(n_samples, rng)
    lp_p, lq_p = p.log_pdf(zp), q.log_pdf(zp)
    lp_q, lq_q = p.log_pdf(zq), q.log_pdf(zq)
    ln_d_pos = lp_p - np.logaddexp(lp_p, lq_p)          # ln D(z), z ~ p
    ln_one_minus_d_neg = lq_q - np.logaddexp(lp_q, lq_q)  # ln(1 - D(z)), z ~ q
    return float(ln_d_pos.mean() + ln_one_minus_d_neg.mean())
