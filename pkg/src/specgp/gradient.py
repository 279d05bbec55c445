"""Likelihood evaluation and unbiased stochastic gradients of the bound.

The Gaussian likelihood of a data block factorizes through the residual
``v = y - Phi(X)^T s``:

    log p(y | alpha) = -0.5 ||v||^2 / noise_variance - 0.5 n log(2 pi noise_variance),

and the bound over ``p`` equally-weighted blocks is estimated doubly
stochastically: sample block indices ``i_1..i_a`` uniformly with
replacement and standard normal draws ``z_1..z_b``, then

    grad ~ (1/(a b)) sum_k sum_j [ p * partition_term(i_k, z_j)
                                   - kl_term_gradient(z_j) ].

The index stream and the z stream are split from one master seed so that
tests (and the variance-reduction analysis) can share z draws across
estimators while varying the index subsample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .features import TWO_PI, SpectralConfig, feature_matrix
from .localmodel import AlphaVector
from .variational import PriorSpec, VariationalState, kl_term_gradient, log_prior, log_q, transform


@dataclass
class EtaGradient:
    """Gradient with respect to the affine parameters ``(M, b)``."""

    grad_m: np.ndarray  # shape (D, D)
    grad_b: np.ndarray  # shape (D,)

    def norm(self) -> float:
        """Euclidean norm of the stacked (M, b) gradient."""
        return float(np.sqrt(np.sum(self.grad_m**2) + np.sum(self.grad_b**2)))


@dataclass(frozen=True)
class GradientSamplePlan:
    """Monte-Carlo sample sizes and master seed for one gradient estimate.

    ``n_partition_samples`` block indices are drawn uniformly with
    replacement and ``n_z_samples`` reparameterization draws are shared
    across them.
    """

    n_partition_samples: int = 4
    n_z_samples: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_partition_samples < 1:
            raise ContractError("n_partition_samples must be >= 1")
        if self.n_z_samples < 1:
            raise ContractError("n_z_samples must be >= 1")


def log_likelihood(y, X, alpha: AlphaVector, cfg: SpectralConfig) -> float:
    """Gaussian log likelihood of ``(X, y)`` under the sampled weights.

    Summing this over the blocks of a partition reproduces the full-data
    value exactly, because both the quadratic and the ``n log`` terms are
    additive over rows.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if y.shape != (X.shape[0],):
        raise ContractError(f"y must have shape ({X.shape[0]},), got {y.shape}")
    phi = feature_matrix(X, alpha.theta, cfg)
    v = y - phi.T @ alpha.s
    return float(
        -0.5 * np.dot(v, v) / cfg.noise_variance
        - 0.5 * y.size * np.log(2.0 * np.pi * cfg.noise_variance)
    )


def _block_gradient_stats(y_i, X_i, alpha: AlphaVector, cfg: SpectralConfig):
    """Gradient of the block data term with respect to alpha, plus residual stats.

    Returns ``(g_alpha, v_dot_v)`` where ``g_alpha`` is the gradient of
    ``-0.5 ||v||^2 / noise_variance`` with respect to ``(theta, s)``.  The
    ``s`` part is ``Phi v / noise_variance``.  The ``theta`` part follows
    from the feature Jacobian: with ``w_ij = -s_{2i} sin(a_ij) + s_{2i+1}
    cos(a_ij)`` (the derivative of ``phi^T s`` in the angle ``a_ij``),

        d(-0.5||v||^2/noise)/d r_i = (2 pi / noise) * sum_j v_j w_ij x_j,

    assembled for all frequencies at once as ``(W * v) @ X_i`` without
    materializing any per-point Jacobian.
    """
    y_i = np.asarray(y_i, dtype=float)
    X_i = np.asarray(X_i, dtype=float)
    if y_i.shape != (X_i.shape[0],):
        raise ContractError(f"y_i must have shape ({X_i.shape[0]},), got {y_i.shape}")
    phi = feature_matrix(X_i, alpha.theta, cfg)
    v = y_i - phi.T @ alpha.s
    inv_noise = 1.0 / cfg.noise_variance
    g_s = inv_noise * (phi @ v)
    cos_part = phi[0::2]
    sin_part = phi[1::2]
    rotated = alpha.s[1::2, None] * cos_part - alpha.s[0::2, None] * sin_part
    g_theta = (TWO_PI * inv_noise) * ((rotated * v) @ X_i)
    return np.concatenate([g_theta.ravel(), g_s]), float(np.dot(v, v))


def _dlog_noise_variance(v_dot_v: float, n_points: int, cfg: SpectralConfig) -> float:
    """Derivative of the block log likelihood in ``log noise_variance``."""
    return 0.5 * v_dot_v / cfg.noise_variance - 0.5 * n_points


def _dlog_signal_variance(alpha: AlphaVector, cfg: SpectralConfig) -> float:
    """Derivative of ``log N(s | 0, Lambda)`` in ``log signal_variance``."""
    return 0.5 * cfg.m * float(np.dot(alpha.s, alpha.s)) / cfg.signal_variance - cfg.m


def partition_term(
    y_i, X_i, alpha: AlphaVector, state: VariationalState, z, cfg: SpectralConfig
) -> EtaGradient:
    """Single-block contribution to the data-term gradient in ``(M, b)``.

    The caller guarantees ``alpha = transform(state, z, cfg)``; under that
    coupling the chain rule through ``alpha = M z + b`` gives
    ``grad_m = g_alpha z^T`` and ``grad_b = g_alpha``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (state.dim,):
        raise ContractError(f"z must have shape ({state.dim},), got {z.shape}")
    if alpha.flat.size != state.dim or state.dim != cfg.alpha_dim:
        raise ContractError("alpha, state and config dimensions disagree")
    g_alpha, _ = _block_gradient_stats(y_i, X_i, alpha, cfg)
    return EtaGradient(grad_m=np.outer(g_alpha, z), grad_b=g_alpha)


def draw_sample_sets(plan: GradientSamplePlan, n_blocks: int, dim: int):
    """Materialize the index and z draws for one estimate.

    One master seed is split into two independent substreams, so the z
    draws do not depend on how many indices are consumed.
    """
    if n_blocks < 1:
        raise ContractError("the partition must contain at least one block")
    root = np.random.SeedSequence(plan.rng_seed)
    index_seq, z_seq = root.spawn(2)
    indices = np.random.default_rng(index_seq).integers(
        0, n_blocks, size=plan.n_partition_samples
    )
    z_draws = np.random.default_rng(z_seq).standard_normal((plan.n_z_samples, dim))
    return indices, z_draws


def stochastic_gradient(
    plan: GradientSamplePlan,
    data,
    state: VariationalState,
    prior: PriorSpec,
    cfg: SpectralConfig,
    return_variance_grads: bool = False,
):
    """Unbiased estimate of the bound's gradient in ``(M, b)``.

    Parameters
    ----------
    plan : GradientSamplePlan
    data : PartitionedDataset
        Only the sampled blocks are touched, so the cost per call is
        independent of the total number of points.
    state, prior, cfg
        Current variational state, prior and spectral configuration.
    return_variance_grads : bool, optional
        When true, additionally return ``(d_log_noise, d_log_signal)``,
        the matching stochastic derivatives of the bound in the log
        variance hyperparameters (same sample set).

    Returns
    -------
    EtaGradient or (EtaGradient, (float, float))
    """
    indices, z_draws = draw_sample_sets(plan, data.p, state.dim)
    n_blocks = data.p
    a = plan.n_partition_samples
    b_count = plan.n_z_samples
    dim = state.dim

    acc_m = np.zeros((dim, dim))
    acc_b = np.zeros(dim)
    acc_noise = 0.0
    acc_signal = 0.0
    block_scale = n_blocks / (a * b_count)
    for z in z_draws:
        alpha = transform(state, z, cfg)
        g_sum = np.zeros(dim)
        for i in indices:
            X_i, y_i = data.blocks[i]
            g_alpha, v_dot_v = _block_gradient_stats(y_i, X_i, alpha, cfg)
            g_sum += g_alpha
            if return_variance_grads:
                acc_noise += block_scale * _dlog_noise_variance(v_dot_v, y_i.size, cfg)
        g_sum *= block_scale
        grad_m_kl, grad_b_kl = kl_term_gradient(state, z, prior, cfg)
        acc_m += np.outer(g_sum, z) - grad_m_kl / b_count
        acc_b += g_sum - grad_b_kl / b_count
        if return_variance_grads:
            acc_signal += _dlog_signal_variance(alpha, cfg) / b_count
    grad = EtaGradient(grad_m=acc_m, grad_b=acc_b)
    if return_variance_grads:
        return grad, (acc_noise, acc_signal)
    return grad


def elbo_estimate(
    n_z: int,
    data,
    state: VariationalState,
    prior: PriorSpec,
    cfg: SpectralConfig,
    seed: int = 0,
    return_parts: bool = False,
):
    """Monte-Carlo estimate of the evidence lower bound.

    Averages ``log p(y | alpha) + log p(alpha) - log q(alpha)`` over
    ``n_z`` reparameterization draws; two calls with the same seed agree
    bit for bit.  With ``return_parts`` the per-component means are also
    returned for monitoring.
    """
    if n_z < 1:
        raise ContractError("n_z must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z_draws = rng.standard_normal((n_z, state.dim))
    total = 0.0
    parts = {"log_likelihood": 0.0, "log_prior": 0.0, "log_q": 0.0}
    for z in z_draws:
        alpha = transform(state, z, cfg)
        ll = 0.0
        for X_i, y_i in data.blocks:
            ll += log_likelihood(y_i, X_i, alpha, cfg)
        lp = log_prior(alpha, prior, cfg)
        lq = log_q(state, z)
        total += ll + lp - lq
        parts["log_likelihood"] += ll
        parts["log_prior"] += lp
        parts["log_q"] += lq
    elbo = total / n_z
    if return_parts:
        return elbo, {k: val / n_z for k, val in parts.items()}
    return elbo
