"""Learned population model: an encoder-decoder over an agent's step context.

The encoder compresses (public observation, normalized action counts of the
others, own action, previous population prediction) into a latent code. Two
decoder heads read the code back out: one predicts the next public
observation, the other the population's action mix as a point on the
simplex. Training scores the mix against the conjugate count posterior, so
the network learns to track what the exact Bayesian update would say while
staying cheap at execution time.

Gradients for the joint loss are assembled by hand from the network
backward passes; the count sample inside the KL term is held fixed (no
reparameterization), so that term shapes the reported loss but not the
parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .nets import AdamState, Mlp, adam_init, adam_step, clip_global_norm
from .population import dirichlet_kl, sample_theta

__all__ = [
    "THETA_FLOOR",
    "EdBatch",
    "EdLossResult",
    "EdTrainState",
    "EncoderDecoder",
    "encoder_input",
]

THETA_FLOOR = 1e-6


def encoder_input(pub_onehot, counts, own_onehot, theta_prev) -> np.ndarray:
    """Assemble one encoder input row; counts are normalized by their total."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    norm = counts / total if total > 0 else counts
    return np.concatenate([
        np.asarray(pub_onehot, dtype=np.float64),
        norm,
        np.asarray(own_onehot, dtype=np.float64),
        np.asarray(theta_prev, dtype=np.float64),
    ])


@dataclass
class EdBatch:
    """One trajectory's worth of encoder-decoder training rows.

    ``inputs`` are encoder input rows; ``next_obs`` one-hot next public
    observations; ``alphas`` the concentration vectors before each step's
    count update; ``configs`` the de-noised counts observed at each step.
    """

    inputs: np.ndarray
    next_obs: np.ndarray
    alphas: np.ndarray
    configs: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.next_obs = np.atleast_2d(np.asarray(self.next_obs, dtype=np.float64))
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=np.float64))
        self.configs = np.atleast_2d(np.asarray(self.configs, dtype=np.float64))
        n = len(self.inputs)
        if not (len(self.next_obs) == len(self.alphas) == len(self.configs) == n):
            raise ValueError("batch arrays must share their first dimension")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class EdLossResult:
    """Mean loss and its three terms; ``samples`` are the drawn count vectors."""

    total: float
    mse: float
    nll: float
    kl: float
    samples: np.ndarray | None = None


@dataclass
class EdTrainState:
    encoder_opt: AdamState
    obs_opt: AdamState
    theta_opt: AdamState


@dataclass
class EncoderDecoder:
    """Encoder plus the two decoder heads, each a flat-parameter network."""

    encoder: Mlp
    obs_head: Mlp
    theta_head: Mlp

    @classmethod
    def create(cls, n_public_obs: int, alphabet_size: int, n_own_actions: int,
               rng: np.random.Generator, latent_dim: int = 16,
               hidden=(64, 64)) -> "EncoderDecoder":
        in_dim = n_public_obs + 2 * alphabet_size + n_own_actions
        hidden = tuple(hidden)
        return cls(
            encoder=Mlp.create((in_dim, *hidden, latent_dim), rng),
            obs_head=Mlp.create((latent_dim, *hidden, n_public_obs), rng),
            theta_head=Mlp.create((latent_dim, *hidden, alphabet_size), rng,
                                  head="softmax"),
        )

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    def encode(self, x) -> np.ndarray:
        return self.encoder.forward(x)

    def _theta_hat(self, z) -> np.ndarray:
        """Population-mix prediction, floored and renormalized so it is a
        strictly positive distribution usable as a density argument."""
        raw = self.theta_head.forward(z)
        clipped = np.maximum(raw, THETA_FLOOR)
        return clipped / clipped.sum(axis=-1, keepdims=True)

    def decode(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Next-observation prediction and the population-mix prediction."""
        return self.obs_head.forward(z), self._theta_hat(z)

    def predict_next_population(self, z, rng: np.random.Generator | None = None,
                                scale: float | None = None) -> np.ndarray:
        """The decoder's view of the next population action distribution.

        Deterministic without an rng; with one, draws from the Dirichlet
        centered on the prediction at the given concentration ``scale``
        (callers pass the posterior's total concentration).
        """
        theta = self._theta_hat(z)
        if rng is None:
            return theta
        if scale is None or scale <= 0.0:
            raise ValueError("sampling requires a positive concentration scale")
        return sample_theta(scale * theta, rng)

    # -- loss ----------------------------------------------------------------

    def _loss_pieces(self, batch: EdBatch, include_kl: bool,
                     rng: np.random.Generator | None, samples: np.ndarray | None):
        z = self.encoder.forward(batch.inputs)
        obs_pred = self.obs_head.forward(z)
        theta_raw = self.theta_head.forward(z)
        clipped = np.maximum(theta_raw, THETA_FLOOR)
        theta_hat = clipped / clipped.sum(axis=1, keepdims=True)

        beta = batch.alphas + batch.configs
        mse_rows = ((obs_pred - batch.next_obs) ** 2).sum(axis=1)
        log_norm = gammaln(beta.sum(axis=1)) - gammaln(beta).sum(axis=1)
        nll_rows = -(log_norm + ((beta - 1.0) * np.log(theta_hat)).sum(axis=1))

        kl_rows = np.zeros(len(batch))
        if include_kl:
            if samples is None:
                if rng is None:
                    raise ValueError("drawing count samples requires an rng")
                samples = np.array([
                    rng.multinomial(int(round(batch.configs[t].sum())), theta_hat[t])
                    for t in range(len(batch))
                ])
            samples = np.asarray(samples, dtype=np.float64)
            for t in range(len(batch)):
                kl_rows[t] = dirichlet_kl(samples[t] + 1.0, beta[t])
        else:
            samples = None
        return z, obs_pred, theta_raw, theta_hat, beta, mse_rows, nll_rows, kl_rows, samples

    def ed_loss(self, batch: EdBatch, include_kl: bool,
                rng: np.random.Generator | None = None,
                samples: np.ndarray | None = None) -> EdLossResult:
        """Mean training loss over the batch.

        Terms per row: squared error of the next-observation prediction, the
        negative log density of the count posterior at the predicted mix, and
        (when ``include_kl``) the divergence between the smoothed sampled
        counts and that posterior. Pass ``samples`` to pin the drawn counts,
        e.g. to recompute the loss after an update.
        """
        (_, _, _, _, _, mse_rows, nll_rows, kl_rows,
         samples) = self._loss_pieces(batch, include_kl, rng, samples)
        mse = float(mse_rows.mean())
        nll = float(nll_rows.mean())
        kl = float(kl_rows.mean())
        return EdLossResult(total=mse + nll + kl, mse=mse, nll=nll, kl=kl,
                            samples=samples)

    def ed_grad(self, batch: EdBatch, include_kl: bool,
                rng: np.random.Generator | None = None,
                samples: np.ndarray | None = None):
        """Loss plus its gradient for (encoder, obs head, theta head).

        The count samples are constants in the gradient, so the KL term
        contributes to the returned loss value only.
        """
        (z, obs_pred, theta_raw, theta_hat, beta, mse_rows, nll_rows, kl_rows,
         samples) = self._loss_pieces(batch, include_kl, rng, samples)
        h = float(len(batch))

        up_obs = 2.0 * (obs_pred - batch.next_obs) / h
        g_obs, dz_obs = self.obs_head.backward(z, up_obs)

        # chain: dL/d theta_hat -> renormalization -> floor mask -> softmax head
        u_hat = -(beta - 1.0) / theta_hat / h
        denom = np.maximum(theta_raw, THETA_FLOOR).sum(axis=1, keepdims=True)
        u_clip = (u_hat - (u_hat * theta_hat).sum(axis=1, keepdims=True)) / denom
        u_raw = u_clip * (theta_raw > THETA_FLOOR)
        g_theta, dz_theta = self.theta_head.backward(z, u_raw)

        g_enc, _ = self.encoder.backward(batch.inputs, dz_obs + dz_theta)

        result = EdLossResult(
            total=float(mse_rows.mean() + nll_rows.mean() + kl_rows.mean()),
            mse=float(mse_rows.mean()), nll=float(nll_rows.mean()),
            kl=float(kl_rows.mean()), samples=samples,
        )
        return result, g_enc, g_obs, g_theta

    # -- training ---------------------------------------------------------------

    def init_train_state(self, lr: float = 1e-3) -> EdTrainState:
        return EdTrainState(
            encoder_opt=adam_init(self.encoder.params.size, lr=lr),
            obs_opt=adam_init(self.obs_head.params.size, lr=lr),
            theta_opt=adam_init(self.theta_head.params.size, lr=lr),
        )

    def ed_train_step(self, state: EdTrainState, batch: EdBatch, include_kl: bool,
                      rng: np.random.Generator | None = None,
                      max_grad_norm: float = 5.0) -> EdLossResult:
        """One joint optimizer step on the encoder and both heads.

        The three gradients are clipped as one concatenated vector (it is a
        single loss), then applied through the per-network Adam states, which
        are updated in place on ``state``.
        """
        result, g_enc, g_obs, g_theta = self.ed_grad(batch, include_kl, rng)
        joint = clip_global_norm(np.concatenate([g_enc, g_obs, g_theta]), max_grad_norm)
        sizes = [g_enc.size, g_obs.size, g_theta.size]
        g_enc, g_obs, g_theta = np.split(joint, np.cumsum(sizes)[:-1])
        self.encoder.params, state.encoder_opt = adam_step(
            state.encoder_opt, self.encoder.params, g_enc)
        self.obs_head.params, state.obs_opt = adam_step(
            state.obs_opt, self.obs_head.params, g_obs)
        self.theta_head.params, state.theta_opt = adam_step(
            state.theta_opt, self.theta_head.params, g_theta)
        return result

    # -- snapshots ----------------------------------------------------------------

    def save(self, prefix) -> None:
        """Write the three networks next to each other under a path prefix."""
        self.encoder.save(f"{prefix}.encoder")
        self.obs_head.save(f"{prefix}.obs_head")
        self.theta_head.save(f"{prefix}.theta_head")

    @classmethod
    def load(cls, prefix) -> "EncoderDecoder":
        return cls(
            encoder=Mlp.load(f"{prefix}.encoder"),
            obs_head=Mlp.load(f"{prefix}.obs_head"),
            theta_head=Mlp.load(f"{prefix}.theta_head"),
        )
