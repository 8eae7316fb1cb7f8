"""Decentralized actor-critic learners over public labels and peer counts.

Each agent owns an actor (softmax over its own actions, conditioned only on
the public label), a critic (scalar value of the situation), and a model of
what the other agents are doing. The model comes in two flavors:

* latent: a learned encoder-decoder compresses (label, counts, own action,
  current belief) into an embedding ``z`` that also feeds the critic; the
  belief over peer behavior is the decoder's population head output.
* counts: a conjugate Dirichlet over peer action rates, updated from the
  denoised counts; the critic sees a configuration sampled from it.

Critic inputs follow the one-step-late convention: the value of acting at
tick t is estimated from the label and counts that arrive after the tick
resolves, and the bootstrap term uses the following tick's samples. The
advantage treats the critic as ground truth (no gradient flows from the
actor into the critic, nor from the critic into the encoder-decoder).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .latent import EdBatch, EdTrainState, EncoderDecoder, encoder_input
from .population import PrivateObservation, posterior_update, rectify_observation, sample_theta

__all__ = [
    "VARIANTS", "Transition", "AgentBundle", "build_bundle",
    "select_action", "predict_config",
    "lia2c_advantage", "ia2cdm_advantage",
    "actor_objective_grad", "actor_update", "critic_update",
    "act", "record", "begin_episode", "end_episode_update",
]

VARIANTS = ("lia2c", "lia2c-wokld", "ia2cdm")

N_PUBLIC_OBS = 3


@dataclass
class Transition:
    """One completed tick of experience.

    ``actor_obs`` is the label the actor conditioned on; ``public_obs`` and
    ``private_obs`` are the post-tick samples the critic consumes. The
    next-step fields stay None until the following tick fills them.

    ``done`` marks the agent's last recorded tick. ``terminal`` additionally
    marks that the reward stream truly ended (the agent left the roster), so
    the bootstrap is dropped. A row that is done but not terminal is a time
    truncation of the continuing game and bootstraps from its own slot.
    """

    actor_obs: int
    public_obs: int
    self_action: int              # local action index
    private_obs: np.ndarray       # denoised counts, int64
    reward: float
    done: bool
    terminal: bool = False
    latent: np.ndarray | None = None
    population_prediction: np.ndarray | None = None
    configuration_prediction: np.ndarray | None = None
    next_public_obs: int | None = None
    next_self_action: int | None = None
    next_private_obs: np.ndarray | None = None
    next_latent: np.ndarray | None = None
    next_configuration_prediction: np.ndarray | None = None


@dataclass
class AgentBundle:
    """Everything one agent owns. No cross-agent references, by design."""

    agent_id: int
    role: str
    variant: str
    legal_actions: tuple          # local index -> global action id
    alphabet_size: int
    gamma: float
    entropy_weight: float
    actor: nets.Mlp
    critic: nets.Mlp
    actor_opt: nets.AdamState
    critic_opt: nets.AdamState
    actor_lr: float
    critic_lr: float
    policy_rng: np.random.Generator
    noise_rng: np.random.Generator
    latent_rng: np.random.Generator
    encoder_decoder: EncoderDecoder | None = None
    ed_state: EdTrainState | None = None
    theta_source: str = "decoder"
    alpha: np.ndarray = field(default_factory=lambda: np.ones(1))
    theta: np.ndarray = field(default_factory=lambda: np.ones(1))
    transitions: list = field(default_factory=list)
    ed_inputs: list = field(default_factory=list)
    ed_next_obs: list = field(default_factory=list)
    ed_alphas: list = field(default_factory=list)
    ed_configs: list = field(default_factory=list)
    retired: bool = False

    @property
    def n_actions(self) -> int:
        return len(self.legal_actions)

    def local_of(self, global_action: int) -> int:
        return self.legal_actions.index(global_action)


def build_bundle(agent_id: int, role: str, variant: str, legal_actions: tuple,
                 alphabet_size: int, *, policy_rng, noise_rng, latent_rng,
                 gamma: float = 0.95, entropy_weight: float = 0.01,
                 actor_lr: float = 3e-3, critic_lr: float = 3e-3,
                 ed_lr: float = 3e-3, hidden: tuple = (64, 64),
                 latent_dim: int = 16,
                 theta_source: str = "decoder") -> AgentBundle:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    n_actions = len(legal_actions)
    actor = nets.Mlp.create((N_PUBLIC_OBS, *hidden, n_actions), latent_rng,
                            head="softmax")
    if variant == "ia2cdm":
        critic_in = N_PUBLIC_OBS + n_actions + alphabet_size
    else:
        critic_in = latent_dim + N_PUBLIC_OBS + n_actions + alphabet_size
    critic = nets.Mlp.create((critic_in, *hidden, 1), latent_rng)
    bundle = AgentBundle(
        agent_id=agent_id, role=role, variant=variant,
        legal_actions=tuple(legal_actions), alphabet_size=alphabet_size,
        gamma=gamma, entropy_weight=entropy_weight,
        actor=actor, critic=critic,
        actor_opt=nets.adam_init(actor.params.size, lr=actor_lr),
        critic_opt=nets.adam_init(critic.params.size, lr=critic_lr),
        actor_lr=actor_lr, critic_lr=critic_lr,
        policy_rng=policy_rng, noise_rng=noise_rng, latent_rng=latent_rng,
        theta_source=theta_source,
    )
    if variant != "ia2cdm":
        bundle.encoder_decoder = EncoderDecoder.create(
            N_PUBLIC_OBS, alphabet_size, n_actions, latent_rng,
            latent_dim=latent_dim, hidden=hidden)
        bundle.ed_state = bundle.encoder_decoder.init_train_state(lr=ed_lr)
    begin_episode(bundle)
    return bundle


def begin_episode(bundle: AgentBundle) -> None:
    """Reset per-episode belief state and experience buffers."""
    k = bundle.alphabet_size
    bundle.alpha = np.ones(k, dtype=np.float64)
    bundle.theta = np.full(k, 1.0 / k)
    bundle.transitions = []
    bundle.ed_inputs = []
    bundle.ed_next_obs = []
    bundle.ed_alphas = []
    bundle.ed_configs = []
    bundle.retired = False


def rescale_alpha(bundle: AgentBundle, n_old: int, n_new: int) -> None:
    """Keep the count model's confidence proportional to the peer pool."""
    if n_old <= 0 or n_new <= 0:
        bundle.alpha = np.ones(bundle.alphabet_size, dtype=np.float64)
    else:
        bundle.alpha = bundle.alpha * (n_new / n_old)


# -- acting --------------------------------------------------------------------


def _onehot(index: int, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


def select_action(bundle: AgentBundle, public_obs: int) -> tuple[int, np.ndarray]:
    """Sample a local action from the actor's distribution at this label."""
    probs = bundle.actor.forward(_onehot(public_obs, N_PUBLIC_OBS))
    u = bundle.policy_rng.random()
    action = int(np.searchsorted(np.cumsum(probs), u))
    return min(action, bundle.n_actions - 1), probs


def act(bundle: AgentBundle, public_obs: int) -> tuple[int, int]:
    """Pick an action; returns (global action id, local index)."""
    local, _ = select_action(bundle, public_obs)
    return bundle.legal_actions[local], local


def predict_config(alpha: np.ndarray, n_others: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw a peer configuration from the count model's predictive."""
    if n_others <= 0:
        return np.zeros(alpha.shape[0], dtype=np.int64)
    theta = sample_theta(alpha, rng)
    return rng.multinomial(n_others, theta).astype(np.int64)


# -- critic inputs and advantages ------------------------------------------------


def _normalized(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    return counts / total if total > 0 else counts


def latent_critic_input(bundle: AgentBundle, z, public_obs, local_action,
                        counts) -> np.ndarray:
    return np.concatenate([
        np.asarray(z, dtype=np.float64),
        _onehot(public_obs, N_PUBLIC_OBS),
        _onehot(local_action, bundle.n_actions),
        _normalized(counts),
    ])


def counts_critic_input(bundle: AgentBundle, public_obs, local_action,
                        config) -> np.ndarray:
    return np.concatenate([
        _onehot(public_obs, N_PUBLIC_OBS),
        _onehot(local_action, bundle.n_actions),
        _normalized(config),
    ])


def _advantages(bundle: AgentBundle, current: np.ndarray, nxt: np.ndarray,
                rewards: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    q_now = bundle.critic.forward(current)[:, 0]
    q_next = np.zeros(len(rewards))
    live = ~terminal
    if np.any(live):
        q_next[live] = bundle.critic.forward(nxt[live])[:, 0]
    return rewards + bundle.gamma * q_next - q_now


def lia2c_advantage(bundle: AgentBundle, transitions: list) -> np.ndarray:
    """TD advantage with the embedding-augmented critic."""
    current, nxt, rewards, terminal = [], [], [], []
    for t in transitions:
        if t.latent is None:
            raise ValueError("latent fields must be populated for this variant")
        row = latent_critic_input(bundle, t.latent, t.public_obs,
                                  t.self_action, t.private_obs)
        current.append(row)
        if t.terminal:
            nxt.append(np.zeros_like(row))
        elif t.done:
            nxt.append(row)
        else:
            nxt.append(latent_critic_input(bundle, t.next_latent,
                                           t.next_public_obs,
                                           t.next_self_action,
                                           t.next_private_obs))
        rewards.append(t.reward)
        terminal.append(t.terminal)
    return _advantages(bundle, np.asarray(current), np.asarray(nxt),
                       np.asarray(rewards), np.asarray(terminal, dtype=bool))


def ia2cdm_advantage(bundle: AgentBundle, transitions: list) -> np.ndarray:
    """TD advantage with the sampled-configuration critic."""
    current, nxt, rewards, terminal = [], [], [], []
    for t in transitions:
        if t.configuration_prediction is None:
            raise ValueError("configuration prediction missing")
        row = counts_critic_input(bundle, t.public_obs, t.self_action,
                                  t.configuration_prediction)
        current.append(row)
        if t.terminal:
            nxt.append(np.zeros_like(row))
        elif t.done:
            nxt.append(row)
        else:
            nxt.append(counts_critic_input(bundle, t.next_public_obs,
                                           t.next_self_action,
                                           t.next_configuration_prediction))
        rewards.append(t.reward)
        terminal.append(t.terminal)
    return _advantages(bundle, np.asarray(current), np.asarray(nxt),
                       np.asarray(rewards), np.asarray(terminal, dtype=bool))


def compute_advantages(bundle: AgentBundle, transitions: list) -> np.ndarray:
    if bundle.variant == "ia2cdm":
        return ia2cdm_advantage(bundle, transitions)
    return lia2c_advantage(bundle, transitions)


# -- updates ---------------------------------------------------------------------


def actor_objective_grad(actor: nets.Mlp, obs: np.ndarray, actions: np.ndarray,
                         advantages: np.ndarray,
                         entropy_weight: float) -> tuple[float, float, np.ndarray]:
    """Loss (negated objective), mean entropy, and the loss gradient.

    Objective: mean log pi(a|o) * A plus an entropy bonus, with the
    advantages held constant.
    """
    batch = obs.shape[0]
    probs = actor.forward(obs)
    safe = np.maximum(probs, 1e-300)
    picked = safe[np.arange(batch), actions]
    entropy = -np.sum(safe * np.log(safe), axis=1)
    objective = float(np.mean(np.log(picked) * advantages)
                      + entropy_weight * np.mean(entropy))

    upstream = np.zeros_like(probs)
    upstream[np.arange(batch), actions] = advantages / picked
    upstream -= entropy_weight * (np.log(safe) + 1.0)
    upstream /= batch
    grad, _ = actor.backward(obs, -upstream)
    return -objective, float(np.mean(entropy)), grad


def actor_update(bundle: AgentBundle, transitions: list,
                 advantages: np.ndarray,
                 max_grad_norm: float = 5.0) -> dict:
    """One ascent step on the policy-gradient objective."""
    obs = np.asarray([_onehot(t.actor_obs, N_PUBLIC_OBS) for t in transitions])
    actions = np.asarray([t.self_action for t in transitions])
    loss, entropy, grad = actor_objective_grad(
        bundle.actor, obs, actions, np.asarray(advantages),
        bundle.entropy_weight)
    grad = nets.clip_global_norm(grad, max_grad_norm)
    bundle.actor.params, bundle.actor_opt = nets.adam_step(
        bundle.actor_opt, bundle.actor.params, grad)
    return {"actor_loss": loss, "entropy": entropy}


def _critic_rows(bundle: AgentBundle, transitions: list) -> tuple:
    current, nxt, rewards, terminal = [], [], [], []
    for t in transitions:
        if bundle.variant == "ia2cdm":
            row = counts_critic_input(bundle, t.public_obs, t.self_action,
                                      t.configuration_prediction)
            nrow = (row if t.done and not t.terminal else
                    np.zeros_like(row) if t.terminal else
                    counts_critic_input(bundle, t.next_public_obs,
                                        t.next_self_action,
                                        t.next_configuration_prediction))
        else:
            row = latent_critic_input(bundle, t.latent, t.public_obs,
                                      t.self_action, t.private_obs)
            nrow = (row if t.done and not t.terminal else
                    np.zeros_like(row) if t.terminal else
                    latent_critic_input(bundle, t.next_latent,
                                        t.next_public_obs,
                                        t.next_self_action,
                                        t.next_private_obs))
        current.append(row)
        nxt.append(nrow)
        rewards.append(t.reward)
        terminal.append(t.terminal)
    return (np.asarray(current), np.asarray(nxt),
            np.asarray(rewards), np.asarray(terminal, dtype=bool))


def critic_update(bundle: AgentBundle, transitions: list,
                  max_grad_norm: float = 5.0) -> dict:
    """One descent step on squared TD error with a frozen bootstrap target."""
    current, nxt, rewards, terminal = _critic_rows(bundle, transitions)
    batch = len(transitions)
    targets = rewards.copy()
    live = ~terminal
    if np.any(live):
        targets[live] += bundle.gamma * bundle.critic.forward(nxt[live])[:, 0]

    q = bundle.critic.forward(current)[:, 0]
    loss = float(np.mean((q - targets) ** 2))
    upstream = (2.0 * (q - targets) / batch)[:, None]
    grad, _ = bundle.critic.backward(current, upstream)
    grad = nets.clip_global_norm(grad, max_grad_norm)
    bundle.critic.params, bundle.critic_opt = nets.adam_step(
        bundle.critic_opt, bundle.critic.params, grad)
    return {"critic_loss": loss}


# -- per-tick orchestration --------------------------------------------------------


def record(bundle: AgentBundle, *, actor_obs: int, local_action: int,
           observation: PrivateObservation, reward: float,
           post_obs: int, done: bool, terminal: bool = False) -> dict:
    """Fold one resolved tick into the agent's buffers and belief state.

    Order matters: denoise the counts, snapshot the pre-update belief for
    the model loss, then fold the counts into the posterior; latent
    variants also embed the tick and roll the population belief forward.
    Returns the tick's model predictions (argmax population action, and for
    latent variants the argmax next public label) for accuracy tracking.
    """
    counts = rectify_observation(observation.counts, observation.noise_rate)
    alpha_before = bundle.alpha.copy()
    stats: dict = {}

    transition = Transition(
        actor_obs=actor_obs, public_obs=post_obs, self_action=local_action,
        private_obs=counts, reward=reward, done=done, terminal=terminal)

    if bundle.variant == "ia2cdm":
        transition.configuration_prediction = predict_config(
            alpha_before, int(counts.sum()), bundle.latent_rng)
    else:
        ed = bundle.encoder_decoder
        enc_in = encoder_input(_onehot(actor_obs, N_PUBLIC_OBS), counts,
                               _onehot(local_action, bundle.n_actions),
                               bundle.theta)
        z = ed.encode(enc_in)
        obs_pred, theta_hat = ed.decode(z)
        transition.latent = z
        transition.population_prediction = bundle.theta.copy()
        bundle.ed_inputs.append(enc_in)
        bundle.ed_next_obs.append(_onehot(post_obs, N_PUBLIC_OBS))
        bundle.ed_alphas.append(alpha_before)
        bundle.ed_configs.append(counts.astype(np.float64))
        stats["pred_action"] = int(np.argmax(theta_hat))
        stats["pred_obs"] = int(np.argmax(obs_pred))
        stats["latent"] = z
        stats["theta_hat"] = theta_hat
        if bundle.theta_source == "posterior":
            post = posterior_update(alpha_before, counts)
            bundle.theta = post / post.sum()
        elif bundle.theta_source == "decoder-sample":
            bundle.theta = sample_theta(
                np.maximum(theta_hat, 1e-6) * counts.sum() + 1.0,
                bundle.latent_rng)
        else:
            bundle.theta = theta_hat

    bundle.alpha = posterior_update(alpha_before, counts)
    if bundle.variant == "ia2cdm":
        stats["pred_action"] = int(np.argmax(bundle.alpha))

    if bundle.transitions and not bundle.transitions[-1].done:
        prev = bundle.transitions[-1]
        prev.next_public_obs = transition.public_obs
        prev.next_self_action = transition.self_action
        prev.next_private_obs = transition.private_obs
        prev.next_latent = transition.latent
        prev.next_configuration_prediction = transition.configuration_prediction
    bundle.transitions.append(transition)
    return stats


def retire(bundle: AgentBundle) -> None:
    """Mark an agent that left the roster; its last tick becomes terminal."""
    bundle.retired = True
    if bundle.transitions:
        bundle.transitions[-1].done = True
        bundle.transitions[-1].terminal = True


def end_episode_update(bundle: AgentBundle,
                       max_grad_norm: float = 5.0) -> dict:
    """Run the per-episode actor, critic, and model updates."""
    stats = {"actor_loss": np.nan, "critic_loss": np.nan,
             "ed_loss": np.nan, "entropy": np.nan}
    usable = [t for t in bundle.transitions
              if t.done or t.next_public_obs is not None]
    if not usable:
        return stats
    advantages = compute_advantages(bundle, usable)
    stats.update(actor_update(bundle, usable, advantages, max_grad_norm))
    stats.update(critic_update(bundle, usable, max_grad_norm))

    if bundle.variant != "ia2cdm" and bundle.ed_inputs:
        batch = EdBatch(
            inputs=np.asarray(bundle.ed_inputs),
            next_obs=np.asarray(bundle.ed_next_obs),
            alphas=np.asarray(bundle.ed_alphas),
            configs=np.asarray(bundle.ed_configs),
        )
        include_kl = bundle.variant == "lia2c"
        result = bundle.encoder_decoder.ed_train_step(
            bundle.ed_state, batch, include_kl=include_kl,
            rng=bundle.latent_rng, max_grad_norm=max_grad_norm)
        stats["ed_loss"] = result.total
    return stats
