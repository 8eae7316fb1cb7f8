"""Conjugate count model of an anonymous agent population.

An agent never sees who did what, only a noisy count vector of the actions
the rest of the population took. This module carries the probabilistic
machinery for that view: Dirichlet densities and samples, exact count-vector
(configuration) distributions, de-noising of corrupted counts, the conjugate
posterior update, closed-form Dirichlet KL, and a belief filter over small
finite model sets for the agents being observed.

Configurations are integer count vectors over the shared action alphabet,
ordered lexicographically where enumeration order matters; dictionaries are
keyed by plain tuples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

__all__ = [
    "InfiniteDensityError",
    "RectificationUndefinedError",
    "DegenerateEvidenceError",
    "PrivateObservation",
    "AgentModel",
    "ModelBelief",
    "dirichlet_log_density",
    "dirichlet_density",
    "sample_theta",
    "config_likelihood",
    "enumerate_configs",
    "config_distribution",
    "rectify_observation",
    "posterior_update",
    "mean_action",
    "dirichlet_kl",
    "observation_likelihood",
    "default_w0",
    "belief_update_bu",
]


class InfiniteDensityError(ValueError):
    """Density requested at a simplex boundary point where it diverges."""


class RectificationUndefinedError(ValueError):
    """Count de-noising has no solution at this noise rate."""


class DegenerateEvidenceError(RuntimeError):
    """Every candidate model assigns zero likelihood to the evidence."""


@dataclass
class PrivateObservation:
    """Noisy action counts of the other agents, plus the corruption rate."""

    counts: np.ndarray
    noise_rate: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("observation counts must be nonnegative")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {self.noise_rate}")


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size < 2:
        raise ValueError(f"need a 1-D parameter vector of length >= 2, got shape {alpha.shape}")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0.0):
        raise ValueError("Dirichlet parameters must be finite and positive")
    return alpha


def _check_simplex(theta, size: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (size,):
        raise ValueError(f"point has shape {theta.shape}, expected ({size},)")
    if np.any(theta < 0.0) or not np.isclose(theta.sum(), 1.0, atol=1e-8):
        raise ValueError("point must be nonnegative and sum to 1")
    return theta


def dirichlet_log_density(alpha, theta) -> float:
    """Log density of Dir(alpha) at a point on the simplex.

    Parameters
    ----------
    alpha : array_like
        Positive concentration parameters, length >= 2.
    theta : array_like
        Simplex point of the same length.

    Returns
    -------
    float
        Log density; ``-inf`` where a zero coordinate meets ``alpha > 1``.

    Raises
    ------
    InfiniteDensityError
        If some coordinate is 0 while its parameter is below 1, where the
        density diverges.
    """
    alpha = _check_alpha(alpha)
    theta = _check_simplex(theta, alpha.size)
    log_norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
    zero = theta == 0.0
    if np.any(zero & (alpha < 1.0)):
        raise InfiniteDensityError("density diverges: zero coordinate with parameter < 1")
    if np.any(zero & (alpha > 1.0)):
        return -np.inf
    active = ~zero
    return float(log_norm + ((alpha[active] - 1.0) * np.log(theta[active])).sum())


def dirichlet_density(alpha, theta) -> float:
    """Density of Dir(alpha) at a simplex point. See ``dirichlet_log_density``."""
    return float(np.exp(dirichlet_log_density(alpha, theta)))


def sample_theta(alpha, rng: np.random.Generator) -> np.ndarray:
    """Draw one point from Dir(alpha) via normalized per-coordinate gamma draws."""
    alpha = _check_alpha(alpha)
    while True:
        g = rng.gamma(alpha)
        total = g.sum()
        if total > 0.0:  # guards against all-zero underflow at tiny alpha
            return g / total


def config_likelihood(theta, config, with_coefficient: bool = False) -> float:
    """Probability of a count vector under per-agent action probabilities theta.

    The default is the ordered-realization form ``prod theta_n ** c_n`` (one
    specific assignment of agents to actions). With ``with_coefficient`` the
    multinomial coefficient is included, giving the proper pmf over count
    vectors.
    """
    theta = np.asarray(theta, dtype=np.float64)
    config = np.asarray(config, dtype=np.int64)
    if theta.shape != config.shape:
        raise ValueError(f"shapes differ: theta {theta.shape}, config {config.shape}")
    if np.any(config < 0):
        raise ValueError("counts must be nonnegative")
    active = config > 0
    if np.any(theta[active] == 0.0):
        return 0.0
    log_p = float((config[active] * np.log(theta[active])).sum())
    if with_coefficient:
        n = config.sum()
        log_p += float(gammaln(n + 1) - gammaln(config + 1).sum())
    return float(np.exp(log_p))


def enumerate_configs(n_agents: int, n_actions: int) -> list[tuple[int, ...]]:
    """All count vectors of ``n_agents`` over ``n_actions`` slots, lexicographic."""
    if n_actions < 1 or n_agents < 0:
        raise ValueError("need n_actions >= 1 and n_agents >= 0")
    if n_actions == 1:
        return [(n_agents,)]
    out = []
    for first in range(n_agents + 1):
        for rest in enumerate_configs(n_agents - first, n_actions - 1):
            out.append((first,) + rest)
    return out


def config_distribution(action_probs) -> dict[tuple[int, ...], float]:
    """Exact count-vector distribution for independent categorical agents.

    Parameters
    ----------
    action_probs : array_like
        Shape (n_agents, n_actions); row i is agent i's action distribution.

    Returns
    -------
    dict
        Maps count tuples to probabilities. Computed by folding one agent at
        a time into the running distribution, so the cost is polynomial in
        the population size rather than exponential.
    """
    probs = np.asarray(action_probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"expected (n_agents, n_actions), got shape {probs.shape}")
    if np.any(probs < 0.0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("each row must be a probability distribution")
    n_actions = probs.shape[1]
    dist: dict[tuple[int, ...], float] = {tuple([0] * n_actions): 1.0}
    for row in probs:
        nxt: dict[tuple[int, ...], float] = {}
        for cfg, p in dist.items():
            for a in range(n_actions):
                q = row[a]
                if q == 0.0:
                    continue
                key = cfg[:a] + (cfg[a] + 1,) + cfg[a + 1:]
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return dist


def rectify_observation(observed, noise_rate: float) -> np.ndarray:
    """Invert the expected effect of per-agent misreporting on action counts.

    Each agent's action is reported truthfully with probability ``1 - d`` and
    otherwise as one of the other ``k - 1`` labels uniformly, so expected
    observed counts are an affine map of the true ones. This solves that map,
    clamps negatives to zero, rescales, and rounds back to integers summing
    to the population size by largest remainder (remainder ties go to the
    lower index).

    Raises
    ------
    RectificationUndefinedError
        When ``d >= (k - 1) / k``, where the affine map stops being
        invertible (its slope hits zero).
    """
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim != 1 or np.any(observed < 0):
        raise ValueError("observed counts must be a nonnegative 1-D vector")
    k = observed.size
    n = float(observed.sum())
    if k == 1 or n == 0.0:
        return observed.astype(np.int64)
    limit = (k - 1) / k
    if noise_rate >= limit - 1e-12:  # compare rates, not the slope: float residue
        raise RectificationUndefinedError(
            f"noise rate {noise_rate} >= {limit:.6g} leaves counts unrecoverable"
        )
    slope = 1.0 - noise_rate - noise_rate / (k - 1)
    shift = noise_rate * n / (k - 1)
    continuous = np.clip((observed - shift) / slope, 0.0, None)
    continuous *= n / continuous.sum()
    floors = np.floor(continuous)
    remainder = continuous - floors
    result = floors.astype(np.int64)
    deficit = int(round(n - floors.sum()))
    if deficit > 0:
        order = np.argsort(-remainder, kind="stable")
        result[order[:deficit]] += 1
    return result


def posterior_update(alpha, config) -> np.ndarray:
    """Conjugate update: add observed counts to the concentration vector."""
    alpha = _check_alpha(alpha)
    config = np.asarray(config, dtype=np.float64)
    if config.shape != alpha.shape:
        raise ValueError(f"shapes differ: alpha {alpha.shape}, config {config.shape}")
    if np.any(config < 0):
        raise ValueError("counts must be nonnegative")
    return alpha + config


def mean_action(alpha) -> np.ndarray:
    """Mean of Dir(alpha): the model's expected population action distribution."""
    alpha = _check_alpha(alpha)
    return alpha / alpha.sum()


def dirichlet_kl(alpha, beta) -> float:
    """KL divergence KL(Dir(alpha) || Dir(beta)) in closed form."""
    alpha = _check_alpha(alpha)
    beta = _check_alpha(beta)
    if alpha.shape != beta.shape:
        raise ValueError(f"shapes differ: {alpha.shape} vs {beta.shape}")
    total = alpha.sum()
    # grouped as differences so KL(p, p) cancels to exactly zero
    value = ((gammaln(total) - gammaln(beta.sum()))
             - (gammaln(alpha) - gammaln(beta)).sum()
             + ((alpha - beta) * (digamma(alpha) - digamma(total))).sum())
    return float(value)


def observation_likelihood(true_config, observed_counts, noise_rate: float) -> float:
    """Probability that misreporting turns ``true_config`` into ``observed_counts``.

    Uses the same count-folding trick as ``config_distribution``: every agent
    in a true-action group reports independently from the corruption
    categorical, and the fold accumulates the distribution of reported
    counts exactly.
    """
    true_config = np.asarray(true_config, dtype=np.int64)
    observed = np.asarray(observed_counts, dtype=np.int64)
    if true_config.shape != observed.shape:
        raise ValueError("count vectors must have matching length")
    if true_config.sum() != observed.sum():
        return 0.0
    k = true_config.size
    if k == 1:
        return 1.0
    rows = []
    for action, count in enumerate(true_config):
        if count == 0:
            continue
        row = np.full(k, noise_rate / (k - 1))
        row[action] = 1.0 - noise_rate
        rows.extend([row] * int(count))
    if not rows:
        return 1.0 if observed.sum() == 0 else 0.0
    dist = config_distribution(np.array(rows))
    return dist.get(tuple(int(c) for c in observed), 0.0)


def default_w0(noise_rate: float):
    """Private-observation likelihood under the uniform misreport model."""

    def w0(own_action, config, observation) -> float:
        counts = observation.counts if isinstance(observation, PrivateObservation) else observation
        return observation_likelihood(config, counts, noise_rate)

    return w0


@dataclass
class AgentModel:
    """Candidate model of one observed agent: a policy table plus a history tag.

    ``policy`` has shape (n_public_obs, n_actions). The history tag is opaque
    bookkeeping with no behavioral consequence for table policies; updates
    carry it along unchanged.
    """

    policy: np.ndarray
    history: tuple = ()

    def __post_init__(self):
        self.policy = np.asarray(self.policy, dtype=np.float64)
        if self.policy.ndim != 2:
            raise ValueError("policy table must be (n_obs, n_actions)")
        if np.any(self.policy < 0) or not np.allclose(self.policy.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each policy row must be a distribution")

    def action_probs(self, public_obs: int) -> np.ndarray:
        return self.policy[public_obs]


@dataclass
class ModelBelief:
    """Independent categorical beliefs over each tracked agent's model set."""

    model_sets: list[list[AgentModel]]
    probs: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.probs:
            self.probs = [np.full(len(ms), 1.0 / len(ms)) for ms in self.model_sets]
        self.probs = [np.asarray(p, dtype=np.float64) for p in self.probs]
        for ms, p in zip(self.model_sets, self.probs):
            if len(ms) != p.size:
                raise ValueError("belief length must match the model set")
            if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
                raise ValueError("beliefs must be distributions")

    def predictive_action_dist(self, agent: int, public_obs: int) -> np.ndarray:
        """Marginal action distribution of one tracked agent under the belief."""
        ms, p = self.model_sets[agent], self.probs[agent]
        return np.sum([w * m.action_probs(public_obs) for m, w in zip(ms, p)], axis=0)


def belief_update_bu(belief: ModelBelief, own_action: int, public_obs: int,
                     observation: PrivateObservation, w0=None) -> ModelBelief:
    """Filter the per-agent model beliefs against one private observation.

    For each tracked agent j, candidate models are reweighted by how well the
    actions they prescribe explain the observed counts, with the remaining
    population's contribution summed exactly: the count distribution of the
    agents other than j (under the current beliefs) is folded together, j's
    own candidate action completes the configuration, and ``w0`` scores it
    against the observation. Model sets and history tags are unchanged; only
    the belief weights move.

    Raises
    ------
    DegenerateEvidenceError
        If every model of some agent has zero evidence, in which case the
        caller should fall back to the prior belief.
    """
    if w0 is None:
        w0 = default_w0(observation.noise_rate)
    n_tracked = len(belief.model_sets)
    n_actions = belief.model_sets[0][0].policy.shape[1]
    marginals = [belief.predictive_action_dist(k, public_obs) for k in range(n_tracked)]

    new_probs = []
    for j in range(n_tracked):
        rest = [marginals[k] for k in range(n_tracked) if k != j]
        if rest:
            rest_dist = config_distribution(np.array(rest))
        else:
            rest_dist = {tuple([0] * n_actions): 1.0}
        evidence = np.zeros(n_actions)
        for cfg, p_cfg in rest_dist.items():
            for a_j in range(n_actions):
                full = cfg[:a_j] + (cfg[a_j] + 1,) + cfg[a_j + 1:]
                evidence[a_j] += p_cfg * w0(own_action, full, observation)
        weights = np.array([
            prior * float(model.action_probs(public_obs) @ evidence)
            for model, prior in zip(belief.model_sets[j], belief.probs[j])
        ])
        total = weights.sum()
        if total <= 0.0:
            raise DegenerateEvidenceError(
                f"observation has zero likelihood under every model of agent {j}"
            )
        new_probs.append(weights / total)
    return ModelBelief(belief.model_sets, new_probs)
