"""Exact expected returns for fixed symmetric policies.

When every employee plays the same stationary policy over public labels,
the health level is a Markov chain on five states and expected returns have
a closed form: per level, the common action distribution gives the expected
reward directly, and the level transition probabilities are trinomial tail
sums over the self/group counts. These routines evaluate that chain exactly
(up to float rounding); no simulation is involved, so they are safe to use
as a reference against sampled rollouts.

Also includes the manager-side staffing ledger: the expected return of a
manager who holds the roster at a constant size while employees all play
group, which pins down the most profitable steady roster size.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .env import (GROUP, SELF, BALANCE, OrgConfig, logistic,
                  public_obs_of_level)

__all__ = [
    "level_transition_matrix", "expected_reward_per_level",
    "evaluate_symmetric_policy", "best_symmetric_policy",
    "constant_staffing_returns", "best_constant_staffing",
]

_CLOSED_ACTIONS = (SELF, BALANCE, GROUP)


def _action_dist_per_level(policy: np.ndarray, epsilon: float) -> np.ndarray:
    """Marginal action distribution at each level.

    ``policy`` has one row per public label (3) giving probabilities over
    the closed action set (self, balance, group). Label corruption mixes
    rows: with rate epsilon the agent conditions on a uniformly chosen
    wrong label.
    """
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (3, 3):
        raise ValueError("policy must map 3 public labels to 3 actions")
    if np.any(policy < 0) or not np.allclose(policy.sum(axis=1), 1.0):
        raise ValueError("policy rows must be distributions")
    dists = np.zeros((5, 3))
    for level in range(5):
        true = public_obs_of_level(level)
        row = (1.0 - epsilon) * policy[true]
        for other in range(3):
            if other != true:
                row = row + (epsilon / 2.0) * policy[other]
        dists[level] = row
    return dists


def _trinomial_logpmf(counts, probs) -> float:
    total = sum(counts)
    out = math.lgamma(total + 1)
    for c, p in zip(counts, probs):
        out -= math.lgamma(c + 1)
        if c > 0:
            if p == 0.0:
                return -np.inf
            out += c * math.log(p)
    return out


def level_transition_matrix(policy: np.ndarray, n_agents: int,
                            epsilon: float = 0.0) -> np.ndarray:
    """Row-stochastic 5x5 matrix of the health level under the policy.

    The level moves up when strictly more agents chose group than self,
    down when strictly fewer, and stays put on a tie, clamped at the ends.
    Counts are multinomial in the per-level action distribution.
    """
    dists = _action_dist_per_level(policy, epsilon)
    matrix = np.zeros((5, 5))
    for level in range(5):
        p_up = p_down = p_stay = 0.0
        probs = dists[level]
        for n_self in range(n_agents + 1):
            for n_bal in range(n_agents + 1 - n_self):
                n_grp = n_agents - n_self - n_bal
                mass = math.exp(_trinomial_logpmf(
                    (n_self, n_bal, n_grp), probs))
                if n_grp > n_self:
                    p_up += mass
                elif n_self > n_grp:
                    p_down += mass
                else:
                    p_stay += mass
        matrix[level, min(level + 1, 4)] += p_up
        matrix[level, max(level - 1, 0)] += p_down
        matrix[level, level] += p_stay
    return matrix


def expected_reward_per_level(policy: np.ndarray, config: OrgConfig) -> np.ndarray:
    """Expected one-tick reward of a single agent at each level."""
    p = config.rewards
    dists = _action_dist_per_level(policy, config.epsilon)
    out = np.zeros(5)
    for level in range(5):
        pi = dists[level]
        individual = sum(pi[i] * p.individual[a]
                         for i, a in enumerate(_CLOSED_ACTIONS))
        m = p.level_multipliers[level]
        # E[counts]/N equals the common action distribution.
        group_term = m * (p.w_group * pi[2] + p.w_balance * pi[1])
        out[level] = individual + group_term
    return out


def evaluate_symmetric_policy(policy: np.ndarray, config: OrgConfig) -> float:
    """Exact expected undiscounted episode return of one employee.

    Closed mode only: every employee plays ``policy`` for the whole
    horizon, and the level starts at ``config.initial_level``.
    """
    if config.open_mode:
        raise ValueError("exact evaluation covers the fixed-roster mode only")
    transition = level_transition_matrix(policy, config.n_employees,
                                         config.epsilon)
    rewards = expected_reward_per_level(policy, config)
    occupancy = np.zeros(5)
    occupancy[config.initial_level] = 1.0
    total = 0.0
    for _ in range(config.horizon):
        total += float(occupancy @ rewards)
        occupancy = occupancy @ transition
    return total


def _deterministic_policies():
    for choice in itertools.product(range(3), repeat=3):
        policy = np.zeros((3, 3))
        for obs, act in enumerate(choice):
            policy[obs, act] = 1.0
        yield choice, policy


def best_symmetric_policy(config: OrgConfig) -> tuple[float, tuple]:
    """Best deterministic symmetric policy and its exact return.

    With everyone tied to the same policy the optimum over stationary
    symmetric behaviors is attained at a deterministic label-to-action
    table, so scanning all 27 tables suffices.
    """
    best_value, best_choice = -np.inf, None
    for choice, policy in _deterministic_policies():
        value = evaluate_symmetric_policy(policy, config)
        if value > best_value:
            best_value, best_choice = value, choice
    return best_value, best_choice


def constant_staffing_returns(config: OrgConfig,
                              max_size: int = 6) -> dict[int, float]:
    """Manager's exact episode return for each steady roster size.

    Open-mode ledger under the simplest steady plan: hire one employee per
    tick until the roster holds ``size`` employees, never fire, and play
    group whenever not hiring; employees always play group and never
    resign. Deterministic, so the "expectation" is a plain sum.
    """
    out = {}
    p = config.rewards
    for size in range(1, max_size + 1):
        level = config.initial_level
        employees = 1
        hired_total = 0
        total = 0.0
        for _ in range(config.horizon):
            hiring = employees < size
            n_live = employees + 1
            n_group = employees + (0 if hiring else 1)
            sum_individual = (employees * p.individual[GROUP]
                              + (0.0 if hiring else p.individual[GROUP]))
            scale = p.manager_beta ** (hired_total - 1)
            m = p.level_multipliers[level]
            group_term = m * p.w_group * n_group / n_live
            total += (logistic(scale * sum_individual) + group_term
                      - (p.hire_cost if hiring else 0.0))
            if n_group > 0:
                level = min(level + 1, 4)
            if hiring:
                employees += 1
                hired_total += 1
        out[size] = total
    return out


def best_constant_staffing(config: OrgConfig, max_size: int = 6) -> tuple[int, float]:
    returns = constant_staffing_returns(config, max_size)
    best_size = max(returns, key=lambda s: returns[s])
    return best_size, returns[best_size]
