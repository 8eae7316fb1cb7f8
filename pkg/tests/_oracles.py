"""Independent reference implementations used to check the library.

Everything in here is deliberately written the dumb way (finite differences,
exhaustive enumeration, Monte Carlo) and must not import anything from the
package except plain data containers, so the two routes stay independent.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def finite_diff_grad(f, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        bump = np.zeros_like(x0)
        bump[i] = h
        g[i] = (f(x0 + bump) - f(x0 - bump)) / (2.0 * h)
    return g


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    """Norm-relative error with a floor so tiny exact gradients don't blow up."""
    denom = max(float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(np.asarray(approx) - np.asarray(exact))) / denom


def adam_recursion(grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Spreadsheet-style replay of the Adam moment recursions.

    Takes a list of gradient vectors and returns the list of parameter deltas
    the optimizer should apply, starting from zero moments.
    """
    m = np.zeros_like(np.asarray(grads[0], dtype=np.float64))
    v = np.zeros_like(m)
    deltas = []
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        deltas.append(-lr * m_hat / (np.sqrt(v_hat) + eps))
    return deltas


# -- population counting -------------------------------------------------------


def brute_force_config_dist(action_probs: np.ndarray) -> dict[tuple[int, ...], float]:
    """Count-vector distribution by enumerating every joint action.

    ``action_probs`` is (n_agents, n_actions); agents act independently.
    """
    probs = np.asarray(action_probs, dtype=np.float64)
    n_agents, n_actions = probs.shape
    out: dict[tuple[int, ...], float] = {}
    for joint in itertools.product(range(n_actions), repeat=n_agents):
        p = 1.0
        for agent, act in enumerate(joint):
            p *= probs[agent, act]
        counts = [0] * n_actions
        for act in joint:
            counts[act] += 1
        key = tuple(counts)
        out[key] = out.get(key, 0.0) + p
    return out


def multinomial_logpmf(counts, probs) -> float:
    """Coefficient-weighted multinomial log mass, via lgamma."""
    counts = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    n = counts.sum()
    out = math.lgamma(n + 1.0)
    for c, p in zip(counts, probs):
        out -= math.lgamma(c + 1.0)
        if c > 0:
            if p == 0.0:
                return -math.inf
            out += c * math.log(p)
    return out


def dirichlet_logpdf(alpha, theta) -> float:
    """Log Dirichlet density, written independently with math.lgamma."""
    alpha = np.asarray(alpha, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    out = math.lgamma(float(alpha.sum()))
    for a, t in zip(alpha, theta):
        out -= math.lgamma(float(a))
        out += (a - 1.0) * math.log(float(t))
    return out


def dirichlet_kl_monte_carlo(alpha, beta, n_samples: int,
                             rng: np.random.Generator) -> tuple[float, float]:
    """KL(Dir(alpha) || Dir(beta)) by sampling; returns (estimate, std error)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    draws = rng.dirichlet(alpha, size=n_samples)
    log_t = np.log(draws)
    # log ratio of densities; the normalizers are sample-independent.
    const = (math.lgamma(alpha.sum()) - sum(math.lgamma(a) for a in alpha)
             - math.lgamma(beta.sum()) + sum(math.lgamma(b) for b in beta))
    ratios = const + log_t @ (alpha - beta)
    return float(ratios.mean()), float(ratios.std(ddof=1) / math.sqrt(n_samples))


def corruption_likelihood(true_counts, observed_counts, delta: float) -> float:
    """Probability that per-agent misreporting turns true_counts into observed_counts.

    Each agent reports its true action with probability 1-delta, otherwise one
    of the other labels uniformly. Computed by enumerating every assignment of
    per-true-action report counts (exponential; fine for tiny populations).
    """
    true_counts = tuple(int(c) for c in true_counts)
    observed_counts = tuple(int(c) for c in observed_counts)
    k = len(true_counts)
    if sum(true_counts) != sum(observed_counts):
        return 0.0

    def report_prob(true_a, reported_a):
        if reported_a == true_a:
            return 1.0 - delta
        return delta / (k - 1) if k > 1 else 0.0

    # Distribution of report counts contributed by agents whose true action is a.
    def group_dist(true_a, n):
        dist = {tuple([0] * k): 1.0}
        for _ in range(n):
            nxt: dict[tuple[int, ...], float] = {}
            for key, p in dist.items():
                for rep in range(k):
                    q = report_prob(true_a, rep)
                    if q == 0.0:
                        continue
                    nk = list(key)
                    nk[rep] += 1
                    nk = tuple(nk)
                    nxt[nk] = nxt.get(nk, 0.0) + p * q
            dist = nxt
        return dist

    total = {tuple([0] * k): 1.0}
    for a, n in enumerate(true_counts):
        if n == 0:
            continue
        gd = group_dist(a, n)
        nxt: dict[tuple[int, ...], float] = {}
        for key, p in total.items():
            for gkey, q in gd.items():
                nk = tuple(x + y for x, y in zip(key, gkey))
                nxt[nk] = nxt.get(nk, 0.0) + p * q
        total = nxt
    return total.get(observed_counts, 0.0)


def brute_force_belief_update(model_probs, beliefs, own_action, w0, omega):
    """Posterior over each tracked agent's model by full joint-action enumeration.

    ``model_probs[j][m]`` is agent j's action distribution under model m (a
    1-D array over the shared action alphabet, already conditioned on the
    current public observation); ``beliefs[j]`` the prior over j's models.
    ``w0(a0, counts, omega)`` is the private-observation likelihood.
    Returns a list of posterior arrays (unnormalized evidence handled here).
    """
    n_agents = len(model_probs)
    n_actions = len(model_probs[0][0])
    posts = []
    for j in range(n_agents):
        post = np.zeros(len(model_probs[j]))
        for m_idx, m_dist in enumerate(model_probs[j]):
            weight = 0.0
            others = [k for k in range(n_agents) if k != j]
            for a_j in range(n_actions):
                if m_dist[a_j] == 0.0:
                    continue
                for joint in itertools.product(range(n_actions), repeat=len(others)):
                    p = 1.0
                    for k, a_k in zip(others, joint):
                        # marginal action prob of agent k under its prior belief
                        pk = sum(beliefs[k][mk] * model_probs[k][mk][a_k]
                                 for mk in range(len(model_probs[k])))
                        p *= pk
                        if p == 0.0:
                            break
                    if p == 0.0:
                        continue
                    counts = [0] * n_actions
                    counts[a_j] += 1
                    for a_k in joint:
                        counts[a_k] += 1
                    weight += m_dist[a_j] * p * w0(own_action, tuple(counts), omega)
            post[m_idx] = beliefs[j][m_idx] * weight
        total = post.sum()
        posts.append(post / total if total > 0 else post)
    return posts
