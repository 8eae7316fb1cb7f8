"""Seeded experiment runs: training loops, evaluation, and artifacts.

A run expands one master seed into named substreams, steps the environment
for a fixed budget, updates every learner once per episode, and appends one
metrics row per episode to a CSV whose header never changes. All float
fields are written with ``repr`` and nothing time-dependent is logged, so
two runs with the same config and seed produce byte-identical files.

Artifacts per seed directory:

* ``metrics.csv``       one row per episode (always)
* ``trace.jsonl``       one object per tick (``trace = true``)
* ``predictions.csv``   tracked agent's model predictions (``log_predictions``)
* ``embeddings.csv``    tracked agent's embedding and population prediction
  per tick, full precision (``log_embeddings``)
* ``snapshots/``        actor-only network snapshots plus a manifest
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import agents, nets
from .agents import (AgentBundle, begin_episode, build_bundle,
                     end_episode_update, record, rescale_alpha, retire)
from .config import ExperimentConfig
from .env import OrgEnv, public_obs_of_level
from .seeding import agent_streams, stream

__all__ = [
    "METRICS_HEADER", "EvalSummary", "SeedOutcome",
    "run_training", "run_seed", "evaluate",
    "prediction_accuracy", "load_predictions", "export_embeddings",
    "load_metrics", "smoothed",
]

METRICS_HEADER = ("step,episode,seed,mean_return,manager_return,actor_loss,"
                  "critic_loss,ed_loss,action_pred_acc,obs_pred_acc,"
                  "roster_size")


def _cell(value) -> str:
    """One CSV cell: repr for finite floats, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    return str(value)


@dataclass
class SeedOutcome:
    seed: int
    out_dir: str | None
    episodes: int
    steps: int
    error: str | None = None
    final_return: float | None = None


@dataclass
class EvalSummary:
    episodes: int
    mean_return: float | None = None
    std_return: float | None = None
    manager_return: float | None = None
    roster_trajectory: list | None = None


def _tracked_agent(env: OrgEnv) -> int:
    """The agent whose per-tick model outputs get logged: first employee."""
    for seat in env.roster:
        if seat.role == "employee":
            return seat.agent_id
    return env.roster[0].agent_id


def _make_bundle(config: ExperimentConfig, env: OrgEnv, seed: int,
                 agent_id: int, role: str) -> AgentBundle:
    streams = agent_streams(seed, agent_id)
    return build_bundle(
        agent_id, role, config.variant,
        env.config.legal_actions(role), env.config.alphabet_size,
        policy_rng=streams["policy"], noise_rng=streams["noise"],
        latent_rng=streams["latent"],
        gamma=config.gamma, entropy_weight=config.entropy_weight,
        actor_lr=config.actor_lr, critic_lr=config.critic_lr,
        ed_lr=config.ed_lr, hidden=tuple(int(h) for h in config.hidden),
        latent_dim=config.latent_dim, theta_source=config.theta_source)


def _save_snapshot(path: str, bundles: dict, config: ExperimentConfig,
                   episode: int, step: int) -> None:
    os.makedirs(path, exist_ok=True)
    manifest = {
        "episode": episode,
        "step": step,
        "variant": config.variant,
        "hidden": [int(h) for h in config.hidden],
        "agents": {},
    }
    for agent_id in sorted(bundles):
        bundle = bundles[agent_id]
        name = f"agent{agent_id:04d}.actor.bin"
        bundle.actor.save(os.path.join(path, name))
        manifest["agents"][str(agent_id)] = {
            "role": bundle.role, "file": name,
            "n_actions": bundle.n_actions,
        }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _nanmean(values: list) -> float | None:
    finite = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(finite)) if finite else None


def run_seed(config: ExperimentConfig, seed: int,
             out_dir: str | None = None) -> SeedOutcome:
    """Train one seed to its step budget; returns the outcome summary.

    When ``out_dir`` is given, metrics (and any enabled logs) stream there
    with per-line flushes so a crash leaves parseable files behind.
    """
    env = OrgEnv(config.env_config(), stream(seed, "env"))
    bundles: dict[int, AgentBundle] = {}
    for seat in env.roster:
        bundles[seat.agent_id] = _make_bundle(config, env, seed,
                                              seat.agent_id, seat.role)
    tracked = _tracked_agent(env)
    latent_variant = config.variant != "ia2cdm"

    metrics_fh = trace_fh = pred_fh = embed_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, "metrics.csv"), "w",
                          encoding="utf-8")
        metrics_fh.write(METRICS_HEADER + "\n")
        metrics_fh.flush()
        if config.trace:
            trace_fh = open(os.path.join(out_dir, "trace.jsonl"), "w",
                            encoding="utf-8")
        if config.log_predictions:
            pred_fh = open(os.path.join(out_dir, "predictions.csv"), "w",
                           encoding="utf-8")
            pred_fh.write("step,episode,pred_action,modal_action,"
                          "pred_obs,true_obs\n")
        if config.log_embeddings and latent_variant:
            embed_fh = open(os.path.join(out_dir, "embeddings.csv"), "w",
                            encoding="utf-8")
            k = env.config.alphabet_size
            cols = (["step", "episode"]
                    + [f"z{i}" for i in range(config.latent_dim)]
                    + [f"theta{i}" for i in range(k)])
            embed_fh.write(",".join(cols) + "\n")

    step_count = 0
    final_return = None
    try:
        for episode in range(config.episodes):
            env.reset()
            for seat in env.roster:
                if seat.agent_id not in bundles:
                    bundles[seat.agent_id] = _make_bundle(
                        config, env, seed, seat.agent_id, seat.role)
                begin_episode(bundles[seat.agent_id])
            obs = {i: env.public_obs() for i in env.live_ids()}
            returns: dict[int, float] = {}
            act_hits = act_total = obs_hits = obs_total = 0
            episode_bundles = {i: bundles[i] for i in env.live_ids()}

            done = False
            while not done:
                actions, local = {}, {}
                for agent_id in env.live_ids():
                    bundle = bundles[agent_id]
                    actions[agent_id], local[agent_id] = agents.act(
                        bundle, obs[agent_id])
                acted = list(actions)
                result = env.step(actions)
                done = result.done
                step_count += 1

                survivors = env.live_ids()
                next_obs = {i: env.public_obs() for i in survivors}
                true_level_obs = public_obs_of_level(env.level)

                if result.departed or result.hired:
                    n_old = len(acted) - 1
                    n_new = len(survivors) - 1
                    for agent_id in survivors:
                        if agent_id in bundles and agent_id in actions:
                            rescale_alpha(bundles[agent_id], n_old, n_new)

                for agent_id in acted:
                    bundle = bundles[agent_id]
                    agent_done = done or agent_id in result.departed
                    private = env.private_observation(agent_id, actions,
                                                      bundle.noise_rng)
                    post = next_obs.get(agent_id, true_level_obs)
                    stats = record(
                        bundle, actor_obs=obs[agent_id],
                        local_action=local[agent_id], observation=private,
                        reward=result.rewards[agent_id], post_obs=post,
                        done=agent_done,
                        terminal=agent_id in result.departed)
                    returns[agent_id] = (returns.get(agent_id, 0.0)
                                         + result.rewards[agent_id])
                    modal = int(np.argmax(
                        env.true_configuration(agent_id, actions)))
                    if "pred_action" in stats:
                        act_total += 1
                        act_hits += stats["pred_action"] == modal
                    if "pred_obs" in stats:
                        obs_total += 1
                        obs_hits += stats["pred_obs"] == post
                    if agent_id == tracked:
                        if pred_fh is not None:
                            pred_fh.write(",".join([
                                str(step_count), str(episode),
                                str(stats.get("pred_action", "")),
                                str(modal),
                                str(stats.get("pred_obs", "")),
                                str(post) if "pred_obs" in stats else "",
                            ]) + "\n")
                        if embed_fh is not None and "latent" in stats:
                            embed_fh.write(",".join(
                                [str(step_count), str(episode)]
                                + [repr(float(v)) for v in stats["latent"]]
                                + [repr(float(v))
                                   for v in stats["theta_hat"]]) + "\n")

                for departed_id in result.departed:
                    retire(bundles[departed_id])
                for hired_id in result.hired:
                    bundles[hired_id] = _make_bundle(config, env, seed,
                                                     hired_id, "employee")
                    episode_bundles[hired_id] = bundles[hired_id]

                if trace_fh is not None:
                    trace_fh.write(json.dumps({
                        "tick": env.tick - 1, "episode": episode,
                        "level": result.level_after,
                        "actions": {str(i): int(a)
                                    for i, a in sorted(actions.items())},
                        "rewards": {str(i): float(r)
                                    for i, r in sorted(result.rewards.items())},
                        "roster_size": len(survivors),
                    }, sort_keys=True) + "\n")
                obs = next_obs

            actor_losses, critic_losses, ed_losses = [], [], []
            for bundle in episode_bundles.values():
                if not bundle.transitions:
                    continue
                stats = end_episode_update(bundle,
                                           max_grad_norm=config.max_grad_norm)
                actor_losses.append(stats["actor_loss"])
                critic_losses.append(stats["critic_loss"])
                ed_losses.append(stats["ed_loss"])

            employee_returns = [r for i, r in returns.items()
                                if i in episode_bundles
                                and episode_bundles[i].role == "employee"]
            manager_ids = [i for i in episode_bundles
                           if episode_bundles[i].role == "manager"]
            mean_return = _nanmean(employee_returns)
            final_return = mean_return
            row = [
                _cell(step_count), _cell(episode), _cell(seed),
                _cell(mean_return),
                _cell(returns.get(manager_ids[0]) if manager_ids else None),
                _cell(_nanmean(actor_losses)), _cell(_nanmean(critic_losses)),
                _cell(_nanmean(ed_losses)),
                _cell(act_hits / act_total if act_total else None),
                _cell(obs_hits / obs_total if obs_total else None),
                _cell(len(env.roster)),
            ]
            if metrics_fh is not None:
                metrics_fh.write(",".join(row) + "\n")
                metrics_fh.flush()

            if (out_dir is not None and config.checkpoint_every
                    and (episode + 1) % config.checkpoint_every == 0):
                live = {i: bundles[i] for i in env.live_ids()}
                _save_snapshot(
                    os.path.join(out_dir, "snapshots", f"ep{episode + 1:06d}"),
                    live, config, episode + 1, step_count)

        if out_dir is not None:
            live = {i: bundles[i] for i in env.live_ids()}
            _save_snapshot(os.path.join(out_dir, "snapshots", "final"),
                           live, config, config.episodes, step_count)
    finally:
        for fh in (metrics_fh, trace_fh, pred_fh, embed_fh):
            if fh is not None:
                fh.close()

    return SeedOutcome(seed=seed, out_dir=out_dir, episodes=config.episodes,
                       steps=step_count, final_return=final_return)


def run_training(config: ExperimentConfig, seeds: list,
                 out_root: str | None = None) -> list:
    """Run every seed; one seed's failure is recorded, the rest continue."""
    outcomes = []
    for seed in seeds:
        out_dir = (os.path.join(out_root, f"seed{seed}")
                   if out_root is not None else None)
        try:
            outcomes.append(run_seed(config, seed, out_dir))
        except Exception as exc:  # noqa: BLE001 - seed isolation is the contract
            if out_dir is not None:
                os.makedirs(out_dir, exist_ok=True)
                with open(os.path.join(out_dir, "error.txt"), "w",
                          encoding="utf-8") as fh:
                    fh.write(f"{type(exc).__name__}: {exc}\n")
            outcomes.append(SeedOutcome(seed=seed, out_dir=out_dir,
                                        episodes=0, steps=0, error=str(exc)))
    return outcomes


# -- evaluation ---------------------------------------------------------------


def load_actor_snapshot(path: str) -> tuple[dict, dict]:
    """Read a snapshot directory back into actor networks."""
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    actors = {}
    for agent_id, entry in manifest["agents"].items():
        actors[int(agent_id)] = nets.Mlp.load(os.path.join(path, entry["file"]))
    return actors, manifest


def evaluate(snapshot_path: str, config: ExperimentConfig, episodes: int,
             seed: int, greedy: bool | None = None) -> EvalSummary:
    """Roll out saved actors without learning.

    Actions are sampled from the saved policies unless ``greedy`` (or the
    config's ``eval_greedy``) asks for argmax. Mid-episode hires get fresh
    untrained actors, mirroring training. Snapshot files are never written.
    """
    if episodes <= 0:
        return EvalSummary(episodes=0)
    greedy = config.eval_greedy if greedy is None else greedy
    actors, manifest = load_actor_snapshot(snapshot_path)
    hidden = tuple(manifest.get("hidden", config.hidden))

    env = OrgEnv(config.env_config(), stream(seed, "eval", 0))
    policy_rng = stream(seed, "eval", 1)
    fresh_rng = stream(seed, "eval", 2)

    def fresh_actor(role: str) -> nets.Mlp:
        n_actions = len(env.config.legal_actions(role))
        return nets.Mlp.create((3, *hidden, n_actions), fresh_rng,
                               head="softmax")

    returns, manager_returns = [], []
    roster_by_tick: list[list[int]] = []
    for _ in range(episodes):
        env.reset()
        for seat in env.roster:
            if seat.agent_id not in actors:
                actors[seat.agent_id] = fresh_actor(seat.role)
        totals: dict[int, float] = {}
        roles = {seat.agent_id: seat.role for seat in env.roster}
        obs = {i: env.public_obs() for i in env.live_ids()}
        done, tick = False, 0
        while not done:
            actions = {}
            for agent_id in env.live_ids():
                probs = actors[agent_id].forward(np.eye(3)[obs[agent_id]])
                if greedy:
                    choice = int(np.argmax(probs))
                else:
                    u = policy_rng.random()
                    choice = min(int(np.searchsorted(np.cumsum(probs), u)),
                                 probs.size - 1)
                role = roles[agent_id]
                actions[agent_id] = env.config.legal_actions(role)[choice]
            result = env.step(actions)
            done = result.done
            for agent_id, reward in result.rewards.items():
                totals[agent_id] = totals.get(agent_id, 0.0) + reward
            for hired_id in result.hired:
                actors[hired_id] = fresh_actor("employee")
                roles[hired_id] = "employee"
            if len(roster_by_tick) <= tick:
                roster_by_tick.append([])
            roster_by_tick[tick].append(len(env.roster))
            tick += 1
            obs = {i: env.public_obs() for i in env.live_ids()}
        employee_total = [r for i, r in totals.items()
                          if roles.get(i) == "employee"]
        if employee_total:
            returns.append(float(np.mean(employee_total)))
        for agent_id, role in roles.items():
            if role == "manager" and agent_id in totals:
                manager_returns.append(totals[agent_id])
    return EvalSummary(
        episodes=episodes,
        mean_return=float(np.mean(returns)) if returns else None,
        std_return=(float(np.std(returns, ddof=1))
                    if len(returns) > 1 else None),
        manager_return=(float(np.mean(manager_returns))
                        if manager_returns else None),
        roster_trajectory=[float(np.mean(sizes)) for sizes in roster_by_tick],
    )


# -- artifact readers ----------------------------------------------------------


def load_metrics(path: str) -> dict:
    """Parse a metrics CSV into column arrays (None for empty cells)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        columns: dict[str, list] = {name: [] for name in header}
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            for name, cell in zip(header, line.split(",")):
                columns[name].append(float(cell) if cell else None)
    return columns


def smoothed(values: list, window: int = 100) -> np.ndarray:
    """Trailing mean over the last ``window`` entries at each point."""
    out = np.empty(len(values))
    total = 0.0
    buffer: list[float] = []
    for i, v in enumerate(values):
        buffer.append(v)
        total += v
        if len(buffer) > window:
            total -= buffer.pop(0)
        out[i] = total / len(buffer)
    return out


def load_predictions(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        columns: dict[str, list] = {name: [] for name in header}
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            for name, cell in zip(header, line.split(",")):
                columns[name].append(int(cell) if cell else None)
    return columns


def prediction_accuracy(columns: dict, window: int | None = None) -> dict:
    """Accuracy of logged model predictions, overall or per window.

    Action accuracy compares the predicted population action against the
    modal action of the true configuration; observation accuracy compares
    the predicted next public label against the one that arrived.
    """
    pred_a = columns["pred_action"]
    modal = columns["modal_action"]
    pred_o = columns["pred_obs"]
    true_o = columns["true_obs"]
    n = len(pred_a)

    def acc(slice_):
        a_pairs = [(p, m) for p, m in zip(pred_a[slice_], modal[slice_])
                   if p is not None]
        o_pairs = [(p, t) for p, t in zip(pred_o[slice_], true_o[slice_])
                   if p is not None and t is not None]
        action = (sum(p == m for p, m in a_pairs) / len(a_pairs)
                  if a_pairs else None)
        observation = (sum(p == t for p, t in o_pairs) / len(o_pairs)
                       if o_pairs else None)
        return {"action_acc": action, "obs_acc": observation}

    result = {"overall": acc(slice(0, n)), "windows": []}
    if window:
        for start in range(0, n, window):
            entry = acc(slice(start, min(start + window, n)))
            entry["start"] = start
            result["windows"].append(entry)
    return result


def export_embeddings(run_dir: str, dest: str) -> int:
    """Copy the run's embedding log to ``dest``; returns the row count."""
    source = os.path.join(run_dir, "embeddings.csv")
    if not os.path.exists(source):
        raise FileNotFoundError(
            f"{source} not found; rerun training with log_embeddings = true")
    rows = 0
    with open(source, "r", encoding="utf-8") as src, \
            open(dest, "w", encoding="utf-8") as out:
        header = src.readline()
        out.write(header)
        for line in src:
            out.write(line)
            rows += 1
    return rows
