"""Named, counter-based random streams for reproducible runs.

A run's master seed expands into independent substreams through
``SeedSequence([master, tag, index])`` feeding a Philox generator. The tag
names the purpose (environment noise, an agent's action sampling, its
observation noise, its model sampling, or evaluation) and the index
separates agents. Agent indices are never reused within a run, so a hire
always gets streams nobody has touched.
"""

from __future__ import annotations

import numpy as np

__all__ = ["STREAM_TAGS", "stream", "agent_streams"]

STREAM_TAGS = {"env": 1, "policy": 2, "noise": 3, "latent": 4, "eval": 5}


def stream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """One named substream of the master seed."""
    if tag not in STREAM_TAGS:
        raise KeyError(f"unknown stream tag {tag!r}")
    seq = np.random.SeedSequence([int(master_seed), STREAM_TAGS[tag], int(index)])
    return np.random.Generator(np.random.Philox(seq))


def agent_streams(master_seed: int, agent_index: int) -> dict:
    """The three per-agent streams: action sampling, obs noise, model."""
    return {
        "policy": stream(master_seed, "policy", agent_index),
        "noise": stream(master_seed, "noise", agent_index),
        "latent": stream(master_seed, "latent", agent_index),
    }
