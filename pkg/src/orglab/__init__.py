"""orglab: a decentralized actor-critic laboratory for agent populations.

Agents learn from public observations plus noisy anonymized counts of what
the rest of the population did, summarizing those counts either through a
conjugate count model or through a small learned encoder-decoder whose
latent code augments the critic.
"""

__version__ = "0.1.0"
