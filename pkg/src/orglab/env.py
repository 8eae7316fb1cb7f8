"""A small organization with hidden financial health and anonymous peers.

Agents are employees (plus one manager when the roster is open) who each
tick choose how much to work for themselves versus the group. The true
health level is hidden behind a coarse public label; what the others did
arrives only as noise-corrupted action counts. Group-leaning effort pushes
the health level up, self-leaning effort pulls it down, and everyone shares
the proceeds of the group pot.

In open mode the roster itself moves: employees may resign, the manager may
hire (fresh, untrained arrivals) or fire (most recent hire first). Roster
edits happen after the level update each tick, in the order resignations,
fire, hire.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .population import PrivateObservation

__all__ = [
    "SELF", "BALANCE", "GROUP", "RESIGN", "HIRE", "FIRE",
    "ACTION_NAMES", "PUBLIC_OBS_NAMES", "LEVEL_NAMES",
    "IllegalActionError", "RewardParams", "OrgConfig", "AgentSeat",
    "StepResult", "OrgEnv", "public_obs_of_level", "logistic",
]

SELF, BALANCE, GROUP, RESIGN, HIRE, FIRE = range(6)
ACTION_NAMES = ("self", "balance", "group", "resign", "hire", "fire")
PUBLIC_OBS_NAMES = ("meager", "several", "many")
LEVEL_NAMES = ("very_low", "low", "medium", "high", "very_high")

_EMPLOYEE_CLOSED = (SELF, BALANCE, GROUP)
_EMPLOYEE_OPEN = (SELF, BALANCE, GROUP, RESIGN)
_MANAGER_OPEN = (SELF, BALANCE, GROUP, HIRE, FIRE)


class IllegalActionError(ValueError):
    """An agent submitted an action its role cannot take."""


def logistic(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def public_obs_of_level(level: int) -> int:
    """Coarse public label: bottom two levels, middle two, top."""
    return 0 if level <= 1 else (1 if level <= 3 else 2)


@dataclass(frozen=True)
class RewardParams:
    """Reward constants; everything here is a config-file parameter.

    ``individual`` is indexed by the global action alphabet. Defaults keep
    the individual temptation ordering (self > balance > group) while making
    the shared pot strong enough that cooperating is worth learning.
    """

    individual: tuple = (0.5, 0.25, 0.0, 0.0, 0.0, 0.0)
    w_group: float = 1.0
    w_balance: float = 0.5
    level_multipliers: tuple = (3.0, 3.5, 4.0, 4.5, 5.0)
    hire_cost: float = 1.0
    manager_beta: float = 0.9

    def __post_init__(self):
        if len(self.individual) != 6:
            raise ValueError("individual rewards must cover all six action labels")
        if len(self.level_multipliers) != 5:
            raise ValueError("need one multiplier per health level")
        if list(self.level_multipliers) != sorted(self.level_multipliers):
            raise ValueError("level multipliers must be nondecreasing")
        if self.hire_cost < 0 or not 0 < self.manager_beta <= 1:
            raise ValueError("hire cost must be >= 0 and beta in (0, 1]")


@dataclass(frozen=True)
class OrgConfig:
    """Environment parameters for one experiment."""

    open_mode: bool = False
    n_employees: int = 5          # initial employees (closed: the whole roster)
    delta: float = 0.1            # private count corruption rate
    epsilon: float = 0.0          # public label corruption rate
    horizon: int = 50
    initial_level: int = 2
    rewards: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        if self.n_employees < 1:
            raise ValueError("need at least one employee")
        if not 0 <= self.initial_level <= 4:
            raise ValueError("initial level out of range")
        if not 0.0 <= self.delta < 1.0 or not 0.0 <= self.epsilon < 1.0:
            raise ValueError("noise rates must be in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def alphabet(self) -> tuple:
        """Global action ids observable in count vectors."""
        return tuple(range(6)) if self.open_mode else _EMPLOYEE_CLOSED

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)

    def legal_actions(self, role: str) -> tuple:
        if role == "manager":
            if not self.open_mode:
                raise ValueError("closed mode has no manager")
            return _MANAGER_OPEN
        return _EMPLOYEE_OPEN if self.open_mode else _EMPLOYEE_CLOSED


@dataclass
class AgentSeat:
    """One live roster slot."""

    agent_id: int
    role: str  # "employee" | "manager"


@dataclass
class StepResult:
    rewards: dict[int, float]
    done: bool
    level_before: int
    level_after: int
    departed: list[int]
    hired: list[int]
    actions: dict[int, int]


class OrgEnv:
    """Mutable episode state plus the transition rules.

    The environment's own rng only drives the optional public-label
    corruption; private-observation noise is drawn from per-viewer rngs
    handed to ``private_observation`` so each agent owns its stream.
    """

    def __init__(self, config: OrgConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.level = config.initial_level
        self.tick = 0
        self.roster: list[AgentSeat] = []
        self.hire_stack: list[int] = []
        self.hired_total = 0
        self._next_id = 0
        self.reset()

    # -- state -----------------------------------------------------------------

    def reset(self) -> int:
        """Start a fresh episode; returns the current public observation.

        Founding seats keep the same ids every episode (their learners
        persist across episodes), while hire ids are never reused so each
        hire maps to a distinct fresh learner for the whole run.
        """
        self.level = self.config.initial_level
        self.tick = 0
        self.hire_stack = []
        self.hired_total = 0
        self.roster = []
        next_core = 0
        if self.config.open_mode:
            self.roster.append(AgentSeat(next_core, "manager"))
            next_core += 1
        for _ in range(1 if self.config.open_mode else self.config.n_employees):
            self.roster.append(AgentSeat(next_core, "employee"))
            next_core += 1
        self._next_id = max(self._next_id, next_core)
        return self.public_obs()

    def _take_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def live_ids(self) -> list[int]:
        return [seat.agent_id for seat in self.roster]

    def role_of(self, agent_id: int) -> str:
        for seat in self.roster:
            if seat.agent_id == agent_id:
                return seat.role
        raise KeyError(f"agent {agent_id} is not on the roster")

    def employee_count(self) -> int:
        return sum(1 for seat in self.roster if seat.role == "employee")

    # -- observations ------------------------------------------------------------

    def public_obs(self) -> int:
        """Coarse label of the current level, epsilon-corrupted if configured."""
        true = public_obs_of_level(self.level)
        if self.config.epsilon > 0.0 and self.rng.random() < self.config.epsilon:
            others = [o for o in range(3) if o != true]
            return int(others[self.rng.integers(2)])
        return true

    def true_configuration(self, viewer_id: int, actions: dict[int, int]) -> np.ndarray:
        """Uncorrupted action counts of everyone but the viewer.

        Iterates the actions mapping itself so the counts describe the
        agents who actually acted this tick, even if the roster has since
        changed.
        """
        alphabet = self.config.alphabet
        index = {a: i for i, a in enumerate(alphabet)}
        counts = np.zeros(len(alphabet), dtype=np.int64)
        for agent_id in sorted(actions):
            if agent_id != viewer_id:
                counts[index[actions[agent_id]]] += 1
        return counts

    def private_observation(self, viewer_id: int, actions: dict[int, int],
                            rng: np.random.Generator) -> PrivateObservation:
        """Counts of the others' actions, each misreported with rate delta."""
        delta = self.config.delta
        k = self.config.alphabet_size
        index = {a: i for i, a in enumerate(self.config.alphabet)}
        counts = np.zeros(k, dtype=np.int64)
        for agent_id in sorted(actions):
            if agent_id == viewer_id:
                continue
            label = index[actions[agent_id]]
            if delta > 0.0 and k > 1 and rng.random() < delta:
                shift = 1 + int(rng.integers(k - 1))
                label = (label + shift) % k
            counts[label] += 1
        return PrivateObservation(counts, delta)

    # -- dynamics -----------------------------------------------------------------

    def _rewards(self, actions: dict[int, int]) -> dict[int, float]:
        p = self.config.rewards
        n_live = len(self.roster)
        n_group = sum(1 for a in actions.values() if a == GROUP)
        n_balance = sum(1 for a in actions.values() if a == BALANCE)
        m = p.level_multipliers[self.level]
        group_term = m * (p.w_group * n_group + p.w_balance * n_balance) / n_live
        sum_individual = sum(p.individual[a] for a in actions.values())

        rewards = {}
        for seat in self.roster:
            a = actions[seat.agent_id]
            if seat.role == "manager":
                scale = p.manager_beta ** (self.hired_total - 1)
                hire_cost = p.hire_cost if a == HIRE else 0.0
                rewards[seat.agent_id] = (logistic(scale * sum_individual)
                                          + group_term - hire_cost)
            else:
                rewards[seat.agent_id] = p.individual[a] + group_term
        return rewards

    def step(self, actions: dict[int, int]) -> StepResult:
        """Advance one tick: rewards, level update, then roster edits."""
        if set(actions) != set(self.live_ids()):
            raise ValueError("need exactly one action per live agent")
        for seat in self.roster:
            if actions[seat.agent_id] not in self.config.legal_actions(seat.role):
                raise IllegalActionError(
                    f"{seat.role} {seat.agent_id} cannot take "
                    f"{ACTION_NAMES[actions[seat.agent_id]]}"
                )

        level_before = self.level
        rewards = self._rewards(actions)

        n_self = sum(1 for a in actions.values() if a == SELF)
        n_group = sum(1 for a in actions.values() if a == GROUP)
        if n_group > n_self:
            self.level = min(self.level + 1, 4)
        elif n_self > n_group:
            self.level = max(self.level - 1, 0)

        departed, hired = [], []
        if self.config.open_mode:
            manager_action = next(actions[s.agent_id] for s in self.roster
                                  if s.role == "manager")
            for seat in list(self.roster):
                if seat.role == "employee" and actions[seat.agent_id] == RESIGN:
                    self.roster.remove(seat)
                    if seat.agent_id in self.hire_stack:
                        self.hire_stack.remove(seat.agent_id)
                    departed.append(seat.agent_id)
            if manager_action == FIRE and self.hire_stack:
                fired_id = self.hire_stack.pop()
                self.roster = [s for s in self.roster if s.agent_id != fired_id]
                departed.append(fired_id)
            if manager_action == HIRE:
                seat = AgentSeat(self._take_id(), "employee")
                self.roster.append(seat)
                self.hire_stack.append(seat.agent_id)
                self.hired_total += 1
                hired.append(seat.agent_id)

        self.tick += 1
        return StepResult(
            rewards=rewards,
            done=self.tick >= self.config.horizon,
            level_before=level_before,
            level_after=self.level,
            departed=departed,
            hired=hired,
            actions=dict(actions),
        )
