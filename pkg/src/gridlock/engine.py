"""Episode engine: simultaneous-move grid episodes with shaped rewards.

One episode runs n agents on a layout until all of them stand on their
goals at once (terminated) or the step budget runs out (truncated). Each
step every agent proposes one action; moves into walls or off the grid
resolve to staying put, colliding agents are cancelled in place, and the
reward per agent is

    r_i = alpha * J_i + beta * K + gamma * C_i

with J_i set on first goal arrival, K set when all agents stand on their
goals simultaneously, and C_i set when agent i is flagged by the collision
model. Defaults: alpha 0.5, beta 1.0, gamma -1.0, step budget 100.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .grid import (
    ACTIONS,
    DELTAS,
    COLLISION_MODELS,
    GridLayout,
    Position,
    apply_action,
    detect_collisions,
)
from .layouts import Task, TaskSet, sample_tasks, validate_layout

JointAction = dict[int, int]

OBS_EMPTY, OBS_WALL, OBS_AGENT, OBS_OWN_GOAL, OBS_OTHER_GOAL = range(5)


class EpisodeOverError(ValueError):
    """Raised when stepping an episode that already terminated or truncated."""


@dataclass(frozen=True)
class EpisodeConfig:
    layout: GridLayout
    n_agents: int
    tasks: TaskSet | None = None  # None: sample at reset from the seed
    t_max: int = 100
    obs_mode: str = "local"  # "local" | "cte"
    sensor_range: int = 2
    collision_model: str = "standard"
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = -1.0
    mask_actions: bool = False

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ValueError("n_agents must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be positive")
        if self.obs_mode not in ("local", "cte"):
            raise ValueError(f"unknown obs_mode {self.obs_mode!r}")
        if self.sensor_range < 1:
            raise ValueError("sensor_range must be positive")
        if self.collision_model not in COLLISION_MODELS:
            raise ValueError(f"unknown collision model {self.collision_model!r}")
        if self.tasks is not None and len(self.tasks) != self.n_agents:
            raise ValueError(
                f"{len(self.tasks)} tasks provided for {self.n_agents} agents"
            )

    @property
    def agents(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_agents + 1))


@dataclass(frozen=True)
class EpisodeState:
    t: int
    positions: tuple[Position, ...]  # index 0 holds agent 1
    flags: tuple[bool, ...]  # F_i: goal reached at least once
    returns: tuple[float, ...]  # cumulative reward per agent
    terminated: bool
    truncated: bool
    tasks: TaskSet
    seed: int | None  # reset seed; the dynamics draw no randomness

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated

    def position_of(self, agent: int) -> Position:
        return self.positions[agent - 1]


@dataclass
class StepResult:
    """Outcome of one joint step.

    Observations are computed on first access from the post-step state, so
    high-volume rollouts that never look at them do not pay for windowing.
    """

    rewards: dict[int, float]
    terminated: bool
    truncated: bool
    info: dict
    _config: EpisodeConfig = field(repr=False)
    _state: EpisodeState = field(repr=False)
    _observations: dict[int, "Observation"] | None = field(
        default=None, repr=False
    )

    @property
    def observations(self) -> dict[int, "Observation"]:
        if self._observations is None:
            self._observations = observe_all(self._config, self._state)
        return self._observations


@dataclass(frozen=True)
class Observation:
    mode: str
    grid: tuple[tuple[int, ...], ...]
    pos: Position | None = None
    goal: Position | None = None
    positions: Mapping[int, Position] | None = None


def reset(
    config: EpisodeConfig, seed: int | None = None
) -> tuple[EpisodeState, dict[int, Observation]]:
    """Start an episode; tasks come from config or are sampled from seed."""
    if config.tasks is not None:
        tasks = config.tasks
        problems = validate_layout(config.layout, tasks)
        if problems:
            raise ValueError("invalid tasks: " + "; ".join(problems))
    else:
        rng = np.random.default_rng(seed)
        tasks = sample_tasks(config.layout, config.n_agents, rng)
    state = EpisodeState(
        t=0,
        positions=tuple(task.start for task in tasks),
        flags=tuple(False for _ in tasks),
        returns=tuple(0.0 for _ in tasks),
        terminated=False,
        truncated=False,
        tasks=tasks,
        seed=seed,
    )
    return state, observe_all(config, state)


def step(
    config: EpisodeConfig, state: EpisodeState, actions: Mapping[int, int]
) -> tuple[EpisodeState, StepResult]:
    if state.done:
        raise EpisodeOverError("episode already ended; reset before stepping")
    agents = config.agents
    if set(actions) != set(agents):
        missing = sorted(set(agents) - set(actions))
        if missing:
            raise ValueError(f"missing action for agent {missing[0]}")
        extra = sorted(set(actions) - set(agents))
        raise ValueError(f"unknown agent {extra[0]} in actions")
    for agent in agents:
        if actions[agent] not in ACTIONS:
            raise ValueError(
                f"invalid action {actions[agent]!r} for agent {agent}"
            )

    cells = config.layout.cells
    current = {a: state.position_of(a) for a in agents}
    proposed = {
        a: apply_action(cells, current[a], actions[a]).position for a in agents
    }
    collided = detect_collisions(current, proposed, config.collision_model)

    # Flagged agents are cancelled in place. Cancellations cascade: an
    # unflagged agent whose target cell belongs to a cancelled agent stays
    # put too (without a penalty), keeping positions pairwise distinct.
    cancelled = {a for a in agents if collided[a]}
    changed = True
    while changed:
        changed = False
        blocked_cells = {current[a] for a in cancelled}
        for a in agents:
            if a in cancelled or proposed[a] == current[a]:
                continue
            if proposed[a] in blocked_cells:
                cancelled.add(a)
                changed = True
    new_positions = tuple(
        current[a] if a in cancelled else proposed[a] for a in agents
    )

    goals = tuple(task.goal for task in state.tasks)
    at_goal = tuple(pos == goal for pos, goal in zip(new_positions, goals))
    first_arrival = tuple(
        now and not was for now, was in zip(at_goal, state.flags)
    )
    new_flags = tuple(
        was or now for was, now in zip(state.flags, at_goal)
    )
    all_done = all(at_goal)

    rewards = {}
    for idx, agent in enumerate(agents):
        rewards[agent] = (
            config.alpha * first_arrival[idx]
            + config.beta * all_done
            + config.gamma * collided[agent]
        )

    t_next = state.t + 1
    terminated = all_done
    truncated = not terminated and t_next >= config.t_max
    new_state = EpisodeState(
        t=t_next,
        positions=new_positions,
        flags=new_flags,
        returns=tuple(
            total + rewards[agent]
            for total, agent in zip(state.returns, agents)
        ),
        terminated=terminated,
        truncated=truncated,
        tasks=state.tasks,
        seed=state.seed,
    )
    info = {
        "collisions": sorted(a for a in agents if collided[a]),
        "newly_at_goal": sorted(
            agent for idx, agent in enumerate(agents) if first_arrival[idx]
        ),
    }
    result = StepResult(
        rewards=rewards,
        terminated=terminated,
        truncated=truncated,
        info=info,
        _config=config,
        _state=new_state,
    )
    return new_state, result


# --- observations -----------------------------------------------------------


def _perspective_grid(
    config: EpisodeConfig, state: EpisodeState, agent: int
) -> np.ndarray:
    """Full-grid cell codes from one agent's perspective.

    Precedence: agent (2) over own goal (3) over other goal (4) over empty.
    Every agent is drawn, including the observing one.
    """
    codes = np.array(config.layout.cells, dtype=np.int8)  # walls already 1
    own_goal = state.tasks[agent - 1].goal
    for idx, task in enumerate(state.tasks):
        code = OBS_OWN_GOAL if task.goal == own_goal else OBS_OTHER_GOAL
        codes[task.goal] = code
    for pos in state.positions:
        codes[pos] = OBS_AGENT
    return codes


def observe_cte(
    config: EpisodeConfig, state: EpisodeState, agent: int
) -> Observation:
    """Full-grid observation with all agent positions as context."""
    codes = _perspective_grid(config, state, agent)
    positions = {a: state.position_of(a) for a in config.agents}
    return Observation(
        mode="cte",
        grid=tuple(tuple(int(v) for v in row) for row in codes),
        positions=positions,
    )


def observe_local(
    config: EpisodeConfig, state: EpisodeState, agent: int
) -> Observation:
    """(2R+1)-square window centered on the agent.

    Out-of-bounds cells read as walls. The observing agent does not see
    itself: its own cell shows the underlying content (its goal reads 3,
    another agent's goal reads 4, otherwise 0).
    """
    r = config.sensor_range
    codes = _perspective_grid(config, state, agent)
    own = state.position_of(agent)
    own_goal = state.tasks[agent - 1].goal
    if own == own_goal:
        codes[own] = OBS_OWN_GOAL
    elif any(task.goal == own for task in state.tasks):
        codes[own] = OBS_OTHER_GOAL
    else:
        codes[own] = OBS_EMPTY
    window = np.full((2 * r + 1, 2 * r + 1), OBS_WALL, dtype=np.int8)
    height, width = codes.shape
    x_lo, x_hi = max(0, own[0] - r), min(height, own[0] + r + 1)
    y_lo, y_hi = max(0, own[1] - r), min(width, own[1] + r + 1)
    window[
        x_lo - own[0] + r : x_hi - own[0] + r,
        y_lo - own[1] + r : y_hi - own[1] + r,
    ] = codes[x_lo:x_hi, y_lo:y_hi]
    return Observation(
        mode="local",
        grid=tuple(tuple(int(v) for v in row) for row in window),
        pos=own,
        goal=own_goal,
    )


def observe_all(
    config: EpisodeConfig, state: EpisodeState
) -> dict[int, Observation]:
    observe = observe_local if config.obs_mode == "local" else observe_cte
    return {agent: observe(config, state, agent) for agent in config.agents}


def action_mask(
    config: EpisodeConfig, state: EpisodeState, agent: int
) -> tuple[int, ...]:
    """Allowed actions: stay always, moves into free unoccupied cells.

    The mask checks current occupancy only; simultaneous same-target
    proposals by two masked agents can still collide.
    """
    cells = config.layout.cells
    own = state.position_of(agent)
    occupied = set(state.positions) - {own}
    allowed = [0]
    for action in ACTIONS[1:]:
        outcome = apply_action(cells, own, action)
        if not outcome.blocked and outcome.position not in occupied:
            allowed.append(action)
    return tuple(allowed)


def random_policy(
    config: EpisodeConfig, state: EpisodeState, rng: np.random.Generator
) -> JointAction:
    """Uniform random joint action; honors the mask when enabled."""
    actions: JointAction = {}
    for agent in config.agents:
        if config.mask_actions:
            mask = action_mask(config, state, agent)
            actions[agent] = int(mask[rng.integers(len(mask))])
        else:
            actions[agent] = int(rng.integers(len(ACTIONS)))
    return actions


# --- traces ------------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    t: int
    actions: dict[int, int]
    positions: dict[int, Position]
    rewards: dict[int, float]
    flags: dict[int, bool]
    collisions: list[int]


@dataclass
class Trace:
    layout_name: str
    tasks: TaskSet
    seed: int | None
    steps: list[TraceStep] = field(default_factory=list)

    def episode_reward(self) -> float:
        return episode_reward(self)

    def to_jsonl(self) -> str:
        lines = []
        for entry in self.steps:
            lines.append(
                json.dumps(
                    {
                        "t": entry.t,
                        "actions": {str(a): v for a, v in entry.actions.items()},
                        "positions": {
                            str(a): list(p) for a, p in entry.positions.items()
                        },
                        "rewards": {str(a): v for a, v in entry.rewards.items()},
                        "flags": {str(a): v for a, v in entry.flags.items()},
                        "collisions": entry.collisions,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines)


def episode_reward(trace: Trace) -> float:
    """Sum of every agent's return over the whole episode."""
    return sum(sum(s.rewards.values()) for s in trace.steps)


def run_episode(
    config: EpisodeConfig,
    policy: Callable[[EpisodeConfig, EpisodeState, np.random.Generator], JointAction],
    seed: int | None = None,
    policy_rng: np.random.Generator | None = None,
    observer: Callable[[EpisodeState, JointAction], None] | None = None,
) -> tuple[EpisodeState, Trace]:
    """Roll one episode to termination or truncation and record a trace."""
    state, _ = reset(config, seed)
    if policy_rng is None:
        policy_rng = np.random.default_rng(None if seed is None else seed + 1)
    trace = Trace(
        layout_name=config.layout.name, tasks=state.tasks, seed=seed
    )
    agents = config.agents
    while not state.done:
        actions = policy(config, state, policy_rng)
        if observer is not None:
            observer(state, actions)
        state, result = step(config, state, actions)
        trace.steps.append(
            TraceStep(
                t=state.t,
                actions=dict(actions),
                positions={a: state.position_of(a) for a in agents},
                rewards=dict(result.rewards),
                flags={
                    a: state.flags[a - 1] for a in agents
                },
                collisions=result.info["collisions"],
            )
        )
    return state, trace
