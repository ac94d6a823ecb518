"""DQN search with experience replay and a target network, plus baselines.

The exploration schedule follows the "increasing epsilon" convention:
epsilon is the probability of acting greedily, and it ramps from 0 to
``epsilon_max`` by ``epsilon_increment`` per environment step over the
whole run.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qfunc
from .env import ProcessEnv
from .seeding import AGENT, derive_seed, rng_for


@dataclass(frozen=True)
class AgentConfig:
    update_every: int = 5       # R: env steps between gradient updates
    warmup: int = 100           # env steps before the first update
    memory_size: int = 2000     # D
    learning_rate: float = 0.01
    gamma: float = 0.9
    epsilon_increment: float = 0.001
    epsilon_max: float = 0.9
    episodes: int = 5           # E
    steps: int = 5000           # N, per episode
    batch_size: int = 32
    hidden: int = 50
    target_sync: int | None = None  # env steps between target syncs; None -> update_every
    max_table_entries: int = 50_000_000

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 <= self.epsilon_max <= 1:
            raise ValueError("epsilon_max must lie in [0, 1]")
        if self.epsilon_increment < 0:
            raise ValueError("epsilon_increment must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        for name in ("update_every", "memory_size", "episodes", "steps", "batch_size",
                     "hidden", "max_table_entries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.target_sync is not None and self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")

    @property
    def sync_every(self) -> int:
        return self.update_every if self.target_sync is None else self.target_sync

    @classmethod
    def from_mapping(cls, values: dict) -> "AgentConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"unknown agent setting {key!r}")
            if key == "target_sync" and str(raw).strip().lower() in ("", "none"):
                kwargs[key] = None
            elif key in ("learning_rate", "gamma", "epsilon_increment", "epsilon_max"):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


def epsilon_at(step: int, cfg: AgentConfig) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    return min(step * cfg.epsilon_increment, cfg.epsilon_max)


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy (lowest index on ties) with probability ``epsilon``, else uniform."""
    q = np.asarray(q_values)
    if q.size == 0:
        raise ValueError("empty action-value vector")
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(np.argmax(q))
    return int(rng.integers(q.size))


def q_update(q_sa: float, reward: float, max_next: float, alpha: float, gamma: float) -> float:
    """Tabular temporal-difference update of a single entry."""
    return q_sa + alpha * (reward + gamma * max_next - q_sa)


class ReplayMemory:
    """Fixed-capacity FIFO of transitions stored as parallel arrays."""

    def __init__(self, capacity: int, n_features: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state = np.zeros((capacity, n_features))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.next_state = np.zeros((capacity, n_features))
        self.terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, state, action, reward, next_state, terminal) -> None:
        i = self._next
        self.state[i] = state
        self.action[i] = action
        self.reward[i] = reward
        self.next_state[i] = next_state
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (self._next + np.arange(self.capacity)) % self.capacity

    def transitions(self) -> list[tuple]:
        """Stored transitions, oldest first."""
        return [(self.state[i].copy(), int(self.action[i]), float(self.reward[i]),
                 self.next_state[i].copy(), bool(self.terminal[i])) for i in self._order()]

    def sample(self, rng: np.random.Generator, batch_size: int):
        if self._size == 0:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.choice(self._size, size=batch_size, replace=self._size < batch_size)
        return (self.state[idx], self.action[idx], self.reward[idx],
                self.next_state[idx], self.terminal[idx])


@dataclass
class RunLog:
    """Per-step traces of one run. ``loss`` is NaN on steps without an update."""

    epsilon: np.ndarray
    loss: np.ndarray
    min_error: np.ndarray
    episode: np.ndarray
    distinct_states: list[int]
    wall_clock: list[float] = field(default_factory=list, compare=False)

    def __eq__(self, other):
        if not isinstance(other, RunLog):
            return NotImplemented
        return (np.array_equal(self.epsilon, other.epsilon)
                and np.array_equal(self.loss, other.loss, equal_nan=True)
                and np.array_equal(self.min_error, other.min_error)
                and np.array_equal(self.episode, other.episode)
                and self.distinct_states == other.distinct_states)

    @property
    def update_losses(self) -> np.ndarray:
        return self.loss[~np.isnan(self.loss)]

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "episode", "epsilon", "loss", "min_error"])
            for t in range(len(self.epsilon)):
                loss = "" if np.isnan(self.loss[t]) else repr(float(self.loss[t]))
                w.writerow([t + 1, int(self.episode[t]) + 1, repr(float(self.epsilon[t])),
                            loss, repr(float(self.min_error[t]))])


@dataclass
class RunResult:
    method: str
    best_state: tuple[float, ...]
    best_error: float
    steps_to_best: int  # env steps taken when the best state was first reached
    log: RunLog

    def summary(self, cfg: AgentConfig, seed: int, env: ProcessEnv) -> dict:
        flat = env.flat_of(self.best_state)
        return {
            "method": self.method,
            "seed": seed,
            "best_state": dict(zip(env.schema.variable_names, self.best_state)),
            "best_error": self.best_error,
            "steps_to_best": self.steps_to_best,
            "simulated": dict(zip(env.schema.criteria,
                                  env.grid.predictions[flat].tolist())),
            "targets": dict(zip(env.schema.criteria, env.target.targets.tolist())),
            "weights": env.target.weights.tolist(),
            "distinct_states_per_episode": self.log.distinct_states,
            "config": asdict(cfg),
        }

    def write_summary(self, path, cfg, seed, env) -> None:
        Path(path).write_text(json.dumps(self.summary(cfg, seed, env), indent=2) + "\n",
                              encoding="utf-8")


class _Tracker:
    def __init__(self, env: ProcessEnv, cfg: AgentConfig):
        total = cfg.episodes * cfg.steps
        self.env = env
        self.epsilon = np.zeros(total)
        self.loss = np.full(total, np.nan)
        self.min_error = np.zeros(total)
        self.episode = np.zeros(total, dtype=np.int64)
        self.distinct: list[int] = []
        self.clock: list[float] = []
        self.best_flat = -1
        self.best_error = np.inf
        self.best_step = 0
        self._seen: set[int] = set()

    def start_episode(self, flat: int, t: int) -> None:
        self._seen = {flat}
        self.distinct.append(0)
        self._t0 = time.perf_counter()
        self.visit(flat, t)

    def visit(self, flat: int, t: int) -> None:
        self._seen.add(flat)
        e = self.env.errors[flat]
        if e < self.best_error:
            self.best_error, self.best_flat, self.best_step = float(e), flat, t

    def record(self, t: int, episode: int, eps: float) -> None:
        self.epsilon[t] = eps
        self.episode[t] = episode

    def end_episode(self) -> None:
        self.distinct[-1] = len(self._seen)
        self.clock.append(time.perf_counter() - self._t0)

    def result(self, method: str) -> RunResult:
        log = RunLog(self.epsilon, self.loss, self.min_error, self.episode, self.distinct,
                     self.clock)
        return RunResult(method, self.env.values(self.best_flat), self.best_error,
                         self.best_step, log)


class DQNAgent:
    """Online and target networks, replay memory and their RNG streams."""

    def __init__(self, n_features: int, n_actions: int, cfg: AgentConfig, seed: int):
        self.cfg = cfg
        self.online = qfunc.init_params(n_features, n_actions, cfg.hidden,
                                        derive_seed(seed, AGENT, 3))
        self.target = qfunc.clone_params(self.online)
        self.memory = ReplayMemory(cfg.memory_size, n_features)
        self.explore_rng = rng_for(seed, AGENT, 1)
        self.replay_rng = rng_for(seed, AGENT, 2)

    def act(self, features, epsilon: float) -> int:
        return select_action(qfunc.forward(self.online, features), epsilon, self.explore_rng)

    def learn(self) -> float:
        """One minibatch gradient step against targets from the frozen network."""
        s, a, r, s2, done = self.memory.sample(self.replay_rng, self.cfg.batch_size)
        q_next = qfunc.forward(self.target, s2).max(axis=1)
        y = np.where(done, r, r + self.cfg.gamma * q_next)
        return qfunc.train_step(self.online, s, a, y, self.cfg.learning_rate)

    def sync_target(self) -> None:
        qfunc.copy_into(self.target, self.online)


def _transitions(env: ProcessEnv) -> np.ndarray:
    table = getattr(env, "_transition_cache", None)
    if table is None:
        table = env.transition_table()
        env._transition_cache = table
    return table


def dqn_train(env: ProcessEnv, cfg: AgentConfig = AgentConfig(), seed: int = 0) -> RunResult:
    trans = _transitions(env)
    feats = env.features
    agent = DQNAgent(feats.shape[1], env.n_actions, cfg, seed)
    init_rng = rng_for(seed, AGENT, 0)
    track = _Tracker(env, cfg)
    t = 0
    for ep in range(cfg.episodes):
        s = env.random_state(init_rng)
        track.start_episode(s, t)
        for k in range(cfg.steps):
            eps = epsilon_at(t, cfg)
            a = agent.act(feats[s], eps)
            s2 = int(trans[s, a])
            r = env.distance[s] - env.distance[s2]
            agent.memory.push(feats[s], a, r, feats[s2], k == cfg.steps - 1)
            track.record(t, ep, eps)
            t += 1
            if t > cfg.warmup and t % cfg.update_every == 0:
                track.loss[t - 1] = agent.learn()
            if t > cfg.warmup and t % cfg.sync_every == 0:
                agent.sync_target()
            track.visit(s2, t)
            track.min_error[t - 1] = track.best_error
            s = s2
        track.end_episode()
    return track.result("dqn")


def qlearning_train(env: ProcessEnv, cfg: AgentConfig = AgentConfig(), seed: int = 0,
                    q_table: np.ndarray | None = None) -> RunResult:
    """Tabular Q-learning on the same schedule; ``q_table`` (if given) is updated in place."""
    entries = env.n_states * env.n_actions
    if entries > cfg.max_table_entries:
        raise ValueError(f"Q-table would need {entries} entries, limit is {cfg.max_table_entries}")
    trans = _transitions(env)
    q = np.zeros((env.n_states, env.n_actions)) if q_table is None else q_table
    init_rng = rng_for(seed, AGENT, 0)
    explore_rng = rng_for(seed, AGENT, 1)
    track = _Tracker(env, cfg)
    alpha, gamma = cfg.learning_rate, cfg.gamma
    t = 0
    for ep in range(cfg.episodes):
        s = env.random_state(init_rng)
        track.start_episode(s, t)
        for k in range(cfg.steps):
            eps = epsilon_at(t, cfg)
            a = select_action(q[s], eps, explore_rng)
            s2 = int(trans[s, a])
            r = env.distance[s] - env.distance[s2]
            max_next = 0.0 if k == cfg.steps - 1 else q[s2].max()
            q[s, a] = q_update(q[s, a], r, max_next, alpha, gamma)
            track.record(t, ep, eps)
            t += 1
            track.visit(s2, t)
            track.min_error[t - 1] = track.best_error
            s = s2
        track.end_episode()
    return track.result("qlearning")


def random_walk(env: ProcessEnv, cfg: AgentConfig = AgentConfig(), seed: int = 0) -> RunResult:
    """Uniformly random actions with the agents' episode layout and initial states."""
    trans = _transitions(env)
    init_rng = rng_for(seed, AGENT, 0)
    explore_rng = rng_for(seed, AGENT, 1)
    track = _Tracker(env, cfg)
    t = 0
    for ep in range(cfg.episodes):
        s = env.random_state(init_rng)
        track.start_episode(s, t)
        for _ in range(cfg.steps):
            s2 = int(trans[s, explore_rng.integers(env.n_actions)])
            track.record(t, ep, 0.0)
            t += 1
            track.visit(s2, t)
            track.min_error[t - 1] = track.best_error
            s = s2
        track.end_episode()
    return track.result("random")


def scenario_seed(master: int, index: int) -> int:
    """Seed shared by every method run on scenario ``index``."""
    return derive_seed(master, AGENT, 100 + index)


METHODS = {"dqn": dqn_train, "qlearning": qlearning_train, "random": random_walk}


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    method: str
    best_state: tuple[float, ...]
    best_error: float
    steps_to_best: int


def compare(scenarios: Sequence[tuple[str, ProcessEnv]], cfg: AgentConfig = AgentConfig(),
            seed: int = 0, methods: Sequence[str] = ("dqn", "qlearning")) -> list[ComparisonRow]:
    """Run every method on every scenario; methods share the scenario's seed."""
    if not scenarios:
        raise ValueError("no scenarios to compare")
    rows = []
    for i, (name, env) in enumerate(scenarios):
        s_seed = scenario_seed(seed, i)
        for m in methods:
            res = METHODS[m](env, cfg, s_seed)
            rows.append(ComparisonRow(name, m, res.best_state, res.best_error,
                                      res.steps_to_best))
    return rows
