"""Grid MDP over process parameters with a surrogate-driven reward.

States are points of the schema grid. Each action moves every variable one
step down, keeps it, or moves it one step up, so there are ``3**n`` actions.
Moves that would leave the grid are clamped at the boundary.

Internally states are flat grid indices (C order, last variable fastest);
the public helpers also accept and return value tuples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .data import ProcessSchema, grid_points


class Surrogate(Protocol):
    def predict_many(self, X: np.ndarray) -> np.ndarray: ...


class FunctionSurrogate:
    """Wrap a vectorized ``f(X) -> y`` so it can stand in for a fitted forest."""

    def __init__(self, fn):
        self.fn = fn

    def predict_many(self, X):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float)


@dataclass(frozen=True)
class TargetSpec:
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if t.shape != w.shape or t.ndim != 1:
            raise ValueError("targets and weights must be 1-d with equal length")
        if not np.isfinite(t).all():
            raise ValueError("targets must be finite")
        if (w <= 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "weights", w)


def weighted_l1(predictions, target: TargetSpec) -> np.ndarray:
    """Sum over criteria of sqrt(w^2 (f - p)^2), row-wise."""
    d = np.atleast_2d(predictions) - target.targets
    return np.sqrt(target.weights ** 2 * d ** 2).sum(axis=1)


def weighted_l2(predictions, target: TargetSpec) -> np.ndarray:
    """sqrt(sum over criteria of w^2 (f - p)^2), row-wise; the reported solution error."""
    d = np.atleast_2d(predictions) - target.targets
    return np.sqrt((target.weights ** 2 * d ** 2).sum(axis=1))


def reward_from_predictions(pred_state, pred_next, target: TargetSpec) -> float:
    return float(weighted_l1(pred_state, target)[0] - weighted_l1(pred_next, target)[0])


# -- action encoding --------------------------------------------------------

def action_count(schema_or_n) -> int:
    n = schema_or_n if isinstance(schema_or_n, int) else schema_or_n.n_variables
    return 3 ** n


def action_moves(n: int) -> np.ndarray:
    """(3**n, n) table of per-variable moves in {-1, 0, +1}; variable 1 is the top digit."""
    idx = np.arange(3 ** n)
    digits = np.empty((3 ** n, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        digits[:, j] = idx % 3
        idx //= 3
    return digits - 1


def action_decode(index: int, schema: ProcessSchema) -> np.ndarray:
    """Per-variable deltas (in variable units) for an action index."""
    n = schema.n_variables
    if not 0 <= index < 3 ** n:
        raise ValueError(f"action index {index} outside [0, {3 ** n})")
    moves = np.empty(n, dtype=np.int64)
    k = int(index)
    for j in range(n - 1, -1, -1):
        moves[j] = k % 3 - 1
        k //= 3
    return moves * schema.steps


def action_encode(moves: Sequence[int]) -> int:
    """Inverse of the digit table: moves in {-1, 0, +1} to an action index."""
    index = 0
    for m in moves:
        if m not in (-1, 0, 1):
            raise ValueError("moves must be -1, 0 or +1")
        index = 3 * index + (m + 1)
    return index


# -- value-level helpers ----------------------------------------------------

def state_indices(state, schema: ProcessSchema) -> np.ndarray:
    """Grid indices of a value state; raises if any value is off-grid."""
    if len(state) != schema.n_variables:
        raise ValueError(f"state needs {schema.n_variables} values")
    return np.array([v.index_of(float(x)) for v, x in zip(schema.variables, state)])


def state_values(indices, schema: ProcessSchema) -> tuple[float, ...]:
    return tuple(v.value_at(int(k)) for v, k in zip(schema.variables, indices))


def step(state, action: int, schema: ProcessSchema) -> tuple[float, ...]:
    """Apply an action to a value state, clamping each variable to its grid."""
    k = state_indices(state, schema)
    moves = np.rint(action_decode(action, schema) / schema.steps).astype(np.int64)
    k = np.clip(k + moves, 0, np.array(schema.grid_shape) - 1)
    return state_values(k, schema)


def normalize_state(state, schema: ProcessSchema) -> np.ndarray:
    state_indices(state, schema)
    lo, hi = schema.lower, schema.upper
    span = hi - lo
    out = np.zeros(schema.n_variables)
    nz = span > 0
    out[nz] = (np.asarray(state, dtype=float)[nz] - lo[nz]) / span[nz]
    return out


def random_initial_state(schema: ProcessSchema, seed) -> tuple[float, ...]:
    """Uniform grid point; ``seed`` may be an int or a ``numpy`` Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return state_values([rng.integers(0, v.n_points) for v in schema.variables], schema)


def _predict_all(models: Sequence[Surrogate], X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.asarray(m.predict_many(X), dtype=float).reshape(-1)
                            for m in models])


def _check_models(models, schema):
    if len(models) != schema.n_criteria:
        raise ValueError(f"expected {schema.n_criteria} surrogate models, got {len(models)}")
    for m in models:
        nf = getattr(m, "n_features", None)
        if nf is not None and nf != schema.n_variables:
            raise ValueError(f"surrogate expects {nf} inputs, schema has {schema.n_variables}")


def reward(state, next_state, models: Sequence[Surrogate], target: TargetSpec,
           schema: ProcessSchema) -> float:
    """Decrease of the weighted L1 distance to target from ``state`` to ``next_state``."""
    _check_models(models, schema)
    pred = _predict_all(models, np.array([state, next_state], dtype=float))
    return reward_from_predictions(pred[0], pred[1], target)


def solution_error(state, models: Sequence[Surrogate], target: TargetSpec,
                   schema: ProcessSchema) -> float:
    _check_models(models, schema)
    pred = _predict_all(models, np.array([state], dtype=float))
    return float(weighted_l2(pred, target)[0])


# -- fast environment -------------------------------------------------------

class SurrogateGrid:
    """Surrogate predictions for every grid point, evaluated once.

    Shared between environments that differ only in their target.
    """

    def __init__(self, schema: ProcessSchema, models: Sequence[Surrogate],
                 max_points: int = 2_000_000):
        _check_models(models, schema)
        if schema.grid_size > max_points:
            raise ValueError(f"grid has {schema.grid_size} points, limit is {max_points}")
        self.schema = schema
        self.points = grid_points(schema)
        self.predictions = _predict_all(models, self.points)
        lo, span = schema.lower, schema.upper - schema.lower
        safe = np.where(span > 0, span, 1.0)
        self.features = np.where(span > 0, (self.points - lo) / safe, 0.0)


class ProcessEnv:
    """The MDP for one target: flat-index states, precomputed rewards and errors."""

    def __init__(self, grid: SurrogateGrid, target: TargetSpec):
        schema = grid.schema
        if len(target.targets) != schema.n_criteria:
            raise ValueError("target arity does not match the schema criteria")
        self.schema = schema
        self.grid = grid
        self.target = target
        self.shape = np.array(schema.grid_shape)
        self.n_states = schema.grid_size
        self.n_actions = 3 ** schema.n_variables
        self.moves = action_moves(schema.n_variables)
        self.distance = weighted_l1(grid.predictions, target)
        self.errors = weighted_l2(grid.predictions, target)
        self.features = grid.features

    @classmethod
    def build(cls, schema, models, target) -> "ProcessEnv":
        return cls(SurrogateGrid(schema, models), target)

    def unravel(self, flat: int) -> np.ndarray:
        return np.array(np.unravel_index(flat, self.schema.grid_shape))

    def ravel(self, indices) -> int:
        return int(np.ravel_multi_index(tuple(indices), self.schema.grid_shape))

    def values(self, flat: int) -> tuple[float, ...]:
        return state_values(self.unravel(flat), self.schema)

    def flat_of(self, state) -> int:
        return self.ravel(state_indices(state, self.schema))

    def next_state(self, flat: int, action: int) -> int:
        k = np.clip(self.unravel(flat) + self.moves[action], 0, self.shape - 1)
        return self.ravel(k)

    def transition_table(self) -> np.ndarray:
        """(n_states, n_actions) array of successor flat indices."""
        k = np.array(np.unravel_index(np.arange(self.n_states), self.schema.grid_shape)).T
        nxt = np.clip(k[:, None, :] + self.moves[None, :, :], 0, self.shape - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(nxt, -1, 0)), self.schema.grid_shape)

    def reward(self, flat: int, next_flat: int) -> float:
        return float(self.distance[flat] - self.distance[next_flat])

    def error(self, flat: int) -> float:
        return float(self.errors[flat])

    def random_state(self, rng: np.random.Generator) -> int:
        k = [rng.integers(0, n) for n in self.schema.grid_shape]
        return self.ravel(k)
