"""One-hidden-layer rectifier network mapping state features to action values."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT = "procopt.qnet/1"


@dataclass
class NetworkParams:
    w1: np.ndarray  # (hidden, n)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (actions, hidden)
    b2: np.ndarray  # (actions,)

    names = ("w1", "b1", "w2", "b2")

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def n_actions(self) -> int:
        return self.w2.shape[0]

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(n_inputs: int, n_actions: int, hidden: int = 50, seed: int = 0) -> NetworkParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    if n_inputs < 1 or n_actions < 1 or hidden < 1:
        raise ValueError("layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    b1 = 1.0 / np.sqrt(n_inputs)
    b2 = 1.0 / np.sqrt(hidden)
    return NetworkParams(
        rng.uniform(-b1, b1, size=(hidden, n_inputs)),
        np.zeros(hidden),
        rng.uniform(-b2, b2, size=(n_actions, hidden)),
        np.zeros(n_actions),
    )


def forward(params: NetworkParams, features) -> np.ndarray:
    """Action values for one feature vector (1-d) or a batch (2-d)."""
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} features, got {x.shape[-1]}")
    h = np.maximum(x @ params.w1.T + params.b1, 0.0)
    return h @ params.w2.T + params.b2


def loss_and_grads(params: NetworkParams, features, actions, targets):
    """Mean squared TD error on the chosen actions and its gradient per array."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    a = np.asarray(actions, dtype=np.int64).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(x) == 0:
        raise ValueError("empty batch")
    if not (len(x) == len(a) == len(y)):
        raise ValueError("features, actions and targets differ in length")
    if not np.isfinite(y).all():
        raise ValueError("non-finite TD target")
    if x.shape[1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} features, got {x.shape[1]}")
    if (a < 0).any() or (a >= params.n_actions).any():
        raise ValueError("action index out of range")
    rows = np.arange(len(x))
    pre = x @ params.w1.T + params.b1
    h = np.maximum(pre, 0.0)
    q = h @ params.w2.T + params.b2
    diff = q[rows, a] - y
    loss = float(np.mean(diff ** 2))

    dq = np.zeros_like(q)
    dq[rows, a] = 2.0 * diff / len(x)
    gw2 = dq.T @ h
    gb2 = dq.sum(axis=0)
    dpre = (dq @ params.w2) * (pre > 0)
    gw1 = dpre.T @ x
    gb1 = dpre.sum(axis=0)
    return loss, NetworkParams(gw1, gb1, gw2, gb2)


def train_step(params: NetworkParams, features, actions, targets,
               learning_rate: float = 0.01) -> float:
    """One plain gradient-descent step, in place. Returns the pre-update batch loss."""
    if learning_rate <= 0:
        raise ValueError("learning rate must be > 0")
    loss, grads = loss_and_grads(params, features, actions, targets)
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= learning_rate * g
    return loss


def clone_params(params: NetworkParams) -> NetworkParams:
    return NetworkParams(*(a.copy() for a in params.arrays()))


def copy_into(dst: NetworkParams, src: NetworkParams) -> None:
    for d, s in zip(dst.arrays(), src.arrays()):
        d[...] = s


def params_to_dict(params: NetworkParams) -> dict:
    return {
        "format": FORMAT,
        "shapes": {k: list(a.shape) for k, a in zip(NetworkParams.names, params.arrays())},
        "values": {k: a.ravel().tolist() for k, a in zip(NetworkParams.names, params.arrays())},
    }


def params_from_dict(d: dict) -> NetworkParams:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a network file (format={d.get('format')!r})")
    return NetworkParams(*(np.asarray(d["values"][k], dtype=float).reshape(d["shapes"][k])
                           for k in NetworkParams.names))


def save_params(params: NetworkParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params), separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_params(path: str | Path) -> NetworkParams:
    return params_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
