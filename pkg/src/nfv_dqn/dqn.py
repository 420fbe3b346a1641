"""Deep Q-network placement agent, written directly against numpy.

The network maps a state vector to one Q-value per server. A service with
``U`` VNFs is placed on the ``U`` highest-valued servers (VNF ``u`` on the
``u``-th best). For training, the Q-value of a multi-server action is the mean
of its servers' outputs, regressed on ``reward + gamma * max_j Q(next)_j``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1

_ACT = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


class NotReadyError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    activations: tuple[str, ...] = ("tanh", "relu")
    dropout: tuple[float, ...] = (0.1, 0.1)
    epsilon_init: float = 0.2
    epsilon_decay: float = 0.9998
    epsilon_floor: float = 0.01
    gamma: float = 0.9
    learning_rate: float = 1e-3
    optimizer: str = "sgd"
    batch_size: int = 32
    memory_capacity: int = 10_000
    train_threshold: int = 500
    train_every: int = 1
    target_sync: int = 0  # steps between frozen-target refreshes; 0 disables the target network
    grad_clip: float | None = 10.0  # global gradient-norm cap; None disables clipping

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.activations = tuple(self.activations)
        self.dropout = tuple(float(p) for p in self.dropout)
        if len(self.activations) != len(self.hidden) or len(self.dropout) != len(self.hidden):
            raise ValueError("hidden, activations and dropout must have one entry per hidden layer")
        if not 0.0 <= self.epsilon_init <= 1.0 or not 0.0 <= self.epsilon_floor <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if any(not 0.0 <= p < 1.0 for p in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "AgentConfig":
        return cls(**(d or {}))


class QNetwork:
    """Fully connected net with per-layer dropout and a linear output layer."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], dropout: Sequence[float] | None = None,
                 rng: np.random.Generator | None = None):
        self.sizes = [int(s) for s in sizes]
        self.activations = list(activations)
        if len(self.activations) != len(self.sizes) - 2:
            raise ValueError("need one activation per hidden layer")
        for a in self.activations:
            if a not in _ACT:
                raise ValueError(f"unknown activation {a!r}")
        self.dropout = list(dropout) if dropout is not None else [0.0] * len(self.activations)
        rng = rng or np.random.default_rng(0)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> "QNetwork":
        new = QNetwork.__new__(QNetwork)
        new.sizes = list(self.sizes)
        new.activations = list(self.activations)
        new.dropout = list(self.dropout)
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None,
                cache: list | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"state has {x.shape[-1]} features, network expects {self.sizes[0]}")
        h = x
        n_hidden = len(self.activations)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k == n_hidden:
                if cache is not None:
                    cache.append((h, z, None, None))
                return z
            act, _ = _ACT[self.activations[k]]
            a = act(z)
            mask = None
            p = self.dropout[k]
            if training and p > 0.0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng")
                mask = (rng.random(a.shape) >= p) / (1.0 - p)
                out = a * mask
            else:
                out = a
            if cache is not None:
                cache.append((h, z, a, mask))
            h = out
        return h

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. ``params``, given dLoss/dOutput."""
        grads: list[np.ndarray] = []
        g = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            h, z, a, mask = cache[k]
            if k < len(self.activations):
                if mask is not None:
                    g = g * mask
                g = g * _ACT[self.activations[k]][1](z, a)
            grads.append(g.sum(axis=0) if g.ndim > 1 else g)
            grads.append(np.atleast_2d(h).T @ np.atleast_2d(g))
            g = g @ self.weights[k].T
        grads.reverse()
        return grads  # [dW0, db0, dW1, db1, ...]


def action_mask(actions: Sequence[Sequence[int]], n: int) -> np.ndarray:
    m = np.zeros((len(actions), n))
    for i, a in enumerate(actions):
        m[i, list(a)] = 1.0 / len(a)
    return m


def td_loss_and_grads(net: QNetwork, states: np.ndarray, masks: np.ndarray, targets: np.ndarray,
                      training: bool = False, rng: np.random.Generator | None = None):
    """Mean squared error between the mean Q of each chosen action and its target."""
    cache: list = []
    q = net.forward(states, training=training, rng=rng, cache=cache)
    pred = (q * masks).sum(axis=1)
    err = pred - targets
    loss = float(np.mean(err ** 2))
    grad_q = (2.0 / len(targets)) * err[:, None] * masks
    return loss, net.backward(cache, grad_q)


class ReplayMemory:
    """Fixed-size ring buffer of transitions sampled uniformly with replacement."""

    def __init__(self, capacity: int, state_dim: int, n_servers: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.masks = np.zeros((capacity, n_servers))
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.actions: list[tuple[int, ...] | None] = [None] * capacity
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def store(self, state, action, reward, next_state, terminal=False) -> None:
        i = self.pos
        self.states[i] = state
        self.next_states[i] = next_state
        self.masks[i] = 0.0
        self.masks[i, list(action)] = 1.0 / len(action)
        self.rewards[i] = reward
        self.terminal[i] = terminal
        self.actions[i] = tuple(int(s) for s in action)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, age: int):
        """``memory[0]`` is the oldest stored transition."""
        if not 0 <= age < self.size:
            raise IndexError(age)
        i = (self.pos - self.size + age) % self.capacity
        return (self.states[i].copy(), self.actions[i], float(self.rewards[i]),
                self.next_states[i].copy(), bool(self.terminal[i]))

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise NotReadyError("replay memory is empty")
        return rng.integers(0, self.size, size=batch_size)


def select_top(q: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` largest entries, best first, ties to the lowest index."""
    order = np.argsort(-q, kind="stable")
    return tuple(int(i) for i in order[:k])


class DQNAgent:
    def __init__(self, state_dim: int, n_servers: int, config: AgentConfig | None = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.n_servers = n_servers
        init_ss, act_ss, train_ss = np.random.SeedSequence(seed).spawn(3)
        cfg = self.config
        self.net = QNetwork([state_dim, *cfg.hidden, n_servers], cfg.activations, cfg.dropout,
                            rng=np.random.default_rng(init_ss))
        self.target = self.net.copy() if cfg.target_sync > 0 else None
        self.memory = ReplayMemory(cfg.memory_capacity, state_dim, n_servers)
        self.act_rng = np.random.default_rng(act_ss)
        self.train_rng = np.random.default_rng(train_ss)
        self.epsilon = cfg.epsilon_init
        self.train_steps = 0
        self.stored = 0
        self._adam = None

    # -- acting ------------------------------------------------------------

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.net.forward(state, training=False)

    def select_action(self, state: np.ndarray, chain_length: int, epsilon: float | None = None,
                      rng: np.random.Generator | None = None) -> tuple[int, ...]:
        if chain_length > self.n_servers:
            raise ValueError(f"chain of {chain_length} VNFs exceeds {self.n_servers} servers")
        eps = self.epsilon if epsilon is None else epsilon
        rng = rng or self.act_rng
        if eps > 0.0 and rng.random() < eps:
            return tuple(int(i) for i in rng.choice(self.n_servers, size=chain_length, replace=False))
        return select_top(self.q_values(state), chain_length)

    def decay_epsilon(self) -> float:
        cfg = self.config
        self.epsilon = max(cfg.epsilon_floor, self.epsilon * cfg.epsilon_decay)
        return self.epsilon

    # -- learning ----------------------------------------------------------

    def store(self, state, action, reward, next_state, terminal=False) -> None:
        self.memory.store(state, action, reward, next_state, terminal)
        self.stored += 1

    def ready(self) -> bool:
        return len(self.memory) >= self.config.train_threshold

    def observe(self, state, action, reward, next_state, terminal=False) -> float | None:
        """Store a transition and train if due; returns the loss when a step was taken."""
        self.store(state, action, reward, next_state, terminal)
        if self.ready() and self.stored % self.config.train_every == 0:
            return self.train_step()
        return None

    def targets(self, rewards: np.ndarray, next_states: np.ndarray, terminal: np.ndarray) -> np.ndarray:
        net = self.target if self.target is not None else self.net
        q_next = net.forward(next_states, training=False).max(axis=1)
        return rewards + self.config.gamma * np.where(terminal, 0.0, q_next)

    def train_step(self) -> float:
        cfg = self.config
        if not self.ready():
            raise NotReadyError(f"replay memory holds {len(self.memory)} < {cfg.train_threshold} transitions")
        m = self.memory
        idx = m.sample_indices(cfg.batch_size, self.train_rng)
        y = self.targets(m.rewards[idx], m.next_states[idx], m.terminal[idx])
        loss, grads = td_loss_and_grads(self.net, m.states[idx], m.masks[idx], y,
                                        training=True, rng=self.train_rng)
        if cfg.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > cfg.grad_clip:
                grads = [g * (cfg.grad_clip / norm) for g in grads]
        self._apply(grads)
        self.train_steps += 1
        if self.target is not None and self.train_steps % cfg.target_sync == 0:
            self.target = self.net.copy()
        return loss

    def _apply(self, grads: list[np.ndarray]) -> None:
        lr = self.config.learning_rate
        params = self.net.params
        if self.config.optimizer == "sgd":
            for p, g in zip(params, grads):
                p -= lr * g
            return
        if self._adam is None:
            self._adam = ([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)
        ms, vs, t = self._adam
        t += 1
        b1, b2 = 0.9, 0.999
        for p, g, mo, ve in zip(params, grads, ms, vs):
            mo *= b1
            mo += (1 - b1) * g
            ve *= b2
            ve += (1 - b2) * g * g
            p -= lr * (mo / (1 - b1 ** t)) / (np.sqrt(ve / (1 - b2 ** t)) + 1e-8)
        self._adam = (ms, vs, t)

    # -- persistence -------------------------------------------------------

    def save(self, path) -> Path:
        path = Path(path)
        meta = {
            "version": CHECKPOINT_VERSION,
            "sizes": self.net.sizes,
            "activations": self.net.activations,
            "dropout": self.net.dropout,
            "epsilon": self.epsilon,
            "train_steps": self.train_steps,
            "config": asdict(self.config),
        }
        arrays = {f"W{k}": w for k, w in enumerate(self.net.weights)}
        arrays.update({f"b{k}": b for k, b in enumerate(self.net.biases)})
        with open(path, "wb") as f:
            np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
        return path

    @classmethod
    def load(cls, path, seed: int = 0) -> "DQNAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            sizes = meta["sizes"]
            cfg = AgentConfig.from_dict(meta["config"])
            agent = cls(sizes[0], sizes[-1], cfg, seed=seed)
            for k in range(len(sizes) - 1):
                agent.net.weights[k] = data[f"W{k}"].copy()
                agent.net.biases[k] = data[f"b{k}"].copy()
        agent.epsilon = meta["epsilon"]
        agent.train_steps = meta["train_steps"]
        if agent.target is not None:
            agent.target = agent.net.copy()
        return agent


def decay_epsilon(epsilon: float, decay: float, floor: float) -> float:
    return max(floor, epsilon * decay)
