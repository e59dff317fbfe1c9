"""DDPG actor-critic with replay buffer and truncated-normal exploration.

Everything is plain numpy: two small tanh MLPs with hand-written backward
passes and Adam updates.
"""

from __future__ import annotations

import logging
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation

log = logging.getLogger(__name__)

STATE_DIM = 10
_ACTION_SCALE = 1.0 - 1e-6  # keeps sigmoid outputs strictly below 1


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def truncated_normal(mu, sigma, lo=0.0, hi=1.0, rng=None, size=None):
    """Rejection-sample Normal(mu, sigma) restricted to ``[lo, hi)``."""
    if sigma <= 0 or not lo < hi:
        raise ContractViolation("need sigma > 0 and lo < hi")
    rng = rng if rng is not None else np.random.default_rng()
    accept = _normal_cdf((hi - mu) / sigma) - _normal_cdf((lo - mu) / sigma)
    if accept < 1e-6:
        raise ContractViolation(f"acceptance probability {accept:.3g} too small for mu={mu}, sigma={sigma}")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        draw = rng.normal(mu, sigma, size=max(need, int(need / accept * 1.2) + 1))
        ok = draw[(draw >= lo) & (draw < hi)][:need]
        out[filled : filled + len(ok)] = ok
        filled += len(ok)
    return float(out[0]) if size is None else out.reshape(size)


@dataclass
class NoiseSchedule:
    """Exploration sigma, decayed once per post-warmup episode."""

    sigma0: float = 0.5
    decay: float = 0.98
    episodes: int = 0

    @property
    def sigma(self) -> float:
        return self.sigma0 * self.decay**self.episodes

    def step(self) -> None:
        self.episodes += 1


class Mlp:
    """Fully connected net: tanh hidden layers, linear or squashed output."""

    def __init__(self, sizes, rng: np.random.Generator, squash: bool = False, final_scale: float = 3e-3):
        self.sizes = list(sizes)
        self.squash = squash
        self.weights, self.biases = [], []
        for j, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = final_scale if j == len(self.sizes) - 2 else 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Mlp":
        other = object.__new__(Mlp)
        other.sizes, other.squash = list(self.sizes), self.squash
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def forward(self, x):
        acts = [np.asarray(x, dtype=np.float64)]
        h = acts[0]
        last = len(self.weights) - 1
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if j < last:
                h = np.tanh(z)
            elif self.squash:
                h = _ACTION_SCALE / (1.0 + np.exp(-z))
            else:
                h = z
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, grad_out):
        """Gradients ``(param_grads, grad_input)`` for the cached forward ``acts``."""
        grads = []
        g = grad_out
        last = len(self.weights) - 1
        for j in range(last, -1, -1):
            out = acts[j + 1]
            if j < last:
                g = g * (1.0 - out**2)
            elif self.squash:
                s = out / _ACTION_SCALE
                g = g * _ACTION_SCALE * s * (1.0 - s)
            grads.append(g.sum(axis=0))
            grads.append(acts[j].T @ g)
            g = g @ self.weights[j].T
        grads.reverse()
        return grads, g


class Adam:
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray | None
    terminal: bool

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        if self.state.shape != (STATE_DIM,):
            raise ContractViolation(f"state must have {STATE_DIM} entries")
        if np.any(self.state < 0) or np.any(self.state > 1):
            raise ContractViolation("state entries must lie in [0, 1]")
        if not 0.0 <= self.action < 1.0:
            raise ContractViolation(f"action {self.action} outside [0, 1)")
        if self.terminal != (self.next_state is None):
            raise ContractViolation("next_state must be absent exactly for terminal transitions")


class ReplayBuffer:
    def __init__(self, capacity: int = 2000, seed: int = 0):
        if capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        self.capacity = capacity
        self.items: deque[Transition] = deque(maxlen=capacity)
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.items)

    def push(self, t: Transition) -> None:
        self.items.append(t)

    def sample(self, batch_size: int):
        """Arrays ``(s, a, r, s_next, done)``; no repeats within a batch."""
        idx = self.rng.choice(len(self.items), size=batch_size, replace=False)
        batch = [self.items[i] for i in idx]
        s = np.stack([t.state for t in batch])
        a = np.array([[t.action] for t in batch])
        r = np.array([[t.reward] for t in batch])
        s2 = np.stack([np.zeros(STATE_DIM) if t.terminal else t.next_state for t in batch])
        d = np.array([[float(t.terminal)] for t in batch])
        return s, a, r, s2, d


def push_trajectory(buffer: ReplayBuffer, transitions: list[Transition]) -> None:
    """Append one episode; only its final transition may carry reward."""
    if not transitions:
        raise ContractViolation("empty trajectory")
    for t in transitions[:-1]:
        if t.terminal or t.reward != 0:
            raise ContractViolation("non-final transitions must be non-terminal with zero reward")
    last = transitions[-1]
    if not last.terminal:
        raise ContractViolation("final transition must be terminal")
    for t in transitions:
        buffer.push(t)


@dataclass
class AgentConfig:
    hidden: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau_soft: float = 0.01
    gamma: float = 1.0
    batch_size: int = 64
    capacity: int = 2000
    updates_per_episode: int = 32
    sigma0: float = 0.5
    sigma_decay: float = 0.98
    warmup_mu: float = 0.5
    warmup_sigma: float = 0.5


@dataclass
class UpdateStats:
    critic_loss: float
    actor_loss: float


class DdpgAgent:
    def __init__(self, cfg: AgentConfig | None = None, seed: int = 0):
        self.cfg = cfg or AgentConfig()
        self.rng = np.random.default_rng(seed)
        h = self.cfg.hidden
        self.actor = Mlp([STATE_DIM, h, h, 1], self.rng, squash=True)
        self.critic = Mlp([STATE_DIM + 1, h, h, 1], self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, self.cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, self.cfg.critic_lr)

    def policy(self, state) -> float:
        return float(self.actor(np.asarray(state, dtype=np.float64)[None])[0, 0])

    def act(self, state, noise: NoiseSchedule | None = None) -> float:
        """Deterministic action, or a truncated-normal draw centred on it."""
        mu = self.policy(state)
        if noise is None:
            return mu
        return truncated_normal(mu, noise.sigma, 0.0, 1.0, self.rng)

    def warmup_action(self) -> float:
        return truncated_normal(self.cfg.warmup_mu, self.cfg.warmup_sigma, 0.0, 1.0, self.rng)

    def q_value(self, state, action) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(state), np.reshape(action, (-1, 1))], axis=1)
        return self.critic(x)[:, 0]

    def update(self, buffer: ReplayBuffer, batch_size: int | None = None, steps: int = 1):
        """Run ``steps`` DDPG gradient steps; returns the last step's losses."""
        batch_size = batch_size or self.cfg.batch_size
        if len(buffer) < batch_size:
            log.warning("replay buffer holds %d < %d transitions; update skipped", len(buffer), batch_size)
            return None
        stats = None
        for _ in range(steps):
            stats = self._step(*buffer.sample(batch_size))
        return stats

    def _step(self, s, a, r, s2, d) -> UpdateStats:
        cfg = self.cfg
        n = len(s)
        a2 = self.actor_target(s2)
        q2 = self.critic_target(np.concatenate([s2, a2], axis=1))
        y = td_target(r, d, q2, cfg.gamma)

        q, acts = self.critic.forward(np.concatenate([s, a], axis=1))
        diff = q - y
        critic_loss = float(np.mean(diff**2))
        grads, _ = self.critic.backward(acts, 2.0 * diff / n)
        self.critic_opt.step(self.critic.params, grads)

        pi, a_acts = self.actor.forward(s)
        qpi, c_acts = self.critic.forward(np.concatenate([s, pi], axis=1))
        _, gx = self.critic.backward(c_acts, -np.ones_like(qpi) / n)
        grads, _ = self.actor.backward(a_acts, gx[:, -1:])
        self.actor_opt.step(self.actor.params, grads)

        soft_update(self.actor_target, self.actor, cfg.tau_soft)
        soft_update(self.critic_target, self.critic, cfg.tau_soft)
        return UpdateStats(critic_loss, float(-qpi.mean()))

    # -- checkpoints ------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_SPAG_HEADER.pack(b"SPAG", SPAG_VERSION))
            for net in (self.actor, self.critic, self.actor_target, self.critic_target):
                fh.write(struct.pack("<I", len(net.sizes)))
                fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
                for p in net.params:
                    fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, cfg: AgentConfig | None = None, seed: int = 0) -> "DdpgAgent":
        raw = Path(path).read_bytes()
        magic, version = _SPAG_HEADER.unpack_from(raw)
        if magic != b"SPAG" or version != SPAG_VERSION:
            raise ContractViolation(f"{path}: not a version-{SPAG_VERSION} agent checkpoint")
        off = _SPAG_HEADER.size
        nets = []
        for squash in (True, False, True, False):
            (n_sizes,) = struct.unpack_from("<I", raw, off)
            off += 4
            sizes = list(struct.unpack_from(f"<{n_sizes}I", raw, off))
            off += 4 * n_sizes
            net = Mlp(sizes, np.random.default_rng(0), squash=squash)
            for p in net.params:
                vals = np.frombuffer(raw, dtype="<f4", count=p.size, offset=off)
                p[...] = vals.reshape(p.shape)
                off += 4 * p.size
            nets.append(net)
        agent = cls(cfg, seed)
        if agent.actor.sizes != nets[0].sizes:
            raise ContractViolation("checkpoint network sizes do not match the agent config")
        agent.actor, agent.critic, agent.actor_target, agent.critic_target = nets
        agent.actor_opt = Adam(agent.actor.params, agent.cfg.actor_lr)
        agent.critic_opt = Adam(agent.critic.params, agent.cfg.critic_lr)
        return agent


SPAG_VERSION = 1
_SPAG_HEADER = struct.Struct("<4sI")


def td_target(reward, done, q_next, gamma: float = 1.0):
    """Bootstrapped critic target; terminal rows get the reward alone."""
    return np.where(np.asarray(done) > 0, reward, reward + gamma * np.asarray(q_next))


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s
