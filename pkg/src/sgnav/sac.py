"""Compact soft actor-critic in numpy.

Networks are small tanh MLPs whose weights live in one flat vector each, so
Adam steps and Polyak averaging are single vector operations.  All gradients
are written out by hand; :func:`gradient_check` compares them with central
finite differences.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1
ACTION_BOUND = 1.0 - 1e-7  # keep squashed actions strictly inside (-1, 1)


class NaNDetected(FloatingPointError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SACConfig:
    hidden: int = 64
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005          # target <- (1 - tau) * target + tau * online
    batch_size: int = 128
    buffer_capacity: int = 100_000
    init_alpha: float = 1.0
    target_entropy: Optional[float] = None  # defaults to -action_dim
    learning_starts: int = 1000
    train_freq: int = 1
    bootstrap_on_timeout: bool = True


# ---------------------------------------------------------------- networks


class MLP:
    """Fully connected net, tanh hidden layers, linear output."""

    def __init__(self, sizes, rng: Optional[np.random.Generator] = None, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.shapes = []
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            self.shapes += [(i, o), (o,)]
        self.theta = np.zeros(sum(math.prod(s) for s in self.shapes))
        self.params = self.views(self.theta)
        if rng is not None:
            n_layers = len(self.sizes) - 1
            for k in range(n_layers):
                W, b = self.params[2 * k], self.params[2 * k + 1]
                bound = 1.0 / math.sqrt(W.shape[0])
                W[...] = rng.uniform(-bound, bound, W.shape)
                b[...] = rng.uniform(-bound, bound, b.shape)
                if k == n_layers - 1:
                    W *= out_scale
                    b *= out_scale

    def views(self, flat: np.ndarray) -> list:
        out, i = [], 0
        for s in self.shapes:
            n = math.prod(s)
            out.append(flat[i:i + n].reshape(s))
            i += n
        return out

    def copy(self) -> "MLP":
        m = MLP.__new__(MLP)
        m.sizes, m.shapes = self.sizes, self.shapes
        m.theta = self.theta.copy()
        m.params = m.views(m.theta)
        return m

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        n = len(self.sizes) - 1
        for k in range(n):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, dout: np.ndarray, param_grad: bool = True, input_grad: bool = False):
        """Backprop ``dout`` (gradient w.r.t. the output). Returns (flat grad or None, dx or None)."""
        grad = np.empty_like(self.theta) if param_grad else None
        gv = self.views(grad) if param_grad else None
        d = dout
        n = len(self.sizes) - 1
        for k in range(n - 1, -1, -1):
            if param_grad:
                gv[2 * k][...] = acts[k].T @ d
                gv[2 * k + 1][...] = d.sum(axis=0)
            if k > 0 or input_grad:
                d = d @ self.params[2 * k].T
                if k > 0:
                    d = d * (1.0 - acts[k] ** 2)
        return grad, (d if input_grad else None)


class Adam:
    def __init__(self, size: int, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------- policy maths


def _softplus(x):
    return np.logaddexp(0.0, x)


def squash_log_std(raw):
    """Smoothly map raw outputs into [LOG_STD_MIN, LOG_STD_MAX]."""
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)


def gaussian_tanh(mean, log_std, eps):
    """Reparameterized squashed-Gaussian sample and its log-density."""
    std = np.exp(log_std)
    u = mean + std * eps
    a = np.tanh(u)
    # log(1 - tanh(u)^2) written stably
    log_jac = 2.0 * (LOG2 - u - _softplus(-2.0 * u))
    logp = np.sum(-0.5 * eps ** 2 - log_std - 0.5 * LOG_2PI - log_jac, axis=-1)
    return a, logp, std, u


class Batch(NamedTuple):
    obs: np.ndarray
    act: np.ndarray
    rew: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray


class SAC:
    """Actor, twin critics with targets, and a learned entropy temperature."""

    def __init__(self, obs_dim: int, act_dim: int = 2, config: SACConfig = SACConfig(),
                 seed: int = 0, zero_actor: bool = False):
        self.obs_dim, self.act_dim, self.config = obs_dim, act_dim, config
        ss = np.random.SeedSequence(seed)
        ra, r1, r2 = (np.random.default_rng(s) for s in ss.spawn(3))
        H = config.hidden
        self.actor = MLP([obs_dim, H, H, 2 * act_dim], None if zero_actor else ra, out_scale=0.1)
        self.q1 = MLP([obs_dim + act_dim, H, H, 1], r1)
        self.q2 = MLP([obs_dim + act_dim, H, H, 1], r2)
        self.q1_targ = self.q1.copy()
        self.q2_targ = self.q2.copy()
        self.log_alpha = math.log(config.init_alpha)
        self.actor_opt = Adam(self.actor.theta.size, config.actor_lr)
        self.q1_opt = Adam(self.q1.theta.size, config.critic_lr)
        self.q2_opt = Adam(self.q2.theta.size, config.critic_lr)
        self.alpha_opt = Adam(1, config.alpha_lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def target_entropy(self) -> float:
        te = self.config.target_entropy
        return -float(self.act_dim) if te is None else te

    def policy(self, obs):
        out, acts = self.actor.forward(obs)
        mean = out[..., :self.act_dim]
        raw = out[..., self.act_dim:]
        return mean, raw, acts

    def act(self, obs, deterministic: bool = False, rng: Optional[np.random.Generator] = None):
        obs = np.asarray(obs, dtype=float)
        mean, raw, _ = self.policy(obs[None] if obs.ndim == 1 else obs)
        if deterministic:
            u = mean
        else:
            eps = rng.standard_normal(mean.shape)
            u = mean + np.exp(squash_log_std(raw)) * eps
        a = np.clip(np.tanh(u), -ACTION_BOUND, ACTION_BOUND)
        return a[0] if obs.ndim == 1 else a


def q_min(agent: SAC, nets, obs, act):
    x = np.concatenate([obs, act], axis=1)
    q1, c1 = nets[0].forward(x)
    q2, c2 = nets[1].forward(x)
    return q1[:, 0], q2[:, 0], c1, c2


def td_target(agent: SAC, batch: Batch, eps_next: np.ndarray, alpha: float) -> np.ndarray:
    mean, raw, _ = agent.policy(batch.next_obs)
    a2, logp2, _, _ = gaussian_tanh(mean, squash_log_std(raw), eps_next)
    t1, t2, _, _ = q_min(agent, (agent.q1_targ, agent.q2_targ), batch.next_obs, a2)
    soft_v = np.minimum(t1, t2) - alpha * logp2
    return batch.rew + agent.config.gamma * (1.0 - batch.done) * soft_v


def critic_loss_grads(agent: SAC, batch: Batch, y: np.ndarray):
    """0.5 * (MSE(Q1, y) + MSE(Q2, y)) and its gradients for both critics."""
    q1, q2, c1, c2 = q_min(agent, (agent.q1, agent.q2), batch.obs, batch.act)
    B = len(y)
    e1, e2 = q1 - y, q2 - y
    loss = 0.5 * (np.mean(e1 ** 2) + np.mean(e2 ** 2))
    g1, _ = agent.q1.backward(c1, (e1 / B)[:, None])
    g2, _ = agent.q2.backward(c2, (e2 / B)[:, None])
    return loss, g1, g2


def actor_loss_grads(agent: SAC, batch: Batch, eps: np.ndarray, alpha: float):
    """mean(alpha * log pi(a~|s) - min Q(s, a~)) and its gradient for the actor.

    Also returns the sampled log-probabilities for the temperature update.
    """
    A = agent.act_dim
    mean, raw, acts = agent.policy(batch.obs)
    log_std = squash_log_std(raw)
    a, logp, std, u = gaussian_tanh(mean, log_std, eps)
    q1, q2, c1, c2 = q_min(agent, (agent.q1, agent.q2), batch.obs, a)
    B = len(logp)
    use1 = q1 <= q2
    loss = float(np.mean(alpha * logp - np.where(use1, q1, q2)))
    # dQ/da through whichever critic is the minimum for each sample
    _, dx1 = agent.q1.backward(c1, np.where(use1, 1.0, 0.0)[:, None], param_grad=False, input_grad=True)
    _, dx2 = agent.q2.backward(c2, np.where(use1, 0.0, 1.0)[:, None], param_grad=False, input_grad=True)
    dq_da = (dx1 + dx2)[:, -A:]
    dq_du = dq_da * (1.0 - a ** 2)
    d_mean = (alpha * 2.0 * a - dq_du) / B
    d_logstd = (alpha * (-1.0 + 2.0 * a * eps * std) - dq_du * std * eps) / B
    d_raw = d_logstd * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - np.tanh(raw) ** 2)
    g, _ = agent.actor.backward(acts, np.concatenate([d_mean, d_raw], axis=1))
    return loss, g, logp


def _check_finite(name: str, *arrays) -> None:
    for x in arrays:
        if not np.all(np.isfinite(x)):
            raise NaNDetected(f"non-finite values in {name}")


def sac_update(agent: SAC, batch: Batch, rng: np.random.Generator) -> dict:
    """One SAC step: temperature, twin critics, actor, then soft target update."""
    cfg = agent.config
    B = len(batch.rew)
    if B == 0:
        raise ValueError("empty batch")
    A = agent.act_dim
    alpha = agent.alpha

    eps_next = rng.standard_normal((B, A))
    y = td_target(agent, batch, eps_next, alpha)
    closs, g1, g2 = critic_loss_grads(agent, batch, y)
    _check_finite("critic", closs, g1, g2)
    agent.q1_opt.step(agent.q1.theta, g1)
    agent.q2_opt.step(agent.q2.theta, g2)

    eps = rng.standard_normal((B, A))
    aloss, ga, logp = actor_loss_grads(agent, batch, eps, alpha)
    _check_finite("actor", aloss, ga)
    agent.actor_opt.step(agent.actor.theta, ga)

    # d/d(log_alpha) of -mean(log_alpha * (logp + target_entropy))
    g_alpha = -float(np.mean(logp + agent.target_entropy))
    temp_loss = agent.log_alpha * g_alpha
    la = np.array([agent.log_alpha])
    agent.alpha_opt.step(la, np.array([g_alpha]))
    agent.log_alpha = float(la[0])
    _check_finite("temperature", agent.log_alpha)

    for targ, net in ((agent.q1_targ, agent.q1), (agent.q2_targ, agent.q2)):
        targ.theta *= 1.0 - cfg.tau
        targ.theta += cfg.tau * net.theta
    agent.updates += 1
    return {"critic_loss": float(closs), "actor_loss": aloss, "alpha_loss": float(temp_loss),
            "alpha": alpha, "entropy": float(-np.mean(logp))}


# ---------------------------------------------------------------- gradient check


def _fd_grad(loss_fn, theta: np.ndarray, idx, h: float) -> np.ndarray:
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        old = theta[i]
        theta[i] = old + h
        lp = loss_fn()
        theta[i] = old - h
        lm = loss_fn()
        theta[i] = old
        out[j] = (lp - lm) / (2.0 * h)
    return out


def relative_error(a, n, floor: float = 1e-8) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(agent: SAC, batch: Batch, rng: np.random.Generator, n_weights: int = 200,
                   h: float = 1e-5, corrupt=None, return_details: bool = False):
    """Max relative error between analytic and central-difference gradients.

    Weights are drawn at random from both critics and the actor (at least
    ``n_weights`` in total).  ``corrupt`` optionally perturbs the analytic
    gradient dict before comparison (negative controls).
    """
    B, A = len(batch.rew), agent.act_dim
    alpha = agent.alpha
    eps_next = rng.standard_normal((B, A))
    eps = rng.standard_normal((B, A))
    y = td_target(agent, batch, eps_next, alpha)

    _, g1, g2 = critic_loss_grads(agent, batch, y)
    _, ga, _ = actor_loss_grads(agent, batch, eps, alpha)
    analytic = {"q1": g1, "q2": g2, "actor": ga}
    if corrupt is not None:
        analytic = corrupt(analytic)

    nets = {"q1": agent.q1, "q2": agent.q2, "actor": agent.actor}
    losses = {
        "q1": lambda: critic_loss_grads(agent, batch, y)[0],
        "q2": lambda: critic_loss_grads(agent, batch, y)[0],
        "actor": lambda: actor_loss_grads(agent, batch, eps, alpha)[0],
    }
    per = int(math.ceil(n_weights / 3))
    errors, details = [], {}
    for name, net in nets.items():
        idx = rng.choice(net.theta.size, size=min(per, net.theta.size), replace=False)
        num = _fd_grad(losses[name], net.theta, idx, h)
        err = relative_error(analytic[name][idx], num)
        errors.append(err)
        details[name] = (idx, analytic[name][idx], num)
    worst = float(np.max(np.concatenate(errors)))
    return (worst, details) if return_details else worst


# ---------------------------------------------------------------- replay buffer


class ReplayBuffer:
    """Fixed-capacity FIFO ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2):
        self.capacity, self.obs_dim, self.act_dim = int(capacity), obs_dim, act_dim
        self.obs = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((self.capacity, act_dim), dtype=np.float32)
        self.rew = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity)
        self.size = 0
        self.pos = 0
        self._lock = threading.Lock()

    def __len__(self):
        return self.size

    def push(self, obs, act, rew, next_obs, done) -> "ReplayBuffer":
        obs, next_obs, act = np.asarray(obs), np.asarray(next_obs), np.asarray(act)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise DimensionMismatch(f"observation shape {obs.shape}, expected ({self.obs_dim},)")
        if act.shape != (self.act_dim,):
            raise DimensionMismatch(f"action shape {act.shape}, expected ({self.act_dim},)")
        with self._lock:
            i = self.pos
            self.obs[i], self.act[i], self.rew[i] = obs, act, rew
            self.next_obs[i], self.done[i] = next_obs, float(done)
            self.pos = (i + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)
        return self

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        with self._lock:
            if self.size == 0:
                raise ValueError("sampling from an empty buffer")
            idx = self.sample_indices(n, rng)
            return Batch(self.obs[idx].astype(float), self.act[idx].astype(float),
                         self.rew[idx].copy(), self.next_obs[idx].astype(float), self.done[idx].copy())

    def oldest(self) -> int:
        """Ring index of the oldest stored transition."""
        return self.pos if self.size == self.capacity else 0


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(agent: SAC, path, rng: Optional[np.random.Generator] = None, extra: dict | None = None):
    meta = {"version": CHECKPOINT_VERSION, "obs_dim": agent.obs_dim, "act_dim": agent.act_dim,
            "config": asdict(agent.config), "log_alpha": agent.log_alpha, "updates": agent.updates,
            "rng_state": rng.bit_generator.state if rng is not None else None,
            "opt_t": [o.t for o in (agent.actor_opt, agent.q1_opt, agent.q2_opt, agent.alpha_opt)],
            "extra": extra or {}}
    arrays = {}
    for name in ("actor", "q1", "q2", "q1_targ", "q2_targ"):
        arrays[name] = getattr(agent, name).theta
    for name in ("actor_opt", "q1_opt", "q2_opt", "alpha_opt"):
        opt = getattr(agent, name)
        arrays[name + "_m"], arrays[name + "_v"] = opt.m, opt.v
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, default=int)), **arrays)


def load_checkpoint(path):
    """Returns ``(agent, rng_or_None, extra)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        agent = SAC(meta["obs_dim"], meta["act_dim"], SACConfig(**meta["config"]))
        for name in ("actor", "q1", "q2", "q1_targ", "q2_targ"):
            getattr(agent, name).theta[...] = z[name]
        for name, t in zip(("actor_opt", "q1_opt", "q2_opt", "alpha_opt"), meta["opt_t"]):
            opt = getattr(agent, name)
            opt.m[...], opt.v[...], opt.t = z[name + "_m"], z[name + "_v"], t
    agent.log_alpha = meta["log_alpha"]
    agent.updates = meta["updates"]
    rng = None
    if meta["rng_state"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_state"]
    return agent, rng, meta["extra"]
