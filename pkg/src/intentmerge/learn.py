"""Deep Q-learning for the merging vehicle.

Plain DQN: uniform replay, a periodically synchronised target network,
epsilon-greedy exploration with a linear schedule, Adam on the Huber loss.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from intentmerge.behavior import SenderAssignment
from intentmerge.dynamics import Action
from intentmerge.env import EnvConfig, MergeEnv, MergeEvent
from intentmerge.intent import CATALOG, I_IDLE
from intentmerge.qnet import Adam, QNetwork, huber

LOG_COLUMNS = ("step", "episode", "return", "loss", "epsilon")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 32
    gamma: float = 0.95
    train_freq: int = 1
    gradient_steps: int = 1
    target_update_interval: int = 50
    learning_starts: int = 1000
    total_steps: int = 40000
    buffer_size: int = 15000
    exploration_initial: float = 1.0
    exploration_final: float = 0.05
    exploration_fraction: float = 0.1
    hidden: tuple[int, ...] = (512, 512)
    max_grad_norm: float = 10.0
    huber_delta: float = 1.0
    dtype: str = "float32"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def validate(self) -> None:
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("batch_size", "train_freq", "gradient_steps", "target_update_interval",
                     "total_steps", "buffer_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_starts < 0:
            raise ValueError("learning_starts must be non-negative")
        if not (0 <= self.exploration_final <= self.exploration_initial <= 1):
            raise ValueError("need 0 <= exploration_final <= exploration_initial <= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_size: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_size), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        k = self.pos
        self.obs[k] = t.obs
        self.next_obs[k] = t.next_obs
        self.actions[k] = t.action
        self.rewards[k] = t.reward
        self.terminals[k] = t.terminal
        self.pos = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, k: int) -> Transition:
        """k-th oldest stored transition."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        j = (self.pos - self.size + k) % self.capacity
        return Transition(self.obs[j].copy(), int(self.actions[j]), float(self.rewards[j]),
                          self.next_obs[j].copy(), bool(self.terminals[j]))

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx],
                     self.next_obs[idx], self.terminals[idx])


def td_targets(batch: Batch, target_net: QNetwork, gamma: float) -> np.ndarray:
    """r + gamma * max_a Q'(s', a), or just r at terminal transitions."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    q_next = target_net.forward(batch.next_obs).max(axis=1).astype(np.float64)
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, q_next)


def linear_epsilon(step: int, cfg: TrainConfig) -> float:
    span = cfg.exploration_fraction * cfg.total_steps
    frac = 1.0 if span <= 0 else min(step / span, 1.0)
    return cfg.exploration_initial + frac * (cfg.exploration_final - cfg.exploration_initial)


def select_action(qvalues: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(len(qvalues)))
    return int(np.argmax(qvalues))


class Learner:
    """Online and target network plus optimizer state."""

    def __init__(self, net: QNetwork, cfg: TrainConfig):
        self.net = net
        self.target = net.copy()
        self.cfg = cfg
        self.opt = Adam(net.params.size, lr=cfg.learning_rate, dtype=net.dtype)
        self.n_updates = 0

    def sync_target(self) -> None:
        self.target.load_params(self.net)


def train_step(learner: Learner, buffer: ReplayBuffer, rng: np.random.Generator) -> float | None:
    """One gradient step on a uniform batch; None until the buffer holds learning_starts."""
    cfg = learner.cfg
    if len(buffer) < max(cfg.learning_starts, 1):
        return None
    batch = buffer.sample(cfg.batch_size, rng)
    y = td_targets(batch, learner.target, cfg.gamma)
    net = learner.net
    q, acts = net.forward_cached(batch.obs)
    rows = np.arange(len(y))
    diff = q[rows, batch.actions].astype(np.float64) - y
    loss, dq_sel = huber(diff, cfg.huber_delta)
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = dq_sel
    grad = net.backward(acts, dq)
    norm = math.sqrt(float(np.dot(grad, grad)))
    if cfg.max_grad_norm and norm > cfg.max_grad_norm:
        grad *= cfg.max_grad_norm / (norm + 1e-6)
    learner.opt.step(net.params, grad)
    learner.n_updates += 1
    if learner.n_updates % cfg.target_update_interval == 0:
        learner.sync_target()
    return loss


# --- training loop -------------------------------------------------------------

class StepOutcome(NamedTuple):
    obs: np.ndarray
    reward: float
    terminal: bool
    truncated: bool


def _outcome(res: Any) -> StepOutcome:
    if isinstance(res, StepOutcome):
        return res
    reward = res.reward.total if hasattr(res.reward, "total") else float(res.reward)
    return StepOutcome(res.obs, reward, bool(res.terminal), bool(res.truncated))


@dataclass(frozen=True)
class EpisodeRecord:
    step: int
    episode: int
    ret: float
    loss: float
    epsilon: float


@dataclass
class TrainResult:
    net: QNetwork
    log: list[EpisodeRecord] = field(default_factory=list)

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.log:
                w.writerow([r.step, r.episode, repr(r.ret),
                            "" if math.isnan(r.loss) else repr(r.loss), repr(r.epsilon)])


def seed_streams(seed: int) -> dict[str, np.random.Generator | int]:
    """Independent streams for init, environment, exploration and replay."""
    init, env, explore, replay = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "env": int(env.generate_state(1)[0]),
        "explore": np.random.default_rng(explore),
        "replay": np.random.default_rng(replay),
    }


def train(env_factory: Callable[[int], Any], cfg: TrainConfig, seed: int,
          progress: Callable[[int, EpisodeRecord], None] | None = None) -> TrainResult:
    """Run ``cfg.total_steps`` environment steps of DQN.

    ``env_factory(seed)`` returns an environment with ``reset() -> obs`` and
    ``step(a)`` returning a :class:`StepOutcome` or an object with ``obs``,
    ``reward`` (number or breakdown with ``total``), ``terminal`` and
    ``truncated``. Horizon truncation bootstraps; terminal states do not.
    """
    cfg.validate()
    streams = seed_streams(seed)
    env = env_factory(streams["env"])
    explore, replay = streams["explore"], streams["replay"]
    obs = np.asarray(env.reset())
    dtype = np.dtype(cfg.dtype)
    n_actions = getattr(env, "n_actions", len(Action))
    net = QNetwork((obs.size, *cfg.hidden, n_actions), dtype).init(streams["init"])
    learner = Learner(net, cfg)
    buffer = ReplayBuffer(cfg.buffer_size, obs.size, dtype)
    result = TrainResult(net)

    ep_return, ep_losses, episode = 0.0, [], 0
    for step in range(cfg.total_steps):
        eps = linear_epsilon(step, cfg)
        if step < cfg.learning_starts:
            action = int(explore.integers(n_actions))
        else:
            action = select_action(net.forward(obs), eps, explore)
        out = _outcome(env.step(action))
        buffer.add(Transition(obs, action, out.reward, np.asarray(out.obs), out.terminal))
        ep_return += out.reward
        obs = np.asarray(out.obs)
        if (step + 1) % cfg.train_freq == 0:
            for _ in range(cfg.gradient_steps):
                loss = train_step(learner, buffer, replay)
                if loss is not None:
                    ep_losses.append(loss)
        if out.terminal or out.truncated:
            rec = EpisodeRecord(step + 1, episode, ep_return,
                                float(np.mean(ep_losses)) if ep_losses else math.nan,
                                linear_epsilon(step + 1, cfg))
            result.log.append(rec)
            if progress is not None:
                progress(step + 1, rec)
            episode += 1
            ep_return, ep_losses = 0.0, []
            obs = np.asarray(env.reset())
    return result


def merge_env_factory(config: EnvConfig) -> Callable[[int], MergeEnv]:
    def make(seed: int) -> MergeEnv:
        env = MergeEnv(config)
        env.reseed(seed)
        return env
    return make


# --- evaluation -------------------------------------------------------------------

@dataclass(frozen=True)
class Rollout:
    ret: float
    crashed: bool
    merge: MergeEvent | None
    merge_sender_x: float | None
    merge_merger_x: float | None
    actions: tuple[int, ...]
    sender_actions: tuple[int, ...]
    compliant: bool
    env: MergeEnv | None = field(default=None, compare=False, repr=False)


def rollout(net: QNetwork, config: EnvConfig, assignment: SenderAssignment,
            seed: int, record: bool = False) -> Rollout:
    """Greedy episode for one scenario cell."""
    env = MergeEnv(config, record=True)
    env.reseed(seed)
    obs = env.reset(assignment)
    ret = 0.0
    while not env.done:
        res = env.step(int(np.argmax(net.forward(obs))))
        ret += res.reward.total
        obs = res.obs
    e = env.merge_event
    mx = sx = None
    if e is not None:
        snap = env.history[int(round(e.t_m / config.policy_period))]
        mx, sx = snap.merger.x, snap.sender.x
    return Rollout(ret, env.world.merger.crashed, e, sx, mx,
                   tuple(int(a) for a in env.merger_trace),
                   tuple(int(a) for a in env.sender_trace),
                   env.compliance().compliant, env if record else None)


def scenario_grid(config: EnvConfig) -> list[SenderAssignment]:
    """i_IDLE (no trigger), then every non-IDLE intent at each of its triggers."""
    cells = [SenderAssignment(I_IDLE)]
    for name, intent in CATALOG.items():
        if intent == I_IDLE:
            continue
        cells += [SenderAssignment(intent, float(t)) for t in config.triggers[name]]
    return cells


@dataclass(frozen=True)
class CellStats:
    intent: str
    trigger: float | None
    sharing: bool
    mean: float
    stderr: float
    crash_rate: float
    returns: tuple[float, ...]
    crashed: tuple[bool, ...]


def standard_error(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


def evaluate(nets: Sequence[QNetwork], config: EnvConfig, eval_seed: int = 12345,
             episodes: int = 1) -> list[CellStats]:
    """Greedy returns per scenario cell, aggregated over the given nets (one per seed).

    Each net's cell value is its mean over ``episodes`` rollouts; a seed counts
    as crashed if any of its rollouts crashed.
    """
    out = []
    for a in scenario_grid(config):
        rets, crashes = [], []
        for net in nets:
            rs = [rollout(net, config, a, eval_seed + k) for k in range(episodes)]
            rets.append(float(np.mean([r.ret for r in rs])))
            crashes.append(any(r.crashed for r in rs))
        out.append(CellStats(a.intent.name, a.trigger_x, config.sharing,
                             float(np.mean(rets)), standard_error(rets),
                             100.0 * sum(crashes) / len(crashes), tuple(rets), tuple(crashes)))
    return out
