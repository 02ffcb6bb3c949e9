"""Decision policies for the UAV-BS: Greedy, tabular Q-learning, DQN and
Actor-Critic.

All learners work on the factorized action space: every sub-action head
keeps its own values (or its own softmax), and the joint action is the
tuple of per-head choices.  The learning cores take plain arrays of head
choices so they can be exercised without the simulator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import AgentConfig
from .env import JointAction, U2UEnv
from .nn import (AdamState, Mlp, ReplayBuffer, adam_step, clip_by_global_norm, head_softmax,
                 log_softmax_grad, sgd_step)

log = logging.getLogger(__name__)


def _slices(sizes: Sequence[int]) -> list[slice]:
    out, o = [], 0
    for s in sizes:
        out.append(slice(o, o + int(s)))
        o += int(s)
    return out


@dataclass
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps``, then flat."""
    start: float = 1.0
    end: float = 0.1
    decay_steps: int = 1

    def __call__(self, step: int) -> float:
        if step >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * step / max(self.decay_steps, 1)


def epsilon_greedy(values: np.ndarray, slices: Sequence[slice], heads: Sequence[int], eps: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Per-head epsilon-greedy choice; -1 for heads not in ``heads``."""
    choices = np.full(len(slices), -1, dtype=np.int64)
    for h in heads:
        sl = slices[h]
        if eps > 0 and rng.random() < eps:
            choices[h] = rng.integers(sl.stop - sl.start)
        else:
            choices[h] = int(np.argmax(values[sl]))
    return choices


class Agent:
    """observe -> act -> learn interface used by the harness."""

    kind = "base"
    learns = False

    def set_training_horizon(self, total_steps: int) -> None:
        pass

    def act(self, env: U2UEnv, state: np.ndarray, explore: bool = True) -> JointAction:
        raise NotImplementedError

    def learn(self, state, action: JointAction, reward: float, next_state, env: U2UEnv,
              terminal: bool = False) -> dict | None:
        return None

    def state_dict(self) -> dict:
        return {"kind": self.kind}

    def load_state_dict(self, d: dict) -> None:
        pass


# -- Greedy ------------------------------------------------------------------

class GreedyAgent(Agent):
    """Coordinate ascent on the immediate reward with fading pinned at 0 dB.

    Sub-actions are visited in the order BS move, UE moves, resolutions,
    powers.  Each is set to the candidate with the largest immediate reward
    while the others stay at their current values (hover for moves); ties go
    to the lowest index.
    """

    kind = "greedy"

    def act(self, env, state, explore=True):
        base = env.default_action()
        choice = [base.bs_move, *base.ue_moves, *base.area_resolutions, *base.ue_power_levels]
        sizes = [n for _, n in env.enumerate_subactions()]
        n_ue, n_a = env.n_active_ues, env.n_active_areas

        def build():
            return JointAction(choice[0], tuple(choice[1:1 + n_ue]), tuple(choice[1 + n_ue:1 + n_ue + n_a]),
                               tuple(choice[1 + n_ue + n_a:]))

        for i, size in enumerate(sizes):
            candidates = []
            for c in range(size):
                choice[i] = c
                candidates.append(build())
            values = [m.qoe for m in env.evaluate_batch(candidates)]
            best_val, best_c = -np.inf, 0
            for c, val in enumerate(values):
                if val > best_val:
                    best_val, best_c = val, c
            choice[i] = best_c
        return build()


# -- tabular Q-learning --------------------------------------------------------

class QTable:
    """State key -> concatenated per-head action values (unseen entries are 0)."""

    def __init__(self, head_sizes: Sequence[int], alpha: float = 0.01, gamma: float = 0.8):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self.head_sizes = list(head_sizes)
        self.slices = _slices(head_sizes)
        self.n_outputs = int(sum(head_sizes))
        self.alpha = alpha
        self.gamma = gamma
        self.table: dict = {}

    def values(self, key) -> np.ndarray:
        v = self.table.get(key)
        if v is None:
            v = self.table[key] = np.zeros(self.n_outputs)
        return v

    def peek(self, key) -> np.ndarray:
        v = self.table.get(key)
        return v if v is not None else np.zeros(self.n_outputs)


def q_update(table: QTable, s, choices: Sequence[int], reward: float, s_next,
             heads: Sequence[int] | None = None, terminal: bool = False) -> np.ndarray:
    """Bellman update of every head in ``heads``; returns the updated values of the chosen entries."""
    heads = range(len(table.slices)) if heads is None else heads
    q = table.values(s)
    q_next = table.peek(s_next)
    out = []
    for h in heads:
        sl = table.slices[h]
        boot = 0.0 if terminal else table.gamma * float(q_next[sl].max())
        j = sl.start + int(choices[h])
        q[j] = (1.0 - table.alpha) * q[j] + table.alpha * (reward + boot)
        out.append(q[j])
    return np.array(out)


class TabularQAgent(Agent):
    kind = "tabular"
    learns = True

    def __init__(self, head_sizes, cfg: AgentConfig, explore_rng: np.random.Generator):
        self.q = QTable(head_sizes, cfg.q_lr, cfg.gamma)
        self.schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, 1)
        self.decay_fraction = cfg.eps_decay_fraction
        self.rng = explore_rng
        self.steps = 0

    @staticmethod
    def key(state: np.ndarray):
        # discretized state: every entry but the continuous previous QoE
        return tuple(np.round(state[:-1], 9).tolist())

    def set_training_horizon(self, total_steps):
        self.schedule.decay_steps = max(1, int(self.decay_fraction * total_steps))

    def act(self, env, state, explore=True):
        heads = env.layout.active_heads(env.n_active_areas)
        eps = self.schedule(self.steps) if explore else 0.0
        choices = epsilon_greedy(self.q.peek(self.key(state)), self.q.slices, heads, eps, self.rng)
        return env.layout.to_action(choices, env.n_active_areas)

    def learn(self, state, action, reward, next_state, env, terminal=False):
        choices = env.layout.from_action(action)
        heads = np.flatnonzero(choices >= 0)
        q_update(self.q, self.key(state), choices, reward, self.key(next_state), heads, terminal)
        self.steps += 1
        return None

    def state_dict(self):
        return {"kind": self.kind, "steps": self.steps,
                "table": [[list(k), v.tolist()] for k, v in self.q.table.items()]}

    def load_state_dict(self, d):
        self.steps = d.get("steps", 0)
        self.q.table = {tuple(k): np.array(v) for k, v in d["table"]}


# -- DQN -----------------------------------------------------------------------

class DqnAgent(Agent):
    """Per-head Q network with a periodically synced target network and replay."""

    kind = "dqn"
    learns = True

    def __init__(self, state_dim: int, head_sizes: Sequence[int], cfg: AgentConfig,
                 init_rng: np.random.Generator, explore_rng: np.random.Generator):
        self.cfg = cfg
        self.slices = _slices(head_sizes)
        n_out = int(sum(head_sizes))
        self.online = Mlp([state_dim, *cfg.dqn_hidden, n_out], init_rng)
        self.target = self.online.copy()
        self.adam = AdamState.for_net(self.online, cfg.dqn_lr)
        self.buffer = ReplayBuffer(cfg.replay_capacity, state_dim, len(head_sizes))
        self.schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, 1)
        self.rng = explore_rng
        self.batch_size = cfg.batch_size
        self.gamma = cfg.gamma
        self.steps = 0
        self.learn_steps = 0

    def set_training_horizon(self, total_steps):
        self.schedule.decay_steps = max(1, int(self.cfg.eps_decay_fraction * total_steps))

    def choose(self, state, heads, explore=True) -> np.ndarray:
        q = self.online.forward(state, cache=False)
        eps = self.schedule(self.steps) if explore else 0.0
        return epsilon_greedy(q, self.slices, heads, eps, self.rng)

    def act(self, env, state, explore=True):
        heads = env.layout.active_heads(env.n_active_areas)
        return env.layout.to_action(self.choose(state, heads, explore), env.n_active_areas)

    def remember(self, state, choices, reward, next_state, terminal=False) -> float | None:
        """Store a transition, then run one minibatch update when enough samples exist."""
        self.buffer.push(state, choices, reward, next_state, terminal)
        self.steps += 1
        batch = self.buffer.sample_minibatch(self.batch_size, self.rng)
        if batch is None:
            return None
        return self.dqn_learn(batch)

    def learn(self, state, action, reward, next_state, env, terminal=False):
        loss = self.remember(state, env.layout.from_action(action), reward, next_state, terminal)
        return None if loss is None else {"loss": loss}

    def td_targets(self, rewards, next_states, dones) -> np.ndarray:
        """Per-head targets r + gamma * max_a Q_target(s', a), shape (batch, n_heads)."""
        q_next = self.target.forward(next_states, cache=False)
        boot = np.stack([q_next[:, sl].max(axis=1) for sl in self.slices], axis=1)
        return rewards[:, None] + self.gamma * (~dones)[:, None] * boot

    def dqn_learn(self, batch) -> float:
        states, actions, rewards, next_states, dones = batch
        targets = self.td_targets(rewards, next_states, dones)
        q = self.online.forward(states)
        n = len(states)
        rows = np.arange(n)
        grad = np.zeros_like(q)
        active = actions >= 0
        per_row = np.maximum(active.sum(axis=1), 1)
        loss = 0.0
        for h, sl in enumerate(self.slices):
            m = active[:, h]
            if not m.any():
                continue
            cols = sl.start + np.where(m, actions[:, h], 0)
            err = np.where(m, q[rows, cols] - targets[:, h], 0.0)
            # 0.5 * squared error, averaged over the heads of each sample and the batch
            grad[rows, cols] += err / (per_row * n)
            loss += float(np.sum(0.5 * err ** 2 / per_row)) / n
        grads = clip_by_global_norm(self.online.backward(grad), self.cfg.grad_clip)
        adam_step(self.online, self.adam, grads)
        self.learn_steps += 1
        if self.learn_steps % self.cfg.target_sync == 0:
            self.target.load_from(self.online)
        return loss

    def state_dict(self):
        return {"kind": self.kind, "steps": self.steps, "learn_steps": self.learn_steps,
                "online": self.online.to_dict(), "target": self.target.to_dict()}

    def load_state_dict(self, d):
        self.online = Mlp.from_dict(d["online"])
        self.target = Mlp.from_dict(d["target"])
        self.adam = AdamState.for_net(self.online, self.cfg.dqn_lr)
        self.steps = d.get("steps", 0)
        self.learn_steps = d.get("learn_steps", 0)


# -- Actor-Critic --------------------------------------------------------------

class AcAgent(Agent):
    """On-policy actor (one softmax per head) and state-value critic."""

    kind = "ac"
    learns = True

    def __init__(self, state_dim: int, head_sizes: Sequence[int], cfg: AgentConfig,
                 init_rng: np.random.Generator, explore_rng: np.random.Generator):
        self.cfg = cfg
        self.slices = _slices(head_sizes)
        n_out = int(sum(head_sizes))
        self.actor = Mlp([state_dim, *cfg.actor_hidden, n_out], init_rng)
        if cfg.linear_critic:
            self.critic = Mlp([state_dim, 1], init_rng, bias=False)
            self.critic.W[0][...] = 0.0
        else:
            self.critic = Mlp([state_dim, *cfg.critic_hidden, 1], init_rng)
        self.gamma = cfg.gamma
        self.rng = explore_rng
        self.steps = 0

    def policy(self, state) -> np.ndarray:
        return head_softmax(self.actor.forward(state, cache=False), self.slices)

    def choose(self, state, heads, explore=True) -> np.ndarray:
        probs = self.policy(state)
        choices = np.full(len(self.slices), -1, dtype=np.int64)
        for h in heads:
            p = probs[self.slices[h]]
            if explore:
                choices[h] = self.rng.choice(len(p), p=p / p.sum())
            else:
                choices[h] = int(np.argmax(p))
        return choices

    def act(self, env, state, explore=True):
        heads = env.layout.active_heads(env.n_active_areas)
        return env.layout.to_action(self.choose(state, heads, explore), env.n_active_areas)

    def value(self, state) -> float:
        return float(self.critic.forward(state, cache=False)[0])

    def ac_learn(self, state, choices, reward, next_state, heads=None,
                 terminal: bool = False) -> tuple[float, float]:
        """One TD(0) actor-critic update; returns (td_error, actor_loss)."""
        heads = np.flatnonzero(np.asarray(choices) >= 0) if heads is None else heads
        v_next = 0.0 if terminal else float(self.critic.forward(next_state, cache=False)[0])
        v = float(self.critic.forward(state)[0])
        delta = reward + self.gamma * (v_next - v)
        # critic: w += alpha_c * delta * grad V(s)
        g_v = self.critic.backward(np.ones(1))
        sgd_step(self.critic, clip_by_global_norm([-delta * g for g in g_v], self.cfg.grad_clip),
                 self.cfg.critic_lr)
        # actor: theta += alpha_a * delta * grad ln pi(a|s)
        logits = self.actor.forward(state)
        probs = head_softmax(logits, self.slices)
        logp = float(sum(np.log(probs[self.slices[h].start + int(choices[h])]) for h in heads))
        g_logits = log_softmax_grad(probs, self.slices, choices, heads)
        g_pi = self.actor.backward(g_logits)
        sgd_step(self.actor, clip_by_global_norm([-delta * g for g in g_pi], self.cfg.grad_clip),
                 self.cfg.actor_lr)
        self.steps += 1
        return delta, -delta * logp

    def learn(self, state, action, reward, next_state, env, terminal=False):
        delta, loss = self.ac_learn(state, env.layout.from_action(action), reward, next_state,
                                    terminal=terminal)
        return {"td_error": delta, "actor_loss": loss}

    def state_dict(self):
        return {"kind": self.kind, "steps": self.steps, "actor": self.actor.to_dict(),
                "critic": self.critic.to_dict()}

    def load_state_dict(self, d):
        self.actor = Mlp.from_dict(d["actor"])
        self.critic = Mlp.from_dict(d["critic"])
        self.steps = d.get("steps", 0)


def make_agent(kind: str, env: U2UEnv, cfg: AgentConfig, seed: int) -> Agent:
    """Build an agent whose initialization and exploration streams derive from ``seed``."""
    init_ss, explore_ss = np.random.SeedSequence([int(seed), 0xA6E]).spawn(2)
    init_rng, explore_rng = np.random.default_rng(init_ss), np.random.default_rng(explore_ss)
    sizes = env.layout.sizes.tolist()
    if kind == "greedy":
        return GreedyAgent()
    if kind == "tabular":
        return TabularQAgent(sizes, cfg, explore_rng)
    if kind == "dqn":
        return DqnAgent(env.state_size, sizes, cfg, init_rng, explore_rng)
    if kind == "ac":
        return AcAgent(env.state_size, sizes, cfg, init_rng, explore_rng)
    raise ValueError(f"unknown agent kind {kind!r}")
