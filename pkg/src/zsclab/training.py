"""Policy-gradient training on the other-play objective.

One update samples a batch of episodes, each under a fresh uniformly random
automorphism profile, and takes an RMSProp step on the entropy-regularized
score-function loss. Tabular softmax policies over full action-observation
histories stand in for function approximation; the games here are small
enough that every history gets its own logits row.

The per-episode work runs in a compiled kernel when available
(zsclab._kernels); set ZSCLAB_FORCE_PY=1 to force the pure-Python twin.
Both produce bit-identical results for the same seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DecPomdp,
    History,
    ResourceCapError,
    TabularPolicy,
    ao_table_layout,
    softmax_rows,
)
from .otherplay import all_profiles, exact_evaluator
from .symmetry import Isomorphism, agent_orbits, enumerate_automorphisms

if os.environ.get("ZSCLAB_FORCE_PY"):
    from . import _kernels_py as _backend
else:
    try:
        from . import _kernels as _backend  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _backend


def backend_name() -> str:
    return _backend.BACKEND


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    n_steps: int
    batch_episodes: int = 32
    learning_rate: float = 5e-4
    rms_alpha: float = 0.99
    rms_epsilon: float = 1e-5
    entropy_coeff: float = 0.5
    share_weights: bool | None = None  # None: share iff all agents share one orbit
    seed: int = 0
    optimizer: str = "rmsprop"  # or "sgd"
    eval_every: int = 100

    def __post_init__(self):
        if self.n_steps < 1 or self.batch_episodes < 1:
            raise ValueError("n_steps and batch_episodes must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.entropy_coeff < 0:
            raise ValueError("entropy_coeff must be >= 0")
        if self.optimizer not in ("rmsprop", "sgd"):
            raise ValueError("optimizer must be 'rmsprop' or 'sgd'")


@dataclass
class PolicyParams:
    """Flat logits plus the layout that maps (agent, row) into them."""

    n_actions: tuple[int, ...]
    n_observations: tuple[int, ...]
    horizon: int
    shared: bool
    logits: np.ndarray

    @classmethod
    def zeros(cls, d: DecPomdp, shared: bool) -> "PolicyParams":
        if shared and len(set(zip(d.n_actions, d.n_observations))) != 1:
            raise ValueError("weight sharing requires identical per-agent shapes")
        sizes = []
        for i in range(d.n_agents):
            _, rows = ao_table_layout(d.n_actions[i], d.n_observations[i], d.horizon)
            sizes.append(rows * d.n_actions[i])
        n = sizes[0] if shared else sum(sizes)
        return cls(d.n_actions, d.n_observations, d.horizon, shared, np.zeros(n))

    @property
    def n_agents(self) -> int:
        return len(self.n_actions)

    def agent_offsets(self) -> np.ndarray:
        if self.shared:
            return np.zeros(self.n_agents, dtype=np.int64)
        out = np.zeros(self.n_agents, dtype=np.int64)
        acc = 0
        for i in range(self.n_agents):
            out[i] = acc
            _, rows = ao_table_layout(self.n_actions[i], self.n_observations[i], self.horizon)
            acc += rows * self.n_actions[i]
        return out

    def table(self, agent: int) -> np.ndarray:
        _, rows = ao_table_layout(
            self.n_actions[agent], self.n_observations[agent], self.horizon
        )
        off = int(self.agent_offsets()[agent])
        return self.logits[off : off + rows * self.n_actions[agent]].reshape(
            rows, self.n_actions[agent]
        )

    def to_policy(self, env_fingerprint: str | None = None) -> TabularPolicy:
        tables = []
        logits = []
        for i in range(self.n_agents):
            z = self.table(i).copy()
            logits.append(z)
            tables.append(softmax_rows(z))
        return TabularPolicy(
            self.n_actions,
            self.n_observations,
            self.horizon,
            tuple(tables),
            logits=tuple(logits),
            env_fingerprint=env_fingerprint,
        )


def resolve_share_weights(d: DecPomdp, cfg: TrainConfig) -> bool:
    if cfg.share_weights is not None:
        return cfg.share_weights
    if len(set(zip(d.n_actions, d.n_observations))) != 1:
        return False
    return len(agent_orbits(d)) == 1


@dataclass
class CurvePoint:
    update: int
    mc_op_estimate: float
    entropy: float
    exact_op_value: float | None = None


@dataclass
class TrainResult:
    policy: TabularPolicy
    params: PolicyParams
    curve: list[CurvePoint]
    env_steps: int


class _Plan:
    """Precomputed kernel arguments for one (env, sharing) combination."""

    def __init__(self, d: DecPomdp, shared: bool):
        self.d = d
        auts = enumerate_automorphisms(d)
        self.n_auts = len(auts)
        n, T = d.n_agents, d.horizon
        self.level_offset = np.zeros((n, T + 1), dtype=np.int64)
        sizes = []
        for i in range(n):
            offsets, rows = ao_table_layout(d.n_actions[i], d.n_observations[i], T)
            self.level_offset[i] = offsets
            sizes.append(rows * d.n_actions[i])
        if shared:
            self.agent_offset = np.zeros(n, dtype=np.int64)
        else:
            self.agent_offset = np.array(
                [sum(sizes[:i]) for i in range(n)], dtype=np.int64
            )
        self.n_act = np.array(d.n_actions, dtype=np.int64)
        self.n_obs = np.array(d.n_observations, dtype=np.int64)
        stride = np.ones(n, dtype=np.int64)
        for i in range(n - 2, -1, -1):
            stride[i] = stride[i + 1] * d.n_actions[i + 1]
        self.act_stride = stride
        odiv = np.ones(n, dtype=np.int64)
        for i in range(n - 2, -1, -1):
            odiv[i] = odiv[i + 1] * d.n_observations[i + 1]
        self.obs_div = odiv
        self.initial_cdf = np.cumsum(d.initial)
        self.trans_cdf = np.ascontiguousarray(np.cumsum(d.transition, axis=2))
        self.obs_cdf = np.ascontiguousarray(np.cumsum(d.observation, axis=2))
        self.reward = d.reward
        maxA, maxO = max(d.n_actions), max(d.n_observations)
        G = len(auts)
        self.src_agent = np.zeros((G, n), dtype=np.int64)
        self.act_fwd = np.zeros((G, n, maxA), dtype=np.int64)
        self.obs_inv = np.zeros((G, n, maxO), dtype=np.int64)
        for gi, g in enumerate(auts):
            for i in range(n):
                self.src_agent[gi, i] = g.agent_perm.index(i)
            for j in range(n):
                for b in range(d.n_actions[j]):
                    self.act_fwd[gi, j, b] = g.action_maps[j][b]
                for o in range(d.n_observations[j]):
                    self.obs_inv[gi, j, g.obs_maps[j][o]] = o
        self.n_draws = 1 + (T + 1) * n + T * 2


def run_batch(
    plan: _Plan,
    params: PolicyParams,
    profiles: np.ndarray,
    uniforms: np.ndarray,
    entropy_coeff: float,
) -> tuple[np.ndarray, float, float, float]:
    """One batch through the selected backend; returns (grad, loss, mean return, mean entropy)."""
    K = profiles.shape[0]
    d = plan.d
    grad = np.zeros_like(params.logits)
    stats = np.zeros(3)
    scale = 1.0 / (K * (d.horizon + 1) * d.n_agents)
    _backend.accumulate_batch(
        params.logits,
        grad,
        plan.agent_offset,
        plan.level_offset,
        plan.n_act,
        plan.n_obs,
        plan.act_stride,
        plan.obs_div,
        plan.initial_cdf,
        plan.trans_cdf,
        plan.obs_cdf,
        plan.reward,
        plan.src_agent,
        plan.act_fwd,
        plan.obs_inv,
        profiles,
        uniforms,
        d.horizon,
        entropy_coeff,
        scale,
        stats,
    )
    loss = -scale * stats[0]
    return grad, float(loss), float(stats[1] / K), float(stats[2] * scale)


def train_op(d: DecPomdp, cfg: TrainConfig) -> TrainResult:
    """Run cfg.n_steps policy-gradient updates; deterministic in cfg.seed."""
    shared = resolve_share_weights(d, cfg)
    plan = _Plan(d, shared)
    params = PolicyParams.zeros(d, shared)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=cfg.seed)))
    sq_avg = np.zeros_like(params.logits)
    curve: list[CurvePoint] = []
    try:
        evaluator = exact_evaluator(d)
    except ResourceCapError:
        evaluator = None
    K = cfg.batch_episodes
    for step in range(cfg.n_steps):
        profiles = rng.integers(0, plan.n_auts, size=(K, d.n_agents), dtype=np.int64)
        uniforms = rng.random((K, plan.n_draws))
        grad, loss, mean_ret, mean_ent = run_batch(
            plan, params, profiles, uniforms, cfg.entropy_coeff
        )
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at update {step}")
        if cfg.optimizer == "rmsprop":
            sq_avg = cfg.rms_alpha * sq_avg + (1.0 - cfg.rms_alpha) * grad * grad
            params.logits -= cfg.learning_rate * grad / (np.sqrt(sq_avg) + cfg.rms_epsilon)
        else:
            params.logits -= cfg.learning_rate * grad
        point = CurvePoint(step, mean_ret, mean_ent)
        if evaluator is not None and (step % cfg.eval_every == 0 or step == cfg.n_steps - 1):
            point.exact_op_value = exact_op_value_of_params(d, params, evaluator)
        curve.append(point)
    policy = params.to_policy(env_fingerprint=d.fingerprint)
    return TrainResult(policy, params, curve, cfg.n_steps * K * (d.horizon + 1))


def _flat_probs_unshared(params: PolicyParams) -> np.ndarray:
    return np.concatenate(
        [softmax_rows(params.table(i)).reshape(-1) for i in range(params.n_agents)]
    )


def exact_op_value_of_params(d, params: PolicyParams, evaluator=None) -> float:
    ev = evaluator if evaluator is not None else exact_evaluator(d)
    flat = _flat_probs_unshared(params)
    profiles = all_profiles(d)
    return sum(ev.value(flat, ev.profile_entries(p)) for p in profiles) / len(profiles)


# ---------------------------------------------------------------------------
# Reference loss/gradient on explicit (profile, episode) batches, used by the
# finite-difference and exhaustive-expectation checks.
# ---------------------------------------------------------------------------


def loss_and_grad(
    d: DecPomdp,
    params: PolicyParams,
    batch: Sequence[tuple[Sequence[Isomorphism], History]],
    entropy_coeff: float = 0.5,
) -> tuple[float, np.ndarray]:
    """Entropy-augmented score-function loss and its exact logits gradient.

    The batch holds (automorphism profile, episode) pairs where the episode
    was sampled under the profile-permuted policy; log-probabilities are read
    at the pulled-back indices.
    """
    T, n = d.horizon, d.n_agents
    scale = 1.0 / (len(batch) * (T + 1) * n)
    loss_raw = 0.0
    grad = np.zeros_like(params.logits)
    offsets = params.agent_offsets()
    for profile, tau in batch:
        returns = np.cumsum(np.array(tau.rewards)[::-1])[::-1]
        for t in range(T + 1):
            for i in range(n):
                g_inv = profile[i].invert()
                j = g_inv.agent_perm[i]
                _, ao = g_inv.map_ao(i, tau.ao_prefix(i, t))
                b = g_inv.action_maps[i][tau.actions[t][i]]
                row = _row_of(params, j, ao)
                start = int(offsets[j]) + row * params.n_actions[j]
                z = params.logits[start : start + params.n_actions[j]]
                p = softmax_rows(z)
                ent = float(-(p[p > 0] * np.log(p[p > 0])).sum())
                loss_raw += returns[t] * math.log(p[b]) + entropy_coeff * ent
                delta = np.zeros_like(p)
                delta[b] = 1.0
                term = returns[t] * (delta - p)
                with np.errstate(divide="ignore", invalid="ignore"):
                    logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
                term = term - entropy_coeff * p * (logp + ent)
                grad[start : start + params.n_actions[j]] += -scale * term
    return -scale * loss_raw, grad


def _row_of(params: PolicyParams, agent: int, ao) -> int:
    from .core import ao_rank

    offsets, _ = ao_table_layout(
        params.n_actions[agent], params.n_observations[agent], params.horizon
    )
    return offsets[len(ao) // 2] + ao_rank(
        params.n_actions[agent], params.n_observations[agent], ao
    )


def return_term_grad(
    d: DecPomdp,
    params: PolicyParams,
    batch: Sequence[tuple[Sequence[Isomorphism], History]],
) -> np.ndarray:
    """Gradient of the return term alone (entropy coefficient zero)."""
    return loss_and_grad(d, params, batch, entropy_coeff=0.0)[1]


def exact_op_grad(d: DecPomdp, params: PolicyParams) -> np.ndarray:
    """Analytic gradient of the exact OP value with respect to the logits.

    Differentiates the closed-form history-distribution expression: for each
    automorphism profile and each history, the probability is a product of
    policy entries; leave-one-out products make the derivative robust at
    zero-probability entries.
    """
    ev = exact_evaluator(d)
    profiles = all_profiles(d)
    w = 1.0 / len(profiles)
    n = d.n_agents
    probs_tables = [softmax_rows(params.table(i)) for i in range(n)]
    flat = np.concatenate([t.reshape(-1) for t in probs_tables])
    grad_tables = [np.zeros_like(t) for t in probs_tables]
    base = ev.env_weight * ev.reward_sum
    for profile in profiles:
        entries = ev.profile_entries(profile)
        pv = flat[entries]  # (H, slots)
        slots = pv.shape[1]
        prefix = np.ones_like(pv)
        suffix = np.ones_like(pv)
        for k in range(1, slots):
            prefix[:, k] = prefix[:, k - 1] * pv[:, k - 1]
        for k in range(slots - 2, -1, -1):
            suffix[:, k] = suffix[:, k + 1] * pv[:, k + 1]
        loo = prefix * suffix
        for k in range(slots):
            i = k % n
            j = profile[i].invert().agent_perm[i]
            pos = entries[:, k] - ev.table_offsets[j]
            rows = pos // d.n_actions[j]
            bs = pos % d.n_actions[j]
            coeff = w * base * loo[:, k]
            rowp = probs_tables[j][rows]
            pb = pv[:, k]
            np.add.at(grad_tables[j], rows, -(coeff * pb)[:, None] * rowp)
            np.add.at(grad_tables[j], (rows, bs), coeff * pb)
    if params.shared:
        total = grad_tables[0]
        for t in grad_tables[1:]:
            total = total + t
        return total.reshape(-1)
    return np.concatenate([t.reshape(-1) for t in grad_tables])


def exhaustive_batch(d: DecPomdp, params: PolicyParams):
    """Every (profile, history) pair with its joint probability.

    Yields (profile, history, probability) where probability already includes
    the uniform 1/|profiles| weight; used to take exact expectations of the
    Monte-Carlo gradient estimator.
    """
    from .core import history_distribution
    from .otherplay import apply_profile

    profiles = all_profiles(d)
    pi = params.to_policy()
    for profile in profiles:
        permuted = apply_profile(profile, pi)
        for h, p in history_distribution(d, permuted).items():
            yield profile, h, p / len(profiles)
