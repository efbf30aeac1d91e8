"""Hash-based tie-breaking between mutually incompatible trained policies.

A frozen random network maps label-erased episode records to reals. The
tie-breaking value of a policy is the expected hash of the normal form of a
random episode, where the episode is drawn under random automorphism
permutations and the hash is averaged over every agent-slot permutation.
Equivalent policies get equal values; non-equivalent ones almost surely do
not, which makes the maximizer a consistent cross-run selection rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    DecPomdp,
    TabularPolicy,
    episode_draw_count,
    history_distribution,
    sample_episode,
    sample_episode_from_uniforms,
)
from .otherplay import apply_profile, symmetrize
from .symmetry import (
    Isomorphism,
    NormalForm,
    enumerate_automorphisms,
    normal_form,
    permute_agents,
    relabel,
)

ENCODE_FIELDS = ("states", "actions", "observations", "rewards")


@dataclass(frozen=True)
class HashNetwork:
    """Fixed random feedforward map: 4 hidden layers of width 32, rectified
    linear units, scalar output; weights and biases drawn uniformly from
    [-1, 1] at a stated seed and never trained."""

    seed: int
    input_width: int
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        out = h @ self.weights[-1] + self.biases[-1]
        return out[:, 0]


def init_hash_network(seed: int, input_width: int, hidden: int = 32, depth: int = 4) -> HashNetwork:
    if input_width < 1:
        raise ValueError("input_width must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    dims = [input_width] + [hidden] * depth + [1]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-1.0, 1.0, size=fan_out))
    return HashNetwork(seed, input_width, tuple(weights), tuple(biases))


@dataclass(frozen=True)
class TieBreakConfig:
    n_samples: int = 2048
    encode_fields: tuple[str, ...] = ("actions", "rewards")
    include_env_code: bool = False
    hash_seed: int = 0
    exact_mode: bool = False

    def __post_init__(self):
        for f in self.encode_fields:
            if f not in ENCODE_FIELDS:
                raise ValueError(f"unknown encode field {f!r}")
        if not self.exact_mode and self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def encoded_width(d: DecPomdp, cfg: TieBreakConfig) -> int:
    """Input width of the hash network for this environment and config.

    Layout per step t = 0..T: state code (if selected), observation codes
    agent-major (if selected, t >= 1 only), action codes agent-major (if
    selected), reward (if selected). Env-code features, when enabled, are the
    flattened tables of the canonically relabeled model, appended at the end.
    """
    n, T = d.n_agents, d.horizon
    width = 0
    if "states" in cfg.encode_fields:
        width += T + 1
    if "observations" in cfg.encode_fields:
        width += T * n
    if "actions" in cfg.encode_fields:
        width += (T + 1) * n
    if "rewards" in cfg.encode_fields:
        width += T + 1
    if cfg.include_env_code:
        width += _env_code_width(d)
    return max(width, 1)


def _env_code_width(d: DecPomdp) -> int:
    return (
        d.transition.size + d.observation.size + d.reward.size + d.initial.size
    )


def encode_normal_form(
    nf: NormalForm, cfg: TieBreakConfig, env_code: np.ndarray | None = None
) -> np.ndarray:
    out: list[float] = []
    T = len(nf.states) - 1
    for t in range(T + 1):
        if "states" in cfg.encode_fields:
            out.append(float(nf.states[t]))
        if "observations" in cfg.encode_fields and t >= 1:
            out.extend(float(x) for x in nf.observations[t - 1])
        if "actions" in cfg.encode_fields:
            out.extend(float(x) for x in nf.actions[t])
        if "rewards" in cfg.encode_fields:
            out.append(float(nf.rewards[t]))
    if cfg.include_env_code:
        if env_code is None:
            raise ValueError("config requests env code features but none were given")
        out.extend(env_code.tolist())
    if not out:
        out = [0.0]
    return np.array(out, dtype=np.float64)


def hash_history(
    net: HashNetwork,
    nf: NormalForm,
    agent_perm: Sequence[int],
    cfg: TieBreakConfig,
    env_code: np.ndarray | None = None,
) -> float:
    vec = encode_normal_form(permute_agents(agent_perm, nf), cfg, env_code)
    if vec.size != net.input_width:
        raise ValueError(f"encoded width {vec.size} does not match network {net.input_width}")
    return float(net.forward(vec)[0])


class _EnvCoder:
    """Canonical relabeled-model features for the normal form of a history.

    The labeling sends every symbol to its first-occurrence rank (per track),
    extends to unseen symbols in increasing order, and permutes agent slots
    by the requested permutation; the features are the relabeled tables.
    """

    def __init__(self, d: DecPomdp):
        self.d = d
        self.cache: dict[tuple, np.ndarray] = {}

    def _extend(self, codes: dict[int, int], size: int) -> tuple[int, ...]:
        out = [-1] * size
        for sym, code in codes.items():
            out[sym] = code
        nxt = len(codes)
        for sym in range(size):
            if out[sym] < 0:
                out[sym] = nxt
                nxt += 1
        return tuple(out)

    def code(self, tau, agent_perm: Sequence[int]) -> np.ndarray:
        d = self.d
        n = d.n_agents
        state_codes: dict[int, int] = {}
        act_codes: list[dict[int, int]] = [dict() for _ in range(n)]
        obs_codes: list[dict[int, int]] = [dict() for _ in range(n)]
        for t in range(tau.horizon + 1):
            state_codes.setdefault(tau.states[t], len(state_codes))
            if t >= 1:
                for i in range(n):
                    obs_codes[i].setdefault(tau.observations[t - 1][i], len(obs_codes[i]))
            for i in range(n):
                act_codes[i].setdefault(tau.actions[t][i], len(act_codes[i]))
        f = Isomorphism(
            agent_perm=tuple(agent_perm),
            state_map=self._extend(state_codes, d.n_states),
            action_maps=tuple(
                self._extend(act_codes[i], d.n_actions[i]) for i in range(n)
            ),
            obs_maps=tuple(
                self._extend(obs_codes[i], d.n_observations[i]) for i in range(n)
            ),
        )
        key = f.sort_key()
        hit = self.cache.get(key)
        if hit is None:
            e = relabel(d, f)
            hit = np.concatenate(
                [
                    e.transition.reshape(-1),
                    e.observation.reshape(-1),
                    e.reward.reshape(-1),
                    e.initial.reshape(-1),
                ]
            )
            self.cache[key] = hit
        return hit


def tie_break_value(
    d: DecPomdp,
    pi: TabularPolicy,
    net: HashNetwork,
    cfg: TieBreakConfig,
    seed: int = 0,
) -> float:
    if cfg.exact_mode:
        return _tie_break_exact(d, pi, net, cfg)
    return tie_break_value_mc(d, pi, net, cfg, seed)[0]


def _tie_break_exact(d: DecPomdp, pi: TabularPolicy, net: HashNetwork, cfg: TieBreakConfig) -> float:
    psi = symmetrize(d, pi).policy
    dist = history_distribution(d, psi)
    perms = list(itertools.permutations(range(d.n_agents)))
    coder = _EnvCoder(d) if cfg.include_env_code else None
    vectors = []
    weights = []
    for tau, p in sorted(dist.items(), key=lambda kv: (kv[0].states, kv[0].actions, kv[0].observations)):
        nf = normal_form(tau)
        for sigma in perms:
            env_code = coder.code(tau, sigma) if coder is not None else None
            vectors.append(encode_normal_form(permute_agents(sigma, nf), cfg, env_code))
            weights.append(p / len(perms))
    values = net.forward(np.stack(vectors))
    return float(np.dot(values, np.array(weights)))


def tie_break_value_mc(
    d: DecPomdp,
    pi: TabularPolicy,
    net: HashNetwork,
    cfg: TieBreakConfig,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo tie-breaking value and its standard error."""
    auts = enumerate_automorphisms(d)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    perms = list(itertools.permutations(range(d.n_agents)))
    coder = _EnvCoder(d) if cfg.include_env_code else None
    assembled: dict[tuple[int, ...], TabularPolicy] = {}
    total = 0.0
    total_sq = 0.0
    K = cfg.n_samples
    for _ in range(K):
        key = tuple(int(x) for x in rng.integers(0, len(auts), size=d.n_agents))
        pol = assembled.get(key)
        if pol is None:
            pol = apply_profile([auts[k] for k in key], pi)
            assembled[key] = pol
        tau = sample_episode(d, pol, rng)
        nf = normal_form(tau)
        vecs = []
        for sigma in perms:
            env_code = coder.code(tau, sigma) if coder is not None else None
            vecs.append(encode_normal_form(permute_agents(sigma, nf), cfg, env_code))
        v = float(net.forward(np.stack(vecs)).mean())
        total += v
        total_sq += v * v
    mean = total / K
    if K == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - K * mean * mean) / (K - 1))
    return mean, math.sqrt(var / K)


def tie_break_gap_mc(
    d: DecPomdp,
    pi_a: TabularPolicy,
    pi_b: TabularPolicy,
    net: HashNetwork,
    cfg: TieBreakConfig,
    seed: int = 0,
) -> tuple[float, float]:
    """Paired Monte-Carlo estimate of chi(pi_a) - chi(pi_b) and its std error.

    Both policies consume the same automorphism draws and episode uniforms,
    so noise they share cancels and the standard error reflects only genuine
    differences between the induced history distributions.
    """
    auts = enumerate_automorphisms(d)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    perms = list(itertools.permutations(range(d.n_agents)))
    coder = _EnvCoder(d) if cfg.include_env_code else None
    n_draws = episode_draw_count(d)
    assembled: dict[tuple, TabularPolicy] = {}

    def value_of(pol_key, base_policy, profile_key, uniforms):
        pol = assembled.get((pol_key, profile_key))
        if pol is None:
            pol = apply_profile([auts[k] for k in profile_key], base_policy)
            assembled[(pol_key, profile_key)] = pol
        tau = sample_episode_from_uniforms(d, pol, uniforms)
        nf = normal_form(tau)
        vecs = []
        for sigma in perms:
            env_code = coder.code(tau, sigma) if coder is not None else None
            vecs.append(encode_normal_form(permute_agents(sigma, nf), cfg, env_code))
        return float(net.forward(np.stack(vecs)).mean())

    total = 0.0
    total_sq = 0.0
    K = cfg.n_samples
    for _ in range(K):
        profile_key = tuple(int(x) for x in rng.integers(0, len(auts), size=d.n_agents))
        uniforms = rng.random(n_draws)
        diff = value_of("a", pi_a, profile_key, uniforms) - value_of(
            "b", pi_b, profile_key, uniforms
        )
        total += diff
        total_sq += diff * diff
    mean = total / K
    if K == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - K * mean * mean) / (K - 1))
    return mean, math.sqrt(var / K)


@dataclass
class TieBreakSelection:
    chosen_index: int
    chosen_policy: TabularPolicy
    policies: list[TabularPolicy]
    values: list[float]


def op_with_tiebreak(
    d: DecPomdp,
    trainer: Callable[[DecPomdp, int], TabularPolicy],
    net: HashNetwork,
    n_seeds: int,
    cfg: TieBreakConfig,
    seed: int = 0,
) -> TieBreakSelection:
    """Train n_seeds candidate policies and keep the one with the highest
    tie-breaking value (ties resolved toward the lowest candidate index).
    With a single seed this degenerates to plain other-play training."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    root = np.random.SeedSequence(entropy=seed)
    train_seeds = [int(s.generate_state(1)[0]) for s in root.spawn(n_seeds)]
    policies = [trainer(d, s) for s in train_seeds]
    if n_seeds == 1:
        return TieBreakSelection(0, policies[0], policies, [math.nan])
    values = []
    for idx, pol in enumerate(policies):
        values.append(tie_break_value(d, pol, net, cfg, seed=train_seeds[idx]))
    best = 0
    for idx in range(1, n_seeds):
        if values[idx] > values[best]:
            best = idx
    return TieBreakSelection(best, policies[best], policies, values)
