"""JSON file formats for environments, policies, and isomorphisms.

Env spec files store 0-based dense indices; joint indices flatten
agent-major, row-major. The env fingerprint is a content hash of the
canonical spec JSON and is embedded in policy/isomorphism files so
mismatched pairings fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def env_to_dict(d) -> dict[str, Any]:
    return {
        "format": "zsclab-env-v1",
        "indexing": "0-based dense; joint indices agent-major",
        "n_agents": d.n_agents,
        "n_states": d.n_states,
        "n_actions": list(d.n_actions),
        "n_observations": list(d.n_observations),
        "horizon": d.horizon,
        "transition": d.transition.tolist(),
        "observation": d.observation.tolist(),
        "reward": d.reward.tolist(),
        "initial": d.initial.tolist(),
    }


def env_from_dict(spec: dict[str, Any]):
    from .core import DecPomdp

    return DecPomdp(
        n_agents=int(spec["n_agents"]),
        n_states=int(spec["n_states"]),
        n_actions=tuple(spec["n_actions"]),
        n_observations=tuple(spec["n_observations"]),
        transition=np.array(spec["transition"], dtype=np.float64),
        observation=np.array(spec["observation"], dtype=np.float64),
        reward=np.array(spec["reward"], dtype=np.float64),
        initial=np.array(spec["initial"], dtype=np.float64),
        horizon=int(spec["horizon"]),
    )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def env_fingerprint(d) -> str:
    payload = canonical_json(env_to_dict(d)).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def save_env(d, path) -> None:
    with open(path, "w") as fh:
        json.dump(env_to_dict(d), fh, indent=1)


def load_env(path):
    with open(path) as fh:
        return env_from_dict(json.load(fh))


def policy_to_dict(pi, fingerprint: str | None = None) -> dict[str, Any]:
    from .core import enumerate_ao_histories

    agents = []
    for i in range(pi.n_agents):
        rows = {}
        offsets, _ = pi.layout(i)
        # rows keyed by the serialized AO history (alternating a,o indices)
        row = 0
        for t in range(pi.horizon + 1):
            block = (pi.n_actions[i] * pi.n_observations[i]) ** t
            for rank in range(block):
                ao = _unrank(pi.n_actions[i], pi.n_observations[i], t, rank)
                rows[json.dumps(list(ao))] = pi.tables[i][offsets[t] + rank].tolist()
                row += 1
        entry = {"probs": rows}
        if pi.logits is not None:
            entry["logits"] = pi.logits[i].tolist()
        agents.append(entry)
    return {
        "format": "zsclab-policy-v1",
        "env_fingerprint": fingerprint or pi.env_fingerprint,
        "n_actions": list(pi.n_actions),
        "n_observations": list(pi.n_observations),
        "horizon": pi.horizon,
        "agents": agents,
    }


def _unrank(n_actions: int, n_observations: int, t: int, rank: int) -> tuple[int, ...]:
    pairs = []
    for _ in range(t):
        rank, rem = divmod(rank, n_actions * n_observations)
        pairs.append(divmod(rem, n_observations))
    out: tuple[int, ...] = ()
    for a, o in reversed(pairs):
        out += (a, o)
    return out


def policy_from_dict(spec: dict[str, Any]):
    from .core import TabularPolicy, ao_rank, ao_table_layout

    n_actions = tuple(spec["n_actions"])
    n_observations = tuple(spec["n_observations"])
    horizon = int(spec["horizon"])
    tables = []
    logits = []
    for i, entry in enumerate(spec["agents"]):
        offsets, rows = ao_table_layout(n_actions[i], n_observations[i], horizon)
        tab = np.zeros((rows, n_actions[i]))
        for key, probs in entry["probs"].items():
            ao = tuple(json.loads(key))
            idx = offsets[len(ao) // 2] + ao_rank(n_actions[i], n_observations[i], ao)
            tab[idx] = probs
        tables.append(tab)
        if "logits" in entry:
            logits.append(np.array(entry["logits"], dtype=np.float64))
    return TabularPolicy(
        n_actions,
        n_observations,
        horizon,
        tuple(tables),
        logits=tuple(logits) if len(logits) == len(tables) else None,
        env_fingerprint=spec.get("env_fingerprint"),
    )


def save_policy(pi, path, fingerprint: str | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(policy_to_dict(pi, fingerprint), fh, indent=1)


def load_policy(path):
    with open(path) as fh:
        return policy_from_dict(json.load(fh))


def iso_to_dict(f) -> dict[str, Any]:
    return {
        "format": "zsclab-iso-v1",
        "source_fingerprint": f.source_fingerprint,
        "target_fingerprint": f.target_fingerprint,
        "agent_perm": list(f.agent_perm),
        "state_map": list(f.state_map),
        "action_maps": [list(m) for m in f.action_maps],
        "obs_maps": [list(m) for m in f.obs_maps],
    }


def iso_from_dict(spec: dict[str, Any]):
    from .symmetry import Isomorphism

    return Isomorphism(
        agent_perm=tuple(spec["agent_perm"]),
        state_map=tuple(spec["state_map"]),
        action_maps=tuple(tuple(m) for m in spec["action_maps"]),
        obs_maps=tuple(tuple(m) for m in spec["obs_maps"]),
        source_fingerprint=spec.get("source_fingerprint"),
        target_fingerprint=spec.get("target_fingerprint"),
    )


def save_iso(f, path) -> None:
    with open(path, "w") as fh:
        json.dump(iso_to_dict(f), fh, indent=1)


def load_iso(path):
    with open(path) as fh:
        return iso_from_dict(json.load(fh))
