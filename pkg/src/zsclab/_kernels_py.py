"""Pure-Python batch kernel for policy-gradient training.

Reference implementation of the hot loop; zsclab._kernels is the compiled
twin. Both consume the same pre-drawn uniforms in the same order and apply
floating-point operations in the same sequence, so results are bit-identical
across backends. Keep any change here in lockstep with _kernels.pyx.
"""

from __future__ import annotations

import math

BACKEND = "python"


def accumulate_batch(
    params,
    grad,
    agent_offset,
    level_offset,
    n_act,
    n_obs,
    act_stride,
    obs_div,
    initial_cdf,
    trans_cdf,
    obs_cdf,
    reward,
    src_agent,
    act_fwd,
    obs_inv,
    profiles,
    uniforms,
    horizon,
    alpha,
    scale,
    stats,
):
    """Sample one batch of permuted episodes and accumulate the loss gradient.

    grad receives the gradient of the normalized loss
    -scale * sum_k sum_t (G_t * sum_i log pi + alpha * sum_i entropy);
    stats receives [raw loss sum, return sum, entropy sum].
    """
    K = profiles.shape[0]
    N = src_agent.shape[1]
    T = horizon
    loss_sum = 0.0
    return_sum = 0.0
    entropy_sum = 0.0

    js = [0] * N
    rank = [0] * N
    row_start = [[0] * N for _ in range(T + 1)]
    chosen = [[0] * N for _ in range(T + 1)]
    rews = [0.0] * (T + 1)
    p = [0.0] * 16

    for k in range(K):
        u_idx = 0
        u = uniforms[k]
        # initial state
        s = _scan_cdf(initial_cdf, u[u_idx])
        u_idx += 1
        for i in range(N):
            g = profiles[k, i]
            js[i] = src_agent[g, i]
            rank[i] = 0
        for t in range(T + 1):
            ja = 0
            for i in range(N):
                j = js[i]
                start = agent_offset[j] + (level_offset[j, t] + rank[i]) * n_act[j]
                row_start[t][i] = start
                a_count = n_act[j]
                _softmax(params, start, a_count, p)
                b = _scan_probs(p, a_count, u[u_idx])
                u_idx += 1
                chosen[t][i] = b
                a_i = act_fwd[profiles[k, i], j, b]
                ja += a_i * act_stride[i]
            rews[t] = reward[s, ja]
            if t < T:
                s2 = _scan_cdf(trans_cdf[s, ja], u[u_idx])
                u_idx += 1
                jo = _scan_cdf(obs_cdf[s2, ja], u[u_idx])
                u_idx += 1
                for i in range(N):
                    j = js[i]
                    o_i = (jo // obs_div[i]) % n_obs[i]
                    o_perm = obs_inv[profiles[k, i], j, o_i]
                    rank[i] = (
                        rank[i] * (n_act[j] * n_obs[j])
                        + chosen[t][i] * n_obs[j]
                        + o_perm
                    )
                s = s2
        # returns to go
        g_future = 0.0
        gs = [0.0] * (T + 1)
        for t in range(T, -1, -1):
            g_future += rews[t]
            gs[t] = g_future
        return_sum += g_future
        # gradient pass
        for t in range(T + 1):
            for i in range(N):
                j = js[i]
                start = row_start[t][i]
                a_count = n_act[j]
                _softmax(params, start, a_count, p)
                b = chosen[t][i]
                ent = 0.0
                for c in range(a_count):
                    if p[c] > 0.0:
                        ent -= p[c] * math.log(p[c])
                loss_sum += gs[t] * math.log(p[b]) + alpha * ent
                entropy_sum += ent
                for c in range(a_count):
                    term = gs[t] * ((1.0 if c == b else 0.0) - p[c])
                    if p[c] > 0.0:
                        term -= alpha * p[c] * (math.log(p[c]) + ent)
                    grad[start + c] += -scale * term
    stats[0] = loss_sum
    stats[1] = return_sum
    stats[2] = entropy_sum


def _softmax(params, start, count, out):
    m = params[start]
    for c in range(1, count):
        v = params[start + c]
        if v > m:
            m = v
    total = 0.0
    for c in range(count):
        e = math.exp(params[start + c] - m)
        out[c] = e
        total += e
    for c in range(count):
        out[c] = out[c] / total


def _scan_cdf(cdf, u):
    n = len(cdf)
    for c in range(n - 1):
        if u < cdf[c]:
            return c
    return n - 1


def _scan_probs(p, count, u):
    cum = 0.0
    for c in range(count - 1):
        cum += p[c]
        if u < cum:
            return c
    return count - 1
