# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batch kernel for policy-gradient training.

Mirrors zsclab._kernels_py operation-for-operation; both backends must stay
bit-identical on the same inputs. See that module for the documented
contract.
"""

from libc.math cimport exp, log

BACKEND = "cython"


cdef inline int _scan_cdf(const double[:] cdf, double u) nogil:
    cdef int n = cdf.shape[0]
    cdef int c
    for c in range(n - 1):
        if u < cdf[c]:
            return c
    return n - 1


cdef inline int _scan_probs(double* p, int count, double u) nogil:
    cdef double cum = 0.0
    cdef int c
    for c in range(count - 1):
        cum += p[c]
        if u < cum:
            return c
    return count - 1


cdef inline void _softmax(const double[:] params, long start, int count, double* out) nogil:
    cdef double m = params[start]
    cdef double v, e, total
    cdef int c
    for c in range(1, count):
        v = params[start + c]
        if v > m:
            m = v
    total = 0.0
    for c in range(count):
        e = exp(params[start + c] - m)
        out[c] = e
        total += e
    for c in range(count):
        out[c] = out[c] / total


def accumulate_batch(
    const double[:] params,
    double[:] grad,
    const long[:] agent_offset,
    const long[:, :] level_offset,
    const long[:] n_act,
    const long[:] n_obs,
    const long[:] act_stride,
    const long[:] obs_div,
    const double[:] initial_cdf,
    const double[:, :, :] trans_cdf,
    const double[:, :, :] obs_cdf,
    const double[:, :] reward,
    const long[:, :] src_agent,
    const long[:, :, :] act_fwd,
    const long[:, :, :] obs_inv,
    const long[:, :] profiles,
    const double[:, :] uniforms,
    int horizon,
    double alpha,
    double scale,
    double[:] stats,
):
    cdef int K = profiles.shape[0]
    cdef int N = src_agent.shape[1]
    cdef int T = horizon
    cdef double loss_sum = 0.0
    cdef double return_sum = 0.0
    cdef double entropy_sum = 0.0

    cdef long[8] js
    cdef long[8] rank
    cdef long[8][8] row_start
    cdef int[8][8] chosen
    cdef double[8] rews
    cdef double[8] gs
    cdef double[16] p

    cdef int k, i, t, c, b, a_count, s, s2
    cdef long g, j, start, ja, jo, o_i, o_perm
    cdef int u_idx
    cdef double ent, term, g_future

    if N > 8 or T + 1 > 8:
        raise ValueError("kernel compiled for at most 8 agents and 8 decision rounds")
    for i in range(N):
        if n_act[i] > 16:
            raise ValueError("kernel compiled for at most 16 actions per agent")

    for k in range(K):
        u_idx = 0
        s = _scan_cdf(initial_cdf, uniforms[k, u_idx])
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
                a_count = <int> n_act[j]
                _softmax(params, start, a_count, p)
                b = _scan_probs(p, a_count, uniforms[k, u_idx])
                u_idx += 1
                chosen[t][i] = b
                ja += act_fwd[profiles[k, i], j, b] * act_stride[i]
            rews[t] = reward[s, ja]
            if t < T:
                s2 = _scan_cdf(trans_cdf[s, ja], uniforms[k, u_idx])
                u_idx += 1
                jo = _scan_cdf(obs_cdf[s2, ja], uniforms[k, u_idx])
                u_idx += 1
                for i in range(N):
                    j = js[i]
                    o_i = (jo // obs_div[i]) % n_obs[i]
                    o_perm = obs_inv[profiles[k, i], j, o_i]
                    rank[i] = rank[i] * (n_act[j] * n_obs[j]) + chosen[t][i] * n_obs[j] + o_perm
                s = s2
        g_future = 0.0
        for t in range(T, -1, -1):
            g_future += rews[t]
            gs[t] = g_future
        return_sum += g_future
        for t in range(T + 1):
            for i in range(N):
                j = js[i]
                start = row_start[t][i]
                a_count = <int> n_act[j]
                _softmax(params, start, a_count, p)
                b = chosen[t][i]
                ent = 0.0
                for c in range(a_count):
                    if p[c] > 0.0:
                        ent -= p[c] * log(p[c])
                loss_sum += gs[t] * log(p[b]) + alpha * ent
                entropy_sum += ent
                for c in range(a_count):
                    term = gs[t] * ((1.0 if c == b else 0.0) - p[c])
                    if p[c] > 0.0:
                        term -= alpha * p[c] * (log(p[c]) + ent)
                    grad[start + c] += -scale * term
    stats[0] = loss_sum
    stats[1] = return_sum
    stats[2] = entropy_sum
