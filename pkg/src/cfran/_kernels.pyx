# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled TTI-loop and threshold-replay kernels.

Scalar operations mirror ``_kernels_py`` exactly (same order, IEEE doubles)
so both backends are bit-identical; keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

BACKEND = "cython"

SCHED_RR = 0
SCHED_PF = 1


cdef int _select_ue(int sched, double* backlog, double[:, ::1] rates, int t,
                    double* ewma, int last_served, int n) nogil:
    cdef int j, cand, i, best
    cdef double metric, best_metric
    if sched == 0:
        for j in range(1, n + 1):
            cand = (last_served + j) % n
            if backlog[cand] > 0.0:
                return cand
        return -1
    best = -1
    best_metric = -1.0
    for i in range(n):
        if backlog[i] > 0.0:
            metric = rates[t, i] * 1000.0 / ewma[i]
            if metric > best_metric:
                best_metric = metric
                best = i
    return best


def fluid_kernel(double[:, ::1] rates, double[::1] arrivals_per_tti, int sched,
                 double ewma_beta, double ewma_init, int window_ttis,
                 int n_windows, double sched_threshold):
    cdef int T = rates.shape[0]
    cdef int n = rates.shape[1]
    delivered_arr = np.zeros((n_windows, n))
    backlog_sum_arr = np.zeros((n_windows, n))
    cdef double[:, ::1] delivered = delivered_arr
    cdef double[:, ::1] backlog_sum = backlog_sum_arr

    cdef double backlog[32]
    cdef double flags[32]
    cdef double ewma[32]
    cdef int i, t, w, sel, t_end, last_served
    cdef double served, cap, inst

    for i in range(n):
        backlog[i] = 0.0
        flags[i] = 0.0
        ewma[i] = ewma_init
    last_served = n - 1
    t_end = n_windows * window_ttis
    if T < t_end:
        t_end = T

    with nogil:
        for t in range(t_end):
            w = t // window_ttis
            for i in range(n):
                backlog[i] = backlog[i] + arrivals_per_tti[i]
                flags[i] = 1.0 if (backlog[i] > 0.0 and backlog[i] >= sched_threshold) else 0.0
            sel = _select_ue(sched, flags, rates, t, ewma, last_served, n)
            served = 0.0
            if sel >= 0:
                cap = rates[t, sel]
                served = backlog[sel] if backlog[sel] < cap else cap
                backlog[sel] = backlog[sel] - served
                delivered[w, sel] += served
                last_served = sel
            for i in range(n):
                inst = served * 1000.0 if i == sel else 0.0
                ewma[i] = (1.0 - ewma_beta) * ewma[i] + ewma_beta * inst
                backlog_sum[w, i] += backlog[i]

    return delivered_arr, backlog_sum_arr


def packet_kernel(double[:, ::1] rates, double[::1] arrival_times,
                  long long[::1] offsets, double pkt_bits, int sched,
                  double ewma_beta, double ewma_init, int window_ttis,
                  int n_windows):
    cdef int T = rates.shape[0]
    cdef int n = rates.shape[1]
    delivered_arr = np.zeros((n_windows, n))
    backlog_sum_arr = np.zeros((n_windows, n))
    delay_sum_arr = np.zeros((n_windows, n))
    delay_cnt_arr = np.zeros((n_windows, n))
    cdef double[:, ::1] delivered = delivered_arr
    cdef double[:, ::1] backlog_sum = backlog_sum_arr
    cdef double[:, ::1] delay_sum = delay_sum_arr
    cdef double[:, ::1] delay_cnt = delay_cnt_arr

    cdef double flags[32]
    cdef double head_rem[32]
    cdef long long next_arr[32]
    cdef long long head_ptr[32]
    cdef double ewma[32]
    cdef int i, t, w, sel, t_end, last_served
    cdef long long limit
    cdef double served, inst, tti_start, tti_end, rate_bps, tau, arr, budget, s, q

    for i in range(n):
        flags[i] = 0.0
        head_rem[i] = 0.0
        ewma[i] = ewma_init
        next_arr[i] = offsets[i]
        head_ptr[i] = offsets[i]
    last_served = n - 1
    t_end = n_windows * window_ttis
    if T < t_end:
        t_end = T

    with nogil:
        for t in range(t_end):
            w = t // window_ttis
            tti_start = t * 0.001
            tti_end = tti_start + 0.001
            for i in range(n):
                limit = offsets[i + 1]
                while next_arr[i] < limit and arrival_times[next_arr[i]] < tti_start:
                    next_arr[i] += 1
                flags[i] = 1.0 if next_arr[i] > head_ptr[i] else 0.0

            sel = _select_ue(sched, flags, rates, t, ewma, last_served, n)
            served = 0.0
            if sel >= 0:
                rate_bps = rates[t, sel] * 1000.0
                tau = tti_start
                limit = offsets[sel + 1]
                while True:
                    if head_ptr[sel] == next_arr[sel]:
                        if next_arr[sel] < limit and arrival_times[next_arr[sel]] < tti_end:
                            arr = arrival_times[next_arr[sel]]
                            if arr > tau:
                                tau = arr
                            next_arr[sel] += 1
                        else:
                            break
                    if head_rem[sel] <= 0.0:
                        head_rem[sel] = pkt_bits
                    budget = (tti_end - tau) * rate_bps
                    if budget <= 0.0:
                        break
                    s = head_rem[sel] if head_rem[sel] < budget else budget
                    tau = tau + s / rate_bps
                    head_rem[sel] = head_rem[sel] - s
                    served = served + s
                    if head_rem[sel] <= 0.0:
                        delay_sum[w, sel] += tau - arrival_times[head_ptr[sel]]
                        delay_cnt[w, sel] += 1.0
                        head_ptr[sel] += 1
                        head_rem[sel] = 0.0
                delivered[w, sel] += served
                last_served = sel

            for i in range(n):
                inst = served * 1000.0 if i == sel else 0.0
                ewma[i] = (1.0 - ewma_beta) * ewma[i] + ewma_beta * inst
                if next_arr[i] > head_ptr[i]:
                    q = (next_arr[i] - head_ptr[i] - 1) * pkt_bits
                    q = q + (head_rem[i] if head_rem[i] > 0.0 else pkt_bits)
                else:
                    q = 0.0
                backlog_sum[w, i] += q

    return delivered_arr, backlog_sum_arr, delay_sum_arr, delay_cnt_arr


def replay_grid(double[::1] quality, double[:, ::1] sim,
                cnp.uint8_t[::1] adm, double[:, ::1] grid, int k_max):
    cdef int K = k_max
    cdef int L = grid.shape[0]
    out_size_arr = np.zeros(L, dtype=np.int32)
    out_kstop_arr = np.zeros(L, dtype=np.int32)
    out_loss_arr = np.zeros(L, dtype=np.uint8)
    cdef int[::1] out_size = out_size_arr
    cdef int[::1] out_kstop = out_kstop_arr
    cdef cnp.uint8_t[::1] out_loss = out_loss_arr

    cdef int accepted[64]
    cdef int li, k, j, n_acc, covered, k_stop
    cdef double lam1, lam2, lam3, conf, smax

    with nogil:
        for li in range(L):
            lam1 = grid[li, 0]
            lam2 = grid[li, 1]
            lam3 = grid[li, 2]
            n_acc = 0
            covered = 0
            conf = -INFINITY
            k_stop = K
            for k in range(K):
                smax = -INFINITY
                for j in range(k):
                    if accepted[j] == 1 and sim[k, j] > smax:
                        smax = sim[k, j]
                if quality[k] >= lam1 and smax <= lam2:
                    accepted[k] = 1
                    n_acc += 1
                    if adm[k]:
                        covered = 1
                    if quality[k] > conf:
                        conf = quality[k]
                else:
                    accepted[k] = 0
                if conf >= lam3:
                    k_stop = k + 1
                    break
            out_size[li] = n_acc
            out_kstop[li] = k_stop
            out_loss[li] = 0 if covered else 1
    return out_size_arr, out_kstop_arr, out_loss_arr
