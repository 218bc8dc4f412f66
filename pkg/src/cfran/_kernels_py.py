"""Pure-Python reference kernels.

These are the import-time fallback when the compiled extension is missing.
The compiled kernels perform the same scalar operations in the same order,
so both backends produce bit-identical results; keep any edit mirrored in
``_kernels.pyx``.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

SCHED_RR = 0
SCHED_PF = 1


def _select_ue(sched, backlog, rates, t, ewma, last_served, n):
    """One scheduling decision; returns the served UE or -1 when idle."""
    if sched == SCHED_RR:
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


def fluid_kernel(rates, arrivals_per_tti, sched, ewma_beta, ewma_init,
                 window_ttis, n_windows, sched_threshold):
    """Fluid-flow TTI loop (fidelity levels 1-3).

    rates: [T, N] servable bits per TTI.  arrivals_per_tti: [N] offered bits
    per TTI.  A UE competes for the TTI only once sched_threshold bits have
    accumulated (packetized-contention semantics; continuous arrivals would
    otherwise keep every queue nominally busy and distort the schedulers).
    Returns per-window delivered bits and backlog sums (backlog is sampled
    after service each TTI).
    """
    T = rates.shape[0]
    n = rates.shape[1]
    delivered = np.zeros((n_windows, n))
    backlog_sum = np.zeros((n_windows, n))

    backlog = [0.0] * n
    flags = [0.0] * n
    ewma = [ewma_init] * n
    last_served = n - 1
    t_end = n_windows * window_ttis
    if T < t_end:
        t_end = T

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

    return delivered, backlog_sum


def packet_kernel(rates, arrival_times, offsets, pkt_bits, sched, ewma_beta,
                  ewma_init, window_ttis, n_windows):
    """Packet-level TTI loop (fidelity level 4).

    arrival_times: flat sorted per-UE arrival instants (s) with offsets[i]
    .. offsets[i+1] delimiting UE i.  FIFO service, one UE per TTI; packets
    arriving mid-TTI are admitted for the currently served UE only.  Delay
    sums/counts are attributed to the window of the serving TTI.  Queue
    occupancy is anchored to integer packet counters so float residues can
    never create or destroy packets.
    """
    T = rates.shape[0]
    n = rates.shape[1]
    delivered = np.zeros((n_windows, n))
    backlog_sum = np.zeros((n_windows, n))
    delay_sum = np.zeros((n_windows, n))
    delay_cnt = np.zeros((n_windows, n))

    flags = [0.0] * n
    ewma = [ewma_init] * n
    next_arr = [int(offsets[i]) for i in range(n)]
    head_ptr = [int(offsets[i]) for i in range(n)]
    head_rem = [0.0] * n  # 0 means the head packet has not started service
    last_served = n - 1
    t_end = n_windows * window_ttis
    if T < t_end:
        t_end = T

    for t in range(t_end):
        w = t // window_ttis
        tti_start = t * 0.001
        tti_end = tti_start + 0.001
        for i in range(n):
            limit = int(offsets[i + 1])
            while next_arr[i] < limit and arrival_times[next_arr[i]] < tti_start:
                next_arr[i] += 1
            flags[i] = 1.0 if next_arr[i] > head_ptr[i] else 0.0

        sel = _select_ue(sched, flags, rates, t, ewma, last_served, n)
        served = 0.0
        if sel >= 0:
            rate_bps = rates[t, sel] * 1000.0
            tau = tti_start
            limit = int(offsets[sel + 1])
            while True:
                if head_ptr[sel] == next_arr[sel]:
                    # work conservation for the TTI owner: admit its next
                    # packet if it lands before the TTI expires
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

    return delivered, backlog_sum, delay_sum, delay_cnt


def replay_grid(quality, sim, adm, grid, k_max):
    """Replay the acceptance/stopping rule for every threshold triple.

    quality: [K] per-candidate scores; sim: [K, K] pairwise similarity;
    adm: [K] admissibility (vs the true counterfactual); grid: [L, 3]
    rows (quality_min, similarity_max, stop_confidence).  Returns per-row
    set size, stop index (1-based) and set loss within the stopped prefix.
    """
    K = int(k_max)
    L = grid.shape[0]
    out_size = np.zeros(L, dtype=np.int32)
    out_kstop = np.zeros(L, dtype=np.int32)
    out_loss = np.zeros(L, dtype=np.uint8)

    accepted = [0] * K
    for li in range(L):
        lam1 = grid[li, 0]
        lam2 = grid[li, 1]
        lam3 = grid[li, 2]
        n_acc = 0
        covered = 0
        conf = -np.inf
        k_stop = K
        for k in range(K):
            smax = -np.inf
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
    return out_size, out_kstop, out_loss
