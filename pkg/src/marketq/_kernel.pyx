# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled slot loop: the hot kernel of the simulator.

Twin of ``_kernel_py.run_phase``; the two must stay observationally
identical (same randomness order, same float accumulation order).
"""

from libc.stdint cimport uint64_t, int64_t, int8_t

import numpy as _np

BACKEND_NAME = "compiled"

cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline double _next_u01(uint64_t* s) nogil:
    cdef uint64_t result = _rotl(s[1] * 5ULL, 7) * 9ULL
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return <double>(result >> 11) * INV_2_53


def run_phase(
    long n_customers,
    long n_servers,
    int64_t[::1] c_indptr,
    int64_t[::1] c_nbr,
    int64_t[::1] c_edge,
    int64_t[::1] s_indptr,
    int64_t[::1] s_nbr,
    int64_t[::1] s_edge,
    int64_t[::1] edge_cust,
    int64_t[::1] edge_srv,
    int64_t[::1] q,
    uint64_t[:, ::1] arr_state,
    uint64_t[:, ::1] coin_state,
    double[::1] rate_base,
    double[::1] rate_pert,
    double[::1] rate_extreme,
    double[::1] price_base,
    double[::1] price_pert,
    double[::1] price_extreme,
    double psi,
    long q_th,
    long target_useful,
    long max_slots,
    int64_t[::1] n_useful,
    int64_t[::1] sample_sum,
    int64_t[::1] arrivals_cum,
    int64_t[::1] matches_cum,
    double[::1] profit_out,
    int64_t[::1] qlen_out,
    int64_t[::1] qmax_out,
    long qmax_start,
    int check_structure,
    double[:, ::1] trace_price,
    double[:, ::1] trace_rate,
    int8_t[:, ::1] trace_arrival,
    int8_t[:, ::1] trace_useful,
    int64_t[:, ::1] trace_match,
    int has_trace,
):
    cdef long n_c = n_customers
    cdef long n_s = n_servers
    cdef long n_q = n_c + n_s
    cdef long n_e = matches_cum.shape[0]

    cdef long s_idx, k, i, j, e, a_idx, used = 0
    cdef long b, best_adj, a
    cdef int64_t length, best_len, total, mx, v
    cdef double rate, price, profit, u
    cdef long qmax = qmax_start
    cdef long bad_slot = -1
    cdef bint reached = False
    cdef bint draw_coin = 0.0 < psi < 1.0
    cdef bint always_pert = psi >= 1.0
    cdef bint done

    # scratch buffers, allocated once per call (cheap next to the slot loop)
    branch_arr = _np.zeros(n_q, dtype=_np.int64)
    arrived_arr = _np.zeros(n_q, dtype=_np.int64)
    slot_match_arr = _np.zeros(max(n_e, 1), dtype=_np.int64)
    cdef int64_t[::1] branch = branch_arr
    cdef int64_t[::1] arrived = arrived_arr
    cdef int64_t[::1] slot_match = slot_match_arr

    with nogil:
        for s_idx in range(max_slots):
            for k in range(n_q):
                length = q[k]
                if length >= q_th:
                    b = 2
                elif length == 0:
                    b = 0
                elif draw_coin:
                    if _next_u01(&coin_state[k, 0]) < psi:
                        b = 1
                    else:
                        b = 0
                elif always_pert:
                    b = 1
                else:
                    b = 0
                branch[k] = b

            profit = 0.0
            for k in range(n_q):
                b = branch[k]
                if b == 0:
                    rate = rate_base[k]
                    price = price_base[k]
                elif b == 1:
                    rate = rate_pert[k]
                    price = price_pert[k]
                else:
                    rate = rate_extreme[k]
                    price = price_extreme[k]
                u = _next_u01(&arr_state[k, 0])
                a = 1 if u < rate else 0
                arrived[k] = a
                arrivals_cum[k] += a
                if k < n_c:
                    profit += rate * price
                else:
                    profit -= rate * price
                if b == 0:
                    n_useful[k] += 1
                    if n_useful[k] <= target_useful:
                        sample_sum[k] += a
                if has_trace:
                    trace_price[s_idx, k] = price
                    trace_rate[s_idx, k] = rate
                    trace_arrival[s_idx, k] = <int8_t>a
                    trace_useful[s_idx, k] = 1 if b == 0 else 0

            for e in range(n_e):
                slot_match[e] = 0

            for i in range(n_c):
                if arrived[i] == 0:
                    continue
                best_adj = -1
                best_len = 0
                for a_idx in range(c_indptr[i], c_indptr[i + 1]):
                    length = q[n_c + c_nbr[a_idx]]
                    if length > best_len:
                        best_len = length
                        best_adj = a_idx
                if best_adj >= 0:
                    q[n_c + c_nbr[best_adj]] -= 1
                    matches_cum[c_edge[best_adj]] += 1
                    slot_match[c_edge[best_adj]] += 1
                else:
                    q[i] += 1
            for j in range(n_s):
                if arrived[n_c + j] == 0:
                    continue
                best_adj = -1
                best_len = 0
                for a_idx in range(s_indptr[j], s_indptr[j + 1]):
                    length = q[s_nbr[a_idx]]
                    if length > best_len:
                        best_len = length
                        best_adj = a_idx
                if best_adj >= 0:
                    q[s_nbr[best_adj]] -= 1
                    matches_cum[s_edge[best_adj]] += 1
                    slot_match[s_edge[best_adj]] += 1
                else:
                    q[n_c + j] += 1

            total = 0
            mx = 0
            for k in range(n_q):
                v = q[k]
                total += v
                if v > mx:
                    mx = v
            if mx > qmax:
                qmax = mx
            profit_out[s_idx] = profit
            qlen_out[s_idx] = total
            qmax_out[s_idx] = qmax
            if has_trace:
                for e in range(n_e):
                    trace_match[s_idx, e] = slot_match[e]

            if check_structure and bad_slot < 0:
                for e in range(n_e):
                    if q[edge_cust[e]] > 0 and q[n_c + edge_srv[e]] > 0:
                        bad_slot = s_idx
                        break

            used = s_idx + 1
            if target_useful > 0:
                done = True
                for k in range(n_q):
                    if n_useful[k] < target_useful:
                        done = False
                        break
                if done:
                    reached = True
                    break

    return used, bool(reached), qmax, bad_slot
