"""Pure-Python slot loop, the reference twin of the compiled kernel.

Must stay observationally identical to ``_kernel.pyx``: same randomness
consumption order, same floating-point accumulation order, same outputs.
The benchmark and the cross-backend tests enforce this.
"""

from __future__ import annotations

BACKEND_NAME = "python"

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0


def _next_u01(s: list[int]) -> float:
    s0, s1, s2, s3 = s
    x = (s1 * 5) & _MASK64
    result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
    t = (s1 << 17) & _MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return (result >> 11) * _INV_2_53


def run_phase(
    n_customers,
    n_servers,
    c_indptr,
    c_nbr,
    c_edge,
    s_indptr,
    s_nbr,
    s_edge,
    edge_cust,
    edge_srv,
    q,
    arr_state,
    coin_state,
    rate_base,
    rate_pert,
    rate_extreme,
    price_base,
    price_pert,
    price_extreme,
    psi,
    q_th,
    target_useful,
    max_slots,
    n_useful,
    sample_sum,
    arrivals_cum,
    matches_cum,
    profit_out,
    qlen_out,
    qmax_out,
    qmax_start,
    check_structure,
    trace_price,
    trace_rate,
    trace_arrival,
    trace_useful,
    trace_match,
    has_trace,
):
    n_c = int(n_customers)
    n_s = int(n_servers)
    n_q = n_c + n_s
    n_e = len(matches_cum)

    cip = [int(v) for v in c_indptr]
    cnb = [int(v) for v in c_nbr]
    ced = [int(v) for v in c_edge]
    sip = [int(v) for v in s_indptr]
    snb = [int(v) for v in s_nbr]
    sed = [int(v) for v in s_edge]
    e_c = [int(v) for v in edge_cust]
    e_s = [int(v) for v in edge_srv]

    ql = [int(v) for v in q]
    astate = [[int(w) for w in arr_state[k]] for k in range(n_q)]
    cstate = [[int(w) for w in coin_state[k]] for k in range(n_q)]
    r0 = [float(v) for v in rate_base]
    r1 = [float(v) for v in rate_pert]
    r2 = [float(v) for v in rate_extreme]
    p0 = [float(v) for v in price_base]
    p1 = [float(v) for v in price_pert]
    p2 = [float(v) for v in price_extreme]
    useful = [int(v) for v in n_useful]
    samples = [int(v) for v in sample_sum]
    acum = [int(v) for v in arrivals_cum]
    mcum = [int(v) for v in matches_cum]

    psi = float(psi)
    q_th = int(q_th)
    target = int(target_useful)
    draw_coin = 0.0 < psi < 1.0
    always_pert = psi >= 1.0

    branch = [0] * n_q
    arrived = [0] * n_q
    slot_match = [0] * n_e

    qmax = int(qmax_start)
    bad_slot = -1
    reached = False
    used = 0

    for s in range(int(max_slots)):
        # Set one price per queue from the observed pre-slot length.
        for k in range(n_q):
            length = ql[k]
            if length >= q_th:
                b = 2
            elif length == 0:
                b = 0
            elif draw_coin:
                b = 1 if _next_u01(cstate[k]) < psi else 0
            elif always_pert:
                b = 1
            else:
                b = 0
            branch[k] = b

        # Run the slot: one Bernoulli arrival per queue at the posted rate.
        profit = 0.0
        for k in range(n_q):
            b = branch[k]
            if b == 0:
                rate, price = r0[k], p0[k]
            elif b == 1:
                rate, price = r1[k], p1[k]
            else:
                rate, price = r2[k], p2[k]
            a = 1 if _next_u01(astate[k]) < rate else 0
            arrived[k] = a
            acum[k] += a
            if k < n_c:
                profit += rate * price
            else:
                profit -= rate * price
            if b == 0:
                useful[k] += 1
                if useful[k] <= target:
                    samples[k] += a
            if has_trace:
                trace_price[s, k] = price
                trace_rate[s, k] = rate
                trace_arrival[s, k] = a
                trace_useful[s, k] = 1 if b == 0 else 0

        for e in range(n_e):
            slot_match[e] = 0

        # Match greedily: customers in index order, then servers.
        for i in range(n_c):
            if not arrived[i]:
                continue
            best_adj = -1
            best_len = 0
            for a_idx in range(cip[i], cip[i + 1]):
                length = ql[n_c + cnb[a_idx]]
                if length > best_len:
                    best_len = length
                    best_adj = a_idx
            if best_adj >= 0:
                ql[n_c + cnb[best_adj]] -= 1
                mcum[ced[best_adj]] += 1
                slot_match[ced[best_adj]] += 1
            else:
                ql[i] += 1
        for j in range(n_s):
            if not arrived[n_c + j]:
                continue
            best_adj = -1
            best_len = 0
            for a_idx in range(sip[j], sip[j + 1]):
                length = ql[snb[a_idx]]
                if length > best_len:
                    best_len = length
                    best_adj = a_idx
            if best_adj >= 0:
                ql[snb[best_adj]] -= 1
                mcum[sed[best_adj]] += 1
                slot_match[sed[best_adj]] += 1
            else:
                ql[n_c + j] += 1

        total = 0
        mx = 0
        for k in range(n_q):
            v = ql[k]
            total += v
            if v > mx:
                mx = v
        if mx > qmax:
            qmax = mx
        profit_out[s] = profit
        qlen_out[s] = total
        qmax_out[s] = qmax
        if has_trace:
            for e in range(n_e):
                trace_match[s, e] = slot_match[e]

        if check_structure and bad_slot < 0:
            for e in range(n_e):
                if ql[e_c[e]] > 0 and ql[n_c + e_s[e]] > 0:
                    bad_slot = s
                    break

        used = s + 1
        if target > 0:
            done = True
            for k in range(n_q):
                if useful[k] < target:
                    done = False
                    break
            if done:
                reached = True
                break

    # Write mutable state back into the caller's arrays.
    for k in range(n_q):
        q[k] = ql[k]
        n_useful[k] = useful[k]
        sample_sum[k] = samples[k]
        arrivals_cum[k] = acum[k]
        for w in range(4):
            arr_state[k, w] = astate[k][w]
            coin_state[k, w] = cstate[k][w]
    for e in range(n_e):
        matches_cum[e] = mcum[e]
    return used, reached, qmax, bad_slot
