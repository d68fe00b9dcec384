# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled slot loop.

Transliteration of engine._python_slot_loop plus the player-state updates
from bandit.py and policies.py. Every random draw happens through the same
bit generators in the same order as the Python reference, and every
floating-point reduction accumulates in the same index order, so a trial's
outputs are bit-identical across backends.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, fabs, pow, sqrt
from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (random_beta,
                                           random_standard_normal,
                                           random_standard_uniform)

cnp.import_array()

cdef enum:
    CONTENT = 0
    DISCONTENT = 1


cdef bitgen_t *get_bg(object gen) except NULL:
    cdef object capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, b"BitGenerator")


cdef inline double u01(bitgen_t *bg) noexcept nogil:
    return random_standard_uniform(bg)


cdef inline Py_ssize_t rand_idx(bitgen_t *bg, Py_ssize_t n) noexcept nogil:
    # int(random() * n), clamped; a single choice consumes nothing
    cdef Py_ssize_t i
    if n <= 1:
        return 0
    i = <Py_ssize_t> (random_standard_uniform(bg) * n)
    return n - 1 if i >= n else i


cdef inline Py_ssize_t ts_sel(bitgen_t *bg, double[:, ::1] al, double[:, ::1] be,
                              Py_ssize_t n, double[::1] rates,
                              Py_ssize_t M) noexcept nogil:
    # scalar Beta(alpha+1, beta+1) per arm in arm order, argmax rate * draw
    cdef Py_ssize_t m, best = 0
    cdef double bv = -1.0, val
    if M == 1:
        return 0
    for m in range(M):
        val = rates[m] * random_beta(bg, al[n, m] + 1.0, be[n, m] + 1.0)
        if val > bv:
            best = m
            bv = val
    return best


cdef inline double rpow(double sre, double sim, double var,
                        bitgen_t *bg) noexcept nogil:
    # |S + sqrt(var/2)(n1 + j n2)|^2 as re^2 + im^2 (2 normals)
    cdef double scale = sqrt(var * 0.5)
    cdef double re = sre + scale * random_standard_normal(bg)
    cdef double im = sim + scale * random_standard_normal(bg)
    return re * re + im * im


cdef inline double dpow(double mu, double sigma, bitgen_t *bg) noexcept nogil:
    # log-normal shadow times exponential fading power (3 normals)
    cdef double rho = exp(mu + sigma * random_standard_normal(bg))
    cdef double x = random_standard_normal(bg)
    cdef double y = random_standard_normal(bg)
    return rho * 0.5 * (x * x + y * y)


def run_slot_loop(dict a):
    """Run one full trial; mutates the output arrays in the args dict."""
    # dimensions and switches
    cdef Py_ssize_t N = a["N"], K = a["K"], M = a["M"], A = a["A"], A2 = a["A2"]
    cdef Py_ssize_t T = a["horizon"], Z = a["epochs"]
    cdef int kind = a["kind"], joint = a["joint"], thompson = a["thompson"]
    cdef int adaptive = a["adaptive"], cluster = a["cluster"]
    cdef int full = a["full"], trace = a["trace"]

    # learner constants
    cdef double game_explore = a["game_explore"], game_epsilon = a["game_epsilon"]
    cdef double qlr = a["qlr"], qdisc = a["qdisc"], qe0 = a["qe0"], qe1 = a["qe1"]
    cdef cnp.int64_t[:, ::1] lengths = a["lengths"]
    cdef double[::1] util_scale = a["util_scale"]
    cdef double[::1] rates_e2 = a["rates_e2"]

    # environment tables
    cdef double[:, :, ::1] theta = a["theta"]
    cdef double[:, ::1] theta_direct = a["theta_direct"]
    cdef double[:, :, ::1] mu = a["mu"]
    cdef double[:, ::1] mu_direct = a["mu_direct"]
    cdef double[::1] rates_mbps = a["rates_mbps"]
    cdef double[::1] pa = a["pa"]
    cdef double[::1] thresholds = a["thresholds"]
    cdef double[:, ::1] los_re = a["los_re"], los_im = a["los_im"]
    cdef double[:, ::1] nlos_var = a["nlos_var"]
    cdef double[::1] shadow_mu = a["shadow_mu"]
    cdef double shadow_sigma = a["shadow_sigma"]
    cdef double tx = a["tx"], denom = a["denom"]

    # centralized assignment
    cdef cnp.int64_t[::1] opt_ris = a["opt_ris"], opt_sf = a["opt_sf"]
    cdef cnp.int64_t[::1] opt_dsf = a["opt_dsf"]
    cdef double[::1] bench1 = a["bench1"], bench2 = a["bench2"]

    # clustering
    cdef cnp.int64_t[::1] ranks = a["ranks"], sizes = a["sizes"]

    # player state (epoch family)
    cdef double[::1] eps_arr = a["eps"]
    cdef cnp.int64_t[::1] zarr = a["z"], phase = a["phase"], sip = a["sip"]
    cdef cnp.int64_t[:, ::1] cur_len = a["cur_len"]
    cdef double[:, ::1] v = a["v"], qst = a["q"], th_hat = a["theta_hat"]
    cdef double[::1] u_max = a["u_max"]
    cdef cnp.int64_t[::1] mood = a["mood"], baseline = a["baseline"]
    cdef double[:, :, ::1] F = a["fcounts"]
    cdef cnp.int64_t[:, ::1] last_choice = a["last_choice"]
    cdef double[:, ::1] a1 = a["a1"], b1 = a["b1"], a2 = a["a2"], b2 = a["b2"]
    cdef cnp.int64_t[::1] k_star = a["k_star"], c_star = a["c_star"]
    cdef cnp.int64_t[::1] cur_arm = a["cur_arm"], cur_sf = a["cur_sf"]

    # player state (q-learning)
    cdef double[:, ::1] q_idle = a["q_idle"], q_busy = a["q_busy"]
    cdef cnp.int64_t[::1] q_state = a["q_state"], q_last = a["q_last"]
    cdef cnp.int64_t[::1] q_ptbl = a["q_ptbl"], q_pidx = a["q_pidx"]
    cdef double[::1] q_reward = a["q_reward"]

    # outputs
    cdef cnp.int64_t[:, ::1] w = a["w"]
    cdef double[::1] cum_player = a["cum_player"]
    cdef double[:, ::1] thr_player = a["thr_player"]
    cdef double[::1] realized_regret = a["realized_regret"]
    cdef cnp.int64_t[::1] grid = a["grid"], epoch_ends = a["epoch_ends"]
    cdef double[::1] pseudo = a["pseudo"]
    cdef cnp.int64_t[:, :, ::1] w_epochs = a["w_epochs"]
    cdef cnp.int64_t[::1] counters = a["counters"]
    cdef double[::1] cum_real = a["cum_real"]

    # trace buffers
    cdef cnp.int64_t[::1] tr_slot = a["tr_slot"]
    cdef cnp.int32_t[::1] tr_player = a["tr_player"]
    cdef cnp.int8_t[::1] tr_pattern = a["tr_pattern"]
    cdef cnp.int32_t[::1] tr_ris = a["tr_ris"], tr_sf = a["tr_sf"]
    cdef cnp.int8_t[::1] tr_collision = a["tr_collision"]
    cdef cnp.int8_t[::1] tr_success = a["tr_success"]
    cdef double[::1] tr_reward = a["tr_reward"]

    # per-slot work arrays
    cdef cnp.int64_t[::1] busy = np.zeros(K, dtype=np.int64)
    cdef cnp.int64_t[::1] intk = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] intsf = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] flagged = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] patterns = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] etas = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] sfs = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] riss = np.zeros(N, dtype=np.int64)
    cdef double[::1] succ = np.zeros(N)
    cdef cnp.int64_t[::1] counts = np.zeros(K, dtype=np.int64)
    cdef double[::1] window = np.zeros(A)

    # bit generators
    cdef bitgen_t *occ = get_bg(a["occ_rng"])
    cdef bitgen_t *fb = get_bg(a["fb_rng"])
    cdef bitgen_t *opt = get_bg(a["opt_rng"])
    cdef list player_rngs = a["player_rngs"]
    cdef bitgen_t **pbg = <bitgen_t **> malloc(N * sizeof(bitgen_t *))
    if pbg == NULL:
        raise MemoryError()

    cdef Py_ssize_t G = grid.shape[0], E = epoch_ends.shape[0]
    cdef Py_ssize_t KM = K * M
    cdef Py_ssize_t hm1 = T - 1 if T > 1 else 1
    cdef Py_ssize_t t, slot, n, k, kk, m, aa, j, e, ref, zz, ph, ca, bi, ti
    cdef Py_ssize_t arm, sf, mm, idx, p_, gi = 0, ei = 0
    cdef int need, tb, explore, xss, coll
    cdef Py_ssize_t eta
    cdef double og, p2v, x, u, pr, eps_t, follow, reward, um, val, bv
    cdef double t1s, t2s, cumd, acc, total

    for n in range(N):
        pbg[n] = get_bg(player_rngs[n])

    try:
        with nogil:
            for t in range(T):
                slot = t + 1

                # 1. occupancy, surface order
                for k in range(K):
                    busy[k] = 1 if u01(occ) < pa[k] else 0

                # 2. counterfactual optimum on the shared occupancy
                og = 0.0
                for n in range(N):
                    kk = opt_ris[n]
                    if kk >= 0 and busy[kk] == 0:
                        m = opt_sf[n]
                        if full:
                            p2v = rpow(los_re[n, kk], los_im[n, kk],
                                       nlos_var[n, kk], opt)
                            xss = 1 if tx * p2v / denom >= thresholds[m] else 0
                        else:
                            xss = 1 if u01(opt) < theta[n, kk, m] else 0
                    else:
                        m = opt_dsf[n]
                        if full:
                            p2v = dpow(shadow_mu[n], shadow_sigma, opt)
                            xss = 1 if tx * p2v / denom >= thresholds[m] else 0
                        else:
                            xss = 1 if u01(opt) < theta_direct[n, m] else 0
                    if xss:
                        og += rates_mbps[m]
                cum_real[1] += og

                # 3. selections, player order
                for n in range(N):
                    if cluster and (t % sizes[n]) != ranks[n]:
                        flagged[n] = 0
                        intk[n] = -2
                        intsf[n] = 0
                        continue
                    flagged[n] = 1
                    if kind == 0:
                        ph = phase[n]
                        zz = zarr[n]
                        if ph == 0:
                            if u01(pbg[n]) < eps_arr[n]:
                                arm = rand_idx(pbg[n], A)
                            else:
                                arm = k_star[n]
                            if joint:
                                sf = arm % M
                            else:
                                sf = rand_idx(pbg[n], M) if zz == 1 else c_star[n]
                        elif ph == 1:
                            if mood[n] == CONTENT:
                                if u01(pbg[n]) < game_explore:
                                    idx = rand_idx(pbg[n], A - 1)
                                    arm = idx if idx < baseline[n] else idx + 1
                                else:
                                    arm = baseline[n]
                            else:
                                arm = rand_idx(pbg[n], A)
                            last_choice[n, zz] = arm
                            if joint:
                                sf = arm % M
                            else:
                                sf = rand_idx(pbg[n], M) if zz == 1 else c_star[n]
                        else:
                            if thompson:
                                sf = ts_sel(pbg[n], a1, b1, n, rates_e2, M)
                                arm = k_star[n]
                            else:
                                arm = k_star[n]
                                sf = arm % M if joint else cur_sf[n]
                        cur_arm[n] = arm
                        cur_sf[n] = sf
                        intk[n] = arm // M if joint else arm
                        intsf[n] = sf
                    elif kind == 1:
                        eps_t = qe0 + (qe1 - qe0) * (<double> t / <double> hm1)
                        explore = 1 if u01(pbg[n]) < eps_t else 0
                        if q_state[n] == 1:
                            if explore:
                                mm = rand_idx(pbg[n], M)
                            else:
                                mm = 0
                                bv = q_busy[n, 0]
                                for m in range(1, M):
                                    if q_busy[n, m] > bv:
                                        mm = m
                                        bv = q_busy[n, m]
                            q_ptbl[n] = 1
                            q_pidx[n] = mm
                            cur_sf[n] = mm
                            intk[n] = -1
                            intsf[n] = mm
                        else:
                            if explore:
                                aa = rand_idx(pbg[n], KM)
                            else:
                                aa = 0
                                bv = q_idle[n, 0]
                                for m in range(1, KM):
                                    if q_idle[n, m] > bv:
                                        aa = m
                                        bv = q_idle[n, m]
                            q_ptbl[n] = 0
                            q_pidx[n] = aa
                            q_last[n] = aa // M
                            cur_sf[n] = aa % M
                            intk[n] = q_last[n]
                            intsf[n] = cur_sf[n]
                    elif kind == 2:
                        aa = rand_idx(pbg[n], KM)
                        cur_sf[n] = aa % M
                        intk[n] = aa // M
                        intsf[n] = cur_sf[n]
                    else:
                        intk[n] = opt_ris[n]
                        intsf[n] = opt_sf[n] if opt_ris[n] >= 0 else opt_dsf[n]
                        cur_sf[n] = intsf[n]

                # collision resolution over the live subset
                for k in range(K):
                    counts[k] = 0
                for n in range(N):
                    kk = intk[n]
                    if kk >= 0 and busy[kk] == 0:
                        counts[kk] += 1
                for n in range(N):
                    if flagged[n] == 0:
                        patterns[n] = 0
                        etas[n] = 0
                        continue
                    kk = intk[n]
                    if kk < 0 or busy[kk] == 1:
                        patterns[n] = 2
                        etas[n] = 0
                    else:
                        patterns[n] = 1
                        etas[n] = 0 if counts[kk] >= 2 else 1

                # 4. direct-SF choices for blocked and out-of-turn players
                for n in range(N):
                    if flagged[n] == 0:
                        patterns[n] = 2
                        riss[n] = -1
                        need = 1
                    elif patterns[n] == 2:
                        riss[n] = intk[n]
                        if intk[n] >= 0:
                            need = 1
                        else:
                            need = 0
                            sfs[n] = intsf[n]
                    else:
                        riss[n] = intk[n]
                        sfs[n] = intsf[n]
                        need = 0
                    if need:
                        if kind == 0:
                            if thompson:
                                sf = ts_sel(pbg[n], a2, b2, n, rates_e2, M)
                            else:
                                sf = k_star[n] % M if joint else c_star[n]
                            cur_sf[n] = sf
                        elif kind == 1:
                            sf = cur_sf[n]
                        elif kind == 2:
                            sf = rand_idx(pbg[n], M)
                            cur_sf[n] = sf
                        else:
                            sf = opt_dsf[n]
                            cur_sf[n] = sf
                        sfs[n] = sf

                # 5. feedback draws, shared stream, player order
                for n in range(N):
                    m = sfs[n]
                    xss = 0
                    if patterns[n] == 1:
                        if etas[n] == 1:
                            kk = riss[n]
                            if full:
                                p2v = rpow(los_re[n, kk], los_im[n, kk],
                                           nlos_var[n, kk], fb)
                                xss = 1 if tx * p2v / denom >= thresholds[m] else 0
                            else:
                                xss = 1 if u01(fb) < theta[n, kk, m] else 0
                        elif not full:
                            u01(fb)  # stream stays aligned across outcomes
                    else:
                        if full:
                            p2v = dpow(shadow_mu[n], shadow_sigma, fb)
                            xss = 1 if tx * p2v / denom >= thresholds[m] else 0
                        else:
                            xss = 1 if u01(fb) < theta_direct[n, m] else 0
                    succ[n] = 1.0 if xss else 0.0

                # 6. learner updates and accounting, player order
                for n in range(N):
                    x = succ[n]
                    if kind == 0:
                        if patterns[n] == 1:
                            eta = etas[n]
                            ph = phase[n]
                            ca = cur_arm[n]
                            if ph == 0:
                                if eta == 1:
                                    v[n, ca] += 1.0
                                    qst[n, ca] += x
                            elif ph == 1:
                                zz = zarr[n]
                                if mood[n] == CONTENT:
                                    F[n, zz, ca] += 1.0
                                u = (<double> eta) * th_hat[n, ca] * util_scale[ca]
                                if not (ca == baseline[n] and u > 0.0
                                        and mood[n] == CONTENT):
                                    baseline[n] = ca
                                    if u <= 0.0 or u_max[n] <= 0.0:
                                        mood[n] = DISCONTENT
                                    else:
                                        pr = (u / u_max[n]) * pow(game_epsilon,
                                                                  u_max[n] - u)
                                        if pr >= 1.0:
                                            mood[n] = CONTENT
                                        elif u01(pbg[n]) < pr:
                                            mood[n] = CONTENT
                                        else:
                                            mood[n] = DISCONTENT
                            else:
                                if thompson and etas[n] == 1:
                                    a1[n, cur_sf[n]] += x
                                    b1[n, cur_sf[n]] += 1.0 - x
                        else:
                            if thompson:
                                a2[n, cur_sf[n]] += x
                                b2[n, cur_sf[n]] += 1.0 - x
                    elif kind == 1:
                        if patterns[n] == 1:
                            q_reward[n] = rates_mbps[cur_sf[n]] * etas[n] * x
                        else:
                            q_reward[n] = rates_mbps[cur_sf[n]] * x
                        tb = <int> busy[q_last[n]]
                        if tb:
                            follow = q_busy[n, 0]
                            for m in range(1, M):
                                if q_busy[n, m] > follow:
                                    follow = q_busy[n, m]
                        else:
                            follow = q_idle[n, 0]
                            for m in range(1, KM):
                                if q_idle[n, m] > follow:
                                    follow = q_idle[n, m]
                        if q_ptbl[n] == 1:
                            q_busy[n, q_pidx[n]] += qlr * (q_reward[n]
                                                           + qdisc * follow
                                                           - q_busy[n, q_pidx[n]])
                        else:
                            q_idle[n, q_pidx[n]] += qlr * (q_reward[n]
                                                           + qdisc * follow
                                                           - q_idle[n, q_pidx[n]])
                        q_state[n] = tb

                    # metrics
                    m = sfs[n]
                    coll = 0
                    if patterns[n] == 1:
                        w[n, riss[n] * M + m] += 1
                        if etas[n] == 1:
                            reward = mu[n, riss[n], m]
                            cum_real[0] += rates_mbps[m] * x
                        else:
                            reward = 0.0
                            counters[0] += 1
                            coll = 1
                    else:
                        w[n, KM + m] += 1
                        reward = mu_direct[n, m]
                        cum_real[0] += rates_mbps[m] * x
                        if riss[n] >= 0:
                            counters[1] += 1
                    cum_player[n] += reward
                    if trace:
                        ti = t * N + n
                        tr_slot[ti] = slot
                        tr_player[ti] = <cnp.int32_t> n
                        tr_pattern[ti] = <cnp.int8_t> patterns[n]
                        tr_ris[ti] = <cnp.int32_t> riss[n]
                        tr_sf[ti] = <cnp.int32_t> m
                        tr_collision[ti] = <cnp.int8_t> coll
                        tr_success[ti] = <cnp.int8_t> (1 if x > 0.0 else 0)
                        tr_reward[ti] = reward

                    # phase/epoch bookkeeping for this player's slot
                    if flagged[n] == 1 and kind == 0:
                        sip[n] += 1
                        if sip[n] >= cur_len[n, phase[n]]:
                            sip[n] = 0
                            ph = phase[n]
                            if ph == 0:
                                for aa in range(A):
                                    if v[n, aa] > 0.0:
                                        th_hat[n, aa] = qst[n, aa] / v[n, aa]
                                    else:
                                        th_hat[n, aa] = 0.0
                                um = th_hat[n, 0] * util_scale[0]
                                for aa in range(1, A):
                                    val = th_hat[n, aa] * util_scale[aa]
                                    if val > um:
                                        um = val
                                u_max[n] = um
                                phase[n] = 1
                                mood[n] = CONTENT
                                zz = zarr[n]
                                for aa in range(A):
                                    F[n, zz, aa] = 0.0
                                ref = zz - zz // 2 - 1
                                if ref >= 1 and last_choice[n, ref] >= 0:
                                    baseline[n] = last_choice[n, ref]
                                else:
                                    baseline[n] = rand_idx(pbg[n], A)
                            elif ph == 1:
                                zz = zarr[n]
                                for aa in range(A):
                                    window[aa] = 0.0
                                for j in range(zz // 2 + 1):
                                    e = zz - j
                                    if e >= 1:
                                        for aa in range(A):
                                            window[aa] += F[n, e, aa]
                                bi = 0
                                bv = window[0]
                                for aa in range(1, A):
                                    if window[aa] > bv:
                                        bi = aa
                                        bv = window[aa]
                                k_star[n] = bi
                                if adaptive and zz >= 2:
                                    t1s = 0.0
                                    for aa in range(A):
                                        t1s += F[n, zz, aa]
                                    t2s = 0.0
                                    for aa in range(A):
                                        t2s += F[n, zz - 1, aa]
                                    if t1s <= 0.0 or t2s <= 0.0:
                                        eps_arr[n] = 1.0
                                    else:
                                        cumd = 0.0
                                        acc = 0.0
                                        for aa in range(A):
                                            cumd += (F[n, zz, aa] / t1s
                                                     - F[n, zz - 1, aa] / t2s)
                                            acc += fabs(cumd)
                                        eps_arr[n] = acc if acc < 1.0 else 1.0
                                phase[n] = 2
                            else:
                                if thompson:
                                    bv = 0.0
                                    t1s = a1[n, 0] + b1[n, 0]
                                    if t1s > 0.0:
                                        bv = rates_e2[0] * (a1[n, 0] / t1s)
                                    bi = 0
                                    for m in range(1, M):
                                        t1s = a1[n, m] + b1[n, m]
                                        if t1s > 0.0:
                                            val = rates_e2[m] * (a1[n, m] / t1s)
                                        else:
                                            val = 0.0
                                        if val > bv:
                                            bi = m
                                            bv = val
                                    c_star[n] = bi
                                zarr[n] += 1
                                phase[n] = 0
                                if zarr[n] <= Z:
                                    cur_len[n, 0] = lengths[zarr[n] - 1, 0]
                                    cur_len[n, 1] = lengths[zarr[n] - 1, 1]
                                    cur_len[n, 2] = lengths[zarr[n] - 1, 2]

                # snapshots at grid points and epoch ends
                if gi < G and slot == grid[gi]:
                    for n in range(N):
                        thr_player[n, gi] = cum_player[n] / <double> slot
                    realized_regret[gi] = cum_real[1] - cum_real[0]
                    gi += 1
                if ei < E and slot == epoch_ends[ei]:
                    for n in range(N):
                        for aa in range(A2):
                            w_epochs[ei, n, aa] = w[n, aa]
                    total = 0.0
                    for p_ in range(N):
                        for kk in range(K):
                            for m in range(M):
                                total += (w[p_, kk * M + m]
                                          * (bench1[p_] - mu[p_, kk, m]))
                        for m in range(M):
                            total += (w[p_, KM + m]
                                      * (bench2[p_] - mu_direct[p_, m]))
                    pseudo[ei] = total
                    ei += 1
    finally:
        free(pbg)
