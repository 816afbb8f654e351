"""Compiled site loops for the two dense Gibbs sweeps.

Both kernels mutate their array arguments in place and consume exactly one
pre-drawn uniform per visited site, whether or not the site changes. That
fixed consumption makes a sweep bit-reproducible from the caller's stream
position alone.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def substate_sweep(S, resid, m0, m1, F, Fsq, Phi, u, grid_values, sigma_z2,
                   a0, a1, use_action, reweight, update_counts, exclude_self,
                   n_actions, uniforms):
    """One pass over all (n, k) substate sites in row-major order.

    resid must equal Z - S F on entry and is kept consistent throughout.
    m0/m1 hold per-feature zero/nonzero column counts; with exclude_self
    they are read minus the visited entry and updated after each draw.
    """
    N, K = S.shape
    L = grid_values.shape[0]
    D = resid.shape[1]
    log_spread = np.log(L - 1.0)
    logw = np.empty(L)
    w = np.empty(L)
    for n in range(N):
        un = u[n]
        for k in range(K):
            s_cur = S[n, k]
            c1 = 0.0
            for d in range(D):
                c1 += resid[n, d] * F[k, d]
            c2 = Fsq[k]

            m0_ex = m0[k]
            m1_ex = m1[k]
            if exclude_self:
                if s_cur == 0.0:
                    m0_ex -= 1.0
                else:
                    m1_ex -= 1.0
            lp_zero = np.log(m0_ex + a0)
            lp_nonzero = np.log(m1_ex + a1) - log_spread

            phi_ku = Phi[k, un]
            tot_base = -s_cur
            dot_base = -s_cur * phi_ku
            if use_action:
                for j in range(K):
                    tot_base += S[n, j]
                    dot_base += S[n, j] * Phi[j, un]

            for l in range(L):
                v = grid_values[l]
                delta = v - s_cur
                lw = (2.0 * delta * c1 - delta * delta * c2) / (2.0 * sigma_z2)
                if use_action:
                    tot2 = tot_base + v
                    if tot2 > 0.0:
                        p = (dot_base + v * phi_ku) / tot2
                    else:
                        p = 1.0 / n_actions
                    if p < 1e-300:
                        p = 1e-300
                    la = np.log(p)
                    if reweight:
                        la *= D
                    lw += la
                lw += lp_zero if l == 0 else lp_nonzero
                logw[l] = lw

            mx = logw[0]
            for l in range(1, L):
                if logw[l] > mx:
                    mx = logw[l]
            total = 0.0
            for l in range(L):
                w[l] = np.exp(logw[l] - mx)
                total += w[l]
            target = uniforms[n, k] * total
            acc = 0.0
            idx = L - 1
            for l in range(L):
                acc += w[l]
                if acc > target:
                    idx = l
                    break

            v_new = grid_values[idx]
            if v_new != s_cur:
                delta = v_new - s_cur
                for d in range(D):
                    resid[n, d] -= delta * F[k, d]
                S[n, k] = v_new
                if update_counts:
                    if s_cur == 0.0:
                        m0[k] -= 1.0
                        m1[k] += 1.0
                    elif v_new == 0.0:
                        m0[k] += 1.0
                        m1[k] -= 1.0


@njit(cache=True)
def activation_sites(A, W, S, resid, m, sigma_z2, a0, b0, uniforms, ks, ds):
    """Redraw the listed activation sites in order.

    Prior odds for a_{k,d}=1 are (a0 + m_ex) : (b0 + D - 1 - m_ex) with
    m_ex the row count excluding the site; a0=0 recovers the bare
    feature-count prior where an otherwise-empty row forces inactive.
    resid must equal Z - S(A*W) on entry; m holds row activation counts.
    """
    N, D = resid.shape
    for i in range(ks.shape[0]):
        k = ks[i]
        d = ds[i]
        m_ex = m[k] - A[k, d]
        u01 = uniforms[i]
        w_on = a0 + m_ex
        if w_on <= 0.0:
            new = 0
        else:
            wkd = W[k, d]
            diff = 0.0
            if A[k, d] == 1:
                for n in range(N):
                    r_on = resid[n, d]
                    r_off = r_on + S[n, k] * wkd
                    diff += r_off * r_off - r_on * r_on
            else:
                for n in range(N):
                    r_off = resid[n, d]
                    r_on = r_off - S[n, k] * wkd
                    diff += r_off * r_off - r_on * r_on
            lam = np.log(w_on) - np.log(b0 + D - 1.0 - m_ex) + diff / (2.0 * sigma_z2)
            if lam >= 0.0:
                p_on = 1.0 / (1.0 + np.exp(-lam))
            else:
                e = np.exp(lam)
                p_on = e / (1.0 + e)
            new = 1 if u01 < p_on else 0
        if new != A[k, d]:
            wkd = W[k, d]
            if new == 1:
                for n in range(N):
                    resid[n, d] -= S[n, k] * wkd
                m[k] += 1
            else:
                for n in range(N):
                    resid[n, d] += S[n, k] * wkd
                m[k] -= 1
            A[k, d] = new
