"""Inner-loop kernels for the U-statistic term sums.

The structured term sum is the hot path of every Monte Carlo experiment;
a compiled kernel (numba, when importable) walks tuples serially with
explicit 2x2 complex algebra, and a vectorized numpy implementation
provides the fallback.  Both produce identical values up to float
summation order.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _structured_term_sum_jit(factors, g, g2, tuples, mu, inv2k):  # pragma: no cover - compiled
    n_tuples, t = tuples.shape
    n_qubits = factors.shape[1]
    total = 0.0 + 0.0j
    pref = np.empty((t + 1, 2, 2), np.complex128)
    suff = np.empty((t + 1, 2, 2), np.complex128)
    fstate = np.empty((t, 4), np.complex128)  # f00, f10, f01, f11 per layout
    for bi in range(n_tuples):
        for l in range(t):
            fstate[l, 0] = 1.0
            fstate[l, 1] = 0.0
            fstate[l, 2] = 0.0
            fstate[l, 3] = 0.0
        for j in range(n_qubits):
            pref[0, 0, 0] = 1.0
            pref[0, 0, 1] = 0.0
            pref[0, 1, 0] = 0.0
            pref[0, 1, 1] = 1.0
            for s in range(t):
                m = tuples[bi, s]
                x00 = factors[m, j, 0, 0]
                x01 = factors[m, j, 0, 1]
                x10 = factors[m, j, 1, 0]
                x11 = factors[m, j, 1, 1]
                pref[s + 1, 0, 0] = pref[s, 0, 0] * x00 + pref[s, 0, 1] * x10
                pref[s + 1, 0, 1] = pref[s, 0, 0] * x01 + pref[s, 0, 1] * x11
                pref[s + 1, 1, 0] = pref[s, 1, 0] * x00 + pref[s, 1, 1] * x10
                pref[s + 1, 1, 1] = pref[s, 1, 0] * x01 + pref[s, 1, 1] * x11
            suff[t, 0, 0] = 1.0
            suff[t, 0, 1] = 0.0
            suff[t, 1, 0] = 0.0
            suff[t, 1, 1] = 1.0
            for s in range(t - 1, -1, -1):
                m = tuples[bi, s]
                x00 = factors[m, j, 0, 0]
                x01 = factors[m, j, 0, 1]
                x10 = factors[m, j, 1, 0]
                x11 = factors[m, j, 1, 1]
                suff[s, 0, 0] = x00 * suff[s + 1, 0, 0] + x01 * suff[s + 1, 1, 0]
                suff[s, 0, 1] = x00 * suff[s + 1, 0, 1] + x01 * suff[s + 1, 1, 1]
                suff[s, 1, 0] = x10 * suff[s + 1, 0, 0] + x11 * suff[s + 1, 1, 0]
                suff[s, 1, 1] = x10 * suff[s + 1, 0, 1] + x11 * suff[s + 1, 1, 1]
            g00 = g[j, 0, 0]
            g01 = g[j, 0, 1]
            g10 = g[j, 1, 0]
            g11 = g[j, 1, 1]
            q00 = g2[j, 0, 0]
            q01 = g2[j, 0, 1]
            q10 = g2[j, 1, 0]
            q11 = g2[j, 1, 1]
            # merged layout: full product F = pref[t]
            f00 = pref[t, 0, 0]
            f01 = pref[t, 0, 1]
            f10 = pref[t, 1, 0]
            f11 = pref[t, 1, 1]
            a = f00 + f11
            bm = g00 * f00 + g01 * f10 + g10 * f01 + g11 * f11
            em = q00 * f00 + q01 * f10 + q10 * f01 + q11 * f11
            s11 = fstate[0, 3] * a + fstate[0, 1] * bm + fstate[0, 2] * bm + fstate[0, 0] * em
            s10 = fstate[0, 1] * a + fstate[0, 0] * bm
            s01 = fstate[0, 2] * a + fstate[0, 0] * bm
            fstate[0, 0] = fstate[0, 0] * a
            fstate[0, 1] = s10
            fstate[0, 2] = s01
            fstate[0, 3] = s11
            for l in range(1, t):
                p00 = pref[l, 0, 0]
                p01 = pref[l, 0, 1]
                p10 = pref[l, 1, 0]
                p11 = pref[l, 1, 1]
                r00 = suff[l, 0, 0]
                r01 = suff[l, 0, 1]
                r10 = suff[l, 1, 0]
                r11 = suff[l, 1, 1]
                # gQ = g @ P, gR = g @ R
                gq00 = g00 * p00 + g01 * p10
                gq01 = g00 * p01 + g01 * p11
                gq10 = g10 * p00 + g11 * p10
                gq11 = g10 * p01 + g11 * p11
                gr00 = g00 * r00 + g01 * r10
                gr01 = g00 * r01 + g01 * r11
                gr10 = g10 * r00 + g11 * r10
                gr11 = g10 * r01 + g11 * r11
                a = p00 * r00 + p01 * r10 + p10 * r01 + p11 * r11
                b = gq00 * r00 + gq01 * r10 + gq10 * r01 + gq11 * r11
                c = p00 * gr00 + p01 * gr10 + p10 * gr01 + p11 * gr11
                e = gq00 * gr00 + gq01 * gr10 + gq10 * gr01 + gq11 * gr11
                s11 = fstate[l, 3] * a + fstate[l, 1] * c + fstate[l, 2] * b + fstate[l, 0] * e
                s10 = fstate[l, 1] * a + fstate[l, 0] * b
                s01 = fstate[l, 2] * a + fstate[l, 0] * c
                fstate[l, 0] = fstate[l, 0] * a
                fstate[l, 1] = s10
                fstate[l, 2] = s01
                fstate[l, 3] = s11
        term = (mu[0] + mu[t]) * fstate[0, 3]
        for l in range(1, t):
            term += mu[l] * fstate[l, 3]
        total += term
    return total * inv2k


def structured_term_sum(factors, g, tuples, mu, k) -> complex:
    """Compiled-series sum over tuples; falls back to the caller's numpy path."""
    g2 = np.matmul(g, g)
    mu_arr = np.asarray(mu, dtype=np.float64)
    return complex(
        _structured_term_sum_jit(
            np.ascontiguousarray(factors, dtype=np.complex128),
            np.ascontiguousarray(g, dtype=np.complex128),
            np.ascontiguousarray(g2, dtype=np.complex128),
            np.ascontiguousarray(tuples, dtype=np.int64),
            mu_arr,
            1.0 / (2.0**k),
        )
    )
