"""Numba kernels for the heat-bath sweep.

Kept separate so the rest of the package stays importable and debuggable
without JIT compilation costs.  The sweep visits sites in fixed order
0..N-1 and consumes exactly one uniform per site visit, so the sample
stream is a pure function of the uniform stream regardless of how many
proposals change the spin.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def heat_bath_sweeps(J, theta_ext, x, xidx, theta_cache, atoms, logw,
                     lam_n, tlam_n, h_site, d_last_extra, uniforms, record,
                     do_record):
    """Run uniforms.shape[0] sweeps in place; optionally record atom indices.

    theta_cache must equal J @ x on entry and is maintained incrementally;
    the caller recomputes it periodically to bound floating-point drift.
    b_i is reconstructed from the running sum of x_j^2 using the two-level
    coupling structure (tail site scaled by t).
    """
    n_sweeps = uniforms.shape[0]
    N = x.shape[0]
    K = atoms.shape[0]
    L = N - 1
    logits = np.empty(K)
    sxx = 0.0
    for j in range(N):
        sxx += x[j] * x[j]
    for s in range(n_sweeps):
        for i in range(N):
            theta = theta_cache[i] + theta_ext[i]
            xi2 = x[i] * x[i]
            xl2 = x[L] * x[L]
            if i == L:
                b = tlam_n * (sxx - xl2) + h_site + d_last_extra
            else:
                b = lam_n * (sxx - xi2 - xl2) + tlam_n * xl2 + h_site
            mx = -np.inf
            for k in range(K):
                v = logw[k] + theta * atoms[k] - 0.5 * b * atoms[k] * atoms[k]
                logits[k] = v
                if v > mx:
                    mx = v
            tot = 0.0
            for k in range(K):
                logits[k] = np.exp(logits[k] - mx)
                tot += logits[k]
            u = uniforms[s, i] * tot
            knew = K - 1
            acc = 0.0
            for k in range(K):
                acc += logits[k]
                if u < acc:
                    knew = k
                    break
            if knew != xidx[i]:
                delta = atoms[knew] - x[i]
                for j in range(N):  # J has zero diagonal, so i's own field is untouched
                    theta_cache[j] += J[j, i] * delta
                sxx += atoms[knew] * atoms[knew] - xi2
                x[i] = atoms[knew]
                xidx[i] = knew
        if do_record:
            for j in range(N):
                record[s, j] = xidx[j]
