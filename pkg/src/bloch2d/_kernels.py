"""Compiled stencil and RK4 loops on a zero-padded grid.

The wave function lives in a ``(L + 2p) x (L + 2p)`` array whose outer ``p``
rows and columns (``p`` = hopping reach) stay zero. Every hopping then becomes
a contiguous shifted read over the flattened interior span, and the open
boundary falls out of the zero ghosts plus a 0/1 ``mask`` that clears the
ghost columns inside that span.

``H`` is real, so real and imaginary parts are stored as two float64 planes
and go through the stencil separately; real loops vectorize far better than
complex ones. Indices are unsigned so numba drops its negative-index
wraparound test. The span is processed in chunks that stay in cache between
the stencil and the RK4 update.
"""

from __future__ import annotations

import numba as nb
import numpy as np

CHUNK = 2048


@nb.njit(cache=True, error_model="numpy")
def stencil_chunk(x, h, lo, m, group_ptr, shifts, coefs, diag, mask):
    """``h[:m] = (H x)[lo:lo + m]`` for one real plane ``x``.

    Hoppings sharing one value form a group (``shifts[group_ptr[g]:group_ptr[g+1]]``)
    and are summed before the multiply, six or two shifted streams per pass.
    """
    for p in range(m):
        h[p] = diag[lo + p] * x[lo + p]
    base = np.int64(lo)
    for g in range(coefs.shape[0]):
        c = coefs[g]
        k = group_ptr[g]
        k_end = group_ptr[g + 1]
        while k + 6 <= k_end:
            a0 = np.uint64(base + shifts[k])
            a1 = np.uint64(base + shifts[k + 1])
            a2 = np.uint64(base + shifts[k + 2])
            a3 = np.uint64(base + shifts[k + 3])
            a4 = np.uint64(base + shifts[k + 4])
            a5 = np.uint64(base + shifts[k + 5])
            for p in range(m):
                h[p] += c * (x[a0 + p] + x[a1 + p] + x[a2 + p] + x[a3 + p] + x[a4 + p] + x[a5 + p])
            k += 6
        while k + 2 <= k_end:
            a0 = np.uint64(base + shifts[k])
            a1 = np.uint64(base + shifts[k + 1])
            for p in range(m):
                h[p] += c * (x[a0 + p] + x[a1 + p])
            k += 2
        while k < k_end:
            a0 = np.uint64(base + shifts[k])
            for p in range(m):
                h[p] += c * x[a0 + p]
            k += 1
    for p in range(m):
        h[p] *= mask[lo + p]


@nb.njit(cache=True, error_model="numpy")
def apply_stencil(x, out, group_ptr, shifts, coefs, diag, mask, start, stop):
    """``out = H x`` on the span ``[start, stop)`` of one flat real plane."""
    h = np.empty(CHUNK)
    lo = np.uint64(start)
    end = np.uint64(stop)
    while lo < end:
        m = min(np.uint64(CHUNK), end - lo)
        stencil_chunk(x, h, lo, m, group_ptr, shifts, coefs, diag, mask)
        for p in range(m):
            out[lo + p] = h[p]
        lo += m


@nb.njit(cache=True, error_model="numpy")
def rk4_steps(psi, nsteps, dt, group_ptr, shifts, coefs, diag, mask, start, stop, work):
    """Advance ``i dpsi/dt = H psi`` by ``nsteps`` classic RK4 steps in place.

    ``psi`` is ``(2, size)``: real and imaginary planes. ``work`` is a
    ``(3, 2, size)`` scratch buffer whose ghost entries must be zero. Stage
    inputs alternate between two buffers so a chunk never overwrites values
    that a later chunk still reads.
    """
    hr = np.empty(CHUNK)
    hi = np.empty(CHUNK)
    half = 0.5 * dt
    sixth = dt / 6.0
    acc = work[0]
    ta = work[1]
    tb = work[2]
    pr = psi[0]
    pi = psi[1]
    ar = acc[0]
    ai = acc[1]
    end = np.uint64(stop)
    for _ in range(nsteps):
        for stage in range(4):
            if stage == 0:
                x = psi
                dst = ta
            elif stage == 1:
                x = ta
                dst = tb
            elif stage == 2:
                x = tb
                dst = ta
            else:
                x = ta
                dst = psi
            xr = x[0]
            xi = x[1]
            dr = dst[0]
            di = dst[1]
            lo = np.uint64(start)
            while lo < end:
                m = min(np.uint64(CHUNK), end - lo)
                stencil_chunk(xr, hr, lo, m, group_ptr, shifts, coefs, diag, mask)
                stencil_chunk(xi, hi, lo, m, group_ptr, shifts, coefs, diag, mask)
                # k = -i H x:  re k = H xi,  im k = -H xr
                if stage == 0:
                    for p in range(m):
                        q = lo + p
                        ar[q] = hi[p]
                        ai[q] = -hr[p]
                        dr[q] = pr[q] + half * hi[p]
                        di[q] = pi[q] - half * hr[p]
                elif stage == 1:
                    for p in range(m):
                        q = lo + p
                        ar[q] += 2.0 * hi[p]
                        ai[q] -= 2.0 * hr[p]
                        dr[q] = pr[q] + half * hi[p]
                        di[q] = pi[q] - half * hr[p]
                elif stage == 2:
                    for p in range(m):
                        q = lo + p
                        ar[q] += 2.0 * hi[p]
                        ai[q] -= 2.0 * hr[p]
                        dr[q] = pr[q] + dt * hi[p]
                        di[q] = pi[q] - dt * hr[p]
                else:
                    for p in range(m):
                        q = lo + p
                        pr[q] += sixth * (ar[q] + hi[p])
                        pi[q] += sixth * (ai[q] - hr[p])
                lo += m
