# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Loops over the slices of each term literally: for every ``first`` of the
view an odometer walks the spanned multi-index, and amplitude
``first + sum_j i_j * stride_j`` feeds ``first + sum_j (i_j + offset_j) * stride_j``.
The adaptive Cash-Karp step runs entirely in C on top of that.
"""

import numpy as np

from qtraj.errors import StiffnessError
from qtraj._program import valid_range

from libc.math cimport exp, cos, sin, fabs, pow, sqrt, INFINITY

NAME = "cython"

# amplitudes below the normal range carry no information but make x86 arithmetic
# very slow, so the step loops run with flush-to-zero and the caller's mode is restored
cdef extern from *:
    """
    #if defined(__SSE__) || defined(_M_X64)
    #include <xmmintrin.h>
    static unsigned int qtraj_ftz_on(void) {
        unsigned int old = _mm_getcsr();
        _mm_setcsr(old | 0x8040);
        return old;
    }
    static void qtraj_ftz_off(unsigned int old) { _mm_setcsr(old); }
    #else
    static unsigned int qtraj_ftz_on(void) { return 0; }
    static void qtraj_ftz_off(unsigned int old) { (void)old; }
    #endif
    """
    unsigned int qtraj_ftz_on() nogil
    void qtraj_ftz_off(unsigned int old) nogil

cdef enum:
    MAX_AXES = 8
    RESYNC = 8

# must match qtraj.integrate
cdef double A2 = 0.2, A3 = 0.3, A4 = 0.6, A5 = 1.0, A6 = 0.875
cdef double B21 = 0.2
cdef double B31 = 3.0 / 40.0, B32 = 9.0 / 40.0
cdef double B41 = 0.3, B42 = -0.9, B43 = 1.2
cdef double B51 = -11.0 / 54.0, B52 = 2.5, B53 = -70.0 / 27.0, B54 = 35.0 / 27.0
cdef double B61 = 1631.0 / 55296.0, B62 = 175.0 / 512.0, B63 = 575.0 / 13824.0
cdef double B64 = 44275.0 / 110592.0, B65 = 253.0 / 4096.0
cdef double C1 = 37.0 / 378.0, C3 = 250.0 / 621.0, C4 = 125.0 / 594.0, C6 = 512.0 / 1771.0
cdef double DC1 = 37.0 / 378.0 - 2825.0 / 27648.0
cdef double DC3 = 250.0 / 621.0 - 18575.0 / 48384.0
cdef double DC4 = 125.0 / 594.0 - 13525.0 / 55296.0
cdef double DC5 = -277.0 / 14336.0
cdef double DC6 = 512.0 / 1771.0 - 0.25
cdef double SAFETY = 0.9, PGROW = -0.2, PSHRNK = -0.25, ERRCON = 1.89e-4
cdef double MAX_GROWTH = 5.0, MIN_SHRINK = 0.1, UNDERFLOW = 1e-12


cdef inline double complex _cexp(double complex z) nogil:
    cdef double r = exp(z.real)
    return r * cos(z.imag) + 1j * (r * sin(z.imag))


cdef inline double _cabs(double complex z) nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef class TermProgram:
    """Sum of shifted-diagonal product terms acting on a flat state of length ``n``."""

    cdef readonly Py_ssize_t n
    cdef readonly Py_ssize_t nterms
    cdef Py_ssize_t[::1] firsts
    cdef Py_ssize_t[::1] t_first, t_nfirst, t_ax, t_nax
    cdef double complex[::1] t_coef
    cdef Py_ssize_t[::1] ax_stride, ax_lo, ax_hi, ax_offset, ax_pool
    cdef unsigned char[::1] ax_timedep
    cdef double complex[::1] ax_lin_a, ax_lin_b
    cdef double complex[::1] diag_pool, expo_pool, eff_pool, rest_pool
    cdef double complex[::1] k1, k2, k3, k4, k5, k6, ytmp, ynew, yerr
    cdef double[::1] scale

    def __init__(self, n, terms):
        self.n = n
        kept = []
        for spec in terms:
            if len(spec.axes) > MAX_AXES:
                raise ValueError(f"terms may span at most {MAX_AXES} factors")
            if all(lo < hi for lo, hi in (valid_range(a.dim, a.offset) for a in spec.axes)):
                kept.append(spec)
        self.nterms = len(kept)
        firsts, t_first, t_nfirst, t_ax, t_nax, t_coef = [], [], [], [], [], []
        strides, los, his, offsets, pools, timedep = [], [], [], [], [], []
        lin_a, lin_b = [], []
        diag_parts, expo_parts = [], []
        pool = 0
        nfirst = 0
        for spec in kept:
            f = np.asarray(spec.firsts, dtype=np.intp)
            firsts.append(f)
            t_first.append(nfirst)
            t_nfirst.append(len(f))
            nfirst += len(f)
            t_ax.append(len(strides))
            t_nax.append(len(spec.axes))
            t_coef.append(complex(spec.coef))
            for ax in spec.axes:
                lo, hi = valid_range(ax.dim, ax.offset)
                strides.append(ax.stride)
                los.append(lo)
                his.append(hi)
                offsets.append(ax.offset)
                pools.append(pool)
                diag_parts.append(np.asarray(ax.diag, dtype=complex))
                lin_a.append(0)
                lin_b.append(0)
                if ax.expo is None:
                    timedep.append(0)
                    expo_parts.append(np.zeros(ax.dim, dtype=complex))
                else:
                    e = np.asarray(ax.expo, dtype=complex)
                    expo_parts.append(e)
                    timedep.append(1)
                    # exponents linear in the source index allow a recurrence
                    if hi - lo >= 2:
                        s = np.arange(lo, hi)
                        b = e[lo + 1] - e[lo]
                        a = e[lo] - b * lo
                        if np.allclose(e[lo:hi], a + b * s, rtol=0, atol=1e-13 * (1 + np.abs(e[lo:hi]).max())):
                            last = len(timedep) - 1
                            timedep[last] = 2
                            lin_a[last] = a
                            lin_b[last] = b
                pool += ax.dim

        def ints(x):
            return np.ascontiguousarray(np.asarray(x, dtype=np.intp).reshape(-1))

        self.firsts = ints(np.concatenate(firsts) if firsts else [])
        self.t_first = ints(t_first)
        self.t_nfirst = ints(t_nfirst)
        self.t_ax = ints(t_ax)
        self.t_nax = ints(t_nax)
        self.t_coef = np.asarray(t_coef, dtype=complex).reshape(-1)
        self.ax_stride = ints(strides)
        self.ax_lo = ints(los)
        self.ax_hi = ints(his)
        self.ax_offset = ints(offsets)
        self.ax_pool = ints(pools)
        self.ax_timedep = np.asarray(timedep, dtype=np.uint8).reshape(-1)
        self.ax_lin_a = np.asarray(lin_a, dtype=complex).reshape(-1)
        self.ax_lin_b = np.asarray(lin_b, dtype=complex).reshape(-1)
        self.diag_pool = np.concatenate(diag_parts) if diag_parts else np.zeros(0, complex)
        self.expo_pool = np.concatenate(expo_parts) if expo_parts else np.zeros(0, complex)
        self.eff_pool = np.array(self.diag_pool, dtype=complex)
        # factors at tau = 0, with each term's coefficient folded into its first axis
        rest = np.array(self.diag_pool, dtype=complex)
        for t in range(self.nterms):
            a = t_ax[t]
            rest[pools[a]:pools[a] + len(diag_parts[a])] *= t_coef[t]
        self.rest_pool = rest
        self.k1 = np.zeros(n, complex)
        self.k2 = np.zeros(n, complex)
        self.k3 = np.zeros(n, complex)
        self.k4 = np.zeros(n, complex)
        self.k5 = np.zeros(n, complex)
        self.k6 = np.zeros(n, complex)
        self.ytmp = np.zeros(n, complex)
        self.ynew = np.zeros(n, complex)
        self.yerr = np.zeros(n, complex)
        self.scale = np.zeros(n, float)

    cdef void _accumulate(self, double tau, double complex* psi, double complex* dpsi) noexcept nogil:
        cdef Py_ssize_t t, j, a, s, f, nax, p, first, base, shift, nf, f0, last, k, lo_l, hi_l, st_l
        cdef Py_ssize_t lo[MAX_AXES]
        cdef Py_ssize_t hi[MAX_AXES]
        cdef Py_ssize_t idx[MAX_AXES]
        cdef Py_ssize_t stride[MAX_AXES]
        cdef double complex* eff[MAX_AXES]
        cdef double complex c, w, ratio, phase = 1
        cdef double complex* e
        cdef double complex* effp = &self.eff_pool[0] if self.eff_pool.shape[0] else NULL
        cdef double complex* restp = &self.rest_pool[0] if self.rest_pool.shape[0] else NULL
        for t in range(self.nterms):
            nax = self.t_nax[t]
            shift = 0
            for j in range(nax):
                a = self.t_ax[t] + j
                lo[j] = self.ax_lo[a]
                hi[j] = self.ax_hi[a]
                stride[j] = self.ax_stride[a]
                shift += self.ax_offset[a] * stride[j]
                p = self.ax_pool[a]
                # factors at tau = 0 (coefficient folded into the first axis) are precomputed
                if self.ax_timedep[a] == 0 or tau == 0:
                    eff[j] = restp + p
                    continue
                eff[j] = effp + p
                c = self.t_coef[t] if j == 0 else 1
                if self.ax_timedep[a] == 1:
                    for s in range(lo[j], hi[j]):
                        effp[p + s] = c * self.diag_pool[p + s] * _cexp(tau * self.expo_pool[p + s])
                else:
                    # exp(tau (a + b s)) by recurrence, re-anchored every RESYNC entries
                    ratio = _cexp(tau * self.ax_lin_b[a])
                    k = 0
                    for s in range(lo[j], hi[j]):
                        if k == 0:
                            phase = c * _cexp(tau * self.expo_pool[p + s])
                            k = RESYNC
                        else:
                            phase = phase * ratio
                        k -= 1
                        effp[p + s] = self.diag_pool[p + s] * phase
            f0 = self.t_first[t]
            nf = self.t_nfirst[t]
            if nax == 0:
                c = self.t_coef[t]
                for f in range(nf):
                    first = self.firsts[f0 + f]
                    dpsi[first] += c * psi[first]
                continue
            last = nax - 1
            lo_l = lo[last]
            hi_l = hi[last]
            st_l = stride[last]
            e = eff[last]
            for f in range(nf):
                first = self.firsts[f0 + f]
                for j in range(last):
                    idx[j] = lo[j]
                while True:
                    # odometer over all but the last axis, plain loop over the last
                    base = first
                    w = 1
                    for j in range(last):
                        base += idx[j] * stride[j]
                        w = w * eff[j][idx[j]]
                    if last == 0:
                        for s in range(lo_l, hi_l):
                            dpsi[base + s * st_l + shift] += e[s] * psi[base + s * st_l]
                    else:
                        for s in range(lo_l, hi_l):
                            dpsi[base + s * st_l + shift] += (w * e[s]) * psi[base + s * st_l]
                    j = last - 1
                    while j >= 0:
                        idx[j] += 1
                        if idx[j] < hi[j]:
                            break
                        idx[j] = lo[j]
                        j -= 1
                    if j < 0:
                        break

    cdef void _rhs(self, double tau, double complex* y, double complex* out) noexcept nogil:
        cdef Py_ssize_t i
        for i in range(self.n):
            out[i] = 0
        self._accumulate(tau, y, out)

    def accumulate(self, double tau, double complex[::1] psi, double complex[::1] dpsi):
        """``dpsi += H(tau) psi`` for every term."""
        if psi.shape[0] != self.n or dpsi.shape[0] != self.n:
            raise ValueError("state length does not match the program")
        cdef unsigned int csr
        if self.n:
            with nogil:
                csr = qtraj_ftz_on()
                self._accumulate(tau, &psi[0], &dpsi[0])
                qtraj_ftz_off(csr)

    def rhs(self, double tau, psi):
        out = np.zeros(self.n, dtype=complex)
        self.accumulate(tau, np.ascontiguousarray(psi, dtype=complex), out)
        return out

    def ck_step(self, y0, double t, double h, double eps, double t_scale, double floor=1e-30):
        """Adaptive Cash-Karp step of ``dy/dt = rhs(t, y)``.

        Returns ``(y_new, hdid, hnext, nfev)``.
        """
        cdef double complex[::1] y = np.ascontiguousarray(y0, dtype=complex)
        cdef Py_ssize_t i, n = self.n
        cdef double errmax, e, hnext
        cdef int nfev = 1
        cdef double complex* yp = &y[0]
        cdef double complex* k1 = &self.k1[0]
        cdef double complex* k2 = &self.k2[0]
        cdef double complex* k3 = &self.k3[0]
        cdef double complex* k4 = &self.k4[0]
        cdef double complex* k5 = &self.k5[0]
        cdef double complex* k6 = &self.k6[0]
        cdef double complex* yt = &self.ytmp[0]
        cdef double complex* yn = &self.ynew[0]
        cdef double complex* ye = &self.yerr[0]
        cdef double* sc = &self.scale[0]
        cdef bint underflow = False
        cdef unsigned int csr
        with nogil:
            csr = qtraj_ftz_on()
            self._rhs(t, yp, k1)
            for i in range(n):
                sc[i] = _cabs(yp[i]) + _cabs(h * k1[i]) + floor
            while True:
                for i in range(n):
                    yt[i] = yp[i] + h * (B21 * k1[i])
                self._rhs(t + A2 * h, yt, k2)
                for i in range(n):
                    yt[i] = yp[i] + h * (B31 * k1[i] + B32 * k2[i])
                self._rhs(t + A3 * h, yt, k3)
                for i in range(n):
                    yt[i] = yp[i] + h * (B41 * k1[i] + B42 * k2[i] + B43 * k3[i])
                self._rhs(t + A4 * h, yt, k4)
                for i in range(n):
                    yt[i] = yp[i] + h * (B51 * k1[i] + B52 * k2[i] + B53 * k3[i] + B54 * k4[i])
                self._rhs(t + A5 * h, yt, k5)
                for i in range(n):
                    yt[i] = yp[i] + h * (B61 * k1[i] + B62 * k2[i] + B63 * k3[i]
                                         + B64 * k4[i] + B65 * k5[i])
                self._rhs(t + A6 * h, yt, k6)
                nfev += 5
                errmax = 0.0
                for i in range(n):
                    yn[i] = yp[i] + h * (C1 * k1[i] + C3 * k3[i] + C4 * k4[i] + C6 * k6[i])
                    ye[i] = h * (DC1 * k1[i] + DC3 * k3[i] + DC4 * k4[i] + DC5 * k5[i] + DC6 * k6[i])
                    e = _cabs(ye[i]) / sc[i]
                    if e > errmax or e != e:
                        errmax = INFINITY if e != e else e
                errmax /= eps
                if errmax <= 1.0:
                    break
                h = SAFETY * h * pow(errmax, PSHRNK) if SAFETY * pow(errmax, PSHRNK) > MIN_SHRINK else MIN_SHRINK * h
                if h < UNDERFLOW * (t_scale if t_scale > fabs(t) else fabs(t)):
                    underflow = True
                    break
            qtraj_ftz_off(csr)
        if underflow:
            raise StiffnessError(f"step size underflow at t={t:.6g} (h={h:.3g})")
        if errmax > ERRCON:
            hnext = SAFETY * h * pow(errmax, PGROW)
        else:
            hnext = MAX_GROWTH * h
        return np.array(self.ynew), h, hnext, nfev


def scale_slices(double complex[::1] psi, firsts, Py_ssize_t stride, factors):
    """In place: ``psi[first + stride*i] *= factors[i]`` on every slice."""
    cdef Py_ssize_t[::1] fs = np.ascontiguousarray(firsts, dtype=np.intp)
    cdef double complex[::1] fac = np.ascontiguousarray(factors, dtype=complex)
    cdef Py_ssize_t f, i, base, d = fac.shape[0]
    for f in range(fs.shape[0]):
        base = fs[f]
        for i in range(d):
            psi[base + i * stride] = psi[base + i * stride] * fac[i]
