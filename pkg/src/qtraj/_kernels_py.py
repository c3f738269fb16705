"""Pure-Python (numpy) kernel backend.

Same interface as the compiled ``_kernels`` extension. Each term is turned
into a pair of gather/scatter index tables over the view's slices once, so
an evaluation is a handful of vectorised numpy operations per term.
"""

from __future__ import annotations

import numpy as np

from ._program import valid_range
from .integrate import ABS_FLOOR, adaptive_step

NAME = "python"


class _PreparedTerm:
    __slots__ = ("coef", "src", "tgt", "diags", "expos", "static")

    def __init__(self, spec):
        self.coef = complex(spec.coef)
        ranges = [valid_range(ax.dim, ax.offset) for ax in spec.axes]
        if any(lo >= hi for lo, hi in ranges):
            self.src = None
            return
        grids = np.meshgrid(*[np.arange(lo, hi) for lo, hi in ranges], indexing="ij")
        local = np.zeros(grids[0].shape, dtype=np.intp)
        shift = 0
        for g, ax in zip(grids, spec.axes):
            local += g * ax.stride
            shift += ax.offset * ax.stride
        firsts = np.asarray(spec.firsts, dtype=np.intp)
        self.src = firsts[:, None] + local.ravel()[None, :]
        self.tgt = self.src + shift
        self.diags = [np.asarray(ax.diag[lo:hi]) for ax, (lo, hi) in zip(spec.axes, ranges)]
        self.expos = [
            None if ax.expo is None else np.asarray(ax.expo[lo:hi])
            for ax, (lo, hi) in zip(spec.axes, ranges)
        ]
        self.static = None
        if all(e is None for e in self.expos):
            self.static = self.coef * self._outer(self.diags)

    @staticmethod
    def _outer(factors):
        w = factors[0]
        for f in factors[1:]:
            w = np.multiply.outer(w, f)
        return np.ravel(w)

    def weights(self, tau):
        if self.static is not None:
            return self.static
        eff = [
            d if e is None else d * np.exp(tau * e) for d, e in zip(self.diags, self.expos)
        ]
        return self.coef * self._outer(eff)


class TermProgram:
    """Sum of shifted-diagonal product terms acting on a flat state of length ``n``."""

    def __init__(self, n, terms):
        self.n = int(n)
        self.nterms = len(terms)
        self._terms = [t for t in (_PreparedTerm(s) for s in terms) if t.src is not None]

    def accumulate(self, tau, psi, dpsi):
        """``dpsi += H(tau) psi`` for every term."""
        for term in self._terms:
            dpsi[term.tgt] += term.weights(tau) * psi[term.src]

    def rhs(self, tau, psi):
        out = np.zeros(self.n, dtype=complex)
        self.accumulate(tau, psi, out)
        return out

    def ck_step(self, y, t, h, eps, t_scale, floor=ABS_FLOOR):
        """Adaptive Cash-Karp step of ``dy/dt = rhs(t, y)``.

        Returns ``(y_new, hdid, hnext, nfev)``.
        """
        y_new, hdid, hnext, nfev, _ = adaptive_step(self.rhs, y, t, h, eps, t_scale, floor)
        return y_new, hdid, hnext, nfev


def scale_slices(psi, firsts, stride, factors):
    """In place: ``psi[first + stride*i] *= factors[i]`` on every slice."""
    idx = np.asarray(firsts)[:, None] + stride * np.arange(len(factors))[None, :]
    psi[idx] *= factors[None, :]
