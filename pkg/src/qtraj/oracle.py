"""Dense master-equation reference for small composites.

The Hamiltonian and jump operators are assembled here from the elements'
physical parameters with plain Kronecker products, independently of the
term programs the trajectory engine runs on. In particular:

* mode functions are sampled on a fine grid and Fourier analysed
  numerically instead of using their symbolic components,
* free parts enter the Hamiltonian explicitly (no interaction picture),
* dispersive shifts are kept in their unsplit physical form: with the
  detuning adjustment on, the mode keeps its bare detuning and the full
  ``U0 |f|^2 N`` acts; with it off, the spatially constant part is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError
from .statevec import StateVector

#: largest total dimension the dense oracle accepts
MAX_DIM = 256


def _mode_values(mf, x):
    K = mf.K
    if mf.kind == "sin":
        return np.sin(K * x).astype(complex)
    if mf.kind == "cos":
        return np.cos(K * x).astype(complex)
    if mf.kind == "plus":
        return np.exp(1j * K * x)
    return np.exp(-1j * K * x)


def func_matrix(values_fn, resolution: int, oversample: int = 8) -> np.ndarray:
    """Momentum-basis matrix of multiplication by ``f(x)`` on the periodic grid.

    ``<k'|f|k> = f_(k'-k)`` where ``f_q`` are the Fourier coefficients of
    ``f``, obtained numerically from ``oversample * resolution`` samples.
    Couplings leaving the grid are absent, i.e. truncated.
    """
    M = oversample * resolution
    x = 2 * np.pi * np.arange(M) / M
    coeffs = np.fft.fft(values_fn(x)) / M  # coeffs[q mod M] = f_q
    k = np.arange(resolution) - resolution // 2
    diff = k[:, None] - k[None, :]
    F = coeffs[diff % M]
    F[np.abs(F) < 1e-14] = 0
    return F


def mode_matrix(mf, resolution: int, square: bool = False, conj: bool = False,
                drop_mean: bool = False):
    def f(x):
        v = _mode_values(mf, x)
        if square:
            v = np.abs(v) ** 2 + 0j
        if conj:
            v = v.conj()
        if drop_mean:
            v = v - v.mean()
        return v

    return func_matrix(f, resolution)


def annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(complex)


def number_op(cutoff: int) -> np.ndarray:
    return np.diag(np.arange(cutoff)).astype(complex)


def momentum_op(resolution: int) -> np.ndarray:
    return np.diag(np.arange(resolution) - resolution // 2).astype(complex)


def position_basis(resolution: int) -> np.ndarray:
    """Unitary ``T`` with ``T[j, m] = <x_j | k_m>``."""
    k = np.arange(resolution) - resolution // 2
    x = -np.pi + 2 * np.pi * np.arange(resolution) / resolution
    return np.exp(1j * np.outer(x, k)) / math.sqrt(resolution)


def embed(dims: Sequence[int], factors: dict) -> np.ndarray:
    """Kronecker product with ``factors[axis]`` on the given axes, identity elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for ax, d in enumerate(dims):
        out = np.kron(out, factors.get(ax, np.eye(d, dtype=complex)))
    return out


@dataclass
class DenseModel:
    """``H`` (Hermitian, plain picture), jump operators and the diagonal free part ``H0``.

    ``H0`` holds every term acting on a single factor as a diagonal: bare
    free energies plus the spatially constant part of dispersive shifts.
    """

    dims: tuple
    H: np.ndarray
    jumps: List[np.ndarray]
    H0: np.ndarray

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def h_nonhermitian(self) -> np.ndarray:
        return self.H - 0.5j * sum((J.conj().T @ J for J in self.jumps), np.zeros_like(self.H))

    def free_generator(self) -> np.ndarray:
        """Diagonal of ``-i H0 - (1/2) sum J^dag J`` restricted to its diagonal."""
        G = -1j * self.H0 - 0.5 * sum(
            (J.conj().T @ J for J in self.jumps), np.zeros_like(self.H)
        )
        return np.diag(G).copy()

    def picture_matrix(self, tau: float) -> np.ndarray:
        """``U^{-1}(tau) (-i H_nH - G) U(tau)`` with ``U = exp(tau G)``."""
        g = self.free_generator()
        M = -1j * self.h_nonhermitian() - np.diag(g)
        return np.exp(-tau * g)[:, None] * M * np.exp(tau * g)[None, :]


def assemble_dense(sys) -> DenseModel:
    """Dense model of a composite (see module notes)."""
    # imported here to keep the oracle usable as a stand-alone check
    from . import elements as el

    dims = tuple(sys.dims)
    total = math.prod(dims)
    if total > MAX_DIM:
        raise ConfigError(f"dense oracle refuses total dimension {total} > {MAX_DIM}")
    H = np.zeros((total, total), dtype=complex)
    H0 = np.zeros((total, total), dtype=complex)
    jumps = []

    # bare detunings; dispersive shifts below restore what frees_adjust removed
    for ax, f in enumerate(sys.frees):
        if isinstance(f, el.LossyMode):
            a = annihilator(f.dim)
            h0 = embed(dims, {ax: -f.base_delta_c * number_op(f.dim)})
            H += h0
            H0 += h0
            if isinstance(f, el.PumpedLossyMode) and f.eta != 0:
                ad = a.conj().T
                H += embed(dims, {ax: 1j * f.eta * ad - 1j * np.conj(f.eta) * a})
            if f.kappa > 0:
                jumps.append(math.sqrt(2 * f.kappa) * embed(dims, {ax: a}))
        elif isinstance(f, el.MovingParticle):
            h0 = embed(dims, {ax: f.omega_rec * momentum_op(f.dim) @ momentum_op(f.dim)})
            H += h0
            H0 += h0
            if isinstance(f, el.PumpedMovingParticle) and f.eta_eff != 0:
                V = mode_matrix(f.pump, f.dim, square=True, drop_mean=True)
                H += embed(dims, {ax: f.eta_eff * V})
        else:
            raise ConfigError(f"dense oracle does not know {type(f).__name__}")

    def mul(factors, ax, M):
        factors[ax] = factors[ax] @ M if ax in factors else M

    for w in sys.wirings:
        inter, sub = w.interaction, w.subsystems
        if isinstance(inter, el.ParticleOrthogonalToCavity):
            mode, part = inter.frees
            a = annihilator(mode.dim)
            Z = mode_matrix(part.pump, part.dim)
            A = inter.A
            H += A * embed(dims, {sub[0]: a.conj().T, sub[1]: Z})
            H += A * embed(dims, {sub[0]: a, sub[1]: Z.conj().T})
            if inter.adjust_detuning:
                shift = inter.u0 * embed(dims, {sub[0]: number_op(mode.dim)})
                H += shift
                H0 += shift
        elif isinstance(inter, (el.ParticleAlongCavity, el.ParticleCavity2D)):
            mode, part = inter.frees[0], inter.frees[1]
            f = inter.cavity_mode
            a = annihilator(mode.dim)
            F2 = mode_matrix(f, part.dim, square=True, drop_mean=not inter.adjust_detuning)
            H += inter.u0 * embed(dims, {sub[0]: number_op(mode.dim), sub[1]: F2})
            if inter.adjust_detuning:
                # the spatial average of |f|^2 sits on the diagonal of F2
                H0 += inter.u0 * F2[0, 0].real * embed(dims, {sub[0]: number_op(mode.dim)})
            Fc = mode_matrix(f, part.dim, conj=True)
            F = mode_matrix(f, part.dim)
            A = inter.A
            if isinstance(inter, el.ParticleCavity2D):
                pumped = inter.frees[2]
                Z = mode_matrix(pumped.pump, pumped.dim)
                up = {sub[0]: a.conj().T, sub[1]: Fc, sub[2]: Z}
                down = {sub[0]: a, sub[1]: F, sub[2]: Z.conj().T}
            else:
                up = {sub[0]: a.conj().T, sub[1]: Fc}
                down = {sub[0]: a, sub[1]: F}
            H += A * (embed(dims, up) + embed(dims, down))
        elif isinstance(inter, el.ParticleTwoModes):
            m1, p1, m2, p2 = inter.frees
            f1, f2 = inter.pc1.cavity_mode, inter.pc2.cavity_mode
            a1, a2 = annihilator(m1.dim), annihilator(m2.dim)
            fac = {sub[0]: a1.conj().T, sub[2]: a2}
            mul(fac, sub[1], mode_matrix(f1, p1.dim, conj=True))
            mul(fac, sub[3], mode_matrix(f2, p2.dim))
            X = embed(dims, fac)
            H += inter.coef * (X + X.conj().T)
        elif isinstance(inter, el.IdenticalParticles):
            pass
        else:
            raise ConfigError(f"dense oracle does not know {type(inter).__name__}")
    return DenseModel(dims, H, jumps, H0)


def liouvillian_rhs(rho: np.ndarray, H: np.ndarray, jumps: Sequence[np.ndarray]) -> np.ndarray:
    """``i[rho, H] + sum_m (J rho J^dag - {J^dag J, rho}/2)``."""
    out = 1j * (rho @ H - H @ rho)
    for J in jumps:
        Jd = J.conj().T
        JdJ = Jd @ J
        out += J @ rho @ Jd - 0.5 * (JdJ @ rho + rho @ JdJ)
    return out


def pure_density(psi) -> np.ndarray:
    v = psi.amps if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def _reduced(rho: np.ndarray, dims, axis: int) -> np.ndarray:
    """Reduced density matrix of factor ``axis``."""
    n = len(dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[:n])
    col[axis] = letters[n]
    spec = "".join(row) + "".join(col) + "->" + row[axis] + col[axis]
    return np.einsum(spec, rho.reshape(tuple(dims) + tuple(dims)))


def observables(rho: np.ndarray, sys) -> np.ndarray:
    """Display averages from ``rho`` in the same column layout as the trajectories.

    Interaction groups are filled with NaN.
    """
    from . import elements as el

    dims = tuple(sys.dims)
    out = []
    for i, p in enumerate(sys.placed):
        if not (p.display_on and p.element.display_labels):
            continue
        e = p.element
        if i >= len(sys.frees):
            out.extend([math.nan] * len(e.display_labels))
            continue
        r = _reduced(rho, dims, i)
        if isinstance(e, el.LossyMode):
            N = number_op(e.dim)
            a = annihilator(e.dim)
            n1 = np.trace(r @ N).real
            n2 = np.trace(r @ N @ N).real
            av = np.trace(r @ a)
            out.extend([n1, n2 - n1**2, av.real, av.imag])
        else:
            K = momentum_op(e.dim)
            k1 = np.trace(r @ K).real
            k2 = np.trace(r @ K @ K).real
            T = position_basis(e.dim)
            px = np.diag(T @ r @ T.conj().T).real
            x = -np.pi + 2 * np.pi * np.arange(e.dim) / e.dim
            x1 = float(x @ px)
            x2 = float(x**2 @ px)
            out.extend([k1, k2 - k1**2, x1, math.sqrt(max(x2 - x1**2, 0.0))])
    return np.array(out)


@dataclass
class MasterResult:
    times: np.ndarray
    rows: np.ndarray  # t, nan (no step size), averages...
    rho_final: np.ndarray
    max_trace_error: float
    max_hermiticity_error: float


def integrate_master(sys, psi0=None, t_end: float = 1.0, display_dt: float = 0.1,
                     eps: float = 1e-8, rho0: Optional[np.ndarray] = None,
                     times: Optional[Sequence[float]] = None,
                     model: Optional[DenseModel] = None) -> MasterResult:
    """Integrate the master equation of ``sys`` and evaluate its averages.

    Output instants are ``0, display_dt, ... <= t_end`` unless ``times`` is
    given. Integration uses an adaptive eighth-order Runge-Kutta method with
    relative tolerance ``eps``.
    """
    model = model or assemble_dense(sys)
    if rho0 is None:
        if psi0 is None:
            raise ConfigError("give an initial state or density matrix")
        rho0 = pure_density(psi0)
    rho0 = np.asarray(rho0, dtype=complex)
    d = model.dim
    if rho0.shape != (d, d):
        raise ConfigError(f"initial density matrix must be {d}x{d}")
    if times is None:
        n = int(math.floor(t_end / display_dt + 1e-9))
        times = display_dt * np.arange(n + 1)
    times = np.asarray(times, dtype=float)
    t_stop = float(max(times.max(), 0.0))
    H, jumps = model.H, model.jumps

    def f(t, y):
        return liouvillian_rhs(y.reshape(d, d), H, jumps).ravel()

    if t_stop > 0:
        sol = solve_ivp(
            f, (0.0, t_stop), rho0.ravel(), method="DOP853", rtol=eps, atol=eps * 1e-3,
            dense_output=True,
        )
        if not sol.success:
            raise RuntimeError(f"master equation integration failed: {sol.message}")
        states = [sol.sol(t).reshape(d, d) if t > 0 else rho0 for t in times]
    else:
        states = [rho0 for _ in times]
    rows = []
    tr_err = herm_err = 0.0
    for t, rho in zip(times, states):
        tr_err = max(tr_err, abs(np.trace(rho) - 1))
        herm_err = max(herm_err, float(np.abs(rho - rho.conj().T).max()))
        rows.append(np.concatenate([[t, math.nan], observables(rho, sys)]))
    return MasterResult(times, np.array(rows), states[-1], tr_err, herm_err)


__all__ = [
    "DenseModel",
    "MAX_DIM",
    "MasterResult",
    "annihilator",
    "assemble_dense",
    "embed",
    "func_matrix",
    "integrate_master",
    "liouvillian_rhs",
    "observables",
    "pure_density",
]
