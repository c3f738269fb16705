"""Cavity-QED elements: lossy/pumped modes, moving particles and their couplings.

Conventions
-----------
Modes live in a Fock basis ``n = 0 .. cutoff-1`` with ``Z = kappa - i*delta_c``;
their exact propagator is ``exp(-Z n dt)``, which absorbs both the free
rotation and the anti-Hermitian loss part of the non-Hermitian Hamiltonian.

Particles live on a signed momentum grid ``k = -D/2 .. D/2-1`` with the
free propagator ``exp(-i omega_rec k^2 dt)``. A mode function ``m(x)`` is a
finite Fourier sum ``sum_q c_q exp(i q x)``; each component is a pure shift
of the momentum index by ``q``. Components pushed off the grid are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ConstructionError
from .statevec import check_resolution, momenta, positions, to_position
from .system import MODE, PARTICLE, PUMPED_PARTICLE, Free, Interaction, JumpChannel, Op, Term

#: top-level Fock population above which a jump is counted as truncation leakage
TRUNCATION_WARN = 1e-6


# -- mode functions -------------------------------------------------------------


def _conj(comp: Dict[int, complex]) -> Dict[int, complex]:
    return {-q: complex(c).conjugate() for q, c in comp.items()}


def _product(a: Dict[int, complex], b: Dict[int, complex]) -> Dict[int, complex]:
    out: Dict[int, complex] = {}
    for qa, ca in a.items():
        for qb, cb in b.items():
            out[qa + qb] = out.get(qa + qb, 0) + ca * cb
    return {q: c for q, c in out.items() if c != 0}


@dataclass(frozen=True)
class ModeFunction:
    """``sin(Kx)``, ``cos(Kx)``, ``exp(iKx)`` (plus) or ``exp(-iKx)`` (minus)."""

    kind: str
    K: int

    KINDS = ("sin", "cos", "plus", "minus")

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in self.KINDS:
            raise ConfigError(f"unknown mode function {self.kind!r}; use one of {self.KINDS}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"mode wavenumber must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))

    @classmethod
    def parse(cls, text: str) -> "ModeFunction":
        """From ``"cos:2"`` style notation."""
        try:
            kind, k = text.split(":")
            return cls(kind.strip(), int(k))
        except ValueError:
            raise ConfigError(f"mode function must look like cos:K, got {text!r}") from None

    def __str__(self):
        return f"{self.kind}:{self.K}"

    def components(self) -> Dict[int, complex]:
        """Fourier components ``{q: c_q}`` with ``m(x) = sum c_q exp(i q x)``."""
        K = self.K
        if self.kind == "sin":
            return {K: 1 / 2j, -K: -1 / 2j}
        if self.kind == "cos":
            return {K: 0.5, -K: 0.5}
        if self.kind == "plus":
            return {K: 1.0}
        return {-K: 1.0}

    def conj_components(self) -> Dict[int, complex]:
        return _conj(self.components())

    def abs2_components(self) -> Dict[int, complex]:
        """Fourier components of ``|m(x)|^2``."""
        return _product(self.conj_components(), self.components())

    def mean_abs2(self) -> float:
        """Spatial average of ``|m(x)|^2``: 1/2 for standing waves, 1 for running ones."""
        return float(self.abs2_components().get(0, 0).real)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return sum(c * np.exp(1j * q * x) for q, c in self.components().items())


def _shift_terms(coef, comps, slot, extra_ops=(), skip_zero=False):
    """Terms ``coef * c_q * shift_q(slot) * extra_ops`` for every component."""
    out = []
    for q, c in comps.items():
        if skip_zero and q == 0:
            continue
        out.append(Term(coef * c, tuple(extra_ops) + (Op(slot, q),)))
    return out


# -- modes -------------------------------------------------------------------------


class LossyMode(Free):
    """Damped cavity mode with detuning ``delta_c`` and field decay rate ``kappa``."""

    kind = MODE
    name = "mode"
    display_labels = ("<N>", "VarN", "Re<a>", "Im<a>")

    def __init__(self, delta_c: float, kappa: float, cutoff: int):
        if int(cutoff) != cutoff or cutoff < 2:
            raise ConfigError(f"photon cutoff must be an integer >= 2, got {cutoff}")
        if kappa < 0:
            raise ConfigError(f"kappa must be non-negative, got {kappa}")
        self.dim = int(cutoff)
        self.base_delta_c = float(delta_c)
        self.delta_c = float(delta_c)
        self.kappa = float(kappa)
        self.truncation_events = 0
        self._n = np.arange(self.dim, dtype=float)

    @property
    def cutoff(self) -> int:
        return self.dim

    @property
    def Z(self) -> complex:
        return complex(self.kappa, -self.delta_c)

    def reset_adjustments(self):
        self.delta_c = self.base_delta_c

    def adjust_detuning(self, shift: float):
        self.delta_c += float(shift)

    def generator(self):
        return -self.Z * self._n

    def propagator(self, dt: float) -> np.ndarray:
        """Diagonal of ``U(dt)`` on the photon number."""
        return np.exp(-self.Z * dt * self._n)

    # jump sqrt(2 kappa) a
    def _rate(self, arr):
        pops = np.abs(arr.reshape(self.dim, -1)) ** 2
        return 2 * self.kappa * float(self._n @ pops.sum(axis=1))

    def _annihilate(self, arr):
        flat = arr.reshape(self.dim, -1)
        if float(np.sum(np.abs(flat[-1]) ** 2)) > TRUNCATION_WARN:
            self.truncation_events += 1
        out = np.zeros_like(arr)
        amp = np.sqrt(2 * self.kappa * self._n[1:])
        out[:-1] = amp.reshape((-1,) + (1,) * (arr.ndim - 1)) * arr[1:]
        return out

    def jump_channels(self):
        if self.kappa > 0:
            return [JumpChannel("photon loss", self._rate, self._annihilate)]
        return []

    def display(self, arr):
        flat = arr.reshape(self.dim, -1)
        pops = np.sum(np.abs(flat) ** 2, axis=1)
        n1 = float(self._n @ pops)
        n2 = float((self._n**2) @ pops)
        a = complex(np.sum(np.sqrt(self._n[1:])[:, None] * flat[:-1].conj() * flat[1:]))
        return [n1, n2 - n1 * n1, a.real, a.imag]

    def highest_frequency(self):
        return max(abs(self.delta_c), self.kappa)

    def describe(self):
        return f"LossyMode deltac={self.delta_c:g} kappa={self.kappa:g} cutoff={self.dim}"


class PumpedLossyMode(LossyMode):
    """Lossy mode driven coherently with amplitude ``eta``: ``H = i(eta a^dag - eta^* a)``."""

    name = "pumped mode"

    def __init__(self, delta_c: float, kappa: float, eta: complex, cutoff: int):
        super().__init__(delta_c, kappa, cutoff)
        self.eta = complex(eta)

    def terms(self):
        if self.eta == 0:
            return []
        n = self._n
        return [
            Term(1j * self.eta, (Op(0, 1, np.sqrt(n + 1)),)),
            Term(-1j * self.eta.conjugate(), (Op(0, -1, np.sqrt(n)),)),
        ]

    def highest_frequency(self):
        return max(super().highest_frequency(), abs(self.eta))

    def describe(self):
        return super().describe().replace("LossyMode", "PumpedLossyMode") + f" eta={self.eta:g}"


# -- particles ---------------------------------------------------------------------


class MovingParticle(Free):
    """Free particle in 1D on a periodic box of length ``2 pi``."""

    kind = PARTICLE
    name = "particle"
    display_labels = ("<k>", "VarK", "<x>", "DeltaX")

    def __init__(self, omega_rec: float, resolution: int):
        self.dim = check_resolution(resolution)
        self.omega_rec = float(omega_rec)
        self._k = momenta(self.dim)
        self._x = positions(self.dim)

    @property
    def resolution(self) -> int:
        return self.dim

    def generator(self):
        return -1j * self.omega_rec * self._k**2

    def propagator(self, dt: float) -> np.ndarray:
        return np.exp(-1j * self.omega_rec * dt * self._k**2)

    def display(self, arr):
        flat = arr.reshape(self.dim, -1)
        pk = np.sum(np.abs(flat) ** 2, axis=1)
        k1 = float(self._k @ pk)
        k2 = float(self._k**2 @ pk)
        px = np.sum(np.abs(to_position(flat, axis=0)) ** 2, axis=1)
        x1 = float(self._x @ px)
        x2 = float(self._x**2 @ px)
        return [k1, k2 - k1 * k1, x1, math.sqrt(max(x2 - x1 * x1, 0.0))]

    def highest_frequency(self):
        return abs(self.omega_rec) * (self.dim / 2) ** 2

    def describe(self):
        return f"MovingParticle omrec={self.omega_rec:g} resolution={self.dim}"


class PumpedMovingParticle(MovingParticle):
    """Particle in the optical potential ``eta_eff |pump(x)|^2`` of a transverse pump."""

    kind = PUMPED_PARTICLE
    name = "pumped particle"

    def __init__(self, omega_rec: float, resolution: int, eta_eff: float, pump: ModeFunction):
        super().__init__(omega_rec, resolution)
        self.eta_eff = float(eta_eff)
        self.pump = pump if isinstance(pump, ModeFunction) else ModeFunction.parse(pump)

    def terms(self):
        if self.eta_eff == 0:
            return []
        # the constant part of |pump|^2 is an energy offset and is dropped
        return _shift_terms(self.eta_eff, self.pump.abs2_components(), 0, skip_zero=True)

    def highest_frequency(self):
        return max(super().highest_frequency(), abs(self.eta_eff))

    def describe(self):
        return (
            f"PumpedMovingParticle omrec={self.omega_rec:g} resolution={self.dim} "
            f"etaeff={self.eta_eff:g} pump={self.pump}"
        )


# -- interactions ----------------------------------------------------------------


def coupling(u0: float, eta_eff: float) -> float:
    """``A = sign(U0) sqrt(|U0 eta_eff|)``."""
    return math.copysign(math.sqrt(abs(u0 * eta_eff)), u0) if u0 != 0 else 0.0


def _a_dag(n):
    return np.sqrt(n + 1)


def _a(n):
    return np.sqrt(n)


class _ParticleCavityBase(Interaction):
    """Shared pieces of the particle-cavity couplings."""

    adjusts = True

    def _exchange_terms(self, A, creation_comps, mode_slot, particle_slots):
        """``A (g a^dag + g^* a)`` where ``g`` is a product over particle slots.

        ``creation_comps`` is a list (one entry per particle slot) of Fourier
        components multiplying ``a^dag``; the ``a`` part uses their conjugates.
        """
        if A == 0:
            return []
        n = np.arange(self.frees[mode_slot].dim, dtype=float)
        out = []
        for op_mode, comps_list in (
            (Op(mode_slot, 1, _a_dag(n)), creation_comps),
            (Op(mode_slot, -1, _a(n)), [_conj(c) for c in creation_comps]),
        ):
            partial = [(A, ())]
            for slot, comps in zip(particle_slots, comps_list):
                partial = [
                    (coef * c, ops + (Op(slot, q),)) for coef, ops in partial for q, c in comps.items()
                ]
            out.extend(Term(coef, (op_mode,) + ops) for coef, ops in partial)
        return out

    def _dispersive_terms(self, u0, cavity_mode, mode_slot, particle_slot):
        """Position-dependent part of ``U0 |f(x)|^2 N``."""
        if u0 == 0:
            return []
        n = np.arange(self.frees[mode_slot].dim, dtype=float)
        return _shift_terms(
            u0, cavity_mode.abs2_components(), particle_slot, (Op(mode_slot, 0, n),), skip_zero=True
        )


class ParticleOrthogonalToCavity(_ParticleCavityBase):
    """Pumped particle moving across the cavity axis: ``A (zeta a^dag + zeta^* a)``.

    The cavity detuning is shifted by ``-U0`` at composite construction unless
    ``adjust_detuning`` is off.
    """

    name = "orthogonal"
    slot_kinds = (MODE, PUMPED_PARTICLE)

    def __init__(self, mode: LossyMode, particle: PumpedMovingParticle, u0: float,
                 adjust_detuning: bool = True):
        if not isinstance(particle, PumpedMovingParticle):
            raise ConstructionError("ParticleOrthogonalToCavity needs a pumped particle")
        self.frees = (mode, particle)
        self.u0 = float(u0)
        self.adjust_detuning = bool(adjust_detuning)

    @property
    def A(self) -> float:
        return coupling(self.u0, self.frees[1].eta_eff)

    def terms(self):
        return self._exchange_terms(self.A, [self.frees[1].pump.components()], 0, (1,))

    def frees_adjust(self, frees):
        if self.adjust_detuning:
            frees[0].adjust_detuning(-self.u0)
        return ()

    def highest_frequency(self):
        return max(abs(self.u0), abs(self.A))

    def describe(self):
        return f"ParticleOrthogonalToCavity u0={self.u0:g} adjust={int(self.adjust_detuning)}"


class ParticleAlongCavity(_ParticleCavityBase):
    """Particle moving along the axis of a mode with profile ``f``.

    ``H = U0 |f(x)|^2 N + A (f^*(x) a^dag + f(x) a)``; the pump strength comes
    from ``eta_eff`` for a plain particle or from a pumped particle itself.
    The spatially constant part of ``U0 |f|^2 N`` becomes a detuning shift
    (``U0/2`` for standing, ``U0`` for running waves) applied at composite
    construction, or is dropped when ``adjust_detuning`` is off.
    """

    name = "along"
    slot_kinds = (MODE, PARTICLE)

    def __init__(self, mode: LossyMode, particle: MovingParticle, u0: float,
                 cavity_mode: ModeFunction, eta_eff: Optional[float] = None,
                 adjust_detuning: bool = True):
        pumped = isinstance(particle, PumpedMovingParticle)
        if pumped and eta_eff is not None:
            raise ConfigError(
                "ParticleAlongCavity takes eta_eff from a pumped particle; do not give it explicitly"
            )
        if not pumped and eta_eff is None:
            raise ConfigError("ParticleAlongCavity with a plain particle needs an explicit eta_eff")
        self.frees = (mode, particle)
        self.u0 = float(u0)
        self.cavity_mode = (
            cavity_mode if isinstance(cavity_mode, ModeFunction) else ModeFunction.parse(cavity_mode)
        )
        self._eta_eff = None if eta_eff is None else float(eta_eff)
        self.adjust_detuning = bool(adjust_detuning)

    @property
    def eta_eff(self) -> float:
        return self.frees[1].eta_eff if self._eta_eff is None else self._eta_eff

    @property
    def A(self) -> float:
        return coupling(self.u0, self.eta_eff)

    def terms(self):
        f = self.cavity_mode
        return self._dispersive_terms(self.u0, f, 0, 1) + self._exchange_terms(
            self.A, [f.conj_components()], 0, (1,)
        )

    def frees_adjust(self, frees):
        if self.adjust_detuning:
            frees[0].adjust_detuning(-self.u0 * self.cavity_mode.mean_abs2())
        return ()

    def highest_frequency(self):
        return max(abs(self.u0), abs(self.A))

    def describe(self):
        return (
            f"ParticleAlongCavity u0={self.u0:g} mode={self.cavity_mode} etaeff={self.eta_eff:g} "
            f"adjust={int(self.adjust_detuning)}"
        )


class ParticleCavity2D(_ParticleCavityBase):
    """Pumped particle moving in 2D: coordinate 1 along the cavity, 2 along the pump.

    ``H = U0 |f(x1)|^2 N + A (f^*(x1) zeta(x2) a^dag + h.c.)``, slots
    ``(mode, particle, pumped_particle)``. Detuning shift as for
    :class:`ParticleAlongCavity`.
    """

    name = "cavity2d"
    slot_kinds = (MODE, PARTICLE, PUMPED_PARTICLE)

    def __init__(self, mode: LossyMode, particle: MovingParticle,
                 pumped_particle: PumpedMovingParticle, u0: float, cavity_mode: ModeFunction,
                 adjust_detuning: bool = True):
        if not isinstance(pumped_particle, PumpedMovingParticle):
            raise ConstructionError("ParticleCavity2D needs a pumped particle in its third slot")
        self.frees = (mode, particle, pumped_particle)
        self.u0 = float(u0)
        self.cavity_mode = (
            cavity_mode if isinstance(cavity_mode, ModeFunction) else ModeFunction.parse(cavity_mode)
        )
        self.adjust_detuning = bool(adjust_detuning)

    @property
    def A(self) -> float:
        return coupling(self.u0, self.frees[2].eta_eff)

    def terms(self):
        f = self.cavity_mode
        zeta = self.frees[2].pump
        return self._dispersive_terms(self.u0, f, 0, 1) + self._exchange_terms(
            self.A, [f.conj_components(), zeta.components()], 0, (1, 2)
        )

    def frees_adjust(self, frees):
        if self.adjust_detuning:
            frees[0].adjust_detuning(-self.u0 * self.cavity_mode.mean_abs2())
        return ()

    def highest_frequency(self):
        return max(abs(self.u0), abs(self.A))

    def describe(self):
        return f"ParticleCavity2D u0={self.u0:g} mode={self.cavity_mode} adjust={int(self.adjust_detuning)}"


class ParticleTwoModes(Interaction):
    """Photon exchange between the modes of two :class:`ParticleAlongCavity` couplings.

    ``H = sign(U01) sqrt(U01 U02) (m1^*(x1) m2(x2) a1^dag a2 + h.c.)`` on slots
    ``(mode1, particle1, mode2, particle2)``. The two particle slots may be
    the same subsystem (one particle seeing both modes).
    """

    name = "two modes"
    slot_kinds = (MODE, PARTICLE, MODE, PARTICLE)
    aliasable = ((1, 3),)

    def __init__(self, pc1: ParticleAlongCavity, pc2: ParticleAlongCavity):
        for pc in (pc1, pc2):
            if not isinstance(pc, ParticleAlongCavity):
                raise ConstructionError("ParticleTwoModes is built from two ParticleAlongCavity")
        if pc1.frees[0] is pc2.frees[0]:
            raise ConstructionError("ParticleTwoModes needs two different modes")
        if pc1.u0 * pc2.u0 < 0:
            raise ConstructionError(
                f"light shifts of opposite sign ({pc1.u0:g}, {pc2.u0:g}) give no real coupling"
            )
        self.pc1, self.pc2 = pc1, pc2
        self.frees = (pc1.frees[0], pc1.frees[1], pc2.frees[0], pc2.frees[1])

    @property
    def coef(self) -> float:
        u1, u2 = self.pc1.u0, self.pc2.u0
        return math.copysign(math.sqrt(u1 * u2), u1) if u1 != 0 else 0.0

    def terms(self):
        g = self.coef
        if g == 0:
            return []
        m1, m2 = self.pc1.cavity_mode, self.pc2.cavity_mode
        n1 = np.arange(self.frees[0].dim, dtype=float)
        n2 = np.arange(self.frees[2].dim, dtype=float)
        out = []
        # m1^*(x1) m2(x2) a1^dag a2  and its conjugate
        for mode_ops, c1, c2 in (
            ((Op(0, 1, _a_dag(n1)), Op(2, -1, _a(n2))), m1.conj_components(), m2.components()),
            ((Op(0, -1, _a(n1)), Op(2, 1, _a_dag(n2))), m1.components(), m2.conj_components()),
        ):
            for q1, a in c1.items():
                for q2, b in c2.items():
                    out.append(Term(g * a * b, mode_ops + (Op(1, q1), Op(3, q2))))
        return out

    def highest_frequency(self):
        return abs(self.coef)

    def describe(self):
        return f"ParticleTwoModes coef={self.coef:g}"


class IdenticalParticles(Interaction):
    """Occupation-number outputs for two identical particles.

    Wired to two subsystems backed by the same particle instance. Its display
    replaces the per-particle displays: ``<n1 n2>`` with ``n1`` counting
    particles at ``x < 0`` and ``n2`` at ``x >= 0``, and, when two
    orthonormal single-particle ``states`` are given, the populations of the
    symmetric occupation states ``|2,0>, |1,1>, |0,2>``.
    """

    name = "identical"
    slot_kinds = (PARTICLE, PARTICLE)
    adjusts = True

    def __init__(self, particle: MovingParticle, n: int = 2, states: Optional[Sequence] = None):
        if n != 2:
            raise ConfigError(f"IdenticalParticles supports exactly two particles, got {n}")
        if not isinstance(particle, MovingParticle):
            raise ConstructionError("IdenticalParticles needs a particle element")
        self.frees = (particle, particle)
        self.n = 2
        self.states = None
        if states is not None:
            if len(states) != 2:
                raise ConfigError("IdenticalParticles needs two single-particle states")
            phis = [np.asarray(getattr(s, "amps", s), dtype=complex).ravel() for s in states]
            for phi in phis:
                if phi.size != particle.dim:
                    raise ConfigError("single-particle state does not match the particle resolution")
            gram = np.array([[np.vdot(a, b) for b in phis] for a in phis])
            if np.max(np.abs(gram - np.eye(2))) > 1e-8:
                raise ConfigError("single-particle states must be orthonormal within 1e-8")
            self.states = phis

    @property
    def display_labels(self):
        base = ("<n1n2>",)
        return base + ("P20", "P11", "P02") if self.states is not None else base

    def frees_adjust(self, frees):
        return (0, 1)

    def occupation_amplitudes(self, arr):
        """``(<2,0|psi>, <1,1|psi>, <0,2|psi>)``, each an array over the dummies."""
        if self.states is None:
            raise ConfigError("no single-particle states were given")
        p1, p2 = self.states
        d = arr.shape[0]
        flat = arr.reshape(d, d, -1)

        def proj(a, b):
            return np.einsum("i,j,ijm->m", a.conj(), b.conj(), flat)

        return (
            proj(p1, p1),
            (proj(p1, p2) + proj(p2, p1)) / math.sqrt(2),
            proj(p2, p2),
        )

    def display(self, arr):
        d = arr.shape[0]
        flat = arr.reshape(d, d, -1)
        pos = to_position(to_position(flat, axis=0), axis=1)
        prob = np.sum(np.abs(pos) ** 2, axis=2)
        left = positions(d) < 0
        right = ~left
        n1n2 = float(prob[np.ix_(left, right)].sum() + prob[np.ix_(right, left)].sum())
        out = [n1n2]
        if self.states is not None:
            out.extend(float(np.sum(np.abs(a) ** 2)) for a in self.occupation_amplitudes(arr))
        return out

    def describe(self):
        return f"IdenticalParticles n={self.n} states={'yes' if self.states is not None else 'no'}"


__all__ = [
    "IdenticalParticles",
    "LossyMode",
    "ModeFunction",
    "MovingParticle",
    "ParticleAlongCavity",
    "ParticleCavity2D",
    "ParticleOrthogonalToCavity",
    "ParticleTwoModes",
    "PumpedLossyMode",
    "PumpedMovingParticle",
    "coupling",
]
