"""Free subsystems, interactions, and the composite that wires them together.

Every element describes itself by optional capabilities:

* ``terms()``: its Hamiltonian as a list of :class:`Term` (sums of products
  of shifted diagonals on its slots),
* ``generator()`` (frees only): the diagonal ``g`` of its exact propagator
  ``U(dt) = exp(dt * g)``,
* ``jump_channels()``: quantum jump operators with their rates,
* ``display(arr)``: averages written to the output row,
* ``frees_adjust(frees)`` (interactions only): construction-time parameter
  changes of the frees it acts on,
* ``highest_frequency()``: fastest rate it contributes.

:class:`Composite` embeds all of this into the product space. The
Hamiltonian of every element is compiled once into a single term program
run by the kernel backend; the interaction picture is built in at compile
time by attaching to each shifted diagonal the exponent
``g[s] - g[s + offset]`` of its factor, so that the program evaluates
``-i U^{-1}(tau) H U(tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from ._program import AxisSpec, TermSpec, valid_range
from .errors import ConfigError, ConstructionError, DegenerateStateError
from .statevec import ZERO_NORM, StateVector, make_view

MODE = "mode"
PARTICLE = "particle"
PUMPED_PARTICLE = "pumped_particle"

# slot kind -> free kinds that may fill it
_ACCEPTS = {
    MODE: {MODE},
    PARTICLE: {PARTICLE, PUMPED_PARTICLE},
    PUMPED_PARTICLE: {PUMPED_PARTICLE},
}


class Op(NamedTuple):
    """Shifted diagonal on one slot: ``|s> -> diag[s] |s + offset>``.

    ``diag=None`` means all ones (a pure shift, e.g. ``exp(i q x)`` on a
    momentum grid).
    """

    slot: int
    offset: int
    diag: Optional[np.ndarray] = None


class Term(NamedTuple):
    """``coef`` times the product of ``ops`` (operators on distinct slots commute)."""

    coef: complex
    ops: Tuple[Op, ...]


@dataclass
class JumpChannel:
    """A jump operator ``J`` acting on the owning element's view.

    ``rate(arr)`` returns ``<J^dag J>`` summed over the dummies of ``arr`` and
    ``apply(arr)`` returns ``J arr`` (unnormalized, same shape).
    """

    name: str
    rate: Callable[[np.ndarray], float]
    apply: Callable[[np.ndarray], np.ndarray]


class Element:
    """Base for everything that can appear in a composite."""

    name = "element"

    def terms(self) -> List[Term]:
        return []

    def jump_channels(self) -> List[JumpChannel]:
        return []

    display_labels: Tuple[str, ...] = ()

    def display(self, arr: np.ndarray) -> List[float]:
        return []

    def highest_frequency(self) -> float:
        return 0.0

    def has_capability(self) -> bool:
        return bool(self.terms() or self.jump_channels() or self.display_labels)


class Free(Element):
    """A subsystem owning one tensor factor of dimension ``dim``."""

    kind = ""
    dim = 0

    def generator(self) -> Optional[np.ndarray]:
        return None

    def reset_adjustments(self):
        pass

    def has_capability(self) -> bool:
        return self.generator() is not None or super().has_capability()


class Interaction(Element):
    """An element spanning several frees.

    ``frees`` are the instances it was built with, ``slot_kinds`` what each
    slot accepts; ``aliasable`` lists slot pairs that may be wired to the same
    free index.
    """

    frees: Tuple[Free, ...] = ()
    slot_kinds: Tuple[str, ...] = ()
    aliasable: Tuple[Tuple[int, int], ...] = ()
    adjusts = False

    @property
    def arity(self) -> int:
        return len(self.slot_kinds)

    def frees_adjust(self, frees: Sequence[Free]) -> Sequence[int]:
        """Adjust the wired frees; return the slots whose display is switched off."""
        return ()

    def has_capability(self) -> bool:
        return self.adjusts or super().has_capability()


@dataclass
class SubsystemsInteraction:
    interaction: Interaction
    subsystems: Tuple[int, ...]

    def __post_init__(self):
        self.subsystems = tuple(int(s) for s in self.subsystems)

    def describe(self) -> str:
        return f"{type(self.interaction).__name__} on subsystems {self.subsystems}"


@dataclass
class _Placed:
    element: Element
    axes: Tuple[int, ...]  # unique axes, first-occurrence order
    slot_axis: Tuple[int, ...]  # axis position (into ``axes``) of every slot
    view: object
    display_on: bool = True
    channels: List[JumpChannel] = field(default_factory=list)


def _compose(a: Op, b: Op, dim: int) -> Op:
    """Single op equal to ``a @ b`` on one factor (``b`` acts first)."""
    offset = a.offset + b.offset
    if a.diag is None and b.diag is None:
        return Op(a.slot, offset, None)
    da = np.ones(dim, complex) if a.diag is None else np.asarray(a.diag, complex)
    db = np.ones(dim, complex) if b.diag is None else np.asarray(b.diag, complex)
    diag = np.zeros(dim, complex)
    for s in range(*valid_range(dim, offset)):
        mid = s + b.offset
        if 0 <= mid < dim:
            diag[s] = db[s] * da[mid]
    return Op(a.slot, offset, diag)


class Composite:
    """Frees in declaration order plus wired interactions.

    Parameters
    ----------
    frees : sequence of Free
        One tensor factor each; the same instance may appear several times
        (identical subsystems).
    wirings : sequence of SubsystemsInteraction or (interaction, subsystems)
    interaction_picture : bool
        If False the free generators are put into the Hamiltonian and
        :meth:`apply_U` is the identity.
    backend : str, optional
        Kernel backend name (see :mod:`qtraj.kernels`).
    """

    def __init__(self, frees, wirings=(), *, interaction_picture=True, backend=None):
        self.frees = list(frees)
        if not self.frees:
            raise ConstructionError("a composite needs at least one free subsystem")
        self.wirings = [
            w if isinstance(w, SubsystemsInteraction) else SubsystemsInteraction(*w)
            for w in wirings
        ]
        self.interaction_picture = bool(interaction_picture)
        self.backend = kernels.get_backend(backend)

        for i, f in enumerate(self.frees):
            if not isinstance(f, Free):
                raise ConstructionError(f"free {i} is not a free subsystem: {f!r}")
            if not f.has_capability():
                raise ConstructionError(f"free {i} ({f.name}) has no capability")
        self.dims = tuple(int(f.dim) for f in self.frees)
        self.total_dim = math.prod(self.dims)

        for w in self.wirings:
            self._validate(w)

        # parameter adjustments happen here and only here
        for f in {id(f): f for f in self.frees}.values():
            f.reset_adjustments()
        suppressed = set()
        for w in self.wirings:
            wired = [self.frees[s] for s in w.subsystems]
            for slot in w.interaction.frees_adjust(wired):
                suppressed.add(w.subsystems[slot])
        self.suppressed = frozenset(suppressed)

        self._views = {}
        self.placed: List[_Placed] = []
        for i, f in enumerate(self.frees):
            self.placed.append(self._place(f, (i,), display_on=i not in suppressed))
        for w in self.wirings:
            self.placed.append(self._place(w.interaction, w.subsystems))
        self.free_views = [p.view for p in self.placed[: len(self.frees)]]
        self.views = [p.view for p in self.placed]

        self.channels = [(p, ch) for p in self.placed for ch in p.channels]
        self._generators = []
        for i, f in enumerate(self.frees):
            g = f.generator()
            if g is not None:
                g = np.asarray(g, dtype=complex)
                if g.shape != (f.dim,):
                    raise ConstructionError(f"free {i}: generator has wrong length")
            self._generators.append(g)
        self.program = self._compile()
        self.labels = self._labels()

    # -- construction -----------------------------------------------------

    def _validate(self, w: SubsystemsInteraction):
        inter = w.interaction
        where = w.describe()
        if not isinstance(inter, Interaction):
            raise ConstructionError(f"{where}: not an interaction")
        if len(w.subsystems) != inter.arity:
            raise ConstructionError(
                f"{where}: expects {inter.arity} subsystems, got {len(w.subsystems)}"
            )
        for s in w.subsystems:
            if not 0 <= s < len(self.frees):
                raise ConstructionError(
                    f"{where}: subsystem index {s} out of range (have {len(self.frees)} frees)"
                )
        kinds = [self.frees[s].kind for s in w.subsystems]
        for slot, (want, got) in enumerate(zip(inter.slot_kinds, kinds)):
            if got not in _ACCEPTS[want]:
                raise ConstructionError(
                    f"{where}: slot {slot} needs a {want}, but subsystem "
                    f"{w.subsystems[slot]} is a {got} (expected kinds in order: "
                    f"{', '.join(inter.slot_kinds)})"
                )
        for a in range(inter.arity):
            for b in range(a + 1, inter.arity):
                if w.subsystems[a] == w.subsystems[b] and (a, b) not in inter.aliasable:
                    raise ConstructionError(
                        f"{where}: slots {a} and {b} may not share subsystem {w.subsystems[a]}"
                    )
        for slot, (mine, s) in enumerate(zip(inter.frees, w.subsystems)):
            if self.frees[s] is not mine:
                raise ConstructionError(
                    f"{where}: slot {slot} is wired to subsystem {s}, which is not the "
                    f"{mine.name} this interaction was built with"
                )
        if not inter.has_capability():
            raise ConstructionError(f"{where}: interaction has no capability")

    def _view(self, axes):
        axes = tuple(axes)
        if axes not in self._views:
            self._views[axes] = make_view(self.dims, axes)
        return self._views[axes]

    def _place(self, element, subsystems, display_on=True):
        axes = tuple(dict.fromkeys(subsystems))
        slot_axis = tuple(axes.index(s) for s in subsystems)
        return _Placed(
            element, axes, slot_axis, self._view(axes), display_on, list(element.jump_channels())
        )

    def _expo(self, axis, offset):
        g = self._generators[axis]
        if not self.interaction_picture or g is None or offset == 0:
            return None
        dim = self.dims[axis]
        expo = np.zeros(dim, dtype=complex)
        lo, hi = valid_range(dim, offset)
        s = np.arange(lo, hi)
        expo[s] = g[s] - g[s + offset]
        return expo

    def _term_specs(self, placed: _Placed, term: Term):
        # merge ops by axis in slot order, later slots acting first
        by_axis = {}
        for op in term.ops:
            ax = placed.axes[placed.slot_axis[op.slot]]
            dim = self.dims[ax]
            if op.diag is not None and len(op.diag) != dim:
                raise ConstructionError(
                    f"{placed.element.name}: operator on slot {op.slot} has wrong length"
                )
            by_axis[ax] = op if ax not in by_axis else _compose(by_axis[ax], op, dim)
        axes = sorted(by_axis)
        view = self._view(axes)
        specs = []
        for ax, stride in zip(axes, view.strides):
            op = by_axis[ax]
            diag = np.ones(self.dims[ax], complex) if op.diag is None else np.asarray(op.diag, complex)
            specs.append(AxisSpec(stride, self.dims[ax], op.offset, diag, self._expo(ax, op.offset)))
        return TermSpec(-1j * complex(term.coef), view.firsts, tuple(specs))

    def _compile(self):
        specs = []
        for p in self.placed:
            for term in p.element.terms():
                if term.coef != 0:
                    specs.append(self._term_specs(p, term))
        if not self.interaction_picture:
            for ax, g in enumerate(self._generators):
                if g is not None:
                    view = self._view((ax,))
                    specs.append(
                        TermSpec(1.0, view.firsts, (AxisSpec(view.strides[0], self.dims[ax], 0, g, None),))
                    )
        self.term_specs = specs
        return self.backend.TermProgram(self.total_dim, specs)

    def _labels(self):
        groups = []
        for i, p in enumerate(self.placed):
            if p.display_on and p.element.display_labels:
                tag = f"{i}" if i < len(self.frees) else f"i{i - len(self.frees)}"
                groups.append((f"{p.element.name}[{tag}]", tuple(p.element.display_labels)))
        return groups

    # -- dynamics -----------------------------------------------------------

    @staticmethod
    def _amps(psi):
        return psi.amps if isinstance(psi, StateVector) else psi

    def apply_H(self, t, psi, dpsidt):
        """``dpsidt += -i H_I(t) psi`` (``t`` measured from the picture origin)."""
        self.program.accumulate(float(t), self._amps(psi), self._amps(dpsidt))

    def rhs(self, t, psi):
        return self.program.rhs(float(t), self._amps(psi))

    def ode_step(self, psi, tau, stepper):
        """One accepted adaptive step of the picture state; updates ``stepper``."""
        y, hdid, hnext, nfev = self.program.ck_step(
            self._amps(psi), float(tau), stepper.dttry, stepper.eps, stepper.t_scale,
            stepper.floor,
        )
        stepper.dtdid = hdid
        stepper.dttry = hnext
        stepper.nfev += nfev
        return y

    def apply_U(self, dt, psi):
        """In place: multiply by the exact free propagators over ``dt``."""
        if not self.interaction_picture or dt == 0:
            return psi
        amps = self._amps(psi)
        for g, view in zip(self._generators, self.free_views):
            if g is not None:
                self.backend.scale_slices(amps, view.firsts, view.strides[0], np.exp(dt * g))
        return psi

    def jump_rates(self, psi) -> np.ndarray:
        amps = self._amps(psi)
        return np.array(
            [max(0.0, float(ch.rate(p.view.as_array(amps)))) for p, ch in self.channels]
        )

    def jump_names(self):
        return [f"{p.element.name}:{ch.name}" for p, ch in self.channels]

    def apply_jump(self, m, psi) -> np.ndarray:
        """``J_m psi`` without normalization (new flat array)."""
        p, ch = self.channels[m]
        amps = np.array(self._amps(psi), dtype=complex)
        arr = p.view.as_array(amps)
        arr[...] = ch.apply(arr.copy())
        return amps

    def do_jump(self, m, psi):
        """Apply channel ``m`` and normalize exactly; returns the new state."""
        amps = self.apply_jump(m, psi)
        n = math.sqrt(np.vdot(amps, amps).real)
        if n < ZERO_NORM:
            raise DegenerateStateError(f"jump {self.jump_names()[m]} annihilated the state")
        amps /= n
        if isinstance(psi, StateVector):
            return StateVector(psi.dims, amps)
        return amps

    def display(self, t, dtdid, psi) -> np.ndarray:
        """Output row: ``t``, ``dtdid``, then every displayed group."""
        amps = self._amps(psi)
        row = [float(t), float(dtdid)]
        for p in self.placed:
            if p.display_on and p.element.display_labels:
                row.extend(float(v) for v in p.element.display(p.view.as_array(amps)))
        return np.array(row)

    @property
    def group_widths(self):
        return [len(labels) for _, labels in self.labels]

    def highest_frequency(self) -> float:
        freqs = [float(p.element.highest_frequency()) for p in self.placed]
        hf = max(freqs)
        if not hf > 0 or not math.isfinite(hf):
            raise ConfigError("no element sets a positive finite frequency scale")
        return hf

    def dense_H(self):
        """Dense ``-i H`` at ``tau = 0`` from the compiled program (debug aid)."""
        eye = np.eye(self.total_dim, dtype=complex)
        return np.column_stack([self.program.rhs(0.0, eye[:, j]) for j in range(self.total_dim)])

    def describe(self) -> List[str]:
        lines = []
        for i, f in enumerate(self.frees):
            lines.append(f"free {i}: {f.describe() if hasattr(f, 'describe') else f.name}")
        for w in self.wirings:
            inter = w.interaction
            text = inter.describe() if hasattr(inter, "describe") else inter.name
            lines.append(f"interaction on {w.subsystems}: {text}")
        return lines


def composite_new(frees, wirings=(), **kwargs) -> Composite:
    return Composite(frees, wirings, **kwargs)


__all__ = [
    "Composite",
    "Element",
    "Free",
    "Interaction",
    "JumpChannel",
    "MODE",
    "Op",
    "PARTICLE",
    "PUMPED_PARTICLE",
    "SubsystemsInteraction",
    "Term",
    "composite_new",
]
