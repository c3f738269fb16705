"""State vectors over tensor products of finite-dimensional factors.

Amplitudes are stored flat in row-major order with the last factor varying
fastest, so the multi-index ``(i_0, ..., i_N)`` lives at

    I = sum_n i_n * prod_{m > n} d_m .

An element embedded in a larger system never sees that layout directly. It
receives a :class:`SliceView`: one flat offset per combination of the other
("dummy") quantum numbers plus the stride of each factor it spans. Everything
an element does to its own factor is then repeated on every slice.

Particles are represented in a momentum basis with ``resolution`` signed
components ``k = -D/2, ..., D/2 - 1`` (grid quantum ``dk = 1``, box length
``2*pi``). Positions are only ever computed on copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, ConstructionError, DegenerateStateError

#: norms below this are treated as a collapsed state
ZERO_NORM = 1e-14


class StateVector:
    """Complex amplitudes over a tensor product of factors with dimensions ``dims``."""

    __slots__ = ("dims", "amps")

    def __init__(self, dims: Sequence[int], amps=None):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"dimensions must be positive integers, got {dims}")
        size = math.prod(dims)
        if amps is None:
            amps = np.zeros(size, dtype=complex)
        else:
            amps = np.array(amps, dtype=complex).ravel()
            if amps.size != size:
                raise ValueError(
                    f"{amps.size} amplitudes do not fit dimensions {dims} (need {size})"
                )
        self.dims = dims
        self.amps = amps

    @property
    def size(self) -> int:
        return self.amps.size

    def __len__(self):
        return self.amps.size

    def __repr__(self):
        return f"StateVector(dims={self.dims}, norm={self.norm():.6g})"

    def copy(self) -> "StateVector":
        return StateVector(self.dims, self.amps)

    def as_tensor(self) -> np.ndarray:
        """Amplitudes reshaped to ``dims`` (a view, not a copy)."""
        return self.amps.reshape(self.dims)

    def norm(self) -> float:
        return norm(self)

    def normalize(self) -> "StateVector":
        return normalize(self)

    def __matmul__(self, other):
        return direct_product(self, other)


@dataclass(frozen=True)
class Slice:
    """One slice of a view: flat indices ``first + stride * i``."""

    first: int
    stride: int

    def indices(self, dim: int) -> np.ndarray:
        return self.first + self.stride * np.arange(dim)


@dataclass(frozen=True, eq=False)
class SliceView:
    """All slices of the factors ``axes`` inside a composite with dimensions ``dims``.

    ``firsts`` enumerates the flat index of every dummy combination (spanned
    factors pinned to zero) in row-major order; ``strides[j]`` is the flat
    step of ``axes[j]``.
    """

    dims: tuple
    axes: tuple
    firsts: np.ndarray
    strides: tuple

    def __post_init__(self):
        rest = [n for n in range(len(self.dims)) if n not in self.axes]
        perm = tuple(self.axes) + tuple(rest)
        object.__setattr__(self, "_perm", None if perm == tuple(range(len(self.dims))) else perm)

    @property
    def spanned_dims(self) -> tuple:
        return tuple(self.dims[a] for a in self.axes)

    @property
    def stride(self) -> int:
        if len(self.strides) != 1:
            raise ValueError("view spans several factors; use .strides")
        return self.strides[0]

    def __len__(self):
        return len(self.firsts)

    def __iter__(self) -> Iterator[Slice]:
        stride = self.strides[0]
        for first in self.firsts:
            yield Slice(int(first), stride)

    def as_array(self, amps: np.ndarray) -> np.ndarray:
        """Strided view of ``amps`` with the spanned factors moved to the front.

        The result has shape ``spanned_dims + dummy_dims``; index ``[..., j]``
        over the trailing axes runs through the slices in the order of
        ``firsts``. Writing into it writes into ``amps``.
        """
        tensor = amps.reshape(self.dims)
        if self._perm is None:
            return tensor
        return tensor.transpose(self._perm)

    def indices(self) -> np.ndarray:
        """Flat indices of every amplitude, shape ``(len(firsts),) + spanned_dims``."""
        idx = self.firsts.reshape((-1,) + (1,) * len(self.axes))
        for j, (d, s) in enumerate(zip(self.spanned_dims, self.strides)):
            shape = [1] * (len(self.axes) + 1)
            shape[j + 1] = d
            idx = idx + (np.arange(d) * s).reshape(shape)
        return idx


def _strides(dims: Sequence[int]) -> list:
    strides = [1] * len(dims)
    for n in range(len(dims) - 2, -1, -1):
        strides[n] = strides[n + 1] * dims[n + 1]
    return strides


def flat_index(dims: Sequence[int], idx: Sequence[int]) -> int:
    """Row-major flat index of the multi-index ``idx``."""
    if len(idx) != len(dims):
        raise IndexError(f"multi-index {tuple(idx)} has wrong length for dims {tuple(dims)}")
    flat = 0
    for i, d in zip(idx, dims):
        if not 0 <= i < d:
            raise IndexError(f"index {tuple(idx)} out of range for dims {tuple(dims)}")
        flat = flat * d + i
    return flat


def make_view(dims: Sequence[int], subsystems: Sequence[int]) -> SliceView:
    dims = tuple(int(d) for d in dims)
    axes = tuple(int(s) for s in subsystems)
    if not axes:
        raise ConstructionError("a view must span at least one subsystem")
    if len(set(axes)) != len(axes):
        raise ConstructionError(f"repeated subsystem index in {axes}")
    for a in axes:
        if not 0 <= a < len(dims):
            raise ConstructionError(f"subsystem {a} out of range for {len(dims)} factors")
    all_strides = _strides(dims)
    pinned = tuple(0 if n in axes else slice(None) for n in range(len(dims)))
    firsts = np.arange(math.prod(dims), dtype=np.intp).reshape(dims)[pinned].ravel()
    return SliceView(dims, axes, np.ascontiguousarray(firsts), tuple(all_strides[a] for a in axes))


def direct_product(a: StateVector, b: StateVector, *more: StateVector) -> StateVector:
    out = StateVector(a.dims + b.dims, np.kron(a.amps, b.amps))
    for c in more:
        out = StateVector(out.dims + c.dims, np.kron(out.amps, c.amps))
    return out


def _amps(x) -> np.ndarray:
    return x.amps if isinstance(x, StateVector) else np.asarray(x)


def inner(a, b) -> complex:
    """``<a|b>``, conjugating the first argument."""
    va, vb = _amps(a), _amps(b)
    if va.size != vb.size:
        raise ValueError(f"length mismatch: {va.size} vs {vb.size}")
    return complex(np.vdot(va, vb))


def norm(a) -> float:
    v = _amps(a)
    return math.sqrt(np.vdot(v, v).real)


def normalize(a):
    """Return ``a / |a|``; raises :class:`DegenerateStateError` for a zero vector."""
    n = norm(a)
    if n < ZERO_NORM:
        raise DegenerateStateError(f"cannot normalize a state of norm {n:.3g}")
    if isinstance(a, StateVector):
        return StateVector(a.dims, a.amps / n)
    return np.asarray(a) / n


# -- particle grids ---------------------------------------------------------


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def check_resolution(resolution: int) -> int:
    resolution = int(resolution)
    if resolution < 2 or not is_power_of_two(resolution):
        raise ConfigError(f"spatial resolution must be a power of two >= 2, got {resolution}")
    return resolution


def momenta(resolution: int) -> np.ndarray:
    """Signed momentum grid ``-D/2 .. D/2-1``."""
    return np.arange(-(resolution // 2), resolution - resolution // 2, dtype=float)


def positions(resolution: int) -> np.ndarray:
    """Position grid on ``[-pi, pi)`` conjugate to :func:`momenta`."""
    return -np.pi + 2 * np.pi * np.arange(resolution) / resolution


def _alternating(n: int) -> np.ndarray:
    return 1.0 - 2.0 * (np.arange(n) % 2)


def to_position(arr: np.ndarray, axis: int = 0) -> np.ndarray:
    """Momentum amplitudes to position amplitudes along ``axis`` (new array).

    psi(x_j) = D^{-1/2} sum_k c_k exp(i k x_j). With k = m - D/2 and
    x_j = -pi + 2 pi j / D the signed ordering reduces to sign flips around
    a plain inverse FFT.
    """
    d = arr.shape[axis]
    shape = [1] * arr.ndim
    shape[axis] = d
    flip = _alternating(d).reshape(shape)
    out = np.fft.ifft(arr * flip, axis=axis, norm="ortho") * flip
    if (d // 2) % 2:
        out = -out
    return out


def to_momentum(arr: np.ndarray, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`to_position`."""
    d = arr.shape[axis]
    shape = [1] * arr.ndim
    shape[axis] = d
    flip = _alternating(d).reshape(shape)
    out = np.fft.fft(arr * flip, axis=axis, norm="ortho") * flip
    if (d // 2) % 2:
        out = -out
    return out


def position_copy(psi: StateVector, axis: int) -> StateVector:
    """Copy of ``psi`` with factor ``axis`` transformed to the position basis."""
    check_resolution(psi.dims[axis])
    return StateVector(psi.dims, to_position(psi.as_tensor(), axis))


def momentum_copy(psi: StateVector, axis: int) -> StateVector:
    check_resolution(psi.dims[axis])
    return StateVector(psi.dims, to_momentum(psi.as_tensor(), axis))


# -- factories ----------------------------------------------------------------


def fock_state(n: int, cutoff: int) -> StateVector:
    if not 0 <= n < cutoff:
        raise ConfigError(f"Fock state {n} not below cutoff {cutoff}")
    psi = StateVector((cutoff,))
    psi.amps[n] = 1.0
    return psi


def coherent_state(alpha: complex, cutoff: int) -> StateVector:
    """Coherent state truncated at ``cutoff`` photons and renormalized."""
    amps = np.empty(cutoff, dtype=complex)
    amps[0] = 1.0
    for n in range(1, cutoff):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return normalize(StateVector((cutoff,), amps))


def momentum_state(k: int, resolution: int) -> StateVector:
    resolution = check_resolution(resolution)
    m = int(k) + resolution // 2
    if not 0 <= m < resolution:
        raise ConfigError(f"momentum {k} outside the grid of resolution {resolution}")
    psi = StateVector((resolution,))
    psi.amps[m] = 1.0
    return psi


def wave_packet(x0: float, k0: float, xsig: float, resolution: int) -> StateVector:
    """Gaussian packet centred at ``x0`` with mean momentum ``k0`` and position spread ``xsig``.

    Built directly on the momentum grid, which makes the position-space
    Gaussian periodic on ``[-pi, pi)``.
    """
    resolution = check_resolution(resolution)
    if xsig <= 0:
        raise ConfigError(f"packet width must be positive, got {xsig}")
    dk = momenta(resolution) - k0
    amps = np.exp(-((dk * xsig) ** 2) - 1j * dk * x0)
    return normalize(StateVector((resolution,), amps))
