"""Plain records describing a compiled Hamiltonian for the kernel backends.

A Hamiltonian (already multiplied by ``-i``) is a sum of terms. Each term is
a coefficient times a tensor product of *shifted diagonals*, one per factor
of the element's view: an operator that sends basis index ``s`` of that
factor to ``s + offset`` with weight ``diag[s] * exp(tau * expo[s])``.
Components pushed off the end of a factor are dropped. Ladder operators,
photon number, momentum kicks ``exp(i q x)`` and their interaction-picture
conjugates all have this form.
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Tuple

import numpy as np


class AxisSpec(NamedTuple):
    stride: int
    dim: int
    offset: int
    diag: np.ndarray  # complex, length dim, indexed by source
    expo: Optional[np.ndarray]  # complex picture exponent per source index, or None


class TermSpec(NamedTuple):
    coef: complex
    firsts: np.ndarray  # intp, one per dummy combination
    axes: Tuple[AxisSpec, ...]


def valid_range(dim: int, offset: int):
    """Source indices ``s`` whose target ``s + offset`` stays inside the factor."""
    return max(0, -offset), dim - max(0, offset)
