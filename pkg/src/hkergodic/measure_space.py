"""Finite atomic measure spaces and L0-valued scalars over them.

An :class:`L0Scalar` is a measurable function on the base space, stored as one
complex value per atom.  Every statement that holds "almost everywhere" in the
continuous theory becomes a per-atom statement here, since atoms carry
strictly positive mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class SpaceMismatchError(ValueError):
    """Raised when objects built over different spaces or fibers are combined."""


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class AtomicMeasureSpace:
    atom_weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.atom_weights) == 0:
            raise ValueError("a measure space needs at least one atom")
        for i, w in enumerate(self.atom_weights):
            if not math.isfinite(w) or w <= 0.0:
                raise ValueError(f"atom {i} has invalid mass {w!r}; masses must be finite and > 0")

    @property
    def atom_count(self) -> int:
        return len(self.atom_weights)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.atom_weights)

    def __len__(self) -> int:
        return self.atom_count


def make_space(weights: Iterable[float]) -> AtomicMeasureSpace:
    """Build an atomic measure space from per-atom masses.

    >>> make_space([0.5, 0.5, 1.0]).total_mass
    2.0
    """
    return AtomicMeasureSpace(tuple(float(w) for w in weights))


def uniform_space(atoms: int) -> AtomicMeasureSpace:
    if atoms < 1:
        raise ValueError("atoms must be >= 1")
    return make_space([1.0] * atoms)


class L0Scalar:
    """A measurable complex function on an atomic space, one value per atom.

    Instances are immutable.  Arithmetic with ``+``, ``-`` and ``*`` is
    pointwise and requires both operands to live on the same space; plain
    Python numbers are broadcast as constant functions.
    """

    __slots__ = ("_values", "space")

    def __init__(self, values: Sequence[complex] | np.ndarray, space: AtomicMeasureSpace):
        arr = np.array(values, dtype=np.complex128).reshape(-1)
        if arr.shape[0] != space.atom_count:
            raise SpaceMismatchError(
                f"got {arr.shape[0]} values for a space with {space.atom_count} atoms"
            )
        self._values = _frozen(arr)
        self.space = space

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def real(self) -> np.ndarray:
        return self._values.real

    def is_nonnegative(self) -> bool:
        return bool(np.all(self._values.imag == 0.0) and np.all(self._values.real >= 0.0))

    def is_indicator(self) -> bool:
        v = self._values
        return bool(np.all((v == 0.0) | (v == 1.0)))

    def conj(self) -> L0Scalar:
        return L0Scalar(np.conj(self._values), self.space)

    def _coerce(self, other) -> L0Scalar:
        if isinstance(other, L0Scalar):
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return constant(self.space, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        return NotImplemented if other is NotImplemented else l0_combine("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        return NotImplemented if other is NotImplemented else l0_combine("sub", self, other)

    def __rsub__(self, other):
        other = self._coerce(other)
        return NotImplemented if other is NotImplemented else l0_combine("sub", other, self)

    def __mul__(self, other):
        other = self._coerce(other)
        return NotImplemented if other is NotImplemented else l0_combine("mul", self, other)

    __rmul__ = __mul__

    def __neg__(self) -> L0Scalar:
        return L0Scalar(-self._values, self.space)

    def __len__(self) -> int:
        return self._values.shape[0]

    def __getitem__(self, atom: int) -> complex:
        return complex(self._values[atom])

    def __repr__(self) -> str:
        return f"L0Scalar({self._values.tolist()!r})"


def constant(space: AtomicMeasureSpace, value: complex) -> L0Scalar:
    return L0Scalar(np.full(space.atom_count, value, dtype=np.complex128), space)


def ones(space: AtomicMeasureSpace) -> L0Scalar:
    """The identity element of L0 (the all-ones function)."""
    return constant(space, 1.0)


def zeros(space: AtomicMeasureSpace) -> L0Scalar:
    return constant(space, 0.0)


def check_same_space(a: AtomicMeasureSpace, b: AtomicMeasureSpace) -> None:
    if a is not b and a != b:
        raise SpaceMismatchError("operands live on different measure spaces")


_COMBINE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def l0_combine(op: str, a: L0Scalar, b: L0Scalar) -> L0Scalar:
    """Pointwise ``add``, ``sub`` or ``mul`` of two L0 scalars on one space."""
    try:
        fn = _COMBINE[op]
    except KeyError:
        raise ValueError(f"unknown L0 operation {op!r}; expected one of {sorted(_COMBINE)}") from None
    check_same_space(a.space, b.space)
    return L0Scalar(fn(a.values, b.values), a.space)


def l0_max_abs(a: L0Scalar) -> float:
    """Largest pointwise modulus; zero exactly when ``a`` is the zero function."""
    return float(np.max(np.abs(a.values)))
