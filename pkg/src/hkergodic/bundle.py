"""Measurable bundles of finite-dimensional Hilbert spaces over an atomic base.

A :class:`FiberSpec` attaches a space ``C^{d_i}`` to every atom ``i``; fiber
dimensions may differ from atom to atom.  A fiber may also carry a diagonal
metric ``m`` (strictly positive weights), in which case its inner product is
``<x, y> = sum_j m_j x_j conj(y_j)``.  The default is the Euclidean product.

A :class:`BundleVector` is a section of the bundle, one complex vector per
atom.  Inner products and norms are L0-valued: they return an
:class:`~hkergodic.measure_space.L0Scalar`, never a single number.
"""

from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np

from .measure_space import (
    AtomicMeasureSpace,
    L0Scalar,
    SpaceMismatchError,
    check_same_space,
    uniform_space,
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class FiberSpec:
    """Fiber dimensions (and optional diagonal metrics) over a measure space."""

    __slots__ = ("space", "dims", "metric")

    def __init__(
        self,
        space: AtomicMeasureSpace,
        dims: Sequence[int],
        metric: Sequence[Sequence[float]] | None = None,
    ):
        dims = tuple(int(d) for d in dims)
        if len(dims) != space.atom_count:
            raise SpaceMismatchError(f"{len(dims)} fiber dims given for {space.atom_count} atoms")
        if any(d < 1 for d in dims):
            raise ValueError("every fiber dimension must be >= 1")
        if metric is not None:
            metric = tuple(_readonly(np.array(m, dtype=np.float64).reshape(-1)) for m in metric)
            if len(metric) != len(dims):
                raise SpaceMismatchError("metric must have one weight vector per atom")
            for i, (m, d) in enumerate(zip(metric, dims)):
                if m.shape[0] != d:
                    raise SpaceMismatchError(f"metric at atom {i} has length {m.shape[0]}, fiber dim {d}")
                if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
                    raise ValueError(f"metric weights at atom {i} must be finite and > 0")
        self.space = space
        self.dims = dims
        self.metric = metric

    @property
    def atom_count(self) -> int:
        return self.space.atom_count

    @property
    def is_euclidean(self) -> bool:
        return self.metric is None

    def sqrt_metric(self, atom: int) -> np.ndarray | None:
        """Per-coordinate ``sqrt(m_j)`` mapping the fiber isometrically onto Euclidean C^d."""
        if self.metric is None:
            return None
        return np.sqrt(self.metric[atom])

    def restrict(self, atom: int) -> FiberSpec:
        """The one-atom bundle consisting of fiber ``atom`` alone."""
        space = AtomicMeasureSpace((self.space.atom_weights[atom],))
        metric = None if self.metric is None else [self.metric[atom]]
        return FiberSpec(space, [self.dims[atom]], metric)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, FiberSpec):
            return NotImplemented
        if self.space != other.space or self.dims != other.dims:
            return False
        if (self.metric is None) != (other.metric is None):
            return False
        if self.metric is None:
            return True
        return all(np.array_equal(a, b) for a, b in zip(self.metric, other.metric))

    __hash__ = None

    def __repr__(self) -> str:
        tag = "" if self.metric is None else ", weighted"
        return f"FiberSpec(dims={list(self.dims)}{tag})"


def make_fibers(space: AtomicMeasureSpace, dims: Sequence[int] | int, metric=None) -> FiberSpec:
    if isinstance(dims, int):
        dims = [dims] * space.atom_count
    return FiberSpec(space, dims, metric)


def check_same_fibers(a: FiberSpec, b: FiberSpec) -> None:
    if a is b:
        return
    if a != b:
        raise SpaceMismatchError(f"fiber specs differ: {a!r} vs {b!r}")


class BundleVector:
    """An element of L0(Omega, H): one complex vector per atom."""

    __slots__ = ("fibers", "fiber_spec")

    def __init__(self, fibers: Sequence[Sequence[complex] | np.ndarray], fiber_spec: FiberSpec):
        if len(fibers) != fiber_spec.atom_count:
            raise SpaceMismatchError(f"{len(fibers)} fibers given for {fiber_spec.atom_count} atoms")
        out = []
        for i, (f, d) in enumerate(zip(fibers, fiber_spec.dims)):
            arr = np.array(f, dtype=np.complex128).reshape(-1)
            if arr.shape[0] != d:
                raise SpaceMismatchError(f"fiber {i} has length {arr.shape[0]}, expected {d}")
            out.append(_readonly(arr))
        self.fibers = tuple(out)
        self.fiber_spec = fiber_spec

    @property
    def space(self) -> AtomicMeasureSpace:
        return self.fiber_spec.space

    def __add__(self, other: BundleVector) -> BundleVector:
        check_same_fibers(self.fiber_spec, other.fiber_spec)
        return BundleVector([a + b for a, b in zip(self.fibers, other.fibers)], self.fiber_spec)

    def __sub__(self, other: BundleVector) -> BundleVector:
        check_same_fibers(self.fiber_spec, other.fiber_spec)
        return BundleVector([a - b for a, b in zip(self.fibers, other.fibers)], self.fiber_spec)

    def __neg__(self) -> BundleVector:
        return BundleVector([-a for a in self.fibers], self.fiber_spec)

    def __mul__(self, scalar) -> BundleVector:
        if isinstance(scalar, L0Scalar):
            check_same_space(scalar.space, self.space)
            return BundleVector([c * f for c, f in zip(scalar.values, self.fibers)], self.fiber_spec)
        if isinstance(scalar, (int, float, complex, np.number)):
            return BundleVector([scalar * f for f in self.fibers], self.fiber_spec)
        return NotImplemented

    __rmul__ = __mul__

    def restrict(self, atom: int) -> BundleVector:
        """The fiber at ``atom`` as a section of the one-atom bundle."""
        return BundleVector([self.fibers[atom]], self.fiber_spec.restrict(atom))

    def equals(self, other: BundleVector) -> bool:
        """Exact (bitwise up to signed zeros) equality of every fiber."""
        return self.fiber_spec == other.fiber_spec and all(
            np.array_equal(a, b) for a, b in zip(self.fibers, other.fibers)
        )

    def __repr__(self) -> str:
        return f"BundleVector({[f.tolist() for f in self.fibers]!r})"


def zero_vector(fiber_spec: FiberSpec) -> BundleVector:
    return BundleVector([np.zeros(d, dtype=np.complex128) for d in fiber_spec.dims], fiber_spec)


def basis_vector(fiber_spec: FiberSpec, index: int = 0) -> BundleVector:
    """The section equal to the ``index``-th standard basis vector on every fiber."""
    fibers = []
    for d in fiber_spec.dims:
        if not 0 <= index < d:
            raise ValueError(f"basis index {index} out of range for fiber dim {d}")
        e = np.zeros(d, dtype=np.complex128)
        e[index] = 1.0
        fibers.append(e)
    return BundleVector(fibers, fiber_spec)


def inner_product(u: BundleVector, v: BundleVector) -> L0Scalar:
    """L0-valued inner product, linear in ``u`` and conjugate-linear in ``v``.

    Fiber sums are exactly rounded (``math.fsum``), so the result does not
    depend on the summation order.
    """
    fs = u.fiber_spec
    check_same_fibers(fs, v.fiber_spec)
    vals = []
    for i, (a, b) in enumerate(zip(u.fibers, v.fibers)):
        # a * conj(b) in real arithmetic, so <u, u> has an exactly zero imaginary part
        re = a.real * b.real + a.imag * b.imag
        im = a.imag * b.real - a.real * b.imag
        if fs.metric is not None:
            re = fs.metric[i] * re
            im = fs.metric[i] * im
        vals.append(complex(math.fsum(re), math.fsum(im)))
    return L0Scalar(vals, fs.space)


def fiber_norm(x: np.ndarray, metric: np.ndarray | None = None) -> float:
    sq = x.real * x.real + x.imag * x.imag
    if metric is not None:
        sq = metric * sq
    return math.sqrt(math.fsum(sq))


def vector_norm(u: BundleVector) -> L0Scalar:
    """Pointwise norm ``sqrt(<u, u>)``; a nonnegative L0 scalar."""
    fs = u.fiber_spec
    vals = [
        fiber_norm(f, None if fs.metric is None else fs.metric[i])
        for i, f in enumerate(u.fibers)
    ]
    return L0Scalar(vals, fs.space)


def l0_axpy(alpha: L0Scalar, u: BundleVector, beta: L0Scalar, v: BundleVector) -> BundleVector:
    """Module combination ``alpha * u + beta * v`` with L0 coefficients."""
    check_same_fibers(u.fiber_spec, v.fiber_spec)
    check_same_space(alpha.space, u.space)
    check_same_space(beta.space, u.space)
    fibers = [a * x + b * y for a, x, b, y in zip(alpha.values, u.fibers, beta.values, v.fibers)]
    return BundleVector(fibers, u.fiber_spec)


def d_decompose(u: BundleVector, indicator: L0Scalar) -> tuple[BundleVector, BundleVector]:
    """Split ``u`` along a set of atoms.

    Returns ``(u1, u2)`` with ``u1 = u`` where the indicator is one and zero
    elsewhere, and ``u2 = u - u1``.  Their norms are the disjoint pieces
    ``indicator * ||u||`` and ``(1 - indicator) * ||u||``.
    """
    check_same_space(indicator.space, u.space)
    if not indicator.is_indicator():
        raise ValueError("d-decomposition needs a {0, 1}-valued indicator")
    first, second = [], []
    for flag, f in zip(indicator.values, u.fibers):
        z = np.zeros_like(f)
        if flag == 1.0:
            first.append(f)
            second.append(z)
        else:
            first.append(z)
            second.append(f)
    return BundleVector(first, u.fiber_spec), BundleVector(second, u.fiber_spec)


def vector_to_json(u: BundleVector) -> dict[str, Any]:
    return {
        "dims": list(u.fiber_spec.dims),
        "fibers": [[[float(z.real), float(z.imag)] for z in f] for f in u.fibers],
    }


def vector_from_json(data: dict[str, Any], fiber_spec: FiberSpec | None = None) -> BundleVector:
    """Inverse of :func:`vector_to_json`.

    Without ``fiber_spec`` a unit-mass space with Euclidean fibers is built.
    """
    dims = [int(d) for d in data["dims"]]
    if fiber_spec is None:
        fiber_spec = FiberSpec(uniform_space(len(dims)), dims)
    elif list(fiber_spec.dims) != dims:
        raise SpaceMismatchError(f"JSON dims {dims} do not match {fiber_spec!r}")
    fibers = [[complex(re, im) for re, im in f] for f in data["fibers"]]
    return BundleVector(fibers, fiber_spec)
