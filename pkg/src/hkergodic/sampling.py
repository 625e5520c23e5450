"""Seeded random spaces, sections and operator bundles for experiments and tests."""

from __future__ import annotations

import numpy as np

from .bundle import BundleVector, FiberSpec
from .measure_space import AtomicMeasureSpace, L0Scalar, make_space
from .operators import BundleOperator


def _cgauss(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_space(rng: np.random.Generator, atoms: int) -> AtomicMeasureSpace:
    return make_space(rng.uniform(0.1, 2.0, size=atoms))


def random_fibers(rng: np.random.Generator, atoms: int, min_dim: int = 1, max_dim: int = 8) -> FiberSpec:
    space = random_space(rng, atoms)
    return FiberSpec(space, rng.integers(min_dim, max_dim + 1, size=atoms))


def random_l0(space: AtomicMeasureSpace, rng: np.random.Generator) -> L0Scalar:
    return L0Scalar(_cgauss(rng, space.atom_count), space)


def random_vector(fiber_spec: FiberSpec, rng: np.random.Generator) -> BundleVector:
    return BundleVector([_cgauss(rng, d) for d in fiber_spec.dims], fiber_spec)


def random_unit_vector(fiber_spec: FiberSpec, rng: np.random.Generator) -> BundleVector:
    """Random section with Euclidean norm one on every fiber."""
    fibers = []
    for d in fiber_spec.dims:
        x = _cgauss(rng, d)
        fibers.append(x / np.linalg.norm(x))
    return BundleVector(fibers, fiber_spec)


def random_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    return _cgauss(rng, d, d)


def random_unitary_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed unitary (QR of a Ginibre matrix with phase correction)."""
    q, r = np.linalg.qr(_cgauss(rng, d, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph[None, :]


def random_operator(fiber_spec: FiberSpec, rng: np.random.Generator) -> BundleOperator:
    return BundleOperator([random_matrix(rng, d) for d in fiber_spec.dims], fiber_spec)


def _unimodular_away_from_one(rng: np.random.Generator, k: int, gap: float) -> np.ndarray:
    # |e^{it} - 1| = 2 sin(t/2) >= gap  <=>  t in [t0, 2pi - t0]
    t0 = 2.0 * np.arcsin(min(gap / 2.0, 1.0))
    return np.exp(1j * rng.uniform(t0, 2.0 * np.pi - t0, size=k))


def random_contraction_matrix(rng: np.random.Generator, d: int, kind: str | None = None) -> np.ndarray:
    """A d x d contraction of one of several shapes.

    ``scaled``: Ginibre matrix rescaled to spectral norm in (0.3, 1].
    ``structured``: ``U diag(I_f, unimodular, C) U^H`` with a fixed block of
    random size, unit-circle eigenvalues kept away from 1, and a strict
    contraction ``C``; this gives nontrivial fixed spaces.
    ``identity`` / ``unitary``: the obvious.
    """
    if kind is None:
        kind = rng.choice(["scaled", "structured", "structured", "unitary", "identity"], p=[0.35, 0.25, 0.25, 0.1, 0.05])
    if kind == "identity":
        return np.eye(d, dtype=np.complex128)
    if kind == "unitary":
        return random_unitary_matrix(rng, d)
    if kind == "scaled":
        m = random_matrix(rng, d)
        rho = rng.uniform(0.3, 1.0) if rng.random() < 0.5 else 1.0
        return m * (rho / np.linalg.norm(m, 2))
    if kind != "structured":
        raise ValueError(f"unknown contraction kind {kind!r}")
    f = int(rng.integers(0, d + 1))
    r = int(rng.integers(0, d - f + 1))
    c = d - f - r
    block = np.zeros((d, d), dtype=np.complex128)
    block[:f, :f] = np.eye(f)
    block[f : f + r, f : f + r] = np.diag(_unimodular_away_from_one(rng, r, 0.1))
    if c:
        m = random_matrix(rng, c)
        block[f + r :, f + r :] = m * (rng.uniform(0.2, 0.95) / np.linalg.norm(m, 2))
    u = random_unitary_matrix(rng, d)
    return u @ block @ u.conj().T


def random_contraction_bundle(
    rng: np.random.Generator, atoms: int = 20, min_dim: int = 1, max_dim: int = 8
) -> BundleOperator:
    fs = random_fibers(rng, atoms, min_dim, max_dim)
    return BundleOperator([random_contraction_matrix(rng, d) for d in fs.dims], fs)


def diagonal_unitary_bundle(
    fiber_spec: FiberSpec, rng: np.random.Generator, gap: float = 0.5, fixed_prob: float = 0.3
) -> BundleOperator:
    """Diagonal unitaries whose eigenvalues are 1 or at distance >= ``gap`` from 1."""
    mats = []
    for d in fiber_spec.dims:
        lam = _unimodular_away_from_one(rng, d, gap)
        lam[rng.random(d) < fixed_prob] = 1.0
        mats.append(np.diag(lam))
    return BundleOperator(mats, fiber_spec)
