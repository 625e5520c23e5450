"""Finite versions of three classical contraction examples.

* ``shift``: the right shift on l2 in every fiber, truncated to ``C^N``.
* ``markov``: a random ergodic Markov kernel per atom, acting on functions
  over its states.  The fiber carries the weighted inner product of the
  chain's invariant distribution, the one in which the kernel contracts.
* ``translation``: ``K(y) -> K(y + 1)`` on L2[0, N) with unit cells and zero
  fill beyond ``N``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .bundle import BundleVector, FiberSpec, basis_vector
from .measure_space import AtomicMeasureSpace, uniform_space
from .operators import BundleOperator


def _shift_matrix(n: int) -> sp.csr_matrix:
    # e_i -> e_{i+1}; the last basis vector is sent to zero
    return sp.eye(n, k=-1, dtype=np.complex128, format="csr")


def shift_example(atoms: int, truncation: int) -> tuple[BundleOperator, BundleVector]:
    """Truncated right shift on every fiber together with the section ``e_1``.

    For ``n <= truncation`` the Cesaro average of ``e_1`` is
    ``(e_1 + ... + e_n) / n``, of norm ``n ** -0.5``.
    """
    if atoms < 1 or truncation < 2:
        raise ValueError("need atoms >= 1 and truncation >= 2")
    fs = FiberSpec(uniform_space(atoms), [truncation] * atoms)
    T = BundleOperator([_shift_matrix(truncation) for _ in range(atoms)], fs)
    return T, basis_vector(fs, 0)


def translation_example(atoms: int, grid_points: int) -> tuple[BundleOperator, BundleVector]:
    """Unit translation ``K(y) -> K(y + 1)`` on L2[0, N), N = ``grid_points``.

    Cells are the unit intervals, numbered from the far end: cell ``i``
    (stored at index ``i - 1``) is ``[N - i, N - i + 1)``.  In that ordering the translation maps cell ``i``
    onto cell ``i + 1``, the cell ``[0, 1)`` leaves the domain and cell 1
    receives zero.  The section is the normalized indicator of cell 1, so
    ``T^n u = 0`` once ``n >= N``.
    """
    if atoms < 1 or grid_points < 2:
        raise ValueError("need atoms >= 1 and grid_points >= 2")
    fs = FiberSpec(uniform_space(atoms), [grid_points] * atoms)
    T = BundleOperator([_shift_matrix(grid_points) for _ in range(atoms)], fs)
    return T, basis_vector(fs, 0)


def invariant_distribution(Q: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix by eigen-solve.

    Raises ``ValueError`` unless eigenvalue 1 of ``Q^T`` is simple and its
    eigenvector can be normalized to a strictly positive distribution.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if np.any(Q < 0) or not np.allclose(Q.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("kernel must be row-stochastic")
    vals, vecs = np.linalg.eig(Q.T)
    ones = np.flatnonzero(np.abs(vals - 1.0) < tol)
    if ones.size != 1:
        raise ValueError(f"eigenvalue 1 has multiplicity {ones.size}; invariant distribution not unique")
    pi = np.real(vecs[:, ones[0]])
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise ValueError("invariant distribution is not strictly positive")
    return pi


def markov_bundle(
    space: AtomicMeasureSpace, kernels, invariants=None
) -> tuple[BundleOperator, BundleVector]:
    """Bundle of Markov operators ``(Q f)(x) = sum_y Q(x, y) f(y)``.

    Each fiber gets the inner product weighted by its invariant distribution
    (computed when ``invariants`` is omitted).  Returns the operator and the
    distributions as a bundle section.
    """
    kernels = [np.asarray(q, dtype=np.float64) for q in kernels]
    if invariants is None:
        invariants = [invariant_distribution(q) for q in kernels]
    invariants = [np.asarray(p, dtype=np.float64) for p in invariants]
    fs = FiberSpec(space, [q.shape[0] for q in kernels], metric=invariants)
    T = BundleOperator(kernels, fs)
    return T, BundleVector(invariants, fs)


def random_kernel(rng: np.random.Generator, states: int) -> np.ndarray:
    q = rng.random((states, states)) + 0.05
    return q / q.sum(axis=1, keepdims=True)


def markov_example(atoms: int, states: int, seed: int = 0) -> tuple[BundleOperator, BundleVector, BundleVector]:
    """Random ergodic chains, one per atom.

    Returns ``(T, u, pi)`` where ``u`` is a random complex section and
    ``pi`` holds each atom's invariant distribution.
    """
    if atoms < 1 or states < 2:
        raise ValueError("need atoms >= 1 and states >= 2")
    rng = np.random.default_rng(seed)
    kernels, invariants = [], []
    for _ in range(atoms):
        q = random_kernel(rng, states)
        while True:
            try:
                pi = invariant_distribution(q)
                break
            except (ValueError, np.linalg.LinAlgError):
                q = q + 0.1 / states
                q = q / q.sum(axis=1, keepdims=True)
        kernels.append(q)
        invariants.append(pi)
    T, pis = markov_bundle(uniform_space(atoms), kernels, invariants)
    u = BundleVector(
        [rng.standard_normal(states) + 1j * rng.standard_normal(states) for _ in range(atoms)],
        T.fiber_spec,
    )
    return T, u, pis


EXAMPLES = ("shift", "markov", "translation")
