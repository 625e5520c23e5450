"""Bundle operators: one matrix per atom acting fiberwise.

A :class:`BundleOperator` is the measurable bundle ``{T_w}``; applying it to a
section acts atom by atom, which is exactly the L0-linear operator it induces
on L0(Omega, H).  Matrices are dense ``numpy`` arrays or ``scipy.sparse``
matrices (large structured fibers such as truncated shifts are only feasible
sparse).

Norms, adjoints and unitarity are taken with respect to each fiber's inner
product, so a fiber with a diagonal metric ``m`` is handled through the
isometry ``x -> sqrt(m) * x`` onto Euclidean space.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bundle import BundleVector, FiberSpec, check_same_fibers, fiber_norm
from .measure_space import L0Scalar, SpaceMismatchError

DEFAULT_CONTRACTION_TOL = 1e-9
# dense SVD is used for fibers up to this size, iterative methods beyond
_DENSE_LIMIT = 1024


def _as_matrix(m, d: int):
    if sp.issparse(m):
        m = sp.csr_matrix(m, dtype=np.complex128)
        m.sum_duplicates()
        m.sort_indices()
    else:
        m = np.array(m, dtype=np.complex128)
        if m.ndim == 0 and d == 1:
            m = m.reshape(1, 1)
        m.setflags(write=False)
    if m.shape != (d, d):
        raise SpaceMismatchError(f"matrix of shape {m.shape} on a fiber of dim {d}")
    return m


class BundleOperator:
    """A measurable bundle of linear operators, stored fiberwise."""

    def __init__(self, matrices: Sequence[Any], fiber_spec: FiberSpec):
        if len(matrices) != fiber_spec.atom_count:
            raise SpaceMismatchError(f"{len(matrices)} matrices for {fiber_spec.atom_count} atoms")
        self.matrices = tuple(_as_matrix(m, d) for m, d in zip(matrices, fiber_spec.dims))
        self.fiber_spec = fiber_spec

    @property
    def atom_count(self) -> int:
        return self.fiber_spec.atom_count

    def dense(self, atom: int) -> np.ndarray:
        m = self.matrices[atom]
        return m.toarray() if sp.issparse(m) else np.array(m)

    def whitened(self, atom: int):
        """The fiber matrix expressed in a Euclidean-orthonormal basis."""
        m = self.matrices[atom]
        r = self.fiber_spec.sqrt_metric(atom)
        if r is None:
            return m
        if sp.issparse(m):
            return (sp.diags(r) @ m @ sp.diags(1.0 / r)).tocsr()
        return (r[:, None] * m) / r[None, :]

    def restrict(self, atom: int) -> BundleOperator:
        return BundleOperator([self.matrices[atom]], self.fiber_spec.restrict(atom))

    @cached_property
    def kernel_data(self) -> tuple:
        """Per-atom CSR arrays consumed by the orbit kernels.

        Dense fibers keep every entry (zeros included) so the row sums run
        over all columns in ascending order.
        """
        out = []
        for m in self.matrices:
            if sp.issparse(m):
                indptr, indices, data = m.indptr, m.indices, m.data
            else:
                d = m.shape[0]
                indptr = np.arange(0, d * d + 1, d)
                indices = np.tile(np.arange(d), d)
                data = m.reshape(-1)
            indptr = np.ascontiguousarray(indptr, dtype=np.int64)
            indices = np.ascontiguousarray(indices, dtype=np.int64)
            counts = np.diff(indptr)
            monomial = bool(np.all(counts <= 1))
            d = indptr.shape[0] - 1
            col = np.full(d, -1, dtype=np.int64)
            gathered = np.zeros(d, dtype=np.complex128)
            if monomial:
                rows = np.flatnonzero(counts)
                col[rows] = indices[indptr[rows]]
                gathered[rows] = data[indptr[rows]]
            out.append(
                (
                    indptr,
                    indices,
                    np.ascontiguousarray(data.real),
                    np.ascontiguousarray(data.imag),
                    monomial,
                    col,
                    np.ascontiguousarray(gathered.real),
                    np.ascontiguousarray(gathered.imag),
                )
            )
        return tuple(out)

    @cached_property
    def identity_fibers(self) -> tuple[bool, ...]:
        """Which fiber matrices are exactly the identity."""
        flags = []
        for m in self.matrices:
            d = m.shape[0]
            if sp.issparse(m):
                flags.append((m != sp.eye(d, format="csr")).nnz == 0)
            else:
                flags.append(bool(np.array_equal(m, np.eye(d))))
        return tuple(flags)

    def __repr__(self) -> str:
        return f"BundleOperator({self.fiber_spec!r})"


def identity_operator(fiber_spec: FiberSpec) -> BundleOperator:
    return BundleOperator([np.eye(d, dtype=np.complex128) for d in fiber_spec.dims], fiber_spec)


def zero_operator(fiber_spec: FiberSpec) -> BundleOperator:
    return BundleOperator([np.zeros((d, d), dtype=np.complex128) for d in fiber_spec.dims], fiber_spec)


def diagonal_operator(fiber_spec: FiberSpec, diagonals: Sequence[Sequence[complex]]) -> BundleOperator:
    return BundleOperator([np.diag(np.asarray(d, dtype=np.complex128)) for d in diagonals], fiber_spec)


def apply(T: BundleOperator, u: BundleVector) -> BundleVector:
    """Fiberwise action ``(T u)(w) = T_w u(w)``."""
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    return BundleVector([m @ f for m, f in zip(T.matrices, u.fibers)], u.fiber_spec)


def compose(T: BundleOperator, S: BundleOperator) -> BundleOperator:
    """Fiberwise product ``T_w S_w`` (apply ``S`` first)."""
    check_same_fibers(T.fiber_spec, S.fiber_spec)
    return BundleOperator([a @ b for a, b in zip(T.matrices, S.matrices)], T.fiber_spec)


def adjoint(T: BundleOperator) -> BundleOperator:
    """Fiberwise adjoint for each fiber's inner product.

    Euclidean fibers give the conjugate transpose; a diagonal metric ``m``
    gives ``diag(1/m) T^H diag(m)``.
    """
    fs = T.fiber_spec
    mats = []
    for i, m in enumerate(T.matrices):
        h = m.conj().T
        if fs.metric is not None:
            w = fs.metric[i]
            if sp.issparse(h):
                h = sp.diags(1.0 / w) @ h @ sp.diags(w)
            else:
                h = (h * w[None, :]) / w[:, None]
        mats.append(h.tocsr() if sp.issparse(h) else h)
    return BundleOperator(mats, fs)


def _is_monomial(m) -> bool:
    if sp.issparse(m):
        coo = m.tocoo()
        nz = coo.data != 0
        rows, cols = coo.row[nz], coo.col[nz]
    else:
        rows, cols = np.nonzero(m)
    return len(np.unique(rows)) == len(rows) and len(np.unique(cols)) == len(cols)


def _max_abs_entry(m) -> float:
    if sp.issparse(m):
        return float(np.max(np.abs(m.data))) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if m.size else 0.0


def spectral_norm(m) -> float:
    """Largest singular value of one fiber matrix.

    Matrices with at most one nonzero per row and column (scaled partial
    permutations: diagonals, shifts) have norm equal to their largest entry
    modulus, which is returned exactly.
    """
    if _is_monomial(m):
        return _max_abs_entry(m)
    if sp.issparse(m):
        if m.shape[0] <= _DENSE_LIMIT:
            m = m.toarray()
        else:
            s = spla.svds(m, k=1, return_singular_vectors=False)
            return float(s[0])
    return float(np.linalg.svd(m, compute_uv=False)[0])


def operator_norm(T: BundleOperator) -> L0Scalar:
    """L0-valued operator norm: per atom, the largest singular value of ``T_w``."""
    return L0Scalar([spectral_norm(T.whitened(i)) for i in range(T.atom_count)], T.fiber_spec.space)


@dataclass(frozen=True)
class ContractionCheck:
    ok: bool
    atom: int | None = None
    norm: float | None = None

    def __bool__(self) -> bool:
        return self.ok


def is_contraction(T: BundleOperator, tol: float = DEFAULT_CONTRACTION_TOL) -> ContractionCheck:
    """Check ``||T_w|| <= 1 + tol`` on every atom; the witness is the first failure."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    norms = operator_norm(T).real
    for i, nrm in enumerate(norms):
        if nrm > 1.0 + tol:
            return ContractionCheck(False, i, float(nrm))
    return ContractionCheck(True)


def is_unitary(T: BundleOperator, tol: float = 1e-10) -> bool:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    for i in range(T.atom_count):
        w = T.whitened(i)
        if sp.issparse(w):
            w = w.toarray()
        eye = np.eye(w.shape[0])
        wh = w.conj().T
        if np.linalg.norm(wh @ w - eye, 2) > tol or np.linalg.norm(w @ wh - eye, 2) > tol:
            return False
    return True


@dataclass(frozen=True)
class LinearityReport:
    trials: int
    max_residual: float
    worst_atom: int


def check_l0_linearity(T: BundleOperator, trials: int = 10, seed: int = 0) -> LinearityReport:
    """Empirical check of ``T(a x + b y) = a T x + b T y`` for random L0 scalars.

    Reports the largest fiber-norm residual over all trials and atoms.
    """
    from .sampling import random_l0, random_vector

    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    fs = T.fiber_spec
    worst, worst_atom = 0.0, 0
    for _ in range(trials):
        a, b = random_l0(fs.space, rng), random_l0(fs.space, rng)
        x, y = random_vector(fs, rng), random_vector(fs, rng)
        lhs = apply(T, a * x + b * y)
        rhs = a * apply(T, x) + b * apply(T, y)
        for i, (p, q) in enumerate(zip(lhs.fibers, rhs.fibers)):
            r = fiber_norm(p - q, None if fs.metric is None else fs.metric[i])
            if r > worst:
                worst, worst_atom = r, i
    return LinearityReport(trials, worst, worst_atom)


def operator_to_json(T: BundleOperator) -> dict[str, Any]:
    """``{"dims", "matrices"}`` with each matrix as row-major rows of ``[re, im]`` pairs."""
    mats = []
    for i in range(T.atom_count):
        m = T.dense(i)
        mats.append([[[float(z.real), float(z.imag)] for z in row] for row in m])
    return {"dims": list(T.fiber_spec.dims), "matrices": mats}


def matrix_from_pairs(rows: Sequence, d: int) -> np.ndarray:
    """Decode one matrix given as nested rows or a flat row-major list of pairs."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[-1] != 2:
        raise ValueError("matrix entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.size != d * d:
        raise SpaceMismatchError(f"matrix has {z.size} entries, fiber dim {d} needs {d * d}")
    return z.reshape(d, d)


def operator_from_json(data: dict[str, Any], fiber_spec: FiberSpec | None = None) -> BundleOperator:
    from .measure_space import uniform_space

    dims = [int(d) for d in data["dims"]]
    if fiber_spec is None:
        fiber_spec = FiberSpec(uniform_space(len(dims)), dims)
    elif list(fiber_spec.dims) != dims:
        raise SpaceMismatchError(f"JSON dims {dims} do not match {fiber_spec!r}")
    mats = [matrix_from_pairs(m, d) for m, d in zip(data["matrices"], dims)]
    return BundleOperator(mats, fiber_spec)
