"""Ergodic averaging engines and the fixed-space projection oracle.

Every engine reduces to one orbit walk per fiber (see :mod:`hkergodic._orbit`):

* Cesaro          ``(1/n) sum_{k<n} T^k u``
* modulated       ``(1/n) sum_{k<n} a_k T^k u``
* subsequential   ``(1/n) sum_{j=1..n} T^{k_j} u``
* weighted        ``(1/W_n) sum_{k<n} w_k T^k u``
* multiparameter  nested one-parameter Cesaro averages

The oracle :func:`mean_ergodic_projection` never averages anything: it is the
orthogonal projection onto ``ker(I - T_w)``, obtained from an SVD.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from . import sequences as seqs
from ._orbit import MAX_STEPS, orbit_averages
from .bundle import BundleVector, check_same_fibers, fiber_norm
from .operators import BundleOperator, apply, compose, is_contraction

DEFAULT_RANK_TOL = 1e-8
TARGET_KINDS = ("projection-oracle", "explicit-vector", "pairwise-discrepancy")


class NotAContractionError(ValueError):
    def __init__(self, atom: int, norm: float):
        super().__init__(f"operator is not a contraction: ||T|| = {norm!r} at atom {atom}")
        self.atom = atom
        self.norm = norm


class NonCommutingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-step, per-atom distances ``||A_n u (w) - target(w)||``."""

    schedule: tuple
    errors: np.ndarray
    target_kind: str
    config: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.target_kind!r}")
        err = np.array(self.errors, dtype=np.float64)
        if err.ndim != 2 or err.shape[0] != len(self.schedule):
            raise ValueError("errors must have shape (len(schedule), atom_count)")
        if np.any(err < 0) or np.any(np.isnan(err)):
            raise ValueError("errors must be nonnegative")
        err.setflags(write=False)
        object.__setattr__(self, "errors", err)
        object.__setattr__(self, "schedule", tuple(self.schedule))

    @property
    def atom_count(self) -> int:
        return self.errors.shape[1]

    def max_error(self) -> np.ndarray:
        """Largest error over atoms, one entry per schedule point."""
        return self.errors.max(axis=1)

    def same_values(self, other: ConvergenceReport) -> bool:
        return (
            self.schedule == other.schedule
            and self.target_kind == other.target_kind
            and np.array_equal(self.errors, other.errors)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "atom", "error"])
        for n, row in zip(self.schedule, self.errors):
            label = "x".join(str(x) for x in n) if isinstance(n, tuple) else str(n)
            for atom, e in enumerate(row):
                w.writerow([label, atom, f"{e:.17g}"])
        return buf.getvalue()

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "schema": 1,
            "schedule": [list(n) if isinstance(n, tuple) else n for n in self.schedule],
            "errors": self.errors.tolist(),
            "target_kind": self.target_kind,
        }
        if self.config is not None:
            out["config"] = self.config
        return out


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"step count must be an integer, got {n!r}")
    n = int(n)
    if n < 1:
        raise ValueError(f"step count must be >= 1, got {n}")
    if n > MAX_STEPS:
        raise ValueError(f"step count {n} exceeds {MAX_STEPS}")
    return n


def _check_schedule(schedule: Sequence[int]) -> list[int]:
    sched = [_check_n(n) for n in schedule]
    if not sched:
        raise ValueError("schedule must not be empty")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError(f"schedule must be strictly increasing: {sched}")
    return sched


def _to_vectors(fibers_by_atom: list[np.ndarray], u: BundleVector) -> list[BundleVector]:
    count = fibers_by_atom[0].shape[0]
    return [BundleVector([f[s] for f in fibers_by_atom], u.fiber_spec) for s in range(count)]


def _errors(averages: list[BundleVector], target: BundleVector) -> np.ndarray:
    metric = target.fiber_spec.metric
    return np.array(
        [
            [
                fiber_norm(a - t, None if metric is None else metric[i])
                for i, (a, t) in enumerate(zip(avg.fibers, target.fibers))
            ]
            for avg in averages
        ]
    )


def _resolve_target(T: BundleOperator, u: BundleVector, target: BundleVector | None):
    if target is None:
        return apply(mean_ergodic_projection(T), u), "projection-oracle"
    check_same_fibers(u.fiber_spec, target.fiber_spec)
    return target, "explicit-vector"


def cesaro_average(T: BundleOperator, u: BundleVector, n: int) -> BundleVector:
    """``A_n(T, u) = (1/n) sum_{k=0}^{n-1} T^k u``, fiber by fiber."""
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    n = _check_n(n)
    return _to_vectors(orbit_averages(T, u, [n], [float(n)]), u)[0]


def cesaro_averages(T: BundleOperator, u: BundleVector, schedule: Sequence[int]) -> list[BundleVector]:
    """Cesaro averages at every step count of ``schedule`` from a single orbit walk."""
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    sched = _check_schedule(schedule)
    return _to_vectors(orbit_averages(T, u, sched, [float(n) for n in sched]), u)


def mean_ergodic_projection(
    T: BundleOperator, rank_tol: float = DEFAULT_RANK_TOL, contraction_tol: float = 1e-9
) -> BundleOperator:
    """Orthogonal projection onto the fixed space ``ker(I - T_w)`` of each fiber.

    The kernel basis comes from the right singular vectors of ``I - T_w``
    whose singular values fall below ``rank_tol * max(sigma_max, 1)``.  The
    floor at 1 keeps a fiber that equals the identity up to rounding (all
    singular values near machine epsilon) from being read as full rank; for a
    contraction ``||I - T_w|| <= 2``, so 1 is the natural scale.  Fibers with
    ``T_w = I`` exactly get ``P_w = I``.  Orthogonality is in the fiber's own
    inner product.

    Raises:
        NotAContractionError: if some ``T_w`` has norm above ``1 + contraction_tol``.
    """
    check = is_contraction(T, contraction_tol)
    if not check:
        raise NotAContractionError(check.atom, check.norm)
    fs = T.fiber_spec
    mats = []
    for i in range(T.atom_count):
        w = T.whitened(i)
        w = w.toarray() if sp.issparse(w) else np.asarray(w)
        d = w.shape[0]
        gap = np.eye(d) - w
        if not np.any(gap):
            p = np.eye(d, dtype=np.complex128)
        else:
            _, s, vh = np.linalg.svd(gap)
            rank = int(np.sum(s > rank_tol * max(s[0], 1.0)))
            basis = vh[rank:].conj().T
            p = basis @ basis.conj().T
            p = 0.5 * (p + p.conj().T)
        r = fs.sqrt_metric(i)
        if r is not None:
            p = (p / r[:, None]) * r[None, :]
        mats.append(p)
    return BundleOperator(mats, fs)


def cesaro_trajectory(
    T: BundleOperator, u: BundleVector, schedule: Sequence[int], target: BundleVector | None = None
) -> ConvergenceReport:
    """Distances of Cesaro averages from ``target`` (default: the projection oracle applied to ``u``)."""
    averages = cesaro_averages(T, u, schedule)
    tgt, kind = _resolve_target(T, u, target)
    return ConvergenceReport(tuple(_check_schedule(schedule)), _errors(averages, tgt), kind)


def _commutator_gap(a, b) -> float:
    c = a @ b - b @ a
    if sp.issparse(c):
        return float(np.max(np.abs(c.data))) if c.nnz else 0.0
    return float(np.max(np.abs(c))) if c.size else 0.0


def _warn_if_noncommuting(Ts: Sequence[BundleOperator]) -> None:
    for i in range(len(Ts)):
        for j in range(i + 1, len(Ts)):
            for atom in range(Ts[i].atom_count):
                gap = _commutator_gap(Ts[i].matrices[atom], Ts[j].matrices[atom])
                if gap > 1e-9:
                    warnings.warn(
                        f"operators {i} and {j} do not commute at atom {atom} "
                        f"(max |[T_i, T_j]| = {gap:.3g})",
                        NonCommutingWarning,
                        stacklevel=3,
                    )
                    return


def _check_multi(Ts: Sequence[BundleOperator], u: BundleVector, d: int) -> None:
    if len(Ts) == 0:
        raise ValueError("need at least one operator")
    if len(Ts) != d:
        raise ValueError(f"{len(Ts)} operators but {d} step counts")
    for T in Ts:
        check_same_fibers(T.fiber_spec, u.fiber_spec)


def multiparameter_average(Ts: Sequence[BundleOperator], u: BundleVector, ns: Sequence[int]) -> BundleVector:
    """``(1/prod n_i) sum T_1^{i_1} ... T_d^{i_d} u`` as nested one-parameter averages.

    The innermost average uses ``T_d``; no commutation is assumed, but a
    :class:`NonCommutingWarning` is issued when some pair fails to commute.
    """
    _check_multi(Ts, u, len(ns))
    _warn_if_noncommuting(Ts)
    v = u
    for T, n in reversed(list(zip(Ts, ns))):
        v = cesaro_average(T, v, n)
    return v


def multiparameter_limit(Ts: Sequence[BundleOperator], u: BundleVector, rank_tol: float = DEFAULT_RANK_TOL) -> BundleVector:
    """``P_1 P_2 ... P_d u`` with each ``P_i`` from the projection oracle."""
    v = u
    for T in reversed(list(Ts)):
        v = apply(mean_ergodic_projection(T, rank_tol), v)
    return v


def multiparameter_trajectory(
    Ts: Sequence[BundleOperator],
    u: BundleVector,
    schedule: Sequence[Sequence[int]],
    target: BundleVector | None = None,
) -> ConvergenceReport:
    sched = [tuple(_check_n(n) for n in ns) for ns in schedule]
    if not sched:
        raise ValueError("schedule must not be empty")
    for ns in sched:
        _check_multi(Ts, u, len(ns))
    _warn_if_noncommuting(Ts)
    if target is None:
        tgt, kind = multiparameter_limit(Ts, u), "projection-oracle"
    else:
        check_same_fibers(u.fiber_spec, target.fiber_spec)
        tgt, kind = target, "explicit-vector"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonCommutingWarning)
        averages = [multiparameter_average(Ts, u, ns) for ns in sched]
    return ConvergenceReport(tuple(sched), _errors(averages, tgt), kind)


def _modulation_coeffs(a: seqs.SequenceSpec, n: int) -> np.ndarray:
    if a.role == "subsequence":
        raise seqs.SequenceError("a subsequence cannot modulate an average")
    return seqs.generate(a, n)


def modulated_averages(
    a: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, schedule: Sequence[int]
) -> list[BundleVector]:
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    sched = _check_schedule(schedule)
    coeffs = _modulation_coeffs(a, sched[-1])
    return _to_vectors(orbit_averages(T, u, sched, [float(n) for n in sched], coeffs), u)


def modulated_average(a: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, n: int) -> BundleVector:
    """``(1/n) sum_{k<n} a_k T^k u``."""
    return modulated_averages(a, T, u, [n])[0]


def modulated_trajectory(a, T, u, schedule, target=None) -> ConvergenceReport:
    averages = modulated_averages(a, T, u, schedule)
    tgt, kind = _resolve_target(T, u, target)
    return ConvergenceReport(tuple(_check_schedule(schedule)), _errors(averages, tgt), kind)


def subsequence_averages(
    k: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, schedule: Sequence[int]
) -> list[BundleVector]:
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    if k.role != "subsequence":
        raise seqs.SequenceError("expected a subsequence spec")
    sched = _check_schedule(schedule)
    terms = seqs.generate(k, sched[-1])
    horizon = int(terms[-1]) + 1
    if horizon > MAX_STEPS:
        raise ValueError(f"subsequence reaches power {terms[-1]}, beyond {MAX_STEPS}")
    coeffs = np.zeros(horizon, dtype=np.complex128)
    coeffs[terms] = 1.0
    stops = [int(terms[n - 1]) + 1 for n in sched]
    return _to_vectors(orbit_averages(T, u, stops, [float(n) for n in sched], coeffs), u)


def subsequence_average(k: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, n: int) -> BundleVector:
    """``(1/n) sum_{j=1}^{n} T^{k_j} u`` for a strictly increasing ``k_j >= 1``."""
    return subsequence_averages(k, T, u, [n])[0]


def subsequence_trajectory(k, T, u, schedule, target=None) -> ConvergenceReport:
    averages = subsequence_averages(k, T, u, schedule)
    tgt, kind = _resolve_target(T, u, target)
    return ConvergenceReport(tuple(_check_schedule(schedule)), _errors(averages, tgt), kind)


def weighted_averages(
    w: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, schedule: Sequence[int]
) -> list[BundleVector]:
    check_same_fibers(T.fiber_spec, u.fiber_spec)
    if w.role != "weight":
        raise seqs.SequenceError("expected a weight spec")
    sched = _check_schedule(schedule)
    weights = seqs.generate(w, sched[-1])
    totals = [math.fsum(weights[:n]) for n in sched]
    for n, total in zip(sched, totals):
        if total == 0.0:
            raise seqs.SequenceError(f"all weights below n = {n} vanish (W_n = 0)")
    return _to_vectors(orbit_averages(T, u, sched, totals, weights), u)


def weighted_average(w: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, n: int) -> BundleVector:
    """``(1/W_n) sum_{k<n} w_k T^k u`` with ``W_n = sum_{k<n} w_k``."""
    return weighted_averages(w, T, u, [n])[0]


def weighted_trajectory(w, T, u, schedule, target=None) -> ConvergenceReport:
    averages = weighted_averages(w, T, u, schedule)
    tgt, kind = _resolve_target(T, u, target)
    return ConvergenceReport(tuple(_check_schedule(schedule)), _errors(averages, tgt), kind)


def weighted_discrepancy(
    w: seqs.SequenceSpec, T: BundleOperator, u: BundleVector, schedule: Sequence[int]
) -> ConvergenceReport:
    """``||A_n(w, T, u) - A_n(T, u)||`` per atom along ``schedule``."""
    sched = _check_schedule(schedule)
    weighted = weighted_averages(w, T, u, sched)
    plain = cesaro_averages(T, u, sched)
    metric = u.fiber_spec.metric
    errors = np.array(
        [
            [
                fiber_norm(x - y, None if metric is None else metric[i])
                for i, (x, y) in enumerate(zip(a.fibers, b.fibers))
            ]
            for a, b in zip(weighted, plain)
        ]
    )
    return ConvergenceReport(tuple(sched), errors, "pairwise-discrepancy")


def projection_residuals(T: BundleOperator, P: BundleOperator) -> dict[str, np.ndarray]:
    """Per-atom spectral norms of ``P^2 - P``, ``P* - P`` and ``T P - P``."""
    from .operators import adjoint, operator_norm

    def gap(X: BundleOperator, Y: BundleOperator) -> np.ndarray:
        diff = BundleOperator(
            [
                (x.toarray() if sp.issparse(x) else x) - (y.toarray() if sp.issparse(y) else y)
                for x, y in zip(X.matrices, Y.matrices)
            ],
            X.fiber_spec,
        )
        return operator_norm(diff).real

    return {
        "idempotent": gap(compose(P, P), P),
        "selfadjoint": gap(adjoint(P), P),
        "fixed": gap(compose(T, P), P),
    }
