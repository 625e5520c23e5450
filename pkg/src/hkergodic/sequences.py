"""Modulating sequences, subsequences and weights, plus empirical checks of
the unit-circle hypotheses under which the corresponding averages converge.

The checkers look at finitely many points of a root-of-unity grid and at a
finite horizon.  They can detect violations; they never certify that a
hypothesis holds.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

ROLES = ("modulation", "subsequence", "weight")
KINDS = ("constant", "unimodular_geometric", "floor_power", "linear", "custom")

DEFAULT_GRID_SIZE = 64
DEFAULT_TOL = 1e-2
DEFAULT_N = 10**5


class SequenceError(ValueError):
    """A sequence violates the constraints of its kind or role."""


@dataclass(frozen=True)
class SequenceSpec:
    """Description of a_k, k_j or w_k.

    ``param`` carries the kind's parameter: the constant value, the ratio
    ``lambda0`` of a unimodular geometric sequence, the exponent ``c`` of
    ``floor(j**c)``, or the slope of a linear sequence (``slope * i + offset``).
    Modulation and weight sequences are indexed from 0, subsequences from 1.
    """

    kind: str
    role: str = "modulation"
    param: complex | float | None = None
    values: tuple | None = None
    offset: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SequenceError(f"unknown sequence kind {self.kind!r}")
        if self.role not in ROLES:
            raise SequenceError(f"unknown sequence role {self.role!r}")
        if self.kind == "constant":
            value = 1.0 if self.param is None else self.param
            object.__setattr__(self, "param", value)
            if self.role == "subsequence":
                raise SequenceError("a constant sequence is not strictly increasing")
            if self.role == "weight" and not _nonneg_real(value):
                raise SequenceError("weights must be nonnegative reals")
        elif self.kind == "unimodular_geometric":
            lam = complex(self.param)
            if abs(abs(lam) - 1.0) > 1e-12:
                raise SequenceError(f"|lambda0| = {abs(lam)!r} is not 1")
            if self.role != "modulation":
                raise SequenceError("unimodular geometric sequences are modulations only")
            object.__setattr__(self, "param", lam)
        elif self.kind == "floor_power":
            c = float(self.param)
            if not c > 1.0 or c == math.floor(c):
                raise SequenceError("floor_power needs a non-integer exponent c > 1")
            object.__setattr__(self, "param", c)
        elif self.kind == "linear":
            slope = self.param
            if slope is None:
                raise SequenceError("linear sequences need a slope")
            if self.role == "subsequence":
                if slope != int(slope) or int(slope) < 1 or slope + self.offset < 1:
                    raise SequenceError("a linear subsequence needs integer slope >= 1 and k_1 >= 1")
            elif self.role == "weight" and (not _nonneg_real(slope) or self.offset < 0):
                raise SequenceError("linear weights need nonnegative slope and offset")
        elif self.kind == "custom":
            if self.values is None:
                raise SequenceError("custom sequences need explicit values")
            vals = tuple(self.values)
            object.__setattr__(self, "values", vals)
            if self.role == "weight" and not all(_nonneg_real(v) for v in vals):
                raise SequenceError("weights must be nonnegative reals")
            if self.role == "subsequence":
                _check_subsequence(np.asarray(vals))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "role": self.role}
        if self.kind == "custom":
            out["values"] = [_encode(v) for v in self.values]
        elif self.param is not None:
            out["param"] = _encode(self.param)
        if self.offset:
            out["offset"] = self.offset
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> SequenceSpec:
        param = data.get("param")
        if isinstance(param, list):
            param = complex(*param)
        values = data.get("values")
        if values is not None:
            values = tuple(complex(*v) if isinstance(v, list) else v for v in values)
        return cls(
            kind=data["kind"],
            role=data.get("role", "modulation"),
            param=param,
            values=values,
            offset=int(data.get("offset", 0)),
        )


def _encode(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _nonneg_real(v) -> bool:
    z = complex(v)
    return z.imag == 0.0 and z.real >= 0.0 and math.isfinite(z.real)


def _check_subsequence(k: np.ndarray) -> None:
    if k.size == 0:
        return
    if not np.all(np.asarray(k) == np.floor(np.real(k))):
        raise SequenceError("subsequence terms must be integers")
    if np.real(k[0]) < 1 or np.any(np.diff(np.real(k)) <= 0):
        raise SequenceError("subsequence must be strictly increasing positive integers")


def constant(value: complex = 1.0, role: str = "modulation") -> SequenceSpec:
    return SequenceSpec("constant", role, value)


def unimodular_geometric(lam: complex) -> SequenceSpec:
    return SequenceSpec("unimodular_geometric", "modulation", lam)


def floor_power(c: float) -> SequenceSpec:
    return SequenceSpec("floor_power", "subsequence", c)


def linear(slope, offset: int = 0, role: str = "subsequence") -> SequenceSpec:
    return SequenceSpec("linear", role, slope, offset=offset)


def custom(values: Sequence, role: str) -> SequenceSpec:
    return SequenceSpec("custom", role, values=tuple(values))


def _floor_power_terms(c: float, n: int) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=np.float64)
    x = j**c
    k = np.floor(x)
    # j**c lands a few ulps below an exact integer power, e.g. 9**1.5
    near = np.rint(x)
    fix = np.abs(x - near) <= 1e-12 * near
    k[fix] = near[fix]
    return k.astype(np.int64)


def generate(spec: SequenceSpec, n: int) -> np.ndarray:
    """First ``n`` terms: complex for modulations, float for weights, int64 for subsequences.

    Deterministic and prefix-stable.
    """
    if n < 1:
        raise SequenceError("n must be >= 1")
    base = 1 if spec.role == "subsequence" else 0
    idx = np.arange(base, base + n)
    if spec.kind == "constant":
        out = np.full(n, spec.param, dtype=np.complex128)
    elif spec.kind == "unimodular_geometric":
        ratios = np.full(n, spec.param, dtype=np.complex128)
        ratios[0] = 1.0
        out = np.cumprod(ratios)
    elif spec.kind == "floor_power":
        out = _floor_power_terms(spec.param, n)
    elif spec.kind == "linear":
        out = spec.param * idx + spec.offset
    else:
        if len(spec.values) < n:
            raise SequenceError(f"custom sequence has {len(spec.values)} terms, {n} requested")
        out = np.asarray(spec.values[:n])

    if spec.role == "subsequence":
        out = np.asarray(out)
        _check_subsequence(out)
        return np.real(out).astype(np.int64)
    if spec.role == "weight":
        out = np.asarray(out, dtype=np.complex128)
        if np.any(out.imag != 0.0) or np.any(out.real < 0.0):
            raise SequenceError("weights must be nonnegative reals")
        return out.real.astype(np.float64)
    return np.asarray(out, dtype=np.complex128)


def subsequence_to_weights(k: SequenceSpec, horizon: int) -> SequenceSpec:
    """Indicator weights ``w_{k_j} = 1``, zero elsewhere, on ``0 <= k < horizon``."""
    if k.role != "subsequence":
        raise SequenceError("expected a subsequence spec")
    if horizon < 1:
        raise SequenceError("horizon must be >= 1")
    if k.kind == "custom":
        terms = generate(k, len(k.values)) if k.values else np.zeros(0, dtype=np.int64)
    else:
        # k_j >= j, so the first `horizon` terms cover everything below horizon
        terms = generate(k, horizon)
    w = np.zeros(horizon)
    w[terms[terms < horizon]] = 1.0
    return custom(w.tolist(), "weight")


@dataclass(frozen=True)
class ConditionReport:
    """Per-grid-point estimates of the limits required by a convergence hypothesis.

    ``c_estimates`` are the estimates at ``n_used``; ``half_estimates`` the
    same quantity at ``n_used // 2``.  ``sup_estimate`` is the largest modulus
    of any prefix average over the grid.
    """

    kind: str
    lambda_grid: np.ndarray
    c_estimates: np.ndarray
    half_estimates: np.ndarray
    converged: np.ndarray
    sup_estimate: float
    n_used: int
    tol: float
    sup_bounded: bool | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def violations(self) -> list[complex]:
        return [complex(z) for z, ok in zip(self.lambda_grid, self.converged) if not ok]

    @property
    def no_violation_detected(self) -> bool:
        return bool(np.all(self.converged)) and self.sup_bounded is not False

    @property
    def max_abs_estimate(self) -> float:
        return float(np.max(np.abs(self.c_estimates)))

    def estimate_at(self, lam: complex) -> complex:
        i = int(np.argmin(np.abs(self.lambda_grid - lam)))
        return complex(self.c_estimates[i])

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": 1,
            "kind": self.kind,
            "n_used": self.n_used,
            "tol": self.tol,
            "sup_estimate": self.sup_estimate,
            "sup_bounded": self.sup_bounded,
            "no_violation_detected": self.no_violation_detected,
            "points": [
                {
                    "lambda": [float(z.real), float(z.imag)],
                    "c": [float(c.real), float(c.imag)],
                    "converged": bool(ok),
                }
                for z, c, ok in zip(self.lambda_grid, self.c_estimates, self.converged)
            ],
        }


def _grid(grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Exponents ``m`` and a table of the roots ``exp(2 pi i t / G)``.

    The table is built with the circle's symmetries imposed exactly (quarter
    turns, conjugate pairs and antipodes), so sums over complete orbits of a
    root cancel without residue.
    """
    roots = np.array([cmath.exp(2j * math.pi * t / grid_size) for t in range(grid_size)])
    for t in range(grid_size):
        if (4 * t) % grid_size == 0:
            roots[t] = (1, 1j, -1, -1j)[(4 * t) // grid_size]
    for t in range(1, grid_size):
        if t > grid_size - t:
            roots[t] = np.conj(roots[grid_size - t])
    if grid_size % 2 == 0:
        half = grid_size // 2
        roots[half:] = -roots[:half]
    return np.arange(grid_size), roots


def _check_args(grid_size: int, n: int, tol: float) -> None:
    if grid_size < 4:
        raise ValueError("grid_size must be >= 4")
    if n < 16:
        raise ValueError("n must be >= 16")
    if tol <= 0:
        raise ValueError("tol must be > 0")


def _residue_sums(seq: np.ndarray, grid_size: int) -> list[tuple[Fraction, Fraction]]:
    """Sums of ``seq[k]`` over each residue class ``k mod grid_size``."""
    seq = np.asarray(seq, dtype=np.complex128)
    return [
        (Fraction(math.fsum(seq[r::grid_size].real)), Fraction(math.fsum(seq[r::grid_size].imag)))
        for r in range(grid_size)
    ]


def _residue_counts(residues: np.ndarray, grid_size: int) -> list[tuple[Fraction, Fraction]]:
    counts = np.bincount(residues, minlength=grid_size)
    return [(Fraction(int(c)), Fraction(0)) for c in counts]


def _grid_average(bins, roots: np.ndarray, m: int, sign: int, norm: float) -> complex:
    """``(1/norm) * sum_r bins[r] * lambda_m^(sign * r)``, rounded once.

    On a grid of ``G``-th roots of unity the power ``lambda^k`` depends on
    ``k`` only through ``k mod G``, so a sum over ``k`` regroups exactly into
    residue-class sums; the regrouped sum is evaluated in rational arithmetic.
    """
    G = roots.shape[0]
    re = Fraction(0)
    im = Fraction(0)
    for r, (br, bi) in enumerate(bins):
        if br == 0 and bi == 0:
            continue
        z = roots[(sign * m * r) % G]
        zr, zi = Fraction(float(z.real)), Fraction(float(z.imag))
        re += br * zr - bi * zi
        im += br * zi + bi * zr
    q = Fraction(norm)
    return complex(float(re / q), float(im / q))


def check_modulation_conditions(
    a: SequenceSpec, grid_size: int = DEFAULT_GRID_SIZE, n: int = DEFAULT_N, tol: float = DEFAULT_TOL
) -> ConditionReport:
    """Estimate ``c(lambda) = lim (1/n) sum a_k conj(lambda)^k`` and the sup condition.

    A grid point counts as converged when its estimates at ``n`` and ``n//2``
    differ by less than ``tol``.  The sup condition is flagged as unbounded
    when the sup over prefixes up to ``n`` exceeds the sup up to ``n//2`` by
    more than ``tol`` (relative, floored at 1).
    """
    _check_args(grid_size, n, tol)
    seq = generate(a, n)
    ms, roots = _grid(grid_size)
    k = np.arange(n, dtype=np.int64)
    counts = np.arange(1, n + 1, dtype=np.float64)
    bins_full = _residue_sums(seq, grid_size)
    bins_half = _residue_sums(seq[: n // 2], grid_size)
    est, half, conv = [], [], []
    sup_full = sup_half = 0.0
    for m in ms:
        e = _grid_average(bins_full, roots, m, -1, n)
        h = _grid_average(bins_half, roots, m, -1, n // 2)
        est.append(e)
        half.append(h)
        conv.append(abs(e - h) < tol)
        fwd = np.abs(np.cumsum(seq * roots[(m * k) % grid_size])) / counts
        sup_full = max(sup_full, float(np.max(fwd)))
        sup_half = max(sup_half, float(np.max(fwd[: n // 2])))
    bounded = sup_full - sup_half <= tol * max(1.0, sup_half)
    return ConditionReport(
        kind="modulation",
        lambda_grid=roots[ms],
        c_estimates=np.array(est),
        half_estimates=np.array(half),
        converged=np.array(conv),
        sup_estimate=sup_full,
        n_used=n,
        tol=tol,
        sup_bounded=bool(bounded),
    )


def check_subsequence_condition(
    k: SequenceSpec, grid_size: int = DEFAULT_GRID_SIZE, n: int = DEFAULT_N, tol: float = DEFAULT_TOL
) -> ConditionReport:
    """Estimate ``(1/n) sum_{j <= n} lambda^{k_j}`` on the grid without ``lambda = 1``.

    A grid point counts as converged when the estimate is below ``tol`` in modulus.
    """
    _check_args(grid_size, n, tol)
    if k.role != "subsequence":
        raise SequenceError("expected a subsequence spec")
    terms = generate(k, n)
    ms, roots = _grid(grid_size)
    ms = ms[1:]
    counts = np.arange(1, n + 1, dtype=np.float64)
    residues = terms % grid_size
    bins_full = _residue_counts(residues, grid_size)
    bins_half = _residue_counts(residues[: n // 2], grid_size)
    est, half, conv = [], [], []
    sup = 0.0
    for m in ms:
        e = _grid_average(bins_full, roots, m, 1, n)
        est.append(e)
        half.append(_grid_average(bins_half, roots, m, 1, n // 2))
        conv.append(abs(e) < tol)
        prefix = np.abs(np.cumsum(roots[(m * residues) % grid_size])) / counts
        sup = max(sup, float(np.max(prefix)))
    return ConditionReport(
        kind="subsequence",
        lambda_grid=roots[ms],
        c_estimates=np.array(est),
        half_estimates=np.array(half),
        converged=np.array(conv),
        sup_estimate=sup,
        n_used=n,
        tol=tol,
    )


def check_weight_condition(
    w: SequenceSpec, grid_size: int = DEFAULT_GRID_SIZE, n: int = DEFAULT_N, tol: float = DEFAULT_TOL
) -> ConditionReport:
    """Estimate ``c(lambda) = lim (1/W_n) sum w_k conj(lambda)^k`` with a Cauchy test.

    Grid points whose half-horizon partial weight ``W_{n//2}`` vanishes are
    reported as not converged (no evidence either way).
    """
    _check_args(grid_size, n, tol)
    if w.role != "weight":
        raise SequenceError("expected a weight spec")
    seq = generate(w, n)
    partial = np.cumsum(seq)
    if partial[-1] == 0.0:
        raise SequenceError("all weights below n are zero (W_n = 0)")
    ms, roots = _grid(grid_size)
    k = np.arange(n, dtype=np.int64)
    total = math.fsum(seq)
    half_total = math.fsum(seq[: n // 2])
    bins_full = _residue_sums(seq, grid_size)
    bins_half = _residue_sums(seq[: n // 2], grid_size)
    ok = partial > 0
    est, half, conv = [], [], []
    sup = 0.0
    for m in ms:
        e = _grid_average(bins_full, roots, m, -1, total)
        h = _grid_average(bins_half, roots, m, -1, half_total) if half_total > 0 else complex("nan")
        est.append(e)
        half.append(h)
        conv.append(bool(abs(e - h) < tol))
        cs = np.cumsum(seq * roots[(m * k) % grid_size])
        sup = max(sup, float(np.max(np.abs(cs[ok]) / partial[ok])))
    return ConditionReport(
        kind="weight",
        lambda_grid=roots[ms],
        c_estimates=np.array(est),
        half_estimates=np.array(half),
        converged=np.array(conv),
        sup_estimate=sup,
        n_used=n,
        tol=tol,
    )
