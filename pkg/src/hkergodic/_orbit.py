"""Compiled orbit accumulation shared by every averaging engine.

For one fiber the kernel walks the orbit ``v_k = T^k u`` by repeated
matrix-vector products and accumulates ``coef_k * v_k`` with Kahan
compensation (real and imaginary parts separately).  Zero coefficients are
skipped entirely and unit coefficients add ``v_k`` without a multiply, so
averages that differ only by such coefficients are bitwise equal.

Fibers whose matrix is exactly the identity have a constant orbit; for them
the average is ``(sum_k coef_k / scale) * u`` with an exactly rounded
coefficient sum, so for instance every Cesaro average of the identity returns
``u`` itself.

Atoms are independent: each fiber is computed by its own kernel call, so a
bundle run and per-atom runs agree bitwise and the atom loop may be spread
over threads (``ERG_THREADS``; 0 means one per CPU).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

MAX_STEPS = 2**31 - 1


@njit(cache=True, nogil=True)
def _kahan_add(sr, si, cr, ci, vr, vi):
    for i in range(sr.shape[0]):
        y = vr[i] - cr[i]
        t = sr[i] + y
        cr[i] = (t - sr[i]) - y
        sr[i] = t
        y = vi[i] - ci[i]
        t = si[i] + y
        ci[i] = (t - si[i]) - y
        si[i] = t


@njit(cache=True, nogil=True)
def _kahan_add_scaled(sr, si, cr, ci, vr, vi, ar, ai):
    for i in range(sr.shape[0]):
        xr = ar * vr[i] - ai * vi[i]
        xi = ar * vi[i] + ai * vr[i]
        y = xr - cr[i]
        t = sr[i] + y
        cr[i] = (t - sr[i]) - y
        sr[i] = t
        y = xi - ci[i]
        t = si[i] + y
        ci[i] = (t - si[i]) - y
        si[i] = t


@njit(cache=True, nogil=True)
def _csr_step(indptr, indices, dr, di, vr, vi, wr, wi):
    for r in range(wr.shape[0]):
        accr = 0.0
        acci = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            j = indices[p]
            accr += dr[p] * vr[j] - di[p] * vi[j]
            acci += dr[p] * vi[j] + di[p] * vr[j]
        wr[r] = accr
        wi[r] = acci


@njit(cache=True, nogil=True)
def _gather_step(col, gr, gi, vr, vi, wr, wi):
    # one stored entry per row at most; col[r] < 0 marks an empty row
    for r in range(wr.shape[0]):
        j = col[r]
        if j < 0:
            wr[r] = 0.0
            wi[r] = 0.0
        else:
            wr[r] = gr[r] * vr[j] - gi[r] * vi[j]
            wi[r] = gr[r] * vi[j] + gi[r] * vr[j]


@njit(cache=True, nogil=True)
def _orbit_kernel(indptr, indices, dr, di, monomial, col, gr, gi, v0r, v0i, cre, cim, unit, stops, scales, out):
    d = v0r.shape[0]
    vr = v0r.copy()
    vi = v0i.copy()
    wr = np.empty(d)
    wi = np.empty(d)
    sr = np.zeros(d)
    si = np.zeros(d)
    cr = np.zeros(d)
    ci = np.zeros(d)
    last = stops[stops.shape[0] - 1]
    nxt = 0
    for k in range(last):
        if unit:
            ar = 1.0
            ai = 0.0
        else:
            ar = cre[k]
            ai = cim[k]
        if ar == 1.0 and ai == 0.0:
            _kahan_add(sr, si, cr, ci, vr, vi)
        elif ar != 0.0 or ai != 0.0:
            _kahan_add_scaled(sr, si, cr, ci, vr, vi, ar, ai)
        if k + 1 == stops[nxt]:
            s = scales[nxt]
            for i in range(d):
                out[nxt, i] = complex(sr[i] / s, si[i] / s)
            nxt += 1
        if k + 1 < last:
            if monomial:
                _gather_step(col, gr, gi, vr, vi, wr, wi)
            else:
                _csr_step(indptr, indices, dr, di, vr, vi, wr, wi)
            vr, wr = wr, vr
            vi, wi = wi, vi


def _constant_orbit_factor(cre, cim, unit, stop: int, scale: float):
    if unit:
        return stop / scale
    re = math.fsum(cre[:stop]) / scale
    im = math.fsum(cim[:stop]) / scale
    return re if im == 0.0 else complex(re, im)


def thread_count() -> int:
    raw = os.environ.get("ERG_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("ERG_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def orbit_averages(T, u, stops, scales, coeffs=None) -> list[np.ndarray]:
    """Normalized orbit sums ``(1/scale_s) * sum_{k < stop_s} coef_k T^k u`` per atom.

    Args:
        T: a :class:`~hkergodic.operators.BundleOperator`.
        u: a :class:`~hkergodic.bundle.BundleVector` on the same fibers.
        stops: strictly increasing step counts; the last one is the horizon.
        scales: one normalizer per stop.
        coeffs: complex coefficients of length >= horizon, or ``None`` for all ones.

    Returns:
        One ``(len(stops), d_w)`` complex array per atom.
    """
    stops = np.ascontiguousarray(stops, dtype=np.int64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    if stops.ndim != 1 or stops.shape[0] == 0 or stops.shape != scales.shape:
        raise ValueError("stops and scales must be equal-length non-empty 1-d sequences")
    if stops[0] < 1 or np.any(np.diff(stops) <= 0):
        raise ValueError("stops must be strictly increasing and >= 1")
    if stops[-1] > MAX_STEPS:
        raise ValueError(f"step count {stops[-1]} exceeds {MAX_STEPS}")
    if coeffs is None:
        unit = True
        cre = cim = np.zeros(1)
    else:
        c = np.asarray(coeffs, dtype=np.complex128)
        if c.shape[0] < stops[-1]:
            raise ValueError(f"need {stops[-1]} coefficients, got {c.shape[0]}")
        unit = False
        cre = np.ascontiguousarray(c.real)
        cim = np.ascontiguousarray(c.imag)

    kdata = T.kernel_data
    identity = T.identity_fibers

    def run(atom: int) -> np.ndarray:
        indptr, indices, dr, di, mono, col, gr, gi = kdata[atom]
        f = u.fibers[atom]
        out = np.empty((stops.shape[0], f.shape[0]), dtype=np.complex128)
        if identity[atom]:
            for s, (stop, scale) in enumerate(zip(stops, scales)):
                out[s] = f * _constant_orbit_factor(cre, cim, unit, int(stop), float(scale))
            return out
        _orbit_kernel(
            indptr, indices, dr, di, mono, col, gr, gi,
            np.ascontiguousarray(f.real), np.ascontiguousarray(f.imag),
            cre, cim, unit, stops, scales, out,
        )
        return out

    atoms = range(T.atom_count)
    workers = min(thread_count(), T.atom_count)
    if workers <= 1:
        return [run(a) for a in atoms]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, atoms))
