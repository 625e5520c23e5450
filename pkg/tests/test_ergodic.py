import csv
import io
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkergodic import sequences as seqs
from hkergodic.bundle import BundleVector, FiberSpec, basis_vector, vector_norm, zero_vector
from hkergodic.ergodic import (
    ConvergenceReport,
    NonCommutingWarning,
    NotAContractionError,
    cesaro_average,
    cesaro_averages,
    cesaro_trajectory,
    mean_ergodic_projection,
    modulated_average,
    modulated_trajectory,
    multiparameter_average,
    multiparameter_limit,
    multiparameter_trajectory,
    projection_residuals,
    subsequence_average,
    subsequence_averages,
    weighted_average,
    weighted_discrepancy,
    weighted_trajectory,
)
from hkergodic.measure_space import uniform_space
from hkergodic.operators import (
    BundleOperator,
    apply,
    compose,
    diagonal_operator,
    identity_operator,
)
from hkergodic.sampling import (
    diagonal_unitary_bundle,
    random_contraction_bundle,
    random_fibers,
    random_unitary_matrix,
    random_vector,
)


def scalar_op(lam):
    fs = FiberSpec(uniform_space(1), [1])
    return diagonal_operator(fs, [[lam]]), basis_vector(fs)


def one_atom(m):
    fs = FiberSpec(uniform_space(1), [m.shape[0]])
    return BundleOperator([m], fs)


def max_dist(a, b):
    return max(float(np.linalg.norm(x - y)) for x, y in zip(a.fibers, b.fibers))


# -- Cesaro averages ----------------------------------------------------------------


def test_first_average_is_u():
    rng = np.random.default_rng(0)
    T = random_contraction_bundle(rng, atoms=6)
    u = random_vector(T.fiber_spec, rng)
    assert cesaro_average(T, u, 1).equals(u)


def test_fourth_roots_cancel():
    T, u = scalar_op(1j)
    assert cesaro_average(T, u, 4).fibers[0][0] == 0


def test_shift_orbit_closed_form():
    m = 40
    shift = np.eye(m, k=-1, dtype=complex)
    T = one_atom(shift)
    u = basis_vector(T.fiber_spec)
    for n in (1, 2, 5, 17, 40):
        expected = np.zeros(m)
        expected[:n] = 1.0 / n
        avg = cesaro_average(T, u, n).fibers[0]
        assert np.allclose(avg, expected, rtol=0, atol=1e-15)
        assert abs(vector_norm(cesaro_average(T, u, n)).values[0] - n**-0.5) <= 1e-12


def test_n_must_be_positive_integer():
    T, u = scalar_op(0.5)
    for bad in (0, -3, 2.5, True):
        with pytest.raises(ValueError):
            cesaro_average(T, u, bad)
    with pytest.raises(ValueError):
        cesaro_average(T, u, 2**31)


def test_schedule_validation():
    T, u = scalar_op(0.5)
    for bad in ([], [3, 3], [5, 2], [0, 1]):
        with pytest.raises(ValueError):
            cesaro_trajectory(T, u, bad)


def test_batched_schedule_matches_single_calls():
    rng = np.random.default_rng(1)
    T = random_contraction_bundle(rng, atoms=5)
    u = random_vector(T.fiber_spec, rng)
    sched = [1, 3, 10, 57]
    for n, avg in zip(sched, cesaro_averages(T, u, sched)):
        assert avg.equals(cesaro_average(T, u, n))


def test_average_against_dense_oracle():
    rng = np.random.default_rng(2)
    T = random_contraction_bundle(rng, atoms=8)
    u = random_vector(T.fiber_spec, rng)
    n = 50
    avg = cesaro_average(T, u, n)
    for i in range(T.atom_count):
        m = T.dense(i)
        acc = np.zeros(m.shape[0], dtype=complex)
        p = np.eye(m.shape[0])
        for _ in range(n):
            acc += p @ u.fibers[i]
            p = m @ p
        assert np.allclose(avg.fibers[i], acc / n, rtol=0, atol=1e-12)


# -- projection oracle ----------------------------------------------------------------


def test_projection_of_identity():
    rng = np.random.default_rng(3)
    fs = random_fibers(rng, 5)
    P = mean_ergodic_projection(identity_operator(fs))
    assert all(np.array_equal(p, np.eye(d)) for p, d in zip(P.matrices, fs.dims))


@pytest.mark.parametrize("lam", [0.5, -1.0, 1j, np.exp(0.3j), 0.0])
def test_projection_of_diagonal(lam):
    fs = FiberSpec(uniform_space(1), [2])
    P = mean_ergodic_projection(diagonal_operator(fs, [[1.0, lam]]))
    assert np.allclose(P.matrices[0], np.diag([1.0, 0.0]), rtol=0, atol=1e-12)


def test_projection_of_nilpotent():
    N = np.array([[0, 0], [1, 0]], dtype=complex)
    # oracle: I - N is invertible, so its null space is trivial
    assert np.linalg.matrix_rank(np.eye(2) - N) == 2
    P = mean_ergodic_projection(one_atom(N))
    assert np.allclose(P.matrices[0], 0, atol=1e-15)


def test_projection_requires_contraction():
    T, _ = scalar_op(1.5)
    with pytest.raises(NotAContractionError) as info:
        mean_ergodic_projection(T)
    assert info.value.atom == 0


def test_projection_fixed_space_oracle():
    # T = U diag(1, 1, mu, nu) U^H fixes exactly span(U e1, U e2)
    rng = np.random.default_rng(4)
    U = random_unitary_matrix(rng, 4)
    T = one_atom(U @ np.diag([1, 1, 0.3j, -0.9]) @ U.conj().T)
    P = mean_ergodic_projection(T)
    expected = U[:, :2] @ U[:, :2].conj().T
    assert np.allclose(P.matrices[0], expected, rtol=0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_projection_laws(seed):
    rng = np.random.default_rng(seed)
    T = random_contraction_bundle(rng, atoms=10)
    res = projection_residuals(T, mean_ergodic_projection(T))
    for key in ("idempotent", "selfadjoint", "fixed"):
        assert np.all(res[key] <= 1e-9), key


def test_identity_up_to_rounding_projects_to_identity():
    # U I U^H is the identity only up to rounding: every singular value of
    # I - T is near eps, and the fixed space is still the whole fiber
    rng = np.random.default_rng(12)
    U = random_unitary_matrix(rng, 6)
    m = U @ U.conj().T
    assert np.any(m != np.eye(6))
    fs = FiberSpec(uniform_space(1), [6])
    T = BundleOperator([m], fs)
    P = mean_ergodic_projection(T)
    assert np.allclose(P.matrices[0], np.eye(6), rtol=0, atol=1e-12)
    r = cesaro_trajectory(T, random_vector(fs, rng), [10, 1000])
    assert r.errors.max() <= 1e-12


@pytest.mark.parametrize("seed", range(0, 100, 7))
def test_averages_approach_projection_oracle(seed):
    # the oracle is computed without averaging; the averages must still land on it
    rng = np.random.default_rng(seed)
    T = random_contraction_bundle(rng, atoms=20)
    u = random_vector(T.fiber_spec, rng)
    r = cesaro_trajectory(T, u, [10**4])
    scale = np.array([np.linalg.norm(f) for f in u.fibers])
    assert np.all(r.errors[0] <= 0.05 * scale)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_fixed_part_exactness(seed):
    rng = np.random.default_rng(seed)
    T = random_contraction_bundle(rng, atoms=8)
    Pu = apply(mean_ergodic_projection(T), random_vector(T.fiber_spec, rng))
    for avg in cesaro_averages(T, Pu, [1, 7, 300]):
        assert max_dist(avg, Pu) <= 1e-10


# -- trajectories -----------------------------------------------------------------------


def test_identity_trajectory_is_zero():
    rng = np.random.default_rng(5)
    fs = random_fibers(rng, 4)
    r = cesaro_trajectory(identity_operator(fs), random_vector(fs, rng), [1, 10, 100])
    assert r.target_kind == "projection-oracle"
    assert not np.any(r.errors)


@pytest.mark.parametrize("theta", [0.1, 1.0, np.pi, 2.5])
def test_unimodular_closed_form(theta):
    lam = np.exp(1j * theta)
    T, u = scalar_op(lam)
    sched = [1, 2, 5, 10, 100, 1000]
    r = cesaro_trajectory(T, u, sched)
    for n, e in zip(sched, r.errors[:, 0]):
        exact = abs(lam**n - 1) / (n * abs(lam - 1))
        assert e == pytest.approx(exact, rel=1e-9, abs=1e-15)
        assert e <= 2 / (n * abs(lam - 1)) + 1e-15


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_telescoping_bound(seed):
    rng = np.random.default_rng(seed)
    T = random_contraction_bundle(rng, atoms=8)
    y = random_vector(T.fiber_spec, rng)
    u = y - apply(T, y)
    sched = [1, 10, 100, 1000]
    r = cesaro_trajectory(T, u, sched, target=zero_vector(T.fiber_spec))
    ny = vector_norm(y).real
    for n, row in zip(sched, r.errors):
        assert np.all(row <= 2 * ny / n + 1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_diagonal_unitary_rate(seed):
    rng = np.random.default_rng(seed)
    fs = random_fibers(rng, 6)
    T = diagonal_unitary_bundle(fs, rng, gap=0.3, fixed_prob=0.0)
    u = random_vector(fs, rng)
    sched = [5, 50, 500]
    r = cesaro_trajectory(T, u, sched)
    nu = vector_norm(u).real
    for i in range(fs.atom_count):
        lam = np.diag(T.matrices[i])
        c = np.max(1 / np.abs(lam - 1))
        for n, e in zip(sched, r.errors[:, i]):
            assert e <= 2 / n * c * nu[i] + 1e-12


def test_explicit_target_kind():
    T, u = scalar_op(0.5)
    r = cesaro_trajectory(T, u, [1, 2], target=zero_vector(T.fiber_spec))
    assert r.target_kind == "explicit-vector"
    assert r.errors[:, 0].tolist() == [1.0, 0.75]


# -- multiparameter -----------------------------------------------------------------


def test_multi_single_operator_is_cesaro():
    rng = np.random.default_rng(6)
    T = random_contraction_bundle(rng, atoms=5)
    u = random_vector(T.fiber_spec, rng)
    assert multiparameter_average([T], u, [37]).equals(cesaro_average(T, u, 37))


def test_multi_identities():
    rng = np.random.default_rng(7)
    fs = random_fibers(rng, 4)
    u = random_vector(fs, rng)
    I = identity_operator(fs)
    assert multiparameter_average([I, I, I], u, [3, 5, 2]).equals(u)


def test_multi_against_double_sum():
    rng = np.random.default_rng(8)
    fs = random_fibers(rng, 3)
    T1 = diagonal_unitary_bundle(fs, rng)
    T2 = diagonal_unitary_bundle(fs, rng)
    u = random_vector(fs, rng)
    n1, n2 = 6, 9
    avg = multiparameter_average([T1, T2], u, [n1, n2])
    for i in range(fs.atom_count):
        a, b = T1.dense(i), T2.dense(i)
        acc = sum(
            np.linalg.matrix_power(a, i1) @ np.linalg.matrix_power(b, i2) @ u.fibers[i]
            for i1 in range(n1)
            for i2 in range(n2)
        )
        assert np.allclose(avg.fibers[i], acc / (n1 * n2), atol=1e-12)


def test_multi_limit_commuting_diagonals():
    # fixed spaces share e1; the limit is P2 P1 u computed from the oracle
    fs = FiberSpec(uniform_space(2), [3, 3])
    T1 = diagonal_operator(fs, [[1, np.exp(1j), np.exp(2j)], [1, -1, 1j]])
    T2 = diagonal_operator(fs, [[1, 1, np.exp(-2.5j)], [1, np.exp(0.7j), 1]])
    u = random_vector(fs, np.random.default_rng(9))
    oracle = apply(compose(mean_ergodic_projection(T2), mean_ergodic_projection(T1)), u)
    assert max_dist(multiparameter_limit([T1, T2], u), oracle) <= 1e-14
    for n in (100, 1000):
        assert max_dist(multiparameter_average([T1, T2], u, [n, n]), oracle) <= 20 / n


def test_multi_non_commuting_warns():
    rng = np.random.default_rng(10)
    fs = FiberSpec(uniform_space(1), [3])
    A = BundleOperator([random_unitary_matrix(rng, 3)], fs)
    B = BundleOperator([random_unitary_matrix(rng, 3)], fs)
    with pytest.warns(NonCommutingWarning):
        multiparameter_average([A, B], basis_vector(fs), [2, 2])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        multiparameter_average([A, A], basis_vector(fs), [2, 2])


def test_multi_length_mismatch():
    T, u = scalar_op(0.5)
    with pytest.raises(ValueError):
        multiparameter_average([T, T], u, [3])
    with pytest.raises(ValueError):
        multiparameter_average([], u, [])


def test_multi_trajectory_schedule_labels():
    fs = FiberSpec(uniform_space(1), [1])
    T = diagonal_operator(fs, [[-1.0]])
    r = multiparameter_trajectory([T, T], basis_vector(fs), [[2, 2], [3, 4]])
    assert r.schedule == ((2, 2), (3, 4))
    assert r.to_csv().splitlines()[1].startswith("2x2,0,")


# -- modulated ------------------------------------------------------------------------


def test_modulated_constant_is_cesaro_bitwise():
    rng = np.random.default_rng(11)
    T = random_contraction_bundle(rng, atoms=6)
    u = random_vector(T.fiber_spec, rng)
    for n in (1, 13, 400):
        assert modulated_average(seqs.constant(1.0), T, u, n).equals(cesaro_average(T, u, n))


def test_modulated_cancels_conjugate_rotation():
    lam0 = np.exp(0.7j)
    T, u = scalar_op(np.conj(lam0))
    for n in (1, 10, 1000):
        assert abs(modulated_average(seqs.unimodular_geometric(lam0), T, u, n).fibers[0][0] - 1) <= 1e-12


def test_modulated_selects_eigenspace():
    lam0 = np.exp(2.0j)
    mu = np.exp(0.4j)
    fs = FiberSpec(uniform_space(1), [2])
    T = diagonal_operator(fs, [[np.conj(lam0), mu]])
    u = BundleVector([[3.0, 4.0]], fs)
    target = BundleVector([[3.0, 0.0]], fs)
    a = seqs.unimodular_geometric(lam0)
    sched = [10, 100, 1000]
    r = modulated_trajectory(a, T, u, sched, target=target)
    z = lam0 * mu
    for n, e in zip(sched, r.errors[:, 0]):
        # second coordinate: 4 * (1/n) sum z^k
        assert e == pytest.approx(4 * abs(z**n - 1) / (n * abs(z - 1)), rel=1e-9)


def test_modulated_rejects_subsequence_spec():
    T, u = scalar_op(0.5)
    with pytest.raises(seqs.SequenceError):
        modulated_average(seqs.floor_power(1.5), T, u, 4)


# -- subsequential ----------------------------------------------------------------------


def test_subsequence_identity_index_is_shifted_cesaro():
    rng = np.random.default_rng(12)
    T = random_contraction_bundle(rng, atoms=5)
    u = random_vector(T.fiber_spec, rng)
    for n in (1, 9, 250):
        lhs = subsequence_average(seqs.linear(1), T, u, n)
        rhs = cesaro_average(T, apply(T, u), n)
        assert max_dist(lhs, rhs) <= 1e-12


def test_subsequence_of_identity():
    rng = np.random.default_rng(13)
    fs = random_fibers(rng, 4)
    u = random_vector(fs, rng)
    assert subsequence_average(seqs.floor_power(1.5), identity_operator(fs), u, 30).equals(u)


def test_even_subsequence_defeats_reflection():
    T, u = scalar_op(-1.0)
    k = seqs.linear(2)
    for avg in subsequence_averages(k, T, u, [1, 2, 11, 500]):
        assert avg.fibers[0][0] == 1
    assert not np.any(apply(mean_ergodic_projection(T), u).fibers[0])


def test_subsequence_matches_direct_powers():
    rng = np.random.default_rng(14)
    T = random_contraction_bundle(rng, atoms=4)
    u = random_vector(T.fiber_spec, rng)
    k = seqs.floor_power(1.5)
    n = 12
    terms = seqs.generate(k, n)
    avg = subsequence_average(k, T, u, n)
    for i in range(T.atom_count):
        m = T.dense(i)
        acc = sum(np.linalg.matrix_power(m, int(t)) @ u.fibers[i] for t in terms)
        assert np.allclose(avg.fibers[i], acc / n, atol=1e-12)


def test_subsequence_rejects_bad_specs():
    T, u = scalar_op(0.5)
    with pytest.raises(seqs.SequenceError):
        subsequence_average(seqs.constant(1.0), T, u, 3)
    with pytest.raises(seqs.SequenceError):
        subsequence_average(seqs.custom([1, 3, 3], "subsequence"), T, u, 3)


# -- weighted -------------------------------------------------------------------------


def test_weighted_ones_is_cesaro_bitwise():
    rng = np.random.default_rng(15)
    T = random_contraction_bundle(rng, atoms=6)
    u = random_vector(T.fiber_spec, rng)
    w = seqs.constant(1.0, role="weight")
    for n in (1, 8, 333):
        assert weighted_average(w, T, u, n).equals(cesaro_average(T, u, n))
    sched = [2, 20, 200]
    assert weighted_trajectory(w, T, u, sched).same_values(cesaro_trajectory(T, u, sched))


@pytest.mark.parametrize("k", [seqs.linear(1), seqs.linear(3, 2), seqs.floor_power(1.5)])
def test_weighted_indicator_matches_subsequence(k):
    rng = np.random.default_rng(16)
    T = random_contraction_bundle(rng, atoms=5)
    u = random_vector(T.fiber_spec, rng)
    horizon = 200
    terms = seqs.generate(k, horizon)
    count = int(np.sum(terms < horizon))
    w = seqs.subsequence_to_weights(k, horizon)
    lhs = weighted_average(w, T, u, horizon)
    rhs = subsequence_average(k, T, u, count)
    assert max_dist(lhs, rhs) <= 1e-12


def test_weighted_point_mass():
    rng = np.random.default_rng(17)
    T = random_contraction_bundle(rng, atoms=4)
    u = random_vector(T.fiber_spec, rng)
    w = seqs.custom([1.0] + [0.0] * 99, "weight")
    for n in (1, 5, 100):
        assert weighted_average(w, T, u, n).equals(u)


def test_weighted_zero_prefix_rejected():
    T, u = scalar_op(0.5)
    w = seqs.custom([0.0, 0.0, 1.0], "weight")
    with pytest.raises(seqs.SequenceError):
        weighted_average(w, T, u, 2)
    assert weighted_average(w, T, u, 3).fibers[0][0] == 0.25


def test_negative_weight_rejected():
    with pytest.raises(seqs.SequenceError):
        seqs.custom([1.0, -0.5], "weight")


def test_discrepancy_trivial_cases():
    rng = np.random.default_rng(18)
    T = random_contraction_bundle(rng, atoms=5)
    u = random_vector(T.fiber_spec, rng)
    r = weighted_discrepancy(seqs.constant(1.0, role="weight"), T, u, [3, 30])
    assert r.target_kind == "pairwise-discrepancy" and not np.any(r.errors)
    I = identity_operator(T.fiber_spec)
    r = weighted_discrepancy(seqs.linear(1.0, 1, role="weight"), I, u, [3, 30])
    assert np.all(r.errors <= 1e-15)


def test_discrepancy_decays_for_unitary_with_gap():
    # w_k = k + 1 has c(lambda) = 0 for lambda != 1; T has no eigenvalue 1
    rng = np.random.default_rng(19)
    fs = random_fibers(rng, 6)
    T = diagonal_unitary_bundle(fs, rng, gap=0.5, fixed_prob=0.0)
    U = BundleOperator(
        [q @ m @ q.conj().T for q, m in ((random_unitary_matrix(rng, d), T.dense(i)) for i, d in enumerate(fs.dims))],
        fs,
    )
    u = random_vector(fs, rng)
    r = weighted_discrepancy(seqs.linear(1.0, 1, role="weight"), U, u, [100, 10**4])
    assert np.all(r.errors[1] < r.errors[0])
    assert np.all(r.errors[1] <= 1e-2 * vector_norm(u).real)


# -- fiberwise consistency and threading ---------------------------------------------


ENGINES = {
    "cesaro": lambda T, u, n: cesaro_average(T, u, n),
    "modulated": lambda T, u, n: modulated_average(seqs.unimodular_geometric(np.exp(0.5j)), T, u, n),
    "subsequence": lambda T, u, n: subsequence_average(seqs.floor_power(1.5), T, u, n),
    "weighted": lambda T, u, n: weighted_average(seqs.linear(0.5, 1, role="weight"), T, u, n),
    "multi": lambda T, u, n: multiparameter_average([T, T], u, [n, n + 3]),
}


@pytest.mark.parametrize("engine", sorted(ENGINES))
def test_fiberwise_consistency_bitwise(engine):
    rng = np.random.default_rng(20)
    T = random_contraction_bundle(rng, atoms=7)
    u = random_vector(T.fiber_spec, rng)
    run = ENGINES[engine]
    full = run(T, u, 60)
    for i in range(T.atom_count):
        alone = run(T.restrict(i), u.restrict(i), 60)
        assert np.array_equal(alone.fibers[0], full.fibers[i])


def test_results_independent_of_thread_count(monkeypatch):
    rng = np.random.default_rng(21)
    T = random_contraction_bundle(rng, atoms=9)
    u = random_vector(T.fiber_spec, rng)
    monkeypatch.setenv("ERG_THREADS", "1")
    serial = cesaro_averages(T, u, [5, 50, 500])
    monkeypatch.setenv("ERG_THREADS", "4")
    threaded = cesaro_averages(T, u, [5, 50, 500])
    assert all(a.equals(b) for a, b in zip(serial, threaded))


def test_bad_thread_setting(monkeypatch):
    T, u = scalar_op(0.5)
    monkeypatch.setenv("ERG_THREADS", "-2")
    with pytest.raises(ValueError):
        cesaro_average(T, u, 3)


def test_sparse_and_dense_fibers_agree():
    import scipy.sparse as sp

    m = np.eye(30, k=-1, dtype=complex) * 0.9 + np.eye(30, k=2, dtype=complex) * 0.05
    fs = FiberSpec(uniform_space(1), [30])
    u = random_vector(fs, np.random.default_rng(22))
    dense = cesaro_average(BundleOperator([m], fs), u, 40)
    sparse = cesaro_average(BundleOperator([sp.csr_matrix(m)], fs), u, 40)
    assert max_dist(dense, sparse) <= 1e-14


# -- reports ------------------------------------------------------------------------------


def test_report_invariants():
    with pytest.raises(ValueError):
        ConvergenceReport((1, 2), np.zeros((3, 1)), "explicit-vector")
    with pytest.raises(ValueError):
        ConvergenceReport((1,), np.array([[-1.0]]), "explicit-vector")
    with pytest.raises(ValueError):
        ConvergenceReport((1,), np.zeros((1, 1)), "made-up")
    r = ConvergenceReport((1,), np.zeros((1, 2)), "explicit-vector")
    with pytest.raises(ValueError):
        r.errors[0, 0] = 1.0


def test_report_csv_and_json():
    r = ConvergenceReport((4, 100), np.array([[0.5, 0.25], [0.1, 1 / 3]]), "explicit-vector")
    rows = list(csv.reader(io.StringIO(r.to_csv())))
    assert rows[0] == ["n", "atom", "error"]
    assert rows[1] == ["4", "0", "0.5"]
    assert rows[4] == ["100", "1", "0.33333333333333331"]
    assert float(rows[4][2]) == 1 / 3
    data = json.loads(json.dumps(r.to_json()))
    assert data["schema"] == 1
    assert data["schedule"] == [4, 100]
    assert data["target_kind"] == "explicit-vector"
    assert data["errors"][1][1] == 1 / 3
