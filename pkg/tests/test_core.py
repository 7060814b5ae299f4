import numpy as np
import pytest

from phred.core import (
    DimensionError,
    InvariantError,
    PHSystem,
    SingularResolventError,
    ThetaVector,
    assemble,
    batch_transfer,
    extract,
    hamiltonian,
    load_system,
    save_system,
    theta_length,
    transfer_eval,
    vec_to_full,
    vec_to_strict_upper,
    vec_to_upper,
)

from conftest import random_theta


def scalar_system(r=1.0, q=1.0, b=1.0):
    return PHSystem([[0.0]], [[r]], [[q]], [[b]])


class TestTriangleMaps:
    def test_upper_1x1(self):
        a = 3.7
        assert np.array_equal(vec_to_upper([a], 1), [[a]])

    def test_upper_2x2_row_major(self):
        assert np.array_equal(vec_to_upper([1, 2, 3], 2), [[1, 2], [0, 3]])

    def test_strict_upper_1x1_empty(self):
        assert np.array_equal(vec_to_strict_upper([], 1), [[0.0]])

    def test_strict_upper_2x2(self):
        assert np.array_equal(vec_to_strict_upper([5.0], 2), [[0, 5.0], [0, 0]])

    def test_full_column_major(self):
        assert np.array_equal(vec_to_full([1, 2], 2, 1), [[1], [2]])
        assert np.array_equal(vec_to_full([1, 2, 3, 4], 2, 2), [[1, 3], [2, 4]])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            vec_to_upper([1, 2], 2)
        with pytest.raises(DimensionError):
            vec_to_strict_upper([1, 2], 2)
        with pytest.raises(DimensionError):
            vec_to_full([1, 2, 3], 2, 2)

    def test_upper_round_trip_against_index_enumeration(self):
        # Independent oracle: place entries by explicit (row, col) loops.
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            v = rng.standard_normal(n * (n + 1) // 2)
            expected = np.zeros((n, n))
            k = 0
            for i in range(n):
                for j in range(i, n):
                    expected[i, j] = v[k]
                    k += 1
            M = vec_to_upper(v, n)
            assert np.array_equal(M, expected)
            # Read back row by row: the map is a bijection.
            back = [M[i, j] for i in range(n) for j in range(i, n)]
            assert np.array_equal(back, v)

    def test_strict_upper_round_trip_against_index_enumeration(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            v = rng.standard_normal(n * (n - 1) // 2)
            expected = np.zeros((n, n))
            k = 0
            for i in range(n):
                for j in range(i + 1, n):
                    expected[i, j] = v[k]
                    k += 1
            M = vec_to_strict_upper(v, n)
            assert np.array_equal(M, expected)
            assert np.array_equal(np.diag(M), np.zeros(n))
            back = [M[i, j] for i in range(n) for j in range(i + 1, n)]
            assert np.array_equal(back, v)

    def test_full_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n, m = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            v = rng.standard_normal(n * m)
            assert np.array_equal(vec_to_full(v, n, m).ravel(order="F"), v)


class TestThetaVector:
    def test_partition_lengths(self):
        theta = ThetaVector(3, 2, np.arange(theta_length(3, 2), dtype=float))
        assert len(theta.theta_j) == 3
        assert len(theta.theta_r) == 6
        assert len(theta.theta_q) == 6
        assert len(theta.theta_b) == 6
        assert len(theta) == 3 * 10 // 2 + 6

    def test_bad_length(self):
        with pytest.raises(DimensionError):
            ThetaVector(3, 2, np.zeros(5))

    def test_any_vector_is_valid(self):
        rng = np.random.default_rng(11)
        theta = ThetaVector(4, 1, 100.0 * rng.standard_normal(theta_length(4, 1)))
        assemble(theta)  # must not raise


class TestAssemble:
    def test_scalar(self):
        theta = ThetaVector(1, 1, [1.0, 1.0, 1.0])
        sys1 = assemble(theta)
        assert np.array_equal(sys1.J, [[0.0]])
        assert np.array_equal(sys1.R, [[1.0]])
        assert np.array_equal(sys1.Q, [[1.0]])
        assert np.array_equal(sys1.B, [[1.0]])

    def test_n2_skew_block(self):
        a = 0.83
        data = np.zeros(theta_length(2, 1))
        data[0] = a
        J = assemble(ThetaVector(2, 1, data)).J
        assert np.array_equal(J, [[0.0, -a], [a, 0.0]])

    def test_invariants_random_sweep(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 3))
            sys_ = assemble(random_theta(rng, n, m, scale=3.0))
            assert np.max(np.abs(sys_.J + sys_.J.T)) <= 1e-12
            for M in (sys_.R, sys_.Q):
                w = np.linalg.eigvalsh(M)
                assert w.min() >= -1e-10 * (1.0 + np.abs(w).max())


class TestExtract:
    def test_recovers_theta_with_positive_diagonal_factors(self):
        rng = np.random.default_rng(13)
        n, m = 4, 2
        # Build theta whose R/Q factors already carry the Cholesky sign
        # convention, so extraction is exact up to round-off.
        theta_j = rng.standard_normal(n * (n - 1) // 2)
        tri = []
        for _ in range(2):
            U = np.triu(rng.standard_normal((n, n)))
            np.fill_diagonal(U, rng.uniform(0.5, 1.5, n))
            tri.append(U[np.triu_indices(n)])
        theta_b = rng.standard_normal(n * m)
        theta = ThetaVector(n, m, np.concatenate([theta_j, *tri, theta_b]))
        back = extract(assemble(theta))
        assert np.allclose(back.data, theta.data, atol=1e-9)

    def test_round_trip_transfer_function(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 3))
            sys1 = assemble(random_theta(rng, n, m))
            sys2 = assemble(extract(sys1))
            for w in rng.uniform(0.01, 100.0, 20):
                H1 = transfer_eval(sys1, 1j * w)
                H2 = transfer_eval(sys2, 1j * w)
                denom = max(np.linalg.norm(H1, 2), 1e-30)
                assert np.linalg.norm(H1 - H2, 2) / denom <= 1e-8

    def test_zero_dissipation_gives_zero_block(self):
        sys1 = PHSystem([[0.0]], [[0.0]], [[2.0]], [[1.0]])
        theta = extract(sys1)
        assert np.array_equal(theta.theta_r, [0.0])

    def test_msd_round_trip(self, msd_fom):
        sys2 = assemble(extract(msd_fom))
        for w in np.logspace(-2, 2, 50):
            H1 = transfer_eval(msd_fom, 1j * w)
            H2 = transfer_eval(sys2, 1j * w)
            assert (
                np.linalg.norm(H1 - H2, 2) / max(np.linalg.norm(H1, 2), 1e-30)
                <= 1e-8
            )

    def test_indefinite_matrix_rejected(self):
        with pytest.raises(InvariantError):
            PHSystem([[0.0]], [[-1.0]], [[1.0]], [[1.0]])


class TestTransferEval:
    def test_scalar_closed_form(self):
        sys1 = scalar_system()
        assert transfer_eval(sys1, 0.0)[0, 0] == pytest.approx(1.0)
        assert abs(transfer_eval(sys1, 1j)[0, 0]) == pytest.approx(1 / np.sqrt(2))

    def test_against_explicit_inverse(self):
        rng = np.random.default_rng(15)
        sys1 = assemble(random_theta(rng, 6, 2))
        A = sys1.dynamics_matrix()
        for w in rng.uniform(0.1, 50.0, 10):
            s = 1j * w
            expected = (
                sys1.B.T @ sys1.Q @ np.linalg.inv(s * np.eye(6) - A) @ sys1.B
            )
            got = transfer_eval(sys1, s)
            assert np.linalg.norm(got - expected, 2) <= 1e-12 * np.linalg.norm(
                expected, 2
            )

    def test_singular_resolvent_raises_with_point(self):
        # Undamped oscillator: purely imaginary poles at +/- i.
        sys1 = PHSystem(
            [[0.0, -1.0], [1.0, 0.0]],
            np.zeros((2, 2)),
            np.eye(2),
            [[1.0], [0.0]],
        )
        with pytest.raises(SingularResolventError) as err:
            transfer_eval(sys1, 1j)
        assert err.value.s == 1j

    def test_real_rationality(self):
        rng = np.random.default_rng(16)
        sys1 = assemble(random_theta(rng, 5, 2))
        for w in rng.uniform(0.1, 10.0, 5):
            H = transfer_eval(sys1, 1j * w)
            Hc = transfer_eval(sys1, np.conj(1j * w))
            assert np.allclose(Hc, np.conj(H), rtol=0, atol=1e-14)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(17)
        sys1 = assemble(random_theta(rng, 5, 2))
        ws = rng.uniform(0.1, 10.0, 23)
        batch = batch_transfer(sys1, 1j * ws)
        for k, w in enumerate(ws):
            single = transfer_eval(sys1, 1j * w)
            assert np.linalg.norm(batch[k] - single, 2) <= 1e-13 * max(
                np.linalg.norm(single, 2), 1e-30
            )

    def test_poles_in_closed_left_half_plane(self):
        rng = np.random.default_rng(18)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            theta = random_theta(rng, n, 1)
            # Bump the Q factor's diagonal so Q is nonsingular.
            data = theta.data.copy()
            a = n * (n - 1) // 2 + n * (n + 1) // 2
            U = vec_to_upper(data[a : a + n * (n + 1) // 2], n)
            np.fill_diagonal(U, np.abs(np.diag(U)) + 0.5)
            data[a : a + n * (n + 1) // 2] = U[np.triu_indices(n)]
            sys1 = assemble(theta.with_data(data))
            eigs = np.linalg.eigvals(sys1.dynamics_matrix())
            assert eigs.real.max() <= 1e-10 * (1 + np.abs(eigs).max())


class TestHamiltonian:
    def test_zero_state(self):
        assert hamiltonian(scalar_system(), [0.0]) == 0.0

    def test_identity_energy(self):
        sys1 = PHSystem(
            np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), [[1.0], [0.0]]
        )
        assert hamiltonian(sys1, [3.0, 4.0]) == pytest.approx(12.5)

    def test_nonnegative_sweep(self):
        rng = np.random.default_rng(19)
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            sys1 = assemble(random_theta(rng, n, 1))
            assert hamiltonian(sys1, rng.standard_normal(n)) >= -1e-12


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(20)
        sys1 = assemble(random_theta(rng, 4, 2))
        save_system(sys1, tmp_path / "sys")
        sys2 = load_system(tmp_path / "sys")
        for name in ("J", "R", "Q", "B"):
            assert np.allclose(
                getattr(sys1, name), getattr(sys2, name), rtol=0, atol=1e-15
            )

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(21)
        sys1 = assemble(random_theta(rng, 3, 1))
        save_system(sys1, tmp_path / "a")
        save_system(sys1, tmp_path / "b")
        for name in ("J.mtx", "R.mtx", "Q.mtx", "B.mtx", "system.meta"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_malformed_file_names_offender(self, tmp_path):
        rng = np.random.default_rng(22)
        save_system(assemble(random_theta(rng, 3, 1)), tmp_path / "sys")
        (tmp_path / "sys" / "Q.mtx").write_text("not a matrix market file\n")
        with pytest.raises(ValueError, match="Q.mtx"):
            load_system(tmp_path / "sys")
