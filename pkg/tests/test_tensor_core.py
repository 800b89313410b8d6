import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from drn.errors import ArgumentError
from drn.tensor_core import Tensor3, fold, kronecker, matricize, mode_product, vectorize


def arange_tensor(dims):
    return Tensor3.from_buffer(dims, np.arange(np.prod(dims), dtype=float))


class TestTensor3:
    def test_storage_offset(self):
        t = arange_tensor((2, 3, 4))
        for i1 in range(2):
            for i2 in range(3):
                for i3 in range(4):
                    assert t.data[i1, i2, i3] == (i1 * 3 + i2) * 4 + i3

    def test_immutable(self):
        t = arange_tensor((2, 2, 2))
        with pytest.raises(ValueError):
            t.data[0, 0, 0] = 5.0

    def test_buffer_length_checked(self):
        with pytest.raises(ArgumentError):
            Tensor3.from_buffer((2, 2, 2), np.zeros(7))

    def test_rejects_bad_dims(self):
        with pytest.raises(ArgumentError):
            Tensor3.zeros((2, 0, 2))
        with pytest.raises(ArgumentError):
            Tensor3(np.zeros((2, 2)))

    def test_arithmetic(self):
        a = arange_tensor((2, 2, 2))
        assert (a + a) == a * 2
        assert (a - a) == Tensor3.zeros((2, 2, 2))
        assert -a == a * -1.0
        with pytest.raises(ArgumentError):
            a + arange_tensor((2, 2, 1))


class TestMatricize:
    def test_mode1_rows_are_slabs(self):
        m = matricize(arange_tensor((2, 2, 2)), 1)
        assert_array_equal(m, [[0, 1, 2, 3], [4, 5, 6, 7]])

    def test_mode2_matches_index_definition(self, rng):
        t = Tensor3(rng.standard_normal((3, 2, 4)))
        expected = np.zeros((2, 12))
        for i1 in range(3):
            for i2 in range(2):
                for i3 in range(4):
                    expected[i2, i1 * 4 + i3] = t.data[i1, i2, i3]
        assert_array_equal(matricize(t, 2), expected)

    def test_mode3_column_order(self):
        t = arange_tensor((2, 3, 2))
        m = matricize(t, 3)
        assert m.shape == (2, 6)
        # columns run over (i1, i2) with i2 fastest
        assert_array_equal(m[:, 1], [t.data[0, 1, 0], t.data[0, 1, 1]])
        assert_array_equal(m[:, 3], [t.data[1, 0, 0], t.data[1, 0, 1]])

    @pytest.mark.parametrize("mode", [0, 4, "1"])
    def test_invalid_mode(self, mode):
        with pytest.raises(ArgumentError):
            matricize(arange_tensor((2, 2, 2)), mode)


class TestFold:
    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_inverts_matricize_bitwise(self, rng, mode):
        t = Tensor3(rng.standard_normal((4, 3, 2)))
        assert fold(matricize(t, mode), mode, t.dims) == t

    def test_trivial_tensor(self):
        t = Tensor3.from_buffer((1, 1, 1), [3.5])
        for mode in (1, 2, 3):
            assert fold(matricize(t, mode), mode, (1, 1, 1)) == t

    def test_shape_mismatch(self):
        with pytest.raises(ArgumentError):
            fold(np.zeros((3, 4)), 1, (2, 2, 2))


class TestVectorize:
    def test_storage_order(self):
        assert_array_equal(vectorize(arange_tensor((2, 2, 2))), np.arange(8.0))

    def test_from_buffer_round_trip(self, rng):
        v = rng.standard_normal(24)
        assert_array_equal(vectorize(Tensor3.from_buffer((2, 3, 4), v)), v)

    def test_kronecker_identity(self, rng):
        for _ in range(100):
            dims = tuple(rng.integers(1, 4, size=3))
            t = Tensor3(rng.standard_normal(dims))
            a, b, c = (rng.standard_normal((int(rng.integers(1, 4)), d)) for d in dims)
            chained = mode_product(mode_product(mode_product(t, a, 1), b, 2), c, 3)
            assert_allclose(vectorize(chained), kronecker(a, kronecker(b, c)) @ vectorize(t), rtol=1e-12, atol=1e-12)


class TestModeProduct:
    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_identity(self, rng, mode):
        t = Tensor3(rng.standard_normal((2, 3, 4)))
        assert mode_product(t, np.eye(t.dims[mode - 1]), mode) == t

    def test_replaces_dimension(self, rng):
        t = Tensor3(rng.standard_normal((2, 3, 4)))
        assert mode_product(t, rng.standard_normal((5, 3)), 2).dims == (2, 5, 4)

    def test_distinct_modes_commute(self, rng):
        t = Tensor3(rng.standard_normal((2, 3, 2)))
        a = rng.standard_normal((3, 2))
        b = rng.standard_normal((4, 3))
        ab = mode_product(mode_product(t, a, 1), b, 2)
        ba = mode_product(mode_product(t, b, 2), a, 1)
        assert_allclose(ab.data, ba.data, rtol=1e-12, atol=1e-14)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ArgumentError):
            mode_product(Tensor3.zeros((2, 3, 4)), np.eye(2), 2)


class TestKronecker:
    def test_identities(self):
        assert_array_equal(kronecker(np.eye(2), np.eye(3)), np.eye(6))

    def test_scalar(self, rng):
        b = rng.standard_normal((2, 3))
        assert_array_equal(kronecker([[2.0]], b), 2 * b)

    def test_mixed_product(self, rng):
        a, b, c, d = (rng.standard_normal((2, 2)) for _ in range(4))
        assert_allclose(kronecker(a, b) @ kronecker(c, d), kronecker(a @ c, b @ d), rtol=1e-12, atol=1e-14)

    def test_index_formula(self, rng):
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((4, 2))
        k = kronecker(a, b)
        assert k[1 * 4 + 3, 2 * 2 + 1] == a[1, 2] * b[3, 1]

    def test_overflow(self):
        with pytest.raises(ArgumentError):
            kronecker(np.zeros((1 << 10, 1 << 10)), np.zeros((1 << 5, 1 << 5)))
