"""Sparse tensor mechanics against dense contraction oracles."""

import numpy as np
import pytest

from diffcone.canon import CanonContext, leaf_tensor
from diffcone.expressions import constant, parameter, variable
from diffcone.tensor3 import SparseTensor3, psi_combine


def dense_psi(T: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Oracle: slice-wise product with the constant-slice operand expanded."""
    p1 = T.shape[2]
    out = np.zeros((T.shape[0], S.shape[1], p1))
    t_const = np.allclose(T[:, :, :-1], 0)
    for k in range(p1):
        if t_const:
            out[:, :, k] = T[:, :, -1] @ S[:, :, k]
        else:
            out[:, :, k] = T[:, :, k] @ S[:, :, -1]
    return out


def random_tensor(rng, dims, const_only=False, density=0.4):
    size = dims[0] * dims[1] * dims[2]
    mask = rng.random(size).reshape(dims) < density
    vals = rng.standard_normal(dims) * mask
    if const_only:
        vals[:, :, :-1] = 0
    i, j, k = np.nonzero(vals)
    return SparseTensor3.from_entries(dims, i, j, k, vals[i, j, k])


class TestSparseTensor3:
    def test_duplicates_are_summed(self):
        t = SparseTensor3.from_entries((2, 2, 1), [0, 0, 1], [1, 1, 0],
                                       [0, 0, 0], [2.0, 3.0, 1.0])
        dense = t.to_dense()
        assert dense[0, 1, 0] == 5.0
        assert t.nnz == 2

    def test_cancelling_duplicates_are_dropped(self):
        t = SparseTensor3.from_entries((1, 1, 1), [0, 0], [0, 0], [0, 0],
                                       [1.0, -1.0])
        assert t.nnz == 0

    def test_bounds_checked(self):
        with pytest.raises(ValueError, match="bounds"):
            SparseTensor3.from_entries((1, 1, 1), [1], [0], [0], [1.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            SparseTensor3.from_entries((1, 1, 1), [0], [0], [0], [np.inf])


class TestPsiCombine:
    def test_identity_in_constant_slice(self, rng):
        S = random_tensor(rng, (3, 4, 3))
        eye = SparseTensor3.from_entries(
            (3, 3, 3), np.arange(3), np.arange(3), np.full(3, 2), np.ones(3))
        out = psi_combine(eye, S)
        np.testing.assert_allclose(out.to_dense(), S.to_dense(), atol=1e-14)

    def test_zero_annihilates(self, rng):
        T = random_tensor(rng, (2, 3, 3), const_only=True)
        S = SparseTensor3.zeros((3, 5, 3))
        assert psi_combine(T, S).nnz == 0

    def test_matches_dense_oracle_left_constant(self, rng):
        for _ in range(20):
            T = random_tensor(rng, (3, 4, 4), const_only=True)
            S = random_tensor(rng, (4, 5, 4))
            np.testing.assert_allclose(
                psi_combine(T, S).to_dense(),
                dense_psi(T.to_dense(), S.to_dense()), atol=1e-13)

    def test_matches_dense_oracle_right_constant(self, rng):
        for _ in range(20):
            T = random_tensor(rng, (3, 4, 4))
            S = random_tensor(rng, (4, 5, 4), const_only=True)
            np.testing.assert_allclose(
                psi_combine(T, S).to_dense(),
                dense_psi(T.to_dense(), S.to_dense()), atol=1e-13)

    def test_both_parametrized_rejected(self, rng):
        T = random_tensor(rng, (3, 3, 3))
        S = random_tensor(rng, (3, 3, 3))
        if T.is_constant_slice_only() or S.is_constant_slice_only():
            pytest.skip("random draw happened to be unparametrized")
        with pytest.raises(ValueError, match="unparametrized"):
            psi_combine(T, S)


class TestLeafTensors:
    def _ctx(self):
        return CanonContext({"x": 1}, {"g": 0}, n_vars=4, n_params=3)

    def test_scalar_constant(self):
        ctx = self._ctx()
        t = leaf_tensor(constant(5.0).leaf, ctx)
        assert t.dims == (1, 5, 4)
        assert t.nnz == 1
        assert (t.i[0], t.j[0], t.k[0], t.v[0]) == (0, 4, 3, 5.0)

    def test_parameter_leaf_one_hot_slices(self):
        ctx = self._ctx()
        t = leaf_tensor(parameter("g", 3).leaf, ctx)
        dense = t.to_dense()
        for i in range(3):
            assert dense[i, ctx.const_col, i] == 1.0
        assert t.nnz == 3

    def test_variable_leaf_one_hot_columns(self):
        ctx = self._ctx()
        t = leaf_tensor(variable("x", 3).leaf, ctx)
        dense = t.to_dense()
        for i in range(3):
            assert dense[i, 1 + i, ctx.const_slice] == 1.0
        assert t.nnz == 3

    def test_undeclared_leaf_raises(self):
        ctx = self._ctx()
        with pytest.raises(Exception, match="missing"):
            leaf_tensor(variable("nope", 2).leaf, ctx)
