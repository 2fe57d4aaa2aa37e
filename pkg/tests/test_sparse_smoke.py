"""Large sparse-QP smoke test for the iterative derivative mode.

Not a timing benchmark: the point is that the operator-only code paths
(LSQR on M and M') run end to end at a size where materializing dense
Jacobians would be wasteful.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from diffcone.derivatives import adjoint_derivative, forward_derivative
from diffcone.fixtures import sparse_qp_data
from diffcone.solver import SolverSettings, solve


@pytest.mark.slow
def test_sparse_qp_iterative_mode_end_to_end():
    data = sparse_qp_data(n=1024, seed=0)
    settings = SolverSettings(eps_abs=1e-8, eps_rel=1e-8)
    sol = solve(data, settings)
    assert sol.status == "optimal"
    assert sol.info["primal_residual"] <= 1e-7

    rng = np.random.default_rng(5)
    m, n = data.A.shape
    dx = rng.standard_normal(n)
    adj = adjoint_derivative(data, sol, dx, mode="iterative")
    assert adj.info["mode"] == "iterative"
    assert np.all(np.isfinite(adj.dA.data))
    assert np.all(np.isfinite(adj.db)) and np.all(np.isfinite(adj.dc))

    dA = sp.csr_matrix((rng.standard_normal(data.A.nnz),
                        data.A.indices.copy(), data.A.indptr.copy()),
                       shape=(m, n))
    db = rng.standard_normal(m)
    dc = rng.standard_normal(n)
    fwd = forward_derivative(data, sol, dA, db, dc, mode="iterative")
    assert np.all(np.isfinite(fwd.dx))

    lhs = float(np.sum(adj.dA.multiply(dA)) + adj.db @ db + adj.dc @ dc)
    rhs = float(dx @ fwd.dx)
    assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs), abs(rhs))


def test_sparse_qp_generator_shape_and_feasibility():
    data = sparse_qp_data(n=64, seed=3)
    m, n_plus_1 = data.A.shape
    assert n_plus_1 == 65
    assert data.cones.n_zero == 64
    assert data.cones.n_nonneg == 64
    assert data.cones.soc_dims == (66,)
    assert m == data.cones.total_dim
    # density stays sparse-ish: well under 10% filled
    assert data.A.nnz < 0.1 * m * n_plus_1
    sol = solve(data, SolverSettings(eps_abs=1e-9, eps_rel=1e-9))
    assert sol.status == "optimal"
