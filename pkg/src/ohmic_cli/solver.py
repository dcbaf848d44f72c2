from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse import linalg as spla

from ohmic_cli.config import load_settings
from ohmic_cli.errors import SolverFailure
from ohmic_cli.network import Network

logger = logging.getLogger(__name__)

CG_RTOL = 1e-11
RESIDUAL_RTOL = 1e-10


class GroundedLaplacian:
    """
    Laplacian of `net` restricted to the interior (nodes not in `boundary`).

    The diagonal is the off-diagonal conductance sum, never 1 - p(x,x), and
    the system is solved in the Jacobi-scaled form D^-1/2 L D^-1/2, which has
    unit diagonal whatever the spread of the conductances. Up to
    `direct_limit` unknowns a sparse LU is used, above it conjugate gradients.
    Instances hold a factorization and must not be shared across threads.
    """

    def __init__(self, net: Network, boundary: NDArray[np.bool_], *, direct_limit: int | None = None) -> None:
        self.net = net
        self.boundary = np.asarray(boundary, dtype=bool)
        self.interior = np.flatnonzero(~self.boundary)
        self.boundary_idx = np.flatnonzero(self.boundary)
        limit = direct_limit if direct_limit is not None else load_settings().direct_limit

        adj = net.adjacency
        A_II = adj[self.interior][:, self.interior]
        self.A_IB = adj[self.interior][:, self.boundary_idx].tocsr()
        self.degree = net.offdiag_degree[self.interior]
        self.L_II = (sparse.diags(self.degree) - A_II).tocsr()
        self._scale = 1.0 / np.sqrt(self.degree)
        S = sparse.diags(self._scale)
        self._M = (S @ self.L_II @ S).tocsc()
        m = len(self.interior)
        self.method = "direct" if m <= limit else "cg"
        self._lu = None
        if m and self.method == "direct":
            self._lu = spla.splu(self._M, permc_spec="MMD_AT_PLUS_A")
        logger.debug("grounded Laplacian: %d unknowns, method=%s", m, self.method)

    @property
    def size(self) -> int:
        return len(self.interior)

    def _solve_scaled(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        b = self._scale * rhs
        if self._lu is not None:
            y = self._lu.solve(b)
            # one step of iterative refinement
            y = y + self._lu.solve(b - self._M @ y)
            return self._scale * y
        y, info = spla.cg(self._M, b, rtol=CG_RTOL, atol=0.0, maxiter=max(1000, 20 * self.size))
        if info != 0:
            raise SolverFailure(f"conjugate gradients did not converge (info={info}, unknowns={self.size})")
        return self._scale * y

    def solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Solve L_II x = rhs on the interior."""
        if self.size == 0:
            return np.zeros(0)
        return self._solve_scaled(np.asarray(rhs, dtype=float))

    def harmonic_extension(self, values_on_boundary: NDArray[np.float64]) -> NDArray[np.float64]:
        """
        Full-length potential equal to the given values on the boundary and
        harmonic on the interior.
        """
        fb = np.asarray(values_on_boundary, dtype=float)
        f = np.empty(self.net.n)
        f[self.boundary_idx] = fb
        if self.size == 0:
            return f
        rhs = self.A_IB @ fb
        fi = self.solve(rhs)
        scale = float(np.max(np.abs(fb))) if fb.size else 0.0
        if scale > 0:
            resid = np.abs(self.L_II @ fi - rhs) / self.degree
            worst = float(resid.max())
            logger.debug("dirichlet residual %.3e (scale %.3e)", worst, scale)
            if worst > RESIDUAL_RTOL * scale:
                raise SolverFailure(
                    f"harmonic residual {worst:.3e} exceeds {RESIDUAL_RTOL:.0e} x {scale:.3e}", residual=worst
                )
        # Discrete maximum principle: the exact solution lies in the boundary range.
        f[self.interior] = np.clip(fi, fb.min(), fb.max())
        return f
