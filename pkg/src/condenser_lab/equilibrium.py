"""Green equilibrium measures and Riesz capacities of sampled compacta."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clouds import PointCloud
from .errors import InputError, SolverError
from .green import green_closed, green_matrix
from .kernels import DiagonalPolicy, KernelSpec, assemble_kernel_matrix, self_terms
from .measures import DiscreteMeasure
from .qp import solve_box_simplex_qp, solve_nonneg_qp


@dataclass
class EquilibriumResult:
    gamma: DiscreteMeasure
    capacity: float
    potential_min: float
    potential_max: float
    energy: float
    support_potential_min: float = 1.0
    support_potential_max: float = 1.0
    max_potential_D: float | None = None
    method: str = ""

    def identity_gap(self) -> float:
        """Largest relative gap in ``energy = mass = capacity``."""
        return max(abs(self.energy - self.gamma.total_mass), abs(self.energy - self.capacity)) / self.capacity

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "energy": self.energy,
            "potential_min": self.potential_min,
            "potential_max": self.potential_max,
            "support_potential_min": self.support_potential_min,
            "support_potential_max": self.support_potential_max,
            "max_potential_D": self.max_potential_D,
            "method": self.method,
        }


def _equilibrium_from_matrix(G: np.ndarray, cloud: PointCloud, method: str) -> EquilibriumResult:
    if cloud.size == 0:
        raise SolverError("empty cloud has no equilibrium measure")
    res = solve_nonneg_qp(G, np.ones(cloud.size))
    if not res.converged:
        raise SolverError("equilibrium QP did not converge",
                          data={"lower": res.lower_violation, "upper": res.upper_violation})
    x = res.x
    pot = G @ x
    sup = x > 1e-12 * x.max()
    gamma = DiscreteMeasure(cloud, x)
    energy = float(x @ pot)
    return EquilibriumResult(
        gamma, float(x.sum()), float(pot.min()), float(pot.max()), energy,
        float(pot[sup].min()), float(pot[sup].max()), None, method + ":" + res.method,
    )


def green_equilibrium(spec: KernelSpec, D, Q_cloud: PointCloud, diagonal_policy: DiagonalPolicy | None = None,
                      sweeper=None, D_check: np.ndarray | None = None) -> EquilibriumResult:
    """Green equilibrium measure of the sampled set ``Q`` in ``D``.

    Solves ``min nu' G nu - 2 sum(nu)`` over ``nu >= 0``, whose minimizer has
    Green potential 1 on its support and at least 1 at every sample.  With
    ``D_check`` points (and a closed-form kernel) the maximum of the Green
    potential there is recorded.
    """
    if Q_cloud.size == 0:
        raise SolverError("empty cloud has no equilibrium measure")
    G = green_matrix(spec, D, Q_cloud, diagonal_policy=diagonal_policy, sweeper=sweeper)
    out = _equilibrium_from_matrix(G, Q_cloud, "green")
    if D_check is not None and len(D_check):
        out.max_potential_D = max_green_potential(spec, D, out.gamma, D_check, diagonal_policy)
    return out


def max_green_potential(spec, D, gamma: DiscreteMeasure, X, diagonal_policy=None) -> float:
    """Max of the Green potential of ``gamma`` over ``X`` (points near atoms are skipped)."""
    if not D.has_closed_form_green:
        raise InputError("pointwise Green potentials need a closed-form kernel")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _, h = self_terms(spec, gamma.cloud, diagonal_policy)
    from scipy.spatial import cKDTree

    d, idx = cKDTree(gamma.cloud.points).query(X)
    keep = d > 2.0 * h[idx]
    if not keep.any():
        return float("nan")
    vals = green_closed(spec, D, X[keep], gamma.cloud.points) @ gamma.masses
    return float(vals.max())


def green_capacity_by_energy(spec: KernelSpec, D, Q_cloud: PointCloud, diagonal_policy=None,
                             sweeper=None) -> tuple:
    """``1 / min{ nu' G nu : nu >= 0, nu(Q) = 1 }`` and the minimizer."""
    G = green_matrix(spec, D, Q_cloud, diagonal_policy=diagonal_policy, sweeper=sweeper)
    res = solve_box_simplex_qp(G)
    return 1.0 / res.objective, DiscreteMeasure(Q_cloud, res.x)


def riesz_equilibrium(spec: KernelSpec, K_cloud: PointCloud,
                      diagonal_policy: DiagonalPolicy | None = None) -> EquilibriumResult:
    """Riesz equilibrium measure of a sampled compact set."""
    if K_cloud.size == 0:
        raise SolverError("empty cloud has no equilibrium measure")
    K = assemble_kernel_matrix(spec, K_cloud, diagonal_policy=diagonal_policy)
    return _equilibrium_from_matrix(K, K_cloud, "riesz")


def riesz_capacity(spec: KernelSpec, K_cloud: PointCloud, diagonal_policy: DiagonalPolicy | None = None) -> float:
    """Riesz capacity ``c(K) = gamma(K)`` of a sampled compact set."""
    return riesz_equilibrium(spec, K_cloud, diagonal_policy).capacity
