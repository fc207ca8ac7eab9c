"""Potentials, standard/mutual/Green energies and standard Gauss integrals.

Measures enter as :class:`~condenser_lab.measures.DiscreteMeasure` or
:class:`~condenser_lab.measures.SignedCondenserMeasure`; internally both are
flattened to lists of ``(measure, sign)`` parts and bilinear forms are
assembled blockwise, so every cloud keeps its own diagonal rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import axisym
from .clouds import PointCloud
from .errors import CarrierError, InputError, SingularEvaluationError
from .kernels import DiagonalPolicy, KernelSpec, assemble_kernel_matrix, mollify, self_terms
from .measures import DiscreteMeasure, SignedCondenserMeasure

_CHUNK = 4096


@dataclass
class EnergyReport:
    value: float
    estimated_error: float
    method: str

    def __post_init__(self):
        self.value = float(self.value)
        self.estimated_error = abs(float(self.estimated_error))

    def to_dict(self) -> dict:
        return {"value": self.value, "estimated_error": self.estimated_error, "method": self.method}


def parts(m, sign: float = 1.0) -> list:
    """Flatten a measure-like object into ``[(DiscreteMeasure, sign), ...]``.

    Accepts ``None`` (zero), a :class:`DiscreteMeasure`, a
    :class:`SignedCondenserMeasure`, or a list/tuple of ``(measure, sign)``
    pairs.
    """
    if m is None:
        return []
    if isinstance(m, DiscreteMeasure):
        return [(m, sign)] if m.size else []
    if isinstance(m, SignedCondenserMeasure):
        return parts(m.plus, sign) + parts(m.minus, -sign)
    if isinstance(m, (list, tuple)):
        out = []
        for item in m:
            if isinstance(item, tuple) and len(item) == 2 and not isinstance(item[1], DiscreteMeasure):
                out += parts(item[0], sign * float(item[1]))
            else:
                out += parts(item, sign)
        return out
    raise InputError(f"not a measure: {type(m).__name__}")


def _obs_cloud(X) -> PointCloud:
    return PointCloud(X, np.zeros(X.shape[0]), None, check_separation=False)


def _cap(spec: KernelSpec, r, h):
    """Smooth cap of ``r**p`` inside ``r < h`` (exact uniform-ball potential when alpha=2, n=3)."""
    p = spec.exponent
    return h**p * (1.0 - 0.5 * p * (1.0 - (r / h) ** 2))


def potential(spec: KernelSpec, m, x, mollified: bool = False,
              diagonal_policy: DiagonalPolicy | None = None):
    """Potential ``sum_j m_j kappa(x, y_j)`` of a (signed) discrete measure.

    ``x`` is one point or an ``(M, n)`` array.  Without ``mollified`` an
    evaluation point within ``1e-9 * scale`` of an atom raises
    :class:`SingularEvaluationError`; with it, each atom acts as a blob whose
    radius is the equivalent radius of its self term.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.n:
        raise InputError(f"evaluation points must lie in R^{spec.n}")
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite evaluation point")
    out = np.zeros(X.shape[0])
    for meas, sgn in parts(m):
        c = meas.cloud
        if c.n != spec.n:
            raise InputError("measure dimension does not match kernel")
        w = meas.masses
        live = w != 0
        if not live.any():
            continue
        sub = c if live.all() else c.subset(np.nonzero(live)[0])
        w = w[live]
        hmin = 1e-9 * max(1.0, c.scale)
        if mollified:
            _, h = self_terms(spec, c, diagonal_policy)
            h = h[live]
        for k in range(0, X.shape[0], _CHUNK):
            Xk = X[k:k + _CHUNK]
            D = cdist(Xk, sub.points)
            with np.errstate(divide="ignore"):
                K = D ** spec.exponent
            if mollified:
                near = D < h[None, :]
                if near.any():
                    hh = np.broadcast_to(h[None, :], D.shape)
                    K[near] = _cap(spec, D[near], hh[near])
            elif np.any(D < hmin):
                raise SingularEvaluationError("potential evaluated at an atom")
            if sub.ring_mask.any():
                axisym.ring_block(_obs_cloud(Xk), sub, K, symmetric=False)
            out[k:k + _CHUNK] += sgn * (K @ w)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# bilinear forms
# ---------------------------------------------------------------------------

def _block(spec, a: DiscreteMeasure, b: DiscreteMeasure, policy, kernel=None):
    if a.cloud is b.cloud or a.cloud.same_as(b.cloud):
        if kernel is not None:
            return kernel(a.cloud, None, policy)
        return assemble_kernel_matrix(spec, a.cloud, diagonal_policy=policy)
    if kernel is not None:
        return kernel(a.cloud, b.cloud, policy)
    return assemble_kernel_matrix(spec, a.cloud, b.cloud)


def bilinear(spec: KernelSpec, m1, m2, diagonal_policy=None, kernel=None) -> float:
    """``sum_ij m1_i m2_j k(x_i, y_j)``; ``kernel(rows, cols, policy)`` overrides kappa."""
    total = 0.0
    for a, sa in parts(m1):
        for b, sb in parts(m2):
            if not (np.any(a.masses) and np.any(b.masses)):
                continue
            K = _block(spec, a, b, diagonal_policy, kernel)
            total += sa * sb * float(a.masses @ K @ b.masses)
    return total


def quadratic(spec: KernelSpec, m, diagonal_policy=None, kernel=None) -> float:
    """Quadratic form of a (signed) measure; symmetric blocks counted once."""
    ps = parts(m)
    total = 0.0
    for i, (a, sa) in enumerate(ps):
        for j in range(i, len(ps)):
            b, sb = ps[j]
            if not (np.any(a.masses) and np.any(b.masses)):
                continue
            K = _block(spec, a, b, diagonal_policy, kernel)
            v = sa * sb * float(a.masses @ K @ b.masses)
            total += v if i == j else 2.0 * v
    return total


def _halved_value(spec, m, policy, kernel=None) -> float:
    """Quadratic form with every atom's equivalent mollifier radius halved."""
    diag_shift = 0.0
    for a, _ in parts(m):
        diag, h = self_terms(spec, a.cloud, policy)
        if not np.all(np.isfinite(h)):
            continue
        d2, _ = self_terms(spec, a.cloud, mollify(h / 2.0))
        diag_shift += float(np.sum(a.masses**2 * (d2 - diag)))
    return quadratic(spec, m, policy, kernel) + diag_shift


def standard_energy(spec: KernelSpec, mu, diagonal_policy: DiagonalPolicy | None = None) -> EnergyReport:
    """Standard energy ``E(mu) = mu' K mu`` with the mollification-sensitivity error.

    The error estimate is the change of the value when every atom's
    self-interaction radius is halved.
    """
    val = quadratic(spec, mu, diagonal_policy)
    if not parts(mu):
        return EnergyReport(0.0, 0.0, "standard")
    alt = _halved_value(spec, mu, diagonal_policy)
    return EnergyReport(val, abs(alt - val), "standard")


def mutual_energy(spec: KernelSpec, mu, nu, diagonal_policy: DiagonalPolicy | None = None) -> float:
    """Mutual energy ``sum_ij mu_i nu_j kappa(x_i, y_j)`` (symmetric bilinear form)."""
    return bilinear(spec, mu, nu, diagonal_policy)


# ---------------------------------------------------------------------------
# Green energies
# ---------------------------------------------------------------------------

def _green_kernel(spec, D, sweeper):
    from .green import green_matrix

    def kern(rows, cols, policy):
        return green_matrix(spec, D, rows, cols, policy, sweeper=sweeper)
    return kern


def _check_carried(D, m):
    for a, _ in parts(m):
        live = a.masses > 0
        if live.any() and not np.all(D.in_D(a.cloud.points[live])):
            raise CarrierError("measure must be carried by D")


def green_energy(spec: KernelSpec, D, nu, diagonal_policy: DiagonalPolicy | None = None,
                 sweeper=None) -> EnergyReport:
    """Green energy ``nu' G nu`` of a measure (or signed pair) carried by ``D``."""
    _check_carried(D, nu)
    if not parts(nu):
        return EnergyReport(0.0, 0.0, "green")
    kern = _green_kernel(spec, D, sweeper)
    val = quadratic(spec, nu, diagonal_policy, kern)
    alt = _halved_value(spec, nu, diagonal_policy, kern)
    return EnergyReport(val, abs(alt - val), "green")


def green_bilinear(spec: KernelSpec, D, m1, m2, diagonal_policy=None, sweeper=None) -> float:
    """Green mutual energy ``<m1, m2>_g``."""
    _check_carried(D, m1)
    _check_carried(D, m2)
    return bilinear(spec, m1, m2, diagonal_policy, _green_kernel(spec, D, sweeper))


# ---------------------------------------------------------------------------
# Gauss integrals
# ---------------------------------------------------------------------------

def field_measure(theta, theta_swept):
    """The signed field charge ``theta - theta'`` as a part list."""
    return parts(theta) + parts(theta_swept, -1.0)


def gauss_integral_standard(spec: KernelSpec, mu, theta_pair, diagonal_policy=None) -> float:
    """``E(mu) + 2 E(mu, theta - theta')`` with standard bilinear forms."""
    theta, theta_swept = theta_pair if theta_pair is not None else (None, None)
    f = field_measure(theta, theta_swept)
    val = quadratic(spec, mu, diagonal_policy)
    if f:
        val += 2.0 * bilinear(spec, mu, f, diagonal_policy)
    return val
