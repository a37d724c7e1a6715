"""Joint estimation of the mediator and outcome regressions by iterated GMM.

The two regressions are

    M  = m10 + m11*T + u
    Y  = y0 + y1*T + y2*M + y3*M*T + v

with instruments (1, T) for the first and (1, T, M, M*T) for the second.
Six moments, six parameters: the system is exactly identified, so the GMM
point estimate coincides with per-equation least squares and only the
covariance depends on the weighting matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from .data import ObservationRecord, ObservationTable
from .errors import BandwidthTooLarge, NoConvergence, SingularDesign, SingularOmega
from .numerics import chunked_sum

THETA_NAMES = ("theta_m10", "theta_m11", "theta_y0", "theta_y1", "theta_y2", "theta_y3")


@dataclass(frozen=True)
class ThetaVector:
    theta_m10: float
    theta_m11: float
    theta_y0: float
    theta_y1: float
    theta_y2: float
    theta_y3: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"theta entries must be finite: {self}")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in THETA_NAMES)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ThetaVector":
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError(f"expected 6 coefficients, got {len(values)}")
        return cls(*values)

    def to_dict(self) -> dict[str, float]:
        return dict(zip(THETA_NAMES, self.as_tuple()))


@dataclass(frozen=True)
class MomentVector:
    g1: float
    g2: float
    g3: float
    g4: float
    g5: float
    g6: float

    def as_array(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3, self.g4, self.g5, self.g6])


@dataclass(frozen=True)
class HacConfig:
    kernel: Literal["lag0", "bartlett"] = "lag0"
    # "auto" or a nonnegative int
    bandwidth: str | int = "auto"

    def __post_init__(self):
        if self.kernel not in ("lag0", "bartlett"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        bw = self.bandwidth
        if bw != "auto" and not (isinstance(bw, (int, np.integer)) and not isinstance(bw, bool) and bw >= 0):
            raise ValueError(f"bandwidth must be 'auto' or a nonnegative integer, got {bw!r}")

    def resolve_bandwidth(self, n: int) -> int:
        """Number of lags with nonzero kernel weight."""
        if self.kernel == "lag0":
            return 0
        if self.bandwidth == "auto":
            return newey_west_bandwidth(n)
        return int(self.bandwidth)


def newey_west_bandwidth(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def bartlett_weight(s: int, h: int) -> float:
    s = abs(s)
    return 1.0 - s / (h + 1.0) if s <= h else 0.0


@dataclass(frozen=True, eq=False)
class GmmFit:
    theta: ThetaVector
    covariance: np.ndarray  # asymptotic covariance of theta-hat, already divided by N
    iterations: int
    converged: bool
    omega: np.ndarray
    n: int
    bandwidth: int
    config: HacConfig = field(default_factory=HacConfig)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def moment_eval(theta: ThetaVector, record: ObservationRecord) -> MomentVector:
    t, m, y = float(record.treatment), float(record.mediator), float(record.outcome)
    u = m - theta.theta_m10 - theta.theta_m11 * t
    v = y - theta.theta_y0 - theta.theta_y1 * t - theta.theta_y2 * m - theta.theta_y3 * m * t
    return MomentVector(u, t * u, v, t * v, m * v, m * t * v)


def moment_matrix(table: ObservationTable, theta: ThetaVector, lo: int = 0, hi: int | None = None) -> np.ndarray:
    """Row-wise moments g_i for rows ``lo:hi``, shape (rows, 6)."""
    t = table.treatment[lo:hi]
    m = table.mediator[lo:hi]
    y = table.outcome[lo:hi]
    m10, m11, y0, y1, y2, y3 = theta.as_tuple()
    mt = m * t
    u = m - m10 - m11 * t
    v = y - y0 - y1 * t - y2 * m - y3 * mt
    return np.column_stack([u, t * u, v, t * v, m * v, mt * v])


def moment_means(table: ObservationTable, theta: ThetaVector, threads: int | None = None) -> np.ndarray:
    s = chunked_sum(lambda lo, hi: moment_matrix(table, theta, lo, hi).sum(axis=0), len(table), threads)
    return s / len(table)


def _cross_moments(table: ObservationTable, threads: int | None) -> np.ndarray:
    """Mean of z z' with z = (1, T, M, M*T, Y)."""
    t, m, y = table.treatment, table.mediator, table.outcome

    def partial(lo, hi):
        z = np.column_stack([np.ones(hi - lo), t[lo:hi], m[lo:hi], m[lo:hi] * t[lo:hi], y[lo:hi]])
        return z.T @ z

    return chunked_sum(partial, len(table), threads) / len(table)


def linear_moment_system(table: ObservationTable, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (A, c) with g-bar(theta) = c - A theta.

    The Jacobian of the sample moments is -A; it does not depend on theta.
    """
    zz = _cross_moments(table, threads)
    a = np.zeros((6, 6))
    a[:2, :2] = zz[:2, :2]
    a[2:, 2:] = zz[:4, :4]
    c = np.concatenate([zz[:2, 2], zz[:4, 4]])
    return a, c


def jacobian(table: ObservationTable, threads: int | None = None) -> np.ndarray:
    a, _ = linear_moment_system(table, threads)
    return -a


def ols_init(table: ObservationTable, threads: int | None = None) -> ThetaVector:
    """Per-equation least squares, written as within-arm regressions.

    With a binary treatment the mediator regression reduces to arm means and
    the saturated outcome regression to one simple regression per arm.
    Centered sums keep this stable when the mediator has a large mean.
    """
    t, m, y = table.treatment, table.mediator, table.outcome
    n = len(table)

    def sums(lo, hi):
        tt = t[lo:hi]
        c = 1.0 - tt
        mm, yy = m[lo:hi], y[lo:hi]
        return np.array([np.sum(c * mm), np.sum(c * yy), np.sum(tt * mm), np.sum(tt * yy)])

    s = chunked_sum(sums, n, threads)
    n0, n1 = table.n_control, table.n_treated
    mbar = np.array([s[0] / n0, s[2] / n1])
    ybar = np.array([s[1] / n0, s[3] / n1])

    def centered(lo, hi):
        tt = t[lo:hi].astype(np.intp)
        dm = m[lo:hi] - mbar[tt]
        dy = y[lo:hi] - ybar[tt]
        c = 1.0 - t[lo:hi]
        tf = t[lo:hi]
        return np.array([
            np.sum(c * dm * dm), np.sum(c * dm * dy), np.sum(c * m[lo:hi] ** 2),
            np.sum(tf * dm * dm), np.sum(tf * dm * dy), np.sum(tf * m[lo:hi] ** 2),
        ])

    q = chunked_sum(centered, n, threads)
    slopes = []
    for arm, (sxx, sxy, smm) in enumerate((q[0:3], q[3:6])):
        if not sxx > 1e-13 * smm:
            label = "control" if arm == 0 else "treatment"
            raise SingularDesign(f"outcome equation: mediator has no variance within the {label} arm")
        slopes.append(sxy / sxx)
    b0, b1 = slopes
    a0 = ybar[0] - b0 * mbar[0]
    a1 = ybar[1] - b1 * mbar[1]
    return ThetaVector(mbar[0], mbar[1] - mbar[0], a0, a1 - a0, b0, b1 - b0)


def hac_matrix(
    table: ObservationTable,
    theta: ThetaVector,
    config: HacConfig = HacConfig(),
    threads: int | None = None,
) -> np.ndarray:
    """Kernel-weighted long-run covariance of the moments, in row order."""
    n = len(table)
    h = config.resolve_bandwidth(n)
    if h >= n:
        raise BandwidthTooLarge(f"bandwidth {h} must be smaller than the number of rows {n}")

    def gamma0(lo, hi):
        g = moment_matrix(table, theta, lo, hi)
        return g.T @ g

    omega = chunked_sum(gamma0, n, threads) / n
    for s in range(1, h + 1):
        w = bartlett_weight(s, h)

        def gamma_s(lo, hi, s=s):
            hi = min(hi, n - s)
            if hi <= lo:
                return np.zeros((6, 6))
            return moment_matrix(table, theta, lo, hi).T @ moment_matrix(table, theta, lo + s, hi + s)

        gs = chunked_sum(gamma_s, n - s, threads) / n
        omega = omega + w * (gs + gs.T)
    return 0.5 * (omega + omega.T)


def _omega_factor(omega: np.ndarray) -> np.ndarray:
    d = np.diag(omega)
    if not np.all(d > 0):
        raise SingularOmega("HAC matrix has a zero diagonal entry (degenerate moment)")
    scale = 1.0 / np.sqrt(d)
    corr = omega * np.outer(scale, scale)
    eig = np.linalg.eigvalsh(corr)
    if eig[0] < 1e-12 * eig[-1]:
        raise SingularOmega(f"HAC matrix is numerically singular (eigenvalue ratio {eig[0] / eig[-1]:.3g})")
    try:
        return np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise SingularOmega(str(exc)) from exc


def _weighted_solve(a: np.ndarray, c: np.ndarray, chol: np.ndarray) -> np.ndarray:
    # argmin (c - A th)' Omega^{-1} (c - A th), whitened to avoid squaring the condition number
    aw = scipy.linalg.solve_triangular(chol, a, lower=True)
    cw = scipy.linalg.solve_triangular(chol, c, lower=True)
    sol, *_ = np.linalg.lstsq(aw, cw, rcond=None)
    return sol


def gmm_covariance(a: np.ndarray, omega: np.ndarray, n: int) -> np.ndarray:
    """(G' Omega^{-1} G)^{-1} / N."""
    chol = _omega_factor(omega)
    aw = scipy.linalg.solve_triangular(chol, a, lower=True)
    r = np.linalg.qr(aw, mode="r")
    rinv = scipy.linalg.solve_triangular(r, np.eye(6))
    cov = rinv @ rinv.T / n
    return 0.5 * (cov + cov.T)


def itgmm_fit(
    table: ObservationTable,
    config: HacConfig = HacConfig(),
    tol: float = 1e-8,
    max_iter: int = 100,
    threads: int | None = None,
) -> GmmFit:
    """Iterated GMM: refresh the HAC weight at the current estimate and re-solve.

    Stops when the update is smaller than ``tol * (1 + |theta|)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n = len(table)
    a, c = linear_moment_system(table, threads)
    theta0 = ols_init(table, threads).as_array()
    converged = False
    iterations = 0
    theta1 = theta0
    for iterations in range(1, max_iter + 1):
        omega = hac_matrix(table, ThetaVector.from_array(theta0), config, threads)
        theta1 = _weighted_solve(a, c, _omega_factor(omega))
        if not np.all(np.isfinite(theta1)):
            raise SingularOmega("weighted normal equations produced non-finite coefficients")
        if np.linalg.norm(theta0 - theta1) < tol * (1.0 + np.linalg.norm(theta0)):
            converged = True
            break
        theta0 = theta1
    if not converged:
        raise NoConvergence(f"no convergence after {max_iter} iterations")
    theta_hat = ThetaVector.from_array(theta1)
    omega_hat = hac_matrix(table, theta_hat, config, threads)
    return GmmFit(
        theta=theta_hat,
        covariance=gmm_covariance(a, omega_hat, n),
        iterations=iterations,
        converged=converged,
        omega=omega_hat,
        n=n,
        bandwidth=config.resolve_bandwidth(n),
        config=config,
    )
