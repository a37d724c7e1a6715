"""Direct/indirect effects from fitted coefficients, with Delta-method inference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from .data import ArmSummary
from .errors import NegativeVariance, ZeroStdError
from .gmm import GmmFit, ThetaVector

EFFECT_KEYS = ("gade0", "gade1", "gacme0", "gacme1", "ate")
EFFECT_LABELS = {
    "gade0": "GADE(0)",
    "gade1": "GADE(1)",
    "gacme0": "GACME(0)",
    "gacme1": "GACME(1)",
    "ate": "ATE",
}


@dataclass(frozen=True)
class EffectEstimate:
    kind: Literal["GADE", "GACME", "ATE"]
    arm: int | None
    value: float
    std_error: float
    z_stat: float
    p_value: float
    pct_change: float
    std_error_pct: float
    p_underflow: bool = False

    @property
    def label(self) -> str:
        return self.kind if self.arm is None else f"{self.kind}({self.arm})"

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "arm": self.arm,
            "value": self.value,
            "std_error": self.std_error,
            "z_stat": self.z_stat,
            "p_value": self.p_value,
            "p_underflow": self.p_underflow,
            "pct_change": self.pct_change,
            "std_error_pct": self.std_error_pct,
            "stars": self.stars,
        }


@dataclass(frozen=True, eq=False)
class EffectReport:
    gade0: EffectEstimate
    gade1: EffectEstimate
    gacme0: EffectEstimate
    gacme1: EffectEstimate
    ate: EffectEstimate
    theta: ThetaVector
    covariance: np.ndarray
    arm_summaries: tuple[ArmSummary, ArmSummary]
    effect_covariance: np.ndarray | None = None

    def estimates(self) -> dict[str, EffectEstimate]:
        return {k: getattr(self, k) for k in EFFECT_KEYS}

    def to_dict(self) -> dict:
        control, treated = self.arm_summaries
        return {
            "effects": {k: e.to_dict() for k, e in self.estimates().items()},
            "theta": self.theta.to_dict(),
            "theta_covariance": self.covariance.tolist(),
            "effect_covariance": None if self.effect_covariance is None else self.effect_covariance.tolist(),
            "arms": {
                s.arm: {"mean_outcome": s.mean_outcome, "mean_mediator": s.mean_mediator, "count": s.count}
                for s in (control, treated)
            },
            "control_mean_outcome": control.mean_outcome,
        }


def effects_from_theta(theta: ThetaVector, t: int) -> tuple[float, float]:
    """(GADE(t), GACME(t)) from the regression coefficients."""
    if t not in (0, 1):
        raise ValueError("t must be 0 or 1")
    gade = theta.theta_y1 + theta.theta_y3 * (theta.theta_m10 + theta.theta_m11 * t)
    gacme = theta.theta_m11 * (theta.theta_y2 + theta.theta_y3 * t)
    return gade, gacme


def ate_from_theta(theta: ThetaVector) -> float:
    gade0, _ = effects_from_theta(theta, 0)
    _, gacme1 = effects_from_theta(theta, 1)
    return gade0 + gacme1


def delta_variances(theta: ThetaVector, covariance: np.ndarray, t: int) -> tuple[float, float]:
    """Delta-method variances of the GADE(t) and GACME(t) estimators.

    Term-by-term expansion over the coefficient covariance (already on the
    1/N scale).
    """
    if t not in (0, 1):
        raise ValueError("t must be 0 or 1")
    cov = np.asarray(covariance, dtype=float)
    i_m10, i_m11, _, i_y1, i_y2, i_y3 = range(6)

    def av(i):
        return cov[i, i]

    def ac(i, j):
        return cov[i, j]

    m10, m11 = theta.theta_m10, theta.theta_m11
    y2, y3 = theta.theta_y2, theta.theta_y3
    lvl = m10 + m11 * t  # mediator level at arm t
    slope = y2 + y3 * t

    avar_gade = (
        av(i_y1)
        + lvl ** 2 * av(i_y3)
        + y3 ** 2 * av(i_m10)
        + (y3 * t) ** 2 * av(i_m11)
        + 2 * y3 * ac(i_y1, i_m10)
        + 2 * lvl * ac(i_y1, i_y3)
        + 2 * (y3 * t) * ac(i_y1, i_m11)
        + 2 * lvl * y3 * ac(i_y3, i_m10)
        + 2 * lvl * y3 * t * ac(i_y3, i_m11)
        + 2 * y3 ** 2 * t * ac(i_m10, i_m11)
    )
    avar_gacme = (
        slope ** 2 * av(i_m11)
        + m11 ** 2 * av(i_y2)
        + (m11 * t) ** 2 * av(i_y3)
        + 2 * slope * m11 * ac(i_m11, i_y2)
        + 2 * slope * m11 * t * ac(i_m11, i_y3)
        + 2 * m11 ** 2 * t * ac(i_y2, i_y3)
    )
    for label, v in (("GADE", avar_gade), ("GACME", avar_gacme)):
        if v < -1e-12:
            raise NegativeVariance(f"{label}({t}) variance {v!r} is negative; covariance is not PSD")
    return max(avar_gade, 0.0), max(avar_gacme, 0.0)


def effect_gradients(theta: ThetaVector) -> np.ndarray:
    """Rows: d(effect)/d(theta) for gade0, gade1, gacme0, gacme1, ate."""
    m10, m11, _, _, y2, y3 = theta.as_tuple()
    rows = []
    for t in (0, 1):
        rows.append([y3, y3 * t, 0.0, 1.0, 0.0, m10 + m11 * t])
    for t in (0, 1):
        rows.append([0.0, y2 + y3 * t, 0.0, 0.0, m11, m11 * t])
    # ate = y1 + y3*m10 + m11*y2 + m11*y3
    rows.append([y3, y2 + y3, 0.0, 1.0, m11, m10 + m11])
    return np.array(rows)


def effect_covariance(theta: ThetaVector, covariance: np.ndarray) -> np.ndarray:
    """Joint Delta-method covariance of the five effect estimators."""
    jac = effect_gradients(theta)
    out = jac @ np.asarray(covariance, dtype=float) @ jac.T
    return 0.5 * (out + out.T)


def normal_two_sided_p(z: float) -> float:
    # erfc keeps full relative accuracy deep into the tail
    return float(special.erfc(abs(z) / math.sqrt(2.0)))


def z_test(value: float, std_error: float) -> tuple[float, float]:
    if not std_error > 0:
        raise ZeroStdError(f"standard error must be positive, got {std_error!r}")
    z = value / std_error
    return z, normal_two_sided_p(z)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return ""


def _estimate(kind, arm, value, variance, control_mean) -> EffectEstimate:
    se = math.sqrt(variance)
    if se > 0:
        z, p = z_test(value, se)
    else:
        # degenerate: no sampling variation along this direction
        z = 0.0 if value == 0 else math.copysign(math.inf, value)
        p = 1.0 if value == 0 else 0.0
    pct = value / control_mean if control_mean != 0 else math.nan
    se_pct = se / abs(control_mean) if control_mean != 0 else math.nan
    return EffectEstimate(kind, arm, value, se, z, p, pct, se_pct, p_underflow=(p == 0.0))


def build_report(fit: GmmFit, summaries: tuple[ArmSummary, ArmSummary]) -> EffectReport:
    control = summaries[0] if summaries[0].arm == "control" else summaries[1]
    cmean = control.mean_outcome
    theta, cov = fit.theta, fit.covariance
    estimates = {}
    for t in (0, 1):
        gade, gacme = effects_from_theta(theta, t)
        v_gade, v_gacme = delta_variances(theta, cov, t)
        estimates[f"gade{t}"] = _estimate("GADE", t, gade, v_gade, cmean)
        estimates[f"gacme{t}"] = _estimate("GACME", t, gacme, v_gacme, cmean)
    ecov = effect_covariance(theta, cov)
    v_ate = ecov[4, 4]
    if v_ate < -1e-12:
        raise NegativeVariance(f"ATE variance {v_ate!r} is negative")
    estimates["ate"] = _estimate("ATE", None, ate_from_theta(theta), max(v_ate, 0.0), cmean)
    return EffectReport(
        theta=theta,
        covariance=cov,
        arm_summaries=tuple(summaries),
        effect_covariance=ecov,
        **estimates,
    )


def check_additivity(
    gade0: float, gade1: float, gacme0: float, gacme1: float, ate: float, tol: float = 5e-5
) -> bool:
    """True when both decompositions of the total effect add up within ``tol``.

    Works on any common scale, e.g. rounded percent changes from a table.
    """
    return abs(gade0 + gacme1 - ate) <= tol and abs(gade1 + gacme0 - ate) <= tol


def report_is_additive(report: EffectReport, tol: float = 1e-10) -> bool:
    e = report.estimates()
    return check_additivity(*(e[k].value for k in EFFECT_KEYS), tol=tol)
