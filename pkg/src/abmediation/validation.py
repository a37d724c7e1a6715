"""Self-checking Monte Carlo suites.

Each suite returns a list of :class:`Check` rows (observed value against the
required bound) so the CLI and the test suite report them the same way.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .effects import EFFECT_KEYS, check_additivity
from .gmm import THETA_NAMES, HacConfig, itgmm_fit, moment_means
from .lsem import (
    LsemSpec,
    NoiseSpec,
    counterfactual_oracle,
    random_spec,
    simulate,
    theta_from_structural,
    true_effects_from_structural,
)
from .pipeline import analyze


@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    required: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: observed {self.observed:.6g}, required {self.required}"


def reference_spec() -> LsemSpec:
    """One upstream and one downstream mediator, heteroskedastic non-normal noise.

    M0 feeds M1 but reaches Y only through M1, so the regressions are not
    confounded.  Effects are all well away from zero at N = 10,000.
    """
    return LsemSpec(
        k_upstream=1, j_downstream=1,
        alpha0=[1.0], beta0=[0.5],
        alpha1=2.0, beta1=0.8, psi1=[0.7], xi1=[0.3],
        alpha2=[0.5], beta2=[0.4], Psi2=[[0.0]], Xi2=[[0.0]], psi3=[0.6], xi3=[0.2],
        alpha3=1.0, beta3=0.5, gamma0=[0.0], gamma1=0.9, gamma2=[0.5],
        kappa0=[0.0], kappa1=-0.1, kappa2=[0.25],
        noise={
            "upstream": NoiseSpec("bernoulli", 1.0, 0.3),
            "mediator": NoiseSpec("uniform", 1.2),
            "downstream": NoiseSpec("normal", 0.8),
            "outcome": NoiseSpec("normal", 1.5),
        },
        p_treat=0.5,
    )


def null_spec() -> LsemSpec:
    """Reference structure with every treatment-dependent coefficient zeroed."""
    s = reference_spec()
    return s.replace(
        beta0=[0.0], beta1=0.0, xi1=[0.0], beta2=[0.0], Xi2=[[0.0]], xi3=[0.0],
        beta3=0.0, kappa0=[0.0], kappa1=0.0, kappa2=[0.0],
    )


def _dims(rng, choices=(0, 1, 3)):
    return int(rng.choice(choices)), int(rng.choice(choices))


# 1. decomposition identity

def identity_suite(reps: int = 50, seed: int = 0, n: int = 2000) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_a = worst_b = worst_means = 0.0
    for r in range(reps):
        k, j = _dims(rng)
        spec = random_spec(rng, k, j)
        report, _ = analyze(simulate(spec, n, seed + r))
        e = {key: est.value for key, est in report.estimates().items()}
        control, treated = report.arm_summaries
        worst_a = max(worst_a, abs(e["ate"] - (e["gade0"] + e["gacme1"])))
        worst_b = max(worst_b, abs(e["ate"] - (e["gade1"] + e["gacme0"])))
        worst_means = max(worst_means, abs(e["ate"] - (treated.mean_outcome - control.mean_outcome)))
    return [
        Check(f"|ATE - (GADE(0)+GACME(1))| over {reps} datasets", worst_a, "< 1e-10", worst_a < 1e-10),
        Check(f"|ATE - (GADE(1)+GACME(0))| over {reps} datasets", worst_b, "< 1e-10", worst_b < 1e-10),
        Check(f"|ATE - difference of arm means| over {reps} datasets", worst_means, "< 1e-10", worst_means < 1e-10),
    ]


# 2. published-table additivity

PUBLISHED_PCT_ROWS = {
    # (gade0, gade1, gacme0, gacme1, ate) in percent of control mean
    "recommendation module, conversion": (0.4959, 0.4905, -0.2703, -0.2757, 0.2202),
    "promoted listings, conversion": (-0.1448, -0.1472, -0.2237, -0.2261, -0.3709),
}


def additivity_suite(tol: float = 5e-5) -> list[Check]:
    out = []
    for name, (g0, g1, c0, c1, ate) in PUBLISHED_PCT_ROWS.items():
        gap = max(abs(g0 + c1 - ate), abs(g1 + c0 - ate))
        out.append(Check(f"{name}: % change additivity", gap, f"<= {tol:g}",
                         check_additivity(g0, g1, c0, c1, ate, tol=tol)))
    return out


# 3. consistency against the structural ground truth

def consistency_suite(reps: int = 20, seed: int = 0, n: int = 1_000_000, z_max: float = 4.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_effect = worst_theta = 0.0
    for r in range(reps):
        k, j = _dims(rng)
        spec = random_spec(rng, k, j)
        truth = true_effects_from_structural(spec)
        report, fit = analyze(simulate(spec, n, seed * 1000 + r))
        for key, est in report.estimates().items():
            worst_effect = max(worst_effect, abs(est.value - getattr(truth, key)) / est.std_error)
        dev = np.abs(fit.theta.as_array() - truth.theta_true.as_array()) / fit.std_errors
        worst_theta = max(worst_theta, float(dev.max()))
    return [
        Check(f"max |effect - truth| / SE over {reps} specs", worst_effect, f"< {z_max:g}", worst_effect < z_max),
        Check(f"max |theta - theta_true| / SE over {reps} specs", worst_theta, f"< {z_max:g}", worst_theta < z_max),
    ]


# 4. sampling distribution: Delta-method SEs and CI coverage

@dataclass(frozen=True)
class SamplingStudy:
    truth: dict
    values: np.ndarray  # (reps, 5) in EFFECT_KEYS order
    std_errors: np.ndarray
    theta: np.ndarray  # (reps, 6)
    theta_cov: np.ndarray  # (reps, 6, 6)


def sampling_study(spec: LsemSpec, reps: int, n: int, seed: int, config: HacConfig = HacConfig()) -> SamplingStudy:
    truth = true_effects_from_structural(spec).effects()
    values, ses, thetas, covs = [], [], [], []
    for r in range(reps):
        report, fit = analyze(simulate(spec, n, seed * 100_003 + r), config)
        est = report.estimates()
        values.append([est[k].value for k in EFFECT_KEYS])
        ses.append([est[k].std_error for k in EFFECT_KEYS])
        thetas.append(fit.theta.as_array())
        covs.append(fit.covariance)
    return SamplingStudy(truth, np.array(values), np.array(ses), np.array(thetas), np.array(covs))


def delta_checks(study: SamplingStudy, rel_tol: float = 0.15) -> list[Check]:
    out = []
    sd = study.values.std(axis=0, ddof=1)
    mean_se = study.std_errors.mean(axis=0)
    for i, key in enumerate(EFFECT_KEYS):
        rel = abs(mean_se[i] - sd[i]) / sd[i]
        out.append(Check(f"{key}: |mean SE - replication SD| / SD", rel, f"<= {rel_tol:g}", rel <= rel_tol))
    return out


def coverage_checks(study: SamplingStudy, lo: float = 0.92, hi: float = 0.98) -> list[Check]:
    z = stats.norm.ppf(0.975)
    out = []
    for i, key in enumerate(EFFECT_KEYS):
        covered = np.abs(study.values[:, i] - study.truth[key]) <= z * study.std_errors[:, i]
        rate = float(covered.mean())
        out.append(Check(f"{key}: 95% CI coverage", rate, f"in [{lo:g}, {hi:g}]", lo <= rate <= hi))
    return out


def theta_covariance_checks(study: SamplingStudy, rel_tol: float = 0.15) -> list[Check]:
    """Replication covariance of theta-hat against the mean reported covariance.

    Off-diagonal gaps are measured on the correlation scale, since entries near
    zero make a plain relative error meaningless.
    """
    emp = np.cov(study.theta, rowvar=False)
    rep = study.theta_cov.mean(axis=0)
    sd = np.sqrt(np.diag(emp))
    rel = np.abs(rep - emp) / np.outer(sd, sd)
    out = []
    for i, name in enumerate(THETA_NAMES):
        out.append(Check(f"{name}: |reported var - replication var| / var", rel[i, i], f"<= {rel_tol:g}",
                         rel[i, i] <= rel_tol))
    off = float(np.max(rel[~np.eye(6, dtype=bool)]))
    out.append(Check("max off-diagonal covariance gap (correlation scale)", off, f"<= {rel_tol:g}", off <= rel_tol))
    return out


def delta_suite(reps: int = 500, seed: int = 0, n: int = 10_000) -> list[Check]:
    return delta_checks(sampling_study(reference_spec(), reps, n, seed))


def coverage_suite(reps: int = 500, seed: int = 0, n: int = 10_000) -> list[Check]:
    return coverage_checks(sampling_study(reference_spec(), reps, n, seed))


# 5. oracle equivalence

def oracle_suite(reps: int = 10, seed: int = 0, n_mc: int = 200_000, z_max: float = 4.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r in range(reps):
        k, j = _dims(rng)
        # the oracle does not rely on the regressions, so confounded specs are fair game
        spec = random_spec(rng, k, j, identified=bool(r % 2))
        closed = true_effects_from_structural(spec).effects()
        mc = counterfactual_oracle(spec, n_mc, seed + r)
        for key, v in mc.effects().items():
            se = mc.std_errors[key]
            floor = 1e-9 * (1.0 + abs(closed[key]))
            gap = abs(v - closed[key])
            # contrasts that are constant across units have SE at rounding level
            if gap > floor:
                worst = max(worst, gap / se if se > 0 else math.inf)
    return [Check(f"max |oracle - closed form| / MC SE over {reps} specs", worst, f"< {z_max:g}", worst < z_max)]


# 6. exact identification

def exact_suite(reps: int = 20, seed: int = 0, n: int = 5000) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_ols = worst_moment = 0.0
    max_iter_used = 0
    for r in range(reps):
        k, j = _dims(rng)
        table = simulate(random_spec(rng, k, j), n, seed + r)
        fit = itgmm_fit(table)
        ols = _normal_equations_theta(table)
        worst_ols = max(worst_ols, float(np.max(np.abs(fit.theta.as_array() - ols))))
        scale = 1.0 + max(np.max(np.abs(table.mediator)), np.max(np.abs(table.outcome)))
        worst_moment = max(worst_moment, float(np.max(np.abs(moment_means(table, fit.theta)))) / scale)
        max_iter_used = max(max_iter_used, fit.iterations)
    return [
        Check("max |GMM - per-equation OLS|", worst_ols, "< 1e-8", worst_ols < 1e-8),
        Check("max iterations", max_iter_used, "<= 2", max_iter_used <= 2),
        Check("max |g-bar(theta-hat)| / (1 + max|data|)", worst_moment, "< 1e-8", worst_moment < 1e-8),
    ]


def _normal_equations_theta(table) -> np.ndarray:
    t, m, y = table.treatment, table.mediator, table.outcome
    x1 = np.column_stack([np.ones_like(t), t])
    x2 = np.column_stack([np.ones_like(t), t, m, m * t])
    b1 = np.linalg.solve(x1.T @ x1, x1.T @ m)
    b2 = np.linalg.solve(x2.T @ x2, x2.T @ y)
    return np.concatenate([b1, b2])


# 7. null calibration

def null_suite(reps: int = 500, seed: int = 0, n: int = 10_000) -> list[Check]:
    spec = null_spec()
    p = []
    for r in range(reps):
        report, _ = analyze(simulate(spec, n, seed * 100_003 + r))
        p.append(report.gacme1.p_value)
    p = np.array(p)
    ks = stats.kstest(p, "uniform")
    rej = float(np.mean(p < 0.05))
    return [
        Check("GACME(1) p-values: KS uniformity p-value", ks.pvalue, ">= 0.01", ks.pvalue >= 0.01),
        Check("GACME(1) rejection rate at alpha=0.05", rej, "in [0.03, 0.07]", 0.03 <= rej <= 0.07),
    ]


# 8. conditional-mean-zero residuals

def residual_suite(seed: int = 0, n: int = 1_000_000, z_max: float = 4.0) -> list[Check]:
    spec = reference_spec()
    table = simulate(spec, n, seed)
    th = theta_from_structural(spec)
    t, m, y = table.treatment, table.mediator, table.outcome
    u = m - th.theta_m10 - th.theta_m11 * t
    v = y - th.theta_y0 - th.theta_y1 * t - th.theta_y2 * m - th.theta_y3 * m * t
    out = []
    for arm in (0, 1):
        sel = t == arm
        z = abs(u[sel].mean()) / (u[sel].std(ddof=1) / math.sqrt(sel.sum()))
        out.append(Check(f"mediator residual mean | T={arm} (in SEs)", z, f"< {z_max:g}", z < z_max))
        edges = np.quantile(m[sel], [0.25, 0.5, 0.75])
        q = np.searchsorted(edges, m, side="right")
        for b in range(4):
            cell = sel & (q == b)
            vv = v[cell]
            z = abs(vv.mean()) / (vv.std(ddof=1) / math.sqrt(len(vv)))
            out.append(Check(f"outcome residual mean | T={arm}, M quartile {b + 1} (in SEs)", z,
                             f"< {z_max:g}", z < z_max))
    return out


SUITES: dict[str, Callable[..., list[Check]]] = {
    "identity": identity_suite,
    "additivity": additivity_suite,
    "consistency": consistency_suite,
    "coverage": coverage_suite,
    "delta": delta_suite,
    "oracle": oracle_suite,
    "exact": exact_suite,
    "null": null_suite,
    "residuals": residual_suite,
}

# suites that take no replication count
_FIXED = {"additivity", "residuals"}


def run_suite(name: str, reps: int | None = None, seed: int = 0) -> tuple[list[Check], float]:
    fn = SUITES[name]
    kwargs = {}
    if name != "additivity":
        kwargs["seed"] = seed
    if reps is not None and name not in _FIXED:
        kwargs["reps"] = reps
    start = time.perf_counter()
    checks = fn(**kwargs)
    return checks, time.perf_counter() - start
