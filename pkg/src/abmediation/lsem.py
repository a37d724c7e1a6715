"""Linear structural equation simulator with unmeasured mediator blocks.

Variables per unit, in causal order:

    M0 (K-vector, unmeasured)  = a0 + b0*T + e0
    M1 (measured mediator)     = a1 + b1*T + psi1'M0 + xi1'M0*T + e1
    M2 (J-vector, unmeasured)  = a2 + b2*T + Psi2 M0 + psi3*M1 + Xi2 M0*T + xi3*M1*T + e2
    Y                          = a3 + b3*T + g0'M0 + g1*M1 + g2'M2
                                 + k0'M0*T + k1*M1*T + k2'M2*T + e3

Only (T, M1, Y) are emitted.  Errors are drawn independently of each other
and of T, which is a sufficient (stronger than necessary) way to satisfy
sequential ignorability.

Ground truth comes from two unrelated routes: closed forms in the structural
coefficients, and a brute-force evaluation of the nested potential outcomes
with shared errors across counterfactual arms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Literal

import numpy as np

from .data import ObservationTable
from .effects import effects_from_theta
from .errors import DimensionMismatch, InternalInconsistency, SpecError
from .gmm import ThetaVector

BLOCK_UNITS = 1 << 16
NOISE_KEYS = ("upstream", "mediator", "downstream", "outcome")
# treatment-dependent coefficients; zeroing all of them removes every causal path from T
TREATMENT_FIELDS = ("beta0", "beta1", "xi1", "beta2", "Xi2", "xi3", "beta3", "kappa0", "kappa1", "kappa2")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean error with standard deviation ``scale``.

    ``bernoulli`` is a centered, standardized Bernoulli(p) draw.
    """

    family: Literal["normal", "bernoulli", "uniform"] = "normal"
    scale: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.family not in ("normal", "bernoulli", "uniform"):
            raise SpecError(f"unknown noise family {self.family!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise SpecError(f"noise scale must be finite and nonnegative, got {self.scale!r}")
        if not 0 < self.p < 1:
            raise SpecError(f"bernoulli p must lie in (0, 1), got {self.p!r}")

    @property
    def variance(self) -> float:
        return self.scale ** 2

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "normal":
            z = rng.standard_normal(shape)
        elif self.family == "uniform":
            z = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)
        else:
            z = ((rng.random(shape) < self.p) - self.p) / math.sqrt(self.p * (1 - self.p))
        return self.scale * z


def _vec(x, n, name):
    a = np.asarray(x if x is not None else np.zeros(n), dtype=float).reshape(-1)
    if a.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got shape {a.shape}")
    return a


def _mat(x, r, c, name):
    a = np.asarray(x if x is not None else np.zeros((r, c)), dtype=float)
    if a.size == 0:
        a = np.zeros((r, c))
    if a.shape != (r, c):
        raise DimensionMismatch(f"{name} must have shape ({r}, {c}), got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LsemSpec:
    k_upstream: int = 0
    j_downstream: int = 0
    alpha0: np.ndarray | None = None
    beta0: np.ndarray | None = None
    alpha1: float = 0.0
    beta1: float = 0.0
    psi1: np.ndarray | None = None
    xi1: np.ndarray | None = None
    alpha2: np.ndarray | None = None
    beta2: np.ndarray | None = None
    Psi2: np.ndarray | None = None
    Xi2: np.ndarray | None = None
    psi3: np.ndarray | None = None
    xi3: np.ndarray | None = None
    alpha3: float = 0.0
    beta3: float = 0.0
    gamma0: np.ndarray | None = None
    gamma1: float = 0.0
    gamma2: np.ndarray | None = None
    kappa0: np.ndarray | None = None
    kappa1: float = 0.0
    kappa2: np.ndarray | None = None
    noise: dict = field(default_factory=dict)
    p_treat: float = 0.5

    def __post_init__(self):
        k, j = self.k_upstream, self.j_downstream
        if not (isinstance(k, (int, np.integer)) and isinstance(j, (int, np.integer)) and k >= 0 and j >= 0):
            raise DimensionMismatch(f"K and J must be nonnegative integers, got K={k!r}, J={j!r}")
        setv = lambda name, n: object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        for name in ("alpha0", "beta0", "psi1", "xi1", "gamma0", "kappa0"):
            setv(name, k)
        for name in ("alpha2", "beta2", "psi3", "xi3", "gamma2", "kappa2"):
            setv(name, j)
        for name in ("Psi2", "Xi2"):
            object.__setattr__(self, name, _mat(getattr(self, name), j, k, name))
        for name in ("alpha1", "beta1", "alpha3", "beta3", "gamma1", "kappa1"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise SpecError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                if not np.all(np.isfinite(v)):
                    raise SpecError(f"{f.name} must be finite")
                v.flags.writeable = False
        noise = {}
        for key in NOISE_KEYS:
            n = self.noise.get(key, NoiseSpec())
            noise[key] = n if isinstance(n, NoiseSpec) else NoiseSpec(**n)
        extra = set(self.noise) - set(NOISE_KEYS)
        if extra:
            raise SpecError(f"unknown noise keys {sorted(extra)}")
        object.__setattr__(self, "noise", noise)
        if not 0 < self.p_treat < 1:
            raise SpecError(f"p_treat must lie in (0, 1), got {self.p_treat!r}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif f.name == "noise":
                v = {key: {"family": n.family, "scale": n.scale, "p": n.p} for key, n in v.items()}
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LsemSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        d = dict(d)
        for name in ("Psi2", "Xi2"):
            if name in d and d[name] is not None:
                d[name] = np.asarray(d[name], dtype=float).reshape(d.get("j_downstream", 0), d.get("k_upstream", 0))
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(str(exc)) from exc

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "LsemSpec":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise SpecError(f"{path}: spec must be a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "LsemSpec":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return LsemSpec(**d)


@dataclass(frozen=True)
class GroundTruth:
    gade0: float
    gade1: float
    gacme0: float
    gacme1: float
    ate: float
    theta_true: ThetaVector | None = None
    # Monte Carlo standard errors, set only by the counterfactual oracle
    std_errors: dict | None = None

    def effects(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("gade0", "gade1", "gacme0", "gacme1", "ate")}

    def to_dict(self) -> dict:
        # adding 0.0 turns a negative zero into a plain zero in the JSON
        d = {k: v + 0.0 for k, v in self.effects().items()}
        d["theta_true"] = None if self.theta_true is None else self.theta_true.to_dict()
        if self.std_errors is not None:
            d["std_errors"] = dict(self.std_errors)
        return d


# structural equations, vectorized over units; t is 0/1 scalar or (n,) array

def _upstream(spec, t, e0):
    return spec.alpha0 + np.multiply.outer(t, spec.beta0) + e0


def _mediator(spec, t, m0, e1):
    return spec.alpha1 + spec.beta1 * t + m0 @ spec.psi1 + (m0 @ spec.xi1) * t + e1


def _downstream(spec, t, m0, m1, e2):
    tt = np.asarray(t, dtype=float)[..., None]
    return (
        spec.alpha2 + spec.beta2 * tt + m0 @ spec.Psi2.T + np.multiply.outer(m1, spec.psi3)
        + (m0 @ spec.Xi2.T) * tt + np.multiply.outer(m1, spec.xi3) * tt + e2
    )


def _outcome(spec, t, m0, m1, m2, e3):
    return (
        spec.alpha3 + spec.beta3 * t + m0 @ spec.gamma0 + spec.gamma1 * m1 + m2 @ spec.gamma2
        + (m0 @ spec.kappa0) * t + spec.kappa1 * m1 * t + (m2 @ spec.kappa2) * t + e3
    )


def _draw_block(spec: LsemSpec, rng: np.random.Generator, b: int):
    t = (rng.random(b) < spec.p_treat).astype(float)
    e0 = spec.noise["upstream"].draw(rng, (b, spec.k_upstream))
    e1 = spec.noise["mediator"].draw(rng, b)
    e2 = spec.noise["downstream"].draw(rng, (b, spec.j_downstream))
    e3 = spec.noise["outcome"].draw(rng, b)
    return t, e0, e1, e2, e3


def _block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, block])))


_SIM_STREAM = 0
_ORACLE_STREAM = 1


def simulate_full(spec: LsemSpec, n: int, seed: int) -> dict[str, np.ndarray]:
    """Simulate every variable, including the unmeasured blocks."""
    if n < 4:
        raise ValueError("n must be at least 4")
    parts = []
    for block, lo in enumerate(range(0, n, BLOCK_UNITS)):
        b = min(BLOCK_UNITS, n - lo)
        rng = _block_rng(seed, block, _SIM_STREAM)
        t, e0, e1, e2, e3 = _draw_block(spec, rng, b)
        m0 = _upstream(spec, t, e0)
        m1 = _mediator(spec, t, m0, e1)
        m2 = _downstream(spec, t, m0, m1, e2)
        y = _outcome(spec, t, m0, m1, m2, e3)
        parts.append((t, m0, m1, m2, y))
    cols = list(zip(*parts))
    return {
        "T": np.concatenate(cols[0]),
        "M0": np.concatenate(cols[1]),
        "M1": np.concatenate(cols[2]),
        "M2": np.concatenate(cols[3]),
        "Y": np.concatenate(cols[4]),
    }


def simulate(spec: LsemSpec, n: int, seed: int) -> ObservationTable:
    full = simulate_full(spec, n, seed)
    return ObservationTable.from_arrays(full["T"], full["M1"], full["Y"])


def theta_from_structural(spec: LsemSpec) -> ThetaVector:
    """Population coefficients of the two regressions, in closed form.

    Valid as regression limits when M0 does not confound M1 and Y; see
    :func:`confounding_slopes`.
    """
    a0, b0 = spec.alpha0, spec.beta0
    s0 = a0 + b0
    m10 = spec.alpha1 + spec.psi1 @ a0
    m11 = spec.beta1 + spec.psi1 @ b0 + spec.xi1 @ a0 + spec.xi1 @ b0
    y0 = spec.alpha3 + spec.gamma0 @ a0 + spec.gamma2 @ (spec.alpha2 + spec.Psi2 @ a0)
    y1 = (
        spec.beta3
        + spec.gamma0 @ b0
        + spec.gamma2 @ (spec.beta2 + spec.Psi2 @ b0 + spec.Xi2 @ s0)
        + spec.kappa0 @ s0
        + spec.kappa2 @ (spec.alpha2 + spec.beta2 + (spec.Psi2 + spec.Xi2) @ s0)
    )
    y2 = spec.gamma1 + spec.gamma2 @ spec.psi3
    y3 = spec.gamma2 @ spec.xi3 + spec.kappa1 + spec.kappa2 @ spec.psi3 + spec.kappa2 @ spec.xi3
    return ThetaVector(m10, m11, y0, y1, y2, y3)


def _structural_expansion(spec: LsemSpec) -> dict[str, float]:
    """GADE/GACME substituted directly from the structural equations."""
    a0, b0 = spec.alpha0, spec.beta0
    s0 = a0 + b0
    delta_m1 = spec.beta1 + spec.psi1 @ b0 + spec.xi1 @ a0 + spec.xi1 @ b0
    out = {}
    for t in (0, 1):
        mean_m1 = spec.alpha1 + spec.psi1 @ a0 + delta_m1 * t
        out[f"gade{t}"] = (
            spec.beta3
            + spec.gamma0 @ b0
            + spec.gamma2 @ (spec.beta2 + spec.Psi2 @ b0 + spec.Xi2 @ s0)
            + (spec.gamma2 @ spec.xi3) * mean_m1
            + spec.kappa0 @ s0
            + spec.kappa1 * mean_m1
            + spec.kappa2 @ (spec.alpha2 + spec.beta2 + (spec.Psi2 + spec.Xi2) @ s0)
            + (spec.kappa2 @ (spec.psi3 + spec.xi3)) * mean_m1
        )
        out[f"gacme{t}"] = (
            (spec.gamma2 + spec.kappa2 * t) @ (spec.psi3 + spec.xi3 * t) * delta_m1
            + (spec.gamma1 + spec.kappa1 * t) * delta_m1
        )
    return out


def _arm_means(spec: LsemSpec, t: int) -> tuple[np.ndarray, float, np.ndarray, float]:
    m0 = spec.alpha0 + spec.beta0 * t
    m1 = float(_mediator(spec, float(t), m0, 0.0))
    m2 = _downstream(spec, float(t), m0, m1, 0.0)
    y = float(_outcome(spec, float(t), m0, m1, m2, 0.0))
    return m0, m1, m2, y


def arm_means(spec: LsemSpec) -> dict[str, tuple[float, float]]:
    """Analytic E[M1 | T=t] and E[Y | T=t] for t = 0, 1."""
    out = {}
    for t in (0, 1):
        _, m1, _, y = _arm_means(spec, t)
        out[f"arm{t}"] = (m1, y)
    return out


def true_effects_from_structural(spec: LsemSpec) -> GroundTruth:
    """Ground-truth effects, cross-checked between two algebraic routes."""
    theta = theta_from_structural(spec)
    direct = _structural_expansion(spec)
    via_theta = {}
    for t in (0, 1):
        via_theta[f"gade{t}"], via_theta[f"gacme{t}"] = effects_from_theta(theta, t)
    (_, _, _, y0), (_, _, _, y1) = _arm_means(spec, 0), _arm_means(spec, 1)
    ate_means = y1 - y0
    scale = 1.0 + sum(abs(v) for v in direct.values()) + abs(y0) + abs(y1)
    for key, v in direct.items():
        if not abs(v - via_theta[key]) <= 1e-12 * scale:
            raise InternalInconsistency(f"{key}: structural {v!r} vs coefficient route {via_theta[key]!r}")
    ate = direct["gade0"] + direct["gacme1"]
    for other in (direct["gade1"] + direct["gacme0"], ate_means):
        if not abs(ate - other) <= 1e-12 * scale:
            raise InternalInconsistency(f"ATE decompositions disagree: {ate!r} vs {other!r}")
    return GroundTruth(theta_true=theta, ate=ate, **direct)


def counterfactual_samples(spec: LsemSpec, n_mc: int, seed: int) -> dict[str, np.ndarray]:
    """Per-unit contrasts of nested potential outcomes, errors shared across arms."""
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    chunks = {k: [] for k in ("gade0", "gade1", "gacme0", "gacme1", "ate")}
    for block, lo in enumerate(range(0, n_mc, BLOCK_UNITS)):
        b = min(BLOCK_UNITS, n_mc - lo)
        rng = _block_rng(seed, block, _ORACLE_STREAM)
        _, e0, e1, e2, e3 = _draw_block(spec, rng, b)
        m0 = {t: _upstream(spec, float(t), e0) for t in (0, 1)}
        m1 = {t: _mediator(spec, float(t), m0[t], e1) for t in (0, 1)}

        def y_at(t_y, m1_val):
            # Y(t, M0(t), m1, M2(t, M0(t), m1))
            m2 = _downstream(spec, float(t_y), m0[t_y], m1_val, e2)
            return _outcome(spec, float(t_y), m0[t_y], m1_val, m2, e3)

        for t in (0, 1):
            chunks[f"gade{t}"].append(y_at(1, m1[t]) - y_at(0, m1[t]))
            chunks[f"gacme{t}"].append(y_at(t, m1[1]) - y_at(t, m1[0]))
        chunks["ate"].append(y_at(1, m1[1]) - y_at(0, m1[0]))
    return {k: np.concatenate(v) for k, v in chunks.items()}


def counterfactual_oracle(spec: LsemSpec, n_mc: int, seed: int) -> GroundTruth:
    samples = counterfactual_samples(spec, n_mc, seed)
    means = {k: float(np.mean(v)) for k, v in samples.items()}
    ses = {k: float(np.std(v, ddof=1) / math.sqrt(len(v))) for k, v in samples.items()}
    return GroundTruth(std_errors=ses, **means)


# identification diagnostics

def upstream_covariance(spec: LsemSpec) -> np.ndarray:
    return np.eye(spec.k_upstream) * spec.noise["upstream"].variance


def confounding_slopes(spec: LsemSpec) -> tuple[float, float]:
    """Per-arm bias in the outcome regression's mediator slope.

    The unmeasured M0 enters both M1 and Y (outside of M1) whenever psi1 +
    xi1*t and the within-arm M0 loading on Y are both nonzero; the slope then
    absorbs d_t' Cov(M0, M1 | t) / Var(M1 | t).  Zero for both arms means
    the closed-form coefficients are the regression limits.
    """
    sigma0 = upstream_covariance(spec)
    out = []
    for t in (0, 1):
        load_m1 = spec.psi1 + spec.xi1 * t
        d_t = spec.gamma0 + spec.kappa0 * t + (spec.Psi2 + spec.Xi2 * t).T @ (spec.gamma2 + spec.kappa2 * t)
        var_m1 = load_m1 @ sigma0 @ load_m1 + spec.noise["mediator"].variance
        cov = d_t @ sigma0 @ load_m1
        if var_m1 == 0:
            out.append(0.0)
        else:
            out.append(float(cov / var_m1))
    return out[0], out[1]


def is_identified(spec: LsemSpec, tol: float = 1e-12) -> bool:
    return all(abs(b) <= tol for b in confounding_slopes(spec))


def regression_limit(spec: LsemSpec) -> ThetaVector:
    """Probability limit of the per-equation least-squares coefficients.

    Built from arm means and second moments, with no reference to the
    closed forms in :func:`theta_from_structural`.
    """
    bias = confounding_slopes(spec)
    intercepts, slopes, mediator_means = [], [], []
    for t in (0, 1):
        _, m1, _, y = _arm_means(spec, t)
        # within-arm slope of Y on M1 for the causal part: coefficient on M1 after substituting M2
        c1 = spec.gamma1 + spec.kappa1 * t + (spec.gamma2 + spec.kappa2 * t) @ (spec.psi3 + spec.xi3 * t)
        b = c1 + bias[t]
        slopes.append(b)
        intercepts.append(y - b * m1)
        mediator_means.append(m1)
    return ThetaVector(
        mediator_means[0], mediator_means[1] - mediator_means[0],
        intercepts[0], intercepts[1] - intercepts[0],
        slopes[0], slopes[1] - slopes[0],
    )


def reduce_upstream_chain(alpha01, beta01, alpha02, beta02, psi, xi) -> tuple[float, float]:
    """Reduced-form (intercept, treatment coefficient) of M02 when M01 -> M02."""
    return alpha02 + psi * alpha01, beta02 + psi * beta01 + xi * alpha01 + xi * beta01


# random specifications for Monte Carlo studies

def random_spec(
    rng: np.random.Generator,
    k: int,
    j: int,
    *,
    null: bool = False,
    identified: bool = True,
    scale: float = 0.6,
) -> LsemSpec:
    """Draw a random LSEM.

    ``identified`` keeps M0 from confounding M1 and Y by cutting one side of
    the path: either M0 does not feed M1, or M0 reaches Y only through M1.
    ``null`` zeroes every treatment-dependent coefficient.
    """
    def v(n):
        return rng.uniform(-scale, scale, n)

    d = dict(
        k_upstream=k, j_downstream=j,
        alpha0=rng.uniform(-1, 1, k) * 2, beta0=v(k),
        alpha1=rng.uniform(1, 3), beta1=rng.uniform(-1, 1),
        psi1=v(k), xi1=v(k),
        alpha2=rng.uniform(-1, 1, j), beta2=v(j),
        Psi2=rng.uniform(-scale, scale, (j, k)), Xi2=rng.uniform(-scale, scale, (j, k)),
        psi3=v(j), xi3=v(j),
        alpha3=rng.uniform(-1, 1), beta3=rng.uniform(-scale, scale),
        gamma0=v(k), gamma1=rng.choice([-1, 1]) * rng.uniform(0.3, 1.0), gamma2=v(j),
        kappa0=v(k), kappa1=rng.uniform(-scale, scale), kappa2=v(j),
        p_treat=float(rng.uniform(0.3, 0.7)),
    )
    if identified and k > 0:
        if rng.random() < 0.5:
            d["psi1"] = np.zeros(k)
            d["xi1"] = np.zeros(k)
        else:
            d["gamma0"] = np.zeros(k)
            d["kappa0"] = np.zeros(k)
            d["Psi2"] = np.zeros((j, k))
            d["Xi2"] = np.zeros((j, k))
    if null:
        for name in TREATMENT_FIELDS:
            d[name] = np.zeros_like(np.asarray(d[name], dtype=float))
        d["beta1"] = d["beta3"] = d["kappa1"] = 0.0
    families = ["normal", "bernoulli", "uniform"]
    d["noise"] = {
        key: NoiseSpec(families[rng.integers(3)], float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.2, 0.8)))
        for key in NOISE_KEYS
    }
    return LsemSpec(**d)
