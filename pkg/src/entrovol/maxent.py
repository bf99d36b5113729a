"""Maximum-entropy volatility distributions.

The volatility scale w of the conditional Gaussian return distribution is
modelled by the generalized-gamma family

    F(w) = w**(alpha_m + 1) * exp(-lam * w**delta) / Z(lam),

the entropy-maximizing density under a density-of-states measure w**alpha_m
and a single moment constraint on <w**delta>.  This module houses the family:
densities, normalization, moments, the lam <-> <w**delta> <-> w0 conversions,
exact sampling, entropy computations, and a numerical check that the family
really does dominate the entropy of constraint-preserving perturbations.

Everything is a pure function of its inputs plus an explicit RNG seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError

__all__ = [
    "ModelParams",
    "VolScale",
    "SlaveConstants",
    "ST_PRESETS",
    "volatility_pdf",
    "volatility_pdf_unnormalized",
    "volatility_cdf",
    "partition_function",
    "scale_convert",
    "volatility_moment",
    "slave_constant",
    "sample_volatility",
    "process_entropy",
    "maxent_verify",
    "MaxentReport",
]

N0 = math.sqrt(2.0 * math.pi)

# Exponent where exp(-t) is negligible relative to any O(1) peak.
_EXP_CUTOFF = 745.0


@dataclass(frozen=True)
class ModelParams:
    """Exponent pair selecting a member of the volatility family.

    alpha_m is the density-of-states exponent (measure M(w) = w**alpha_m),
    delta the exponent of the constrained moment <w**delta>.  Both are
    real-valued; the named presets only use {0, 1} x {1, 2}.
    """

    alpha_m: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha_m) and self.alpha_m >= 0.0):
            raise DomainError(f"alpha_m must be finite and >= 0, got {self.alpha_m}")
        if not (np.isfinite(self.delta) and self.delta > 0.0):
            raise DomainError(f"delta must be finite and > 0, got {self.delta}")

    @property
    def gamma_shape(self) -> float:
        """Shape (2 + alpha_m)/delta of the Gamma law followed by w**delta."""
        return (2.0 + self.alpha_m) / self.delta

    @property
    def preset(self) -> str | None:
        """Preset name if this parameter pair is one of ST11/ST01/ST12."""
        for name, params in ST_PRESETS.items():
            if params.alpha_m == self.alpha_m and params.delta == self.delta:
                return name
        return None

    @classmethod
    def from_preset(cls, name: str) -> "ModelParams":
        try:
            return ST_PRESETS[name.lower()]
        except KeyError:
            valid = ", ".join(sorted(ST_PRESETS))
            raise DomainError(f"unknown model preset '{name}'; valid presets: {valid}") from None


ST_PRESETS: dict[str, ModelParams] = {
    "st11": ModelParams(alpha_m=1.0, delta=1.0),
    "st01": ModelParams(alpha_m=0.0, delta=1.0),
    "st12": ModelParams(alpha_m=1.0, delta=2.0),
}


@dataclass(frozen=True)
class VolScale:
    """Volatility scale in one of three equivalent parameterizations.

    kind is one of "lambda" (the multiplier of w**delta in the exponent,
    units 1/w**delta), "mean_q" (the constrained moment <w**delta>) or "w0"
    (the characteristic length, units of w).  The model is carried along
    because the conversions depend on (alpha_m, delta).
    """

    model: ModelParams
    kind: str
    value: float

    _KINDS = ("lambda", "mean_q", "w0")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise DomainError(f"scale kind must be one of {self._KINDS}, got '{self.kind}'")
        if not (np.isfinite(self.value) and self.value > 0.0):
            raise DomainError(f"scale value must be finite and > 0, got {self.value}")

    @classmethod
    def from_lambda(cls, model: ModelParams, lam: float) -> "VolScale":
        return cls(model, "lambda", float(lam))

    @classmethod
    def from_mean_q(cls, model: ModelParams, mean_q: float) -> "VolScale":
        return cls(model, "mean_q", float(mean_q))

    @classmethod
    def from_w0(cls, model: ModelParams, w0: float) -> "VolScale":
        return cls(model, "w0", float(w0))

    @classmethod
    def from_mean_w(cls, model: ModelParams, mean_w: float) -> "VolScale":
        """Convenience: set the scale from the expected volatility <w>.

        <w> is not one of the stored parameterizations unless delta == 1;
        this computes w0 = <w> / <w_tilde> and stores that.
        """
        if not (np.isfinite(mean_w) and mean_w > 0.0):
            raise DomainError(f"mean_w must be finite and > 0, got {mean_w}")
        return cls(model, "w0", float(mean_w) / volatility_moment(model, 1.0))

    @property
    def lam(self) -> float:
        if self.kind == "lambda":
            return self.value
        return self.w0 ** (-self.model.delta)

    @property
    def w0(self) -> float:
        if self.kind == "w0":
            return self.value
        if self.kind == "lambda":
            return self.value ** (-1.0 / self.model.delta)
        # mean_q -> w0:  w0 = (delta/(2+alpha_m))**(1/delta) * mean_q**(1/delta)
        m, d = self.model, self.model.delta
        return (d / (2.0 + m.alpha_m) * self.value) ** (1.0 / d)

    @property
    def mean_q(self) -> float:
        if self.kind == "mean_q":
            return self.value
        m, d = self.model, self.model.delta
        return (2.0 + m.alpha_m) / (d * self.lam)

    @property
    def mean_w(self) -> float:
        """Expected volatility <w> implied by this scale."""
        return self.w0 * volatility_moment(self.model, 1.0)


@dataclass(frozen=True)
class SlaveConstants:
    """Absolute-moment constant of the conditional Gaussian kernel."""

    alpha: float
    value: float


def _check_scale(model: ModelParams, scale: VolScale) -> None:
    if scale.model != model:
        raise DomainError(
            f"scale was built for model {scale.model}, not {model}; rebuild it with the right model"
        )


def partition_function(model: ModelParams, lam: float) -> float:
    """Normalization Z(lam) = Gamma((2+alpha_m)/delta) / (delta * lam**((2+alpha_m)/delta))."""
    if not (np.isfinite(lam) and lam > 0.0):
        raise DomainError(f"lambda must be finite and > 0, got {lam}")
    k = model.gamma_shape
    return special.gamma(k) / (model.delta * lam**k)


def volatility_pdf(model: ModelParams, w_tilde):
    """Density of the normalized volatility w_tilde = w/w0.

    F(w_tilde) = delta/Gamma((2+alpha_m)/delta) * w_tilde**(alpha_m+1)
                 * exp(-w_tilde**delta); integrates to one on [0, inf).
    """
    w = np.asarray(w_tilde, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("w_tilde must be finite and >= 0")
    c = model.delta / special.gamma(model.gamma_shape)
    with np.errstate(under="ignore"):
        out = c * w ** (model.alpha_m + 1.0) * np.exp(-(w**model.delta))
    return out if out.ndim else float(out)


def volatility_pdf_unnormalized(model: ModelParams, scale: VolScale, w):
    """Density of the volatility w in absolute units, F(w) = w**(alpha_m+1) exp(-lam w**delta)/Z."""
    _check_scale(model, scale)
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("w must be finite and >= 0")
    w0 = scale.w0
    out = volatility_pdf(model, w / w0) / w0
    return out if np.ndim(out) else float(out)


def volatility_cdf(model: ModelParams, w_tilde):
    """CDF of the normalized volatility: regularized Gamma P((2+alpha_m)/delta, w_tilde**delta)."""
    w = np.asarray(w_tilde, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("w_tilde must be finite and >= 0")
    out = special.gammainc(model.gamma_shape, w**model.delta)
    return out if out.ndim else float(out)


def scale_convert(model: ModelParams, scale: VolScale, target: str) -> VolScale:
    """Re-express a volatility scale as one of "lambda", "mean_q" or "w0"."""
    _check_scale(model, scale)
    if target == "lambda":
        return VolScale.from_lambda(model, scale.lam)
    if target == "mean_q":
        return VolScale.from_mean_q(model, scale.mean_q)
    if target == "w0":
        return VolScale.from_w0(model, scale.w0)
    raise DomainError(f"unknown conversion target '{target}'")


def volatility_moment(model: ModelParams, alpha: float) -> float:
    """Moment <w_tilde**alpha> = Gamma((2+alpha_m+alpha)/delta)/Gamma((2+alpha_m)/delta).

    In w0 units; multiply by w0**alpha for the absolute moment <w**alpha>.
    Defined for alpha > -(2+ alpha_m).
    """
    if not np.isfinite(alpha):
        raise DomainError("alpha must be finite")
    arg = 2.0 + model.alpha_m + alpha
    if arg <= 0.0:
        raise DomainError(
            f"moment order {alpha} hits a Gamma pole: need alpha > {-(2.0 + model.alpha_m)}"
        )
    return math.exp(special.gammaln(arg / model.delta) - special.gammaln(model.gamma_shape))


def slave_constant(alpha: float) -> float:
    """Absolute moment N_alpha = integral of |z|**alpha exp(-z**2/2) over the line.

    Closed form 2**((alpha+1)/2) * Gamma((alpha+1)/2); N_0 = sqrt(2*pi).
    """
    if not (np.isfinite(alpha) and alpha >= 0.0):
        raise DomainError(f"alpha must be finite and >= 0, got {alpha}")
    return 2.0 ** ((alpha + 1.0) / 2.0) * special.gamma((alpha + 1.0) / 2.0)


def sample_volatility(model: ModelParams, scale: VolScale, n: int, rng_seed) -> np.ndarray:
    """Draw n exact samples of the volatility w (absolute units).

    w_tilde**delta is Gamma((2+alpha_m)/delta) with unit rate, so
    w = w0 * G**(1/delta).  Identical seeds give identical sequences.
    """
    _check_scale(model, scale)
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(rng_seed)
    if n == 0:
        return np.empty(0, dtype=float)
    g = rng.gamma(model.gamma_shape, 1.0, size=int(n))
    return scale.w0 * g ** (1.0 / model.delta)


def _entropy_quad(model: ModelParams, scale: VolScale) -> float:
    """Quadrature of -integral F(w) ln[F(w)/(w*M(w))] dw with M(w) = w**alpha_m."""
    lam, w0 = scale.lam, scale.w0
    log_z = math.log(partition_function(model, lam))
    a1 = model.alpha_m + 1.0

    def integrand(w):
        if w <= 0.0:
            return 0.0
        log_f = a1 * math.log(w) - lam * w**model.delta - log_z
        f = math.exp(log_f)
        return -f * (log_f - a1 * math.log(w))

    upper = w0 * (_EXP_CUTOFF + 20.0) ** (1.0 / model.delta)
    mode = w0 * (a1 / model.delta) ** (1.0 / model.delta)
    val, err = integrate.quad(
        integrand, 0.0, upper, points=[mode], limit=200, epsabs=0.0, epsrel=1e-12
    )
    if not np.isfinite(val) or err > max(1e-10, 1e-9 * abs(val)):
        raise NumericError(
            f"entropy quadrature did not converge (value {val}, error estimate {err})"
        )
    return val


class ProcessEntropy(tuple):
    """(s_g, s_f) pair; s_g is the kernel term, s_f the volatility term."""

    __slots__ = ()

    def __new__(cls, s_g, s_f):
        return super().__new__(cls, (s_g, s_f))

    @property
    def s_g(self):
        return self[0]

    @property
    def s_f(self):
        return self[1]


def process_entropy(model: ModelParams, scale: VolScale) -> ProcessEntropy:
    """Entropy contributions of the two stacked processes.

    s_g is the differential entropy of the unit Gaussian kernel,
    ln(sqrt(2*pi)) + 1/2.  s_f = -integral F ln[F/(w*M(w))] dw is computed
    by adaptive quadrature with M(w) = w**alpha_m.
    """
    _check_scale(model, scale)
    s_g = math.log(N0) + 0.5
    s_f = _entropy_quad(model, scale)
    return ProcessEntropy(s_g, s_f)


@dataclass(frozen=True)
class MaxentReport:
    """Result of the entropy-dominance check against perturbed densities."""

    model: ModelParams
    n_trials: int
    n_discarded: int
    entropy_reference: float
    entropy_best_perturbed: float
    max_excess: float
    n_violations: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def _grid_entropy(log_f: np.ndarray, weights: np.ndarray, log_ref: np.ndarray) -> float:
    """Discrete -sum h * F * (ln F - ln(w*M(w))) with 0*ln0 = 0."""
    with np.errstate(under="ignore"):
        f = np.exp(log_f)
    terms = np.where(f > 0.0, -f * (log_f - log_ref), 0.0)
    return float(np.sum(weights * terms))


def maxent_verify(
    model: ModelParams,
    scale: VolScale,
    n_perturbations: int,
    rng_seed,
    epsilon: float = 0.05,
    grid_size: int = 2048,
    tolerance: float = 1e-9,
) -> MaxentReport:
    """Check that the family maximizes entropy among constraint-preserving densities.

    On a log-spaced grid the model density is the exact maximizer of the
    discretized entropy under the discretized <w**delta> constraint, so every
    perturbed density re-tilted onto the same constraint must score lower.
    Perturbations multiply the log-density by (1 + epsilon*bump) with a smooth
    random bump, re-tilt by exp(-mu*w**delta) with mu solved by bisection to
    restore the constraint, and renormalize.  Trials whose constraint cannot
    be restored are discarded and counted.
    """
    _check_scale(model, scale)
    if n_perturbations < 1:
        raise DomainError("n_perturbations must be >= 1")
    rng = np.random.default_rng(rng_seed)
    w0, lam = scale.w0, scale.lam
    a1 = model.alpha_m + 1.0

    w = np.geomspace(1e-4 * w0, 50.0 * w0, grid_size)
    # trapezoid weights on the (non-uniform) grid
    h = np.empty_like(w)
    h[1:-1] = 0.5 * (w[2:] - w[:-2])
    h[0] = 0.5 * (w[1] - w[0])
    h[-1] = 0.5 * (w[-1] - w[-2])

    q = w**model.delta
    log_ref = a1 * np.log(w)  # ln(w * M(w))

    log_f0 = a1 * np.log(w) - lam * q
    log_f0 -= _log_norm(log_f0, h)
    with np.errstate(under="ignore"):
        f0 = np.exp(log_f0)
    target_q = float(np.sum(h * f0 * q))
    s_ref = _grid_entropy(log_f0, h, log_ref)

    s_vals = []
    n_discarded = 0
    log_w = np.log(w)
    span = log_w[-1] - log_w[0]
    for _ in range(int(n_perturbations)):
        bump = np.zeros_like(w)
        for _ in range(3):
            center = log_w[0] + span * rng.random()
            width = span * (0.02 + 0.1 * rng.random())
            bump += rng.uniform(-1.0, 1.0) * np.exp(-0.5 * ((log_w - center) / width) ** 2)
        log_f = log_f0 * (1.0 + epsilon * bump)
        tilted = _retilt(log_f, h, q, target_q)
        if tilted is None:
            n_discarded += 1
            continue
        s_vals.append(_grid_entropy(tilted, h, log_ref))

    if not s_vals:
        raise NumericError("all perturbation trials were discarded; constraint never restorable")
    s_best = max(s_vals)
    excess = s_best - s_ref
    n_violations = sum(1 for s in s_vals if s > s_ref + tolerance)
    return MaxentReport(
        model=model,
        n_trials=int(n_perturbations),
        n_discarded=n_discarded,
        entropy_reference=s_ref,
        entropy_best_perturbed=s_best,
        max_excess=excess,
        n_violations=n_violations,
        tolerance=tolerance,
    )


def _log_norm(log_f: np.ndarray, h: np.ndarray) -> float:
    """log of sum h*exp(log_f), computed stably."""
    m = np.max(log_f)
    with np.errstate(under="ignore"):
        return m + math.log(float(np.sum(h * np.exp(log_f - m))))


def _retilt(log_f: np.ndarray, h: np.ndarray, q: np.ndarray, target: float):
    """Find mu with <q> under f*exp(-mu*q) equal to target; None if infeasible."""

    def moment(mu):
        lg = log_f - mu * q
        lg = lg - _log_norm(lg, h)
        with np.errstate(under="ignore"):
            f = np.exp(lg)
        return float(np.sum(h * f * q)), lg

    lo, hi = -1.0, 1.0
    m_lo, _ = moment(lo)
    m_hi, _ = moment(hi)
    # <q> is decreasing in mu: need m_lo >= target >= m_hi
    for _ in range(80):
        if m_lo >= target:
            break
        lo *= 2.0
        m_lo, _ = moment(lo)
    for _ in range(80):
        if m_hi <= target:
            break
        hi *= 2.0
        m_hi, _ = moment(hi)
    if m_lo < target or m_hi > target:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m_mid, lg = moment(mid)
        if abs(m_mid - target) <= 1e-13 * target:
            return lg
        if m_mid > target:
            lo = mid
        else:
            hi = mid
    m_mid, lg = moment(0.5 * (lo + hi))
    if abs(m_mid - target) > 1e-10 * target:
        return None
    return lg
