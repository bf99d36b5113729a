"""Return distributions induced by the volatility mixture.

The observed return x is Gaussian conditional on the volatility w, so its
density is the scale mixture

    f(x) = (1/N0) * integral_0^inf F(w) * g(x/w) / w dw,   g(z) = exp(-z**2/2),

with F the maximum-entropy volatility density from :mod:`entrovol.maxent`.
This module evaluates the mixture PDF/CDF/CCDF and moments, the scaled
(parameter-free) form, exact sampling, and a table-backed evaluation of the
closed-form st11 density used as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import integrate, interpolate, special

from . import maxent
from .errors import ContractError, DomainError, NumericError
from .maxent import N0, ModelParams, VolScale

__all__ = [
    "ReturnDist",
    "return_pdf",
    "return_pdf_st11_analytic",
    "return_cdf",
    "return_ccdf_abs",
    "return_moment_abs",
    "scaled_return_pdf",
    "sample_returns",
    "load_st11_reference",
]

_EXP_CUTOFF = 745.0


@dataclass(frozen=True)
class ReturnDist:
    """A return distribution: model, volatility scale, and normalization.

    With alpha None the variable is the raw return x.  With alpha set, the
    variable is x_alpha = x / <|x|**alpha>**(1/alpha); that scaled law depends
    only on the model (any scale gives bit-identical values), so scale may be
    omitted.
    """

    model: ModelParams
    scale: VolScale | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.alpha is None:
            if self.scale is None:
                raise DomainError("a raw ReturnDist needs a volatility scale")
            if self.scale.model != self.model:
                raise DomainError("scale was built for a different model")
        elif not (np.isfinite(self.alpha) and self.alpha > 0.0):
            raise DomainError(f"normalization alpha must be > 0, got {self.alpha}")

    @classmethod
    def raw(cls, model: ModelParams, scale: VolScale) -> "ReturnDist":
        return cls(model, scale, None)

    @classmethod
    def scaled(cls, model: ModelParams, alpha: float = 2.0, scale: VolScale | None = None):
        return cls(model, scale, alpha)


# ---------------------------------------------------------------------------
# Core quadratures in w0 = 1 units
# ---------------------------------------------------------------------------


def _w_upper(model: ModelParams, u: float) -> tuple[float, float]:
    """Truncation point and interior peak for the mixture integrand at |x|/w0 = u."""
    d = model.delta
    if u > 0.0:
        w_star = (u * u / d) ** (1.0 / (d + 2.0))
        e_star = w_star**d + u * u / (2.0 * w_star * w_star)
    else:
        w_star, e_star = 0.0, 0.0
    w_hi = (e_star + _EXP_CUTOFF + 20.0) ** (1.0 / d)
    return w_hi, w_star


def _unit_pdf_scalar(model: ModelParams, u: float) -> float:
    """Mixture density at u = |x|/w0 for w0 = 1."""
    c = model.delta / special.gamma(model.gamma_shape) / N0
    am, d = model.alpha_m, model.delta
    u2 = u * u

    def integrand(w):
        return math.exp(am * math.log(w) - w**d - u2 / (2.0 * w * w)) if w > 0.0 else 0.0

    w_hi, w_star = _w_upper(model, u)
    points = [w_star] if 0.0 < w_star < w_hi else None
    with np.errstate(under="ignore"):
        val, err = integrate.quad(
            integrand, 0.0, w_hi, points=points, limit=300, epsabs=0.0, epsrel=1e-12
        )
    val *= c
    err *= c
    if not np.isfinite(val) or (val > 0.0 and err > 1e-8 * val):
        raise NumericError(
            f"return-pdf quadrature failed at u={u} (value {val}, error estimate {err})"
        )
    return val


def _unit_ccdf_scalar(model: ModelParams, t: float) -> float:
    """P(|x| > t) at w0 = 1: integral of F(w) * erfc(t/(w*sqrt(2)))."""
    if t == 0.0:
        return 1.0
    c = model.delta / special.gamma(model.gamma_shape)
    am, d = model.alpha_m, model.delta
    s2 = math.sqrt(2.0)

    def integrand(w):
        if w <= 0.0:
            return 0.0
        return math.exp((am + 1.0) * math.log(w) - w**d) * special.erfc(t / (w * s2))

    w_hi = (_EXP_CUTOFF + 20.0) ** (1.0 / d)
    # erfc kills the integrand below roughly t/38 (erfc(27) ~ 1e-318)
    w_lo = t / 38.0
    if w_lo >= w_hi:
        w_lo = 0.0
    with np.errstate(under="ignore"):
        val, err = integrate.quad(
            integrand, w_lo, w_hi, limit=300, epsabs=0.0, epsrel=1e-12
        )
    val *= c
    err *= c
    if not np.isfinite(val) or (val > 0.0 and err > 1e-8 * val):
        raise NumericError(
            f"ccdf quadrature failed at t={t} (value {val}, error estimate {err})"
        )
    return min(val, 1.0)


def _scaled_divisor(model: ModelParams, alpha: float) -> float:
    """l in w0 units: <|x|**alpha>**(1/alpha) = (N_alpha/N0 * <w_tilde**alpha>)**(1/alpha)."""
    n_ratio = maxent.slave_constant(alpha) / N0
    return (n_ratio * maxent.volatility_moment(model, alpha)) ** (1.0 / alpha)


def _to_unit(dist: ReturnDist):
    """Map a ReturnDist onto (length unit, model) so that y = x/unit has the w0=1 law."""
    if dist.alpha is None:
        return dist.scale.w0
    # scaled variable: x_alpha = x_tilde / l_tilde, so unit = 1/l_tilde in w0-units
    return 1.0 / _scaled_divisor(dist.model, dist.alpha)


def return_pdf(dist: ReturnDist, x):
    """Mixture density of the (raw or scaled) return at x.  Even in x."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise DomainError("x must be finite")
    unit = _to_unit(dist)
    flat = np.atleast_1d(xs)
    out = np.array([_unit_pdf_scalar(dist.model, abs(v) / unit) for v in flat]) / unit
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


def return_ccdf_abs(dist: ReturnDist, t):
    """P(|x| > t) = 2 * integral_t^inf f; non-increasing, equals 1 at t = 0."""
    ts = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(ts)) or np.any(ts < 0.0):
        raise DomainError("t must be finite and >= 0")
    unit = _to_unit(dist)
    flat = np.atleast_1d(ts)
    out = np.array([_unit_ccdf_scalar(dist.model, v / unit) for v in flat])
    return float(out[0]) if ts.ndim == 0 else out.reshape(ts.shape)


def return_cdf(dist: ReturnDist, x):
    """P(X <= x), computed from the absolute-return CCDF by symmetry."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise DomainError("x must be finite")
    flat = np.atleast_1d(xs)
    half = 0.5 * np.array([_unit_ccdf_scalar(dist.model, abs(v) / _to_unit(dist)) for v in flat])
    out = np.where(flat >= 0.0, 1.0 - half, half)
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


def return_moment_abs(dist: ReturnDist, alpha: float) -> float:
    """Absolute moment <|x|**alpha> via the transfer identity <|x|**a> = (N_a/N0) <w**a>."""
    if not (np.isfinite(alpha) and alpha >= 0.0):
        raise DomainError(f"alpha must be finite and >= 0, got {alpha}")
    if alpha == 0.0:
        return 1.0
    unit = _to_unit(dist)
    n_ratio = maxent.slave_constant(alpha) / N0
    return n_ratio * maxent.volatility_moment(dist.model, alpha) * unit**alpha


def scaled_return_pdf(model: ModelParams, x_alpha, alpha: float):
    """Density of the scale-free variable x_alpha = x/<|x|**alpha>**(1/alpha).

    Depends on (alpha_m, delta, alpha) only; its alpha-th absolute moment is 1.
    """
    if not (np.isfinite(alpha) and alpha > 0.0):
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return return_pdf(ReturnDist.scaled(model, alpha), x_alpha)


def sample_returns(dist: ReturnDist, n: int, rng_seed) -> np.ndarray:
    """Exact i.i.d. draws: w from the volatility sampler, then x = w*z with z standard normal."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if n == 0:
        return np.empty(0, dtype=float)
    rng = np.random.default_rng(rng_seed)
    if dist.alpha is None:
        scale = dist.scale
    else:
        # any scale gives the same scaled law; w0=1 then divide by the moment scale
        scale = VolScale.from_w0(dist.model, 1.0)
    g = rng.gamma(dist.model.gamma_shape, 1.0, size=int(n))
    w = scale.w0 * g ** (1.0 / dist.model.delta)
    x = w * rng.standard_normal(int(n))
    if dist.alpha is not None:
        x /= _scaled_divisor(dist.model, dist.alpha)
    return x


# ---------------------------------------------------------------------------
# st11 closed form (table-backed)
# ---------------------------------------------------------------------------

_ST11 = maxent.ST_PRESETS["st11"]
_st11_spline = None
_st11_table = None


def load_st11_reference() -> tuple[np.ndarray, np.ndarray]:
    """Reference table (x/<w>, pdf) for the st11 closed-form density.

    Generated offline by an arbitrary-precision special-function oracle; see
    tools/gen_st11_reference.py and the file header for provenance.
    """
    global _st11_table
    if _st11_table is None:
        text = resources.files("entrovol.data").joinpath("st11_pdf_reference.txt").read_text()
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        x = np.array([float(r[0]) for r in rows])
        p = np.array([float(r[1]) for r in rows])
        _st11_table = (x, p)
    return _st11_table


def _st11_interpolant():
    global _st11_spline
    if _st11_spline is None:
        x, p = load_st11_reference()
        # the density is even in x, so d(log p)/du vanishes at u = 0
        _st11_spline = interpolate.CubicSpline(x, np.log(p), bc_type=((1, 0.0), "not-a-knot"))
    return _st11_spline


def return_pdf_st11_analytic(mean_w: float, x, model: ModelParams = _ST11):
    """st11 return density from its closed form, in units of the expected volatility.

    Evaluates the validated reference table (cubic spline in log density) for
    |x|/<w> <= 10 and falls back to the mixture quadrature beyond the table.
    Only defined for the st11 model.
    """
    if model != _ST11:
        raise ContractError("the closed-form density is the st11 special case; use return_pdf")
    if not (np.isfinite(mean_w) and mean_w > 0.0):
        raise DomainError(f"mean_w must be finite and > 0, got {mean_w}")
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise DomainError("x must be finite")
    u = np.abs(np.atleast_1d(xs)) / mean_w
    spline = _st11_interpolant()
    out = np.empty_like(u)
    inside = u <= 10.0
    if np.any(inside):
        out[inside] = np.exp(spline(u[inside]))
    if np.any(~inside):
        # in <w> = 1 units w0 = 1/3, so the table's law is 3 * f_unit(3u)
        out[~inside] = [3.0 * _unit_pdf_scalar(_ST11, 3.0 * v) for v in u[~inside]]
    out /= mean_w
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


# ---------------------------------------------------------------------------
# Fast batched log-density (shared with the fitting module)
# ---------------------------------------------------------------------------


def unit_logpdf_interpolant(model: ModelParams, u_max: float, n_nodes: int = 1200):
    """Monotone-grid interpolant of ln f(u) for the w0 = 1 mixture on [0, u_max].

    Used for likelihood evaluation over large samples; accuracy is limited by
    the node density (checked in the test suite at ~1e-9 relative).
    """
    if not (np.isfinite(u_max) and u_max > 0.0):
        raise DomainError(f"u_max must be finite and > 0, got {u_max}")
    head = np.linspace(0.0, min(1.0, u_max), n_nodes // 3)
    if u_max > 1.0:
        tail = np.geomspace(1.0, u_max, n_nodes - head.size + 1)[1:]
        nodes = np.concatenate([head, tail])
    else:
        nodes = head
    vals = np.log([_unit_pdf_scalar(model, u) for u in nodes])
    return interpolate.PchipInterpolator(nodes, vals)
