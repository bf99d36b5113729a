"""Market-data pipeline: ingestion, returns, empirical CCDFs, diffusion estimates.

File formats (UTF-8 CSV):

- daily closes: header ``date,ticker,close``, ISO-8601 dates;
- tick quotes:  header ``timestamp,ticker,bid,ask``, RFC-3339 timestamps;
- index series: header ``date,value``.

Per-ticker processing is independent; everything that consumes randomness is
seeded explicitly elsewhere — this module is deterministic data plumbing plus
the diffusion change-of-variables density.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np
from scipy import special

from .errors import ContractError, DomainError, ParseError
from .maxent import ModelParams

__all__ = [
    "DailySeries",
    "ReturnSample",
    "TickSeries",
    "TransitionEvent",
    "Transitions",
    "DiffusionEstimate",
    "EmpiricalCCDF",
    "ingest_daily",
    "ingest_index",
    "ingest_ticks",
    "compute_returns",
    "normalize_sample",
    "empirical_ccdf",
    "aggregate_ccdf",
    "detect_transitions",
    "estimate_diffusion",
    "diffusion_density",
    "filter_by_index_band",
    "default_thresholds",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DailySeries:
    """Per-ticker daily closes, strictly increasing dates, positive prices."""

    ticker: str
    dates: np.ndarray  # datetime64[D]
    closes: np.ndarray

    def __post_init__(self):
        if self.dates.shape != self.closes.shape:
            raise DomainError("dates and closes must have equal length")
        if self.dates.size and np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise DomainError(f"{self.ticker}: dates must be strictly increasing")
        if np.any(~np.isfinite(self.closes)) or np.any(self.closes <= 0.0):
            raise DomainError(f"{self.ticker}: prices must be finite and positive")

    def __len__(self):
        return self.dates.size


@dataclass(frozen=True)
class ReturnSample:
    """Log returns at a fixed observation lag, optionally normalized.

    ``alpha``/``scale_divisor`` record the normalization x -> x/l with
    l = <|x|**alpha>**(1/alpha) when :func:`normalize_sample` has been applied.
    """

    ticker: str
    dt_steps: int
    returns: np.ndarray
    dates: np.ndarray | None = None
    alpha: float | None = None
    scale_divisor: float | None = None

    def __post_init__(self):
        if self.dates is not None and self.dates.shape != self.returns.shape:
            raise DomainError("dates must align with returns")

    def __len__(self):
        return self.returns.size


@dataclass(frozen=True)
class TickSeries:
    """Best bid/ask quote stream with its tick size; timestamps in ns since epoch."""

    ticker: str
    times_ns: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    tick_size: float

    def __post_init__(self):
        n = self.times_ns.size
        if self.bid.size != n or self.ask.size != n:
            raise DomainError("bid/ask must align with timestamps")
        if not (np.isfinite(self.tick_size) and self.tick_size > 0.0):
            raise DomainError(f"tick_size must be > 0, got {self.tick_size}")
        if n and np.any(np.diff(self.times_ns) < 0):
            raise DomainError(f"{self.ticker}: timestamps must be non-decreasing")
        if np.any(self.bid <= 0.0) or np.any(self.ask < self.bid):
            raise DomainError(f"{self.ticker}: quotes must satisfy ask >= bid > 0")

    def __len__(self):
        return self.times_ns.size

    @property
    def mid_ticks(self) -> np.ndarray:
        """Mid-prices snapped to the half-tick grid, as integers (units of tick/2)."""
        return np.rint((self.bid + self.ask) / self.tick_size).astype(np.int64)


@dataclass(frozen=True)
class TransitionEvent:
    """A single mid-price change."""

    timestamp: np.datetime64
    mid_before: float
    mid_after: float


class Transitions:
    """Array-backed sequence of mid-price change events."""

    def __init__(self, times_ns: np.ndarray, mid_before: np.ndarray, mid_after: np.ndarray):
        self.times_ns = times_ns
        self.mid_before = mid_before
        self.mid_after = mid_after

    def __len__(self):
        return self.times_ns.size

    def __getitem__(self, i) -> TransitionEvent:
        return TransitionEvent(
            np.datetime64(int(self.times_ns[i]), "ns"),
            float(self.mid_before[i]),
            float(self.mid_after[i]),
        )

    @property
    def amplitudes(self) -> np.ndarray:
        return self.mid_after - self.mid_before


@dataclass(frozen=True)
class DiffusionEstimate:
    """One fixed window's diffusion estimate (d_value per second)."""

    window_start: np.datetime64
    window_len: float
    transition_count: int
    mean_price: float
    mean_spread: float
    d_value: float
    d_norm: float = math.nan
    wide_spread: bool = False


@dataclass(frozen=True)
class EmpiricalCCDF:
    """Exceedance probabilities of |x| over a threshold grid, with uncertainties."""

    thresholds: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    n_sources: int

    def __post_init__(self):
        n = self.thresholds.size
        if self.prob.size != n or self.stderr.size != n:
            raise DomainError("thresholds/prob/stderr must have equal length")
        if n and (np.any(np.diff(self.thresholds) <= 0.0) or self.thresholds[0] < 0.0):
            raise DomainError("thresholds must be increasing and >= 0")
        if np.any(self.prob < 0.0) or np.any(self.prob > 1.0) or np.any(np.diff(self.prob) > 1e-15):
            raise DomainError("prob must lie in [0,1] and be non-increasing")


def default_thresholds(lo: float = 0.1, hi: float = 20.0, n: int = 50) -> np.ndarray:
    """Default log-spaced threshold grid for scaled returns."""
    return np.geomspace(lo, hi, n)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _parse_date(text: str, line: int) -> np.datetime64:
    try:
        return np.datetime64(datetime.strptime(text.strip(), "%Y-%m-%d").date())
    except ValueError:
        raise ParseError(f"invalid ISO date '{text}'", line=line, field="date") from None


def _parse_float(text: str, line: int, field: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"invalid number '{text}'", line=line, field=field) from None


def _parse_rfc3339(text: str, line: int) -> int:
    """RFC-3339 timestamp -> ns since epoch (UTC)."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(t)
    except ValueError:
        raise ParseError(f"invalid RFC-3339 timestamp '{text}'", line=line, field="timestamp") from None
    if dt.tzinfo is None:
        raise ParseError(f"timestamp '{text}' lacks a timezone", line=line, field="timestamp")
    return int(dt.astimezone(timezone.utc).timestamp() * 1e9)


def _open_csv(path, required: tuple[str, ...]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open '{path}': {exc.strerror}") from None
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError(f"'{path}' is empty", line=1) from None
    cols = [h.strip().lower() for h in header]
    missing = [c for c in required if c not in cols]
    if missing:
        fh.close()
        raise ParseError(f"missing column(s) {missing} in '{path}'", line=1)
    return fh, reader, {c: cols.index(c) for c in required}


def ingest_daily(path, required=("date", "ticker", "close")) -> list[DailySeries]:
    """Load a daily-close CSV into one DailySeries per ticker.

    Rows with non-positive prices are rejected with a logged diagnostic;
    duplicate (ticker, date) pairs are a hard error naming both lines.
    """
    fh, reader, idx = _open_csv(path, required)
    per: dict[str, list[tuple[np.datetime64, float, int]]] = {}
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(idx):
                raise ParseError(f"expected {len(idx)} fields, got {len(row)}", line=line)
            date = _parse_date(row[idx["date"]], line)
            ticker = row[idx["ticker"]].strip()
            if not ticker:
                raise ParseError("empty ticker", line=line, field="ticker")
            close = _parse_float(row[idx["close"]], line, "close")
            if not np.isfinite(close) or close <= 0.0:
                log.warning("%s line %d: dropping row with non-positive close %s", path, line, close)
                continue
            per.setdefault(ticker, []).append((date, close, line))
    out = []
    for ticker, rows in per.items():
        rows.sort(key=lambda r: r[0])
        for a, b in zip(rows, rows[1:]):
            if a[0] == b[0]:
                raise DomainError(
                    f"duplicate date {a[0]} for ticker '{ticker}' (lines {a[2]} and {b[2]})"
                )
        out.append(
            DailySeries(
                ticker=ticker,
                dates=np.array([r[0] for r in rows], dtype="datetime64[D]"),
                closes=np.array([r[1] for r in rows], dtype=float),
            )
        )
    return out


def ingest_index(path) -> DailySeries:
    """Load an index CSV (``date,value``) as a DailySeries with ticker 'index'."""
    fh, reader, idx = _open_csv(path, ("date", "value"))
    rows = []
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            date = _parse_date(row[idx["date"]], line)
            value = _parse_float(row[idx["value"]], line, "value")
            rows.append((date, value, line))
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise DomainError(f"duplicate date {a[0]} in index (lines {a[2]} and {b[2]})")
    return DailySeries(
        ticker="index",
        dates=np.array([r[0] for r in rows], dtype="datetime64[D]"),
        closes=np.array([r[1] for r in rows], dtype=float),
    )


def ingest_ticks(path, tick_sizes) -> list[TickSeries]:
    """Load a quote CSV into one TickSeries per ticker.

    ``tick_sizes`` is either a single tick size applied to every ticker or a
    mapping ticker -> tick size.  Crossed quotes (ask < bid) and non-positive
    bids are rejected row-by-row with a logged count.
    """
    fh, reader, idx = _open_csv(path, ("timestamp", "ticker", "bid", "ask"))
    per: dict[str, list[tuple[int, float, float]]] = {}
    rejected = 0
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            ts = _parse_rfc3339(row[idx["timestamp"]], line)
            ticker = row[idx["ticker"]].strip()
            bid = _parse_float(row[idx["bid"]], line, "bid")
            ask = _parse_float(row[idx["ask"]], line, "ask")
            if bid <= 0.0 or ask < bid:
                rejected += 1
                log.warning("%s line %d: rejecting crossed/non-positive quote %s/%s",
                            path, line, bid, ask)
                continue
            per.setdefault(ticker, []).append((ts, bid, ask))
    if rejected:
        log.warning("%s: rejected %d invalid quote rows", path, rejected)
    out = []
    for ticker, rows in per.items():
        rows.sort(key=lambda r: r[0])
        if isinstance(tick_sizes, dict):
            if ticker not in tick_sizes:
                raise DomainError(f"no tick size configured for ticker '{ticker}'")
            tick = float(tick_sizes[ticker])
        else:
            tick = float(tick_sizes)
        out.append(
            TickSeries(
                ticker=ticker,
                times_ns=np.array([r[0] for r in rows], dtype=np.int64),
                bid=np.array([r[1] for r in rows], dtype=float),
                ask=np.array([r[2] for r in rows], dtype=float),
                tick_size=tick,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Returns and empirical CCDFs
# ---------------------------------------------------------------------------


def compute_returns(series: DailySeries, dt_steps: int = 1) -> ReturnSample:
    """Log returns at an observation-index lag (calendar gaps are ignored)."""
    if dt_steps < 1:
        raise DomainError(f"dt_steps must be >= 1, got {dt_steps}")
    if len(series) <= dt_steps:
        raise DomainError(
            f"{series.ticker}: need more than {dt_steps} observations, have {len(series)}"
        )
    x = np.log(series.closes[dt_steps:] / series.closes[:-dt_steps])
    return ReturnSample(
        ticker=series.ticker, dt_steps=dt_steps, returns=x, dates=series.dates[dt_steps:]
    )


def normalize_sample(sample: ReturnSample, alpha: float = 2.0) -> ReturnSample:
    """Divide every return by l = (mean of |x|**alpha)**(1/alpha), recording l."""
    if not (np.isfinite(alpha) and alpha > 0.0):
        raise DomainError(f"alpha must be > 0, got {alpha}")
    if len(sample) == 0:
        raise DomainError(f"{sample.ticker}: cannot normalize an empty sample")
    l = float(np.mean(np.abs(sample.returns) ** alpha) ** (1.0 / alpha))
    if not (np.isfinite(l) and l > 0.0):
        raise DomainError(f"{sample.ticker}: normalization scale is zero or non-finite")
    return replace(sample, returns=sample.returns / l, alpha=alpha, scale_divisor=l)


def empirical_ccdf(sample: ReturnSample, thresholds) -> EmpiricalCCDF:
    """Per-sample exceedance curve: prob[j] = #{|x| > t_j} / n.

    stderr is the per-point binomial standard error sqrt(p(1-p)/n).
    """
    t = np.asarray(thresholds, dtype=float)
    if t.size == 0 or np.any(np.diff(t) <= 0.0) or t[0] < 0.0:
        raise DomainError("thresholds must be a non-empty increasing grid of values >= 0")
    if len(sample) == 0:
        raise DomainError(f"{sample.ticker}: empty sample")
    a = np.sort(np.abs(sample.returns))
    n = a.size
    exceed = n - np.searchsorted(a, t, side="right")
    prob = exceed / n
    stderr = np.sqrt(prob * (1.0 - prob) / n)
    return EmpiricalCCDF(thresholds=t, prob=prob, stderr=stderr, n_sources=1)


def aggregate_ccdf(per_stock, weights: str = "inverse_variance", sem: bool = True) -> EmpiricalCCDF:
    """Cross-stock average of per-stock CCDFs sharing one threshold grid.

    ``weights="equal"`` averages plainly; ``"inverse_variance"`` weights each
    stock by its sample size (under a common law the per-stock variance is
    proportional to 1/n, so relative weights reduce to n).  stderr is the
    cross-stock standard deviation, divided by sqrt(K) when ``sem`` is true.
    """
    stocks = list(per_stock)
    if not stocks:
        raise DomainError("nothing to aggregate")
    grid = stocks[0].thresholds
    for c in stocks[1:]:
        if c.thresholds.shape != grid.shape or not np.array_equal(c.thresholds, grid):
            raise ContractError("per-stock CCDFs must share one threshold grid")
    probs = np.vstack([c.prob for c in stocks])
    k = len(stocks)
    if weights == "equal":
        v = np.full(k, 1.0 / k)
    elif weights == "inverse_variance":
        sizes = np.array([_implied_n(c) for c in stocks])
        v = sizes / sizes.sum()
    else:
        raise DomainError(f"unknown weighting '{weights}'")
    mean = v @ probs
    if k > 1:
        sd = np.std(probs, axis=0, ddof=1)
    else:
        sd = np.zeros_like(mean)
    stderr = sd / math.sqrt(k) if sem else sd
    return EmpiricalCCDF(thresholds=grid, prob=mean, stderr=stderr, n_sources=k)


def _implied_n(c: EmpiricalCCDF) -> float:
    """Recover an effective sample size from the binomial stderr of one stock."""
    mask = (c.prob > 0.0) & (c.prob < 1.0) & (c.stderr > 0.0)
    if not mask.any():
        return 1.0
    p, s = c.prob[mask][0], c.stderr[mask][0]
    return p * (1.0 - p) / (s * s)


# ---------------------------------------------------------------------------
# Tick transitions and diffusion estimates
# ---------------------------------------------------------------------------


def detect_transitions(ticks: TickSeries) -> Transitions:
    """Emit an event at every change of the (tick-grid-snapped) mid-price."""
    if len(ticks) == 0:
        return Transitions(
            np.empty(0, np.int64), np.empty(0, float), np.empty(0, float)
        )
    k = ticks.mid_ticks  # mid in half-tick units, exact integers
    change = np.nonzero(np.diff(k) != 0)[0]
    half = 0.5 * ticks.tick_size
    return Transitions(
        times_ns=ticks.times_ns[change + 1],
        mid_before=k[change] * half,
        mid_after=k[change + 1] * half,
    )


def estimate_diffusion(
    events: Transitions,
    ticks: TickSeries,
    window_len: float = 900.0,
    normalization: str = "whole_sample",
    trailing_days: int = 3,
    wide_spread_factor: float = 1.5,
) -> list[DiffusionEstimate]:
    """Per-window diffusion estimates D = (tick/mean_mid)**2 * count / window_len.

    Windows are aligned to multiples of ``window_len`` (seconds) since the
    epoch; only windows containing at least one quote are reported.  The
    normalized value divides by the whole-sample mean of D or by the mean over
    the previous ``trailing_days`` distinct trading dates present in the data;
    windows with an empty trailing history get NaN (unavailable), not zero.
    Windows whose mean spread exceeds ``wide_spread_factor`` ticks are flagged.
    """
    if normalization not in ("whole_sample", "trailing_days"):
        raise DomainError(f"unknown normalization '{normalization}'")
    if len(ticks) == 0:
        raise DomainError("empty tick series")
    window_ns = int(round(window_len * 1e9))
    if window_ns <= 0:
        raise DomainError(f"window_len must be > 0, got {window_len}")
    if ticks.times_ns[-1] - ticks.times_ns[0] < window_ns:
        raise DomainError("tick series shorter than one window")

    q_idx = ticks.times_ns // window_ns
    e_idx = events.times_ns // window_ns if len(events) else np.empty(0, np.int64)
    windows = np.unique(q_idx)
    mid = ticks.mid_ticks * (0.5 * ticks.tick_size)
    spread = ticks.ask - ticks.bid

    counts = np.zeros(windows.size, dtype=np.int64)
    if e_idx.size:
        uniq, cnt = np.unique(e_idx, return_counts=True)
        pos = np.searchsorted(windows, uniq)
        inside = (pos < windows.size) & (windows[np.minimum(pos, windows.size - 1)] == uniq)
        counts[pos[inside]] = cnt[inside]

    start_pos = np.searchsorted(q_idx, windows, side="left")
    end_pos = np.searchsorted(q_idx, windows, side="right")
    cum_mid = np.concatenate([[0.0], np.cumsum(mid)])
    cum_spr = np.concatenate([[0.0], np.cumsum(spread)])
    nq = (end_pos - start_pos).astype(float)
    mean_mid = (cum_mid[end_pos] - cum_mid[start_pos]) / nq
    mean_spr = (cum_spr[end_pos] - cum_spr[start_pos]) / nq

    tick = ticks.tick_size
    d = (tick / mean_mid) ** 2 * counts / window_len
    starts = (windows * window_ns).astype("datetime64[ns]")
    dates = starts.astype("datetime64[D]")

    if normalization == "whole_sample":
        base = float(np.mean(d))
        d_norm = d / base if base > 0.0 else np.full_like(d, math.nan)
    else:
        d_norm = np.full_like(d, math.nan)
        uniq_dates = np.unique(dates)
        date_mean = {dd: float(np.mean(d[dates == dd])) for dd in uniq_dates}
        order = {dd: i for i, dd in enumerate(uniq_dates)}
        for j in range(windows.size):
            i = order[dates[j]]
            prev = uniq_dates[max(0, i - trailing_days):i]
            if prev.size == 0:
                continue
            base = float(np.mean([date_mean[dd] for dd in prev]))
            if base > 0.0:
                d_norm[j] = d[j] / base

    wide = mean_spr > wide_spread_factor * tick
    return [
        DiffusionEstimate(
            window_start=starts[j],
            window_len=window_len,
            transition_count=int(counts[j]),
            mean_price=float(mean_mid[j]),
            mean_spread=float(mean_spr[j]),
            d_value=float(d[j]),
            d_norm=float(d_norm[j]),
            wide_spread=bool(wide[j]),
        )
        for j in range(windows.size)
    ]


def diffusion_density(model: ModelParams, d_norm) -> np.ndarray | float:
    """Density of the mean-one normalized diffusion coefficient D = w**2/<w**2>.

    Change of variables from the volatility law: with m2 = <w_tilde**2>,
    p(D) = delta/(2*Gamma(k)) * m2**((alpha_m+2)/2) * D**(alpha_m/2)
           * exp(-(m2*D)**(delta/2)).  Integrates to one with unit mean.
    """
    d = np.asarray(d_norm, dtype=float)
    if np.any(d < 0.0) or not np.all(np.isfinite(d)):
        raise DomainError("d_norm must be finite and >= 0")
    k = model.gamma_shape
    m2 = math.exp(special.gammaln((4.0 + model.alpha_m) / model.delta) - special.gammaln(k))
    c = model.delta / (2.0 * special.gamma(k)) * m2 ** ((model.alpha_m + 2.0) / 2.0)
    with np.errstate(under="ignore"):
        out = c * d ** (model.alpha_m / 2.0) * np.exp(-((m2 * d) ** (model.delta / 2.0)))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Index-band conditioning
# ---------------------------------------------------------------------------


def filter_by_index_band(
    sample: ReturnSample, index: DailySeries, lo: float, hi: float
) -> ReturnSample:
    """Keep returns whose same-date index value lies in [lo, hi].

    Returns with no same-date index value are dropped and counted in a logged
    report.  The result may be empty; downstream normalization rejects that.
    """
    if sample.dates is None:
        raise DomainError("sample carries no dates; cannot condition on an index")
    if not (lo <= hi):
        raise DomainError(f"band [{lo}, {hi}] is empty")
    lookup = dict(zip(index.dates.tolist(), index.closes.tolist()))
    values = np.array([lookup.get(d, math.nan) for d in sample.dates.tolist()])
    missing = np.isnan(values)
    if missing.any():
        log.warning(
            "%s: dropping %d of %d returns with no index value",
            sample.ticker, int(missing.sum()), len(sample),
        )
    keep = ~missing & (values >= lo) & (values <= hi)
    return replace(sample, returns=sample.returns[keep], dates=sample.dates[keep])
