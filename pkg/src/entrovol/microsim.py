"""Tick-level random-walk simulator for an ideally liquid stock.

The mid-price moves by exactly one tick per transition, up with probability
eta.  A window of N transitions then realizes the log return of a binomial
walk; volatility on the window scale is sqrt(N)*(tick/price).  The
double-stochastic generator draws the volatility from the maximum-entropy
family, converts it to a transition count, and runs one walk per window.

Per-window RNG streams are derived from (seed, window_index), so results are
reproducible regardless of evaluation order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import maxent
from .errors import DomainError
from .maxent import ModelParams, VolScale

__all__ = [
    "WalkConfig",
    "WindowSpec",
    "WalkResult",
    "simulate_walk",
    "implied_diffusion",
    "DoubleStochasticResult",
    "simulate_double_stochastic",
    "TickStreamData",
    "double_stochastic_tick_stream",
    "write_returns_csv",
]

log = logging.getLogger(__name__)

_CHUNK = 1 << 20
# windows whose transition count stays below this are outside the
# small-step validity regime and get flagged, not rejected
SMALL_N_FLOOR = 10


@dataclass(frozen=True)
class WalkConfig:
    """Walk parameters: tick size, starting price, up-move probability, step count."""

    tick: float
    price0: float
    eta: float = 0.5
    n_transitions: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.tick) and self.tick > 0.0):
            raise DomainError(f"tick must be > 0, got {self.tick}")
        if not (np.isfinite(self.price0) and self.price0 > 0.0):
            raise DomainError(f"price0 must be > 0, got {self.price0}")
        if self.tick >= self.price0:
            raise DomainError("tick must be smaller than price0")
        if not (0.0 <= self.eta <= 1.0):
            raise DomainError(f"eta must be in [0, 1], got {self.eta}")
        if self.n_transitions < 0:
            raise DomainError(f"n_transitions must be >= 0, got {self.n_transitions}")


@dataclass(frozen=True)
class WindowSpec:
    """Observation-window layout: window length (seconds) and window count."""

    dt: float = 900.0
    windows: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.windows < 1:
            raise DomainError(f"windows must be >= 1, got {self.windows}")


@dataclass(frozen=True)
class WalkResult:
    """One simulated walk: the log return and a path summary (optionally the path)."""

    log_return: float
    terminal_price: float
    min_price: float
    max_price: float
    n_steps: int
    path: np.ndarray | None = None


def simulate_walk(cfg: WalkConfig, rng_seed, keep_path: bool = False) -> WalkResult:
    """Run one binomial mid-price walk of cfg.n_transitions one-tick steps.

    Steps are +tick with probability eta, -tick otherwise, starting at
    price0; the return is ln(terminal/price0).  Raises a DomainError naming
    the first step at which an intermediate price would reach zero.
    """
    rng = np.random.default_rng(rng_seed)
    n = cfg.n_transitions
    # work in signed tick counts: price_k = price0 + tick * s_k, exact integers
    ruin_level = -cfg.price0 / cfg.tick
    s = 0
    s_min = 0
    s_max = 0
    path_chunks = [] if keep_path else None
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        steps = np.where(rng.random(m) < cfg.eta, 1, -1).astype(np.int64)
        cum = np.cumsum(steps) + s
        lo = int(cum.min())
        if lo <= ruin_level:
            ruined = np.nonzero(cum <= ruin_level)[0][0]
            raise DomainError(
                f"price ruin: price reached zero at step {done + int(ruined) + 1} of {n}"
            )
        s_min = min(s_min, lo)
        s_max = max(s_max, int(cum.max()))
        s = int(cum[-1])
        if keep_path:
            path_chunks.append(cum)
        done += m
    terminal = cfg.price0 + cfg.tick * s
    path = None
    if keep_path:
        prices = np.concatenate([[0], *path_chunks]) if path_chunks else np.zeros(1, np.int64)
        path = cfg.price0 + cfg.tick * prices.astype(float)
    return WalkResult(
        log_return=math.log(terminal / cfg.price0),
        terminal_price=terminal,
        min_price=cfg.price0 + cfg.tick * s_min,
        max_price=cfg.price0 + cfg.tick * s_max,
        n_steps=n,
        path=path,
    )


def implied_diffusion(cfg: WalkConfig, dt: float) -> float:
    """Diffusion coefficient (tick/price0)**2 * n_transitions / dt of the walk."""
    if not (np.isfinite(dt) and dt > 0.0):
        raise DomainError(f"dt must be > 0, got {dt}")
    return (cfg.tick / cfg.price0) ** 2 * cfg.n_transitions / dt


def _count_from_vol(w: float, cfg: WalkConfig, n_cap: int) -> int:
    """Transition count implied by the volatility draw, round-half-to-even."""
    n = int(np.rint((w * cfg.price0 / cfg.tick) ** 2))
    if n > n_cap:
        raise DomainError(
            f"volatility draw {w:g} implies {n} transitions (> cap {n_cap}); "
            "use a larger tick or a smaller volatility scale"
        )
    return n


def _window_rng(rng_seed, index: int) -> np.random.Generator:
    return np.random.default_rng([rng_seed, index])


@dataclass(frozen=True)
class DoubleStochasticResult:
    """Per-window draws of the double-stochastic simulation."""

    w_drawn: np.ndarray
    n_transitions: np.ndarray
    log_returns: np.ndarray
    small_n: np.ndarray = field(repr=False)

    def __len__(self):
        return self.log_returns.size

    @property
    def n_small(self) -> int:
        return int(self.small_n.sum())


def simulate_double_stochastic(
    model: ModelParams,
    scale: VolScale,
    cfg_base: WalkConfig,
    spec: WindowSpec,
    rng_seed,
    n_cap: int = 10**8,
) -> DoubleStochasticResult:
    """Simulate windows of a walk whose transition count follows the volatility draw.

    Per window, w is drawn from the maximum-entropy volatility law, the count
    set to N = round((w*price0/tick)**2), and the window return realized as a
    binomial walk of N one-tick steps.  The terminal tick count of such a walk
    is drawn directly from its exact binomial law; the step-by-step path is
    only replayed for the rare windows where an intermediate price could
    plausibly reach zero.  Windows with N below the small-step validity floor
    are flagged in the result.
    """
    k = model.gamma_shape
    inv_delta = 1.0 / model.delta
    w0 = scale.w0
    n_windows = spec.windows
    w_drawn = np.empty(n_windows)
    counts = np.empty(n_windows, dtype=np.int64)
    rets = np.empty(n_windows)
    ruin_ticks = cfg_base.price0 / cfg_base.tick
    for i in range(n_windows):
        rng = _window_rng(rng_seed, i)
        w = w0 * rng.gamma(k, 1.0) ** inv_delta
        n = _count_from_vol(w, cfg_base, n_cap)
        w_drawn[i] = w
        counts[i] = n
        if n == 0:
            rets[i] = 0.0
            continue
        # sub-Gaussian bound on P(min path <= -price0/tick)
        if ruin_ticks * ruin_ticks / (2.0 * n) < 50.0:
            cfg_i = WalkConfig(cfg_base.tick, cfg_base.price0, cfg_base.eta, n)
            rets[i] = simulate_walk(cfg_i, rng).log_return
            continue
        ups = rng.binomial(n, cfg_base.eta)
        terminal = cfg_base.price0 + cfg_base.tick * (2.0 * ups - n)
        if terminal <= 0.0:
            raise DomainError(f"price ruin: window {i} terminal price {terminal} <= 0")
        rets[i] = math.log(terminal / cfg_base.price0)
    small = counts < SMALL_N_FLOOR
    if small.any():
        log.info("double-stochastic run: %d of %d windows below the %d-transition floor",
                 int(small.sum()), n_windows, SMALL_N_FLOOR)
    return DoubleStochasticResult(w_drawn, counts, rets, small)


@dataclass(frozen=True)
class TickStreamData:
    """Synthetic quote stream: timestamps (ns since epoch), bid/ask, and the draws behind it."""

    times_ns: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    tick: float
    window_len: float
    w_drawn: np.ndarray
    counts: np.ndarray


def double_stochastic_tick_stream(
    model: ModelParams,
    scale: VolScale,
    cfg_base: WalkConfig,
    spec: WindowSpec,
    rng_seed,
    start: str | np.datetime64 = "2024-01-02T14:30:00",
    n_cap: int = 10**8,
) -> TickStreamData:
    """Emit the quote stream of an ideally liquid stock under the double-stochastic walk.

    The mid-price is continuous across windows and changes by one tick per
    transition; bid/ask straddle it by half a tick.  Each window contains
    exactly its drawn transition count, plus one refreshed (unchanged) quote
    at the window centre when a window has no transitions, so every window
    carries price information.
    """
    t0 = np.datetime64(start, "ns").astype(np.int64)
    window_ns = int(round(spec.dt * 1e9))
    k = model.gamma_shape
    inv_delta = 1.0 / model.delta
    w0 = scale.w0
    times, mids_ticks = [], []
    w_drawn = np.empty(spec.windows)
    counts = np.empty(spec.windows, dtype=np.int64)
    level = 0  # mid price offset in ticks
    ruin_level = -cfg_base.price0 / cfg_base.tick
    for i in range(spec.windows):
        rng = _window_rng(rng_seed, i)
        w = w0 * rng.gamma(k, 1.0) ** inv_delta
        n = _count_from_vol(w, cfg_base, n_cap)
        w_drawn[i] = w
        counts[i] = n
        w_start = t0 + i * window_ns
        if n == 0:
            times.append(np.array([w_start + window_ns // 2], dtype=np.int64))
            mids_ticks.append(np.array([level], dtype=np.int64))
            continue
        steps = np.where(rng.random(n) < cfg_base.eta, 1, -1).astype(np.int64)
        path = np.cumsum(steps) + level
        if path.min() <= ruin_level:
            raise DomainError(f"price ruin in window {i}; lower the volatility scale")
        level = int(path[-1])
        offs = ((np.arange(n, dtype=np.int64) * 2 + 1) * window_ns) // (2 * n)
        times.append(w_start + offs)
        mids_ticks.append(path)
    times_ns = np.concatenate(times)
    mid = cfg_base.price0 + cfg_base.tick * np.concatenate(mids_ticks).astype(float)
    half = 0.5 * cfg_base.tick
    return TickStreamData(
        times_ns=times_ns,
        bid=mid - half,
        ask=mid + half,
        tick=cfg_base.tick,
        window_len=spec.dt,
        w_drawn=w_drawn,
        counts=counts,
    )


def write_returns_csv(result: DoubleStochasticResult, path) -> None:
    """Write the per-window draws as CSV: window_index,w_drawn,n_transitions,log_return."""
    with open(path, "w", newline="") as fh:
        fh.write("window_index,w_drawn,n_transitions,log_return\n")
        for i in range(len(result)):
            fh.write(
                f"{i},{result.w_drawn[i]:.17g},{result.n_transitions[i]},"
                f"{result.log_returns[i]:.17g}\n"
            )
