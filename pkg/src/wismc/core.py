"""State discretization, jump chains, the volatility index process and
estimation of the per-variable indexed semi-Markov kernel."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, EstimationError, ParameterError

__all__ = [
    "StateGrid",
    "JumpChain",
    "ScoreSpec",
    "IndexParams",
    "IndexedKernel",
    "WaitingTimeDist",
    "make_state_grid",
    "discretize",
    "ewma_score",
    "index_at_jump",
    "index_at_time",
    "index_trajectory",
    "index_at_times",
    "shift_check",
    "estimate_kernel",
]


# ---------------------------------------------------------------------------
# state grids


@dataclass(frozen=True)
class StateGrid:
    """Partition of the real line into states.

    ``edges`` has length ``n_states + 1`` with ``edges[0] == -inf`` and
    ``edges[-1] == +inf`` so every finite value maps to exactly one state.
    ``representatives`` holds one real value per state; it is used as the
    state's value in the index process and as the seed for path
    reconstruction. Bins are left-closed, right-open except the last.
    """

    edges: np.ndarray
    representatives: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        reps = np.asarray(self.representatives, dtype=float)
        if edges.ndim != 1 or edges.size < 3:
            raise ParameterError("need at least 2 states (3 edges)")
        if np.any(np.diff(edges) <= 0):
            raise ParameterError("state edges must be strictly increasing")
        if not np.isinf(edges[0]) or not np.isinf(edges[-1]):
            raise ParameterError("outermost edges must be -inf/+inf")
        if reps.size != edges.size - 1:
            raise ParameterError("need one representative per state")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "representatives", reps)

    @property
    def n_states(self) -> int:
        return self.edges.size - 1

    def state_of(self, values) -> np.ndarray:
        """Map values to state indices (vectorized)."""
        values = np.asarray(values, dtype=float)
        return np.clip(np.searchsorted(self.edges, values, side="right") - 1,
                       0, self.n_states - 1)

    def moduli(self):
        """Sorted unique absolute representative values with, per state, the
        position of its modulus in that sorted list."""
        mods = np.abs(self.representatives)
        uniq = np.unique(mods)
        pos = np.searchsorted(uniq, mods)
        return uniq, pos


def make_state_grid(values, n_states: int, center_zero_bin: bool = True) -> StateGrid:
    """Build a quantile state grid from observed values.

    For odd ``n_states`` (and ``center_zero_bin``) a dedicated bin bracketing
    zero takes roughly ``1/n_states`` of the mass and the remaining mass is
    split into equal-count bins on each side. Representatives are in-bin
    medians.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2 * n_states:
        raise EstimationError("too few observations for the requested state count")
    if n_states % 2 == 1 and center_zero_bin:
        half = np.quantile(np.abs(values), 1.0 / n_states)
        if half <= 0:
            half = np.finfo(float).tiny
        k = (n_states - 1) // 2
        lo = values[values < -half]
        hi = values[values >= half]
        if lo.size < k or hi.size < k:
            raise EstimationError("not enough mass outside the center bin")
        lo_edges = np.quantile(lo, np.linspace(0, 1, k + 1))[1:-1]
        hi_edges = np.quantile(hi, np.linspace(0, 1, k + 1))[1:-1]
        interior = np.concatenate([lo_edges, [-half, half], hi_edges])
    else:
        interior = np.quantile(values, np.linspace(0, 1, n_states + 1))[1:-1]
    interior = np.unique(interior)
    if interior.size != n_states - 1:
        raise EstimationError("degenerate quantile edges; reduce the state count")
    edges = np.concatenate([[-np.inf], interior, [np.inf]])
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, n_states - 1)
    reps = np.empty(n_states)
    for s in range(n_states):
        sel = values[idx == s]
        reps[s] = np.median(sel) if sel.size else 0.5 * (edges[s] + edges[s + 1])
    return StateGrid(edges=edges, representatives=reps)


# ---------------------------------------------------------------------------
# jump chains


@dataclass
class JumpChain:
    """Marked point process of state changes.

    ``states`` are grid indices, ``times`` the integer minute of each change
    (strictly increasing). Position ``history_len`` is the chain's "current
    time zero" when an explicit pre-history is attached; the default 0 means
    the whole record is the estimation sample.
    """

    states: np.ndarray
    times: np.ndarray
    grid: StateGrid
    history_len: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.states.size != self.times.size:
            raise ContractViolation("states and times must have equal length")
        if self.states.size:
            if np.any(np.diff(self.times) <= 0):
                raise ContractViolation("jump times must be strictly increasing")
            if np.any(np.diff(self.states) == 0):
                raise ContractViolation("consecutive states must differ (a jump changes the state)")
        if not 0 <= self.history_len <= max(self.states.size - 1, 0):
            raise ContractViolation("history length out of range")

    def __len__(self) -> int:
        return self.states.size

    @property
    def values(self) -> np.ndarray:
        """Representative value at each jump."""
        return self.grid.representatives[self.states]

    def sojourns(self) -> np.ndarray:
        return np.diff(self.times)


def discretize(values, grid: StateGrid) -> JumpChain:
    """Bin a series into states and collapse equal consecutive states into
    visits; times record the position index of each state change."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    if values.size == 0:
        return JumpChain(states=np.empty(0, np.int64), times=np.empty(0, np.int64), grid=grid)
    idx = grid.state_of(values)
    change = np.flatnonzero(np.diff(idx) != 0) + 1
    starts = np.concatenate([[0], change])
    return JumpChain(states=idx[starts], times=starts.astype(np.int64), grid=grid)


# ---------------------------------------------------------------------------
# score functions and the index process


@dataclass(frozen=True)
class ScoreSpec:
    """Reward-rate function of the index process.

    ``ewma-squares`` scores a past state value ``i`` observed ``t - a``
    minutes ago as ``lam**(t-a) * i**2 / normalizer`` where the normalizer is
    the geometric sum over the window span plus one, so the index is a
    weighted average of squared state values. A ``custom`` score supplies
    ``func(value, t, a)`` directly; it satisfies the homogeneity requirement
    only if it depends on ``(value, t - a)`` alone.
    """

    kind: str = "ewma-squares"
    lam: float = 0.97
    func: Optional[Callable[[float, int, int], float]] = None

    def __post_init__(self):
        if self.kind not in ("ewma-squares", "custom"):
            raise ParameterError(f"unknown score kind {self.kind!r}")
        if self.kind == "ewma-squares" and not 0.0 < self.lam <= 1.0:
            raise ParameterError("lambda must lie in (0, 1]")
        if self.kind == "custom" and self.func is None:
            raise ParameterError("custom score requires func")


def _geom_sum(lam: float, n_terms: int) -> float:
    """1 + lam + ... + lam**(n_terms-1)."""
    if n_terms <= 0:
        return 0.0
    if lam == 1.0:
        return float(n_terms)
    return (1.0 - lam ** n_terms) / (1.0 - lam)


def ewma_score(j_value: float, elapsed: int, lam: float, normalizer: float) -> float:
    """Decayed squared state value: ``lam**elapsed * j_value**2 / normalizer``."""
    if elapsed < 0:
        raise ContractViolation("elapsed time must be non-negative")
    if normalizer <= 0:
        raise ContractViolation("normalizer must be positive")
    if not 0.0 < lam <= 1.0:
        raise ParameterError("lambda must lie in (0, 1]")
    return (lam ** elapsed) * j_value * j_value / normalizer


def _score_callable(score: ScoreSpec, span: int) -> Callable[[float, int, int], float]:
    """Bind a score to a window: ewma gets its span normalizer here."""
    if score.kind == "custom":
        return score.func
    norm = _geom_sum(score.lam, span + 1)
    lam = score.lam
    return lambda value, t, a: ewma_score(value, t - a, lam, norm)


def _index_sum(values: np.ndarray, times: np.ndarray, pos: int, t: int,
               score: ScoreSpec) -> float:
    """Accumulated reward at time ``t`` where ``pos`` is the last jump with
    ``times[pos] <= t``: every minute of every completed or partial sojourn
    scores the then-holding state, plus the current-state term at ``t``."""
    f = _score_callable(score, int(t - times[0]))
    total = 0.0
    for k in range(pos):
        for a in range(int(times[k]), int(times[k + 1])):
            total += f(values[k], t, a)
    for a in range(int(times[pos]), int(t)):
        total += f(values[pos], t, a)
    total += f(values[pos], t, t)
    return total


def index_at_jump(chain: JumpChain, n: int, score: ScoreSpec) -> float:
    """Index value at the n-th recorded jump (position in the chain arrays)."""
    if not 0 <= n < len(chain):
        raise ContractViolation("jump position out of range")
    values, times = chain.values, chain.times
    return _index_sum(values, times, n, int(times[n]), score)


def index_at_time(chain: JumpChain, t: int, score: ScoreSpec) -> float:
    """Index value at an arbitrary minute ``t``; coincides with
    :func:`index_at_jump` when ``t`` is a jump time."""
    times = chain.times
    if t < times[0]:
        raise ContractViolation("time precedes the recorded history")
    pos = int(np.searchsorted(times, t, side="right")) - 1
    return _index_sum(chain.values, times, pos, int(t), score)


class _EwmaTracker:
    """Incremental evaluation of the ewma-squares index.

    Carries ``w`` (decayed sum of squared past values) and ``d`` (decayed
    count plus the current minute) so that the index at the current minute is
    ``(w + current_value**2) / d``. ``advance(value, dt)`` rolls both forward
    ``dt`` minutes during which ``value`` holds.
    """

    __slots__ = ("lam", "w", "d")

    def __init__(self, lam: float, w: float = 0.0, d: float = 1.0):
        self.lam = lam
        self.w = w
        self.d = d

    def advance(self, value: float, dt: int) -> None:
        lam = self.lam
        g = _geom_sum(lam, dt)
        decay = lam ** dt
        self.w = decay * self.w + value * value * (g * lam if lam < 1.0 else float(dt))
        self.d = decay * self.d + g if lam < 1.0 else self.d + dt

    def value(self, current_value: float) -> float:
        return (self.w + current_value * current_value) / self.d

    def state(self):
        return self.w, self.d


def index_trajectory(chain: JumpChain, score: ScoreSpec) -> np.ndarray:
    """Index value at every jump of the chain (fast incremental path)."""
    if score.kind != "ewma-squares":
        return np.array([index_at_jump(chain, n, score) for n in range(len(chain))])
    values, times = chain.values, chain.times
    out = np.empty(len(chain))
    trk = _EwmaTracker(score.lam)
    for n in range(len(chain)):
        if n > 0:
            trk.advance(values[n - 1], int(times[n] - times[n - 1]))
        out[n] = trk.value(values[n])
    return out


def index_at_times(chain: JumpChain, query_times: np.ndarray, score: ScoreSpec) -> np.ndarray:
    """Index value at each (sorted, integer) query time; the holding state is
    the last jumped-to state at or before each time."""
    query_times = np.asarray(query_times, dtype=np.int64)
    if score.kind != "ewma-squares":
        return np.array([index_at_time(chain, int(t), score) for t in query_times])
    values, times = chain.values, chain.times
    if query_times.size and query_times[0] < times[0]:
        raise ContractViolation("time precedes the recorded history")
    out = np.empty(query_times.size)
    trk = _EwmaTracker(score.lam)
    pos = 0
    now = int(times[0])
    for qi, t in enumerate(query_times):
        t = int(t)
        while pos + 1 < len(chain) and times[pos + 1] <= t:
            trk.advance(values[pos], int(times[pos + 1]) - now)
            now = int(times[pos + 1])
            pos += 1
        if t > now:
            trk.advance(values[pos], t - now)
            now = t
        out[qi] = trk.value(values[pos])
    return out


def shift_check(chain: JumpChain, score: ScoreSpec, tol: float = 1e-10) -> bool:
    """Translate the window so its last jump lands at time zero and re-derive
    the index there; a score depending only on elapsed time must reproduce the
    original value exactly."""
    if len(chain) < 1:
        raise ContractViolation("empty window")
    last = index_at_jump(chain, len(chain) - 1, score)
    shifted = JumpChain(states=chain.states.copy(),
                        times=chain.times - chain.times[-1],
                        grid=chain.grid)
    again = index_at_jump(shifted, len(shifted) - 1, score)
    return abs(last - again) <= tol


# ---------------------------------------------------------------------------
# kernel estimation


@dataclass(frozen=True)
class IndexParams:
    """Estimation settings for one variable's kernel."""

    lam: float = 0.97
    n_index_bins: int = 5
    index_edges: Optional[np.ndarray] = None
    t_max: Optional[int] = None
    sojourn_quantile: float = 0.995

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ParameterError("lambda must lie in (0, 1]")
        if self.index_edges is None and self.n_index_bins < 1:
            raise ParameterError("need at least one index bin")


def _quantile_edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-mass interior edges, deduplicated, with open outer bins."""
    if n_bins == 1:
        return np.array([-np.inf, np.inf])
    interior = np.unique(np.quantile(values, np.linspace(0, 1, n_bins + 1)[1:-1]))
    return np.concatenate([[-np.inf], interior, [np.inf]])


@dataclass
class WaitingTimeDist:
    """Cumulative sojourn law per (state, index-bin), truncated at ``t_max``
    with the overflow mass lumped into the last slot."""

    cdf: np.ndarray  # [s, B, t_max], slot k holds P(X <= k+1)
    index_edges: np.ndarray

    def at(self, i: int, b: int, t: int) -> float:
        if t < 1:
            return 0.0
        return float(self.cdf[i, b, min(t, self.cdf.shape[2]) - 1])


@dataclass
class IndexedKernel:
    """Estimated law of (next state, sojourn) given (state, index bin).

    ``pmf[i, b, j, k]`` is the probability of jumping from state ``i`` with
    index in bin ``b`` to state ``j`` after ``k + 1`` minutes. Rows of
    occupied cells sum to one. Cells never observed fall back first to the
    state's law pooled over index bins, then to the global law.
    """

    grid: StateGrid
    lam: float
    index_edges: np.ndarray
    t_max: int
    counts: np.ndarray
    pmf: np.ndarray

    def __post_init__(self):
        self.index_edges = np.asarray(self.index_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        self.pmf = np.asarray(self.pmf, dtype=float)
        s, b = self.grid.n_states, self.n_index_bins
        if self.pmf.shape != (s, b, s, self.t_max):
            raise ParameterError("pmf shape does not match grid/bins/t_max")
        self._cell_total = self.counts.sum(axis=(2, 3))
        state_tot = self.counts.sum(axis=(1, 2, 3), keepdims=False)
        self._state_pmf = np.zeros((s, s, self.t_max))
        pooled = self.counts.sum(axis=1)
        nz = state_tot > 0
        self._state_pmf[nz] = pooled[nz] / state_tot[nz, None, None]
        g = self.counts.sum(axis=(0, 1))
        self._global_pmf = g / g.sum() if g.sum() > 0 else np.full((s, self.t_max), 1.0 / (s * self.t_max))

    @property
    def n_index_bins(self) -> int:
        return self.index_edges.size - 1

    @property
    def occupied(self) -> np.ndarray:
        return self._cell_total > 0

    def index_bin(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip(np.searchsorted(self.index_edges, x, side="right") - 1,
                       0, self.n_index_bins - 1)

    def cell_pmf(self, i: int, b: int):
        """Joint (next state, sojourn) pmf with the fallback ladder; returns
        (pmf[s, t_max], level) where level 0 = cell, 1 = state, 2 = global."""
        if self._cell_total[i, b] > 0:
            return self.pmf[i, b], 0
        if self._state_pmf[i].sum() > 0:
            return self._state_pmf[i], 1
        return self._global_pmf, 2

    def sojourn_pmf(self, i: int, b: int) -> np.ndarray:
        """Marginal sojourn law h(i, x; t) for the cell (with fallback)."""
        cell, _ = self.cell_pmf(i, b)
        return cell.sum(axis=0)

    def waiting_time_dist(self) -> WaitingTimeDist:
        h = self.pmf.sum(axis=2)
        return WaitingTimeDist(cdf=np.cumsum(h, axis=2), index_edges=self.index_edges)


def estimate_kernel(chain: JumpChain, params: IndexParams,
                    score: Optional[ScoreSpec] = None):
    """Count transitions (state, index-bin) -> (next state, sojourn) along the
    chain and normalize per cell. Returns the kernel and its cumulative
    waiting-time law. The index at each jump uses all earlier jumps of the
    chain as history."""
    if len(chain) < 2:
        raise EstimationError("need at least one transition")
    if score is None:
        score = ScoreSpec(kind="ewma-squares", lam=params.lam)
    idx = index_trajectory(chain, score)
    if params.index_edges is not None:
        edges = np.asarray(params.index_edges, dtype=float)
    else:
        edges = _quantile_edges(idx[:-1], params.n_index_bins)
    nbins = edges.size - 1
    soj = chain.sojourns()
    if params.t_max is not None:
        t_max = int(params.t_max)
    else:
        t_max = max(int(np.quantile(soj, params.sojourn_quantile)), 1)
    s = chain.grid.n_states
    counts = np.zeros((s, nbins, s, t_max), dtype=np.int64)
    bins = np.clip(np.searchsorted(edges, idx[:-1], side="right") - 1, 0, nbins - 1)
    tslot = np.minimum(soj, t_max) - 1
    np.add.at(counts, (chain.states[:-1], bins, chain.states[1:], tslot), 1)
    totals = counts.sum(axis=(2, 3), keepdims=True)
    pmf = np.divide(counts, totals, out=np.zeros_like(counts, dtype=float),
                    where=totals > 0)
    kernel = IndexedKernel(grid=chain.grid, lam=params.lam, index_edges=edges,
                           t_max=t_max, counts=counts, pmf=pmf)
    return kernel, kernel.waiting_time_dist()
