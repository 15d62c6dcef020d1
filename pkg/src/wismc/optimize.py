"""Grid search over (state count, memory parameter) minimizing the mean
absolute percentage error between the real and simulated autocorrelation of
absolute returns."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import IndexParams, ScoreSpec, discretize, estimate_kernel, make_state_grid
from .errors import ParameterError, WismcError
from .market_data import autocorrelation
from .simulate import simulate_univariate
from .triplet import EmpiricalInverse

__all__ = ["GridSpec", "OptResult", "mape", "grid_search"]


@dataclass(frozen=True)
class GridSpec:
    state_counts: tuple
    lambdas: tuple
    max_lag: int = 100
    reps_per_point: int = 5
    n_index_bins: int = 5
    epsilon: Optional[float] = None  # early stop on state-count improvement
    sim_minutes: Optional[int] = None  # default: length of the input series

    def __post_init__(self):
        if not self.state_counts or not self.lambdas:
            raise ParameterError("state_counts and lambdas must be non-empty")
        if self.max_lag < 1:
            raise ParameterError("max_lag must be >= 1")
        if any(not 0.0 < l <= 1.0 for l in self.lambdas):
            raise ParameterError("lambdas must lie in (0, 1]")


@dataclass
class OptResult:
    records: list  # dicts: s, lam, mape, runtime_s, failed, error
    best: Optional[dict]

    def as_dict(self) -> dict:
        return {"records": self.records, "best": self.best}

    @classmethod
    def from_dict(cls, doc: dict) -> "OptResult":
        return cls(records=list(doc["records"]), best=doc.get("best"))


def mape(real_acf, synth_acf, max_lag: Optional[int] = None) -> float:
    """Mean absolute percentage error over lags 1..max_lag; lags where the
    real value vanishes are excluded with a warning."""
    real = np.asarray(real_acf, dtype=float)
    synth = np.asarray(synth_acf, dtype=float)
    lag = max_lag if max_lag is not None else min(real.size, synth.size) - 1
    if real.size <= lag or synth.size <= lag:
        raise ParameterError("ACF sequences do not cover the lag range")
    r = real[1:lag + 1]
    s = synth[1:lag + 1]
    usable = r != 0.0
    if not np.all(usable):
        warnings.warn(f"excluded {int((~usable).sum())} lags with zero real ACF")
    if not np.any(usable):
        raise ParameterError("no usable lags: real ACF vanishes everywhere")
    return float(100.0 * np.mean(np.abs(r[usable] - s[usable]) / np.abs(r[usable])))


def grid_search(values, spec: GridSpec, seed: int = 0) -> OptResult:
    """For each (s, lam): discretize, estimate the kernel, simulate
    ``reps_per_point`` replications, average the absolute-value ACF and score
    it against the real one. Deterministic for a fixed seed; failed points
    are recorded and skipped. With ``epsilon`` set, the search stops growing
    the state count once the improvement falls below it."""
    values = np.asarray(getattr(values, "values", values), dtype=float)
    real_acf = autocorrelation(np.abs(values), spec.max_lag)
    minutes = spec.sim_minutes or values.size
    records = []
    best_by_s = {}
    for s_i, s in enumerate(sorted(spec.state_counts)):
        for lam in spec.lambdas:
            t0 = time.time()
            rec = {"s": int(s), "lam": float(lam), "mape": None,
                   "runtime_s": None, "failed": False, "error": None}
            try:
                grid = make_state_grid(values, s)
                chain = discretize(values, grid)
                kernel, _ = estimate_kernel(
                    chain, IndexParams(lam=lam, n_index_bins=spec.n_index_bins),
                    ScoreSpec(kind="ewma-squares", lam=lam))
                inverse = EmpiricalInverse.from_data(values, grid)
                acfs = []
                for rep in range(spec.reps_per_point):
                    child = np.random.SeedSequence(
                        [seed, s, rep, int(round(lam * 10 ** 9))]).generate_state(1)[0]
                    r_syn, _, _ = simulate_univariate(kernel, minutes, int(child),
                                                      inverse=inverse)
                    acfs.append(autocorrelation(np.abs(r_syn), spec.max_lag))
                rec["mape"] = mape(real_acf, np.mean(acfs, axis=0), spec.max_lag)
            except WismcError as exc:
                rec["failed"] = True
                rec["error"] = str(exc)
            rec["runtime_s"] = time.time() - t0
            records.append(rec)
        scored = [r["mape"] for r in records if r["s"] == s and not r["failed"]]
        if scored:
            best_by_s[s] = min(scored)
        if spec.epsilon is not None and s_i > 0 and s in best_by_s:
            prev = min(v for k, v in best_by_s.items() if k < s)
            if prev - best_by_s[s] < spec.epsilon:
                break
    done = [r for r in records if not r["failed"]]
    best = min(done, key=lambda r: r["mape"]) if done else None
    return OptResult(records=records, best=best)
