"""Monte Carlo generation of synthetic minute series from fitted kernels:
the synchronized two-variable engine, a single-variable engine used by the
parameter search, back-transformation to continuous values and a report
comparing synthetic statistics with a reference battery."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .copulas import sample_copula
from .core import IndexedKernel
from .errors import ParameterError
from .market_data import autocorrelation, cross_correlation_battery, jarque_bera
from .triplet import (
    ConditioningCell,
    EmpiricalInverse,
    ModelView,
    TripletKernel,
    advance_carry,
)

__all__ = [
    "SimConfig",
    "SynthPath",
    "backtransform",
    "simulate_path",
    "simulate_univariate",
    "validate_stylized_facts",
]


@dataclass(frozen=True)
class SimConfig:
    """Settings for one synthetic replication."""

    length_minutes: int
    seed: int = 0
    n_replications: int = 1
    backtransform: str = "empirical"  # or "representative"
    initial: Optional[ConditioningCell] = None
    s0: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        if self.length_minutes < 1:
            raise ParameterError("length must be >= 1 minute")
        if self.n_replications < 1:
            raise ParameterError("need at least one replication")
        if self.backtransform not in ("empirical", "representative"):
            raise ParameterError(f"unknown backtransform {self.backtransform!r}")


@dataclass
class SynthPath:
    """One synthetic joint path. ``r``/``v`` are the minute series (piecewise
    constant between each variable's own events); ``S``/``V`` are the
    exp-cumsum reconstructions with S[0] = s0. ``events`` holds the generated
    synchronized jump record."""

    r: np.ndarray
    v: np.ndarray
    S: np.ndarray
    V: np.ndarray
    events: dict
    fallback_events: int = 0
    forced_holds: int = 0


def backtransform(state: int, u: float, inv: EmpiricalInverse) -> float:
    """Empirical quantile of the state's sample at level u, interpolating
    between order statistics; falls back to the state representative when the
    state carries no sample."""
    sample = inv.samples[state]
    if sample.size == 0:
        warnings.warn(f"state {state} has no sample; using representative value")
        return float(inv.grid.representatives[state])
    if sample.size == 1:
        return float(sample[0])
    pos = u * (sample.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, sample.size - 1)
    frac = pos - lo
    return float(sample[lo] * (1.0 - frac) + sample[hi] * frac)


def _continuous_value(value, state, rng, inv, grid, mode):
    """Continuous value for a simulated signed state value; mirrored states
    draw from the opposite-sign sample and flip."""
    if mode == "representative" or inv is None:
        return float(value)
    drawn = backtransform(int(state), float(rng.random()), inv)
    rep = grid.representatives[int(state)]
    if value != 0.0 and np.sign(rep) != 0 and np.sign(value) != np.sign(rep):
        return -drawn
    return drawn


def simulate_path(tk: TripletKernel, cfg: SimConfig) -> SynthPath:
    """Generate one synchronized path: draw the sojourn from the waiting-time
    law, the modulus pair through the copula, signs independently; a variable
    changes state only when the drawn value differs from its current one. A
    draw leaving both variables unchanged is re-drawn once, then the event
    advances time with no state change (counted)."""
    rng = np.random.default_rng(cfg.seed)
    view = ModelView(tk)
    length = cfg.length_minutes
    if cfg.initial is not None:
        i_state, v_state = cfg.initial.i, cfg.initial.v
        b_j, b_v = cfg.initial.b_j, cfg.initial.b_v
    else:
        marg = tk.cond_wait.counts.sum(axis=(2, 3, 4)).astype(float)
        if marg.sum() <= 0:
            marg = np.ones_like(marg)
        flat = rng.choice(marg.size, p=(marg / marg.sum()).ravel())
        i_state, v_state = np.unravel_index(flat, marg.shape)
        b_j = b_v = 0
    i_val = float(tk.kernel_j.grid.representatives[i_state])
    v_val = float(tk.kernel_v.grid.representatives[v_state])
    wj = wv = 0.0
    dj = dv = 1.0
    r = np.empty(length)
    v = np.empty(length)
    ev = {k: [] for k in ("n", "time", "j_state", "v_state", "b_j", "b_v",
                          "x_bin", "w_bin", "j_value", "v_value")}
    cur_r = _continuous_value(i_val, i_state, rng, tk.inverse_j,
                              tk.kernel_j.grid, cfg.backtransform)
    cur_v = _continuous_value(v_val, v_state, rng, tk.inverse_v,
                              tk.kernel_v.grid, cfg.backtransform)
    t = 0
    n_event = 0
    fallbacks = 0
    forced = 0
    wait_cube = tk.cond_wait.resolved_cube()
    while t < length:
        xj = (wj + i_val * i_val) / dj
        xv = (wv + v_val * v_val) / dv
        xb = int(tk.cond_wait.x_bin(xj))
        wb = int(tk.cond_wait.w_bin(xv))
        kxb = int(tk.kernel_j.index_bin(xj))
        kwb = int(tk.kernel_v.index_bin(xv))
        if tk.cond_wait.counts[i_state, v_state, xb, wb].sum() == 0:
            fallbacks += 1
        ev["n"].append(n_event)
        ev["time"].append(t)
        ev["j_state"].append(int(i_state))
        ev["v_state"].append(int(v_state))
        ev["b_j"].append(int(b_j))
        ev["b_v"].append(int(b_v))
        ev["x_bin"].append(xb)
        ev["w_bin"].append(wb)
        ev["j_value"].append(i_val)
        ev["v_value"].append(v_val)
        cdf = np.cumsum(wait_cube[i_state, v_state, xb, wb])
        soj = int(np.searchsorted(cdf, rng.random(), side="left")) + 1
        soj = min(soj, tk.t_max)
        end = min(t + soj, length)
        r[t:end] = cur_r
        v[t:end] = cur_v
        new_j_val, new_v_val = _draw_event_values(
            tk, rng, i_state, v_state, kxb, kwb, soj, b_j, b_v)
        if new_j_val == i_val and new_v_val == v_val:
            new_j_val, new_v_val = _draw_event_values(
                tk, rng, i_state, v_state, kxb, kwb, soj, b_j, b_v)
            if new_j_val == i_val and new_v_val == v_val:
                forced += 1
        wj, dj = advance_carry(tk.kernel_j.lam, wj, dj, i_val, soj)
        wv, dv = advance_carry(tk.kernel_v.lam, wv, dv, v_val, soj)
        if new_j_val != i_val:
            b_j = 0
            i_val = new_j_val
            i_state = int(view.states_j(i_val))
            cur_r = _continuous_value(i_val, i_state, rng, tk.inverse_j,
                                      tk.kernel_j.grid, cfg.backtransform)
        else:
            b_j += soj
        if new_v_val != v_val:
            b_v = 0
            v_val = new_v_val
            v_state = int(view.states_v(v_val))
            cur_v = _continuous_value(v_val, v_state, rng, tk.inverse_v,
                                      tk.kernel_v.grid, cfg.backtransform)
        else:
            b_v += soj
        t += soj
        n_event += 1
    with np.errstate(over="ignore"):
        # exp-cumsum reconstruction; a drifting volume path may saturate to inf
        S = cfg.s0 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
        V = cfg.v0 * np.exp(np.concatenate([[0.0], np.cumsum(v)]))
    events = {k: np.asarray(vals) for k, vals in ev.items()}
    return SynthPath(r=r, v=v, S=S, V=V, events=events,
                     fallback_events=fallbacks, forced_holds=forced)


def _draw_event_values(tk, rng, i_state, v_state, kxb, kwb, soj, b_j, b_v):
    """One copula-coupled (value, value) draw for the event ending a sojourn."""
    u_j, u_v = sample_copula(tk.copula, 1, rng)
    tau_j = min(soj + b_j, tk.kernel_j.t_max)
    tau_v = min(soj + b_v, tk.kernel_v.t_max)
    kj = tk._mod_j.invert(i_state, kxb, tau_j, float(u_j[0]))
    kv = tk._mod_v.invert(v_state, kwb, tau_v, float(u_v[0]))
    mod_j = float(tk._mod_j.moduli[min(kj, tk._mod_j.moduli.size - 1)])
    mod_v = float(tk._mod_v.moduli[min(kv, tk._mod_v.moduli.size - 1)])
    val_j = 0.0 if mod_j == 0.0 else (mod_j if rng.random() < tk.signs.p_j else -mod_j)
    val_v = 0.0 if mod_v == 0.0 else (mod_v if rng.random() < tk.signs.p_v else -mod_v)
    return val_j, val_v


# ---------------------------------------------------------------------------
# single-variable engine (used by the parameter search)


def simulate_univariate(kernel: IndexedKernel, minutes: Optional[int], seed: int,
                        inverse: Optional[EmpiricalInverse] = None,
                        initial_state: Optional[int] = None,
                        n_events: Optional[int] = None):
    """Simulate one variable from its indexed kernel: at each event the
    (next state, sojourn) pair is drawn jointly from the conditioning cell.
    Runs until ``minutes`` are covered or ``n_events`` jumps were generated,
    whichever is given. Returns (minute series, states, times)."""
    if minutes is None and n_events is None:
        raise ParameterError("give minutes or n_events")
    rng = np.random.default_rng(seed)
    s, nb, _, t_max = kernel.pmf.shape
    flat = np.empty((s, nb, s * t_max))
    for i in range(s):
        for b in range(nb):
            flat[i, b] = np.cumsum(kernel.cell_pmf(i, b)[0].ravel())
    if initial_state is None:
        occupancy = kernel.counts.sum(axis=(1, 2, 3)).astype(float)
        if occupancy.sum() <= 0:
            occupancy = np.ones(s)
        state = int(rng.choice(s, p=occupancy / occupancy.sum()))
    else:
        state = int(initial_state)
    reps = kernel.grid.representatives
    w, d = 0.0, 1.0
    t = 0
    out = np.empty(minutes) if minutes is not None else None
    states, times = [], []
    while (minutes is None or t < minutes) and (n_events is None
                                                or len(states) < n_events):
        states.append(state)
        times.append(t)
        x = (w + reps[state] * reps[state]) / d
        b = int(kernel.index_bin(x))
        pos = int(np.searchsorted(flat[state, b], rng.random(), side="left"))
        pos = min(pos, s * t_max - 1)
        nxt, soj = pos // t_max, pos % t_max + 1
        if out is not None:
            if inverse is not None:
                val = backtransform(state, float(rng.random()), inverse)
            else:
                val = float(reps[state])
            out[t:min(t + soj, minutes)] = val
        w, d = advance_carry(kernel.lam, w, d, reps[state], soj)
        state = int(nxt)
        t += soj
    if out is not None:
        out = out[:min(t, minutes)]
    return out, np.asarray(states, dtype=np.int64), np.asarray(times, dtype=np.int64)


# ---------------------------------------------------------------------------
# stylized-fact comparison


def validate_stylized_facts(paths, reference: Optional[dict] = None,
                            max_lag: int = 100, alpha: float = 0.01) -> dict:
    """Run the statistics battery over synthetic paths and set the flags the
    model is expected to reproduce: non-Gaussian returns, vanishing (r, v)
    correlation and positive modulus cross-correlation. When a reference
    battery (from real data) is supplied its values are placed side by side."""
    if not paths:
        raise ParameterError("need at least one path")
    per_path = []
    for p in paths:
        n = p.r.size
        lag = min(max_lag, n - 1)
        jb_stat, jb_p, jb_rej = jarque_bera(p.r, alpha)
        cross = cross_correlation_battery(p.r, p.v)
        per_path.append({
            "n": n,
            "jarque_bera": {"statistic": jb_stat, "p_value": jb_p, "reject": jb_rej},
            "cross_correlation": cross,
            "acf_abs_r": autocorrelation(np.abs(p.r), lag).tolist(),
            "acf_abs_v": autocorrelation(np.abs(p.v), lag).tolist(),
        })
    n = per_path[0]["n"]
    band = 3.0 / np.sqrt(n)
    # flags use the per-pair correlation averaged over replications
    rho = {}
    for row in per_path[0]["cross_correlation"]:
        pair = row["pair"]
        rho[pair] = float(np.mean([
            next(r["rho"] for r in p["cross_correlation"] if r["pair"] == pair)
            for p in per_path]))
    flags = {
        "returns_non_gaussian": all(p["jarque_bera"]["reject"] for p in per_path),
        "rv_correlation_insignificant": bool(abs(rho["r,v"]) < band),
        "modulus_correlation_positive_significant": bool(rho["|r|,|v|"] > band),
    }
    report = {"paths": per_path, "flags": flags, "three_se_band": float(band)}
    if reference is not None:
        ref_rho = {row["pair"]: row["rho"]
                   for row in reference.get("cross_correlation", [])}
        report["reference"] = {
            "cross_correlation": ref_rho,
            "jarque_bera": reference.get("jarque_bera"),
        }
        report["side_by_side"] = {
            pair: {"real": ref_rho.get(pair), "synthetic": rho.get(pair)}
            for pair in rho
        }
    return report
