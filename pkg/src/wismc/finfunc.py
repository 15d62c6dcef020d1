"""Closed-form functions of a fitted triplet kernel: one-step marginals,
modulus covariance and correlation, mutual information, and the joint
first-passage-time survival function (exact recursion and Monte Carlo)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .copulas import sample_copula
from .errors import ContractViolation, ParameterError, ResourceLimitError
from .triplet import ConditioningCell, ModelView, TripletKernel, advance_carry

__all__ = [
    "CovarianceResult",
    "FptQuery",
    "FptResult",
    "one_step_marginal_return",
    "one_step_marginal_volume",
    "joint_modulus_pmf",
    "modulus_covariance",
    "signed_covariance",
    "mutual_information",
    "fpt_survival_recursive",
    "fpt_survival_mc",
]


# ---------------------------------------------------------------------------
# one-step marginals and dependence measures


def _one_step_marginal(tk, cell, threshold, side):
    h = tk.waiting_pmf(cell)
    cdf = tk.modulus_cdf_j if side == "j" else tk.modulus_cdf_v
    p = tk.signs.p_j if side == "j" else tk.signs.p_v
    acc = 0.0
    for t in range(1, tk.t_max + 1):
        if h[t - 1] <= 0.0:
            continue
        acc += h[t - 1] * cdf(cell, t, abs(threshold))
    if threshold >= 0:
        return 1.0 - p * (1.0 - acc)
    return (1.0 - p) * (1.0 - acc)


def one_step_marginal_return(tk: TripletKernel, cell: ConditioningCell,
                             threshold: float) -> float:
    """P(next return value <= threshold | cell), unconditional on when the
    next transition happens."""
    return _one_step_marginal(tk, cell, threshold, "j")


def one_step_marginal_volume(tk: TripletKernel, cell: ConditioningCell,
                             threshold: float) -> float:
    return _one_step_marginal(tk, cell, threshold, "v")


def joint_modulus_pmf(tk: TripletKernel, cell: ConditioningCell):
    """(moduli_j, moduli_v, pmf) of the next |return|, |volume| pair,
    aggregated over the waiting time."""
    h = tk.waiting_pmf(cell)
    mj, mv = tk._mod_j.moduli, tk._mod_v.moduli
    joint = np.zeros((mj.size, mv.size))
    for t in range(1, tk.t_max + 1):
        if h[t - 1] <= 0.0:
            continue
        joint += h[t - 1] * tk._modulus_volume(cell, t)
    return mj, mv, joint


@dataclass(frozen=True)
class CovarianceResult:
    cov: float
    rho: float  # nan when a standard deviation vanishes
    mean_j: float
    mean_v: float
    sigma_j: float
    sigma_v: float


def modulus_covariance(tk: TripletKernel, cell: ConditioningCell) -> CovarianceResult:
    """Covariance and correlation of the next |return| and |volume| values,
    from the copula-coupled joint law differenced on the modulus grid."""
    mj, mv, joint = joint_modulus_pmf(tk, cell)
    pj = joint.sum(axis=1)
    pv = joint.sum(axis=0)
    mean_j = float(mj @ pj)
    mean_v = float(mv @ pv)
    e_prod = float(mj @ joint @ mv)
    cov = e_prod - mean_j * mean_v
    var_j = float((mj - mean_j) ** 2 @ pj)
    var_v = float((mv - mean_v) ** 2 @ pv)
    if var_j <= 0 or var_v <= 0:
        rho = float("nan")
    else:
        rho = cov / math.sqrt(var_j * var_v)
    return CovarianceResult(cov=cov, rho=rho, mean_j=mean_j, mean_v=mean_v,
                            sigma_j=math.sqrt(max(var_j, 0.0)),
                            sigma_v=math.sqrt(max(var_v, 0.0)))


def signed_covariance(tk: TripletKernel, cell: ConditioningCell) -> float:
    """Cov(|next return|, next signed volume): the sign mean (2 p_v - 1)
    times the modulus covariance, hence exactly zero for p_v = 1/2."""
    return (2.0 * tk.signs.p_v - 1.0) * modulus_covariance(tk, cell).cov


def mutual_information(tk: TripletKernel, cell: ConditioningCell) -> float:
    """Mutual information (nats) of the next modulus pair on the discrete
    grid; non-negative up to rounding, floored at zero."""
    _, _, joint = joint_modulus_pmf(tk, cell)
    pj = joint.sum(axis=1)
    pv = joint.sum(axis=0)
    mask = joint > 0
    outer = np.outer(pj, pv)
    mi = float(np.sum(joint[mask] * np.log(joint[mask] / outer[mask])))
    return max(mi, 0.0)


# ---------------------------------------------------------------------------
# first passage times


@dataclass
class FptQuery:
    """Joint barrier query: survival of min{tau : price factor >= rho or
    volume factor >= psi}.

    The history arrays give the synchronized pre-history of (return value,
    volume value, jump time) with the last time equal to zero; ``u`` is the
    backward recurrence time of the synchronized chain at the query start.
    A bare initial condition is the one-entry history [(i0, v0, 0)].
    """

    rho: float
    psi: float
    horizon: int
    history_j: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    history_v: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    history_t: np.ndarray = field(default_factory=lambda: np.array([0]))
    u: int = 0

    def __post_init__(self):
        self.history_j = np.asarray(self.history_j, dtype=float)
        self.history_v = np.asarray(self.history_v, dtype=float)
        self.history_t = np.asarray(self.history_t, dtype=np.int64)
        if self.rho <= 0 or self.psi <= 0:
            raise ParameterError("thresholds must be positive")
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if self.u < 0:
            raise ParameterError("backward time must be non-negative")
        if not (self.history_j.size == self.history_v.size == self.history_t.size >= 1):
            raise ContractViolation("history arrays must be non-empty and aligned")
        if self.history_t[-1] != 0:
            raise ContractViolation("history must end at time zero")
        if self.history_t.size > 1 and np.any(np.diff(self.history_t) <= 0):
            raise ContractViolation("history times must be strictly increasing")


@dataclass
class FptResult:
    survival: np.ndarray  # P(no barrier crossed by t), t = 0..horizon
    method: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    n_paths: int = 0
    fallback_events: int = 0

    def as_dict(self) -> dict:
        out = {"survival": self.survival.tolist(), "method": self.method,
               "n_paths": self.n_paths}
        if self.lower is not None:
            out["lower"] = self.lower.tolist()
            out["upper"] = self.upper.tolist()
        return out


def _history_accumulators(tk: TripletKernel, q: FptQuery):
    """Index carry-states at time zero implied by the query history, plus the
    backward time of each variable (minutes since its value last changed)."""
    accs = []
    for lam, vals in ((tk.kernel_j.lam, q.history_j), (tk.kernel_v.lam, q.history_v)):
        w, d = 0.0, 1.0
        for k in range(vals.size - 1):
            w, d = advance_carry(lam, w, d, vals[k], int(q.history_t[k + 1] - q.history_t[k]))
        accs.append((w, d))
    backs = []
    for vals in (q.history_j, q.history_v):
        b = 0
        for k in range(vals.size - 1, 0, -1):
            if vals[k] != vals[k - 1]:
                break
            b = int(-q.history_t[k - 1])
        backs.append(b)
    return accs[0], accs[1], backs[0], backs[1]


def fpt_survival_recursive(tk: TripletKernel, query: FptQuery,
                           max_nodes: int = 2_000_000) -> FptResult:
    """Exact survival by conditioning on the first synchronized jump.

    The no-jump branch survives while the running product of held values
    stays below both barriers; the jump branch re-runs the problem with the
    barriers deflated by the accumulation at the jump time and the index
    carry-states rolled forward. Memoization collapses repeated sub-problems;
    the node budget guards against profiles where the exact recursion is
    infeasible (use the Monte Carlo method there).
    """
    if query.rho <= 1.0 or query.psi <= 1.0:
        return FptResult(survival=np.zeros(query.horizon + 1), method="recursion")
    view = ModelView(tk)
    (wj0, dj0), (wv0, dv0), b_j, b_v = _history_accumulators(tk, query)
    index_free = (tk.cond_wait.x_edges.size == 2 and tk.cond_wait.w_edges.size == 2
                  and tk.kernel_j.index_edges.size == 2 and tk.kernel_v.index_edges.size == 2)
    memo: dict = {}
    nodes = [0]

    def solve(i_val, v_val, aj_w, aj_d, av_w, av_d, bj, bv, lr, lp, u, hor):
        if lr <= 0.0 or lp <= 0.0:
            return np.zeros(hor + 1)
        if index_free:
            key = (i_val, v_val, bj, bv, round(lr, 12), round(lp, 12), u, hor)
        else:
            key = (i_val, v_val, aj_w, aj_d, av_w, av_d, bj, bv, lr, lp, u, hor)
        hit = memo.get(key)
        if hit is not None:
            return hit
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise ResourceLimitError(
                f"recursion exceeded {max_nodes} nodes; use the mc method")
        xj = (aj_w + i_val * i_val) / aj_d
        wv = (av_w + v_val * v_val) / av_d
        cell = view.cell_for(i_val, v_val, xj, wv, bj, bv)
        h = tk.waiting_pmf(cell)
        cdf = np.cumsum(h)
        h_u = cdf[min(u, tk.t_max) - 1] if u >= 1 else 0.0
        denom = 1.0 - h_u
        if denom <= 0.0:
            raise ContractViolation("waiting-time law has no mass beyond u")
        out = np.zeros(hor + 1)
        for t in range(hor + 1):
            if _crossed_by(i_val, t, lr) or _crossed_by(v_val, t, lp):
                break
            h_t = cdf[min(max(t, u), tk.t_max) - 1] if max(t, u) >= 1 else 0.0
            out[t] = (1.0 - h_t) / denom
        vj, vv, event = tk.event_value_pmf(cell)
        for t1 in range(u + 1, hor + 1):
            if _crossed_by(i_val, t1, lr) or _crossed_by(v_val, t1, lp):
                break
            if t1 > tk.t_max:
                break
            block = event[t1 - 1]
            if block.sum() <= 0.0:
                continue
            for a in range(vj.size):
                for b in range(vv.size):
                    p = block[a, b]
                    if p <= 0.0:
                        continue
                    j1, v1 = float(vj[a]), float(vv[b])
                    wj2, dj2 = advance_carry(tk.kernel_j.lam, aj_w, aj_d, i_val, t1)
                    wv2, dv2 = advance_carry(tk.kernel_v.lam, av_w, av_d, v_val, t1)
                    child = solve(j1, v1, wj2, dj2, wv2, dv2,
                                  0 if j1 != i_val else bj + t1,
                                  0 if v1 != v_val else bv + t1,
                                  lr - i_val * t1, lp - v_val * t1,
                                  0, hor - t1)
                    out[t1:] += (p / denom) * child
        memo[key] = out
        return out

    i0, v0 = float(query.history_j[-1]), float(query.history_v[-1])
    surv = solve(i0, v0, wj0, dj0, wv0, dv0, b_j, b_v,
                 math.log(query.rho), math.log(query.psi), query.u, query.horizon)
    return FptResult(survival=surv, method="recursion")


def _crossed_by(value: float, t: int, log_barrier: float) -> bool:
    """Has the accumulation of a held value reached the barrier by time t?
    Positive values peak at t; non-positive values never cross a barrier
    above one."""
    if value <= 0.0 or t <= 0:
        return False
    return value * t >= log_barrier


def fpt_survival_mc(tk: TripletKernel, query: FptQuery, n_paths: int = 100_000,
                    seed: int = 0) -> FptResult:
    """Monte Carlo estimate of the same survival with binomial-proportion
    bands. Paths are advanced in vectorized lockstep from a single seeded
    stream, so the result is reproducible for fixed (seed, n_paths)."""
    if n_paths < 1:
        raise ParameterError("need at least one path")
    if query.u >= tk.t_max:
        raise ContractViolation("waiting-time law has no mass beyond u")
    horizon = query.horizon
    zeros = np.zeros(horizon + 1)
    if query.rho <= 1.0 or query.psi <= 1.0:
        return FptResult(survival=zeros, method="monte-carlo", lower=zeros,
                         upper=zeros, n_paths=n_paths)
    rng = np.random.default_rng(seed)
    view = ModelView(tk)
    (wj0, dj0), (wv0, dv0), b_j0, b_v0 = _history_accumulators(tk, query)
    i0, v0 = float(query.history_j[-1]), float(query.history_v[-1])

    n = n_paths
    i_val = np.full(n, i0)
    v_val = np.full(n, v0)
    wj = np.full(n, wj0)
    dj = np.full(n, dj0)
    wv = np.full(n, wv0)
    dv = np.full(n, dv0)
    bj = np.full(n, b_j0, dtype=np.int64)
    bv = np.full(n, b_v0, dtype=np.int64)
    log_j = np.zeros(n)
    log_v = np.zeros(n)
    t_now = np.zeros(n, dtype=np.int64)
    cross_at = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    lr, lp = math.log(query.rho), math.log(query.psi)
    first_round = True
    while np.any(alive):
        ids = np.flatnonzero(alive)
        soj = _draw_sojourns(tk, view, rng, i_val[ids], v_val[ids],
                             wj[ids], dj[ids], wv[ids], dv[ids],
                             u=query.u if first_round else 0)
        first_round = False
        # crossing during the stretch: positive held values accumulate
        for vals, logs, lim in ((i_val, log_j, lr), (v_val, log_v, lp)):
            mask = vals[ids] > 0
            pos = ids[mask]
            if pos.size:
                end = logs[pos] + vals[pos] * soj[mask]
                hit = end >= lim
                if np.any(hit):
                    need = np.ceil((lim - logs[pos][hit]) / vals[pos][hit]).astype(np.int64)
                    at = t_now[pos][hit] + need
                    cross_at[pos[hit]] = np.minimum(cross_at[pos[hit]], at)
        log_j[ids] += i_val[ids] * soj
        log_v[ids] += v_val[ids] * soj
        t_now[ids] += soj
        done = cross_at[ids] <= horizon
        beyond = t_now[ids] > horizon
        alive[ids[done | beyond]] = False
        live = ids[~(done | beyond)]
        if live.size == 0:
            break
        soj_live = soj[~(done | beyond)]
        nj, nv, nwj, ndj, nwv, ndv = _draw_next_values(
            tk, view, rng, i_val[live], v_val[live], wj[live], dj[live],
            wv[live], dv[live], bj[live], bv[live], soj_live)
        bj[live] = np.where(nj != i_val[live], 0, bj[live] + soj_live)
        bv[live] = np.where(nv != v_val[live], 0, bv[live] + soj_live)
        i_val[live], v_val[live] = nj, nv
        wj[live], dj[live], wv[live], dv[live] = nwj, ndj, nwv, ndv
    grid = np.arange(horizon + 1)
    surv = (cross_at[None, :] > grid[:, None]).mean(axis=1)
    se = np.sqrt(np.maximum(surv * (1.0 - surv), 0.0) / n_paths)
    return FptResult(survival=surv, method="monte-carlo",
                     lower=np.clip(surv - 3.0 * se, 0.0, 1.0),
                     upper=np.clip(surv + 3.0 * se, 0.0, 1.0),
                     n_paths=n_paths)


def _cells_of(tk, view, i_val, v_val, wj, dj, wv, dv):
    """Vectorized cell coordinates for a batch of paths."""
    i_state = view.states_j(i_val)
    v_state = view.states_v(v_val)
    xj = (wj + i_val * i_val) / dj
    wvv = (wv + v_val * v_val) / dv
    xb = tk.cond_wait.x_bin(xj)
    wb = tk.cond_wait.w_bin(wvv)
    kxb = tk.kernel_j.index_bin(xj)
    kwb = tk.kernel_v.index_bin(wvv)
    return i_state, v_state, xb, wb, kxb, kwb


def _draw_sojourns(tk, view, rng, i_val, v_val, wj, dj, wv, dv, u=0):
    """Inverse-cdf sojourn draws per path, conditioned on exceeding u."""
    i_state, v_state, xb, wb, _, _ = _cells_of(tk, view, i_val, v_val, wj, dj, wv, dv)
    pmf = tk.cond_wait.resolved_cube()[i_state, v_state, xb, wb]
    cdf = np.cumsum(pmf, axis=1)
    base = 0.0
    if u >= 1:
        base = cdf[:, min(u, tk.t_max) - 1]
    uni = base + rng.random(i_val.size) * (cdf[:, -1] - base)
    slot = (cdf < uni[:, None]).sum(axis=1)
    return (np.minimum(slot, tk.t_max - 1) + 1).astype(np.int64)


def _draw_next_values(tk, view, rng, i_val, v_val, wj, dj, wv, dv, bj, bv, soj):
    """Draw the next signed value pair for each path: copula uniforms inverted
    through the conditional modulus cdfs, signs attached independently. The
    index carry-states are rolled forward through the sojourn."""
    n = i_val.size
    i_state, v_state, xb, wb, kxb, kwb = _cells_of(tk, view, i_val, v_val, wj, dj, wv, dv)
    u_j, u_v = sample_copula(tk.copula, n, rng)
    tau_j = np.minimum(soj + bj, tk.kernel_j.t_max) - 1
    tau_v = np.minimum(soj + bv, tk.kernel_v.t_max) - 1
    rows_j = tk._mod_j.cdf[i_state, kxb, tau_j]
    rows_v = tk._mod_v.cdf[v_state, kwb, tau_v]
    pos_j = (rows_j < u_j[:, None]).sum(axis=1)
    pos_v = (rows_v < u_v[:, None]).sum(axis=1)
    mod_j = tk._mod_j.moduli[np.minimum(pos_j, tk._mod_j.moduli.size - 1)]
    mod_v = tk._mod_v.moduli[np.minimum(pos_v, tk._mod_v.moduli.size - 1)]
    sign_j = np.where(rng.random(n) < tk.signs.p_j, 1.0, -1.0)
    sign_v = np.where(rng.random(n) < tk.signs.p_v, 1.0, -1.0)
    nj = np.where(mod_j == 0.0, 0.0, sign_j * mod_j)
    nv = np.where(mod_v == 0.0, 0.0, sign_v * mod_v)
    nwj, ndj = advance_carry(tk.kernel_j.lam, wj, dj, i_val, soj)
    nwv, ndv = advance_carry(tk.kernel_v.lam, wv, dv, v_val, soj)
    return nj, nv, nwj, ndj, nwv, ndv
