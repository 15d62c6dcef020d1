"""Synchronized return/volume model: union jump times, conditional waiting
law, sign probabilities, copula-coupled modulus marginals and the evaluation
of the resulting three-way kernel."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .copulas import CopulaSpec, copula_eval, fit_copula
from .core import (
    IndexedKernel,
    IndexParams,
    JumpChain,
    ScoreSpec,
    StateGrid,
    discretize,
    estimate_kernel,
    index_at_times,
    make_state_grid,
)
from .errors import (
    AlignmentError,
    ContractViolation,
    EstimationError,
    UndefinedConditionalError,
)

__all__ = [
    "SyncChain",
    "SignModel",
    "CondWaitDist",
    "ConditioningCell",
    "EmpiricalInverse",
    "TripletKernel",
    "TripletFitConfig",
    "synchronize",
    "estimate_signs",
    "estimate_cond_wait",
    "modulus_marginal_cdf",
    "triplet_kernel_eval",
    "quadrant_masses",
    "fit_triplet_kernel",
    "advance_carry",
    "ModelView",
]


# ---------------------------------------------------------------------------
# synchronization


@dataclass
class SyncChain:
    """Event record on the union of the two variables' jump times.

    At each union time the chain carries the state each variable holds and
    how long ago that variable last jumped (its backward recurrence time);
    at least one backward time is zero at every event after the origin.
    """

    j_states: np.ndarray
    v_states: np.ndarray
    times: np.ndarray
    backward_j: np.ndarray
    backward_v: np.ndarray
    grid_j: StateGrid
    grid_v: StateGrid

    def __len__(self) -> int:
        return self.times.size

    @property
    def j_values(self) -> np.ndarray:
        return self.grid_j.representatives[self.j_states]

    @property
    def v_values(self) -> np.ndarray:
        return self.grid_v.representatives[self.v_states]

    def sojourns(self) -> np.ndarray:
        return np.diff(self.times)


def synchronize(chain_j: JumpChain, chain_v: JumpChain) -> SyncChain:
    """Merge two jump chains onto the union of their jump times; each
    variable carries its last value at or before every union time."""
    if len(chain_j) == 0 or len(chain_v) == 0:
        raise AlignmentError("cannot synchronize an empty chain")
    if chain_j.times[0] != chain_v.times[0]:
        raise AlignmentError("chains must share their time origin")
    times = np.union1d(chain_j.times, chain_v.times)
    pj = np.searchsorted(chain_j.times, times, side="right") - 1
    pv = np.searchsorted(chain_v.times, times, side="right") - 1
    return SyncChain(
        j_states=chain_j.states[pj],
        v_states=chain_v.states[pv],
        times=times,
        backward_j=times - chain_j.times[pj],
        backward_v=times - chain_v.times[pv],
        grid_j=chain_j.grid,
        grid_v=chain_v.grid,
    )


# ---------------------------------------------------------------------------
# signs and the synchronized waiting-time law


@dataclass(frozen=True)
class SignModel:
    """Independent up-move probabilities attached to modulus draws. A state
    whose value is exactly zero carries no sign and is excluded from
    estimation."""

    p_j: float
    p_v: float

    def __post_init__(self):
        if not (0.0 <= self.p_j <= 1.0 and 0.0 <= self.p_v <= 1.0):
            raise ContractViolation("sign probabilities must lie in [0, 1]")


def estimate_signs(sync: SyncChain) -> SignModel:
    """Fraction of positive values among the nonzero ones, per variable."""
    ps = []
    for vals in (sync.j_values, sync.v_values):
        nz = vals[vals != 0.0]
        if nz.size == 0:
            raise EstimationError("all states are zero; sign probability unidentifiable")
        ps.append(float(np.mean(nz > 0)))
    return SignModel(p_j=ps[0], p_v=ps[1])


@dataclass
class CondWaitDist:
    """Law of the synchronized sojourn given both states and both index bins,
    truncated at ``t_max`` with overflow lumped into the last slot. Cells
    never observed fall back to the (state, state) law pooled over index
    bins, then to the global law."""

    counts: np.ndarray  # [sJ, sV, Bx, Bw, t_max]
    pmf: np.ndarray
    x_edges: np.ndarray
    w_edges: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        self.pmf = np.asarray(self.pmf, dtype=float)
        self._resolved = None
        tot = self.counts.sum(axis=(2, 3, 4))
        pooled = self.counts.sum(axis=(2, 3))
        self._pair_pmf = np.zeros(pooled.shape, dtype=float)
        nz = tot > 0
        self._pair_pmf[nz] = pooled[nz] / tot[nz, None]
        g = self.counts.sum(axis=(0, 1, 2, 3))
        self._global_pmf = g / g.sum() if g.sum() > 0 else np.full(self.t_max, 1.0 / self.t_max)

    @property
    def t_max(self) -> int:
        return self.pmf.shape[4]

    def x_bin(self, x) -> np.ndarray:
        return np.clip(np.searchsorted(self.x_edges, x, side="right") - 1,
                       0, self.x_edges.size - 2)

    def w_bin(self, w) -> np.ndarray:
        return np.clip(np.searchsorted(self.w_edges, w, side="right") - 1,
                       0, self.w_edges.size - 2)

    def cell_pmf(self, i: int, v: int, xb: int, wb: int):
        """Sojourn pmf with the fallback ladder; (pmf[t_max], level)."""
        if self.counts[i, v, xb, wb].sum() > 0:
            return self.pmf[i, v, xb, wb], 0
        if self._pair_pmf[i, v].sum() > 0:
            return self._pair_pmf[i, v], 1
        return self._global_pmf, 2

    def cdf(self, i: int, v: int, xb: int, wb: int) -> np.ndarray:
        return np.cumsum(self.cell_pmf(i, v, xb, wb)[0])

    def resolved_cube(self) -> np.ndarray:
        """Full pmf cube with every empty cell replaced through the fallback
        ladder (cached; used by the vectorized samplers)."""
        cube = getattr(self, "_resolved", None)
        if cube is None:
            cube = self.pmf.copy()
            empty = self.counts.sum(axis=4) == 0
            for i, v, xb, wb in zip(*np.nonzero(empty)):
                cube[i, v, xb, wb] = self.cell_pmf(i, v, xb, wb)[0]
            self._resolved = cube
        return cube


def estimate_cond_wait(sync: SyncChain, idx_j, idx_v, x_edges, w_edges,
                       t_max: Optional[int] = None,
                       sojourn_quantile: float = 0.995) -> CondWaitDist:
    """Count synchronized sojourns per (state, state, index-bin, index-bin)
    cell and normalize. ``idx_j``/``idx_v`` are the index-process values at
    the union times."""
    if len(sync) < 2:
        raise EstimationError("need at least one synchronized transition")
    idx_j = np.asarray(idx_j, dtype=float)
    idx_v = np.asarray(idx_v, dtype=float)
    x_edges = np.asarray(x_edges, dtype=float)
    w_edges = np.asarray(w_edges, dtype=float)
    soj = sync.sojourns()
    if t_max is None:
        t_max = max(int(np.quantile(soj, sojourn_quantile)), 1)
    s_j = sync.grid_j.n_states
    s_v = sync.grid_v.n_states
    bx, bw = x_edges.size - 1, w_edges.size - 1
    counts = np.zeros((s_j, s_v, bx, bw, t_max), dtype=np.int64)
    xb = np.clip(np.searchsorted(x_edges, idx_j[:-1], side="right") - 1, 0, bx - 1)
    wb = np.clip(np.searchsorted(w_edges, idx_v[:-1], side="right") - 1, 0, bw - 1)
    tslot = np.minimum(soj, t_max) - 1
    np.add.at(counts, (sync.j_states[:-1], sync.v_states[:-1], xb, wb, tslot), 1)
    totals = counts.sum(axis=4, keepdims=True)
    pmf = np.divide(counts, totals, out=np.zeros_like(counts, dtype=float),
                    where=totals > 0)
    return CondWaitDist(counts=counts, pmf=pmf, x_edges=x_edges, w_edges=w_edges)


# ---------------------------------------------------------------------------
# conditioning cells and modulus marginals


@dataclass(frozen=True)
class ConditioningCell:
    """Everything the next synchronized transition is allowed to depend on:
    both current states, both index bins and both backward times. Index bins
    are shared between the waiting-time table and the per-variable kernels
    (they are fitted with common edges)."""

    i: int
    v: int
    x_bin: int = 0
    w_bin: int = 0
    b_j: int = 0
    b_v: int = 0


def modulus_marginal_cdf(kernel: IndexedKernel, i: int, x_bin: int,
                         sojourn: int, threshold: float) -> float:
    """P(|next state value| <= threshold | sojourn, state, index bin) as a
    right-continuous step function over the grid's modulus values.

    Raises :class:`UndefinedConditionalError` when the cell assigns zero
    probability to the requested sojourn.
    """
    if not kernel.occupied[i, x_bin]:
        raise UndefinedConditionalError("conditioning cell never observed")
    t_slot = min(int(sojourn), kernel.t_max) - 1
    if t_slot < 0:
        raise ContractViolation("sojourn must be >= 1")
    joint = kernel.pmf[i, x_bin, :, t_slot]
    denom = joint.sum()
    if denom <= 0:
        raise UndefinedConditionalError(
            f"sojourn {sojourn} has zero mass in cell ({i}, {x_bin})")
    mods = np.abs(kernel.grid.representatives)
    return float(joint[mods <= threshold].sum() / denom)


class _ModulusTable:
    """Per-kernel machinery: sorted unique modulus values and the resolved
    conditional modulus cdf cube F[i, b, t, k] = P(|next| <= modulus_k |
    sojourn t+1, ...). Zero-mass sojourns resolve through the fallback
    ladder (cell -> state -> global law at that sojourn, then the
    sojourn-free state law) so analytic sums stay normalized."""

    def __init__(self, kernel: IndexedKernel):
        self.kernel = kernel
        self.moduli, self.state_mod = kernel.grid.moduli()
        s, b, _, t_max = kernel.pmf.shape
        k = self.moduli.size
        fold = np.zeros((s, b, t_max, k))
        for j in range(s):
            fold[:, :, :, self.state_mod[j]] += kernel.pmf[:, :, j, :]
        state_fold = np.zeros((s, t_max, k))
        glob_fold = np.zeros((t_max, k))
        for j in range(s):
            state_fold[:, :, self.state_mod[j]] += kernel._state_pmf[:, j, :]
            glob_fold[:, self.state_mod[j]] += kernel._global_pmf[j, :]
        self.cdf = np.empty((s, b, t_max, k))
        self.fallback_cells = 0
        for i in range(s):
            uncond = state_fold[i].sum(axis=0)
            if uncond.sum() <= 0:
                uncond = glob_fold.sum(axis=0)
            uncond = uncond / uncond.sum()
            for xb in range(b):
                for t in range(t_max):
                    row = fold[i, xb, t]
                    tot = row.sum()
                    if tot <= 0:
                        row, tot = state_fold[i, t], state_fold[i, t].sum()
                    if tot <= 0:
                        row, tot = glob_fold[t], glob_fold[t].sum()
                    if tot <= 0:
                        row, tot = uncond, 1.0
                        self.fallback_cells += 1
                    self.cdf[i, xb, t] = np.cumsum(row / tot)
        # guard against accumulated rounding at the top
        self.cdf[..., -1] = 1.0

    def cdf_row(self, i: int, x_bin: int, sojourn: int) -> np.ndarray:
        t_slot = min(int(sojourn), self.kernel.t_max) - 1
        return self.cdf[i, x_bin, t_slot]

    def eval(self, i: int, x_bin: int, sojourn: int, threshold: float) -> float:
        if threshold < self.moduli[0]:
            return 0.0
        k = int(np.searchsorted(self.moduli, threshold, side="right")) - 1
        return float(self.cdf_row(i, x_bin, sojourn)[k])

    def invert(self, i: int, x_bin: int, sojourn: int, u: float) -> int:
        """Smallest modulus position whose cdf reaches u."""
        row = self.cdf_row(i, x_bin, sojourn)
        return int(np.searchsorted(row, u, side="left"))


@dataclass
class EmpiricalInverse:
    """Per-state sorted samples of the continuous values observed in each
    state, for mapping simulated states back to continuous values."""

    samples: list  # one sorted ndarray per state
    grid: StateGrid

    @classmethod
    def from_data(cls, values, grid: StateGrid) -> "EmpiricalInverse":
        values = np.asarray(values, dtype=float)
        idx = grid.state_of(values)
        samples = [np.sort(values[idx == s]) for s in range(grid.n_states)]
        return cls(samples=samples, grid=grid)


# ---------------------------------------------------------------------------
# the triplet kernel


@dataclass
class TripletKernel:
    """Fitted synchronized model: per-variable kernels, the synchronized
    waiting-time law, the modulus copula and the sign probabilities.
    Immutable after construction; evaluation methods are pure."""

    kernel_j: IndexedKernel
    kernel_v: IndexedKernel
    cond_wait: CondWaitDist
    copula: CopulaSpec
    signs: SignModel
    inverse_j: Optional[EmpiricalInverse] = None
    inverse_v: Optional[EmpiricalInverse] = None

    def __post_init__(self):
        self._mod_j = _ModulusTable(self.kernel_j)
        self._mod_v = _ModulusTable(self.kernel_v)
        self._event_cache: dict = {}

    # -- lookups ------------------------------------------------------------

    @property
    def t_max(self) -> int:
        return self.cond_wait.t_max

    def waiting_pmf(self, cell: ConditioningCell) -> np.ndarray:
        return self.cond_wait.cell_pmf(cell.i, cell.v, cell.x_bin, cell.w_bin)[0]

    def waiting_cdf_at(self, cell: ConditioningCell, t: int) -> float:
        if t < 1:
            return 0.0
        pmf = self.waiting_pmf(cell)
        return float(pmf[: min(t, self.t_max)].sum())

    def modulus_cdf_j(self, cell: ConditioningCell, t: int, threshold: float) -> float:
        return self._mod_j.eval(cell.i, cell.x_bin, t + cell.b_j, threshold)

    def modulus_cdf_v(self, cell: ConditioningCell, t: int, threshold: float) -> float:
        return self._mod_v.eval(cell.v, cell.w_bin, t + cell.b_v, threshold)

    # -- signed value support -----------------------------------------------

    def signed_support_j(self) -> np.ndarray:
        return _signed_support(self._mod_j.moduli)

    def signed_support_v(self) -> np.ndarray:
        return _signed_support(self._mod_v.moduli)

    def event_value_pmf(self, cell: ConditioningCell) -> tuple:
        """Model law of the next event: (signed j values, signed v values,
        P[t_max, nj, nv]) where P[t-1, a, b] = P(next j value, next v value,
        sojourn = t | cell). Signs attach independently to positive moduli.
        Cached per cell (the kernel is immutable)."""
        key = (cell.i, cell.v, cell.x_bin, cell.w_bin, cell.b_j, cell.b_v)
        hit = self._event_cache.get(key)
        if hit is not None:
            return hit
        h = self.waiting_pmf(cell)
        vj = self.signed_support_j()
        vv = self.signed_support_v()
        out = np.zeros((self.t_max, vj.size, vv.size))
        for t in range(1, self.t_max + 1):
            if h[t - 1] <= 0.0:
                continue
            vol = self._modulus_volume(cell, t)
            out[t - 1] = h[t - 1] * self._sign_split(vol)
        self._event_cache[key] = (vj, vv, out)
        return vj, vv, out

    def _modulus_volume(self, cell: ConditioningCell, t: int) -> np.ndarray:
        """Joint modulus pmf at sojourn t via copula rectangle volumes."""
        fj = self._mod_j.cdf_row(cell.i, cell.x_bin, t + cell.b_j)
        fv = self._mod_v.cdf_row(cell.v, cell.w_bin, t + cell.b_v)
        fj = np.concatenate([[0.0], fj])
        fv = np.concatenate([[0.0], fv])
        grid = copula_eval(self.copula, fj[:, None], fv[None, :])
        vol = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
        return np.clip(vol, 0.0, None)

    def _sign_split(self, vol: np.ndarray) -> np.ndarray:
        """Distribute a modulus-pair pmf onto signed values."""
        mj, mv = self._mod_j.moduli, self._mod_v.moduli
        sj = _sign_matrix(mj, self.signs.p_j)
        sv = _sign_matrix(mv, self.signs.p_v)
        # out[a, b] = sum_{k,l} vol[k, l] * sj[k, a] * sv[l, b]
        return np.einsum("kl,ka,lb->ab", vol, sj, sv)


def advance_carry(lam: float, w, d, value, dt):
    """Roll the index carry-state (decayed squared-value sum, decayed count)
    forward ``dt`` minutes during which ``value`` holds; works on scalars or
    aligned arrays. The index at the new time is (w + current**2) / d."""
    if lam == 1.0:
        return w + value * value * dt, d + dt
    decay = lam ** dt
    g = (1.0 - decay) / (1.0 - lam)
    return decay * w + value * value * lam * g, decay * d + g


def _nearest_idx(support: np.ndarray, values) -> np.ndarray:
    """Index of the closest support member (exact for in-support values)."""
    values = np.asarray(values, dtype=float)
    pos = np.clip(np.searchsorted(support, values), 0, support.size - 1)
    prev = np.maximum(pos - 1, 0)
    take_prev = np.abs(support[prev] - values) < np.abs(support[pos] - values)
    return np.where(take_prev, prev, pos)


class ModelView:
    """Resolved lookup layer shared by the evaluators and samplers: maps
    signed values to grid states (mirroring across zero when a modulus only
    exists with one sign in the grid) and bins continuous index values."""

    def __init__(self, tk: "TripletKernel"):
        self.tk = tk
        self.support_j = tk.signed_support_j()
        self.support_v = tk.signed_support_v()
        self.state_of_j = self._resolution(tk.kernel_j, self.support_j)
        self.state_of_v = self._resolution(tk.kernel_v, self.support_v)

    @staticmethod
    def _resolution(kernel, support):
        reps = kernel.grid.representatives
        out = np.empty(support.size, dtype=np.int64)
        for k, val in enumerate(support):
            exact = np.flatnonzero(reps == val)
            if exact.size:
                out[k] = exact[0]
                continue
            mirror = np.flatnonzero(np.abs(reps) == abs(val))
            out[k] = mirror[0] if mirror.size else int(np.argmin(np.abs(reps - val)))
        return out

    def states_j(self, values) -> np.ndarray:
        return self.state_of_j[_nearest_idx(self.support_j, values)]

    def states_v(self, values) -> np.ndarray:
        return self.state_of_v[_nearest_idx(self.support_v, values)]

    def cell_for(self, i_val, v_val, xj, wv, b_j, b_v) -> ConditioningCell:
        tk = self.tk
        return ConditioningCell(
            i=int(self.states_j(i_val)), v=int(self.states_v(v_val)),
            x_bin=int(tk.cond_wait.x_bin(xj)), w_bin=int(tk.cond_wait.w_bin(wv)),
            b_j=b_j, b_v=b_v)


def _signed_support(moduli: np.ndarray) -> np.ndarray:
    vals = set()
    for m in moduli:
        if m == 0.0:
            vals.add(0.0)
        else:
            vals.add(m)
            vals.add(-m)
    return np.array(sorted(vals))


def _sign_matrix(moduli: np.ndarray, p: float) -> np.ndarray:
    """Map modulus positions onto the signed support: row k gives the
    distribution of the signed value for modulus k."""
    support = _signed_support(moduli)
    out = np.zeros((moduli.size, support.size))
    for k, m in enumerate(moduli):
        if m == 0.0:
            out[k, np.searchsorted(support, 0.0)] = 1.0
        else:
            out[k, np.searchsorted(support, m)] = p
            out[k, np.searchsorted(support, -m)] = 1.0 - p
    return out


# ---------------------------------------------------------------------------
# kernel evaluation (the four sign quadrants)


def _case_pp(h, fj, fv, c, pj, pv):
    return h * (1.0 + pj * pv * (1.0 - fj - fv + c)
                - pv * (1.0 - fv) - pj * (1.0 - fj))


def _case_mm(h, fjm, fvm, c, pj, pv):
    return h * (1.0 - pj) * (1.0 - pv) * (1.0 - fjm - fvm + c)


def _case_mp(h, fjm, fv, c, pj, pv):
    return h * ((1.0 - pj) * (fv - c)
                + (1.0 - pj) * (1.0 - pv) * (1.0 - fjm - fv + c))


def _case_pm(h, fj, fvm, c, pj, pv):
    return h * ((1.0 - pv) * (fj - c)
                + (1.0 - pj) * (1.0 - pv) * (1.0 - fj - fvm + c))


def triplet_kernel_eval(tk: TripletKernel, cell: ConditioningCell,
                        j: float, a: float, t: int) -> float:
    """P(next return value <= j (strictly < for j < 0), next volume value
    below a likewise, sojourn = t | cell), dispatching on the sign quadrant
    of the thresholds."""
    if t < 1 or t > tk.t_max:
        return 0.0
    h = float(tk.waiting_pmf(cell)[t - 1])
    if h <= 0.0:
        return 0.0
    pj, pv = tk.signs.p_j, tk.signs.p_v
    cop = tk.copula
    if j >= 0 and a >= 0:
        fj = tk.modulus_cdf_j(cell, t, j)
        fv = tk.modulus_cdf_v(cell, t, a)
        return _case_pp(h, fj, fv, float(copula_eval(cop, fj, fv)), pj, pv)
    if j < 0 and a < 0:
        fjm = tk.modulus_cdf_j(cell, t, -j)
        fvm = tk.modulus_cdf_v(cell, t, -a)
        return _case_mm(h, fjm, fvm, float(copula_eval(cop, fjm, fvm)), pj, pv)
    if j < 0:
        fjm = tk.modulus_cdf_j(cell, t, -j)
        fv = tk.modulus_cdf_v(cell, t, a)
        return _case_mp(h, fjm, fv, float(copula_eval(cop, fjm, fv)), pj, pv)
    fj = tk.modulus_cdf_j(cell, t, j)
    fvm = tk.modulus_cdf_v(cell, t, -a)
    return _case_pm(h, fj, fvm, float(copula_eval(cop, fj, fvm)), pj, pv)


def quadrant_masses(tk: TripletKernel, cell: ConditioningCell, t: int) -> dict:
    """Probability of each sign quadrant of the next (return, volume) pair at
    sojourn t, reconstructed from the four quadrant formulas evaluated at
    their full-range limits with inclusion-exclusion. Their sum equals the
    waiting-time mass when the formulas are mutually consistent."""
    if t < 1 or t > tk.t_max:
        return {"++": 0.0, "--": 0.0, "-+": 0.0, "+-": 0.0}
    h = float(tk.waiting_pmf(cell)[t - 1])
    pj, pv = tk.signs.p_j, tk.signs.p_v
    cop = tk.copula
    fj0 = tk.modulus_cdf_j(cell, t, 0.0)   # zero-modulus mass
    fv0 = tk.modulus_cdf_v(cell, t, 0.0)
    c00 = float(copula_eval(cop, fj0, fv0))
    m_mm = _case_mm(h, fj0, fv0, c00, pj, pv)
    # case (-, +) at a -> +inf: C(F, 1) = F
    neg_j_total = _case_mp(h, fj0, 1.0, fj0, pj, pv)
    # case (+, -) at j -> +inf
    neg_v_total = _case_pm(h, 1.0, fv0, fv0, pj, pv)
    total = _case_pp(h, 1.0, 1.0, float(copula_eval(cop, 1.0, 1.0)), pj, pv)
    m_mp = neg_j_total - m_mm
    m_pm = neg_v_total - m_mm
    m_pp = total - neg_j_total - neg_v_total + m_mm
    return {"++": m_pp, "--": m_mm, "-+": m_mp, "+-": m_pm}


# ---------------------------------------------------------------------------
# end-to-end fit


@dataclass(frozen=True)
class TripletFitConfig:
    n_states_r: int = 5
    n_states_v: int = 5
    lam_r: float = 0.97
    lam_v: float = 0.97
    n_index_bins: int = 5
    copula_family: str = "gaussian"
    t_max: Optional[int] = None
    sojourn_quantile: float = 0.995


def fit_triplet_kernel(r_values, v_values, cfg: TripletFitConfig = TripletFitConfig(),
                       grid_r: Optional[StateGrid] = None,
                       grid_v: Optional[StateGrid] = None) -> TripletKernel:
    """Full estimation pipeline from aligned continuous return series:
    discretize both variables, estimate their indexed kernels, synchronize,
    estimate the conditional waiting-time law, the sign probabilities and the
    modulus copula, and bundle the per-state empirical inverses."""
    r_values = np.asarray(r_values, dtype=float)
    v_values = np.asarray(v_values, dtype=float)
    if r_values.size != v_values.size:
        raise AlignmentError("return and volume series must be aligned")
    if grid_r is None:
        grid_r = make_state_grid(r_values, cfg.n_states_r)
    if grid_v is None:
        grid_v = make_state_grid(v_values, cfg.n_states_v)
    chain_r = discretize(r_values, grid_r)
    chain_v = discretize(v_values, grid_v)
    score_r = ScoreSpec(kind="ewma-squares", lam=cfg.lam_r)
    score_v = ScoreSpec(kind="ewma-squares", lam=cfg.lam_v)
    kern_r, _ = estimate_kernel(chain_r, IndexParams(
        lam=cfg.lam_r, n_index_bins=cfg.n_index_bins, t_max=cfg.t_max,
        sojourn_quantile=cfg.sojourn_quantile), score_r)
    kern_v, _ = estimate_kernel(chain_v, IndexParams(
        lam=cfg.lam_v, n_index_bins=cfg.n_index_bins, t_max=cfg.t_max,
        sojourn_quantile=cfg.sojourn_quantile), score_v)
    sync = synchronize(chain_r, chain_v)
    idx_j = index_at_times(chain_r, sync.times, score_r)
    idx_v = index_at_times(chain_v, sync.times, score_v)
    cond = estimate_cond_wait(sync, idx_j, idx_v,
                              x_edges=kern_r.index_edges,
                              w_edges=kern_v.index_edges,
                              t_max=cfg.t_max,
                              sojourn_quantile=cfg.sojourn_quantile)
    signs = estimate_signs(sync)
    mj = np.abs(sync.j_values[1:])
    mv = np.abs(sync.v_values[1:])
    copula = fit_copula(mj, mv, family=cfg.copula_family)
    return TripletKernel(
        kernel_j=kern_r, kernel_v=kern_v, cond_wait=cond, copula=copula,
        signs=signs,
        inverse_j=EmpiricalInverse.from_data(r_values, grid_r),
        inverse_v=EmpiricalInverse.from_data(v_values, grid_v),
    )
