"""Convex surrogate machinery for the per-frame subproblems.

Three ingredients turn the nonconvex rate/MI/power constraints into a convex
program at each iterate:

* quadratic-transform lower bounds on the log rates, tight at v = sqrt(S)/N;
* first-order expansions of the per-target sensing MI logs and of the relay
  power, with closed-form partials in the powers and the UAV position;
* linear tangent majorizers of the smoothed-L0 subcarrier indicators plus
  box trust regions that keep the expansions accurate.

build_constraints assembles the full constraint set (with anchor diagnostics)
into a convex.Problem over the frame's power and position variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import convex
from .allocation import SmoothingState, l0_tangent_coeffs
from .metrics import FrameModel, PowerPlan, cd_prefactor, dl_prefactor, mi_prefactor

LN2 = np.log(2.0)


# ---- quadratic transform -----------------------------------------------------------

def quad_transform_v(s: float, n: float) -> float:
    """Auxiliary v = sqrt(S)/N of the fractional-programming transform."""
    if n <= 0:
        raise ValueError("denominator must be positive")
    if s < 0:
        raise ValueError("signal term must be nonnegative")
    return float(np.sqrt(s) / n)


def surrogate_log_rate(s: float, n: float, v: float) -> float:
    """log2(1 + 2 v sqrt(S) - v^2 N); equals log2(1 + S/N) at v = sqrt(S)/N.

    Returns -inf when the argument is nonpositive (the solver line search
    treats that as out of domain).
    """
    arg = 1.0 + 2.0 * v * np.sqrt(s) - v**2 * n
    if arg <= 0:
        return -np.inf
    return float(np.log2(arg))


# ---- trust region --------------------------------------------------------------------

@dataclass(frozen=True)
class TrustRegion:
    """Per-iteration step bounds, shrunk by the decreasing factor theta."""

    mu_p: float   # echo-forward power coefficients (W-like units)
    mu_s: float   # probing powers (W)
    mu_x: float   # UAV x step (m)
    mu_y: float   # UAV y step (m)
    theta: float = 1.0

    def __post_init__(self):
        if min(self.mu_p, self.mu_s, self.mu_x, self.mu_y) <= 0:
            raise ValueError("trust-region radii must be positive")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")

    @classmethod
    def defaults(cls, p_uav_w: float, max_step_m: float, theta: float = 1.0) -> "TrustRegion":
        return cls(mu_p=p_uav_w / 20.0, mu_s=p_uav_w / 20.0,
                   mu_x=max_step_m, mu_y=max_step_m, theta=theta)

    def at_iteration(self, k: int) -> "TrustRegion":
        """theta = max(0.9^k, 0.05) applied to the base radii."""
        return TrustRegion(self.mu_p, self.mu_s, self.mu_x, self.mu_y,
                           theta=max(0.9**k, 0.05))

    @property
    def bound_p(self) -> float:
        return self.theta * self.mu_p

    @property
    def bound_s(self) -> float:
        return self.theta * self.mu_s

    @property
    def bound_x(self) -> float:
        return self.theta * self.mu_x

    @property
    def bound_y(self) -> float:
        return self.theta * self.mu_y


# ---- MI expansion ---------------------------------------------------------------------

@dataclass
class MiExpansion:
    """Values and partials of the MI signal/noise aggregates and relay power.

    Partials are with respect to (p_pe of target j on the pair's PE
    subcarrier, the J probing powers on the SEN subcarrier, x, y) at the
    expansion point.
    """

    s_val: float
    n_val: float
    p_val: float
    ds: np.ndarray  # length J + 3: [d/dp_pe, d/dp_sen (J), d/dx, d/dy]
    dn: np.ndarray
    dp: np.ndarray


def mi_expansion(j: int, m_pe: int, m_sen: int, p_pe_j: float, p_sen: np.ndarray,
                 pos, model: FrameModel, eta_pe: np.ndarray) -> MiExpansion:
    """Expand target j's MI terms around the given operating point."""
    pos = np.asarray(pos, dtype=float)
    x, y = pos[0], pos[1]
    z_tu = model.z_tbs(pos)
    z_t = model.z_targets(pos)
    if z_tu <= 0 or np.any(z_t <= 0):
        raise ValueError("expansion point has a nonpositive squared distance")
    cfg = model.cfg
    xi = cfg.xi_sic
    n0 = cfg.n0_w
    tbs = np.asarray(cfg.tbs_pos, dtype=float)
    tx, ty = model.layout.targets[:, 0], model.layout.targets[:, 1]

    eta = eta_pe[j, m_pe]
    g2 = np.abs(model.g_sen[j, :, m_sen]) ** 2
    gain = g2 * model.omega_bar_sen[:, m_sen] / z_t**2
    dgain_dx = -gain * 4.0 * (x - tx) / z_t
    dgain_dy = -gain * 4.0 * (y - ty) / z_t

    amp = eta * p_pe_j / z_tu
    damp_dx = -amp * 2.0 * (x - tbs[0]) / z_tu
    damp_dy = -amp * 2.0 * (y - tbs[1]) / z_tu

    c_s = float(np.dot(p_sen, gain + xi) + n0)
    c_n = c_s - p_sen[j] * gain[j]
    s_val = amp * c_s + n0
    n_val = amp * c_n + n0
    p_val = p_pe_j * c_s

    jcount = p_sen.size
    ds = np.zeros(jcount + 3)
    dn = np.zeros(jcount + 3)
    dp = np.zeros(jcount + 3)

    ds[0] = eta / z_tu * c_s
    dn[0] = eta / z_tu * c_n
    dp[0] = c_s

    ds[1:1 + jcount] = amp * (gain + xi)
    dn[1:1 + jcount] = amp * (gain + xi)
    dn[1 + j] = amp * xi  # own echo is the useful part, only leakage remains
    dp[1:1 + jcount] = p_pe_j * (gain + xi)

    sum_sx = float(np.dot(p_sen, dgain_dx))
    sum_sy = float(np.dot(p_sen, dgain_dy))
    sum_nx = sum_sx - p_sen[j] * dgain_dx[j]
    sum_ny = sum_sy - p_sen[j] * dgain_dy[j]
    ds[-2] = damp_dx * c_s + amp * sum_sx
    ds[-1] = damp_dy * c_s + amp * sum_sy
    dn[-2] = damp_dx * c_n + amp * sum_nx
    dn[-1] = damp_dy * c_n + amp * sum_ny
    dp[-2] = p_pe_j * sum_sx
    dp[-1] = p_pe_j * sum_sy
    return MiExpansion(s_val=s_val, n_val=n_val, p_val=p_val, ds=ds, dn=dn, dp=dp)


def mi_linearization(j: int, m_pe: int, m_sen: int, p_pe_j: float, p_sen: np.ndarray,
                     pos, model: FrameModel, eta_pe: np.ndarray):
    """Affine surrogates (in nats) of ln S and ln N around the expansion point.

    Returns (s_anchor, s_coeffs, n_anchor, n_coeffs) where each surrogate is
    anchor + coeffs . (vars - vars_at_expansion) over [p_pe, p_sen..., x, y].
    """
    exp = mi_expansion(j, m_pe, m_sen, p_pe_j, p_sen, pos, model, eta_pe)
    return (float(np.log(exp.s_val)), exp.ds / exp.s_val,
            float(np.log(exp.n_val)), exp.dn / exp.n_val)


# ---- surrogate state --------------------------------------------------------------------

@dataclass
class SurrogateState:
    """Quadratic-transform auxiliaries and the expansion point of one iterate."""

    powers: PowerPlan
    position: np.ndarray        # full 3-D position (altitude fixed)
    v_dl: np.ndarray            # (U, n_dl_cols)
    v_cd: np.ndarray            # (U, n_cd_cols)


def refresh_state(powers: PowerPlan, pos, model: FrameModel, dl_cols, cd_cols) -> SurrogateState:
    """Recompute the v auxiliaries at the given operating point.

    Anchor powers are floored away from exact zero: v = 0 freezes the
    corresponding surrogate term at zero rate with no gradient, so a link
    whose power was rounded away could never be revived by a QoS constraint.
    """
    pos = np.asarray(pos, dtype=float)
    cfg = model.cfg
    n0 = cfg.n0_w
    z_u = model.z_users(pos)
    z_tu = model.z_tbs(pos)
    u_count = cfg.u_users
    floor_dl = 1e-6 * cfg.p_uav_w / max(u_count * max(len(dl_cols), 1), 1)
    floor_cd = 1e-6 * cfg.p_tbs_w / max(u_count * max(len(cd_cols), 1), 1)
    v_dl = np.zeros((u_count, len(dl_cols)))
    v_cd = np.zeros((u_count, len(cd_cols)))
    for i, m in enumerate(dl_cols):
        for u in range(u_count):
            p_sig = max(powers.p_dl[u, m], floor_dl)
            sig = p_sig * model.omega_bar_dl[u, m] * model.g_dl_abs2[u, u, m]
            interf = sum(powers.p_dl[v, m] * model.omega_bar_dl[u, m] * model.g_dl_abs2[v, u, m]
                         for v in range(u_count) if v != u)
            v_dl[u, i] = np.sqrt(sig) / (interf + n0 * z_u[u])
    for i, m in enumerate(cd_cols):
        for u in range(u_count):
            sig = model.eta_cd[u, m] * max(powers.p_cd[u, m], floor_cd)
            v_cd[u, i] = np.sqrt(sig) / (n0 * z_tu)
    return SurrogateState(powers=powers.copy(), position=pos.copy(), v_dl=v_dl, v_cd=v_cd)


# ---- constraint assembly ------------------------------------------------------------------

@dataclass
class VarMap:
    """Layout of the optimization vector for one frame subproblem."""

    dl_cols: list
    cd_cols: list
    pairs: list                 # [(m_pe, m_sen)]
    u_count: int
    j_count: int
    position_free: bool
    with_psi: bool

    def __post_init__(self):
        nd, nc, np_ = len(self.dl_cols), len(self.cd_cols), len(self.pairs)
        self.dl0 = 0
        self.cd0 = self.dl0 + self.u_count * nd
        self.sen0 = self.cd0 + self.u_count * nc
        self.pe0 = self.sen0 + self.j_count * np_
        nxt = self.pe0 + self.j_count * np_
        self.x_idx = self.y_idx = None
        if self.position_free:
            self.x_idx, self.y_idx = nxt, nxt + 1
            nxt += 2
        self.psi_idx = None
        if self.with_psi:
            self.psi_idx = nxt
            nxt += 1
        self.n = nxt

    def dl(self, u: int, i: int) -> int:
        return self.dl0 + u * len(self.dl_cols) + i

    def cd(self, u: int, i: int) -> int:
        return self.cd0 + u * len(self.cd_cols) + i

    def sen(self, j: int, k: int) -> int:
        return self.sen0 + j * len(self.pairs) + k

    def pe(self, j: int, k: int) -> int:
        return self.pe0 + j * len(self.pairs) + k

    def pack(self, powers: PowerPlan, pos, psi: float = 0.0) -> np.ndarray:
        z = np.zeros(self.n)
        for i, m in enumerate(self.dl_cols):
            for u in range(self.u_count):
                z[self.dl(u, i)] = powers.p_dl[u, m]
        for i, m in enumerate(self.cd_cols):
            for u in range(self.u_count):
                z[self.cd(u, i)] = powers.p_cd[u, m]
        for k, (m_pe, m_sen) in enumerate(self.pairs):
            for j in range(self.j_count):
                z[self.sen(j, k)] = powers.p_sen[j, m_sen]
                z[self.pe(j, k)] = powers.p_pe[j, m_pe]
        if self.position_free:
            z[self.x_idx] = pos[0]
            z[self.y_idx] = pos[1]
        if self.with_psi:
            z[self.psi_idx] = psi
        return z

    def unpack(self, z: np.ndarray, m_subcarriers: int, pos_fallback) -> tuple[PowerPlan, np.ndarray, float]:
        powers = PowerPlan.zeros(self.u_count, self.j_count, m_subcarriers)
        for i, m in enumerate(self.dl_cols):
            for u in range(self.u_count):
                powers.p_dl[u, m] = max(z[self.dl(u, i)], 0.0)
        for i, m in enumerate(self.cd_cols):
            for u in range(self.u_count):
                powers.p_cd[u, m] = max(z[self.cd(u, i)], 0.0)
        for k, (m_pe, m_sen) in enumerate(self.pairs):
            for j in range(self.j_count):
                powers.p_sen[j, m_sen] = max(z[self.sen(j, k)], 0.0)
                powers.p_pe[j, m_pe] = max(z[self.pe(j, k)], 0.0)
        pos = np.asarray(pos_fallback, dtype=float).copy()
        if self.position_free:
            pos[0], pos[1] = z[self.x_idx], z[self.y_idx]
        psi = float(z[self.psi_idx]) if self.with_psi else 0.0
        return powers, pos, psi


@dataclass
class ConstraintBundle:
    """Assembled convex subproblem plus anchor diagnostics."""

    problem: convex.Problem
    varmap: VarMap
    z0: np.ndarray
    anchor_pos: np.ndarray
    anchor_violations: list = field(default_factory=list)
    structurally_infeasible: bool = False
    rate_constraints: dict = field(default_factory=dict)


def _dl_rate_terms(varmap: VarMap, model: FrameModel, state: SurrogateState, u: int,
                   frozen_pos) -> list:
    cfg = model.cfg
    n0 = cfg.n0_w
    terms = []
    users = model.layout.users
    z_gap2 = (cfg.uav_alt_m - users[u, 2]) ** 2
    for i, m in enumerate(varmap.dl_cols):
        lin_idx, lin_w = [], []
        for v in range(varmap.u_count):
            if v != u:
                lin_idx.append(varmap.dl(v, i))
                lin_w.append(model.omega_bar_dl[u, m] * model.g_dl_abs2[v, u, m])
        if varmap.position_free:
            const, pos_w = 0.0, n0
        else:
            z_u = model.z_users(frozen_pos)[u]
            const, pos_w = n0 * z_u, 0.0
        terms.append(convex.RateTerm(
            v=float(state.v_dl[u, i]),
            coef_sqrt=float(np.sqrt(model.omega_bar_dl[u, m] * model.g_dl_abs2[u, u, m])),
            sig_idx=varmap.dl(u, i),
            lin_idx=np.asarray(lin_idx, dtype=int),
            lin_w=np.asarray(lin_w, dtype=float),
            const=const, pos_w=pos_w,
            node_xy=(users[u, 0], users[u, 1]), z_gap2=z_gap2))
    return terms


def _cd_rate_terms(varmap: VarMap, model: FrameModel, state: SurrogateState,
                   frozen_pos) -> list:
    cfg = model.cfg
    n0 = cfg.n0_w
    tbs = np.asarray(cfg.tbs_pos, dtype=float)
    z_gap2 = (cfg.uav_alt_m - tbs[2]) ** 2
    terms = []
    for i, m in enumerate(varmap.cd_cols):
        for u in range(varmap.u_count):
            if varmap.position_free:
                const, pos_w = 0.0, n0
            else:
                const, pos_w = n0 * model.z_tbs(frozen_pos), 0.0
            terms.append(convex.RateTerm(
                v=float(state.v_cd[u, i]),
                coef_sqrt=float(np.sqrt(model.eta_cd[u, m])),
                sig_idx=varmap.cd(u, i),
                lin_idx=np.asarray([], dtype=int), lin_w=np.asarray([], dtype=float),
                const=const, pos_w=pos_w,
                node_xy=(tbs[0], tbs[1]), z_gap2=z_gap2))
    return terms


def build_constraints(model: FrameModel, pairs: list, dl_cols, cd_cols,
                      state: SurrogateState, trust: TrustRegion,
                      smoothing: SmoothingState | None = None,
                      position_free: bool = True,
                      with_psi: bool = False,
                      dl_user_min: float | None = None,
                      cd_total_min: float | None = None,
                      mi_min: float | None = None,
                      sensing_enabled: bool = True,
                      uav_budget_split: bool = False,
                      prev_pos=None,
                      prefactors: tuple[float, float, float] | None = None,
                      uav_budget_margin: float = 0.0) -> ConstraintBundle:
    """Assemble the convexified constraint set of one subproblem iterate.

    uav_budget_split=False pools downlink, probing and relay power into one
    UAV budget; True gives each its own budget (time-division benchmark).
    prefactors overrides the (cd, dl, mi) frame prefactors. uav_budget_margin
    shrinks the UAV budget inside the solve so the linearized relay power
    cannot drift the true spend past the audited budget.
    """
    cfg = model.cfg
    varmap = VarMap(dl_cols=list(dl_cols), cd_cols=list(cd_cols), pairs=list(pairs),
                    u_count=cfg.u_users, j_count=cfg.j_targets,
                    position_free=position_free, with_psi=with_psi)
    n = varmap.n
    anchor = state.powers
    pos0 = np.asarray(state.position, dtype=float)
    pref_cd, pref_dl, pref_mi = prefactors if prefactors is not None else (
        cd_prefactor(cfg.n_slots), dl_prefactor(cfg.n_slots), mi_prefactor(cfg.n_slots))

    anchor_vec = varmap.pack(anchor, pos0, psi=0.0)
    rows_a: list = []
    rows_b: list = []
    row_names: list = []

    def add_row(a: np.ndarray, b: float, name: str):
        rows_a.append(a)
        rows_b.append(b)
        row_names.append(name)

    # nonnegative powers
    n_power = varmap.pe0 + varmap.j_count * len(pairs)
    for i in range(n_power):
        a = np.zeros(n)
        a[i] = -1.0
        add_row(a, 0.0, f"nonneg[{i}]")

    # trust regions on probing/relay powers and position; the power radii are
    # floored by mu but scale with the anchor so coefficient-valued variables
    # (relay amplification) can still move proportionally
    trust_boxes = []
    for k in range(len(pairs)):
        for j in range(varmap.j_count):
            idx = varmap.sen(j, k)
            trust_boxes.append((idx, trust.theta * max(trust.mu_s, 0.5 * anchor_vec[idx]),
                                f"sen[{j},{k}]"))
            idx = varmap.pe(j, k)
            trust_boxes.append((idx, trust.theta * max(trust.mu_p, 0.5 * anchor_vec[idx]),
                                f"pe[{j},{k}]"))
    if position_free:
        trust_boxes.append((varmap.x_idx, trust.bound_x, "x"))
        trust_boxes.append((varmap.y_idx, trust.bound_y, "y"))
    for idx, bound, tag in trust_boxes:
        a = np.zeros(n)
        a[idx] = 1.0
        add_row(a, -anchor_vec[idx] - bound, f"trust+{tag}")
        a = np.zeros(n)
        a[idx] = -1.0
        add_row(a, anchor_vec[idx] - bound, f"trust-{tag}")

    # station power budget
    a = np.zeros(n)
    for i in range(len(varmap.cd_cols)):
        for u in range(varmap.u_count):
            a[varmap.cd(u, i)] = 1.0
    add_row(a, -cfg.p_tbs_w, "tbs-budget")

    # smoothed-L0 exclusivity of the shared half-band (merged formulation only)
    if smoothing is not None:
        if list(dl_cols) != list(cd_cols):
            raise ValueError("the relaxed binary split needs matching DL/CD columns")
        for i, m in enumerate(varmap.dl_cols):
            tr_dl = float(anchor.p_dl[:, m].sum())
            tr_cd = float(anchor.p_cd[:, m].sum())
            int_dl, slope_dl = l0_tangent_coeffs(tr_dl, smoothing.rho_dl)
            int_cd, slope_cd = l0_tangent_coeffs(tr_cd, smoothing.rho_cd)
            a = np.zeros(n)
            for u in range(varmap.u_count):
                a[varmap.dl(u, i)] = slope_dl
                a[varmap.cd(u, i)] = slope_cd
            add_row(a, int_dl + int_cd - 1.0, f"l0[{m}]")

    structurally_infeasible = False
    eta_pe = model.eta_pe_for_pairs(pairs)

    # sensing MI QoS per target and linearized relay power
    relay_rows = np.zeros(n)
    relay_const = 0.0
    if sensing_enabled:
        mi_rows = {j: (np.zeros(n), 0.0) for j in range(varmap.j_count)}
        for k, (m_pe, m_sen) in enumerate(pairs):
            p_sen0 = anchor.p_sen[:, m_sen]
            for j in range(varmap.j_count):
                exp = mi_expansion(j, m_pe, m_sen, anchor.p_pe[j, m_pe], p_sen0,
                                   pos0, model, eta_pe)
                if mi_min is not None:
                    a_j, b_j = mi_rows[j]
                    coeffs = exp.dn / exp.n_val - exp.ds / exp.s_val
                    b_j += float(np.log(exp.n_val) - np.log(exp.s_val))
                    b_j -= coeffs[0] * anchor.p_pe[j, m_pe]
                    a_j[varmap.pe(j, k)] += coeffs[0]
                    for jp in range(varmap.j_count):
                        a_j[varmap.sen(jp, k)] += coeffs[1 + jp]
                        b_j -= coeffs[1 + jp] * p_sen0[jp]
                    if position_free:
                        a_j[varmap.x_idx] += coeffs[-2]
                        a_j[varmap.y_idx] += coeffs[-1]
                        b_j -= coeffs[-2] * pos0[0] + coeffs[-1] * pos0[1]
                    mi_rows[j] = (a_j, b_j)
                # linearized relay power feeds the UAV budget
                relay_const += exp.p_val - exp.dp[0] * anchor.p_pe[j, m_pe]
                relay_rows[varmap.pe(j, k)] += exp.dp[0]
                for jp in range(varmap.j_count):
                    relay_rows[varmap.sen(jp, k)] += exp.dp[1 + jp]
                    relay_const -= exp.dp[1 + jp] * p_sen0[jp]
                if position_free:
                    relay_rows[varmap.x_idx] += exp.dp[-2]
                    relay_rows[varmap.y_idx] += exp.dp[-1]
                    relay_const -= exp.dp[-2] * pos0[0] + exp.dp[-1] * pos0[1]
        if mi_min is not None:
            qos_const = mi_min * LN2 / pref_mi
            for j in range(varmap.j_count):
                a_j, b_j = mi_rows[j]
                if np.max(np.abs(a_j)) < 1e-30 and b_j + qos_const > 0:
                    structurally_infeasible = True
                add_row(a_j, b_j + qos_const, f"mi-qos[{j}]")

    # UAV power budget: pooled, or per task family when split
    def dl_row() -> np.ndarray:
        a = np.zeros(n)
        for i in range(len(varmap.dl_cols)):
            for u in range(varmap.u_count):
                a[varmap.dl(u, i)] = 1.0
        return a

    def sen_row() -> np.ndarray:
        a = np.zeros(n)
        for k in range(len(pairs)):
            for j in range(varmap.j_count):
                a[varmap.sen(j, k)] = 1.0
        return a

    uav_cap = cfg.p_uav_w * (1.0 - uav_budget_margin)
    if uav_budget_split:
        add_row(dl_row(), -uav_cap, "uav-budget-dl")
        if sensing_enabled:
            add_row(sen_row(), -uav_cap, "uav-budget-sen")
            add_row(relay_rows.copy(), relay_const - uav_cap, "uav-budget-relay")
    else:
        a = dl_row()
        if sensing_enabled:
            a += sen_row() + relay_rows
        add_row(a, (relay_const if sensing_enabled else 0.0) - uav_cap, "uav-budget")

    linear = convex.LinearConstraints(np.asarray(rows_a), np.asarray(rows_b))
    smooth: list = []
    rate_constraints: dict = {}
    pos_idx = (varmap.x_idx, varmap.y_idx) if position_free else None

    if dl_user_min is not None:
        for u in range(varmap.u_count):
            rc = convex.RateConstraint(_dl_rate_terms(varmap, model, state, u, pos0),
                                       kappa=pref_dl / LN2, thresh=dl_user_min,
                                       pos_idx=pos_idx)
            smooth.append(rc)
            rate_constraints[f"dl-user[{u}]"] = rc
    if cd_total_min is not None:
        rc = convex.RateConstraint(_cd_rate_terms(varmap, model, state, pos0),
                                   kappa=pref_cd / LN2, thresh=cd_total_min,
                                   pos_idx=pos_idx)
        smooth.append(rc)
        rate_constraints["cd-min"] = rc
    if with_psi:
        all_dl_terms = []
        for u in range(varmap.u_count):
            all_dl_terms.extend(_dl_rate_terms(varmap, model, state, u, pos0))
        rc = convex.RateConstraint(all_dl_terms, kappa=pref_dl / LN2, thresh=0.0,
                                   psi_idx=varmap.psi_idx, pos_idx=pos_idx)
        smooth.append(rc)
        rate_constraints["dl-psi"] = rc
        rc = convex.RateConstraint(_cd_rate_terms(varmap, model, state, pos0),
                                   kappa=pref_cd / LN2, thresh=0.0,
                                   psi_idx=varmap.psi_idx, pos_idx=pos_idx)
        smooth.append(rc)
        rate_constraints["cd-psi"] = rc

    if position_free and prev_pos is not None:
        smooth.append(convex.SphereConstraint((varmap.x_idx, varmap.y_idx),
                                              (prev_pos[0], prev_pos[1]),
                                              cfg.max_step_m))

    scales = np.ones(n)
    p_scale = cfg.p_uav_w / max(len(varmap.dl_cols) * varmap.u_count, 1)
    scales[:varmap.sen0] = max(p_scale, 1e-6)
    for k in range(len(pairs)):
        for j in range(varmap.j_count):
            scales[varmap.sen(j, k)] = max(cfg.p_uav_w / 8.0, 1e-6)
            scales[varmap.pe(j, k)] = max(anchor.p_pe[j, pairs[k][0]], 1.0)
    if position_free:
        scales[varmap.x_idx] = scales[varmap.y_idx] = max(trust.bound_x, 1.0)
    if with_psi:
        scales[varmap.psi_idx] = 10.0

    problem = convex.Problem(n=n, objective=convex.LinearObjective(np.zeros(n)),
                             linear=linear, smooth=smooth, scales=scales)

    z0 = anchor_vec
    violations = []
    vals = linear.values(z0)
    for name, v in zip(row_names, vals):
        if v >= 0:
            violations.append(f"{name}: violation {v:.3e}")
    for name, rc in rate_constraints.items():
        if not varmap.with_psi or rc.psi_idx is None:
            v = rc.value(z0)
            if not np.isfinite(v) or v >= 0:
                violations.append(f"{name}: violation {v:.3e}")
    for c in smooth:
        if isinstance(c, convex.SphereConstraint):
            v = c.value(z0)
            if v >= 0:
                violations.append(f"velocity: violation {v:.3e}")

    return ConstraintBundle(problem=problem, varmap=varmap, z0=z0, anchor_pos=pos0,
                            anchor_violations=violations,
                            structurally_infeasible=structurally_infeasible,
                            rate_constraints=rate_constraints)
