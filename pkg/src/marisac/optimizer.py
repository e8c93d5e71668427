"""Two-stage joint optimization of UAV position, subcarrier split and powers.

Stage one finds the closest-to-takeoff operating position that satisfies all
QoS constraints: candidates march from the emergency area toward the coast
until the convexified feasibility problem turns solvable, then a double-layer
local refinement shrinks the takeoff distance. Stage two maximizes the
end-to-end rate frame by frame under the sensing-MI floor, re-running the
greedy subcarrier split with a conditional swap whenever the achieved MI
regressed.

Each frame runs two SCA phases: a short merged phase with the smoothed-L0
relaxation that decides the DL/CD subcarrier split, then the main ascent on
the rounded (hard) split whose epigraph value is a true lower bound on the
achieved end-to-end rate. Every subproblem is solved by the in-repo
log-barrier Newton method.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import convex
from .allocation import SenPeSets, SmoothingState, greedy_sen_pe, repair_pairs
from .metrics import (FrameModel, FrameResult, PowerPlan, SubcarrierPlan,
                      build_frame_model, cd_prefactor, dl_prefactor,
                      evaluate_frame, mi_prefactor, mi_relay_power,
                      mi_signal_noise, rate_cd_masked, rate_dl_masked,
                      tbs_power_used)
from .scenario import NodeLayout, ScenarioConfig
from .surrogates import TrustRegion, build_constraints, refresh_state

LN2 = np.log(2.0)


class MissionInfeasible(RuntimeError):
    """No candidate operating position satisfies the QoS constraints."""


# headroom kept inside every solve so linearization drift of the relay power
# cannot push the true UAV spend past the audited budget
UAV_BUDGET_MARGIN = 2e-3


@dataclass
class SolveResult:
    """Outcome of one convex subproblem."""

    powers: PowerPlan
    position: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    psi: float = 0.0


@dataclass(frozen=True)
class ElaConfig:
    """Initial-position search: step vector, thresholds, iteration caps."""

    l_step: np.ndarray
    epsilon: float = 1.0
    epsilon_prime: float = 0.5
    max_outer: int = 12
    max_inner: int = 6

    def __post_init__(self):
        if self.epsilon <= 0 or self.epsilon_prime <= 0:
            raise ValueError("thresholds must be positive")
        if self.epsilon_prime > self.epsilon:
            raise ValueError("inner threshold must not exceed the outer one")

    @classmethod
    def defaults(cls, cfg: ScenarioConfig, step_m: float = 100.0) -> "ElaConfig":
        da = np.asarray(cfg.area_center, dtype=float)
        tbs = np.asarray(cfg.tbs_pos, dtype=float)
        direction = da[:2] - tbs[:2]
        norm = np.linalg.norm(direction)
        if norm == 0:
            direction = np.array([1.0, 0.0])
            norm = 1.0
        step = np.zeros(3)
        step[:2] = direction / norm * step_m
        return cls(l_step=step)


@dataclass(frozen=True)
class SchemeOptions:
    """Which constraint structure a scheme uses."""

    merged_split: bool = True        # relaxed DL/CD split with smoothed L0
    sensing: bool = True
    mi_qos: bool = True
    budget_split: bool = False       # per-phase UAV budgets (time-division frame)
    prefactors: tuple | None = None  # (cd, dl, mi) overrides
    random_allocation: bool = False
    full_band: bool = False          # every phase uses all M subcarriers

    def frame_prefactors(self, cfg: ScenarioConfig) -> tuple[float, float, float]:
        if self.prefactors is not None:
            return self.prefactors
        return (cd_prefactor(cfg.n_slots), dl_prefactor(cfg.n_slots),
                mi_prefactor(cfg.n_slots))


PROPOSED = SchemeOptions()
NO_SENS_QOS = SchemeOptions(sensing=False, mi_qos=False)
RAN_SUB = SchemeOptions(merged_split=False, random_allocation=True)


def tdma_options(cfg: ScenarioConfig, slots=(2, 4, 2, 1, 1)) -> SchemeOptions:
    """Time-division benchmark frame: (cd, dl, sen, pe, guard) slot counts."""
    cd_s, dl_s, sen_s, pe_s, guard = slots
    if cd_s + dl_s + sen_s + pe_s + guard != cfg.n_slots:
        raise ValueError("slot split must cover the whole frame")
    return SchemeOptions(merged_split=False, budget_split=True, full_band=True,
                         prefactors=(cd_s / cfg.n_slots, dl_s / cfg.n_slots,
                                     pe_s / cfg.n_slots))


# ---- allocation bookkeeping -------------------------------------------------------

@dataclass
class FramePlan:
    """Resolved subcarrier structure for one frame's optimization."""

    pairs: list          # global [(m_pe, m_sen)]
    dl_cols: list        # global DL candidate columns
    cd_cols: list        # global CD candidate columns
    sets: SenPeSets | None = None   # local sets, kept for the dynamic swap


def sensing_half(cfg: ScenarioConfig) -> np.ndarray:
    return np.arange(cfg.m_subcarriers // 2, cfg.m_subcarriers)


def data_half(cfg: ScenarioConfig) -> np.ndarray:
    return np.arange(0, cfg.m_subcarriers // 2)


def allocation_traces(model: FrameModel, pos) -> tuple[np.ndarray, np.ndarray]:
    """(probing-gain, fronthaul-gain) traces over the sensing half-band."""
    cfg = model.cfg
    cols = sensing_half(cfg)
    z_t = model.z_targets(pos)
    z_tu = model.z_tbs(pos)
    omega_tr = np.array([float(np.sum(model.omega_bar_sen[:, m] / z_t**2)) for m in cols])
    lambda_tr = np.array([float(np.sum(model.eta_pe_sorted[:, m] / z_tu)) for m in cols])
    return omega_tr, lambda_tr


def make_frame_plan(cfg: ScenarioConfig, model: FrameModel, pos,
                    options: SchemeOptions, rng: np.random.Generator | None = None,
                    repair_args: tuple | None = None) -> FramePlan:
    """Build this frame's pair list and DL/CD candidate columns."""
    if options.full_band:
        all_m = list(range(cfg.m_subcarriers))
        return FramePlan(pairs=[(m, m) for m in all_m], dl_cols=all_m, cd_cols=all_m)

    half = sensing_half(cfg)
    md = list(data_half(cfg))
    quarter = cfg.m_subcarriers // 4
    if options.random_allocation:
        if rng is None:
            raise ValueError("random allocation needs a scheme-local stream")
        perm = rng.permutation(len(half))
        sen_local = sorted(int(i) for i in perm[:quarter])
        pe_local = [int(i) for i in perm[quarter:]]
        pe_perm = rng.permutation(quarter)
        sets = SenPeSets(sen=sen_local, pe=pe_local,
                         pairs=[(pe_local[int(pe_perm[k])], sen_local[k])
                                for k in range(quarter)])
        # uniform per-subcarrier draw; sizes vary, only |CD|+|DL| = M/2 holds
        coin = rng.integers(0, 2, size=len(md))
        dl_cols = sorted(md[i] for i in range(len(md)) if coin[i])
        cd_cols = sorted(set(md) - set(dl_cols))
        if not dl_cols:
            dl_cols = [cd_cols.pop(int(rng.integers(len(cd_cols))))]
        if not cd_cols:
            cd_cols = [dl_cols.pop(int(rng.integers(len(dl_cols))))]
            dl_cols = sorted(dl_cols)
            cd_cols = sorted(cd_cols)
        pairs = [(int(half[p]), int(half[s])) for p, s in sets.pairs]
        return FramePlan(pairs=pairs, dl_cols=list(dl_cols), cd_cols=list(cd_cols),
                         sets=sets)

    omega_tr, lambda_tr = allocation_traces(model, pos)
    sets = greedy_sen_pe(omega_tr, lambda_tr, cfg.m_subcarriers)
    if repair_args is not None:
        prev_mi, curr_mi = repair_args
        sets = repair_pairs(prev_mi, curr_mi, sets, lambda_tr, omega_tr)
    pairs = [(int(half[p]), int(half[s])) for p, s in sets.pairs]
    return FramePlan(pairs=pairs, dl_cols=list(md), cd_cols=list(md), sets=sets)


def finalize_plan(cfg: ScenarioConfig, frame_plan: FramePlan, dl_cols, cd_cols) -> SubcarrierPlan:
    """Binary plan from the resolved split (after rounding, for merged mode)."""
    m = cfg.m_subcarriers
    alpha = {k: np.zeros(m, dtype=bool) for k in ("dl", "cd", "sen", "pe")}
    for mm in dl_cols:
        alpha["dl"][mm] = True
    for mm in cd_cols:
        alpha["cd"][mm] = True
    for m_pe, m_sen in frame_plan.pairs:
        alpha["pe"][m_pe] = True
        alpha["sen"][m_sen] = True
    plan = SubcarrierPlan(alpha_dl=alpha["dl"], alpha_cd=alpha["cd"],
                          alpha_sen=alpha["sen"], alpha_pe=alpha["pe"],
                          pairs=list(frame_plan.pairs))
    if not _full_band_plan(cfg, frame_plan):
        plan.validate(m)
    return plan


def _full_band_plan(cfg: ScenarioConfig, frame_plan: FramePlan) -> bool:
    return len(frame_plan.pairs) == cfg.m_subcarriers


# ---- initialization -----------------------------------------------------------------

# equal-power shares of the UAV budget at the start of every frame's iteration
DL_SHARE = 0.45
SEN_SHARE = 0.25
CD_SHARE = 0.95  # of the station budget
PE_BUDGET_MARGIN = 0.98


def equal_power_init(cfg: ScenarioConfig, frame_plan: FramePlan,
                     options: SchemeOptions) -> PowerPlan:
    """Spread the budgets equally over the candidate columns."""
    powers = PowerPlan.zeros(cfg.u_users, cfg.j_targets, cfg.m_subcarriers)
    if options.budget_split:
        dl_total = 0.95 * cfg.p_uav_w
    else:
        dl_total = (DL_SHARE if options.sensing else 0.95) * cfg.p_uav_w
    per_dl = dl_total / max(cfg.u_users * len(frame_plan.dl_cols), 1)
    for m in frame_plan.dl_cols:
        powers.p_dl[:, m] = per_dl
    per_cd = CD_SHARE * cfg.p_tbs_w / max(cfg.u_users * len(frame_plan.cd_cols), 1)
    for m in frame_plan.cd_cols:
        powers.p_cd[:, m] = per_cd
    if options.sensing and frame_plan.pairs:
        # each pair probes the target holding its dominant fronthaul slot, so
        # no target starts buried under the others' echo interference; the
        # other targets get a sliver so every variable starts strictly inside
        sen_total = (0.95 if options.budget_split else SEN_SHARE) * cfg.p_uav_w
        per_pair = sen_total / len(frame_plan.pairs)
        for k, (_, m_sen) in enumerate(frame_plan.pairs):
            powers.p_sen[:, m_sen] = 1e-6 * per_pair
            powers.p_sen[k % cfg.j_targets, m_sen] = per_pair
    return powers


def pe_residual_budget(cfg: ScenarioConfig, powers: PowerPlan,
                       options: SchemeOptions) -> float:
    if options.budget_split:
        return 0.95 * cfg.p_uav_w
    return cfg.p_uav_w - float(powers.p_dl.sum()) - float(powers.p_sen.sum())


def relay_cost_coefficients(model: FrameModel, pairs, powers: PowerPlan, pos) -> np.ndarray:
    """c[j, k]: relay transmit power per unit p_pe of target j on pair k."""
    cfg = model.cfg
    z_t = model.z_targets(pos)
    cost = np.zeros((cfg.j_targets, len(pairs)))
    for k, (_, m_sen) in enumerate(pairs):
        g2 = np.abs(model.g_sen[:, :, m_sen]) ** 2
        for j in range(cfg.j_targets):
            gain = g2[j, :] * model.omega_bar_sen[:, m_sen] / z_t**2
            cost[j, k] = float(np.dot(powers.p_sen[:, m_sen], gain + cfg.xi_sic)
                               + cfg.n0_w)
    return cost


def init_pe_power(model: FrameModel, pairs, powers: PowerPlan, pos,
                  budget: float) -> PowerPlan:
    """Fairness-optimal echo-forward coefficients (max-min linear program).

    Maximizes the smallest per-target sum of stream gain times relay power
    subject to the residual UAV budget; probing and downlink anchors stay
    fixed. The returned coefficients are backed off the budget boundary so
    the next subproblem starts strictly inside.
    """
    if budget <= 0:
        raise MissionInfeasible("no residual budget left for echo forwarding")
    cfg = model.cfg
    eta_pe = model.eta_pe_for_pairs(pairs)
    cost = relay_cost_coefficients(model, pairs, powers, pos)
    j_count, k_count = cost.shape
    n = j_count * k_count + 1  # p variables then chi
    gain = np.zeros((j_count, k_count))
    for k, (m_pe, _) in enumerate(pairs):
        gain[:, k] = eta_pe[:, m_pe] * cost[:, k]

    rows_a, rows_b = [], []
    for idx in range(j_count * k_count):
        a = np.zeros(n)
        a[idx] = -1.0
        rows_a.append(a)
        rows_b.append(0.0)
    for j in range(j_count):
        a = np.zeros(n)
        for k in range(k_count):
            a[j * k_count + k] = -gain[j, k]
        a[-1] = 1.0
        rows_a.append(a)
        rows_b.append(0.0)
    a = np.zeros(n)
    a[: j_count * k_count] = cost.reshape(-1)
    rows_a.append(a)
    rows_b.append(-budget)

    c = np.zeros(n)
    c[-1] = -1.0  # maximize chi
    p_scale = budget / max(cost.mean() * j_count * k_count, 1e-300)
    scales = np.full(n, max(p_scale, 1e-9))
    scales[-1] = max(float(gain.mean()) * p_scale, 1e-9)
    problem = convex.Problem(n=n, objective=convex.LinearObjective(c),
                             linear=convex.LinearConstraints(np.asarray(rows_a),
                                                             np.asarray(rows_b)),
                             scales=scales)
    z0 = np.zeros(n)
    z0[: j_count * k_count] = 0.25 * budget / (cost.reshape(-1) * j_count * k_count)
    fairness0 = min(float(gain[j] @ z0[j * k_count:(j + 1) * k_count]) for j in range(j_count))
    z0[-1] = 0.5 * fairness0
    res = convex.solve_barrier(problem, z0)
    out = powers.copy()
    floor = 1e-9 * float(np.max(res.z[: j_count * k_count], initial=0.0))
    for k, (m_pe, _) in enumerate(pairs):
        for j in range(j_count):
            out.p_pe[j, m_pe] = max(res.z[j * k_count + k], floor) * PE_BUDGET_MARGIN
    return out



def _seed_dl_powers(powers: PowerPlan, model: FrameModel, dl_cols, dl_budget: float,
                    u_count: int) -> None:
    """Give every user an equal budget share, concentrated on its own columns.

    Users are greedily assigned (nearly) exclusive columns by channel gain:
    angularly aligned users are interference-limited when they share a
    subcarrier, and a symmetric spread is a fixed point the quadratic
    transform cannot escape. A small remainder keeps all entries interior.
    """
    if not dl_cols or dl_budget <= 0:
        return
    cols = list(dl_cols)
    per_user = dl_budget / u_count
    cap_max = -(-u_count // len(cols))  # ceil: users per column when U > cols
    load = {m: 0 for m in cols}
    order = sorted(range(u_count),
                   key=lambda u: -float(np.max(model.omega_bar_dl[u, cols])))
    spread = 0.02 * per_user
    for u in order:
        open_cols = [m for m in cols if load[m] < cap_max]
        best = max(open_cols, key=lambda m: model.omega_bar_dl[u, m])
        load[best] += 1
        powers.p_dl[u, cols] = spread / len(cols)
        powers.p_dl[u, best] += per_user - spread


def init_frame_powers(cfg: ScenarioConfig, model: FrameModel, frame_plan: FramePlan,
                      options: SchemeOptions, pos) -> PowerPlan:
    """Budget-split start plus the fairness-optimal echo-forward coefficients.

    Downlink powers are seeded proportional to the per-(user, subcarrier)
    channel gains instead of a flat split: a symmetric start is a fixed point
    of the quadratic-transform iteration when users are angularly aligned,
    and the weighting breaks that symmetry toward per-subcarrier user
    separation.
    """
    powers = equal_power_init(cfg, frame_plan, options)
    dl_budget = float(powers.p_dl.sum())
    _seed_dl_powers(powers, model, frame_plan.dl_cols, dl_budget, cfg.u_users)
    if options.sensing and frame_plan.pairs:
        budget = pe_residual_budget(cfg, powers, options)
        powers = init_pe_power(model, frame_plan.pairs, powers, pos, budget)
    return powers


# ---- one convex iteration --------------------------------------------------------------

@dataclass
class FrameContext:
    """Everything fixed during one frame's SCA loop."""

    cfg: ScenarioConfig
    model: FrameModel
    frame_plan: FramePlan
    options: SchemeOptions
    trust: TrustRegion
    dl_user_min: float | None
    cd_total_min: float | None
    mi_min: float | None
    prev_pos: np.ndarray | None       # velocity anchor (None for frame 1)
    position_free: bool = True
    dl_cols: list | None = None       # hard split override (post-rounding)
    cd_cols: list | None = None
    k_offset: int = 0                 # warm frames start with shrunk trust

    def columns(self) -> tuple[list, list]:
        dl = self.dl_cols if self.dl_cols is not None else self.frame_plan.dl_cols
        cd = self.cd_cols if self.cd_cols is not None else self.frame_plan.cd_cols
        return dl, cd

    def pairs(self) -> list:
        return self.frame_plan.pairs if self.options.sensing else []


def solve_iteration(ctx: FrameContext, anchor_powers: PowerPlan, anchor_pos,
                    k: int, objective: str, smoothing: SmoothingState | None,
                    takeoff=None, warmups: int = 2) -> SolveResult:
    """Refresh surrogates at the anchor, assemble and solve one subproblem.

    When phase 1 fails, the surrogate is rebuilt at the phase-1 minimizer and
    retried: the v auxiliaries undervalue the achievable rates away from the
    anchor, so a fresh linearization can certify points a stale one cannot.
    """
    cfg = ctx.cfg
    dl_cols, cd_cols = ctx.columns()
    anchor_pos = np.asarray(anchor_pos, dtype=float)
    for attempt in range(warmups + 1):
        state = refresh_state(anchor_powers, anchor_pos, ctx.model, dl_cols, cd_cols)
        trust = ctx.trust.at_iteration(k + ctx.k_offset)
        bundle = build_constraints(
            ctx.model, ctx.pairs(), dl_cols, cd_cols, state, trust,
            smoothing=smoothing if ctx.options.merged_split else None,
            position_free=ctx.position_free,
            with_psi=(objective == "psi"),
            dl_user_min=ctx.dl_user_min,
            cd_total_min=ctx.cd_total_min,
            mi_min=ctx.mi_min if ctx.options.mi_qos else None,
            sensing_enabled=ctx.options.sensing,
            uav_budget_split=ctx.options.budget_split,
            prev_pos=ctx.prev_pos if ctx.position_free else None,
            prefactors=ctx.options.frame_prefactors(cfg),
            uav_budget_margin=UAV_BUDGET_MARGIN)
        if bundle.structurally_infeasible:
            return SolveResult(anchor_powers, anchor_pos, np.inf,
                               convex.INFEASIBLE, np.inf)

        varmap = bundle.varmap
        if objective == "distance":
            takeoff = np.asarray(takeoff, dtype=float)
            scale = max(1.0, float(np.sum((anchor_pos[:2] - takeoff[:2]) ** 2)))
            bundle.problem.objective = convex.DistanceObjective(
                (varmap.x_idx, varmap.y_idx), (takeoff[0], takeoff[1]), scale)
        elif objective == "psi":
            c = np.zeros(varmap.n)
            c[varmap.psi_idx] = -1.0
            bundle.problem.objective = convex.LinearObjective(c)
        else:
            raise ValueError(f"unknown objective {objective!r}")

        if objective == "psi":
            # the epigraph rows are always satisfiable by lowering psi, and
            # would make phase 1 unbounded; find feasibility without them,
            # then slot psi just under the achieved surrogate rates
            feas_problem = convex.Problem(
                n=bundle.problem.n, objective=bundle.problem.objective,
                linear=bundle.problem.linear,
                smooth=[c for c in bundle.problem.smooth
                        if getattr(c, "psi_idx", None) is None],
                scales=bundle.problem.scales)
        else:
            feas_problem = bundle.problem
        z_start, feasible = convex.find_feasible(feas_problem, bundle.z0,
                                                 return_point=True)
        if feasible and objective == "psi":
            r_dl0 = bundle.rate_constraints["dl-psi"].rate(z_start)
            r_cd0 = bundle.rate_constraints["cd-psi"].rate(z_start)
            psi0 = min(r_dl0, r_cd0)
            z_start = z_start.copy()
            z_start[varmap.psi_idx] = psi0 - max(1e-9, 1e-9 * abs(psi0))
        if feasible:
            res = convex.solve_barrier(bundle.problem, z_start, gap_tol=1e-6,
                                       kkt_tol=1e-6)
            powers, pos, psi = varmap.unpack(res.z, cfg.m_subcarriers, anchor_pos)
            return SolveResult(powers=powers, position=pos, objective=res.objective,
                               status=res.status, kkt_residual=res.kkt_residual,
                               psi=psi)
        # re-anchor at the phase-1 minimizer and rebuild the surrogate; on the
        # last retry also respread the downlink powers so a symmetric stall
        # (users piled on the same columns) cannot survive the warmup
        anchor_powers, anchor_pos, _ = varmap.unpack(z_start, cfg.m_subcarriers,
                                                     anchor_pos)
        if attempt == warmups - 1 and _users_piled_up(anchor_powers, dl_cols):
            dl_total = float(sum(anchor_powers.p_dl[:, m].sum() for m in dl_cols))
            _seed_dl_powers(anchor_powers, ctx.model, dl_cols, dl_total, cfg.u_users)
    return SolveResult(anchor_powers, anchor_pos, np.inf, convex.INFEASIBLE, np.inf)


# ---- rate-maximization SCA loop ----------------------------------------------------

def _initial_smoothing(ctx: FrameContext, powers: PowerPlan) -> SmoothingState:
    dl_cols, cd_cols = ctx.columns()
    dl_tr = [powers.p_dl[:, m].sum() for m in dl_cols]
    cd_tr = [powers.p_cd[:, m].sum() for m in cd_cols]
    return SmoothingState.for_traces(dl_tr, cd_tr, ctx.cfg.p_uav_w)


@dataclass
class ScaOutcome:
    powers: PowerPlan
    position: np.ndarray
    psi: float
    psi_trace: list
    iterations: int
    feasible: bool
    kkt_residual: float = np.nan


SCA_ACCEPT_SLACK = 1e-3


def _true_mi_totals(ctx: FrameContext, powers: PowerPlan, pos) -> np.ndarray:
    """Per-target MI on the context's pair list (bit/s/Hz)."""
    pairs = ctx.pairs()
    totals = np.zeros(ctx.cfg.j_targets)
    if not pairs:
        return totals
    pref_mi = ctx.options.frame_prefactors(ctx.cfg)[2]
    eta_pe = ctx.model.eta_pe_for_pairs(pairs)
    for m_pe, m_sen in pairs:
        for j in range(ctx.cfg.j_targets):
            s_val, n_val = mi_signal_noise(j, m_pe, m_sen, powers, ctx.model, pos, eta_pe)
            totals[j] += pref_mi * (np.log(s_val) - np.log(n_val)) / LN2
    return totals


def _true_uav_power(ctx: FrameContext, powers: PowerPlan, pos) -> tuple[float, float, float]:
    dl = float(sum(powers.p_dl[:, m].sum() for m in ctx.columns()[0]))
    sen = float(sum(powers.p_sen[:, m_sen].sum() for _, m_sen in ctx.pairs()))
    relay = 0.0
    for m_pe, m_sen in ctx.pairs():
        for j in range(ctx.cfg.j_targets):
            relay += mi_relay_power(j, m_pe, m_sen, powers, ctx.model, pos)
    return dl, sen, relay


def _iterate_acceptable(ctx: FrameContext, res: SolveResult,
                        anchor_mi: np.ndarray, anchor_power_ok: bool) -> tuple[bool, np.ndarray]:
    """Filter on the true metrics: the linearized step must not walk the true
    MI or the true power budget away from feasibility."""
    cfg = ctx.cfg
    mi_now = _true_mi_totals(ctx, res.powers, res.position)
    if ctx.options.mi_qos and ctx.mi_min is not None:
        slack = SCA_ACCEPT_SLACK * max(1.0, ctx.mi_min)
        for j in range(cfg.j_targets):
            if mi_now[j] < ctx.mi_min - slack and mi_now[j] < anchor_mi[j] - slack:
                return False, mi_now
    dl, sen, relay = _true_uav_power(ctx, res.powers, res.position)
    cap = cfg.p_uav_w * (1.0 + 1e-9)  # solves keep margin, so truth fits the budget
    if ctx.options.budget_split:
        power_ok = dl <= cap and sen <= cap and relay <= cap
    else:
        power_ok = dl + sen + relay <= cap
    if not power_ok and anchor_power_ok:
        return False, mi_now
    return True, mi_now


def run_rate_sca(ctx: FrameContext, init_powers: PowerPlan, init_pos,
                 max_iters: int = 50, rel_tol: float = 1e-4,
                 anneal: bool = True) -> ScaOutcome:
    """Maximize the end-to-end rate epigraph; the recorded trace never decreases.

    An iteration whose subproblem turns infeasible, regresses the objective,
    or drifts the true MI/power constraints (linearization error) is retried
    from the same anchor with a sharper trust shrink instead of aborting.
    """
    cfg = ctx.cfg
    anchor_p, anchor_pos = init_powers, np.asarray(init_pos, dtype=float)
    smoothing = _initial_smoothing(ctx, init_powers) if ctx.options.merged_split else None
    psi_trace: list = []
    best: SolveResult | None = None
    iters = 0
    kkt = np.nan
    k_shrink = 0  # trust decay level, only ratcheted up
    accepted = 0
    anchor_mi = _true_mi_totals(ctx, anchor_p, anchor_pos)
    dl0, sen0, relay0 = _true_uav_power(ctx, anchor_p, anchor_pos)
    anchor_power_ok = dl0 + sen0 + relay0 <= cfg.p_uav_w * (1.0 + 1e-9)
    while iters < max_iters:
        res = solve_iteration(ctx, anchor_p, anchor_pos, max(k_shrink, accepted),
                              "psi", smoothing)
        iters += 1
        bad = (res.status == convex.INFEASIBLE
               or (psi_trace and res.psi < psi_trace[-1] - 1e-9))
        structural = res.status == convex.INFEASIBLE and accepted == 0
        mi_now = anchor_mi
        if not bad:
            ok, mi_now = _iterate_acceptable(ctx, res, anchor_mi, anchor_power_ok)
            bad = not ok
        if bad:
            if max(k_shrink, accepted) >= 28:  # theta already at its floor
                break
            if structural and iters >= 3:
                break  # an anchor-infeasible start will not improve by shrinking
            k_shrink = max(k_shrink, accepted) + 4
            continue
        psi_trace.append(res.psi)
        best = res
        kkt = res.kkt_residual
        anchor_p, anchor_pos = res.powers, res.position
        anchor_mi = mi_now
        accepted += 1
        if smoothing is not None and anneal:
            dl_cols, _ = ctx.columns()
            dl_tr = [anchor_p.p_dl[:, m].sum() for m in dl_cols]
            cd_tr = [anchor_p.p_cd[:, m].sum() for m in dl_cols]
            smoothing = smoothing.tightened(dl_tr, cd_tr)
        if len(psi_trace) > 1 and abs(psi_trace[-1] - psi_trace[-2]) <= rel_tol * max(1.0, abs(psi_trace[-1])):
            break
    if best is None:
        return ScaOutcome(init_powers, anchor_pos, -np.inf, psi_trace, iters, False)
    return ScaOutcome(best.powers, best.position, psi_trace[-1], psi_trace, iters,
                      True, kkt)


def round_split(powers: PowerPlan, md_cols) -> tuple[list, list]:
    """Assign each shared subcarrier to the side holding the larger share of
    its own budget there (raw traces would let the bigger station budget win
    every column)."""
    md_cols = list(md_cols)
    dl_tr = np.array([powers.p_dl[:, m].sum() for m in md_cols])
    cd_tr = np.array([powers.p_cd[:, m].sum() for m in md_cols])
    dl_share = dl_tr / dl_tr.sum() if dl_tr.sum() > 0 else np.zeros_like(dl_tr)
    cd_share = cd_tr / cd_tr.sum() if cd_tr.sum() > 0 else np.zeros_like(cd_tr)
    dl_cols = [m for m, ds, cs in zip(md_cols, dl_share, cd_share) if cs < ds]
    cd_cols = [m for m in md_cols if m not in dl_cols]
    # keep both links alive: hand over the weakest subcarrier of the bigger side
    if not dl_cols and cd_cols:
        mv = min(cd_cols, key=lambda m: powers.p_cd[:, m].sum())
        cd_cols.remove(mv)
        dl_cols.append(mv)
    if not cd_cols and dl_cols:
        mv = min(dl_cols, key=lambda m: powers.p_dl[:, m].sum())
        dl_cols.remove(mv)
        cd_cols.append(mv)
    return sorted(dl_cols), sorted(cd_cols)


def apply_split(powers: PowerPlan, dl_cols, cd_cols, md_cols) -> PowerPlan:
    out = powers.copy()
    for m in md_cols:
        if m not in dl_cols:
            out.p_dl[:, m] = 0.0
        if m not in cd_cols:
            out.p_cd[:, m] = 0.0
    return out


def split_candidates(powers: PowerPlan, md_cols) -> list:
    """Hard splits to try, best guess first.

    Starts from the relative-share rounding, then rebalances one column at a
    time toward an even split (a lopsided split can cap the shared-column
    user rates below their QoS no matter the power), ranking columns by the
    relaxed solution's own power traces.
    """
    md_cols = list(md_cols)
    dl0, cd0 = round_split(powers, md_cols)
    cands = [(list(dl0), list(cd0))]
    dl, cd = list(dl0), list(cd0)
    while abs(len(dl) - len(cd)) > 1:
        if len(dl) < len(cd):
            mv = max(cd, key=lambda m: powers.p_dl[:, m].sum())
            cd.remove(mv)
            dl.append(mv)
        else:
            mv = max(dl, key=lambda m: powers.p_cd[:, m].sum())
            dl.remove(mv)
            cd.append(mv)
        cands.append((sorted(dl), sorted(cd)))
    return cands


def reseed_split_powers(cfg: ScenarioConfig, model: FrameModel, powers: PowerPlan,
                        dl_cols, cd_cols, md_cols) -> PowerPlan:
    """Re-project the shared-band budgets onto the surviving columns.

    A user that keeps a real share of its power on the surviving downlink
    columns just gets its dropped spend scaled back onto them (preserving the
    user separation the relaxed phase found); a user stranded on columns that
    went to the other link is re-spread channel-weighted so its rate-QoS
    constraint keeps a live gradient.
    """
    out = apply_split(powers, dl_cols, cd_cols, md_cols)
    for u in range(cfg.u_users):
        original = float(sum(powers.p_dl[u, m] for m in md_cols))
        surviving = float(sum(out.p_dl[u, m] for m in dl_cols))
        if original <= 0 or not dl_cols:
            continue
        if surviving >= 0.2 * original:
            out.p_dl[u, dl_cols] *= original / surviving
        else:
            w = model.omega_bar_dl[u, dl_cols] ** 1.5
            total = float(w.sum())
            if total <= 0:
                w = np.ones(len(dl_cols))
                total = float(w.sum())
            out.p_dl[u, dl_cols] = original * w / total
    if _users_piled_up(out, dl_cols):
        # near-parallel user allocations sit on the symmetric saddle of the
        # quadratic-transform iteration; reassign exclusive columns
        dl_total = float(sum(out.p_dl[:, m].sum() for m in dl_cols))
        _seed_dl_powers(out, model, dl_cols, dl_total, cfg.u_users)
    if cd_cols:
        cd_original = float(sum(powers.p_cd[:, m].sum() for m in md_cols))
        cd_surviving = float(sum(out.p_cd[:, m].sum() for m in cd_cols))
        target = min(max(cd_original, 0.5 * CD_SHARE * cfg.p_tbs_w),
                     CD_SHARE * cfg.p_tbs_w)
        if cd_surviving > 0:
            out.p_cd[:, cd_cols] *= target / cd_surviving
        else:
            out.p_cd[:, cd_cols] = target / (cfg.u_users * len(cd_cols))
    # back the shared-budget side off the cap so the next anchor is interior
    out.p_dl *= 0.98
    out.p_sen *= 0.999
    out.p_pe *= 0.999
    return out


def _users_piled_up(powers: PowerPlan, dl_cols, threshold: float = 0.9) -> bool:
    """True when two users' column allocations are nearly parallel."""
    if not dl_cols:
        return False
    shapes = []
    for row in powers.p_dl[:, dl_cols]:
        norm = float(np.linalg.norm(row))
        if norm > 0:
            shapes.append(row / norm)
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            if float(shapes[i] @ shapes[j]) > threshold:
                return True
    return False


# ---- feasibility audit ----------------------------------------------------------------

REL_TOL_POWER = 1e-6
QOS_TOL = 1e-6
VELOCITY_TOL = 1e-9


@dataclass
class AuditReport:
    ok: bool
    failures: list = field(default_factory=list)


def audit_frame(ctx: FrameContext, plan: SubcarrierPlan, powers: PowerPlan,
                pos, cd_min_override: float | None = None) -> AuditReport:
    """Check the frame against its constraint set on the true metrics."""
    cfg = ctx.cfg
    failures = []
    pref_cd, pref_dl, pref_mi = ctx.options.frame_prefactors(cfg)
    if not _full_band_plan(cfg, ctx.frame_plan):
        try:
            plan.validate(cfg.m_subcarriers)
        except ValueError as exc:
            failures.append(f"plan: {exc}")
    for name, arr in (("p_dl", powers.p_dl), ("p_cd", powers.p_cd),
                      ("p_sen", powers.p_sen), ("p_pe", powers.p_pe)):
        if np.any(arr < -1e-15):
            failures.append(f"{name}: negative entries")

    z_tu = ctx.model.z_tbs(pos)
    z_users = ctx.model.z_users(pos)
    r_cd = rate_cd_masked(powers.p_cd, ctx.model.eta_cd, np.asarray(plan.alpha_cd, bool),
                          z_tu, cfg.n0_w, pref_cd)
    _, per_user = rate_dl_masked(powers.p_dl, ctx.model.omega_bar_dl, ctx.model.g_dl_abs2,
                                 np.asarray(plan.alpha_dl, bool), z_users, cfg.n0_w, pref_dl)
    if ctx.dl_user_min is not None:
        tol = QOS_TOL * max(1.0, ctx.dl_user_min)
        for u in range(cfg.u_users):
            if per_user[u] < ctx.dl_user_min - tol:
                failures.append(f"dl-qos[{u}]: {per_user[u]:.6f} < {ctx.dl_user_min}")
    cd_min = cd_min_override if cd_min_override is not None else ctx.cd_total_min
    if cd_min is not None and r_cd < cd_min - QOS_TOL * max(1.0, cd_min):
        failures.append(f"cd-min: {r_cd:.6f} < {cd_min}")

    if ctx.options.sensing and ctx.options.mi_qos and ctx.mi_min is not None:
        eta_pe = ctx.model.eta_pe_for_pairs(plan.pairs)
        tol = QOS_TOL * max(1.0, ctx.mi_min)
        for j in range(cfg.j_targets):
            total = 0.0
            for pair in plan.pairs:
                s_val, n_val = mi_signal_noise(j, pair[0], pair[1], powers,
                                               ctx.model, pos, eta_pe)
                total += pref_mi * (np.log(s_val) - np.log(n_val)) / LN2
            if total < ctx.mi_min - tol:
                failures.append(f"mi-qos[{j}]: {total:.6f} < {ctx.mi_min}")

    dl_power = float(powers.p_dl[:, np.asarray(plan.alpha_dl, bool)].sum())
    sen_power = float(sum(powers.p_sen[:, m_sen].sum() for _, m_sen in plan.pairs))
    relay_power = 0.0
    for m_pe, m_sen in plan.pairs:
        for j in range(cfg.j_targets):
            relay_power += mi_relay_power(j, m_pe, m_sen, powers, ctx.model, pos)
    cap = cfg.p_uav_w * (1.0 + REL_TOL_POWER)
    if ctx.options.budget_split:
        for name, val in (("dl", dl_power), ("sen", sen_power), ("relay", relay_power)):
            if val > cap:
                failures.append(f"uav-budget-{name}: {val:.9f} > {cfg.p_uav_w}")
    else:
        if dl_power + sen_power + relay_power > cap:
            failures.append(
                f"uav-budget: {dl_power + sen_power + relay_power:.9f} > {cfg.p_uav_w}")
    if tbs_power_used(plan, powers) > cfg.p_tbs_w * (1.0 + REL_TOL_POWER):
        failures.append("tbs-budget exceeded")

    if ctx.prev_pos is not None:
        step = float(np.linalg.norm(np.asarray(pos)[:2] - np.asarray(ctx.prev_pos)[:2]))
        if step > cfg.max_step_m + VELOCITY_TOL:
            failures.append(f"velocity: step {step:.6f} > {cfg.max_step_m}")
    return AuditReport(ok=not failures, failures=failures)


# ---- per-frame optimization -------------------------------------------------------------

MERGED_PHASE_ITERS = 12


def _frame_thresholds(cfg: ScenarioConfig, options: SchemeOptions):
    mi_min = cfg.r_mi_min if (options.sensing and options.mi_qos) else None
    return cfg.r_dl_min, mi_min


def _hard_split_ctx(ctx: FrameContext, dl_cols, cd_cols) -> FrameContext:
    return replace(ctx, dl_cols=list(dl_cols), cd_cols=list(cd_cols),
                   options=replace(ctx.options, merged_split=False))


def _main_sca_and_audit(ctx: FrameContext, powers: PowerPlan, pos, frame: int,
                        max_iters: int, cd_min_override: float | None = None,
                        pin_position: bool = False) -> tuple[FrameResult, SubcarrierPlan, PowerPlan]:
    """Fixed-split SCA to convergence, then audit (with anchored retries)."""
    cfg = ctx.cfg
    dl_cols, cd_cols = ctx.columns()
    plan = finalize_plan(cfg, ctx.frame_plan, dl_cols, cd_cols)
    work_ctx = replace(ctx, position_free=False) if pin_position else ctx

    outcome = run_rate_sca(work_ctx, powers, pos, max_iters=max_iters)
    feasible = outcome.feasible
    powers_f, pos_f = (outcome.powers, outcome.position) if outcome.feasible else (powers, np.asarray(pos, float))
    psi_trace = list(outcome.psi_trace)
    iters = outcome.iterations
    report = audit_frame(work_ctx, plan, powers_f, pos_f, cd_min_override)
    retries = 0
    while feasible and not report.ok and retries < 2:
        extra = run_rate_sca(work_ctx, powers_f, pos_f, max_iters=2, rel_tol=1e-6)
        iters += extra.iterations
        retries += 1
        if not extra.feasible:
            break
        if extra.psi_trace and psi_trace and extra.psi_trace[-1] >= psi_trace[-1] - 1e-9:
            powers_f, pos_f = extra.powers, extra.position
            psi_trace.extend(p for p in extra.psi_trace if p >= psi_trace[-1] - 1e-9)
        report = audit_frame(work_ctx, plan, powers_f, pos_f, cd_min_override)
    feasible = feasible and report.ok
    result = evaluate_frame(frame, plan, powers_f, ctx.model, pos_f, feasible=feasible,
                            sca_iters=iters, psi_trace=psi_trace,
                            prefactors=ctx.options.frame_prefactors(cfg))
    return result, plan, powers_f


@dataclass
class WarmStart:
    """Previous frame's solution, reusable when the plan barely changed."""

    dl_cols: list
    cd_cols: list
    powers: PowerPlan
    pairs: list


def carry_powers(warm: WarmStart, frame_plan: FramePlan, cfg: ScenarioConfig) -> PowerPlan:
    """Transfer the previous solution onto this frame's pair list (by pair
    order) keeping the DL/CD allocations as they were."""
    powers = warm.powers.copy()
    powers.p_sen[:] = 0.0
    powers.p_pe[:] = 0.0
    for k, (m_pe, m_sen) in enumerate(frame_plan.pairs):
        if k < len(warm.pairs):
            old_pe, old_sen = warm.pairs[k]
            powers.p_sen[:, m_sen] = warm.powers.p_sen[:, old_sen]
            powers.p_pe[:, m_pe] = warm.powers.p_pe[:, old_pe]
    powers.p_dl *= 0.995
    powers.p_sen *= 0.995
    powers.p_pe *= 0.995
    return powers


def optimize_frame(cfg: ScenarioConfig, layout: NodeLayout, frame: int, prev_pos,
                   options: SchemeOptions, frame_plan: FramePlan,
                   position_free: bool = True, fixed_pos=None,
                   sca_iters: int = 40,
                   model: FrameModel | None = None,
                   warm: WarmStart | None = None) -> tuple[FrameResult, SubcarrierPlan, PowerPlan, FrameModel]:
    """Optimize one mission frame starting from the previous position.

    With a warm start whose DL/CD split still applies, the relaxed
    split-determination phase is skipped and the hard-split ascent continues
    from the previous solution; any failure falls back to the full path.
    """
    prev_pos = np.asarray(prev_pos, dtype=float)
    if model is None:
        model = build_frame_model(cfg, layout, frame, prev_pos)
    dl_user_min, mi_min = _frame_thresholds(cfg, options)
    trust = TrustRegion.defaults(cfg.p_uav_w, cfg.max_step_m)
    ctx = FrameContext(cfg=cfg, model=model, frame_plan=frame_plan, options=options,
                       trust=trust, dl_user_min=dl_user_min, cd_total_min=None,
                       mi_min=mi_min, prev_pos=prev_pos, position_free=position_free)
    start_pos = np.asarray(fixed_pos, dtype=float) if fixed_pos is not None else prev_pos

    if (warm is not None and options.merged_split
            and len(warm.pairs) == len(frame_plan.pairs)):
        hard_ctx = replace(_hard_split_ctx(ctx, warm.dl_cols, warm.cd_cols),
                           k_offset=3)
        powers_w = carry_powers(warm, frame_plan, cfg)
        result, plan, powers = _main_sca_and_audit(hard_ctx, powers_w, start_pos,
                                                   frame, max_iters=sca_iters)
        if result.feasible:
            return result, plan, powers, model

    try:
        powers0 = init_frame_powers(cfg, model, frame_plan, options, start_pos)
    except MissionInfeasible:
        plan = finalize_plan(cfg, frame_plan, *_default_split(ctx))
        return (_infeasible_result(cfg, frame, start_pos), plan,
                PowerPlan.zeros(cfg.u_users, cfg.j_targets, cfg.m_subcarriers), model)

    if options.merged_split:
        merged = run_rate_sca(ctx, powers0, start_pos, max_iters=MERGED_PHASE_ITERS,
                              rel_tol=1e-4)
        if not merged.feasible:
            plan = finalize_plan(cfg, frame_plan, *_default_split(ctx))
            return (_infeasible_result(cfg, frame, start_pos), plan,
                    PowerPlan.zeros(cfg.u_users, cfg.j_targets, cfg.m_subcarriers), model)
        result = plan = powers = None
        for dl_cols, cd_cols in split_candidates(merged.powers, frame_plan.dl_cols):
            powers1 = reseed_split_powers(cfg, model, merged.powers, dl_cols, cd_cols,
                                          frame_plan.dl_cols)
            hard_ctx = _hard_split_ctx(ctx, dl_cols, cd_cols)
            result, plan, powers = _main_sca_and_audit(hard_ctx, powers1,
                                                       merged.position, frame,
                                                       max_iters=sca_iters)
            if result.feasible:
                break
        result.sca_iters += merged.iterations
    else:
        result, plan, powers = _main_sca_and_audit(ctx, powers0, start_pos, frame,
                                                   max_iters=sca_iters)
    return result, plan, powers, model


def _default_split(ctx: FrameContext) -> tuple[list, list]:
    if not ctx.options.merged_split:
        return ctx.columns()
    md = ctx.frame_plan.dl_cols
    return md[: len(md) // 2], md[len(md) // 2:]


def _infeasible_result(cfg: ScenarioConfig, frame: int, pos) -> FrameResult:
    return FrameResult(frame=frame, uav_pos=np.asarray(pos, dtype=float).copy(),
                       r_dl=0.0, r_cd=0.0, r_e2e=0.0,
                       r_dl_per_user=np.zeros(cfg.u_users),
                       mi_per_target=np.zeros(cfg.j_targets), mi_total=0.0,
                       power_used_uav=0.0, power_used_tbs=0.0, feasible=False)


# ---- stage one: initial operating position ------------------------------------------------

@dataclass
class InitialPosition:
    position: np.ndarray
    plan: SubcarrierPlan
    powers: PowerPlan
    result: FrameResult
    model: FrameModel
    frame_plan: FramePlan
    dt_steps: int
    qt_deltas: list


def find_initial_position(cfg: ScenarioConfig, layout: NodeLayout,
                          options: SchemeOptions = PROPOSED,
                          ela: ElaConfig | None = None,
                          rng: np.random.Generator | None = None) -> InitialPosition:
    """March candidates from the area toward the coast, then refine locally.

    The candidate walk stops at the first position where the convexified
    feasibility problem is solvable; the double-layer refinement then shrinks
    the distance to the takeoff point until the outer position change drops
    below the threshold or stops contracting.
    """
    ela = ela if ela is not None else ElaConfig.defaults(cfg)
    takeoff = np.asarray(cfg.uav_takeoff_pos, dtype=float)
    da = np.asarray(cfg.area_center, dtype=float).copy()
    da[2] = cfg.uav_alt_m
    dl_user_min, mi_min = _frame_thresholds(cfg, options)
    cd_min = cfg.u_users * cfg.r_dl_min
    trust = TrustRegion.defaults(cfg.p_uav_w, cfg.max_step_m)

    # allocation fixed once, from the area center vantage
    alloc_model = build_frame_model(cfg, layout, 1, da)
    frame_plan = make_frame_plan(cfg, alloc_model, da, options, rng=rng)

    step_len = float(np.linalg.norm(ela.l_step[:2]))
    span = float(np.linalg.norm(da[:2] - np.asarray(cfg.tbs_pos)[:2]))
    d_max = max(int(span / max(step_len, 1e-9)), 1)

    def make_ctx(model: FrameModel) -> FrameContext:
        return FrameContext(cfg=cfg, model=model, frame_plan=frame_plan,
                            options=options, trust=trust, dl_user_min=dl_user_min,
                            cd_total_min=cd_min, mi_min=mi_min, prev_pos=None,
                            position_free=True)

    solved: SolveResult | None = None
    model: FrameModel | None = None
    dt_steps = 0
    smoothing0: SmoothingState | None = None
    for d in range(1, d_max + 1):
        cand = da - d * ela.l_step
        cand[2] = cfg.uav_alt_m
        dt_steps = d
        model = build_frame_model(cfg, layout, 1, cand)
        ctx = make_ctx(model)
        try:
            powers0 = init_frame_powers(cfg, model, frame_plan, options, cand)
        except MissionInfeasible:
            continue
        smoothing0 = _initial_smoothing(ctx, powers0) if options.merged_split else None
        res = solve_iteration(ctx, powers0, cand, 0, "distance", smoothing0,
                              takeoff=takeoff)
        if res.status != convex.INFEASIBLE:
            solved = res
            break
    if solved is None or model is None:
        raise MissionInfeasible("mission infeasible: no operating position on the "
                                "area-to-coast segment satisfies the constraints")

    # double-layer refinement: outer iterations re-freeze the channel structure
    smoothing = smoothing0
    powers, pos = solved.powers, solved.position
    qt_deltas: list = []
    prev_outer_delta = np.inf
    k_shrink = 0
    for k in range(1, ela.max_outer + 1):
        outer_start = pos.copy()
        model = build_frame_model(cfg, layout, 1, pos)
        ctx = make_ctx(model)
        inner_prev = pos.copy()
        anchor_mi = _true_mi_totals(ctx, powers, pos)
        dl0, sen0, relay0 = _true_uav_power(ctx, powers, pos)
        anchor_power_ok = dl0 + sen0 + relay0 <= cfg.p_uav_w * (1.0 + 1e-9)
        for _ in range(ela.max_inner):
            res = solve_iteration(ctx, powers, pos, max(k, k_shrink), "distance",
                                  smoothing, takeoff=takeoff)
            bad = res.status == convex.INFEASIBLE
            if not bad:
                ok, mi_now = _iterate_acceptable(ctx, res, anchor_mi, anchor_power_ok)
                bad = not ok
            if bad:
                if max(k, k_shrink) >= 28:
                    break
                k_shrink = max(k, k_shrink) + 4  # retry with tighter trust
                continue
            powers, pos = res.powers, res.position
            anchor_mi = mi_now
            inner_delta = float(np.linalg.norm(pos[:2] - inner_prev[:2]))
            inner_prev = pos.copy()
            if inner_delta <= ela.epsilon_prime:
                break
        if smoothing is not None:
            dl_tr = [powers.p_dl[:, m].sum() for m in frame_plan.dl_cols]
            cd_tr = [powers.p_cd[:, m].sum() for m in frame_plan.dl_cols]
            smoothing = smoothing.tightened(dl_tr, cd_tr)
        outer_delta = float(np.linalg.norm(pos[:2] - outer_start[:2]))
        if outer_delta < prev_outer_delta and outer_delta > 0:
            qt_deltas.append(outer_delta)
        if outer_delta <= ela.epsilon or outer_delta >= prev_outer_delta:
            break
        prev_outer_delta = outer_delta

    # certify at the final position: hard split, pinned position, frame-1 metrics
    model = build_frame_model(cfg, layout, 1, pos)
    ctx = make_ctx(model)
    if options.merged_split:
        result = plan = final_powers = None
        for dl_cols, cd_cols in split_candidates(powers, frame_plan.dl_cols):
            seeded = reseed_split_powers(cfg, model, powers, dl_cols, cd_cols,
                                         frame_plan.dl_cols)
            hard_ctx = _hard_split_ctx(ctx, dl_cols, cd_cols)
            result, plan, final_powers = _main_sca_and_audit(hard_ctx, seeded, pos,
                                                             frame=1, max_iters=8,
                                                             cd_min_override=cd_min,
                                                             pin_position=True)
            if result.feasible:
                break
    else:
        result, plan, final_powers = _main_sca_and_audit(ctx, powers, pos, frame=1,
                                                         max_iters=8,
                                                         cd_min_override=cd_min,
                                                         pin_position=True)
    return InitialPosition(position=result.uav_pos, plan=plan, powers=final_powers,
                           result=result, model=model, frame_plan=frame_plan,
                           dt_steps=dt_steps, qt_deltas=qt_deltas)
