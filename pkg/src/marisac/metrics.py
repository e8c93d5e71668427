"""Fronthaul/downlink rates, end-to-end sensing mutual information, UAV power.

All metrics are deterministic functions of (subcarrier plan, power plan,
frozen channel structure, UAV position). Rates are reported in bit/s/Hz as
sums over assigned subcarriers with the frame prefactors (Ns-1)/Ns for the
inbound fronthaul, (Ns-2)/Ns for the downlink and (Ns-3)/Ns for sensing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamforming import (dl_cross_gains, effective_fronthaul, rotate_eta,
                          sensing_geometry)
from .channel import FadingDraw, draw_fading
from .scenario import NodeLayout, ScenarioConfig


# ---- plan and power containers -------------------------------------------------

@dataclass
class SubcarrierPlan:
    """Binary subcarrier assignment plus the PE<->SEN pairing."""

    alpha_dl: np.ndarray   # (M,) bool
    alpha_cd: np.ndarray
    alpha_sen: np.ndarray
    alpha_pe: np.ndarray
    pairs: list            # [(m_pe, m_sen)] perfect matching, len M/4

    def validate(self, m_subcarriers: int) -> None:
        masks = [np.asarray(a, dtype=bool) for a in
                 (self.alpha_dl, self.alpha_cd, self.alpha_sen, self.alpha_pe)]
        if any(a.shape != (m_subcarriers,) for a in masks):
            raise ValueError("indicator length does not match the subcarrier count")
        total = sum(a.astype(int) for a in masks)
        if np.any(total > 1):
            raise ValueError("a subcarrier is assigned to more than one link")
        quarter = m_subcarriers // 4
        if masks[2].sum() != quarter or masks[3].sum() != quarter:
            raise ValueError("SEN and PE sets must each hold M/4 subcarriers")
        if masks[0].sum() + masks[1].sum() != m_subcarriers // 2:
            raise ValueError("CD and DL sets must jointly cover M/2 subcarriers")
        pe = sorted(m for m, _ in self.pairs)
        sen = sorted(m for _, m in self.pairs)
        if pe != sorted(np.flatnonzero(masks[3])) or sen != sorted(np.flatnonzero(masks[2])):
            raise ValueError("pairs must match PE and SEN sets exactly once each")


@dataclass
class PowerPlan:
    """Per-link nonnegative power matrices, zero off the assigned subcarriers."""

    p_dl: np.ndarray   # (U, M) merged downlink powers
    p_cd: np.ndarray   # (U, M) inbound fronthaul powers (station side)
    p_sen: np.ndarray  # (J, M) probing powers
    p_pe: np.ndarray   # (J, M) echo-forwarding power coefficients

    @classmethod
    def zeros(cls, u: int, j: int, m: int) -> "PowerPlan":
        return cls(np.zeros((u, m)), np.zeros((u, m)), np.zeros((j, m)), np.zeros((j, m)))

    def copy(self) -> "PowerPlan":
        return PowerPlan(self.p_dl.copy(), self.p_cd.copy(),
                         self.p_sen.copy(), self.p_pe.copy())


@dataclass
class FrameResult:
    """Outcome of one radio frame."""

    frame: int
    uav_pos: np.ndarray
    r_dl: float
    r_cd: float
    r_e2e: float
    r_dl_per_user: np.ndarray
    mi_per_target: np.ndarray
    mi_total: float
    power_used_uav: float
    power_used_tbs: float
    feasible: bool
    sca_iters: int = 0
    psi_trace: list = field(default_factory=list)


# ---- frozen per-frame scalar structure ------------------------------------------

def squared_distances(pos, nodes) -> np.ndarray:
    """Squared 3-D distances from pos to each row of nodes."""
    diff = np.asarray(nodes, dtype=float) - np.asarray(pos, dtype=float)
    return np.einsum("ij,ij->i", diff, diff)


@dataclass
class FrameModel:
    """Scalar channel structure of one frame, frozen at a reference position.

    The angle-dependent quantities (steering Grams, fronthaul stream gains)
    are evaluated once at ref_pos; only the squared distances are re-evaluated
    when the optimizer moves the UAV inside the frame.
    """

    cfg: ScenarioConfig
    layout: NodeLayout
    frame: int
    ref_pos: np.ndarray
    fading: FadingDraw
    omega_bar_dl: np.ndarray    # (U, M)
    g_dl_abs2: np.ndarray       # (U, U, M) squared matched-filter cross gains
    eta_cd: np.ndarray          # (U, M) descending per subcarrier
    eta_pe_sorted: np.ndarray   # (J, M) descending, before slot rotation
    g_sen: np.ndarray           # (J, J, M) receive Gram (complex)
    omega_bar_sen: np.ndarray   # (J, M)

    def z_users(self, pos) -> np.ndarray:
        return squared_distances(pos, self.layout.users)

    def z_targets(self, pos) -> np.ndarray:
        return squared_distances(pos, self.layout.targets)

    def z_tbs(self, pos) -> float:
        return float(squared_distances(pos, np.asarray(self.cfg.tbs_pos)[None, :])[0])

    def eta_pe_for_pairs(self, pairs) -> np.ndarray:
        """(J, M) stream gains after the round-robin dominant-slot rotation."""
        eta = np.zeros_like(self.eta_pe_sorted)
        for k, (m_pe, _) in enumerate(pairs):
            eta[:, m_pe] = rotate_eta(self.eta_pe_sorted[:, m_pe], k)
        return eta


def build_frame_model(cfg: ScenarioConfig, layout: NodeLayout, frame: int,
                      ref_pos, fading: FadingDraw | None = None) -> FrameModel:
    """Evaluate the frame's scalar channel structure at ref_pos."""
    if fading is None:
        fading = draw_fading(cfg, frame)
    ref_pos = np.asarray(ref_pos, dtype=float)
    m_count = cfg.m_subcarriers
    u_count, j_count = cfg.u_users, cfg.j_targets
    d_tu = float(np.sqrt(squared_distances(ref_pos, np.asarray(cfg.tbs_pos)[None, :])[0]))

    om_dl = np.zeros((u_count, m_count))
    g_dl2 = np.zeros((u_count, u_count, m_count))
    eta_cd = np.zeros((u_count, m_count))
    eta_pe = np.zeros((j_count, m_count))
    g_sen = np.zeros((j_count, j_count, m_count), dtype=complex)
    om_sen = np.zeros((j_count, m_count))

    from .channel import fronthaul_channel, omega_dl_bar, omega_sen_bar

    for m in range(m_count):
        for u in range(u_count):
            om_dl[u, m] = omega_dl_bar(fading.varpi_dl[u, m], m, cfg)
        gram = dl_cross_gains(ref_pos, layout.users, m, cfg)
        g_dl2[:, :, m] = np.abs(gram) ** 2
        h_cd = fronthaul_channel(ref_pos, cfg.tbs_pos, m, fading.varpi_cd[m],
                                 fading.psi_cd[m], cfg, "cd")
        eta_cd[:, m] = effective_fronthaul(h_cd, d_tu, "cd", u_count).eta
        h_pe = fronthaul_channel(ref_pos, cfg.tbs_pos, m, fading.varpi_pe[m],
                                 fading.psi_pe[m], cfg, "pe")
        eta_pe[:, m] = effective_fronthaul(h_pe, d_tu, "pe", j_count).eta
        geo = sensing_geometry(ref_pos, layout.targets, m, cfg, fading.varpi_sen[:, m])
        g_sen[:, :, m] = geo.g
        for j in range(j_count):
            om_sen[j, m] = omega_sen_bar(fading.varpi_sen[j, m], m, cfg)
    return FrameModel(cfg=cfg, layout=layout, frame=frame, ref_pos=ref_pos,
                      fading=fading, omega_bar_dl=om_dl, g_dl_abs2=g_dl2,
                      eta_cd=eta_cd, eta_pe_sorted=eta_pe, g_sen=g_sen,
                      omega_bar_sen=om_sen)


# ---- rate metrics ----------------------------------------------------------------

def cd_prefactor(n_slots: int) -> float:
    return (n_slots - 1) / n_slots


def dl_prefactor(n_slots: int) -> float:
    return (n_slots - 2) / n_slots


def mi_prefactor(n_slots: int) -> float:
    return (n_slots - 3) / n_slots


def rate_cd_masked(p_cd: np.ndarray, eta_cd: np.ndarray, mask: np.ndarray,
                   z_tu: float, n0: float, prefactor: float) -> float:
    """Fronthaul sum rate over the masked subcarriers (diagonal streams)."""
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        return 0.0
    snr = p_cd[:, cols] * eta_cd[:, cols] / (n0 * z_tu)
    return float(prefactor * np.sum(np.log2(1.0 + snr)))


def rate_cd(plan: SubcarrierPlan, powers: PowerPlan, model: FrameModel, pos,
            n_slots: int | None = None, prefactor: float | None = None) -> float:
    """Achievable inbound fronthaul rate (coded data toward the UAV)."""
    n_slots = n_slots if n_slots is not None else model.cfg.n_slots
    pref = prefactor if prefactor is not None else cd_prefactor(n_slots)
    return rate_cd_masked(powers.p_cd, model.eta_cd, np.asarray(plan.alpha_cd, bool),
                          model.z_tbs(pos), model.cfg.n0_w, pref)


def dl_sinr(p_dl: np.ndarray, omega_bar: np.ndarray, g_abs2: np.ndarray,
            z_users: np.ndarray, n0: float, m: int) -> np.ndarray:
    """Per-user downlink SINR on subcarrier m with matched-filter precoding."""
    u_count = p_dl.shape[0]
    sinr = np.zeros(u_count)
    for u in range(u_count):
        sig = p_dl[u, m] * omega_bar[u, m] * g_abs2[u, u, m]
        interf = sum(p_dl[v, m] * omega_bar[u, m] * g_abs2[v, u, m]
                     for v in range(u_count) if v != u)
        sinr[u] = sig / (interf + n0 * z_users[u])
    return sinr


def rate_dl_masked(p_dl: np.ndarray, omega_bar: np.ndarray, g_abs2: np.ndarray,
                   mask: np.ndarray, z_users: np.ndarray, n0: float,
                   prefactor: float) -> tuple[float, np.ndarray]:
    per_user = np.zeros(p_dl.shape[0])
    for m in np.flatnonzero(mask):
        per_user += np.log2(1.0 + dl_sinr(p_dl, omega_bar, g_abs2, z_users, n0, m))
    per_user *= prefactor
    return float(per_user.sum()), per_user


def rate_dl(plan: SubcarrierPlan, powers: PowerPlan, model: FrameModel, pos,
            n_slots: int | None = None, prefactor: float | None = None) -> tuple[float, np.ndarray]:
    """Downlink rate (total, per user) with interference-aware SINR."""
    n_slots = n_slots if n_slots is not None else model.cfg.n_slots
    pref = prefactor if prefactor is not None else dl_prefactor(n_slots)
    return rate_dl_masked(powers.p_dl, model.omega_bar_dl, model.g_dl_abs2,
                          np.asarray(plan.alpha_dl, bool), model.z_users(pos),
                          model.cfg.n0_w, pref)


# ---- sensing mutual information ----------------------------------------------------

def mi_relay_power(j: int, m_pe: int, m_sen: int, powers: PowerPlan,
                   model: FrameModel, pos) -> float:
    """Transmit power spent forwarding target j's echo over one pair.

    The relay amplifies the full received signal on the sensing subcarrier:
    the target echoes weighted by the squared receive Gram, the residual
    self-interference leakage and the thermal noise floor.
    """
    z_t = model.z_targets(pos)
    xi = model.cfg.xi_sic
    n0 = model.cfg.n0_w
    g2 = np.abs(model.g_sen[:, :, m_sen]) ** 2
    acc = 0.0
    for jp in range(model.cfg.j_targets):
        acc += powers.p_sen[jp, m_sen] * (
            g2[j, jp] * model.omega_bar_sen[jp, m_sen] / z_t[jp] ** 2 + xi)
    return powers.p_pe[j, m_pe] * (acc + n0)


def per_target_mi(j: int, pair: tuple[int, int], powers: PowerPlan,
                  model: FrameModel, pos, eta_pe: np.ndarray,
                  n_slots: int | None = None, prefactor: float | None = None) -> float:
    """End-to-end sensing MI of target j over one (PE, SEN) subcarrier pair."""
    m_pe, m_sen = pair
    s_val, n_val = mi_signal_noise(j, m_pe, m_sen, powers, model, pos, eta_pe)
    n_slots = n_slots if n_slots is not None else model.cfg.n_slots
    pref = prefactor if prefactor is not None else mi_prefactor(n_slots)
    return pref * (np.log2(s_val) - np.log2(n_val))


def mi_signal_noise(j: int, m_pe: int, m_sen: int, powers: PowerPlan,
                    model: FrameModel, pos, eta_pe: np.ndarray) -> tuple[float, float]:
    """Signal and noise aggregates whose log-ratio is the per-target MI."""
    z_tu = model.z_tbs(pos)
    z_t = model.z_targets(pos)
    xi = model.cfg.xi_sic
    n0 = model.cfg.n0_w
    g2 = np.abs(model.g_sen[:, :, m_sen]) ** 2
    amp = eta_pe[j, m_pe] * powers.p_pe[j, m_pe] / z_tu
    gain = g2[j, :] * model.omega_bar_sen[:, m_sen] / z_t**2
    p_s = powers.p_sen[:, m_sen]
    s_val = amp * (np.dot(p_s, gain + xi) + n0) + n0
    n_val = amp * (np.dot(p_s, gain) - p_s[j] * gain[j] + xi * p_s.sum() + n0) + n0
    return float(s_val), float(n_val)


def sensing_mi_logdet(pair: tuple[int, int], powers: PowerPlan, model: FrameModel,
                      pos, eta_pe: np.ndarray, active: bool = True,
                      n_slots: int | None = None) -> float:
    """Joint log-det form of the end-to-end sensing MI over one pair.

    Kept for validation: the optimizer works with the per-target scalar form.
    The echo combiner is normalized to unit gain per stream so the forwarded
    noise covariance carries the Gram with unit diagonal; this makes the
    log-det reduce exactly to the per-target expression whenever the receive
    Gram is diagonal.
    """
    if not active:
        return 0.0
    m_pe, m_sen = pair
    cfg = model.cfg
    if not (np.all(np.isfinite(powers.p_sen)) and np.all(np.isfinite(powers.p_pe))):
        raise ValueError("non-finite powers")
    n_slots = n_slots if n_slots is not None else cfg.n_slots
    z_tu = model.z_tbs(pos)
    z_t = model.z_targets(pos)
    n0 = cfg.n0_w
    lam = eta_pe[:, m_pe] / z_tu                      # effective fronthaul gains
    g = model.g_sen[:, :, m_sen]
    omega = model.omega_bar_sen[:, m_sen] / z_t**2    # echo gains with d^-4 law
    root = np.sqrt(lam * powers.p_pe[:, m_pe])
    sig = (root[:, None] * root[None, :]) * (
        g @ np.diag(omega * powers.p_sen[:, m_sen]) @ g)
    noise_gram = g / cfg.r_rx                         # unit-diagonal combiner Gram
    gamma = (cfg.xi_sic * powers.p_sen[:, m_sen].sum() + n0) * (
        (root[:, None] * root[None, :]) * noise_gram) + n0 * np.eye(cfg.j_targets)
    # det(I + Gamma^-1 Sig) = det(Gamma + Sig) / det(Gamma), both Hermitian PD
    sign_a, logdet_a = np.linalg.slogdet(gamma + sig)
    sign_b, logdet_b = np.linalg.slogdet(gamma)
    if sign_a.real <= 0 or sign_b.real <= 0:
        raise ValueError("sensing MI log-det is not positive definite")
    return mi_prefactor(n_slots) * (logdet_a - logdet_b) / np.log(2.0)


def mi_per_target_totals(plan: SubcarrierPlan, powers: PowerPlan, model: FrameModel,
                         pos, n_slots: int | None = None,
                         prefactor: float | None = None) -> np.ndarray:
    """Per-target MI summed over all pairs of the plan."""
    eta_pe = model.eta_pe_for_pairs(plan.pairs)
    totals = np.zeros(model.cfg.j_targets)
    for pair in plan.pairs:
        for j in range(model.cfg.j_targets):
            totals[j] += per_target_mi(j, pair, powers, model, pos, eta_pe,
                                       n_slots, prefactor)
    return totals


# ---- power accounting ----------------------------------------------------------------

def uav_power_used(plan: SubcarrierPlan, powers: PowerPlan, model: FrameModel,
                   pos) -> float:
    """UAV transmit power: downlink + probing + echo-forward amplification."""
    total = float(powers.p_dl[:, np.asarray(plan.alpha_dl, bool)].sum())
    for m_pe, m_sen in plan.pairs:
        total += float(powers.p_sen[:, m_sen].sum())
        for j in range(model.cfg.j_targets):
            total += mi_relay_power(j, m_pe, m_sen, powers, model, pos)
    return total


def tbs_power_used(plan: SubcarrierPlan, powers: PowerPlan) -> float:
    return float(powers.p_cd[:, np.asarray(plan.alpha_cd, bool)].sum())


def evaluate_frame(frame: int, plan: SubcarrierPlan, powers: PowerPlan,
                   model: FrameModel, pos, feasible: bool = True,
                   sca_iters: int = 0, psi_trace=None,
                   prefactors: tuple | None = None) -> FrameResult:
    """Evaluate all frame metrics at a UAV position (prefactors = (cd, dl, mi))."""
    pref_cd, pref_dl, pref_mi = prefactors if prefactors is not None else (None,) * 3
    r_cd = rate_cd(plan, powers, model, pos, prefactor=pref_cd)
    r_dl, per_user = rate_dl(plan, powers, model, pos, prefactor=pref_dl)
    mi = mi_per_target_totals(plan, powers, model, pos, prefactor=pref_mi)
    return FrameResult(
        frame=frame,
        uav_pos=np.asarray(pos, dtype=float).copy(),
        r_dl=r_dl,
        r_cd=r_cd,
        r_e2e=min(r_dl, r_cd),
        r_dl_per_user=per_user,
        mi_per_target=mi,
        mi_total=float(mi.sum()),
        power_used_uav=uav_power_used(plan, powers, model, pos),
        power_used_tbs=tbs_power_used(plan, powers),
        feasible=feasible,
        sca_iters=sca_iters,
        psi_trace=list(psi_trace) if psi_trace is not None else [],
    )
