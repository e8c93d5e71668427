"""UPA steering vectors and the sensing / downlink / fronthaul channel models.

All channels separate into a deterministic geometry part (distance power law,
steering vectors at the current angles) and a per-frame small-scale draw. The
Doppler/delay phase rotations are folded into the unit-modulus part of the
complex fading coefficients since they are compensated by synchronization and
never affect magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import NodeLayout, ScenarioConfig, dbi_to_linear, frame_stream

FOUR_PI = 4.0 * np.pi


# ---- steering vectors --------------------------------------------------------

def upa_steering_uv(ux: float, uy: float, wavelength: float, dims: tuple[int, int],
                    spacing: float) -> np.ndarray:
    """Steering vector from the horizontal direction cosines (ux, uy).

    Element (p, q) carries phase 2*pi/lambda * spacing * (p*ux + q*uy); the
    broadside direction (ux = uy = 0) gives the all-ones vector.
    """
    p = np.arange(dims[0])
    q = np.arange(dims[1])
    phase = 2.0 * np.pi * spacing / wavelength * (p[:, None] * ux + q[None, :] * uy)
    return np.exp(1j * phase).reshape(-1)


def upa_steering(theta: float, phi: float, m: int, dims: tuple[int, int],
                 cfg: ScenarioConfig) -> np.ndarray:
    """Steering vector at elevation theta (0 = broadside) and azimuth phi."""
    ux = np.sin(theta) * np.cos(phi)
    uy = np.sin(theta) * np.sin(phi)
    return upa_steering_uv(ux, uy, cfg.wavelength(m), dims, element_spacing(cfg))


def element_spacing(cfg: ScenarioConfig) -> float:
    """Half-wavelength element spacing fixed at the center frequency."""
    from .scenario import SPEED_OF_LIGHT
    return SPEED_OF_LIGHT / cfg.fc_hz / 2.0


def direction_cosines(src: np.ndarray, dst: np.ndarray) -> tuple[float, float, float]:
    """(ux, uy, distance) of the unit vector from src toward dst."""
    v = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    d = float(np.linalg.norm(v))
    if d <= 0.0:
        raise ValueError("coincident positions give an undefined link direction")
    return v[0] / d, v[1] / d, d


# ---- per-frame small-scale draws ----------------------------------------------

def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex normal draws with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class FadingDraw:
    """Small-scale coefficients for one radio frame (independent of position)."""

    varpi_dl: np.ndarray   # (U, M) complex, CN(0,1)
    varpi_sen: np.ndarray  # (J, M)
    varpi_cd: np.ndarray   # (M,) LoS coefficient of the inbound fronthaul
    varpi_pe: np.ndarray   # (M,) LoS coefficient of the outbound fronthaul
    psi_cd: np.ndarray     # (M, Rtx_bar, Rrx) scattering component
    psi_pe: np.ndarray     # (M, Rtx, Rrx_bar)


def draw_fading(cfg: ScenarioConfig, frame: int) -> FadingDraw:
    """Deterministically regenerate the frame's fading from (seed, frame)."""
    rng = frame_stream(cfg, frame)
    m = cfg.m_subcarriers
    return FadingDraw(
        varpi_dl=_cn(rng, (cfg.u_users, m)),
        varpi_sen=_cn(rng, (cfg.j_targets, m)),
        varpi_cd=_cn(rng, m),
        varpi_pe=_cn(rng, m),
        psi_cd=_cn(rng, (m, cfg.r_tx_bar, cfg.r_rx)),
        psi_pe=_cn(rng, (m, cfg.r_tx, cfg.r_rx_bar)),
    )


# ---- channel matrices ----------------------------------------------------------

def sensing_channel(uav_pos, target, m: int, varpi: complex, cfg: ScenarioConfig) -> np.ndarray:
    """Round-trip LoS sensing channel (Rtx x Rrx), d^-4 power law with RCS."""
    ux, uy, d = direction_cosines(uav_pos, target)
    lam = cfg.wavelength(m)
    amp = np.sqrt(
        dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_uav_rx_dbi)
        * lam**2 * cfg.rcs_m2 / (FOUR_PI**3 * d**4)
    )
    spacing = element_spacing(cfg)
    a_tx = upa_steering_uv(ux, uy, lam, cfg.upa_uav_tx, spacing)
    a_rx = upa_steering_uv(ux, uy, lam, cfg.upa_uav_rx, spacing)
    return amp * varpi * np.outer(a_tx, a_rx.conj())


def dl_channel(uav_pos, user, m: int, varpi: complex, cfg: ScenarioConfig) -> np.ndarray:
    """LoS downlink channel vector (Rtx,), free-space d^-2 power law."""
    ux, uy, d = direction_cosines(uav_pos, user)
    lam = cfg.wavelength(m)
    amp = np.sqrt(
        dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_ue_rx_dbi)
        * lam**2 / (FOUR_PI**2 * d**2)
    )
    a_tx = upa_steering_uv(ux, uy, lam, cfg.upa_uav_tx, element_spacing(cfg))
    return amp * varpi * a_tx


def fronthaul_channel(uav_pos, tbs_pos, m: int, varpi: complex, psi: np.ndarray,
                      cfg: ScenarioConfig, direction: str) -> np.ndarray:
    """Rician fronthaul channel between the coastal station and the UAV.

    direction 'cd' gives the inbound (Rtx_bar x Rrx) matrix, 'pe' the outbound
    (Rtx x Rrx_bar) one; both mix a LoS rank-1 term with the scattering draw
    psi at ratio K/(K+1) vs 1/(K+1).
    """
    lam = cfg.wavelength(m)
    spacing = element_spacing(cfg)
    k = cfg.k_tu
    if direction == "cd":
        gain = dbi_to_linear(cfg.gain_tbs_tx_dbi) * dbi_to_linear(cfg.gain_uav_rx_dbi)
        ux_t, uy_t, d = direction_cosines(tbs_pos, uav_pos)
        ux_r, uy_r, _ = direction_cosines(uav_pos, tbs_pos)
        a_tx = upa_steering_uv(ux_t, uy_t, lam, cfg.upa_tbs_tx, spacing)
        a_rx = upa_steering_uv(ux_r, uy_r, lam, cfg.upa_uav_rx, spacing)
    elif direction == "pe":
        gain = dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_tbs_rx_dbi)
        ux_t, uy_t, d = direction_cosines(uav_pos, tbs_pos)
        ux_r, uy_r, _ = direction_cosines(tbs_pos, uav_pos)
        a_tx = upa_steering_uv(ux_t, uy_t, lam, cfg.upa_uav_tx, spacing)
        a_rx = upa_steering_uv(ux_r, uy_r, lam, cfg.upa_tbs_rx, spacing)
    else:
        raise ValueError(f"direction must be 'cd' or 'pe', got {direction!r}")
    amp = np.sqrt(gain * lam**2 / (FOUR_PI**2 * d**2))
    los = varpi * np.outer(a_tx, a_rx.conj())
    return amp * (np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * psi)


def omega_dl_bar(varpi: complex, m: int, cfg: ScenarioConfig) -> float:
    """Distance-free downlink gain; divide by d^2 to recover the link gain."""
    lam = cfg.wavelength(m)
    return (dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_ue_rx_dbi)
            * lam**2 * abs(varpi) ** 2 / FOUR_PI**2)


def omega_sen_bar(varpi: complex, m: int, cfg: ScenarioConfig) -> float:
    """Distance-free sensing gain; divide by d^4 to recover the echo gain."""
    lam = cfg.wavelength(m)
    return (dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_uav_rx_dbi)
            * lam**2 * cfg.rcs_m2 * abs(varpi) ** 2 / FOUR_PI**3)


# ---- full per-frame channel set -------------------------------------------------

@dataclass(frozen=True)
class ChannelSet:
    """All channel realizations of one frame evaluated at a UAV position."""

    uav_pos: np.ndarray
    fading: FadingDraw
    h_sen: np.ndarray        # (J, M, Rtx, Rrx)
    h_dl: np.ndarray         # (U, M, Rtx)
    h_cd: np.ndarray         # (M, Rtx_bar, Rrx)
    h_pe: np.ndarray         # (M, Rtx, Rrx_bar)
    omega_dl_bar: np.ndarray   # (U, M) distance-free DL gains
    omega_sen_bar: np.ndarray  # (J, M) distance-free sensing gains


def channel_set(cfg: ScenarioConfig, layout: NodeLayout, frame: int,
                uav_pos, fading: FadingDraw | None = None) -> ChannelSet:
    """Generate the frame's channels at uav_pos (deterministic given seed)."""
    if fading is None:
        fading = draw_fading(cfg, frame)
    uav_pos = np.asarray(uav_pos, dtype=float)
    m_count = cfg.m_subcarriers
    u_count, j_count = cfg.u_users, cfg.j_targets

    h_sen = np.zeros((j_count, m_count, cfg.r_tx, cfg.r_rx), dtype=complex)
    h_dl = np.zeros((u_count, m_count, cfg.r_tx), dtype=complex)
    h_cd = np.zeros((m_count, cfg.r_tx_bar, cfg.r_rx), dtype=complex)
    h_pe = np.zeros((m_count, cfg.r_tx, cfg.r_rx_bar), dtype=complex)
    om_dl = np.zeros((u_count, m_count))
    om_sen = np.zeros((j_count, m_count))

    for m in range(m_count):
        for j in range(j_count):
            h_sen[j, m] = sensing_channel(uav_pos, layout.targets[j], m,
                                          fading.varpi_sen[j, m], cfg)
            om_sen[j, m] = omega_sen_bar(fading.varpi_sen[j, m], m, cfg)
        for u in range(u_count):
            h_dl[u, m] = dl_channel(uav_pos, layout.users[u], m, fading.varpi_dl[u, m], cfg)
            om_dl[u, m] = omega_dl_bar(fading.varpi_dl[u, m], m, cfg)
        h_cd[m] = fronthaul_channel(uav_pos, cfg.tbs_pos, m, fading.varpi_cd[m],
                                    fading.psi_cd[m], cfg, "cd")
        h_pe[m] = fronthaul_channel(uav_pos, cfg.tbs_pos, m, fading.varpi_pe[m],
                                    fading.psi_pe[m], cfg, "pe")
    return ChannelSet(uav_pos=uav_pos, fading=fading, h_sen=h_sen, h_dl=h_dl,
                      h_cd=h_cd, h_pe=h_pe, omega_dl_bar=om_dl, omega_sen_bar=om_sen)
