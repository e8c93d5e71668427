"""SVD fronthaul precoders/combiners and matched-filter access beam structures.

The fronthaul links carry U (inbound) or J (outbound) parallel streams over the
reduced SVD of the Rician channel; the access links use raw steering vectors as
matched filters, so the optimizer only ever sees the scalar gain structures
derived here (eta, the receive Gram G and the sensing gain diagonal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import direction_cosines, element_spacing, upa_steering_uv
from .scenario import ScenarioConfig, dbi_to_linear


@dataclass(frozen=True)
class EffectiveFronthaul:
    """Reduced-SVD view of one fronthaul subchannel.

    eta holds the distance-free per-stream gains: squared singular values
    scaled by d_TU^2, so the effective diagonal gain matrix is eta / d_TU^2.
    """

    eta: np.ndarray         # (streams,), descending
    left_basis: np.ndarray  # (rows, streams), orthonormal columns
    right_basis: np.ndarray  # (cols, streams), orthonormal columns
    link: str               # 'cd' or 'pe'


def effective_fronthaul(h: np.ndarray, d_tu: float, link: str, streams: int) -> EffectiveFronthaul:
    """Truncate the SVD of h to the given stream count.

    Singular values come out descending (ties keep numpy's original order);
    eta = sigma^2 * d_tu^2 factors the deterministic path loss back out.
    """
    if not np.all(np.isfinite(h)):
        raise ValueError("fronthaul matrix contains non-finite entries")
    if d_tu <= 0:
        raise ValueError("fronthaul distance must be positive")
    u_mat, svals, vh = np.linalg.svd(h, full_matrices=False)
    take = min(streams, svals.size)
    eta = np.zeros(streams)
    eta[:take] = (svals[:take] ** 2) * d_tu**2
    left = u_mat[:, :take]
    right = vh[:take, :].conj().T
    if take < streams:  # degenerate channel shorter than the stream count
        left = np.pad(left, ((0, 0), (0, streams - take)))
        right = np.pad(right, ((0, 0), (0, streams - take)))
    return EffectiveFronthaul(eta=eta, left_basis=left, right_basis=right, link=link)


def pe_power_positions(n_subcarriers_pe: int, j_targets: int) -> np.ndarray:
    """Diagonal slot receiving the dominant fronthaul gain, per PE subcarrier.

    Deterministic round-robin: the k-th paired subcarrier places the dominant
    singular value at target slot k mod J, so every target holds it equally
    often whenever the PE set size is a multiple of J.
    """
    if n_subcarriers_pe < 1 or j_targets < 1:
        raise ValueError("counts must be positive")
    return np.arange(n_subcarriers_pe) % j_targets


def rotate_eta(eta_sorted: np.ndarray, pair_index: int) -> np.ndarray:
    """Assign descending gains to target slots with slot (k mod J) dominant.

    Circular shift of the descending gain list: slot s receives the
    ((s - k) mod J)-th largest gain for pair index k.
    """
    j = eta_sorted.size
    slots = (np.arange(j) - pair_index) % j
    return eta_sorted[slots]


@dataclass(frozen=True)
class SensingGeometry:
    """Receive-side correlation of the targets and their echo gain diagonal."""

    g: np.ndarray          # (J, J) Hermitian Gram of receive steering vectors
    omega_sen: np.ndarray  # (J,) echo power gains including the d^-4 law


def sensing_geometry(uav_pos, targets, m: int, cfg: ScenarioConfig,
                     varpi_sen_m: np.ndarray) -> SensingGeometry:
    """Receive Gram G and sensing gain diagonal at one subcarrier."""
    lam = cfg.wavelength(m)
    spacing = element_spacing(cfg)
    steer = []
    omega = []
    gain = dbi_to_linear(cfg.gain_uav_tx_dbi) * dbi_to_linear(cfg.gain_uav_rx_dbi)
    for j, tgt in enumerate(np.asarray(targets, dtype=float)):
        ux, uy, d = direction_cosines(uav_pos, tgt)
        steer.append(upa_steering_uv(ux, uy, lam, cfg.upa_uav_rx, spacing))
        omega.append(gain * lam**2 * cfg.rcs_m2 * abs(varpi_sen_m[j]) ** 2
                     / ((4.0 * np.pi) ** 3 * d**4))
    a = np.stack(steer, axis=1)  # (Rrx, J)
    return SensingGeometry(g=a.conj().T @ a, omega_sen=np.asarray(omega))


def dl_cross_gains(uav_pos, users, m: int, cfg: ScenarioConfig) -> np.ndarray:
    """Matched-filter transmit Gram for the downlink.

    Entry (u, u') is alpha_tx(u)^H alpha_tx(u'); the diagonal equals Rtx and
    the squared magnitudes are the cross-gains entering the downlink SINR.
    """
    lam = cfg.wavelength(m)
    spacing = element_spacing(cfg)
    steer = []
    for usr in np.asarray(users, dtype=float):
        ux, uy, _ = direction_cosines(uav_pos, usr)
        steer.append(upa_steering_uv(ux, uy, lam, cfg.upa_uav_tx, spacing))
    a = np.stack(steer, axis=1)  # (Rtx, U)
    return a.conj().T @ a
