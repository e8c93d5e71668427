"""Greedy sensing/echo subcarrier selection, dynamic re-pairing, smoothed L0.

The sensing half of the band is split by an iterative greedy rule: probing
subcarriers take the largest total echo gains, the remainder forwards the
perceived signal, and the k-th probing pick is paired with the k-th strongest
fronthaul subcarrier. Across frames the split is kept unless the achieved MI
regressed, in which case one swap between the two sets is applied.

The binary downlink/fronthaul split of the other half-band is relaxed through
a smooth exponential indicator whose tangent majorizer is linear in the
per-subcarrier power traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SenPeSets:
    """Local (within the sensing half-band) index sets and their pairing."""

    sen: list          # probing subcarrier indices, in greedy pick order
    pe: list           # echo-forward subcarrier indices, in pairing order
    pairs: list        # [(pe_index, sen_index)], a perfect matching


def _argsort_desc(values: np.ndarray) -> np.ndarray:
    # stable sort on -values: ties resolve to the lowest index
    return np.argsort(-np.asarray(values, dtype=float), kind="stable")


def greedy_sen_pe(omega_traces, lambda_pe_traces, m_subcarriers: int) -> SenPeSets:
    """Greedy split and pairing of the sensing half-band.

    omega_traces and lambda_pe_traces cover the M/2 subcarriers of the sensing
    half-band (local indices). The M/4 largest echo-gain subcarriers become the
    probing set (picked iteratively, ties to the lowest index); the k-th pick
    pairs with the k-th largest fronthaul-gain subcarrier of the remainder.
    """
    omega_traces = np.asarray(omega_traces, dtype=float)
    lambda_pe_traces = np.asarray(lambda_pe_traces, dtype=float)
    half = m_subcarriers // 2
    quarter = m_subcarriers // 4
    if omega_traces.shape != (half,) or lambda_pe_traces.shape != (half,):
        raise ValueError(f"trace lists must cover the {half} sensing-half subcarriers")
    sen = list(_argsort_desc(omega_traces)[:quarter])
    pe_candidates = [m for m in range(half) if m not in set(sen)]
    pe_order = sorted(pe_candidates, key=lambda m: (-lambda_pe_traces[m], m))
    pairs = [(int(pe_order[k]), int(sen[k])) for k in range(quarter)]
    return SenPeSets(sen=[int(m) for m in sen], pe=[int(m) for m in pe_order], pairs=pairs)


def repair_pairs(prev_mi: float, curr_mi: float, sets: SenPeSets,
                 lambda_pe_traces, omega_traces) -> SenPeSets:
    """Swap one subcarrier between the sets when the achieved MI regressed.

    No-op when curr_mi >= prev_mi. Otherwise the probing subcarrier with the
    largest fronthaul gain trades places with the echo-forward subcarrier
    holding the smallest one, and the pairing is rebuilt (probing set ordered
    by echo gain, echo-forward set by fronthaul gain).
    """
    if curr_mi >= prev_mi:
        return sets
    lambda_pe_traces = np.asarray(lambda_pe_traces, dtype=float)
    omega_traces = np.asarray(omega_traces, dtype=float)
    sen = list(sets.sen)
    pe = list(sets.pe)
    m_out = min(sen, key=lambda m: (-lambda_pe_traces[m], m))  # argmax trace in SEN
    m_in = min(pe, key=lambda m: (lambda_pe_traces[m], m))     # argmin trace in PE
    sen[sen.index(m_out)] = m_in
    pe[pe.index(m_in)] = m_out
    sen = sorted(sen, key=lambda m: (-omega_traces[m], m))
    pe = sorted(pe, key=lambda m: (-lambda_pe_traces[m], m))
    pairs = [(int(pe[k]), int(sen[k])) for k in range(len(sen))]
    return SenPeSets(sen=[int(m) for m in sen], pe=[int(m) for m in pe], pairs=pairs)


# ---- smoothed-L0 machinery ---------------------------------------------------------

def l0_indicator(trace: float, rho: float) -> float:
    """Smooth 0/1 surrogate of 'any power on this subcarrier': 1 - exp(-tr/rho)."""
    if rho <= 0:
        raise ValueError("smoothing parameter must be positive")
    return 1.0 - np.exp(-trace / rho)


def l0_majorizer(trace: float, expansion_trace: float, rho: float) -> tuple[float, float]:
    """(indicator, tangent majorizer at expansion_trace); majorizer >= indicator."""
    ups = l0_indicator(trace, rho)
    base = np.exp(-expansion_trace / rho)
    ups_tilde = (1.0 - base) + base / rho * (trace - expansion_trace)
    return float(ups), float(ups_tilde)


def l0_tangent_coeffs(expansion_trace: float, rho: float) -> tuple[float, float]:
    """(intercept, slope) of the tangent majorizer as a function of the trace."""
    base = np.exp(-expansion_trace / rho)
    slope = base / rho
    intercept = 1.0 - base - slope * expansion_trace
    return float(intercept), float(slope)


@dataclass
class SmoothingState:
    """Per-outer-iteration smoothing parameters of the relaxed binary split."""

    rho_dl: float
    rho_cd: float
    floor: float = 1e-6

    @classmethod
    def initial(cls, p_uav_w: float) -> "SmoothingState":
        return cls(rho_dl=p_uav_w / 10.0, rho_cd=p_uav_w / 10.0)

    @classmethod
    def for_traces(cls, dl_traces, cd_traces, p_uav_w: float) -> "SmoothingState":
        """Start in the linear regime of the indicator at the given traces.

        A start of p_uav/10 saturates against station-scale traces and makes
        the linearized exclusivity constraint unsatisfiable, so rho opens up
        to several times the largest initial trace.
        """
        rho_dl = max(p_uav_w / 10.0, 4.0 * float(np.max(np.atleast_1d(dl_traces), initial=0.0)))
        rho_cd = max(p_uav_w / 10.0, 4.0 * float(np.max(np.atleast_1d(cd_traces), initial=0.0)))
        return cls(rho_dl=rho_dl, rho_cd=rho_cd)

    def tightened(self, dl_traces, cd_traces, margin: float = 1e-3) -> "SmoothingState":
        """Halve rho unless that would push the current point out of the
        per-subcarrier exclusivity budget (indicator sum above 1 - margin)."""
        new_dl = max(self.rho_dl / 2.0, self.floor)
        new_cd = max(self.rho_cd / 2.0, self.floor)
        for t_dl, t_cd in zip(np.atleast_1d(dl_traces), np.atleast_1d(cd_traces)):
            if l0_indicator(t_dl, new_dl) + l0_indicator(t_cd, new_cd) > 1.0 - margin:
                return self
        return SmoothingState(rho_dl=new_dl, rho_cd=new_cd, floor=self.floor)
