"""Built-in property checks behind the `marisac validate` subcommand.

A fast, self-contained audit of the mathematical invariants the optimizer
relies on; the pytest suite covers the same ground (and much more) with
frozen oracles.
"""

from __future__ import annotations

import numpy as np

from .allocation import greedy_sen_pe, l0_majorizer
from .metrics import (PowerPlan, build_frame_model, mi_per_target_totals,
                      per_target_mi, sensing_mi_logdet)
from .scenario import ScenarioConfig, make_layout
from .surrogates import mi_expansion, quad_transform_v, surrogate_log_rate


def _check_quadratic_transform(rng) -> tuple[bool, str]:
    for _ in range(200):
        s = float(rng.uniform(0.1, 50.0))
        n = float(rng.uniform(0.1, 10.0))
        v_star = quad_transform_v(s, n)
        exact = np.log2(1.0 + s / n)
        if abs(surrogate_log_rate(s, n, v_star) - exact) > 1e-9:
            return False, "surrogate not tight at the fixed point"
        v = float(rng.uniform(0.0, 3.0 * v_star))
        if surrogate_log_rate(s, n, v) > exact + 1e-12:
            return False, "surrogate exceeded the true rate"
    return True, ""


def _check_l0(rng) -> tuple[bool, str]:
    for _ in range(200):
        tr = float(rng.uniform(0.0, 2.0))
        tr0 = float(rng.uniform(0.0, 2.0))
        rho = float(rng.uniform(1e-3, 1.0))
        ups, ups_t = l0_majorizer(tr, tr0, rho)
        if ups_t < ups - 1e-12:
            return False, "tangent fell below the smooth indicator"
        ups_eq, ups_t_eq = l0_majorizer(tr0, tr0, rho)
        if abs(ups_eq - ups_t_eq) > 1e-12:
            return False, "tangent not exact at the expansion point"
    return True, ""


def _desk_model(cfg: ScenarioConfig):
    desk = cfg.replace(m_subcarriers=8, u_users=2, j_targets=2, n_frames=4,
                       area_center=(500.0, 400.0, 0.0), area_radius_m=60.0,
                       uav_alt_m=150.0, uav_takeoff_pos=(10.0, 0.0, 150.0))
    layout = make_layout(desk)
    pos = np.array([450.0, 350.0, desk.uav_alt_m])
    return desk, build_frame_model(desk, layout, 1, pos), pos


def _check_gradients(cfg: ScenarioConfig, rng) -> tuple[bool, str]:
    desk, model, pos = _desk_model(cfg)
    pairs = [(6, 4), (7, 5)]
    eta_pe = model.eta_pe_for_pairs(pairs)
    for _ in range(25):
        p_pe = float(rng.uniform(0.5, 5.0))
        p_sen = rng.uniform(0.05, 0.4, size=desk.j_targets)
        point = pos + np.array([rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0])
        exp = mi_expansion(0, pairs[0][0], pairs[0][1], p_pe, p_sen, point, model, eta_pe)
        h = 1e-4 * max(abs(p_pe), 1.0)
        up = mi_expansion(0, pairs[0][0], pairs[0][1], p_pe + h, p_sen, point, model, eta_pe)
        dn = mi_expansion(0, pairs[0][0], pairs[0][1], p_pe - h, p_sen, point, model, eta_pe)
        fd = (up.s_val - dn.s_val) / (2 * h)
        if abs(fd - exp.ds[0]) > 1e-5 * max(abs(fd), 1e-30):
            return False, "p_pe partial mismatch"
        hx = 1e-4 * max(abs(point[0]), 1.0)
        up = mi_expansion(0, pairs[0][0], pairs[0][1], p_pe, p_sen,
                          point + np.array([hx, 0, 0]), model, eta_pe)
        dn = mi_expansion(0, pairs[0][0], pairs[0][1], p_pe, p_sen,
                          point - np.array([hx, 0, 0]), model, eta_pe)
        fd = (up.s_val - dn.s_val) / (2 * hx)
        if abs(fd - exp.ds[-2]) > 1e-4 * max(abs(fd), 1e-30):
            return False, "x partial mismatch"
    return True, ""


def _check_mi_consistency(cfg: ScenarioConfig, rng) -> tuple[bool, str]:
    desk, model, pos = _desk_model(cfg)
    single = desk.replace(j_targets=1)
    layout = make_layout(single)
    model1 = build_frame_model(single, layout, 1, pos)
    powers = PowerPlan.zeros(1, 1, single.m_subcarriers)
    pair = (6, 4)
    powers.p_sen[0, pair[1]] = 0.2
    powers.p_pe[0, pair[0]] = 3.0
    eta = model1.eta_pe_for_pairs([pair])
    a = sensing_mi_logdet(pair, powers, model1, pos, eta)
    b = per_target_mi(0, pair, powers, model1, pos, eta)
    if abs(a - b) > 1e-9:
        return False, f"single-target log-det mismatch: {a} vs {b}"
    return True, ""


def _check_greedy(rng) -> tuple[bool, str]:
    omega = rng.uniform(0.1, 5.0, size=8)
    lam = rng.uniform(0.1, 5.0, size=8)
    sets = greedy_sen_pe(omega, lam, 16)
    if len(sets.sen) != 4 or len(sets.pe) != 4:
        return False, "set sizes wrong"
    if sorted(sets.sen + sets.pe) != list(range(8)):
        return False, "sets do not partition the half band"
    if sorted(m for m, _ in sets.pairs) != sorted(sets.pe):
        return False, "pairing is not a perfect matching"
    return True, ""


def run_all(cfg: ScenarioConfig) -> list:
    """Run every check; returns (name, ok, detail) triples."""
    rng = np.random.default_rng(2024)
    checks = [
        ("quadratic-transform tightness/bound", lambda: _check_quadratic_transform(rng)),
        ("smoothed-L0 majorization", lambda: _check_l0(rng)),
        ("MI gradient fidelity (finite differences)", lambda: _check_gradients(cfg, rng)),
        ("MI log-det vs per-target form", lambda: _check_mi_consistency(cfg, rng)),
        ("greedy split invariants", lambda: _check_greedy(rng)),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of the CLI
            ok, detail = False, f"exception: {exc}"
        out.append((name, ok, detail))
    return out
