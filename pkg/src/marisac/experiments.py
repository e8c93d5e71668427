"""Benchmark schemes, mission harness, CDF aggregation and CSV output.

A mission runs the two-stage optimization over the whole frame sequence for
one (scheme, seed) pair. All schemes share the channel draws of the seed;
scheme-local randomness (the random-subcarrier benchmark) comes from a
separate stream so paired-seed comparisons stay paired.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import (FrameModel, FrameResult, PowerPlan, SubcarrierPlan,
                      build_frame_model, evaluate_frame)
from .optimizer import (NO_SENS_QOS, PROPOSED, RAN_SUB, FramePlan,
                        MissionInfeasible, SchemeOptions, WarmStart,
                        find_initial_position, make_frame_plan, optimize_frame,
                        tdma_options)
from .scenario import NodeLayout, ScenarioConfig, make_layout, scheme_stream

SCHEMES = ("proposed", "ran_sub", "tdma", "s_line", "no_sens_qos")

_SCHEME_TAGS = {name: i for i, name in enumerate(SCHEMES)}


def scheme_options(cfg: ScenarioConfig, scheme: str) -> SchemeOptions:
    if scheme in ("proposed", "s_line"):
        return PROPOSED
    if scheme == "ran_sub":
        return RAN_SUB
    if scheme == "tdma":
        return tdma_options(cfg)
    if scheme == "no_sens_qos":
        return NO_SENS_QOS
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass
class FrameRecord:
    result: FrameResult
    plan: SubcarrierPlan
    powers: PowerPlan
    ref_pos: np.ndarray  # position the frame's channel structure was frozen at


@dataclass
class MissionTrace:
    scheme: str
    seed: int
    cfg: ScenarioConfig
    layout: NodeLayout
    initial_position: np.ndarray
    frames: list = field(default_factory=list)
    diag_rows: list = field(default_factory=list)   # (frame, k, psi) solver trace

    @property
    def results(self) -> list:
        return [rec.result for rec in self.frames]

    def rates(self) -> np.ndarray:
        """Per-frame end-to-end rates; out-of-service frames count as zero."""
        return np.array([r.r_e2e if r.feasible else 0.0 for r in self.results])

    def mi_totals(self) -> np.ndarray:
        return np.array([r.mi_total if r.feasible else 0.0 for r in self.results])

    def aggregate(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "rate_p10": percentile(self.rates(), 10.0),
            "mi_p10": percentile(self.mi_totals(), 10.0),
            "oos_frames": int(sum(not r.feasible for r in self.results)),
        }


# ---- empirical CDF -----------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalCdf:
    values: np.ndarray  # sorted ascending
    probs: np.ndarray   # i/n cumulative levels

    def percentile(self, q: float) -> float:
        return percentile(self.values, q)


def compute_cdf(values) -> EmpiricalCdf:
    """Empirical CDF of the samples; raises on empty input."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot build a CDF from an empty sample")
    sorted_vals = np.sort(arr)
    probs = np.arange(1, arr.size + 1) / arr.size
    return EmpiricalCdf(values=sorted_vals, probs=probs)


def percentile(values, q: float) -> float:
    """Lower-interpolation percentile; q=10 gives the 90%-likely metric."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot take a percentile of an empty sample")
    return float(np.percentile(arr, q, method="lower"))


def likely_rate(values, likelihood: float = 0.9) -> float:
    """Value exceeded with the given probability (default: 90%-likely)."""
    return percentile(values, 100.0 * (1.0 - likelihood))


# ---- mission harness ----------------------------------------------------------------


def _advance_toward(pos: np.ndarray, goal: np.ndarray, step: float) -> np.ndarray:
    delta = goal[:2] - pos[:2]
    dist = float(np.linalg.norm(delta))
    out = pos.copy()
    if dist <= step:
        out[:2] = goal[:2]
    elif dist > 0:
        out[:2] = pos[:2] + delta / dist * step
    return out


def run_mission(cfg: ScenarioConfig, scheme: str, seed: int | None = None,
                collect_diagnostics: bool = False) -> MissionTrace:
    """Run one full mission for a scheme; deterministic given (cfg, seed)."""
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    options = scheme_options(cfg, scheme)
    layout = make_layout(cfg)
    rng = scheme_stream(cfg, _SCHEME_TAGS[scheme]) if options.random_allocation else None
    takeoff = np.asarray(cfg.uav_takeoff_pos, dtype=float)
    area = np.asarray(cfg.area_center, dtype=float).copy()
    area[2] = cfg.uav_alt_m

    trace = MissionTrace(scheme=scheme, seed=cfg.seed, cfg=cfg, layout=layout,
                         initial_position=takeoff.copy())
    mi_history: list = []

    if scheme == "no_sens_qos":
        pos = takeoff.copy()
        start_frame = 1
    else:
        try:
            init = find_initial_position(cfg, layout, options=options, rng=rng)
        except MissionInfeasible:
            # degrade instead of aborting: start from the takeoff point and
            # let per-frame feasibility decide service (matters only for the
            # handicapped benchmarks)
            pos = takeoff.copy()
            start_frame = 1
        else:
            trace.initial_position = init.position.copy()
            trace.frames.append(FrameRecord(result=init.result, plan=init.plan,
                                            powers=init.powers,
                                            ref_pos=init.model.ref_pos.copy()))
            mi_history.append(init.result.mi_total)
            pos = init.position.copy()
            start_frame = 2

    warm: WarmStart | None = None
    if trace.frames and trace.frames[-1].result.feasible:
        last = trace.frames[-1]
        warm = WarmStart(dl_cols=[m for m in range(cfg.m_subcarriers) if last.plan.alpha_dl[m]],
                         cd_cols=[m for m in range(cfg.m_subcarriers) if last.plan.alpha_cd[m]],
                         powers=last.powers, pairs=list(last.plan.pairs))
    for frame in range(start_frame, cfg.n_frames + 1):
        prev_pos = pos.copy()
        repair_args = None
        if (not options.random_allocation and not options.full_band
                and len(mi_history) >= 2):
            repair_args = (mi_history[-2], mi_history[-1])
        model = build_frame_model(cfg, layout, frame, prev_pos)
        frame_plan = make_frame_plan(cfg, model, prev_pos, options, rng=rng,
                                     repair_args=repair_args)

        fixed_pos = None
        position_free = True
        if scheme == "s_line":
            fixed_pos = _advance_toward(prev_pos, area, cfg.max_step_m)
            position_free = False

        result, plan, powers, model = optimize_frame(
            cfg, layout, frame, prev_pos, options, frame_plan,
            position_free=position_free, fixed_pos=fixed_pos, model=model,
            warm=warm)

        if not result.feasible and position_free:
            # out of service: keep heading for the emergency area
            moved = _advance_toward(prev_pos, area, cfg.max_step_m)
            result.uav_pos = moved
        trace.frames.append(FrameRecord(result=result, plan=plan, powers=powers,
                                        ref_pos=model.ref_pos.copy()))
        if collect_diagnostics:
            for k, psi in enumerate(result.psi_trace):
                trace.diag_rows.append((frame, k, psi))
        mi_history.append(result.mi_total)
        pos = np.asarray(result.uav_pos, dtype=float).copy()
        if result.feasible and not options.full_band:
            warm = WarmStart(dl_cols=[m for m in range(cfg.m_subcarriers) if plan.alpha_dl[m]],
                             cd_cols=[m for m in range(cfg.m_subcarriers) if plan.alpha_cd[m]],
                             powers=powers, pairs=list(plan.pairs))
        else:
            warm = None
    return trace


def recompute_frame(trace: MissionTrace, idx: int) -> FrameResult:
    """Re-evaluate one frame's metrics from its logged plan/powers/position."""
    rec = trace.frames[idx]
    cfg = trace.cfg
    options = scheme_options(cfg, trace.scheme)
    model = build_frame_model(cfg, trace.layout, rec.result.frame, rec.ref_pos)
    return evaluate_frame(rec.result.frame, rec.plan, rec.powers, model,
                          rec.result.uav_pos, feasible=rec.result.feasible,
                          prefactors=options.frame_prefactors(cfg))


# ---- CSV output -----------------------------------------------------------------------

MISSION_COLUMNS = ("frame", "x", "y", "r_dl", "r_cd", "r_e2e", "mi_total",
                   "mi_min_target", "p_uav_used", "p_tbs_used", "feasible",
                   "sca_iters")
AGGREGATE_COLUMNS = ("scheme", "seed", "rate_p10", "mi_p10", "oos_frames")
TRACE_COLUMNS = ("frame", "k", "psi")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def mission_rows(trace: MissionTrace) -> list:
    rows = []
    for rec in trace.frames:
        r = rec.result
        rows.append({
            "frame": r.frame,
            "x": _fmt(r.uav_pos[0]),
            "y": _fmt(r.uav_pos[1]),
            "r_dl": _fmt(r.r_dl),
            "r_cd": _fmt(r.r_cd),
            "r_e2e": _fmt(r.r_e2e),
            "mi_total": _fmt(r.mi_total),
            "mi_min_target": _fmt(float(np.min(r.mi_per_target))
                                  if r.mi_per_target.size else 0.0),
            "p_uav_used": _fmt(r.power_used_uav),
            "p_tbs_used": _fmt(r.power_used_tbs),
            "feasible": int(r.feasible),
            "sca_iters": r.sca_iters,
        })
    return rows


def write_mission_csv(trace: MissionTrace, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MISSION_COLUMNS)
        writer.writeheader()
        writer.writerows(mission_rows(trace))
    return path


def write_aggregate_csv(aggregates: list, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        writer.writeheader()
        for agg in aggregates:
            writer.writerow({"scheme": agg["scheme"], "seed": agg["seed"],
                             "rate_p10": _fmt(agg["rate_p10"]),
                             "mi_p10": _fmt(agg["mi_p10"]),
                             "oos_frames": agg["oos_frames"]})
    return path


def write_trace_csv(trace: MissionTrace, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for frame, k, psi in trace.diag_rows:
            writer.writerow([frame, k, _fmt(psi)])
    return path


def write_channel_dump(cfg: ScenarioConfig, trace: MissionTrace, path: str | Path) -> Path:
    """Per-frame, per-subcarrier channel realizations behind the mission."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "subcarrier", "link_type", "node_id", "re", "im", "gain"])
        for rec in trace.frames:
            model = build_frame_model(cfg, trace.layout, rec.result.frame, rec.ref_pos)
            fad = model.fading
            for m in range(cfg.m_subcarriers):
                for u in range(cfg.u_users):
                    w = fad.varpi_dl[u, m]
                    writer.writerow([rec.result.frame, m, "dl_fading", u,
                                     _fmt(w.real), _fmt(w.imag), ""])
                    writer.writerow([rec.result.frame, m, "dl_gain_bar", u, "", "",
                                     _fmt(model.omega_bar_dl[u, m])])
                for j in range(cfg.j_targets):
                    w = fad.varpi_sen[j, m]
                    writer.writerow([rec.result.frame, m, "sen_fading", j,
                                     _fmt(w.real), _fmt(w.imag), ""])
                    writer.writerow([rec.result.frame, m, "sen_gain_bar", j, "", "",
                                     _fmt(model.omega_bar_sen[j, m])])
                for u in range(cfg.u_users):
                    writer.writerow([rec.result.frame, m, "cd_eta", u, "", "",
                                     _fmt(model.eta_cd[u, m])])
                for j in range(cfg.j_targets):
                    writer.writerow([rec.result.frame, m, "pe_eta", j, "", "",
                                     _fmt(model.eta_pe_sorted[j, m])])
    return path


def run_sweep(cfg: ScenarioConfig, schemes, seeds, out_dir: str | Path,
              jobs: int = 1, collect_diagnostics: bool = False) -> list:
    """Run schemes x seeds missions, writing per-mission CSVs + one aggregate."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(scheme, seed) for scheme in schemes for seed in seeds]
    aggregates = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_mission, cfg, scheme, seed) for scheme, seed in tasks]
            traces = [f.result() for f in futures]
    else:
        traces = [run_mission(cfg, scheme, seed, collect_diagnostics)
                  for scheme, seed in tasks]
    for trace in traces:
        write_mission_csv(trace, out_dir / f"mission_{trace.scheme}_{trace.seed}.csv")
        aggregates.append(trace.aggregate())
    write_aggregate_csv(aggregates, out_dir / "aggregate.csv")
    return aggregates
