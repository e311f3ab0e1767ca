"""
Run orchestration: evolve, diagnose and fit one configuration, write the
artifacts, and drive grid-refinement studies.

Artifacts in the output directory:

* ``history.csv``: one NDJSON header line, then a CSV table of every node;
* ``diagnostics.ndjson``: energy, identity, fit, envelope and check records;
* ``series_<n>.csv``: two-column traces along the configured curves;
* ``run.json``: run id, config hash, file list and the invariant-suite verdict.

All numbers are written with the shortest round-trip decimal form, and no
timestamps are recorded, so identical configs give byte-identical files.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .decay import CurveSpec, DecayError, InsufficientSamples, check_envelope, extract_series, fit_exponent
from .diagnostics import (
    MORAWETZ,
    TIME,
    EnergyReport,
    MultiplierSpec,
    bulk_integral,
    composite_energy,
    divergence_residual,
    e4_from_e3,
    energy_maxwell,
    energy_morawetz,
    energy_reduced,
    energy_sharp,
    mode_energy,
    node_fields,
    slab_bulk,
    slice_energy,
    time_commuted,
)
from .evolution import (
    EvolutionError,
    FieldHistory,
    ModeHistory,
    covariant_residual,
    evolve,
    evolve_mode,
    gauss_residual,
)

HISTORY_COLUMNS = ("w", "v", "r", "Re(phi)", "Im(phi)", "Q", "Re(Dw_phi)", "Im(Dw_phi)",
                   "Re(Dv_phi)", "Im(Dv_phi)", "F_vw")
MODE_COLUMNS = ("w", "v", "r", "psi")


def _clean(obj):
    """JSON-ready copy with floats kept exact and non-finite values as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ndjson_line(record: dict) -> str:
    return json.dumps(_clean(record), sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# evolution stage


def evolve_stage(cfg: RunConfig, *, first_order: bool = False):
    grid, bg = cfg.grid, cfg.background
    if cfg.sector == "mode":
        return evolve_mode(cfg.mode, grid, cfg.data, bg, first_order=first_order)
    return evolve(grid, cfg.data, bg, cfg.potential, n_iter=cfg["evolution.n_iter"], first_order=first_order)


def history_header(cfg: RunConfig, history) -> dict:
    head = {
        "format": "mhdecay-history",
        "sector": cfg.sector,
        "grid": cfg.grid.as_dict(),
        "background": {"m": cfg.background.m},
        "data": asdict(cfg.data),
        "config_hash": cfg.config_hash,
        "run_id": cfg.run_id,
    }
    if isinstance(history, ModeHistory):
        head["mode"] = {"s": history.mode.s, "ell": history.mode.ell}
        head["columns"] = list(MODE_COLUMNS)
    else:
        head["potential"] = asdict(history.potential)
        head["columns"] = list(HISTORY_COLUMNS)
        head["excluded_nodes"] = history.meta.get("excluded_nodes", 0)
        head["toda_flags"] = history.meta.get("toda_flags", 0)
    return head


def history_table(history) -> np.ndarray:
    W, V = np.meshgrid(history.grid.w, history.grid.v, indexing="ij")
    if isinstance(history, ModeHistory):
        cols = [W, V, history.r, history.psi]
    else:
        Dw, Dv = history.covariant_derivatives()
        phi = history.phi
        cols = [W, V, history.r, phi.real, phi.imag, history.Q, Dw.real, Dw.imag, Dv.real, Dv.imag,
                history.F_vw]
    return np.stack([np.asarray(c, dtype=float).ravel() for c in cols], axis=1)


def write_history(path: Path, cfg: RunConfig, history) -> None:
    table = history_table(history)
    with open(path, "w") as fh:
        fh.write(ndjson_line(history_header(cfg, history)))
        head = MODE_COLUMNS if isinstance(history, ModeHistory) else HISTORY_COLUMNS
        fh.write(",".join(head) + "\n")
        for row in table.tolist():
            fh.write(",".join(map(repr, row)) + "\n")


def read_history(path: Path):
    """(header dict, table array) from a history file."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, table


# --------------------------------------------------------------------------
# slice schedule


def _snap(grid, t: float, direction: str) -> float:
    base = 0.5 * (grid.w0 + grid.v0)
    step = 0.5 * grid.delta
    n = (t - base) / step
    n = math.ceil(n - 1e-9) if direction == "up" else math.floor(n + 1e-9)
    return base + n * step


def slice_schedule(cfg: RunConfig) -> dict:
    """t-window in which every slice carries the whole solution, plus the t_i ladder.

    The window opens once the data ray has been passed and closes before the
    slices reach the far grid edges; t0 is its start unless set explicitly.
    """
    grid = cfg.grid
    support = cfg.data_support()
    if cfg.data.ray == "outgoing":
        edge = grid.v0 if support is None else max(grid.v0, support[1])
        t_lo = 0.5 * (grid.w0 + edge)
    else:
        edge = grid.w0 if support is None else max(grid.w0, support[1])
        t_lo = 0.5 * (edge + grid.v0)
    t_lo = max(t_lo, 0.5 * (grid.w0 + grid.v0) + grid.delta)
    t_hi = min(0.5 * (grid.w1 + grid.v0), 0.5 * (grid.w0 + grid.v1))
    t_lo, t_hi = _snap(grid, t_lo, "up"), _snap(grid, t_hi, "down")
    if t_hi <= t_lo:
        raise ValueError(f"grid too small: no complete t-slices between {t_lo} and {t_hi}")
    t0 = cfg["diagnostics.t0"]
    t0 = t_lo if t0 == "auto" else _snap(grid, float(t0), "up")
    if not t_lo <= t0 <= t_hi:
        raise ValueError(f"diagnostics.t0 = {t0} lies outside the complete-slice window [{t_lo}, {t_hi}]")
    uniform = [_snap(grid, x, "down") for x in np.linspace(t_lo, t_hi, cfg["diagnostics.slices"])]
    ladder = []
    if t0 > 0:
        ratio = cfg["diagnostics.ladder_ratio"]
        k = 0
        while t0 * ratio**k <= t_hi + 1e-12:
            ladder.append(_snap(grid, t0 * ratio**k, "down"))
            k += 1
    ladder = sorted(set(x for x in ladder if x >= t0))
    times = sorted(set(uniform) | set(ladder) | {t0})
    return {"window": (t_lo, t_hi), "t0": t0, "times": times, "ladder": ladder or [t0]}


# --------------------------------------------------------------------------
# diagnostics stage


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)

    def record(self) -> dict:
        return {"record": "check", "name": self.name, "passed": self.passed, "value": self.value,
                "detail": self.detail}


def _multipliers(cfg: RunConfig) -> dict:
    out = {"TimeT": TIME, "MorawetzK": MORAWETZ,
           "RadialG": MultiplierSpec("RadialG", cfg.f_profile())}
    if cfg["multiplier.h.enabled"]:
        out["RedshiftH"] = MultiplierSpec("RedshiftH", cfg.h_profile())
    return out


def _relative_drift(values) -> float:
    values = np.asarray(values, dtype=float)
    scale = max(abs(values[0]), 1e-300)
    return float((values.max() - values.min()) / scale) if values.max() > 0 else 0.0


def diagnose_nonlinear(cfg: RunConfig, history: FieldHistory):
    sched = slice_schedule(cfg)
    nf = node_fields(history)
    grid = cfg.grid
    report = EnergyReport()
    mults = _multipliers(cfg)
    tail = cfg["diagnostics.coulomb_tail"]
    E_t, E_K = [], []
    for t in sched["times"]:
        where = {"t": t}
        se = slice_energy(nf, TIME, ("t", t), coulomb_tail=tail)
        E_t.append(se.value)
        report.add("E_t", se.value, where=where, domain=se.domain,
                   flags={"clipped": se.clipped, "coulomb_tail": se.tail})
        report.add("E_t_reduced", energy_reduced(nf, t), where=where, domain=se.domain)
        ek = energy_morawetz(nf, t)
        E_K.append(ek)
        report.add("E_K", ek, where=where, domain=se.domain)
        report.add("E_sharp", energy_sharp(nf, t), where=where, domain=se.domain)
        report.add("E_G", slice_energy(nf, mults["RadialG"], ("t", t)).value, where=where, domain=se.domain)
        if "RedshiftH" in mults:
            report.add("E_H", slice_energy(nf, mults["RedshiftH"].scaled(-1.0), ("t", t)).value,
                       where=where, domain=se.domain)
    t0 = sched["t0"]
    nt = time_commuted(nf)
    parts = {
        "E_t": slice_energy(nf, TIME, ("t", t0), coulomb_tail=tail).value,
        "E_K": energy_morawetz(nf, t0),
        "E_sharp": energy_sharp(nf, t0),
        "E_F": energy_maxwell(nf, t0),
        "E_t_Lt": slice_energy(nt, TIME, ("t", t0)).value,
        "E_K_Lt": energy_morawetz(nt, t0),
        "E_sharp_Lt": energy_sharp(nt, t0),
    }
    for name in ("E_t", "E_K", "E_sharp"):
        report.add(name, parts[name + "_Lt"], where={"t": t0}, commutation=(1, 0))
    for kind in ("E_MH", "E_MH_hat", "E1", "E2", "E3"):
        report.add(kind, composite_energy(parts, kind), where={"t": t0})
    e3 = composite_energy(parts, "E3")
    report.add("E4", e4_from_e3(e3, grid.w1, grid.v1, cfg.potential.kind), where={"w": grid.w1, "v": grid.v1})
    ladder = sched["ladder"]
    for a, b in zip(ladder[:-1], ladder[1:]):
        report.add("J_K", slab_bulk(nf, MORAWETZ, a, b), where={"t": [a, b]})
        report.add("J_G", slab_bulk(nf, mults["RadialG"], a, b), where={"t": [a, b]})
    region = (grid.w0, grid.w1, grid.v0, grid.v1)
    if "RedshiftH" in mults:
        report.add("I_H", bulk_integral(nf, mults["RedshiftH"], region), where={"region": list(region)})
    records = [dict(e, record="energy") for e in report.entries]
    for name, V in mults.items():
        res = divergence_residual(nf, V, region)
        records.append({"record": "identity", "multiplier": name, "region": list(region), **res})
    killing = bulk_integral(nf, TIME, region, route="divergence")
    records.append({"record": "killing_bulk", "route": "divergence", "value": killing})
    gauss = gauss_residual(history)[0]
    cov = covariant_residual(history)
    records.append({"record": "residual", "gauss": gauss, **{f"covariant_{k}": v for k, v in cov.items()}})

    drift = _relative_drift(E_t)
    scale = max(max(abs(x) for x in E_t), 1e-300)
    values = [e["value"] for e in report.entries]
    checks = [
        Check("finite", bool(np.all(np.isfinite(values))), float(np.sum(~np.isfinite(values)))),
        Check("E_t_nonnegative", min(E_t) >= -1e-12 * scale, min(E_t)),
        Check("E_K_nonnegative", min(E_K) >= -1e-12 * max(max(E_K), 1e-300), min(E_K)),
        Check("E_t_drift", drift <= cfg["suite.drift_tol"], drift,
              f"relative drift over t in [{sched['window'][0]}, {sched['window'][1]}]"),
    ]
    return records, checks, sched


def diagnose_mode(cfg: RunConfig, history: ModeHistory):
    sched = slice_schedule(cfg)
    report = EnergyReport()
    E = []
    for t in sched["times"]:
        e = mode_energy(history, t)
        E.append(e)
        report.add("E_t", e, where={"t": t}, flags={"sector": "mode", "ell": history.mode.ell})
    t0 = sched["t0"]
    report.add("E_t", mode_energy(history, t0, commuted=True), where={"t": t0}, commutation=(1, 0),
               flags={"sector": "mode", "ell": history.mode.ell})
    for j in (1, 2):
        report.add("E_t", mode_energy(history, t0, angular_order=j), where={"t": t0}, commutation=(0, j),
                   flags={"sector": "mode", "ell": history.mode.ell})
    drift = _relative_drift(E)
    records = [dict(e, record="energy") for e in report.entries]
    values = [e["value"] for e in report.entries]
    checks = [
        Check("finite", bool(np.all(np.isfinite(values))), float(np.sum(~np.isfinite(values)))),
        Check("E_t_nonnegative", min(E) >= -1e-12 * max(max(E), 1e-300), min(E)),
        Check("E_t_drift", drift <= cfg["suite.drift_tol"], drift),
    ]
    return records, checks, sched


def diagnose(cfg: RunConfig, history):
    if isinstance(history, ModeHistory):
        return diagnose_mode(cfg, history)
    return diagnose_nonlinear(cfg, history)


# --------------------------------------------------------------------------
# fit stage


def _envelope_flag(cfg: RunConfig) -> bool:
    if cfg["fit.envelope"] != "auto":
        return bool(float(cfg["fit.envelope"]))
    pot = cfg.potential
    return (pot.kind == "Mass" and pot.c1 > 0) or (pot.kind == "SineGordon" and pot.c3 > 0)


def _bounds_for(cfg: RunConfig, curve: CurveSpec) -> tuple:
    if curve.kind == "r_const" and curve.value < 3.0 * cfg.background.m:
        return ("near_horizon_w_over_vplus_sq", "near_horizon_offset")
    if curve.kind == "v_const":
        return ("one_over_w",)
    return ("one_over_v", "one_over_w")


def fit_stage(cfg: RunConfig, history):
    records, series = [], []
    quantities = ["mode amplitude"] if isinstance(history, ModeHistory) else cfg.quantities()
    envelope = _envelope_flag(cfg)
    for curve in cfg.curves():
        for q in quantities:
            base = {"curve": curve.kind, "value": curve.value, "quantity": q}
            try:
                s = extract_series(history, curve, q)
            except (DecayError, InsufficientSamples) as exc:
                records.append({"record": "fit", **base, "error": str(exc)})
                continue
            series.append(s)
            try:
                fit = fit_exponent(s, envelope=envelope)
                records.append({"record": "fit", **base, **fit.as_dict()})
            except ValueError as exc:
                records.append({"record": "fit", **base, "error": str(exc)})
            for bound in _bounds_for(cfg, curve):
                records.append({"record": "envelope", **base, **check_envelope(s, bound).as_dict()})
    return records, series


# --------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    config: RunConfig
    out_dir: Path
    files: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    records: list = field(default_factory=list)
    series: list = field(default_factory=list)
    history: object = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _series_name(n: int, s) -> str:
    slug = re.sub(r"[^A-Za-z0-9.]+", "_", s.label).strip("_")
    return f"series_{n:02d}_{slug}.csv"


def run(cfg: RunConfig, out_dir, *, stages=("evolve", "diagnose", "fit"), write_history_file=None) -> RunResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(cfg, out)
    (out / "config.txt").write_text(cfg.text())
    result.files.append("config.txt")
    summary = {"run_id": cfg.run_id, "config_hash": cfg.config_hash, "sector": cfg.sector,
               "stages": list(stages)}
    try:
        history = evolve_stage(cfg)
    except EvolutionError as exc:
        summary.update(status="aborted", error=str(exc), cell=list(exc.cell or ()), partial=True)
        (out / "run.json").write_text(json.dumps(_clean(summary), sort_keys=True, indent=1) + "\n")
        raise
    result.history = history
    if write_history_file is None:
        write_history_file = cfg["output.history"]
    if write_history_file:
        write_history(out / "history.csv", cfg, history)
        result.files.append("history.csv")
    records = []
    if "diagnose" in stages:
        recs, checks, sched = diagnose(cfg, history)
        records += recs
        result.checks += checks
        summary["schedule"] = sched
    if "fit" in stages:
        recs, series = fit_stage(cfg, history)
        records += recs
        result.series = series
        for n, s in enumerate(series):
            name = _series_name(n, s)
            (out / name).write_text(s.to_csv())
            result.files.append(name)
    records += [c.record() for c in result.checks]
    result.records = records
    with open(out / "diagnostics.ndjson", "w") as fh:
        for rec in records:
            fh.write(ndjson_line(rec))
    result.files.append("diagnostics.ndjson")
    summary.update(status="complete", passed=result.passed, files=sorted(result.files + ["run.json"]),
                   checks=[c.record() for c in result.checks])
    (out / "run.json").write_text(json.dumps(_clean(summary), sort_keys=True, indent=1) + "\n")
    return result


# --------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceReport:
    deltas: list
    entries: dict

    def order(self, name: str):
        return self.entries[name]["order"]

    def lines(self) -> list:
        out = []
        for name, e in self.entries.items():
            order = "n/a" if e["order"] is None else f"{e['order']:.3f}"
            vals = ", ".join(f"{v:.6e}" for v in e["values"])
            out.append(f"{name:28s} order {order:>7s}   [{vals}]")
        return out

    def to_ndjson(self) -> str:
        return "".join(ndjson_line({"record": "convergence", "diagnostic": k, "deltas": self.deltas, **v})
                       for k, v in self.entries.items())


def fitted_order(values, kind: str, ratio: float = 2.0):
    """Order from a refinement sequence; None when the diagnostic is identically zero.

    ``residual`` values should vanish in the limit, so the order is the slope of
    log(value) against log(delta). ``value`` diagnostics converge to an unknown
    limit, so successive differences are used instead (Richardson).
    """
    v = np.asarray(values, dtype=float)
    if kind == "value":
        v = np.abs(np.diff(v))
    else:
        v = np.abs(v)
    if len(v) < 2 or np.all(v <= 1e-300):
        return None
    if np.any(v <= 1e-300):
        return None
    x = -np.arange(len(v)) * math.log(ratio)
    slope = np.polyfit(x, np.log(v), 1)[0]
    return float(slope)


def _probe_node(grid, w, v):
    i = int(round((w - grid.w0) / grid.delta))
    j = int(round((v - grid.v0) / grid.delta))
    return i, j


def convergence_diagnostics(cfg: RunConfig, history, probe: tuple, sched: dict) -> dict:
    """Scalar diagnostics compared across resolutions, tagged residual or value.

    ``probe`` and ``sched`` come from the coarsest level so every level samples
    the same nodes and slices.
    """
    grid = cfg.grid
    i, j = _probe_node(grid, *probe)
    if isinstance(history, ModeHistory):
        E = [mode_energy(history, t) for t in sched["times"]]
        return {
            "probe_psi": ("value", float(history.psi[i, j])),
            "mode_energy_t0": ("value", E[0]),
            "mode_energy_drift": ("residual", _relative_drift(E)),
        }
    nf = node_fields(history)
    tail = cfg["diagnostics.coulomb_tail"]
    E = [slice_energy(nf, TIME, ("t", t), coulomb_tail=tail).value for t in sched["times"]]
    region = (grid.w0, grid.w1, grid.v0, grid.v1)
    out = {
        "probe_abs_phi": ("value", float(abs(history.phi[i, j]))),
        "E_t_t0": ("value", E[0]),
        "E_t_drift": ("residual", _relative_drift(E)),
        "gauss_residual": ("residual", gauss_residual(history)[0]),
        "covariant_residual": ("residual", covariant_residual(history)["max"]),
        "killing_bulk": ("residual", abs(bulk_integral(nf, TIME, region, route="divergence"))),
    }
    for name, V in _multipliers(cfg).items():
        out[f"identity_{name}"] = ("residual", divergence_residual(nf, V, region)["residual"])
    return out


def convergence(cfg: RunConfig, levels: int = 3, *, first_order: bool = False) -> ConvergenceReport:
    if levels < 2:
        raise ValueError("a convergence study needs at least two levels")
    deltas, table = [], {}
    coarse = cfg.grid
    probe = (coarse.w0 + (coarse.nw // 2) * coarse.delta, coarse.v0 + (3 * (coarse.nv - 1) // 4) * coarse.delta)
    sched = slice_schedule(cfg)
    for k in range(levels):
        level_cfg = cfg.updated({"grid.delta": cfg["grid.delta"] / 2**k})
        history = evolve_stage(level_cfg, first_order=first_order)
        deltas.append(level_cfg["grid.delta"])
        for name, (kind, value) in convergence_diagnostics(level_cfg, history, probe, sched).items():
            table.setdefault(name, {"kind": kind, "values": []})["values"].append(value)
        del history
    for entry in table.values():
        entry["order"] = fitted_order(entry["values"], entry["kind"])
    return ConvergenceReport(deltas, table)
