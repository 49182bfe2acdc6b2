"""Scenario orchestration over one or more simulation runs, with CSV
waveform export and text/JSON reports."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import metrics
from .circuit import SimResult, run
from .config import FIELD_NAMES, ConfigError, SimConfig
from .metrics import MetricError, TimeSeries
from .topology import TopologyKind

log = logging.getLogger(__name__)

SCENARIOS = ("single", "compare", "sweep")
DEFAULT_COMPARE = (TopologyKind.H4_UNIPOLAR, TopologyKind.HCH5_D2)
STEADY_CYCLES = 5


# -- CSV ---------------------------------------------------------------------

def write_series_csv(series: TimeSeries, path) -> Path:
    """One header line ``name,dt,unit,t0`` followed by one sample per line."""
    path = Path(path)
    header = f"{series.name},{series.dt!r},{series.unit},{series.t0!r}"
    np.savetxt(path, series.samples, fmt="%.17g", header=header, comments="")
    return path


def read_series_csv(path) -> TimeSeries:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().rstrip("\n").split(",")
        if len(header) != 4:
            raise ValueError(f"{path}: malformed header {header!r}")
        samples = np.loadtxt(fh, dtype=float, ndmin=1)
    name, dt, unit, t0 = header
    return TimeSeries(name, float(dt), samples, unit, float(t0))


# -- metrics -------------------------------------------------------------------

def evaluate(result: SimResult) -> dict:
    """Metric block for one run; steady-state metrics skip the blanking window."""
    cfg = result.config
    blank = cfg.blanking
    f = cfg.grid_freq
    s = result.series
    i_cm = s["i_cm"].window(blank)
    flat_dev, spikes = metrics.cmv_flatness(s["v_cm"], cfg.v_dc_ref, blanking=blank)
    v_dc_tail = s["v_dc"].tail(STEADY_CYCLES / f)
    block = {
        "topology": cfg.topology.value,
        "leakage_rms": metrics.rms(i_cm),
        "leakage_peak": float(np.max(np.abs(i_cm.samples))),
        "cmv_max_deviation": flat_dev,
        "cmv_spikes": spikes,
        "v_dc_max_deviation": float(np.max(np.abs(v_dc_tail.samples - cfg.v_dc_ref))),
        "v_dc_mean": float(np.mean(v_dc_tail.samples)),
        "switching_events_per_s": result.mean_switching_frequency,
    }
    try:
        block["dmv_levels"] = list(metrics.dmv_levels(s["v_dm"].window(blank), cfg.v_dc_ref,
                                                      tol=0.02 * cfg.v_dc_ref))
    except MetricError as exc:
        block["dmv_levels"] = None
        block["dmv_error"] = str(exc)
    try:
        block["thd"] = metrics.thd(s["i_grid"].window(blank), f)
        block["power_factor"] = metrics.displacement_pf(s["v_grid"].window(blank),
                                                        s["i_grid"].window(blank), f)
    except MetricError as exc:
        block["thd"] = block["power_factor"] = None
        block["waveform_error"] = str(exc)
    vde = metrics.vde_check(s["i_cm"].window(blank))
    block["vde_tripped"] = vde.tripped
    block["vde_trip_time"] = vde.trip_time
    block["vde_max_window_rms"] = vde.max_window_rms
    return block


@dataclass
class ComparisonReport:
    blocks: Dict[str, dict]
    reference: Optional[str] = None
    ratios: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, blocks: Dict[str, dict]) -> "ComparisonReport":
        ref = TopologyKind.HCH5_D2.value if TopologyKind.HCH5_D2.value in blocks else list(blocks)[-1]
        base = blocks[ref]["leakage_rms"]
        ratios = {name: (b["leakage_rms"] / base if base > 0 else math.inf)
                  for name, b in blocks.items() if name != ref}
        return cls(blocks, ref, ratios)

    def to_dict(self) -> dict:
        return {"blocks": self.blocks, "reference": self.reference, "leakage_ratios": self.ratios}


# -- orchestration ----------------------------------------------------------

def _job(cfg: SimConfig, out: Optional[str], decimate: int) -> dict:
    result = run(cfg)
    block = evaluate(result)
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for ts in result.series.values():
            write_series_csv(ts.decimate(decimate), d / f"{ts.name}.csv")
    return block


def _run_all(jobs: List[tuple], workers: int) -> List[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_job(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_job, *zip(*jobs)))


def _fmt_value(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_report(report: dict) -> str:
    lines = [f"scenario: {report['scenario']}"]
    if report["scenario"] == "sweep":
        lines.append(f"sweep parameter: {report['parameter']}")
    blocks = report["runs"]
    lines.append("")
    lines.append(f"{'run':<22}{'leakage RMS':>14}{'leakage peak':>15}{'CMV dev':>10}"
                 f"{'THD':>9}{'PF':>9}{'VDE':>8}")
    for label, b in blocks.items():
        thd = "n/a" if b["thd"] is None else f"{100 * b['thd']:.2f}%"
        pf = "n/a" if b["power_factor"] is None else f"{b['power_factor']:.4f}"
        lines.append(f"{label:<22}{1e3 * b['leakage_rms']:>11.3f} mA{1e3 * b['leakage_peak']:>12.3f} mA"
                     f"{b['cmv_max_deviation']:>8.2f} V{thd:>9}{pf:>9}"
                     f"{'TRIP' if b['vde_tripped'] else 'ok':>8}")
    if report.get("leakage_ratios"):
        lines.append("")
        lines.append(f"leakage RMS relative to {report['reference']}:")
        for name, r in report["leakage_ratios"].items():
            lines.append(f"  {name}: {r:.1f}x")
    lines.append("")
    for label, b in blocks.items():
        lines.append(f"[{label}]")
        for k in sorted(b):
            lines.append(f"  {k} = {_fmt_value(b[k])}")
    return "\n".join(lines) + "\n"


def run_scenario(config: SimConfig, scenario: str, out_dir=None, *,
                 topologies: Sequence = None, parameter: str = None,
                 values: Iterable[float] = None, decimate: int = 1, workers: int = 1) -> dict:
    """Run ``scenario`` and, when ``out_dir`` is given, write per-run CSV
    directories plus ``report.txt`` and ``report.json``.  Returns the report."""
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    if decimate < 1:
        raise ConfigError("decimate must be >= 1", field="decimate")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    labels: List[str] = []
    cfgs: List[SimConfig] = []
    if scenario == "single":
        labels.append(config.topology.value)
        cfgs.append(config)
    elif scenario == "compare":
        kinds = [TopologyKind.parse(k) for k in (topologies or DEFAULT_COMPARE)]
        if len(set(kinds)) != len(kinds):
            raise ConfigError("compare needs distinct topologies", field="topology")
        for k in kinds:
            labels.append(k.value)
            cfgs.append(config.replace(topology=k))
    else:
        if parameter not in FIELD_NAMES or parameter == "topology":
            raise ConfigError(f"cannot sweep {parameter!r}", field=parameter)
        values = list(values or [])
        if not values:
            raise ConfigError("sweep needs at least one value", field=parameter)
        for v in values:
            labels.append(f"{parameter}={v:g}")
            cfgs.append(config.replace(**{parameter: v}))

    jobs = [(c, None if out is None else str(out / lab), decimate) for c, lab in zip(cfgs, labels)]
    blocks = dict(zip(labels, _run_all(jobs, workers)))

    report = {"scenario": scenario, "config": config.to_dict(), "runs": blocks}
    if scenario == "compare":
        cmp_ = ComparisonReport.build(blocks)
        report["reference"] = cmp_.reference
        report["leakage_ratios"] = cmp_.ratios
    if scenario == "sweep":
        report["parameter"] = parameter
        report["values"] = values
    if out is not None:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out / "report.txt").write_text(format_report(report))
    return report
