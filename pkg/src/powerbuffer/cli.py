"""Command-line front end.

    powerbuffer simulate     [--scenario FILE] [--out DIR] [--no-battery] [--compare-discharge]
    powerbuffer envelope     [--f-range A:B:N] [--vg-range A:B:N]
    powerbuffer stability    [--current AMPS] [--delta-p WATTS]
    powerbuffer worst-current [--scan LO:HI] [--points N]

Exit codes: 0 success, 2 scenario/argument error, 3 dc-link collapse with
the battery enabled, 4 infeasible operating point.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import scenario as scn
from .battery import emf_and_resistance, params_at_current, split_resistance
from .dynamics import CSV_COLUMNS, compare_discharge_profiles, mismatch_power, simulate
from .errors import CalibrationRangeError, ConfigurationError, InfeasibleDemandError
from .phasor import SequenceVoltage, synth_waveforms
from .small_signal import (current_sweep, damping, is_stable, linearize, poles,
                           sensitivities, worst_case_current)
from .steady_state import build_envelope, operating_point

log = logging.getLogger("powerbuffer")

EXIT_OK, EXIT_PARSE, EXIT_COLLAPSE, EXIT_INFEASIBLE = 0, 2, 3, 4


@dataclass
class RunReport:
    command: str
    config: dict
    headline: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    exit_status: int = EXIT_OK

    def render(self) -> str:
        lines = [f"command: {self.command}", f"exit_status: {self.exit_status}", "results:"]
        for key, value in self.headline.items():
            lines.append(f"  {key}: {_fmt(value)}")
        if self.files:
            lines.append("files:")
            lines.extend(f"  {p}" for p in self.files)
        lines.append("resolved_config:")
        lines.extend("  " + ln for ln in scn.dump(self.config).splitlines())
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    return path


def _parse_range(text: str, name: str, default_num: int = 1) -> np.ndarray:
    """``A`` or ``A:B`` or ``A:B:N`` into a linspace."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise ConfigurationError(f"--{name}: expected A[:B[:N]], got {text!r}") from None
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) not in (2, 3):
        raise ConfigurationError(f"--{name}: expected A[:B[:N]], got {text!r}")
    num = int(parts[2]) if len(parts) == 3 else default_num
    if num < 1:
        raise ConfigurationError(f"--{name}: N must be at least 1")
    return np.linspace(parts[0], parts[1], num)


def _gnuplot(path: Path, csv_name: str, x: str, ys: list[str], header) -> Path:
    cols = {name: i + 1 for i, name in enumerate(header)}
    plots = ", ".join(f"'{csv_name}' using {cols[x]}:{cols[y]} with lines title '{y}'" for y in ys)
    path.write_text(
        "set datafile separator ','\nset key autotitle columnhead\n"
        f"set xlabel '{x}'\nplot {plots}\npause -1\n")
    return path


def _plateau(ts, ev):
    """Second half of the sag, excluding the recovery instant."""
    return ts.window(ev.t_start + 0.5 * ev.duration, ev.t_end - 1e-9)


def cmd_simulate(sc: scn.Scenario, out: Path, no_battery: bool = False,
                 compare: bool = False, waveforms: bool = False,
                 gnuplot: bool = False) -> RunReport:
    report = RunReport("simulate", sc.config)
    cfg, z = sc.sim_config, sc.input_impedance
    args = (sc.calibration, sc.table, sc.p_load, z.r_in, sc.v_base, sc.sod)
    ts = simulate(sc.events, cfg, *args, b_in=z.b_in)
    report.files.append(str(ts.to_csv(out / "timeseries.csv")))
    h = report.headline
    h["battery_enabled"] = cfg.battery_enabled
    h["collapsed"] = ts.collapsed
    if ts.collapsed:
        h["collapse_time_s"] = ts.collapse_time
    h["v_dc_min_v"] = float(ts["v_dc"].min())
    h["v_dc_max_v"] = float(ts["v_dc"].max())
    lo, hi = (1 - cfg.dc_band) * cfg.nominal_v_dc, (1 + cfg.dc_band) * cfg.nominal_v_dc
    h["v_dc_within_band"] = bool(lo <= h["v_dc_min_v"] and h["v_dc_max_v"] <= hi)
    h["i_in_pu_peak"] = float(ts["i_in_pu"].max())
    if ts.rc is not None:
        h["battery_emf_v"] = ts.e
        h["battery_rc"] = f"r_s={ts.rc.r_s:.6g} r_p={ts.rc.r_p:.6g} c_p={ts.rc.c_p:.6g}"
    for n, ev in enumerate(sorted(sc.events, key=lambda e: e.t_start)):
        mask = _plateau(ts, ev)
        if not mask.any():
            continue
        h[f"sag{n}_delta_p_w"] = mismatch_power(sc.p_load, ev.pos_pu, z.r_in, sc.v_base)
        h[f"sag{n}_p_in_w"] = float(ts["p_in"][mask].mean())
        h[f"sag{n}_p_batt_w"] = float(ts["p_batt"][mask].mean())
        h[f"sag{n}_i_in_pu"] = float(ts["i_in_pu"][mask].mean())
        h[f"sag{n}_v_dc_end_v"] = float(ts["v_dc"][mask][-1])
    if gnuplot:
        report.files.append(str(_gnuplot(out / "timeseries.gp", "timeseries.csv", "t",
                                         ["v_dc", "p_in", "p_batt"], CSV_COLUMNS)))
    if waveforms:
        rows = []
        omega = sc.filter.mains_freq
        for t, vp, vn in zip(ts["t"], ts["v_g_pos"], ts["v_g_neg"]):
            seq = SequenceVoltage(pos_mag=vp, neg_mag=vn, base_voltage=sc.v_base)
            rows.append((float(t), *synth_waveforms(seq, float(t), omega)))
        report.files.append(str(_write_csv(out / "waveforms.csv", ("t", "v_a", "v_b", "v_c"), rows)))
    if no_battery:
        nb = simulate(sc.events, replace(cfg, battery_enabled=False), *args, b_in=z.b_in)
        report.files.append(str(nb.to_csv(out / "timeseries_no_battery.csv")))
        h["no_battery_collapsed"] = nb.collapsed
        if nb.collapsed:
            h["no_battery_collapse_time_s"] = nb.collapse_time
        h["no_battery_v_dc_final_v"] = float(nb["v_dc"][-1])
    if compare and sc.events:
        cmp = compare_discharge_profiles(sc.events, cfg, *args)
        for i, run in cmp.runs.items():
            report.files.append(str(run.to_csv(out / f"timeseries_{i:g}A.csv")))
            h[f"settling_2pct_{i:g}A_s"] = cmp.settling[i]
            h[f"v_dc_ss_{i:g}A_v"] = cmp.v_final[i]
    if ts.collapsed and cfg.battery_enabled:
        report.exit_status = EXIT_COLLAPSE
    return report


def cmd_envelope(sc: scn.Scenario, out: Path, f_range: str | None = None,
                 vg_range: str | None = None, gnuplot: bool = False) -> RunReport:
    report = RunReport("envelope", sc.config)
    cal = sc.calibration
    f_grid = _parse_range(f_range, "f-range", 9) if f_range else np.linspace(cal.f_min, cal.f_max, 9)
    vg_grid = _parse_range(vg_range, "vg-range", 41) if vg_range else np.linspace(0.0, 2.0, 41)
    band = sc.sim_config.dc_band
    env = build_envelope(cal, f_grid, vg_grid, sc.p_load, sc.input_impedance.r_in,
                         sc.nominal_v_dc, sc.v_base, band)
    header = ("f", "v_g", "v_dc_ss", "feasible", "in_band")
    rows = [(f, vg, v, int(feas), int(inb)) for f, vg, v, feas, inb in env.rows()]
    report.files.append(str(_write_csv(out / "envelope.csv", header, rows)))
    lim_rows = [(float(f), float(a), float(b), env.lower_limit, env.upper_limit)
                for f, a, b in zip(env.f_grid, env.vg_min, env.vg_max)]
    report.files.append(str(_write_csv(out / "limits.csv",
                                       ("f", "vg_min", "vg_max", "v_dc_lower", "v_dc_upper"),
                                       lim_rows)))
    h = report.headline
    h["v_dc_lower_limit_v"] = env.lower_limit
    h["v_dc_upper_limit_v"] = env.upper_limit
    h["cells"] = int(env.v_dc_surface.size)
    h["infeasible_cells"] = int((~env.feasible).sum())
    for f, a, b in zip(env.f_grid, env.vg_min, env.vg_max):
        h[f"ride_through_f={f:g}"] = f"vg_min={a:.4f} vg_max={b:.4f}"
    if gnuplot:
        report.files.append(str(_gnuplot(out / "limits.gp", "limits.csv", "f",
                                         ["vg_min", "vg_max"], ("f", "vg_min", "vg_max"))))
    return report


def _rc_for(sc: scn.Scenario, current: float):
    e, r_b = emf_and_resistance(sc.calibration, sc.sod)
    if sc.sim_config.resistance_model == "universal":
        return e, split_resistance(r_b, sc.table, current)
    return e, params_at_current(sc.table, current)


def cmd_stability(sc: scn.Scenario, out: Path, current: float | None = None,
                  delta_p: float | None = None) -> RunReport:
    report = RunReport("stability", sc.config)
    z = sc.input_impedance
    if delta_p is None:
        ev = sorted(sc.events, key=lambda e: e.t_start)
        delta_p = mismatch_power(sc.p_load, ev[0].pos_pu, z.r_in, sc.v_base) if ev else 0.0
    if current is None:
        current = sc.sim_config.discharge_current
    if current is None:
        current = max(abs(delta_p) / sc.nominal_v_dc, 1e-9)
    e, rc = _rc_for(sc, current)
    h = report.headline
    h.update(discharge_current_a=float(current), delta_p_w=float(delta_p), emf_v=e,
             r_s_ohm=rc.r_s, r_p_ohm=rc.r_p, c_p_f=rc.c_p)
    try:
        op = operating_point(e, rc, delta_p)
    except InfeasibleDemandError as exc:
        h["error"] = str(exc)
        report.exit_status = EXIT_INFEASIBLE
        return report
    m = linearize(op, e, rc, sc.c_dc)
    stable = is_stable(m)
    h.update(v_dc_ss_v=op.v_dc_ss, v_cp_ss_v=op.v_cp_ss, alpha=m.alpha, beta=m.beta,
             gamma=m.gamma, stable=stable)
    sens = sensitivities(rc, sc.c_dc)
    if stable:
        d, p = damping(m, rc), poles(m)
        h.update(zeta_exact=d.zeta_exact, zeta_approx=d.zeta_approx,
                 s_slow=p.s_slow, s_fast=p.s_fast)
    else:
        h.update(zeta_exact=math.nan, zeta_approx=math.nan, s_slow=math.nan, s_fast=math.nan)
    h.update(dzeta_dRs=sens.dzeta_dRs, dzeta_dRp=sens.dzeta_dRp, dzeta_dCp=sens.dzeta_dCp,
             dzeta_dRs_simplified=sens.dzeta_dRs_simplified)
    keys = [k for k in h if k not in ("error",)]
    row = [float(h[k]) if not isinstance(h[k], bool) else int(h[k]) for k in keys]
    report.files.append(str(_write_csv(out / "stability.csv", keys, [row])))
    return report


def cmd_worst_current(sc: scn.Scenario, out: Path, scan: str | None = None,
                      points: int = 50, gnuplot: bool = False) -> RunReport:
    report = RunReport("worst-current", sc.config)
    table = sc.table
    if scan:
        rng = _parse_range(scan, "scan", 2)
        lo, hi = float(rng[0]), float(rng[-1])
    else:
        lo, hi = table.span
    i_star, zeta_star = worst_case_current(table, sc.c_dc, (lo, hi))
    e, _ = emf_and_resistance(sc.calibration, sc.sod)
    currents = np.linspace(lo, hi, max(points, 1)) if hi > lo else np.array([lo])
    sweep = current_sweep(table, sc.c_dc, e, currents)
    header = ("current", "zeta_approx", "zeta_exact", "s_slow", "s_fast")
    report.files.append(str(_write_csv(out / "sweep.csv", header,
                                       [tuple(r[k] for k in header) for r in sweep])))
    h = report.headline
    h.update(i_star_a=float(i_star), zeta_star=float(zeta_star), scan_lo_a=lo, scan_hi_a=hi,
             sweep_zeta_max=max(r["zeta_approx"] for r in sweep))
    if gnuplot:
        report.files.append(str(_gnuplot(out / "sweep.gp", "sweep.csv", "current",
                                         ["zeta_approx", "s_slow"], header)))
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="scenario YAML (defaults to the built-in reference system)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--dump-resolved-config", action="store_true",
                        help="also write resolved_config.yaml to the output directory")
    common.add_argument("--dt", type=float, help="override the integration step (s)")
    common.add_argument("--seed", type=int, default=0,
                        help="recorded in the report; the commands themselves are deterministic")
    common.add_argument("--gnuplot-script", action="store_true", help="emit a gnuplot script")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="powerbuffer", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="time-domain sag simulation")
    s.add_argument("--no-battery", action="store_true",
                   help="add the comparison run with the battery disabled")
    s.add_argument("--compare-discharge", action="store_true",
                   help="rerun with the 153 A and 1000 A battery parameters")
    s.add_argument("--waveforms", action="store_true", help="write PCC phase voltages")
    e = sub.add_parser("envelope", parents=[common], help="steady ride-through envelope")
    e.add_argument("--f-range", help="state of discharge grid A[:B[:N]]")
    e.add_argument("--vg-range", help="PCC voltage grid in p.u. A[:B[:N]]")
    st = sub.add_parser("stability", parents=[common], help="small-signal stability report")
    st.add_argument("--current", type=float, help="battery discharge current (A)")
    st.add_argument("--delta-p", type=float, help="mismatch power (W); default from first sag")
    w = sub.add_parser("worst-current", parents=[common], help="damping ratio vs current")
    w.add_argument("--scan", help="current range LO:HI (A)")
    w.add_argument("--points", type=int, default=50)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = scn.load(args.scenario) if args.scenario else scn.default()
        if args.dt is not None:
            sc = sc.with_overrides(dt_seconds=args.dt)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            report = cmd_simulate(sc, out, args.no_battery, args.compare_discharge,
                                  args.waveforms, args.gnuplot_script)
        elif args.command == "envelope":
            report = cmd_envelope(sc, out, args.f_range, args.vg_range, args.gnuplot_script)
        elif args.command == "stability":
            report = cmd_stability(sc, out, args.current, args.delta_p)
        else:
            report = cmd_worst_current(sc, out, args.scan, args.points, args.gnuplot_script)
    except (ConfigurationError, CalibrationRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.dump_resolved_config:
        path = out / "resolved_config.yaml"
        path.write_text(scn.dump(sc.config))
        report.files.append(str(path))
    report.headline["seed"] = args.seed
    text = report.render()
    (out / f"report_{report.command}.txt").write_text(text)
    sys.stdout.write(text)
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
