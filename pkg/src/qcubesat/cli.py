"""Command-line front end.

Every subcommand reads one scenario file and writes a result bundle:
``qcubesat <command> --scenario FILE --out DIR --seed N``.
Exit codes: 0 success, 2 configuration error, 3 model or runtime error.
"""

from __future__ import annotations

import argparse
import math
import sys
from datetime import timedelta

import numpy as np

from .errors import LockLostError, ModelInputError, OutputError, ScenarioError
from .geometry import TopoPoint, find_passes, point_ahead, slant_range
from .mission import SECONDS_PER_MONTH, run_mission, simulate_pass, transmission_segments
from .optolink import beam_half_angle_1e2, divergence_half_angle, link_budget
from .orbit import SolarActivity, SolarActivityScenario, circular_state, deorbit_lifetime, propagate
from .pointing import jitter_summary_to_loss, simulate_pointing_run
from .quantum.decoy import key_report
from .quantum.entangled import coincidence_qber, emit_entangled, match_offset
from .quantum.wcp import apply_channel, emit_wcp
from .results import Column, ResultBundle
from .scenario import parse_scenario, reference_scenario

EXIT_OK, EXIT_CONFIG, EXIT_MODEL = 0, 2, 3


def _utc(sc, seconds):
    return (sc.start + timedelta(seconds=float(seconds))).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _trajectory(sc, days):
    o = sc["orbit"]
    return propagate(
        circular_state(o["altitude_km"] * 1e3, o["inclination_deg"]),
        sc.body(),
        SolarActivityScenario(SolarActivity(o["solar_activity"]), sc.start),
        duration=days * 86400.0,
        step=o["cadence_s"],
        start=sc.start,
    )


def _passes(sc, days):
    return find_passes(_trajectory(sc, days), sc.station(), require_eclipse=sc["station"]["require_eclipse"])


def _first_pass(sc):
    passes = _passes(sc, sc["pointing"]["search_days"])
    if not passes:
        raise ModelInputError("no experiment pass found within pointing.search_days")
    return passes[0]


# --- subcommands ----------------------------------------------------------------


def cmd_passes(sc, out, seed):
    passes = _passes(sc, sc["orbit"]["duration_days"])
    cols = [
        Column("rise_utc"),
        Column("culmination_utc"),
        Column("set_utc"),
        Column("rise_s", ".3f"),
        Column("set_s", ".3f"),
        Column("duration_s", ".3f"),
        Column("max_elevation_deg", ".4f"),
        Column("eclipse_throughout"),
    ]
    rows = [
        (
            _utc(sc, p.rise_epoch),
            _utc(sc, p.culmination_epoch),
            _utc(sc, p.set_epoch),
            p.rise_epoch,
            p.set_epoch,
            p.duration_above_track_floor,
            p.max_elevation,
            p.eclipse_throughout,
        )
        for p in passes
    ]
    out.write_table("passes.csv", cols, rows)
    n_months = max(1, math.ceil(sc["orbit"]["duration_days"] * 86400.0 / SECONDS_PER_MONTH))
    monthly = []
    for m in range(n_months):
        sel = [p.duration_above_track_floor for p in passes if int(p.rise_epoch // SECONDS_PER_MONTH) == m]
        monthly.append((m + 1, len(sel), float(np.mean(sel)) / 60.0 if sel else math.nan))
    out.write_table("monthly.csv", [Column("month"), Column("passes"), Column("mean_duration_min", ".3f")], monthly)
    mean = float(np.mean([p.duration_above_track_floor for p in passes])) / 60.0 if passes else math.nan
    return f"passes: {len(passes)}\nmean duration above track floor: {mean:.2f} min"


def cmd_linkbudget(sc, out, seed):
    link = sc["link"]
    src = sc.source_geometry()
    alt = sc["orbit"]["altitude_km"] * 1e3
    rows = []
    for el in link["elevations_deg"]:
        rng = slant_range(el, alt)
        point = TopoPoint(0.0, el, 0.0, rng, 0.0, 0.0, True)
        b = link_budget(src, point, link["receiver_diameter_m"], link["jitter_sigma_urad"], link["optics_efficiency"])
        rows.append(
            (
                el,
                rng / 1e3,
                b.ground_spot_diameter,
                b.diffraction_geometric_loss,
                b.pointing_loss,
                b.atmospheric_loss,
                b.optics_efficiency_loss,
                b.total,
            )
        )
    cols = [
        Column("elevation_deg", ".2f"),
        Column("slant_range_km", ".3f"),
        Column("spot_diameter_m", ".4f"),
        Column("geometric_db", ".4f"),
        Column("pointing_db", ".4f"),
        Column("atmospheric_db", ".4f"),
        Column("optics_db", ".4f"),
        Column("total_db", ".4f"),
    ]
    out.write_table("linkbudget.csv", cols, rows)
    return (
        f"source: {src.kind.value}, divergence {divergence_half_angle(src):.3f} urad, "
        f"1/e^2 half-angle {beam_half_angle_1e2(src):.3f} urad\n"
        f"total loss: {min(r[-1] for r in rows):.2f} to {max(r[-1] for r in rows):.2f} dB"
    )


def cmd_pointing(sc, out, seed):
    p = sc["pointing"]
    pe = _first_pass(sc)
    offset = max(pe.culmination_epoch - 0.5 * p["window_s"] - pe.rise_epoch, 0.0)
    run = simulate_pointing_run(
        sc.coarse(),
        sc.tracker(),
        sc.steering(),
        pe,
        p["turbulence_tilt_urad"],
        seed,
        time_step=p["time_step_s"],
        duration=p["window_s"],
        start_offset=offset,
        tilt_rejection=p["tilt_rejection"],
        beacon_wavelength=p["beacon_wavelength_nm"],
        downlink_wavelength=sc["link"]["wavelength_nm"],
    )
    k = p["series_decimation"]
    series = run.residual_error_series[::k]
    out.write_table(
        "pointing_series.csv",
        [Column("epoch_s", ".4f"), Column("x_urad", ".5f"), Column("y_urad", ".5f")],
        [tuple(r) for r in series],
    )
    loss = jitter_summary_to_loss(run, sc.source_geometry())
    out.write_table(
        "pointing_summary.csv",
        [
            Column("rms_radial_urad", ".5f"),
            Column("fraction_within_3urad", ".5f"),
            Column("bsm_saturation_events"),
            Column("lock_lost"),
            Column("pointing_loss_db", ".5f"),
        ],
        [(run.rms_radial, run.fraction_within_3urad, run.bsm_saturation_events, run.lock_lost, loss)],
    )
    state = "LOCK LOST" if run.lock_lost else "locked"
    return f"pass at {_utc(sc, pe.culmination_epoch)}: rms {run.rms_radial:.3f} urad, {state}"


def _culmination_point(pe):
    return max(pe.track, key=lambda t: t.elevation)


def _write_events(out, rec, cap):
    n = min(len(rec), cap)
    out.write_table(
        "events.csv",
        [Column("timestamp_s", ".12f"), Column("basis"), Column("bit")],
        [(rec.timestamps[i], int(rec.basis[i]), int(rec.bit[i])) for i in range(n)],
    )


def cmd_qkd(sc, out, seed):
    q, link = sc["quantum"], sc["link"]
    cfg = sc.mission()
    pe = _first_pass(sc)
    rng = np.random.default_rng(seed)
    res = simulate_pass(cfg, pe, rng)
    if not res.locked:
        raise LockLostError("fine pointing lost lock during the pass")
    rms, loss, tally, t_tx = res.pointing_rms, res.pointing_loss_db, res.tally, res.transmission_time
    if t_tx <= 0:
        raise ModelInputError(f"pass never rises above {cfg.transmission_min_elevation:g} deg")

    seg_rows = []
    for point, dwell in transmission_segments(pe, cfg.transmission_min_elevation):
        b = link_budget(cfg.source, point, link["receiver_diameter_m"], 0.0, link["optics_efficiency"])
        seg_rows.append(
            (point.epoch, point.elevation, point.slant_range / 1e3, dwell, b.total + loss, point_ahead(point))
        )
    out.write_table(
        "qkd_segments.csv",
        [
            Column("epoch_s", ".3f"),
            Column("elevation_deg", ".4f"),
            Column("slant_range_km", ".3f"),
            Column("dwell_s", ".3f"),
            Column("channel_db", ".4f"),
            Column("point_ahead_urad", ".4f"),
        ],
        seg_rows,
    )

    top = _culmination_point(pe)
    channel_db = link_budget(cfg.source, top, link["receiver_diameter_m"], 0.0, link["optics_efficiency"]).total + loss
    lines = [
        f"pass at {_utc(sc, pe.culmination_epoch)}, transmission {t_tx:.0f} s above {cfg.transmission_min_elevation:g} deg",
        f"mean detection rate {res.mean_detection_rate:.1f} /s, pointing rms {rms:.3f} urad",
    ]
    if tally is not None:
        rep = key_report(tally, cfg.wcp)
        out.write_table(
            "key_report.csv",
            [
                Column("sent_pulses"),
                Column("sifted_bits"),
                Column("qber", ".6f"),
                Column("y1_lower", ".6e"),
                Column("e1_upper", ".6f"),
                Column("secure_key_bits", ".6e"),
                Column("mean_detection_rate_hz", ".3f"),
                Column("pointing_rms_urad", ".4f"),
                Column("pointing_loss_db", ".4f"),
                Column("bounds_consistent"),
            ],
            [
                (
                    rep.sent_pulses,
                    rep.sifted_bits,
                    rep.qber,
                    rep.y1_lower,
                    rep.e1_upper,
                    rep.secure_key_length,
                    res.mean_detection_rate,
                    rms,
                    loss,
                    rep.bounds_consistent,
                )
            ],
        )
        lines.append(f"sifted bits {rep.sifted_bits}, qber {rep.qber:.4f}, secure key {rep.secure_key_length:.3e} bits")

    cap = q["event_csv_max_rows"]
    if tally is not None and cap > 0 and q["event_s"] > 0:
        pulses = emit_wcp(cfg.wcp, q["event_s"], seed=seed + 1)
        _write_events(out, apply_channel(pulses, channel_db, cfg.detector, seed + 2, cfg.misalignment), cap)

    if q["payload"] == "entangled":
        local, remote = emit_entangled(sc.entangled(), q["entangled_s"], seed + 3)
        rec = apply_channel(remote, channel_db, cfg.detector, seed + 4, cfg.misalignment).shifted(q["clock_offset_s"])
        m = match_offset(local, rec, q["search_span_s"], q["match_bin_ns"] * 1e-9)
        c = coincidence_qber(local, rec, q["pairing_window_ns"] * 1e-9, m.offset if m.locked else 0.0)
        if cap > 0:
            _write_events(out, rec, cap)
        out.write_table(
            "entangled.csv",
            [
                Column("mean_detection_rate_hz", ".3f"),
                Column("inserted_offset_s", ".12f"),
                Column("recovered_offset_s", ".12f"),
                Column("significance", ".3f"),
                Column("locked"),
                Column("coincidence_rate_hz", ".3f"),
                Column("accidental_rate_hz", ".3f"),
                Column("qber", ".6f"),
            ],
            [
                (
                    res.mean_detection_rate,
                    q["clock_offset_s"],
                    m.offset,
                    m.significance,
                    m.locked,
                    c.coincidence_rate,
                    c.accidental_rate,
                    c.qber,
                )
            ],
        )
        lines.append(f"clock offset {'recovered' if m.locked else 'NOT locked'}: {m.offset:.12f} s, qber {c.qber:.4f}")
    return "\n".join(lines)


def cmd_deorbit(sc, out, seed):
    d, o = sc["deorbit"], sc["orbit"]
    rows = []
    for name in d["solar_activities"]:
        scen = SolarActivityScenario(SolarActivity(name), sc.start)
        for alt in d["altitudes_km"]:
            r = deorbit_lifetime(
                alt * 1e3, sc.body(), scen, sc.start, o["inclination_deg"], cap_years=d["cap_years"]
            )
            rows.append((alt, name, r.years, r.capped))
    out.write_table(
        "lifetime.csv",
        [Column("altitude_km", ".1f"), Column("solar_activity"), Column("lifetime_years", ".4f"), Column("capped")],
        rows,
    )
    return "\n".join(f"{a:.0f} km {n}: {y:.2f} yr{' (cap)' if c else ''}" for a, n, y, c in rows)


def cmd_mission(sc, out, seed):
    rep = run_mission(sc.mission(), sc["mission"]["months"], seed)
    out.write_table(
        "months.csv",
        [Column("month"), Column("passes"), Column("mean_duration_min", ".3f"), Column("mean_altitude_km", ".3f")],
        [(m.month, m.passes, m.mean_duration_min, m.mean_altitude_km) for m in rep.months],
    )
    out.write_table(
        "experiments.csv",
        [
            Column("rise_utc"),
            Column("max_elevation_deg", ".4f"),
            Column("duration_s", ".3f"),
            Column("transmission_s", ".3f"),
            Column("clear"),
            Column("scheduled"),
            Column("depth_of_discharge", ".5f"),
            Column("pointing_rms_urad", ".4f"),
            Column("pointing_loss_db", ".4f"),
            Column("detection_rate_hz", ".3f"),
            Column("data_bytes", ".6e"),
            Column("sifted_bits"),
            Column("qber", ".6f"),
            Column("secure_key_bits", ".6e"),
        ],
        [
            (
                _utc(sc, p.rise_epoch),
                p.max_elevation,
                p.duration,
                p.transmission_time,
                p.clear,
                p.scheduled,
                p.depth_of_discharge,
                p.pointing_rms,
                p.pointing_loss_db,
                p.mean_detection_rate,
                p.data_bytes,
                p.key.sifted_bits if p.key else None,
                p.key.qber if p.key else None,
                p.key.secure_key_length if p.key else None,
            )
            for p in rep.passes
        ],
    )
    out.write_table(
        "backlog.csv",
        [Column("day", ".4f"), Column("backlog_bytes", ".6e")],
        list(zip(rep.backlog_days, rep.backlog_bytes)),
    )
    out.write_table(
        "altitude.csv",
        [Column("day", ".4f"), Column("altitude_km", ".4f")],
        list(zip(rep.altitude_days, rep.altitude_km)),
    )
    keys = sum(p.key.secure_key_length for p in rep.experiments if p.key)
    end = "not reached" if rep.end_of_experiments_days is None else f"day {rep.end_of_experiments_days:.1f}"
    return (
        f"opportunities: {rep.opportunities}, experiments run: {len(rep.experiments)}\n"
        f"total secure key: {keys:.3e} bits\n"
        f"peak backlog: {rep.backlog_bytes.max() / 1e9:.2f} GB\n"
        f"300 km reached: {end}"
    )


COMMANDS = {
    "passes": (cmd_passes, "experiment pass table"),
    "linkbudget": (cmd_linkbudget, "itemised downlink budget versus elevation"),
    "pointing": (cmd_pointing, "fine-pointing Monte Carlo over one pass"),
    "qkd": (cmd_qkd, "quantum link simulation over one pass"),
    "deorbit": (cmd_deorbit, "orbital lifetime grid"),
    "mission": (cmd_mission, "full mission schedule and budgets"),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="qcubesat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--scenario", required=True, help="scenario TOML file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    ref = sub.add_parser("reference", help="print the reference scenario with all defaults")
    ref.add_argument("--out", help="write to this file instead of stdout")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reference":
            text = reference_scenario()
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.seed < 0:
            raise ScenarioError("--seed", "must be non-negative")
        sc = parse_scenario(args.scenario)
        bundle = ResultBundle(args.out)
        summary = COMMANDS[args.command][0](sc, bundle, args.seed)
        bundle.write_summary(summary)
        bundle.write_manifest(args.command, sc, args.seed)
        print(summary)
        return EXIT_OK
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelInputError, LockLostError, OutputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
