"""Batch command-line front end.

Subcommands: ingest, surface, vix, estimate, calibrate, risk, report.
All outputs are machine-readable (JSON per date, CSV summaries), numeric
values carry 12 significant digits, and a re-run of the same manifest is
byte-identical: no clocks, no randomness.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, replace

from . import estimators, moments
from .calibrate import (
    CostSpec,
    calibrate_full,
    calibrate_variance_ts,
    calibrate_vol_ts_sz,
    calibration_risk,
    feller_truncate_omega,
    start_to_params,
    two_stage_calibration,
)
from .charfn import HestonParams, SchobelZhuParams
from .errors import FxsvolError, ParseError
from .market_data import build_surface, group_rows_by_date, ingest_csv
from .pricer import DEFAULT_GRID, IntegrationGrid

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2

HIST_RHO_FALLBACK = -0.1


@dataclass(frozen=True)
class RunManifest:
    command: str
    input_path: str
    output_dir: str
    model: str = ""
    start_method: str = ""
    cost_kind: str = "mse"
    feller: bool = False
    max_iter: int = 0
    stop_any: bool = False
    vols_decimal: bool = False
    grid_min: float = DEFAULT_GRID.w_min
    grid_max: float = DEFAULT_GRID.w_max
    grid_step: float = DEFAULT_GRID.dw
    jobs: int = 1
    date_from: str = ""
    date_to: str = ""

    def grid(self):
        return IntegrationGrid(self.grid_min, self.grid_max, self.grid_step)


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _round12(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {k: _round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round12(v) for v in x]
    return x


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_round12(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")


def params_to_dict(kind, params):
    if kind in ("heston", "sz"):
        return {"nu0": params.nu0, "theta": params.theta, "kappa": params.kappa,
                "omega": params.omega, "rho": params.rho}
    return {
        "factors": [
            {"nu0": f.nu0, "theta": f.theta, "kappa": f.kappa,
             "omega": f.omega, "rho": f.rho}
            for f in params.factors
        ]
    }


# ---------------------------------------------------------------------------
# per-date protocol pieces
# ---------------------------------------------------------------------------

def load_surfaces(manifest):
    """All surfaces in the file; the date range only selects what to process,
    so historical estimators keep the full sample behind the range."""
    rows = ingest_csv(manifest.input_path, vols_decimal=manifest.vols_decimal)
    groups = group_rows_by_date(rows)
    return {d: build_surface(g) for d, g in groups.items()}


def selected_dates(manifest, surfaces):
    dates = sorted(surfaces)
    if manifest.date_from:
        dates = [d for d in dates if d >= manifest.date_from]
    if manifest.date_to:
        dates = [d for d in dates if d <= manifest.date_to]
    return dates


def historical_context(surfaces):
    """Per-date EWMA (omega, rho) estimates from the 1M strip vol and spot.

    With fewer than 63 dates the documented warm-up fallbacks apply (omega =
    index level, or half of it for the vol model; rho = -0.1).
    """
    dates = sorted(surfaces)
    vix1m, spots = [], []
    for d in dates:
        surf = surfaces[d]
        sl = surf.slices[0]
        strikes, prices, f0, k0 = moments.otm_strip(surf, sl)
        v2 = moments.implied_variance_vix(strikes, prices, f0, k0, sl.r_d, sl.tau)
        vix1m.append(math.sqrt(max(v2, 0.0)))
        spots.append(surf.spot)
    if len(dates) < 2:
        h = {dates[0]: (vix1m[0], HIST_RHO_FALLBACK)} if dates else {}
        s = {dates[0]: (0.5 * vix1m[0], HIST_RHO_FALLBACK)} if dates else {}
        return {"heston": h, "sz": s, "vix1m": dict(zip(dates, vix1m))}
    om_h, rho_h = estimators.historical_omega_rho(vix1m, spots, model="heston")
    om_s, rho_s = estimators.historical_omega_rho(vix1m, spots, model="sz")
    return {
        "heston": {d: (float(om_h[i]), float(rho_h[i])) for i, d in enumerate(dates)},
        "sz": {d: (float(om_s[i]), float(rho_s[i])) for i, d in enumerate(dates)},
        "vix1m": dict(zip(dates, vix1m)),
    }


def variance_pipeline(surface, hist_heston):
    """VIX strip -> corrected variance -> CIR curve fit for one date."""
    om_h, rho_h = hist_heston
    ts = moments.surface_variance_ts(surface, rho_h=rho_h, omega_h=om_h)
    taus = [sl.tau for sl in surface.slices]
    nu0, theta, kappa, _ = calibrate_variance_ts(taus, ts.v2_corrected)
    return ts, (nu0, theta, kappa)


def sz_ts_pipeline(surface, ts, heston_ts_params, hist_heston):
    """Expected-vol targets and OU vol-curve fit for one date."""
    om_h, _ = hist_heston
    nu0h, thh, kah = heston_ts_params
    taus = [sl.tau for sl in surface.slices]
    targets = [moments.sz_expected_vol(v2c, nu0h, thh, kah, om_h, t)
               for v2c, t in zip(ts.v2_corrected, taus)]
    nu0, theta, kappa, _ = calibrate_vol_ts_sz(taus, targets)
    return targets, (nu0, theta, kappa)


def build_start(model, method, surface, hist):
    """Starting parameter set for a calibration, per estimator route."""
    date = surface.date
    hh = hist["heston"].get(date, (hist["vix1m"].get(date, 0.1), HIST_RHO_FALLBACK))
    hs = hist["sz"].get(date, (0.5 * hist["vix1m"].get(date, 0.1), HIST_RHO_FALLBACK))
    ts, hts = variance_pipeline(surface, hh)
    flags = []

    def one_factor(model_kind):
        if method == "icm":
            sets = moments.surface_moment_sets(surface)
            if model_kind == "heston":
                est = estimators.icm_heston(sets)
                return HestonParams(hts[0], hts[1], hts[2], est.omega, est.rho), est.flags
            _, sts = sz_ts_pipeline(surface, ts, hts, hh)
            esth = estimators.icm_heston(sets)
            est = estimators.icm_sz(None, sts[0], from_heston=(esth.omega, esth.rho))
            return (SchobelZhuParams(sts[0], sts[1], sts[2], est.omega, est.rho),
                    est.flags)
        if method == "durrleman":
            est = estimators.durrleman(surface, ts.v2_corrected[0])
            if model_kind == "heston":
                return (HestonParams(hts[0], hts[1], hts[2],
                                     max(est.omega, 1e-4), est.rho), est.flags)
            _, sts = sz_ts_pipeline(surface, ts, hts, hh)
            return (SchobelZhuParams(sts[0], sts[1], sts[2],
                                     max(0.5 * est.omega, 1e-4), est.rho),
                    est.flags + ("half-relation applied for the OU-vol model",))
        if method == "hist":
            if model_kind == "heston":
                return HestonParams(hts[0], hts[1], hts[2], max(hh[0], 1e-4), hh[1]), ()
            _, sts = sz_ts_pipeline(surface, ts, hts, hh)
            return SchobelZhuParams(sts[0], sts[1], sts[2], max(hs[0], 1e-4), hs[1]), ()
        raise FxsvolError(f"start method {method!r} not supported for {model_kind}")

    if model in ("heston", "sz"):
        params, fl = one_factor(model)
        return params, None, tuple(flags) + tuple(fl)

    sets = moments.surface_moment_sets(surface)
    esth = estimators.icm_heston(sets)
    if model == "bates2f":
        if method in ("evp", "icm"):
            start = estimators.evp_split(esth.omega, esth.rho, *hts)
            return start_to_params("bates2f", start), None, start.flags
        if method == "mevp":
            start = estimators.mevp_split(esth.omega, esth.rho, *hts,
                                          target="bates_feller")
            return (start_to_params("bates2f", start), start.rho, start.flags)
        raise FxsvolError(f"start method {method!r} not supported for bates2f")
    if model == "bates2f-feller":
        if method in ("mevp", "icm"):
            start = estimators.mevp_split(esth.omega, esth.rho, *hts,
                                          target="bates_feller")
            om = tuple(feller_truncate_omega(o, t, k)
                       for o, t, k in zip(start.omega, start.theta, start.kappa))
            if om != start.omega:
                flags.append("start omegas truncated to the positivity bound")
            start = replace(start, omega=om)
            return (start_to_params("bates2f", start), start.rho,
                    tuple(flags) + start.flags)
        raise FxsvolError(f"start method {method!r} not supported for bates2f-feller")
    if model == "ouou":
        if method in ("mevp", "icm"):
            _, sts = sz_ts_pipeline(surface, ts, hts, hh)
            ests = estimators.icm_sz(None, sts[0], from_heston=(esth.omega, esth.rho))
            start = estimators.mevp_split(ests.omega, ests.rho, *sts, target="ouou")
            return start_to_params("ouou", start), start.rho, start.flags
        raise FxsvolError(f"start method {method!r} not supported for ouou")
    raise FxsvolError(f"unknown model {model!r}")


def cmd_pipeline_one_date(manifest, surface, hist):
    """VIX -> estimates -> ts fits -> estimator start -> full calibration."""
    model = manifest.model
    kind = "bates2f" if model == "bates2f-feller" else model
    feller = manifest.feller or model == "bates2f-feller"
    if manifest.start_method == "twostage":
        date = surface.date
        hh = hist["heston"].get(date, (hist["vix1m"].get(date, 0.1), HIST_RHO_FALLBACK))
        ts, hts = variance_pipeline(surface, hh)
        if kind == "ouou":
            # OU-volatility factors live on the vol scale
            hs = hist["sz"].get(date, (0.5 * hist["vix1m"].get(date, 0.1),
                                       HIST_RHO_FALLBACK))
            _, sts = sz_ts_pipeline(surface, ts, hts, hh)
            root2 = math.sqrt(2.0)
            sym = (sts[0] / root2, sts[1] / root2, sts[2],
                   max(hs[0], 1e-4), hs[1])
        else:
            sym = (hts[0] / 2.0, hts[1] / 2.0, hts[2], max(hh[0], 1e-4), hh[1])
        result, _ = two_stage_calibration(
            kind, surface, sym, cost_spec=CostSpec(kind=manifest.cost_kind),
            feller=feller, grid=manifest.grid(),
            stage2_max_iter=manifest.max_iter or 800)
        pinned = None
    else:
        start, pinned, start_flags = build_start(model, manifest.start_method,
                                                 surface, hist)
        max_iter = manifest.max_iter or None
        result = calibrate_full(kind, surface, start,
                                cost_spec=CostSpec(kind=manifest.cost_kind),
                                feller=feller, max_iter=max_iter,
                                pinned_rho=pinned, grid=manifest.grid(),
                                stop_any=manifest.stop_any)
        result = replace(result, flags=result.flags + tuple(start_flags))
    return {
        "date": surface.date,
        "model": model,
        "start_method": manifest.start_method,
        "cost": manifest.cost_kind,
        "feller": feller,
        "start": params_to_dict(kind, result.start) if result.start is not None else None,
        "params": params_to_dict(kind, result.params),
        "cost_value": result.cost_value,
        "iterations": result.iterations,
        "converged": result.converged,
        "feller_satisfied": result.feller_satisfied,
        "rmse_vol": result.rmse_vol,
        "rmse_vega": result.rmse_vega,
        "flags": list(result.flags),
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(manifest):
    surfaces = load_surfaces(manifest)
    os.makedirs(manifest.output_dir, exist_ok=True)
    report = {"dates": [], "warnings": []}
    for date in selected_dates(manifest, surfaces):
        surf = surfaces[date]
        write_json(os.path.join(manifest.output_dir, f"surface_{date}.json"),
                   surf.to_dict())
        report["dates"].append(date)
        report["warnings"].extend(surf.warnings)
    write_json(os.path.join(manifest.output_dir, "validation.json"), report)
    return EXIT_OK


def cmd_surface(manifest):
    surfaces = load_surfaces(manifest)
    payload = [surfaces[d].to_dict() for d in selected_dates(manifest, surfaces)]
    json.dump(_round12(payload), sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_vix(manifest):
    surfaces = load_surfaces(manifest)
    hist = historical_context(surfaces)
    os.makedirs(manifest.output_dir, exist_ok=True)
    path = os.path.join(manifest.output_dir, "vix.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "tenor", "tau", "v2", "v2_corrected",
                         "skew", "kurtosis"])
        for date in selected_dates(manifest, surfaces):
            surf = surfaces[date]
            om_h, rho_h = hist["heston"][date]
            ts = moments.surface_variance_ts(surf, rho_h=rho_h, omega_h=om_h)
            sets = moments.surface_moment_sets(surf)
            for sl, v2, v2c, m in zip(surf.slices, ts.v2, ts.v2_corrected, sets):
                writer.writerow([date, sl.tenor] + [f"{x:.12g}" for x in
                                                    (sl.tau, v2, v2c, m.skew, m.kurt)])
    return EXIT_OK


def cmd_estimate(manifest):
    surfaces = load_surfaces(manifest)
    hist = historical_context(surfaces)
    os.makedirs(manifest.output_dir, exist_ok=True)
    failures = 0
    for date in selected_dates(manifest, surfaces):
        surf = surfaces[date]
        try:
            payload = _estimate_one(manifest, surf, hist)
        except FxsvolError as exc:
            payload = {"date": date, "error": str(exc)}
            failures += 1
        name = f"estimate_{manifest.start_method}_{manifest.model}_{date}.json"
        write_json(os.path.join(manifest.output_dir, name), payload)
    return EXIT_PARTIAL if failures else EXIT_OK


def _estimate_one(manifest, surface, hist):
    date = surface.date
    method, model = manifest.start_method, manifest.model
    base = {"date": date, "method": method, "model": model, "per_tenor": [],
            "flags": []}
    hh = hist["heston"].get(date, (hist["vix1m"].get(date, 0.1), HIST_RHO_FALLBACK))
    ts, hts = variance_pipeline(surface, hh)
    if method == "gs":
        dates = sorted(hist["vix1m"])
        series = [hist["vix1m"][d] for d in dates if d <= date]
        nu0, theta = estimators.guillaume_schoutens(series, window_years=1.0,
                                                    mode="EWMA")
        base.update({"omega": None, "rho": None, "nu0": nu0, "theta": theta})
        return base
    if method == "gr":
        sl = surface.slices[0]
        from .pricer import OptionSpec, gk_price
        k1, k2 = sl.strikes[1], sl.strikes[3]
        p1 = gk_price(OptionSpec(surface.spot, k1, sl.tau, sl.r_d, sl.r_f, "put"),
                      sl.vols.vols[1])
        p2 = gk_price(OptionSpec(surface.spot, k2, sl.tau, sl.r_d, sl.r_f, "put"),
                      sl.vols.vols[3])
        omega, rho = estimators.gauthier_rivaille(
            p1, p2, k1, k2, hts[0], hts[1], hts[2], sl.tau, surface.spot,
            sl.r_d, sl.r_f)
        base.update({"omega": omega, "rho": rho,
                     "flags": ["experimental: two-strike expansion route"]})
        return base
    params, _, flags = build_start(model, method, surface, hist)
    base.update({"omega": params.omega, "rho": params.rho, "flags": list(flags)})
    if method == "icm" and model == "heston":
        sets = moments.surface_moment_sets(surface)
        est = estimators.icm_heston(sets)
        base["per_tenor"] = [
            {"tau": t, "omega2": o, "rho_omega": r} for t, o, r in est.per_tenor]
    return base


def cmd_calibrate(manifest):
    surfaces = load_surfaces(manifest)
    hist = historical_context(surfaces)
    os.makedirs(manifest.output_dir, exist_ok=True)
    write_json(os.path.join(manifest.output_dir, "manifest.json"),
               asdict(manifest))
    dates = selected_dates(manifest, surfaces)
    failures = 0

    def run(date):
        return cmd_pipeline_one_date(manifest, surfaces[date], hist)

    results = {}
    if manifest.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(manifest.jobs) as pool:
            futs = {pool.submit(run, d): d for d in dates}
            for fut in concurrent.futures.as_completed(futs):
                d = futs[fut]
                try:
                    results[d] = fut.result()
                except FxsvolError as exc:
                    results[d] = {"date": d, "error": str(exc)}
    else:
        for d in dates:
            try:
                results[d] = run(d)
            except FxsvolError as exc:
                results[d] = {"date": d, "error": str(exc)}
    rows = []
    for d in dates:
        payload = results[d]
        if "error" in payload:
            failures += 1
        name = (f"calibration_{d}_{manifest.model}_{manifest.start_method}_"
                f"{manifest.cost_kind}.json")
        write_json(os.path.join(manifest.output_dir, name), payload)
        rows.append(payload)
    _write_summary_csv(os.path.join(manifest.output_dir, "summary.csv"), rows)
    return EXIT_PARTIAL if failures else EXIT_OK


def _write_summary_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "model", "start", "cost_kind", "cost_value",
                         "rmse_vol", "rmse_vega", "iterations", "converged",
                         "feller_satisfied", "error"])
        for r in rows:
            if "error" in r:
                writer.writerow([r["date"], "", "", "", "", "", "", "", "", "",
                                 r["error"]])
                continue
            writer.writerow([
                r["date"], r["model"], r["start_method"], r["cost"],
                f"{r['cost_value']:.12g}", f"{r['rmse_vol']:.12g}",
                f"{r['rmse_vega']:.12g}", r["iterations"], r["converged"],
                r["feller_satisfied"], "",
            ])


def cmd_risk(manifest):
    surfaces = load_surfaces(manifest)
    hist = historical_context(surfaces)
    os.makedirs(manifest.output_dir, exist_ok=True)
    for date in selected_dates(manifest, surfaces):
        surf = surfaces[date]
        params, _, _ = build_start(manifest.model, manifest.start_method, surf, hist)
        risk = calibration_risk(manifest.model, surf, params,
                                grid=manifest.grid())
        payload = {
            "date": date,
            "model": manifest.model,
            "method": manifest.start_method,
            "risk": dict(risk.per_parameter),
            "per_cost": {
                ck: params_to_dict(manifest.model, p)
                for ck, p, _ in risk.results
            },
        }
        name = f"risk_{date}_{manifest.model}_{manifest.start_method}.json"
        write_json(os.path.join(manifest.output_dir, name), payload)
    return EXIT_OK


def cmd_report(manifest):
    """Aggregate calibration JSONs into mean/sd/min/quartile/max rows."""
    import numpy as np
    rows = []
    for name in sorted(os.listdir(manifest.input_path)):
        if name.startswith("calibration_") and name.endswith(".json"):
            with open(os.path.join(manifest.input_path, name)) as fh:
                payload = json.load(fh)
            if "error" not in payload:
                rows.append(payload)
    groups = {}
    for r in rows:
        key = (r["model"], r["start_method"], r["cost"])
        groups.setdefault(key, []).append(r)
    os.makedirs(manifest.output_dir, exist_ok=True)
    path = os.path.join(manifest.output_dir, "report.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "start", "cost_kind", "metric", "mean", "sd",
                         "min", "q1", "median", "q3", "max", "n"])
        for key in sorted(groups):
            rs = groups[key]
            for metric in ("rmse_vol", "rmse_vega"):
                vals = np.asarray([r[metric] for r in rs], dtype=float)
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                writer.writerow(list(key) + [metric] + [
                    f"{x:.12g}" for x in (vals.mean(), vals.std(ddof=1) if len(vals) > 1 else 0.0,
                                          vals.min(), q1, med, q3, vals.max())
                ] + [len(vals)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--input", required=True, help="quote CSV (or JSON dir for report)")
    p.add_argument("--output-dir", default="out")
    p.add_argument("--vols-decimal", action="store_true",
                   help="vol columns already in decimals, not percentage points")
    p.add_argument("--grid-min", type=float, default=DEFAULT_GRID.w_min)
    p.add_argument("--grid-max", type=float, default=DEFAULT_GRID.w_max)
    p.add_argument("--grid-step", type=float, default=DEFAULT_GRID.dw)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--date-from", default="")
    p.add_argument("--date-to", default="")


def build_parser():
    parser = argparse.ArgumentParser(prog="fxsvol",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("ingest", "surface", "vix"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("estimate")
    _add_common(p)
    p.add_argument("--method", required=True,
                   choices=["icm", "durrleman", "gr", "gs", "hist"])
    p.add_argument("--model", default="heston", choices=["heston", "sz"])

    p = sub.add_parser("calibrate")
    _add_common(p)
    p.add_argument("--model", required=True,
                   choices=["heston", "sz", "bates2f", "bates2f-feller", "ouou"])
    p.add_argument("--start", required=True,
                   choices=["icm", "durrleman", "hist", "twostage", "evp", "mevp"])
    p.add_argument("--cost", default="mse", choices=["mse", "mae", "mape"])
    p.add_argument("--feller", action="store_true")
    p.add_argument("--max-iter", type=int, default=0)
    p.add_argument("--stop-any", action="store_true",
                   help="stop when either tolerance is met instead of both")

    p = sub.add_parser("risk")
    _add_common(p)
    p.add_argument("--model", default="heston", choices=["heston", "sz"])
    p.add_argument("--method", default="icm", choices=["icm", "durrleman", "hist"])

    p = sub.add_parser("report")
    _add_common(p)
    return parser


def manifest_from_args(args):
    return RunManifest(
        command=args.command,
        input_path=args.input,
        output_dir=args.output_dir,
        model=getattr(args, "model", ""),
        start_method=getattr(args, "start", getattr(args, "method", "")),
        cost_kind=getattr(args, "cost", "mse"),
        feller=getattr(args, "feller", False),
        max_iter=getattr(args, "max_iter", 0),
        stop_any=getattr(args, "stop_any", False),
        vols_decimal=args.vols_decimal,
        grid_min=args.grid_min,
        grid_max=args.grid_max,
        grid_step=args.grid_step,
        jobs=args.jobs,
        date_from=args.date_from,
        date_to=args.date_to,
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    manifest = manifest_from_args(args)
    handlers = {
        "ingest": cmd_ingest,
        "surface": cmd_surface,
        "vix": cmd_vix,
        "estimate": cmd_estimate,
        "calibrate": cmd_calibrate,
        "risk": cmd_risk,
        "report": cmd_report,
    }
    try:
        return handlers[manifest.command](manifest)
    except (ParseError, OSError) as exc:
        print(f"input invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FxsvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
