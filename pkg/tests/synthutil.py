"""Synthetic market fixtures: surfaces generated by a chosen model.

Each (tenor, pillar) cell solves the FX quoting fixed point: the strike
follows from the pillar delta at the cell's own implied vol, and the implied
vol follows from the model price at that strike.
"""

import math

from fxsvol.charfn import cf_factory
from fxsvol.market_data import (
    PILLAR_DELTAS,
    PILLARS,
    SmileNodes,
    TENORS,
    TenorSlice,
    VolSurface,
    strike_from_delta,
    tenor_year_fraction,
)
from fxsvol.moments import heston_total_variance, sz_total_variance
from fxsvol.pricer import OptionSpec, attari_strip, implied_vol

import datetime as _dt


def model_term_vol(kind, params, tau):
    """Rough annualized vol of the model at tau, to seed the fixed point."""
    if kind == "heston":
        return math.sqrt(heston_total_variance(params.nu0, params.theta,
                                               params.kappa, tau))
    if kind == "sz":
        return math.sqrt(sz_total_variance(params.nu0, params.theta, params.kappa,
                                           params.omega, tau))
    total = 0.0
    for f in params.factors:
        if kind == "bates2f":
            total += heston_total_variance(f.nu0, f.theta, f.kappa, tau)
        else:
            total += sz_total_variance(f.nu0, f.theta, f.kappa, f.omega, tau)
    return math.sqrt(total)


def synth_surface(kind, params, date="2014-06-02", spot=1.30, r_d=0.012, r_f=0.006,
                  tenors=TENORS, fp_iters=25):
    """VolSurface whose cells are exactly consistent with the model prices."""
    cf = cf_factory(kind, params)
    base = _dt.date.fromisoformat(date)
    slices = []
    for tenor in tenors:
        tau = tenor_year_fraction(base, tenor)
        fwd = spot * math.exp((r_d - r_f) * tau)
        seed = model_term_vol(kind, params, tau)
        vols, strikes = [], []
        for pillar in PILLARS:
            delta = PILLAR_DELTAS[pillar]
            vol = seed
            strike = strike_from_delta(spot, r_d, r_f, tau, vol, delta)
            for _ in range(fp_iters):
                call = float(attari_strip(cf, spot, [strike], tau, r_d, r_f)[0])
                new_vol = implied_vol(OptionSpec(spot, strike, tau, r_d, r_f, "call"),
                                      call)
                new_strike = strike_from_delta(spot, r_d, r_f, tau, new_vol, delta)
                if abs(new_vol - vol) < 1e-13 and abs(new_strike - strike) < 1e-13:
                    vol, strike = new_vol, new_strike
                    break
                vol, strike = new_vol, new_strike
            vols.append(vol)
            strikes.append(strike)
        slices.append(TenorSlice(tenor=tenor, tau=tau, r_d=r_d, r_f=r_f, forward=fwd,
                                 vols=SmileNodes(tuple(vols)), strikes=tuple(strikes)))
    return VolSurface(date=date, spot=spot, slices=tuple(slices))


def surface_to_quote_rows(surface):
    """Strategy-quote CSV rows (decimal vols) reproducing the surface."""
    rows = []
    for sl in surface.slices:
        v = dict(zip(PILLARS, sl.vols.vols))
        ois = (math.exp(sl.r_f * sl.tau) - 1.0) / sl.tau
        fwd_points = sl.forward - surface.spot
        rows.append({
            "date": surface.date,
            "tenor": sl.tenor,
            "spot": surface.spot,
            "ois": ois,
            "fwd_points": fwd_points,
            "atm": v["ATM"],
            "rr25": v["25C"] - v["25P"],
            "fly25": 0.5 * (v["25C"] + v["25P"]) - v["ATM"],
            "rr10": v["10C"] - v["10P"],
            "fly10": 0.5 * (v["10C"] + v["10P"]) - v["ATM"],
        })
    return rows


def write_quote_csv(path, surfaces, vols_decimal=True):
    import csv
    scale = 1.0 if vols_decimal else 100.0
    cols = ["date", "tenor", "spot", "ois", "fwd_points",
            "atm", "rr25", "fly25", "rr10", "fly10"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for surface in surfaces:
            for row in surface_to_quote_rows(surface):
                out = []
                for c in cols:
                    val = row[c]
                    if c in ("atm", "rr25", "fly25", "rr10", "fly10"):
                        val = val * scale
                    out.append(repr(val) if isinstance(val, float) else val)
                writer.writerow(out)
    return path
