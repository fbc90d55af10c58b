"""Derivative-free calibration machinery.

A literal Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2,
simplex seeded from the start point with 0.05/0.00025 offsets) minimizes
vega-weighted price or implied-vol cost functions over exp/tanh-transformed
parameters.  Pipelines cover variance/vol term-structure fits, full-surface
calibration for one- and two-factor models, two-stage starts, outlier
recalibration and the cross-cost-function calibration-risk protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .charfn import Factor, HestonParams, SchobelZhuParams, TwoFactorParams, cf_factory
from .errors import InvariantViolation, NonFiniteObjective
from .moments import heston_total_variance
from .pricer import DEFAULT_GRID, OptionSpec, attari_strip, bs_vega, gk_price, implied_vol

FELLER_PENALTY = 999.0
VEGA_FLOOR = 1e-8

MODEL_KINDS = ("heston", "sz", "bates2f", "ouou")
COST_KINDS = ("mse", "mae", "mape", "mspe")


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NelderMeadConfig:
    alpha: float = 1.0
    gamma: float = 2.0
    rho_c: float = 0.5
    sigma_s: float = 0.5
    eps1: float = 1e-10
    eps2: float = 1e-12
    max_iter: int = 1600
    stop_any: bool = False  # OR instead of AND in the two-tolerance stop rule

    def __post_init__(self):
        ok = (self.alpha > 0.0 and self.gamma > 1.0
              and 0.0 < self.rho_c <= 0.5 and 0.0 < self.sigma_s < 1.0)
        if not ok:
            raise InvariantViolation(f"bad Nelder-Mead constants {self}")


@dataclass(frozen=True)
class NMResult:
    x: np.ndarray
    fx: float
    iterations: int
    converged: bool


def _simplex_volume(points):
    edges = points[1:] - points[0]
    n = edges.shape[0]
    return abs(np.linalg.det(edges)) / math.factorial(n)


def nelder_mead(f, x_start, config=NelderMeadConfig()):
    """Minimize f from x_start with the fixed-constant simplex scheme.

    The initial simplex is x_start plus per-coordinate offsets of 0.05
    (0.00025 where the start coordinate is zero), with x_start itself kept
    as the (n+1)-th vertex.
    """
    x0 = np.asarray(x_start, dtype=float)
    n = x0.size
    f0 = float(f(x0))
    if not math.isfinite(f0):
        raise NonFiniteObjective(f"objective not finite at start: {f0}")

    points = [x0 + (0.05 if x0[i] != 0.0 else 0.00025) * _unit(n, i) for i in range(n)]
    points.append(x0.copy())
    points = np.asarray(points)
    values = np.empty(n + 1)
    values[:n] = [_eval(f, p) for p in points[:n]]
    values[n] = f0

    iterations = 0
    converged = False
    while True:
        order = np.argsort(values, kind="stable")
        points = points[order]
        values = values[order]
        iterations += 1
        spread = abs(values[-1] - values[0])
        vol = _simplex_volume(points)
        hit1, hit2 = spread < config.eps1, vol < config.eps2
        if (hit1 or hit2) if config.stop_any else (hit1 and hit2):
            converged = True
            break
        if iterations > config.max_iter:
            break
        centroid = points[:-1].mean(axis=0)
        xr = centroid + config.alpha * (centroid - points[-1])
        fr = _eval(f, xr)
        if values[0] <= fr <= values[-2]:
            points[-1], values[-1] = xr, fr
            continue
        if fr <= values[0]:
            xe = centroid + config.gamma * (xr - centroid)
            fe = _eval(f, xe)
            if fe <= fr:
                points[-1], values[-1] = xe, fe
            else:
                points[-1], values[-1] = xr, fr
            continue
        xc = centroid + config.rho_c * (points[-1] - centroid)
        fc = _eval(f, xc)
        if fc <= values[-1]:
            points[-1], values[-1] = xc, fc
            continue
        points[1:] = points[0] + config.sigma_s * (points[1:] - points[0])
        values[1:] = [_eval(f, p) for p in points[1:]]

    order = np.argsort(values, kind="stable")
    return NMResult(x=points[order[0]].copy(), fx=float(values[order[0]]),
                    iterations=iterations, converged=converged)


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _eval(f, x):
    v = float(f(x))
    if math.isnan(v):
        raise NonFiniteObjective(f"objective NaN at {x}")
    return v


# ---------------------------------------------------------------------------
# parameter transforms
# ---------------------------------------------------------------------------

def transform_params(nu0, theta, omega, kappa, rho):
    """Model params -> unconstrained vector (log for positives, atanh for rho)."""
    return np.array([math.log(nu0), math.log(theta), math.log(omega),
                     math.log(kappa), math.atanh(rho)])


def untransform_params(x):
    """Unconstrained vector -> (nu0, theta, omega, kappa, rho)."""
    return (math.exp(x[0]), math.exp(x[1]), math.exp(x[2]), math.exp(x[3]),
            math.tanh(x[4]))


# ---------------------------------------------------------------------------
# cost functions over a surface
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostSpec:
    kind: str = "mse"                    # mse | mae | mape | mspe
    target: str = "vega_weighted_price"  # or "implied_vol"
    vega_floor: float = VEGA_FLOOR

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise InvariantViolation(f"unknown cost kind {self.kind!r}")
        if self.target not in ("vega_weighted_price", "implied_vol"):
            raise InvariantViolation(f"unknown cost target {self.target!r}")
        if not self.vega_floor > 0.0:
            raise InvariantViolation("vega floor must be > 0")


def _error_sum(kind, model, market):
    diff = model - market
    if kind == "mse":
        return float(np.sum(diff * diff))
    if kind == "mae":
        return float(np.sum(np.abs(diff)))
    if kind == "mape":
        return float(np.sum(np.abs(diff / market)))
    return float(np.sum((diff / market) ** 2))


class SurfaceCost:
    """Precomputed market targets for repeated cost evaluation on a surface."""

    def __init__(self, surface, spec=CostSpec(), grid=DEFAULT_GRID):
        self.surface = surface
        self.spec = spec
        self.grid = grid
        self.market_vols = np.array([v for sl in surface.slices for v in sl.vols.vols])
        calls, vegas = [], []
        for sl in surface.slices:
            for vol, strike in zip(sl.vols.vols, sl.strikes):
                op = OptionSpec(surface.spot, strike, sl.tau, sl.r_d, sl.r_f, "call")
                calls.append(gk_price(op, vol))
                vegas.append(max(bs_vega(op, vol), spec.vega_floor))
        self.market_calls = np.asarray(calls)
        self.vegas = np.asarray(vegas)

    def model_calls(self, kind, params):
        cf = cf_factory(kind, params)
        out = []
        for sl in self.surface.slices:
            out.append(attari_strip(cf, self.surface.spot, sl.strikes, sl.tau,
                                    sl.r_d, sl.r_f, grid=self.grid))
        return np.concatenate(out)

    def model_vols(self, kind, params):
        calls = self.model_calls(kind, params)
        vols = np.empty_like(calls)
        i = 0
        for sl in self.surface.slices:
            for strike in sl.strikes:
                op = OptionSpec(self.surface.spot, strike, sl.tau, sl.r_d, sl.r_f, "call")
                vols[i] = implied_vol(op, float(calls[i]))
                i += 1
        return vols

    def __call__(self, kind, params, feller=False):
        if feller and not _feller_ok(kind, params):
            return FELLER_PENALTY
        if self.spec.target == "vega_weighted_price":
            model = self.model_calls(kind, params) / self.vegas
            market = self.market_calls / self.vegas
        else:
            model = self.model_vols(kind, params)
            market = self.market_vols
        return _error_sum(self.spec.kind, model, market)


def _feller_ok(kind, params):
    if kind in ("heston",):
        return 2.0 * params.kappa * params.theta - params.omega ** 2 > 0.0
    if kind == "bates2f":
        return all(2.0 * f.kappa * f.theta - f.omega ** 2 > 0.0 for f in params.factors)
    return True  # OU-volatility models have no positivity constraint


def cost(kind, params, surface, spec=CostSpec(), feller=False, grid=DEFAULT_GRID):
    """One-shot cost evaluation (builds the market context each call)."""
    return SurfaceCost(surface, spec, grid)(kind, params, feller=feller)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationResult:
    model: str
    params: object
    start: object
    cost_value: float
    iterations: int
    converged: bool
    feller_satisfied: bool
    residual_vols: tuple     # model vol - market vol per cell, row-major by tenor
    rmse_vol: float
    rmse_vega: float
    flags: tuple = ()


@dataclass(frozen=True)
class CalibrationRisk:
    per_parameter: dict
    results: tuple


def rmse_report(ctx, kind, params):
    """(vol RMSE, vega-weighted price RMSE) over the surface cells."""
    n = ctx.market_vols.size
    vols = ctx.model_vols(kind, params)
    calls = ctx.model_calls(kind, params)
    rmse_vol = float(np.sqrt(np.mean((vols - ctx.market_vols) ** 2)))
    rmse_vega = float(np.sqrt(np.mean(((calls - ctx.market_calls) / ctx.vegas) ** 2)))
    return rmse_vol, rmse_vega, tuple(vols - ctx.market_vols)


# ---------------------------------------------------------------------------
# parameter vector plumbing per model kind
# ---------------------------------------------------------------------------

def params_to_vector(kind, params):
    if kind == "heston" or kind == "sz":
        return transform_params(params.nu0, params.theta, params.omega,
                                params.kappa, params.rho)
    vecs = []
    for f in params.factors:
        vecs.append(transform_params(f.nu0, f.theta, f.omega, f.kappa, f.rho))
    return np.concatenate(vecs)


def vector_to_params(kind, x, pinned_rho=None):
    if kind == "heston":
        nu0, theta, omega, kappa, rho = untransform_params(x)
        return HestonParams(nu0, theta, kappa, omega, rho)
    if kind == "sz":
        nu0, theta, omega, kappa, rho = untransform_params(x)
        return SchobelZhuParams(nu0, theta, kappa, omega, rho)
    factors = []
    for k in range(2):
        if pinned_rho is None:
            nu0, theta, omega, kappa, rho = untransform_params(x[5 * k:5 * k + 5])
        else:
            nu0, theta, omega, kappa = (math.exp(v) for v in x[4 * k:4 * k + 4])
            rho = pinned_rho[k]
        factors.append(Factor(nu0, theta, kappa, omega, rho))
    return TwoFactorParams(kind, factors[0], factors[1])


def _strip_rho(x10):
    """Drop the two rho coordinates from a 10-vector (pinned-rho mode)."""
    return np.concatenate([x10[0:4], x10[5:9]])


def start_to_params(kind, start):
    """TwoFactorStart -> TwoFactorParams."""
    f1 = Factor(start.nu0[0], start.theta[0], start.kappa[0], start.omega[0],
                start.rho[0])
    f2 = Factor(start.nu0[1], start.theta[1], start.kappa[1], start.omega[1],
                start.rho[1])
    return TwoFactorParams(kind, f1, f2)


# ---------------------------------------------------------------------------
# term-structure calibrations
# ---------------------------------------------------------------------------

TS_MAX_ITER = 8000


def _TS_NM_CONFIG_BASE(max_iter):
    # the 3-parameter least-squares fits are cheap; run them to collapse so the
    # curve residual lands well under the strip-noise scale
    return NelderMeadConfig(eps1=1e-18, eps2=1e-24, max_iter=max_iter)


def calibrate_variance_ts(taus, targets_v2, kappa_start=2.0, max_iter=TS_MAX_ITER):
    """(nu0, theta, kappa) fit of the CIR variance curve to corrected strip vols.

    The cost skips the first tenor and compares vol levels
    sum_{i>=2} (sqrt(curve(tau_i)) - sqrt(V~^2(tau_i)))^2; starts are the
    first/last curve points and kappa_start.
    """
    taus = np.asarray(taus, dtype=float)
    v2 = np.asarray(targets_v2, dtype=float)
    vols = np.sqrt(v2)

    def objective(x):
        nu0, theta, kappa = (math.exp(v) for v in x)
        fit = [math.sqrt(max(heston_total_variance(nu0, theta, kappa, t), 1e-16))
               for t in taus[1:]]
        return float(np.sum((np.asarray(fit) - vols[1:]) ** 2))

    x0 = np.array([math.log(v2[0]), math.log(v2[-1]), math.log(kappa_start)])
    res = nelder_mead(objective, x0, _TS_NM_CONFIG_BASE(max_iter))
    nu0, theta, kappa = (math.exp(v) for v in res.x)
    return nu0, theta, kappa, res


def calibrate_vol_ts_sz(taus, vol_targets, kappa_start=0.95, max_iter=TS_MAX_ITER):
    """(nu0, theta, kappa) fit of the OU vol curve on the vol scale.

    Same exponential-decay curve evaluated on vols; the first tenor is skipped
    and the starts are the first/last targets with kappa_start = 0.95.
    """
    taus = np.asarray(taus, dtype=float)
    vols = np.asarray(vol_targets, dtype=float)

    def objective(x):
        nu0, theta, kappa = (math.exp(v) for v in x)
        fit = [theta + (nu0 - theta) * _decay(kappa, t) for t in taus[1:]]
        return float(np.sum((np.asarray(fit) - vols[1:]) ** 2))

    x0 = np.array([math.log(vols[0]), math.log(vols[-1]), math.log(kappa_start)])
    res = nelder_mead(objective, x0, _TS_NM_CONFIG_BASE(max_iter))
    nu0, theta, kappa = (math.exp(v) for v in res.x)
    return nu0, theta, kappa, res


def _decay(kappa, tau):
    x = kappa * tau
    if x < 1e-8:
        return 1.0 - x / 2.0
    return (1.0 - math.exp(-x)) / x


# ---------------------------------------------------------------------------
# full-surface calibration
# ---------------------------------------------------------------------------

FULL_MAX_ITER_1F = 1600
FULL_MAX_ITER_2F = 800


def calibrate_full(kind, surface, start_params, cost_spec=CostSpec(), feller=False,
                   max_iter=None, pinned_rho=None, grid=DEFAULT_GRID,
                   stop_any=False):
    """Nelder-Mead calibration of a model to a surface.

    pinned_rho = (rho1, rho2) freezes the factor correlations of a two-factor
    model (8 free parameters); feller=True swaps the cost for the 999 penalty
    whenever a variance factor violates 2 kappa theta > omega^2.
    """
    if kind not in MODEL_KINDS:
        raise InvariantViolation(f"unknown model kind {kind!r}")
    two_factor = kind in ("bates2f", "ouou")
    if max_iter is None:
        max_iter = FULL_MAX_ITER_2F if two_factor else FULL_MAX_ITER_1F
    ctx = SurfaceCost(surface, cost_spec, grid)

    x0 = params_to_vector(kind, start_params)
    if pinned_rho is not None:
        if not two_factor:
            raise InvariantViolation("pinned rho applies to two-factor models only")
        x0 = _strip_rho(x0)

    def objective(x):
        params = vector_to_params(kind, x, pinned_rho=pinned_rho)
        return ctx(kind, params, feller=feller)

    res = nelder_mead(objective, x0,
                      NelderMeadConfig(max_iter=max_iter, stop_any=stop_any))
    params = vector_to_params(kind, res.x, pinned_rho=pinned_rho)
    rmse_vol, rmse_vega, residuals = rmse_report(ctx, kind, params)
    return CalibrationResult(
        model=kind, params=params, start=start_params, cost_value=res.fx,
        iterations=res.iterations, converged=res.converged,
        feller_satisfied=_feller_ok(kind, params), residual_vols=residuals,
        rmse_vol=rmse_vol, rmse_vega=rmse_vega,
        flags=("pinned_rho",) if pinned_rho is not None else (),
    )


def feller_truncate_omega(omega, theta_k, kappa_k):
    """min(omega, sqrt(1.99 theta kappa)): keep a split factor inside Feller."""
    return min(omega, math.sqrt(1.99 * theta_k * kappa_k))


def two_stage_calibration(kind, surface, symmetric_start, cost_spec=CostSpec(),
                          feller=False, stage1_max_iter=FULL_MAX_ITER_1F,
                          stage2_max_iter=FULL_MAX_ITER_2F, grid=DEFAULT_GRID):
    """Symmetric 5-parameter stage then unconstrained 10-parameter stage.

    symmetric_start is (nu0, theta, kappa, omega, rho) for one factor of the
    tied model (both factors equal).  For the Feller-constrained variance
    model the stage-1 factor omegas are truncated to sqrt(1.99 theta kappa)
    before stage 2.
    """
    if kind not in ("bates2f", "ouou"):
        raise InvariantViolation("two-stage calibration is for two-factor models")
    ctx = SurfaceCost(surface, cost_spec, grid)
    nu0, theta, kappa, omega, rho = symmetric_start

    def tied_objective(x):
        n, t, om, ka, rh = untransform_params(x)
        f = Factor(n, t, ka, om, rh)
        params = TwoFactorParams(kind, f, f)
        return ctx(kind, params, feller=feller)

    x0 = transform_params(nu0, theta, omega, kappa, rho)
    stage1 = nelder_mead(tied_objective, x0,
                         NelderMeadConfig(max_iter=stage1_max_iter))
    n, t, om, ka, rh = untransform_params(stage1.x)
    if feller and kind == "bates2f":
        om = feller_truncate_omega(om, t, ka)
    f = Factor(n, t, ka, om, rh)
    stage1_params = TwoFactorParams(kind, f, f)
    result = calibrate_full(kind, surface, stage1_params, cost_spec=cost_spec,
                            feller=feller, max_iter=stage2_max_iter, grid=grid)
    return replace(result, flags=result.flags + ("two_stage",)), stage1


# ---------------------------------------------------------------------------
# calibration risk and outliers
# ---------------------------------------------------------------------------

def calibration_risk(kind, surface, base_params, cost_kinds=("mse", "mae", "mape"),
                     max_iter=FULL_MAX_ITER_1F, grid=DEFAULT_GRID):
    """Per-parameter max pairwise spread across cost-function choices.

    omega and rho stay fixed at the base values; (nu0, theta, kappa) are
    recalibrated once per cost kind.
    """
    if kind not in ("heston", "sz"):
        raise InvariantViolation("risk protocol runs on one-factor models")
    results = []
    for ck in cost_kinds:
        ctx = SurfaceCost(surface, CostSpec(kind=ck), grid)

        def objective(x):
            nu0, theta, kappa = (math.exp(v) for v in x)
            params = _with_ts(kind, base_params, nu0, theta, kappa)
            return ctx(kind, params)

        x0 = np.array([math.log(base_params.nu0), math.log(base_params.theta),
                       math.log(base_params.kappa)])
        res = nelder_mead(objective, x0, NelderMeadConfig(max_iter=max_iter))
        nu0, theta, kappa = (math.exp(v) for v in res.x)
        results.append((ck, _with_ts(kind, base_params, nu0, theta, kappa), res))
    spreads = {}
    for name in ("nu0", "theta", "kappa"):
        vals = [getattr(p, name) for _, p, _ in results]
        spreads[name] = max(abs(a - b) for a in vals for b in vals)
    return CalibrationRisk(per_parameter=spreads, results=tuple(results))


def _with_ts(kind, base, nu0, theta, kappa):
    cls = HestonParams if kind == "heston" else SchobelZhuParams
    return cls(nu0=nu0, theta=theta, kappa=kappa, omega=base.omega, rho=base.rho)


OUTLIER_LOG_JUMP = 0.4


def detect_outliers(series):
    """Indices t where ln(x_t) - max(ln(x_1..x_{t-1})) > 0.4."""
    flagged = []
    run_max = None
    for t, x in enumerate(series):
        lx = math.log(x)
        if run_max is not None and lx - run_max > OUTLIER_LOG_JUMP:
            flagged.append(t)
        run_max = lx if run_max is None else max(run_max, lx)
    return flagged


def outlier_recalibration(daily_results, watch_params, recalibrate,
                          start_of=lambda r: r.start, value_of=getattr,
                          sz_feller_mode=False):
    """Re-run flagged days once with the offending start parameter doubled.

    daily_results is chronologically ordered; recalibrate(day_index,
    modified_start, param_name) must return a replacement result.  Both the
    original and the replacement are kept as (original, replacement | None).
    sz_feller_mode additionally multiplies the kappa start by 100 for theta
    outliers (the vol-model remedy under the positivity constraint).
    """
    corrected = []
    for name in watch_params:
        series = [value_of(r.params, name) for r in daily_results]
        flags = set(detect_outliers(series))
        corrected.append((name, flags))
    out = []
    for t, result in enumerate(daily_results):
        hit = [name for name, flags in corrected if t in flags]
        if not hit:
            out.append((result, None))
            continue
        name = hit[0]
        start = _double_param(start_of(result), name)
        if sz_feller_mode and name == "theta":
            start = replace(start, kappa=100.0 * start.kappa)
        redo = recalibrate(t, start, name)
        out.append((result, redo))
    return out


def _double_param(params, name):
    try:
        return replace(params, **{name: 2.0 * getattr(params, name)})
    except TypeError:
        raise InvariantViolation(f"cannot double {name} on {params!r}") from None
