"""Self-improvement dynamics over checkpoint series.

A checkpoint series is (wall-clock day, cumulative resource, capability)
triples. The improvement slope is capability per unit resource; link
transforms stretch capability near its ceiling so that "the shortfall
shrinks multiplicatively" becomes an additive step; the local quadratic
fit measures whether the link-slope itself is rising or falling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .battery import Battery, EpisodeTrace
from .errors import ConfigError, MeterError
from .stats import ResamplePlan, _replicate_rng, _resample_indices, bootstrap_ci, isotonic_fit, theil_sen

C_CLAMP = 1e-9
SECONDS_PER_DAY = 86400.0

LINKS = ("logit", "surprisal")
NORMALIZERS = ("mm", "logistic")


# ---------------------------------------------------------------------------
# configuration and series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicsConfig:
    kappa_star: float
    link: str = "surprisal"
    eps0: float = 0.01
    alpha: float = 0.5
    three_term_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    eta: float = 1.0
    eta_prime: float = 1.0
    gamma_star: float = 0.01
    normalizer: str = "mm"
    kappa_half: float = 0.01
    logistic_scale: float = 0.01
    bandwidth_fraction: float = 0.5
    gamma_bound: float = 0.001
    step_delta: float = 1.0
    step_multiplier: float = math.e

    def __post_init__(self) -> None:
        if self.link not in LINKS:
            raise ConfigError(f"unknown link {self.link!r}")
        if self.normalizer not in NORMALIZERS:
            raise ConfigError(f"unknown normalizer {self.normalizer!r}")
        if self.kappa_star <= 0:
            raise ConfigError("kappa_star must be positive")
        if not 0.0 < self.eps0 <= 0.5:
            raise ConfigError("eps0 must lie in (0, 1/2]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0,1]")
        w = self.three_term_weights
        if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError("three-term weights must be nonnegative and sum to 1")
        if self.eta <= 0 or self.eta_prime <= 0 or self.gamma_star <= 0:
            raise ConfigError("sharpness and curvature scales must be positive")
        if self.kappa_half <= 0 or self.logistic_scale <= 0:
            raise ConfigError("normalizer scales must be positive")
        if not 0.0 < self.bandwidth_fraction:
            raise ConfigError("bandwidth fraction must be positive")
        if self.gamma_bound < 0:
            raise ConfigError("diminishing-returns bound must be nonnegative")
        if self.step_delta <= 0 or self.step_multiplier <= 1:
            raise ConfigError("step needs delta > 0 or multiplier > 1")


@dataclass
class CheckpointSeries:
    t: np.ndarray  # wall-clock, days
    resource: np.ndarray  # cumulative spend
    capability: np.ndarray  # in (0,1) after clamping
    family: Optional[str] = None
    clamped: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.resource = np.asarray(self.resource, dtype=float)
        self.capability = np.asarray(self.capability, dtype=float)
        if not (self.t.shape == self.resource.shape == self.capability.shape):
            raise ConfigError("checkpoint arrays must share a shape")
        if self.t.size == 0:
            raise ConfigError("empty checkpoint series")
        if np.any(np.diff(self.t) <= 0):
            raise ConfigError("checkpoint times must be strictly increasing")
        if np.any(np.diff(self.resource) < 0):
            raise ConfigError("cumulative resource must be nondecreasing")
        lo, hi = C_CLAMP, 1.0 - C_CLAMP
        if np.any(self.capability < lo) or np.any(self.capability > hi):
            self.clamped = True
            self.capability = np.clip(self.capability, lo, hi)

    def __len__(self) -> int:
        return int(self.t.size)


def checkpoints_from_traces(traces: Sequence[EpisodeTrace], battery: Battery,
                            family: Optional[str] = None) -> CheckpointSeries:
    """Daily checkpoints: capability is the family mean quality for that day
    (or the mean over families when family is None, so large families do
    not dominate); resource is cumulative cost over all traces so far."""
    stamped = [t for t in traces if t.timestamp is not None]
    if not stamped:
        raise MeterError("no timestamped traces to build checkpoints from")
    t0 = min(t.timestamp for t in stamped)

    def day_of(tr: EpisodeTrace) -> int:
        return int((tr.timestamp - t0) // SECONDS_PER_DAY)

    by_day: dict[int, list[EpisodeTrace]] = {}
    for tr in stamped:
        by_day.setdefault(day_of(tr), []).append(tr)

    days, caps, resources = [], [], []
    cumulative = 0.0
    for day in sorted(by_day):
        day_traces = by_day[day]
        cumulative += sum(tr.cost or 0.0 for tr in day_traces)
        fam_quals: dict[str, list[float]] = {}
        for tr in day_traces:
            spec = battery.tasks.get(tr.task_id)
            if spec is None:
                continue
            fam_quals.setdefault(spec.family, []).append(tr.quality)
        if family is not None:
            if family not in fam_quals:
                continue
            cap = float(np.mean(fam_quals[family]))
        else:
            if not fam_quals:
                continue
            cap = float(np.mean([np.mean(v) for v in fam_quals.values()]))
        days.append(float(day))
        caps.append(cap)
        resources.append(cumulative)
    if not days:
        raise MeterError("no checkpoint days with usable traces")
    return CheckpointSeries(np.array(days), np.array(resources), np.array(caps),
                            family=family)


# ---------------------------------------------------------------------------
# slope estimation
# ---------------------------------------------------------------------------

@dataclass
class KappaEstimate:
    point: float
    fd_median: float
    method: str
    ci: Optional[tuple[float, float]]
    n: int

    def to_json(self) -> dict:
        return {"point": self.point, "fd_median": self.fd_median,
                "method": self.method,
                "ci": list(self.ci) if self.ci else None, "n": self.n}


def kappa_estimate(series: CheckpointSeries,
                   plan: Optional[ResamplePlan] = None) -> KappaEstimate:
    """Improvement per unit resource: Theil-Sen slope of capability on
    resource, with the finite-difference median as a cross-check."""
    r, c = series.resource, series.capability
    if len(series) < 2:
        raise MeterError("need at least two checkpoints")
    if np.all(r == r[0]):
        raise MeterError("slope undefined: no resource was spent")
    point = theil_sen(r, c)

    dr = np.diff(r)
    keep = dr != 0
    if not np.any(keep):
        raise MeterError("slope undefined: no resource was spent")
    fd = np.diff(c)[keep] / dr[keep]
    fd_median = float(np.median(fd))

    ci = None
    if plan is not None and len(series) >= 2:
        idx = np.arange(len(series), dtype=float)

        def stat(ix: np.ndarray) -> float:
            sel = ix.astype(int)
            try:
                return theil_sen(r[sel], c[sel])
            except MeterError:
                return point  # degenerate resample keeps the point estimate

        res = bootstrap_ci(idx, plan, statistic=stat)
        if res.has_interval:
            ci = (res.lo, res.hi)
    return KappaEstimate(point=point, fd_median=fd_median, method="theil-sen",
                         ci=ci, n=len(series))


def window_rates(series: CheckpointSeries, t_start: float, t_end: float
                 ) -> tuple[float, float, float]:
    """(slope per resource, spend rate, slope per time) over [t_start, t_end].

    The per-time rate is computed literally as the product of the other
    two, so the chain identity holds exactly.
    """
    mask = (series.t >= t_start) & (series.t <= t_end)
    if mask.sum() < 2:
        raise MeterError("window needs at least two checkpoints")
    t = series.t[mask]
    r = series.resource[mask]
    c = series.capability[mask]
    if r[-1] == r[0]:
        raise MeterError("window omitted: no resource spent inside it")
    kappa_bar = (c[-1] - c[0]) / (r[-1] - r[0])
    v_bar = (r[-1] - r[0]) / (t[-1] - t[0])
    return float(kappa_bar), float(v_bar), float(kappa_bar * v_bar)


# ---------------------------------------------------------------------------
# links and normalizers
# ---------------------------------------------------------------------------

def _check_open_unit(c: float) -> None:
    if not 0.0 < c < 1.0:
        raise MeterError(f"capability {c} outside the open unit interval")


def link_value(c: float, link: str) -> float:
    _check_open_unit(c)
    if link == "logit":
        return math.log(c / (1.0 - c))
    if link == "surprisal":
        return -math.log(1.0 - c)
    raise ConfigError(f"unknown link {link!r}")


def link_inverse(y: float, link: str) -> float:
    if link == "logit":
        return 1.0 / (1.0 + math.exp(-y))
    if link == "surprisal":
        return 1.0 - math.exp(-y)
    raise ConfigError(f"unknown link {link!r}")


def link_utility(c: float, link: str, eps0: float) -> float:
    """g(c)/g(1-eps0): capability on the link scale, 1 at the 1-eps0 anchor."""
    if not 0.0 < eps0 <= 0.5:
        raise ConfigError("eps0 must lie in (0, 1/2]")
    return link_value(c, link) / link_value(1.0 - eps0, link)


def link_transform(c: float, link: str, eps0: float
                   ) -> tuple[float, Callable[[float], float], float]:
    """(g(c), the inverse map, anchored utility U(c))."""
    return (link_value(c, link), lambda y: link_inverse(y, link),
            link_utility(c, link, eps0))


def normalize_rate(kappa: float, config: DynamicsConfig) -> float:
    """Map a raw slope onto a bounded saturation scale."""
    if config.normalizer == "mm":
        if kappa < 0:
            raise MeterError("saturation normalizer needs a nonnegative slope")
        return float(kappa / (kappa + config.kappa_half))
    return float(1.0 / (1.0 + math.exp(-kappa / config.logistic_scale)))


def convert_time_to_resource(kappa_t: float, delta_kappa_t: float,
                             spend_rate: float, spend_accel: float = 0.0
                             ) -> tuple[float, float]:
    """Translate per-time slope and curvature into per-resource ones."""
    if spend_rate <= 0:
        raise MeterError("spend rate must be positive")
    kappa = kappa_t / spend_rate
    delta = delta_kappa_t / spend_rate ** 2 - kappa_t * spend_accel / spend_rate ** 3
    return float(kappa), float(delta)


def meta_elasticity(resource: float, kappa: float, delta_kappa: float
                    ) -> Optional[float]:
    """R·(curvature/slope); undefined (None) when the slope is not positive."""
    if kappa <= 0:
        return None
    return float(resource * delta_kappa / kappa)


# ---------------------------------------------------------------------------
# local quadratic fits on the link scale
# ---------------------------------------------------------------------------

@dataclass
class LocalCurvature:
    r0: float
    kappa: float
    delta_kappa: float
    kappa_ci: Optional[tuple[float, float]] = None
    delta_ci: Optional[tuple[float, float]] = None

    def to_json(self) -> dict:
        return {
            "r0": self.r0, "kappa": self.kappa, "delta_kappa": self.delta_kappa,
            "kappa_ci": list(self.kappa_ci) if self.kappa_ci else None,
            "delta_ci": list(self.delta_ci) if self.delta_ci else None,
        }


def _tricube(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = (1.0 - np.abs(u[inside]) ** 3) ** 3
    return out


def _wls_quadratic(r: np.ndarray, y: np.ndarray, r0: float, h: float
                   ) -> Optional[tuple[float, float]]:
    """Fit y on (r-r0, (r-r0)^2/2) with tricube weights; None if rank-deficient."""
    w = _tricube((r - r0) / h)
    active = w > 0
    if active.sum() < 3 or np.unique(r[active]).size < 3:
        return None
    x = r[active] - r0
    design = np.column_stack([np.ones_like(x), x, 0.5 * x ** 2])
    sw = np.sqrt(w[active])
    coef, _, rank, _ = np.linalg.lstsq(design * sw[:, None], y[active] * sw, rcond=None)
    if rank < 3:
        return None
    return float(coef[1]), float(coef[2])


def _fit_with_widening(r: np.ndarray, y: np.ndarray, r0: float, h: float
                       ) -> tuple[float, float]:
    fit = _wls_quadratic(r, y, r0, h)
    if fit is None:
        fit = _wls_quadratic(r, y, r0, 2.0 * h)
    if fit is None:
        raise MeterError(f"local fit rank-deficient at r0={r0} even after widening")
    return fit


def local_quadratic(series: CheckpointSeries, config: DynamicsConfig,
                    plan: Optional[ResamplePlan] = None) -> list[LocalCurvature]:
    """Link-scale slope and curvature at each checkpoint and the midpoint.

    Bootstrap intervals (when a plan is given) resample checkpoint days
    in blocks and refit at the same evaluation points.
    """
    if len(series) < 3:
        raise MeterError("local quadratic needs at least three checkpoints")
    r = series.resource
    y = np.array([link_value(c, config.link) for c in series.capability])
    r_range = float(r.max() - r.min())
    if r_range <= 0:
        raise MeterError("no resource range to fit over")
    h = config.bandwidth_fraction * r_range
    midpoint = float((r.min() + r.max()) / 2.0)
    eval_points = sorted(set(np.concatenate([r, [midpoint]]).tolist()))

    fits = {r0: _fit_with_widening(r, y, r0, h) for r0 in eval_points}

    intervals: dict[float, tuple] = {}
    if plan is not None:
        n = len(series)
        alpha = 1.0 - plan.level
        reps_k = {r0: [] for r0 in eval_points}
        reps_d = {r0: [] for r0 in eval_points}
        for rep in range(plan.replicates):
            rng = _replicate_rng(plan.seed, rep)
            idx = np.sort(_resample_indices(n, plan, rng))
            rr, yy = r[idx], y[idx]
            for r0 in eval_points:
                fit = _wls_quadratic(rr, yy, r0, h) or _wls_quadratic(rr, yy, r0, 2 * h)
                k, d = fit if fit is not None else fits[r0]
                reps_k[r0].append(k)
                reps_d[r0].append(d)
        for r0 in eval_points:
            k_lo, k_hi = np.quantile(reps_k[r0], [alpha / 2, 1 - alpha / 2])
            d_lo, d_hi = np.quantile(reps_d[r0], [alpha / 2, 1 - alpha / 2])
            intervals[r0] = ((float(k_lo), float(k_hi)), (float(d_lo), float(d_hi)))

    out = []
    for r0 in eval_points:
        k, d = fits[r0]
        k_ci, d_ci = intervals.get(r0, (None, None))
        out.append(LocalCurvature(r0=r0, kappa=k, delta_kappa=d,
                                  kappa_ci=k_ci, delta_ci=d_ci))
    return out


def curvature_at_midpoint(fits: Sequence[LocalCurvature]) -> LocalCurvature:
    """The fit whose evaluation point is closest to the window midpoint."""
    if not fits:
        raise MeterError("no local fits")
    lo, hi = fits[0].r0, fits[-1].r0
    mid = (lo + hi) / 2.0
    return min(fits, key=lambda f: abs(f.r0 - mid))


# ---------------------------------------------------------------------------
# step operators, lambda score, escape bounds
# ---------------------------------------------------------------------------

def step_operator(c: float, link: str, amount: float, mode: str = "additive") -> float:
    """One self-improvement step on the link scale.

    Additive adds `amount` to g(c); multiplicative scales g(c) by it. On
    the surprisal link an additive step of log(A) divides the shortfall
    1-c by exactly A.
    """
    _check_open_unit(c)
    if mode == "additive":
        if amount <= 0:
            raise MeterError("additive step needs a positive increment")
        if link == "surprisal":
            out = 1.0 - (1.0 - c) * math.exp(-amount)  # exact shortfall division
        else:
            out = link_inverse(link_value(c, link) + amount, link)
    elif mode == "multiplicative":
        if amount <= 1:
            raise MeterError("multiplicative step needs a multiplier above 1")
        if link == "surprisal":
            out = 1.0 - (1.0 - c) ** amount
        else:
            out = link_inverse(amount * link_value(c, link), link)
    else:
        raise MeterError(f"unknown step mode {mode!r}")
    # keep results strictly interior so steps stay composable in floats
    return min(max(out, C_CLAMP), 1.0 - C_CLAMP)


@dataclass
class LambdaResult:
    two_term: float
    three_term: Optional[float]
    utility: float
    momentum: float
    curvature_term: Optional[float]
    curvature_term_unit: Optional[float]
    momentum_clamped: bool
    label: Optional[int] = None

    def to_json(self) -> dict:
        return {"two_term": self.two_term, "three_term": self.three_term,
                "utility": self.utility, "momentum": self.momentum,
                "curvature_term": self.curvature_term,
                "curvature_term_unit": self.curvature_term_unit,
                "momentum_clamped": self.momentum_clamped, "label": self.label}


def lambda_score(utility: float, kappa: float, config: DynamicsConfig,
                 delta_kappa: Optional[float] = None,
                 cutpoints: Optional[dict[int, float]] = None) -> LambdaResult:
    """Blend of anchored capability, slope momentum, and curvature sign.

    Momentum is tanh(eta*log(1+kappa/kappa*)); a slope below -kappa*
    empties the log argument, so momentum clamps to -1 with a flag.
    """
    arg = 1.0 + kappa / config.kappa_star
    clamped = arg <= 0.0
    momentum = -1.0 if clamped else math.tanh(config.eta * math.log(arg))

    two_term = config.alpha * utility + (1.0 - config.alpha) * momentum
    three_term = None
    k_term = None
    k_unit = None
    if delta_kappa is not None:
        k_term = math.tanh(config.eta_prime * delta_kappa / config.gamma_star)
        k_unit = (k_term + 1.0) / 2.0
        w_c, w_k, w_d = config.three_term_weights
        three_term = w_c * utility + w_k * momentum + w_d * k_term

    label = None
    if cutpoints:
        score = three_term if three_term is not None else two_term
        for level in sorted(cutpoints):
            if score >= cutpoints[level]:
                label = level
    return LambdaResult(two_term=two_term, three_term=three_term,
                        utility=utility, momentum=momentum,
                        curvature_term=k_term, curvature_term_unit=k_unit,
                        momentum_clamped=clamped, label=label)


def escape_bounds(c0: float, eps: float, v_escape: float, r_min: float,
                  link: str = "surprisal") -> tuple[float, float]:
    """Resource and time needed to push capability to 1-eps at the
    escape rate; zero when already there."""
    if v_escape <= 0:
        raise MeterError("escape velocity must be positive")
    if not 0.0 < eps < 1.0:
        raise MeterError("eps must lie in (0,1)")
    if r_min <= 0:
        raise MeterError("minimum spend rate must be positive")
    _check_open_unit(c0)
    if c0 >= 1.0 - eps:
        return 0.0, 0.0
    gap = link_value(1.0 - eps, link) - link_value(c0, link)
    resource_bound = gap / v_escape
    return float(resource_bound), float(resource_bound / r_min)


# ---------------------------------------------------------------------------
# cutpoint calibration
# ---------------------------------------------------------------------------

def calibrate_cutpoints(exemplars: Sequence[tuple[float, int]]) -> dict[int, float]:
    """Monotone level cutpoints from (score, certified level) exemplars.

    Exemplar levels are isotonized along the score axis; the cutpoint
    for each level is the smallest score whose fitted level reaches it.
    Cutpoints must come out strictly increasing, otherwise the offending
    exemplars are reported.
    """
    if not exemplars:
        raise MeterError("no exemplars")
    levels = sorted({lvl for _, lvl in exemplars})
    full = list(range(levels[0], levels[-1] + 1))
    missing = [lvl for lvl in full if lvl not in levels]
    if missing:
        raise MeterError(f"missing exemplars for levels {missing}")

    ordered = sorted(exemplars, key=lambda e: (e[0], e[1]))
    scores = np.array([e[0] for e in ordered])
    fitted = isotonic_fit(np.array([float(e[1]) for e in ordered]), increasing=True)

    cutpoints: dict[int, float] = {}
    for lvl in levels:
        reach = np.nonzero(fitted >= lvl - 1e-9)[0]
        if reach.size == 0:
            raise MeterError(
                f"level {lvl} unreachable after monotone projection; "
                f"offending exemplars: {[ordered[i] for i in range(len(ordered)) if ordered[i][1] >= lvl]}")
        cutpoints[lvl] = float(scores[reach[0]])

    taus = [cutpoints[lvl] for lvl in levels]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        bad = [lvl for i, lvl in enumerate(levels[1:], 1) if taus[i] <= taus[i - 1]]
        offenders = [e for e in ordered if e[1] in bad or e[1] + 1 in bad]
        raise MeterError(
            f"cutpoints not strictly increasing at levels {bad}; "
            f"offending exemplars: {offenders}")
    return cutpoints
