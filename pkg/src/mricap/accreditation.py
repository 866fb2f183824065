"""Capacity accreditation: UCAP, MRI-based MRIC, AELCC and MELCC.

All marginal quantities are finite differences of EUE (or LOLE) between
the base case and a perturbed case evaluated on the same random draws.
``EstimatorSettings.exact`` swaps the Monte Carlo bank for full
enumeration, in which case every standard error is zero.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .engine import ScenarioBank
from .exact import ExactEvaluator
from .stats import METRICS, Estimate, Evaluation
from .system import (
    BaseCase,
    IntermittentSpec,
    LoadModel,
    PerfectSpec,
    StorageSpec,
    ThermalSpec,
    group_view,
    perturb_resource,
    resource_type,
)

log = logging.getLogger(__name__)

MARGINAL_PERFECT = "__marginal_perfect__"
REPLACEMENT = "__replacement__"
UE, LOL_DAYS = METRICS.index("ue"), METRICS.index("lol_days")
METHODS = ("ucap", "mric", "aelcc", "melcc")


class AccreditationError(RuntimeError):
    """An accreditation quantity is undefined or its search failed."""


@dataclass(frozen=True)
class EstimatorSettings:
    delta: float = 1.0  # MW, EUE-based finite differences
    replications: int = 10_000
    seed: int = 42
    two_sided: bool = False
    lole_delta: float = 10.0  # MW, LOLE-based finite differences
    workers: int = 1
    exact: bool = False
    detect_zero_margin: bool = True
    se_warning_fraction: float = 0.25
    aelcc_tol: float = 1e-3  # days/period
    aelcc_max_iter: int = 40

    def __post_init__(self):
        if not self.delta > 0 or not self.lole_delta > 0:
            raise ValueError("perturbation sizes must be > 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


def make_evaluator(base: BaseCase, settings: EstimatorSettings):
    if settings.exact:
        return ExactEvaluator(base, detect_zero_margin=settings.detect_zero_margin)
    return ScenarioBank(base, settings.replications, settings.seed, settings.workers,
                        settings.detect_zero_margin)


# --------------------------------------------------------------------------
# perturbed cases


def with_injection(base: BaseCase, delta: float) -> BaseCase:
    """Base case plus ``delta`` MW of perfect capacity (negative: extra load)."""
    if delta >= 0:
        resources = dict(base.resources)
        if MARGINAL_PERFECT in resources:
            raise ValueError(f"resource name {MARGINAL_PERFECT!r} is reserved")
        resources[MARGINAL_PERFECT] = PerfectSpec(delta)
        return base.with_resources(resources)
    load = LoadModel(base.load.weights, base.load.demand - delta)
    return BaseCase(load, base.resources, base.voll)


def _check_positive(base: BaseCase, name: str) -> float:
    c = base.native_capacity(name)
    if c <= 0:
        raise ValueError(f"resource {name!r} has zero native capacity; MRI undefined")
    return c


def _storage(base: BaseCase, name: str) -> StorageSpec:
    spec = base.resources[name]
    if not isinstance(spec, StorageSpec):
        raise ValueError(f"{name!r} is not a storage resource")
    return spec


def _replace(base: BaseCase, name: str, spec) -> BaseCase:
    resources = dict(base.resources)
    resources[name] = spec
    return base.with_resources(resources)


def storage_power_case(base: BaseCase, name: str, delta: float) -> BaseCase:
    spec = _storage(base, name)
    f = (spec.discharge_cap + delta) / spec.discharge_cap
    return _replace(base, name, spec.scaled_parts(f, 1.0))


def storage_energy_case(base: BaseCase, name: str, delta: float) -> tuple[BaseCase, float]:
    """Energy limit moved by ``delta * E / C`` MWh, the energy share of a ``delta`` MW resize."""
    spec = _storage(base, name)
    if spec.energy_limit == 0:
        raise ValueError(f"storage {name!r} has zero energy limit")
    d_energy = delta * spec.energy_limit / spec.discharge_cap
    f = (spec.energy_limit + d_energy) / spec.energy_limit
    return _replace(base, name, spec.scaled_parts(1.0, f)), d_energy


def intermittent_hour_case(base: BaseCase, name: str, hour: int, delta: float) -> BaseCase | None:
    """Add ``delta`` MW of mean output in one hour, shared in proportion to each profile.

    Returns None when the resource produces nothing in that hour.
    """
    spec = base.resources[name]
    if not isinstance(spec, IntermittentSpec):
        raise ValueError(f"{name!r} is not an intermittent resource")
    column = spec.profiles[:, hour]
    mean = float(base.load.weights @ column)
    if mean <= 0:
        return None
    profiles = spec.profiles.copy()
    profiles[:, hour] = column * (1.0 + delta / mean)
    return _replace(base, name, IntermittentSpec(spec.icap, profiles))


# --------------------------------------------------------------------------
# finite differences on one batch


class _Batch:
    """Cases queued for one evaluation; index 0 is the base case."""

    def __init__(self, base: BaseCase):
        self.cases = [base]

    def add(self, case: BaseCase) -> int:
        self.cases.append(case)
        return len(self.cases) - 1

    def run(self, evaluator, tag_base: bool = True) -> Evaluation:
        return evaluator.evaluate(self.cases, tag_mri=[0] if tag_base else False)


def _diff_weights(ev: Evaluation, metric: int, plus: int, minus: int | None, step: float) -> np.ndarray:
    """Weights of ``-(d metric)/d C``: forward when ``minus`` is None, else central."""
    w = ev.weights()
    if minus is None:
        w[metric, 0] += 1.0 / step
        w[metric, plus] -= 1.0 / step
    else:
        w[metric, minus] += 0.5 / step
        w[metric, plus] -= 0.5 / step
    return w


@dataclass
class _Pert:
    plus: int
    minus: int | None
    step: float
    metric: int = UE

    def weights(self, ev: Evaluation) -> np.ndarray:
        return _diff_weights(ev, self.metric, self.plus, self.minus, self.step)


def _queue(batch: _Batch, make, step: float, two_sided: bool, metric: int = UE) -> _Pert:
    plus = batch.add(make(step))
    minus = batch.add(make(-step)) if two_sided else None
    return _Pert(plus, minus, step, metric)


def _marginal(ev: Evaluation, pert: _Pert, label: str, settings: EstimatorSettings,
              notes: list | None = None) -> Estimate:
    est = ev.estimate(pert.weights(ev))
    return _checked(est, label, settings, notes)


def _checked(est: Estimate, label: str, settings: EstimatorSettings, notes: list | None = None) -> Estimate:
    if est.value < 0:
        msg = f"{label}: negative estimate {est.value:.6g} (SE {est.se:.3g}) clamped to 0"
        log.warning(msg)
        if notes is not None:
            notes.append(msg)
        est = Estimate(0.0, est.se)
    elif est.value > 0 and est.se > settings.se_warning_fraction * est.value:
        msg = f"{label}: SE {est.se:.3g} exceeds {settings.se_warning_fraction:.0%} of estimate"
        log.warning(msg)
        if notes is not None:
            notes.append(msg)
    return est


def _ratio(ev: Evaluation, num: _Pert, den: _Pert) -> Estimate:
    return ev.ratio(num.weights(ev), den.weights(ev))


# --------------------------------------------------------------------------
# single-quantity operations


def ucap(resource) -> float:
    """ICAP discounted by the forced outage rate."""
    if not isinstance(resource, ThermalSpec):
        raise ValueError("UCAP is defined for thermal resources only")
    return resource.icap * (1.0 - resource.for_rate)


def mri(base: BaseCase, resource: str, settings: EstimatorSettings) -> Estimate:
    """-dEUE/dC of one resource (hours/period)."""
    _check_positive(base, resource)
    batch = _Batch(base)
    p = _queue(batch, lambda d: perturb_resource(base, resource, d), settings.delta, settings.two_sided)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    return _marginal(ev, p, f"MRI[{resource}]", settings)


def mri_perfect(base: BaseCase, settings: EstimatorSettings) -> Estimate:
    """-dEUE/dC of a fictitious always-available injection."""
    batch = _Batch(base)
    p = _queue(batch, lambda d: with_injection(base, d), settings.delta, settings.two_sided)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    return _marginal(ev, p, "MRI[perfect]", settings)


@dataclass(frozen=True)
class MricResult:
    mri: Estimate
    mri_perfect: Estimate
    rmri: Estimate
    mric: Estimate


def mric(base: BaseCase, resource: str, settings: EstimatorSettings) -> MricResult:
    icap = _check_positive(base, resource)
    batch = _Batch(base)
    pp = _queue(batch, lambda d: with_injection(base, d), settings.delta, settings.two_sided)
    pi = _queue(batch, lambda d: perturb_resource(base, resource, d), settings.delta, settings.two_sided)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    k = _marginal(ev, pp, "MRI[perfect]", settings)
    if k.value <= 0:
        raise AccreditationError("MRI of perfect capacity is zero; accreditation undefined")
    m = _marginal(ev, pi, f"MRI[{resource}]", settings)
    r = _ratio(ev, pi, pp)
    if r.value < 0:
        r = Estimate(0.0, r.se)
    return MricResult(m, k, r, r.scaled(icap))


@dataclass(frozen=True)
class StorageComponents:
    mri_c: Estimate  # per MW of power
    mri_e: Estimate  # per MWh of energy
    energy_step: float


def _queue_storage(batch: _Batch, base: BaseCase, name: str, settings: EstimatorSettings):
    pc = _queue(batch, lambda d: storage_power_case(base, name, d), settings.delta, settings.two_sided)
    _, d_energy = storage_energy_case(base, name, settings.delta)
    pe = _queue(batch, lambda d: storage_energy_case(base, name, d)[0], settings.delta,
                settings.two_sided)
    pe.step = d_energy
    return pc, pe, d_energy


def mri_components_storage(base: BaseCase, resource: str, settings: EstimatorSettings) -> StorageComponents:
    """Separate power (per MW) and energy (per MWh) MRI components of a storage."""
    _storage(base, resource)
    _check_positive(base, resource)
    batch = _Batch(base)
    pc, pe, d_energy = _queue_storage(batch, base, resource, settings)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    return StorageComponents(_marginal(ev, pc, f"MRI_C[{resource}]", settings),
                             _marginal(ev, pe, f"MRI_E[{resource}]", settings), d_energy)


def mri_hourly_intermittent(base: BaseCase, resource: str, hours: Iterable[int] | None,
                            settings: EstimatorSettings) -> dict[int, Estimate]:
    """Per-hour MRI of an intermittent resource, normalized per MW of mean hourly output.

    Over the full horizon, sum_t MRI_t * mean_output_t equals MRI * ICAP
    up to finite-difference error.
    """
    spec = base.resources[resource]
    if not isinstance(spec, IntermittentSpec):
        raise ValueError(f"{resource!r} is not an intermittent resource")
    hours = list(range(base.horizon_hours)) if hours is None else sorted(set(hours))
    if not hours:
        raise ValueError("hour subset must be nonempty")
    for t in hours:
        if not 0 <= t < base.horizon_hours:
            raise ValueError(f"hour {t} outside the horizon")
    batch = _Batch(base)
    perts = {}
    for t in hours:
        if intermittent_hour_case(base, resource, t, settings.delta) is None:
            continue
        perts[t] = _queue(batch, lambda d, t=t: intermittent_hour_case(base, resource, t, d),
                          settings.delta, settings.two_sided)
    ev = batch.run(make_evaluator(base, settings), tag_base=False) if perts else None
    return {t: (_marginal(ev, perts[t], f"MRI[{resource}, hour {t}]", settings)
                if t in perts else Estimate(0.0, 0.0)) for t in hours}


def mean_hourly_output(base: BaseCase, resource: str) -> np.ndarray:
    spec = base.resources[resource]
    return base.load.weights @ spec.profiles


def group_mri(base: BaseCase, members: Sequence[str], settings: EstimatorSettings) -> Estimate:
    """-dEUE/dC_g for a proportional resize of every member."""
    group = group_view(base, members)
    if group.capacity <= 0:
        raise ValueError("group has zero native capacity; MRI undefined")
    batch = _Batch(base)
    p = _queue(batch, lambda d: group.perturb(base, d), settings.delta, settings.two_sided)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    return _marginal(ev, p, f"MRI[group {','.join(members)}]", settings)


def melcc(base: BaseCase, resource: str, settings: EstimatorSettings, metric: str = "lole") -> Estimate:
    """Capacity times the ratio of the resource's and perfect capacity's LOLE derivatives.

    ``metric="eue"`` uses EUE derivatives instead, which makes the ratio rMRI.
    """
    icap = _check_positive(base, resource)
    m = LOL_DAYS if metric == "lole" else UE
    if metric not in ("lole", "eue"):
        raise ValueError(f"unknown metric {metric!r}")
    batch = _Batch(base)
    d = settings.lole_delta
    pp = _queue(batch, lambda x: with_injection(base, x), d, settings.two_sided, m)
    pi = _queue(batch, lambda x: perturb_resource(base, resource, x), d, settings.two_sided, m)
    ev = batch.run(make_evaluator(base, settings), tag_base=False)
    return _cf(ev, pi, pp, resource).scaled(icap)


def _cf(ev: Evaluation, pi: _Pert, pp: _Pert, resource: str) -> Estimate:
    den = ev.estimate(pp.weights(ev))
    if den.value <= 0:
        raise AccreditationError(
            f"MELCC[{resource}]: LOLE does not respond to the perfect-capacity perturbation")
    return ev.ratio(pi.weights(ev), pp.weights(ev))


# --------------------------------------------------------------------------
# AELCC


@dataclass(frozen=True)
class AelccResult:
    value: float
    lole_base: float
    lole_removed: float
    lole_at_value: float
    iterations: int
    converged: bool


def _replacement_case(base: BaseCase, removed: tuple[str, ...], reference: str | None,
                      x: float) -> BaseCase:
    resources = {n: s for n, s in base.resources.items() if n not in removed}
    if reference is None:
        resources[REPLACEMENT] = PerfectSpec(x)
        return base.with_resources(resources)
    ref_spec = base.resources[reference]
    ref_cap = ref_spec.native_capacity
    if ref_cap <= 0:
        raise ValueError(f"reference {reference!r} has zero native capacity")
    kept = 0.0 if reference in removed else ref_cap
    resources[reference] = ref_spec.scaled((kept + x) / ref_cap)
    return base.with_resources(resources)


def aelcc_search(base: BaseCase, resource: str | Sequence[str], settings: EstimatorSettings,
                 evaluator=None, tol_lole: float | None = None, reference: str | None = None,
                 lole_base: float | None = None) -> AelccResult:
    """Replacement capacity that restores base-case LOLE after removing ``resource``.

    ``resource`` may also be a list of names removed together. The
    replacement is perfect capacity, or extra capacity of the
    ``reference`` resource (scaled proportionally) when one is given.
    """
    removed = (resource,) if isinstance(resource, str) else tuple(resource)
    label = ",".join(removed)
    icap = group_view(base, removed).capacity
    if icap <= 0:
        raise ValueError(f"{label!r} has zero native capacity")
    tol = settings.aelcc_tol if tol_lole is None else tol_lole
    ev = evaluator or make_evaluator(base, settings)

    def lole_at(x):
        case = _replacement_case(base, removed, reference, x)
        return ev.evaluate([case], tag_mri=False).value("lol_days", 0)

    target = ev.evaluate([base], tag_mri=False).value("lol_days", 0) if lole_base is None else lole_base
    lole_removed = lole_at(0.0)
    if lole_removed - target <= 0:
        raise AccreditationError(
            f"AELCC[{label}]: LOLE insensitive to removal (degenerate; "
            f"{lole_removed:.6g} vs base {target:.6g})")
    lo, hi = 0.0, 2.0 * icap
    f_hi = lole_at(hi)
    expansions = 0
    while f_hi > target + tol:
        if expansions >= 20:
            raise AccreditationError(f"AELCC[{label}]: no bracket found up to {hi:.6g} MW")
        lo, hi = hi, 2.0 * hi
        f_hi = lole_at(hi)
        expansions += 1
    mid, f_mid = hi, f_hi
    for it in range(1, settings.aelcc_max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = lole_at(mid)
        if abs(f_mid - target) <= tol:
            return AelccResult(mid, target, lole_removed, f_mid, it, True)
        if f_mid > target:
            lo = mid
        else:
            hi = mid
    log.warning("AELCC[%s]: LOLE tolerance not met after %d iterations (|dLOLE| = %.3g)",
                label, settings.aelcc_max_iter, abs(f_mid - target))
    return AelccResult(mid, target, lole_removed, f_mid, settings.aelcc_max_iter, False)


def aelcc(base: BaseCase, resource: str, settings: EstimatorSettings, tol_lole: float | None = None,
          reference: str | None = None) -> float:
    return aelcc_search(base, resource, settings, tol_lole=tol_lole, reference=reference).value


# --------------------------------------------------------------------------
# batch report


@dataclass
class AccreditationEntry:
    name: str
    type: str
    icap: float
    ucap: float | None = None
    mri: Estimate | None = None
    rmri: Estimate | None = None
    mric: Estimate | None = None
    aelcc: float | None = None
    melcc: Estimate | None = None
    mri_c_component: Estimate | None = None
    mri_e_component: Estimate | None = None
    members: tuple[str, ...] = ()
    notes: list[str] = field(default_factory=list)

    @property
    def se_mri(self) -> float | None:
        return None if self.mri is None else self.mri.se


@dataclass
class AccreditationReport:
    entries: list[AccreditationEntry]
    mri_perfect: Estimate
    eue: Estimate
    lole: Estimate
    expected_mri_hours: Estimate
    settings: EstimatorSettings
    methods: tuple[str, ...]
    reference: str | None = None
    # raw LOLE-derivative contribution factors, kept for rebasing
    melcc_cf: dict[str, float] = field(default_factory=dict)
    melcc_perfect_slope: float | None = None

    def entry(self, name: str) -> AccreditationEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def accredit(base: BaseCase, settings: EstimatorSettings, methods: Sequence[str] = METHODS,
             resources: Sequence[str] | None = None,
             groups: dict[str, Sequence[str]] | None = None) -> AccreditationReport:
    """Accredit every listed resource (default: all) on one shared set of draws."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown accreditation method(s): {sorted(unknown)}")
    names = list(base.resources) if resources is None else list(resources)
    for n in names:
        base.native_capacity(n)
    groups = dict(groups or {})
    for g, members in groups.items():
        group_view(base, members)

    evaluator = make_evaluator(base, settings)
    batch = _Batch(base)
    d, two = settings.delta, settings.two_sided
    pp = _queue(batch, lambda x: with_injection(base, x), d, two)
    per: dict[str, dict] = {}
    for n in names:
        spec = base.resources[n]
        q: dict = {}
        if spec.native_capacity > 0 and "mric" in methods:
            q["mri"] = _queue(batch, lambda x, n=n: perturb_resource(base, n, x), d, two)
            if isinstance(spec, StorageSpec) and spec.energy_limit > 0:
                q["pc"], q["pe"], _ = _queue_storage(batch, base, n, settings)
        if spec.native_capacity > 0 and "melcc" in methods:
            q["lole"] = _queue(batch, lambda x, n=n: perturb_resource(base, n, x),
                               settings.lole_delta, two, LOL_DAYS)
        per[n] = q
    group_perts = {}
    if "mric" in methods:
        for g, members in groups.items():
            view = group_view(base, members)
            group_perts[g] = _queue(batch, lambda x, v=view: v.perturb(base, x), d, two)
    pl = None
    if "melcc" in methods:
        pl = _queue(batch, lambda x: with_injection(base, x), settings.lole_delta, two, LOL_DAYS)

    ev = batch.run(evaluator, tag_base=True)
    base_metrics = ev.metrics(0)
    k = _marginal(ev, pp, "MRI[perfect]", settings)
    if "mric" in methods and k.value <= 0:
        raise AccreditationError("MRI of perfect capacity is zero; accreditation undefined")

    report = AccreditationReport(
        entries=[], mri_perfect=k,
        eue=Estimate(base_metrics.eue, base_metrics.se_eue),
        lole=Estimate(base_metrics.lole, base_metrics.se_lole),
        expected_mri_hours=Estimate(base_metrics.expected_mri_hours, base_metrics.se_mri_hours),
        settings=settings, methods=tuple(methods))
    lole_slope = None
    if pl is not None:
        lole_slope = ev.estimate(pl.weights(ev)).value
        report.melcc_perfect_slope = lole_slope

    for n in names:
        spec = base.resources[n]
        e = AccreditationEntry(n, resource_type(spec), spec.native_capacity)
        q = per[n]
        if "ucap" in methods and isinstance(spec, ThermalSpec):
            e.ucap = ucap(spec)
        if "mri" in q:
            e.mri = _marginal(ev, q["mri"], f"MRI[{n}]", settings, e.notes)
            r = _ratio(ev, q["mri"], pp)
            if r.value < 0:
                e.notes.append(f"rMRI[{n}]: negative estimate {r.value:.6g} clamped to 0")
                log.warning(e.notes[-1])
                r = Estimate(0.0, r.se)
            e.rmri = r
            e.mric = r.scaled(e.icap)
            if "pc" in q:
                e.mri_c_component = _marginal(ev, q["pc"], f"MRI_C[{n}]", settings, e.notes)
                e.mri_e_component = _marginal(ev, q["pe"], f"MRI_E[{n}]", settings, e.notes)
        elif "mric" in methods:
            e.notes.append("zero native capacity: MRI undefined")
        if "lole" in q:
            if lole_slope is None or lole_slope <= 0:
                e.notes.append("MELCC undefined: LOLE does not respond to perfect capacity")
            else:
                cf = ev.ratio(q["lole"].weights(ev), pl.weights(ev))
                report.melcc_cf[n] = cf.value
                e.melcc = cf.scaled(e.icap)
        report.entries.append(e)

    if "aelcc" in methods:
        for e in report.entries:
            if e.icap <= 0:
                continue
            try:
                e.aelcc = aelcc_search(base, e.name, settings, evaluator,
                                       lole_base=base_metrics.lole).value
            except AccreditationError as exc:
                e.notes.append(str(exc))
                log.warning(str(exc))

    for g, members in groups.items():
        view = group_view(base, members)
        e = AccreditationEntry(g, "group", view.capacity, members=view.members)
        if g in group_perts:
            e.mri = _marginal(ev, group_perts[g], f"MRI[group {g}]", settings, e.notes)
            e.rmri = _ratio(ev, group_perts[g], pp)
            e.mric = e.rmri.scaled(e.icap)
        if "aelcc" in methods:
            try:
                e.aelcc = group_aelcc(base, view.members, settings, evaluator, base_metrics.lole)
            except AccreditationError as exc:
                e.notes.append(str(exc))
        report.entries.append(e)
    return report


def group_aelcc(base: BaseCase, members: Sequence[str], settings: EstimatorSettings,
                evaluator=None, lole_base: float | None = None) -> float:
    """AELCC of a set of resources removed together."""
    return aelcc_search(base, list(members), settings, evaluator, lole_base=lole_base).value


def sum_of_members(report: AccreditationReport, members: Sequence[str], label: str) -> AccreditationEntry:
    rows = [report.entry(m) for m in members]
    e = AccreditationEntry(label, "sum", sum(r.icap for r in rows), members=tuple(members))

    def total(attr):
        vals = [getattr(r, attr) for r in rows]
        if any(v is None for v in vals):
            return None
        if isinstance(vals[0], Estimate):
            # members share draws; the SE of the sum is not tracked
            return Estimate(sum(v.value for v in vals), math.nan)
        return float(sum(vals))

    e.mric = total("mric")
    e.aelcc = total("aelcc")
    e.melcc = total("melcc")
    if e.mric is not None and e.icap > 0:
        e.rmri = Estimate(e.mric.value / e.icap, math.nan)
    return e


# --------------------------------------------------------------------------
# reference rebasing


@dataclass
class ContributionFactors:
    name: str
    mric: float | None
    melcc: float | None
    aelcc: float | None


@dataclass
class RebasedReport:
    reference: str
    beta: float  # MRI_reference / MRI_perfect
    melcc_beta: float | None
    original: AccreditationReport
    rebased: AccreditationReport
    factors_perfect: list[ContributionFactors]
    factors_reference: list[ContributionFactors]


def contribution_factors(report: AccreditationReport) -> list[ContributionFactors]:
    out = []
    for e in report.entries:
        if e.type in ("group", "sum") or e.icap <= 0:
            continue
        out.append(ContributionFactors(
            e.name,
            None if e.mric is None else e.mric.value / e.icap,
            None if e.melcc is None else e.melcc.value / e.icap,
            None if e.aelcc is None else e.aelcc / e.icap,
        ))
    return out


def rebase_reference(report: AccreditationReport, base: BaseCase, new_reference: str,
                     settings: EstimatorSettings) -> RebasedReport:
    """Re-express every accreditation relative to ``new_reference`` instead of perfect capacity.

    Marginal methods rescale algebraically by one factor; AELCC is
    recomputed with the reference resource as the replacement.
    """
    ref = report.entry(new_reference)
    if ref.rmri is None or ref.rmri.value <= 0:
        raise AccreditationError(f"reference {new_reference!r} has zero MRI")
    beta = ref.rmri.value
    melcc_beta = report.melcc_cf.get(new_reference)
    if melcc_beta is not None and melcc_beta <= 0:
        raise AccreditationError(f"reference {new_reference!r} has zero LOLE response")
    entries = []
    for e in report.entries:
        n = replace(e, notes=list(e.notes))
        if e.rmri is not None:
            n.rmri = e.rmri.scaled(1.0 / beta)
            n.mric = e.mric.scaled(1.0 / beta)
            n.mri = e.mri
        if e.melcc is not None and melcc_beta is not None:
            n.melcc = e.melcc.scaled(1.0 / melcc_beta)
        if e.aelcc is not None and e.type not in ("group", "sum"):
            try:
                n.aelcc = aelcc_search(base, e.name, settings, reference=new_reference,
                                       lole_base=report.lole.value).value
            except AccreditationError as exc:
                n.aelcc = None
                n.notes.append(str(exc))
        elif e.type in ("group", "sum"):
            n.aelcc = None
        entries.append(n)
    rebased = replace(report, entries=entries, reference=new_reference,
                      mri_perfect=report.mri_perfect.scaled(1.0 / beta),
                      melcc_cf={k: v / melcc_beta for k, v in report.melcc_cf.items()}
                      if melcc_beta else dict(report.melcc_cf))
    return RebasedReport(new_reference, beta, melcc_beta, report, rebased,
                         contribution_factors(report), contribution_factors(rebased))


# --------------------------------------------------------------------------
# output


REPORT_COLUMNS = ["name", "icap", "ucap", "aelcc", "melcc", "mri", "rmri", "mric",
                  "mri_c_component", "mri_e_component", "se_mri"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Estimate):
        value = value.value
    if isinstance(value, float) and math.isnan(value):
        return ""
    return f"{float(value):.6f}"


def report_rows(report: AccreditationReport) -> list[list[str]]:
    rows = []
    for e in report.entries:
        rows.append([e.name, _fmt(e.icap), _fmt(e.ucap), _fmt(e.aelcc), _fmt(e.melcc),
                     _fmt(e.mri), _fmt(e.rmri), _fmt(e.mric), _fmt(e.mri_c_component),
                     _fmt(e.mri_e_component), _fmt(e.se_mri)])
    return rows


def report_to_csv(report: AccreditationReport, extra: Sequence[AccreditationEntry] = ()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(report_rows(report))
    if extra:
        tmp = replace(report, entries=list(extra))
        writer.writerows(report_rows(tmp))
    return buf.getvalue()


def _est_dict(est: Estimate | None):
    if est is None:
        return None
    return {"value": est.value, "se": None if math.isnan(est.se) else est.se}


def report_to_dict(report: AccreditationReport) -> dict:
    return {
        "reference": report.reference or "perfect",
        "mri_perfect": _est_dict(report.mri_perfect),
        "eue": _est_dict(report.eue),
        "lole": _est_dict(report.lole),
        "expected_mri_hours": _est_dict(report.expected_mri_hours),
        "methods": list(report.methods),
        "entries": [
            {
                "name": e.name,
                "type": e.type,
                "icap": e.icap,
                "ucap": e.ucap,
                "aelcc": e.aelcc,
                "melcc": _est_dict(e.melcc),
                "mri": _est_dict(e.mri),
                "rmri": _est_dict(e.rmri),
                "mric": _est_dict(e.mric),
                "mri_c_component": _est_dict(e.mri_c_component),
                "mri_e_component": _est_dict(e.mri_e_component),
                "members": list(e.members),
                "notes": list(e.notes),
            }
            for e in report.entries
        ],
    }


FACTOR_COLUMNS = ["name", "cf_mric_perfect", "cf_mric_reference", "mric_change_pct",
                  "cf_melcc_perfect", "cf_melcc_reference", "melcc_change_pct",
                  "cf_aelcc_perfect", "cf_aelcc_reference", "aelcc_change_pct"]


def factors_to_csv(rebased: RebasedReport) -> str:
    def pct(a, b):
        if a is None or b is None or a == 0:
            return ""
        return f"{100.0 * (b / a - 1.0):.6f}"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FACTOR_COLUMNS)
    for p, r in zip(rebased.factors_perfect, rebased.factors_reference):
        writer.writerow([p.name, _fmt(p.mric), _fmt(r.mric), pct(p.mric, r.mric),
                         _fmt(p.melcc), _fmt(r.melcc), pct(p.melcc, r.melcc),
                         _fmt(p.aelcc), _fmt(r.aelcc), pct(p.aelcc, r.aelcc)])
    return buf.getvalue()


def report_to_json(report: AccreditationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)
