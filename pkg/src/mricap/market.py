"""Single-zone capacity auction, requirement-constraint comparison and level curves."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accreditation import EstimatorSettings, accredit, make_evaluator
from .demand import DemandCurve, system_demand_rmri
from .stats import METRICS, Estimate
from .system import BaseCase, ResourceSpec

log = logging.getLogger(__name__)

MAX_OPTIONS = 20


# --------------------------------------------------------------------------
# auction


@dataclass(frozen=True)
class Offer:
    name: str
    price: float  # $/MW-period
    quantity: float  # MW, in the demand curve's coordinate space

    def __post_init__(self):
        if not self.price >= 0:
            raise ValueError(f"offer {self.name!r}: price must be >= 0")
        if not self.quantity > 0:
            raise ValueError(f"offer {self.name!r}: quantity must be > 0")


@dataclass
class ClearingResult:
    cleared: dict[str, float]  # MW per offer, in offer order
    price: float
    surplus: float
    binding: str
    total_quantity: float

    def payments(self) -> dict[str, float]:
        return {k: self.price * q for k, q in self.cleared.items()}


def _demand_reach(curve: DemandCurve, c: float) -> float:
    """Largest quantity at which the curve still pays at least ``c`` (inf for c <= 0)."""
    if c <= 0:
        return np.inf
    qs, ps = curve.quantities, curve.prices
    if ps[-1] >= c:
        return float(qs[-1])
    if ps[0] < c:
        return -np.inf
    j = int(np.flatnonzero(ps >= c)[-1])  # ps[j] >= c > ps[j + 1]
    return float(qs[j] + (ps[j] - c) * (qs[j + 1] - qs[j]) / (ps[j] - ps[j + 1]))


def clear_auction(offers: Sequence[Offer], curve: DemandCurve) -> ClearingResult:
    """Uniform-price clearing of a merit-order offer stack against ``curve``.

    Accepted quantity maximizes demand value minus offer cost. Offers at
    the marginal price share the partially accepted amount in proportion
    to their size.
    """
    names = [o.name for o in offers]
    if len(set(names)) != len(names):
        raise ValueError("offer names must be unique")
    cleared = {o.name: 0.0 for o in offers}
    if not offers:
        return ClearingResult(cleared, curve.price_at(0.0), 0.0, "no offers", 0.0)
    order = sorted(range(len(offers)), key=lambda i: offers[i].price)
    steps = [list(g) for _, g in itertools.groupby(order, key=lambda i: offers[i].price)]
    Q = 0.0
    price = None
    binding = ""
    for step in steps:
        c = offers[step[0]].price
        size = sum(offers[i].quantity for i in step)
        end = Q + size
        if curve.price_at(end) >= c:
            for i in step:
                cleared[offers[i].name] = offers[i].quantity
            Q = end
            continue
        if curve.price_at(Q) >= c:
            q_star = min(max(_demand_reach(curve, c), Q), end)
            take = q_star - Q
            for i in step:
                cleared[offers[i].name] = take * offers[i].quantity / size
            Q = q_star
            price = c
            binding = "marginal offer(s) " + ",".join(offers[i].name for i in step) + " partially cleared"
        else:
            price = curve.price_at(Q)
            binding = "demand curve between offer steps; next offer " + offers[step[0]].name + " not cleared"
        break
    if price is None:
        price = curve.price_at(Q)
        binding = "all offers cleared; price set by demand at total supply"
    cost = sum(offers[i].price * cleared[offers[i].name] for i in range(len(offers)))
    surplus = curve.integral(0.0, Q) - cost
    return ClearingResult(cleared, float(price), float(surplus), binding, float(Q))


def supply_cost(offers: Sequence[Offer], q: float) -> float:
    """Cheapest cost of procuring ``q`` MW from the offers (merit order)."""
    cost = 0.0
    for o in sorted(offers, key=lambda o: o.price):
        take = min(o.quantity, max(q, 0.0))
        cost += take * o.price
        q -= take
        if q <= 0:
            break
    return cost


def rebase_offers(offers: Sequence[Offer], beta: float) -> list[Offer]:
    """Offers re-expressed in units of a reference with relative MRI ``beta``."""
    return [Offer(o.name, o.price * beta, o.quantity / beta) for o in offers]


def rebase_curve(curve: DemandCurve, beta: float) -> DemandCurve:
    return DemandCurve(curve.quantities / beta, curve.prices * beta, curve.space, curve.voll,
                       None if curve.rmri_sys is None else curve.rmri_sys / beta)


def offers_from_json(text: str) -> list[Offer]:
    doc = json.loads(text)
    items = doc["offers"] if isinstance(doc, dict) else doc
    out = []
    for item in items:
        extra = set(item) - {"name", "price", "quantity"}
        if extra:
            raise ValueError(f"unknown offer field(s): {sorted(extra)}")
        out.append(Offer(str(item["name"]), float(item["price"]), float(item["quantity"])))
    return out


def clearing_to_dict(result: ClearingResult) -> dict:
    return {
        "price": result.price,
        "total_quantity": result.total_quantity,
        "surplus": result.surplus,
        "binding": result.binding,
        "cleared": [{"name": k, "quantity": q, "payment": result.price * q}
                    for k, q in result.cleared.items()],
    }


def schedule_to_csv(result: ClearingResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "cleared_mw", "price_per_mw", "payment"])
    for k, q in result.cleared.items():
        writer.writerow([k, f"{q:.6f}", f"{result.price:.6f}", f"{result.price * q:.6f}"])
    return buf.getvalue()


# --------------------------------------------------------------------------
# requirement constraints


@dataclass(frozen=True)
class PhysicalOption:
    name: str
    spec: ResourceSpec
    cost: float  # $/period for the whole option


@dataclass
class ConstraintChoice:
    constraint: str  # "native" or "mric"
    selected: list[str]
    cost: float
    lhs: float
    rhs: float
    eue: Estimate | None = None


@dataclass
class RequirementComparison:
    requirement: float
    rmri_sys: float
    option_rmri: dict[str, float]
    background: list[str]
    native: ConstraintChoice
    mric: ConstraintChoice


def _option_rmri(base: BaseCase, options: Sequence[PhysicalOption], settings: EstimatorSettings):
    """rMRI of each option at the base case, plus the accreditation of the base mix."""
    report = accredit(base, settings, methods=("mric",))
    k = report.mri_perfect.value
    ev = make_evaluator(base, settings)
    out = {}
    new = []
    for opt in options:
        if opt.name in base.resources and base.resources[opt.name] == opt.spec:
            out[opt.name] = report.entry(opt.name).rmri.value
        else:
            new.append(opt)
    if new:
        # a marginal slice (delta MW of native capacity) of each new option
        cases = [base]
        for opt in new:
            c = opt.spec.native_capacity
            if c <= 0:
                raise ValueError(f"option {opt.name!r} has zero native capacity")
            resources = dict(base.resources)
            if opt.name in resources:
                raise ValueError(f"option {opt.name!r} differs from the base resource of that name")
            resources[opt.name] = opt.spec.scaled(settings.delta / c)
            cases.append(base.with_resources(resources))
        result = ev.evaluate(cases, tag_mri=False)
        for j, opt in enumerate(new, start=1):
            mri = result.difference("ue", 0, j, 1.0 / settings.delta).value
            out[opt.name] = max(mri, 0.0) / k
    return out, report


def compare_requirements(options: Sequence[PhysicalOption], base: BaseCase, requirement: float,
                         settings: EstimatorSettings) -> RequirementComparison:
    """Cheapest option subsets under a native and an MRIC capacity requirement.

    Base-case resources that are not options stay in every mix. The
    native constraint is sum(C) >= requirement; the MRIC constraint is
    sum(rMRI * C) >= rMRI_SYS * requirement. Each chosen mix is then
    scored by its true EUE.
    """
    options = list(options)
    if not options:
        raise ValueError("no options")
    if len(options) > MAX_OPTIONS:
        raise ValueError(f"at most {MAX_OPTIONS} options are supported by exhaustive search")
    names = [o.name for o in options]
    if len(set(names)) != len(names):
        raise ValueError("option names must be unique")
    rmri, report = _option_rmri(base, options, settings)
    rmri_sys = system_demand_rmri(report.entries)
    background = [n for n in base.resources if n not in names]
    bg_native = sum(base.native_capacity(n) for n in background)
    bg_mric = sum(report.entry(n).rmri.value * base.native_capacity(n) for n in background)

    caps = np.array([o.spec.native_capacity for o in options])
    mrics = np.array([rmri[o.name] * o.spec.native_capacity for o in options])
    costs = np.array([o.cost for o in options])
    n = len(options)
    masks = np.arange(1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    native_lhs = bg_native + bits @ caps
    mric_lhs = bg_mric + bits @ mrics
    total_cost = bits @ costs
    tol = 1e-9 * max(1.0, requirement)

    def choose(label, lhs, rhs):
        ok = lhs >= rhs - tol
        if not ok.any():
            raise ValueError(f"no feasible option subset under the {label} constraint")
        idx = np.flatnonzero(ok)
        best = idx[np.argmin(total_cost[idx])]  # first (lowest mask) among ties
        selected = [options[i].name for i in range(n) if bits[best, i]]
        return ConstraintChoice(label, selected, float(total_cost[best]), float(lhs[best]), float(rhs))

    native = choose("native", native_lhs, requirement)
    mric = choose("mric", mric_lhs, rmri_sys * requirement)
    for choice in (native, mric):
        resources = {k: base.resources[k] for k in background}
        for o in options:
            if o.name in choice.selected:
                resources[o.name] = o.spec
        case = base.with_resources(resources)
        m = make_evaluator(case, settings).evaluate([case], tag_mri=False).metrics(0)
        choice.eue = Estimate(m.eue, m.se_eue)
    return RequirementComparison(requirement, rmri_sys, rmri, background, native, mric)


def comparison_to_dict(c: RequirementComparison) -> dict:
    def choice(ch: ConstraintChoice):
        return {"selected": ch.selected, "cost": ch.cost, "lhs": ch.lhs, "rhs": ch.rhs,
                "eue": None if ch.eue is None else {"value": ch.eue.value, "se": ch.eue.se}}

    return {"requirement": c.requirement, "rmri_sys": c.rmri_sys, "option_rmri": c.option_rmri,
            "background": c.background, "native": choice(c.native), "mric": choice(c.mric)}


# --------------------------------------------------------------------------
# level curves


@dataclass
class LevelPoint:
    c1: float
    c2_actual: float | None
    c2_native_linear: float
    c2_mric_linear: float
    flag: str = ""


@dataclass
class LevelCurves:
    resources: tuple[str, str]
    base_point: tuple[float, float]
    eue_base: float
    rmri: tuple[float, float]
    points: list[LevelPoint] = field(default_factory=list)


LEVEL_COLUMNS = ["c1_mw", "c2_actual_mw", "c2_native_linear_mw", "c2_mric_linear_mw"]


def _resized(base: BaseCase, name: str, capacity: float) -> BaseCase:
    spec = base.resources[name]
    resources = dict(base.resources)
    resources[name] = spec.scaled(capacity / spec.native_capacity)
    return base.with_resources(resources)


def level_curves(base: BaseCase, resources: tuple[str, str], c1_values: Sequence[float],
                 settings: EstimatorSettings, rel_tol: float = 1e-6,
                 max_iter: int = 200) -> LevelCurves:
    """Iso-EUE curve C2(C1) through the base case and its two linear approximations.

    The native line has slope -1; the MRIC line has slope -rMRI_1/rMRI_2,
    the tangent of the iso-EUE curve at the base point.
    """
    r1, r2 = resources
    if r1 == r2:
        raise ValueError("two distinct resources are required")
    c1_0, c2_0 = base.native_capacity(r1), base.native_capacity(r2)
    if c1_0 <= 0 or c2_0 <= 0:
        raise ValueError("both resources need positive native capacity")
    report = accredit(base, settings, methods=("mric",), resources=[r1, r2])
    rm1, rm2 = report.entry(r1).rmri.value, report.entry(r2).rmri.value
    if rm2 <= 0:
        raise ValueError(f"{r2!r} has zero rMRI; the MRIC line is vertical")
    ev = make_evaluator(base, settings)
    ue = METRICS.index("ue")

    def eue(c1, c2):
        case = _resized(_resized(base, r1, c1), r2, c2) if c2 > 0 else _drop(_resized(base, r1, c1), r2)
        return float(ev.evaluate([case], tag_mri=False).mean[ue, 0])

    target = float(ev.evaluate([base], tag_mri=False).mean[ue, 0])
    eue_tol = rel_tol * max(target, 1e-12)
    out = LevelCurves((r1, r2), (c1_0, c2_0), target, (rm1, rm2))
    for c1 in c1_values:
        c1 = float(c1)
        native = c2_0 - (c1 - c1_0)
        mric = c2_0 - (rm1 / rm2) * (c1 - c1_0)
        if c1 < 0:
            out.points.append(LevelPoint(c1, None, native, mric, "negative C1"))
            continue
        point = LevelPoint(c1, None, native, mric)
        lo, hi = 0.0, 2.0 * c2_0
        f_lo = eue(c1, lo)
        if f_lo < target - eue_tol:
            point.flag = "bracket failure: EUE below base even without resource 2"
            log.warning("level curve at C1=%g: %s", c1, point.flag)
            out.points.append(point)
            continue
        f_hi = eue(c1, hi)
        expand = 0
        while f_hi > target + eue_tol and expand < 30:
            lo, hi = hi, 2.0 * hi
            f_hi = eue(c1, hi)
            expand += 1
        if f_hi > target + eue_tol:
            point.flag = "bracket failure: EUE above base at the largest resource 2 tried"
            log.warning("level curve at C1=%g: %s", c1, point.flag)
            out.points.append(point)
            continue
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            f = eue(c1, mid)
            if abs(f - target) <= eue_tol or hi - lo <= rel_tol * c2_0:
                break
            if f > target:
                lo = mid
            else:
                hi = mid
        point.c2_actual = mid
        out.points.append(point)
    return out


def _drop(base: BaseCase, name: str) -> BaseCase:
    return base.with_resources({k: v for k, v in base.resources.items() if k != name})


def levels_to_csv(curves: LevelCurves) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LEVEL_COLUMNS)
    for p in curves.points:
        if p.c2_actual is None:
            continue
        writer.writerow([f"{p.c1:.6f}", f"{p.c2_actual:.6f}", f"{p.c2_native_linear:.6f}",
                         f"{p.c2_mric_linear:.6f}"])
    return buf.getvalue()
