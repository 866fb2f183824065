"""Capacity demand curves in native-capacity and MRIC coordinates."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accreditation import AccreditationEntry, EstimatorSettings, make_evaluator
from .stats import METRICS, Estimate, isotonic_nonincreasing
from .system import BaseCase, scale_system

log = logging.getLogger(__name__)

CSV_HEADER = ["quantity_mw", "price_per_mw", "space", "rmri_sys"]
SPACES = ("native", "mric")


class CurveError(ValueError):
    pass


@dataclass
class DemandCurve:
    """Piecewise-linear demand curve through ``(quantity, price)`` points."""

    quantities: np.ndarray  # MW
    prices: np.ndarray  # $/MW-period
    space: str = "native"
    voll: float | None = None
    rmri_sys: float | None = None
    price_se: np.ndarray | None = None
    repaired: bool = False
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.quantities = np.asarray(self.quantities, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        if self.space not in SPACES:
            raise CurveError(f"unknown coordinate space {self.space!r}")
        if self.quantities.ndim != 1 or self.quantities.shape != self.prices.shape:
            raise CurveError("quantities and prices must be 1-D of equal length")
        if self.quantities.size == 0:
            raise CurveError("a demand curve needs at least one point")
        if np.any(np.diff(self.quantities) <= 0):
            raise CurveError("quantities must be strictly increasing")
        if np.any(np.diff(self.prices) > 0):
            raise CurveError("prices must be nonincreasing")
        if np.any(self.prices < 0):
            raise CurveError("prices must be >= 0")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.quantities.tolist(), self.prices.tolist()))

    def price_at(self, q: float) -> float:
        """Willingness to pay for the marginal MW at quantity ``q``.

        Flat at the first price left of the first point, linear between
        points, zero beyond the last point.
        """
        qs, ps = self.quantities, self.prices
        if q < qs[0]:
            return float(ps[0])
        if q > qs[-1]:
            return 0.0
        return float(np.interp(q, qs, ps))

    def integral(self, q_from: float | None = None, q_to: float | None = None) -> float:
        """Area under the curve between two quantities (default: first to last point)."""
        qs, ps = self.quantities, self.prices
        a = qs[0] if q_from is None else q_from
        b = qs[-1] if q_to is None else q_to
        if b < a:
            return -self.integral(b, a)
        total = 0.0
        if a < qs[0]:
            total += ps[0] * (min(b, qs[0]) - a)
            a = min(b, qs[0])
        lo, hi = max(a, qs[0]), min(b, qs[-1])
        if hi > lo:
            inner = (qs > lo) & (qs < hi)
            xq = np.concatenate([[lo], qs[inner], [hi]])
            xp = np.interp(xq, qs, ps)
            total += float(np.sum(np.diff(xq) * (xp[1:] + xp[:-1]) * 0.5))
        return total


# --------------------------------------------------------------------------
# native curve from a proportional sweep


def native_demand_curve(base: BaseCase, sweep: Sequence[float], settings: EstimatorSettings,
                        voll: float | None = None) -> DemandCurve:
    """Price VOLL * (-dEUE/dC_SYS) along a proportional resize of the whole mix.

    For each scale factor ``s`` every resource is multiplied by ``s``;
    the derivative uses a step of 1 MW of total native capacity (the
    accreditation ``delta``) in the same direction.
    """
    sweep = [float(s) for s in sweep]
    if not sweep:
        raise CurveError("empty sweep")
    if any(s <= 0 for s in sweep):
        raise CurveError("scale factors must be > 0")
    if any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise CurveError("scale factors must be strictly increasing")
    voll = base.voll if voll is None else voll
    if not voll > 0:
        raise CurveError("VOLL must be > 0")
    total = base.total_native_capacity()
    if total <= 0:
        raise CurveError("base case has no capacity")
    step = settings.delta / total  # scale increment worth `delta` MW

    cases, pairs = [], []
    for s in sweep:
        plus = len(cases)
        cases.append(scale_system(base, s + step))
        if settings.two_sided:
            minus = len(cases)
            cases.append(scale_system(base, s - step))
            pairs.append((plus, minus, 2 * settings.delta))
        else:
            minus = len(cases)
            cases.append(scale_system(base, s))
            pairs.append((plus, minus, settings.delta))
    ev = make_evaluator(base, settings).evaluate(cases, tag_mri=False)
    ue = METRICS.index("ue")

    def weights(plus, minus, h):
        w = ev.weights()
        w[ue, minus] += voll / h
        w[ue, plus] -= voll / h
        return w

    ws = [weights(*p) for p in pairs]
    est = [ev.estimate(w) for w in ws]
    raw = np.array([e.value for e in est])
    se = np.array([e.se for e in est])
    quantities = np.array(sweep) * total
    prices, repaired, notes = _monotone(raw, ws, ev, quantities)
    return DemandCurve(quantities, prices, "native", voll, None, se, repaired, notes)


def _monotone(raw: np.ndarray, ws, ev, quantities):
    notes = []
    prices = raw.copy()
    if np.any(prices < 0):
        notes.append("negative prices from estimator noise clamped to 0")
        log.warning(notes[-1])
    # rises at rounding level are ties, not estimator noise
    noise = 1e-9 * max(float(np.max(np.abs(prices))), 1.0)
    rises = np.flatnonzero(np.diff(prices) > noise)
    for j in rises:
        diff = ev.estimate(ws[j + 1] - ws[j])
        if diff.value > 2 * diff.se:
            raise CurveError(
                f"price rises from {prices[j]:.6g} to {prices[j + 1]:.6g} between "
                f"{quantities[j]:.6g} and {quantities[j + 1]:.6g} MW, beyond 2 SE ({diff.se:.3g})")
    repaired = bool(rises.size)
    prices = np.minimum.accumulate(prices) if not repaired else prices
    if repaired:
        prices = isotonic_nonincreasing(prices)
        notes.append(f"{rises.size} price increase(s) within 2 SE repaired by isotonic projection")
        log.warning(notes[-1])
    return np.maximum(prices, 0.0), repaired, notes


def system_mri(base: BaseCase, settings: EstimatorSettings) -> Estimate:
    """-dEUE/dC_SYS along the base mix direction (hours/period)."""
    total = base.total_native_capacity()
    step = settings.delta / total
    cases = [base, scale_system(base, 1.0 + step)]
    ev = make_evaluator(base, settings).evaluate(cases, tag_mri=False)
    return ev.difference("ue", 0, 1, 1.0 / settings.delta)


# --------------------------------------------------------------------------
# MRIC coordinates


def system_demand_rmri(entries: Sequence[AccreditationEntry]) -> float:
    """Native-capacity-weighted average rMRI of the base-case mix."""
    rows = [e for e in entries if e.type not in ("group", "sum")]
    if not rows:
        raise ValueError("no accreditation entries")
    total = sum(e.icap for e in rows)
    if total <= 0:
        raise ValueError("entries have no native capacity")
    missing = [e.name for e in rows if e.rmri is None and e.icap > 0]
    if missing:
        raise ValueError(f"entries without rMRI: {missing}")
    return sum(e.rmri.value * e.icap for e in rows if e.icap > 0) / total


def to_mric_curve(native: DemandCurve, rmri_sys: float) -> DemandCurve:
    """Scale quantities by rMRI_SYS and prices by its reciprocal."""
    if native.space != "native":
        raise CurveError("expected a native-capacity curve")
    if not rmri_sys > 0:
        raise CurveError("rmri_sys must be > 0")
    if rmri_sys > 1:
        warnings.warn(f"rmri_sys {rmri_sys} > 1", stacklevel=2)
    se = None if native.price_se is None else native.price_se / rmri_sys
    return DemandCurve(native.quantities * rmri_sys, native.prices / rmri_sys, "mric", native.voll,
                       rmri_sys, se, native.repaired, list(native.notes))


def to_native_curve(curve: DemandCurve) -> DemandCurve:
    """Inverse of ``to_mric_curve``."""
    if curve.space != "mric" or curve.rmri_sys is None:
        raise CurveError("expected an MRIC curve carrying its rmri_sys")
    r = curve.rmri_sys
    se = None if curve.price_se is None else curve.price_se * r
    return DemandCurve(curve.quantities / r, curve.prices * r, "native", curve.voll, None, se,
                       curve.repaired, list(curve.notes))


# --------------------------------------------------------------------------
# CSV


def curve_to_csv(curve: DemandCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    r = "" if curve.rmri_sys is None else f"{curve.rmri_sys:.6f}"
    for q, p in zip(curve.quantities, curve.prices):
        writer.writerow([f"{q:.6f}", f"{p:.6f}", curve.space, r])
    return buf.getvalue()


def curve_from_csv(text: str) -> DemandCurve:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != CSV_HEADER:
        raise CurveError(f"unexpected curve header {header}")
    qs, ps, spaces, rs = [], [], set(), set()
    for row in reader:
        if len(row) != 4:
            raise CurveError(f"malformed curve row {row}")
        qs.append(float(row[0]))
        ps.append(float(row[1]))
        spaces.add(row[2])
        rs.add(row[3])
    if len(spaces) != 1 or len(rs) != 1:
        raise CurveError("mixed coordinate spaces in one curve file")
    r = rs.pop()
    return DemandCurve(np.array(qs), np.array(ps), spaces.pop(), None, float(r) if r else None)
