"""Monte Carlo adequacy engine.

Each replication draws one load profile (by weight; intermittent
profiles follow the same index) and an availability path for every
thermal unit, then dispatches storage and accumulates unserved energy
(UE), loss-of-load days and hours, and MRI hours.

Batches of cases that differ only in a few resources are evaluated on
the same draws (common random numbers). Only replications that can
possibly be short of capacity are dispatched: a replication whose
pre-dispatch margin stays non-negative in every hour has no UE whatever
storage does.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import sampling
from .dispatch import DispatchResult, dispatch_storage
from .stats import METRICS, AdequacyMetrics, Evaluation
from .system import (
    BaseCase,
    IntermittentSpec,
    PerfectSpec,
    StorageSpec,
    ThermalSpec,
)

log = logging.getLogger(__name__)

HOURS_PER_DAY = 24
LOL_TOL = 1e-9  # MW; margins below -LOL_TOL are loss-of-load hours
ZERO_MARGIN_EPS = 1e-3  # MW injected when probing zero-margin hours
UE_IMPROVEMENT_TOL = 1e-9  # MWh
DEFAULT_CACHE_BYTES = 768 * 2**20
_PROBE_CHUNK = 16384


class CalibrationError(RuntimeError):
    """Bracket failure or non-monotone response during a bisection search."""


# --------------------------------------------------------------------------
# per-scenario outcomes


def lol_day_counts(lol: np.ndarray) -> np.ndarray:
    """Days (24-hour blocks from hour 0) containing at least one LOL hour."""
    n, T = lol.shape
    days = -(-T // HOURS_PER_DAY)
    padded = np.zeros((n, days * HOURS_PER_DAY), dtype=bool)
    padded[:, :T] = lol
    return padded.reshape(n, days, HOURS_PER_DAY).any(axis=2).sum(axis=1)


def zero_margin_mri_hours(pre: np.ndarray, post: np.ndarray, ue: np.ndarray,
                          storages: Sequence[StorageSpec],
                          eps: float = ZERO_MARGIN_EPS) -> np.ndarray:
    """Mask of zero-margin hours where ``eps`` MW of extra capacity lowers UE.

    Each candidate (scenario, hour) is re-dispatched with the injection
    added to that single hour's pre-dispatch margin.
    """
    mask = np.zeros(post.shape, dtype=bool)
    if not storages:
        return mask
    cand = (np.abs(post) <= LOL_TOL) & (ue[:, None] > UE_IMPROVEMENT_TOL)
    rows, hours = np.nonzero(cand)
    for start in range(0, rows.size, _PROBE_CHUNK):
        r = rows[start:start + _PROBE_CHUNK]
        t = hours[start:start + _PROBE_CHUNK]
        trial = pre[r]
        trial[np.arange(r.size), t] += eps
        probed = dispatch_storage(trial, storages).margins
        ue_trial = np.maximum(-probed, 0.0).sum(axis=1)
        hit = ue[r] - ue_trial > UE_IMPROVEMENT_TOL
        mask[r[hit], t[hit]] = True
    return mask


@dataclass
class Outcomes:
    post: np.ndarray
    flows: np.ndarray
    ue: np.ndarray
    lol_days: np.ndarray
    lol_hours: np.ndarray
    mri_hours: np.ndarray
    mri_mask: np.ndarray


def scenario_outcomes(pre: np.ndarray, storages: Sequence[StorageSpec],
                      tag_mri: bool = True, eps: float = ZERO_MARGIN_EPS) -> Outcomes:
    """Dispatch storage and score each row of pre-dispatch margins ``pre`` (n, T)."""
    if storages:
        res = dispatch_storage(pre, storages)
    else:
        res = DispatchResult(pre.copy(), np.zeros((0,) + pre.shape))
    post = res.margins
    ue = np.maximum(-post, 0.0).sum(axis=1)
    lol = post < -LOL_TOL
    mri = lol.copy()
    if tag_mri and storages:
        mri |= zero_margin_mri_hours(pre, post, ue, storages, eps)
    return Outcomes(post, res.flows, ue, lol_day_counts(lol), lol.sum(axis=1),
                    mri.sum(axis=1), mri)


# --------------------------------------------------------------------------
# case bookkeeping against a reference base case


@dataclass
class _Change:
    name: str
    old: object
    new: object


@dataclass
class _Plan:
    same_load: bool
    changes: list[_Change]
    storages: list[StorageSpec]
    lower_bound: float
    tag_mri: bool


def _max_output(spec) -> float:
    if isinstance(spec, IntermittentSpec):
        return float(spec.profiles.max(initial=0.0))
    if isinstance(spec, (ThermalSpec, PerfectSpec)):
        return spec.icap
    return 0.0


def _change_lower_bound(old, new) -> float:
    """A lower bound on (new - old) available capacity in any hour."""
    if old is None:
        return 0.0
    if new is None:
        return -_max_output(old)
    if type(old) is not type(new):
        return -_max_output(old)
    if isinstance(old, ThermalSpec):
        if sampling.thermal_key("", old) != sampling.thermal_key("", new):
            return -old.icap
        return min(0.0, new.icap - old.icap)
    if isinstance(old, IntermittentSpec):
        return min(0.0, float((new.profiles - old.profiles).min()))
    return min(0.0, new.icap - old.icap)


def _plan(base: BaseCase, case: BaseCase, tag_mri: bool) -> _Plan:
    same_load = case.load is base.load or case.load == base.load
    changes = []
    if same_load:
        for name, spec in base.resources.items():
            if isinstance(spec, StorageSpec):
                continue
            new = case.resources.get(name)
            if new is spec:
                continue
            if isinstance(new, StorageSpec):
                new = None
            changes.append(_Change(name, spec, new))
        for name, spec in case.resources.items():
            if name not in base.resources and not isinstance(spec, StorageSpec):
                changes.append(_Change(name, None, spec))
    lb = sum(_change_lower_bound(c.old, c.new) for c in changes)
    storages = [s for s in case.resources.values() if isinstance(s, StorageSpec)]
    return _Plan(same_load, changes, storages, lb, tag_mri)


# --------------------------------------------------------------------------
# Monte Carlo bank


@dataclass
class _Block:
    index: int
    n_valid: int
    profiles: np.ndarray
    states: dict = field(default_factory=dict)
    ref_margin: np.ndarray | None = None
    ref_min: np.ndarray | None = None


class ScenarioBank:
    """Monte Carlo replications of one base case, reusable across many cases.

    ``evaluate`` scores any batch of cases on identical draws. Cases may
    rescale, remove or add resources relative to ``base``; thermal draws
    are keyed by resource name and outage parameters, never by capacity.
    Results are independent of ``workers``: blocks of replications are
    reduced in block order.
    """

    def __init__(self, base: BaseCase, replications: int, seed: int, workers: int = 1,
                 detect_zero_margin: bool = True, eps: float = ZERO_MARGIN_EPS,
                 cache_bytes: int = DEFAULT_CACHE_BYTES):
        if replications < 1:
            raise ValueError("replications must be >= 1")
        self.base = base
        self.replications = int(replications)
        self.seed = int(seed)
        self.workers = max(1, int(workers))
        self.detect_zero_margin = detect_zero_margin
        self.eps = eps
        self.n_blocks = sampling.n_blocks(self.replications)
        T = base.horizon_hours
        n_thermal = sum(isinstance(s, ThermalSpec) for s in base.resources.values())
        per_block = sampling.BLOCK_SIZE * T * (n_thermal + 9)
        self._cache_enabled = per_block * self.n_blocks <= cache_bytes
        self._cache: dict[int, _Block] = {}

    # draws ------------------------------------------------------------

    def _block(self, b: int) -> _Block:
        cached = self._cache.get(b)
        if cached is not None:
            return cached
        n_valid = min(sampling.BLOCK_SIZE, self.replications - b * sampling.BLOCK_SIZE)
        block = _Block(b, n_valid, sampling.sample_profile_indices(self.base.load, self.seed, b))
        block.ref_margin = self._full_margin(self.base, block)
        block.ref_min = block.ref_margin.min(axis=1)
        if self._cache_enabled:
            self._cache[b] = block
        return block

    def _states(self, block: _Block, name: str, spec: ThermalSpec) -> np.ndarray:
        key = sampling.thermal_key(name, spec)
        states = block.states.get(key)
        if states is None:
            states = sampling.sample_thermal_states(
                name, spec, self.seed, block.index, self.base.horizon_hours)
            block.states[key] = states
        return states

    def _availability(self, block: _Block, name: str, spec, rows):
        if isinstance(spec, ThermalSpec):
            states = self._states(block, name, spec)
            return spec.icap * states[rows]
        if isinstance(spec, IntermittentSpec):
            return spec.profiles[block.profiles[rows]]
        if isinstance(spec, PerfectSpec):
            return spec.icap
        return 0.0

    def _full_margin(self, case: BaseCase, block: _Block) -> np.ndarray:
        fixed = -case.load.demand.copy()
        for spec in case.resources.values():
            if isinstance(spec, IntermittentSpec):
                fixed += spec.profiles
            elif isinstance(spec, PerfectSpec):
                fixed += spec.icap
        margin = fixed[block.profiles]
        for name, spec in case.resources.items():
            if isinstance(spec, ThermalSpec) and spec.icap != 0:
                margin += spec.icap * self._states(block, name, spec)
        return margin

    # evaluation ---------------------------------------------------------

    def _run_block(self, b: int, plans: list[_Plan], cases: list[BaseCase]):
        block = self._block(b)
        K = len(plans)
        X = np.zeros((block.n_valid, len(METRICS) * K))
        for k, (plan, case) in enumerate(zip(plans, cases)):
            if plan.same_load:
                rows = np.flatnonzero(block.ref_min[:block.n_valid] + plan.lower_bound < 0)
                if rows.size == 0:
                    continue
                m = block.ref_margin[rows]
                for ch in plan.changes:
                    if ch.new is not None:
                        m += self._availability(block, ch.name, ch.new, rows)
                    if ch.old is not None:
                        m -= self._availability(block, ch.name, ch.old, rows)
            else:
                m = self._full_margin(case, block)[:block.n_valid]
                rows = np.arange(block.n_valid)
            short = m.min(axis=1) < 0
            if not short.any():
                continue
            rows, m = rows[short], m[short]
            out = scenario_outcomes(m, plan.storages, plan.tag_mri and self.detect_zero_margin,
                                    self.eps)
            for j, values in enumerate((out.ue, out.lol_days, out.lol_hours, out.mri_hours)):
                X[rows, j * K + k] = values
        if not self._cache_enabled:
            block.states.clear()
        nz = X[np.any(X != 0, axis=1)]
        return nz.sum(axis=0), nz.T @ nz

    def evaluate(self, cases: Sequence[BaseCase], tag_mri: Iterable[int] | bool = True) -> Evaluation:
        """Score ``cases`` on this bank's draws.

        ``tag_mri`` selects the cases whose zero-margin MRI hours are
        probed (True for all); untagged cases report LOL hours as MRI hours.
        """
        cases = list(cases)
        if tag_mri is True:
            tagged = set(range(len(cases)))
        elif tag_mri is False:
            tagged = set()
        else:
            tagged = set(tag_mri)
        plans = [_plan(self.base, c, k in tagged) for k, c in enumerate(cases)]
        M = len(METRICS) * len(cases)
        sums = np.zeros(M)
        gram = np.zeros((M, M))
        blocks = range(self.n_blocks)
        if self.workers == 1:
            results = (self._run_block(b, plans, cases) for b in blocks)
            for s, g in results:
                sums += s
                gram += g
        else:
            with ThreadPoolExecutor(self.workers) as pool:
                for s, g in pool.map(lambda b: self._run_block(b, plans, cases), blocks):
                    sums += s
                    gram += g
        return Evaluation.from_moments(sums.reshape(len(METRICS), len(cases)), gram,
                                       self.replications, self.seed)


def estimate_metrics(base: BaseCase, replications: int, seed: int, workers: int = 1,
                     detect_zero_margin: bool = True) -> AdequacyMetrics:
    """EUE, LOLE, LOLH and expected MRI hours with Monte Carlo standard errors."""
    bank = ScenarioBank(base, replications, seed, workers, detect_zero_margin, cache_bytes=0)
    return bank.evaluate([base]).metrics(0)


# --------------------------------------------------------------------------
# single scenarios


@dataclass
class ScenarioOutcome:
    profile_index: int
    load: np.ndarray
    available: dict[str, np.ndarray]
    pre_margin: np.ndarray
    storage_flow: np.ndarray  # net discharge of all storage, MW
    margin: np.ndarray  # post-dispatch
    ue: np.ndarray
    total_ue: float
    lol_days: int
    mri_hours: frozenset

    @property
    def available_total(self) -> np.ndarray:
        return self.pre_margin + self.load


def simulate_scenario(base: BaseCase, profile_index: int,
                      outage_draws: Mapping[str, Sequence[bool]] | None = None,
                      detect_zero_margin: bool = True, eps: float = ZERO_MARGIN_EPS) -> ScenarioOutcome:
    """Score one scenario given the load profile index and thermal availability paths."""
    T = base.horizon_hours
    draws = dict(outage_draws or {})
    available = {}
    for name, spec in base.resources.items():
        if isinstance(spec, ThermalSpec):
            if name not in draws:
                raise ValueError(f"missing outage draws for thermal resource {name!r}")
            path = np.asarray(draws[name], dtype=bool)
            if path.shape != (T,):
                raise ValueError(f"draw length mismatch for {name!r}: expected {T}, got {path.shape}")
            available[name] = spec.icap * path
        elif isinstance(spec, IntermittentSpec):
            available[name] = spec.profiles[profile_index].copy()
        elif isinstance(spec, PerfectSpec):
            available[name] = np.full(T, spec.icap)
    load = base.load.demand[profile_index].copy()
    pre = sum(available.values(), np.zeros(T)) - load
    storages = [s for s in base.resources.values() if isinstance(s, StorageSpec)]
    out = scenario_outcomes(pre[None, :], storages, detect_zero_margin, eps)
    return ScenarioOutcome(
        profile_index=profile_index,
        load=load,
        available=available,
        pre_margin=pre,
        storage_flow=out.flows.sum(axis=0)[0] if storages else np.zeros(T),
        margin=out.post[0],
        ue=np.maximum(-out.post[0], 0.0),
        total_ue=float(out.ue[0]),
        lol_days=int(out.lol_days[0]),
        mri_hours=frozenset(np.flatnonzero(out.mri_mask[0]).tolist()),
    )


def tag_mri_hours(outcome: ScenarioOutcome, base: BaseCase, eps: float = ZERO_MARGIN_EPS) -> set[int]:
    """LOL hours plus zero-margin hours where ``eps`` MW would reduce the scenario's UE."""
    storages = [s for s in base.resources.values() if isinstance(s, StorageSpec)]
    lol = outcome.margin < -LOL_TOL
    extra = zero_margin_mri_hours(outcome.pre_margin[None, :], outcome.margin[None, :],
                                  np.array([outcome.total_ue]), storages, eps)[0]
    return set(np.flatnonzero(lol | extra).tolist())


TRACE_COLUMNS = ["hour", "load", "available_total", "storage_flow", "margin", "ue", "is_mri_hour"]


def trace_to_csv(outcome: ScenarioOutcome) -> str:
    """Per-hour CSV trace of one scenario."""
    lines = [",".join(TRACE_COLUMNS)]
    for t in range(outcome.load.size):
        lines.append(f"{t},{outcome.load[t]:.6f},{outcome.available_total[t]:.6f},"
                     f"{outcome.storage_flow[t]:.6f},{outcome.margin[t]:.6f},{outcome.ue[t]:.6f},"
                     f"{int(t in outcome.mri_hours)}")
    return "\n".join(lines) + "\n"


def write_trace(outcome: ScenarioOutcome, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trace_to_csv(outcome))


# --------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    base: BaseCase
    slack_capacity: float
    lole: float
    se_lole: float
    iterations: int


def calibration_search(base: BaseCase, slack: str, target_lole: float, tol: float,
                       replications: int, seed: int, workers: int = 1,
                       bracket: tuple[float, float] | None = None,
                       max_iter: int = 60) -> CalibrationResult:
    """Bisect the capacity of a perfect ``slack`` resource until LOLE is within ``tol`` of target."""
    spec = base.resources.get(slack)
    if spec is None:
        raise KeyError(f"unknown resource {slack!r}")
    if not isinstance(spec, PerfectSpec):
        raise ValueError(f"slack resource {slack!r} must be of perfect type")
    if target_lole <= 0:
        raise CalibrationError("target LOLE must be positive; zero is not reachable by a finite bracket")
    bank = ScenarioBank(base, replications, seed, workers, detect_zero_margin=False)

    def case_at(x: float) -> BaseCase:
        resources = dict(base.resources)
        resources[slack] = PerfectSpec(x)
        return base.with_resources(resources)

    def lole_at(x: float):
        m = bank.evaluate([case_at(x)], tag_mri=False).metrics(0)
        return m.lole, m.se_lole

    current, se = lole_at(spec.icap)
    if abs(current - target_lole) <= tol:
        return CalibrationResult(base, spec.icap, current, se, 0)
    lo, hi = bracket if bracket is not None else (0.0, 2.0 * max(spec.icap, 1.0))
    f_lo, _ = lole_at(lo)
    f_hi, _ = lole_at(hi)
    if not f_lo > target_lole > f_hi:
        raise CalibrationError(
            f"bracket [{lo}, {hi}] does not straddle target LOLE {target_lole} "
            f"(LOLE {f_lo:.6g} .. {f_hi:.6g})")
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid, se_mid = lole_at(mid)
        if f_mid > f_lo + 2 * se_mid or f_mid < f_hi - 2 * se_mid:
            raise CalibrationError(
                f"non-monotone LOLE at slack {mid}: {f_mid} outside [{f_hi}, {f_lo}]")
        if abs(f_mid - target_lole) <= tol:
            return CalibrationResult(case_at(mid), mid, f_mid, se_mid, it)
        if f_mid > target_lole:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    raise CalibrationError(
        f"no slack value within tolerance after {max_iter} iterations; LOLE jumps from "
        f"{f_lo:.6g} to {f_hi:.6g} between slack {lo:.6g} and {hi:.6g} MW (step-shaped response)")


def calibrate_to_lole(base: BaseCase, slack_resource: str, target_lole: float, tol: float,
                      replications: int, seed: int, **kwargs) -> BaseCase:
    return calibration_search(base, slack_resource, target_lole, tol, replications, seed,
                              **kwargs).base
