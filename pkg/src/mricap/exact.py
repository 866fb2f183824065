"""Exact adequacy metrics by enumerating every outage state.

Only systems whose thermal units fail independently from hour to hour
(``outage_mode="iid"``) can be enumerated. Without storage the hours are
independent given the load profile, so each hour is enumerated on its
own. With storage the whole availability path matters and every path is
enumerated. Either way the work is capped by ``cap`` terms.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from .engine import HOURS_PER_DAY, LOL_TOL, ZERO_MARGIN_EPS, scenario_outcomes
from .stats import METRICS, AdequacyMetrics, Evaluation
from .system import (
    BaseCase,
    IntermittentSpec,
    OutageMode,
    PerfectSpec,
    StorageSpec,
    ThermalSpec,
)

DEFAULT_CAP = 10**7
_PATH_CHUNK = 1 << 14


class EnumerationTooLarge(ValueError):
    pass


def _parts(case: BaseCase):
    """Fixed per-profile margin, enumerated units (icap, for) and storages."""
    fixed = -case.load.demand.copy()
    units = []
    storages = []
    for name, spec in case.resources.items():
        if isinstance(spec, ThermalSpec):
            if spec.outage_mode is not OutageMode.IID:
                raise ValueError(
                    f"exact enumeration needs iid outages; {name!r} uses {spec.outage_mode.value}")
            if spec.icap == 0 or spec.for_rate == 1.0:
                continue
            if spec.for_rate == 0.0:
                fixed += spec.icap
            else:
                units.append((spec.icap, spec.for_rate))
        elif isinstance(spec, IntermittentSpec):
            fixed += spec.profiles
        elif isinstance(spec, PerfectSpec):
            fixed += spec.icap
        elif isinstance(spec, StorageSpec):
            storages.append(spec)
    return fixed, units, storages


def _unit_table(units):
    """All 2^U up/down combinations: (available MW, probability)."""
    U = len(units)
    combos = np.array(list(itertools.product((True, False), repeat=U)), dtype=bool).reshape(2**U, U)
    icap = np.array([u[0] for u in units])
    q = np.array([u[1] for u in units])
    avail = combos.astype(float) @ icap if U else np.zeros(1)
    prob = np.prod(np.where(combos, 1.0 - q, q), axis=1) if U else np.ones(1)
    return avail, prob


def _hourly(fixed: np.ndarray, units, weights) -> np.ndarray:
    avail, prob = _unit_table(units)
    P, T = fixed.shape
    days = -(-T // HOURS_PER_DAY)
    out = np.zeros(len(METRICS))
    for k in range(P):
        if weights[k] == 0:
            continue
        margin = fixed[k][None, :] + avail[:, None]  # (2^U, T)
        ue = prob @ np.maximum(-margin, 0.0).sum(axis=1)
        p_lol = prob @ (margin < -LOL_TOL)
        padded = np.zeros(days * HOURS_PER_DAY)
        padded[:T] = p_lol
        p_day = 1.0 - np.prod(1.0 - padded.reshape(days, HOURS_PER_DAY), axis=1)
        lolh = p_lol.sum()
        out += weights[k] * np.array([ue, p_day.sum(), lolh, lolh])
    return out


def _paths(fixed: np.ndarray, units, storages, weights, tag_mri: bool, eps: float) -> np.ndarray:
    P, T = fixed.shape
    U = len(units)
    icap = np.array([u[0] for u in units])
    q = np.array([u[1] for u in units])
    bits = U * T
    total = 1 << bits
    out = np.zeros(len(METRICS))
    shifts = np.arange(bits, dtype=np.int64)
    for k in range(P):
        if weights[k] == 0:
            continue
        for start in range(0, total, _PATH_CHUNK):
            idx = np.arange(start, min(total, start + _PATH_CHUNK), dtype=np.int64)
            down = ((idx[:, None] >> shifts) & 1).astype(bool).reshape(idx.size, U, T)
            prob = np.prod(np.where(down, q[None, :, None], 1.0 - q[None, :, None]).reshape(idx.size, -1),
                           axis=1)
            margin = fixed[k][None, :] + np.einsum("u,nut->nt", icap, (~down).astype(float))
            res = scenario_outcomes(margin, storages, tag_mri, eps)
            vals = np.stack([res.ue, res.lol_days, res.lol_hours, res.mri_hours])
            out += weights[k] * (vals @ prob)
    return out


def enumeration_terms(case: BaseCase) -> int:
    _, units, storages = _parts(case)
    P = int(np.count_nonzero(case.load.weights))
    T = case.horizon_hours
    if storages:
        return P * 2 ** (len(units) * T)
    return P * T * 2 ** len(units)


class ExactEvaluator:
    """Drop-in replacement for ``ScenarioBank`` returning exact values (zero SE)."""

    def __init__(self, base: BaseCase, cap: int = DEFAULT_CAP, detect_zero_margin: bool = True,
                 eps: float = ZERO_MARGIN_EPS):
        self.base = base
        self.cap = cap
        self.detect_zero_margin = detect_zero_margin
        self.eps = eps
        self.replications = None
        self.seed = None

    def evaluate(self, cases: Sequence[BaseCase], tag_mri: Iterable[int] | bool = True) -> Evaluation:
        cases = list(cases)
        if tag_mri is True:
            tagged = set(range(len(cases)))
        elif tag_mri is False:
            tagged = set()
        else:
            tagged = set(tag_mri)
        mean = np.zeros((len(METRICS), len(cases)))
        for j, case in enumerate(cases):
            terms = enumeration_terms(case)
            if terms > self.cap:
                raise EnumerationTooLarge(
                    f"exact enumeration needs {terms} terms, above the cap of {self.cap}")
            fixed, units, storages = _parts(case)
            w = case.load.weights
            if storages:
                mean[:, j] = _paths(fixed, units, storages, w,
                                    self.detect_zero_margin and j in tagged, self.eps)
            else:
                mean[:, j] = _hourly(fixed, units, w)
        return Evaluation(mean, None, None)


def enumerate_exact(base: BaseCase, cap: int = DEFAULT_CAP) -> AdequacyMetrics:
    """Exact EUE, LOLE, LOLH and expected MRI hours; every SE is zero."""
    return ExactEvaluator(base, cap).evaluate([base]).metrics(0)
