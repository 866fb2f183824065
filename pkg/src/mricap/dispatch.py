"""Perfect-foresight, lossless storage dispatch against hourly margins."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .system import StorageSpec


@dataclass
class DispatchResult:
    margins: np.ndarray  # post-dispatch, same shape as the input
    flows: np.ndarray  # (n_storage, *shape): discharge minus charge, MW


def dispatch_order(storages: Sequence[StorageSpec]) -> list[int]:
    """Longest energy/power duration first; ties keep input order."""
    return sorted(range(len(storages)), key=lambda i: -storages[i].duration_hours)


def dispatch_storage(margins, storages: Sequence[StorageSpec],
                     initial_soc: Sequence[float] | None = None) -> DispatchResult:
    """Dispatch storage to minimize unserved energy.

    ``margins`` is the pre-dispatch surplus (MW) per hour, shape ``(T,)``
    or ``(n, T)`` for ``n`` independent scenarios. Each storage is run
    chronologically: it charges from positive margin (up to its charge
    limit and headroom) and discharges into every shortfall hour as much
    as power and stored energy allow. Without losses this greedy policy
    attains the minimum unserved energy for a single storage; several
    storages are dispatched one after another on the residual margins.
    ``initial_soc`` overrides the storages' initial state of charge (MWh).
    """
    m = np.array(margins, dtype=float)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[None, :]
    flows = np.zeros((len(storages),) + m.shape)
    for i in dispatch_order(storages):
        spec = storages[i]
        soc0 = spec.initial_soc_fraction * spec.energy_limit if initial_soc is None else initial_soc[i]
        soc0 = min(max(soc0, 0.0), spec.energy_limit)
        flows[i] = _dispatch_kernel(m, spec.discharge_cap, spec.charge_cap, spec.energy_limit, soc0)
    if squeeze:
        return DispatchResult(m[0], flows[:, 0])
    return DispatchResult(m, flows)


@njit(cache=True)
def _dispatch_kernel(m, p_dis, p_ch, cap, soc0):
    """Compiled greedy dispatch of one storage; updates ``m`` in place, returns net flows."""
    n, T = m.shape
    flow = np.zeros((n, T))
    for r in range(n):
        soc = soc0
        for t in range(T):
            x = m[r, t]
            if x < 0.0:
                net = min(-x, p_dis, soc)
            elif x > 0.0:
                net = -min(x, p_ch, cap - soc)
            else:
                continue
            if net == 0.0:
                continue
            soc -= net
            m[r, t] = x + net
            flow[r, t] = net
    return flow


def dispatch_one_reference(m: np.ndarray, spec: StorageSpec, soc0: float) -> np.ndarray:
    """Vectorized (across scenarios) version of the compiled kernel, kept for cross-checks."""
    n, T = m.shape
    flow = np.zeros((n, T))
    p_dis, p_ch, cap = spec.discharge_cap, spec.charge_cap, spec.energy_limit
    if p_dis == 0 and p_ch == 0:
        return flow
    soc = np.full(n, min(max(soc0, 0.0), cap))
    for t in range(T):
        col = m[:, t]
        short = np.maximum(-col, 0.0)
        dis = np.minimum(np.minimum(short, p_dis), soc)
        room = np.maximum(col, 0.0)
        ch = np.minimum(np.minimum(room, p_ch), cap - soc)
        net = dis - ch
        soc -= net
        m[:, t] = col + net
        flow[:, t] = net
    return flow
