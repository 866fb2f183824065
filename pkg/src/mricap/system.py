"""System description: resources, load model, base case and perturbation rules.

Units are fixed throughout the package: MW, MWh, hours and $/MWh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Union

import numpy as np

WEIGHT_TOL = 1e-9
DEFAULT_MTTR_HOURS = 24.0


class ConfigError(ValueError):
    """Raised for malformed or invalid system descriptions."""


class OutageMode(str, Enum):
    MARKOV = "markov"
    IID = "iid"


def _frozen_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ConfigError(f"{name}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ThermalSpec:
    """Two-state unit: full ``icap`` when up, zero when on forced outage."""

    icap: float
    for_rate: float
    mttr_hours: float = DEFAULT_MTTR_HOURS
    outage_mode: OutageMode = OutageMode.MARKOV

    def __post_init__(self):
        if not self.icap >= 0:
            raise ConfigError(f"thermal icap must be >= 0, got {self.icap}")
        if not 0.0 <= self.for_rate <= 1.0:
            raise ConfigError(f"thermal for_rate must be in [0, 1], got {self.for_rate}")
        if not self.mttr_hours > 0:
            raise ConfigError(f"thermal mttr_hours must be > 0, got {self.mttr_hours}")
        object.__setattr__(self, "outage_mode", OutageMode(self.outage_mode))

    @property
    def native_capacity(self) -> float:
        return self.icap

    def transition_probabilities(self) -> tuple[float, float]:
        """Hourly (failure, repair) probabilities whose steady state matches ``for_rate``."""
        mu = min(1.0, 1.0 / self.mttr_hours)
        if self.for_rate == 0.0:
            return 0.0, mu
        if self.for_rate == 1.0:
            return 1.0, 0.0
        lam = mu * self.for_rate / (1.0 - self.for_rate)
        if lam > 1.0:
            # keep the steady state; repairs must speed up instead
            lam = 1.0
            mu = (1.0 - self.for_rate) / self.for_rate
        return lam, mu

    def scaled(self, factor: float) -> "ThermalSpec":
        return replace(self, icap=self.icap * factor)


@dataclass(frozen=True, eq=False)
class IntermittentSpec:
    """Hourly output profiles, one per load profile (weather-paired)."""

    icap: float
    profiles: np.ndarray  # (n_profiles, T) MW

    def __post_init__(self):
        arr = _frozen_array(self.profiles, "intermittent profiles", 2)
        if np.any(arr < 0):
            raise ConfigError("intermittent profiles must be >= 0")
        if not self.icap >= 0:
            raise ConfigError(f"intermittent icap must be >= 0, got {self.icap}")
        object.__setattr__(self, "profiles", arr)

    @property
    def native_capacity(self) -> float:
        return self.icap

    def scaled(self, factor: float) -> "IntermittentSpec":
        return IntermittentSpec(self.icap * factor, self.profiles * factor)

    def __eq__(self, other):
        if not isinstance(other, IntermittentSpec):
            return NotImplemented
        return self.icap == other.icap and np.array_equal(self.profiles, other.profiles)

    __hash__ = None


@dataclass(frozen=True)
class StorageSpec:
    """Lossless, outage-free storage with power and energy limits."""

    discharge_cap: float
    charge_cap: float
    energy_limit: float
    initial_soc_fraction: float = 1.0

    def __post_init__(self):
        if self.discharge_cap < 0 or self.charge_cap < 0 or self.energy_limit < 0:
            raise ConfigError("storage limits must be non-negative")
        if not 0.0 <= self.initial_soc_fraction <= 1.0:
            raise ConfigError("storage initial_soc_fraction must be in [0, 1]")

    @property
    def native_capacity(self) -> float:
        return self.discharge_cap

    @property
    def duration_hours(self) -> float:
        return self.energy_limit / self.discharge_cap if self.discharge_cap > 0 else np.inf

    def scaled(self, factor: float) -> "StorageSpec":
        return self.scaled_parts(factor, factor)

    def scaled_parts(self, power_factor: float, energy_factor: float) -> "StorageSpec":
        return replace(
            self,
            discharge_cap=self.discharge_cap * power_factor,
            charge_cap=self.charge_cap * power_factor,
            energy_limit=self.energy_limit * energy_factor,
        )


@dataclass(frozen=True)
class PerfectSpec:
    """Capacity that is available in full in every hour."""

    icap: float

    def __post_init__(self):
        if not self.icap >= 0:
            raise ConfigError(f"perfect icap must be >= 0, got {self.icap}")

    @property
    def native_capacity(self) -> float:
        return self.icap

    def scaled(self, factor: float) -> "PerfectSpec":
        return PerfectSpec(self.icap * factor)


ResourceSpec = Union[ThermalSpec, IntermittentSpec, StorageSpec, PerfectSpec]

_TYPE_NAMES = {
    ThermalSpec: "thermal",
    IntermittentSpec: "intermittent",
    StorageSpec: "storage",
    PerfectSpec: "perfect",
}


def resource_type(spec: ResourceSpec) -> str:
    return _TYPE_NAMES[type(spec)]


@dataclass(frozen=True, eq=False)
class LoadModel:
    weights: np.ndarray  # (n_profiles,)
    demand: np.ndarray  # (n_profiles, T)

    def __post_init__(self):
        w = _frozen_array(self.weights, "load weights", 1)
        d = _frozen_array(self.demand, "load demand", 2)
        if d.shape[0] != w.shape[0]:
            raise ConfigError("one weight per load profile is required")
        if w.size == 0:
            raise ConfigError("at least one load profile is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"load_profiles: weights not normalized (sum={w.sum():.12g})")
        if np.any(d < 0):
            raise ConfigError("load_profiles: demand must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "demand", d)

    @property
    def n_profiles(self) -> int:
        return self.demand.shape[0]

    @property
    def horizon_hours(self) -> int:
        return self.demand.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LoadModel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.demand, other.demand)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BaseCase:
    """Load plus resource set at which adequacy and its derivatives are evaluated."""

    load: LoadModel
    resources: Mapping[str, ResourceSpec]
    voll: float = 0.0

    def __post_init__(self):
        if not self.resources:
            raise ConfigError("at least one resource is required")
        T, P = self.load.horizon_hours, self.load.n_profiles
        for name, spec in self.resources.items():
            if isinstance(spec, IntermittentSpec) and spec.profiles.shape != (P, T):
                raise ConfigError(
                    f"resources.{name}.profiles: expected shape {(P, T)}, got {spec.profiles.shape}"
                )
        object.__setattr__(self, "resources", MappingProxyType(dict(self.resources)))

    @property
    def horizon_hours(self) -> int:
        return self.load.horizon_hours

    def names(self) -> list[str]:
        return list(self.resources)

    def native_capacity(self, name: str) -> float:
        return self.resources[_existing(self, name)].native_capacity

    def total_native_capacity(self) -> float:
        return float(sum(s.native_capacity for s in self.resources.values()))

    def with_resources(self, resources: Mapping[str, ResourceSpec]) -> "BaseCase":
        return BaseCase(self.load, resources, self.voll)

    def __eq__(self, other):
        if not isinstance(other, BaseCase):
            return NotImplemented
        return (
            self.voll == other.voll
            and self.load == other.load
            and list(self.resources) == list(other.resources)
            and all(self.resources[k] == other.resources[k] for k in self.resources)
        )

    __hash__ = None


def _existing(base: BaseCase, name: str) -> str:
    if name not in base.resources:
        raise KeyError(f"unknown resource {name!r}")
    return name


def scale_resource(base: BaseCase, name: str, factor: float) -> BaseCase:
    """Scale every capacity-like quantity of one resource by ``factor``."""
    _existing(base, name)
    if factor < 0:
        raise ValueError(f"negative resulting capacity for {name!r}")
    resources = dict(base.resources)
    resources[name] = resources[name].scaled(factor)
    return base.with_resources(resources)


def perturb_resource(base: BaseCase, name: str, delta: float) -> BaseCase:
    """Change a resource's native capacity by ``delta`` MW, proportionally.

    Thermal state capacities, every hourly intermittent output and the
    storage power/energy limits all move by the factor ``(C + delta) / C``.
    """
    capacity = base.native_capacity(name)
    if delta == 0:
        return base
    if capacity == 0:
        raise ValueError(f"resource {name!r} has zero native capacity; scaling undefined")
    if capacity + delta < 0:
        raise ValueError(f"negative resulting capacity for {name!r}: {capacity} + {delta}")
    return scale_resource(base, name, (capacity + delta) / capacity)


def scale_system(base: BaseCase, factor: float) -> BaseCase:
    """Scale all resources proportionally (the base-case mix direction)."""
    if factor < 0:
        raise ValueError("scale factor must be non-negative")
    return base.with_resources({k: v.scaled(factor) for k, v in base.resources.items()})


@dataclass(frozen=True)
class ResourceGroup:
    """A virtual resource whose size is the summed native capacity of its members."""

    members: tuple[str, ...]
    capacity: float

    def perturb(self, base: BaseCase, delta: float) -> BaseCase:
        if delta == 0:
            return base
        if self.capacity == 0:
            raise ValueError("group has zero native capacity; scaling undefined")
        if self.capacity + delta < 0:
            raise ValueError("negative resulting group capacity")
        factor = (self.capacity + delta) / self.capacity
        resources = dict(base.resources)
        for name in self.members:
            resources[name] = resources[name].scaled(factor)
        return base.with_resources(resources)


def group_view(base: BaseCase, members: Iterable[str]) -> ResourceGroup:
    members = tuple(members)
    if not members:
        raise ValueError("empty group")
    if len(set(members)) != len(members):
        raise ValueError("duplicate names in group")
    for name in members:
        _existing(base, name)
    return ResourceGroup(members, float(sum(base.native_capacity(m) for m in members)))


# --------------------------------------------------------------------------
# config documents

_PARAMS = {
    "thermal": ({"icap", "for_rate"}, {"mttr_hours", "outage_mode"}),
    "intermittent": ({"icap"}, {"profiles", "profile"}),
    "storage": ({"discharge_cap", "charge_cap", "energy_limit"}, {"initial_soc_fraction"}),
    "perfect": ({"icap"}, set()),
}


def _check_keys(obj: Any, required: set, optional: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise ConfigError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _spec_from_dict(name: str, entry: Any, n_profiles: int, horizon: int) -> ResourceSpec:
    where = f"resources.{name}"
    _check_keys(entry, {"type", "parameters"}, set(), where)
    kind = entry["type"]
    if kind not in _PARAMS:
        raise ConfigError(f"{where}.type: unknown resource type {kind!r}")
    params = entry["parameters"]
    required, optional = _PARAMS[kind]
    _check_keys(params, required, optional, f"{where}.parameters")
    num = {k: _number(v, f"{where}.parameters.{k}") for k, v in params.items()
           if k not in ("profiles", "profile", "outage_mode")}
    try:
        if kind == "thermal":
            # zero-size units only arise internally (removal keeps the outage stream)
            if not num["icap"] > 0:
                raise ConfigError(f"{where}.parameters.icap: must be > 0")
            mode = params.get("outage_mode", "markov")
            if mode not in ("markov", "iid"):
                raise ConfigError(f"{where}.parameters.outage_mode: must be 'markov' or 'iid'")
            return ThermalSpec(num["icap"], num["for_rate"],
                               num.get("mttr_hours", DEFAULT_MTTR_HOURS), OutageMode(mode))
        if kind == "intermittent":
            if ("profiles" in params) == ("profile" in params):
                raise ConfigError(f"{where}.parameters: give exactly one of 'profile' or 'profiles'")
            if "profile" in params:
                one = _frozen_array(params["profile"], f"{where}.parameters.profile", 1)
                profiles = np.tile(one, (n_profiles, 1))
            else:
                profiles = _frozen_array(params["profiles"], f"{where}.parameters.profiles", 2)
                if profiles.shape[0] != n_profiles:
                    raise ConfigError(
                        f"{where}.parameters.profiles: need one profile per load profile "
                        f"({n_profiles}), got {profiles.shape[0]}")
            if profiles.shape[1] != horizon:
                raise ConfigError(f"{where}.parameters: profile length must equal horizon_hours")
            return IntermittentSpec(num["icap"], profiles)
        if kind == "storage":
            if not num["discharge_cap"] > 0 or not num["energy_limit"] > 0:
                raise ConfigError(f"{where}.parameters: discharge_cap and energy_limit must be > 0")
            return StorageSpec(num["discharge_cap"], num["charge_cap"], num["energy_limit"],
                               num.get("initial_soc_fraction", 1.0))
        return PerfectSpec(num["icap"])
    except ConfigError as exc:
        if str(exc).startswith(where):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def system_from_dict(doc: Any) -> BaseCase:
    # "manifest" records how a generated config was produced; it is not part of the model
    _check_keys(doc, {"horizon_hours", "voll", "load_profiles", "resources"}, {"manifest"}, "config")
    horizon = doc["horizon_hours"]
    if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon <= 0:
        raise ConfigError("horizon_hours: expected a positive integer")
    voll = _number(doc["voll"], "voll")
    if voll < 0:
        raise ConfigError("voll: must be >= 0")
    profiles = doc["load_profiles"]
    if not isinstance(profiles, list) or not profiles:
        raise ConfigError("load_profiles: expected a non-empty array")
    weights, demand = [], []
    for i, entry in enumerate(profiles):
        _check_keys(entry, {"weight", "demand"}, set(), f"load_profiles[{i}]")
        weights.append(_number(entry["weight"], f"load_profiles[{i}].weight"))
        row = entry["demand"]
        if not isinstance(row, list) or len(row) != horizon:
            raise ConfigError(f"load_profiles[{i}].demand: expected {horizon} values")
        demand.append([_number(v, f"load_profiles[{i}].demand") for v in row])
    load = LoadModel(np.array(weights), np.array(demand))
    resources_doc = doc["resources"]
    if not isinstance(resources_doc, dict) or not resources_doc:
        raise ConfigError("resources: expected a non-empty object")
    resources = {name: _spec_from_dict(name, entry, len(weights), horizon)
                 for name, entry in resources_doc.items()}
    return BaseCase(load, resources, voll)


def parse_system_config(text: str) -> BaseCase:
    """Parse and validate a JSON system document."""
    # duplicate keys would silently shadow each other in a plain dict
    def no_dupes(pairs):
        keys = [k for k, _ in pairs]
        dupes = {k for k in keys if keys.count(k) > 1}
        if dupes:
            raise ConfigError(f"duplicate key(s) {sorted(dupes)}")
        return dict(pairs)

    try:
        doc = json.loads(text, object_pairs_hook=no_dupes)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return system_from_dict(doc)


def load_system(path) -> BaseCase:
    with open(path, encoding="utf-8") as fh:
        return parse_system_config(fh.read())


def _spec_to_dict(spec: ResourceSpec) -> dict:
    if isinstance(spec, ThermalSpec):
        params = {"icap": spec.icap, "for_rate": spec.for_rate,
                  "mttr_hours": spec.mttr_hours, "outage_mode": spec.outage_mode.value}
    elif isinstance(spec, IntermittentSpec):
        rows = spec.profiles
        if np.all(rows == rows[0]):
            params = {"icap": spec.icap, "profile": rows[0].tolist()}
        else:
            params = {"icap": spec.icap, "profiles": rows.tolist()}
    elif isinstance(spec, StorageSpec):
        params = {"discharge_cap": spec.discharge_cap, "charge_cap": spec.charge_cap,
                  "energy_limit": spec.energy_limit,
                  "initial_soc_fraction": spec.initial_soc_fraction}
    else:
        params = {"icap": spec.icap}
    return {"type": resource_type(spec), "parameters": params}


def system_to_dict(base: BaseCase) -> dict:
    return {
        "horizon_hours": base.horizon_hours,
        "voll": base.voll,
        "load_profiles": [
            {"weight": float(w), "demand": d.tolist()}
            for w, d in zip(base.load.weights, base.load.demand)
        ],
        "resources": {name: _spec_to_dict(spec) for name, spec in base.resources.items()},
    }


def dump_system(base: BaseCase, manifest: dict | None = None) -> str:
    doc = system_to_dict(base)
    if manifest is not None:
        doc = {"manifest": manifest, **doc}
    return json.dumps(doc, indent=1)
