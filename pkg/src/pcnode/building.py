"""Entropy-state thermal model of N connected zones.

Each zone i carries entropy S_i.  With temperatures T (= dH/dS) the model is

    dS/dt = Jt(T) T + Be(T) T_e + B_s Q_s + B_h Q_h + B_c Q_c

    Jt_ij(T) = -Jt_ji(T) = lam_ij (T_j - T_i) / (T_i T_j)   for adjacent i, j
    Be(T)_i  = lam_ie (T_e - T_i) / (T_i T_e)

All coefficients are softplus images of unconstrained raw values, so they are
positive for every optimizer iterate and the model is energy conserving,
entropy producing and monotone in its inputs by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .core import ModelError, SkewSymmetricMatrix, fe_step

GROUPS = ("lambda_edge", "lambda_ext", "b_s", "b_h", "b_c")
DEFAULT_HEAT_CAPACITY = 1e6  # J/K per zone
MAX_EXPONENT = 700.0


class TemperatureRangeError(ModelError, ValueError):
    pass


@dataclass(frozen=True)
class Adjacency:
    n_zones: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        norm = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on zone {i}")
            if not (0 <= i < self.n_zones and 0 <= j < self.n_zones):
                raise ValueError(f"edge ({i}, {j}) out of range for {self.n_zones} zones")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    @classmethod
    def chain(cls, n_zones: int) -> "Adjacency":
        return cls(n_zones, tuple((i, i + 1) for i in range(n_zones - 1)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _incidence(self) -> tuple[np.ndarray, np.ndarray]:
        first = np.zeros((self.n_edges, self.n_zones))
        second = np.zeros((self.n_edges, self.n_zones))
        for k, (i, j) in enumerate(self.edges):
            first[k, i] = 1.0
            second[k, j] = 1.0
        return first, second

    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """One-hot (E, N) matrices selecting the first and second zone of each edge."""
        return self._incidence


@dataclass(frozen=True)
class BuildingInputs:
    """Ambient temperature (K) and per-zone solar, heating and cooling gains (W)."""

    T_e: float | np.ndarray
    Q_s: np.ndarray
    Q_h: np.ndarray
    Q_c: np.ndarray

    def to_vector(self) -> np.ndarray:
        T_e = np.asarray(self.T_e, dtype=float)
        return np.concatenate([T_e[..., None], np.asarray(self.Q_s, float),
                               np.asarray(self.Q_h, float), np.asarray(self.Q_c, float)], axis=-1)

    @classmethod
    def from_vector(cls, u, n_zones: int) -> "BuildingInputs":
        u = np.asarray(u, dtype=float)
        N = n_zones
        return cls(u[..., 0], u[..., 1:1 + N], u[..., 1 + N:1 + 2 * N], u[..., 1 + 2 * N:1 + 3 * N])

    @classmethod
    def constant(cls, n_zones: int, T_e: float, Q_s=0.0, Q_h=0.0, Q_c=0.0) -> "BuildingInputs":
        full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n_zones,)).copy()
        return cls(float(T_e), full(Q_s), full(Q_h), full(Q_c))


@dataclass(frozen=True)
class BuildingParams:
    """Raw (unconstrained) trainable values plus fixed zone constants.

    Raw entries may be plain arrays or tape variables; the effective
    coefficients are their softplus images.
    """

    adjacency: Adjacency
    raw_lambda_edge: object
    raw_lambda_ext: object
    raw_b_s: object
    raw_b_h: object
    raw_b_c: object
    zone_heat_capacity: np.ndarray
    t_ref: np.ndarray
    s_ref: np.ndarray

    @classmethod
    def from_effective(cls, adjacency: Adjacency, lambda_edge, lambda_ext, b_s, b_h, b_c,
                       zone_heat_capacity=DEFAULT_HEAT_CAPACITY, t_ref=293.15, s_ref=0.0) -> "BuildingParams":
        N = adjacency.n_zones
        vec = lambda v, n: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
        mc = vec(zone_heat_capacity, N)
        if np.any(mc <= 0):
            raise ValueError("zone heat capacities must be positive")
        t_ref = vec(t_ref, N)
        if np.any(t_ref <= 0):
            raise ValueError("reference temperatures must be positive")
        return cls(
            adjacency,
            ad.inverse_softplus(vec(lambda_edge, adjacency.n_edges)),
            ad.inverse_softplus(vec(lambda_ext, N)),
            ad.inverse_softplus(vec(b_s, N)),
            ad.inverse_softplus(vec(b_h, N)),
            ad.inverse_softplus(vec(b_c, N)),
            mc, t_ref, vec(s_ref, N),
        )

    @classmethod
    def initial_guess(cls, adjacency: Adjacency, **constants) -> "BuildingParams":
        """Effective 1.0 on edges, 0.5 to the exterior, 1e-3 on the gain diagonals."""
        return cls.from_effective(adjacency, 1.0, 0.5, 1e-3, 1e-3, 1e-3, **constants)

    @property
    def n_zones(self) -> int:
        return self.adjacency.n_zones

    # effective (positive) coefficients
    @cached_property
    def lambda_edge(self):
        return ad.softplus(self.raw_lambda_edge)

    @cached_property
    def lambda_ext(self):
        return ad.softplus(self.raw_lambda_ext)

    @cached_property
    def b_s(self):
        return ad.softplus(self.raw_b_s)

    @cached_property
    def b_h(self):
        return ad.softplus(self.raw_b_h)

    @cached_property
    def b_c(self):
        return ad.softplus(self.raw_b_c)

    def effective(self) -> dict[str, np.ndarray]:
        return {g: np.array(ad.value_of(getattr(self, g))) for g in GROUPS}

    def parameter_vector(self) -> ad.ParameterVector:
        return ad.ParameterVector.from_arrays(
            {g: ad.value_of(getattr(self, "raw_" + g)) for g in GROUPS})

    def with_raw(self, flat) -> "BuildingParams":
        parts = self.parameter_vector().unpack(flat)
        return replace(self, **{"raw_" + g: parts[g] for g in GROUPS})


# --------------------------------------------------------------------------

def temperature_from_entropy(params: BuildingParams, S):
    """T_i = T_ref,i exp((S_i - S_ref,i) / (m_i c_i)) at constant volume."""
    expo = (S - params.s_ref) / params.zone_heat_capacity
    ev = ad.value_of(expo)
    if not np.all(np.isfinite(ev)) or np.any(np.abs(ev) > MAX_EXPONENT):
        bad = np.argwhere(~np.isfinite(ev) | (np.abs(ev) > MAX_EXPONENT))[0]
        raise TemperatureRangeError(f"entropy of zone {int(bad[-1])} is out of range for the exponential map")
    return params.t_ref * ad.exp(expo)


def entropy_from_temperature(params: BuildingParams, T):
    """Inverse of :func:`temperature_from_entropy`."""
    Tv = ad.value_of(T)
    if np.any(~(Tv > 0)):
        bad = np.argwhere(~(Tv > 0))[0]
        raise TemperatureRangeError(f"non-positive temperature in zone {int(bad[-1])}")
    return params.s_ref + params.zone_heat_capacity * ad.log(T / params.t_ref)


def build_jtilde(params: BuildingParams, T) -> SkewSymmetricMatrix:
    T = np.asarray(T, dtype=float)
    if T.shape != (params.n_zones,):
        raise ValueError("build_jtilde takes one temperature vector")
    if np.any(T <= 0):
        raise TemperatureRangeError("temperatures must be positive")
    lam = ad.value_of(params.lambda_edge)
    upper = {}
    for k, (i, j) in enumerate(params.adjacency.edges):
        upper[(i, j)] = float(lam[k] * (T[j] - T[i]) / (T[i] * T[j]))
    return SkewSymmetricMatrix(params.n_zones, upper)


def decompose_jtilde(params: BuildingParams, T) -> list[tuple[float, SkewSymmetricMatrix]]:
    """Jt(T) = sum_k R_k(T) J_k with one constant unit-skew J_k per edge."""
    T = np.asarray(T, dtype=float)
    lam = ad.value_of(params.lambda_edge)
    terms = []
    for k, (i, j) in enumerate(params.adjacency.edges):
        r = float(lam[k] * (T[j] - T[i]) / (T[i] * T[j]))
        terms.append((r, SkewSymmetricMatrix(params.n_zones, {(i, j): 1.0})))
    return terms


def _interzone_flow(params: BuildingParams, T):
    """Jt(T) T, batched over leading axes."""
    first, second = params.adjacency.incidence()
    if not first.size:
        return T * 0.0
    Ti = T @ first.T
    Tj = T @ second.T
    coef = params.lambda_edge * (Tj - Ti) / (Ti * Tj)
    return (coef * Tj) @ first - (coef * Ti) @ second


def building_rhs(params: BuildingParams, S, inputs) -> object:
    """dS/dt in J/(K s) for entropy ``S`` and inputs (BuildingInputs or flat vector)."""
    N = params.n_zones
    u = inputs.to_vector() if isinstance(inputs, BuildingInputs) else np.asarray(inputs, dtype=float)
    T = temperature_from_entropy(params, S)
    T_e = u[..., 0:1]
    if np.any(T_e <= 0):
        raise TemperatureRangeError("ambient temperature must be positive")
    Q_s, Q_h, Q_c = u[..., 1:1 + N], u[..., 1 + N:1 + 2 * N], u[..., 1 + 2 * N:1 + 3 * N]
    # Be(T) * T_e simplifies to lam_ie (T_e - T_i) / T_i
    exterior = params.lambda_ext * (T_e - T) / T
    gains = params.b_s * Q_s + params.b_h * Q_h + params.b_c * Q_c
    return _interzone_flow(params, T) + exterior + gains


@dataclass(frozen=True)
class BuildingModel:
    """Building dynamics in the generic model contract (state S, inputs [T_e, Q_s, Q_h, Q_c])."""

    params: BuildingParams
    kind: str = field(default="building", init=False)

    @property
    def n(self) -> int:
        return self.params.n_zones

    @property
    def m(self) -> int:
        return 1 + 3 * self.params.n_zones

    def rhs(self, x, u):
        return building_rhs(self.params, x, u)

    def temperatures(self, S):
        return temperature_from_entropy(self.params, S)

    def hamiltonian(self, S):
        """Thermal energy sum_i m_i c_i T_i (J), whose gradient is T."""
        return np.sum(self.params.zone_heat_capacity * ad.value_of(self.temperatures(S)), axis=-1)

    def hamiltonian_grad(self, S):
        return self.temperatures(S)

    def conservative_rhs(self, S):
        return _interzone_flow(self.params, self.temperatures(S))

    def entropy_rate(self, S):
        return np.sum(ad.value_of(self.conservative_rhs(S)), axis=-1)

    # measurement map: the data are temperatures
    def encode(self, z):
        return entropy_from_temperature(self.params, np.asarray(z, dtype=float))

    def observe(self, x):
        return self.temperatures(x)

    def parameters(self) -> ad.ParameterVector:
        return self.params.parameter_vector()

    def with_parameters(self, flat) -> "BuildingModel":
        return BuildingModel(self.params.with_raw(flat))

    def l1_groups(self) -> tuple[str, ...]:
        return ("lambda_edge",)

    def effective_group(self, name: str):
        return getattr(self.params, name)

    def effective_parameters(self) -> dict[str, np.ndarray]:
        return self.params.effective()

    def constrained_groups(self) -> tuple[str, ...]:
        return GROUPS

    def to_config(self) -> dict:
        p = self.params
        return {
            "kind": "building",
            "n_zones": p.n_zones,
            "edges": [list(e) for e in p.adjacency.edges],
            "zone_heat_capacity": p.zone_heat_capacity.tolist(),
            "t_ref": p.t_ref.tolist(),
            "s_ref": p.s_ref.tolist(),
        }

    @classmethod
    def from_config(cls, cfg: dict, values=None) -> "BuildingModel":
        adj = Adjacency(int(cfg["n_zones"]), tuple(tuple(e) for e in cfg["edges"]))
        params = BuildingParams.initial_guess(
            adj, zone_heat_capacity=cfg["zone_heat_capacity"], t_ref=cfg["t_ref"], s_ref=cfg["s_ref"])
        model = cls(params)
        return model if values is None else model.with_parameters(np.asarray(values, dtype=float))


def input_labels(n_zones: int) -> list[str]:
    labels = ["T_e[K]"]
    for name in ("Q_s", "Q_h", "Q_c"):
        labels += [f"{name}{i + 1}[W]" for i in range(n_zones)]
    return labels


def state_labels(n_zones: int) -> list[str]:
    return [f"T_zone{i + 1}[K]" for i in range(n_zones)]


# --------------------------------------------------------------------------
# synthetic data (stand-in for measured building data)

def synthetic_inputs(n_zones: int, n_samples: int, h: float, rng: np.random.Generator,
                     solar_peak: Sequence[float] | float = 40.0, heat_power: float = 30.0,
                     cool_power: float = 25.0, t_mean: float = 283.0) -> np.ndarray:
    """Weather and HVAC excitation: daily ambient cycle with slow drift, clipped-sine
    solar gains with day-to-day cloudiness, and persistent random on/off heating and cooling."""
    t = np.arange(n_samples) * h
    day = 86400.0
    drift = np.zeros(n_samples)
    a = np.exp(-h / (3 * day))
    for k in range(1, n_samples):
        drift[k] = a * drift[k - 1] + np.sqrt(1 - a * a) * 3.0 * rng.standard_normal()
    T_e = t_mean + 5.0 * np.sin(2 * np.pi * (t / day - 0.375)) + drift

    n_days = int(np.ceil(n_samples * h / day)) + 1
    cloud = rng.uniform(0.2, 1.0, size=n_days)[(t // day).astype(int)]
    # passing clouds: a few-hour correlated flicker on top of the daily level
    b = np.exp(-h / 10800.0)
    flicker = np.zeros(n_samples)
    for k in range(1, n_samples):
        flicker[k] = b * flicker[k - 1] + np.sqrt(1 - b * b) * 0.15 * rng.standard_normal()
    cloud = np.clip(cloud * np.exp(flicker), 0.0, 1.0)
    # zones face different directions, so their solar gains peak at different hours
    facing = np.linspace(-0.06, 0.06, n_zones) if n_zones > 1 else np.zeros(1)
    sun = np.clip(np.sin(2 * np.pi * (t[:, None] / day - 0.25 - facing[None, :])), 0.0, None)
    peaks = np.broadcast_to(np.asarray(solar_peak, dtype=float), (n_zones,))
    Q_s = sun * cloud[:, None] * peaks[None, :]

    def switching(p_on, p_off):
        state = np.zeros((n_samples, n_zones))
        on = rng.random(n_zones) < 0.5
        for k in range(n_samples):
            flip = rng.random(n_zones)
            on = np.where(on, flip >= p_off, flip < p_on)
            state[k] = on
        return state

    Q_h = heat_power * switching(0.08, 0.12) * rng.uniform(0.5, 1.0, size=(n_samples, n_zones))
    Q_c = -cool_power * switching(0.03, 0.2) * rng.uniform(0.5, 1.0, size=(n_samples, n_zones)) + 0.0
    return np.column_stack([T_e, Q_s, Q_h, Q_c])


def default_true_params(n_zones: int = 3, edges=None, **constants) -> BuildingParams:
    """Ground-truth coefficients used for the synthetic building datasets."""
    adj = Adjacency.chain(n_zones) if edges is None else Adjacency(n_zones, tuple(map(tuple, edges)))
    rng = np.random.default_rng(1234)
    return BuildingParams.from_effective(
        adj,
        lambda_edge=rng.uniform(2.0, 4.0, adj.n_edges),
        lambda_ext=rng.uniform(1.0, 2.5, n_zones),
        b_s=rng.uniform(2.5e-3, 4.0e-3, n_zones),
        b_h=rng.uniform(2.5e-3, 4.0e-3, n_zones),
        b_c=rng.uniform(2.5e-3, 4.0e-3, n_zones),
        **constants,
    )


def synth_building_generate(true_params: BuildingParams, inputs: np.ndarray, T0, h: float = 900.0,
                            substeps: int = 10, metadata: dict | None = None):
    """Simulate the building with Euler substeps of h/substeps and emit temperatures every h.

    ``inputs`` holds one row per emitted sample and is held constant over each interval.
    """
    from .data import Trajectory

    model = BuildingModel(true_params)
    inputs = np.asarray(inputs, dtype=float)
    n_samples = len(inputs)
    S = model.encode(np.asarray(T0, dtype=float))
    temps = np.empty((n_samples, model.n))
    temps[0] = ad.value_of(model.temperatures(S))
    dt = h / substeps
    for k in range(n_samples - 1):
        for _ in range(substeps):
            try:
                S = fe_step(model, S, inputs[k], dt)
            except ModelError as err:
                raise ModelError(f"building simulation diverged at step {k}: {err}") from err
        temps[k + 1] = model.temperatures(S)
    meta = {
        "source": "synthetic-building",
        "h": h,
        "substeps": substeps,
        "true_parameters": {k: v.tolist() for k, v in true_params.effective().items()},
        "model": model.to_config(),
    }
    meta.update(metadata or {})
    return Trajectory(
        times=np.arange(n_samples) * h,
        states=temps,
        inputs=inputs,
        state_labels=state_labels(model.n),
        input_labels=input_labels(model.n),
        metadata=meta,
    )
