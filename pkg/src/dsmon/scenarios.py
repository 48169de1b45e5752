"""Scenario files and built-in example generators.

A scenario file bundles system matrices, an attack specification, the
simulation grid and monitor configuration into a single JSON document
that the CLI (and tests) can execute reproducibly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AttackScenario,
    ConstantSignal,
    DescriptorSystem,
    FourierSignal,
    NoiseSpec,
    PiecewiseSignal,
    Signal,
    SinusoidSignal,
    UniformRandomSignal,
    ZeroSignal,
    attack_model,
)
from .detection import Partition
from .errors import ScenarioFormatError
from .numeric import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "ScenarioFile",
    "consensus8_matrices",
    "tworegion16_matrices",
    "generate_example",
    "load_scenario",
    "save_scenario",
]

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# example matrices
# ---------------------------------------------------------------------------

def consensus8_matrices(epsilon: float = 1e-4):
    """8-node consensus network with weak links through node 3.

    Returns (A, C, attack_column) where C measures nodes {2, 4, 7} and the
    canonical single-channel attack acts on node 3.  The epsilon-weighted
    edges make node 3's influence on the measurements arbitrarily small.
    """
    e = float(epsilon)
    A = np.array([
        [-0.8,  0.1,      0.0,     0.2,        0.5,  0.0,  0.0,          0.0],
        [0.1,  -0.4 - e,  e,       0.0,        0.0,  0.3,  0.0,          0.0],
        [0.0,   3 * e,   -9 * e,   0.0,        0.0,  0.0,  6 * e,        0.0],
        [0.1,   0.0,      e,      -0.5 - e,    0.0,  0.0,  0.0,          0.4],
        [0.1,   0.0,      0.0,     0.0,       -0.6,  0.2,  0.0,          0.3],
        [0.0,   0.4,      0.0,     0.0,        0.1, -0.6,  0.1,          0.0],
        [0.0,   0.0,      3 * e,   0.0,        0.0,  0.4, -0.6 - 3 * e,  0.2],
        [0.0,   0.0,      0.0,     0.3,        0.2,  0.0,  0.2,         -0.7],
    ])
    C = np.zeros((3, 8))
    C[0, 1] = 1.0
    C[1, 3] = 1.0
    C[2, 6] = 1.0
    b = np.zeros((8, 1))
    b[2, 0] = 1.0
    return A, C, b


# undirected edge lists of the two-rhombi pattern (1-based)
_RHOMBI_EDGES = [(1, 2), (1, 4), (1, 5), (2, 3), (2, 6), (3, 4),
                 (3, 7), (4, 8), (5, 6), (5, 8), (6, 7), (7, 8)]


def tworegion16_matrices(seed: int = 7):
    """16-node network: two rhombi-pattern areas joined at nodes {3,4}-{9,10}.

    The published example fixes the topology, the partition into areas
    {1..8} / {9..16}, the measured nodes {2,5,7,12,13,15} and the attacked
    node {3}, but not the edge weights; weights here come from a seeded
    row-stochastic construction (A = W - I) and are recorded in metadata.
    """
    n = 16
    edges = list(_RHOMBI_EDGES)
    edges += [(i + 8, j + 8) for (i, j) in _RHOMBI_EDGES]
    edges += [(3, 9), (4, 10)]
    adj = [[] for _ in range(n)]
    for (i, j) in edges:
        adj[i - 1].append(j - 1)
        adj[j - 1].append(i - 1)
    rng = np.random.default_rng(seed)
    W = np.zeros((n, n))
    for i in range(n):
        nbrs = sorted(adj[i]) + [i]
        w = rng.uniform(0.5, 1.5, len(nbrs))
        w = w / w.sum()
        for j, wj in zip(nbrs, w):
            W[i, j] = wj
    A = W - np.eye(n)
    measured = [2, 5, 7, 12, 13, 15]
    C = np.zeros((len(measured), n))
    for r, node in enumerate(measured):
        C[r, node - 1] = 1.0
    return A, C, measured


def _ring_matrices(n_regions: int, size: int, coupling: float, seed: int):
    """Block system on a ring of regions, stable blocks, weak coupling."""
    rng = np.random.default_rng(seed)
    n = n_regions * size
    A = np.zeros((n, n))
    for i in range(n_regions):
        blk = rng.uniform(-0.5, 0.5, (size, size))
        blk = blk - np.diag(np.abs(blk).sum(axis=1) + rng.uniform(0.5, 1.0, size))
        A[i * size:(i + 1) * size, i * size:(i + 1) * size] = blk
    if n_regions > 1:
        for i in range(n_regions):
            j = (i + 1) % n_regions
            cpl = coupling * rng.uniform(-1.0, 1.0, (size, size))
            cpl[np.abs(cpl) < 0.3 * coupling] = 0.0
            A[i * size:(i + 1) * size, j * size:(j + 1) * size] = cpl
            cpl2 = coupling * rng.uniform(-1.0, 1.0, (size, size))
            cpl2[np.abs(cpl2) < 0.3 * coupling] = 0.0
            A[j * size:(j + 1) * size, i * size:(i + 1) * size] = cpl2
    C = np.eye(n)
    regions = [list(range(i * size + 1, (i + 1) * size + 1)) for i in range(n_regions)]
    return A, C, regions


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

@dataclass
class ScenarioFile:
    system: dict
    attack: dict
    sim: dict
    monitor: dict = field(default_factory=dict)
    partition: dict | None = None
    noise: dict | None = None
    metadata: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    # -- builders -----------------------------------------------------------
    def build_system(self) -> DescriptorSystem:
        A = np.atleast_2d(np.asarray(self.system["A"], dtype=float))
        n = A.shape[0]
        E = np.atleast_2d(np.asarray(self.system.get("E", np.eye(n).tolist()), dtype=float))
        C = np.atleast_2d(np.asarray(self.system["C"], dtype=float))
        if "B" in self.system or "D" in self.system:
            B = np.asarray(self.system["B"], dtype=float)
            D = np.asarray(self.system["D"], dtype=float)
            return DescriptorSystem(E, A, B, C, D)
        return attack_model(E, A, C)

    def build_attack_scenario(self) -> AttackScenario:
        sig = _signal_from_spec(self.attack.get("signal"), len(self.attack.get("set", [])))
        noise = None
        if self.noise is not None:
            n = np.atleast_2d(np.asarray(self.system["A"], dtype=float)).shape[0]
            p = np.atleast_2d(np.asarray(self.system["C"], dtype=float)).shape[0]
            noise = NoiseSpec(
                _cov_from_spec(self.noise.get("state_cov", 0.0), n),
                _cov_from_spec(self.noise.get("output_cov", 0.0), p),
                int(self.noise.get("seed", 0)),
            )
        return AttackScenario(
            attack_set=tuple(int(k) for k in self.attack.get("set", [])),
            signal=sig,
            x0=np.asarray(self.sim.get("x0", np.zeros(len(self.system["A"]))), dtype=float),
            horizon=float(self.sim["horizon"]),
            dt=float(self.sim["dt"]),
            start_time=float(self.attack.get("start_time", 0.0)),
            noise=noise,
        )

    def build_partition(self, sys: DescriptorSystem,
                        policy: NumericPolicy = DEFAULT_POLICY) -> Partition | None:
        if not self.partition:
            return None
        return Partition.build(sys, self.partition["regions"], policy)

    # -- serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "system": self.system,
            "attack": self.attack,
            "sim": self.sim,
            "monitor": self.monitor,
        }
        if self.partition is not None:
            out["partition"] = self.partition
        if self.noise is not None:
            out["noise"] = self.noise
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    @staticmethod
    def from_dict(data: dict) -> "ScenarioFile":
        _validate_scenario_dict(data)
        return ScenarioFile(
            system=data["system"],
            attack=data["attack"],
            sim=data["sim"],
            monitor=data.get("monitor", {}),
            partition=data.get("partition"),
            noise=data.get("noise"),
            metadata=data.get("metadata", {}),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _cov_from_spec(spec, dim):
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    return np.atleast_2d(arr)


def _signal_from_spec(spec, k) -> Signal | None:
    if spec is None or k == 0:
        return None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioFormatError("attack.signal must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "zero":
        return ZeroSignal(k)
    if kind == "constant":
        vals = spec.get("values", [1.0] * k)
        return ConstantSignal(vals)
    if kind == "sinusoid":
        return SinusoidSignal(spec.get("amplitude", 1.0), spec.get("frequency_hz", 0.1),
                              spec.get("phase", 0.0), dim=k)
    if kind == "uniform":
        return UniformRandomSignal(spec.get("low", 0.0), spec.get("high", 0.5),
                                   spec.get("hold", 0.1), k, spec.get("seed", 0))
    if kind == "fourier":
        return FourierSignal(k, spec.get("seed", 0), spec.get("amplitude", 1.0),
                             spec.get("max_frequency_hz", 0.3), spec.get("terms", 3))
    if kind == "piecewise":
        return PiecewiseSignal(spec["times"], spec["values"])
    raise ScenarioFormatError(f"unknown signal kind: {kind!r}")


def _validate_scenario_dict(data: dict) -> None:
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(f"unsupported schema_version {version}")
    for key in ("system", "attack", "sim"):
        if key not in data:
            raise ScenarioFormatError(f"scenario is missing the '{key}' section")
    system = data["system"]
    if "A" not in system or "C" not in system:
        raise ScenarioFormatError("system section needs at least 'A' and 'C'")
    A = np.asarray(system["A"], dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ScenarioFormatError("system.A must be a square matrix")
    n = A.shape[0]
    C = np.asarray(system["C"], dtype=float)
    if C.ndim != 2 or C.shape[1] != n:
        raise ScenarioFormatError("system.C must have n columns")
    sim = data["sim"]
    for key in ("horizon", "dt"):
        if key not in sim:
            raise ScenarioFormatError(f"sim section is missing '{key}'")
    if float(sim["dt"]) <= 0 or float(sim["horizon"]) <= 0:
        raise ScenarioFormatError("sim.dt and sim.horizon must be positive")
    x0 = sim.get("x0")
    if x0 is not None and len(x0) != n:
        raise ScenarioFormatError("sim.x0 has wrong length")
    attack = data["attack"]
    kset = attack.get("set", [])
    p = C.shape[0]
    if any(not (1 <= int(i) <= n + p) for i in kset):
        raise ScenarioFormatError("attack.set indices must lie in {1..n+p}")
    if len(set(int(i) for i in kset)) != len(kset):
        raise ScenarioFormatError("attack.set indices must be distinct")
    part = data.get("partition")
    if part is not None:
        regions = part.get("regions")
        if not regions:
            raise ScenarioFormatError("partition.regions must be a nonempty list")
        flat = sorted(int(v) for r in regions for v in r)
        if flat != list(range(1, n + 1)):
            raise ScenarioFormatError("partition.regions must cover {1..n} disjointly")


def save_scenario(scn: ScenarioFile, path) -> None:
    if hasattr(path, "write"):
        path.write(scn.dumps() + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(scn.dumps() + "\n")


def load_scenario(path) -> ScenarioFile:
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"scenario is not valid JSON: {exc}") from exc
    return ScenarioFile.from_dict(data)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_example(name: str, **params) -> ScenarioFile:
    """Built-in scenario generators: consensus8, tworegion16, ring."""
    if name == "consensus8":
        return _gen_consensus8(**params)
    if name == "tworegion16":
        return _gen_tworegion16(**params)
    if name == "ring":
        return _gen_ring(**params)
    raise ScenarioFormatError(f"unknown example {name!r}; "
                              "available: consensus8, tworegion16, ring")


def _gen_consensus8(epsilon: float = 1e-4, horizon: float = 20.0, dt: float = 0.01) -> ScenarioFile:
    A, C, _ = consensus8_matrices(epsilon)
    return ScenarioFile(
        system={"A": A.tolist(), "C": C.tolist()},
        attack={"set": [3], "start_time": 0.0,
                "signal": {"kind": "constant", "values": [1.0]}},
        sim={"horizon": horizon, "dt": dt, "x0": [0.0] * 8},
        monitor={"mode": "identify", "cardinality": 1},
        metadata={"generator": "consensus8", "epsilon": epsilon,
                  "measured_nodes": [2, 4, 7], "attacked_node": 3},
    )


def _gen_tworegion16(seed: int = 7, horizon: float = 30.0, dt: float = 0.002) -> ScenarioFile:
    A, C, measured = tworegion16_matrices(seed)
    return ScenarioFile(
        system={"A": A.tolist(), "C": C.tolist()},
        attack={"set": [3], "start_time": 0.0,
                "signal": {"kind": "sinusoid", "amplitude": 1.0, "frequency_hz": 0.08}},
        sim={"horizon": horizon, "dt": dt,
             "x0": np.round(np.random.default_rng(seed + 1).uniform(-1, 1, 16), 6).tolist()},
        partition={"regions": [list(range(1, 9)), list(range(9, 17))]},
        monitor={"mode": "identify-regional", "cardinality": 1},
        metadata={"generator": "tworegion16", "seed": seed,
                  "measured_nodes": measured, "attacked_node": 3,
                  "weights": "row-stochastic minus identity, seeded"},
    )


def _gen_ring(regions: int = 5, size: int = 4, coupling: float = 0.05, seed: int = 7,
              horizon: float = 60.0, dt: float = 0.05,
              attack_region: int = 1, attack_kind: str = "measurement",
              attack_start: float = 30.0) -> ScenarioFile:
    A, C, region_lists = _ring_matrices(regions, size, coupling, seed)
    n = A.shape[0]
    rng = np.random.default_rng(seed + 100)
    x0 = np.round(rng.uniform(-1.0, 1.0, n), 6)
    first = region_lists[attack_region - 1]
    if attack_kind == "measurement":
        attack_set = [n + v for v in first]          # output channels of the region
    else:
        attack_set = list(first)
    return ScenarioFile(
        system={"A": A.tolist(), "C": C.tolist()},
        attack={"set": attack_set, "start_time": attack_start,
                "signal": {"kind": "uniform", "low": 0.0, "high": 0.5,
                           "hold": 5 * dt, "seed": seed + 2}},
        sim={"horizon": horizon, "dt": dt, "x0": x0.tolist()},
        partition={"regions": region_lists},
        monitor={"mode": "detect-distributed", "iterations": 100},
        metadata={"generator": "ring", "regions": regions, "size": size,
                  "coupling": coupling, "seed": seed},
    )
