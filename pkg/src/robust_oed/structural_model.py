"""Synthetic lumped-parameter structures and their frequency response functions.

A structure is a set of point masses (nodes) carrying ``dofs_per_node``
translational DoFs each, joined by springs.  Nodes are grouped into tiers,
every tier carries a ``level`` label (base = 0) that downstream code uses to
assign probabilities of failure.

The FRF at a fixed frequency ``omega`` is the real matrix mapping the nonzero
load amplitudes to observed accelerations::

    T = extract(-omega**2 * Q @ H(omega) @ P),   H = (K - 1j*omega*C + omega**2*M)^-1

which is the default ``sign_convention="plus-mass"``.  The conventional
dynamic stiffness ``K + 1j*omega*C - omega**2*M`` is selected with
``sign_convention="standard"``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .errors import InvalidConfigError, RankDeficiencyError, ResonanceError

EXTRACTION_MODES = ("real_part", "imaginary_part", "magnitude", "stacked_real_imag")
SIGN_CONVENTIONS = ("plus-mass", "standard")
AXIS_NAMES = "xyz"
EPS_RANK = 1e-10
# reciprocal condition number below which the dynamic stiffness is treated as singular
RCOND_MIN = 1e-13


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def numerical_rank(a, eps=EPS_RANK):
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > eps * s[0]))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TieredTowerConfig:
    """Validated description of a tiered lumped-mass structure.

    ``springs`` entries are dicts ``{i, j, stiffness[, shear][, direction]}``;
    ``j = None`` (or ``-1``) grounds node ``i``.  Without ``direction`` the
    spring acts with ``stiffness`` on every axis; with a direction ``e`` the
    3x3 block is ``stiffness*e e^T + shear*(I - e e^T)``.
    """

    tiers: tuple
    springs: tuple
    observed_dofs: tuple
    loaded_dofs: tuple
    rayleigh: tuple = (0.0, 0.0)
    frequency: float = 1.0
    extraction_mode: str = "real_part"
    dofs_per_node: int = 3
    sign_convention: str = "plus-mass"
    noise_sigma: float = 1.0
    positions: tuple | None = None

    @property
    def n_nodes(self):
        return sum(t["nodes"] for t in self.tiers)

    @property
    def n_dofs(self):
        return self.n_nodes * self.dofs_per_node

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidConfigError("model config must be a JSON object")
        try:
            d = int(data.get("dofs_per_node", 3))
            tiers = tuple(
                {"nodes": int(t["nodes"]), "mass": float(t["mass"]), "level": int(t.get("level", k))}
                for k, t in enumerate(data["tiers"])
            )
            springs = []
            for s in data["springs"]:
                j = s.get("j")
                spring = {
                    "i": int(s["i"]),
                    "j": None if j is None or int(j) < 0 else int(j),
                    "stiffness": float(s["stiffness"]),
                }
                if "shear" in s:
                    spring["shear"] = float(s["shear"])
                if s.get("direction") is not None:
                    spring["direction"] = tuple(float(x) for x in s["direction"])
                springs.append(spring)
            ray = data.get("rayleigh", {})
            rayleigh = (float(ray.get("alpha", 0.0)), float(ray.get("beta", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigError(f"malformed model config: {exc!r}") from exc
        cfg = cls(
            tiers=tiers,
            springs=tuple(springs),
            observed_dofs=tuple(_parse_dofs(data.get("observed_dofs", "all"), tiers, d)),
            loaded_dofs=tuple(_parse_dofs(data.get("loaded_dofs", []), tiers, d)),
            rayleigh=rayleigh,
            frequency=float(data.get("frequency", 1.0)),
            extraction_mode=str(data.get("extraction_mode", "real_part")),
            dofs_per_node=d,
            sign_convention=str(data.get("sign_convention", "plus-mass")),
            noise_sigma=float(data.get("noise_sigma", 1.0)),
            positions=(
                tuple(tuple(float(x) for x in p) for p in data["positions"])
                if data.get("positions") is not None
                else None
            ),
        )
        cfg.validate()
        return cfg

    def to_dict(self):
        out = {
            "dofs_per_node": self.dofs_per_node,
            "tiers": [dict(t) for t in self.tiers],
            "springs": [
                {k: (list(v) if isinstance(v, tuple) else v) for k, v in s.items()}
                for s in self.springs
            ],
            "rayleigh": {"alpha": self.rayleigh[0], "beta": self.rayleigh[1]},
            "observed_dofs": list(self.observed_dofs),
            "loaded_dofs": list(self.loaded_dofs),
            "frequency": self.frequency,
            "extraction_mode": self.extraction_mode,
            "sign_convention": self.sign_convention,
            "noise_sigma": self.noise_sigma,
        }
        if self.positions is not None:
            out["positions"] = [list(p) for p in self.positions]
        return out

    def validate(self):
        d = self.dofs_per_node
        if d < 1:
            raise InvalidConfigError("dofs_per_node must be >= 1")
        if not self.tiers:
            raise InvalidConfigError("at least one tier is required")
        for t in self.tiers:
            if t["nodes"] < 1:
                raise InvalidConfigError(f"tier {t} has no nodes")
            if not t["mass"] > 0:
                raise InvalidConfigError(f"non-positive mass {t['mass']} in tier {t}")
        n = self.n_nodes
        for s in self.springs:
            if not s["stiffness"] > 0:
                raise InvalidConfigError(f"non-positive spring stiffness in {s}")
            if s.get("shear", 0.0) < 0:
                raise InvalidConfigError(f"negative shear stiffness in {s}")
            if not 0 <= s["i"] < n or (s["j"] is not None and not 0 <= s["j"] < n):
                raise InvalidConfigError(f"spring {s} references a node outside 0..{n - 1}")
            if s["j"] == s["i"]:
                raise InvalidConfigError(f"spring {s} connects a node to itself")
            if "direction" in s:
                e = np.asarray(s["direction"], dtype=float)
                if e.shape != (d,) or not np.linalg.norm(e) > 0:
                    raise InvalidConfigError(f"spring direction must be a nonzero {d}-vector: {s}")
        alpha, beta = self.rayleigh
        if alpha < 0 or beta < 0:
            raise InvalidConfigError("Rayleigh coefficients must be >= 0")
        for name in ("observed_dofs", "loaded_dofs"):
            dofs = getattr(self, name)
            if len(set(dofs)) != len(dofs):
                raise InvalidConfigError(f"duplicate entries in {name}")
            if any(not 0 <= k < self.n_dofs for k in dofs):
                raise InvalidConfigError(f"{name} entry outside 0..{self.n_dofs - 1}")
        if not self.observed_dofs:
            raise InvalidConfigError("no observed DoFs")
        if not self.loaded_dofs:
            raise InvalidConfigError("no loaded DoFs")
        if self.extraction_mode not in EXTRACTION_MODES:
            raise InvalidConfigError(f"unknown extraction_mode {self.extraction_mode!r}")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise InvalidConfigError(f"unknown sign_convention {self.sign_convention!r}")
        if not self.noise_sigma > 0:
            raise InvalidConfigError("noise_sigma must be > 0")
        if self.positions is not None and len(self.positions) != n:
            raise InvalidConfigError("positions must list one coordinate per node")


def _parse_dofs(spec, tiers, d):
    n_dofs = sum(t["nodes"] for t in tiers) * d
    if spec == "all":
        return list(range(n_dofs))
    out = []
    for item in spec:
        if isinstance(item, (list, tuple)):
            node, axis = item
            if isinstance(axis, str):
                if axis not in AXIS_NAMES[:d]:
                    raise InvalidConfigError(f"unknown axis {axis!r}")
                axis = AXIS_NAMES.index(axis)
            if not 0 <= int(axis) < d:
                raise InvalidConfigError(f"axis {axis} out of range for {d} DoFs per node")
            out.append(int(node) * d + int(axis))
        else:
            out.append(int(item))
    return out


def load_model_config(path):
    """Read a model config JSON file (``"demo"`` selects the built-in tower)."""
    if str(path) == "demo":
        return TieredTowerConfig.from_dict(demo_config())
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return TieredTowerConfig.from_dict(data)


# ---------------------------------------------------------------------------
# model and FRF types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StructuralModel:
    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    obs_selector: np.ndarray
    load_selector: np.ndarray
    dofs_per_node: int
    node_level: np.ndarray
    sign_convention: str = "plus-mass"

    def __post_init__(self):
        for name in ("mass", "damping", "stiffness", "obs_selector", "load_selector"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "node_level", _readonly(self.node_level, dtype=int))
        n = self.mass.shape[0]
        if n != len(self.node_level) * self.dofs_per_node:
            raise InvalidConfigError("N must equal (number of nodes) x dofs_per_node")
        for name in ("mass", "damping", "stiffness"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise InvalidConfigError(f"{name} must be {n}x{n}")
            if not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
                raise InvalidConfigError(f"{name} matrix is not symmetric")
        for name in ("mass", "stiffness"):
            if np.linalg.eigvalsh(getattr(self, name))[0] <= 0:
                raise InvalidConfigError(f"{name} matrix is not positive definite")
        if np.linalg.eigvalsh(self.damping)[0] < -1e-12 * max(1.0, np.abs(self.damping).max()):
            raise InvalidConfigError("damping matrix is not positive semidefinite")
        q, p = self.obs_selector, self.load_selector
        if q.shape[1] != n or p.shape[0] != n:
            raise InvalidConfigError("selector shapes do not match N")
        if not (_one_hot(q, axis=1) and _one_hot(p, axis=0)):
            raise InvalidConfigError("selectors must be 0/1 with exactly one 1 per row/column")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise InvalidConfigError(f"unknown sign_convention {self.sign_convention!r}")

    @property
    def n_dofs(self):
        return self.mass.shape[0]

    @property
    def observed_dofs(self):
        return np.argmax(self.obs_selector, axis=1)

    @property
    def loaded_dofs(self):
        return np.argmax(self.load_selector, axis=0)

    def sensor_labels(self):
        d = self.dofs_per_node
        return [(int(k) // d, _axis_label(int(k) % d, d)) for k in self.observed_dofs]

    def sensor_levels(self):
        return self.node_level[self.observed_dofs // self.dofs_per_node]

    def system_matrix(self, omega):
        if self.sign_convention == "plus-mass":
            return self.stiffness - 1j * omega * self.damping + omega**2 * self.mass
        return self.stiffness + 1j * omega * self.damping - omega**2 * self.mass


def _axis_label(axis, d):
    return AXIS_NAMES[axis] if d <= 3 else str(axis)


def _one_hot(a, axis):
    return bool(np.all((a == 0) | (a == 1)) and np.all(a.sum(axis=axis) == 1))


@dataclass(frozen=True, eq=False)
class FRFMatrix:
    """Real parameter-to-observable map ``T`` (rows = sensors, columns = loads)."""

    entries: np.ndarray
    frequency: float = float("nan")
    extraction_mode: str = "real_part"
    sensor_labels: list = field(default=None)

    def __post_init__(self):
        t = _readonly(self.entries)
        if t.ndim != 2:
            raise ValueError("FRF entries must be a 2-D array")
        object.__setattr__(self, "entries", t)
        if self.extraction_mode not in EXTRACTION_MODES:
            raise ValueError(f"unknown extraction_mode {self.extraction_mode!r}")
        if self.sensor_labels is None:
            object.__setattr__(self, "sensor_labels", [(i, "-") for i in range(t.shape[0])])
        elif len(self.sensor_labels) != t.shape[0]:
            raise ValueError("one sensor label per FRF row is required")
        rank = numerical_rank(t)
        if rank < t.shape[1]:
            raise RankDeficiencyError(rank, t.shape[1])

    @property
    def n_y(self):
        return self.entries.shape[0]

    @property
    def n_theta(self):
        return self.entries.shape[1]

    @property
    def T(self):
        return self.entries


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def spring_block(spring, d):
    if "direction" not in spring or d == 1:
        return spring["stiffness"] * np.eye(d)
    e = np.asarray(spring["direction"], dtype=float)
    e = e / np.linalg.norm(e)
    outer = np.outer(e, e)
    return spring["stiffness"] * outer + spring.get("shear", 0.0) * (np.eye(d) - outer)


def assemble_tiered_model(config):
    """Assemble mass, Rayleigh damping and stiffness matrices from ``config``."""
    if isinstance(config, dict):
        config = TieredTowerConfig.from_dict(config)
    else:
        config.validate()
    d = config.dofs_per_node
    n = config.n_dofs
    masses = np.concatenate([np.full(t["nodes"], t["mass"]) for t in config.tiers])
    levels = np.concatenate([np.full(t["nodes"], t["level"]) for t in config.tiers])
    mass = np.diag(np.repeat(masses, d))
    stiffness = np.zeros((n, n))
    for s in config.springs:
        block = spring_block(s, d)
        a = slice(s["i"] * d, s["i"] * d + d)
        stiffness[a, a] += block
        if s["j"] is not None:
            b = slice(s["j"] * d, s["j"] * d + d)
            stiffness[b, b] += block
            stiffness[a, b] -= block
            stiffness[b, a] -= block
    if np.linalg.eigvalsh(stiffness)[0] <= 1e-12 * np.abs(stiffness).max():
        raise InvalidConfigError(
            "stiffness matrix is singular: the spring network leaves a rigid-body mode "
            "(ground at least one node per connected component)"
        )
    alpha, beta = config.rayleigh
    damping = alpha * mass + beta * stiffness
    obs = np.zeros((len(config.observed_dofs), n))
    obs[np.arange(len(config.observed_dofs)), list(config.observed_dofs)] = 1.0
    load = np.zeros((n, len(config.loaded_dofs)))
    load[list(config.loaded_dofs), np.arange(len(config.loaded_dofs))] = 1.0
    return StructuralModel(
        mass=mass,
        damping=damping,
        stiffness=stiffness,
        obs_selector=obs,
        load_selector=load,
        dofs_per_node=d,
        node_level=levels,
        sign_convention=config.sign_convention,
    )


def complex_response(model, frequency):
    """``-omega^2 Q H(omega) P`` as a complex n_y x n_theta array.

    One LU factorization of the system matrix is reused for all load columns.
    """
    omega = float(frequency)
    a = model.system_matrix(omega)
    with warnings.catch_warnings():
        # exact singularity is reported through rcond below
        warnings.simplefilter("ignore", la.LinAlgWarning)
        lu, piv = la.lu_factor(a, check_finite=True)
    anorm = np.linalg.norm(a, 1)
    (gecon,) = la.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or not rcond > RCOND_MIN:
        raise ResonanceError(omega, f"system matrix singular at omega={omega} rad/s (rcond={rcond:.3g})")
    load_cols = model.load_selector.astype(complex)
    h_p = la.lu_solve((lu, piv), load_cols)
    return -(omega**2) * (model.obs_selector @ h_p)


def extract(response, mode):
    if mode == "real_part":
        return response.real.copy()
    if mode == "imaginary_part":
        return response.imag.copy()
    if mode == "magnitude":
        return np.abs(response)
    if mode == "stacked_real_imag":
        return np.vstack([response.real, response.imag])
    raise ValueError(f"unknown extraction_mode {mode!r}")


def compute_frf(model, frequency, mode="real_part"):
    """FRF matrix of ``model`` at ``frequency`` (rad/s)."""
    if mode not in EXTRACTION_MODES:
        raise ValueError(f"unknown extraction_mode {mode!r}")
    response = complex_response(model, frequency)
    entries = extract(response, mode)
    labels = model.sensor_labels()
    if mode == "stacked_real_imag":
        labels = [(node, f"{axis}.re") for node, axis in labels] + [
            (node, f"{axis}.im") for node, axis in labels
        ]
    rank = numerical_rank(entries)
    if rank < entries.shape[1]:
        raise RankDeficiencyError(rank, entries.shape[1])
    return FRFMatrix(entries=entries, frequency=float(frequency), extraction_mode=mode, sensor_labels=labels)


def predict_response(frf, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != frf.n_theta:
        raise ValueError(f"theta must have length {frf.n_theta}, got shape {theta.shape}")
    return frf.entries @ theta


def frf_from_config(config):
    if isinstance(config, dict):
        config = TieredTowerConfig.from_dict(config)
    model = assemble_tiered_model(config)
    return model, compute_frf(model, config.frequency, config.extraction_mode)


def write_frf_csv(frf, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sensor_id", "node", "axis"] + [f"t_{k + 1}" for k in range(frf.n_theta)])
        for i, (node, axis) in enumerate(frf.sensor_labels):
            writer.writerow([i, node, axis] + [repr(float(v)) for v in frf.entries[i]])


def read_frf_csv(path, frequency=float("nan"), mode="real_part"):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_theta = sum(1 for h in header if h.startswith("t_"))
    entries = np.array([[float(v) for v in r[3 : 3 + n_theta]] for r in body])
    labels = [(int(r[1]), r[2]) for r in body]
    return FRFMatrix(entries=entries, frequency=frequency, extraction_mode=mode, sensor_labels=labels)


def save_model(model, path):
    np.savez(
        path,
        mass=model.mass,
        damping=model.damping,
        stiffness=model.stiffness,
        obs_selector=model.obs_selector,
        load_selector=model.load_selector,
        dofs_per_node=model.dofs_per_node,
        node_level=model.node_level,
        sign_convention=model.sign_convention,
    )


def load_model(path):
    with np.load(path) as z:
        return StructuralModel(
            mass=z["mass"],
            damping=z["damping"],
            stiffness=z["stiffness"],
            obs_selector=z["obs_selector"],
            load_selector=z["load_selector"],
            dofs_per_node=int(z["dofs_per_node"]),
            node_level=z["node_level"],
            sign_convention=str(z["sign_convention"]),
        )


# ---------------------------------------------------------------------------
# demonstration structure
# ---------------------------------------------------------------------------

# base, level 1, level 2, level 3: 89 nodes x 3 DoF = 267 candidate sensors
DEMO_TIERS = (
    {"nodes": 32, "mass": 4.0, "level": 0, "radius": 2.0, "height": 0.0},
    {"nodes": 24, "mass": 2.0, "level": 1, "radius": 1.5, "height": 1.0},
    {"nodes": 20, "mass": 1.0, "level": 2, "radius": 1.0, "height": 2.0},
    {"nodes": 13, "mass": 0.25, "level": 3, "radius": 0.5, "height": 2.8},
)
DEMO_STIFFNESS = {"ring": 4.0e4, "story": (6.0e3, 2.0e3, 80.0), "ground": 2.0e4, "shear": 0.9}
# just below the first natural frequency (~23.59 rad/s) so the top tier dominates
DEMO_FREQUENCY = 23.1


def _ring_positions(count, radius, height, center):
    ring = count - 1 if center else count
    angles = 2 * math.pi * np.arange(ring) / ring
    pts = [(radius * math.cos(a), radius * math.sin(a), height) for a in angles]
    if center:
        pts.append((0.0, 0.0, height))
    return pts


def demo_config(frequency=DEMO_FREQUENCY, stiffness=None, sign_convention="standard"):
    """Four-tier tower with 267 candidate DoFs and 6 base loads.

    Tiers shrink and lighten towards the top.  Neighbouring nodes within a
    tier are tied by stiff springs; each node is tied by a softer ``story``
    spring to its two nearest nodes in the tier below; base nodes are
    grounded.  Loads act on two base nodes in x, y and z.  Returned as a
    plain dict in the model-config JSON layout.
    """
    k = dict(DEMO_STIFFNESS)
    if stiffness:
        k.update(stiffness)
    positions, offsets = [], []
    for tier in DEMO_TIERS:
        offsets.append(len(positions))
        center = tier["level"] == 3
        positions.extend(_ring_positions(tier["nodes"], tier["radius"], tier["height"], center))
    pos = np.array(positions)
    springs = []

    def add(i, j, stiff, shear_ratio):
        e = pos[j] - pos[i]
        springs.append(
            {"i": int(i), "j": int(j), "stiffness": stiff, "shear": stiff * shear_ratio,
             "direction": [float(x) for x in e / np.linalg.norm(e)]}
        )

    for t, tier in enumerate(DEMO_TIERS):
        start = offsets[t]
        ring = tier["nodes"] - (1 if tier["level"] == 3 else 0)
        for a in range(ring):
            for step in (1, 2):
                add(start + a, start + (a + step) % ring, k["ring"], k["shear"])
        if tier["level"] == 3:
            for a in range(ring):
                add(start + a, start + ring, k["ring"], k["shear"])
        if t == 0:
            for a in range(tier["nodes"]):
                springs.append({"i": start + a, "j": None, "stiffness": k["ground"]})
        else:
            below = np.arange(offsets[t - 1], offsets[t - 1] + DEMO_TIERS[t - 1]["nodes"])
            for a in range(tier["nodes"]):
                node = start + a
                dist = np.linalg.norm(pos[below] - pos[node], axis=1)
                for nb in below[np.argsort(dist, kind="stable")[:2]]:
                    add(node, nb, k["story"][t - 1], k["shear"])
    loaded = [[0, "x"], [0, "y"], [0, "z"], [8, "x"], [8, "y"], [8, "z"]]
    return {
        "dofs_per_node": 3,
        "tiers": [{"nodes": t["nodes"], "mass": t["mass"], "level": t["level"]} for t in DEMO_TIERS],
        "springs": springs,
        "rayleigh": {"alpha": 0.0, "beta": 0.0},
        "observed_dofs": "all",
        "loaded_dofs": loaded,
        "frequency": frequency,
        "extraction_mode": "real_part",
        "sign_convention": sign_convention,
        "noise_sigma": 0.1,
        "positions": [list(map(float, p)) for p in pos],
    }
