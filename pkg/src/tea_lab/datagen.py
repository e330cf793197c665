"""Synthetic sequence datasets, windowing, entity-level splits and CSV persistence.

Raw data are per-entity sequences of static covariates, temporal feature
variables and temporal target variables. :func:`window_and_split` cuts them
into (feature window, target window) instances: features are the static
values plus ``w_x`` consecutive feature steps, targets the following ``w_y``
target steps. Static-only generators use ``w_x = 0`` and a single timestep.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .seeding import child_seed, rng

GENERATORS = ("latent-factor-sequence", "adversarial-blocks", "static-multilabel")
SPLITS = ("train", "validation", "test")


class DataSpecError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic generator.

    Defaults describe the latent-factor sequence generator at desk scale.
    ``feature_noise`` of ``None`` means "same as ``noise``".
    """

    kind: str = "latent-factor-sequence"
    entities: int = 1000
    timesteps: int = 7
    static_dim: int = 10
    feature_dim: int = 40
    target_dim: int = 40
    latent_dim: int = 8
    noise: float = 0.1
    feature_noise: float | None = None
    innovation: float = 0.1
    spectral_radius: float = 0.9
    binary_fraction: float = 0.0
    w_x: int = 3
    w_y: int = 4
    split: tuple[float, float, float] = (0.8, 0.0, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATORS:
            raise DataSpecError(f"unknown generator {self.kind!r}")
        if self.entities <= 0 or self.timesteps <= 0:
            raise DataSpecError("entities and timesteps must be positive")
        if self.noise < 0 or (self.feature_noise is not None and self.feature_noise < 0):
            raise DataSpecError("noise levels must be non-negative")
        if not 0.0 <= self.binary_fraction <= 1.0:
            raise DataSpecError("binary_fraction must lie in [0, 1]")
        if self.kind != "adversarial-blocks" and self.latent_dim >= self.target_dim * max(self.w_y, 1):
            raise DataSpecError("latent dimension must be below the target dimension")

    @classmethod
    def adversarial(cls, **overrides) -> "GeneratorSpec":
        """Block design: p, u in R^10; x (10) linear in p; y = [y_P (10) in p, y_U (40) in u]."""
        base = dict(
            kind="adversarial-blocks", timesteps=1, static_dim=10, feature_dim=0,
            target_dim=50, latent_dim=10, noise=0.0, w_x=0, w_y=1,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def multilabel(cls, **overrides) -> "GeneratorSpec":
        base = dict(
            kind="static-multilabel", timesteps=1, static_dim=30, feature_dim=0,
            target_dim=60, latent_dim=6, noise=0.5, w_x=0, w_y=1, binary_fraction=1.0,
        )
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        d = asdict(self)
        d["split"] = list(d["split"])
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorSpec":
        """Inverse of :meth:`to_json`; missing keys take the defaults of the named kind."""
        d = dict(d)
        if "split" in d:
            d["split"] = tuple(d["split"])
        factory = {"adversarial-blocks": cls.adversarial, "static-multilabel": cls.multilabel}.get(d.get("kind"))
        return factory(**d) if factory else cls(**d)


@dataclass
class RawSequences:
    entity_ids: np.ndarray  # (E,)
    static: np.ndarray  # (E, S)
    features: np.ndarray  # (E, T, Dx)
    targets: np.ndarray  # (E, T, Dy)
    static_names: list[str]
    feature_names: list[str]
    target_names: list[str]
    variable_types: dict[str, str]
    metadata: dict = field(default_factory=dict)

    @property
    def timesteps(self) -> int:
        return self.targets.shape[1]


@dataclass
class WindowedDataset:
    static: np.ndarray  # (n, S)
    x: np.ndarray  # (n, w_x, Dx)
    y: np.ndarray  # (n, w_y, Dy)
    entity: np.ndarray  # (n,)
    start: np.ndarray  # (n,) first timestep of the feature window
    split: np.ndarray  # (n,) of "train" / "validation" / "test"
    target_types: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def w_x(self) -> int:
        return self.x.shape[1]

    @property
    def w_y(self) -> int:
        return self.y.shape[1]

    @property
    def static_dim(self) -> int:
        return self.static.shape[1]

    @property
    def x_dim(self) -> int:
        return self.static.shape[1] + self.x.shape[1] * self.x.shape[2]

    @property
    def y_dim(self) -> int:
        return self.y.shape[1] * self.y.shape[2]

    @property
    def x_flat(self) -> np.ndarray:
        """Static values followed by the feature window flattened time-major."""
        return np.concatenate([self.static, self.x.reshape(len(self), -1)], axis=1)

    @property
    def y_flat(self) -> np.ndarray:
        return self.y.reshape(len(self), -1)

    @property
    def binary_columns(self) -> tuple[int, ...]:
        dy = self.y.shape[2]
        return tuple(
            step * dy + i for step in range(self.w_y) for i, t in enumerate(self.target_types) if t == "binary"
        )

    @property
    def blocks(self) -> dict[str, list[int]]:
        """Flattened target columns of each named variable block (if any)."""
        dy = self.y.shape[2]
        out = {}
        for name, idx in self.metadata.get("blocks", {}).items():
            out[name] = [step * dy + i for step in range(self.w_y) for i in idx]
        return out

    def subset(self, index) -> "WindowedDataset":
        index = np.asarray(index)
        return replace(
            self, static=self.static[index], x=self.x[index], y=self.y[index],
            entity=self.entity[index], start=self.start[index], split=self.split[index],
        )

    def part(self, name: str) -> "WindowedDataset":
        return self.subset(np.flatnonzero(self.split == name))


def _entity_split(entities: np.ndarray, fractions, seed: int) -> dict:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataSpecError(f"split fractions must be three non-negative values summing to 1, got {fractions}")
    order = rng(child_seed(seed, "split")).permutation(np.unique(entities))
    n = order.size
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    assignment = {}
    for k, ent in enumerate(order):
        assignment[ent] = "train" if k < n_train else ("validation" if k < n_train + n_val else "test")
    return assignment


def window_and_split(raw: RawSequences, w_x: int, w_y: int, fractions=(0.8, 0.0, 0.2), seed: int = 0) -> WindowedDataset:
    """Sliding full-window extraction with splits assigned per entity."""
    if w_x < 0 or w_y <= 0:
        raise DataSpecError("need w_x >= 0 and w_y >= 1")
    T = raw.timesteps
    n_per = T - w_x - w_y + 1
    if n_per <= 0:
        raise DataSpecError(f"no valid windows: T={T} < w_x + w_y = {w_x + w_y}")
    assignment = _entity_split(raw.entity_ids, fractions, seed)
    E = raw.entity_ids.size
    starts = np.arange(n_per)
    idx_e = np.repeat(np.arange(E), n_per)
    idx_t = np.tile(starts, E)
    x = np.stack([raw.features[idx_e, idx_t + k] for k in range(w_x)], axis=1) if w_x else np.zeros((idx_e.size, 0, raw.features.shape[2]))
    y = np.stack([raw.targets[idx_e, idx_t + w_x + k] for k in range(w_y)], axis=1)
    entity = raw.entity_ids[idx_e]
    split = np.array([assignment[e] for e in entity])
    meta = dict(raw.metadata)
    meta.update(w_x=w_x, w_y=w_y, split_fractions=list(fractions), split_seed=int(seed))
    return WindowedDataset(
        static=raw.static[idx_e], x=x, y=y, entity=entity, start=idx_t, split=split,
        target_types=tuple(raw.variable_types[n] for n in raw.target_names), metadata=meta,
    )


# generators

def latent_factor_params(spec: GeneratorSpec) -> dict[str, np.ndarray]:
    """Mixing matrices and dynamics of the latent-factor generator (a pure function of the GeneratorSpec)."""
    if not 0.0 <= spec.spectral_radius < 1.0:
        raise DataSpecError(f"unstable dynamics: spectral radius {spec.spectral_radius} must be < 1")
    g = rng(child_seed(spec.seed, "latent-factor/params"))
    k = spec.latent_dim
    q, r = np.linalg.qr(g.standard_normal((k, k)))
    q = q * np.sign(np.diag(r))
    return {
        "dynamics": spec.spectral_radius * q,
        "static_map": g.standard_normal((spec.static_dim, k)) / np.sqrt(k),
        "feature_map": g.standard_normal((spec.feature_dim, k)) / np.sqrt(k),
        "target_map": g.standard_normal((spec.target_dim, k)) / np.sqrt(k),
    }


def _binary_vars(spec: GeneratorSpec, g: np.random.Generator) -> np.ndarray:
    n_bin = int(round(spec.binary_fraction * spec.target_dim))
    return np.sort(g.permutation(spec.target_dim)[:n_bin])


def _names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def generate_raw(spec: GeneratorSpec) -> RawSequences:
    if spec.kind == "latent-factor-sequence":
        return _raw_latent_factor(spec)
    if spec.kind == "adversarial-blocks":
        return _raw_adversarial(spec)
    return _raw_multilabel(spec)


def _raw_latent_factor(spec: GeneratorSpec) -> RawSequences:
    prm = latent_factor_params(spec)
    g = rng(child_seed(spec.seed, "latent-factor/sample"))
    E, T, k = spec.entities, spec.timesteps, spec.latent_dim
    fnoise = spec.noise if spec.feature_noise is None else spec.feature_noise
    s = np.empty((E, T, k))
    s[:, 0] = g.standard_normal((E, k))
    for t in range(1, T):
        s[:, t] = s[:, t - 1] @ prm["dynamics"].T + spec.innovation * g.standard_normal((E, k))
    static = s[:, 0] @ prm["static_map"].T + spec.noise * g.standard_normal((E, spec.static_dim))
    features = s @ prm["feature_map"].T + fnoise * g.standard_normal((E, T, spec.feature_dim))
    logits = s @ prm["target_map"].T
    targets = logits + spec.noise * g.standard_normal((E, T, spec.target_dim))
    binary = _binary_vars(spec, rng(child_seed(spec.seed, "latent-factor/types")))
    if binary.size:
        u = g.uniform(size=(E, T, binary.size))
        targets[:, :, binary] = (u < 1.0 / (1.0 + np.exp(-logits[:, :, binary]))).astype(np.float64)
    tnames = _names("y", spec.target_dim)
    types = {n: "continuous" for n in _names("s", spec.static_dim) + _names("x", spec.feature_dim) + tnames}
    for i in binary:
        types[tnames[i]] = "binary"
    return RawSequences(
        entity_ids=np.arange(E), static=static, features=features, targets=targets,
        static_names=_names("s", spec.static_dim), feature_names=_names("x", spec.feature_dim),
        target_names=tnames, variable_types=types,
        metadata={"generator": spec.kind, "seed": spec.seed, "spec": spec.to_json()},
    )


def _raw_adversarial(spec: GeneratorSpec) -> RawSequences:
    if spec.static_dim != 10 or spec.target_dim != 50 or spec.timesteps != 1:
        raise DataSpecError("adversarial-blocks uses |x| = 10, |y| = 50 and a single timestep")
    g = rng(child_seed(spec.seed, "adversarial/params"))
    mix_x = g.standard_normal((10, 10)) / np.sqrt(10)
    mix_p = g.standard_normal((10, 10)) / np.sqrt(10)
    mix_u = g.standard_normal((40, 10)) / np.sqrt(10)
    s = rng(child_seed(spec.seed, "adversarial/sample"))
    E = spec.entities
    p = s.standard_normal((E, 10))
    u = s.standard_normal((E, 10))
    x = p @ mix_x.T + spec.noise * s.standard_normal((E, 10))
    y = np.concatenate([p @ mix_p.T, u @ mix_u.T], axis=1) + spec.noise * s.standard_normal((E, 50))
    tnames = _names("y", 50)
    types = {n: "continuous" for n in _names("s", 10) + tnames}
    return RawSequences(
        entity_ids=np.arange(E), static=x, features=np.zeros((E, 1, 0)), targets=y[:, None, :],
        static_names=_names("s", 10), feature_names=[], target_names=tnames, variable_types=types,
        metadata={
            "generator": spec.kind, "seed": spec.seed, "spec": spec.to_json(),
            "blocks": {"P": list(range(10)), "U": list(range(10, 50))},
        },
    )


def _raw_multilabel(spec: GeneratorSpec) -> RawSequences:
    g = rng(child_seed(spec.seed, "multilabel/params"))
    k = spec.latent_dim
    label_map = g.standard_normal((spec.target_dim, k)) * (1.5 / np.sqrt(k))
    feature_map = g.standard_normal((spec.static_dim, k)) / np.sqrt(k)
    s = rng(child_seed(spec.seed, "multilabel/sample"))
    E = spec.entities
    latent = s.standard_normal((E, k))
    x = latent @ feature_map.T + spec.noise * s.standard_normal((E, spec.static_dim))
    logits = latent @ label_map.T
    labels = (s.uniform(size=logits.shape) < 1.0 / (1.0 + np.exp(-logits))).astype(np.float64)
    tnames = _names("y", spec.target_dim)
    types = {n: "continuous" for n in _names("s", spec.static_dim)}
    types.update({n: "binary" for n in tnames})
    return RawSequences(
        entity_ids=np.arange(E), static=x, features=np.zeros((E, 1, 0)), targets=labels[:, None, :],
        static_names=_names("s", spec.static_dim), feature_names=[], target_names=tnames,
        variable_types=types,
        metadata={
            "generator": spec.kind, "seed": spec.seed, "spec": spec.to_json(),
            "logit_rank": int(np.linalg.matrix_rank(logits)),
            "label_marginals": labels.mean(axis=0).tolist(),
        },
    )


def generate(spec: GeneratorSpec) -> WindowedDataset:
    return window_and_split(generate_raw(spec), spec.w_x, spec.w_y, spec.split, spec.seed)


def gen_latent_factor_sequences(spec: GeneratorSpec) -> WindowedDataset:
    if spec.kind != "latent-factor-sequence":
        spec = replace(spec, kind="latent-factor-sequence")
    return generate(spec)


def gen_adversarial_blocks(spec: GeneratorSpec | None = None) -> WindowedDataset:
    return generate(spec or GeneratorSpec.adversarial())


def gen_static_multilabel(spec: GeneratorSpec | None = None) -> WindowedDataset:
    return generate(spec or GeneratorSpec.multilabel())


# persistence: one CSV row per entity-timestep plus a JSON sidecar

def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset(raw: RawSequences, csv_path: str | Path, windows: tuple[int, int] | None = None,
                  split_fractions=(0.8, 0.0, 0.2)) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    sidecar = csv_path.with_suffix(".json")
    header = ["entity_id", "t"] + raw.static_names + raw.feature_names + raw.target_names
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e, ent in enumerate(raw.entity_ids):
            static = [_fmt(v) for v in raw.static[e]]
            for t in range(raw.timesteps):
                row = [str(int(ent)), str(t)] + static
                if raw.features.shape[2]:
                    row += [_fmt(v) for v in raw.features[e, t]]
                row += [_fmt(v) for v in raw.targets[e, t]]
                w.writerow(row)
    meta = {
        "generator": raw.metadata.get("generator", "file"),
        "seed": raw.metadata.get("seed"),
        "dims": {
            "entities": int(raw.entity_ids.size), "timesteps": int(raw.timesteps),
            "static": len(raw.static_names), "features": len(raw.feature_names), "targets": len(raw.target_names),
        },
        "columns": {"static": raw.static_names, "features": raw.feature_names, "targets": raw.target_names},
        "variable_types": raw.variable_types,
        "split_fractions": list(split_fractions),
        "windows": list(windows) if windows else None,
        "generator_spec": raw.metadata.get("spec"),
        "blocks": raw.metadata.get("blocks"),
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, sidecar


def read_dataset(csv_path: str | Path) -> tuple[RawSequences, dict]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    cols = meta["columns"]
    E, T = meta["dims"]["entities"], meta["dims"]["timesteps"]
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(body) != E * T:
        raise DataSpecError(f"expected {E * T} rows, found {len(body)}")
    pos = {name: i for i, name in enumerate(header)}
    data = np.array([[float(v) for v in r] for r in body]).reshape(E, T, len(header))

    def take(names):
        return data[:, :, [pos[n] for n in names]] if names else np.zeros((E, T, 0))

    raw = RawSequences(
        entity_ids=data[:, 0, pos["entity_id"]].astype(int),
        static=take(cols["static"])[:, 0, :],
        features=take(cols["features"]),
        targets=take(cols["targets"]),
        static_names=cols["static"], feature_names=cols["features"], target_names=cols["targets"],
        variable_types=meta["variable_types"],
        metadata={"generator": meta["generator"], "seed": meta["seed"], "spec": meta.get("generator_spec")},
    )
    if meta.get("blocks"):
        raw.metadata["blocks"] = meta["blocks"]
    return raw, meta
