"""Parameterized component functions for every architecture.

An architecture is a named set of components:

* TEA: ``u`` (features -> latent), ``e`` (targets -> latent), ``theta`` (latent -> targets)
* FEA: ``phi`` (features -> latent), ``d`` (latent -> targets), ``r`` (latent -> features)
* FTEA: ``u``, ``e``, ``theta`` and ``r`` sharing one latent
* Base / Reg: direct prediction through ``u`` and ``theta`` with the same
  hidden width as the latent space, and no target encoder

Components are either single bias-free linear maps or GRU sequence maps. All
graph-level functions take column-major batches (``dim x batch``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .seeding import child_seed, rng

KINDS = ("Base", "Reg", "FEA", "TEA", "FTEA")
MODELS = ("linear", "gru")

COMPONENT_NAMES = {
    "Base": ("u", "theta"),
    "Reg": ("u", "theta"),
    "TEA": ("u", "e", "theta"),
    "FEA": ("phi", "d", "r"),
    "FTEA": ("u", "e", "theta", "r"),
}


class ArchitectureError(ValueError):
    pass


class UnsupportedOperation(RuntimeError):
    pass


@dataclass(frozen=True)
class ArchSpec:
    """Dimensions of one architecture.

    ``x_dim``/``y_dim`` are the flattened feature and target sizes. For GRU
    models the flattened feature vector is ``static_dim`` static values
    followed by ``x_steps`` blocks of temporal features, and the target vector
    is ``y_steps`` blocks of temporal targets. ``binary_rows`` indexes target
    entries that are probabilities (sigmoid output, BCE loss).
    """

    kind: str
    x_dim: int
    y_dim: int
    z_dim: int
    model: str = "linear"
    static_dim: int = 0
    x_steps: int = 1
    y_steps: int = 1
    layers: int = 1
    binary_rows: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArchitectureError(f"unknown architecture kind {self.kind!r}")
        if self.model not in MODELS:
            raise ArchitectureError(f"unknown model {self.model!r}")
        if min(self.x_dim, self.y_dim, self.z_dim) <= 0:
            raise ArchitectureError("dimensions must be positive")
        if self.kind in ("TEA", "FTEA") and self.z_dim >= self.y_dim:
            raise ArchitectureError(
                f"target embedding needs |Z| < |Y|, got |Z|={self.z_dim}, |Y|={self.y_dim}"
            )
        if any(not 0 <= i < self.y_dim for i in self.binary_rows):
            raise ArchitectureError("binary_rows out of range")
        if self.model == "gru":
            if self.layers not in (1, 2):
                raise ArchitectureError("GRU layer count must be 1 or 2")
            if self.x_steps < 0 or self.y_steps <= 0:
                raise ArchitectureError("window widths must be non-negative (targets positive)")
            temporal = self.x_dim - self.static_dim
            if temporal < 0 or (self.x_steps and temporal % self.x_steps):
                raise ArchitectureError("x_dim is not static_dim + x_steps * temporal dim")
            if self.x_steps == 0 and temporal:
                raise ArchitectureError("x_steps=0 requires x_dim == static_dim")
            if self.y_dim % self.y_steps:
                raise ArchitectureError("y_dim is not a multiple of y_steps")

    @property
    def x_temporal(self) -> int:
        return (self.x_dim - self.static_dim) // self.x_steps if self.x_steps else 0

    @property
    def y_temporal(self) -> int:
        return self.y_dim // self.y_steps

    @property
    def feature_recon_dim(self) -> int:
        """Size of what ``r`` reconstructs: all features (linear) or the temporal block (GRU)."""
        return self.x_dim if self.model == "linear" else self.x_dim - self.static_dim


def _glorot(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return gen.uniform(-s, s, size=(rows, cols))


def _ones_row(batch: int) -> Node:
    return ad.const(np.ones((1, batch)))


class Component:
    name: str
    params: dict[str, Node]

    def weights(self) -> list[Node]:
        """Parameters subject to the l2 penalty (matrices, not bias vectors)."""
        return [p for k, p in self.params.items() if not k.startswith("b") and not k.startswith("c")]

    def n_params(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))


class LinearMap(Component):
    """Single bias-free linear layer: ``out = W @ inp``."""

    def __init__(self, name: str, in_dim: int, out_dim: int, gen: np.random.Generator):
        self.name = name
        self.params = {"W": ad.param(_glorot(gen, out_dim, in_dim), name=f"{name}.W")}

    def __call__(self, inp: Node) -> Node:
        return ad.matmul(self.params["W"], inp)


def _gru_step(p: dict[str, Node], suffix: str, h: Node, x: Node | None, ones: Node) -> Node:
    def pre(gate):
        a = ad.add(ad.matmul(p[f"U{gate}{suffix}"], h), ad.matmul(p[f"b{gate}{suffix}"], ones))
        if x is not None:
            a = ad.add(a, ad.matmul(p[f"W{gate}{suffix}"], x))
        return a

    update = ad.sigmoid(pre("z"))
    reset = ad.sigmoid(pre("r"))
    cand = ad.add(ad.matmul(p[f"Uh{suffix}"], ad.mul(reset, h)), ad.matmul(p[f"bh{suffix}"], ones))
    if x is not None:
        cand = ad.add(cand, ad.matmul(p[f"Wh{suffix}"], x))
    cand = ad.tanh(cand)
    return ad.add(h, ad.mul(update, ad.sub(cand, h)))


class GruEncoder(Component):
    """GRU over a block of ``steps`` inputs; returns the top layer's final state.

    With ``static_dim > 0`` the first ``static_dim`` input rows are static
    covariates mapped into every layer's initial state.
    """

    def __init__(self, name, static_dim, step_dim, steps, hidden, layers, gen):
        self.name = name
        self.static_dim, self.step_dim, self.steps = static_dim, step_dim, steps
        self.hidden, self.layers = hidden, layers
        p: dict[str, Node] = {}
        for layer in range(layers):
            in_dim = step_dim if layer == 0 else hidden
            for gate in "zrh":
                if steps and in_dim:
                    p[f"W{gate}{layer}"] = ad.param(_glorot(gen, hidden, in_dim), name=f"{name}.W{gate}{layer}")
                p[f"U{gate}{layer}"] = ad.param(_glorot(gen, hidden, hidden), name=f"{name}.U{gate}{layer}")
                p[f"b{gate}{layer}"] = ad.param(np.zeros((hidden, 1)), name=f"{name}.b{gate}{layer}")
            if static_dim:
                p[f"S{layer}"] = ad.param(_glorot(gen, hidden, static_dim), name=f"{name}.S{layer}")
        self.params = p

    def __call__(self, inp: Node) -> Node:
        batch = inp.shape[1]
        ones = _ones_row(batch)
        if self.static_dim:
            static = ad.slice_rows(inp, 0, self.static_dim)
            states = [ad.matmul(self.params[f"S{l}"], static) for l in range(self.layers)]
        else:
            states = [ad.const(np.zeros((self.hidden, batch))) for _ in range(self.layers)]
        off = self.static_dim
        for t in range(self.steps):
            x = ad.slice_rows(inp, off + t * self.step_dim, off + (t + 1) * self.step_dim)
            for layer in range(self.layers):
                states[layer] = _gru_step(self.params, str(layer), states[layer], x, ones)
                x = states[layer]
        return states[-1]


class GruDecoder(Component):
    """State-driven GRU decoder: starts every layer from the latent, feeds zero
    inputs, and reads out each step through a linear head (with bias)."""

    def __init__(self, name, hidden, out_dim, steps, layers, gen):
        self.name = name
        self.hidden, self.out_dim, self.steps, self.layers = hidden, out_dim, steps, layers
        p: dict[str, Node] = {}
        for layer in range(layers):
            for gate in "zrh":
                if layer > 0:
                    p[f"W{gate}{layer}"] = ad.param(_glorot(gen, hidden, hidden), name=f"{name}.W{gate}{layer}")
                p[f"U{gate}{layer}"] = ad.param(_glorot(gen, hidden, hidden), name=f"{name}.U{gate}{layer}")
                p[f"b{gate}{layer}"] = ad.param(np.zeros((hidden, 1)), name=f"{name}.b{gate}{layer}")
        p["V"] = ad.param(_glorot(gen, out_dim, hidden), name=f"{name}.V")
        p["c"] = ad.param(np.zeros((out_dim, 1)), name=f"{name}.c")
        self.params = p

    def __call__(self, z: Node) -> Node:
        batch = z.shape[1]
        ones = _ones_row(batch)
        states = [z] * self.layers
        outputs = []
        for _ in range(self.steps):
            x = None
            for layer in range(self.layers):
                states[layer] = _gru_step(self.params, str(layer), states[layer], x, ones)
                x = states[layer]
            outputs.append(ad.add(ad.matmul(self.params["V"], x), ad.matmul(self.params["c"], ones)))
        return ad.concat_rows(outputs)


def component_names(spec: ArchSpec) -> tuple[str, ...]:
    return COMPONENT_NAMES[spec.kind]


def _build(spec: ArchSpec, name: str, gen: np.random.Generator) -> Component:
    z = spec.z_dim
    if spec.model == "linear":
        dims = {
            "u": (spec.x_dim, z), "phi": (spec.x_dim, z), "e": (spec.y_dim, z),
            "theta": (z, spec.y_dim), "d": (z, spec.y_dim), "r": (z, spec.x_dim),
        }[name]
        return LinearMap(name, *dims, gen)
    if name in ("u", "phi"):
        return GruEncoder(name, spec.static_dim, spec.x_temporal, spec.x_steps, z, spec.layers, gen)
    if name == "e":
        return GruEncoder(name, 0, spec.y_temporal, spec.y_steps, z, spec.layers, gen)
    if name in ("theta", "d"):
        return GruDecoder(name, z, spec.y_temporal, spec.y_steps, spec.layers, gen)
    return GruDecoder(name, z, spec.x_temporal, spec.x_steps, spec.layers, gen)


@dataclass
class ComponentSet:
    spec: ArchSpec
    seed: int
    components: dict[str, Component] = field(repr=False)
    stage_reached: str = "init"

    def __getitem__(self, name: str) -> Component:
        return self.components[name]

    def has(self, name: str) -> bool:
        return name in self.components

    def parameters(self, groups=None) -> dict[str, Node]:
        out = {}
        for cname, comp in self.components.items():
            if groups is not None and cname not in groups:
                continue
            for pname, node in comp.params.items():
                out[f"{cname}.{pname}"] = node
        return out

    def n_params(self) -> int:
        return int(sum(c.n_params() for c in self.components.values()))

    def clone(self) -> "ComponentSet":
        return copy.deepcopy(self)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: n.value.copy() for k, n in self.parameters().items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, n in self.parameters().items():
            n.value = values[k].copy()


def init_components(spec: ArchSpec, seed: int) -> ComponentSet:
    """Scaled-uniform weights, zero biases.

    Each component draws from its own seed-tree stream, so a component with the
    same name and shape is initialized identically across architecture kinds.
    """
    comps = {}
    for name in component_names(spec):
        comps[name] = _build(spec, name, rng(child_seed(seed, f"init/{name}")))
    return ComponentSet(spec=spec, seed=int(seed), components=comps)


def _activate(spec: ArchSpec, a: Node) -> Node:
    if not spec.binary_rows:
        return a
    mask = np.zeros(a.shape)
    mask[list(spec.binary_rows)] = 1.0
    return ad.add(a, ad.mul(ad.const(mask), ad.sub(ad.sigmoid(a), a)))


# graph-level functions (column-major Node in, Node out)

def latent_from_features(cs: ComponentSet, x: Node) -> Node:
    return cs["phi" if cs.spec.kind == "FEA" else "u"](x)


def decode_targets(cs: ComponentSet, z: Node) -> Node:
    return _activate(cs.spec, cs["d" if cs.spec.kind == "FEA" else "theta"](z))


def forward_predict(cs: ComponentSet, x: Node) -> Node:
    return decode_targets(cs, latent_from_features(cs, x))


def forward_encode(cs: ComponentSet, y: Node) -> Node:
    if not cs.has("e"):
        raise UnsupportedOperation(f"{cs.spec.kind} has no target encoder")
    return cs["e"](y)


def forward_decode(cs: ComponentSet, z: Node) -> Node:
    if not cs.has("e"):
        raise UnsupportedOperation(f"{cs.spec.kind} has no target encoder")
    return decode_targets(cs, z)


def forward_reconstruct_features(cs: ComponentSet, z: Node) -> Node:
    if not cs.has("r"):
        raise UnsupportedOperation(f"{cs.spec.kind} has no feature reconstructor")
    return cs["r"](z)


def feature_recon_target(spec: ArchSpec, x: Node) -> Node:
    if spec.model == "linear" or spec.static_dim == 0:
        return x
    return ad.slice_rows(x, spec.static_dim, spec.x_dim)


# array-level convenience wrappers (row-major: one instance per row)

def _as_cols(a: np.ndarray, dim: int) -> Node:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ad.ShapeError(f"expected instances of dimension {dim}, got array of shape {a.shape}")
    return ad.const(a.T)


def predict(cs: ComponentSet, x: np.ndarray) -> np.ndarray:
    """Inference-time hypothesis; rows of ``x`` are flattened feature vectors."""
    squeeze = np.ndim(x) == 1
    out = forward_predict(cs, _as_cols(x, cs.spec.x_dim)).value.T
    return out[0] if squeeze else out


def encode(cs: ComponentSet, y: np.ndarray) -> np.ndarray:
    squeeze = np.ndim(y) == 1
    out = forward_encode(cs, _as_cols(y, cs.spec.y_dim)).value.T
    return out[0] if squeeze else out


def decode(cs: ComponentSet, z: np.ndarray) -> np.ndarray:
    squeeze = np.ndim(z) == 1
    out = forward_decode(cs, _as_cols(z, cs.spec.z_dim)).value.T
    return out[0] if squeeze else out


# checkpoints: manifest.json + params.bin (little-endian float64, manifest order)

def save_checkpoint(cs: ComponentSet, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = cs.parameters()
    spec = asdict(cs.spec)
    spec["binary_rows"] = list(spec["binary_rows"])
    manifest = {
        "architecture_kind": cs.spec.kind,
        "dims": spec,
        "seed": cs.seed,
        "stage_reached": cs.stage_reached,
        "parameters": [{"name": k, "shape": list(n.shape)} for k, n in params.items()],
    }
    with open(directory / "params.bin", "wb") as fh:
        for node in params.values():
            fh.write(np.ascontiguousarray(node.value, dtype="<f8").tobytes())
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory: str | Path) -> ComponentSet:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    dims = dict(manifest["dims"])
    dims["binary_rows"] = tuple(dims["binary_rows"])
    cs = init_components(ArchSpec(**dims), manifest["seed"])
    raw = np.frombuffer((directory / "params.bin").read_bytes(), dtype="<f8")
    params = cs.parameters()
    offset = 0
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        node = params[entry["name"]]
        if node.shape != shape:
            raise ArchitectureError(f"checkpoint shape mismatch for {entry['name']}")
        node.value = raw[offset:offset + size].astype(np.float64).reshape(shape)
        offset += size
    if offset != raw.size:
        raise ArchitectureError("checkpoint payload size does not match manifest")
    cs.stage_reached = manifest["stage_reached"]
    return cs
