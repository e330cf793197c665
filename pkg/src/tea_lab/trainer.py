"""Staged and joint training with explicit gradient routing.

A :class:`StagePlan` is an ordered list of :class:`Stage` objects. Each stage
names the losses it computes, the component groups it updates and, for every
group, which losses' gradients are applied to it. Groups outside
``trainable`` are never touched.

Loss names: ``p`` prediction, ``r`` target reconstruction, ``z`` latent
regression, ``rx`` feature reconstruction.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import components as comp
from .components import ArchSpec, ComponentSet
from .datagen import WindowedDataset
from .losses import l2_penalty, quadratic_loss, target_loss
from .metrics import MetricReport, evaluate
from .seeding import child_seed, rng

log = logging.getLogger(__name__)

PRED_LOSSES = frozenset({"p", "z"})
RECON_LOSSES = frozenset({"r", "rx"})

VARIANT_KINDS = ("Base", "Reg", "FEA", "TEA", "FTEA", "TEA_L", "TEA_LP")
ARCH_OF = {"Base": "Base", "Reg": "Reg", "FEA": "FEA", "TEA": "TEA", "FTEA": "FTEA", "TEA_L": "TEA", "TEA_LP": "TEA"}


class DivergenceError(RuntimeError):
    pass


class PlanError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 3e-3
    batch_size: int = 64
    max_iters: int = 10_000
    val_period: int = 50
    patience: int = 10
    lam: float = 0.5
    nu: float = 0.0
    seed: int = 0
    val_fraction: float = 0.2
    latent_dim: int | None = None
    model: str = "linear"
    layers: int = 1
    n_train: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.nu < 0 or self.lr <= 0 or self.batch_size <= 0 or self.max_iters < 0:
            raise ValueError("invalid training configuration")


DEFAULT_GRIDS = {
    "lr": [3e-5, 3e-4, 3e-3, 3e-2],
    "batch_size": [32, 64, 128],
    "nu": [0.0, 3e-5, 3e-4, 3e-3, 3e-2],
    "layers": [1, 2],
}


@dataclass(frozen=True)
class Stage:
    name: str
    losses: tuple[str, ...]
    trainable: tuple[str, ...]
    routing: tuple[tuple[str, tuple[str, ...]], ...]

    def route(self, group: str) -> tuple[str, ...]:
        return dict(self.routing)[group]

    def weights(self, lam: float) -> dict[str, float]:
        """Loss weights: ``1 - lam`` on prediction-type and ``lam`` on
        reconstruction-type losses when a stage mixes both, otherwise 1."""
        mixed = any(l in PRED_LOSSES for l in self.losses) and any(l in RECON_LOSSES for l in self.losses)
        if not mixed:
            return {l: 1.0 for l in self.losses}
        return {l: (1.0 - lam if l in PRED_LOSSES else lam) for l in self.losses}


def _stage(name, routing: dict[str, tuple[str, ...]]) -> Stage:
    losses = tuple(dict.fromkeys(l for ls in routing.values() for l in ls))
    return Stage(name, losses, tuple(routing), tuple(routing.items()))


STAGES = {
    "TEA": {
        "1": _stage("1", {"e": ("r",), "theta": ("r",)}),
        "2": _stage("2", {"u": ("z",)}),
        "3": _stage("3", {"u": ("p",), "e": ("r",), "theta": ("p", "r")}),
    },
    "TEA_L": {
        "3": _stage("3", {"u": ("z",), "e": ("z", "r"), "theta": ("r",)}),
    },
    "TEA_LP": {
        "3": _stage("3", {"u": ("p", "z"), "e": ("z", "r"), "theta": ("p", "r")}),
    },
    "FEA": {
        "1": _stage("1", {"phi": ("rx",), "r": ("rx",)}),
        "2": _stage("2", {"d": ("p",)}),
        "3": _stage("3", {"d": ("p",), "r": ("rx",), "phi": ("p", "rx")}),
    },
    "FTEA": {
        "1": _stage("1", {"e": ("r",), "theta": ("r",), "u": ("rx",), "r": ("rx",)}),
        "2": _stage("2", {"u": ("z",)}),
        "3": _stage("3", {"u": ("p", "rx"), "e": ("r",), "theta": ("p", "r"), "r": ("rx",)}),
    },
}
for _v in ("TEA_L", "TEA_LP"):
    STAGES[_v] = {"1": STAGES["TEA"]["1"], "2": STAGES["TEA"]["2"], **STAGES[_v]}

DIRECT = _stage("direct", {"u": ("p",), "theta": ("p",)})


@dataclass(frozen=True)
class Variant:
    """Architecture variant plus ablation flags and an optional stage order."""

    kind: str = "TEA"
    no_joint: bool = False
    no_staged: bool = False
    order: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise PlanError(f"unknown variant {self.kind!r}")
        if self.order is not None:
            if self.kind in ("Base", "Reg"):
                raise PlanError("stage order applies only to autoencoder variants")
            if set(self.order) - {"1", "2", "3"}:
                raise PlanError(f"invalid stage order {self.order}")
            if self.no_joint or self.no_staged:
                raise PlanError("stage order override cannot be combined with ablation flags")

    @property
    def neither(self) -> bool:
        return self.no_joint and self.no_staged

    @property
    def arch_kind(self) -> str:
        # with both ablations nothing of the autoencoder is left: plain direct prediction
        return "Reg" if self.neither else ARCH_OF[self.kind]

    @property
    def label(self) -> str:
        if self.order is not None:
            return f"{self.kind}@{'-'.join(self.order)}"
        if self.neither:
            return f"{self.kind}+Neither"
        if self.no_joint:
            return f"{self.kind}+NoJoint"
        if self.no_staged:
            return f"{self.kind}+NoStaged"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Variant":
        """``TEA``, ``TEA+NoJoint``, ``TEA+NoStaged``, ``TEA+Neither``, ``TEA@3-1-2``."""
        if "@" in text:
            kind, order = text.split("@", 1)
            return cls(kind, order=tuple(order.split("-")))
        kind, *flags = text.split("+")
        nj = ns = False
        for f in flags:
            if f == "NoJoint":
                nj = True
            elif f == "NoStaged":
                ns = True
            elif f == "Neither":
                nj = ns = True
            else:
                raise PlanError(f"unknown ablation flag {f!r}")
        return cls(kind, no_joint=nj, no_staged=ns)


StagePlan = list  # list[Stage]


def build_plan(variant: Variant, model: str = "linear") -> list[Stage]:
    if variant.arch_kind in ("Base", "Reg"):
        return [DIRECT]
    stages = STAGES[variant.kind]
    if variant.order is not None:
        names = variant.order
    elif variant.no_joint:
        names = ("1", "2")
    elif variant.no_staged:
        names = ("3",)
    else:
        names = ("1", "2", "3")
    return [stages[n] for n in names]


def validate_plan(plan: list[Stage], encoder_initialized: bool = False) -> None:
    """Reject plans that regress embeddings from an encoder nobody trained."""
    trained = {"e"} if encoder_initialized else set()
    for st in plan:
        if "z" in st.losses and "e" not in st.trainable and "e" not in trained:
            raise PlanError(f"stage {st.name} regresses embeddings from an untrained encoder")
        trained.update(st.trainable)


# optimizer

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8, context=""):
    """One Adam update; returns a new dict of parameter arrays and mutates ``state``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ad.ShapeError(f"adam: gradient shape {g.shape} != parameter shape {params[k].shape} for {k}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k}{' ' + context if context else ''}")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    out = {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * g * g
        state.m[k], state.v[k] = m, v
        out[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return out


# forward pass and routed gradients

def compute_losses(cs: ComponentSet, x: np.ndarray, y: np.ndarray, names, frozen=()) -> dict[str, ad.Node]:
    """Build the requested losses for a column-major batch ``x`` (|X| x B), ``y`` (|Y| x B)."""
    spec = cs.spec
    X, Y = ad.const(x), ad.const(y)
    out = {}
    z_hat = z = None
    if spec.kind in ("Base", "Reg") and set(names) - {"p"}:
        raise PlanError(f"a direct predictor only supports the prediction loss, got {sorted(names)}")
    if {"p", "z", "rx"} & set(names):
        z_hat = comp.latent_from_features(cs, X)
    if {"r", "z"} & set(names):
        z = comp.forward_encode(cs, Y)
        if "e" in frozen:
            z = ad.const(z.value)
    if "p" in names:
        out["p"] = target_loss(comp.decode_targets(cs, z_hat), Y, spec.binary_rows)
    if "r" in names:
        out["r"] = target_loss(comp.forward_decode(cs, z), Y, spec.binary_rows)
    if "z" in names:
        out["z"] = quadratic_loss(z_hat, z)
    if "rx" in names:
        out["rx"] = quadratic_loss(comp.forward_reconstruct_features(cs, z_hat), comp.feature_recon_target(spec, X))
    return out


def routed_gradients(cs: ComponentSet, stage: Stage, losses: dict[str, ad.Node], lam: float, nu: float):
    """Per-parameter gradients for the stage's trainable groups.

    Each group receives the weighted sum of gradients of the losses routed to
    it, plus ``2 nu W`` for its weight matrices.
    """
    weights = stage.weights(lam)
    all_params = cs.parameters()
    grads = {k: np.zeros_like(n.value) for k, n in cs.parameters(stage.trainable).items()}
    natural = all(set(stage.route(g)) == set(stage.losses) for g in stage.trainable)
    passes = [(None, stage.losses)] if natural else [(l, (l,)) for l in stage.losses]
    for key, names in passes:
        ad.zero_gradients(all_params.values())
        if key is None:
            root = None
            for l in names:
                term = ad.scale(losses[l], weights[l])
                root = term if root is None else ad.add(root, term)
            ad.backward(root)
            for k in grads:
                grads[k] += all_params[k].grad
            continue
        ad.backward(losses[key])
        for g in stage.trainable:
            if key in stage.route(g):
                for pname in cs[g].params:
                    k = f"{g}.{pname}"
                    grads[k] += weights[key] * all_params[k].grad
    if nu:
        for g in stage.trainable:
            for w in cs[g].weights():
                grads[w.name] += 2.0 * nu * w.value
    return grads


@dataclass
class StageData:
    """Column-major training and validation arrays."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    @classmethod
    def from_rows(cls, x_train, y_train, x_val, y_val) -> "StageData":
        return cls(*(np.ascontiguousarray(np.asarray(a, dtype=np.float64).T) for a in (x_train, y_train, x_val, y_val)))


def stage_objective(cs: ComponentSet, stage: Stage, x, y, lam: float) -> float:
    losses = compute_losses(cs, x, y, stage.losses, frozen=set(cs.components) - set(stage.trainable))
    w = stage.weights(lam)
    return float(sum(w[l] * float(losses[l].value) for l in stage.losses))


def run_stage(cs: ComponentSet, stage: Stage, data: StageData, cfg: TrainConfig, seed: int):
    """Minibatch Adam on one stage with periodic validation and best-checkpoint restore.

    Minibatches are drawn with replacement. Returns ``(cs, log)`` where ``log``
    holds one entry per validation check.
    """
    n_train = data.x_train.shape[1]
    if data.x_val.shape[1] == 0:
        raise PlanError("empty validation split")
    if n_train == 0:
        raise PlanError("empty training split")
    frozen = set(cs.components) - set(stage.trainable)
    params = cs.parameters(stage.trainable)
    state = AdamState()
    gen = rng(seed)
    stage_log = []

    def check(it, train_loss):
        val = stage_objective(cs, stage, data.x_val, data.y_val, cfg.lam)
        if not math.isfinite(val):
            raise DivergenceError(f"non-finite validation loss in stage {stage.name} at iteration {it}")
        stage_log.append({"iteration": it, "stage": stage.name, "train_loss": train_loss, "val_loss": val})
        return val

    best_val = check(0, None)
    best = cs.snapshot()
    stale = 0
    for it in range(1, cfg.max_iters + 1):
        idx = gen.integers(0, n_train, size=cfg.batch_size)
        losses = compute_losses(cs, data.x_train[:, idx], data.y_train[:, idx], stage.losses, frozen)
        weights = stage.weights(cfg.lam)
        train_loss = float(sum(weights[l] * float(losses[l].value) for l in stage.losses))
        if not math.isfinite(train_loss):
            raise DivergenceError(f"non-finite loss in stage {stage.name} at iteration {it}")
        grads = routed_gradients(cs, stage, losses, cfg.lam, cfg.nu)
        new = adam_step(
            {k: n.value for k, n in params.items()}, grads, state, cfg.lr,
            context=f"in stage {stage.name} at iteration {it}",
        )
        for k, v in new.items():
            params[k].value = v
        if it % cfg.val_period == 0:
            val = check(it, train_loss)
            if val < best_val:
                best_val, best, stale = val, cs.snapshot(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    cs.restore(best)
    cs.stage_reached = stage.name
    return cs, stage_log


# full runs

@dataclass
class RunResult:
    variant: str
    seed: int
    metrics: MetricReport
    plan: list[str]
    stage_logs: list[dict]


def arch_spec_for(variant: Variant, data: WindowedDataset, cfg: TrainConfig) -> ArchSpec:
    z = cfg.latent_dim
    if z is None:
        if cfg.model != "gru":
            raise ValueError("latent_dim is required for linear models")
        z = data.y.shape[2]
    return ArchSpec(
        kind=variant.arch_kind, x_dim=data.x_dim, y_dim=data.y_dim, z_dim=z, model=cfg.model,
        static_dim=data.static_dim, x_steps=data.w_x, y_steps=data.w_y, layers=cfg.layers,
        binary_rows=data.binary_columns,
    )


def training_subset(data: WindowedDataset, cfg: TrainConfig) -> WindowedDataset:
    """The training split, randomly restricted to ``cfg.n_train`` instances if set."""
    train = data.part("train")
    if cfg.n_train is not None:
        if cfg.n_train > len(train):
            raise ValueError(f"n_train={cfg.n_train} exceeds the {len(train)} training instances")
        keep = rng(child_seed(cfg.seed, "subsample")).permutation(len(train))[: cfg.n_train]
        train = train.subset(np.sort(keep))
    return train


def fit_split(data: WindowedDataset, cfg: TrainConfig) -> tuple[WindowedDataset, WindowedDataset]:
    """Training and validation parts for one run (entity-level carve-out if none is given)."""
    train = training_subset(data, cfg)
    val = data.part("validation")
    if len(val):
        return train, val
    ents = rng(child_seed(cfg.seed, "validation")).permutation(np.unique(train.entity))
    n_val = max(1, int(round(cfg.val_fraction * ents.size)))
    is_val = np.isin(train.entity, ents[:n_val])
    return train.subset(np.flatnonzero(~is_val)), train.subset(np.flatnonzero(is_val))


def train_components(variant: Variant, data: WindowedDataset, cfg: TrainConfig,
                     plan: list[Stage] | None = None) -> tuple[ComponentSet, list[dict], list[Stage]]:
    plan = build_plan(variant, cfg.model) if plan is None else plan
    validate_plan(plan)
    if variant.kind == "Base" and cfg.nu:
        cfg = replace(cfg, nu=0.0)
    train, val = fit_split(data, cfg)
    sd = StageData.from_rows(train.x_flat, train.y_flat, val.x_flat, val.y_flat)
    cs = comp.init_components(arch_spec_for(variant, data, cfg), child_seed(cfg.seed, "components"))
    logs = []
    for pos, stage in enumerate(plan):
        cs, stage_log = run_stage(cs, stage, sd, cfg, child_seed(cfg.seed, "minibatch", pos))
        logs.extend(stage_log)
        log.debug("%s stage %s done after %d checks", variant.label, stage.name, len(stage_log))
    return cs, logs, plan


def evaluate_components(cs: ComponentSet, test: WindowedDataset) -> MetricReport:
    """Test metrics through the inference-time hypothesis only."""
    pred = comp.predict(cs, test.x_flat)
    report = evaluate(pred, test.y_flat, test.binary_columns, test.blocks)
    if cs.has("e"):
        recon = comp.decode(cs, comp.encode(cs, test.y_flat))
        report.recon_mse = float(np.mean((recon - test.y_flat) ** 2))
    return report


def train_variant(variant: Variant, data: WindowedDataset, cfg: TrainConfig) -> tuple[ComponentSet, RunResult]:
    cs, logs, plan = train_components(variant, data, cfg)
    test = data.part("test")
    if not len(test):
        raise ValueError("dataset has no test split")
    report = evaluate_components(cs, test)
    return cs, RunResult(variant.label, cfg.seed, report, [s.name for s in plan], logs)


# hyperparameter search

def _candidates(grids: dict[str, list]) -> list[dict]:
    keys = sorted(grids)
    if not keys or any(len(grids[k]) == 0 for k in keys):
        raise ValueError("hyperparameter grids must be non-empty")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grids[k] for k in keys))]


def prediction_loss_on(cs: ComponentSet, part: WindowedDataset) -> float:
    X = ad.const(part.x_flat.T)
    Y = ad.const(part.y_flat.T)
    return float(target_loss(comp.forward_predict(cs, X), Y, cs.spec.binary_rows).value)


def tune_hyperparameters(variant: Variant, data: WindowedDataset, grids: dict[str, list] | None = None,
                         base: TrainConfig | None = None, draws: int = 20, folds: int = 3, seed: int = 0) -> TrainConfig:
    """Random search with entity-level k-fold cross-validation on the training split
    (restricted to ``base.n_train`` instances when set).

    The score of a setting is the held-out prediction loss averaged over folds;
    settings that diverge score +inf.
    """
    base = base or TrainConfig()
    grids = dict(grids or DEFAULT_GRIDS)
    if base.model == "linear":
        grids.pop("layers", None)  # layer count only exists for recurrent components
    cands = _candidates(grids)
    gen = rng(child_seed(seed, "tune"))
    if len(cands) > draws:
        pick = gen.choice(len(cands), size=draws, replace=False)
        cands = [cands[i] for i in pick]
    train = training_subset(data, base)
    ents = gen.permutation(np.unique(train.entity))
    if ents.size < folds:
        raise ValueError(f"{ents.size} training entities cannot form {folds} folds")
    fold_of = {e: k % folds for k, e in enumerate(ents)}
    fold_idx = np.array([fold_of[e] for e in train.entity])
    best_cfg, best_score = None, math.inf
    for cand in cands:
        cfg = replace(base, **cand)
        scores = []
        for k in range(folds):
            fold = replace(train, split=np.where(fold_idx == k, "test", "train"))
            try:
                cs, _, _ = train_components(variant, fold, replace(cfg, n_train=None))
                scores.append(prediction_loss_on(cs, fold.part("test")))
            except (DivergenceError, FloatingPointError):
                scores.append(math.inf)
        score = float(np.mean(scores))
        if not math.isfinite(score):
            score = math.inf
        log.info("tune %s: %s -> %.6g", variant.label, cand, score)
        if best_cfg is None or score < best_score:
            best_cfg, best_score = cfg, score
    return best_cfg
