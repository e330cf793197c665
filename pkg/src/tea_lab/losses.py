"""Training losses as graph nodes and the composite objective.

Batches are column-major (``dim x batch``). Per-instance losses are summed
over dimensions and averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossSpec:
    """Per-variable loss kinds plus the mixing and penalty coefficients.

    ``binary_rows`` lists target entries scored with binary cross-entropy;
    every other entry uses the quadratic loss.
    """

    binary_rows: tuple[int, ...] = ()
    lam: float = 0.5
    nu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")


def _row_mask(rows: Sequence[int], shape) -> np.ndarray:
    m = np.zeros(shape)
    if len(rows):
        m[list(rows)] = 1.0
    return m


def quadratic_loss(pred: Node, target: Node) -> Node:
    if pred.shape != target.shape:
        raise ShapeError(f"quadratic loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = ad.sub(pred, target)
    return ad.scale(ad.sum(ad.mul(diff, diff)), 1.0 / pred.shape[1])


def target_loss(pred: Node, target: Node, binary_rows: Sequence[int] = ()) -> Node:
    """Quadratic loss on continuous rows plus clamped BCE on binary rows."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss: shape mismatch {pred.shape} vs {target.shape}")
    if not len(binary_rows):
        return quadratic_loss(pred, target)
    batch = pred.shape[1]
    bmask = _row_mask(binary_rows, pred.shape)
    labels = target.value[np.asarray(binary_rows)]
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("binary cross-entropy requires labels in {0, 1}")
    cmask = ad.const(1.0 - bmask)
    diff = ad.mul(cmask, ad.sub(pred, target))
    quad = ad.sum(ad.mul(diff, diff))
    p = ad.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = ad.const(bmask * target.value)
    not_y = ad.const(bmask * (1.0 - target.value))
    one = ad.const(np.ones(pred.shape))
    ll = ad.add(ad.mul(y, ad.log(p)), ad.mul(not_y, ad.log(ad.sub(one, p))))
    return ad.scale(ad.sub(quad, ad.sum(ll)), 1.0 / batch)


def prediction_loss(pred: Node, target: Node, spec: LossSpec = LossSpec()) -> Node:
    return target_loss(pred, target, spec.binary_rows)


def reconstruction_loss(recon: Node, target: Node, spec: LossSpec = LossSpec()) -> Node:
    return target_loss(recon, target, spec.binary_rows)


def latent_loss(z_pred: Node, z: Node) -> Node:
    return quadratic_loss(z_pred, z)


def l2_penalty(weights: Iterable[Node]) -> Node | None:
    total = None
    for w in weights:
        term = ad.sum(ad.mul(w, w))
        total = term if total is None else ad.add(total, term)
    return total


def composite_objective(
    pred_loss: Node | None,
    recon_loss: Node | None,
    lam: float,
    nu: float,
    weights: Iterable[Node] = (),
) -> Node:
    """``(1 - lam) * L_p + lam * L_r + nu * sum ||W||^2``."""
    LossSpec(lam=lam, nu=nu)  # range checks
    terms = []
    if pred_loss is not None:
        terms.append(ad.scale(pred_loss, 1.0 - lam))
    if recon_loss is not None:
        terms.append(ad.scale(recon_loss, lam))
    penalty = l2_penalty(weights)
    if penalty is not None and nu:
        terms.append(ad.scale(penalty, nu))
    if not terms:
        raise ValueError("composite objective needs at least one term")
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total
