"""Training pipelines.

Three trainers share the same seeded mini-batch SGD machinery:

* ``train_erm``: one backbone plus one pooled head, plain cross-entropy.
* ``train_decoupled``: per-group heads over the frozen ERM backbone.
* ``train_experts``: the full procedure. Each batch computes the routed
  per-group cross-entropy, the discriminator linkage loss, the center
  alignment loss, and the diversity loss, then applies one simultaneous
  momentum step per component: the discriminator moves along its own
  loss scaled by lambda_disc, the centers along the alignment and
  diversity terms, the backbone along the weighted sum of all four, and
  each head along the classification loss restricted to its group.

All gradients are evaluated at the pre-step parameters. Determinism:
given the same dataset and hyperparameters, training is bit-identical.
Named random streams (init, shuffle, pairs) derive from the seed, so the
ERM and expert runs of one seed start from the same backbone draw.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .data import Dataset
from .losses import (
    ALIGNMENT_MODES,
    NEGATIVE_RULES,
    VirtualCenters,
    center_alignment_loss,
    discriminator_loss,
    diversity_loss,
    sample_pairs,
)
from .metrics import accuracy
from .net import (
    Mlp,
    SgdState,
    TrainingDivergence,
    decay_lr,
    init_mlp,
    init_sgd,
    sgd_step,
    softmax,
    softmax_cross_entropy,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParams:
    """Loss coefficients, optimizer schedule, and architecture knobs."""

    lambda_disc: float = 0.05
    lambda_virt: float = 0.05
    lambda_div: float = 0.05
    lr0: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    hidden_dim: int = 32
    repr_dim: int = 8
    negative_rule: str = "different_both"
    alignment_mode: str = "all_groups"

    def __post_init__(self) -> None:
        if min(self.lambda_disc, self.lambda_virt, self.lambda_div) < 0:
            raise ValueError("loss coefficients must be nonnegative")
        if self.lr0 < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.negative_rule not in NEGATIVE_RULES:
            raise ValueError(f"unknown negative rule {self.negative_rule!r}")
        if self.alignment_mode not in ALIGNMENT_MODES:
            raise ValueError(f"unknown alignment mode {self.alignment_mode!r}")


@dataclass(frozen=True)
class ErmEpoch:
    epoch: int
    loss: float
    lr: float
    val_accuracy: float | None


@dataclass(frozen=True)
class ExpertsEpoch:
    epoch: int
    loss_cls: float
    loss_disc: float
    loss_virt: float
    loss_div: float
    lr: float
    val_accuracy: float | None


@dataclass
class ErmModel:
    """Pooled baseline: backbone plus a single classification head."""

    backbone: Mlp
    head: Mlp
    log: list[ErmEpoch] = field(default_factory=list)
    seed: int | None = None

    def representations(self, features: np.ndarray) -> np.ndarray:
        return self.backbone.forward(np.atleast_2d(features))[0]

    def predict_proba(self, features: np.ndarray, groups: np.ndarray | None = None) -> np.ndarray:
        z = self.representations(features)
        return softmax(self.head.forward(z)[0])


def _routed_proba(backbone: Mlp, heads: list[Mlp], features, groups) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    groups = np.atleast_1d(np.asarray(groups))
    if groups.size and (groups.min() < 0 or groups.max() >= len(heads)):
        raise ValueError("group index out of range for per-group heads")
    z = backbone.forward(features)[0]
    probs = np.empty((features.shape[0], heads[0].out_dim))
    for g in range(len(heads)):
        mask = groups == g
        if mask.any():
            probs[mask] = softmax(heads[g].forward(z[mask])[0])
    return probs


@dataclass
class ExpertsModel:
    """Group-linked backbone, discriminator, centers, per-group heads."""

    backbone: Mlp
    discriminator: Mlp
    centers: VirtualCenters
    heads: list[Mlp]
    log: list[ExpertsEpoch] = field(default_factory=list)
    seed: int | None = None

    def representations(self, features: np.ndarray) -> np.ndarray:
        return self.backbone.forward(np.atleast_2d(features))[0]

    def predict_proba(self, features: np.ndarray, groups: np.ndarray) -> np.ndarray:
        return _routed_proba(self.backbone, self.heads, features, groups)


@dataclass
class DecoupledModel:
    """Per-group heads over a frozen, ERM-trained backbone."""

    backbone: Mlp
    heads: list[Mlp]
    log: dict[int, list[ErmEpoch]] = field(default_factory=dict)
    seed: int | None = None

    def representations(self, features: np.ndarray) -> np.ndarray:
        return self.backbone.forward(np.atleast_2d(features))[0]

    def predict_proba(self, features: np.ndarray, groups: np.ndarray) -> np.ndarray:
        return _routed_proba(self.backbone, self.heads, features, groups)


def _batches(perm: np.ndarray, batch_size: int):
    for start in range(0, len(perm), batch_size):
        yield perm[start : start + batch_size]


def _val_accuracy(predict, dataset: Dataset) -> float | None:
    features, labels, groups = dataset.split_arrays("val")
    if features.shape[0] == 0:
        return None
    return accuracy(np.asarray(predict(features, groups)).argmax(axis=1), labels)


def train_erm(dataset: Dataset, hp: HyperParams) -> ErmModel:
    """Minimize pooled cross-entropy with seeded mini-batch SGD."""
    features, labels, _ = dataset.split_arrays("train")
    n = features.shape[0]
    if n == 0:
        raise ValueError("train split is empty")
    init_rng = rngmod.stream(hp.seed, rngmod.INIT)
    shuffle_rng = rngmod.stream(hp.seed, rngmod.SHUFFLE)
    backbone = init_mlp([dataset.d, hp.hidden_dim, hp.repr_dim], ["relu", "identity"], init_rng)
    head = init_mlp([hp.repr_dim, dataset.classes], ["identity"], init_rng)
    st_backbone = init_sgd(backbone.params(), hp.lr0, hp.momentum, hp.lr_decay)
    st_head = init_sgd(head.params(), hp.lr0, hp.momentum, hp.lr_decay)
    model = ErmModel(backbone, head, seed=hp.seed)

    for epoch in range(hp.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for batch in _batches(perm, hp.batch_size):
            z, cache_b = backbone.forward(features[batch])
            logits, cache_h = head.forward(z)
            loss, dlogits = softmax_cross_entropy(logits, labels[batch])
            if not np.isfinite(loss):
                raise TrainingDivergence(f"pooled loss diverged at epoch {epoch}")
            grads_h, dz = head.backward(cache_h, dlogits)
            grads_b, _ = backbone.backward(cache_b, dz)
            sgd_step(head.params(), st_head, grads_h)
            sgd_step(backbone.params(), st_backbone, grads_b)
            epoch_loss += loss * len(batch)
        model.log.append(
            ErmEpoch(epoch, epoch_loss / n, st_backbone.lr, _val_accuracy(model.predict_proba, dataset))
        )
        decay_lr(st_backbone)
        decay_lr(st_head)
    return model


def _routed_cross_entropy(
    heads: list[Mlp], z: np.ndarray, labels: np.ndarray, groups: np.ndarray
) -> tuple[float, np.ndarray, list[list[np.ndarray]]]:
    """Cross-entropy with each sample routed to its group's head.

    Averaged over the whole batch, so a head's gradient is the batch
    gradient restricted to its group's rows; heads of absent groups get
    exact zeros. Returns (loss, dZ, per-head parameter gradients).
    """
    n = z.shape[0]
    dz = np.zeros_like(z)
    total = 0.0
    head_grads: list[list[np.ndarray]] = []
    for g, head in enumerate(heads):
        idx = np.flatnonzero(groups == g)
        if idx.size == 0:
            head_grads.append([np.zeros_like(p) for p in head.params()])
            continue
        logits, cache = head.forward(z[idx])
        # per-sample terms carry the global 1/n, not 1/len(idx)
        loss_mean, dlogits = softmax_cross_entropy(logits, labels[idx])
        total += loss_mean * idx.size
        dlogits *= idx.size / n
        grads, dz_rows = head.backward(cache, dlogits)
        head_grads.append(grads)
        dz[idx] = dz_rows
    return total / n, dz, head_grads


def missing_train_cells(dataset: Dataset) -> list[tuple[int, int]]:
    """(group, class) cells with no training samples."""
    _, labels, groups = dataset.split_arrays("train")
    present = set(zip(groups.tolist(), labels.tolist()))
    return [
        (g, c)
        for g in range(dataset.num_groups)
        for c in range(dataset.classes)
        if (g, c) not in present
    ]


def train_experts(dataset: Dataset, hp: HyperParams) -> ExpertsModel:
    """Run the full decoupled-representation training procedure."""
    missing = missing_train_cells(dataset)
    if missing:
        raise ValueError(f"(group, class) cells {missing} have no training samples")
    features, labels, groups = dataset.split_arrays("train")
    n = features.shape[0]
    init_rng = rngmod.stream(hp.seed, rngmod.INIT)
    shuffle_rng = rngmod.stream(hp.seed, rngmod.SHUFFLE)
    pairs_rng = rngmod.stream(hp.seed, rngmod.PAIRS)

    # draw order matters for reproducibility: backbone, discriminator,
    # centers, then heads by group
    backbone = init_mlp([dataset.d, hp.hidden_dim, hp.repr_dim], ["relu", "identity"], init_rng)
    disc = init_mlp([hp.repr_dim, dataset.num_groups], ["identity"], init_rng)
    centers = VirtualCenters.init(dataset.num_groups, dataset.classes, hp.repr_dim, init_rng)
    heads = [
        init_mlp([hp.repr_dim, dataset.classes], ["identity"], init_rng)
        for _ in range(dataset.num_groups)
    ]
    st_backbone = init_sgd(backbone.params(), hp.lr0, hp.momentum, hp.lr_decay)
    st_disc = init_sgd(disc.params(), hp.lr0, hp.momentum, hp.lr_decay)
    st_centers = init_sgd(centers.params(), hp.lr0, hp.momentum, hp.lr_decay)
    st_heads = [init_sgd(h.params(), hp.lr0, hp.momentum, hp.lr_decay) for h in heads]
    model = ExpertsModel(backbone, disc, centers, heads, seed=hp.seed)

    for epoch in range(hp.epochs):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(4)
        for batch in _batches(perm, hp.batch_size):
            xb, yb, ab = features[batch], labels[batch], groups[batch]
            z, cache_b = backbone.forward(xb)
            if np.any(np.linalg.norm(z, axis=1) == 0.0):
                raise TrainingDivergence(
                    f"epoch {epoch}: a sample's representation is exactly zero "
                    "(all hidden units inactive); widen hidden_dim or rescale "
                    "the features"
                )

            loss_cls, dz_cls, head_grads = _routed_cross_entropy(heads, z, yb, ab)
            loss_disc, dz_disc, disc_grads = discriminator_loss(z, ab, disc)
            loss_virt, dz_virt, dv_virt = center_alignment_loss(
                z, yb, ab, centers, hp.alignment_mode
            )
            pairs = sample_pairs(yb, ab, pairs_rng, hp.negative_rule)
            loss_div, dz_div, dv_div, skipped = diversity_loss(z, yb, ab, pairs, centers)
            if skipped:
                logger.debug("epoch %d: %d samples skipped in diversity loss", epoch, skipped)
            if not all(np.isfinite(v) for v in (loss_cls, loss_disc, loss_virt, loss_div)):
                raise TrainingDivergence(f"loss diverged at epoch {epoch}")

            dz_total = (
                dz_cls
                + hp.lambda_disc * dz_disc
                + hp.lambda_virt * dz_virt
                + hp.lambda_div * dz_div
            )
            grads_b, _ = backbone.backward(cache_b, dz_total)

            # simultaneous step: all gradients above use pre-step parameters
            sgd_step(disc.params(), st_disc, [hp.lambda_disc * g for g in disc_grads])
            sgd_step(
                centers.params(),
                st_centers,
                [hp.lambda_virt * dv_virt + hp.lambda_div * dv_div],
            )
            sgd_step(backbone.params(), st_backbone, grads_b)
            for g, head in enumerate(heads):
                sgd_step(head.params(), st_heads[g], head_grads[g])

            redrawn = centers.reinit_degenerate(init_rng)
            if redrawn:
                logger.warning("epoch %d: redrew %d degenerate centers", epoch, redrawn)
            sums += np.array([loss_cls, loss_disc, loss_virt, loss_div]) * len(batch)

        means = sums / n
        model.log.append(
            ExpertsEpoch(
                epoch,
                float(means[0]),
                float(means[1]),
                float(means[2]),
                float(means[3]),
                st_backbone.lr,
                _val_accuracy(model.predict_proba, dataset),
            )
        )
        for state in (st_backbone, st_disc, st_centers, *st_heads):
            decay_lr(state)
    return model


def train_decoupled(erm: ErmModel, dataset: Dataset, hp: HyperParams) -> DecoupledModel:
    """Train per-group heads over the frozen ERM backbone."""
    backbone = erm.backbone.copy()
    features, labels, groups = dataset.split_arrays("train")
    z_all = backbone.forward(features)[0]
    heads: list[Mlp] = []
    init_rng = rngmod.stream(hp.seed, rngmod.INIT, 1)
    model = DecoupledModel(backbone, heads, seed=hp.seed)

    for g in range(dataset.num_groups):
        idx = np.flatnonzero(groups == g)
        if idx.size == 0:
            raise ValueError(f"group {g} has no training samples")
        head = init_mlp([backbone.out_dim, dataset.classes], ["identity"], init_rng)
        state = init_sgd(head.params(), hp.lr0, hp.momentum, hp.lr_decay)
        shuffle_rng = rngmod.stream(hp.seed, rngmod.SHUFFLE, 1, g)
        z_g, y_g = z_all[idx], labels[idx]
        log: list[ErmEpoch] = []
        for epoch in range(hp.epochs):
            perm = shuffle_rng.permutation(idx.size)
            epoch_loss = 0.0
            for batch in _batches(perm, hp.batch_size):
                logits, cache = head.forward(z_g[batch])
                loss, dlogits = softmax_cross_entropy(logits, y_g[batch])
                if not np.isfinite(loss):
                    raise TrainingDivergence(
                        f"decoupled head {g} diverged at epoch {epoch}"
                    )
                grads, _ = head.backward(cache, dlogits)
                sgd_step(head.params(), state, grads)
                epoch_loss += loss * len(batch)
            log.append(ErmEpoch(epoch, epoch_loss / idx.size, state.lr, None))
            decay_lr(state)
        heads.append(head)
        model.log[g] = log
    return model


def extract_representations(
    model, dataset: Dataset, split: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backbone outputs for one split, order-preserving.

    Returns (representations, labels, groups).
    """
    features, labels, groups = dataset.split_arrays(split)
    if features.shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")
    return model.representations(features), labels, groups


def train_group_probe(
    reps: np.ndarray,
    groups: np.ndarray,
    num_groups: int,
    seed: int,
    epochs: int = 25,
    lr0: float = 0.1,
) -> Mlp:
    """Fit a fresh linear group classifier on fixed representations."""
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    init_rng = rngmod.stream(seed, rngmod.PROBE)
    shuffle_rng = rngmod.stream(seed, rngmod.PROBE, 1)
    probe = init_mlp([reps.shape[1], num_groups], ["identity"], init_rng)
    state = init_sgd(probe.params(), lr0, 0.9, 0.9)
    for epoch in range(epochs):
        perm = shuffle_rng.permutation(reps.shape[0])
        for batch in _batches(perm, 64):
            logits, cache = probe.forward(reps[batch])
            loss, dlogits = softmax_cross_entropy(logits, groups[batch])
            if not np.isfinite(loss):
                raise TrainingDivergence(f"probe diverged at epoch {epoch}")
            grads, _ = probe.backward(cache, dlogits)
            sgd_step(probe.params(), state, grads)
        decay_lr(state)
    return probe


def probe_group_accuracy(
    model, dataset: Dataset, seed: int, eval_split: str = "val"
) -> float:
    """Accuracy of a freshly trained group probe on a model's representations.

    The probe is fit on train-split representations and scored on
    ``eval_split``. Measures how separable the groups are in the learned
    space.
    """
    z_train, _, g_train = extract_representations(model, dataset, "train")
    z_eval, _, g_eval = extract_representations(model, dataset, eval_split)
    probe = train_group_probe(z_train, g_train, dataset.num_groups, seed)
    return accuracy(probe.forward(z_eval)[0].argmax(axis=1), g_eval)


def discriminator_accuracy(model: ExpertsModel, dataset: Dataset, split: str) -> float:
    """Accuracy of the trained discriminator at recovering groups."""
    z, _, groups = extract_representations(model, dataset, split)
    return accuracy(model.discriminator.forward(z)[0].argmax(axis=1), groups)
