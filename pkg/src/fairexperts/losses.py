"""Representation-shaping losses for demographic experts.

Three losses act on a batch of representations Z (one row per sample):

* discriminator linkage: negative log-likelihood of each sample's true
  group under a softmax group discriminator. Minimizing it pulls group
  identity into the representation (deliberately non-adversarial).
* center alignment: learnable per-(group, class) center vectors are tied
  to samples through a softmax over cosine similarities, taken against
  every group's center row for each sample; cross-entropy of the true
  class aligns centers and samples in both directions.
* diversity: a contrastive log-ratio that pulls a sample toward a
  same-(group, class) partner and its own cell center, and pushes it
  from a partner differing in both coordinates and from the centers of
  all cells differing in both coordinates.

Losses are averaged over the batch and return analytic gradients with
respect to the representations and to the centers or discriminator
parameters involved. Partner dot products are taken on unnormalized
representations; every exponent is clamped to [-EXP_CLAMP, EXP_CLAMP]
before exponentiation (a no-op for cosines, which live in [-1, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import Mlp, TrainingDivergence, kaiming_uniform, log_softmax, softmax_cross_entropy

EXP_CLAMP = 30.0
CENTER_NORM_FLOOR = 1e-8
NEGATIVE_RULES = ("different_both", "different_either")
ALIGNMENT_MODES = ("all_groups", "own_group")


@dataclass
class VirtualCenters:
    """Learnable center vectors, one per (group, class) cell."""

    vectors: np.ndarray  # (G, C, m)

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3:
            raise ValueError("centers must have shape (groups, classes, dim)")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("center entries must be finite")
        if np.any(np.linalg.norm(self.vectors, axis=-1) == 0.0):
            raise ValueError("center vectors must be nonzero")

    @classmethod
    def init(cls, groups: int, classes: int, dim: int, rng: np.random.Generator) -> "VirtualCenters":
        return cls(kaiming_uniform((groups, classes, dim), dim, rng))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.vectors.shape

    def params(self) -> list[np.ndarray]:
        return [self.vectors]

    def copy(self) -> "VirtualCenters":
        return VirtualCenters(self.vectors.copy())

    def reinit_degenerate(self, rng: np.random.Generator, floor: float = CENTER_NORM_FLOOR) -> int:
        """Redraw any center whose norm fell below ``floor``.

        Keeps cosine similarity defined under aggressive updates. Returns
        the number of redrawn centers so callers can log the anomaly.
        """
        norms = np.linalg.norm(self.vectors, axis=-1)
        bad = norms < floor
        count = int(bad.sum())
        if count:
            dim = self.vectors.shape[-1]
            self.vectors[bad] = kaiming_uniform((count, dim), dim, rng)
        return count


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(u @ v / (nu * nv))


@dataclass(frozen=True)
class PairAssignment:
    """Partner indices per batch position; -1 marks no eligible partner.

    A positive partner shares both class and group; a negative partner
    differs according to the sampling rule (by default in both class and
    group).
    """

    positive: np.ndarray  # (n,) int64
    negative: np.ndarray  # (n,) int64


def sample_pairs(
    labels: np.ndarray,
    groups: np.ndarray,
    gen: np.random.Generator,
    negative_rule: str = "different_both",
) -> PairAssignment:
    """Draw positive/negative partners uniformly among eligible indices.

    For each sample in batch order, the positive partner is drawn first,
    then the negative. Entries with no eligible partner get -1.
    """
    if negative_rule not in NEGATIVE_RULES:
        raise ValueError(f"unknown negative rule {negative_rule!r}")
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    n = len(labels)
    positive = np.full(n, -1, dtype=np.int64)
    negative = np.full(n, -1, dtype=np.int64)
    idx = np.arange(n)
    for i in range(n):
        pos_mask = (labels == labels[i]) & (groups == groups[i])
        pos_mask[i] = False
        cand = idx[pos_mask]
        if cand.size:
            positive[i] = cand[gen.integers(cand.size)]
        if negative_rule == "different_both":
            neg_mask = (labels != labels[i]) & (groups != groups[i])
        else:
            neg_mask = (labels != labels[i]) | (groups != groups[i])
            neg_mask[i] = False
        cand = idx[neg_mask]
        if cand.size:
            negative[i] = cand[gen.integers(cand.size)]
    return PairAssignment(positive, negative)


def discriminator_loss(
    reps: np.ndarray, groups: np.ndarray, disc: Mlp
) -> tuple[float, np.ndarray, list[np.ndarray]]:
    """Group NLL under the discriminator, batch-averaged.

    Returns (loss, gradient w.r.t. representations, gradients w.r.t.
    discriminator parameters in ``params()`` order).
    """
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    groups = np.atleast_1d(np.asarray(groups))
    if groups.size and (groups.min() < 0 or groups.max() >= disc.out_dim):
        raise ValueError("group index out of range for discriminator output")
    logits, cache = disc.forward(reps)
    loss, dlogits = softmax_cross_entropy(logits, groups)
    dparams, dreps = disc.backward(cache, dlogits)
    return loss, dreps, dparams


class _CosineSystem:
    """Shared plumbing for all-pairs cosine similarities and gradients."""

    def __init__(self, reps: np.ndarray, centers: VirtualCenters):
        self.z = np.atleast_2d(np.asarray(reps, dtype=np.float64))
        self.v = centers.vectors
        self.z_norm = np.linalg.norm(self.z, axis=1)  # (n,)
        self.v_norm = np.linalg.norm(self.v, axis=2)  # (G, C)
        if np.any(self.z_norm == 0.0):
            raise ValueError("cosine similarity undefined for zero-norm representation")
        if np.any(self.v_norm == 0.0):
            raise ValueError("cosine similarity undefined for zero-norm center")
        self.z_hat = self.z / self.z_norm[:, None]
        self.v_hat = self.v / self.v_norm[:, :, None]
        # cos[i, g, c] = cosine(V[g, c], z_i)
        self.cos = np.einsum("nm,gcm->ngc", self.z_hat, self.v_hat)

    def grads(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map dL/dcos weights (n, G, C) to (dL/dZ, dL/dV)."""
        wc = weights * self.cos
        dz = np.einsum("ngc,gcm->nm", weights, self.v_hat)
        dz -= wc.sum(axis=(1, 2))[:, None] * self.z_hat
        dz /= self.z_norm[:, None]
        dv = np.einsum("ngc,nm->gcm", weights, self.z_hat)
        dv -= wc.sum(axis=0)[:, :, None] * self.v_hat
        dv /= self.v_norm[:, :, None]
        return dz, dv


def center_alignment_loss(
    reps: np.ndarray,
    labels: np.ndarray,
    groups: np.ndarray,
    centers: VirtualCenters,
    mode: str = "all_groups",
) -> tuple[float, np.ndarray, np.ndarray]:
    """Bidirectional sample/center alignment, batch-averaged.

    For each sample and each group's center row (or only the sample's
    own row in ``own_group`` mode), the cross-entropy of the true class
    under a softmax over cosine similarities to that row's per-class
    centers. Returns (loss, dZ, dV).
    """
    if mode not in ALIGNMENT_MODES:
        raise ValueError(f"unknown alignment mode {mode!r}")
    labels = np.atleast_1d(np.asarray(labels))
    groups = np.atleast_1d(np.asarray(groups))
    g_total, c_total, _ = centers.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c_total):
        raise ValueError("label index out of range for centers")
    if labels.size and (groups.min() < 0 or groups.max() >= g_total):
        raise ValueError("group index out of range for centers")
    sys = _CosineSystem(reps, centers)
    n = sys.z.shape[0]
    logp = log_softmax(sys.cos)  # softmax over classes, per (sample, group)
    rows = np.arange(n)
    # weights[i, g, c] = d loss / d cos[i, g, c]
    weights = np.exp(logp)
    weights[rows, :, labels] -= 1.0
    per_group_ce = -logp[rows, :, labels]  # (n, G)
    if mode == "own_group":
        keep = np.zeros((n, g_total), dtype=bool)
        keep[rows, groups] = True
        per_group_ce = np.where(keep, per_group_ce, 0.0)
        weights *= keep[:, :, None]
    loss = float(per_group_ce.sum() / n)
    weights /= n
    dz, dv = sys.grads(weights)
    return loss, dz, dv


def diversity_loss(
    reps: np.ndarray,
    labels: np.ndarray,
    groups: np.ndarray,
    pairs: PairAssignment,
    centers: VirtualCenters,
) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Contrastive pull/push over partners and centers, batch-averaged.

    Per sample: -log of (exp(z.z_pos) + exp(cos to own cell center)) over
    (exp(z.z_neg) + sum of exp(cos) to centers differing in both group
    and class). A missing partner drops its exponential; a sample whose
    denominator would be empty is skipped. Returns
    (loss, dZ, dV, skipped_count). The value may be negative.
    """
    labels = np.atleast_1d(np.asarray(labels))
    groups = np.atleast_1d(np.asarray(groups))
    sys = _CosineSystem(reps, centers)
    z = sys.z
    n = z.shape[0]
    g_total, c_total, _ = centers.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c_total):
        raise ValueError("label index out of range for centers")
    if labels.size and (groups.min() < 0 or groups.max() >= g_total):
        raise ValueError("group index out of range for centers")
    for name, partner in (("positive", pairs.positive), ("negative", pairs.negative)):
        partner = np.asarray(partner)
        if partner.shape != (n,):
            raise ValueError(f"{name} partner array must have one entry per sample")
        bad = (partner >= n) | (partner < -1) | ((partner >= 0) & (partner == np.arange(n)))
        if np.any(bad):
            raise ValueError(f"{name} partner index invalid at positions {np.flatnonzero(bad)}")

    pos = pairs.positive
    neg = pairs.negative
    has_pos = pos >= 0
    has_neg = neg >= 0
    rows = np.arange(n)

    dot_pos = np.where(has_pos, np.einsum("nm,nm->n", z, z[pos]), 0.0)
    dot_neg = np.where(has_neg, np.einsum("nm,nm->n", z, z[neg]), 0.0)
    if not (np.all(np.isfinite(dot_pos)) and np.all(np.isfinite(dot_neg))):
        raise TrainingDivergence("non-finite representation dot products")

    def clamped_exp(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        active = np.abs(x) < EXP_CLAMP
        return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP)), active

    exp_pos, act_pos = clamped_exp(dot_pos)
    exp_neg, act_neg = clamped_exp(dot_neg)
    exp_pos = exp_pos * has_pos
    exp_neg = exp_neg * has_neg

    own = sys.cos[rows, groups, labels]
    exp_own = np.exp(own)
    other = (np.arange(g_total)[:, None] != groups[:, None, None]) & (
        np.arange(c_total)[None, :] != labels[:, None, None]
    )  # (n, G, C)
    exp_other = np.exp(sys.cos) * other

    numer = exp_pos + exp_own  # own-center term keeps this nonempty
    has_denom = has_neg | other.any(axis=(1, 2))
    denom = exp_neg + exp_other.sum(axis=(1, 2))
    skipped = int((~has_denom).sum())

    contrib = np.where(has_denom, np.log(np.where(has_denom, denom, 1.0)) - np.log(numer), 0.0)
    loss = float(contrib.sum() / n)
    if not np.isfinite(loss):
        raise TrainingDivergence("diversity loss diverged despite exponent clamping")

    live = has_denom.astype(np.float64)
    coef_pos = -(exp_pos / numer) * act_pos * live / n
    coef_neg = (exp_neg / np.where(has_denom, denom, 1.0)) * act_neg * live / n
    coef_own = -(exp_own / numer) * live / n
    w_other = exp_other / np.where(has_denom, denom, 1.0)[:, None, None] * live[:, None, None] / n

    dz = np.zeros_like(z)
    dz += coef_pos[:, None] * np.where(has_pos[:, None], z[pos], 0.0)
    dz += coef_neg[:, None] * np.where(has_neg[:, None], z[neg], 0.0)
    np.add.at(dz, pos[has_pos], coef_pos[has_pos, None] * z[has_pos])
    np.add.at(dz, neg[has_neg], coef_neg[has_neg, None] * z[has_neg])

    weights = w_other.copy()
    weights[rows, groups, labels] += coef_own
    dz_cos, dv = sys.grads(weights)
    dz += dz_cos
    return loss, dz, dv, skipped
