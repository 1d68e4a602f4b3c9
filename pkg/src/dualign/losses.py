"""Training objectives: InfoNCE-style contrastive terms coupling the two
embedding spaces and spreading entities within a graph, a margin-based
alignment hinge over seed links, negative sampling, and the weighted total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import KgPair
from .model import EncodedPair


@dataclass
class LossWeights:
    """Weighting knobs: lam scales both contrastive terms, gamma is the
    alignment margin, tau the contrastive temperature."""

    lam: float = 300.0
    gamma: float = 1.0
    tau: float = 1.0
    intra_on_both_graphs: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass
class NegativeBatch:
    """K corrupted pairs per seed pair, with exactly one side replaced."""

    pos_left: np.ndarray    # (P,) KG1 ids of the positives
    pos_right: np.ndarray   # (P,) KG2 ids
    neg_left: np.ndarray    # (P*K,)
    neg_right: np.ndarray   # (P*K,)
    k: int


def contrastive_loss(view_a: Tensor, view_b: Tensor, entity_rows=None, tau: float = 1.0) -> Tensor:
    """Mean InfoNCE over anchors: -log softmax of the matching row's
    similarity among all rows of view_b.

    Rows are L2-normalized internally; similarity is the dot product / tau.
    The denominator always ranges over every entity of view_b (full-graph
    negatives); `entity_rows` restricts only which anchors are averaged.
    """
    if view_a.shape != view_b.shape:
        raise ad.ShapeError(f"contrastive views differ in shape: {view_a.shape} vs {view_b.shape}")
    a = ad.rows_l2_normalize(view_a)
    b = ad.rows_l2_normalize(view_b)
    sims = ad.scale(ad.matmul(a, ad.transpose(b)), 1.0 / tau)
    per_entity = ad.sub(ad.logsumexp_rows(sims), ad.diag_part(sims))
    if entity_rows is not None:
        per_entity = ad.gather_rows(per_entity, np.asarray(entity_rows, dtype=np.int64))
    return ad.scale(ad.total_sum(per_entity), 1.0 / per_entity.rows)


def contrastive_loss_reference(view_a: np.ndarray, view_b: np.ndarray, tau: float = 1.0) -> float:
    """Naive double-loop recomputation of contrastive_loss (test oracle)."""
    def norm_rows(m):
        out = m.astype(np.float64).copy()
        for i in range(out.shape[0]):
            r = np.linalg.norm(out[i])
            if r > 0:
                out[i] /= r
        return out

    a, b = norm_rows(view_a), norm_rows(view_b)
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        logits = np.array([np.dot(a[i], b[k]) / tau for k in range(n)])
        m = logits.max()
        total += -(logits[i] - (m + np.log(np.exp(logits - m).sum())))
    return total / n


def inter_loss(enc: EncodedPair, tau: float = 1.0) -> Tensor:
    """Symmetric cross-space consistency: for each KG, anchor each entity's
    Euclidean view against the hyperbolic view and vice versa, averaged."""
    terms = []
    for euclid, hyper in enc.views():
        fwd = contrastive_loss(euclid, hyper, tau=tau)
        rev = contrastive_loss(hyper, euclid, tau=tau)
        terms.append(ad.scale(ad.add(fwd, rev), 0.5))
    return ad.add(terms[0], terms[1])


def intra_loss(enc: EncodedPair, weights: LossWeights) -> Tensor:
    """Self-view InfoNCE on KG1's Euclidean embedding, pushing entities of
    the same graph apart; optionally also on KG2."""
    loss = contrastive_loss(enc.euclid1, enc.euclid1, tau=weights.tau)
    if weights.intra_on_both_graphs:
        loss = ad.add(loss, contrastive_loss(enc.euclid2, enc.euclid2, tau=weights.tau))
    return loss


def sample_negatives(pair: KgPair, k: int, seed: int, epoch: int) -> NegativeBatch:
    """K corruptions per train link; the replaced side is chosen uniformly
    and the replacement drawn uniformly from that KG excluding the original.

    Deterministic in (seed, epoch); resample by advancing epoch.
    """
    if not pair.train_links:
        raise ValueError("cannot sample negatives without train links")
    if k < 1:
        raise ValueError("need at least one negative per positive")
    n1, n2 = pair.kg1.n_entities, pair.kg2.n_entities
    if n1 < 2 or n2 < 2:
        raise ValueError("cannot corrupt links in a single-entity KG")
    rng = np.random.default_rng((seed, epoch))
    pos_left = np.array([a for a, _ in pair.train_links], dtype=np.int64)
    pos_right = np.array([b for _, b in pair.train_links], dtype=np.int64)
    p = len(pos_left)

    side = rng.integers(0, 2, size=(p, k))
    repl1 = rng.integers(0, n1 - 1, size=(p, k))
    repl1 += repl1 >= pos_left[:, None]
    repl2 = rng.integers(0, n2 - 1, size=(p, k))
    repl2 += repl2 >= pos_right[:, None]
    neg_left = np.where(side == 0, repl1, pos_left[:, None]).ravel()
    neg_right = np.where(side == 0, pos_right[:, None], repl2).ravel()
    return NegativeBatch(pos_left, pos_right, neg_left, neg_right, k)


def margin_loss(enc: EncodedPair, positives, negatives: NegativeBatch, gamma: float) -> Tensor:
    """Hinge sum over (positive, negative) pairs on Euclidean-view L2
    distances: [d_pos + gamma - d_neg]_+ ."""
    if gamma < 0:
        raise ValueError("margin gamma must be nonnegative")
    pos_left = np.array([a for a, _ in positives], dtype=np.int64)
    pos_right = np.array([b for _, b in positives], dtype=np.int64)
    if len(negatives.neg_left) != len(pos_left) * negatives.k:
        raise ValueError("negative batch does not match the positives")
    z1, z2 = enc.euclid1, enc.euclid2
    d_pos = ad.row_norms(ad.sub(ad.gather_rows(z1, pos_left), ad.gather_rows(z2, pos_right)))
    d_neg = ad.row_norms(
        ad.sub(ad.gather_rows(z1, negatives.neg_left), ad.gather_rows(z2, negatives.neg_right))
    )
    rep = np.repeat(np.arange(len(pos_left)), negatives.k)
    margin_col = Tensor.full(len(rep), 1, gamma)
    hinge = ad.relu(ad.sub(ad.add(ad.gather_rows(d_pos, rep), margin_col), d_neg))
    return ad.total_sum(hinge)


def combine_losses(
    ea: Tensor,
    inter: Tensor | None,
    intra: Tensor | None,
    lam: float,
) -> Tensor:
    """total = ea + lam * (inter + intra), with disabled terms dropped."""
    reg = None
    for term in (inter, intra):
        if term is not None:
            reg = term if reg is None else ad.add(reg, term)
    if reg is None or lam == 0.0:
        return ea
    return ad.add(ea, ad.scale(reg, lam))


def total_loss(
    enc: EncodedPair,
    pair: KgPair,
    weights: LossWeights,
    seed: int,
    epoch: int,
    k: int = 5,
    use_inter: bool = True,
    use_intra: bool = True,
) -> tuple[Tensor, dict[str, float]]:
    """Assemble the full objective; returns the scalar and a float breakdown.

    Ablations drop a term from the recorded graph entirely, so parameters
    reachable only through a disabled term receive no gradient.
    """
    negatives = sample_negatives(pair, k, seed, epoch)
    ea = margin_loss(enc, pair.train_links, negatives, weights.gamma)
    inter = inter_loss(enc, weights.tau) if use_inter else None
    intra = intra_loss(enc, weights) if use_intra else None
    total = combine_losses(ea, inter, intra, weights.lam)
    parts = {
        "ea": ea.item(),
        "inter": inter.item() if inter is not None else 0.0,
        "intra": intra.item() if intra is not None else 0.0,
        "total": total.item(),
    }
    return total, parts
