"""Forward-pass blocks: Euclidean GAT stack with cross-layer attention,
hyperbolic GCN, bidirectional relation encoder, and their fusion.

One set of layer weights serves both KGs (a single model over two graphs);
only the initial entity/relation embedding rows are KG-specific.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ball import exp_map0, log_map0
from .data import GraphTensors
from .optim import xavier_init

LEAKY_SLOPE = 0.2


@dataclass
class ModelParams:
    """All trainable matrices, with the KG1/KG2 row split recorded.

    z0 stacks both KGs' initial entity embeddings (KG1 rows first), r0 both
    relation vocabularies. GAT layers carry a diagonal transform (stored as a
    1 x d_e row) and an additive-attention vector (2*d_e x 1).
    """

    z0: Tensor
    r0: Tensor
    gat_diag: list[Tensor]
    gat_attn: list[Tensor]
    w_q: Tensor
    w_k: Tensor
    hgcn_w: list[Tensor]
    n1: int
    m1: int

    @classmethod
    def create(
        cls,
        n1: int,
        n2: int,
        m1: int,
        m2: int,
        d_e: int,
        d_r: int,
        layers: int,
        seed: int,
    ) -> "ModelParams":
        if d_e < 1 or d_r < 1:
            raise ValueError("embedding dimensions must be positive")
        if layers < 1:
            raise ValueError("need at least one encoder layer")
        if n1 < 1 or n2 < 1 or m1 + m2 < 1:
            raise ValueError("both KGs need entities and at least one relation overall")
        rng = np.random.default_rng(seed)
        # draw order is fixed; it is part of the determinism contract
        z0 = xavier_init(n1 + n2, d_e, rng)
        r0 = xavier_init(m1 + m2, d_r, rng)
        gat_diag = [xavier_init(1, d_e, rng) for _ in range(layers)]
        gat_attn = [xavier_init(2 * d_e, 1, rng) for _ in range(layers)]
        w_q = xavier_init(d_e, d_e, rng)
        w_k = xavier_init(d_e, d_e, rng)
        hgcn_w = [xavier_init(d_e, d_e, rng) for _ in range(layers)]
        return cls(z0, r0, gat_diag, gat_attn, w_q, w_k, hgcn_w, n1, m1)

    @property
    def layers(self) -> int:
        return len(self.gat_diag)

    @property
    def d_e(self) -> int:
        return self.z0.cols

    @property
    def d_r(self) -> int:
        return self.r0.cols

    def named(self) -> dict[str, Tensor]:
        out = {"z0": self.z0, "r0": self.r0, "w_q": self.w_q, "w_k": self.w_k}
        for l in range(self.layers):
            out[f"gat_diag_{l}"] = self.gat_diag[l]
            out[f"gat_attn_{l}"] = self.gat_attn[l]
            out[f"hgcn_w_{l}"] = self.hgcn_w[l]
        return out

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.named().values())


@dataclass
class EncodedPair:
    """Fused embeddings per KG: Euclidean-path and hyperbolic-path views.

    Both views are n x (d_e + 2*d_r); they share the relation block, so they
    agree exactly in the last 2*d_r columns.
    """

    euclid1: Tensor
    hyper1: Tensor
    euclid2: Tensor
    hyper2: Tensor

    def views(self) -> list[tuple[Tensor, Tensor]]:
        return [(self.euclid1, self.hyper1), (self.euclid2, self.hyper2)]


def gat_layer(
    z: Tensor,
    graph: GraphTensors,
    diag_w: Tensor,
    attn_vec: Tensor,
    slope: float = LEAKY_SLOPE,
    return_attention: bool = False,
):
    """Single-head additive graph attention over neighborhoods incl. self.

    out_i = sum_j softmax_j(leaky_relu(a^T [h_i || h_j])) * h_j with
    h = z * diag_w. Attention normalizes over each row's neighborhood.
    """
    d = z.cols
    if diag_w.shape != (1, d):
        raise ad.ShapeError(f"gat diagonal weight must be 1x{d}, got {diag_w.shape}")
    if attn_vec.shape != (2 * d, 1):
        raise ad.ShapeError(f"gat attention vector must be {2 * d}x1, got {attn_vec.shape}")
    h = ad.mul(z, diag_w)
    f_src = ad.matmul(h, ad.slice_rows(attn_vec, 0, d))
    f_dst = ad.matmul(h, ad.slice_rows(attn_vec, d, 2 * d))

    csr = graph.attn_pattern.csr
    indptr, dst = csr.indptr, csr.indices
    src = np.repeat(np.arange(z.rows), np.diff(indptr))
    logits = ad.leaky_relu(ad.add(ad.gather_rows(f_src, src), ad.gather_rows(f_dst, dst)), slope)
    alpha = ad.segment_softmax(logits, indptr)
    out = ad.edge_weighted_aggregate(alpha, h, indptr, dst)
    if return_attention:
        return out, alpha
    return out


def euclid_encode(z_init: Tensor, graph: GraphTensors, params: ModelParams) -> Tensor:
    """GAT stack, then per-entity scaled-dot attention across the stacked
    layer outputs, then the mean of the re-weighted layers."""
    layer_outs: list[Tensor] = []
    cur = z_init
    for l in range(params.layers):
        cur = gat_layer(cur, graph, params.gat_diag[l], params.gat_attn[l])
        layer_outs.append(cur)

    L = len(layer_outs)
    inv_sqrt_d = 1.0 / math.sqrt(params.d_e)
    qs = [ad.matmul(z, params.w_q) for z in layer_outs]
    ks = [ad.matmul(z, params.w_k) for z in layer_outs]
    reweighted: list[Tensor] = []
    for l in range(L):
        logit_cols = [
            ad.scale(ad.row_sum(ad.mul(qs[l], ks[m])), inv_sqrt_d) for m in range(L)
        ]
        weights = ad.softmax_rows(reduce(ad.concat_cols, logit_cols))
        mixed = reduce(
            ad.add,
            (ad.mul(ad.slice_cols(weights, m, m + 1), layer_outs[m]) for m in range(L)),
        )
        reweighted.append(mixed)
    return ad.scale(reduce(ad.add, reweighted), 1.0 / L)


def hyper_encode(z_init: Tensor, graph: GraphTensors, params: ModelParams, c: float = 1.0) -> Tensor:
    """Hyperbolic GCN: aggregate in the tangent space between exp/log
    round trips, returning tangent-space (Euclidean) coordinates."""
    zh = exp_map0(z_init, c)
    for l in range(params.layers):
        tangent = log_map0(zh, c)
        mixed = ad.matmul(ad.spmm(graph.norm_adj, tangent), params.hgcn_w[l])
        zh = exp_map0(ad.relu(mixed), c)
    return log_map0(zh, c)


def relation_encode(graph: GraphTensors, r_init: Tensor) -> Tensor:
    """Mean incoming- and outgoing-relation embedding per entity, concatenated.

    Entities with no triples in a direction get a zero block (degree
    denominators are clamped at 1).
    """
    inv_in = Tensor((1.0 / np.maximum(1, graph.in_deg)).reshape(-1, 1))
    inv_out = Tensor((1.0 / np.maximum(1, graph.out_deg)).reshape(-1, 1))
    left = ad.mul(ad.spmm(graph.rel_in, r_init), inv_in)
    right = ad.mul(ad.spmm(graph.rel_out, r_init), inv_out)
    return ad.concat_cols(left, right)


def encode_pair(
    graphs: tuple[GraphTensors, GraphTensors],
    params: ModelParams,
    c: float = 1.0,
) -> EncodedPair:
    """Run both encoders over both KGs and fuse with the shared relation block."""
    g1, g2 = graphs
    n_total = params.z0.rows
    m_total = params.r0.rows
    blocks = []
    for g, ent_range, rel_range in (
        (g1, (0, params.n1), (0, params.m1)),
        (g2, (params.n1, n_total), (params.m1, m_total)),
    ):
        z = ad.slice_rows(params.z0, *ent_range)
        r = ad.slice_rows(params.r0, *rel_range)
        rel = relation_encode(g, r)
        euclid = ad.concat_cols(euclid_encode(z, g, params), rel)
        hyper = ad.concat_cols(hyper_encode(z, g, params, c), rel)
        blocks.append((euclid, hyper))
    return EncodedPair(blocks[0][0], blocks[0][1], blocks[1][0], blocks[1][1])
