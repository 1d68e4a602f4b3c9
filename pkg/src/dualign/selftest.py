"""Built-in oracle suites runnable via `dualign selftest`: gradients vs
finite differences, ball-geometry inverses, CSLS vs a sort-based oracle,
and ranking metrics vs hand-computed fixtures."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .ball import exp_map0, hyperbolic_distance, log_map0
from .data import build_graph_tensors, generate_synthetic_pair
from .gradcheck import grad_check
from .losses import LossWeights, total_loss
from .model import ModelParams, encode_pair
from .ranking import SimilarityMatrix, csls_rescore, csls_rescore_reference, evaluate


def suite_gradients() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0

    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    rep = grad_check(lambda: ad.total_sum(ad.mul(ad.tanh(x), x)), {"x": x})
    worst = max(worst, rep.max_rel_err)

    y = Tensor(rng.normal(size=(5, 4)) * 0.5, requires_grad=True)
    probe = Tensor(rng.normal(size=(5, 5)))
    rep = grad_check(
        lambda: ad.total_sum(
            ad.mul(ad.softmax_rows(ad.matmul(y, ad.transpose(ad.rows_l2_normalize(y)))), probe)
        ),
        {"y": y},
    )
    worst = max(worst, rep.max_rel_err)

    pair = generate_synthetic_pair(8, 2, 0.0, seed=3, dropout=0.0)
    graphs = (build_graph_tensors(pair.kg1), build_graph_tensors(pair.kg2))
    params = ModelParams.create(8, 8, 4, 4, d_e=4, d_r=2, layers=2, seed=5)

    def full_loss():
        enc = encode_pair(graphs, params, 1.0)
        loss, _ = total_loss(enc, pair, LossWeights(lam=5.0), seed=1, epoch=1, k=2)
        return loss

    rep = grad_check(full_loss, params.named())
    worst = max(worst, rep.max_rel_err)
    ok = worst < 1e-4
    return ok, f"max relative gradient error {worst:.3e} (tolerance 1e-4)"


def suite_geometry() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for c in (0.5, 1.0, 2.0):
        alpha = rng.normal(size=(500, 16))
        alpha *= (3.0 * rng.uniform(size=(500, 1))) / np.linalg.norm(alpha, axis=1, keepdims=True)
        t = Tensor(alpha)
        back = log_map0(exp_map0(t, c), c)
        worst = max(worst, float(np.abs(back.data - alpha).max()))
        d0 = hyperbolic_distance(np.zeros(4), np.array([0.5, 0, 0, 0]), 1.0)
        worst_d = abs(d0 - 2.0 * np.arctanh(0.5))
        worst = max(worst, worst_d)
    ok = worst < 1e-6
    return ok, f"max inverse/closed-form deviation {worst:.3e} (tolerance 1e-6)"


def suite_csls() -> tuple[bool, str]:
    rng = np.random.default_rng(23)
    worst = 0.0
    for k in (1, 5, 10):
        vals = rng.uniform(-1, 1, size=(20, 20))
        sim = SimilarityMatrix(vals.copy(), np.arange(20), np.arange(20))
        got = csls_rescore(sim, k).values
        want = csls_rescore_reference(vals, k)
        worst = max(worst, float(np.abs(got - want).max()))
    ok = worst == 0.0
    return ok, f"max deviation from sort-based oracle {worst:.3e} (must be exact)"


def suite_metrics() -> tuple[bool, str]:
    eye = SimilarityMatrix(np.eye(5), np.arange(5), np.arange(5))
    rep = evaluate(eye, [(i, i) for i in range(5)])
    ok = rep.hits[1] == 1.0 and rep.hits[5] == 1.0 and rep.mrr == 1.0

    second = np.zeros((4, 6))
    second[:, 0] = 1.0
    for i in range(4):
        second[i, i + 1] = 0.5
    sim = SimilarityMatrix(second, np.arange(4), np.arange(6))
    rep2 = evaluate(sim, [(i, i + 1) for i in range(4)])
    ok = ok and rep2.hits[1] == 0.0 and rep2.hits[5] == 1.0 and rep2.mrr == 0.5
    return ok, "identity and rank-2 fixtures" + (" ok" if ok else " FAILED")


SUITES = (
    ("gradients", suite_gradients),
    ("geometry", suite_geometry),
    ("csls", suite_csls),
    ("metrics", suite_metrics),
)


def run_selftest(emit=print) -> bool:
    all_ok = True
    for name, fn in SUITES:
        ok, detail = fn()
        emit(f"suite {name}: {'pass' if ok else 'FAIL'} ({detail})")
        all_ok = all_ok and ok
    return all_ok
