"""Full training loop: initialization, epoch schedule, optimization,
validation-based model selection, checkpointing, ablation toggles, and
five-fold / lambda-grid orchestration."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import backward
from .data import KgPair, build_graph_tensors, load_openea
from .losses import LossWeights, total_loss
from .model import EncodedPair, ModelParams, encode_pair
from .optim import Adam
from .ranking import AlignmentReport, csls_rescore, evaluate, similarity_for_links

logger = logging.getLogger("dualign")

CHECKPOINT_FORMAT = 1


class ConfigError(ValueError):
    """A config file key or value is not understood."""


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite during training."""


@dataclass
class TrainConfig:
    d_e: int = 256
    d_r: int = 32
    layers: int = 2
    curvature: float = 1.0
    gamma: float = 1.0
    lambda_: float = 300.0
    tau: float = 1.0
    negatives: int = 5
    lr: float = 5e-4
    epochs: int = 300
    eval_every: int = 10
    seed: int = 0
    use_inter: bool = True
    use_intra: bool = True
    intra_on_both_graphs: bool = False
    csls_k: int = 10
    candidates: str = "test"

    def __post_init__(self):
        for name in ("d_e", "d_r", "layers", "negatives", "eval_every", "csls_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive count")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if not self.curvature > 0:
            raise ConfigError("curvature must be positive")
        if self.candidates not in ("test", "all"):
            raise ConfigError("candidates must be 'test' or 'all'")

    def weights(self) -> LossWeights:
        return LossWeights(
            lam=self.lambda_,
            gamma=self.gamma,
            tau=self.tau,
            intra_on_both_graphs=self.intra_on_both_graphs,
        )


# the file key for the keyword-clashing field
_FIELD_BY_KEY = {("lambda" if f.name == "lambda_" else f.name): f for f in dataclasses.fields(TrainConfig)}


def _parse_value(field: dataclasses.Field, raw: str):
    if field.type == "bool":
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if field.type == "int":
        return int(raw)
    if field.type == "float":
        return float(raw)
    return raw.strip()


def load_config(path) -> TrainConfig:
    """Parse a flat `key = value` config file; unknown keys are errors."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            field = _FIELD_BY_KEY.get(key)
            if field is None:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[field.name] = _parse_value(field, val)
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {err}") from None
    return TrainConfig(**values)


def config_to_dict(cfg: TrainConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        key = "lambda" if f.name == "lambda_" else f.name
        out[key] = getattr(cfg, f.name)
    return out


def config_from_dict(d: dict) -> TrainConfig:
    values = {}
    for key, val in d.items():
        field = _FIELD_BY_KEY.get(key)
        if field is None:
            raise ConfigError(f"unknown config key {key!r}")
        values[field.name] = val
    return TrainConfig(**values)


@dataclass
class Checkpoint:
    """Best model snapshot plus the config that produced it."""

    params: ModelParams
    config: TrainConfig
    epoch: int
    val_mrr: float
    trace: list = dataclasses.field(default_factory=list)

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "config": config_to_dict(self.config),
            "epoch": self.epoch,
            "val_mrr": self.val_mrr,
            "n1": self.params.n1,
            "m1": self.params.m1,
            "layers": self.params.layers,
        }
        arrays = {f"param__{k}": t.data for k, t in self.params.named().items()}
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:  # write to the exact path (savez would add .npz)
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path) as blob:
            meta = json.loads(bytes(blob["__meta__"]).decode("utf-8"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
            arrays = {k[len("param__"):]: blob[k] for k in blob.files if k.startswith("param__")}
        from .autodiff import Tensor

        layers = meta["layers"]
        params = ModelParams(
            z0=Tensor(arrays["z0"], requires_grad=True),
            r0=Tensor(arrays["r0"], requires_grad=True),
            gat_diag=[Tensor(arrays[f"gat_diag_{l}"], requires_grad=True) for l in range(layers)],
            gat_attn=[Tensor(arrays[f"gat_attn_{l}"], requires_grad=True) for l in range(layers)],
            w_q=Tensor(arrays["w_q"], requires_grad=True),
            w_k=Tensor(arrays["w_k"], requires_grad=True),
            hgcn_w=[Tensor(arrays[f"hgcn_w_{l}"], requires_grad=True) for l in range(layers)],
            n1=meta["n1"],
            m1=meta["m1"],
        )
        return cls(
            params=params,
            config=config_from_dict(meta["config"]),
            epoch=meta["epoch"],
            val_mrr=meta["val_mrr"],
        )


def _snapshot(params: ModelParams) -> ModelParams:
    from .autodiff import Tensor

    return ModelParams(
        z0=Tensor(params.z0.data.copy(), requires_grad=True),
        r0=Tensor(params.r0.data.copy(), requires_grad=True),
        gat_diag=[Tensor(t.data.copy(), requires_grad=True) for t in params.gat_diag],
        gat_attn=[Tensor(t.data.copy(), requires_grad=True) for t in params.gat_attn],
        w_q=Tensor(params.w_q.data.copy(), requires_grad=True),
        w_k=Tensor(params.w_k.data.copy(), requires_grad=True),
        hgcn_w=[Tensor(t.data.copy(), requires_grad=True) for t in params.hgcn_w],
        n1=params.n1,
        m1=params.m1,
    )


def _validation_mrr(enc: EncodedPair, pair: KgPair, cfg: TrainConfig) -> float:
    # plain cosine ranking for model selection; CSLS only at test time
    sim = similarity_for_links(enc, pair, pair.valid_links, candidates="test")
    return evaluate(sim, pair.valid_links, ks=(1,)).mrr


def train(pair: KgPair, cfg: TrainConfig) -> Checkpoint:
    """Run the full training loop and return the best-validation checkpoint.

    Logs one line per epoch: `epoch <k> loss <v> [val_mrr <m>] secs <t>`.
    Raises TrainingDiverged if any loss term goes non-finite.
    """
    if not pair.train_links:
        raise ValueError("training requires a nonempty seed link set")
    g1 = build_graph_tensors(pair.kg1)
    g2 = build_graph_tensors(pair.kg2)
    params = ModelParams.create(
        n1=pair.kg1.n_entities,
        n2=pair.kg2.n_entities,
        m1=pair.kg1.n_relations,
        m2=pair.kg2.n_relations,
        d_e=cfg.d_e,
        d_r=cfg.d_r,
        layers=cfg.layers,
        seed=cfg.seed,
    )
    logger.info("parameters: %d", params.n_parameters())
    opt = Adam(params.named(), lr=cfg.lr)
    weights = cfg.weights()

    have_valid = bool(pair.valid_links)
    if have_valid:
        init_mrr = _validation_mrr(encode_pair((g1, g2), params, cfg.curvature), pair, cfg)
    else:
        init_mrr = float("nan")
    best = Checkpoint(params=_snapshot(params), config=cfg, epoch=0, val_mrr=init_mrr)
    trace: list[dict] = []

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        enc = encode_pair((g1, g2), params, cfg.curvature)
        loss, parts = total_loss(
            enc,
            pair,
            weights,
            seed=cfg.seed,
            epoch=epoch,
            k=cfg.negatives,
            use_inter=cfg.use_inter,
            use_intra=cfg.use_intra,
        )
        for term, value in parts.items():
            if not np.isfinite(value):
                raise TrainingDiverged(f"epoch {epoch}: loss term {term!r} is non-finite ({value})")
        backward(loss)
        for t in params.named().values():
            # ablations can leave a parameter outside the recorded graph;
            # its gradient is then exactly zero
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        opt.step()

        val_mrr = None
        if have_valid and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            enc_now = encode_pair((g1, g2), params, cfg.curvature)
            val_mrr = _validation_mrr(enc_now, pair, cfg)
            if not (val_mrr <= best.val_mrr):  # also replaces a NaN best
                best = Checkpoint(params=_snapshot(params), config=cfg, epoch=epoch, val_mrr=val_mrr)
        secs = time.perf_counter() - t0
        extra = f" val_mrr {val_mrr:.6f}" if val_mrr is not None else ""
        logger.info("epoch %d loss %.6f%s secs %.3f", epoch, parts["total"], extra, secs)
        entry = {"epoch": epoch, "secs": secs, **parts}
        if val_mrr is not None:
            entry["val_mrr"] = val_mrr
        trace.append(entry)

    if not have_valid and cfg.epochs > 0:
        best = Checkpoint(params=_snapshot(params), config=cfg, epoch=cfg.epochs, val_mrr=float("nan"))
    best.trace = trace
    return best


def evaluate_checkpoint(
    ck: Checkpoint,
    pair: KgPair,
    use_csls: bool = True,
    csls_k: int | None = None,
    links=None,
    candidates: str | None = None,
) -> AlignmentReport:
    """Score a checkpoint on (by default) the pair's test links."""
    g1 = build_graph_tensors(pair.kg1)
    g2 = build_graph_tensors(pair.kg2)
    enc = encode_pair((g1, g2), ck.params, ck.config.curvature)
    links = pair.test_links if links is None else links
    scope = ck.config.candidates if candidates is None else candidates
    sim = similarity_for_links(enc, pair, links, candidates=scope)
    if use_csls:
        k = ck.config.csls_k if csls_k is None else csls_k
        k = min(k, min(sim.shape))
        sim = csls_rescore(sim, k)
    cfg_echo = config_to_dict(ck.config)
    cfg_echo["csls"] = use_csls
    return evaluate(sim, links, ks=(1, 5), config=cfg_echo)


@dataclass
class FoldsReport:
    per_fold: list[tuple[int, AlignmentReport]]
    mean: dict[str, float]

    def table(self) -> str:
        lines = ["fold | H@1 | H@5 | MRR"]
        for fold, rep in self.per_fold:
            lines.append(f"{fold} | {rep.hits[1]:.4f} | {rep.hits[5]:.4f} | {rep.mrr:.4f}")
        lines.append(
            f"mean | {self.mean['H@1']:.4f} | {self.mean['H@5']:.4f} | {self.mean['MRR']:.4f}"
        )
        return "\n".join(lines)


def run_folds(data_dir, cfg: TrainConfig, folds=(1, 2, 3, 4, 5)) -> FoldsReport:
    """Train and test once per fold; report per-fold and arithmetic-mean metrics."""
    per_fold = []
    for fold in folds:
        pair = load_openea(data_dir, fold)
        ck = train(pair, cfg)
        report = evaluate_checkpoint(ck, pair)
        logger.info("fold %d H@1 %.4f H@5 %.4f MRR %.4f", fold, report.hits[1], report.hits[5], report.mrr)
        per_fold.append((fold, report))
    mean = {
        "H@1": float(np.mean([r.hits[1] for _, r in per_fold])),
        "H@5": float(np.mean([r.hits[5] for _, r in per_fold])),
        "MRR": float(np.mean([r.mrr for _, r in per_fold])),
    }
    return FoldsReport(per_fold=per_fold, mean=mean)


def grid_lambda(data_dir, cfg: TrainConfig, lambdas, fold: int = 1) -> list[tuple[float, AlignmentReport]]:
    """One train+test per lambda value, in the order given."""
    pair = load_openea(data_dir, fold)
    rows = []
    for lam in lambdas:
        run_cfg = dataclasses.replace(cfg, lambda_=float(lam))
        ck = train(pair, run_cfg)
        report = evaluate_checkpoint(ck, pair)
        logger.info("lambda %g H@1 %.4f H@5 %.4f MRR %.4f", lam, report.hits[1], report.hits[5], report.mrr)
        rows.append((float(lam), report))
    return rows


def grid_table(rows) -> str:
    lines = ["lambda | H@1 | H@5 | MRR"]
    for lam, rep in rows:
        lines.append(f"{lam:g} | {rep.hits[1]:.4f} | {rep.hits[5]:.4f} | {rep.mrr:.4f}")
    return "\n".join(lines)
