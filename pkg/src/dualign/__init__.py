"""dualign: entity alignment across two KGs with coupled Euclidean and
Poincare-ball embeddings, trained end-to-end on a small hand-rolled
reverse-mode autodiff substrate."""

from .autodiff import (
    DomainError,
    ShapeError,
    SparseMatrix,
    Tensor,
    backward,
    zero_grads,
)
from .ball import BallPoint, Curvature, exp_map0, hyperbolic_distance, log_map0, project_to_ball
from .data import (
    GraphTensors,
    Kg,
    KgPair,
    ParseError,
    build_graph_tensors,
    export_openea,
    generate_synthetic_pair,
    load_openea,
)
from .gradcheck import GradCheckReport, grad_check
from .losses import (
    LossWeights,
    NegativeBatch,
    contrastive_loss,
    inter_loss,
    intra_loss,
    margin_loss,
    sample_negatives,
    total_loss,
)
from .model import EncodedPair, ModelParams, encode_pair, euclid_encode, gat_layer, hyper_encode, relation_encode
from .optim import Adam, xavier_init
from .ranking import (
    AlignmentReport,
    SimilarityMatrix,
    cosine_matrix,
    csls_rescore,
    evaluate,
    export_embeddings,
    similarity_for_links,
)
from .train import (
    Checkpoint,
    ConfigError,
    FoldsReport,
    TrainConfig,
    TrainingDiverged,
    evaluate_checkpoint,
    grid_lambda,
    load_config,
    run_folds,
    train,
)

__version__ = "0.1.0"
