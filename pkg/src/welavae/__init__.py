"""Weakly-supervised disentanglement with WeLa-VAE and a TCVAE baseline."""
from .dataset import (
    BlobDataset,
    BlobSpec,
    WeakLabelConfig,
    WeakLabelSet,
    angle_of,
    attach_labels,
    bin_label,
    build_weak_labels,
    distance_of,
    generate_dataset,
    load_dataset,
    render_blob,
    save_dataset,
)
from .evaluation import (
    MetricResult,
    RepresentationMatrix,
    canvas_ranges,
    cartesian_mse,
    heatmap,
    polar_mse,
    represent,
    rescale_channel,
    score,
    traverse,
)
from .model import LatentCode, ModelConfig, decode, encode, init_params, load_checkpoint, reparameterize, save_checkpoint
from .objective import LossBreakdown, bernoulli_recon, categorical_recon, gaussian_kl, log_gaussian, tc_mws_estimate, wela_loss
from .trainer import RunResult, TrainConfig, label_accuracy, train

__version__ = "0.1.0"
