"""Embarrassingly parallel variational inference with Gaussian-mixture subposteriors."""

from .combine import (
    ComponentSampleSet,
    SamplerConfig,
    draw_posterior_samples,
    pairwise_reduce,
    sample_components,
)
from .evaluate import EvalResult, compare_methods, heldout_metrics, sweep
from .mixture import (
    ExponentialBlowupError,
    GaussianComponent,
    MixtureApprox,
    ProductMixture,
    enumerate_product,
    mixture_log_density,
    product_component,
)
from .models import DataShard, ModelSpec, build_model, generate_synthetic, holdout_split
from .nvi import FitConfig, FitReport, VariationalParams, fit, surrogate_elbo
from .pipeline import RunLedger, ShardManifest, collect_and_combine, partition, run_parallel_fits, run_pipeline

__version__ = "0.1.0"
