"""latentwalk: identity-constrained latent walks for synthetic mated datasets.

The public surface groups into five layers:

* :mod:`latentwalk.latents` / :mod:`latentwalk.pca` -- latent sampling,
  truncation, the LVEC store, and principal-component extraction.
* :mod:`latentwalk.backend` / :mod:`latentwalk.protocol` -- generator +
  embedder sessions (in-process toy model, external wire-protocol client).
* :mod:`latentwalk.walk` -- the guided walk itself and linear-boundary edits.
* :mod:`latentwalk.gates` / :mod:`latentwalk.manifest` -- quality gating and
  the line-delimited run manifest.
* :mod:`latentwalk.evaluation` / :mod:`latentwalk.reporting` -- biometric
  statistics and the report bundle.
"""

from .backend import (
    Embedding,
    ExternalBackendConfig,
    SampleMetadata,
    SampleRef,
    ToyBackendConfig,
    ToySession,
    open_session,
    similarity,
    toy_quality,
    verify,
)
from .evaluation import (
    DensityCurve,
    EDCCurve,
    ScoreSets,
    collect_scores,
    edc_curve,
    fmr_at,
    fnmr_at,
    kde,
    kl_divergence,
    paired_quality,
    threshold_at_fmr,
)
from .gates import FilterReport, GateConfig, GateVerdict, evaluate_gates, filter_dataset
from .latents import (
    LatentSet,
    TruncationParams,
    load_latents,
    mean_latent,
    sample_latents,
    save_latents,
    truncate_latent,
    truncate_set,
)
from .manifest import ManifestRecord, read_manifest, write_manifest
from .pca import PrincipalBasis, compute_pca, load_basis, project, save_basis
from .walk import (
    Hyperplane,
    MatedRecord,
    WalkConfig,
    fit_linear_boundary,
    guided_walk,
    shift_along_boundary,
    shift_in_lspace,
    signed_distance,
)

__version__ = "0.1.0"
