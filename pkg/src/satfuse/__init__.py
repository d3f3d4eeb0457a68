"""satfuse: fuse coarse multispectral satellite rasters with fine camera imagery.

The pipeline, end to end: simulate satellite bands from hyperspectral cubes
(:mod:`satfuse.spectral`), snap and register cross-platform rasters
(:mod:`satfuse.alignment`), train and run small super-resolution conv nets
(:mod:`satfuse.srcnn`, :mod:`satfuse.training`), and evaluate both image
fidelity (:mod:`satfuse.metrics`) and downstream random-forest predictions
(:mod:`satfuse.forest`).  :mod:`satfuse.synthetic` generates fully specified
scenes with known truth for benchmarks.
"""

from . import errors
from .alignment import ShiftEstimate, register, score_shift, snap_to_grid
from .bsf import read_bsf, write_bsf
from .forest import (
    ForestConfig,
    ForestModel,
    Quadrat,
    cross_validate,
    extract_quadrat_features,
    fit_forest,
    oob_r2,
    predict,
)
from .metrics import MetricsReport, evaluate, psnr_from_rmse
from .nnls import kkt_residuals, nnls
from .raster import (
    GeoGrid,
    Raster,
    block_mean,
    stack_bands,
    translate_pixels,
    upsample_bicubic,
)
from .spectral import (
    BandWeights,
    HyperBandSpec,
    SpectralResponseTable,
    default_camera,
    evenly_spaced_camera,
    fit_band_weights,
    gaussian_design_matrix,
    simulate_bands,
    synthetic_vnir_srf,
)
from .srcnn import (
    ArchConfig,
    SrcnnModel,
    backward,
    build_model,
    forward,
    infer_tiled,
    load_checkpoint,
    preset,
    save_checkpoint,
)
from .synthetic import SceneConfig, assemble_pairs, degrade, gen_hyper_scene, make_fusion_dataset
from .training import TrainConfig, train

__version__ = "0.1.0"
