"""Image restoration with bidirectional WKV token mixing.

Images are numpy arrays shaped (H, W) or (H, W, 3) on the 0..255 scale.
"""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    ContractError,
    DimensionError,
    EmptyInputError,
    InfeasibleSelectionError,
    IoError,
    Model,
    NumericError,
    RwkvirError,
    UndefinedCorrelationError,
    bicubic_resize,
    biwkv,
    biwkv_reference,
    build_model,
    complexity,
    glcm_stats,
    load_checkpoint,
    pearson,
    png_bpp,
    psnr,
    ssim,
    synth_corpus,
)
from ._core import benchmark_presets_json as _benchmark_presets_json

__version__ = "0.1.0"


def benchmark_presets():
    """Training presets as a list of dicts."""
    return _json.loads(_benchmark_presets_json())
