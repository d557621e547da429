"""Quaternion multi-focus colour image fusion.

Colour images are handled as pure-quaternion matrices (r, g, b on i, j, k).
Each input is split into base, detail and noise layers by an ADMM solver;
patch focus measures at two scales pick the sharpest source per patch and a
quaternion SSIM test chooses between the two candidate composites.
"""
from .config import PRESETS, RunConfig
from .focus import FocusMaps, build_focus_maps
from .fusion import FusionConfig, FusionResult, MultiFocusFusion, SsimParams, fuse, fuse_detailed
from .patches import Dictionary, PatchGrid, build_dictionary
from .qfed import QFED, QfedConfig, QfedResult, decompose
from .validation import from_quaternion, to_quaternion

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "RunConfig", "FocusMaps", "build_focus_maps", "FusionConfig", "FusionResult",
    "MultiFocusFusion", "SsimParams", "fuse", "fuse_detailed", "Dictionary", "PatchGrid",
    "build_dictionary", "QFED", "QfedConfig", "QfedResult", "decompose", "from_quaternion",
    "to_quaternion",
]
