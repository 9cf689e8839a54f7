"""spectradec: DCT-domain frequency decoupling toolkit.

Provides orthonormal 2D DCT machinery with band masks and exchanges,
zigzag/windowed spectral processing with rational-activation window
stacks, band-limited quality metrics, a corpus curation pipeline, and
noise/JPEG benchmark synthesis, all behind one CLI.
"""

__version__ = "0.1.0"

from .imgio import PlanarImage, load_image, save_image, to_luma
from .spectral import BandMask, Spectrum, dct2, idct2

__all__ = [
    "PlanarImage",
    "Spectrum",
    "BandMask",
    "load_image",
    "save_image",
    "to_luma",
    "dct2",
    "idct2",
    "__version__",
]
