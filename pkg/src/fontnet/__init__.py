"""Font-style recognition stack built from scratch on numpy.

Submodules: image (grayscale primitives + PGM), meshing (fixed/elastic grids),
dropregion (region-drop augmentation), layers (tensor engine), network
(architecture builders), training (SGD loop), blocks (text-block pipelines),
data (synthetic glyph datasets), experiments (comparative runs), cli.
"""

__version__ = "0.1.0"
