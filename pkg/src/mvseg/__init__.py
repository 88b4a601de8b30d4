"""Multi-view consistent semantic segmentation from RGB-D sequences.

Library layout:

- ``core``         dense (C, H, W) tensors, label maps, the MVFT dump format
- ``geometry``     pinhole camera, SE(3) transforms, warp grids
- ``warp_sampler`` differentiable bilinear sampling through a fixed grid
- ``fusion``       softmax, Bayesian and max-pool fusion of per-view predictions
- ``learning``     toy RGB-D encoder-decoder, consistency losses, SGD trainer
- ``metrics``      confusion matrix and segmentation accuracy scores
- ``data_io``      PGM/PPM/trajectory/manifest loaders and writers
- ``synthbench``   synthetic scenes, brute-force warp oracle, fusion benchmark
- ``cli``          ``mvseg`` command-line entry point
"""

from mvseg.core import IGNORE_LABEL

__all__ = ["IGNORE_LABEL"]
__version__ = "0.1.0"
