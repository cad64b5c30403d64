"""motiongs: differentiable animatable-avatar pipeline on 3D Gaussians.

Canonical Gaussians on a capsule rig are deformed by a temporal motion-trend
network, skinned to observation space, and splatted to images; everything is
trainable end to end through a self-contained float64 autodiff tape.
"""

__version__ = "0.1.0"
