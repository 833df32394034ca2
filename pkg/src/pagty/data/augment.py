"""Training-time augmentation: random rotation and flips.

The transform is a pure function of (image, mask, policy, generator); the
generator is expected to be a fresh per-sample stream so parallel data
workers cannot change results.  Draw order is fixed: rotation gate, angle,
horizontal flip gate, vertical flip gate.  Rotation resamples the image
bilinearly and the mask by nearest neighbor, both about the center with
out-of-canvas pixels filled with 0 (background).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ConfigError


@dataclass(frozen=True)
class AugmentationPolicy:
    rotate_prob: float = 0.10
    angle_range: tuple[float, float] = (-35.0, 35.0)
    hflip_prob: float = 0.20
    vflip_prob: float = 0.20

    def __post_init__(self):
        for name in ("rotate_prob", "hflip_prob", "vflip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if self.angle_range[0] > self.angle_range[1]:
            raise ConfigError(f"empty angle range {self.angle_range}")


def per_sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def augment(image: np.ndarray, mask: np.ndarray, policy: AugmentationPolicy,
            rng: np.random.Generator):
    """Apply the policy; returns (image, mask), untouched when no draw fires."""
    u_rotate, u_angle, u_hflip, u_vflip = rng.random(4)

    if u_rotate < policy.rotate_prob:
        lo, hi = policy.angle_range
        angle = lo + u_angle * (hi - lo)
        image = ndimage.rotate(
            image, angle, axes=(-2, -1), reshape=False, order=1, mode="constant", cval=0.0
        )
        mask = ndimage.rotate(
            mask, angle, axes=(-2, -1), reshape=False, order=0, mode="constant", cval=0
        )
    if u_hflip < policy.hflip_prob:
        image = np.flip(image, axis=-1)
        mask = np.flip(mask, axis=-1)
    if u_vflip < policy.vflip_prob:
        image = np.flip(image, axis=-2)
        mask = np.flip(mask, axis=-2)
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)
