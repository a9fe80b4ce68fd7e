"""Superpixel label rasters: the partition container and a grid generator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCount, ValidationError

DEFAULT_SUPERPIXELS = 40


@dataclass(frozen=True, eq=False)
class SuperpixelMap:
    labels: np.ndarray  # (H, W) integer ids, contiguous from 0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValidationError(f"superpixel raster must be 2-D, got {labels.shape}")
        object.__setattr__(self, "labels", labels.astype(np.int64))
        self.check_partition()

    def check_partition(self) -> None:
        if self.labels.size == 0 or self.labels.min() < 0:
            raise ValidationError("superpixel raster has negative or no labels")
        present = np.unique(self.labels)
        if present[-1] != len(present) - 1:
            missing = sorted(set(range(int(present[-1]) + 1)) - set(present.tolist()))
            raise ValidationError(f"superpixel labels not contiguous from 0; missing ids {missing[:10]}")

    @property
    def num_superpixels(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.num_superpixels)

    def pixels(self, superpixel_id: int) -> np.ndarray:
        return np.argwhere(self.labels == superpixel_id)

    def mask(self, superpixel_id: int) -> np.ndarray:
        return self.labels == superpixel_id


def grid_shape(width: int, height: int, count: int) -> tuple[int, int]:
    """``(rows, cols)`` with ``rows * cols == count`` whose cell aspect best matches the image.

    Ties prefer more columns.
    """
    best = None
    target = math.log(width / height)
    for rows in range(1, count + 1):
        if count % rows:
            continue
        cols = count // rows
        if rows > height or cols > width:
            continue
        err = abs(math.log(cols / rows) - target)
        key = (round(err, 12), -cols)
        if best is None or key < best[0]:
            best = (key, rows, cols)
    if best is None:
        raise InvalidCount(f"cannot tile a {width}x{height} image into {count} grid cells")
    return best[1], best[2]


def grid_superpixels(width: int, height: int, count: int = DEFAULT_SUPERPIXELS) -> SuperpixelMap:
    """Partition into ``count`` near-equal rectangles; leftover pixels go to the last row/column."""
    if count < 1 or count > width * height:
        raise InvalidCount(f"superpixel count {count} outside [1, {width * height}]")
    rows, cols = grid_shape(width, height, count)
    cell_h, cell_w = height // rows, width // cols
    r = np.minimum(np.arange(height) // cell_h, rows - 1)
    c = np.minimum(np.arange(width) // cell_w, cols - 1)
    return SuperpixelMap(r[:, None] * cols + c[None, :])
