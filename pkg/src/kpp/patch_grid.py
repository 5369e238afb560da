"""Image loading and patch-grid decomposition.

An image is a numpy float64 array of shape (side, side, 3) with values in
[0, 1]. A grid divides it into non-overlapping square patches indexed
row-major; a patch array of shape (n_patches, patch_side, patch_side, 3)
carries the same pixels in grid order and reassembles bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import GeometryError, ImageLoadError

CHANNELS = 3


@dataclass(frozen=True)
class GridSpec:
    """Square patch-grid geometry. patch_side must divide image_side exactly."""

    image_side: int
    patch_side: int

    def __post_init__(self) -> None:
        if self.image_side <= 0 or self.patch_side <= 0:
            raise GeometryError(
                f"grid sides must be positive, got image_side={self.image_side} "
                f"patch_side={self.patch_side}"
            )
        if self.image_side % self.patch_side != 0:
            raise GeometryError(
                f"patch_side {self.patch_side} does not divide image_side {self.image_side}"
            )

    @property
    def grid_side(self) -> int:
        return self.image_side // self.patch_side

    @property
    def n_patches(self) -> int:
        return self.grid_side * self.grid_side

    def row_col(self, index: int) -> tuple[int, int]:
        """Grid (row, col) of a linear patch index."""
        self.check_index(index)
        return index // self.grid_side, index % self.grid_side

    def index_of(self, row: int, col: int) -> int:
        if not (0 <= row < self.grid_side and 0 <= col < self.grid_side):
            raise GeometryError(f"cell ({row}, {col}) outside {self.grid_side}x{self.grid_side} grid")
        return row * self.grid_side + col

    def check_index(self, index: int) -> None:
        if not 0 <= index < self.n_patches:
            raise GeometryError(f"patch index {index} out of range [0, {self.n_patches})")


def spec_for_patches(patches: np.ndarray) -> GridSpec:
    """Recover the GridSpec matching a patch array's shape."""
    if patches.ndim != 4 or patches.shape[1] != patches.shape[2]:
        raise GeometryError(f"expected (n, p, p, c) patch array, got shape {patches.shape}")
    n = patches.shape[0]
    g = int(np.sqrt(n))
    if g * g != n:
        raise GeometryError(f"patch count {n} is not a square grid")
    return GridSpec(image_side=g * patches.shape[1], patch_side=patches.shape[1])


def validate_image(img: np.ndarray, spec: GridSpec) -> None:
    """Raise GeometryError unless img is (image_side, image_side, 3)."""
    expected = (spec.image_side, spec.image_side, CHANNELS)
    if img.shape != expected:
        raise GeometryError(f"image shape {img.shape} does not match grid {expected}")


def load_and_resize(path: str, spec: GridSpec) -> np.ndarray:
    """Load an 8-bit PNG/JPEG, force RGB, and bilinearly resize to the grid size.

    Grayscale inputs are replicated to 3 channels. Pixel values are mapped
    v/255 into [0, 1]. An input already at the target size is converted
    without interpolation.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.width == 0 or im.height == 0:
                raise ImageLoadError(f"{path}: image has a zero dimension")
            im = im.convert("RGB")
            target = (spec.image_side, spec.image_side)
            if im.size != target:
                im = im.resize(target, Image.Resampling.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageLoadError(f"{path}: not a decodable image ({exc})") from exc
    except OSError as exc:
        raise ImageLoadError(f"{path}: cannot read ({exc})") from exc
    return arr


def split(img: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Divide an image into its row-major patch array."""
    validate_image(img, spec)
    g, p = spec.grid_side, spec.patch_side
    c = img.shape[2]
    return (
        img.reshape(g, p, g, p, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(spec.n_patches, p, p, c)
    )


def assemble(patches: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Inverse of split: reassemble a row-major patch array into an image."""
    g, p = spec.grid_side, spec.patch_side
    if patches.shape[0] != spec.n_patches:
        raise GeometryError(f"expected {spec.n_patches} patches, got {patches.shape[0]}")
    if patches.shape[1:3] != (p, p):
        raise GeometryError(f"patch shape {patches.shape[1:3]} does not match patch_side {p}")
    c = patches.shape[3]
    return (
        patches.reshape(g, g, p, p, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(spec.image_side, spec.image_side, c)
    )


def central_index(spec: GridSpec) -> int:
    """Linear index of the central grid cell, (g//2, g//2) for even grids."""
    half = spec.grid_side // 2
    return half * spec.grid_side + half
