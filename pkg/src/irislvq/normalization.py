"""Noise masking and rubber-sheet unwrapping of the iris annulus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import as_gray, mean_intensity
from .localization import IrisGeometry

RADIAL_RES = 40
ANGULAR_RES = 240

DARK_FACTOR = 0.6 * 0.52
BRIGHT_LIMIT = 240


@dataclass(frozen=True)
class NormalizedIris:
    texture: np.ndarray  # float64, (radial_res, angular_res)
    valid: np.ndarray  # bool, same shape

    @property
    def radial_res(self) -> int:
        return self.texture.shape[0]

    @property
    def angular_res(self) -> int:
        return self.texture.shape[1]

    @property
    def occlusion_fraction(self) -> float:
        return float(np.count_nonzero(~self.valid)) / self.valid.size


def annulus(shape: tuple[int, int], geom: IrisGeometry) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    p, i = geom.pupil, geom.iris
    outside_pupil = np.hypot(xs - p.cx, ys - p.cy) > p.r
    inside_iris = np.hypot(xs - i.cx, ys - i.cy) <= i.r
    return outside_pupil & inside_iris


def noise_mask(img: np.ndarray, geom: IrisGeometry, bright_limit: float = BRIGHT_LIMIT) -> np.ndarray:
    """Valid iris pixels: inside the annulus and neither eyelash-dark nor specular."""
    img = as_gray(img)
    dark = DARK_FACTOR * mean_intensity(img)
    return annulus(img.shape, geom) & (img >= dark) & (img <= bright_limit)


def sample_points(geom: IrisGeometry, radial_res: int = RADIAL_RES, angular_res: int = ANGULAR_RES):
    """Source coordinates (x, y), each of shape (radial_res, angular_res).

    Cell (i, j) sits at r = (i + 0.5)/radial_res, theta = 2 pi (j + 0.5)/angular_res
    and interpolates linearly between the pupil and iris boundary points.
    """
    r = ((np.arange(radial_res) + 0.5) / radial_res)[:, None]
    theta = 2 * np.pi * (np.arange(angular_res) + 0.5) / angular_res
    return rubber_point(geom, r, theta[None, :])


def rubber_point(geom: IrisGeometry, r, theta):
    """Linear blend of the pupil and iris boundary points at angle ``theta``."""
    cos, sin = np.cos(theta), np.sin(theta)
    p, i = geom.pupil, geom.iris
    xp, yp = p.cx + p.r * cos, p.cy + p.r * sin
    xi, yi = i.cx + i.r * cos, i.cy + i.r * sin
    return (1 - r) * xp + r * xi, (1 - r) * yp + r * yi


def rubber_sheet(
    img: np.ndarray,
    geom: IrisGeometry,
    mask: np.ndarray | None = None,
    radial_res: int = RADIAL_RES,
    angular_res: int = ANGULAR_RES,
) -> NormalizedIris:
    """Unwrap the annulus to a ``radial_res x angular_res`` sheet by bilinear sampling.

    A cell is valid only when its four support pixels are in bounds and valid
    in ``mask``; out-of-bounds cells get intensity 0.
    """
    img = as_gray(img)
    h, w = img.shape
    if mask is None:
        mask = noise_mask(img, geom)
    x, y = sample_points(geom, radial_res, angular_res)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx, fy = x - x0, y - y0
    inb = (x0 >= 0) & (y0 >= 0) & (x0 + 1 < w) & (y0 + 1 < h)
    xs0, ys0 = np.clip(x0, 0, w - 2), np.clip(y0, 0, h - 2)
    src = img.astype(np.float64)
    p00 = src[ys0, xs0]
    p01 = src[ys0, xs0 + 1]
    p10 = src[ys0 + 1, xs0]
    p11 = src[ys0 + 1, xs0 + 1]
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    tex = top + fy * (bot - top)
    # keep the result inside the support range despite rounding
    lo = np.minimum(np.minimum(p00, p01), np.minimum(p10, p11))
    hi = np.maximum(np.maximum(p00, p01), np.maximum(p10, p11))
    tex = np.clip(tex, lo, hi)
    m = np.asarray(mask, dtype=bool)
    valid = inb & m[ys0, xs0] & m[ys0, xs0 + 1] & m[ys0 + 1, xs0] & m[ys0 + 1, xs0 + 1]
    tex = np.where(inb, tex, 0.0)
    return NormalizedIris(texture=tex, valid=valid)
