"""Per-image pipeline with failure capture, used by the batch commands."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, TypeVar

import numpy as np

from .config import RunConfig
from .errors import DecodeError, IrisError, LocalizationError, NoPupilError, UnsupportedFormatError
from .features import FeatureVector, feature_vector
from .image import read_image
from .localization import IrisGeometry, LocalizationTrace, locate_iris
from .normalization import NormalizedIris, noise_mask, rubber_sheet

STAGES = ("decode", "localize", "normalize", "extract")


@dataclass
class ImageResult:
    name: str
    label: int | None = None
    split: str = ""
    stage: str = "done"  # stage reached, or the stage that failed
    reason: str = ""
    geometry: IrisGeometry | None = None
    normalized: NormalizedIris | None = None
    features: FeatureVector | None = None
    trace: LocalizationTrace | None = None

    @property
    def ok(self) -> bool:
        return not self.reason


def run_image(
    path: str | Path,
    cfg: RunConfig,
    upto: str = "extract",
    name: str | None = None,
    label: int | None = None,
    split: str = "",
    keep_trace: bool = False,
) -> ImageResult:
    """Run decode -> localize -> normalize -> extract, stopping after ``upto``.

    Pipeline failures are returned in the result, never raised.
    """
    res = ImageResult(name=name or str(path), label=label, split=split)
    try:
        img = read_image(path)
    except (DecodeError, UnsupportedFormatError, OSError) as exc:
        res.stage, res.reason = "decode", str(exc)
        return res
    return run_array(img, cfg, upto, res, keep_trace)


def run_array(img: np.ndarray, cfg: RunConfig, upto: str = "extract", res: ImageResult | None = None, keep_trace: bool = False) -> ImageResult:
    if res is None:
        res = ImageResult(name="<array>")
    trace = LocalizationTrace() if keep_trace else None
    res.trace = trace
    try:
        res.geometry = locate_iris(img, cfg.localization_params(), trace)
    except NoPupilError as exc:
        res.stage, res.reason = "localize", f"pupil: {exc}"
        return res
    except LocalizationError as exc:
        res.stage, res.reason = "localize", f"{exc.stage}: {exc.reason}"
        return res
    except IrisError as exc:
        res.stage, res.reason = "localize", str(exc)
        return res
    if upto == "localize":
        res.stage = "done"
        return res
    try:
        mask = noise_mask(img, res.geometry)
        res.normalized = rubber_sheet(img, res.geometry, mask, cfg.radial_res, cfg.angular_res)
    except IrisError as exc:
        res.stage, res.reason = "normalize", str(exc)
        return res
    if upto == "normalize":
        return res
    try:
        fv = feature_vector(res.normalized, cfg.lbp_config(), label=res.label, name=res.name)
        res.features = FeatureVector(fv.values, fv.config_tag, fv.label, fv.name, res.split)
    except IrisError as exc:
        res.stage, res.reason = "extract", str(exc)
    return res


T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Map in a worker pool when ``jobs > 1``; results keep input order."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
