"""Pupil and iris boundary localization.

The pupil is seeded from two dark-pixel projections (interest window at
0.52 x mean intensity, whole image at 0.6 x 0.52 x mean), refined with a circular
Hough transform over a Canny edge map, and the iris boundary is then searched
with the same accumulator in a window around the pupil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, LocalizationError, NoPupilError, ParameterError
from .image import as_gray, binarize_dark, mean_intensity

FIRST_THRESHOLD = 0.52
SECOND_FACTOR = 0.6

CANNY_SIGMA = 1.4
CANNY_HIGH_FRAC = 0.2
CANNY_LOW_FRAC = 0.4

# Non-maximum suppression half-widths in (cx, cy, r).
NMS_RADII = (5, 5, 3)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def distance_to(self, other: "Circle") -> float:
        return math.hypot(self.cx - other.cx, self.cy - other.cy)


@dataclass(frozen=True)
class CircleHypothesis:
    center_x: int
    center_y: int
    radius: int
    score: int

    @property
    def circle(self) -> Circle:
        return Circle(float(self.center_x), float(self.center_y), float(self.radius))


@dataclass(frozen=True)
class PupilEstimate:
    p1: tuple[int, int]
    p2: tuple[int, int]
    p3: tuple[float, float]
    radius_seed: float


@dataclass(frozen=True)
class IrisGeometry:
    pupil: Circle
    iris: Circle

    def __post_init__(self):
        if not self.iris.r > self.pupil.r:
            raise ParameterError("iris radius must exceed pupil radius")
        if not self.pupil.distance_to(self.iris) < self.pupil.r:
            raise ParameterError("pupil and iris circles are not near-concentric")


@dataclass(frozen=True)
class Window:
    """Half-open pixel window ``[row0, row1) x [col0, col1)``."""

    row0: int
    row1: int
    col0: int
    col1: int


# --- Canny ----------------------------------------------------------------------


def canny(
    img: np.ndarray,
    high_frac: float = CANNY_HIGH_FRAC,
    low_frac: float = CANNY_LOW_FRAC,
    sigma: float = CANNY_SIGMA,
) -> np.ndarray:
    """Edge map via Gaussian smoothing, Sobel gradients, 4-way NMS and hysteresis.

    ``high = high_frac * max|grad|`` and ``low = low_frac * high``.
    """
    img = as_gray(img)
    if img.shape[0] < 5 or img.shape[1] < 5:
        raise DimensionError(f"canny needs at least 5x5 pixels, got {img.shape[1]}x{img.shape[0]}")
    if not 0 < high_frac <= 1 or not 0 < low_frac < 1 or sigma <= 0:
        raise ParameterError("canny thresholds or sigma out of range")

    smooth = ndimage.gaussian_filter(img.astype(np.float64), sigma=sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-9:
        return np.zeros(img.shape, dtype=bool)

    thin = _non_max_suppress(mag, gx, gy)
    high = high_frac * peak
    low = low_frac * high
    strong = thin >= high
    weak = thin >= low
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(img.shape, dtype=bool)
    keep = np.zeros(count + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def _non_max_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # 0: horizontal gradient, 1: 45 deg, 2: vertical, 3: 135 deg (row axis points down)
    sector = np.zeros(mag.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3

    pad = np.pad(mag, 1, mode="constant")
    c = pad[1:-1, 1:-1]
    # (forward, backward) neighbours along the gradient direction
    shifts = {
        0: ((0, 1), (0, -1)),
        1: ((1, 1), (-1, -1)),
        2: ((1, 0), (-1, 0)),
        3: ((1, -1), (-1, 1)),
    }
    out = np.zeros_like(mag)
    for s, ((dr1, dc1), (dr2, dc2)) in shifts.items():
        fwd = pad[1 + dr1 : 1 + dr1 + h, 1 + dc1 : 1 + dc1 + w]
        bwd = pad[1 + dr2 : 1 + dr2 + h, 1 + dc2 : 1 + dc2 + w]
        # strict on one side so two equal pixels straddling a step keep only one
        keep = (sector == s) & (c >= fwd) & (c > bwd)
        out[keep] = c[keep]
    out[0, :] = out[-1, :] = 0
    out[:, 0] = out[:, -1] = 0
    return out


# --- projections and the pupil seed -----------------------------------------------


def interest_region(img: np.ndarray) -> Window:
    """Central window spanning the middle 60% of rows and columns."""
    h, w = np.shape(img)[:2]
    r0, c0 = round(0.2 * h), round(0.2 * w)
    r1, c1 = round(0.8 * h), round(0.8 * w)
    return Window(r0, max(r1, r0 + 1), c0, max(c1, c0 + 1))


def _peak(counts: np.ndarray) -> int:
    # first maximum; a flat top of adjacent maxima resolves to its middle (rounded down)
    start = int(np.argmax(counts))
    end = start
    while end + 1 < counts.size and counts[end + 1] == counts[start]:
        end += 1
    return (start + end) // 2


def projection_point(mask: np.ndarray) -> tuple[int, int]:
    """(x, y) of the column and row holding the most foreground pixels.

    Separate equal peaks resolve to the smallest index. A disk's projection
    has a plateau of equal counts, whose middle is taken instead of its edge.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoPupilError("mask has no foreground pixels")
    return _peak(mask.sum(axis=0)), _peak(mask.sum(axis=1))


def _run_length(line: np.ndarray, pos: int) -> int:
    if not line[pos]:
        return 0
    left = pos
    while left > 0 and line[left - 1]:
        left -= 1
    right = pos
    while right < line.size - 1 and line[right + 1]:
        right += 1
    return right - left + 1


def pupil_blob(mask: np.ndarray) -> np.ndarray:
    """Largest 8-connected foreground component, with interior holes filled.

    Eyelashes and dark texture specks are dropped; specular reflections inside
    the pupil no longer cut its row and column counts.
    """
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(mask.shape, dtype=bool)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    # argmax picks the lowest label among equal sizes
    return ndimage.binary_fill_holes(labels == int(np.argmax(sizes)))


def midpoint(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    return (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]))


def estimate_pupil(img: np.ndarray) -> PupilEstimate:
    img = as_gray(img)
    mean = mean_intensity(img)
    first = FIRST_THRESHOLD * mean
    second = SECOND_FACTOR * first

    win = interest_region(img)
    sub = pupil_blob(binarize_dark(img[win.row0 : win.row1, win.col0 : win.col1], first))
    if not sub.any():
        raise NoPupilError(f"no pixel of the interest window is below {first:.2f}")
    x1, y1 = projection_point(sub)
    p1 = (x1 + win.col0, y1 + win.row0)

    full = pupil_blob(binarize_dark(img, second))
    if not full.any():
        raise NoPupilError(f"no pixel of the image is below {second:.2f}")
    p2 = projection_point(full)

    p3 = midpoint(p1, p2)
    col = int(math.floor(p3[0] + 0.5))
    row = int(math.floor(p3[1] + 0.5))
    dist1 = _run_length(full[row, :], col)
    dist2 = _run_length(full[:, col], row)
    seed = (dist1 + dist2) / 4.0
    if seed <= 0:
        raise NoPupilError(f"averaged projection point ({p3[0]}, {p3[1]}) is not on a dark region")
    return PupilEstimate(p1=p1, p2=p2, p3=p3, radius_seed=seed)


# --- circular Hough transform -----------------------------------------------------


def ring_size(r: int) -> int:
    """Number of integer offsets whose rounded distance from the origin is ``r``."""
    span = np.arange(-r - 1, r + 2)
    d = np.hypot(span[:, None], span[None, :])
    return int(np.count_nonzero(np.floor(d + 0.5) == r))


def hough_accumulator(
    edges: np.ndarray,
    r_min: int,
    r_max: int,
    center_window: Window | None = None,
) -> tuple[np.ndarray, Window]:
    """Vote counts ``acc[cy - row0, cx - col0, r - r_min]``.

    Every edge pixel votes, at each centre, for the radius equal to its
    rounded distance: this is full-circle voting with 1-pixel rings.
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    if not (1 <= r_min <= r_max < min(w, h)):
        raise ParameterError(f"invalid radius range [{r_min}, {r_max}] for a {w}x{h} map")
    if center_window is None:
        win = Window(0, h, 0, w)
    else:
        win = Window(
            max(0, center_window.row0),
            min(h, center_window.row1),
            max(0, center_window.col0),
            min(w, center_window.col1),
        )
    nr = r_max - r_min + 1
    ny, nx = max(0, win.row1 - win.row0), max(0, win.col1 - win.col0)
    acc = np.zeros((ny, nx, nr), dtype=np.int64)
    if ny == 0 or nx == 0:
        return acc, win

    ey, ex = np.nonzero(edges)
    # drop edge pixels that cannot reach any centre of the window
    dx = np.maximum(np.maximum(win.col0 - ex, ex - (win.col1 - 1)), 0)
    dy = np.maximum(np.maximum(win.row0 - ey, ey - (win.row1 - 1)), 0)
    near = dx * dx + dy * dy <= (r_max + 1) ** 2
    ex = ex[near].astype(np.float64)
    ey = ey[near].astype(np.float64)
    if ex.size == 0:
        return acc, win

    cys, cxs = np.mgrid[win.row0 : win.row1, win.col0 : win.col1]
    cxs = cxs.ravel().astype(np.float64)
    cys = cys.ravel().astype(np.float64)
    flat = acc.reshape(-1, nr)
    chunk = max(1, 4_000_000 // ex.size)
    for start in range(0, cxs.size, chunk):
        cx = cxs[start : start + chunk, None]
        cy = cys[start : start + chunk, None]
        rb = np.floor(np.hypot(ex[None, :] - cx, ey[None, :] - cy) + 0.5).astype(np.int64)
        ok = (rb >= r_min) & (rb <= r_max)
        rows = np.broadcast_to(np.arange(cx.shape[0])[:, None], rb.shape)[ok]
        idx = rows * nr + (rb[ok] - r_min)
        counts = np.bincount(idx, minlength=cx.shape[0] * nr)
        flat[start : start + cx.shape[0]] = counts.reshape(-1, nr)
    return acc, win


def hough_circles(
    edges: np.ndarray,
    r_min: int,
    r_max: int,
    center_window: Window | None = None,
    top_k: int = 1,
) -> list[CircleHypothesis]:
    """Top ``top_k`` circles by vote count, greedily non-maximum suppressed.

    Ordering is by score descending, then (cx, cy, r) ascending.
    """
    acc, win = hough_accumulator(edges, r_min, r_max, center_window)
    if top_k < 1 or acc.size == 0:
        return []
    iy, ix, ir = np.nonzero(acc)
    if iy.size == 0:
        return []
    scores = acc[iy, ix, ir]
    cx = ix + win.col0
    cy = iy + win.row0
    rr = ir + r_min
    order = np.lexsort((rr, cy, cx, -scores))
    sx, sy, sr = NMS_RADII
    picked: list[CircleHypothesis] = []
    for k in order:
        x, y, r = int(cx[k]), int(cy[k]), int(rr[k])
        if any(abs(x - p.center_x) <= sx and abs(y - p.center_y) <= sy and abs(r - p.radius) <= sr for p in picked):
            continue
        picked.append(CircleHypothesis(x, y, r, int(scores[k])))
        if len(picked) == top_k:
            break
    return picked


# --- full localization -------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationParams:
    canny_sigma: float = CANNY_SIGMA
    canny_high_frac: float = CANNY_HIGH_FRAC
    canny_low_frac: float = CANNY_LOW_FRAC
    pupil_radius_span: tuple[float, float] = (0.5, 1.5)
    pupil_center_tolerance: float = 10.0
    iris_radius_span: tuple[float, float] = (1.5, 5.0)
    iris_center_tolerance: float = 0.5
    # minimum votes as a fraction of the ring's pixel count
    min_support: float = 0.3


@dataclass
class LocalizationTrace:
    """Intermediate artefacts kept for debug dumps."""

    estimate: PupilEstimate | None = None
    edges: np.ndarray | None = None
    first_mask: np.ndarray | None = None
    second_mask: np.ndarray | None = None
    pupil_hypotheses: list[CircleHypothesis] | None = None
    iris_hypotheses: list[CircleHypothesis] | None = None


def _best_in_disc(
    edges: np.ndarray,
    r_min: int,
    r_max: int,
    center: tuple[float, float],
    tolerance: float,
    min_support: float,
) -> list[CircleHypothesis]:
    """Hypotheses centred within ``tolerance`` of ``center`` that pass the support test."""
    x0, y0 = center
    win = Window(
        int(math.ceil(y0 - tolerance)),
        int(math.floor(y0 + tolerance)) + 1,
        int(math.ceil(x0 - tolerance)),
        int(math.floor(x0 + tolerance)) + 1,
    )
    acc, win = hough_accumulator(edges, r_min, r_max, win)
    if acc.size == 0:
        return []
    cys, cxs = np.mgrid[win.row0 : win.row1, win.col0 : win.col1]
    outside = np.hypot(cxs - x0, cys - y0) > tolerance + 1e-9
    acc[outside] = 0
    rings = np.array([ring_size(r) for r in range(r_min, r_max + 1)], dtype=np.float64)
    acc[acc < min_support * rings[None, None, :]] = 0
    iy, ix, ir = np.nonzero(acc)
    if iy.size == 0:
        return []
    scores = acc[iy, ix, ir]
    cx, cy, rr = ix + win.col0, iy + win.row0, ir + r_min
    order = np.lexsort((rr, cy, cx, -scores))
    return [CircleHypothesis(int(cx[k]), int(cy[k]), int(rr[k]), int(scores[k])) for k in order[:5]]


def locate_iris(
    img: np.ndarray,
    params: LocalizationParams = LocalizationParams(),
    trace: LocalizationTrace | None = None,
) -> IrisGeometry:
    img = as_gray(img)
    h, w = img.shape
    est = estimate_pupil(img)
    edges = canny(img, params.canny_high_frac, params.canny_low_frac, params.canny_sigma)
    if trace is not None:
        mean = mean_intensity(img)
        trace.estimate = est
        trace.edges = edges
        trace.first_mask = binarize_dark(img, FIRST_THRESHOLD * mean)
        trace.second_mask = binarize_dark(img, SECOND_FACTOR * FIRST_THRESHOLD * mean)

    limit = min(w, h) - 1
    lo, hi = params.pupil_radius_span
    r_min = max(1, int(math.floor(lo * est.radius_seed)))
    r_max = min(limit, int(math.ceil(hi * est.radius_seed)))
    if r_min > r_max:
        raise LocalizationError("pupil", f"empty radius range from seed {est.radius_seed:.2f}")
    pupil_hyps = _best_in_disc(edges, r_min, r_max, est.p3, params.pupil_center_tolerance, params.min_support)
    if trace is not None:
        trace.pupil_hypotheses = pupil_hyps
    if not pupil_hyps:
        raise LocalizationError("pupil", "no circle with enough edge support near the projection point")
    pupil = pupil_hyps[0].circle

    lo, hi = params.iris_radius_span
    r_min = max(1, int(math.floor(lo * pupil.r)))
    r_max = min(limit, int(math.ceil(hi * pupil.r)))
    if r_min > r_max:
        raise LocalizationError("iris", "radius range does not fit in the image")
    tol = params.iris_center_tolerance * pupil.r
    iris_hyps = _best_in_disc(edges, max(r_min, int(pupil.r) + 1), r_max, (pupil.cx, pupil.cy), tol, params.min_support)
    if trace is not None:
        trace.iris_hypotheses = iris_hyps
    if not iris_hyps:
        raise LocalizationError("iris", "no circle with enough edge support around the pupil")
    return IrisGeometry(pupil=pupil, iris=iris_hyps[0].circle)
