"""Synthetic eye images with known geometry and per-class iris texture.

Each class owns a band texture defined in normalized polar coordinates
(radial position in [0, 1], angle), so after rubber-sheet unwrapping two images
of one class differ only by noise, rotation jitter and occlusion.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .image import encode_pgm
from .localization import Circle

PUPIL_LEVEL = 18.0
IRIS_LEVEL = 125.0
IRIS_AMPLITUDE = 42.0
SCLERA_LEVEL = 196.0
SKIN_LEVEL = 158.0
LASH_LEVEL = 28.0
HIGHLIGHT_LEVEL = 252.0
MARGIN = 5.0


@dataclass(frozen=True)
class SynthEyeSpec:
    classes: int = 20
    images_per_class: int = 10
    width: int = 320
    height: int = 280
    pupil_radius: tuple[float, float] = (20.0, 35.0)
    iris_ratio: tuple[float, float] = (2.0, 3.5)
    rotation_jitter: float = 4.0
    size_jitter: float = 0.03
    dilation_jitter: float = 0.1
    noise_sigma: float = 8.0
    occluder_prob: float = 0.3
    highlight_prob: float = 0.5
    train_fraction: float = 0.7
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 1 or self.images_per_class < 1:
            raise ParameterError("classes and images_per_class must be positive")
        lo, hi = self.pupil_radius
        rlo, rhi = self.iris_ratio
        if not (0 < lo <= hi) or not (1 < rlo <= rhi):
            raise ParameterError("invalid pupil radius or iris ratio range")
        if 2 * (hi * rhi * (1 + self.size_jitter) + MARGIN) > min(self.width, self.height):
            raise ParameterError(
                f"largest iris (r={hi * rhi:.1f}) does not fit a {self.width}x{self.height} image"
            )
        if self.noise_sigma < 0 or self.rotation_jitter < 0:
            raise ParameterError("noise and jitter must be non-negative")
        if not (0 <= self.size_jitter < 0.5 and 0 <= self.dilation_jitter < 0.5):
            raise ParameterError("size and dilation jitter must lie in [0, 0.5)")
        for p in (self.occluder_prob, self.highlight_prob, self.train_fraction):
            if not 0 <= p <= 1:
                raise ParameterError("probabilities and fractions must lie in [0, 1]")


@dataclass
class BandTexture:
    """Periodic texture on ``[0, 1] x [0, 2pi)`` with values in [-1, 1].

    A mixture of angular/radial sinusoids, smooth value noise and a set of
    sharp-edged crypts (dark or bright elliptical spots) unique to the class.
    """

    orders: np.ndarray
    radial_freqs: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    grid: np.ndarray = field(repr=False)
    crypts: np.ndarray = field(repr=False)  # rows: r, theta, radial half-width, angular half-width, sign

    @classmethod
    def for_class(cls, seed: int, class_id: int, components: int = 6, n_crypts: int = 40) -> "BandTexture":
        rng = np.random.default_rng([seed, class_id, 7919])
        crypts = np.column_stack(
            [
                rng.uniform(0.05, 0.95, n_crypts),
                rng.uniform(0, 2 * math.pi, n_crypts),
                rng.uniform(0.05, 0.14, n_crypts),
                rng.uniform(0.03, 0.09, n_crypts),
                rng.choice([-1.0, 1.0], n_crypts),
            ]
        )
        return cls(
            orders=rng.integers(12, 41, size=components),
            radial_freqs=rng.uniform(0.5, 4.0, size=components),
            phases=rng.uniform(0, 2 * math.pi, size=(components, 2)),
            weights=rng.uniform(0.5, 1.0, size=components),
            grid=rng.uniform(-1, 1, size=(7, 48)),
            crypts=crypts,
        )

    def __call__(self, rn: np.ndarray, theta: np.ndarray) -> np.ndarray:
        rn = np.asarray(rn, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        waves = np.zeros(rn.shape)
        for m, f, (pa, pr), wgt in zip(self.orders, self.radial_freqs, self.phases, self.weights):
            waves += wgt * np.cos(m * theta + pa) * np.cos(math.pi * f * rn + pr)
        waves /= self.weights.sum() * 0.5
        spots = np.zeros(rn.shape)
        for r0, t0, wr, wt, sign in self.crypts:
            dt = np.angle(np.exp(1j * (theta - t0)))
            e = ((rn - r0) / wr) ** 2 + (dt / wt) ** 2
            # flat-topped with a steep rim
            spots += sign * np.clip(3.0 * (1.0 - e), 0.0, 1.0)
        mix = 0.7 * np.clip(waves, -1, 1) + 0.2 * self._value_noise(rn, theta) + 0.6 * np.clip(spots, -1, 1)
        return np.clip(mix, -1, 1)

    def _value_noise(self, rn: np.ndarray, theta: np.ndarray) -> np.ndarray:
        nr, na = self.grid.shape
        u = np.clip(rn, 0, 1) * (nr - 1)
        v = (np.mod(theta, 2 * math.pi) / (2 * math.pi)) * na
        i0 = np.clip(np.floor(u).astype(int), 0, nr - 2)
        j0 = np.floor(v).astype(int) % na
        j1 = (j0 + 1) % na
        fu = _smoothstep(u - i0)
        fv = _smoothstep(v - np.floor(v))
        g = self.grid
        top = g[i0, j0] * (1 - fv) + g[i0, j1] * fv
        bot = g[i0 + 1, j0] * (1 - fv) + g[i0 + 1, j1] * fv
        return top * (1 - fu) + bot * fu


def _smoothstep(t):
    return t * t * (3 - 2 * t)


@dataclass(frozen=True)
class Eyelid:
    apex_y: float
    curvature: float
    lashes: tuple[tuple[float, float, float, float], ...]  # x, y, length, tilt


@dataclass(frozen=True)
class Highlight:
    x: float
    y: float
    r: float


def _coverage(signed_distance: np.ndarray) -> np.ndarray:
    """Pixel coverage of a region whose boundary is at signed distance 0 (positive inside)."""
    return np.clip(signed_distance + 0.5, 0.0, 1.0)


def _iris_extent(px, py, ix, iy, ir, ux, uy):
    # distance from the pupil centre to the iris circle along (ux, uy)
    dx, dy = ix - px, iy - py
    b = ux * dx + uy * dy
    return b + np.sqrt(np.maximum(b * b - (dx * dx + dy * dy) + ir * ir, 0.0))


def render_eye(
    width: int,
    height: int,
    pupil: Circle,
    iris: Circle,
    texture,
    rotation: float = 0.0,
    eyelid: Eyelid | None = None,
    highlight: Highlight | None = None,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    iris_level: float = IRIS_LEVEL,
    iris_amplitude: float = IRIS_AMPLITUDE,
) -> np.ndarray:
    """Render a gray eye. ``rotation`` (radians) turns the iris texture about the pupil centre."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dxp, dyp = xs - pupil.cx, ys - pupil.cy
    rho = np.hypot(dxp, dyp)
    theta = np.arctan2(dyp, dxp)
    safe = np.maximum(rho, 1e-9)
    extent = _iris_extent(pupil.cx, pupil.cy, iris.cx, iris.cy, iris.r, dxp / safe, dyp / safe)
    rn = (rho - pupil.r) / np.maximum(extent - pupil.r, 1e-9)

    iris_val = iris_level + iris_amplitude * texture(np.clip(rn, 0, 1), theta - rotation)
    a_pupil = _coverage(pupil.r - rho)
    a_iris = _coverage(iris.r - np.hypot(xs - iris.cx, ys - iris.cy))
    out = SCLERA_LEVEL * (1 - a_iris) + a_iris * (iris_val * (1 - a_pupil) + PUPIL_LEVEL * a_pupil)

    if highlight is not None:
        a = _coverage(highlight.r - np.hypot(xs - highlight.x, ys - highlight.y))
        out = out * (1 - a) + HIGHLIGHT_LEVEL * a
    if eyelid is not None:
        lid_y = eyelid.apex_y + eyelid.curvature * (xs - iris.cx) ** 2
        a = _coverage(lid_y - ys)
        out = out * (1 - a) + SKIN_LEVEL * a
        for lx, ly, length, tilt in eyelid.lashes:
            # thin segment from the lid edge downwards
            ex, ey = lx + length * math.sin(tilt), ly + length * math.cos(tilt)
            a = _coverage(1.0 - _segment_distance(xs, ys, lx, ly, ex, ey))
            out = out * (1 - a) + LASH_LEVEL * a
    if noise_sigma > 0:
        if rng is None:
            raise ParameterError("noise requires a random generator")
        out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _segment_distance(xs, ys, x0, y0, x1, y1):
    vx, vy = x1 - x0, y1 - y0
    t = np.clip(((xs - x0) * vx + (ys - y0) * vy) / (vx * vx + vy * vy), 0, 1)
    return np.hypot(xs - (x0 + t * vx), ys - (y0 + t * vy))


@dataclass(frozen=True)
class SyntheticEye:
    image: np.ndarray
    pupil: Circle
    iris: Circle
    rotation_deg: float
    class_id: int
    eyelid: Eyelid | None
    highlight: Highlight | None

    def truth(self) -> dict:
        return {
            "class": self.class_id,
            "pupil": [self.pupil.cx, self.pupil.cy, self.pupil.r],
            "iris": [self.iris.cx, self.iris.cy, self.iris.r],
            "rotation_deg": self.rotation_deg,
            "eyelid": None if self.eyelid is None else {"apex_y": self.eyelid.apex_y, "curvature": self.eyelid.curvature},
            "highlight": None if self.highlight is None else [self.highlight.x, self.highlight.y, self.highlight.r],
        }


def sample_eye(spec: SynthEyeSpec, class_id: int, index: int, texture=None) -> SyntheticEye:
    rng = np.random.default_rng([spec.seed, class_id, index, 104729])
    if texture is None:
        texture = BandTexture.for_class(spec.seed, class_id)
    # a subject keeps its iris size; the pupil dilates a little between captures
    base = np.random.default_rng([spec.seed, class_id, 7919])
    rp0 = base.uniform(*spec.pupil_radius)
    ri0 = rp0 * base.uniform(*spec.iris_ratio)
    ri = ri0 * (1 + rng.uniform(-spec.size_jitter, spec.size_jitter))
    rp = float(np.clip(rp0 * (1 + rng.uniform(-spec.dilation_jitter, spec.dilation_jitter)), *spec.pupil_radius))
    rp = float(np.clip(rp, ri / spec.iris_ratio[1], ri / spec.iris_ratio[0]))
    cx = rng.uniform(ri + MARGIN, spec.width - 1 - ri - MARGIN)
    cy = rng.uniform(ri + MARGIN, spec.height - 1 - ri - MARGIN)
    # small decentring of the pupil inside the iris
    off = rng.uniform(0, min(2.0, 0.05 * rp))
    ang = rng.uniform(0, 2 * math.pi)
    pupil = Circle(cx + off * math.cos(ang), cy + off * math.sin(ang), rp)
    iris = Circle(cx, cy, ri)
    rot = rng.uniform(-spec.rotation_jitter, spec.rotation_jitter)

    eyelid = None
    if rng.uniform() < spec.occluder_prob:
        apex = iris.cy - iris.r * rng.uniform(0.6, 0.85)
        curv = rng.uniform(0.8, 1.5) / (4 * iris.r)
        lashes = []
        for _ in range(int(rng.integers(4, 9))):
            lx = iris.cx + rng.uniform(-0.8, 0.8) * iris.r
            ly = apex + curv * (lx - iris.cx) ** 2
            lashes.append((lx, ly, rng.uniform(6, 14), rng.uniform(-0.5, 0.5)))
        eyelid = Eyelid(apex, curv, tuple(lashes))

    highlight = None
    if rng.uniform() < spec.highlight_prob:
        hr = rng.uniform(2.5, 4.0)
        ha = rng.uniform(0, 2 * math.pi)
        hd = 0.5 * rp
        highlight = Highlight(pupil.cx + hd * math.cos(ha), pupil.cy + hd * math.sin(ha), hr)

    img = render_eye(
        spec.width,
        spec.height,
        pupil,
        iris,
        texture,
        rotation=math.radians(rot),
        eyelid=eyelid,
        highlight=highlight,
        noise_sigma=spec.noise_sigma,
        rng=rng,
    )
    return SyntheticEye(img, pupil, iris, rot, class_id, eyelid, highlight)


def split_indices(spec: SynthEyeSpec, class_id: int) -> list[str]:
    """Seeded per-class train/test assignment."""
    n = spec.images_per_class
    n_train = max(1, int(math.floor(spec.train_fraction * n + 0.5)))
    rng = np.random.default_rng([spec.seed, class_id, 15485863])
    order = rng.permutation(n)
    split = ["test"] * n
    for i in order[:n_train]:
        split[int(i)] = "train"
    return split


def write_dataset(spec: SynthEyeSpec, out_dir: str | Path) -> Path:
    """Render the dataset under ``out_dir``; return the manifest path."""
    from .manifest import DatasetManifest, ManifestEntry

    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for c in range(spec.classes):
        texture = BandTexture.for_class(spec.seed, c)
        split = split_indices(spec, c)
        cdir = out / f"class{c:02d}"
        cdir.mkdir(exist_ok=True)
        for k in range(spec.images_per_class):
            eye = sample_eye(spec, c, k, texture)
            name = f"image{k:02d}"
            (cdir / f"{name}.pgm").write_bytes(encode_pgm(eye.image))
            (cdir / f"{name}.truth.json").write_text(json.dumps(eye.truth(), indent=1, sort_keys=True) + "\n")
            entries.append(ManifestEntry(f"class{c:02d}/{name}.pgm", c, split[k]))
    manifest = DatasetManifest(out, entries, notes=f"synthetic {json.dumps(asdict(spec), sort_keys=True)}")
    path = out / "manifest.txt"
    manifest.save(path)
    return path


def load_truth(image_path: str | Path) -> dict:
    p = Path(image_path)
    return json.loads(p.with_name(p.stem + ".truth.json").read_text())
