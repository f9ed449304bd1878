"""Local binary patterns, uniform-pattern histograms and the final feature vector.

The normalized iris (40 x 240) is split into a 10 x 10 grid of 4 x 24 cells.
Each cell contributes a normalized histogram of uniform LBP codes; seven global
intensity statistics are appended at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, OutOfBoundsError, ParameterError
from .image import histogram_stats
from .normalization import NormalizedIris

GRID = 10
MIN_VALID_SITES = 0.25
CONFIGS = ((8, 1), (16, 2), (24, 3))
N_STATS = 7

# Clockwise from the top-left neighbour, as (row, col) offsets.
CLOCKWISE_3X3 = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


@dataclass(frozen=True)
class LbpConfig:
    P: int = 8
    R: int = 1
    uniform: bool = True
    contrast: bool = False

    def __post_init__(self):
        if (self.P, self.R) not in CONFIGS:
            raise ParameterError(f"(P, R) must be one of {CONFIGS}, got ({self.P}, {self.R})")
        if not self.uniform and self.P != 8:
            raise ParameterError("non-uniform histograms are only supported for P=8")

    @property
    def bins(self) -> int:
        return num_bins(self.P, self.uniform)

    @property
    def dimension(self) -> int:
        return GRID * GRID * self.bins + N_STATS + (GRID * GRID if self.contrast else 0)

    @property
    def tag(self) -> str:
        return f"lbp-P{self.P}R{self.R}{'u' if self.uniform else 'f'}{'+c' if self.contrast else ''}+stats7g"


# --- 3x3 operator ------------------------------------------------------------------


def _neighbours_3x3(neigh) -> tuple[float, list[float]]:
    a = np.asarray(neigh, dtype=np.float64)
    if a.shape != (3, 3):
        raise DimensionError(f"expected a 3x3 patch, got shape {a.shape}")
    return a[1, 1], [a[1 + dr, 1 + dc] for dr, dc in CLOCKWISE_3X3]


def lbp_code_3x3(neigh) -> int:
    """Neighbours >= centre set their bit; bit k is the k-th clockwise neighbour from top-left."""
    center, ring = _neighbours_3x3(neigh)
    return sum(1 << k for k, v in enumerate(ring) if v >= center)


def contrast_3x3(neigh) -> float:
    center, ring = _neighbours_3x3(neigh)
    return _contrast(center, ring)


def _contrast(center: float, ring) -> float:
    ones = [v for v in ring if v >= center]
    zeros = [v for v in ring if v < center]
    m1 = sum(ones) / len(ones) if ones else 0.0
    m0 = sum(zeros) / len(zeros) if zeros else 0.0
    return m1 - m0


# --- circular (P, R) operator ---------------------------------------------------------


@lru_cache(maxsize=None)
def sample_offsets(P: int, R: float) -> tuple[np.ndarray, np.ndarray]:
    """(dx, dy) of the P samples; k = 0 is (R, 0), proceeding counter-clockwise on screen."""
    k = np.arange(P)
    dx = np.round(R * np.cos(2 * np.pi * k / P), 12) + 0.0
    dy = np.round(-R * np.sin(2 * np.pi * k / P), 12) + 0.0
    return dx, dy


def _bilinear(grid: np.ndarray, x, y):
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx, fy = x - x0, y - y0
    x1 = np.minimum(x0 + 1, grid.shape[1] - 1)
    y1 = np.minimum(y0 + 1, grid.shape[0] - 1)
    p00, p01 = grid[y0, x0], grid[y0, x1]
    p10, p11 = grid[y1, x0], grid[y1, x1]
    # difference form: exact on flat neighbourhoods
    return p00 + fx * (p01 - p00) + fy * (p10 - p00) + fx * fy * (p11 - p10 - p01 + p00)


def lbp_code_general(grid, x: float, y: float, cfg: LbpConfig, interpolate: bool = True) -> int:
    """Circular LBP code at (x, y). With ``interpolate=False`` samples snap to the nearest pixel."""
    g = np.asarray(grid, dtype=np.float64)
    h, w = g.shape
    dx, dy = sample_offsets(cfg.P, float(cfg.R))
    sx, sy = x + dx, y + dy
    if interpolate:
        lo_x, hi_x = np.floor(min(x, sx.min())), np.ceil(max(x, sx.max()))
        lo_y, hi_y = np.floor(min(y, sy.min())), np.ceil(max(y, sy.max()))
    else:
        sx, sy = np.floor(sx + 0.5), np.floor(sy + 0.5)
        lo_x, hi_x = min(math.floor(x + 0.5), sx.min()), max(math.floor(x + 0.5), sx.max())
        lo_y, hi_y = min(math.floor(y + 0.5), sy.min()), max(math.floor(y + 0.5), sy.max())
    if lo_x < 0 or lo_y < 0 or hi_x > w - 1 or hi_y > h - 1:
        raise OutOfBoundsError(f"sampling circle of radius {cfg.R} around ({x}, {y}) leaves the grid")
    if interpolate:
        center = _bilinear(g, np.array([x]), np.array([y]))[0]
        samples = _bilinear(g, sx, sy)
    else:
        center = g[math.floor(y + 0.5), math.floor(x + 0.5)]
        samples = g[sy.astype(int), sx.astype(int)]
    return int(sum(1 << k for k in range(cfg.P) if samples[k] >= center))


# --- uniform patterns -------------------------------------------------------------------


def transition_count(code: int, P: int) -> int:
    rotated = ((code >> 1) | ((code & 1) << (P - 1))) & ((1 << P) - 1)
    return bin(code ^ rotated).count("1")


def is_uniform(code: int, P: int) -> bool:
    return transition_count(code, P) <= 2


@lru_cache(maxsize=None)
def uniform_codes(P: int) -> np.ndarray:
    """All uniform P-bit codes in ascending order (one circular run of ones, or none)."""
    full = (1 << P) - 1
    codes = {0, full}
    for length in range(1, P):
        run = (1 << length) - 1
        for shift in range(P):
            codes.add(((run << shift) | (run >> (P - shift))) & full)
    return np.array(sorted(codes), dtype=np.int64)


@lru_cache(maxsize=None)
def uniform_table(P: int) -> np.ndarray:
    """Lookup table code -> bin for P <= 16."""
    table = np.full(1 << P, P * (P - 1) + 2, dtype=np.int64)
    uc = uniform_codes(P)
    table[uc] = np.arange(uc.size)
    return table


def uniform_bin(code: int, P: int) -> int:
    """Uniform codes get their own bin in ascending code order; the rest share the last bin."""
    if not 0 <= code < (1 << P):
        raise ParameterError(f"code {code} out of range for P={P}")
    uc = uniform_codes(P)
    pos = int(np.searchsorted(uc, code))
    return pos if pos < uc.size and uc[pos] == code else uc.size


def num_bins(P: int, uniform: bool = True) -> int:
    return P * (P - 1) + 3 if uniform else 1 << P


# --- dense codes over a normalized iris ------------------------------------------------


def dense_codes(texture: np.ndarray, valid: np.ndarray, cfg: LbpConfig):
    """LBP code, contrast and site validity at every cell of the unwrapped iris.

    The angular axis (columns) wraps around; the radial axis does not.
    A site is usable only when its centre and every bilinear support pixel
    are valid and radially in bounds.
    """
    tex = np.asarray(texture, dtype=np.float64)
    val = np.asarray(valid, dtype=bool)
    H, W = tex.shape
    dx, dy = sample_offsets(cfg.P, float(cfg.R))
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    codes = np.zeros((H, W), dtype=np.int64)
    ok = val.copy()
    ones_sum = np.zeros((H, W))
    ones_n = np.zeros((H, W))
    zeros_sum = np.zeros((H, W))
    zeros_n = np.zeros((H, W))
    for k in range(cfg.P):
        fx0 = math.floor(dx[k])
        fy0 = math.floor(dy[k])
        fx, fy = dx[k] - fx0, dy[k] - fy0
        r0 = rows + fy0
        r1 = r0 + (1 if fy > 0 else 0)
        inb = (r0 >= 0) & (r1 < H)
        r0c, r1c = np.clip(r0, 0, H - 1), np.clip(r1, 0, H - 1)
        c0 = (cols + fx0) % W
        c1 = (c0 + (1 if fx > 0 else 0)) % W
        p00, p01 = tex[r0c, c0], tex[r0c, c1]
        p10, p11 = tex[r1c, c0], tex[r1c, c1]
        sample = p00 + fx * (p01 - p00) + fy * (p10 - p00) + fx * fy * (p11 - p10 - p01 + p00)
        support = val[r0c, c0] & val[r0c, c1] & val[r1c, c0] & val[r1c, c1]
        ok &= np.broadcast_to(inb, ok.shape) & support
        bit = sample >= tex
        codes |= bit.astype(np.int64) << k
        ones_sum += np.where(bit, sample, 0.0)
        ones_n += bit
        zeros_sum += np.where(bit, 0.0, sample)
        zeros_n += ~bit
    contrast = np.where(ones_n > 0, ones_sum / np.maximum(ones_n, 1), 0.0) - np.where(
        zeros_n > 0, zeros_sum / np.maximum(zeros_n, 1), 0.0
    )
    return codes, contrast, ok


def _code_bins(codes: np.ndarray, cfg: LbpConfig) -> np.ndarray:
    if not cfg.uniform:
        return codes
    if cfg.P <= 16:
        return uniform_table(cfg.P)[codes]
    uc = uniform_codes(cfg.P)
    pos = np.searchsorted(uc, codes)
    hit = uc[np.minimum(pos, uc.size - 1)] == codes
    return np.where(hit, pos, uc.size)


def region_histograms(norm: NormalizedIris, cfg: LbpConfig) -> np.ndarray:
    """(100, bins) array of per-cell histograms, each summing to 1 or all zero."""
    return _regions(norm, cfg)[0]


def _regions(norm: NormalizedIris, cfg: LbpConfig):
    H, W = norm.texture.shape
    if H % GRID or W % GRID:
        raise DimensionError(f"normalized iris {H}x{W} is not divisible into a {GRID}x{GRID} grid")
    codes, contrast, ok = dense_codes(norm.texture, norm.valid, cfg)
    bins = _code_bins(codes, cfg)
    ch, cw = H // GRID, W // GRID
    nb = cfg.bins
    hists = np.zeros((GRID * GRID, nb))
    cell_contrast = np.zeros(GRID * GRID)
    for gi in range(GRID):
        for gj in range(GRID):
            sl = np.s_[gi * ch : (gi + 1) * ch, gj * cw : (gj + 1) * cw]
            m = ok[sl]
            n = int(m.sum())
            if n < MIN_VALID_SITES * ch * cw:
                continue
            counts = np.bincount(bins[sl][m], minlength=nb)
            hists[gi * GRID + gj] = counts / n
            cell_contrast[gi * GRID + gj] = contrast[sl][m].mean()
    return hists, cell_contrast


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    config_tag: str
    label: int | None = None
    name: str = ""
    split: str = ""

    @property
    def dimension(self) -> int:
        return int(self.values.size)


def feature_vector(norm: NormalizedIris, cfg: LbpConfig = LbpConfig(), label: int | None = None, name: str = "") -> FeatureVector:
    """Regional histograms, optional per-cell contrast, then seven global statistics."""
    samples = norm.texture[norm.valid]
    if samples.size == 0:
        raise DataError("normalized iris has no valid pixels")
    hists, cell_contrast = _regions(norm, cfg)
    st = histogram_stats(samples)
    stats = np.array(
        [
            st.range / 255.0,
            st.mean / 255.0,
            st.geometric_mean / 255.0,
            st.harmonic_mean / 255.0,
            st.std_dev / 255.0,
            st.variance / 255.0**2,
            st.median / 255.0,
        ]
    )
    parts = [hists.ravel()]
    if cfg.contrast:
        parts.append(cell_contrast / 255.0)
    parts.append(stats)
    return FeatureVector(np.concatenate(parts), cfg.tag, label, name)


# --- feature cache file --------------------------------------------------------------------

CACHE_HEADER = "irislvq-features 1"


def _fmt(v: float) -> str:
    return repr(float(v))


def write_feature_cache(path: str | Path, records: list[FeatureVector]) -> None:
    """One header line per record followed by one line of values.

    ``@record name=<name> label=<int|-> split=<train|test|-> dimension=<n> config=<tag>``
    """
    lines = [CACHE_HEADER]
    for fv in records:
        label = "-" if fv.label is None else str(fv.label)
        split = fv.split or "-"
        name = fv.name.replace(" ", "%20") or "-"
        lines.append(f"@record name={name} label={label} split={split} dimension={fv.dimension} config={fv.config_tag}")
        lines.append(" ".join(_fmt(v) for v in fv.values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_cache(path: str | Path, expected_dimension: int | None = None) -> list[FeatureVector]:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CACHE_HEADER:
        raise DataError(f"{path}: not a feature cache (bad header)")
    out = []
    i = 1
    while i < len(text):
        line = text[i]
        if not line.strip():
            i += 1
            continue
        if not line.startswith("@record "):
            raise DataError(f"{path}:{i + 1}: expected a record header")
        fields = dict(tok.split("=", 1) for tok in line.split()[1:])
        if i + 1 >= len(text):
            raise DataError(f"{path}:{i + 1}: record without values")
        values = np.array([float(t) for t in text[i + 1].split()], dtype=np.float64)
        name = fields.get("name", "-").replace("%20", " ")
        dim = int(fields["dimension"])
        if values.size != dim:
            raise DimensionError(f"{path}: record {name!r} declares {dim} values but holds {values.size}")
        if expected_dimension is not None and dim != expected_dimension:
            raise DimensionError(f"{path}: record {name!r} has dimension {dim}, expected {expected_dimension}")
        label = None if fields.get("label", "-") == "-" else int(fields["label"])
        split = "" if fields.get("split", "-") == "-" else fields["split"]
        out.append(FeatureVector(values, fields.get("config", ""), label, "" if name == "-" else name, split))
        i += 2
    return out
