import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import map_coordinates

from irislvq.errors import DataError, DimensionError, OutOfBoundsError, ParameterError
from irislvq.features import (
    LbpConfig,
    contrast_3x3,
    dense_codes,
    feature_vector,
    is_uniform,
    lbp_code_3x3,
    lbp_code_general,
    num_bins,
    read_feature_cache,
    region_histograms,
    transition_count,
    uniform_bin,
    uniform_codes,
    write_feature_cache,
)
from irislvq.normalization import NormalizedIris

REF_PATCH = [[6, 3, 4], [5, 4, 5], [3, 1, 4]]


def full_norm(texture):
    texture = np.asarray(texture, dtype=float)
    return NormalizedIris(texture, np.ones(texture.shape, bool))


def test_lbp_3x3_examples():
    assert lbp_code_3x3(REF_PATCH) == 157
    assert lbp_code_3x3(np.full((3, 3), 9)) == 255
    assert lbp_code_3x3([[1, 1, 1], [1, 5, 1], [1, 1, 1]]) == 0
    with pytest.raises(DimensionError):
        lbp_code_3x3(np.zeros((2, 3)))


def test_contrast_examples():
    assert contrast_3x3(REF_PATCH) == pytest.approx(2.4666667, abs=1e-6)
    assert contrast_3x3(np.full((3, 3), 7.0)) == 7.0
    alt = [[10, 0, 10], [0, 5, 10], [0, 10, 0]]
    assert contrast_3x3(alt) == 10.0


@given(arrays(np.int64, (3, 3), elements=st.integers(0, 255)), st.integers(-100, 100), st.integers(1, 7))
def test_lbp_3x3_gray_invariance(patch, shift, scale):
    code = lbp_code_3x3(patch)
    assert lbp_code_3x3(patch + shift) == code
    assert lbp_code_3x3(patch * scale) == code


def test_general_operator_integer_sampling_popcount():
    # snapping the eight circle samples to pixels visits the same neighbours
    # as the 3x3 operator, in counter-clockwise order from the right
    grid = np.array(REF_PATCH, float)
    code = lbp_code_general(grid, 1, 1, LbpConfig(8, 1), interpolate=False)
    assert bin(code).count("1") == bin(157).count("1") == 5
    ring = [grid[1, 2], grid[0, 2], grid[0, 1], grid[0, 0], grid[1, 0], grid[2, 0], grid[2, 1], grid[2, 2]]
    assert code == sum(1 << k for k, v in enumerate(ring) if v >= grid[1, 1])


def test_general_operator_bilinear_diagonals():
    # the bilinear diagonals of the reference patch fall below the centre
    code = lbp_code_general(np.array(REF_PATCH, float), 1, 1, LbpConfig(8, 1))
    assert bin(code).count("1") == 4


@pytest.mark.parametrize("P,R", [(8, 1), (16, 2), (24, 3)])
def test_general_operator_constant_grid(P, R):
    assert lbp_code_general(np.full((9, 9), 42.0), 4.3, 4.6, LbpConfig(P, R)) == 2**P - 1


def test_vertical_step_p16_r2():
    # analytic: samples at x >= the step column read 255 >= centre 255;
    # the two samples directly above and below sit on that column too
    grid = np.zeros((9, 9))
    grid[:, 4:] = 255.0
    dx = np.round(2 * np.cos(2 * np.pi * np.arange(16) / 16), 12)
    expected = int((dx >= 0).sum())
    assert expected == 9
    assert bin(lbp_code_general(grid, 4, 4, LbpConfig(16, 2))).count("1") == expected


def test_general_operator_out_of_bounds():
    with pytest.raises(OutOfBoundsError):
        lbp_code_general(np.zeros((9, 9)), 1, 4, LbpConfig(16, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(8, 1), (16, 2), (24, 3)]))
def test_general_operator_matches_map_coordinates(seed, pr):
    P, R = pr
    rng = np.random.default_rng(seed)
    grid = rng.uniform(0, 255, (11, 11))
    x, y = rng.uniform(R, 10 - R), rng.uniform(R, 10 - R)
    ang = 2 * np.pi * np.arange(P) / P
    xs = x + np.round(R * np.cos(ang), 12)
    ys = y - np.round(R * np.sin(ang), 12)
    samples = map_coordinates(grid, [ys, xs], order=1)
    center = map_coordinates(grid, [[y], [x]], order=1)[0]
    expected = sum(1 << k for k in range(P) if samples[k] >= center)
    assert lbp_code_general(grid, x, y, LbpConfig(P, R)) == expected


@pytest.mark.parametrize(
    "bits, transitions, uniform",
    [
        ("00000000", 0, True),
        ("01111000", 2, True),
        ("11101111", 2, True),
        ("01110000", 2, True),
        ("11011111", 2, True),
        ("10110101", 6, False),
    ],
)
def test_uniform_examples(bits, transitions, uniform):
    code = int(bits, 2)
    assert transition_count(code, 8) == transitions
    assert is_uniform(code, 8) is uniform


def test_uniform_bins_p8():
    assert len(uniform_codes(8)) == 58
    assert sum(is_uniform(c, 8) for c in range(256)) == 58
    assert num_bins(8) == 59
    assert uniform_bin(0, 8) == 0
    assert uniform_bin(255, 8) == 57
    assert uniform_bin(0b10110101, 8) == 58
    with pytest.raises(ParameterError):
        uniform_bin(256, 8)


@pytest.mark.parametrize("P", [8, 16])
def test_uniform_codes_enumeration(P):
    brute = [c for c in range(1 << P) if is_uniform(c, P)]
    assert uniform_codes(P).tolist() == brute
    assert len(brute) == P * (P - 1) + 2


def test_uniform_codes_p24_count():
    assert len(uniform_codes(24)) == 24 * 23 + 2


@given(st.integers(0, 255))
def test_transition_complement_symmetry(code):
    assert transition_count(code, 8) == transition_count(code ^ 0xFF, 8)


@pytest.mark.parametrize("P,R", [(8, 1), (16, 2), (24, 3)])
def test_dense_codes_match_pointwise(P, R):
    cfg = LbpConfig(P, R)
    rng = np.random.default_rng(P)
    tex = rng.uniform(0, 255, (40, 240))
    codes, _, ok = dense_codes(tex, np.ones(tex.shape, bool), cfg)
    assert not ok[:R].any() and not ok[-R:].any()
    assert ok[R:-R].all()
    for i in range(R, 40 - R, 7):
        for j in range(R, 240 - R, 13):
            assert codes[i, j] == lbp_code_general(tex, j, i, cfg)


def test_dense_codes_wrap_angularly():
    rng = np.random.default_rng(9)
    tex = rng.uniform(0, 255, (40, 240))
    cfg = LbpConfig(16, 2)
    codes, _, _ = dense_codes(tex, np.ones(tex.shape, bool), cfg)
    shifted, _, _ = dense_codes(np.roll(tex, 5, axis=1), np.ones(tex.shape, bool), cfg)
    assert np.array_equal(np.roll(codes, 5, axis=1), shifted)


def test_region_histograms_constant_and_occluded():
    cfg = LbpConfig()
    h = region_histograms(full_norm(np.full((40, 240), 90.0)), cfg)
    assert h.shape == (100, 59)
    assert (h[:, uniform_bin(255, 8)] == 1).all()
    assert h.sum() == 100
    occluded = NormalizedIris(np.full((40, 240), 90.0), np.zeros((40, 240), bool))
    assert not region_histograms(occluded, cfg).any()


def test_half_occluded_cell_recount():
    rng = np.random.default_rng(4)
    tex = rng.uniform(0, 255, (40, 240))
    valid = np.ones(tex.shape, bool)
    valid[4:8, 24:36] = False  # left half of cell (1, 1)
    cfg = LbpConfig()
    hist = region_histograms(NormalizedIris(tex, valid), cfg)[11]
    # recount: sites in the cell whose 3x3 support is fully valid
    counts = np.zeros(59)
    for i in range(4, 8):
        for j in range(24, 48):
            if valid[i - 1 : i + 2, j - 1 : j + 2].all():
                counts[uniform_bin(lbp_code_general(tex, j, i, cfg), 8)] += 1
    assert counts.sum() >= 0.25 * 96
    assert np.allclose(hist, counts / counts.sum(), atol=1e-12)
    assert hist.sum() == pytest.approx(1.0, abs=1e-9)


def test_sparse_cell_is_zeroed():
    tex = np.random.default_rng(2).uniform(0, 255, (40, 240))
    valid = np.ones(tex.shape, bool)
    valid[8:12, 0:24] = False
    valid[9, 10:14] = True  # a few usable pixels, far below 25% of sites
    hist = region_histograms(NormalizedIris(tex, valid), LbpConfig())
    assert not hist[20].any()


def test_feature_vector_layout_and_stats():
    cfg = LbpConfig()
    fv = feature_vector(full_norm(np.full((40, 240), 102.0)), cfg, label=3, name="x")
    assert fv.dimension == cfg.dimension == 5907
    c = 102.0 / 255
    assert np.allclose(fv.values[-7:], [0, c, c, c, 0, 0, c], atol=1e-12)
    assert fv.config_tag == "lbp-P8R1u+stats7g"
    with pytest.raises(DataError):
        feature_vector(NormalizedIris(np.zeros((40, 240)), np.zeros((40, 240), bool)), cfg)


def test_feature_vector_contrast_flag():
    cfg = LbpConfig(8, 1, contrast=True)
    fv = feature_vector(full_norm(np.random.default_rng(0).uniform(0, 255, (40, 240))), cfg)
    assert fv.dimension == 100 * 59 + 100 + 7
    assert LbpConfig(16, 2).dimension == 100 * 243 + 7
    assert LbpConfig(8, 1, uniform=False).dimension == 100 * 256 + 7
    with pytest.raises(ParameterError):
        LbpConfig(16, 2, uniform=False)
    with pytest.raises(ParameterError):
        LbpConfig(8, 2)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.9))
def test_histogram_blocks_sum_to_one_or_zero(seed, hole):
    rng = np.random.default_rng(seed)
    tex = rng.uniform(0, 255, (40, 240))
    valid = rng.random(tex.shape) >= hole
    if not valid.any():
        return
    fv = feature_vector(NormalizedIris(tex, valid), LbpConfig())
    sums = fv.values[:5900].reshape(100, 59).sum(1)
    assert np.all((np.abs(sums - 1) < 1e-9) | (sums == 0))
    again = feature_vector(NormalizedIris(tex, valid), LbpConfig())
    assert np.array_equal(fv.values, again.values)


def test_cell_shift_permutes_blocks():
    tex = np.random.default_rng(5).uniform(0, 255, (40, 240))
    cfg = LbpConfig()
    a = region_histograms(full_norm(tex), cfg).reshape(10, 10, -1)
    b = region_histograms(full_norm(np.roll(tex, 48, axis=1)), cfg).reshape(10, 10, -1)
    assert np.array_equal(np.roll(a, 2, axis=1), b)


def test_feature_cache_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    from irislvq.features import FeatureVector

    recs = [FeatureVector(rng.random(12), "tag", label=i % 2, name=f"im {i}", split="train") for i in range(3)]
    recs.append(FeatureVector(rng.random(12), "tag"))
    path = tmp_path / "f.txt"
    write_feature_cache(path, recs)
    back = read_feature_cache(path)
    for a, b in zip(recs, back):
        assert np.array_equal(a.values, b.values)
        assert (a.label, a.name, a.split, a.config_tag) == (b.label, b.name, b.split, b.config_tag)
    with pytest.raises(DimensionError):
        read_feature_cache(path, expected_dimension=13)


def test_feature_cache_rejects_inconsistent_record(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("irislvq-features 1\n@record name=a label=0 split=train dimension=3 config=t\n1 2\n")
    with pytest.raises(DimensionError):
        read_feature_cache(path)
    path.write_text("something else\n")
    with pytest.raises(DataError):
        read_feature_cache(path)
