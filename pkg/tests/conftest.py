import math
import re

import numpy as np
import pytest

from irislvq.localization import Circle


def disk(shape, cx, cy, r, inside=0, outside=255):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    img = np.full(shape, outside, dtype=np.uint8)
    img[np.hypot(xs - cx, ys - cy) <= r] = inside
    return img


def ring_edges(shape, cx, cy, r):
    """One-pixel ring: pixels whose rounded distance from the centre is r."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return np.floor(np.hypot(xs - cx, ys - cy) + 0.5) == r


def two_blobs(n=100, sigma=0.5, sep=10.0, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    c0 = np.zeros(dim)
    c1 = np.zeros(dim)
    c1[0] = sep
    X = np.vstack([rng.normal(c0, sigma, (n, dim)), rng.normal(c1, sigma, (n, dim))])
    y = np.array([0] * n + [1] * n)
    return X, y


def smooth_texture(rn, th):
    return 0.5 * np.cos(6 * th) * np.cos(math.pi * rn)


def concentric_eye(width=320, height=280, cx=160.0, cy=140.0, rp=30.0, ri=90.0, texture=smooth_texture, noise=0.0, seed=0, **kw):
    from irislvq.synth import render_eye

    rng = np.random.default_rng(seed)
    pupil, iris = Circle(cx, cy, rp), Circle(cx, cy, ri)
    img = render_eye(width, height, pupil, iris, texture, noise_sigma=noise, rng=rng, **kw)
    return img, pupil, iris


@pytest.fixture
def blobs():
    return two_blobs()


# --- per-criterion summary for the acceptance suite ----------------------------------

CRITERIA = {
    1: "LBP code of the 3x3 sub-image is 157",
    2: "contrast of the 3x3 sub-image is 2.4666667 +- 1e-6",
    3: "uniform-pattern classification of the six 8-bit examples",
    4: "seed midpoint and r=0 / r=1 boundary identities are exact",
    5: "histogram statistics match the oracle to 1e-9; mean ordering",
    6: ">= 95 of 100 noisy eyes localized within 2 px in < 120 s",
    7: "rubber-sheet rotation equivariance within +-2 on 20 eyes",
    8: "LVQ1 blobs: training accuracy >= 0.99; per-step distance identity",
    9: "ensemble vote rules, exhaustive over 3-member label patterns",
    10: "end-to-end benchmark >= 95.0% in < 10 min; report reproducible",
}
_outcomes: dict[int, list[bool]] = {}


def _criterion(item_name):
    m = re.match(r"test_c(\d\d)_", item_name)
    return int(m.group(1)) if m else None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    n = _criterion(item.name) if item.module.__name__ == "test_acceptance" else None
    if n is not None and (rep.when == "call" or rep.failed):
        _outcomes.setdefault(n, []).append(rep.passed if rep.when == "call" else False)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        if n not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}: {text}")
