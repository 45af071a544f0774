import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from skimage.feature import graycomatrix, graycoprops
from skimage.measure import moments_central, moments_hu, moments_normalized

import coenobia.features as F
from coenobia.core import N_FEATURES, RegionPatch
from coenobia.errors import DescriptorError, EmptyMask, MalformedRow, NonFiniteFeature, TooFewSamples
from coenobia.features import Standardizer, extract_all, read_features, write_features
from coenobia.features.hog import cell_histograms, hog_descriptor
from coenobia.features.moments import (hu_moments, hu_raw, signed_log, zernike_complex,
                                       zernike_moments, zernike_orders)
from coenobia.features.texture import (GLCM_OFFSETS, LBP_NEIGHBORS, glcm, haralick_features,
                                       haralick_stats, lbp_codes, lbp_histogram, quantize)
from coenobia.segment.orientation import rotate_image

from helpers import disk, random_shape


def blob(rng, shape=(40, 48), margin=6):
    """Random textured ellipse patch."""
    h, w = shape
    yy, xx = np.mgrid[:h, :w]
    cy, cx = h / 2 + rng.uniform(-2, 2), w / 2 + rng.uniform(-2, 2)
    ry, rx = rng.uniform(5, h / 2 - margin), rng.uniform(5, w / 2 - margin)
    t = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(t) + (yy - cy) * np.sin(t)
    v = -(xx - cx) * np.sin(t) + (yy - cy) * np.cos(t)
    mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1
    img = rng.integers(30, 230, shape).astype(np.uint8)
    return img, mask


def rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-12)


# --- Hu ------------------------------------------------------------------------------

def test_hu_matches_reference_implementation(rng):
    for _ in range(20):
        img, mask = blob(rng)
        f = img.astype(float) * mask
        ref = moments_hu(moments_normalized(moments_central(f, order=3), order=3))
        ref[6] = -ref[6]  # (row, col) axes are a mirror of (x, y): the skew invariant flips
        assert np.allclose(hu_raw(img, mask), ref, rtol=1e-9, atol=1e-300)


def test_hu_exact_quarter_turn(rng):
    for _ in range(100):
        img, mask = blob(rng)
        a = hu_raw(img, mask)
        b = hu_raw(np.rot90(img), np.rot90(mask))
        assert np.all(rel(b, a) <= 1e-6)


def test_hu_translation_invariant(rng):
    for _ in range(100):
        img, mask = blob(rng, shape=(30, 30), margin=3)
        dy, dx = rng.integers(0, 20, 2)
        big_i = np.zeros((60, 60), np.uint8)
        big_m = np.zeros((60, 60), bool)
        big_i[dy:dy + 30, dx:dx + 30] = img
        big_m[dy:dy + 30, dx:dx + 30] = mask
        assert np.all(rel(hu_moments(big_i, big_m), hu_moments(img, mask)) <= 1e-6)


def test_hu_scale_invariant_nn_upscale(rng):
    img, mask = blob(rng)
    up_i = np.kron(img, np.ones((2, 2), np.uint8))
    up_m = np.kron(mask, np.ones((2, 2), bool))
    assert np.all(rel(hu_raw(up_i, up_m), hu_raw(img, mask)) <= 0.02)


def test_hu_mirror_flips_phi7(rng):
    img, mask = blob(rng)
    a = hu_raw(img, mask)
    b = hu_raw(img[:, ::-1], mask[:, ::-1])
    assert np.all(rel(b[:6], a[:6]) <= 1e-6)
    assert abs(abs(b[6]) - abs(a[6])) <= 1e-6 * abs(a[6]) and np.sign(b[6]) == -np.sign(a[6])


def test_signed_log():
    assert np.allclose(signed_log(np.array([100.0, -100.0, 1e-3])), [2.0, -2.0, -3.0])


# --- Zernike -----------------------------------------------------------------------

def zernike_oracle(image, mask, n, m):
    """Direct evaluation of the radial polynomial by its factorial sum."""
    ys, xs = np.nonzero(mask)
    f = image.astype(float)[ys, xs]
    if f.sum() <= 0:
        f = np.ones_like(f)
    keep = f > 0
    ys, xs, f = ys[keep], xs[keep], f[keep]
    yc, xc = np.average(ys, weights=f), np.average(xs, weights=f)
    dx, dy = xs - xc, -(ys - yc)
    r = max(2 * np.sqrt(np.average(dx ** 2 + dy ** 2, weights=f)), 1.0)
    rho, th = np.hypot(dx, dy) / r, np.arctan2(dy, dx)
    am = abs(m)
    R = sum((-1) ** s * math.factorial(n - s)
            / (math.factorial(s) * math.factorial((n + am) // 2 - s) * math.factorial((n - am) // 2 - s))
            * rho ** (n - 2 * s) for s in range((n - am) // 2 + 1))
    return (n + 1) / np.pi * np.sum(f * R * np.exp(-1j * m * th)) / r ** 2


def test_zernike_orders():
    orders = zernike_orders()
    assert len(orders) == 40 and len(set(orders)) == 40
    assert all(m >= 0 and (n - m) % 2 == 0 and m <= n for n, m in orders)


def test_zernike_matches_oracle(rng):
    img, mask = blob(rng)
    got = zernike_complex(img, mask)
    want = [zernike_oracle(img, mask, n, m) for n, m in zernike_orders()]
    assert np.allclose(got, want, rtol=1e-9, atol=1e-12)


def rotated(img, mask, angle):
    ri = np.clip(np.floor(rotate_image(img, angle, 0.0, order=1) + 0.5), 0, 255).astype(np.uint8)
    rm = rotate_image(mask.astype(float), angle, 0.0, order=0) > 0.5
    return ri, rm


def test_zernike_rotation_30(rng):
    """Each magnitude moves by at most 5% of the descriptor's largest magnitude."""
    for _ in range(100):
        img, mask = random_shape(rng)
        a = zernike_moments(img, mask)
        b = zernike_moments(*rotated(img, mask, 30.0))
        assert np.max(np.abs(b - a)) <= 0.05 * a.max()


def test_zernike_uniform_disk_symmetry():
    """A grid disk has the square's symmetry: |A_nm| vanishes for m not a multiple of 4."""
    mask = disk((81, 81), (40, 40), 30)
    img = np.where(mask, 100, 0).astype(np.uint8)
    vals = zernike_moments(img, mask)
    for (n, m), v in zip(zernike_orders(), vals):
        if m % 4:
            assert v < 1e-6
    ref = {(n, m): v for (n, m), v in zip(zernike_orders(), vals)}
    assert ref[(2, 0)] > 1.0


def test_zernike_translation_invariant(rng):
    for _ in range(100):
        img, mask = blob(rng, shape=(30, 30), margin=3)
        dy, dx = rng.integers(0, 20, 2)
        big_i = np.zeros((60, 60), np.uint8)
        big_m = np.zeros((60, 60), bool)
        big_i[dy:dy + 30, dx:dx + 30] = img
        big_m[dy:dy + 30, dx:dx + 30] = mask
        a = zernike_moments(img, mask)
        assert np.all(np.abs(zernike_moments(big_i, big_m) - a) <= 1e-6 * np.maximum(a, 1e-3))


def test_zernike_empty_mask():
    with pytest.raises(EmptyMask):
        zernike_moments(np.zeros((5, 5), np.uint8), np.zeros((5, 5), bool))


# --- HOG ---------------------------------------------------------------------------

def test_hog_constant_is_zero():
    out = hog_descriptor(np.full((30, 40), 90, np.uint8))
    assert out.shape == (81,) and np.all(out == 0) and np.all(np.isfinite(out))


def test_hog_vertical_edges():
    img = np.zeros((48, 48), np.uint8)
    for x0 in (8, 24, 40):
        img[:, x0:x0 + 8] = 200  # one vertical step inside every cell column
    hist = cell_histograms(img.astype(float))
    for cy in range(3):
        for cx in range(3):
            h = hist[cy, cx]
            assert h[0] >= 0.8 * h.sum()


def test_hog_length_and_norm(rng):
    for _ in range(10):
        img, mask = blob(rng, shape=(int(rng.integers(24, 90)), int(rng.integers(24, 90))), margin=2)
        out = hog_descriptor(img, mask)
        assert out.shape == (81,)
        norms = np.linalg.norm(out.reshape(9, 9), axis=1)
        assert np.all(norms <= 1 + 1e-9)


# --- LBP ---------------------------------------------------------------------------

def lbp_oracle(img):
    """Per-pixel codes and 59-bin u2 labels by direct enumeration."""
    img = img.astype(int)
    h, w = img.shape
    uniform = [c for c in range(256)
               if sum(((c >> k) & 1) != ((c >> ((k + 1) % 8)) & 1) for k in range(8)) <= 2]
    label = {c: i for i, c in enumerate(uniform)}
    out = np.zeros((h - 2, w - 2), int)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            code = 0
            for k, (dy, dx) in enumerate(LBP_NEIGHBORS):
                code |= int(img[y + dy, x + dx] >= img[y, x]) << k
            out[y - 1, x - 1] = label.get(code, 58)
    return out


def test_lbp_constant_single_bin():
    hist = lbp_histogram(np.full((10, 10), 77, np.uint8))
    assert hist.shape == (59,) and hist.max() == 1.0 and hist.sum() == 1.0
    assert np.all(lbp_codes(np.full((5, 5), 3, np.uint8)) == lbp_codes(np.full((5, 5), 9, np.uint8)))


def test_lbp_checkerboard_matches_oracle():
    tile = np.array([[0, 255], [255, 0]], np.uint8)
    img = np.tile(tile, (8, 8))
    labels = lbp_oracle(img)
    want = np.bincount(labels.ravel(), minlength=59) / labels.size
    got = lbp_histogram(img)
    assert np.allclose(got, want)
    assert np.count_nonzero(got) == 2


def test_lbp_random_matches_oracle(rng):
    img = rng.integers(0, 256, (12, 15)).astype(np.uint8)
    labels = lbp_oracle(img)
    want = np.bincount(labels.ravel(), minlength=59) / labels.size
    assert np.allclose(lbp_histogram(img), want)


def test_lbp_histogram_sums_to_one(rng):
    img, mask = blob(rng)
    h = lbp_histogram(img, mask)
    assert h.shape == (59,) and h.sum() == pytest.approx(1.0)


def test_lbp_shift_invariant(rng):
    img = rng.integers(60, 180, (30, 30)).astype(np.uint8)
    assert np.array_equal(lbp_histogram(img), lbp_histogram(img + 8))


# --- GLCM / Haralick -------------------------------------------------------------------

def test_haralick_constant():
    out = haralick_features(np.full((12, 12), 150, np.uint8))
    assert out.shape == (28,)
    means, ranges = out[:14], out[14:]
    assert means[0] == 1.0 and means[1] == 0.0 and means[8] == 0.0
    assert np.all(ranges == 0)


def test_checkerboard_contrast_is_one():
    q = np.indices((10, 10)).sum(axis=0) % 2
    p = glcm(q, np.ones_like(q, bool), (0, 1))
    assert haralick_stats(p)[1] == 1.0


def test_glcm_symmetric_normalized(rng):
    img, mask = blob(rng)
    q = quantize(img)
    for off in GLCM_OFFSETS:
        p = glcm(q, mask, off)
        assert np.allclose(p, p.T) and p.sum() == pytest.approx(1.0)


def test_glcm_matches_skimage(rng):
    img = rng.integers(0, 256, (20, 25)).astype(np.uint8)
    q = quantize(img)
    # skimage measures angles with rows pointing down
    angles = {(0, 1): 0.0, (-1, 1): 3 * np.pi / 4, (-1, 0): np.pi / 2, (-1, -1): np.pi / 4}
    for off in GLCM_OFFSETS:
        ref = graycomatrix(q, [1], [angles[off]], levels=8, symmetric=True, normed=True)[:, :, 0, 0]
        p = glcm(q, np.ones(q.shape, bool), off)
        assert np.allclose(p, ref)
        s = haralick_stats(p)
        assert s[0] == pytest.approx(graycoprops(ref[:, :, None, None], "ASM")[0, 0])
        assert s[1] == pytest.approx(graycoprops(ref[:, :, None, None], "contrast")[0, 0])
        assert s[2] == pytest.approx(graycoprops(ref[:, :, None, None], "correlation")[0, 0])
        assert s[4] == pytest.approx(graycoprops(ref[:, :, None, None], "homogeneity")[0, 0])


def test_haralick_shape_and_ranges(rng):
    for _ in range(10):
        img, mask = blob(rng)
        out = haralick_features(img, mask)
        assert out.shape == (28,) and np.all(out[14:] >= 0) and np.all(np.isfinite(out))


def test_haralick_shift_invariant():
    rng = np.random.default_rng(3)
    base = (rng.integers(1, 7, (24, 24)) * 32 + rng.integers(4, 20, (24, 24))).astype(np.uint8)
    assert np.array_equal(haralick_features(base), haralick_features(base + 8))


# --- extraction -----------------------------------------------------------------------

def test_extract_all_shape_and_determinism(rng):
    img, mask = blob(rng)
    a = extract_all((img, mask))
    b = extract_all(RegionPatch(img.copy(), mask.copy()))
    assert a.shape == (N_FEATURES,) and np.all(np.isfinite(a)) and np.array_equal(a, b)


def test_extract_all_names_failing_block(monkeypatch):
    img = np.full((20, 20), 100, np.uint8)
    empty = np.zeros((20, 20), bool)
    with pytest.raises(DescriptorError) as info:
        extract_all((img, empty))
    assert info.value.block == "hu"
    monkeypatch.setitem(F._BLOCK_FUNCS, "hu", lambda i, m: np.zeros(7))
    monkeypatch.setitem(F._BLOCK_FUNCS, "hog", lambda i, m: np.zeros(81))
    with pytest.raises(DescriptorError) as info:
        extract_all((img, empty))
    assert info.value.block == "zernike"


def test_fuzz_corpus_is_finite():
    rng = np.random.default_rng(99)
    for k in range(1000):
        h, w = int(rng.integers(3, 70)), int(rng.integers(3, 70))
        img = rng.integers(0, 256, (h, w)).astype(np.uint8)
        kind = k % 4
        if kind == 0:
            mask = np.zeros((h, w), bool)
            mask[rng.integers(1, h - 1) if h > 2 else 0, rng.integers(1, w - 1) if w > 2 else 0] = True
        elif kind == 1:
            mask = rng.random((h, w)) < rng.uniform(0.05, 0.9)
        elif kind == 2:
            mask = np.zeros((h, w), bool)
            mask[h // 2, :] = True  # one-pixel-thick line, extreme aspect ratio
        else:
            mask = np.ones((h, w), bool)
            img = np.full((h, w), rng.integers(0, 256), np.uint8)
        if not mask.any():
            mask[0, 0] = True
        try:
            v = extract_all((img, mask))
        except DescriptorError as exc:
            assert exc.block in ("lbp", "haralick")  # texture needs interior pixels / pairs
            continue
        assert np.all(np.isfinite(v))


# --- standardizer and files ------------------------------------------------------------

def test_standardizer_examples():
    s = Standardizer.fit(np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0 and s.std[0] == 1.0 and s.apply(np.array([[0.0]]))[0, 0] == -1.0
    s = Standardizer.fit(np.array([[5.0, 1.0], [5.0, 3.0]]))
    assert np.all(s.apply(np.array([[9.0, 2.0]]))[:, 0] == 0.0)
    with pytest.raises(TooFewSamples):
        Standardizer.fit(np.zeros((1, 3)))


@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 10_000))
def test_standardizer_centers_train(n, d, seed):
    X = np.random.default_rng(seed).normal(3.0, 5.0, (n, d))
    Z = Standardizer.fit(X).apply(X)
    assert np.all(np.abs(Z.mean(axis=0)) <= 1e-9)


def test_features_csv_round_trip(tmp_path, rng):
    X = rng.normal(size=(4, N_FEATURES))
    write_features(tmp_path / "f.csv", ["a#0", "b#1", "c#2", "d#3"], X, [1, 2, 4, 8])
    text = (tmp_path / "f.csv").read_text(encoding="utf-8")
    assert text.startswith("# blocks: hu=f000-f006 hog=f007-f087")
    ds = read_features(tmp_path / "f.csv")
    assert ds.ids == ["a#0", "b#1", "c#2", "d#3"] and np.array_equal(ds.X, X)
    assert ds.y.tolist() == [1, 2, 4, 8]


def test_features_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    header = "sample_id,label," + ",".join(f"f{i:03d}" for i in range(N_FEATURES))
    p.write_text(header + "\na#0,1," + ",".join(["0"] * 214) + "\n", encoding="utf-8")
    with pytest.raises(MalformedRow):
        read_features(p)
    p.write_text(header + "\na#0,1," + ",".join(["nan"] * 215) + "\n", encoding="utf-8")
    with pytest.raises(NonFiniteFeature):
        read_features(p)
