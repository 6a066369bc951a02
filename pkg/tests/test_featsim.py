import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthstruct.align import AffineParams, apply_affine
from depthstruct.core import FeatureTensor, write_feature_tensor
from depthstruct.featsim import (ExternalFeatures, FilterBankExtractor,
                                 UnsupportedGradientError, channel_normalize,
                                 extract_features, feature_loss, mono_feature_loss,
                                 mono_feature_loss_gradient, multi_layer_feature_loss,
                                 triplicate)
from oracles import extractor_brute

EX = FilterBankExtractor(42)


def _splitmix_uniforms(seed, n, lo, hi):
    mask = (1 << 64) - 1
    state, out = seed, []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z ^= z >> 31
        out.append(lo + (hi - lo) * (z >> 11) / 2.0 ** 53)
    return np.array(out)


def test_weights_follow_seeded_glorot_draw():
    a1 = math.sqrt(6 / (3 * 9 + 16 * 9))
    a2 = math.sqrt(6 / (16 * 9 + 32 * 9))
    n1, n2 = 16 * 3 * 9, 32 * 16 * 9
    u = _splitmix_uniforms(42, n1 + n2, 0.0, 1.0)
    np.testing.assert_array_equal(EX.layer1.ravel(), -a1 + 2 * a1 * u[:n1])
    np.testing.assert_array_equal(EX.layer2.ravel(), -a2 + 2 * a2 * u[n1:])
    assert np.abs(EX.layer1).max() <= a1 and np.abs(EX.layer2).max() <= a2


def test_triplicate():
    d = np.array([[1.0, 2.0], [3.0, 4.0]])
    img = triplicate(d)
    assert img.shape == (2, 2, 3)
    for c in range(3):
        np.testing.assert_array_equal(img[..., c], d)
    np.testing.assert_array_equal(triplicate(np.full((3, 3), 0.5)), 0.5)
    with pytest.raises(ValueError):
        triplicate(np.array([[1.0, np.nan]]))


def test_extractor_determinism_and_shape(rng):
    img = rng.uniform(0, 1, (8, 8, 3))
    a = extract_features(img, FilterBankExtractor(42))
    b = extract_features(img, FilterBankExtractor(42))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.shape == (2, 2, 32)
    assert extract_features(rng.uniform(0, 1, (13, 10, 3)), EX).values.shape == (4, 3, 32)
    c = extract_features(img, FilterBankExtractor(43))
    assert not np.array_equal(a.values, c.values)


def test_extractor_zero_input():
    assert np.all(extract_features(np.zeros((8, 8, 3)), EX).values == 0)


def test_extractor_too_small():
    with pytest.raises(ValueError, match="smaller"):
        EX.forward(np.zeros((3, 8, 3)))


@pytest.mark.parametrize("shape", [(8, 8), (11, 14)])
def test_extractor_matches_direct_convolution(shape):
    h, w = shape
    ramp = (np.arange(h)[:, None] * 0.3 - np.arange(w)[None, :] * 0.2 + 0.1)
    img = np.stack([ramp, ramp ** 2 * 0.1, np.sin(ramp)], axis=2)
    acts = EX.forward(img)
    act1, out = extractor_brute(img, EX.layer1, EX.layer2)
    np.testing.assert_allclose(acts["act1"], act1, atol=1e-12)
    np.testing.assert_allclose(acts["out"], out, atol=1e-12)
    np.testing.assert_allclose(EX.extract(img).values, np.moveaxis(out, 0, 2), atol=1e-6)


def test_channel_normalize():
    np.testing.assert_allclose(channel_normalize(np.array([[[3.0, 4.0]]])), [[[0.6, 0.8]]], atol=1e-9)
    z = channel_normalize(np.zeros((2, 2, 5)))
    assert np.all(z == 0) and np.isfinite(z).all()
    unit = np.array([[[1.0, 0.0], [0.0, -1.0]]])
    np.testing.assert_allclose(channel_normalize(unit), unit, atol=1e-9)
    np.testing.assert_allclose(channel_normalize(FeatureTensor(unit)), unit, atol=1e-9)


def test_feature_loss_geometry():
    e0 = np.zeros((3, 4, 2))
    e0[..., 0] = 1.0
    e1 = np.zeros((3, 4, 2))
    e1[..., 1] = 2.0
    assert feature_loss(e0, e0) == 0.0
    assert feature_loss(e0, e1) == pytest.approx(math.sqrt(2), abs=1e-9)
    assert feature_loss(e0, -e0) == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(ValueError, match="mismatch"):
        feature_loss(e0, e0[:, :3])


@given(st.integers(0, 10_000))
def test_feature_loss_properties(seed):
    r = np.random.default_rng(seed)
    f, g = r.normal(size=(2, 4, 5, 8))
    loss = feature_loss(f, g)
    assert 0.0 <= loss <= 2.0
    assert feature_loss(f, f) == 0.0
    assert loss == pytest.approx(feature_loss(g, f), abs=1e-12)
    scale = r.uniform(0.5, 50.0, (4, 5, 1))
    assert feature_loss(f * scale, g) == pytest.approx(loss, abs=1e-6)


def _fixture(rng, n=16):
    mono_norm = 0.2 + 0.6 * np.add.outer(np.linspace(0, 1, n), np.linspace(0, 0.5, n))
    p = AffineParams(2.5, 0.8)
    mvs = p.s * mono_norm + p.t + rng.normal(0, 0.05, (n, n))
    return mvs, mono_norm, p


def test_mono_feature_loss_consistent_pair_is_zero():
    # Dyadic values so inverting the affine map reproduces mono_norm bitwise.
    mono_norm = np.add.outer(np.arange(16), 2 * np.arange(16)) / 64.0 + 0.25
    p = AffineParams(2.0, 0.5)
    mvs = p.s * mono_norm + p.t
    assert mono_feature_loss(mvs, mono_norm, p, EX) == 0.0
    loss, g = mono_feature_loss_gradient(mvs, mono_norm, p, EX)
    assert loss == 0.0
    assert np.abs(g).max() < 1e-8


def test_mono_feature_loss_pipeline_identity(rng):
    mvs, mono_norm, p = _fixture(rng)
    f = EX.extract(triplicate((mvs - p.t) / p.s))
    f_star = EX.extract(triplicate(mono_norm))
    assert mono_feature_loss(mvs, mono_norm, p, EX) == pytest.approx(
        feature_loss(f, f_star), abs=1e-6)


def test_external_feature_files(tmp_path, rng):
    a = FeatureTensor(rng.normal(size=(4, 4, 8)))
    b = FeatureTensor(rng.normal(size=(4, 4, 8)))
    pa, pb = tmp_path / "a.ftn", tmp_path / "b.ftn"
    write_feature_tensor(a, pa)
    write_feature_tensor(b, pb)
    src = ExternalFeatures(pa, pb)
    dummy = np.ones((16, 16))
    assert mono_feature_loss(dummy, dummy, AffineParams(1, 0), src) == pytest.approx(
        feature_loss(a, b), abs=1e-12)
    pc = tmp_path / "c.ftn"
    write_feature_tensor(FeatureTensor(np.ones((4, 5, 8))), pc)
    with pytest.raises(ValueError, match="shape"):
        mono_feature_loss(dummy, dummy, AffineParams(1, 0), ExternalFeatures(pa, pc))
    with pytest.raises(UnsupportedGradientError):
        mono_feature_loss_gradient(dummy, dummy, AffineParams(1, 0), src)


def test_gradient_matches_finite_differences_off_kinks(rng):
    mvs, mono_norm, p = _fixture(rng)
    _, g = mono_feature_loss_gradient(mvs, mono_norm, p, EX)
    h = 1e-3

    def signs(x):
        return EX.forward(triplicate((x - p.t) / p.s))["pre1"] > 0

    base = signs(mvs)
    fd = np.zeros_like(mvs)
    checked = np.zeros(mvs.shape, dtype=bool)
    for idx in np.ndindex(mvs.shape):
        up, dn = mvs.copy(), mvs.copy()
        up[idx] += h
        dn[idx] -= h
        if not (np.array_equal(signs(up), base) and np.array_equal(signs(dn), base)):
            continue
        checked[idx] = True
        fd[idx] = (mono_feature_loss(up, mono_norm, p, EX)
                   - mono_feature_loss(dn, mono_norm, p, EX)) / (2 * h)
    assert checked.mean() > 0.5
    scale = np.abs(g[checked]).max()
    assert np.abs(g[checked] - fd[checked]).max() / scale < 1e-3


def test_gradient_locality(rng):
    n = 32
    mvs, mono_norm, p = _fixture(rng, n)
    _, g0 = mono_feature_loss_gradient(mvs, mono_norm, p, EX)
    far = mvs.copy()
    far[-1, -1] += 0.5
    _, g1 = mono_feature_loss_gradient(far, mono_norm, p, EX)
    # Output pixels whose receptive field excludes the bottom-right corner are
    # unchanged, so gradients at the top-left input pixels are unaffected.
    np.testing.assert_array_equal(g0[:8, :8], g1[:8, :8])
    assert not np.array_equal(g0, g1)


def test_multi_layer_loss_matches_oracle(rng):
    mvs, mono_norm, p = _fixture(rng)
    a1, a2 = extractor_brute(triplicate((mvs - p.t) / p.s), EX.layer1, EX.layer2)
    b1, b2 = extractor_brute(triplicate(mono_norm), EX.layer1, EX.layer2)
    per_layer = [feature_loss(np.moveaxis(a, 0, 2), np.moveaxis(b, 0, 2)) for a, b in ((a1, b1), (a2, b2))]
    assert multi_layer_feature_loss(mvs, mono_norm, p, EX) == pytest.approx(np.mean(per_layer), abs=1e-6)
    assert multi_layer_feature_loss(p.s * mono_norm + p.t, mono_norm, p, EX) == pytest.approx(0.0, abs=1e-7)
