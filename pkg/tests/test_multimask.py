"""Feature merging and the parallel multi-region pipeline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskedstyle.errors import EmptyRegionError
from maskedstyle.masked_ops import MaskedFeature
from maskedstyle.multimask import RegionSpec, merge_masked_features, stylize_multi
from maskedstyle.stylenet import (
    BlendConfig,
    StylizeRequest,
    apply_transform,
    compute_style_transform,
    encode,
    stylize_masked,
)

from conftest import random_blob_mask, random_image


def merge_oracle(items):
    """Scalar reference for the weighted merge."""
    c, h, w = items[0].features.shape
    feats = np.zeros((c, h, w), np.float64)
    mask = np.zeros((h, w), np.float64)
    for y in range(h):
        for x in range(w):
            wsum = sum(float(it.mask[y, x]) for it in items)
            if wsum > 0:
                for ch in range(c):
                    acc = sum(float(it.mask[y, x]) * float(it.features[ch, y, x]) for it in items)
                    feats[ch, y, x] = acc / max(wsum, 1.0)
            mask[y, x] = min(wsum, 1.0)
    return feats.astype(np.float32), mask.astype(np.float32)


def test_merge_single_item_is_identity():
    rng = np.random.default_rng(0)
    mask = (rng.random((6, 6)) < 0.5).astype(np.float32)
    feats = rng.standard_normal((3, 6, 6)).astype(np.float32) * mask
    merged = merge_masked_features([MaskedFeature(feats, mask)])
    np.testing.assert_array_equal(merged.features, feats)
    np.testing.assert_array_equal(merged.mask, mask)


def test_merge_complementary_masks_select_each_side():
    rng = np.random.default_rng(1)
    m1 = np.zeros((4, 6), np.float32)
    m1[:, :3] = 1.0
    m2 = 1.0 - m1
    f1 = rng.standard_normal((2, 4, 6)).astype(np.float32) * m1
    f2 = rng.standard_normal((2, 4, 6)).astype(np.float32) * m2
    merged = merge_masked_features([MaskedFeature(f1, m1), MaskedFeature(f2, m2)])
    np.testing.assert_array_equal(merged.features[:, :, :3], f1[:, :, :3])
    np.testing.assert_array_equal(merged.features[:, :, 3:], f2[:, :, 3:])
    np.testing.assert_array_equal(merged.mask, np.ones((4, 6), np.float32))


def test_merge_three_soft_masks_match_scalar_loop():
    rng = np.random.default_rng(2)
    items = []
    for _ in range(3):
        mask = rng.random((5, 7)).astype(np.float32)
        feats = rng.standard_normal((2, 5, 7)).astype(np.float32)
        items.append(MaskedFeature(feats, mask))
    merged = merge_masked_features(items)
    want_f, want_m = merge_oracle(items)
    np.testing.assert_allclose(merged.features, want_f, atol=1e-6)
    np.testing.assert_allclose(merged.mask, want_m, atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_merge_is_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    items = [
        MaskedFeature(
            rng.standard_normal((2, 4, 4)).astype(np.float32),
            rng.random((4, 4)).astype(np.float32),
        )
        for _ in range(n)
    ]
    a = merge_masked_features(items)
    order = rng.permutation(n)
    b = merge_masked_features([items[i] for i in order])
    np.testing.assert_allclose(a.features, b.features, atol=1e-6)
    np.testing.assert_allclose(a.mask, b.mask, atol=1e-7)


def test_merge_convexity_where_fully_covered():
    rng = np.random.default_rng(3)
    items = [
        MaskedFeature(
            rng.standard_normal((3, 6, 6)).astype(np.float32),
            rng.random((6, 6)).astype(np.float32),
        )
        for _ in range(3)
    ]
    merged = merge_masked_features(items)
    total = sum(it.mask for it in items)
    covered = total >= 1.0
    lo = np.minimum.reduce([it.features for it in items])
    hi = np.maximum.reduce([it.features for it in items])
    sel = np.broadcast_to(covered, merged.features.shape)
    assert np.all(merged.features[sel] >= lo[sel] - 1e-6)
    assert np.all(merged.features[sel] <= hi[sel] + 1e-6)


def test_merge_shape_mismatch():
    a = MaskedFeature(np.zeros((2, 4, 4), np.float32), np.ones((4, 4), np.float32))
    b = MaskedFeature(np.zeros((2, 5, 4), np.float32), np.ones((5, 4), np.float32))
    with pytest.raises(ValueError):
        merge_masked_features([a, b])
    with pytest.raises(ValueError):
        merge_masked_features([])


# --- stylize_multi -----------------------------------------------------------


def test_single_region_equals_stylize_masked(small_network):
    rng = np.random.default_rng(4)
    content, style = random_image(rng, 32, 32), random_image(rng, 16, 16)
    mask = random_blob_mask(rng, 32, 32)
    single = stylize_masked(small_network, StylizeRequest(content, style, mask))
    multi = stylize_multi(small_network, content, [RegionSpec(mask, style)])
    assert np.abs(single - multi).max() < 1e-5


def test_single_region_equals_stylize_masked_with_blending(small_network):
    rng = np.random.default_rng(5)
    content, style = random_image(rng, 32, 32), random_image(rng, 16, 16)
    mask = random_blob_mask(rng, 32, 32)
    blend = BlendConfig(feather_before=True, content_feather_decoder=True)
    single = stylize_masked(small_network, StylizeRequest(content, style, mask, blend))
    multi = stylize_multi(small_network, content, [RegionSpec(mask, style)], blend)
    assert np.abs(single - multi).max() < 1e-5


def _two_far_patches(size=80, patch=10):
    """Identical content patches under two separated, translate-equivalent masks.

    The second mask is the first shifted by 32 px (a multiple of the pooling
    grid), and both sit deeper than the network's total receptive reach from
    every border, so the per-region features and statistics coincide exactly.
    """
    rng = np.random.default_rng(6)
    content = random_image(rng, size, size) * 0.2 + 0.4
    tile = random_image(rng, patch, patch)
    r0, c1, c2 = 32, 20, 52
    content[r0 : r0 + patch, c1 : c1 + patch] = tile
    content[r0 : r0 + patch, c2 : c2 + patch] = tile
    m1 = np.zeros((size, size), np.float32)
    m1[r0 : r0 + patch, c1 : c1 + patch] = 1.0
    m2 = np.zeros((size, size), np.float32)
    m2[r0 : r0 + patch, c2 : c2 + patch] = 1.0
    return content.astype(np.float32), m1, m2


def test_disjoint_same_style_merge_equals_union_at_merge_layer(small_network):
    content, m1, m2 = _two_far_patches()
    rng = np.random.default_rng(7)
    style = random_image(rng, 16, 16)
    ones = np.ones((16, 16), np.float32)
    style_stage = encode(small_network, style, ones)[-1]

    def styled_stage(mask):
        stage = encode(small_network, content, mask)[-1]
        t = compute_style_transform(small_network, stage, style_stage)
        return apply_transform(stage, t)

    s1, s2 = styled_stage(m1), styled_stage(m2)
    assert float((s1.mask * s2.mask).sum()) == 0.0  # transform-stage masks disjoint
    merged = merge_masked_features([s1, s2])
    union = styled_stage(np.maximum(m1, m2))
    assert np.abs(merged.features - union.features).max() < 1e-4
    np.testing.assert_array_equal(merged.mask, union.mask)


def test_overlapping_identical_regions_collapse(small_network):
    rng = np.random.default_rng(8)
    content, style = random_image(rng, 32, 32), random_image(rng, 16, 16)
    mask = random_blob_mask(rng, 32, 32)
    one = stylize_multi(small_network, content, [RegionSpec(mask, style)])
    two = stylize_multi(
        small_network, content, [RegionSpec(mask, style), RegionSpec(mask.copy(), style.copy())]
    )
    assert np.abs(one - two).max() < 1e-5


def test_multi_empty_region_reports_indices(small_network):
    rng = np.random.default_rng(9)
    content, style = random_image(rng, 32, 32), random_image(rng, 16, 16)
    good = random_blob_mask(rng, 32, 32)
    empty = np.zeros((32, 32), np.float32)
    with pytest.raises(EmptyRegionError, match=r"\[1\]"):
        stylize_multi(
            small_network, content, [RegionSpec(good, style), RegionSpec(empty, style)]
        )
    with pytest.raises(ValueError):
        stylize_multi(small_network, content, [])


def test_multi_background_stays_exact(small_network):
    rng = np.random.default_rng(10)
    content = random_image(rng, 40, 40)
    s1, s2 = random_image(rng, 16, 16), random_image(rng, 12, 12)
    m1 = np.zeros((40, 40), np.float32)
    m1[4:14, 4:14] = 1.0
    m2 = np.zeros((40, 40), np.float32)
    m2[24:36, 22:36] = 1.0
    out = stylize_multi(small_network, content, [RegionSpec(m1, s1), RegionSpec(m2, s2)])
    outside = (m1 == 0) & (m2 == 0)
    np.testing.assert_array_equal(out[outside], content[outside])
