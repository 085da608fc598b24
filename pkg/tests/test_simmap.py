import numpy as np
import pytest

from polyground.corpusio import FeatureMap, TextEmbedding
from polyground.simmap import (
    SimilarityMap,
    bilinear_upsample,
    cosine_similarity_map,
    nearest_upsample_mask,
)


def simmap(grid):
    return SimilarityMap("img", "xx", "car", np.asarray(grid, dtype=np.float64))


def reference_bilinear(grid, target_h, target_w):
    """Direct per-pixel evaluation of the half-pixel-center sampling rule."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    out = np.zeros((target_h, target_w))
    for i in range(target_h):
        for j in range(target_w):
            y = min(max((i + 0.5) * h / target_h - 0.5, 0.0), h - 1.0)
            x = min(max((j + 0.5) * w / target_w - 0.5, 0.0), w - 1.0)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = (
                grid[y0, x0] * (1 - fy) * (1 - fx)
                + grid[y0, x1] * (1 - fy) * fx
                + grid[y1, x0] * fy * (1 - fx)
                + grid[y1, x1] * fy * fx
            )
    return out


class TestCosineSimilarityMap:
    def test_self_similarity(self):
        vec = np.array([0.3, -0.4, 0.5])
        fmap = FeatureMap("img", vec.reshape(1, 1, 3))
        sim = cosine_similarity_map(fmap, TextEmbedding("en", "car", vec))
        assert sim.grid[0, 0] == pytest.approx(1.0)

    def test_orthogonal_and_antipodal(self):
        fmap = FeatureMap("img", np.array([[[0.0, 2.0], [-3.0, 0.0]]]))
        text = TextEmbedding("en", "car", np.array([1.0, 0.0]))
        sim = cosine_similarity_map(fmap, text)
        assert sim.grid[0, 0] == pytest.approx(0.0)
        assert sim.grid[0, 1] == pytest.approx(-1.0)

    def test_hand_computed_two_by_two(self):
        features = np.array(
            [[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]]
        )
        sim = cosine_similarity_map(
            FeatureMap("img", features), TextEmbedding("en", "car", np.array([1.0, 0.0, 0.0]))
        )
        expected = np.array([[1.0, 0.0], [0.0, 1.0 / np.sqrt(2.0)]])
        np.testing.assert_allclose(sim.grid, expected, atol=1e-12)

    def test_zero_norm_patch_maps_to_zero(self, caplog):
        features = np.array([[[0.0, 0.0], [1.0, 0.0]]])
        with caplog.at_level("WARNING"):
            sim = cosine_similarity_map(
                FeatureMap("img", features), TextEmbedding("en", "car", np.array([1.0, 0.0]))
            )
        assert sim.grid[0, 0] == 0.0
        assert "zero-norm" in caplog.text

    def test_dimension_mismatch(self):
        fmap = FeatureMap("img", np.ones((1, 1, 3)))
        with pytest.raises(ValueError, match="dim mismatch"):
            cosine_similarity_map(fmap, TextEmbedding("en", "car", np.ones(4)))

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((4, 5, 8))
        text = rng.standard_normal(8)
        base = cosine_similarity_map(FeatureMap("i", features), TextEmbedding("en", "c", text))
        scaled = cosine_similarity_map(
            FeatureMap("i", features * rng.uniform(0.1, 9.0, size=(4, 5, 1))),
            TextEmbedding("en", "c", 7.3 * text),
        )
        np.testing.assert_allclose(base.grid, scaled.grid, atol=1e-12)

    def test_entries_clamped_to_unit_interval(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            features = rng.standard_normal((3, 3, 4)) * rng.uniform(0.01, 100)
            text = rng.standard_normal(4)
            sim = cosine_similarity_map(FeatureMap("i", features), TextEmbedding("en", "c", text))
            assert sim.grid.min() >= -1.0 and sim.grid.max() <= 1.0


class TestSimilarityMapType:
    def test_rejects_out_of_range_beyond_slack(self):
        with pytest.raises(ValueError, match="outside"):
            simmap([[1.5]])

    def test_clamps_within_slack(self):
        sim = simmap([[1.0 + 5e-7, -1.0 - 5e-7]])
        assert sim.grid[0, 0] == 1.0
        assert sim.grid[0, 1] == -1.0

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            simmap([[np.nan]])


class TestBilinearUpsample:
    def test_constant_preserved(self):
        out = bilinear_upsample(np.full((3, 2), 0.7), 9, 11)
        np.testing.assert_allclose(out, 0.7)

    def test_identity_at_same_size(self):
        rng = np.random.default_rng(1)
        grid = rng.random((5, 4))
        np.testing.assert_array_equal(bilinear_upsample(grid, 5, 4), grid)

    def test_two_by_two_to_four_by_four(self):
        out = bilinear_upsample(np.array([[0.0, 1.0], [2.0, 3.0]]), 4, 4)
        np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0])
        # derived by evaluating the sampling formula directly
        np.testing.assert_allclose(out, reference_bilinear([[0.0, 1.0], [2.0, 3.0]], 4, 4))

    def test_matches_reference_on_random_grids(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            h, w = rng.integers(1, 7, size=2)
            th, tw = rng.integers(1, 31, size=2)
            grid = rng.random((h, w))
            np.testing.assert_allclose(
                bilinear_upsample(grid, th, tw),
                reference_bilinear(grid, th, tw),
                atol=1e-12,
            )

    def test_convexity_bounds(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            grid = rng.standard_normal((4, 6))
            out = bilinear_upsample(grid, 17, 3)
            assert out.min() >= grid.min() - 1e-12
            assert out.max() <= grid.max() + 1e-12


class TestNearestUpsampleMask:
    def test_block_replication(self):
        out = nearest_upsample_mask(np.eye(2, dtype=bool), 4, 4)
        expected = np.zeros((4, 4), dtype=bool)
        expected[:2, :2] = True
        expected[2:, 2:] = True
        np.testing.assert_array_equal(out, expected)

    def test_all_ones(self):
        assert nearest_upsample_mask(np.ones((3, 3), bool), 9, 6).all()

    def test_non_integer_factor_rejected(self):
        with pytest.raises(ValueError, match="integer multiples"):
            nearest_upsample_mask(np.ones((3, 3), bool), 7, 6)

    def test_iou_preserved_under_identical_replication(self):
        from polyground.agreement import mask_iou

        rng = np.random.default_rng(21)
        for _ in range(300):
            h, w = rng.integers(1, 8, size=2)
            fh, fw = rng.integers(1, 5, size=2)
            a = rng.random((h, w)) < 0.4
            b = rng.random((h, w)) < 0.4
            iou = mask_iou(a, b)
            iou_up = mask_iou(
                nearest_upsample_mask(a, h * fh, w * fw),
                nearest_upsample_mask(b, h * fh, w * fw),
            )
            assert iou == iou_up  # exact, including the both-empty None case
