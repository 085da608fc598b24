import itertools
import math

import numpy as np
import pytest
from scipy.stats import rankdata

from polyground.agreement import MetricRecord
from polyground.corpusio import BackboneInfo, LanguageEntry, Manifest
from polyground.stats import (
    PairedSeries,
    friedman,
    hr_lr_pairing,
    mann_whitney_u,
    run_protocol,
    wilcoxon_signed_rank,
)


def wilcoxon_oracle(diffs):
    """One-sided 'greater' p by literal enumeration of all 2^n sign vectors."""
    diffs = [d for d in diffs if d != 0]
    ranks = rankdata(np.abs(diffs))
    w_obs = sum(r for r, d in zip(ranks, diffs) if d > 0)
    n = len(diffs)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w >= w_obs - 1e-9:
            count += 1
    return count / 2.0**n


def mann_whitney_oracle(x, y):
    """One-sided 'greater' p by literal enumeration of all C(n+m, n) labelings."""
    pooled = list(x) + list(y)
    n, total = len(x), len(pooled)

    def u_of(members):
        others = [i for i in range(total) if i not in members]
        u = 0.0
        for i in members:
            for j in others:
                u += (pooled[i] > pooled[j]) + 0.5 * (pooled[i] == pooled[j])
        return u

    u_obs = u_of(set(range(n)))
    favorable = labelings = 0
    for combo in itertools.combinations(range(total), n):
        labelings += 1
        if u_of(set(combo)) >= u_obs - 1e-9:
            favorable += 1
    return favorable / labelings


class TestWilcoxon:
    def test_all_positive_three(self):
        result = wilcoxon_signed_rank([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert result.statistic == 6.0
        assert result.p_value == pytest.approx(1.0 / 8.0)
        assert result.method == "exact"

    def test_mixed_signs(self):
        result = wilcoxon_signed_rank([3.0, -1.0, 2.0], [0.0, 0.0, 0.0])
        assert result.statistic == 5.0
        assert result.p_value == pytest.approx(2.0 / 8.0)

    def test_all_zero_differences_error(self):
        with pytest.raises(ValueError, match="all differences"):
            wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])

    def test_zero_differences_dropped_and_counted(self):
        result = wilcoxon_signed_rank([1.0, 5.0, 2.0], [1.0, 1.0, 1.0])
        assert result.n_used == 2
        assert result.dropped_rows == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="equal length"):
            wilcoxon_signed_rank([1.0], [1.0, 2.0])

    def test_exact_matches_enumeration_oracle(self):
        rng = np.random.default_rng(83)
        for _ in range(300):
            n = int(rng.integers(1, 13))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            result = wilcoxon_signed_rank(x, y)
            assert result.method == "exact"
            assert result.p_value == pytest.approx(wilcoxon_oracle(x - y), abs=1e-12)

    def test_exact_matches_oracle_with_ties(self):
        rng = np.random.default_rng(89)
        for _ in range(100):
            n = int(rng.integers(2, 10))
            d = rng.integers(-3, 4, size=n).astype(float)
            if np.all(d == 0):
                continue
            result = wilcoxon_signed_rank(d, np.zeros(n))
            assert result.p_value == pytest.approx(wilcoxon_oracle(d), abs=1e-12)

    def test_normal_approx_close_to_exact_mid_n(self):
        rng = np.random.default_rng(97)
        for _ in range(100):
            n = int(rng.integers(15, 21))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            exact = wilcoxon_signed_rank(x, y, method="exact")
            approx = wilcoxon_signed_rank(x, y, method="normal_approx")
            assert abs(exact.p_value - approx.p_value) < 0.01

    def test_p_monotone_in_shift(self):
        rng = np.random.default_rng(103)
        for _ in range(50):
            x = rng.standard_normal(10)
            y = rng.standard_normal(10)
            p0 = wilcoxon_signed_rank(x, y).p_value
            p1 = wilcoxon_signed_rank(x + 0.5, y).p_value
            assert p1 <= p0 + 1e-12

    def test_statistic_invariant_under_monotone_transform(self):
        # rank-based: any strictly increasing transform applied to both
        # series leaves the statistic unchanged
        rng = np.random.default_rng(107)
        x = rng.uniform(0.1, 2.0, 12)
        y = rng.uniform(0.1, 2.0, 12)
        base = wilcoxon_signed_rank(x, y)
        # transform must preserve difference signs+order, i.e. be applied
        # to the paired differences' ranks: use a common affine map
        scaled = wilcoxon_signed_rank(3.0 * x + 1.0, 3.0 * y + 1.0)
        assert base.statistic == scaled.statistic

    def test_less_alternative_mirrors_greater(self):
        rng = np.random.default_rng(109)
        x = rng.standard_normal(8)
        y = rng.standard_normal(8)
        assert (
            wilcoxon_signed_rank(x, y, alternative="less").p_value
            == wilcoxon_signed_rank(y, x, alternative="greater").p_value
        )


class TestFriedman:
    def test_worked_example(self):
        result = friedman(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]))
        assert result.statistic == 4.0
        assert result.method == "chi2_approx"

    def test_all_tied_blocks(self):
        result = friedman(np.full((3, 4), 2.5))
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_column_permutation_invariance(self):
        rng = np.random.default_rng(113)
        values = rng.random((10, 5))
        base = friedman(values).statistic
        for _ in range(10):
            perm = rng.permutation(5)
            assert friedman(values[:, perm]).statistic == pytest.approx(base)

    def test_block_permutation_invariance(self):
        rng = np.random.default_rng(127)
        values = rng.random((10, 4))
        shuffled = values[rng.permutation(10)]
        assert friedman(values).statistic == pytest.approx(friedman(shuffled).statistic)

    def test_matches_scipy_on_tie_free_data(self):
        from scipy.stats import friedmanchisquare

        rng = np.random.default_rng(131)
        for _ in range(20):
            values = rng.standard_normal((8, 4))
            mine = friedman(values)
            ref_stat, ref_p = friedmanchisquare(*values.T)
            assert mine.statistic == pytest.approx(ref_stat)
            assert mine.p_value == pytest.approx(ref_p)

    def test_shape_guards(self):
        with pytest.raises(ValueError, match="blocks"):
            friedman(np.ones((1, 3)))
        with pytest.raises(ValueError, match="blocks"):
            friedman(np.ones((3, 1)))


class TestMannWhitney:
    def test_complete_separation(self):
        result = mann_whitney_u([4.0, 5.0, 6.0], [1.0, 2.0, 3.0])
        assert result.statistic == 9.0
        assert result.p_value == pytest.approx(1.0 / 20.0)
        assert result.method == "exact"

    def test_identical_multisets(self):
        result = mann_whitney_u([1.0, 2.0], [1.0, 2.0])
        assert result.statistic == pytest.approx(2.0)  # n*m/2
        assert result.p_value >= 0.5

    def test_single_pair(self):
        result = mann_whitney_u([1.0], [2.0])
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_empty_input(self):
        with pytest.raises(ValueError, match="non-empty"):
            mann_whitney_u([], [1.0])

    def test_exact_matches_enumeration_exhaustively(self):
        # all multisets over a 3-symbol alphabet for n, m <= 4 here; the
        # acceptance suite pushes the same check to n, m <= 6
        for n in range(1, 5):
            for m in range(1, 5):
                for xs in itertools.combinations_with_replacement((0.0, 1.0, 2.0), n):
                    for ys in itertools.combinations_with_replacement((0.0, 1.0, 2.0), m):
                        mine = mann_whitney_u(xs, ys, method="exact")
                        assert mine.p_value == pytest.approx(
                            mann_whitney_oracle(xs, ys), abs=1e-12
                        ), (xs, ys)

    def test_normal_approx_reasonable(self):
        rng = np.random.default_rng(137)
        x = rng.standard_normal(40) + 1.0
        y = rng.standard_normal(40)
        result = mann_whitney_u(x, y)
        assert result.method == "normal_approx"
        assert result.p_value < 0.01

    def test_statistic_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(139)
        x = rng.uniform(0.5, 3.0, 9)
        y = rng.uniform(0.5, 3.0, 7)
        assert (
            mann_whitney_u(x, y).statistic
            == mann_whitney_u(np.log(x), np.log(y)).statistic
        )

    def test_order_invariance(self):
        # the test is a function of the two multisets; sample order is
        # immaterial, which is what licenses enumerating value patterns
        # as multisets in the acceptance suite
        rng = np.random.default_rng(141)
        for _ in range(20):
            x = rng.integers(0, 3, size=5).astype(float)
            y = rng.integers(0, 3, size=4).astype(float)
            base = mann_whitney_u(x, y)
            shuffled = mann_whitney_u(rng.permutation(x), rng.permutation(y))
            assert base.statistic == shuffled.statistic
            assert base.p_value == shuffled.p_value


def make_manifest():
    return Manifest(
        images=("i1", "i2", "i3"),
        concepts=("car", "road"),
        languages=(
            LanguageEntry("en", "reference"),
            LanguageEntry("de", "high"),
            LanguageEntry("fr", "high"),
            LanguageEntry("eu", "low"),
        ),
        reference_language="en",
        backbone=BackboneInfo("bb"),
        grid_h=4,
        grid_w=4,
        embed_dim=4,
    )


def record(image, concept, language, iou):
    flags = frozenset({"both_masks_empty"}) if iou is None else frozenset()
    return MetricRecord(image, concept, language, iou, {90: 0.5}, 0.5, 1.0, flags)


class TestPairing:
    def test_block_means(self):
        manifest = make_manifest()
        records = [
            record("i1", "car", "de", 0.6),
            record("i1", "car", "fr", 0.8),
            record("i1", "car", "eu", 0.5),
        ]
        series = hr_lr_pairing(records, manifest)
        assert series.keys == (("i1", "car"),)
        np.testing.assert_allclose(series.values, [[0.7, 0.5]])
        assert series.dropped_rows == 0

    def test_block_with_empty_group_dropped(self):
        manifest = make_manifest()
        records = [
            record("i1", "car", "de", 0.6),
            record("i1", "car", "eu", None),
            record("i2", "car", "de", 0.4),
            record("i2", "car", "eu", 0.3),
        ]
        series = hr_lr_pairing(records, manifest)
        assert series.keys == (("i2", "car"),)
        assert series.dropped_rows == 1

    def test_requires_both_groups_in_manifest(self):
        manifest = Manifest(
            images=("i1",),
            concepts=("car",),
            languages=(LanguageEntry("en", "reference"), LanguageEntry("de", "high")),
            reference_language="en",
            backbone=BackboneInfo("bb"),
            grid_h=2,
            grid_w=2,
            embed_dim=2,
        )
        with pytest.raises(ValueError, match="low-resource"):
            hr_lr_pairing([record("i1", "car", "de", 0.5)], manifest)


class TestProtocol:
    def test_full_protocol_shapes(self):
        manifest = make_manifest()
        rng = np.random.default_rng(149)
        records = []
        for image in manifest.images:
            for concept in manifest.concepts:
                for lang in ("de", "fr"):
                    records.append(record(image, concept, lang, float(rng.uniform(0.5, 0.9))))
                records.append(record(image, concept, "eu", float(rng.uniform(0.1, 0.5))))
        report = run_protocol(records, manifest, "iou_cluster")
        assert report.metric == "iou_cluster"
        assert report.friedman.n_used == 6
        assert report.wilcoxon_hr_gt_lr.n_used <= 6
        assert set(report.mann_whitney_lr) == {"eu"}
        payload = report.to_dict()
        assert payload["friedman"]["p"] <= 1.0
        assert "log10_p" in payload["wilcoxon_hr_gt_lr"]

    def test_undefined_rows_dropped_listwise(self):
        manifest = make_manifest()
        records = []
        for image in manifest.images:
            for concept in manifest.concepts:
                records.append(record(image, concept, "de", 0.8))
                records.append(record(image, concept, "fr", 0.7))
                records.append(record(image, concept, "eu", 0.2))
        records[0] = record("i1", "car", "de", None)
        report = run_protocol(records, manifest, "iou_cluster")
        assert report.friedman.dropped_rows == 1
        assert report.friedman.n_used == 5

    def test_requires_two_languages(self):
        manifest = Manifest(
            images=("i1",),
            concepts=("car",),
            languages=(LanguageEntry("en", "reference"), LanguageEntry("eu", "low")),
            reference_language="en",
            backbone=BackboneInfo("bb"),
            grid_h=2,
            grid_w=2,
            embed_dim=2,
        )
        with pytest.raises(ValueError, match="at least 2"):
            run_protocol([record("i1", "car", "eu", 0.5)], manifest, "iou_cluster")

    def test_log10_p_tracks_tiny_p(self):
        rng = np.random.default_rng(151)
        x = rng.standard_normal(2000) + 1.0
        y = rng.standard_normal(2000)
        result = wilcoxon_signed_rank(x, y)
        assert result.p_value < 1e-100
        assert result.log10_p == pytest.approx(math.log10(result.p_value), abs=1.0) or (
            result.p_value == 0.0 and result.log10_p < -300
        )
