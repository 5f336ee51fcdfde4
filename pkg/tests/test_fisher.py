"""Tests for the discriminant closed forms and myopia geometry."""

import math

import numpy as np
import pytest

from cadlab.errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    SingularScatterError,
    ValidationError,
)
from cadlab.features import FeatureSpec, Sample, make_paired_dataset, sample_dataset
from cadlab.fisher import (
    LinearClassifier,
    classifier_from_file,
    classifier_to_file,
    closed_form_cad,
    closed_form_ori,
    closed_form_rob,
    cosine_interpolated,
    cosine_to_robust,
    fld_fit,
    interpolate,
    misaligned_cad_block,
    optimal_lambda,
)

from test_features import ones_spec


def random_spec(rng, positive_norms=True):
    dims = rng.integers(1, 4, size=3)
    d_e, d_u, d_r = (int(d) for d in dims)
    low = 0.2 if positive_norms else 0.0

    def block(d):
        mu = rng.uniform(low, 2.0, size=d) * rng.choice([-1.0, 1.0], size=d)
        var = rng.uniform(0.3, 3.0, size=d)
        return mu, var

    mu_e, var_e = block(d_e)
    mu_u, var_u = block(d_u)
    mu_r, var_r = block(d_r)
    return FeatureSpec(d_e, d_u, d_r, mu_e, mu_u, mu_r, var_e, var_u, var_r)


class TestLinearClassifier:
    def test_block_views_partition(self):
        clf = LinearClassifier(weights=np.arange(6.0), block_dims=(1, 2, 3))
        assert np.array_equal(clf.edited, [0.0])
        assert np.array_equal(clf.unedited, [1.0, 2.0])
        assert np.array_equal(clf.correlated, [3.0, 4.0, 5.0])
        assert np.array_equal(clf.causal, [0.0, 1.0, 2.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            LinearClassifier(weights=np.ones(4), block_dims=(1, 1, 1))

    def test_json_roundtrip(self, tmp_path):
        clf = LinearClassifier(weights=[0.5, -1.5, 2.0], block_dims=(1, 1, 1))
        path = tmp_path / "clf.json"
        classifier_to_file(clf, path)
        again = classifier_from_file(path)
        assert np.array_equal(again.weights, clf.weights)
        assert again.block_dims == clf.block_dims
        import json

        data = json.loads(path.read_text())
        assert set(data) == {"block_dims", "weights"}


class TestClosedForms:
    def test_ori_all_ones(self):
        assert np.array_equal(closed_form_ori(ones_spec()).weights, [1.0, 1.0, 1.0])

    def test_cad_all_ones(self):
        assert np.array_equal(closed_form_cad(ones_spec()).weights, [1.0, 0.0, 0.0])

    def test_rob_all_ones(self):
        assert np.array_equal(closed_form_rob(ones_spec()).weights, [1.0, 1.0, 0.0])

    def test_zero_correlated_mean_makes_ori_robust(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [1.0], [0.0], [1.0], [1.0], [1.0])
        assert np.array_equal(
            closed_form_ori(spec).weights, closed_form_rob(spec).weights
        )

    def test_doubling_var_r_halves_phi_r_only(self):
        spec = ones_spec()
        doubled = FeatureSpec(1, 1, 1, [1.0], [1.0], [1.0], [1.0], [1.0], [2.0])
        a, b = closed_form_ori(spec).weights, closed_form_ori(doubled).weights
        assert b[2] == a[2] / 2
        assert np.array_equal(a[:2], b[:2])

    def test_fully_edited_spec_collapses_all_forms(self):
        spec = FeatureSpec(2, 0, 0, [1.0, 0.5], [], [], [1.0, 2.0], [], [])
        ori = closed_form_ori(spec).weights
        assert np.array_equal(ori, closed_form_cad(spec).weights)
        assert np.array_equal(ori, closed_form_rob(spec).weights)

    def test_zero_mu_u_makes_rob_equal_cad(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [0.0], [1.0], [1.0], [1.0], [1.0])
        assert np.array_equal(
            closed_form_rob(spec).weights, closed_form_cad(spec).weights
        )

    def test_rescaling_mu_r_leaves_rob_unchanged(self):
        a = ones_spec()
        b = FeatureSpec(1, 1, 1, [1.0], [1.0], [7.0], [1.0], [1.0], [1.0])
        assert np.array_equal(closed_form_rob(a).weights, closed_form_rob(b).weights)

    def test_block_purity_bitwise_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            spec = random_spec(rng)
            cad = closed_form_cad(spec)
            rob = closed_form_rob(spec)
            assert np.all(cad.unedited == 0.0)
            assert np.all(cad.correlated == 0.0)
            assert np.all(rob.correlated == 0.0)


class TestFldFit:
    def test_degenerate_within_class_variance_raises(self):
        samples = [
            Sample(features=[1.0], label=1),
            Sample(features=[1.0], label=1),
            Sample(features=[-1.0], label=-1),
            Sample(features=[-1.0], label=-1),
        ]
        with pytest.raises(SingularScatterError, match="dimension 0"):
            fld_fit(samples, (1, 0, 0))

    def test_insufficient_class_raises(self):
        samples = [
            Sample(features=[1.0], label=1),
            Sample(features=[2.0], label=1),
            Sample(features=[-1.0], label=-1),
        ]
        with pytest.raises(InsufficientDataError, match="-1"):
            fld_fit(samples, (1, 0, 0))

    def test_feature_length_mismatch(self):
        samples = [Sample(features=[1.0, 2.0], label=1)] * 4
        with pytest.raises(ValidationError):
            fld_fit(samples, (1, 0, 0))

    def test_matches_closed_form_at_large_n(self):
        spec = ones_spec()
        samples = sample_dataset(spec, 200_000, seed=21)
        fit = fld_fit(samples, spec.block_dims)
        target = closed_form_ori(spec).weights
        rel = np.linalg.norm(fit.weights - target) / np.linalg.norm(target)
        assert rel <= 0.02

    def test_paired_fit_correlated_block_exactly_zero(self):
        spec = ones_spec()
        ds = make_paired_dataset(spec, 100_000, 0.0, seed=22)
        fit = fld_fit(ds.pooled_samples(), spec.block_dims)
        edited_norm = np.linalg.norm(fit.edited)
        assert np.linalg.norm(fit.correlated) <= 0.02 * edited_norm
        assert np.linalg.norm(fit.unedited) <= 0.02 * edited_norm

    def test_error_decreases_with_n(self):
        spec = FeatureSpec(1, 1, 2, [0.8], [0.6], [1.0, -0.5], [1.0], [1.5], [1.0, 2.0])
        target = closed_form_ori(spec).weights
        errors = []
        for n in (1_000, 10_000, 100_000):
            rels = []
            for seed in range(5):
                fit = fld_fit(sample_dataset(spec, n, seed=100 + seed), spec.block_dims)
                rels.append(
                    np.linalg.norm(fit.weights - target) / np.linalg.norm(target)
                )
            errors.append(np.mean(rels))
        assert errors[0] > errors[1] > errors[2]


class TestMyopiaCosines:
    def test_cos_ori_hand_value(self):
        spec = ones_spec()
        assert cosine_to_robust(closed_form_ori(spec), spec) == pytest.approx(
            math.sqrt(2.0 / 3.0), abs=1e-12
        )

    def test_cos_cad_hand_value(self):
        spec = ones_spec()
        assert cosine_to_robust(closed_form_cad(spec), spec) == pytest.approx(
            1.0 / math.sqrt(2.0), abs=1e-12
        )

    def test_self_similarity_is_one(self):
        spec = ones_spec()
        assert cosine_to_robust(closed_form_rob(spec), spec) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_zero_norm_raises(self):
        spec = ones_spec()
        zero = LinearClassifier(weights=np.zeros(3), block_dims=(1, 1, 1))
        with pytest.raises(DegenerateGeometryError):
            cosine_to_robust(zero, spec)

    def test_closed_form_consistency_with_formula(self):
        # Direct cosines match the two ratio formulas to 1e-12 relative.
        rng = np.random.default_rng(42)
        for _ in range(50):
            spec = random_spec(rng)
            e = float(np.sum((spec.mu_edited / spec.var_edited) ** 2))
            u = float(np.sum((spec.mu_unedited / spec.var_unedited) ** 2))
            r = float(np.sum((spec.mu_correlated / spec.var_correlated) ** 2))
            cos_ori = cosine_to_robust(closed_form_ori(spec), spec)
            cos_cad = cosine_to_robust(closed_form_cad(spec), spec)
            assert cos_ori == pytest.approx(
                1.0 / math.sqrt(1.0 + r / (e + u)), rel=1e-12
            )
            assert cos_cad == pytest.approx(1.0 / math.sqrt(1.0 + u / e), rel=1e-12)

    def test_scale_invariance(self):
        spec = ones_spec()
        base = closed_form_ori(spec)
        ref = cosine_to_robust(base, spec)
        for c in (1e-3, 3.0, 1e4):
            scaled = LinearClassifier(weights=c * base.weights, block_dims=(1, 1, 1))
            assert cosine_to_robust(scaled, spec) == pytest.approx(ref, rel=1e-12)


class TestInterpolation:
    def test_endpoints(self):
        spec = ones_spec()
        ori, cad = closed_form_ori(spec), closed_form_cad(spec)
        assert np.array_equal(interpolate(ori, cad, 1.0).weights, ori.weights)
        assert np.array_equal(interpolate(ori, cad, 0.0).weights, cad.weights)

    def test_midpoint_hand_value(self):
        spec = ones_spec()
        mid = interpolate(closed_form_ori(spec), closed_form_cad(spec), 0.5)
        assert np.array_equal(mid.weights, [1.0, 0.5, 0.5])

    def test_out_of_range_lambda(self):
        spec = ones_spec()
        ori, cad = closed_form_ori(spec), closed_form_cad(spec)
        for lam in (-0.01, 1.01):
            with pytest.raises(ValidationError):
                interpolate(ori, cad, lam)

    def test_block_dims_mismatch(self):
        a = LinearClassifier(weights=np.ones(3), block_dims=(1, 1, 1))
        b = LinearClassifier(weights=np.ones(3), block_dims=(1, 2, 0))
        with pytest.raises(ValidationError):
            interpolate(a, b, 0.5)

    def test_midpoint_cosine_beats_both(self):
        spec = ones_spec()
        mid = interpolate(closed_form_ori(spec), closed_form_cad(spec), 0.5)
        cos_mid = cosine_to_robust(mid, spec)
        assert cos_mid == pytest.approx(math.sqrt(3.0) / 2.0, abs=1e-12)
        assert cos_mid > cosine_to_robust(closed_form_ori(spec), spec)
        assert cos_mid > cosine_to_robust(closed_form_cad(spec), spec)


class TestOptimalLambda:
    def test_all_ones_is_half(self):
        assert optimal_lambda(ones_spec()) == pytest.approx(0.5, abs=1e-15)

    def test_zero_mu_r_gives_one(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [1.0], [0.0], [1.0], [1.0], [1.0])
        assert optimal_lambda(spec) == 1.0

    def test_zero_mu_u_gives_zero(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [0.0], [1.0], [1.0], [1.0], [1.0])
        assert optimal_lambda(spec) == 0.0

    def test_degenerate_raises(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [0.0], [0.0], [1.0], [1.0], [1.0])
        with pytest.raises(DegenerateGeometryError):
            optimal_lambda(spec)

    def test_matches_grid_argmax(self):
        rng = np.random.default_rng(7)
        grid = np.arange(0.0, 1.0 + 1e-9, 1e-3)
        for _ in range(10):
            spec = random_spec(rng)
            ori, cad = closed_form_ori(spec), closed_form_cad(spec)
            cosines = [
                cosine_to_robust(interpolate(ori, cad, lam), spec) for lam in grid
            ]
            lam_grid = grid[int(np.argmax(cosines))]
            assert abs(optimal_lambda(spec) - lam_grid) <= 2e-3


class TestCosineInterpolated:
    def test_all_ones_hand_value(self):
        assert cosine_interpolated(ones_spec()) == pytest.approx(
            1.5 / math.sqrt(3.0), abs=1e-12
        )

    def test_zero_mu_r_is_one(self):
        spec = FeatureSpec(1, 1, 1, [1.0], [1.0], [0.0], [1.0], [1.0], [1.0])
        assert cosine_interpolated(spec) == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            spec = random_spec(rng)
            direct = cosine_to_robust(
                interpolate(
                    closed_form_ori(spec),
                    closed_form_cad(spec),
                    optimal_lambda(spec),
                ),
                spec,
            )
            assert cosine_interpolated(spec) == pytest.approx(direct, rel=1e-12)

    def test_strict_dominance_on_100_random_specs(self):
        rng = np.random.default_rng(17)
        wins = 0
        for _ in range(100):
            spec = random_spec(rng, positive_norms=True)
            cos_i = cosine_interpolated(spec)
            cos_ori = cosine_to_robust(closed_form_ori(spec), spec)
            cos_cad = cosine_to_robust(closed_form_cad(spec), spec)
            if cos_i > max(cos_ori, cos_cad):
                wins += 1
        assert wins == 100


class TestMisalignedBlock:
    def test_zero_delta_gives_zero_vector(self):
        out = misaligned_cad_block(ones_spec(), [0.0], n=10)
        assert np.array_equal(out, [0.0])

    def test_hand_value(self):
        out = misaligned_cad_block(ones_spec(), [4.0], n=1)
        assert out == pytest.approx([0.5], abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            misaligned_cad_block(ones_spec(), [1.0, 2.0], n=1)

    def test_fitted_correlated_norm_grows_with_noise(self):
        # Seed-averaged CAD-fit correlated-block norm is ordered by the
        # alignment-noise level.
        spec = FeatureSpec(
            2, 2, 4,
            [0.5, 0.5], [0.7, 0.7], [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0],
        )
        levels = (0.0, 0.25, 0.5, 1.0)
        means = []
        for sd in levels:
            norms = []
            for seed in range(5):
                ds = make_paired_dataset(spec, 20_000, sd, seed=300 + seed)
                fit = fld_fit(ds.pooled_samples(), spec.block_dims)
                norms.append(np.linalg.norm(fit.correlated))
            means.append(np.mean(norms))
        assert means[0] < means[1] < means[2] < means[3]
