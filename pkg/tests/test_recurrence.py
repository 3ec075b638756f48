import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fmriscales import synth
from fmriscales.embedding import embed_series, select_delay
from fmriscales.errors import InvalidRate
from fmriscales.recurrence import (
    BinaryRecurrence,
    RecurrenceFeaturizer,
    recurrence_matrix,
    render_grayscale,
    resize_bilinear,
    rqa_measures,
    threshold,
)
from oracles import det_brute, diagonal_lengths_brute, lam_brute, vertical_lengths_brute


class TestRecurrenceMatrix:
    def test_single_state(self):
        assert recurrence_matrix([[0.0]]).tolist() == [[0.0]]

    def test_three_four_five_triangle(self):
        rm = recurrence_matrix([[0.0, 0.0], [3.0, 4.0]])
        assert rm.tolist() == [[0.0, 5.0], [5.0, 0.0]]

    def test_k160_shape(self):
        states = np.random.default_rng(0).standard_normal((160, 4))
        assert recurrence_matrix(states).shape == (160, 160)

    @given(
        arrays(
            np.float64,
            st.tuples(st.integers(2, 12), st.integers(1, 4)),
            elements=st.floats(-50, 50),
        )
    )
    def test_symmetry_and_zero_diagonal_exact(self, states):
        rm = recurrence_matrix(states)
        assert np.array_equal(rm, rm.T)
        assert np.all(np.diagonal(rm) == 0.0)
        assert np.all(rm >= 0.0)

    def test_translation_invariance_exact_on_dyadic_states(self):
        rng = np.random.default_rng(17)
        states = rng.integers(0, 2**20, size=(30, 3)) / 2.0**20
        shift = np.array([5.0, -2.0, 17.0])
        assert np.array_equal(recurrence_matrix(states),
                              recurrence_matrix(states + shift))

    def test_scaling_scales_distances(self):
        rng = np.random.default_rng(18)
        states = rng.standard_normal((25, 3))
        base = recurrence_matrix(states)
        scaled = recurrence_matrix(-2.5 * states)
        assert np.allclose(scaled, 2.5 * base, rtol=1e-12, atol=0)

    def test_triangle_inequality_on_sampled_triples(self):
        rng = np.random.default_rng(19)
        rm = recurrence_matrix(rng.standard_normal((40, 5)))
        idx = rng.integers(0, 40, size=(200, 3))
        for i, j, k in idx:
            assert rm[i, j] <= rm[i, k] + rm[k, j] + 1e-12


class TestThreshold:
    def test_zero_epsilon_keeps_diagonal_only(self):
        states = np.arange(5.0)[:, None]
        br = threshold(recurrence_matrix(states), epsilon=0.0)
        assert np.array_equal(br.bits, np.eye(5, dtype=bool))

    def test_saturating_epsilon(self):
        rng = np.random.default_rng(1)
        rm = recurrence_matrix(rng.standard_normal((12, 2)))
        br = threshold(rm, epsilon=float(rm.max()))
        assert br.bits.all()
        assert rqa_measures(br).rr == 1.0

    def test_target_rate_achieved_within_band(self):
        rng = np.random.default_rng(2)
        rm = recurrence_matrix(rng.standard_normal((160, 5)))
        br = threshold(rm, target_rate=0.1)
        achieved = rqa_measures(br).rr
        assert 0.09 <= achieved <= 0.11

    def test_diagonal_always_true(self):
        rng = np.random.default_rng(3)
        rm = recurrence_matrix(rng.standard_normal((20, 2)))
        br = threshold(rm, target_rate=0.25)
        assert np.all(np.diagonal(br.bits))

    def test_invalid_rate(self):
        rm = recurrence_matrix(np.arange(6.0)[:, None])
        for rate in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(InvalidRate):
                threshold(rm, target_rate=rate)

    def test_exactly_one_rule_required(self):
        rm = recurrence_matrix(np.arange(4.0)[:, None])
        with pytest.raises(ValueError):
            threshold(rm)
        with pytest.raises(ValueError):
            threshold(rm, epsilon=0.1, target_rate=0.1)


class TestRqaMeasures:
    def test_all_true_matrix(self):
        k = 12
        bits = np.ones((k, k), dtype=bool)
        feats = rqa_measures(bits)
        assert feats.rr == 1.0
        assert feats.lam == 1.0
        assert feats.l_max == k - 1
        assert feats.tt == k
        # the two corner diagonals have length 1, so DET at l_min=2 is just
        # short of 1; at l_min=1 it is exactly 1
        assert feats.det == (k * (k - 1) - 2) / (k * (k - 1))
        assert rqa_measures(bits, l_min=1, v_min=1).det == 1.0

    def test_diagonal_only_matrix_has_no_recurrences(self):
        feats = rqa_measures(np.eye(8, dtype=bool))
        assert feats.no_recurrences
        assert (feats.rr, feats.det, feats.lam, feats.tt) == (0.0, 0.0, 0.0, 0.0)
        assert (feats.l_mean, feats.l_max, feats.entr) == (0.0, 0, 0.0)

    def test_matches_brute_enumeration_on_random_matrices(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            k = int(rng.integers(2, 50))
            bits = rng.random((k, k)) < rng.uniform(0.05, 0.6)
            np.fill_diagonal(bits, True)
            feats = rqa_measures(bits)
            assert feats.det == det_brute(bits)
            assert feats.lam == lam_brute(bits)
            lengths = diagonal_lengths_brute(bits)
            assert feats.l_max == (max(lengths) if lengths else 0)

    def test_entropy_zero_when_single_line_length(self):
        bits = np.eye(10, dtype=bool) | np.eye(10, k=3, dtype=bool) \
            | np.eye(10, k=-3, dtype=bool)
        feats = rqa_measures(bits)
        # all diagonal lines share length 7
        assert feats.entr == 0.0
        assert feats.l_mean == 7.0

    def test_periodic_pattern_has_full_diagonals(self):
        x = synth.gen_sine(240, period=24.0)
        states = embed_series(x, 2, 6)
        br = threshold(recurrence_matrix(states), target_rate=0.1)
        feats = rqa_measures(br)
        assert feats.det > 0.95
        # strict periodicity: every diagonal at a multiple of the period is
        # fully recurrent
        for offset in (24, 48, 72):
            assert np.diagonal(br.bits, offset).all()
        lengths = diagonal_lengths_brute(br.bits)
        assert max(lengths) == br.bits.shape[0] - 24

    def test_sine_det_exceeds_noise_det(self):
        gaps = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            sine = synth.gen_sine(400, period=40.0, phase=float(rng.uniform(0, 6.28)))
            noise = synth.gen_gaussian_noise(400, seed=seed + 1000)
            dets = []
            for x in (sine, noise):
                states = embed_series(x, 2, select_delay(x))
                br = threshold(recurrence_matrix(states), target_rate=0.1)
                dets.append(rqa_measures(br).det)
            gaps.append(dets[0] - dets[1])
        assert min(gaps) >= 0.2

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            k = int(rng.integers(2, 30))
            bits = rng.random((k, k)) < 0.3
            np.fill_diagonal(bits, True)
            feats = rqa_measures(bits)
            assert 0.0 <= feats.det <= 1.0
            assert 0.0 <= feats.lam <= 1.0
            assert feats.l_max <= k - 1
            assert feats.entr >= 0.0


class TestResizeBilinear:
    def test_constant_matrix_preserved_exactly(self):
        out = resize_bilinear(np.full((7, 7), 1.0 / 3.0), size=224)
        assert np.all(out == 1.0 / 3.0)

    def test_corner_alignment_2x2_to_4x4(self):
        out = resize_bilinear(np.array([[0.0, 1.0], [1.0, 0.0]]), size=4)
        assert out[0, 0] == 0.0
        assert out[3, 3] == 0.0
        assert out[0, 3] == 1.0
        assert out[3, 0] == 1.0
        assert out.shape == (4, 4)

    def test_160_to_224_symmetry_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = rng.standard_normal((160, 160))
            a = (a + a.T) / 2
            out = resize_bilinear(a, size=224)
            assert np.array_equal(out, out.T)

    @given(st.integers(2, 12), st.integers(2, 30))
    @settings(max_examples=40)
    def test_symmetry_and_range_properties(self, k, size):
        rng = np.random.default_rng(k * 1000 + size)
        a = rng.standard_normal((k, k))
        a = a + a.T
        out = resize_bilinear(a, size=size)
        assert out.shape == (size, size)
        assert np.array_equal(out, out.T)
        assert out.min() >= a.min() and out.max() <= a.max()

    def test_grid_points_exact_when_size_matches(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((9, 9))
        a = a + a.T
        assert np.array_equal(resize_bilinear(a, size=9), a)

    def test_downsampling_works(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((50, 50))
        a = a + a.T
        out = resize_bilinear(a, size=10)
        assert out.shape == (10, 10)
        assert out[0, 0] == a[0, 0] and out[9, 9] == a[49, 49]


class TestRenderGrayscale:
    def test_min_max_normalization(self, tmp_path):
        path = tmp_path / "rp.pgm"
        render_grayscale(np.array([[0.0, 5.0], [5.0, 0.0]]), path)
        raw = path.read_bytes()
        header, pixels = raw[: raw.index(b"255\n") + 4], raw[raw.index(b"255\n") + 4 :]
        assert header == b"P5\n2 2\n255\n"
        assert list(pixels) == [0, 255, 255, 0]

    def test_constant_matrix_all_zero(self, tmp_path):
        path = tmp_path / "const.pgm"
        render_grayscale(np.full((3, 3), 4.2), path)
        assert path.read_bytes().endswith(b"\x00" * 9)

    def test_224_header(self, tmp_path):
        rng = np.random.default_rng(10)
        rm = recurrence_matrix(rng.standard_normal((160, 3)))
        resized = resize_bilinear(rm, size=224)
        path = tmp_path / "full.pgm"
        render_grayscale(resized, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n224 224\n255\n")
        assert len(raw) == len(b"P5\n224 224\n255\n") + 224 * 224


class TestRecurrenceFeaturizer:
    def test_transform_shape_and_names(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((3, 120))
        feats = RecurrenceFeaturizer(tau=1, dim=2).fit_transform(X)
        assert feats.shape == (3, 7)
        names = RecurrenceFeaturizer().get_feature_names_out()
        assert list(names) == ["rr", "det", "lmean", "lmax", "lam", "tt", "entr"]

    def test_force_states_pins_matrix_size(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(190)
        featurizer = RecurrenceFeaturizer(tau=10, dim=4, force_states=160)
        states = featurizer.embed(x)
        assert states.shape == (160, 4)
        with pytest.raises(ValueError):
            RecurrenceFeaturizer(tau=10, dim=4, force_states=161).embed(x)

    def test_get_params_round_trip(self):
        featurizer = RecurrenceFeaturizer(target_rate=0.2, l_min=3)
        params = featurizer.get_params()
        assert params["target_rate"] == 0.2
        clone = RecurrenceFeaturizer(**params)
        assert clone.get_params() == params
