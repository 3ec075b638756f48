import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from fmriscales.data import VoxelBlock
from fmriscales.errors import DegenerateInput, NoDefinedReho
from fmriscales.reho import (
    RehoMap,
    kcc,
    load_voxel_block,
    rank_transform,
    reho_map,
    select_representative,
    write_reho_map,
)
from oracles import kendall_w_direct


class TestRankTransform:
    def test_strict_ordering(self):
        assert rank_transform([3.0, 1.0, 2.0]).tolist() == [3, 1, 2]

    def test_mid_ranks_for_ties(self):
        assert rank_transform([5.0, 5.0, 1.0]).tolist() == [2.5, 2.5, 1]

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60))
    def test_rank_sum_is_exact(self, values):
        ranks = rank_transform(values)
        n = len(values)
        assert ranks.sum() == n * (n + 1) / 2


class TestKcc:
    def test_identical_rankings_give_one(self):
        rows = np.tile(np.arange(1.0, 191.0), (27, 1))
        assert kcc(rows) == 1.0

    def test_hand_evaluated_three_rankers(self):
        rows = np.array([[1, 2, 3], [1, 2, 3], [3, 2, 1]], dtype=float)
        # rank sums (5, 6, 7), S = 2, no ties: W = 24 / 216
        assert kcc(rows) == pytest.approx(1.0 / 9.0, abs=1e-15)
        assert kcc(rows) == pytest.approx(kendall_w_direct(rows), abs=1e-15)

    def test_matches_direct_formula_with_ties(self):
        rng = np.random.default_rng(11)
        raw = rng.integers(0, 5, size=(6, 12)).astype(float)
        rows = rankdata(raw, method="average", axis=1)
        assert kcc(rows) == pytest.approx(kendall_w_direct(rows), abs=1e-13)

    def test_null_population_stays_small(self):
        # 27 independent rankers on N=190 items: 99th percentile well below 0.15
        rng = np.random.default_rng(7)
        trials = np.empty(1000)
        for t in range(1000):
            rows = np.argsort(rng.random((27, 190)), axis=1) + 1.0
            trials[t] = kcc(rows)
        assert np.quantile(trials, 0.99) < 0.15
        assert trials.max() < 0.15

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        raw = rng.standard_normal((5, 40))
        ranks = rankdata(raw, method="average", axis=1)
        transformed = rankdata(np.exp(3.0 * raw) + 2.0, method="average", axis=1)
        assert kcc(ranks) == kcc(transformed)

    def test_all_tied_rows_degenerate(self):
        rows = np.ones((3, 10))
        with pytest.raises(DegenerateInput):
            kcc(rows)

    def test_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            raw = rng.standard_normal((4, 15))
            w = kcc(rankdata(raw, method="average", axis=1))
            assert 0.0 <= w <= 1.0


def block_from_series(series_grid):
    return VoxelBlock(series=np.asarray(series_grid, dtype=np.float64))


class TestRehoMap:
    def test_single_voxel_is_undefined(self):
        block = block_from_series(np.arange(10.0).reshape(1, 1, 1, 10))
        rmap = reho_map(block)
        assert not rmap.defined[0, 0, 0]
        assert rmap.w[0, 0, 0] == 0.0

    def test_identical_increasing_series_give_w_one(self):
        base = np.arange(1.0, 21.0)
        series = np.tile(base, (3, 3, 3, 1))
        rmap = reho_map(block_from_series(series))
        assert rmap.defined.all()
        assert rmap.w[1, 1, 1] == 1.0

    def test_noise_block_center_is_small(self):
        rng = np.random.default_rng(13)
        series = rng.standard_normal((3, 3, 3, 190))
        rmap = reho_map(block_from_series(series))
        assert rmap.defined[1, 1, 1]
        assert rmap.w[1, 1, 1] < 0.15

    def test_neighbors_only_excludes_center(self):
        rng = np.random.default_rng(4)
        series = rng.standard_normal((3, 3, 3, 30))
        with_center = reho_map(block_from_series(series), include_center=True)
        without = reho_map(block_from_series(series), include_center=False)
        assert with_center.w[1, 1, 1] != without.w[1, 1, 1]
        # corner voxel: 8-voxel cluster with center, 7 without
        assert without.defined[0, 0, 0]

    def test_constant_voxels_flagged_undefined(self):
        series = np.ones((2, 1, 1, 12))
        rmap = reho_map(block_from_series(series))
        assert not rmap.defined.any()
        assert np.all(rmap.w == 0.0)

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(8)
        series = rng.standard_normal((4, 3, 2, 25))
        rmap = reho_map(block_from_series(series))
        assert rmap.defined.all()
        assert np.all((rmap.w >= 0.0) & (rmap.w <= 1.0))


class TestSelectRepresentative:
    def test_identical_voxels_return_their_series(self):
        base = np.arange(1.0, 16.0)
        block = block_from_series(np.tile(base, (2, 2, 1, 1)))
        rmap = reho_map(block)
        rep = select_representative(block, rmap)
        assert np.array_equal(rep.values, base)

    def test_threshold_selects_high_w_voxel(self):
        series = np.stack([np.arange(10.0), np.arange(10.0)[::-1]]).reshape(2, 1, 1, 10)
        block = block_from_series(series)
        rmap = RehoMap(
            w=np.array([[[0.9]], [[0.1]]]),
            defined=np.ones((2, 1, 1), dtype=bool),
        )
        rep = select_representative(block, rmap)
        assert np.array_equal(rep.values, series[0, 0, 0])

    def test_all_undefined_raises(self):
        block = block_from_series(np.ones((1, 1, 1, 10)))
        rmap = reho_map(block)
        with pytest.raises(NoDefinedReho):
            select_representative(block, rmap)

    def test_sine_voxels_dominate_candidates(self):
        # 14 contiguous voxels share a sine with small noise, 13 carry pure
        # noise: every candidate comes from the sine region and the
        # representative tracks the sine
        rng = np.random.default_rng(21)
        t = np.arange(120.0)
        sine = np.sin(2 * np.pi * t / 24.0)
        series = np.empty((27, 120))
        for v in range(27):
            if v < 14:
                series[v] = sine + 0.05 * rng.standard_normal(120)
            else:
                series[v] = rng.standard_normal(120)
        block = block_from_series(series.reshape(3, 3, 3, 120))
        rmap = reho_map(block)
        mean_w = rmap.w[rmap.defined].mean()
        candidates = (rmap.defined & (rmap.w >= mean_w)).reshape(27)
        sine_voxels = np.arange(27) < 14
        assert candidates.any()
        assert np.all(sine_voxels[candidates])  # no noise voxel qualifies
        assert candidates[:14].sum() >= 7       # sine core qualifies
        rep = select_representative(block, rmap)
        assert np.corrcoef(rep.values, sine)[0, 1] > 0.99

    def test_common_offset_shifts_representative_exactly(self):
        # dyadic samples, an integer offset, and a power-of-two candidate
        # count keep the arithmetic exact end to end
        rng = np.random.default_rng(2)
        series = rng.integers(0, 2**20, size=(4, 1, 1, 16)) / 2.0**20
        rmap = RehoMap(
            w=np.array([0.9, 0.8, 0.2, 0.1]).reshape(4, 1, 1),
            defined=np.ones((4, 1, 1), dtype=bool),
        )
        rep = select_representative(block_from_series(series), rmap)
        shifted = select_representative(block_from_series(series + 3.0), rmap)
        assert np.array_equal(shifted.values, rep.values + 3.0)

    def test_output_length_matches_input(self):
        rng = np.random.default_rng(6)
        block = block_from_series(rng.standard_normal((2, 2, 2, 33)))
        rep = select_representative(block, reho_map(block))
        assert rep.values.shape == (33,)


class TestVoxelBlockIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        series = rng.standard_normal((2, 2, 1, 6))
        path = tmp_path / "block.csv"
        with open(path, "w") as fh:
            fh.write("x,y,z," + ",".join(f"t{i}" for i in range(6)) + "\n")
            for x in range(2):
                for y in range(2):
                    fh.write(
                        f"{x},{y},0,"
                        + ",".join(f"{v:.17g}" for v in series[x, y, 0])
                        + "\n"
                    )
        block = load_voxel_block(path, region_id="r1")
        assert block.dims == (2, 2, 1)
        assert np.array_equal(block.series, series)
        rmap = reho_map(block)
        out = tmp_path / "map.csv"
        write_reho_map(rmap, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "x,y,z,w,defined"
        assert len(lines) == 1 + 4

    def test_sparse_grid_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,z,t0\n0,0,0,1.0\n2,0,0,2.0\n")
        with pytest.raises(ValueError):
            load_voxel_block(path)
