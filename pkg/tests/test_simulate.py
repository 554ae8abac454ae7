import math
from dataclasses import replace

import numpy as np
import pytest

from trajshift.simulate import (
    SCENARIO_GROUPS,
    CorruptionSpec,
    ScenarioSpec,
    corrupt,
    generate,
    inflate_noise,
    load_ground_truth,
    save_ground_truth,
)


class TestScenarioTable:
    def test_scenario_one_group_one_formula(self):
        mean = SCENARIO_GROUPS[1][0].mean
        assert abs(mean(np.array([0.0]))[0] - (20 + 3 * math.sin(2.4))) < 1e-12

    def test_scenario_sizes(self):
        sizes = {sid: [g.size for g in groups] for sid, groups in SCENARIO_GROUPS.items()}
        assert sizes[3] == [300, 400, 300]
        assert sizes[4] == [250] * 4
        assert sizes[7] == [500, 250, 250]
        assert sizes[8] == [300, 300, 200, 200]
        assert sizes[9] == [300, 250, 250, 200]

    def test_unknown_scenario(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            ScenarioSpec.standard(42)


class TestGenerate:
    def test_observation_times_truncated(self):
        data, _ = generate(ScenarioSpec.standard(3, seed=0))
        for tr in data.trajectories:
            assert tr.times[0] >= 1.0
            assert tr.times[-1] <= 17.0

    def test_shift_distribution(self):
        # 1e5 subjects with enough observations that nobody is dropped,
        # so the recorded shifts reflect the assignment rule itself
        spec = ScenarioSpec.standard(1, seed=5)
        big = replace(
            spec,
            groups=(replace(spec.groups[0], size=100_000),),
            n_obs_per_subject=5,
            noise_sd=0.0,
            truncation_bound=21.0,
        )
        _, truth = generate(big)
        shifts = truth.shifts
        frac0 = np.mean(shifts == 0)
        assert abs(frac0 - 0.6) < 0.01
        nonzero = shifts[shifts > 0]
        for d in (1, 2, 3, 4):
            assert abs(np.mean(nonzero == d) - 0.25) < 0.01

    def test_noiseless_unshifted_lies_on_curve(self):
        spec = ScenarioSpec.standard(1, seed=2)
        clean = replace(spec, noise_sd=0.0, zero_shift_fraction=1.0)
        data, truth = generate(clean)
        for tr, g in zip(data.trajectories[:20], truth.groups[:20]):
            want = SCENARIO_GROUPS[1][g - 1].mean(tr.times)
            np.testing.assert_allclose(tr.values, want, atol=1e-12)

    def test_group_sizes_recorded(self):
        _, truth = generate(ScenarioSpec.standard(3, seed=1))
        counts = np.bincount(truth.groups)[1:]
        np.testing.assert_array_equal(counts, [300, 400, 300])

    def test_onset_gap_property(self):
        data, truth = generate(ScenarioSpec.standard(2, seed=3))
        for tr, d in zip(data.trajectories, truth.shifts):
            # original curve time = observed + d never precedes 1 + d
            assert tr.times[0] + d >= 1.0 + d - 1e-12

    def test_deterministic_given_seed(self):
        a, _ = generate(ScenarioSpec.standard(1, seed=9))
        b, _ = generate(ScenarioSpec.standard(1, seed=9))
        for ta, tb in zip(a.trajectories, b.trajectories):
            np.testing.assert_array_equal(ta.times, tb.times)
            np.testing.assert_array_equal(ta.values, tb.values)

    def test_distinct_seeds_differ(self):
        a, _ = generate(ScenarioSpec.standard(1, seed=9))
        b, _ = generate(ScenarioSpec.standard(1, seed=10))
        assert not np.array_equal(a.trajectories[0].values, b.trajectories[0].values)

    def test_speed_warps_observation_times(self):
        spec = ScenarioSpec.standard(7, seed=4)
        clean = replace(spec, noise_sd=0.0, zero_shift_fraction=1.0)
        data, truth = generate(clean)
        slow = truth.speeds < 1.0
        assert slow.any()
        i = int(np.flatnonzero(slow)[0])
        # compressed time axis: every observation lands at speed * original time
        assert data.trajectories[i].times[-1] <= 0.7 * 21.0 + 1e-9

    def test_speed_flag_alternative_reading(self):
        spec = ScenarioSpec.standard(7, seed=4)
        alt = replace(spec, noise_sd=0.0, zero_shift_fraction=1.0, speed_warps_times=False)
        data, truth = generate(alt)
        slow = truth.speeds < 1.0
        i = int(np.flatnonzero(slow)[0])
        tr = data.trajectories[i]
        want = SCENARIO_GROUPS[7][int(truth.groups[i]) - 1].mean(0.7 * tr.times)
        np.testing.assert_allclose(tr.values, want, atol=1e-12)

    def test_truth_aligned_with_cohort(self):
        data, truth = generate(ScenarioSpec.standard(5, seed=6))
        assert data.subject_ids == truth.subject_ids


class TestCorrupt:
    def _cohort(self, seed=0):
        return generate(ScenarioSpec.standard(1, seed=seed))[0]

    def test_zero_doubling_is_identity(self):
        data = self._cohort()
        out = corrupt(data, CorruptionSpec("outlier_doubling", 0, seed=1))
        assert out is data

    def test_doubling_touches_exact_count(self):
        data = self._cohort()
        out = corrupt(data, CorruptionSpec("outlier_doubling", 100, seed=2))
        changed = 0
        for tr_in, tr_out in zip(data.trajectories, out.trajectories):
            np.testing.assert_array_equal(tr_in.times, tr_out.times)
            diff = tr_in.values != tr_out.values
            changed += int(diff.sum())
            np.testing.assert_array_equal(tr_out.values[diff], 2.0 * tr_in.values[diff])
        assert changed == 100

    def test_doubling_count_exceeds_total(self):
        data = self._cohort()
        with pytest.raises(ValueError, match="cannot double"):
            corrupt(data, CorruptionSpec("outlier_doubling", data.n_observations + 1, seed=0))

    def test_deletion_removes_exact_count(self):
        data = self._cohort()
        total = data.n_observations
        out = corrupt(data, CorruptionSpec("random_deletion", 0.10, seed=3))
        assert out.n_observations == total - int(math.floor(0.10 * total))

    def test_noise_inflation_redirects_to_generator(self):
        data = self._cohort()
        with pytest.raises(ValueError, match="inflate_noise"):
            corrupt(data, CorruptionSpec("noise_inflation", 0.15, seed=0))

    def test_inflate_noise_scales_sd(self):
        spec = ScenarioSpec.standard(3, seed=0)
        out = inflate_noise(spec, 0.44)
        assert abs(out.noise_sd - 0.8 * math.sqrt(1.44)) < 1e-12

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="nonnegative integer"):
            CorruptionSpec("outlier_doubling", 1.5)
        with pytest.raises(ValueError, match="fraction"):
            CorruptionSpec("random_deletion", 1.0)
        with pytest.raises(ValueError, match="unknown corruption"):
            CorruptionSpec("scramble", 0.1)


class TestGroundTruthIO:
    def test_round_trip(self, tmp_path):
        _, truth = generate(ScenarioSpec.standard(1, seed=0))
        path = tmp_path / "truth.csv"
        save_ground_truth(truth, path)
        back = load_ground_truth(path)
        assert back.subject_ids == truth.subject_ids
        np.testing.assert_array_equal(back.shifts, truth.shifts)
        np.testing.assert_array_equal(back.groups, truth.groups)
