import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doapose.doa import DoaSpectrum
from doapose.dsp import MultiChannelClip
from doapose.estimate import (
    PosePrior,
    YawEstimate,
    circular_alignment,
    corrupt_prior,
    curve_argmax_yaw,
    estimate_yaw_audio,
    estimate_yaw_from_spectra,
    estimate_yaw_prior,
    fuse_with_prior,
    prior_kernel,
)
from doapose.geometry import Pose, RelativePose, Rotation, relative_pose, signed_yaw_of, wrap_deg
from doapose.sim import CapturePair, Scene, SignalSpec, SourceSpec, generate_pair


def bump(center, width=3.0):
    d = wrap_deg(np.arange(360) - center)
    return DoaSpectrum(np.exp(-0.5 * (d / width) ** 2))


def pair_for(geom, yaw, snr=None, seed=0, n_src=1):
    rng = np.random.default_rng(seed)
    sources = []
    for k in range(n_src):
        az = np.deg2rad(rng.uniform(0, 360))
        d = rng.uniform(2, 5)
        sources.append(SourceSpec([d * np.cos(az), d * np.sin(az), 0], SignalSpec("white_noise", k)))
    scene = Scene(tuple(sources), geom, snr, seed)
    return generate_pair(scene, Pose.identity(), Pose(Rotation.from_yaw(yaw), np.zeros(3)))


def brute_alignment(fs, ft):
    raw = np.array([sum(fs[i] * ft[(i + k) % 360] for i in range(360)) for k in range(360)])
    return (raw - raw.min()) / (raw.max() - raw.min())


class TestAlignment:
    def test_brute_force_double_loop(self, rng):
        fs, ft = DoaSpectrum(rng.uniform(0, 1, 360)), DoaSpectrum(rng.uniform(0, 1, 360))
        np.testing.assert_allclose(circular_alignment(fs, ft), brute_alignment(fs.values, ft.values), atol=1e-12)

    def test_identity_shift(self):
        a = circular_alignment(bump(100), bump(100))
        assert np.argmax(a) == 0

    def test_shifted_bump(self):
        # target sees the source 30 sectors further clockwise: shift k = 330
        assert np.argmax(circular_alignment(bump(100), bump(70))) == 330

    def test_constant_spectrum_gives_zeros(self):
        a = circular_alignment(DoaSpectrum(np.full(360, 0.5)), bump(10))
        assert not np.any(a)

    def test_yaw_from_spectra(self):
        est = estimate_yaw_from_spectra(bump(100), bump(70))
        assert est.yaw_deg == 30.0
        assert not est.flat
        est = estimate_yaw_from_spectra(bump(10), bump(350))
        assert est.yaw_deg == 20.0

    @given(st.integers(0, 359), st.integers(-179, 180))
    @settings(max_examples=60)
    def test_recovers_any_integer_yaw(self, center, yaw):
        est = estimate_yaw_from_spectra(bump(center), bump((center - yaw) % 360))
        assert wrap_deg(est.yaw_deg - yaw) == 0.0

    def test_tie_break(self):
        curve = np.zeros(360)
        curve[[5, 355]] = 1.0
        assert curve_argmax_yaw(curve) == -5.0
        curve[0] = 1.0
        assert curve_argmax_yaw(curve) == 0.0
        assert curve_argmax_yaw(np.zeros(360)) == 0.0


class TestAudio:
    @pytest.mark.parametrize("yaw", [30.0, 0.0])
    def test_yaw_within_two_degrees(self, circ4, yaw):
        est = estimate_yaw_audio(pair_for(circ4, yaw, snr=20.0, seed=3), circ4)
        assert abs(wrap_deg(est.yaw_deg - yaw)) <= 2.0
        assert est.method == "audio_only"

    @pytest.mark.parametrize("yaw", [-150.0, -97.3, -45.0, 12.5, 88.0, 150.0])
    def test_noiseless_within_one_degree(self, circ4, yaw):
        est = estimate_yaw_audio(pair_for(circ4, yaw, seed=int(abs(yaw))), circ4)
        assert abs(wrap_deg(est.yaw_deg - yaw)) <= 1.0

    def test_noise_only_is_flagged_flat(self, circ4):
        # statistical oracle: uncorrelated noise has no direction to align
        flagged = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            clips = [MultiChannelClip(0.1 * rng.standard_normal((4, 24000))) for _ in range(2)]
            rel = relative_pose(Pose.identity(), Pose.identity())
            pair = CapturePair(clips[0], clips[1], Pose.identity(), Pose.identity(), rel)
            flagged += estimate_yaw_audio(pair, circ4).flat
        assert flagged >= 95

    @pytest.mark.parametrize("snr", [20.0, 0.0, -5.0])
    def test_single_source_not_flat(self, circ4, snr):
        for seed in range(5):
            assert not estimate_yaw_audio(pair_for(circ4, 10.0, snr=snr, seed=seed), circ4).flat


class TestPrior:
    def test_kernel_peak_and_width(self):
        prior = PosePrior(Rotation.from_yaw(40.0), 10.0)
        k = prior_kernel(prior)
        assert k[40] == pytest.approx(1.0)
        assert k[50] == pytest.approx(np.exp(-0.5))
        assert k[(40 - 180) % 360] == pytest.approx(np.exp(-0.5 * 18**2))

    def test_prior_only_is_off_grid(self):
        est = estimate_yaw_prior(PosePrior(Rotation.from_yaw(12.3), 5.0))
        assert est.yaw_deg == pytest.approx(12.3)
        assert est.method == "prior_only"

    def test_corrupt_zero_sigma(self):
        truth = RelativePose(Rotation.from_yaw(25.0), np.zeros(3))
        p = corrupt_prior(truth, 0.0, 1)
        assert p.rotation.allclose(truth.rotation)
        assert p.yaw_confidence_deg == 0.5

    def test_corrupt_statistics(self):
        truth = RelativePose(Rotation.from_yaw(-40.0), np.zeros(3))
        errs = np.array([wrap_deg(corrupt_prior(truth, 10.0, s).yaw_deg + 40.0) for s in range(10000)])
        assert abs(errs.mean()) < 0.5
        assert errs.std() == pytest.approx(10.0, rel=0.05)

    def test_corrupt_deterministic(self):
        truth = RelativePose(Rotation.from_yaw(5.0), np.zeros(3))
        assert corrupt_prior(truth, 7.0, (3, 4)).yaw_deg == corrupt_prior(truth, 7.0, (3, 4)).yaw_deg


class TestFusion:
    def audio(self, yaw):
        est = estimate_yaw_from_spectra(bump(100), bump((100 - yaw) % 360))
        assert est.yaw_deg == yaw
        return est

    def test_weight_one_is_audio(self):
        fused = fuse_with_prior(self.audio(30), PosePrior(Rotation.from_yaw(-50), 5.0), 1.0)
        assert fused.yaw_deg == 30.0

    def test_weight_zero_is_prior_argmax(self):
        fused = fuse_with_prior(self.audio(30), PosePrior(Rotation.from_yaw(-50), 5.0), 0.0)
        assert fused.yaw_deg == -50.0

    def test_formula_oracle(self, rng):
        audio = YawEstimate(0.0, rng.uniform(0, 1, 360), "audio_only")
        prior = PosePrior(Rotation.from_yaw(17.0), 8.0)
        w = 0.3
        fused = fuse_with_prior(audio, prior, w)
        for j in range(0, 360, 7):
            d = ((j - 17.0 + 180) % 360) - 180
            expected = w * audio.score_curve[j] + (1 - w) * np.exp(-0.5 * (d / 8.0) ** 2)
            assert fused.score_curve[j] == pytest.approx(expected, abs=1e-12)
        assert fused.method == "fused"

    def test_monotone_in_weight(self):
        # moving weight towards audio never moves the answer towards the prior
        audio, prior = self.audio(40), PosePrior(Rotation.from_yaw(-20), 30.0)
        yaws = [fuse_with_prior(audio, prior, w).yaw_deg for w in np.linspace(0, 1, 21)]
        assert all(b >= a for a, b in zip(yaws, yaws[1:]))
        assert yaws[0] == -20.0 and yaws[-1] == 40.0

    def test_agreeing_sources(self):
        fused = fuse_with_prior(self.audio(15), PosePrior(Rotation.from_yaw(15), 5.0), 0.5)
        assert fused.yaw_deg == 15.0

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            fuse_with_prior(self.audio(0), PosePrior(Rotation.identity(), 1.0), 1.5)
