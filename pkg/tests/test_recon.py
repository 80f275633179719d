import math

import numpy as np
import pytest

from quadim import (
    ChannelCalibration,
    ComplexSample,
    QuadratureFrame,
    Roi,
    ScalarField,
    SystemParams,
    ValidationError,
    correct_channels,
    gaussian_blur,
    quadrature_phase,
    quadrature_visibility,
    reconstruct_frame,
    reference_to_region,
    register_channels,
    simulate_frame,
    unwrap_2d,
    wrap_phase,
)
from quadim.recon import gaussian_kernel, warp_affine


def ideal_channels(phi, loss, visibility):
    """Ideal quadrature channels, written out explicitly as the oracle."""
    return (
        1 + visibility * (1 - loss) * np.cos(phi),
        1 - visibility * (1 - loss) * np.sin(phi),
        1 - visibility * (1 - loss) * np.cos(phi),
        1 + visibility * (1 - loss) * np.sin(phi),
    )


class TestQuadraturePhase:
    def test_zero_phase_column(self):
        v = 0.4
        phase, valid = quadrature_phase(1 + v, 1.0, 1 - v, 1.0)
        assert float(phase) == pytest.approx(0.0)
        assert bool(valid)

    def test_quarter_phase_column(self):
        v = 0.4
        phase, _ = quadrature_phase(1.0, 1 - v, 1.0, 1 + v)
        assert float(phase) == pytest.approx(math.pi / 2)

    def test_partial_visibility_point(self):
        # Channels for phi = 0.3*pi at V = 0.67: atan2(1.0840, 0.7876)
        phase, _ = quadrature_phase(1.3938, 0.4580, 0.6062, 1.5420)
        assert float(phase) == pytest.approx(0.3 * math.pi, abs=1e-4)

    def test_low_modulation_flagged_invalid(self):
        phase, valid = quadrature_phase(1.0, 1.0, 1.0, 1.0)
        assert not bool(valid)

    def test_all_zero_channels_invalid(self):
        _, valid = quadrature_phase(0.0, 0.0, 0.0, 0.0)
        assert not bool(valid)

    def test_round_trip_property(self):
        rng = np.random.default_rng(7)
        phi = rng.uniform(-math.pi, math.pi, (64, 64))
        loss = rng.uniform(0.0, 0.9, (64, 64))
        for v in (1.0, 0.67, 0.2):
            p0, p1, p2, p3 = ideal_channels(phi, loss, v)
            phase, valid = quadrature_phase(p0, p1, p2, p3)
            assert valid.all()
            np.testing.assert_allclose(phase, phi, atol=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        chans = ideal_channels(rng.uniform(-3, 3, (16, 16)), 0.0, 0.8)
        base, _ = quadrature_phase(*chans)
        for c in (0.5, 7.0, 1234.5):
            scaled, _ = quadrature_phase(*(c * ch for ch in chans))
            np.testing.assert_allclose(scaled, base, atol=1e-12)

    def test_offset_invariance(self):
        rng = np.random.default_rng(9)
        chans = ideal_channels(rng.uniform(-3, 3, (16, 16)), 0.0, 0.8)
        base, _ = quadrature_phase(*chans)
        shifted, valid = quadrature_phase(*(ch + 5.0 for ch in chans))
        assert valid.all()
        np.testing.assert_allclose(shifted, base, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            quadrature_phase(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 2)))


class TestQuadratureVisibility:
    def test_direct_substitution(self):
        # 2*sqrt((1-1)^2 + (0.5-1.5)^2) / 4 = 0.5
        vis, valid = quadrature_visibility(1.5, 1.0, 0.5, 1.0)
        assert float(vis) == pytest.approx(0.5, abs=1e-12)
        assert bool(valid)

    def test_no_modulation(self):
        vis, valid = quadrature_visibility(3.0, 3.0, 3.0, 3.0)
        assert float(vis) == 0.0
        assert bool(valid)

    def test_system_visibility_times_transmission(self):
        p0, p1, p2, p3 = ideal_channels(0.4, 0.25, 0.67)
        vis, _ = quadrature_visibility(p0, p1, p2, p3)
        assert float(vis) == pytest.approx(0.67 * 0.75, abs=1e-9)
        assert float(vis) == pytest.approx(0.5025, abs=1e-9)

    def test_round_trip_property(self):
        rng = np.random.default_rng(10)
        phi = rng.uniform(-math.pi, math.pi, (32, 32))
        loss = rng.uniform(0.0, 0.9, (32, 32))
        p0, p1, p2, p3 = ideal_channels(phi, loss, 0.67)
        vis, valid = quadrature_visibility(p0, p1, p2, p3)
        assert valid.all()
        np.testing.assert_allclose(vis, 0.67 * (1 - loss), atol=1e-9)

    def test_zero_sum_flagged_not_thrown(self):
        vis, valid = quadrature_visibility(0.0, 0.0, 0.0, 0.0)
        assert not bool(valid)
        assert float(vis) == 0.0

    def test_scale_invariance(self):
        chans = ideal_channels(1.1, 0.3, 0.9)
        v1, _ = quadrature_visibility(*chans)
        v2, _ = quadrature_visibility(*(42.0 * c for c in chans))
        assert float(v2) == pytest.approx(float(v1), rel=1e-12)


class TestRegistration:
    def _frame(self, values):
        fields = tuple(ScalarField(values + k) for k in range(4))
        return QuadratureFrame(channels=fields, exposure=1.0)

    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(11)
        values = rng.uniform(0, 100, (24, 24))
        frame = self._frame(values)
        calib = ChannelCalibration.identity(frame.shape)
        aligned, valid = register_channels(frame, calib)
        assert valid.all()
        for k in range(4):
            assert np.array_equal(aligned[k], frame.channels[k].values)

    def test_integer_translation(self):
        rng = np.random.default_rng(12)
        values = rng.uniform(0, 100, (20, 20))
        affine = (1.0, 0.0, 2.0, 0.0, 1.0, 3.0)  # maps source -> output shifted by (2, 3)
        warped, valid = warp_affine(values, affine, (20, 20))
        assert np.array_equal(warped[3:, 2:], values[:-3, :-2])
        assert valid[3:, 2:].all()
        assert not valid[:3, :].any() and not valid[:, :2].any()

    def test_scale_round_trip(self):
        # smooth image, 1% scale out and back: interior error << dynamic range
        y, x = np.mgrid[0:64, 0:64]
        img = np.sin(x / 16.0) + np.cos(y / 20.0)
        fwd = (1.01, 0.0, 0.0, 0.0, 1.01, 0.0)
        inv = (1 / 1.01, 0.0, 0.0, 0.0, 1 / 1.01, 0.0)
        once, _ = warp_affine(img, fwd, img.shape)
        back, valid = warp_affine(once, inv, img.shape)
        interior = np.zeros_like(valid)
        interior[4:-4, 4:-4] = True
        err = np.abs(back - img)[interior & valid].max()
        assert err < 1e-3 * (img.max() - img.min())

    def test_roi_outside_channel_rejected(self):
        frame = self._frame(np.zeros((16, 16)))
        calib = ChannelCalibration(rois=(Roi(8, 8, 16, 16),) * 4)
        with pytest.raises(ValidationError):
            register_channels(frame, calib)


class TestCorrectChannels:
    def test_identity(self):
        calib = ChannelCalibration.identity((4, 4))
        arrays = [np.full((4, 4), float(k)) for k in range(4)]
        out = correct_channels(arrays, calib)
        for a, b in zip(arrays, out):
            np.testing.assert_array_equal(a, b)

    def test_affine_by_hand(self):
        calib = ChannelCalibration(
            rois=(Roi(0, 0, 4, 4),) * 4, alphas=(2.0,) * 4, betas=(-1.0,) * 4
        )
        out = correct_channels([np.ones((4, 4))] * 4, calib)
        for o in out:
            np.testing.assert_array_equal(o, np.ones((4, 4)))


class TestGaussianBlur:
    def test_sigma_zero_is_identity(self):
        rng = np.random.default_rng(13)
        v = rng.normal(size=(16, 16))
        assert np.array_equal(gaussian_blur(v, 0.0), v)

    def test_constant_field_unchanged(self):
        v = np.full((16, 16), 3.25)
        np.testing.assert_allclose(gaussian_blur(v, 2.0), 3.25, atol=1e-12)

    def test_impulse_response_matches_kernel(self):
        sigma = 1.0
        n = 21
        v = np.zeros((n, n))
        v[n // 2, n // 2] = 1.0
        out = gaussian_blur(v, sigma)
        kernel = gaussian_kernel(sigma)
        assert out[n // 2, n // 2] == pytest.approx(kernel.max() ** 2, abs=1e-12)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_kernel_radius_truncation(self):
        assert gaussian_kernel(1.5).size == 2 * math.ceil(4.5) + 1
        assert gaussian_kernel(1.0).size == 7

    def test_mean_preserved(self):
        rng = np.random.default_rng(14)
        v = rng.uniform(1, 5, (40, 40))
        for sigma in (0.7, 1.5, 3.0):
            out = gaussian_blur(v, sigma)
            assert out.mean() == pytest.approx(v.mean(), rel=1e-9)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValidationError):
            gaussian_blur(np.zeros((4, 4)), -1.0)

    def test_scalar_field_round_trips_type(self):
        f = ScalarField(np.ones((8, 8)), pitch=7.0)
        out = gaussian_blur(f, 1.0)
        assert isinstance(out, ScalarField)
        assert out.pitch == 7.0


class TestUnwrap2D:
    def test_constant_unchanged(self):
        v = np.full((8, 8), 0.7)
        np.testing.assert_allclose(unwrap_2d(v), v, atol=1e-12)

    def test_one_row_ramp(self):
        # Itoh condition holds (0.8*pi steps < pi), so a 1D scan recovers the ramp
        true = 0.8 * math.pi * np.arange(6)[None, :]
        out = unwrap_2d(wrap_phase(true))
        np.testing.assert_allclose(out - out[0, 0], true - true[0, 0], atol=1e-9)

    def test_gaussian_dome_exact(self):
        n = 128
        y, x = np.mgrid[0:n, 0:n]
        dome = 10 * math.pi * np.exp(-((x - 64.0) ** 2 + (y - 64.0) ** 2) / (2 * 20.0**2))
        out = unwrap_2d(wrap_phase(dome))
        diff = out - dome
        k = np.rint(diff.mean() / (2 * math.pi))
        assert np.abs(diff - 2 * math.pi * k).max() < 1e-6

    def test_output_congruent_mod_2pi(self):
        rng = np.random.default_rng(15)
        w = wrap_phase(rng.uniform(-20, 20, (32, 32)))
        out = unwrap_2d(w)
        ratio = (out - w) / (2 * math.pi)
        np.testing.assert_allclose(ratio, np.rint(ratio), atol=1e-9)

    def test_masked_pixels_pass_through(self):
        rng = np.random.default_rng(16)
        w = wrap_phase(rng.uniform(-3, 3, (16, 16)))
        mask = np.ones((16, 16), dtype=bool)
        mask[4:6, 4:9] = False
        out = unwrap_2d(w, mask)
        np.testing.assert_array_equal(out[~mask], w[~mask])

    def test_anchor_keeps_wrapped_value(self):
        n = 64
        y, x = np.mgrid[0:n, 0:n]
        dome = 8 * math.pi * np.exp(-((x - 32.0) ** 2 + (y - 32.0) ** 2) / (2 * 12.0**2))
        w = wrap_phase(dome)
        out = unwrap_2d(w)
        # some pixel retains its wrapped value exactly
        assert np.isclose(np.abs(out - w), 0.0, atol=1e-12).any()

    def test_deterministic(self):
        rng = np.random.default_rng(17)
        w = wrap_phase(rng.uniform(-9, 9, (24, 24)))
        assert np.array_equal(unwrap_2d(w), unwrap_2d(w))

    def test_empty_valid_region_rejected(self):
        with pytest.raises(ValidationError):
            unwrap_2d(np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))


class TestReferenceToRegion:
    def test_constant_becomes_zero(self):
        out = reference_to_region(np.full((8, 8), 2.5), Roi(1, 1, 4, 4))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_roi_mean_is_zero(self):
        rng = np.random.default_rng(18)
        v = rng.normal(3.2, 1.0, (16, 16))
        roi = Roi(2, 3, 6, 5)
        out = reference_to_region(v, roi)
        assert abs(out[roi.slices].mean()) < 1e-12

    def test_drift_cancellation(self):
        rng = np.random.default_rng(19)
        v = rng.normal(size=(16, 16))
        roi = Roi(0, 0, 8, 8)
        out1 = reference_to_region(v, roi)
        out2 = reference_to_region(v + 17.3, roi)
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_fully_masked_roi_rejected(self):
        valid = np.ones((8, 8), dtype=bool)
        valid[:4, :4] = False
        with pytest.raises(ValidationError):
            reference_to_region(np.zeros((8, 8)), Roi(0, 0, 4, 4), valid)


class TestPipeline:
    def test_noiseless_recon_returns_sample_phase(self):
        rng = np.random.default_rng(20)
        phi = wrap_phase(rng.uniform(-math.pi, math.pi, (48, 48)))
        loss = rng.uniform(0.0, 0.5, (48, 48))
        sample = ComplexSample(ScalarField(phi), ScalarField(loss))
        frame = simulate_frame(sample, SystemParams(system_visibility=0.67))
        calib = ChannelCalibration.identity(frame.shape)
        result = reconstruct_frame(frame, calib, sigma=0.0)
        assert result.valid.all()
        np.testing.assert_allclose(result.phase.values, phi, atol=1e-9)
        np.testing.assert_allclose(
            result.visibility.values, 0.67 * (1 - loss), atol=1e-9
        )

    def test_unwrap_and_reference_stage(self):
        n = 64
        y, x = np.mgrid[0:n, 0:n]
        dome = 6 * math.pi * np.exp(-((x - 40.0) ** 2 + (y - 40.0) ** 2) / (2 * 10.0**2))
        sample = ComplexSample.phase_only(dome)
        frame = simulate_frame(sample, SystemParams())
        calib = ChannelCalibration.identity(frame.shape)
        ref = Roi(0, 0, 10, 10)
        result = reconstruct_frame(frame, calib, sigma=0.0, unwrap=True, reference_roi=ref)
        assert result.unwrapped is not None
        np.testing.assert_allclose(
            result.unwrapped.values, dome - dome[ref.slices].mean(), atol=1e-6
        )

    def test_equal_channels_are_invalid(self):
        fields = tuple(ScalarField(np.full((16, 16), 5.0)) for _ in range(4))
        frame = QuadratureFrame(channels=fields, exposure=1.0)
        calib = ChannelCalibration.identity(frame.shape)
        result = reconstruct_frame(frame, calib, sigma=0.0)
        assert not result.valid.any()
        np.testing.assert_array_equal(result.visibility.values, 0.0)

    def test_pipeline_with_translated_channel(self):
        # channel 3 arrives shifted by (2, 1); its affine registers it back
        rng = np.random.default_rng(21)
        phi = 0.5 * np.sin(np.linspace(0, 3, 40))[None, :] * np.ones((40, 1))
        sample = ComplexSample.phase_only(phi)
        frame = simulate_frame(sample, SystemParams())
        shifted = np.roll(np.roll(frame.channels[3].values, 2, axis=1), 1, axis=0)
        frame = QuadratureFrame(
            channels=(
                frame.channels[0],
                frame.channels[1],
                frame.channels[2],
                ScalarField(shifted),
            ),
            exposure=frame.exposure,
        )
        full = Roi(0, 0, 40, 40)
        affine3 = (1.0, 0.0, -2.0, 0.0, 1.0, -1.0)  # maps shifted px back
        calib = ChannelCalibration(
            rois=(full,) * 4,
            affines=(
                (1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
                (1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
                (1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
                affine3,
            ),
        )
        result = reconstruct_frame(frame, calib, sigma=0.0)
        # resampling reads source at (x+2, y+1): right/bottom edges fall outside
        assert not result.valid[:, 38:].any()
        assert not result.valid[39:, :].any()
        assert result.valid[:39, :38].all()
        np.testing.assert_allclose(
            result.phase.values[result.valid], phi[result.valid], atol=1e-9
        )
