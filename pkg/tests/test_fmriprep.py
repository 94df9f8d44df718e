import numpy as np
import pytest

from neurofuse.fmriprep import (
    BetaVolumes,
    BoldRun,
    apply_mask,
    build_design,
    canonical_hrf,
    estimate_betas,
    smooth_betas,
    smooth_volume,
    unmask,
)


def test_hrf_starts_at_zero():
    h = canonical_hrf(0.1)
    assert h[0] == 0.0


def test_hrf_peaks_near_six_seconds():
    dt = 0.05
    h = canonical_hrf(dt)
    assert abs(np.argmax(h) * dt - 6.0) <= dt


def test_hrf_single_sign_change():
    h = canonical_hrf(0.05)
    signs = np.sign(h[np.abs(h) > 1e-12])
    changes = int((np.diff(signs) != 0).sum())
    assert changes == 1
    assert h.max() == 1.0  # peak-normalized


def test_hrf_rejects_bad_dt():
    with pytest.raises(ValueError):
        canonical_hrf(0.0)


# --- design matrices ---------------------------------------------------------


def test_design_one_trial_no_motion_two_columns():
    d = build_design([(4.0, 2.0, 0)], n_scans=30, tr_s=2.0)
    assert d.matrix.shape == (30, 2)
    assert d.column_roles == ["trial:0", "intercept"]


def test_design_paper_scale_column_count():
    events = [(10.0 + 14.0 * i, 4.0, i % 8) for i in range(320)]
    n_scans = int(np.ceil((events[-1][0] + 4.0 + 32.0) / 2.16))
    rng = np.random.default_rng(0)
    motion = rng.normal(size=(n_scans, 6))
    d = build_design(events, n_scans, 2.16, motion)
    assert d.matrix.shape[1] == 327  # 320 trials + 6 motion + intercept


def test_design_zero_motion_columns_dropped():
    d = build_design([(2.0, 2.0, 0), (20.0, 2.0, 1)], n_scans=30, tr_s=2.0,
                     motion=np.zeros((30, 6)))
    assert d.matrix.shape[1] == 3


def test_trial_column_peaks_six_seconds_after_onset():
    tr = 2.0
    d = build_design([(10.0, 0.5, 0)], n_scans=40, tr_s=tr)
    col = d.matrix[:, 0]
    peak_s = np.argmax(col) * tr
    assert abs(peak_s - (10.0 + 6.0)) <= tr


def test_identical_onsets_rank_deficiency_reported():
    with pytest.raises(ValueError, match="rank deficient.*trial"):
        build_design([(4.0, 2.0, 0), (4.0, 2.0, 1)], n_scans=30, tr_s=2.0)


# --- beta estimation ---------------------------------------------------------


def planted_run(n_scans=120, n_trials=6, shape=(3, 3, 2), noise_sd=0.0, seed=0,
                tr=2.0):
    # task blocks scale with the run so regressor energy grows with scan
    # count (idle scans add no information about a trial's beta)
    rng = np.random.default_rng(seed)
    spacing = (n_scans * tr - 40.0) / n_trials
    events = [(4.0 + spacing * i, 0.5 * spacing, i % 4) for i in range(n_trials)]
    design = build_design(events, n_scans, tr)
    beta_true = rng.normal(size=(n_trials, int(np.prod(shape))))
    intercept = rng.normal(size=int(np.prod(shape)))
    X = design.matrix
    Y = X[:, :n_trials] @ beta_true + np.outer(X[:, -1], intercept)
    if noise_sd > 0:
        Y = Y + rng.normal(0.0, noise_sd, size=Y.shape)
    data = Y.T.reshape(shape + (n_scans,))
    return BoldRun(data=data, tr_s=tr, events=events), beta_true, design


def test_noise_free_recovery_is_exact():
    run, beta_true, _ = planted_run(noise_sd=0.0)
    est = estimate_betas(run)
    got = est.data.reshape(beta_true.shape)
    scale = np.max(np.abs(beta_true))
    assert np.max(np.abs(got - beta_true)) / scale < 1e-8


def test_residuals_orthogonal_to_design():
    run, _, design = planted_run(noise_sd=1.0, seed=3)
    X = design.matrix
    Y = run.data.reshape(-1, run.n_scans).T
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta
    scale = np.abs(X.T @ Y).max()
    assert np.abs(X.T @ resid).max() < 1e-6 * scale


def test_beta_error_shrinks_with_scan_count():
    errs = {n: [] for n in (64, 128, 256)}
    for seed in range(20):
        for n_scans in errs:
            run, beta_true, _ = planted_run(
                n_scans=n_scans, n_trials=5, noise_sd=2.0, seed=100 + seed
            )
            est = estimate_betas(run)
            got = est.data.reshape(beta_true.shape)
            errs[n_scans].append(np.sqrt(np.mean((got - beta_true) ** 2)))
    rmse = {n: float(np.mean(v)) for n, v in errs.items()}
    assert rmse[128] < rmse[64]
    assert rmse[256] < rmse[128]
    # ~1/sqrt(n): quadrupling the scans should roughly halve the error
    assert 1.5 < rmse[64] / rmse[256] < 2.8


def test_planted_class_amplitudes_order_recovered():
    # one active voxel whose response amplitude equals the class index
    n_trials, tr, n_scans = 12, 2.0, 130
    events = [(6.0 + 18.0 * i, 2.0, i % 4) for i in range(n_trials)]
    design = build_design(events, n_scans, tr)
    amp = np.array([float(c) for _, _, c in events])
    Y = design.matrix[:, :n_trials] @ amp[:, None]
    rng = np.random.default_rng(1)
    Y = Y + rng.normal(0.0, 0.05, size=Y.shape)
    run = BoldRun(data=Y.T.reshape(1, 1, 1, n_scans), tr_s=tr, events=events)
    est = estimate_betas(run)
    class_means = [est.data[est.labels == c].mean() for c in range(4)]
    assert np.all(np.diff(class_means) > 0)


def test_nonfinite_voxels_reported():
    run, _, _ = planted_run()
    run.data[0, 0, 0, 5] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        estimate_betas(run)


def test_event_outside_run_rejected():
    with pytest.raises(ValueError, match="outside run"):
        BoldRun(data=np.zeros((2, 2, 2, 10)), tr_s=2.0, events=[(19.0, 4.0, 0)])


# --- smoothing ---------------------------------------------------------------


def test_sigma_for_8mm_fwhm_at_2mm_voxels():
    from neurofuse.fmriprep import FWHM_TO_SIGMA

    assert abs(8.0 / 2.0 * FWHM_TO_SIGMA - 1.6986) < 1e-3


def test_smooth_zero_fwhm_is_identity():
    rng = np.random.default_rng(2)
    vol = rng.normal(size=(6, 6, 6))
    np.testing.assert_array_equal(smooth_volume(vol, 0.0), vol)


def test_smooth_preserves_constants():
    vol = np.full((8, 8, 8), 3.25)
    out = smooth_volume(vol, 8.0, (2.0, 2.0, 2.0))
    assert np.max(np.abs(out - 3.25)) < 1e-10


def test_smooth_commutes_with_interior_shift():
    rng = np.random.default_rng(3)
    vol = np.zeros((24, 24, 24))
    vol[8:16, 8:16, 8:16] = rng.normal(size=(8, 8, 8))
    a = smooth_volume(vol, 4.0, (2.0, 2.0, 2.0))
    shifted = np.roll(vol, 2, axis=0)
    b = smooth_volume(shifted, 4.0, (2.0, 2.0, 2.0))
    core = (slice(6, 18),) * 3
    np.testing.assert_allclose(np.roll(a, 2, axis=0)[core], b[core], atol=1e-10)


def test_smooth_rejects_negative_fwhm():
    with pytest.raises(ValueError):
        smooth_volume(np.zeros((4, 4, 4)), -1.0)


# --- masking -----------------------------------------------------------------


def test_mask_all_true_eight_columns():
    vols = BetaVolumes(data=np.arange(16.0).reshape(2, 2, 2, 2), labels=[0, 1])
    out = apply_mask(vols, np.ones((2, 2, 2), dtype=bool))
    assert out.data.shape == (2, 8)
    np.testing.assert_array_equal(out.data[0], np.arange(8.0))


def test_mask_columns_follow_scan_order():
    rng = np.random.default_rng(4)
    mask = rng.random((4, 5, 3)) > 0.5
    vols = BetaVolumes(data=rng.normal(size=(3,) + mask.shape), labels=[0, 1, 2])
    out = apply_mask(vols, mask)
    flat = vols.data.reshape(3, -1)
    np.testing.assert_array_equal(
        out.data, flat[:, np.flatnonzero(mask.ravel())].astype(np.float32)
    )


def test_unmask_round_trip():
    rng = np.random.default_rng(5)
    mask = rng.random((4, 4, 4)) > 0.4
    vols = BetaVolumes(data=rng.normal(size=(2, 4, 4, 4)), labels=[0, 1])
    masked = apply_mask(vols, mask)
    restored = unmask(masked.data, mask)
    np.testing.assert_allclose(restored[:, mask], vols.data[:, mask].astype(np.float32))
    assert np.all(restored[:, ~mask] == 0.0)


def test_empty_mask_rejected():
    vols = BetaVolumes(data=np.zeros((1, 2, 2, 2)), labels=[0])
    with pytest.raises(ValueError, match="no voxels"):
        apply_mask(vols, np.zeros((2, 2, 2), dtype=bool))


def test_smooth_betas_smooths_every_trial():
    rng = np.random.default_rng(6)
    vols = BetaVolumes(data=rng.normal(size=(3, 6, 6, 6)), labels=[0, 1, 2])
    out = smooth_betas(vols, 4.0, (2.0, 2.0, 2.0))
    for i in range(3):
        np.testing.assert_allclose(
            out.data[i], smooth_volume(vols.data[i], 4.0, (2.0, 2.0, 2.0))
        )
