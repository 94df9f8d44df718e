import numpy as np
import pytest

from neurofuse import synthgen


def tiny_profile(**overrides):
    """Small, fast subject profile for unit tests (direct fMRI mode)."""
    base = dict(
        n_per_class=6,
        eeg_sep=0.0,
        fmri_sep=0.0,
        noise_sd=1.0,
        latent_dim=4,
        n_channels=8,
        n_samples=64,
        fs=128.0,
        n_voxels_info=20,
        mask_shape=(8, 8, 8),
        fmri_mode="direct",
        seed=0,
    )
    base.update(overrides)
    return synthgen.SubjectProfile(**base)


@pytest.fixture
def tiny_subject():
    return synthgen.generate_subject(tiny_profile(seed=11))


def balanced_labels(n_per_class, n_classes=8, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    rng.shuffle(labels)
    return labels
