import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegwave.errors import ConfigurationError
from eegwave.synth import (GENERATORS, gen_pathological, gen_physiological, peak_hf_energy, pink_noise,
                           synth_generate, threshold_classify)


def test_counts_and_keys():
    ds = synth_generate(100, 256, 5000, seed=0)
    assert len(ds) == 400
    assert ds.class_counts().tolist() == [100, 100, 100, 100]
    assert len(set(ds.keys)) == 400
    assert ds.signals.dtype == np.float32 and ds.signals.shape == (400, 256)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 5), st.integers(64, 300), st.integers(0, 2**31))
def test_same_seed_same_bytes(n, length, seed):
    a = synth_generate(n, length, 5000, seed)
    b = synth_generate(n, length, 5000, seed)
    assert a.signals.tobytes() == b.signals.tobytes() and a.keys == b.keys


def test_seeds_differ():
    assert not np.array_equal(synth_generate(2, 128, seed=0).signals, synth_generate(2, 128, seed=1).signals)


def test_rejects_short_length():
    with pytest.raises(ConfigurationError):
        synth_generate(3, 16)
    with pytest.raises(ConfigurationError):
        synth_generate(0, 128)


def test_pink_noise_spectrum_slopes_down():
    x = pink_noise(np.random.default_rng(0), 2**14)
    assert abs(x.mean()) < 1e-9 and x.std() == pytest.approx(1.0)
    p = np.abs(np.fft.rfft(x)) ** 2
    low, high = p[1:100].mean(), p[-1000:].mean()
    assert low > 50 * high


def test_hfo_energy_ratio():
    """Pathological high-band energy at the peak exceeds the physiological one by at least 3x."""
    fs, n = 5000.0, 1500
    ratios = []
    for s in range(40):
        # same seed stream for both so the spike and background line up
        phys = gen_physiological(np.random.default_rng(s), n, fs)
        path = gen_pathological(np.random.default_rng(s), n, fs)
        ratios.append(peak_hf_energy(path, fs) / peak_hf_energy(phys, fs))
    assert min(ratios) >= 3.0


@pytest.mark.parametrize("length", [1500, 5000])
def test_threshold_classifier_separates_classes(length):
    ds = synth_generate(100, length, 5000, seed=21)
    pred = np.array([threshold_classify(x, 5000) for x in ds.signals])
    assert (pred == ds.labels).mean() >= 0.95


def test_generator_order_matches_class_names():
    assert [g.__name__ for g in GENERATORS] == ["gen_noise", "gen_artifact", "gen_physiological", "gen_pathological"]
