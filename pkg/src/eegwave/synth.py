"""Synthetic 4-class EEG-like segments for desk-scale experiments.

Noise        broadband white noise, no transient
Artifacts    pink background plus a step, a slow drift or a clipped swing
Physiological  pink background plus a smooth asymmetric spike
Pathological   the same spike with a high-frequency oscillation on its peak
"""
from __future__ import annotations

import numpy as np
from scipy import signal as sps

from .data import CLASS_NAMES, Dataset
from .errors import ConfigurationError

MIN_LENGTH = 64
HFO_BAND = (200.0, 600.0)


def pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n)
    return (x - x.mean()) / (x.std() + 1e-12)


def _spike(n: int, fs: float, center: int, amp: float, rise_ms: float, fall_ms: float) -> np.ndarray:
    t = (np.arange(n) - center) / fs * 1000.0
    width = np.where(t < 0, rise_ms, fall_ms)
    return amp * np.exp(-0.5 * (t / width) ** 2)


def _hfo(n: int, fs: float, center: int, amp: float, freq: float, width_ms: float, phase: float) -> np.ndarray:
    t = (np.arange(n) - center) / fs
    env = np.exp(-0.5 * (t * 1000.0 / width_ms) ** 2)
    return amp * env * np.sin(2 * np.pi * freq * t + phase)


def _spike_params(rng, n, fs):
    center = int(rng.integers(int(0.25 * n), int(0.75 * n)))
    amp = rng.uniform(6.0, 10.0)
    rise = rng.uniform(3.0, 6.0)
    fall = rng.uniform(8.0, 15.0)
    return center, amp, rise, fall


def _hfo_freq(fs: float, rng) -> float:
    lo, hi = HFO_BAND
    hi = min(hi, 0.4 * fs)
    lo = min(lo, 0.5 * hi)
    return rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo))


def gen_noise(rng, n, fs):
    return rng.standard_normal(n)


def gen_physiological(rng, n, fs):
    center, amp, rise, fall = _spike_params(rng, n, fs)
    return pink_noise(rng, n) + _spike(n, fs, center, amp, rise, fall)


def gen_pathological(rng, n, fs):
    center, amp, rise, fall = _spike_params(rng, n, fs)
    x = pink_noise(rng, n) + _spike(n, fs, center, amp, rise, fall)
    hfo_amp = amp * rng.uniform(0.5, 0.8)
    return x + _hfo(n, fs, center, hfo_amp, _hfo_freq(fs, rng), rng.uniform(10.0, 20.0), rng.uniform(0, 2 * np.pi))


def gen_artifact(rng, n, fs):
    x = pink_noise(rng, n)
    kind = rng.integers(3)
    if kind == 0:  # step
        at = int(rng.integers(int(0.2 * n), int(0.8 * n)))
        x[at:] += rng.choice([-1, 1]) * rng.uniform(4.0, 8.0)
    elif kind == 1:  # drift
        x += rng.choice([-1, 1]) * rng.uniform(6.0, 12.0) * np.linspace(0, 1, n) ** rng.uniform(1.0, 2.0)
    else:  # amplifier clipping of a large slow swing
        t = np.arange(n) / n
        swing = rng.uniform(6.0, 10.0) * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
        lim = rng.uniform(2.0, 3.5)
        x = np.clip(x + swing, -lim, lim)
    return x


GENERATORS = (gen_noise, gen_artifact, gen_physiological, gen_pathological)


def synth_generate(n_per_class: int, length: int = 1500, sample_rate: float = 5000.0, seed: int = 0) -> Dataset:
    """Balanced synthetic dataset, class-interleaved keys, deterministic under ``seed``."""
    if length < MIN_LENGTH:
        raise ConfigurationError(f"length must be >= {MIN_LENGTH}, got {length}")
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    if sample_rate <= 0:
        raise ConfigurationError("sample_rate must be positive")
    rng = np.random.default_rng(seed)
    signals = np.empty((4 * n_per_class, length), np.float32)
    labels = np.empty(4 * n_per_class, np.uint8)
    keys = []
    i = 0
    for k in range(n_per_class):
        for c, gen in enumerate(GENERATORS):
            signals[i] = gen(rng, length, sample_rate)
            labels[i] = c
            keys.append(f"syn{k:06d}_{c}")
            i += 1
    return Dataset(signals, labels, keys, CLASS_NAMES)


def bandpass(x, sample_rate: float, band=HFO_BAND, order: int = 4) -> np.ndarray:
    lo, hi = band
    hi = min(hi, 0.45 * sample_rate)
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")
    return sps.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=-1)


def peak_hf_energy(x, sample_rate: float, half_window_ms: float = 20.0) -> float:
    """Band-limited energy in a window around the largest positive excursion."""
    x = np.asarray(x, dtype=np.float64)
    hf = bandpass(x, sample_rate)
    center = int(np.argmax(x))
    h = max(1, int(half_window_ms * sample_rate / 1000.0))
    seg = hf[max(0, center - h):center + h + 1]
    return float(np.sum(seg * seg))


def band_features(x, sample_rate: float) -> dict[str, float]:
    """Features for the reference threshold classifier on one signal."""
    x = np.asarray(x, dtype=np.float64)
    z = (x - x.mean()) / (x.std() + 1e-8)
    spec = np.abs(np.fft.rfft(z)) ** 2
    freqs = np.fft.rfftfreq(len(z), 1.0 / sample_rate)
    hf_frac = float(spec[freqs > 150.0].sum() / spec.sum())
    return {
        "hf_fraction": hf_frac,
        "peak_z": float(z.max()),
        "peak_hf": peak_hf_energy(z, sample_rate),
    }


def threshold_classify(x, sample_rate: float) -> int:
    """Hand-set band-energy rules; the separability reference for the generator."""
    f = band_features(x, sample_rate)
    if f["hf_fraction"] > 0.6:
        return 0
    if f["peak_z"] < 3.4:
        return 1
    if f["peak_hf"] > 30.0:
        return 3
    return 2
