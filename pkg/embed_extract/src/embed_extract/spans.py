"""Pangram clip assembly from keyword timestamps.

A transcriber (external) marks occurrences of the pangram keywords; the
clip spans from 0.5 s before the first keyword to 0.5 s after the last,
clamped to the recording, and is resampled to 16 kHz mono.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile
import scipy.signal

KEYWORDS = ("quick", "brown", "fox", "dog", "forest")
TARGET_RATE = 16000
CONTEXT_S = 0.5


class SpanError(ValueError):
    pass


@dataclass(frozen=True)
class KeywordSpan:
    keyword: str
    start: float
    end: float

    def __post_init__(self):
        if self.keyword not in KEYWORDS:
            raise SpanError(f"unknown keyword {self.keyword!r}")
        if not (0.0 <= self.start < self.end):
            raise SpanError(
                f"need 0 <= start < end, got [{self.start}, {self.end}]"
            )


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = TARGET_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def to_mono(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        return samples.mean(axis=1)
    if samples.ndim != 1:
        raise SpanError(f"unsupported audio shape {samples.shape}")
    return samples


def resample_to_target(samples: np.ndarray, rate: int) -> np.ndarray:
    if rate == TARGET_RATE:
        return np.asarray(samples, dtype=float)
    g = np.gcd(int(rate), TARGET_RATE)
    return scipy.signal.resample_poly(samples, TARGET_RATE // g, rate // g)


def clip_window(spans: list[KeywordSpan], duration: float) -> tuple[float, float]:
    """[first keyword start - 0.5 s, last keyword end + 0.5 s], clamped."""
    if not spans:
        raise SpanError("pangram not found")
    for span in spans:
        if span.end > duration + 1e-9:
            raise SpanError(
                f"span [{span.start}, {span.end}] exceeds duration {duration:.3f}"
            )
    start = min(s.start for s in spans) - CONTEXT_S
    end = max(s.end for s in spans) + CONTEXT_S
    return max(0.0, start), min(duration, end)


def clip_pangram(samples: np.ndarray, rate: int,
                 spans: list[KeywordSpan]) -> AudioClip:
    """Cut the pangram region and return it as 16 kHz mono."""
    mono = to_mono(samples)
    duration = len(mono) / rate
    start, end = clip_window(spans, duration)
    lo = int(round(start * rate))
    hi = int(round(end * rate))
    cut = mono[lo:hi]
    out = resample_to_target(cut, rate)
    peak = np.abs(out).max()
    if peak > 1.0:
        out = out / peak
    return AudioClip(samples=out, sample_rate=TARGET_RATE)


def load_wav_any(path) -> tuple[np.ndarray, int]:
    """Read a WAV at any rate/width and return float samples in [-1, 1]."""
    rate, data = scipy.io.wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(float)
    elif data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    else:
        raise SpanError(f"{path}: unsupported sample format {data.dtype}")
    return samples, int(rate)
