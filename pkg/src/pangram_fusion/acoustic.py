"""Classical acoustic features from 16 kHz mono clips.

The pipeline is fixed for reproducibility: 40 ms pitch frames with 10 ms
hop and a 0.45 voicing threshold over 60-400 Hz; 25 ms / 10 ms MFCC
windows with 26 mel filters to 8 kHz; Welch band powers over
0-0.5/0.5-1/1-2/2-8 kHz.  All functions are pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.io.wavfile
import scipy.signal

SAMPLE_RATE = 16000
PITCH_FRAME_S = 0.040
PITCH_HOP_S = 0.010
PITCH_FMIN = 60.0
PITCH_FMAX = 400.0
VOICING_THRESHOLD = 0.45
MFCC_WINDOW_S = 0.025
MFCC_HOP_S = 0.010
N_MEL_FILTERS = 26
N_MFCC = 13
LOG_FLOOR = 1e-10
BAND_EDGES = (0.0, 500.0, 1000.0, 2000.0, 8000.0)
PPE_BINS = 30
PPE_RANGE = 1.5

ACOUSTIC_COLUMNS = (
    [f"cepm{i}" for i in range(13)]
    + [f"cepj{i}" for i in range(13)]
    + ["f0m", "f0j", "f0jr", "ash", "ashr", "ppe", "alpha", "Hnorm"]
    + [f"relbandpower{i}" for i in range(4)]
)


class AudioError(ValueError):
    """Raised for unusable audio input."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise AudioError("clip must be mono (1-D samples)")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioError(
                f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        if not np.all(np.isfinite(samples)):
            raise AudioError("clip contains non-finite samples")
        if samples.size and np.abs(samples).max() > 1.0 + 1e-6:
            raise AudioError("samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_wav(path) -> AudioClip:
    """Read a RIFF WAV: PCM 16-bit or 32-bit float, mono, 16 kHz.

    Other rates or formats raise; there is no silent resampling.
    """
    rate, data = scipy.io.wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise AudioError(f"{path}: sample rate {rate}, expected {SAMPLE_RATE}")
    if data.ndim != 1:
        raise AudioError(f"{path}: expected mono, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise AudioError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(samples=samples, sample_rate=rate)


def save_wav(clip: AudioClip, path) -> None:
    data = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, clip.sample_rate, data)


@dataclass(frozen=True)
class PitchTrack:
    """Frame times plus f0 per frame; NaN marks unvoiced frames."""

    times: np.ndarray
    f0: np.ndarray

    @property
    def voiced(self) -> np.ndarray:
        return ~np.isnan(self.f0)

    @property
    def voiced_f0(self) -> np.ndarray:
        return self.f0[self.voiced]


def pitch_track(clip: AudioClip) -> PitchTrack:
    """Normalized-autocorrelation pitch tracking.

    40 ms frames / 10 ms hop; the lag with the highest normalized
    autocorrelation in [60, 400] Hz wins, refined by parabolic
    interpolation; frames whose peak correlation is below 0.45 (or with
    zero energy) are unvoiced.
    """
    x = clip.samples
    n_frame = int(round(PITCH_FRAME_S * clip.sample_rate))
    hop = int(round(PITCH_HOP_S * clip.sample_rate))
    if len(x) < n_frame:
        raise AudioError(
            f"clip too short for pitch analysis: {len(x)} < {n_frame} samples"
        )
    lag_min = int(np.ceil(clip.sample_rate / PITCH_FMAX))
    lag_max = int(np.floor(clip.sample_rate / PITCH_FMIN))

    times = []
    f0s = []
    fft_len = scipy.fft.next_fast_len(2 * n_frame)
    for start in range(0, len(x) - n_frame + 1, hop):
        frame = x[start : start + n_frame]
        frame = frame - frame.mean()
        times.append((start + n_frame / 2) / clip.sample_rate)

        energy = np.dot(frame, frame)
        if energy == 0.0:
            f0s.append(np.nan)
            continue
        spec = scipy.fft.rfft(frame, fft_len)
        raw = scipy.fft.irfft(spec * np.conj(spec), fft_len)[: lag_max + 2]
        sq = np.concatenate([[0.0], np.cumsum(frame**2)])
        lags = np.arange(lag_min, lag_max + 1)
        head = sq[n_frame - lags]              # energy of x[0 : N-lag]
        tail = sq[n_frame] - sq[lags]          # energy of x[lag : N]
        denom = np.sqrt(head * tail)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(denom > 0, raw[lag_min : lag_max + 1] / denom, 0.0)
        peak = float(r.max())
        if peak < VOICING_THRESHOLD:
            f0s.append(np.nan)
            continue
        # octave guard: among local maxima within a small margin of the
        # peak, take the shortest lag, so lag multiples of a periodic
        # signal do not halve the pitch
        interior = np.zeros(len(r), dtype=bool)
        interior[1:-1] = (r[1:-1] >= r[:-2]) & (r[1:-1] >= r[2:])
        interior[0] = r[0] >= r[1]
        interior[-1] = r[-1] >= r[-2]
        candidates = np.flatnonzero(interior & (r >= peak - 0.01))
        best = int(candidates[0]) if len(candidates) else int(np.argmax(r))
        lag = lags[best]
        # parabolic refinement on the raw autocorrelation around the peak
        if 0 < best < len(r) - 1:
            r0, r1, r2 = r[best - 1], r[best], r[best + 1]
            denom2 = r0 - 2 * r1 + r2
            if denom2 < 0:
                delta = 0.5 * (r0 - r2) / denom2
                lag = lag + float(np.clip(delta, -0.5, 0.5))
        f0s.append(clip.sample_rate / lag)
    return PitchTrack(times=np.asarray(times), f0=np.asarray(f0s, dtype=float))


def _voiced_runs(pitch: PitchTrack):
    voiced = pitch.voiced
    runs = []
    i = 0
    while i < len(voiced):
        if voiced[i]:
            j = i
            while j + 1 < len(voiced) and voiced[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def _cycle_peaks(x: np.ndarray, sample_rate: int, pitch: PitchTrack, run):
    """Glottal-cycle peak positions (samples) within one voiced run."""
    first, last = run
    n_frame = int(round(PITCH_FRAME_S * sample_rate))
    hop = int(round(PITCH_HOP_S * sample_rate))
    start = first * hop
    end = min(last * hop + n_frame, len(x))
    seg = np.abs(x[start:end])
    if not seg.any():
        return []

    def period_at(pos: int) -> float:
        t = pos / sample_rate
        idx = int(np.clip(round((t - pitch.times[0]) / PITCH_HOP_S), 0, len(pitch.f0) - 1))
        f0 = pitch.f0[idx]
        if np.isnan(f0):
            voiced_idx = np.flatnonzero(pitch.voiced)
            nearest = voiced_idx[np.argmin(np.abs(voiced_idx - idx))]
            f0 = pitch.f0[nearest]
        return sample_rate / f0

    seed = start + int(np.argmax(seg))
    peaks = [seed]
    # search windows of 0.7..1.3 periods exclude the opposite-polarity
    # extremum at half a period and the double-period peak
    pos = seed
    while True:
        period = period_at(pos)
        lo = pos + int(round(0.7 * period))
        hi = pos + int(round(1.3 * period)) + 1
        if lo >= end:
            break
        window = np.abs(x[lo : min(hi, end)])
        if window.size == 0 or not window.any():
            break
        pos = lo + int(np.argmax(window))
        peaks.append(pos)
    pos = seed
    while True:
        period = period_at(pos)
        lo = pos - int(round(1.3 * period))
        hi = pos - int(round(0.7 * period)) + 1
        if hi <= start:
            break
        window = np.abs(x[max(lo, start) : hi])
        if window.size == 0 or not window.any():
            break
        pos = max(lo, start) + int(np.argmax(window))
        peaks.insert(0, pos)
    return peaks


def jitter_shimmer(clip: AudioClip, pitch: PitchTrack):
    """Cycle-to-cycle period and amplitude variation.

    Returns (f0m, f0j, f0jr, ash, ashr): mean voiced F0 (Hz), absolute
    jitter (s), relative jitter, shimmer (amplitude units), relative
    shimmer.
    """
    if not pitch.voiced.any():
        raise AudioError("no voiced segment")
    periods = []
    amplitudes = []
    for run in _voiced_runs(pitch):
        peaks = _cycle_peaks(clip.samples, clip.sample_rate, pitch, run)
        if len(peaks) >= 2:
            diffs = np.diff(peaks) / clip.sample_rate
            periods.extend(diffs.tolist())
            amplitudes.extend(np.abs(clip.samples[peaks]).tolist())
    if len(periods) < 2:
        raise AudioError("too few glottal cycles for jitter/shimmer")
    periods = np.asarray(periods)
    amplitudes = np.asarray(amplitudes)
    f0m = float(np.mean(pitch.voiced_f0))
    f0j = float(np.mean(np.abs(np.diff(periods))))
    f0jr = float(f0j / np.mean(periods))
    ash = float(np.mean(np.abs(np.diff(amplitudes))))
    ashr = float(ash / np.mean(amplitudes))
    return f0m, f0j, f0jr, ash, ashr


def ppe(pitch: PitchTrack) -> float:
    """Pitch period entropy: Shannon entropy (nats) of whitened semitone
    pitch deviations, histogrammed into 30 bins over +-1.5 semitones."""
    f0 = pitch.voiced_f0
    if len(f0) < 10:
        raise AudioError(f"need >= 10 voiced frames for PPE, got {len(f0)}")
    semitones = 12.0 * np.log2(f0 / np.median(f0))
    design = np.column_stack([semitones[1:-1], semitones[:-2]])
    target = semitones[2:]
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coeffs
    clipped = np.clip(residuals, -PPE_RANGE, PPE_RANGE)
    counts, _ = np.histogram(clipped, bins=PPE_BINS, range=(-PPE_RANGE, PPE_RANGE))
    probs = counts / counts.sum()
    nonzero = probs[probs > 0]
    return float(-np.sum(nonzero * np.log(nonzero)))


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int,
                   f_lo: float = 0.0, f_hi: float = 8000.0) -> np.ndarray:
    """Triangular mel filters as a (n_filters, n_fft//2 + 1) matrix."""
    mel_points = np.linspace(_mel(f_lo), _mel(f_hi), n_filters + 2)
    hz_points = _mel_inv(mel_points)
    bins = np.floor((n_fft + 1) * hz_points / sample_rate).astype(int)
    bank = np.zeros((n_filters, n_fft // 2 + 1))
    for i in range(n_filters):
        left, center, right = bins[i], bins[i + 1], bins[i + 2]
        for k in range(left, center):
            if center > left:
                bank[i, k] = (k - left) / (center - left)
        for k in range(center, right):
            if right > center:
                bank[i, k] = (right - k) / (right - center)
    return bank


def mfcc_frames(clip: AudioClip) -> np.ndarray:
    """Per-frame MFCCs, shape (n_frames, 13)."""
    x = clip.samples
    n_win = int(round(MFCC_WINDOW_S * clip.sample_rate))
    hop = int(round(MFCC_HOP_S * clip.sample_rate))
    if len(x) < n_win:
        raise AudioError(f"clip too short for MFCC: {len(x)} < {n_win} samples")
    n_fft = 512
    window = np.hanning(n_win)
    bank = mel_filterbank(N_MEL_FILTERS, n_fft, clip.sample_rate)
    frames = []
    for start in range(0, len(x) - n_win + 1, hop):
        frame = x[start : start + n_win] * window
        power = np.abs(scipy.fft.rfft(frame, n_fft)) ** 2
        energies = bank @ power
        log_e = np.log(np.maximum(energies, LOG_FLOOR))
        coeffs = scipy.fft.dct(log_e, type=2, norm="ortho")[:N_MFCC]
        frames.append(coeffs)
    return np.asarray(frames)


def mfcc_stats(clip: AudioClip):
    """Mean MFCCs and their mean absolute frame-to-frame deltas.

    Returns (cepm, cepj), each length 13.
    """
    frames = mfcc_frames(clip)
    cepm = frames.mean(axis=0)
    if len(frames) > 1:
        cepj = np.mean(np.abs(np.diff(frames, axis=0)), axis=0)
    else:
        cepj = np.zeros(N_MFCC)
    return cepm, cepj


def band_powers_alpha_hnorm(clip: AudioClip, pitch: PitchTrack):
    """Welch-periodogram band fractions, alpha ratio, and harmonic ratio.

    Returns (relbandpower array of 4, alpha dB, Hnorm dB).
    """
    x = clip.samples
    nperseg = min(1024, len(x))
    freqs, psd = scipy.signal.welch(
        x, fs=clip.sample_rate, window="hann", nperseg=nperseg,
        noverlap=nperseg // 2
    )
    total = psd.sum()
    if total <= 0.0:
        raise AudioError("zero total power")

    rel = np.empty(4)
    for b in range(4):
        lo, hi = BAND_EDGES[b], BAND_EDGES[b + 1]
        if b < 3:
            mask = (freqs >= lo) & (freqs < hi)
        else:
            mask = (freqs >= lo) & (freqs <= hi)
        rel[b] = psd[mask].sum() / total

    tiny = 1e-300
    high = psd[(freqs >= 1000.0) & (freqs <= 5000.0)].sum()
    low = psd[(freqs >= 50.0) & (freqs < 1000.0)].sum()
    alpha = 10.0 * math.log10((high + tiny) / (low + tiny))

    if not pitch.voiced.any():
        raise AudioError("no voiced segment")
    f0m = float(np.mean(pitch.voiced_f0))
    half_width = f0m / 4.0
    harmonic = np.zeros(len(freqs), dtype=bool)
    k = 1
    while k * f0m <= 8000.0:
        harmonic |= np.abs(freqs - k * f0m) <= half_width
        k += 1
    periodic = psd[harmonic].sum()
    aperiodic = total - periodic
    hnorm = 10.0 * math.log10((periodic + tiny) / (aperiodic + tiny))
    return rel, alpha, hnorm


def assemble_acoustic_vector(clip: AudioClip) -> dict[str, float]:
    """All 38 named features in the documented column order.

    Column names and order are given by ACOUSTIC_COLUMNS.
    """
    pitch = pitch_track(clip)
    cepm, cepj = mfcc_stats(clip)
    f0m, f0j, f0jr, ash, ashr = jitter_shimmer(clip, pitch)
    entropy = ppe(pitch)
    rel, alpha, hnorm = band_powers_alpha_hnorm(clip, pitch)

    values: dict[str, float] = {}
    for i in range(13):
        values[f"cepm{i}"] = float(cepm[i])
    for i in range(13):
        values[f"cepj{i}"] = float(cepj[i])
    values.update(
        f0m=f0m, f0j=f0j, f0jr=f0jr, ash=ash, ashr=ashr,
        ppe=entropy, alpha=alpha, Hnorm=hnorm,
    )
    for i in range(4):
        values[f"relbandpower{i}"] = float(rel[i])
    return {name: values[name] for name in ACOUSTIC_COLUMNS}


def acoustic_vector_array(values: dict[str, float]) -> np.ndarray:
    return np.array([values[name] for name in ACOUSTIC_COLUMNS], dtype=float)


# ---------------------------------------------------------------------------
# feature relevance
# ---------------------------------------------------------------------------

def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    sv = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(group1: np.ndarray, group2: np.ndarray) -> tuple[float, float]:
    """Two-sided Mann-Whitney test of group1 vs group2.

    Exact enumeration of rank assignments for pooled n <= 20, otherwise
    the tie-corrected normal approximation with continuity correction.
    Returns (U for group1, two-sided p).
    """
    group1 = np.asarray(group1, dtype=float)
    group2 = np.asarray(group2, dtype=float)
    n1, n2 = len(group1), len(group2)
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be non-empty")
    pooled = np.concatenate([group1, group2])
    ranks = _midranks(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    mean = n1 * n2 / 2.0

    if n <= 20:
        import itertools

        observed_dev = abs(u1 - mean)
        count = 0
        total = 0
        base = n1 * (n1 + 1) / 2.0
        for combo in itertools.combinations(range(n), n1):
            u = ranks[list(combo)].sum() - base
            total += 1
            if abs(u - mean) >= observed_dev - 1e-12:
                count += 1
        return u1, count / total

    # tie-corrected normal approximation
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1))
    sigma_sq = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if sigma_sq <= 0:
        return u1, 1.0
    z = (abs(u1 - mean) - 0.5) / math.sqrt(sigma_sq)
    if z < 0:
        z = 0.0
    p = math.erfc(z / math.sqrt(2.0))
    return u1, min(p, 1.0)


def mannwhitney_relevance(features, labels) -> list[tuple[str, float, float]]:
    """Per-feature (name, U, two-sided p) for PD vs control groups."""
    from .dataset import FeatureMatrix

    if isinstance(features, FeatureMatrix):
        names = list(features.column_names)
        matrix = np.stack([features.rows[s] for s in features.rows])
    else:
        matrix = np.asarray(features, dtype=float)
        names = [f"col{j}" for j in range(matrix.shape[1])]
    labels = np.asarray(labels).astype(bool)
    if len(labels) != len(matrix):
        raise ValueError("labels must align with feature rows")
    if labels.all() or not labels.any():
        raise ValueError("both groups must be non-empty")
    out = []
    for j, name in enumerate(names):
        u, p = mann_whitney_u(matrix[labels, j], matrix[~labels, j])
        out.append((name, u, p))
    return out
