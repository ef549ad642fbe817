"""Acoustic sounding modem: band modulation, time-delayed dual-sequence
assembly, I/Q passband synthesis, demodulation, and correlation-based
channel estimation.

Transmit chain
--------------
Two Kasami small-set members are band-modulated (spectral zero-padding
interpolation from N = 2^degree - 1 chips to N_s samples), the second is
delayed by half a frame (N_s/2 samples, zero-prefixed), and the pair is
sent as the real passband signal

    s(t) = s1(t) cos(2 pi fc t) - s2(t) sin(2 pi fc t)

i.e. the complex envelope s1 + j*s2 through an I/Q modulator.  Carrier
phase is computed from the absolute sample index, so it is continuous
across frame boundaries by construction.

Receive chain
-------------
The recording is mixed down by the same carrier, low-pass filtered
(linear-phase FIR, group delay compensated exactly), and each branch is
recovered by per-frame circular correlation against its band-modulated
template.  Because every branch tiles one frame periodically, circular
correlation is exact in steady state regardless of frame phase; a frame
phase offset only circularly shifts the channel taps, which leaves
per-subcarrier power untouched.

Interleaving the two branch estimates doubles the channel measurement
rate from f_s/N_s to 2 f_s/N_s (93.75 Hz -> 187.5 Hz at defaults).

Conventions (fixed, relied on by tests)
---------------------------------------
- FFTs use the numpy default (forward unscaled, inverse 1/N).  Band
  modulation therefore scales energy by N/N_s exactly.
- PCM full scale: 1.0 maps to 2^(bits-1) - 1; values beyond full scale
  hard-clip and are counted.
- Demodulation returns the complex envelope (factor 2 applied after
  mixing), so an ideal loopback reproduces the assembled envelope.
- Branch 2 is transmitted in quadrature; the decoder multiplies its CIR
  by -1j so both branches estimate the same channel with the same sign.
- decode() equalizes each branch by its known template power spectrum,
  so CSI rows estimate the true channel frequency response per
  subcarrier and the two branches agree bin by bin on a static channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import firwin, lfilter

from .exceptions import ConfigError
from .sequences import PnSequence, generate_kasami

DEFAULT_SOUND_SPEED = 343.0


@dataclass(frozen=True)
class ModemConfig:
    audio_sample_rate: float = 48_000.0
    frame_length: int = 512
    carrier_frequency: float = 20_250.0
    sequence_degree: int = 6
    amplitude: float = 2.5
    lpf_cutoff: float = 3_500.0
    lpf_taps: int = 255
    pcm_bits: int = 16

    def __post_init__(self):
        n = self.frame_length
        if n <= 0 or (n & (n - 1)) != 0:
            raise ConfigError(f"frame_length must be a power of two, got {n}")
        if self.sequence_length >= n:
            raise ConfigError("sequence longer than frame: "
                              f"2^{self.sequence_degree}-1 >= {n}")
        nyquist = self.audio_sample_rate / 2.0
        if self.carrier_frequency + self.occupied_bandwidth / 2.0 > nyquist:
            raise ConfigError("carrier + bandwidth/2 exceeds Nyquist; "
                              "signal would alias")
        if self.lpf_taps % 2 == 0:
            raise ConfigError("lpf_taps must be odd for integer group delay")
        if self.pcm_bits < 2 or self.pcm_bits > 32:
            raise ConfigError("pcm_bits out of range")

    @property
    def sequence_length(self) -> int:
        return 2**self.sequence_degree - 1

    @property
    def occupied_bandwidth(self) -> float:
        return self.sequence_length / self.frame_length * self.audio_sample_rate

    @property
    def frame_duration(self) -> float:
        return self.frame_length / self.audio_sample_rate

    @property
    def csi_rate_single(self) -> float:
        return self.audio_sample_rate / self.frame_length

    @property
    def csi_rate_interleaved(self) -> float:
        return 2.0 * self.audio_sample_rate / self.frame_length

    @property
    def occupied_bins(self) -> np.ndarray:
        """Signed baseband FFT bin indices of the occupied subcarriers, ascending."""
        n = self.sequence_length
        half = (n + 1) // 2
        return np.arange(-(n - half), half)

    @property
    def subcarrier_frequencies(self) -> np.ndarray:
        """Absolute subcarrier frequencies in Hz, ascending."""
        return (self.carrier_frequency
                + self.occupied_bins * self.audio_sample_rate / self.frame_length)

    def to_dict(self) -> dict:
        return {
            "audio_sample_rate": self.audio_sample_rate,
            "frame_length": self.frame_length,
            "carrier_frequency": self.carrier_frequency,
            "sequence_degree": self.sequence_degree,
            "amplitude": self.amplitude,
            "lpf_cutoff": self.lpf_cutoff,
            "lpf_taps": self.lpf_taps,
            "pcm_bits": self.pcm_bits,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModemConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class BasebandFrame:
    """One band-modulated frame: N chips interpolated to N_s samples."""

    samples: np.ndarray          # complex128, length frame_length
    source_sequence: PnSequence


@dataclass
class TxWaveform:
    pcm: np.ndarray              # int PCM samples
    sample_rate: float
    metadata: dict


@dataclass
class CirFrame:
    taps: np.ndarray             # complex128, length frame_length
    frame_index: int
    branch: int                  # 1 or 2


@dataclass
class CsiSeries:
    """Complex channel frequency response, time x subcarrier, uniform rate.

    Timestamps are carried as audio-domain sample indices:
    frame i starts at sample start_sample + i * step_samples.
    """

    frames: np.ndarray                   # complex128 (n_frames, n_subcarriers)
    subcarrier_frequencies: np.ndarray   # Hz, ascending
    sample_rate: float                   # audio samples per second
    start_sample: int = 0
    step_samples: int = 512
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        self.subcarrier_frequencies = np.asarray(self.subcarrier_frequencies,
                                                 dtype=float)
        if self.frames.ndim != 2:
            raise ValueError("frames must be 2-D (time x subcarrier)")
        if self.frames.shape[1] != len(self.subcarrier_frequencies):
            raise ValueError("subcarrier grid does not match frame width")
        if self.step_samples <= 0:
            raise ValueError("step_samples must be positive")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.frames.shape[1]

    @property
    def csi_rate(self) -> float:
        return self.sample_rate / self.step_samples

    @property
    def duration(self) -> float:
        return self.n_frames / self.csi_rate

    @property
    def timestamps(self) -> np.ndarray:
        idx = self.start_sample + self.step_samples * np.arange(self.n_frames)
        return idx / self.sample_rate


def band_modulate(seq: PnSequence, cfg: ModemConfig) -> BasebandFrame:
    """Interpolate the chip spectrum into an N_s-sample baseband frame.

    The N-point FFT of the chips is split at the positive/negative
    frequency boundary, zeros are inserted between the halves to reach
    N_s bins, and the result is inverse-transformed.  Occupied bandwidth
    is N/N_s * f_s; output energy is input energy * N/N_s under the
    numpy inverse-FFT convention.
    """
    n = len(seq)
    ns = cfg.frame_length
    if n >= ns:
        raise ValueError(f"sequence length {n} must be below frame length {ns}")
    spectrum = np.fft.fft(seq.chips.astype(float))
    half = (n + 1) // 2
    padded = np.zeros(ns, dtype=np.complex128)
    padded[:half] = spectrum[:half]
    padded[ns - (n - half):] = spectrum[half:]
    return BasebandFrame(samples=np.fft.ifft(padded), source_sequence=seq)


def _carrier(cfg: ModemConfig, n0: int, count: int) -> np.ndarray:
    n = np.arange(n0, n0 + count, dtype=float)
    return np.exp(2j * math.pi * cfg.carrier_frequency * n / cfg.audio_sample_rate)


def quantize_pcm(x: np.ndarray, bits: int) -> tuple[np.ndarray, int]:
    """Hard-clip to [-1, 1], count clipped samples, and scale to integers."""
    full_scale = 2 ** (bits - 1) - 1
    clipped = int(np.count_nonzero(np.abs(x) > 1.0))
    y = np.clip(x, -1.0, 1.0)
    dtype = np.int16 if bits <= 16 else np.int32
    return np.round(y * full_scale).astype(dtype), clipped


def pcm_to_float(pcm: np.ndarray, bits: int) -> np.ndarray:
    return pcm.astype(float) / (2 ** (bits - 1) - 1)


def otdm_assemble(b1: BasebandFrame, b2: BasebandFrame, cfg: ModemConfig,
                  frames: int) -> TxWaveform:
    """Tile both branches, delay branch 2 by half a frame, emit passband PCM.

    Branch 2's first half-frame is zero-prefixed and its final half-frame
    is truncated, so the output is exactly frames * N_s samples; the
    decoder discards branch 2's final partial frame.
    """
    s1 = b1.source_sequence
    s2 = b2.source_sequence
    if s1.degree == s2.degree and s1.index == s2.index:
        raise ValueError("branches must use distinct sequences; identical "
                         "sequences cannot be separated")
    if frames < 1:
        raise ValueError("frames must be >= 1")
    ns = cfg.frame_length
    total = frames * ns
    e1 = np.tile(b1.samples.real, frames)
    e2 = np.zeros(total)
    tiled2 = np.tile(b2.samples.real, frames)
    e2[ns // 2:] = tiled2[:total - ns // 2]
    envelope = cfg.amplitude * (e1 + 1j * e2)
    passband = (envelope * _carrier(cfg, 0, total)).real
    pcm, clipped = quantize_pcm(passband, cfg.pcm_bits)
    metadata = {
        "config": cfg.to_dict(),
        "sequence_indices": [s1.index, s2.index],
        "sequence_degree": s1.degree,
        "delay_samples": ns // 2,
        "frames": frames,
        "clipped_samples": clipped,
    }
    return TxWaveform(pcm=pcm, sample_rate=cfg.audio_sample_rate, metadata=metadata)


def lowpass_taps(cfg: ModemConfig) -> np.ndarray:
    return firwin(cfg.lpf_taps, cfg.lpf_cutoff, fs=cfg.audio_sample_rate)


def demodulate(samples: np.ndarray, cfg: ModemConfig,
               sample_rate: float | None = None) -> np.ndarray:
    """Mix a real recording down by the carrier and low-pass to the envelope.

    Group delay of the linear-phase FIR is compensated exactly, so output
    sample n corresponds to input sample n.  Accepts float samples or PCM
    integers (rescaled by full scale).
    """
    if sample_rate is not None and sample_rate != cfg.audio_sample_rate:
        raise ValueError(f"recording rate {sample_rate} != configured "
                         f"{cfg.audio_sample_rate}")
    x = np.asarray(samples)
    if np.issubdtype(x.dtype, np.integer):
        x = pcm_to_float(x, cfg.pcm_bits)
    mixed = 2.0 * x * np.conj(_carrier(cfg, 0, len(x)))
    taps = lowpass_taps(cfg)
    delay = (len(taps) - 1) // 2
    padded = np.concatenate([mixed, np.zeros(delay, dtype=np.complex128)])
    return lfilter(taps, 1.0, padded)[delay:]


def estimate_cir(baseband: np.ndarray, seq: PnSequence, cfg: ModemConfig,
                 offset: int = 0, branch: int = 1) -> list[CirFrame]:
    """Per-frame circular correlation against the band-modulated template.

    The stream is framed starting at `offset` in steps of N_s.  Each
    frame's taps are normalized by the template energy, so an identity
    channel yields a unit dominant tap.  Correlating against the other
    small-set member is suppressed by the Kasami cross-correlation bound.
    """
    x = np.asarray(baseband, dtype=np.complex128)
    ns = cfg.frame_length
    if len(x) - offset < ns:
        raise ValueError("baseband stream shorter than one frame")
    template = band_modulate(seq, cfg).samples.real
    tpl_spec = np.fft.fft(template)
    energy = float(np.sum(template * template))
    n_frames = (len(x) - offset) // ns
    out = []
    for k in range(n_frames):
        frame = x[offset + k * ns: offset + (k + 1) * ns]
        taps = np.fft.ifft(np.fft.fft(frame) * np.conj(tpl_spec)) / energy
        out.append(CirFrame(taps=taps, frame_index=k, branch=branch))
    return out


def cir_to_csi(cir: CirFrame, cfg: ModemConfig) -> np.ndarray:
    """Frequency response on the occupied subcarriers (ascending frequency)."""
    taps = np.asarray(cir.taps, dtype=np.complex128)
    if len(taps) != cfg.frame_length:
        raise ValueError("CIR length does not match frame length")
    spectrum = np.fft.fft(taps)
    return spectrum[cfg.occupied_bins % cfg.frame_length]


def template_bin_gains(seq: PnSequence, cfg: ModemConfig) -> np.ndarray:
    """Matched-filter gain per occupied subcarrier: |X_k|^2 / template energy.

    Dividing a matched CSI row by these gains equalizes it to the true
    channel frequency response.  The gain at the carrier bin equals the
    squared chip imbalance and is weak for the base m-sequence.
    """
    template = band_modulate(seq, cfg).samples.real
    spectrum = np.fft.fft(template)
    energy = float(np.sum(template * template))
    return np.abs(spectrum[cfg.occupied_bins % cfg.frame_length]) ** 2 / energy


def chip_taps(csi_row: np.ndarray) -> np.ndarray:
    """Chip-spaced delay taps of one equalized CSI row (ascending-frequency order)."""
    return np.fft.ifft(np.fft.ifftshift(csi_row))


def gate_csi_row(csi_row: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Confine one equalized CSI row to the circular chip-delay window [lo, hi).

    Per-subcarrier separation of concurrently transmitted branches
    requires confining each branch's response to its own delay region:
    the delayed branch's full response sits at half a frame (N/2 chips),
    so a window narrower than that excludes it and leaves only
    code-sidelobe leakage.  This is the rate/path-spread tradeoff in tap
    form: doubling the measurement rate halves the admissible delay
    spread.
    """
    n = len(csi_row)
    if not -n < lo < hi <= n:
        raise ValueError("bad gate window")
    taps = chip_taps(csi_row)
    gated = np.zeros_like(taps)
    idx = np.arange(lo, hi) % n
    gated[idx] = taps[idx]
    return np.fft.fftshift(np.fft.fft(gated))


def otdm_interleave(h1: CsiSeries, h2: CsiSeries) -> CsiSeries:
    """Alternate the two branch series into one doubled-rate series.

    Branch 2 must lag branch 1 by exactly half a frame; the merged series
    has constant half-frame timestamp spacing.
    """
    if h1.n_frames != h2.n_frames:
        raise ValueError("branch series must have equal frame counts")
    if not np.array_equal(h1.subcarrier_frequencies, h2.subcarrier_frequencies):
        raise ValueError("branch series must share the subcarrier grid")
    if h1.step_samples != h2.step_samples or h1.sample_rate != h2.sample_rate:
        raise ValueError("branch series must share frame stepping")
    half = h1.step_samples // 2
    if h2.start_sample - h1.start_sample != half:
        raise ValueError("branch 2 must be offset by exactly half a frame "
                         f"({half} samples), got "
                         f"{h2.start_sample - h1.start_sample}")
    merged = np.empty((2 * h1.n_frames, h1.n_subcarriers), dtype=np.complex128)
    merged[0::2] = h1.frames
    merged[1::2] = h2.frames
    meta = dict(h1.metadata)
    meta["otdm_interleaved"] = True
    return CsiSeries(frames=merged,
                     subcarrier_frequencies=h1.subcarrier_frequencies,
                     sample_rate=h1.sample_rate,
                     start_sample=h1.start_sample,
                     step_samples=half,
                     metadata=meta)


def acquire_frame_origin(baseband: np.ndarray, seq: PnSequence,
                         cfg: ModemConfig, search: float = 1.0) -> int:
    """Locate the branch-1 frame phase by correlating the first `search` seconds.

    Returns the start offset (mod N_s) advanced past the filter settling
    region.  Assumed drift-free afterwards: playback and capture share one
    clock, so a single acquisition suffices.
    """
    ns = cfg.frame_length
    span = min(len(baseband), int(search * cfg.audio_sample_rate))
    span -= span % ns
    if span < ns:
        raise ValueError("stream too short for synchronization")
    template = band_modulate(seq, cfg).samples.real
    tpl_spec = np.conj(np.fft.fft(template, span))
    corr = np.fft.ifft(np.fft.fft(baseband[:span]) * tpl_spec)
    # fold correlation magnitude onto one frame period before peaking
    folded = np.abs(corr).reshape(-1, ns).sum(axis=0)
    phase = int(np.argmax(folded))
    settle = cfg.lpf_taps  # skip the FIR settling region
    start = phase
    while start < settle:
        start += ns
    return start


def decode(recording: np.ndarray, cfg: ModemConfig,
           sample_rate: float | None = None,
           sequence_indices: tuple[int, int] = (0, 1),
           interleave: bool = True,
           sync: bool = True,
           start_offset: int | None = None,
           gate_chips: tuple[int, int] | None = None) -> CsiSeries:
    """Full receive chain: demodulate, synchronize, estimate CSI per branch.

    With interleave=True the result is the doubled-rate merged series;
    otherwise branch 1 alone at the single-branch rate.  Per branch, the
    matched CIR spectrum is equalized by the branch's template line
    powers (so rows estimate the physical frequency response and the two
    branches agree bin by bin), then gated to the chip-delay window
    `gate_chips` (default [-N/8, 3N/8), which excludes the other branch
    at +N/2 chips).  The m-sequence carries almost no line at the
    carrier bin, so that one subcarrier is effectively sounded by its
    companion branch only; downstream validity screening flags it.
    """
    baseband = demodulate(recording, cfg, sample_rate)
    seq1 = generate_kasami(cfg.sequence_degree, sequence_indices[0])
    seq2 = generate_kasami(cfg.sequence_degree, sequence_indices[1])
    ns = cfg.frame_length
    n_chips = cfg.sequence_length
    if gate_chips is None:
        gate_chips = (-(n_chips // 8), 3 * n_chips // 8)
    if start_offset is not None:
        start = start_offset
    elif sync:
        start = acquire_frame_origin(baseband, seq1, cfg)
    else:
        start = 0

    def branch_rows(seq, offset, quadrature):
        gains = template_bin_gains(seq, cfg)
        rows = []
        for c in estimate_cir(baseband, seq, cfg, offset=offset):
            row = cir_to_csi(c, cfg) / gains
            rows.append(gate_csi_row(row, *gate_chips))
        rows = np.array(rows)
        return -1j * rows if quadrature else rows

    rows1 = branch_rows(seq1, start, quadrature=False)
    meta = {"config": cfg.to_dict(), "sequence_indices": list(sequence_indices),
            "sync_offset": start, "gate_chips": list(gate_chips),
            "otdm_interleaved": False}
    branch1 = CsiSeries(frames=rows1,
                        subcarrier_frequencies=cfg.subcarrier_frequencies,
                        sample_rate=cfg.audio_sample_rate,
                        start_sample=start, step_samples=ns, metadata=meta)
    if not interleave:
        return branch1

    # branch 2 rides the quadrature carrier; -1j maps it onto branch 1's axis
    rows2 = branch_rows(seq2, start + ns // 2, quadrature=True)
    n = min(len(rows1), len(rows2))
    if n < 1:
        raise ValueError("recording too short for one OTDM frame pair")
    branch1.frames = rows1[:n]
    branch2 = CsiSeries(frames=rows2[:n],
                        subcarrier_frequencies=cfg.subcarrier_frequencies,
                        sample_rate=cfg.audio_sample_rate,
                        start_sample=start + ns // 2, step_samples=ns,
                        metadata=dict(meta))
    return otdm_interleave(branch1, branch2)


def max_measurable_speed(csi_rate: float, carrier: float,
                         sound_speed: float = DEFAULT_SOUND_SPEED) -> float:
    """Largest speed observable on the Doppler spectrum: F_s / (2 f) * c."""
    if csi_rate < 0 or carrier <= 0:
        raise ValueError("csi_rate must be >= 0 and carrier > 0")
    return csi_rate / (2.0 * carrier) * sound_speed


def csi_rate_limit(path_length: float,
                   sound_speed: float = DEFAULT_SOUND_SPEED) -> float:
    """Channel measurement rate ceiling c / x for the longest path x (meters)."""
    if path_length <= 0:
        raise ValueError("path length must be positive")
    return sound_speed / path_length
