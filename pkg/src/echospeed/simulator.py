"""Synthetic diffuse-field channels with known ground truth.

A scene is an ensemble of dynamic scatterers ("virtual sources"
surrounding a target that moves at a known speed), a small set of static
paths, and complex white measurement noise.  Each dynamic path's length
changes at the plane-wave projection rate v * cos(theta_i), which is
exactly the premise of the diffuse-field correlation models, so scenes
are an independent oracle for every statistical claim: with many
uniformly distributed directions the empirical power correlation
converges to the model curve (J0 for planar incidence, sinc for
spherical).

The direct speaker-to-microphone path is modeled as a strong static path
whose length wanders slowly (`drift_speed`, a few cm/s of effective path
creep from air movement and thermal gradients).  The wander makes the
direct path survive per-window mean removal as a constant-modulus
rotating reference, which is what renders the measured power correlation
linear in the field correlation rather than its square; without any such
quasi-static reference the power of a purely dynamic circular field
correlates as the squared field correlation.

Conventions: dynamic path amplitudes are normalized to unit total power,
`noise_power` is the per-subcarrier complex noise variance relative to
that unit, and every random draw comes from one seeded generator, so
identical scenes produce identical outputs bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SchemaError
from .modem import CsiSeries, ModemConfig, TxWaveform, demodulate, pcm_to_float, quantize_pcm
from .diffusion import SOUND_SPEED

SpeedProfile = float | list[tuple[float, float]]


@dataclass
class SimScene:
    num_scatterers: int = 200
    geometry: str = "spherical"            # "spherical" or "planar"
    target_speed: SpeedProfile = 1.0       # m/s, or [(t_start, v), ...]
    duration: float = 10.0                 # s
    seed: int = 0
    noise_power: float = 0.01              # complex variance per subcarrier
    amplitude_distribution: str = "rayleigh"   # or "constant"
    static_paths: list[tuple[float, complex]] | None = None  # (delay s, gain)
    drift_speed: float = 0.02              # m/s static-path length wander
    scatterer_directions: np.ndarray | None = None  # unit vectors (n, 3)
    scatterer_amplitudes: np.ndarray | None = None  # positive; normalized to unit power
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        if self.num_scatterers < 1:
            raise ValueError("num_scatterers must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.geometry not in ("spherical", "planar"):
            raise ValueError(f"geometry must be spherical or planar, "
                             f"got {self.geometry!r}")
        if self.amplitude_distribution not in ("rayleigh", "constant"):
            raise ValueError("amplitude_distribution must be rayleigh or constant")
        if self.static_paths is None:
            # direct speaker->mic path; much stronger than the dynamic echo
            self.static_paths = [(0.003, 3.0 + 0.0j)]
        if self.scatterer_directions is not None:
            d = np.asarray(self.scatterer_directions, dtype=float)
            if d.shape != (self.num_scatterers, 3):
                raise ValueError("scatterer_directions must be (num_scatterers, 3)")
            norms = np.linalg.norm(d, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-9):
                raise ValueError("scatterer_directions must be unit vectors")
            self.scatterer_directions = d
        if self.scatterer_amplitudes is not None:
            a = np.asarray(self.scatterer_amplitudes, dtype=float)
            if a.shape != (self.num_scatterers,) or np.any(a <= 0):
                raise ValueError("scatterer_amplitudes must be positive, one "
                                 "per scatterer")
            self.scatterer_amplitudes = a

    @classmethod
    def from_snr(cls, snr_db: float, **kwargs) -> "SimScene":
        """Noise level from dynamic-signal-to-noise ratio in dB."""
        return cls(noise_power=10.0 ** (-snr_db / 10.0), **kwargs)

    # -- seeded draws ----------------------------------------------------

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def realize(self) -> dict:
        """Draw the scatterer ensemble deterministically from the seed.

        Returns directions (unit vectors), motion-axis projections u_i,
        amplitudes (unit total power), initial path lengths, and the
        static-path drift rates.
        """
        rng = self._rng()
        n = self.num_scatterers
        if self.scatterer_directions is not None:
            directions = self.scatterer_directions
        elif self.geometry == "spherical":
            raw = rng.standard_normal((n, 3))
            directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        else:
            ang = rng.uniform(0.0, 2.0 * math.pi, n)
            directions = np.stack([np.cos(ang), np.sin(ang),
                                   np.zeros(n)], axis=1)
        u = directions[:, 0]   # motion along +x

        if self.scatterer_amplitudes is not None:
            amps = self.scatterer_amplitudes.astype(float)
        elif self.amplitude_distribution == "rayleigh":
            amps = rng.rayleigh(1.0, n)
        else:
            amps = np.ones(n)
        amps = amps / math.sqrt(float(np.sum(amps**2)))   # unit total power

        lengths = rng.uniform(1.5, 2.4, n)   # m; ~0.7 m relative delay spread
        drift_signs = rng.choice([-1.0, 1.0], size=len(self.static_paths))
        drift_phase = rng.uniform(0.0, 2.0 * math.pi, len(self.static_paths))
        return {"directions": directions, "u": u, "amplitudes": amps,
                "lengths": lengths, "drift_signs": drift_signs,
                "drift_phase": drift_phase}

    def displacement(self, t: np.ndarray) -> np.ndarray:
        """Along-track displacement integral of the speed profile at times t."""
        if isinstance(self.target_speed, (int, float)):
            return float(self.target_speed) * t
        prof = sorted(self.target_speed)
        starts = np.array([p[0] for p in prof])
        speeds = np.array([p[1] for p in prof])
        if starts[0] > 0:
            starts = np.insert(starts, 0, 0.0)
            speeds = np.insert(speeds, 0, 0.0)
        # cumulative displacement at each breakpoint
        seg = np.diff(starts, append=np.inf)
        cum = np.concatenate([[0.0], np.cumsum((speeds * seg)[:-1])])
        idx = np.searchsorted(starts, t, side="right") - 1
        return cum[idx] + speeds[idx] * (t - starts[idx])

    def speed_at(self, t: np.ndarray) -> np.ndarray:
        if isinstance(self.target_speed, (int, float)):
            return np.full_like(np.asarray(t, dtype=float), float(self.target_speed))
        prof = sorted(self.target_speed)
        starts = np.array([p[0] for p in prof])
        speeds = np.array([p[1] for p in prof])
        if starts[0] > 0:
            starts = np.insert(starts, 0, 0.0)
            speeds = np.insert(speeds, 0, 0.0)
        idx = np.searchsorted(starts, np.asarray(t, dtype=float), side="right") - 1
        return speeds[idx]


def synth_csi(scene: SimScene, csi_rate: float,
              subcarriers: np.ndarray,
              sample_rate: float = 48_000.0) -> CsiSeries:
    """Sample the scene's channel frequency response directly at csi_rate.

    H(f, t) = sum_i a_i exp(-j k_f (L_i + u_i s(t)))
            + sum_static g exp(-j k_f (L + drift t))
            + circular Gaussian noise of variance noise_power,
    with k_f = 2 pi f / c and s(t) the target displacement.
    """
    subcarriers = np.asarray(subcarriers, dtype=float)
    if subcarriers.size == 0:
        raise ValueError("subcarrier grid must not be empty")
    if csi_rate <= 0:
        raise ValueError("csi_rate must be positive")
    n_frames = int(round(scene.duration * csi_rate))
    if n_frames < 2:
        raise ValueError("duration * csi_rate must cover at least 2 frames")

    ens = scene.realize()
    rng = scene._rng()
    rng.bit_generator.advance(1 << 20)   # decouple noise from ensemble draws
    t = np.arange(n_frames) / csi_rate
    disp = scene.displacement(t)
    c = scene.sound_speed

    frames = np.empty((n_frames, subcarriers.size), dtype=np.complex128)
    path_pos = ens["lengths"][None, :] + np.outer(disp, ens["u"])  # (T, n)
    spacing = np.diff(subcarriers)
    uniform = subcarriers.size > 2 and np.allclose(spacing, spacing[0], rtol=1e-9)
    if uniform:
        # advance phases multiplicatively across the uniform grid; this
        # replaces one exp per (frame, scatterer, subcarrier) with a multiply
        phase = np.exp(-2j * math.pi * subcarriers[0] / c * path_pos)
        step_factor = np.exp(-2j * math.pi * spacing[0] / c * path_pos)
    for fi, f in enumerate(subcarriers):
        k = 2.0 * math.pi * f / c
        if uniform:
            if fi > 0:
                phase *= step_factor
            col = phase @ ens["amplitudes"]
        else:
            col = np.exp(-1j * k * path_pos) @ ens["amplitudes"]
        for (delay, gain), sgn in zip(scene.static_paths, ens["drift_signs"]):
            length = delay * c + sgn * scene.drift_speed * t
            col = col + gain * np.exp(-1j * k * length)
        frames[:, fi] = col
    noise = rng.standard_normal((n_frames, subcarriers.size, 2))
    frames += math.sqrt(scene.noise_power / 2.0) * (noise[..., 0] + 1j * noise[..., 1])

    step = int(round(sample_rate / csi_rate))
    return CsiSeries(frames=frames, subcarrier_frequencies=subcarriers,
                     sample_rate=step * csi_rate, start_sample=0,
                     step_samples=step,
                     metadata={"scene_seed": scene.seed,
                               "target_speed": scene.target_speed
                               if isinstance(scene.target_speed, (int, float))
                               else list(map(list, scene.target_speed)),
                               "geometry": scene.geometry})


def _cubic_resample(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Catmull-Rom interpolation of x at fractional indices (clipped at edges)."""
    i1 = np.floor(idx).astype(np.int64)
    frac = idx - i1
    i0 = np.clip(i1 - 1, 0, len(x) - 1)
    i2 = np.clip(i1 + 1, 0, len(x) - 1)
    i3 = np.clip(i1 + 2, 0, len(x) - 1)
    i1 = np.clip(i1, 0, len(x) - 1)
    p0, p1, p2, p3 = x[i0], x[i1], x[i2], x[i3]
    f2 = frac * frac
    f3 = f2 * frac
    return 0.5 * ((2.0 * p1)
                  + (-p0 + p2) * frac
                  + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2
                  + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * f3)


def synth_waveform(scene: SimScene, tx: TxWaveform,
                   max_delay: float = 0.05) -> np.ndarray:
    """Play the transmit waveform through the scene; returns int16 PCM.

    Each path is a time-varying fractional delay applied to the transmit
    complex envelope (cubic interpolation; the envelope occupies a few
    kHz, so cubic is well below -40 dB error) with the exact carrier
    phase rotation for that delay.  White Gaussian noise is added at the
    power implied by scene.noise_power relative to the dynamic echo.
    """
    cfg = ModemConfig.from_dict(tx.metadata["config"])
    fs = cfg.audio_sample_rate
    envelope = demodulate(tx.pcm, cfg)
    n = np.arange(len(envelope))
    t = n / fs
    ens = scene.realize()
    c = scene.sound_speed
    disp = scene.displacement(t)

    worst = max([scene.static_paths[i][0] * c
                 + scene.drift_speed * scene.duration
                 for i in range(len(scene.static_paths))]
                + [ens["lengths"].max() + np.abs(disp).max()])
    if worst / c > max_delay:
        raise ValueError(f"path delays reach {worst / c:.3f} s, beyond the "
                         f"{max_delay:.3f} s buffer")

    out = np.zeros(len(envelope), dtype=np.complex128)
    fc = cfg.carrier_frequency
    for a, u, length in zip(ens["amplitudes"], ens["u"], ens["lengths"]):
        delay = (length + u * disp) / c
        shifted = _cubic_resample(envelope, n - delay * fs)
        out += a * shifted * np.exp(-2j * math.pi * fc * delay)
    for (delay0, gain), sgn in zip(scene.static_paths, ens["drift_signs"]):
        delay = delay0 + sgn * scene.drift_speed * t / c
        shifted = _cubic_resample(envelope, n - delay * fs)
        out += gain * shifted * np.exp(-2j * math.pi * fc * delay)

    carrier = np.exp(2j * math.pi * fc * n / fs)
    passband = (out * carrier).real
    # dynamic echo power sets the noise scale, mirroring the CSI-domain SNR
    dyn_power = 0.5 * float(np.mean(np.abs(envelope) ** 2))
    rng = scene._rng()
    rng.bit_generator.advance(1 << 21)
    passband = passband + rng.standard_normal(len(passband)) * math.sqrt(
        scene.noise_power * dyn_power)
    pcm, _ = quantize_pcm(passband, cfg.pcm_bits)
    return pcm


def radial_only_scene(v: float, num_scatterers: int = 40, seed: int = 0,
                      **kwargs) -> SimScene:
    """All scatterer directions aligned with the motion axis.

    Every path length changes at the full rate v, so a Doppler baseline
    sees one clean spectral line.  The field has no angular diversity, so
    correlation-based estimation does not apply to this degenerate scene.
    """
    if v <= 0:
        raise ValueError("v must be positive")
    directions = np.tile([1.0, 0.0, 0.0], (num_scatterers, 1))
    return SimScene(num_scatterers=num_scatterers, target_speed=v, seed=seed,
                    scatterer_directions=directions, **kwargs)


def tangential_only_scene(v: float, num_scatterers: int = 40, seed: int = 0,
                          **kwargs) -> SimScene:
    """All scatterer directions perpendicular to the motion axis.

    Every path-length derivative is zero: Doppler sees nothing, and
    (because the field again has no angular diversity) neither does
    correlation-based estimation.  The contrast scene for showing both
    effects at once is a diffuse ensemble plus a dominant near-tangential
    path; see the evaluation suites.
    """
    if v <= 0:
        raise ValueError("v must be positive")
    directions = np.tile([0.0, 1.0, 0.0], (num_scatterers, 1))
    return SimScene(num_scatterers=num_scatterers, target_speed=v, seed=seed,
                    scatterer_directions=directions, **kwargs)


def diffuse_contrast_scene(v: float, num_scatterers: int = 200, seed: int = 0,
                           dominant_angle_cos: float = 0.06,
                           **kwargs) -> SimScene:
    """Uniform diffuse ensemble plus one dominant near-tangential path.

    The dominant path carries as much power as the rest of the ensemble
    combined and has almost no radial projection (net radial projection
    of the scene ~ 0), so a Doppler baseline reads out near zero while
    the diffuse remainder still encodes the full speed.
    """
    if v <= 0:
        raise ValueError("v must be positive")
    rng = np.random.default_rng(seed ^ 0x5EED)
    raw = rng.standard_normal((num_scatterers - 1, 3))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    s = math.sqrt(1.0 - dominant_angle_cos**2)
    dom = np.array([[dominant_angle_cos, s, 0.0]])
    directions = np.vstack([dom, raw])
    # dominant amplitude carries the combined power of the rest (share 0.5)
    rest = rng.rayleigh(1.0, num_scatterers - 1)
    amps = np.concatenate([[math.sqrt(float(np.sum(rest**2)))], rest])
    return SimScene(num_scatterers=num_scatterers, target_speed=v, seed=seed,
                    scatterer_directions=directions, scatterer_amplitudes=amps,
                    **kwargs)


def empirical_power_acf(csi: CsiSeries, max_lag: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample autocorrelation of raw per-subcarrier power |H|^2.

    This is the oracle statistic for diffuse-field closure: with the
    direct path present, the power correlation tracks the field
    correlation model.  Returns (lags_seconds, acf) with acf shaped
    (n_subcarriers, n_lags + 1), biased normalization, lag 0 == 1.
    """
    power = np.abs(csi.frames) ** 2
    x = power - power.mean(axis=0, keepdims=True)
    n = x.shape[0]
    n_lags = int(max_lag * csi.csi_rate)
    if n < 2 * n_lags:
        raise ValueError("series too short for the requested lag range")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft, axis=0)
    corr = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=0)[:n_lags + 1]
    acf = corr / corr[0]
    lags = np.arange(n_lags + 1) / csi.csi_rate
    return lags, acf.T


# -- scene files ---------------------------------------------------------

_REQUIRED_SCENE_FIELDS = ("geometry", "num_scatterers", "speed", "duration", "seed")


def scene_to_dict(scene: SimScene) -> dict:
    return {
        "geometry": scene.geometry,
        "num_scatterers": scene.num_scatterers,
        "speed": scene.target_speed if isinstance(scene.target_speed, (int, float))
                 else [list(p) for p in scene.target_speed],
        "duration": scene.duration,
        "seed": scene.seed,
        "noise_power": scene.noise_power,
        "amplitude_distribution": scene.amplitude_distribution,
        "static_paths": [[d, [g.real if isinstance(g, complex) else float(g),
                              g.imag if isinstance(g, complex) else 0.0]]
                         for d, g in scene.static_paths],
        "drift_speed": scene.drift_speed,
    }


def save_scene(scene: SimScene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path) -> SimScene:
    """Load a scene file, raising SchemaError naming any missing/invalid field."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    for name in _REQUIRED_SCENE_FIELDS:
        if name not in raw:
            raise SchemaError(f"{path}: missing required scene field: {name}")
    speed = raw["speed"]
    if isinstance(speed, list):
        try:
            speed = [(float(t), float(v)) for t, v in speed]
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: invalid field: speed") from exc
    static_paths = None
    if "static_paths" in raw:
        try:
            static_paths = [(float(d), complex(g[0], g[1]))
                            for d, g in raw["static_paths"]]
        except (TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: invalid field: static_paths") from exc
    if "snr_db" in raw and "noise_power" not in raw:
        noise_power = 10.0 ** (-float(raw["snr_db"]) / 10.0)
    else:
        noise_power = float(raw.get("noise_power", 0.01))
    try:
        return SimScene(
            geometry=raw["geometry"],
            num_scatterers=int(raw["num_scatterers"]),
            target_speed=speed,
            duration=float(raw["duration"]),
            seed=int(raw["seed"]),
            noise_power=noise_power,
            amplitude_distribution=raw.get("amplitude_distribution", "rayleigh"),
            static_paths=static_paths,
            drift_speed=float(raw.get("drift_speed", 0.02)),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
