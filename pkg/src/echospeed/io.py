"""File formats: WAV audio, the CSI container, and run manifests.

CSI container layout (extension .csi, little-endian):

    bytes 0..7    magic b"ECSI0001"
    bytes 8..15   uint64 header length H
    bytes 16..16+H-1   UTF-8 JSON header (sorted keys), fields:
                  sample_rate, start_sample, step_samples, n_frames,
                  n_subcarriers, subcarrier_frequencies, metadata
    remainder     frames as IEEE-754 doubles, row-major
                  (time outer, subcarrier inner), re/im interleaved

Writers are byte-deterministic for identical inputs, so simulation
artifacts can be compared by hash.
"""

from __future__ import annotations

import hashlib
import json
import struct
import wave
from pathlib import Path

import numpy as np

from .modem import CsiSeries

_CSI_MAGIC = b"ECSI0001"


def write_wav(path, pcm: np.ndarray, sample_rate: float) -> None:
    """Write mono 16-bit little-endian PCM."""
    pcm = np.asarray(pcm)
    if pcm.dtype != np.int16:
        raise ValueError("write_wav expects int16 PCM")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(round(sample_rate)))
        fh.writeframes(pcm.tobytes())


def read_wav(path) -> tuple[float, np.ndarray]:
    """Read a mono 16-bit WAV; returns (sample_rate, int16 samples)."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        rate = float(fh.getframerate())
        data = fh.readframes(fh.getnframes())
    return rate, np.frombuffer(data, dtype="<i2")


def write_csi(path, csi: CsiSeries) -> None:
    header = {
        "sample_rate": csi.sample_rate,
        "start_sample": int(csi.start_sample),
        "step_samples": int(csi.step_samples),
        "n_frames": int(csi.n_frames),
        "n_subcarriers": int(csi.n_subcarriers),
        "subcarrier_frequencies": csi.subcarrier_frequencies.tolist(),
        "metadata": csi.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    frames = np.ascontiguousarray(csi.frames, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(_CSI_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(frames.astype("<c16").tobytes())


def read_csi(path) -> CsiSeries:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CSI_MAGIC:
            raise ValueError(f"{path}: not a CSI container (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        raw = fh.read()
    n_frames = header["n_frames"]
    n_sub = header["n_subcarriers"]
    frames = np.frombuffer(raw, dtype="<c16", count=n_frames * n_sub)
    return CsiSeries(frames=frames.reshape(n_frames, n_sub).copy(),
                     subcarrier_frequencies=np.asarray(
                         header["subcarrier_frequencies"], dtype=float),
                     sample_rate=header["sample_rate"],
                     start_sample=header["start_sample"],
                     step_samples=header["step_samples"],
                     metadata=header.get("metadata", {}))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output_path, command: str, config: dict,
                   inputs: list[str] | None = None,
                   outputs: list[str] | None = None,
                   seed: int | None = None,
                   extra: dict | None = None) -> Path:
    """Write a sidecar manifest next to an output artifact.

    Output hashes make re-runs comparable: identical config + inputs must
    reproduce identical artifact bytes for simulation-sourced data.
    """
    from . import __version__
    manifest = {
        "tool": "echospeed",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [{"path": str(p), "sha256": file_sha256(p)}
                   for p in (inputs or []) if Path(p).exists()],
        "outputs": [{"path": str(p), "sha256": file_sha256(p)}
                    for p in (outputs or []) if Path(p).exists()],
    }
    if extra:
        manifest.update(extra)
    path = Path(str(output_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
