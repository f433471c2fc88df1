"""Model runners behind the wire loop.

The identity runner echoes payload bytes untouched (scale 1), which is
the conformance fixture. Checkpoint runners execute TorchScript exports:
serving scripted models keeps this adapter free of per-architecture
network code, and whether test-time local conversion is baked into the
graph is a property of the export, advertised here via the handshake
flag.

Input convention on the wire is [0, 1] float32; any model-specific range
is handled by normalize/denormalize. Window-based models receive inputs
reflection-padded to a multiple of their window size; the output is
cropped back to the exact target size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODEL_KINDS = ("identity", "hat", "mambairv2")

# Pad-to-multiple defaults per kind: HAT-style windows are 32 LR pixels.
DEFAULT_PAD_MULTIPLE = {"identity": 1, "hat": 32, "mambairv2": 8}


@dataclass(frozen=True)
class AdapterConfig:
    kind: str = "identity"
    checkpoint: str | None = None
    device: str = "cpu"
    scale: int = 1
    channels: int = 1
    internal_tlc: bool = False
    input_range: str = "01"  # "01" or "255"
    pad_multiple: int | None = None  # None: kind default

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.kind == "identity" and self.scale != 1:
            raise ValueError("identity kind is fixed at scale 1")
        if self.kind != "identity" and not self.checkpoint:
            raise ValueError(f"kind {self.kind!r} requires a checkpoint")
        if self.internal_tlc and self.kind != "hat":
            raise ValueError("internal_tlc applies to the hat kind only")
        if self.input_range not in ("01", "255"):
            raise ValueError("input_range must be '01' or '255'")

    def effective_pad_multiple(self) -> int:
        if self.pad_multiple is not None:
            return max(1, self.pad_multiple)
        return DEFAULT_PAD_MULTIPLE[self.kind]


def normalize(samples: np.ndarray, input_range: str) -> np.ndarray:
    """Map [0,1] wire floats into the model's training range."""
    if input_range == "01":
        return samples
    return samples * 255.0


def denormalize(samples: np.ndarray, input_range: str) -> np.ndarray:
    """Map model outputs back to the wire range, clipped to [0,1]."""
    if input_range == "255":
        samples = samples / 255.0
    return np.clip(samples, 0.0, 1.0)


class IdentityModel:
    """Echoes payloads bitwise at scale 1."""

    scale = 1
    internal_tlc = False

    def __init__(self, channels: int = 1):
        self.channels = channels

    def restore_payload(self, payload: bytes, h: int, w: int, c: int) -> bytes:
        return payload


class TorchScriptModel:
    """Runs a TorchScript checkpoint on planar float payloads."""

    def __init__(self, cfg: AdapterConfig):
        import torch  # deferred: identity mode must not need it

        self._torch = torch
        self.cfg = cfg
        self.scale = cfg.scale
        self.channels = cfg.channels
        self.internal_tlc = cfg.internal_tlc
        self.pad_multiple = cfg.effective_pad_multiple()
        torch.set_grad_enabled(False)
        self.module = torch.jit.load(cfg.checkpoint, map_location=cfg.device)
        self.module.eval()
        self._verify_scale()

    def _verify_scale(self) -> None:
        # The announced scale must match the checkpoint's actual factor.
        size = max(self.pad_multiple, 8)
        probe = self._torch.zeros(1, self.channels, size, size, device=self.cfg.device)
        out = self.module(probe)
        got = (out.shape[-2] // size, out.shape[-1] // size)
        if got != (self.scale, self.scale) or out.shape[-2] % size or out.shape[-1] % size:
            raise ValueError(
                f"checkpoint upscales by {got}, adapter configured for x{self.scale}"
            )

    def restore_payload(self, payload: bytes, h: int, w: int, c: int) -> bytes:
        torch = self._torch
        planes = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
        planes = normalize(planes.astype(np.float32), self.cfg.input_range)
        x = torch.from_numpy(np.ascontiguousarray(planes)).unsqueeze(0)
        x = x.to(self.cfg.device)

        mult = self.pad_multiple
        pad_h = (-h) % mult
        pad_w = (-w) % mult
        if pad_h or pad_w:
            # reflect needs pad < dim; fall back for very small inputs
            mode = "reflect" if pad_h < h and pad_w < w else "replicate"
            x = torch.nn.functional.pad(x, (0, pad_w, 0, pad_h), mode=mode)

        y = self.module(x)
        y = y[:, :, : h * self.scale, : w * self.scale]
        out = y.squeeze(0).detach().cpu().numpy()
        out = denormalize(out.astype(np.float64), self.cfg.input_range)
        return np.ascontiguousarray(out, dtype="<f4").tobytes()


def build_model(cfg: AdapterConfig):
    if cfg.kind == "identity":
        return IdentityModel(channels=cfg.channels)
    return TorchScriptModel(cfg)
