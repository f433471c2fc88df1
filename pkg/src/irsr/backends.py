"""Restorer backends: built-in classical restorers, plus a client for
out-of-process model backends speaking the irsr/1 wire protocol.

irsr/1 frames are one JSON header line followed by an optional raw
payload of little-endian float32 samples in planar row-major order
(channel planes concatenated, each plane row-major). See PROTOCOL.md for
byte-level examples. One request is in flight per connection; parallelism
comes from running several backend processes.
"""

from __future__ import annotations

import abc
import json
import os
import select
import subprocess
import threading
import time
from typing import Sequence

import numpy as np

from .errors import (
    BackendDimensionError,
    BackendError,
    BackendExitError,
    BackendTimeoutError,
    HandshakeError,
    ProtocolError,
    UnknownBackendError,
)
from .image import Image, clamp01
from .resample import KernelSpec, bicubic_upscale, nearest_upscale

PROTO_VERSION = "irsr/1"
WIRE_DTYPE = "f32le"
_MAX_HEADER_BYTES = 65536


class RestorerBackend(abc.ABC):
    """A restorer mapping an LR image to an HR image at a fixed scale."""

    name: str = "backend"
    scale: int = 1
    channels: int | None = None  # None: any channel count
    supports_internal_tlc: bool = False
    deterministic: bool = True

    @abc.abstractmethod
    def restore(self, img_lr: Image) -> Image:
        """Return the restored image at exactly (H*scale, W*scale, C)."""

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BicubicBackend(RestorerBackend):
    def __init__(self, scale: int, kernel: KernelSpec = KernelSpec()):
        self.name = "bicubic"
        self.scale = scale
        self.kernel = kernel

    def restore(self, img_lr: Image) -> Image:
        return bicubic_upscale(img_lr, self.scale, self.kernel)


class NearestBackend(RestorerBackend):
    def __init__(self, scale: int):
        self.name = "nearest"
        self.scale = scale

    def restore(self, img_lr: Image) -> Image:
        return nearest_upscale(img_lr, self.scale)


def box_blur3(arr: np.ndarray) -> np.ndarray:
    """3x3 normalized box blur with clamp-to-edge, fixed summation order."""
    padded = np.pad(arr, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(arr)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy : dy + arr.shape[0], dx : dx + arr.shape[1]]
    return acc / 9.0


class BlurBicubicBackend(RestorerBackend):
    """Box-blur then bicubic upscale: a deliberately D4-equivariant,
    shift-sensitive fixture with a small finite receptive field."""

    def __init__(self, scale: int, kernel: KernelSpec = KernelSpec()):
        self.name = "blur-bicubic"
        self.scale = scale
        self.kernel = kernel

    def restore(self, img_lr: Image) -> Image:
        blurred = Image(clamp01(box_blur3(img_lr.data)))
        return bicubic_upscale(blurred, self.scale, self.kernel)


class IdentityBackend(RestorerBackend):
    def __init__(self):
        self.name = "identity1x"
        self.scale = 1

    def restore(self, img_lr: Image) -> Image:
        return img_lr


BUILTIN_KINDS = ("bicubic", "nearest", "blur-bicubic", "identity1x")


def builtin_backend(
    kind: str, scale: int, kernel: KernelSpec = KernelSpec()
) -> RestorerBackend:
    """Construct a built-in backend by kind name."""
    if kind == "bicubic":
        return BicubicBackend(scale, kernel)
    if kind == "nearest":
        return NearestBackend(scale)
    if kind == "blur-bicubic":
        return BlurBicubicBackend(scale, kernel)
    if kind == "identity1x":
        if scale != 1:
            raise UnknownBackendError(f"identity1x is fixed at scale 1, got {scale}")
        return IdentityBackend()
    raise UnknownBackendError(f"unknown backend kind {kind!r}; expected {BUILTIN_KINDS}")


# ---------------------------------------------------------------------------
# Wire helpers
# ---------------------------------------------------------------------------

def encode_payload(img: Image) -> bytes:
    """Planar row-major little-endian float32 samples."""
    planar = np.ascontiguousarray(np.moveaxis(img.data, 2, 0), dtype="<f4")
    return planar.tobytes()


def decode_payload(buf: bytes, height: int, width: int, channels: int) -> np.ndarray:
    """Inverse of encode_payload; returns a float64 (H, W, C) array."""
    expected = height * width * channels * 4
    if len(buf) != expected:
        raise ProtocolError(f"payload length {len(buf)} != expected {expected}")
    planar = np.frombuffer(buf, dtype="<f4").reshape(channels, height, width)
    return np.moveaxis(planar, 0, 2).astype(np.float64)


def encode_header(header: dict) -> bytes:
    line = json.dumps(header, separators=(",", ":"))
    if "\n" in line:
        raise ProtocolError("header values must not contain raw newlines")
    return line.encode("ascii") + b"\n"


class _TimedReader:
    """Reads lines and exact byte counts from a pipe fd under a deadline."""

    def __init__(self, fd: int):
        self.fd = fd
        self.buf = bytearray()

    def _fill(self, deadline: float) -> bool:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise BackendTimeoutError("timed out waiting for backend response")
        ready, _, _ = select.select([self.fd], [], [], remaining)
        if not ready:
            raise BackendTimeoutError("timed out waiting for backend response")
        chunk = os.read(self.fd, 1 << 16)
        if not chunk:
            return False  # EOF
        self.buf.extend(chunk)
        return True

    def read_line(self, deadline: float) -> bytes:
        while True:
            idx = self.buf.find(b"\n")
            if idx >= 0:
                line = bytes(self.buf[:idx])
                del self.buf[: idx + 1]
                return line
            if len(self.buf) > _MAX_HEADER_BYTES:
                raise ProtocolError("header line exceeds maximum length")
            if not self._fill(deadline):
                raise ProtocolError("stream closed while reading header line")

    def read_exact(self, n: int, deadline: float) -> bytes:
        while len(self.buf) < n:
            if not self._fill(deadline):
                raise ProtocolError(
                    f"payload underrun: got {len(self.buf)} of {n} bytes"
                )
        out = bytes(self.buf[:n])
        del self.buf[:n]
        return out


def _parse_header(line: bytes) -> dict:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"malformed header line: {e}") from e
    if not isinstance(header, dict):
        raise ProtocolError(f"header is not a JSON object: {header!r}")
    return header


class ExternalBackend(RestorerBackend):
    """Client for an out-of-process restorer speaking irsr/1 over stdio.

    The connection is serialized: one request in flight at a time. Any
    protocol violation, timeout, or process death terminates the
    connection and reaps the process.
    """

    def __init__(self, command: Sequence[str], timeout: float = 60.0):
        if not command:
            raise BackendError("external backend command is empty")
        self.command = list(command)
        self.timeout = timeout
        self.name = f"ext:{os.path.basename(self.command[0])}"
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as e:
            raise BackendError(f"cannot spawn backend {self.command!r}: {e}") from e
        self._reader = _TimedReader(self._proc.stdout.fileno())
        try:
            self._handshake()
        except BackendError:
            self._terminate()
            raise

    def _handshake(self) -> None:
        deadline = time.monotonic() + self.timeout
        self._write(encode_header({"proto": PROTO_VERSION, "op": "hello"}))
        try:
            reply = _parse_header(self._reader.read_line(deadline))
        except ProtocolError as e:
            raise HandshakeError(f"handshake failed: {e}") from e
        if reply.get("op") == "error":
            raise HandshakeError(f"backend rejected handshake: {reply.get('message')}")
        if reply.get("proto") != PROTO_VERSION or reply.get("op") != "ready":
            raise HandshakeError(f"unexpected handshake reply: {reply!r}")
        scale = reply.get("scale")
        channels = reply.get("channels")
        if not isinstance(scale, int) or scale < 1:
            raise HandshakeError(f"backend announced invalid scale {scale!r}")
        if channels not in (1, 3):
            raise HandshakeError(f"backend announced invalid channels {channels!r}")
        self.scale = scale
        self.channels = channels
        self.supports_internal_tlc = bool(reply.get("internal_tlc", False))
        self.deterministic = bool(reply.get("deterministic", True))

    def _write(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise self._exit_error(f"backend pipe closed while writing: {e}") from e

    def _exit_error(self, fallback: str) -> BackendError:
        code = self._proc.poll()
        if code is not None and code != 0:
            return BackendExitError(f"backend exited with status {code}")
        return ProtocolError(fallback)

    def restore(self, img_lr: Image) -> Image:
        if self._proc is None:
            raise BackendError("backend connection already closed")
        if self.channels is not None and img_lr.channels != self.channels:
            raise BackendError(
                f"backend {self.name} handles {self.channels} channel(s), "
                f"image has {img_lr.channels}"
            )
        with self._lock:
            try:
                return self._restore_locked(img_lr)
            except BackendError:
                self._terminate()
                raise

    def _restore_locked(self, img_lr: Image) -> Image:
        deadline = time.monotonic() + self.timeout
        header = {
            "op": "restore",
            "width": img_lr.width,
            "height": img_lr.height,
            "channels": img_lr.channels,
            "dtype": WIRE_DTYPE,
        }
        self._write(encode_header(header) + encode_payload(img_lr))
        try:
            reply = _parse_header(self._reader.read_line(deadline))
            if reply.get("op") == "error":
                raise BackendError(f"backend error: {reply.get('message')}")
            if reply.get("op") != "result" or reply.get("dtype") != WIRE_DTYPE:
                raise ProtocolError(f"unexpected response header: {reply!r}")
            exp_h = img_lr.height * self.scale
            exp_w = img_lr.width * self.scale
            got = (reply.get("height"), reply.get("width"), reply.get("channels"))
            if got != (exp_h, exp_w, img_lr.channels):
                raise BackendDimensionError(
                    f"backend {self.name} announced scale {self.scale} but returned "
                    f"{got[0]}x{got[1]}x{got[2]} for {img_lr.height}x{img_lr.width}"
                    f"x{img_lr.channels} input"
                )
            payload = self._reader.read_exact(
                exp_h * exp_w * img_lr.channels * 4, deadline
            )
        except ProtocolError as e:
            raise self._reclassify_eof(e) from e
        data = decode_payload(payload, exp_h, exp_w, img_lr.channels)
        if not np.all(np.isfinite(data)):
            raise ProtocolError("backend returned non-finite samples")
        return Image(clamp01(data))

    def _reclassify_eof(self, err: ProtocolError) -> BackendError:
        # Stream problems from a dead process count as exit failures.
        try:
            self._proc.wait(timeout=0.5)
        except subprocess.TimeoutExpired:
            pass
        code = self._proc.poll()
        if code is not None and code != 0:
            return BackendExitError(f"backend exited with status {code} ({err})")
        return err

    def _terminate(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def close(self) -> None:
        self._terminate()

    def __del__(self):
        try:
            self._terminate()
        except Exception:
            pass


def external_backend(command: Sequence[str], timeout: float = 60.0) -> ExternalBackend:
    """Spawn and handshake an irsr/1 backend process."""
    return ExternalBackend(command, timeout=timeout)
