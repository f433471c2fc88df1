"""irsr/1 server side: hello/ready handshake, then a serial
restore-request loop over stdin/stdout.

Frames are one compact JSON header line plus an optional raw payload of
little-endian float32 samples, planar row-major. Requests are answered
in order, one in flight at a time. A protocol-version mismatch is
answered with an error object and a nonzero exit; a malformed payload
terminates the connection.
"""

from __future__ import annotations

import json
import sys

PROTO_VERSION = "irsr/1"
WIRE_DTYPE = "f32le"

EXIT_PROTOCOL = 2


class WireViolation(Exception):
    pass


def write_header(stream, obj: dict) -> None:
    stream.write((json.dumps(obj, separators=(",", ":")) + "\n").encode("ascii"))
    stream.flush()


def read_header(stream) -> dict | None:
    line = stream.readline()
    if not line:
        return None
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WireViolation(f"malformed header line: {e}") from e
    if not isinstance(obj, dict):
        raise WireViolation("header is not a JSON object")
    return obj


def read_exact(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise WireViolation(f"payload truncated: got {len(buf)} of {n} bytes")
        buf += chunk
    return buf


def serve(model, stdin=None, stdout=None) -> int:
    """Run the request loop for a model object exposing `scale`,
    `channels`, `internal_tlc` and `restore_payload(payload, h, w, c)`.

    Returns the process exit code.
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer

    try:
        hello = read_header(stdin)
    except WireViolation as e:
        write_header(stdout, {"op": "error", "message": str(e)})
        return EXIT_PROTOCOL
    if hello is None:
        return EXIT_PROTOCOL
    if hello.get("proto") != PROTO_VERSION or hello.get("op") != "hello":
        write_header(
            stdout,
            {
                "op": "error",
                "message": f"unsupported handshake {hello.get('proto')!r}/"
                f"{hello.get('op')!r}; this adapter speaks {PROTO_VERSION}",
            },
        )
        return EXIT_PROTOCOL

    write_header(
        stdout,
        {
            "proto": PROTO_VERSION,
            "op": "ready",
            "scale": model.scale,
            "channels": model.channels,
            "internal_tlc": bool(model.internal_tlc),
        },
    )

    while True:
        try:
            header = read_header(stdin)
        except WireViolation as e:
            print(f"irsr-adapter: {e}", file=sys.stderr)
            return EXIT_PROTOCOL
        if header is None:
            return 0  # clean shutdown on EOF

        if header.get("op") != "restore" or header.get("dtype") != WIRE_DTYPE:
            write_header(
                stdout,
                {"op": "error", "message": f"unsupported request {header!r}"},
            )
            return EXIT_PROTOCOL
        try:
            h = int(header["height"])
            w = int(header["width"])
            c = int(header["channels"])
        except (KeyError, TypeError, ValueError):
            write_header(stdout, {"op": "error", "message": "bad request dims"})
            return EXIT_PROTOCOL
        if h < 1 or w < 1 or c not in (1, 3):
            write_header(stdout, {"op": "error", "message": "bad request dims"})
            return EXIT_PROTOCOL
        if c != model.channels:
            write_header(
                stdout,
                {"op": "error",
                 "message": f"adapter serves {model.channels} channel(s), got {c}"},
            )
            return EXIT_PROTOCOL

        try:
            payload = read_exact(stdin, h * w * c * 4)
        except WireViolation as e:
            print(f"irsr-adapter: {e}", file=sys.stderr)
            return EXIT_PROTOCOL

        try:
            body = model.restore_payload(payload, h, w, c)
        except Exception as e:  # noqa: BLE001 - reported over the wire
            write_header(stdout, {"op": "error", "message": f"model failure: {e}"})
            return 1

        write_header(
            stdout,
            {
                "op": "result",
                "width": w * model.scale,
                "height": h * model.scale,
                "channels": c,
                "dtype": WIRE_DTYPE,
            },
        )
        stdout.write(body)
        stdout.flush()
