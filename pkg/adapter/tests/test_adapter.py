"""Protocol conformance for the adapter, driven end to end through the
harness's external-backend machinery plus raw-socket style checks."""

import json
import subprocess

import numpy as np
import pytest

from irsr.backends import external_backend
from irsr.errors import BackendError, HandshakeError
from irsr.image import Image
from irsr.resample import nearest_upscale

from irsr_adapter.models import AdapterConfig, denormalize, normalize

from conftest import adapter_cmd


def f32_image(rng, h, w, c=1):
    return Image(rng.random((h, w, c)).astype(np.float32).astype(np.float64))


class TestIdentityLoopback:
    def test_bitwise_roundtrip_through_harness_path(self, rng):
        img = f32_image(rng, 9, 13)
        with external_backend(adapter_cmd("--kind", "identity")) as b:
            assert b.scale == 1
            assert b.channels == 1
            assert not b.supports_internal_tlc
            out = b.restore(img)
        assert np.array_equal(out.data, img.data)

    def test_serial_requests_answered_in_order(self, rng):
        images = [f32_image(rng, 4 + i, 6) for i in range(5)]
        with external_backend(adapter_cmd("--kind", "identity")) as b:
            for img in images:
                assert np.array_equal(b.restore(img).data, img.data)

    def test_all_zero_payload_roundtrips(self):
        img = Image(np.zeros((5, 5, 1)))
        with external_backend(adapter_cmd("--kind", "identity")) as b:
            assert np.array_equal(b.restore(img).data, img.data)

    def test_three_channel_mode(self, rng):
        img = f32_image(rng, 6, 6, 3)
        with external_backend(adapter_cmd("--kind", "identity", "--channels", 3)) as b:
            assert np.array_equal(b.restore(img).data, img.data)


class TestHandshakeRejection:
    def run_handshake(self, hello_line, *extra):
        proc = subprocess.Popen(
            adapter_cmd("--kind", "identity", *extra),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        out, _ = proc.communicate(hello_line, timeout=30)
        return proc.returncode, out

    def test_wrong_protocol_version_rejected(self):
        code, out = self.run_handshake(b'{"proto": "irsr/2", "op": "hello"}\n')
        reply = json.loads(out.splitlines()[0])
        assert reply["op"] == "error"
        assert "irsr/1" in reply["message"]
        assert code != 0

    def test_wrong_op_rejected(self):
        code, out = self.run_handshake(b'{"proto": "irsr/1", "op": "howdy"}\n')
        assert json.loads(out.splitlines()[0])["op"] == "error"
        assert code != 0

    def test_garbage_handshake_rejected(self):
        code, out = self.run_handshake(b"not json at all\n")
        assert json.loads(out.splitlines()[0])["op"] == "error"
        assert code != 0

    def test_truncated_payload_terminates_nonzero(self):
        proc = subprocess.Popen(
            adapter_cmd("--kind", "identity"),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        request = (
            b'{"proto": "irsr/1", "op": "hello"}\n'
            b'{"op": "restore", "width": 4, "height": 4, "channels": 1, '
            b'"dtype": "f32le"}\n' + b"\x00" * 10  # 64 bytes due
        )
        proc.communicate(request, timeout=30)
        assert proc.returncode != 0


class TestCheckpointServing:
    def test_scale4_contract_and_values(self, rng, toy_x4_checkpoint):
        img = f32_image(rng, 7, 9)
        cmd = adapter_cmd(
            "--kind", "mambairv2", "--checkpoint", toy_x4_checkpoint,
            "--scale", 4, "--pad-multiple", 1,
        )
        with external_backend(cmd) as b:
            assert b.scale == 4
            out = b.restore(img)
        assert out.shape == (28, 36, 1)
        assert np.array_equal(out.data, nearest_upscale(img, 4).data)

    def test_window_padding_hides_model_size_constraint(self, rng, windowed_x4_checkpoint):
        # 33x47 is no multiple of 32; the adapter pads, the crop restores
        # exact dims, and replication makes the result comparable bitwise.
        img = f32_image(rng, 33, 47)
        cmd = adapter_cmd(
            "--kind", "hat", "--checkpoint", windowed_x4_checkpoint, "--scale", 4,
        )
        with external_backend(cmd) as b:
            out = b.restore(img)
        assert out.shape == (132, 188, 1)
        assert np.array_equal(out.data, nearest_upscale(img, 4).data)

    def test_internal_tlc_flag_announced(self, rng, windowed_x4_checkpoint):
        cmd = adapter_cmd(
            "--kind", "hat", "--checkpoint", windowed_x4_checkpoint,
            "--scale", 4, "--internal-tlc",
        )
        with external_backend(cmd) as b:
            assert b.supports_internal_tlc

    def test_wrong_scale_config_fails_at_startup(self, toy_x4_checkpoint):
        cmd = adapter_cmd(
            "--kind", "mambairv2", "--checkpoint", toy_x4_checkpoint, "--scale", 2,
        )
        with pytest.raises((HandshakeError, BackendError)):
            external_backend(cmd, timeout=30)

    def test_channel_mismatch_is_protocol_error(self, rng):
        img = f32_image(rng, 4, 4, 3)
        with external_backend(adapter_cmd("--kind", "identity")) as b:
            with pytest.raises(BackendError):
                b.restore(img)


class TestNormalization:
    def test_identity_mapping_for_unit_range(self, rng):
        samples = rng.random((3, 8, 8)).astype(np.float32)
        assert np.array_equal(normalize(samples, "01"), samples)
        assert np.array_equal(denormalize(samples.astype(np.float64), "01"), samples)

    def test_roundtrip_within_tolerance(self, rng):
        for input_range in ("01", "255"):
            samples = rng.random((1, 16, 16)).astype(np.float64)
            back = denormalize(normalize(samples, input_range), input_range)
            assert np.abs(back - samples).max() < 1e-6

    def test_denormalize_clips(self):
        assert denormalize(np.array([-0.5, 0.5, 1.5]), "01").tolist() == [0.0, 0.5, 1.0]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdapterConfig(kind="identity", scale=4)
        with pytest.raises(ValueError):
            AdapterConfig(kind="hat", scale=4)  # no checkpoint
        with pytest.raises(ValueError):
            AdapterConfig(kind="mambairv2", checkpoint="x.pt", scale=4,
                          internal_tlc=True)
        with pytest.raises(ValueError):
            AdapterConfig(kind="upscaletron", scale=4)
