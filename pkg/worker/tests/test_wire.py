import io

import numpy as np
import pytest

from gimpml_worker import wire


def _tensor(rng, shape=(3, 4, 5)):
    return rng.random(shape).astype(np.float32)


class TestTensorCodec:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        t = _tensor(rng)
        back = wire.read_tensor(io.BytesIO(wire.write_tensor(t)))
        assert back.shape == t.shape
        assert back.tobytes() == t.tobytes()

    def test_rejects_unknown_dtype(self):
        raw = bytearray(wire.write_tensor(np.zeros((1, 1, 1), dtype=np.float32)))
        raw[0] = 7
        with pytest.raises(wire.FramingError, match="dtype"):
            wire.read_tensor(io.BytesIO(bytes(raw)))

    def test_rejects_truncated_payload(self):
        raw = wire.write_tensor(np.zeros((1, 2, 2), dtype=np.float32))
        with pytest.raises(wire.FramingError, match="early"):
            wire.read_tensor(io.BytesIO(raw[:-2]))


class TestRequestCodec:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        req = wire.Request(5, 1, {"scale": 2.0, "seed": 9.0}, [_tensor(rng)])
        raw = wire.write_request(req)
        stream = io.BytesIO(raw)
        assert stream.read(4) == wire.MAGIC
        back = wire.read_request(stream)
        assert stream.read() == b""
        assert (back.task_id, back.device_id) == (5, 1)
        assert back.params == req.params
        assert back.tensors[0].tobytes() == req.tensors[0].tobytes()

    def test_exact_binary_layout(self):
        t = np.array([[[0.0, 1.0]]], dtype=np.float32)
        raw = wire.write_request(wire.Request(11, 0, {"k": 2.0}, [t]))
        expected = (
            b"GML1"
            + bytes([11, 0])
            + (1).to_bytes(2, "little")
            + (1).to_bytes(2, "little") + b"k" + np.float64(2.0).tobytes()
            + (1).to_bytes(2, "little")
            + bytes([0, 3])
            + (1).to_bytes(4, "little") * 2 + (2).to_bytes(4, "little")
            + np.array([0.0, 1.0], dtype="<f4").tobytes()
        )
        assert raw == expected


class TestResponseCodec:
    def test_ok_round_trip(self):
        rng = np.random.default_rng(2)
        tensors = [_tensor(rng), _tensor(rng, (1, 2, 2))]
        status, message, back = wire.read_response(io.BytesIO(wire.ok_frame(tensors)))
        assert status == wire.OK and message == ""
        assert len(back) == 2
        for a, b in zip(back, tensors):
            assert a.tobytes() == b.tobytes()

    def test_error_round_trip(self):
        raw = wire.error_frame(wire.TASK_ERROR, "nope")
        status, message, tensors = wire.read_response(io.BytesIO(raw))
        assert (status, message, tensors) == (wire.TASK_ERROR, "nope", [])
