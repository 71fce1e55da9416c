"""Container format: round-trips and failure modes."""

import struct

import numpy as np
import pytest

from trojanscan.container import FORMAT_VERSION, read_container, write_container
from trojanscan.errors import FormatError, TruncatedFileError, VersionError
from trojanscan.nn import build_cnn, load_model, save_model


class TestModelRoundTrip:
    def test_bit_exact(self, tmp_path):
        model = build_cnn((3, 16, 16), 5, seed=3)
        path = str(tmp_path / "model.tscp")
        save_model(model, path)
        back = load_model(path)
        assert back.input_shape == model.input_shape
        assert back.num_classes == model.num_classes
        assert back.provenance == model.provenance
        assert len(back.weights) == len(model.weights)
        for a, b in zip(model.weights, back.weights):
            assert set(a) == set(b)
            for k in a:
                np.testing.assert_array_equal(a[k], b[k])

    def test_provenance_survives(self, tmp_path):
        import dataclasses
        model = build_cnn((3, 16, 16), 5, seed=3)
        model = dataclasses.replace(model, provenance={"kind": "trojan", "targets": [2]})
        path = str(tmp_path / "model.tscp")
        save_model(model, path)
        assert load_model(path).provenance == {"kind": "trojan", "targets": [2]}


class TestContainerErrors:
    def _write_model(self, tmp_path):
        path = str(tmp_path / "model.tscp")
        save_model(build_cnn((3, 16, 16), 2, seed=0), path)
        return path

    def test_corrupt_magic(self, tmp_path):
        path = self._write_model(tmp_path)
        raw = bytearray(open(path, "rb").read())
        raw[:4] = b"XXXX"
        open(path, "wb").write(raw)
        with pytest.raises(FormatError, match="magic"):
            load_model(path)

    def test_newer_version(self, tmp_path):
        path = self._write_model(tmp_path)
        raw = bytearray(open(path, "rb").read())
        raw[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
        open(path, "wb").write(raw)
        with pytest.raises(VersionError, match="newer"):
            load_model(path)

    def test_truncated_payload(self, tmp_path):
        path = self._write_model(tmp_path)
        raw = open(path, "rb").read()
        open(path, "wb").write(raw[: len(raw) // 2])
        with pytest.raises(TruncatedFileError):
            load_model(path)

    def test_truncated_preamble(self, tmp_path):
        path = str(tmp_path / "stub.tscp")
        open(path, "wb").write(b"TS")
        with pytest.raises(TruncatedFileError):
            read_container(path)

    def test_wrong_kind(self, tmp_path):
        path = str(tmp_path / "other.tscp")
        write_container(path, {"kind": "dataset"}, [("x", np.zeros(3))])
        with pytest.raises(FormatError, match="not a model"):
            load_model(path)

    def test_version_error_is_format_error(self):
        assert issubclass(VersionError, FormatError)
        assert issubclass(TruncatedFileError, FormatError)
