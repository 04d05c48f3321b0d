from __future__ import annotations

import json
import struct

import numpy as np
import pytest
import torch

from mmdit_lab.exceptions import FingerprintMismatch, MissingTraceEntry, SerializationError
from mmdit_lab.interventions.engine import capture
from mmdit_lab.interventions.trace import load_trace, save_trace, sidecar_path
from mmdit_lab.mmdit.tokens import LayerId

from .factories import make_i2i

LAYERS = {LayerId.input_embedding(), LayerId.double(3), LayerId.single(0)}


def make_trace(model, config):
    return capture(model, make_i2i(config, 4, run_id="source-run"), LAYERS)


def test_trace_file_keeps_float32_values(tmp_path, model, config):
    trace = make_trace(model, config)
    loaded = load_trace(save_trace(trace, tmp_path / "a.trce"), config)
    assert loaded.source_run_id == "source-run"
    assert loaded.content_length == trace.content_length
    assert set(loaded.entries) == set(trace.entries)
    for key, matrix in trace.entries.items():
        assert torch.equal(loaded.entries[key], matrix.to(torch.float32).to(torch.float64))


def test_trace_from_another_config_is_rejected(tmp_path, model, config):
    path = save_trace(make_trace(model, config), tmp_path / "a.trce")
    with pytest.raises(FingerprintMismatch):
        load_trace(path, config.replace(seed=3))


def test_restricted_trace_drops_other_layers(model, config):
    trace = make_trace(model, config).restricted({LayerId.double(3)})
    assert trace.layers() == {LayerId.double(3)}
    with pytest.raises(MissingTraceEntry):
        trace.get(LayerId.single(0), 0)


def test_trace_is_read_only(model, config):
    trace = make_trace(model, config)
    with pytest.raises(TypeError):
        trace.entries[(LayerId.double(0), 0)] = torch.zeros(1)


@pytest.mark.parametrize("mangle", [
    lambda data: b"XXXX" + data[4:],
    lambda data: data[:4] + b"\x09\x00" + data[6:],
    lambda data: data[:-10],
    lambda data: data + b"\x00",
])
def test_corrupt_trace_files(tmp_path, model, config, mangle):
    path = save_trace(make_trace(model, config), tmp_path / "a.trce")
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(SerializationError):
        load_trace(path, config)


def read_plain_trce(data: bytes, text_len: int, d_model: int) -> tuple[int, bytes, dict]:
    assert data[:4] == b"TRCE"
    (version,) = struct.unpack_from("<H", data, 4)
    fingerprint = data[6:38]
    (count,) = struct.unpack_from("<I", data, 38)
    offset, entries = 42, {}
    for _ in range(count):
        kind, index, step = struct.unpack_from("<BHH", data, offset)
        offset += 5
        entries[(kind, index, step)] = np.frombuffer(
            data, dtype="<f4", count=text_len * d_model, offset=offset,
        ).reshape(text_len, d_model)
        offset += 4 * text_len * d_model
    assert offset == len(data)
    return version, fingerprint, entries


def test_trace_file_has_the_plain_layout(tmp_path, model, config):
    trace = make_trace(model, config)
    path = save_trace(trace, tmp_path / "a.trce")
    version, fingerprint, entries = read_plain_trce(path.read_bytes(), config.text_len, config.d_model)
    assert version == 1
    assert fingerprint == config.fingerprint()
    assert len(entries) == len(trace)
    kinds = {"input": 0, "double": 1, "single": 2}
    for (layer, step), matrix in trace.entries.items():
        stored = entries[(kinds[layer.kind.value], layer.index, step)]
        assert np.array_equal(stored, matrix.numpy().astype(np.float32))


def test_run_id_and_content_length_live_in_the_sidecar(tmp_path, model, config):
    trace = make_trace(model, config)
    path = save_trace(trace, tmp_path / "a.trce")
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    assert meta == {"content_length": trace.content_length, "source_run_id": "source-run"}


def test_bare_trace_file_loads_with_all_rows_as_content(tmp_path, model, config):
    path = save_trace(make_trace(model, config), tmp_path / "a.trce")
    sidecar_path(path).unlink()
    loaded = load_trace(path, config)
    assert loaded.source_run_id == "a"
    assert loaded.content_length == config.text_len


def test_corrupt_sidecar(tmp_path, model, config):
    path = save_trace(make_trace(model, config), tmp_path / "a.trce")
    sidecar_path(path).write_text('{"source_run_id": "x", "content_length": 9999}', encoding="utf-8")
    with pytest.raises(SerializationError):
        load_trace(path, config)
