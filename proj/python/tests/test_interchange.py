import os
import struct
from pathlib import Path

import numpy as np

import sarasteer as ss

DATA = Path(os.environ.get("SARA_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def encode(data, layer, model_tag, prompt_tag):
    data = np.ascontiguousarray(data, dtype="<f4")
    out = b"SARA" + struct.pack("<IQQI", 1, data.shape[0], data.shape[1], layer)
    for s in (model_tag.encode(), prompt_tag.encode()):
        out += struct.pack("<I", len(s)) + s
    return out + data.tobytes()


def decode(raw):
    assert raw[:4] == b"SARA"
    version, n, t, layer = struct.unpack_from("<IQQI", raw, 4)
    pos = 4 + struct.calcsize("<IQQI")
    tags = []
    for _ in range(2):
        (k,) = struct.unpack_from("<I", raw, pos)
        tags.append(raw[pos + 4 : pos + 4 + k].decode())
        pos += 4 + k
    data = np.frombuffer(raw, dtype="<f4", count=n * t, offset=pos).reshape(n, t)
    assert pos + 4 * n * t == len(raw)
    return version, layer, tags, data


def test_golden_file_matches_reference_encoder():
    raw = (DATA / "fixtures" / "golden.actdump").read_bytes()
    data = np.array([[0.5, -1.25, 3.0], [1e-3, 0.0, -2.5]], dtype=np.float32)
    assert encode(data, 14, "toy-model", "golden") == raw
    d = ss.load_dump(DATA / "fixtures" / "golden.actdump")
    np.testing.assert_array_equal(d["data"], data)


def test_engine_writes_what_the_reference_decoder_reads(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.normal(size=(64, 11)).astype(np.float32)
    ss.save_dump(data, tmp_path / "x.actdump", layer=14, model_tag="open-model", prompt_tag="prompt")
    raw = (tmp_path / "x.actdump").read_bytes()
    version, layer, tags, back = decode(raw)
    assert (version, layer, tags) == (1, 14, ["open-model", "prompt"])
    np.testing.assert_array_equal(back, data)
    assert raw == encode(data, 14, "open-model", "prompt")


def test_lambda_csv_contract(tmp_path):
    lam = ss.load_lambda_csv(DATA / "fixtures" / "golden_lambda.csv")
    np.testing.assert_array_equal(lam, [1.0, -0.5])
    rng = np.random.default_rng(8)
    values = rng.uniform(-2, 2, size=64)
    ss.save_lambda_csv(values, tmp_path / "l.csv")
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "neuron,lambda"
    parsed = np.array([float(line.split(",")[1]) for line in lines[1:]])
    np.testing.assert_array_equal(parsed, values)
