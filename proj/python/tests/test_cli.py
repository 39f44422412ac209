import hashlib
import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("SARA_CLI")
DATA = Path(os.environ.get("SARA_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))

pytestmark = pytest.mark.skipif(not CLI, reason="command-line tool not built")


def run(*args, env=None, cwd=None):
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=e, cwd=cwd)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def test_steer_align_equals_repel_matches_unsteered(tmp_path):
    r = run("steer", "--layers", "14", "--samples", "3", "--max-tokens", "6",
            "--align", "same text", "--repel", "same text", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    base = [x["tokens"] for x in read_jsonl(tmp_path / "unsteered.jsonl")]
    steered = [x["tokens"] for x in read_jsonl(tmp_path / "layer_14" / "kantian" / "samples.jsonl")]
    assert base == steered


def test_steer_is_deterministic(tmp_path):
    args = ("steer", "--layers", "3", "--samples", "2", "--max-tokens", "4")
    assert run(*args, "--out", tmp_path / "a").returncode == 0
    assert run(*args, "--out", tmp_path / "b").returncode == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_steer_full_range_both_directions(tmp_path):
    r = run("steer", "--layers", "0..17", "--direction", "both", "--samples", "1", "--max-tokens", "1",
            "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    sets = [p for p in tmp_path.glob("layer_*/*") if p.is_dir()]
    assert len(sets) == 36


def test_output_dir_from_environment(tmp_path):
    r = run("steer", "--layers", "1", "--samples", "1", "--max-tokens", "1",
            env={"SARA_OUTPUT_DIR": str(tmp_path / "env_out")})
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "env_out" / "manifest.json").exists()


def test_sweep_groups_and_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[sweep]\nsamples = 1\nmax-tokens = 1\nn-layers = 3\nout = "%s"\n' % (tmp_path / "sw"))
    r = run("--config", cfg, "sweep")
    assert r.returncode == 0, r.stderr
    doc = json.loads((tmp_path / "sw" / "sweep.json").read_text())
    assert [(g["first"], g["last"]) for g in doc["groups"]] == [(0, 0), (1, 1), (2, 2)]
    # Flags override the file.
    r = run("--config", cfg, "sweep", "--n-layers", "18", "--layers", "0,17", "--out", tmp_path / "sw18")
    assert r.returncode == 0, r.stderr
    doc = json.loads((tmp_path / "sw18" / "sweep.json").read_text())
    assert [(g["first"], g["last"]) for g in doc["groups"]] == [(0, 5), (6, 11), (12, 17)]


def test_exit_codes(tmp_path):
    assert run("steer", "--layers", "18", "--out", tmp_path).returncode == 2
    assert run("steer", "--samples", "0", "--out", tmp_path).returncode == 2
    assert run("analyze", "--analysis", "nope", "--out", tmp_path).returncode == 2
    assert run("analyze", "--nope").returncode == 2
    assert run("frobnicate").returncode == 2
    assert run("dump-inspect", tmp_path / "missing.actdump").returncode == 3
    (tmp_path / "bad.actdump").write_bytes(b"XXXX")
    assert run("dump-inspect", tmp_path / "bad.actdump").returncode == 1


def test_analyze_consistency_fixture(tmp_path):
    r = run("analyze", "--consistency", "--records", DATA / "fixtures" / "consistency_5rep.jsonl",
            "--bootstrap", "200", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    rows = json.loads((tmp_path / "consistency.json").read_text())["rows"]
    first = [x for x in rows if x["model_tag"] == "model-a" and x["dilemma_id"] == "criminal_father"][0]
    assert first["consistency"] == 50.0


def test_analyze_ami_identical_files(tmp_path):
    labels = tmp_path / "labels.txt"
    labels.write_text("Deontology\nVirtue Ethics\nDeontology\nAct Utilitarianism\nVirtue Ethics\n")
    r = run("analyze", "--ami", "--labels-a", labels, "--labels-b", labels, "--surrogates", "100",
            "--out", tmp_path / "out")
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "out" / "ami.json").read_text())["ami"] == pytest.approx(1.0, abs=1e-12)


def test_manifest_input_hash_tracks_bytes(tmp_path):
    p = tmp_path / "p.txt"

    def digest(content, name):
        p.write_text(content)
        assert run("analyze", "--fdr", "--pvalues", p, "--out", tmp_path / name).returncode == 0
        return json.loads((tmp_path / name / "manifest.json").read_text())["inputs_digest"]

    a = digest("0.01\n0.04\n", "a")
    b = digest("0.01\n0.05\n", "b")
    c = digest("0.01\n0.04\n", "c")
    assert a != b and a == c


def test_analyze_row_errors_exit_nonzero(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text((DATA / "fixtures" / "consistency_5rep.jsonl").read_text() + "not json\n")
    r = run("analyze", "--fractions", "--records", bad, "--out", tmp_path / "out")
    assert r.returncode == 1
    assert (tmp_path / "out" / "errors.json").exists()


def test_mfq_score_and_analysis(tmp_path):
    header = "model_tag,repetition," + ",".join(f"item_{i}" for i in range(1, 33))
    rows = [header]
    for model, base in (("a", 1), ("b", 4)):
        for rep in range(5):
            answers = [str((base + rep + i) % 2 + base) for i in range(32)]
            answers[5], answers[21] = "0", "5"
            rows.append(f"{model},{rep}," + ",".join(answers))
    csv = tmp_path / "mfq.csv"
    csv.write_text("\n".join(rows) + "\n")
    r = run("mfq-score", csv)
    assert r.returncode == 0, r.stderr
    assert len(r.stdout.strip().splitlines()) == 11
    r = run("analyze", "--mfq", "--mfq-csv", csv, "--out", tmp_path / "out")
    assert r.returncode == 0, r.stderr
    tests = json.loads((tmp_path / "out" / "mfq.json").read_text())["tests"]["tests"]
    assert len(tests) == 5


def test_dump_inspect_on_steer_output(tmp_path):
    assert run("steer", "--layers", "14", "--samples", "1", "--max-tokens", "1", "--out", tmp_path).returncode == 0
    r = run("dump-inspect", tmp_path / "layer_14" / "kantian" / "prompt.actdump")
    assert r.returncode == 0
    info = json.loads(r.stdout)
    assert info["n_neurons"] == 64 and info["layer"] == 14 and info["warnings"] == []
    assert "warning" not in r.stderr


def test_compare_methods(tmp_path):
    r = run("compare-methods", "--synthetic", "8", "--seed", "3", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    rows = json.loads((tmp_path / "compare.json").read_text())["synthetic"]
    assert len(rows) == 4
    assert run("compare-methods", "--out", tmp_path).returncode == 2
