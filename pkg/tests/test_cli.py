import json

import numpy as np
import pytest
import yaml

from steamgen import __version__
from steamgen.cli import main
from steamgen.data import load_csv, load_schema
from steamgen.serialize import load_document


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--n", "300", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim):
    schema = load_schema(sim / "schema.yaml")
    ds = load_csv(sim / "data.csv", schema)
    assert ds.n == 300 and len(schema) == 12
    side = yaml.safe_load((sim / "dgp.yaml").read_text())
    assert side["version"] == __version__ and side["seed"] == 3
    assert "oracle" in side and side["config"]["n"] == 300
    head = (sim / "data.csv").read_text().splitlines()[:3]
    assert head[0].startswith("# steamgen") and "seed: 3" in head[1] and "config:" in head[2]


def test_simulate_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--n", "50", "--seed", "8", "--out", str(tmp_path / name)]) == 0
    for f in ("data.csv", "schema.yaml", "dgp.yaml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_bad_kw(tmp_path, capsys):
    assert main(["simulate", "--d", "3", "--k-w", "5", "--out", str(tmp_path)]) == 2
    assert "K_w" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("d: 4\nbogus: 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("d: 4\nn: 50\nseed: 9\n")
    assert main(["simulate", "--config", str(cfg), "--n", "60", "--out", str(tmp_path / "o")]) == 0
    ds = load_csv(tmp_path / "o" / "data.csv", load_schema(tmp_path / "o" / "schema.yaml"))
    assert (ds.n, ds.d) == (60, 4)
    assert "seed: 9" in (tmp_path / "o" / "data.csv").read_text()


def test_bad_usage():
    assert main([]) == 2
    assert main(["simulate", "--no-such-flag"]) == 2
    assert main(["simulate", "--n", "abc"]) == 2


def test_generate_steam(sim, tmp_path):
    out = tmp_path / "g"
    args = ["generate", "--real", str(sim / "data.csv"), "--schema", str(sim / "schema.yaml"),
            "--out", str(out), "--regressor", "ridge"]
    assert main(args) == 0
    real_schema = load_schema(sim / "schema.yaml")
    synth = load_csv(out / "synthetic.csv", real_schema)
    assert synth.n == 300 and load_schema(out / "schema.yaml") == real_schema
    model, meta = load_document((out / "model.json").read_text())
    assert meta["version"] == __version__ and meta["config"]["regressor"] == "ridge"
    # a saved model regenerates the same rows
    again = tmp_path / "g2"
    assert main(["generate", "--model-file", str(out / "model.json"), "--n", "300", "--out", str(again)]) == 0
    np.testing.assert_array_equal(load_csv(again / "synthetic.csv", real_schema).table(), synth.table())


def test_generate_joint_and_known_propensity(sim, tmp_path):
    base = ["--real", str(sim / "data.csv"), "--schema", str(sim / "schema.yaml"), "--regressor", "ridge"]
    assert main(["generate", *base, "--model", "joint", "--generator", "marginal_hist",
                 "--out", str(tmp_path / "j")]) == 0
    meta = yaml.safe_load((tmp_path / "j" / "generation.yaml").read_text())
    assert meta["generation"]["model"] == "JointModel"
    assert main(["generate", *base, "--known-propensity", "0.5", "--out", str(tmp_path / "k")]) == 0
    meta = yaml.safe_load((tmp_path / "k" / "generation.yaml").read_text())
    assert meta["generation"]["propensity"] == "FixedPropensity(0.5)"
    assert main(["generate", *base, "--model", "vae", "--out", str(tmp_path / "v")]) == 2


def test_generate_missing_input(tmp_path):
    assert main(["generate", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--real", "nope.csv", "--schema", "nope.yaml", "--out", str(tmp_path)]) == 2


def _kv(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_evaluate_copy(sim, tmp_path):
    out = tmp_path / "e"
    assert main(["evaluate", "--real", str(sim / "data.csv"), "--synth", str(sim / "data.csv"),
                 "--schema", str(sim / "schema.yaml"), "--repeats", "2", "--regressor", "ridge",
                 "--out", str(out)]) == 0
    kv = _kv(out / "report.kv")
    assert float(kv["jsd_pi.mean"]) >= 1 - 1e-9
    assert float(kv["u_pehe.mean"]) == 0 and float(kv["u_policy.mean"]) == 1
    assert kv["version"] == __version__ and kv["config_digest"]
    text = (out / "report.txt").read_text()
    assert "variant:" in text and "config_digest" in text


def test_evaluate_baseline_only(sim, tmp_path):
    out = tmp_path / "b"
    assert main(["evaluate", "--real", str(sim / "data.csv"), "--synth", str(sim / "data.csv"),
                 "--schema", str(sim / "schema.yaml"), "--metrics", "baseline", "--repeats", "1",
                 "--out", str(out)]) == 0
    kv = _kv(out / "report.kv")
    assert "ks_score.mean" in kv and "jsd_pi.status" not in kv


def test_evaluate_zero_w_partial_failure(sim, tmp_path):
    from steamgen.data import save_csv
    from steamgen.simulate import adversarial_synth

    real = load_csv(sim / "data.csv", load_schema(sim / "schema.yaml"))
    save_csv(adversarial_synth(real, "zero_w", 1), tmp_path / "zw.csv")
    out = tmp_path / "e"
    code = main(["evaluate", "--real", str(sim / "data.csv"), "--synth", str(tmp_path / "zw.csv"),
                 "--schema", str(sim / "schema.yaml"), "--repeats", "1", "--regressor", "ridge",
                 "--out", str(out)])
    assert code == 0
    kv = _kv(out / "report.kv")
    assert float(kv["jsd_pi.mean"]) < 0.6 and float(kv["precision.mean"]) > 0.9
    assert kv["u_pehe.status"] == "failed"


def test_evaluate_all_failed_is_runtime_error(tmp_path, sim):
    from steamgen.data import save_csv
    from steamgen.simulate import adversarial_synth

    real = load_csv(sim / "data.csv", load_schema(sim / "schema.yaml"))
    save_csv(adversarial_synth(real, "zero_w", 1), tmp_path / "zw.csv")
    assert main(["evaluate", "--real", str(sim / "data.csv"), "--synth", str(tmp_path / "zw.csv"),
                 "--schema", str(sim / "schema.yaml"), "--metrics", "u_pehe", "--repeats", "1",
                 "--regressor", "ridge", "--out", str(tmp_path / "e")]) == 3


def test_evaluate_unknown_metric(sim, tmp_path):
    assert main(["evaluate", "--real", str(sim / "data.csv"), "--synth", str(sim / "data.csv"),
                 "--schema", str(sim / "schema.yaml"), "--metrics", "fid", "--out", str(tmp_path)]) == 2


def test_dp_generate(sim, tmp_path):
    out = tmp_path / "dp"
    assert main(["dp-generate", "--real", str(sim / "data.csv"), "--schema", str(sim / "schema.yaml"),
                 "--epsilon", "2", "--delta", "1e-6", "--weights", "0.25,0.25,0.5", "--out", str(out)]) == 0
    lines = [l for l in (out / "ledger.csv").read_text().splitlines() if not l.startswith("#")]
    rows = {l.split(",")[0]: l.split(",") for l in lines[1:]}
    assert float(rows["Q_X"][1]) == 0.5 and float(rows["Q_Y"][1]) == 1.0
    assert float(rows["total"][1]) == 2.0 and float(rows["total"][2]) == 1e-6
    assert main(["dp-generate", "--real", str(sim / "data.csv"), "--schema", str(sim / "schema.yaml"),
                 "--epsilon", "0", "--out", str(out)]) == 2
    assert main(["dp-generate", "--real", str(sim / "data.csv"), "--schema", str(sim / "schema.yaml"),
                 "--weights", "0.5,0.6,0.1", "--out", str(out)]) == 2


def test_benchmark(tmp_path):
    assert main(["benchmark", "--sweep", "nope", "--out", str(tmp_path)]) == 2
    assert main(["benchmark", "--sweep", "theorem1", "--out", str(tmp_path)]) == 0
    body = [l for l in (tmp_path / "results.csv").read_text().splitlines() if not l.startswith("#")]
    assert body[0] == "sweep,knob,value,seed,model,metric,result"
    assert (tmp_path / "summary.csv").exists()


def test_benchmark_small_generative(tmp_path):
    assert main(["benchmark", "--sweep", "dimensionality", "--values", "5", "--repeats", "1",
                 "--n", "200", "--regressor", "ridge", "--out", str(tmp_path)]) == 0
    body = [l for l in (tmp_path / "results.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(body) - 1 == 1 * 2 * 1 * 2  # values x models x repeats x metrics
