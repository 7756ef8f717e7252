import json

import numpy as np
import pytest

from herosgan import __version__
from herosgan.cli import main
from herosgan.nets import ArchConfig, init_params, save_checkpoint
from herosgan.signal import Signal, load_csv, rng_for, save_csv


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--out", str(root / "d"), "--n-episodes", "3", "--seed", "5"]) == 0
    return root


def _tiny_config(path):
    path.write_text(json.dumps({"train": {"window": 32, "channels": 4, "mid_kernel": 3, "disc_channels": 4, "batch": 2}}))
    return str(path)


def _train(dataset, tmp_path, *flags):
    cfg = _tiny_config(tmp_path / "c.json")
    args = ["train", "--config", cfg, "--low-dir", str(dataset / "d" / "low"),
            "--high-dir", str(dataset / "d" / "high"), "--steps", "1",
            "--checkpoint", str(tmp_path / "m.ckpt"), *flags]  # fmt: skip
    return main(args)


def _first_report(tmp_path):
    return json.loads((tmp_path / "m.steps.jsonl").read_text().splitlines()[0])


def test_generate_manifest_has_provenance(dataset):
    m = json.loads((dataset / "d" / "manifest.json").read_text())
    assert m["provenance"]["version"] == __version__
    assert m["provenance"]["config"]["generate"]["n_episodes"] == 3


def test_train_default_flags_have_both_terms(dataset, tmp_path):
    assert _train(dataset, tmp_path) == 0
    rep = _first_report(tmp_path)
    assert rep["losses"]["ots"] > 0 and rep["losses"]["mle"] > 0
    summary = json.loads((tmp_path / "m.summary.json").read_text())
    assert summary["version"] == __version__ and summary["config"]["train"]["steps"] == 1


def test_train_toggles_off(dataset, tmp_path):
    assert _train(dataset, tmp_path, "--no-ots", "--no-mle") == 0
    rep = _first_report(tmp_path)
    assert rep["losses"]["ots"] == 0.0 and rep["losses"]["mle"] == 0.0


def test_l1_substitute_with_ots_is_a_config_error(dataset, tmp_path, capsys):
    assert _train(dataset, tmp_path, "--ots", "--l1-substitute") == 2
    assert "mutually exclusive" in capsys.readouterr().err


def test_l1_substitute_alone_turns_ots_off(dataset, tmp_path):
    assert _train(dataset, tmp_path, "--l1-substitute") == 0
    assert _first_report(tmp_path)["losses"]["ots"] > 0


def test_train_missing_data_exit_code(tmp_path):
    assert main(["train", "--low-dir", str(tmp_path / "x"), "--high-dir", str(tmp_path / "y"),
                 "--steps", "1", "--checkpoint", str(tmp_path / "m.ckpt")]) == 3  # fmt: skip


def test_enhance_identity_checkpoint(dataset, tmp_path):
    save_checkpoint(tmp_path / "id.ckpt", init_params(ArchConfig()), extra={"scale": 12.0})
    src = dataset / "d" / "low" / "ep0000.csv"
    assert main(["enhance", str(tmp_path / "id.ckpt"), str(src), str(tmp_path / "out.csv")]) == 0
    np.testing.assert_allclose(load_csv(tmp_path / "out.csv").samples, load_csv(src).samples, atol=1e-10)


def test_enhance_missing_checkpoint(tmp_path, capsys):
    assert main(["enhance", str(tmp_path / "none.ckpt"), "a.csv", "b.csv"]) == 3
    assert "checkpoint not found" in capsys.readouterr().err


def test_evaluate_same_dirs_is_zero(dataset, tmp_path):
    high = str(dataset / "d" / "high")
    out = tmp_path / "r" / "report.json"
    assert main(["evaluate", "--ref", high, "--recon", high, "--input", str(dataset / "d" / "low"),
                 "--out", str(out)]) == 0  # fmt: skip
    rep = json.loads(out.read_text())
    assert all(p["csre"] == 0.0 for p in rep["pairs"])
    assert rep["summary"]["input_csre_mean"] > 0
    assert rep["version"] == __version__ and "train" in rep["config"]
    assert (tmp_path / "r" / "figures" / "csre.png").stat().st_size > 0


def test_evaluate_mismatched_dirs(dataset, tmp_path, capsys):
    other = tmp_path / "other"
    other.mkdir()
    save_csv(load_csv(dataset / "d" / "high" / "ep0000.csv"), other / "ep0000.csv")
    code = main(["evaluate", "--ref", str(dataset / "d" / "high"), "--recon", str(other),
                 "--out", str(tmp_path / "r.json"), "--no-figures"])  # fmt: skip
    assert code == 3
    err = capsys.readouterr().err
    assert "ep0001.csv" in err and "ep0002.csv" in err


def test_evaluate_allan_on_static_noise(tmp_path):
    save_csv(Signal(rng_for(2).normal(0, 0.02, (1, 20_000)), 0.01, "static"), tmp_path / "s.csv")
    out = tmp_path / "a.json"
    assert main(["evaluate", "--signal", str(tmp_path / "s.csv"), "--allan", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())["allan"]
    assert len(rep["taus"]) == len(rep["adev"]) > 10
    assert {"qn", "vrw", "bi", "flags"} <= set(rep) and rep["vrw"] > 0


def test_allan_command_writes_files(tmp_path):
    save_csv(Signal(rng_for(3).normal(0, 0.02, (2, 5000)), 0.01), tmp_path / "s.csv")
    assert main(["allan", "--signal", str(tmp_path / "s.csv"), "--axis", "1", "--out", str(tmp_path / "o")]) == 0
    for name in ("allan.json", "adev.csv", "allan.png"):
        assert (tmp_path / "o" / name).stat().st_size > 0
    assert main(["allan", "--signal", str(tmp_path / "s.csv"), "--axis", "5", "--out", str(tmp_path / "o")]) == 2


def test_bad_config_file_exit_code(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"nope": 1}}))
    assert main(["generate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")]) == 2
