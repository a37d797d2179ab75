import json
import math

import pytest

import cavq


def test_schedule_endpoints_and_csv():
    s = cavq.Schedule.linear(0.8, 0.4, 40)
    assert s.threshold(0) == 0.8
    assert s.threshold(40) == 0.4
    assert s.threshold(100) == 0.4
    csv = cavq.schedule_csv(cavq.Schedule.linear(0.8, 0.4, 2), steps_per_epoch=3, samples_per_epoch=10.0)
    assert csv.splitlines()[0] == "epoch,step,t_thresh,expected_augmented"
    assert len(csv.splitlines()) == 4
    with pytest.raises(cavq.ValidationError):
        cavq.Schedule.linear(0.2, 0.6, 10).threshold(0)


def test_metrics():
    assert cavq.accuracy([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5
    with pytest.raises(cavq.ContractError):
        cavq.accuracy([1], [1, 2])
    assert cavq.cider(["a red cat sits here"], [["a red cat sits here"]]) == 1.0
    assert cavq.cider(["x y"], [["p q"]]) == 0.0
    assert cavq.tokenize("The  Cat") == ["the", "cat"]


def test_generate_train_and_load(tmp_path):
    spec = cavq.SyntheticSpec()
    spec.num_classes = 3
    spec.samples_per_class = 20
    spec.d_img = 8
    spec.d_text = 8
    spec.pool_size = 4
    sizes = cavq.generate(spec, 1, tmp_path / "data")
    assert sizes == {"train": 48, "dev": 6, "test": 6}

    code, out, _ = cavq.run_cli([
        "--seed", "1", "--out", str(tmp_path / "run"), "train", "--num-seeds", "2",
        "--data", str(tmp_path / "data"), "--d", "6", "--lr", "0.01", "--epochs", "3", "--patience", "2",
    ])
    assert code == 0
    assert out.startswith("B+Aug accuracy: ")

    ck = cavq.load_checkpoint(tmp_path / "run" / "seed_1" / "best.ckpt")
    assert ck["dims"] == {"d": 6, "d_img": 8, "d_text": 8, "d_k": 4, "num_classes": 3}
    assert ck["weights"]["W_CLS"].shape == (6, 3)
    assert ck["weights"]["W_out"].shape == (4, 8)
    assert ck["metadata"]["seed"] == 1
    assert all(math.isfinite(v) for v in ck["weights"]["W_I"].ravel())
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert len(summary["seeds"]) == 2


def test_invalid_spec_and_cli_errors(tmp_path):
    spec = cavq.SyntheticSpec()
    spec.paraphrase_noise = 5.0
    with pytest.raises(cavq.ValidationError):
        spec.validate()
    code, _, err = cavq.run_cli(["eval", "--checkpoint", str(tmp_path / "missing.ckpt")])
    assert code == 2
    assert err
