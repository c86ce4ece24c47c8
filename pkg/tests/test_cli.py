from __future__ import annotations

import json

import numpy as np
import pytest

from pianofill.checkpoint import load_checkpoint, save_checkpoint
from pianofill.cli import main
from pianofill.codec import encode, text_to_tokens
from pianofill.midi import parse_midi, write_midi
from pianofill.model.config import ModelConfig
from pianofill.model.network import init_params

from conftest import random_performance


@pytest.fixture
def midi_file(tmp_path, rng):
    perf = random_performance(rng, 24)
    path = tmp_path / "clip.mid"
    path.write_bytes(write_midi(perf))
    return path, perf


class TestEncodeDecode:
    def test_encode_matches_library(self, midi_file, tmp_path, capsys):
        path, _perf = midi_file
        out = tmp_path / "tokens.txt"
        assert main(["encode", "--in", str(path), "--out", str(out)]) == 0
        tokens = text_to_tokens(out.read_text())
        assert tokens == encode(parse_midi(path.read_bytes()))

    def test_round_trip_through_cli(self, midi_file, tmp_path):
        path, _ = midi_file
        tokens_file = tmp_path / "t.txt"
        back = tmp_path / "back.mid"
        main(["encode", "--in", str(path), "--out", str(tokens_file)])
        main(["decode", "--in", str(tokens_file), "--out", str(back)])
        reparsed = encode(parse_midi(back.read_bytes()))
        assert reparsed == text_to_tokens(tokens_file.read_text())


class TestTrainCli:
    def test_train_writes_checkpoint_and_logs(self, tmp_path, rng, capsys):
        data = tmp_path / "data"
        data.mkdir()
        for i in range(3):
            (data / f"p{i}.mid").write_bytes(write_midi(random_performance(rng, 30)))
        ckpt = tmp_path / "model.ckpt"
        rc = main(["train", "--data", str(data), "--out", str(ckpt),
                   "--steps", "3", "--seed", "1", "--chunk-notes", "16",
                   "--batch-size", "2", "--preset", "toy", "--warmup", "3"])
        assert rc == 0
        lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
        assert len(lines) == 3 and "loss" in lines[0]
        params, cfg, step = load_checkpoint(ckpt)
        assert step == 3
        assert cfg == ModelConfig.toy()


class TestInpaintCli:
    def test_inpaint_with_random_model(self, midi_file, tmp_path, capsys):
        path, perf = midi_file
        cfg = ModelConfig.toy()
        ckpt = tmp_path / "toy.ckpt"
        save_checkpoint(ckpt, init_params(cfg, np.random.default_rng(0)), cfg)
        out = tmp_path / "out.mid"
        rc = main(["inpaint", "--ckpt", str(ckpt), "--in", str(path),
                   "--out", str(out), "--start", "1.0", "--end", "2.0",
                   "--density", "4", "--seed", "9"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["generated"] == 4
        result = parse_midi(out.read_bytes())
        assert len(result) == report["notes"]

    def test_unconditional_no_input(self, tmp_path, capsys):
        cfg = ModelConfig.toy()
        ckpt = tmp_path / "toy.ckpt"
        save_checkpoint(ckpt, init_params(cfg, np.random.default_rng(0)), cfg)
        out = tmp_path / "gen.mid"
        rc = main(["inpaint", "--ckpt", str(ckpt), "--out", str(out),
                   "--mode", "unconditional", "--note-count", "6", "--seed", "2"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["generated"] == 6
