import json

import numpy as np
import pytest
from PIL import Image

from kpp.cli import main
from kpp.harness import read_csv
from stub_server import StubOracleServer


@pytest.fixture
def png224(tmp_path, rng):
    """A structured 224x224 test image on disk."""
    y, x = np.mgrid[0:224, 0:224] / 223.0
    img = np.stack([x, y, (x + y) / 2], axis=2)
    img += rng.normal(0, 0.02, img.shape)
    raw = (np.clip(img, 0, 1) * 255).astype(np.uint8)
    path = tmp_path / "img.png"
    Image.fromarray(raw).save(path)
    return str(path)


@pytest.fixture
def png6(tmp_path, rng):
    raw = rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)
    path = tmp_path / "tiny.png"
    Image.fromarray(raw).save(path)
    return str(path)


class TestUsage:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as e:
            main(["--help"])
        assert e.value.code == 0

    def test_unknown_flag_exits_one(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["select", "--image", "x.png", "--frobnicate"])
        assert e.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 1

    def test_bad_ratio_exits_one(self, png6):
        rc = main(["select", "--image", png6, "--ratio", "7", "--image-side", "6",
                   "--patch-side", "2"])
        assert rc == 1


class TestSelect:
    def test_ten_percent_gives_19_indices(self, png224, capsys):
        rc = main(["select", "--image", png224, "--ratio", "0.10", "--oracle", "meanfill"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["chosen"]) == 19
        assert doc["budget"]["n_keep"] == 19
        assert doc["grid"]["n_patches"] == 196
        assert len(doc["loss_after"]) == 19

    def test_central_init_first_index_105(self, png224, capsys):
        rc = main(["select", "--image", png224, "--ratio", "0.05", "--init", "central",
                   "--oracle", "meanfill"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["chosen"][0] == 105

    def test_full_ratio_zero_final_loss(self, png6, capsys):
        rc = main(["select", "--image", png6, "--ratio", "1.0", "--image-side", "6",
                   "--patch-side", "2", "--oracle", "idw"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["chosen"]) == 9
        assert doc["loss_after"][-1] == 0.0

    def test_json_round_trips_and_writes_file(self, png6, tmp_path, capsys):
        out = tmp_path / "sel.json"
        rc = main(["select", "--image", png6, "--ratio", "0.5", "--image-side", "6",
                   "--patch-side", "2", "--out", str(out)])
        assert rc == 0
        stdout_doc = json.loads(capsys.readouterr().out)
        file_doc = json.loads(out.read_text())
        assert stdout_doc == file_doc
        assert set(file_doc) == {"image", "grid", "oracle", "init", "budget", "chosen", "loss_after"}

    def test_missing_image_exits_two(self, tmp_path):
        rc = main(["select", "--image", str(tmp_path / "none.png")])
        assert rc == 2

    def test_selection_order_preserved(self, png6, capsys):
        rc = main(["select", "--image", png6, "--ratio", "1.0", "--image-side", "6",
                   "--patch-side", "2", "--init", "7"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["chosen"][0] == 7  # acquisition order, not sorted
        assert sorted(doc["chosen"]) == list(range(9))

    def test_remote_oracle_via_flag(self, png6, capsys):
        with StubOracleServer() as server:
            rc = main(["select", "--image", png6, "--ratio", "0.34", "--image-side", "6",
                       "--patch-side", "2", "--oracle", "remote", "--oracle-url", server.url])
            assert rc == 0
            doc = json.loads(capsys.readouterr().out)
            assert doc["oracle"].startswith("remote:stub")

    def test_remote_oracle_down_exits_three(self, png6):
        rc = main(["select", "--image", png6, "--ratio", "0.34", "--image-side", "6",
                   "--patch-side", "2", "--oracle", "remote",
                   "--oracle-url", "http://127.0.0.1:9"])
        assert rc == 3


class TestEval:
    def test_writes_csv_and_svg(self, tmp_path, capsys):
        out, svg = tmp_path / "rows.csv", tmp_path / "plot.svg"
        rc = main(["eval", "--kind", "blobs", "--count", "2", "--seed", "3",
                   "--image-side", "8", "--patch-side", "2", "--budgets", "0.25,0.5",
                   "--seeds", "0,1", "--out", str(out), "--svg", str(svg),
                   "--oracle", "meanfill"])
        assert rc == 0
        rows = read_csv(str(out))
        assert {r.method for r in rows} == {"kpp", "random"}
        assert svg.read_text().startswith("<svg")
        assert "init=central" in capsys.readouterr().err  # init policy printed

    def test_directory_corpus(self, tmp_path, rng):
        for i in range(2):
            Image.fromarray(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)).save(
                tmp_path / f"i{i}.png"
            )
        out = tmp_path / "rows.csv"
        rc = main(["eval", "--corpus", str(tmp_path), "--image-side", "8",
                   "--patch-side", "2", "--budgets", "0.5", "--seeds", "0",
                   "--out", str(out), "--oracle", "meanfill"])
        assert rc == 0
        rows = read_csv(str(out))
        assert {r.image_id for r in rows} == {"i0.png", "i1.png"}


class TestAblate:
    def test_emits_both_arms(self, tmp_path, capsys):
        out = tmp_path / "ablate.csv"
        rc = main(["ablate", "--kind", "blobs", "--count", "2", "--seed", "3",
                   "--image-side", "12", "--patch-side", "2", "--budgets", "0.05,0.25,1.0",
                   "--out", str(out), "--oracle", "meanfill"])
        assert rc == 0
        rows = read_csv(str(out))
        assert {r.init_policy for r in rows} == {"central", "none"}
        assert all(r.masked_mse == 0.0 for r in rows if r.budget_ratio == 1.0)
        assert "ablation@" in capsys.readouterr().out


class TestCheckSubmodular:
    def test_coverage_reports_clean(self, capsys):
        rc = main(["check-submodular", "--kind", "coverage", "--count", "6", "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "diminishing_returns_violations=0" in out
        assert "monotone_violations=0" in out

    def test_square_reports_violations_with_csv(self, tmp_path, capsys):
        out = tmp_path / "viol.csv"
        rc = main(["check-submodular", "--kind", "square", "--count", "4",
                   "--out", str(out)])
        assert rc == 0
        assert "diminishing_returns_violations=" in capsys.readouterr().out
        assert out.read_text().count("\n") > 1

    def test_image_mode_sampled(self, png6, capsys):
        rc = main(["check-submodular", "--kind", "image", "--image", png6,
                   "--image-side", "6", "--patch-side", "2", "--mode", "sampled",
                   "--trials", "50", "--oracle", "meanfill"])
        assert rc == 0
        assert "mode=sampled" in capsys.readouterr().out

    def test_modular_clean(self, capsys):
        rc = main(["check-submodular", "--kind", "modular", "--count", "5"])
        assert rc == 0
        assert "diminishing_returns_violations=0" in capsys.readouterr().out


class TestDeterminism:
    def test_select_threads_do_not_change_bytes(self, png6, tmp_path):
        outs = []
        for t in ("1", "8"):
            out = tmp_path / f"t{t}.json"
            rc = main(["select", "--image", png6, "--ratio", "0.5", "--image-side", "6",
                       "--patch-side", "2", "--threads", t, "--out", str(out)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_eval_byte_identical_runs(self, tmp_path):
        paths = []
        for run in range(2):
            out = tmp_path / f"r{run}.csv"
            rc = main(["eval", "--kind", "checker", "--count", "2", "--seed", "5",
                       "--image-side", "8", "--patch-side", "2", "--budgets", "0.5",
                       "--seeds", "0,1", "--out", str(out), "--oracle", "idw"])
            assert rc == 0
            paths.append(out.read_bytes())
        assert paths[0] == paths[1]


class TestPartialFlush:
    def test_eval_flushes_partial_csv_on_oracle_failure(self, tmp_path, rng):
        # two images; the stub fails every request whose first pixel is
        # white, so the second image's first sweep aborts the run
        ok = np.zeros((6, 6, 3), dtype=np.uint8)
        ok[0, 0] = 10
        bad = np.full((6, 6, 3), 255, dtype=np.uint8)
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        Image.fromarray(ok).save(corpus / "a_ok.png")
        Image.fromarray(bad).save(corpus / "b_bad.png")
        out = tmp_path / "partial.csv"
        with StubOracleServer() as server:
            server.fail_on_first_pixel_above = 0.9
            rc = main(["eval", "--corpus", str(corpus), "--image-side", "6",
                       "--patch-side", "2", "--budgets", "0.5", "--seeds", "0",
                       "--oracle", "remote", "--oracle-url", server.url,
                       "--out", str(out)])
        assert rc == 3
        rows = read_csv(str(out))
        assert rows  # the completed image was flushed
        assert {r.image_id for r in rows} == {"a_ok.png"}
