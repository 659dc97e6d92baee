"""Command-line pipeline: end-to-end runs, manifests, failure modes."""

import json

import numpy as np
import pytest

from scatterlab import io
from scatterlab.cli import main


@pytest.fixture(scope="module")
def rmt_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rmt")
    rc = main(["simulate-rmt", "--preset", "gamma5.39", "--n-dim", "110",
               "--n-samples", "800", "--no-calibration", "--seed", "5",
               "--out-dir", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def analysis_run(rmt_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("analysis")
    rc = main(["analyze", "--samples", str(rmt_run / "samples.csv"),
               "--out-dir", str(out)])
    assert rc == 0
    return out


class TestSimulateRmt:
    def test_outputs_and_manifest(self, rmt_run):
        samples = io.read_samples_csv(rmt_run / "samples.csv")
        assert len(samples) == 800 and samples.source == "rmt"
        manifest = io.RunManifest.load(rmt_run / "manifest.json")
        assert manifest.command == "simulate-rmt"
        assert manifest.config["gamma_decomposition"]["gamma"] == pytest.approx(5.39)
        assert manifest.outputs == ["samples.csv"]
        assert manifest.version

    def test_preset_resolution(self, tmp_path):
        rc = main(["simulate-rmt", "--preset", "gamma27.18", "--n-dim", "110",
                   "--n-samples", "4", "--no-calibration", "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = io.RunManifest.load(tmp_path / "manifest.json")
        d = manifest.config["gamma_decomposition"]
        assert (d["t_a"], d["t_b"], d["m_channels"], d["t_c"]) == (0.56, 0.56, 100, 0.261)

    def test_unknown_preset_lists_available(self, tmp_path, capsys):
        rc = main(["simulate-rmt", "--preset", "bogus", "--out-dir", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "gamma5.39" in err and "gamma27.18" in err
        assert not (tmp_path / "samples.csv").exists()

    def test_shift_mode(self, tmp_path):
        rc = main(["simulate-rmt", "--absorption-mode", "shift", "--gamma", "5.39",
                   "--t-a", "1.0", "--t-b", "1.0", "--n-dim", "110",
                   "--n-samples", "4", "--out-dir", str(tmp_path)])
        assert rc == 0

    def test_rerun_reproduces_bytes(self, rmt_run, tmp_path):
        rc = main(["rerun", str(rmt_run / "manifest.json"), "--out-dir", str(tmp_path)])
        assert rc == 0
        assert io.sha256_file(tmp_path / "samples.csv") == io.sha256_file(
            rmt_run / "samples.csv")


class TestSimulateGraph:
    def test_run_and_rerun(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["simulate-graph", "--realizations", "4",
                "--samples-per-realization", "9", "--seed", "3",
                "--dump-network", "--out-dir", str(out1)]
        assert main(args) == 0
        samples = io.read_samples_csv(out1 / "samples.csv")
        assert len(samples) == 36 and samples.source == "graph"
        assert (out1 / "network.json").exists()
        assert main(["rerun", str(out1 / "manifest.json"), "--out-dir", str(out2)]) == 0
        assert io.sha256_file(out1 / "samples.csv") == io.sha256_file(out2 / "samples.csv")

    def test_zero_realizations_rejected(self, tmp_path):
        rc = main(["simulate-graph", "--realizations", "0", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert not (tmp_path / "samples.csv").exists()

    def test_network_file_input(self, tmp_path):
        from scatterlab import graphs
        net_path = tmp_path / "net.json"
        graphs.dump_network(graphs.hexagon_network(), net_path)
        rc = main(["simulate-graph", "--network", str(net_path), "--realizations", "2",
                   "--samples-per-realization", "5", "--out-dir", str(tmp_path / "o")])
        assert rc == 0
        manifest = io.RunManifest.load(tmp_path / "o" / "manifest.json")
        assert manifest.config["network_name"] == "hexagon"
        assert str(net_path) in manifest.inputs

    def test_unknown_graph_preset(self, tmp_path, capsys):
        rc = main(["simulate-graph", "--preset", "wat", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "nine-joint" in capsys.readouterr().err


class TestTheoryCmd:
    def test_curves_written(self, tmp_path):
        rc = main(["theory", "--gamma", "5.39", "--gamma", "27.18",
                   "--nodes", "101", "--joint-nodes", "21", "--out-dir", str(tmp_path)])
        assert rc == 0
        for tag in ("gamma5.39", "gamma27.18"):
            curve = io.read_curve_csv(tmp_path / f"marginal_{tag}.csv")
            assert set(curve) == {"u", "density", "gaussian"}
            joint = io.read_curve_csv(tmp_path / f"joint_{tag}.csv")
            assert len(joint["u1"]) == 21 * 21
        manifest = io.RunManifest.load(tmp_path / "manifest.json")
        assert abs(manifest.extras["curves"]["gamma5.39"]["norm_residual"]) < 1e-6
        assert manifest.extras["curves"]["gamma27.18"]["alpha"] == pytest.approx(6.795)

    def test_negative_gamma_no_partial_outputs(self, tmp_path):
        rc = main(["theory", "--gamma", "5.39", "--gamma", "-1",
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        assert list(tmp_path.iterdir()) == []


class TestAnalyze:
    def test_report_contents(self, analysis_run, capsys):
        report = (analysis_run / "report.txt").read_text()
        assert "T_a" in report and "W =" in report
        k = io.read_samples_csv(analysis_run / "k_samples.csv")
        assert len(k) == 800
        manifest = io.RunManifest.load(analysis_run / "manifest.json")
        assert 0.8 < manifest.extras["results"]["t_a"] < 1.0
        for name in ("re_s_ab", "im_s_ab", "re_k_ab", "im_k_ab"):
            assert (analysis_run / f"dist_{name}.csv").exists()

    def test_malformed_csv_exit_code(self, rmt_run, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        lines = (rmt_run / "samples.csv").read_text().splitlines()
        parts = lines[5].split(",")
        parts[3] = "NOPE"
        lines[5] = ",".join(parts)
        bad.write_text("\n".join(lines) + "\n")
        rc = main(["analyze", "--samples", str(bad), "--out-dir", str(tmp_path / "o")])
        assert rc == 2
        assert "row 6" in capsys.readouterr().err

    def test_requires_input(self, tmp_path):
        assert main(["analyze", "--out-dir", str(tmp_path)]) == 2

    def test_touchstone_input(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        for i in range(600):
            vals = 0.4 * rng.standard_normal(8)
            rows.append(" ".join(["%g" % (3 + i * 0.001)] + [repr(float(v)) for v in vals]))
        ts = tmp_path / "m.s2p"
        ts.write_text("# GHz S RI R 50\n" + "\n".join(rows) + "\n")
        rc = main(["analyze", "--touchstone", str(ts), "--out-dir", str(tmp_path / "o")])
        assert rc == 0


@pytest.fixture(scope="module")
def shift_analysis(tmp_path_factory):
    sim = tmp_path_factory.mktemp("shift")
    rc = main(["simulate-rmt", "--absorption-mode", "shift", "--gamma", "5.39",
               "--t-a", "1.0", "--t-b", "1.0", "--n-dim", "150",
               "--n-samples", "4000", "--seed", "9", "--out-dir", str(sim)])
    assert rc == 0
    out = tmp_path_factory.mktemp("shift_an")
    rc = main(["analyze", "--samples", str(sim / "samples.csv"),
               "--out-dir", str(out)])
    assert rc == 0
    return out


class TestFitAndCompare:
    def test_fit(self, shift_analysis, tmp_path):
        rc = main(["fit", "--k-samples", str(shift_analysis / "k_samples.csv"),
                   "--t-a", "0.89", "--t-b", "0.89", "--m-channels", "100",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = io.RunManifest.load(tmp_path / "manifest.json")
        fit = manifest.extras["fit"]
        assert 4.5 < fit["gamma_hat"] < 6.4
        text = (tmp_path / "fit.txt").read_text()
        assert "gamma_hat" in text and "decomposition" in text

    def test_fit_too_few_samples(self, rmt_run, tmp_path):
        sub = tmp_path / "few.csv"
        lines = (rmt_run / "samples.csv").read_text().splitlines()
        sub.write_text("\n".join(lines[:41]) + "\n")
        out = tmp_path / "o"
        rc = main(["analyze", "--samples", str(sub), "--out-dir", str(out)])
        assert rc == 2  # analyze itself needs more samples
        rc = main(["fit", "--k-samples", str(sub), "--out-dir", str(tmp_path / "f")])
        assert rc == 3

    def test_compare_with_gamma(self, shift_analysis, tmp_path):
        rc = main(["compare", "--k-samples", str(shift_analysis / "k_samples.csv"),
                   "--gamma", "5.39", "--gaussian", "--out-dir", str(tmp_path)])
        assert rc == 0
        overlay = io.read_curve_csv(tmp_path / "overlay.csv")
        assert set(overlay) == {"u", "empirical", "theory", "gaussian"}
        manifest = io.RunManifest.load(tmp_path / "manifest.json")
        assert manifest.extras["ks"]["theory"] < manifest.extras["ks"]["gaussian"]

    def test_compare_regrids_theory_curve(self, shift_analysis, tmp_path):
        th = tmp_path / "th"
        assert main(["theory", "--gamma", "5.39", "--nodes", "301",
                     "--out-dir", str(th)]) == 0
        # strip the gaussian column to emulate an external curve
        curve = io.read_curve_csv(th / "marginal_gamma5.39.csv")
        io.write_curve_csv(tmp_path / "curve.csv",
                           {"u": curve["u"], "density": curve["density"]})
        out = tmp_path / "cmp"
        rc = main(["compare", "--k-samples", str(shift_analysis / "k_samples.csv"),
                   "--theory-curve", str(tmp_path / "curve.csv"),
                   "--out-dir", str(out)])
        assert rc == 0
        manifest = io.RunManifest.load(out / "manifest.json")
        assert any("re-gridded" in w for w in manifest.warnings)

    def test_compare_needs_theory(self, shift_analysis, tmp_path):
        rc = main(["compare", "--k-samples", str(shift_analysis / "k_samples.csv"),
                   "--out-dir", str(tmp_path)])
        assert rc == 2


class TestManifestContents:
    def test_json_serializable_paths(self, analysis_run):
        raw = json.loads((analysis_run / "manifest.json").read_text())
        assert isinstance(raw["config"]["samples"], list)
        assert all(isinstance(p, str) for p in raw["config"]["samples"])
        assert raw["wall_time_s"] >= 0
