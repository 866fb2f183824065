import json

import pytest

from mricap import __version__
from mricap.cli import main, manifest_argv, parse_range, read_manifest


def run(*argv):
    return main([str(a) for a in argv])


class TestParsing:
    @pytest.mark.parametrize("text,expected", [
        ("0.9:1.1:3", [0.9, 1.0, 1.1]),
        ("1,2.5", [1.0, 2.5]),
        ("2:2:1", [2.0]),
    ])
    def test_ranges(self, text, expected):
        assert parse_range(text) == pytest.approx(expected)

    @pytest.mark.parametrize("text", ["1:2", "a,b", "1:2:0"])
    def test_bad_ranges(self, text):
        from mricap.cli import UserError
        with pytest.raises(UserError):
            parse_range(text)


class TestSimulate:
    def test_exact_two_hour(self, capsys):
        assert run("simulate", "oracle2h.json", "--exact", "--format", "json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["result"]["eue"] == 40.0
        m = doc["manifest"]
        assert (m["command"], m["seed"], m["replications"], m["delta"]) == ("simulate", 42, 10000, 1.0)
        assert m["version"] == __version__

    def test_monte_carlo_with_ses(self, tmp_path):
        assert run("simulate", "table1.json", "--reps", 2000, "--seed", 7, "--out", tmp_path) == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("# manifest: ")
        assert lines[1].startswith("eue,lole,lolh,expected_mri_hours,se_eue")
        values = dict(zip(lines[1].split(","), lines[2].split(",")))
        assert float(values["se_eue"]) > 0 and values["seed"] == "7"
        log = json.loads((tmp_path / "run_log.jsonl").read_text())
        assert "wall_clock_s" in log and log["workers"] == 1

    def test_trace(self, tmp_path):
        assert run("simulate", "oracle2h.json", "--reps", 10, "--trace", 3, "--out", tmp_path) == 0
        trace = (tmp_path / "trace.csv").read_text().splitlines()
        assert trace[1] == "hour,load,available_total,storage_flow,margin,ue,is_mri_hour"
        assert len(trace) == 4

    def test_missing_config(self, capsys):
        assert run("simulate", "does_not_exist.json") == 2
        assert "config not found" in capsys.readouterr().err

    def test_enumeration_cap_is_a_user_error(self, capsys):
        assert run("simulate", "table1.json", "--exact") == 2
        assert "iid" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"horizon_hours": 1}')
        assert run("simulate", bad) == 2
        assert "missing field" in capsys.readouterr().err

    def test_argparse_errors(self, capsys):
        assert run("simulate") == 2
        assert run("frobnicate") == 2
        assert run("simulate", "oracle2h.json", "--reps", 0) == 2


class TestAccredit:
    def test_exact_storage_system(self, tmp_path):
        assert run("accredit", "oracle3h.json", "--exact", "--out", tmp_path) == 0
        rows = (tmp_path / "accreditation.csv").read_text().splitlines()
        assert rows[1].startswith("name,icap,ucap,aelcc,melcc,mri,rmri,mric")
        es = dict(zip(rows[1].split(","), rows[3].split(",")))
        assert es["name"] == "ES" and float(es["mric"]) == pytest.approx(3.333333)

    def test_bundled_system_row_count(self, tmp_path):
        assert run("accredit", "table1.json", "--methods", "ucap,mric", "--reps", 1000, "--out", tmp_path) == 0
        rows = (tmp_path / "accreditation.csv").read_text().splitlines()[2:]
        assert len(rows) == 26
        th1 = dict(zip(rows[0].split(","), rows[0].split(",")))
        assert "671.925000" in th1

    def test_group_and_reference(self, tmp_path):
        assert run("accredit", "table1.json", "--methods", "mric", "--reps", 1000,
                   "--group", "IPR=IPR1,IPR2,IPR3,IPR4,IPR5,IPR6,IPR7,IPR8",
                   "--reference", "TH1", "--out", tmp_path) == 0
        rows = (tmp_path / "accreditation.csv").read_text().splitlines()
        names = [r.split(",")[0] for r in rows[2:]]
        assert names[-2:] == ["IPR", "IPR (sum of members)"]
        assert rows[-2].split(",")[1] == "3975.000000"
        cf = (tmp_path / "contribution_factors.csv").read_text().splitlines()
        changes = {float(r.split(",")[3]) for r in cf[2:] if r.split(",")[3]}
        assert max(changes) - min(changes) < 1e-5

    @pytest.mark.parametrize("argv,message", [
        (["--methods", "ucap,magic"], "unknown method"),
        (["--group", "G=TH1,nope"], "unknown resource"),
        (["--reference", "nope"], "unknown reference"),
        (["--group", "oops"], "bad --group"),
    ])
    def test_user_errors(self, argv, message, capsys):
        assert run("accredit", "oracle2h.json", "--exact", *argv) == 2
        assert message in capsys.readouterr().err

    def test_numerical_failure_exit_code(self, capsys):
        # perfect capacity has zero MRI when nothing is ever short
        assert run("accredit", "oracle2h.json", "--exact", "--methods", "mric", "--delta", "1", "--reference", "TH") == 3
        assert "zero MRI" in capsys.readouterr().err


class TestOtherCommands:
    def test_curves_then_clear(self, tmp_path):
        out = tmp_path / "c"
        assert run("curves", "oracle2h.json", "--exact", "--sweep", "0.8:1.2:5", "--out", out) == 0
        native = (out / "native_curve.csv").read_text().splitlines()
        mric = (out / "mric_curve.csv").read_text().splitlines()
        assert native[1] == "quantity_mw,price_per_mw,space,rmri_sys"
        assert len(native) == len(mric) == 7
        offers = tmp_path / "offers.json"
        offers.write_text(json.dumps({"offers": [{"name": "A", "price": 100.0, "quantity": 60.0},
                                                 {"name": "B", "price": 3000.0, "quantity": 60.0}]}))
        assert run("clear", offers, "--curve", out / "native_curve.csv", "--out", out) == 0
        clearing = json.loads((out / "clearing.json").read_text())
        assert clearing["result"]["cleared"][0]["quantity"] == 60.0
        assert (out / "schedule.csv").exists()
        assert run("clear", offers, "--curve", out / "native_curve.csv", "--rebase", 0.5, "--out", tmp_path / "r") == 0
        rebased = json.loads((tmp_path / "r" / "clearing.json").read_text())
        pay = {c["name"]: c["payment"] for c in clearing["result"]["cleared"]}
        pay_r = {c["name"]: c["payment"] for c in rebased["result"]["cleared"]}
        assert pay == pytest.approx(pay_r, abs=0.005)

    def test_clear_missing_file(self, tmp_path, capsys):
        assert run("clear", tmp_path / "none.json", "--curve", tmp_path / "none.csv") == 2
        assert "file not found" in capsys.readouterr().err

    def test_levels(self, tmp_path):
        assert run("levels", "two_resource.json", "--grid", "0.9:1.1:3", "--reps", 2000, "--out", tmp_path) == 0
        rows = (tmp_path / "levels.csv").read_text().splitlines()
        assert rows[1] == "c1_mw,c2_actual_mw,c2_native_linear_mw,c2_mric_linear_mw"
        assert len(rows) == 5

    def test_levels_bad_resources(self, capsys):
        assert run("levels", "two_resource.json", "--resources", "GEN") == 2

    def test_calibrate_writes_loadable_config(self, tmp_path):
        assert run("calibrate", "two_resource.json", "--slack", "BASE", "--target-lole", 0.09,
                   "--reps", 5000, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "calibrated.json").read_text())
        assert doc["manifest"]["calibration"]["slack"] == "BASE"
        assert abs(doc["manifest"]["calibration"]["lole"] - 0.09) <= 0.005
        assert run("simulate", tmp_path / "calibrated.json", "--reps", 5000, "--out", tmp_path / "s") == 0

    def test_calibrate_zero_target(self, capsys):
        assert run("calibrate", "two_resource.json", "--slack", "BASE", "--target-lole", 0, "--reps", 100) == 3
        assert "bracket" in capsys.readouterr().err


class TestManifest:
    def test_replay_reproduces_file(self, tmp_path):
        assert run("accredit", "oracle3h.json", "--reps", 500, "--methods", "mric", "--out", tmp_path / "a") == 0
        first = tmp_path / "a" / "accreditation.csv"
        assert run("replay", first, "--workers", 4, "--out", tmp_path / "b") == 0
        assert (tmp_path / "b" / "accreditation.csv").read_bytes() == first.read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        assert run("curves", "oracle2h.json", "--exact", "--sweep", "1,1.1", "--voll", 100, "--out", tmp_path) == 0
        m = read_manifest(tmp_path / "native_curve.csv")
        argv = manifest_argv(m)
        assert argv[:2] == ["curves", "oracle2h.json"]
        assert "--exact" in argv and "--voll" in argv
        assert "--workers" not in argv and "--out" not in argv

    def test_replay_needs_manifest(self, tmp_path, capsys):
        f = tmp_path / "x.csv"
        f.write_text("a,b\n")
        assert run("replay", f) == 2
        assert "no run manifest" in capsys.readouterr().err

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out
