import json
import subprocess
import sys
from pathlib import Path

import pytest

from reltrans.cli import main
from reltrans.harness import corpus

DATA = Path(__file__).parent / "data"
RUN_TC = ["run", "--program", str(DATA / "tc.rtx"), "--network", str(DATA / "ring4.net"),
          "--instance", str(DATA / "g.facts"), "--seed", "7", "--max-steps", "5000"]


def test_run_matches_golden(capsys):
    assert main(RUN_TC) == 0
    assert capsys.readouterr().out == (DATA / "run_tc_seed7.jsonl").read_text()


def test_run_with_partition_file_matches_golden(capsys):
    argv = RUN_TC[:6] + [str(DATA / "g.facts"), "--partition", str(DATA / "g.part"),
                         "--seed", "3", "--format", "text"]
    assert main(argv) == 0
    assert capsys.readouterr().out == (DATA / "run_tc_part_seed3.txt").read_text()


def test_script_replay_through_cli(tmp_path, capsys):
    main(RUN_TC[:-4] + ["--seed", "2", "--format", "jsonl"])
    lines = capsys.readouterr().out.splitlines()
    script = tmp_path / "s.txt"
    steps = [json.loads(x) for x in lines[:-1]]
    script.write_text("".join(f"hb {s['node']}\n" if s["kind"] == "hb" else f"dlv {s['node']} {s['recv']}\n"
                              for s in steps))
    main(RUN_TC[:-4] + ["--script", str(script), "--script-only"])
    assert capsys.readouterr().out.splitlines() == lines


def test_demo_tc(capsys):
    assert main(["demo", "tc_flood"]) == 0
    assert capsys.readouterr().out.rstrip().endswith("match")


def test_corpus_list(capsys):
    assert main(["corpus-list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in out] == corpus.names()


def test_check_exit_codes(capsys, tmp_path):
    ab = tmp_path / "ab.facts"
    ab.write_text("S(a). S(b).\n")
    assert main(["check", "consistency", "--program", "first_element", "--instance", str(ab)]) == 1
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["result"] == "fail" and len(verdict["evidence"]) == 2
    assert main(["check", "topology", "--program", "fwd_identity", "--networks", "single", "path:2",
                 "--instance", str(ab), "--budget", "20"]) == 1
    capsys.readouterr()
    assert main(["check", "coordination", "--program", "tc_flood", "--instance", str(DATA / "g.facts")]) == 0
    assert json.loads(capsys.readouterr().out)["result"] == "witness-found"
    assert main(["check", "coordination", "--program", "identity_ping", "--instance", str(ab),
                 "--exhaustive"]) == 1
    capsys.readouterr()
    assert main(["check", "monotone", "--program", "tc_flood", "--instance", str(DATA / "g.facts"),
                 "--pairs", "5"]) == 0
    capsys.readouterr()
    assert main(["check", "consistency", "--program", "tc_flood", "--network", "ring:4", "--instance",
                 str(DATA / "g.facts"), "--budget", "4", "--max-steps", "3"]) == 2


def test_coordination_for_program_file_uses_reference_run(capsys):
    assert main(["check", "coordination", "--program", str(DATA / "tc.rtx"),
                 "--instance", str(DATA / "g.facts")]) == 0
    assert "topology-independent" in capsys.readouterr().out


def test_parse_errors_exit_64(tmp_path, capsys):
    bad = tmp_path / "bad.rtx"
    bad.write_text("schema { in: S/1; msg: ; mem: ; out: 1 }\noutput {\n  Out(x) :- Q(x).\n}\n")
    assert main(["run", "--program", str(bad)]) == 64
    assert "line 3" in capsys.readouterr().err
    badnet = tmp_path / "bad.net"
    badnet.write_text("node 1\nnode 2\n")
    assert main(["run", "--program", "tc_flood", "--network", str(badnet)]) == 64
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 64
    assert main(["run", "--program", "does-not-exist.rtx"]) == 64


def test_dedalus_commands(tmp_path, capsys):
    assert main(["dedalus", "tm", "--word", "bab", "--horizon", "60"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accepted"] and report["direct"] and report["stable"]
    assert main(["dedalus", "tm", "--word", "ba"]) == 1
    capsys.readouterr()
    prog = tmp_path / "p.ded"
    prog.write_text("a(x, T+1) :- a(x, T).\n")
    inp = tmp_path / "i.tfacts"
    inp.write_text("a(c)@1.\n")
    assert main(["dedalus", "run", "--program", str(prog), "--input", str(inp), "--max-time", "3",
                 "--horizon", "10"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:3] == ["a(c)@1.", "a(c)@2.", "a(c)@3."]
    assert json.loads(out[3]) == {"stable": True, "stabilization_time": 1}
    assert main(["dedalus", "tm", "--word", "a"]) == 64


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "reltrans.cli", "corpus-list"], capture_output=True, text=True)
    assert r.returncode == 0 and "tc_flood" in r.stdout
