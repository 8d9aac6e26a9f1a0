from chrkit.cli import main

from conftest import PROGRAMS


def run_cli(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_sequential_run_prints_dump(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "gcd.chr"),
                             "--goals", "Gcd(3),Gcd(3),Gcd(9)")
    assert code == 0
    assert out.strip() == "Gcd(3)#6"


def test_concurrent_run_with_verify(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "gcd.chr"),
                             "--goals", "Gcd(3),Gcd(3),Gcd(9)",
                             "--engine", "concurrent", "--workers", "4",
                             "--seed", "7", "--verify")
    assert code == 0
    assert out.strip().startswith("Gcd(3)#")
    assert "replay: PASS" in err
    assert "audit-overlap: PASS" in err


def test_oracle_enumerates_both_channel_answers(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "channel.chr"),
                             "--goals", "Get(m),Put(1),Get(n),Put(8)",
                             "--engine", "abstract", "--oracle")
    assert code == 0
    assert "2 final store(s)" in out
    assert "m=1" in out and "m=8" in out


def test_abstract_single_walk(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "gcd.chr"),
                             "--goals", "Gcd(3),Gcd(9)",
                             "--engine", "abstract", "--seed", "3")
    assert code == 0
    assert out.strip() == "Gcd(3)"


def test_empty_goals(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "gcd.chr"), "--goals", "")
    assert code == 0
    assert out.strip() == ""


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.chr"
    bad.write_text("r1 @ Gcd(n <=> true.")
    code, out, err = run_cli(capsys, str(bad), "--goals", "")
    assert code == 1
    assert "line 1" in err


def test_trace_file_written(tmp_path, capsys):
    path = tmp_path / "run.trace"
    code, out, err = run_cli(capsys, str(PROGRAMS / "channel.chr"),
                             "--goals", "Get(m),Put(1)",
                             "--trace", str(path))
    assert code == 0
    text = path.read_text()
    assert text.startswith("# chr-trace v1")
    assert "# status=done" in text
    assert "# final: m=1" in text


def test_repeat_reports_distinct_stores(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "channel.chr"),
                             "--goals", "Get(m),Put(1),Get(n),Put(8)",
                             "--engine", "concurrent", "--workers", "4",
                             "--repeat", "25", "--verify")
    assert code == 0
    assert "distinct final store(s) over 25 runs" in out


def test_goals_file(tmp_path, capsys):
    gf = tmp_path / "goals.txt"
    gf.write_text("Gcd(3),Gcd(9)\n")
    code, out, err = run_cli(capsys, str(PROGRAMS / "gcd.chr"),
                             "--goals-file", str(gf))
    assert code == 0
    assert out.strip().startswith("Gcd(3)#")


def test_step_limit_exit_code(tmp_path, capsys):
    prog = tmp_path / "loop.chr"
    prog.write_text("r @ A <=> A.\n")
    code, out, err = run_cli(capsys, str(prog), "--goals", "A",
                             "--max-steps", "10")
    assert code == 1
    assert "step-limit" in err


def test_check_invariants_flag(capsys):
    code, out, err = run_cli(capsys, str(PROGRAMS / "mergesort.chr"),
                             "--goals", "Merge(1,2),Merge(1,1)",
                             "--check-invariants")
    assert code == 0


def test_seed_env_var_default(capsys, monkeypatch):
    monkeypatch.setenv("CHR_SEED", "11")
    from chrkit.cli import build_arg_parser
    args = build_arg_parser().parse_args([str(PROGRAMS / "gcd.chr")])
    assert args.seed == 11
