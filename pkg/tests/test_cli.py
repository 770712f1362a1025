"""The command-line interface: exit codes, goldens, REPL, determinism."""

import io
import re
import sys
from pathlib import Path

import pytest

from oracles import QUEENS8_FIRST, queens_brute
from ozk.cli import main

PROGRAMS = Path(__file__).resolve().parent.parent / "docs" / "programs"

QUEENS_FUN = """
fun {Queens N}
   fun {MakeList N}
      if N==0 then nil else _|{MakeList N-1} end
   end
   proc {PlaceQueens N Cs Us Ds}
      if N==0 then skip
      elseif N>0 then Ds2 Us2=_|Us in
         Ds=_|Ds2
         {PlaceQueens N-1 Cs Us2 Ds2}
         {PlaceQueen N Cs Us Ds2}
      else fail end
   end
   proc {PlaceQueen N Cs Us Ds}
      choice
         Cs=N|_ Us=N|_ Ds=N|_
      [] Cs2 Us2 Ds2 in
         Cs=_|Cs2 Us=_|Us2 Ds=_|Ds2
         {PlaceQueen N Cs2 Us2 Ds2}
      end
   end
   Qs={MakeList N}
in
   {PlaceQueens N Qs _ _}
   Qs
end
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def repl(capsys, monkeypatch, lines, *flags):
    monkeypatch.setattr("sys.stdin", io.StringIO("\n".join(lines) + "\n"))
    code = main(["repl", *flags])
    captured = capsys.readouterr()
    return code, captured.out.splitlines()


def fmt_solution(cols):
    return "[" + " ".join(str(c) for c in cols) + "]"


# -- run: exit codes and goldens -------------------------------------------


class TestRun:
    def test_browse_goes_to_stdout(self, capsys, tmp_path):
        f = write(tmp_path, "p.ozk", "local X in X = 41 + 1 {Browse X} end")
        code, out, err = run_cli(capsys, "run", f)
        assert (code, out, err) == (0, "42\n", "")

    def test_queens_first_solution(self, capsys, tmp_path):
        f = write(tmp_path, "q.ozk", QUEENS_FUN +
                  "{Browse {SolveOne fun {$} {Queens 8} end}}")
        code, out, err = run_cli(capsys, "run", f)
        assert code == 0
        assert out == "[%s]\n" % fmt_solution(QUEENS8_FIRST)

    def test_skip_only_no_output(self, capsys, tmp_path):
        f = write(tmp_path, "s.ozk", "skip\n")
        assert run_cli(capsys, "run", f) == (0, "", "")

    def test_deadlock_names_thread_and_variable(self, capsys, tmp_path):
        f = write(tmp_path, "d.ozk", "local X Y in Y = X + 1 end")
        code, out, err = run_cli(capsys, "run", f)
        assert code == 2
        assert out == ""
        assert re.search(r"deadlock: thread \d+ waiting on X", err)

    def test_failure_exit_1(self, capsys, tmp_path):
        f = write(tmp_path, "f.ozk", "local X in X = 1 X = 2 end")
        code, out, err = run_cli(capsys, "run", f)
        assert code == 1
        assert "failed" in err

    def test_parse_error_exit_3(self, capsys, tmp_path):
        f = write(tmp_path, "b.ozk", "local X in X =")
        code, out, err = run_cli(capsys, "run", f)
        assert code == 3
        assert "line" in err

    def test_missing_file_exit_3(self, capsys):
        code, out, err = run_cli(capsys, "run", "/no/such/file.ozk")
        assert code == 3
        assert "cannot read" in err

    def test_step_budget_exit_1(self, capsys, tmp_path):
        f = write(tmp_path, "loop.ozk", "proc {Loop} {Loop} end {Loop}")
        code, out, err = run_cli(capsys, "run", f, "--max-steps", "1000")
        assert code == 1
        assert "step budget" in err

    def test_prolog_file_with_query(self, capsys, tmp_path):
        f = write(tmp_path, "fam.pl", (PROGRAMS / "family.pl").read_text())
        code, out, err = run_cli(capsys, "run", f, "--query",
                                 "grandfather(terach, G)")
        assert (code, out) == (0, "[isaac]\n")

    def test_query_rejected_for_kernel_file(self, capsys, tmp_path):
        f = write(tmp_path, "p.ozk", "skip")
        code, out, err = run_cli(capsys, "run", f, "--query", "foo(X)")
        assert code == 3

    def test_no_prelude_drops_library_names(self, capsys, tmp_path):
        src = "local Ys in Ys = {Take [1 2 3] 2} {Browse Ys} end"
        f = write(tmp_path, "t.ozk", src)
        assert run_cli(capsys, "run", f)[0] == 0
        code, out, err = run_cli(capsys, "run", f, "--no-prelude")
        assert code == 3 and "Take" in err  # now an unknown name

    def test_sched_trace_on_stderr(self, capsys, tmp_path):
        f = write(tmp_path, "p.ozk", "thread {Browse 1} end {Browse 2}")
        code, out, err = run_cli(capsys, "run", f, "--trace", "sched")
        assert code == 0
        assert "sched spawn" in err
        assert all(line in ("1", "2") for line in out.splitlines())


# -- translate ---------------------------------------------------------------


class TestTranslate:
    def test_father_facts_become_choice_proc(self, capsys):
        code, out, err = run_cli(capsys, "translate",
                                 str(PROGRAMS / "family.pl"))
        assert code == 0
        flat = " ".join(out.split())
        assert "proc {Father A1 A2}" in flat
        assert "choice A1=terach A2=abraham []" in flat

    def test_output_reparses(self, capsys, tmp_path):
        code, out, err = run_cli(capsys, "translate",
                                 str(PROGRAMS / "queens.pl"))
        assert code == 0
        f = write(tmp_path, "rt.ozk", out + (
            "\n{Browse {SolveOne fun {$} Qs in {Queens 8 Qs} Qs end}}"))
        code2, out2, err2 = run_cli(capsys, "run", f)
        assert (code2, out2) == (0, "[%s]\n" % fmt_solution(QUEENS8_FIRST))

    def test_empty_file_empty_output(self, capsys, tmp_path):
        f = write(tmp_path, "e.pl", "  % nothing here\n")
        assert run_cli(capsys, "translate", f) == (0, "", "")

    def test_assert_rejected(self, capsys, tmp_path):
        f = write(tmp_path, "a.pl", "p(X) :- assert(q(X)).")
        code, out, err = run_cli(capsys, "translate", f)
        assert code == 3
        assert "assert" in err

    def test_query_block_all_solutions(self, capsys, tmp_path):
        f = write(tmp_path, "fam.pl", (PROGRAMS / "family.pl").read_text())
        code, out, err = run_cli(capsys, "translate", f,
                                 "--query", "father(haran, K)", "--all")
        assert code == 0
        assert "SolveAll" in out
        g = write(tmp_path, "g.ozk", out)
        code2, out2, err2 = run_cli(capsys, "run", g)
        assert (code2, out2) == (0, "[milcah yiscah]\n")


# -- dist-run ----------------------------------------------------------------


class TestDistRun:
    def test_two_node_stream(self, capsys):
        code, out, err = run_cli(capsys, "dist-run",
                                 str(PROGRAMS / "dist_gen_map.ozk"),
                                 "--placement", "a=0,b=1")
        assert code == 0
        assert "status: done" in out
        assert "[1 4 9 16 25 36 49 64 81 100]" in out

    def test_net_trace_lines_on_stdout(self, capsys):
        code, out, err = run_cli(capsys, "dist-run",
                                 str(PROGRAMS / "dist_rational.ozk"),
                                 "--placement", "a=0,b=1", "--trace", "net")
        assert code == 0
        kinds = "Register|BindRequest|BindNotify|UnifyVarVar"
        trace = [l for l in out.splitlines()
                 if re.fullmatch(r"\d+ \d+ (%s) v\d+\.\d+" % kinds, l)]
        assert trace, out

    def test_bad_placement_exit_3(self, capsys):
        code, out, err = run_cli(capsys, "dist-run",
                                 str(PROGRAMS / "dist_gen_map.ozk"),
                                 "--placement", "a=zero")
        assert code == 3

    def test_deadlock_exit_2(self, capsys, tmp_path):
        f = write(tmp_path, "d.ozk",
                  "local X Y in thread Y = X + 1 end end")
        code, out, err = run_cli(capsys, "dist-run", f)
        assert code == 2
        assert "status: deadlock" in out

    def test_prolog_file_rejected(self, capsys):
        code, out, err = run_cli(capsys, "dist-run",
                                 str(PROGRAMS / "family.pl"))
        assert code == 3


# -- repl --------------------------------------------------------------------


class TestRepl:
    def test_bind_then_browse(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, ["X = 1", "{Browse X}"])
        assert code == 0
        assert out == ["1"]

    def test_multiline_statement(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch,
                         ["local X in", "   X = 7", "   {Browse X}", "end"])
        assert out == ["7"]

    def test_solve_and_next(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [
            "proc {Pick X} choice X = red [] X = green [] X = blue end end",
            ":solve {Pick $}", ":next", ":next", ":next", ":next"])
        assert out == ["red", "green", "blue",
                       "no more solutions", "no more solutions"]

    def test_solve_queens_first_two(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch,
                         [QUEENS_FUN, ":solve {Queens 8}", ":next"])
        assert out[0] == fmt_solution(QUEENS8_FIRST)
        second = [int(n) for n in out[1].strip("[]").split()]
        assert second in queens_brute(8) and second != QUEENS8_FIRST

    def test_next_without_solve(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [":next"])
        assert out == ["no current :solve"]

    def test_session_survives_bad_input(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [
            "this is not a statement )", "X = ok", "{Browse X}"])
        assert code == 0
        assert out[-1] == "ok"
        assert any("parse error" in line for line in out)

    def test_session_survives_failure(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [
            "X = 1", "X = 2", "{Browse X}"])
        assert any("failed" in line for line in out)
        assert out[-1] == "1"

    def test_blocked_input_reported(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, ["local A B in A = B + 1 end"])
        assert any("blocked" in line and "waiting on B" in line
                   for line in out)

    def test_unknown_meta_command(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [":frobnicate"])
        assert any("unknown command" in line for line in out)

    def test_quit_stops_reading(self, capsys, monkeypatch):
        code, out = repl(capsys, monkeypatch, [":quit", "{Browse 1}"])
        assert code == 0
        assert out == []


# -- usage and determinism ----------------------------------------------------


class TestUsage:
    def test_no_command(self, capsys):
        assert main([]) == 3

    def test_unknown_command(self, capsys):
        assert main(["frob"]) == 3

    def test_unknown_flag(self, capsys):
        assert main(["run", "x.ozk", "--frob"]) == 3

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ("run", str(PROGRAMS / "gen_map.ozk")),
        ("run", str(PROGRAMS / "queens.ozk"),
         "--sched-policy", "random", "--sched-seed", "11"),
        ("dist-run", str(PROGRAMS / "dist_gen_map.ozk"),
         "--placement", "a=0,b=1", "--net-seed", "7", "--trace", "net"),
    ])
    def test_repeated_runs_byte_identical(self, capsys, argv):
        code1, out1, _ = run_cli(capsys, *argv)
        code2, out2, _ = run_cli(capsys, *argv)
        assert code1 == code2 == 0
        assert out1 == out2
        assert out1


class TestDocsPrograms:
    @pytest.mark.parametrize("program", sorted(PROGRAMS.glob("*")),
                             ids=lambda p: p.name)
    def test_runs_clean(self, capsys, program):
        code, out, err = run_cli(capsys, "run", str(program))
        assert code == 0, err
