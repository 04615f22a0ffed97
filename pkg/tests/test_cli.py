from __future__ import annotations

import io
import json
import socket
import threading
import zipfile

import pytest

from conftest import CORPUS
from texml.cli import (
    EXIT_FATAL, EXIT_OK, EXIT_USAGE, EXIT_WARN, ConversionJob, DaemonServer, RegistryCache, handle_request,
    job_from_request, main, run_job, serve_stream,
)
from texml.epub import validate_structure

BOOK = str(CORPUS / "book.tex")
STAMP = "2024-01-01T00:00:00Z"


@pytest.fixture
def tex(tmp_path):
    def make(text: str, name: str = "doc.tex") -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return make


def test_epub_end_to_end(tmp_path):
    dest = tmp_path / "book.epub"
    assert main([BOOK, "--format", "epub", "--dest", str(dest), "--splitat", "section",
                 "--validate", "--modified", STAMP]) == EXIT_OK
    assert validate_structure(dest.read_bytes()) == []


def test_xml_to_stdout(tex, capsys):
    assert main([tex(r"\section{A}x")]) == EXIT_OK
    assert capsys.readouterr().out.endswith("</section></document>")


def test_html5_directory(tmp_path):
    assert main([BOOK, "--format", "html5", "--dest", str(tmp_path / "site"), "--splitat", "section"]) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "site").iterdir()) == [
        "index.xhtml", "s1-lines.xhtml", "s2-areas.xhtml", "s3-drawing.xhtml"]


def test_undefined_macro_warns(tex, capsys):
    assert main([tex(r"hello \nope there")]) == EXIT_WARN
    captured = capsys.readouterr()
    assert "<error>" in captured.out
    assert "doc.tex:1:" in captured.err and "nope" in captured.err


def test_strict_makes_it_fatal(tex, capsys):
    assert main([tex(r"hello \nope there"), "--strict"]) == EXIT_FATAL
    assert "UndefinedControlSequence" in capsys.readouterr().err


def test_fatal_error_has_position(tex, capsys):
    assert main([tex("ok\n{unclosed")]) == EXIT_FATAL
    assert "doc.tex:2:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["missing.tex"],
    ["--format", "pdf", "x.tex"],
    [],
    ["x.tex", "--timeout", "soon"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == EXIT_USAGE


def test_epub_needs_dest(tex):
    assert main([tex("x"), "--format", "epub"]) == EXIT_USAGE


def test_bad_preload(tex, tmp_path):
    bad = tmp_path / "bad.tex"
    bad.write_text(r"\constructor{\x}{}{<emph>}")
    assert main([tex("x"), "--preload", str(bad)]) == EXIT_USAGE


def test_profile_to_stderr_and_file(tex, tmp_path, capsys):
    src = tex(r"\def\a{x}\a\a")
    assert main([src, "--profile", "-q"]) == EXIT_OK
    err = capsys.readouterr().err
    assert err.startswith("name\tcalls\tinclusive-ms\texclusive-ms\n")
    assert "\\a\t2\t" in err
    out = tmp_path / "prof.tsv"
    assert main([src, "--profile", "--profile-out", str(out)]) == EXIT_OK
    assert "\\a\t2\t" in out.read_text()
    assert "calls" not in capsys.readouterr().err


def test_epub_timestamp_from_source_date_epoch(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    a, b = tmp_path / "a.epub", tmp_path / "b.epub"
    for dest in (a, b):
        assert run_job(ConversionJob(source=BOOK, format="epub", dest=str(dest))).exit_code == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    with zipfile.ZipFile(a) as zf:
        assert zf.infolist()[0].date_time == (2023, 11, 14, 22, 13, 20)


def test_log_file(tex, tmp_path):
    log = tmp_path / "run.log"
    assert main([tex(r"\nope"), "--log", str(log), "-q"]) == EXIT_WARN
    assert "nope" in log.read_text()


def test_job_validation():
    with pytest.raises(ValueError):
        ConversionJob(text="x", timeout=0).check()
    with pytest.raises(ValueError):
        ConversionJob(text="x", source="y").check()
    with pytest.raises(ValueError):
        job_from_request({"text": "x", "colour": "red"})
    with pytest.raises(ValueError):
        job_from_request({"text": "x", "strict": "yes"})
    assert job_from_request({"text": "x", "preloads": []}).preloads == ()


# -- daemon -------------------------------------------------------------------

def ask_all(lines: list[str]) -> list[dict]:
    rfile = io.BytesIO("".join(line + "\n" for line in lines).encode())
    wfile = io.BytesIO()
    serve_stream(rfile, wfile, RegistryCache())
    return [json.loads(x) for x in wfile.getvalue().splitlines()]


def test_daemon_answers_in_order():
    a, b = ask_all([json.dumps({"text": "first"}), json.dumps({"text": "second"})])
    assert a["status"] == b["status"] == "ok"
    assert "first" in a["output"] and "second" in b["output"]


def test_daemon_survives_malformed_line():
    bad, good = ask_all(["{oops", json.dumps({"text": "x"})])
    assert bad["status"] == "error" and "malformed" in bad["log"]
    assert good["status"] == "ok"


def test_daemon_reports_timeouts():
    (resp,) = ask_all([json.dumps({"text": r"\def\a{x\a}\a", "timeout": 0.2})])
    assert resp["status"] == "error" and "time limit" in resp["log"]


def test_daemon_warn_status_and_dest(tmp_path):
    dest = tmp_path / "out.xml"
    resp = handle_request(json.dumps({"text": r"\nope", "dest": str(dest)}), RegistryCache())
    assert resp == {"status": "warn", "dest": str(dest), "log": resp["log"]}
    assert dest.read_bytes().endswith(b"</document>")


def test_registry_cache_reuses_registries():
    cache = RegistryCache()
    assert cache.get(()) is cache.get(())


def test_unix_socket_daemon(tmp_path):
    path = str(tmp_path / "d.sock")
    server = DaemonServer(path, RegistryCache())
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as s:
            s.connect(path)
            f = s.makefile("rwb")
            for text in ("one", "two"):
                f.write(json.dumps({"text": text}).encode() + b"\n")
            f.flush()
            replies = [json.loads(f.readline()) for _ in range(2)]
        assert ["one" in replies[0]["output"], "two" in replies[1]["output"]] == [True, True]
    finally:
        server.shutdown()
        server.server_close()
