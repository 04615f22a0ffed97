from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import pytest

from conftest import CORPUS
from texml import convert, load_bindings, serialize_xml, standard_registry
from texml.bindings import Constructor, Macro, parse_template
from texml.errors import BindingParseError, ConstructorTemplateInvalid


def write(tmp_path, name: str, text: str):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_no_preloads_is_the_standard_set():
    assert set(load_bindings([])) == set(standard_registry())


def test_standard_set_contents(registry):
    for name in ("section", "textbf", "emph", "label", "ref", "gdv@moveto", "polyline", "begin"):
        assert name in registry
    assert isinstance(registry["textbf"], Constructor)


def test_later_files_shadow_earlier(tmp_path, registry):
    f = write(tmp_path, "bold.tex", r"\constructor{\textbf}{#1}{<emph>#1</emph>}")
    reg = load_bindings([f])
    assert reg["textbf"] is not registry["textbf"]
    out = serialize_xml(convert(r"\textbf{x}", reg))
    assert out.endswith(b"<p><emph>x</emph></p></para></document>")


def test_macros_and_at_letter(tmp_path):
    f = write(tmp_path, "m.tex", "\\def\\my@helper#1{[#1]}\n\\def\\wrap#1{\\my@helper{#1}}\n")
    reg = load_bindings([f])
    assert isinstance(reg["my@helper"], Macro)
    assert b"<p>[q]</p>" in serialize_xml(convert(r"\wrap{q}", reg))


def test_catcode_changes_stay_in_the_file(tmp_path):
    f = write(tmp_path, "c.tex", "\\catcode`\\!=11\n\\def\\a!b{x}\n")
    reg = load_bindings([f])
    assert "a!b" in reg
    doc = convert("1!2", reg)
    assert b"<p>1!2</p>" in serialize_xml(doc)


def test_bad_template_loads_nothing(tmp_path):
    good = write(tmp_path, "good.tex", r"\def\fine{ok}")
    bad = write(tmp_path, "bad.tex", "\n" + r"\constructor{\broken}{#1}{<emph>#1</text>}")
    with pytest.raises(ConstructorTemplateInvalid) as info:
        load_bindings([good, bad])
    assert "bad.tex:2" in str(info.value)


@pytest.mark.parametrize("text", [
    r"\constructor{\x}{#1}{<emph>#2</emph>}",
    r"\constructor{\x}{}{<emph>}",
    r"\constructor{\x}{}{<bogus>}",
])
def test_invalid_templates(tmp_path, text):
    with pytest.raises(ConstructorTemplateInvalid):
        load_bindings([write(tmp_path, "t.tex", text)])


@pytest.mark.parametrize("text", [
    "\\def\\x#2{}",
    "stray text",
    "{\\def\\x{}",
])
def test_parse_errors_name_the_file(tmp_path, text):
    with pytest.raises(BindingParseError) as info:
        load_bindings([write(tmp_path, "p.tex", text)])
    assert info.value.file.endswith("p.tex") and info.value.line == 1


def test_unreadable_file(tmp_path):
    with pytest.raises(BindingParseError):
        load_bindings([tmp_path / "missing.tex"])


def test_template_parsing():
    t = parse_template('<text font="bold">#1</text>', 1)
    assert len(t.items) == 3


def test_registry_is_read_only(registry):
    with pytest.raises(TypeError):
        registry["textbf"] = None  # type: ignore[index]
    with pytest.raises(TypeError):
        registry.bindings["textbf"] = None  # type: ignore[index]


def test_same_preloads_same_output(tmp_path):
    f = write(tmp_path, "m.tex", r"\def\hello{Hello}")
    a = serialize_xml(convert(r"\hello", load_bindings([f])))
    b = serialize_xml(convert(r"\hello", load_bindings([f])))
    assert a == b


def test_shared_registry_across_threads(registry):
    sources = [p.read_text(encoding="utf-8") for p in sorted(CORPUS.glob("*.tex"))] * 3
    serial = [serialize_xml(convert(s, registry)) for s in sources]
    with ThreadPoolExecutor(max_workers=6) as pool:
        parallel = list(pool.map(lambda s: serialize_xml(convert(s, registry)), sources))
    assert parallel == serial
