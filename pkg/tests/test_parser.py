import pytest
from hypothesis import given, settings, strategies as st

from awaitmc import corpus
from awaitmc.generate import generate_program
from awaitmc.ir import Program
from awaitmc.parser import ParseError, ProgramError, ValidationError, format_program, parse_program, tokenize

ALL = corpus.names() + ["sortnet1", "sortnet3"]


@pytest.mark.parametrize("name", ALL)
def test_round_trip_corpus(name):
    p = corpus.load(name)
    text = format_program(p)
    assert parse_program(text) == p
    assert format_program(parse_program(text)) == text


@pytest.mark.parametrize("seed", range(40))
def test_round_trip_generated(seed):
    p = parse_program(generate_program(seed))
    assert parse_program(format_program(p)) == p


def test_error_is_located():
    with pytest.raises(ParseError) as exc:
        parse_program("global x = 0;\nthread t {\n  L0:\n    a := ;\n}\n", file="f.tp")
    assert exc.value.loc.file == "f.tp"
    assert exc.value.loc.line == 4
    assert str(exc.value).startswith("f.tp:4:")


def test_validation_error_lists_diagnostics():
    with pytest.raises(ValidationError) as exc:
        parse_program("thread t {\n  L0:\n    goto L1;\n}\n")
    assert exc.value.diagnostics


def test_all_statement_forms_parse():
    text = """\
global x = 0;
global l = 0;

thread main {
  L0:
    spawn(w);
    a := x;
    x := a + 1;
    b := faa(x, 2);
    c := xchg(l, 1);
    d := cmpxchg(l, 1, 0);
    await(x >= 1);
    e := await(x != 5);
    f := xchg_await(l == 0, 1);
    xchg_await(l == 1, 0);
    assume(a == 0 || b > 1);
    assert(!(d == 2));
    join(w);
    x +:= 1;
    br e == 0 L1 L2;
  L1:
    goto L2;
  L2:
    g := phi(L0: a, L1: b);
    exit;
}

thread w {
  L0:
    x := 3;
    exit;
}
"""
    p = parse_program(text)
    assert parse_program(format_program(p)) == p


TOKENS = ["global", "thread", "x", "r", "=", ":=", ";", "{", "}", "L0:", "L1", "exit", "goto",
          "br", "await", "(", ")", "==", "<", "1", "-3", "faa", ",", "phi", "assume", "\n", "#c\n",
          "spawn", "join", "xchg_await", "@", "99999999999999999999999"]


@settings(max_examples=400, deadline=None)
@given(st.lists(st.sampled_from(TOKENS), max_size=40))
def test_parser_is_total_on_token_soup(toks):
    try:
        out = parse_program(" ".join(toks))
    except ProgramError:
        return
    assert isinstance(out, Program)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_parser_is_total_on_arbitrary_text(text):
    try:
        parse_program(text)
    except ProgramError:
        pass


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 200))
def test_parser_is_total_on_mutated_programs(seed, cut):
    text = generate_program(seed)
    mutated = text[:cut] + text[cut + 1:]
    try:
        parse_program(mutated)
    except ProgramError:
        pass


def test_tokenize_reports_bad_character():
    with pytest.raises(ParseError):
        tokenize("global x = $;")
