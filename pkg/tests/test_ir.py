import pytest

from awaitmc import corpus, ir
from awaitmc.generate import generate_program
from awaitmc.ir import build_cfg_info, validate_program
from awaitmc.parser import parse_program

ALL = corpus.names() + ["sortnet2", "sortnet3"]


def _reaches_without(info, start, goal, header):
    seen, work = {start}, [start]
    while work:
        b = work.pop()
        if b == goal:
            return True
        for s in info.succs[b]:
            if s != header and s not in seen:
                seen.add(s)
                work.append(s)
    return False


@pytest.mark.parametrize("name", ALL)
def test_backedge_targets_dominate_sources(name):
    for t in corpus.load(name).threads:
        info = build_cfg_info(t)
        for src, dst in info.backedges:
            assert info.dominates(dst, src)


@pytest.mark.parametrize("name", ALL)
def test_loop_membership_matches_reachability(name):
    for t in corpus.load(name).threads:
        info = build_cfg_info(t)
        for lp in info.loops:
            for b in info.rpo:
                in_body = b == lp.header or any(
                    _reaches_without(info, b, src, lp.header) for src, _ in lp.backedges)
                in_body = in_body and info.dominates(lp.header, b)
                assert (b in lp.body) == in_body, (t.name, lp.header, b)


def test_loops_are_innermost_first():
    info = build_cfg_info(corpus.load("nested_loop").threads[0])
    depths = [lp.depth for lp in info.loops]
    assert depths == sorted(depths, reverse=True)
    inner, outer = info.loops[0], info.loops[-1]
    assert inner.body < outer.body
    assert inner.parent == outer.header
    assert outer.internal_backedges


@pytest.mark.parametrize("seed", range(30))
def test_validate_is_idempotent_and_pure(seed):
    p = parse_program(generate_program(seed))
    before = repr(p)
    assert validate_program(p) == validate_program(p) == []
    assert repr(p) == before


def test_validate_reports_each_problem():
    p = parse_program("""
global x = 0;
thread t {
  L0:
    a := b + 1;
    goto L9;
}
""", validate=False)
    kinds = {d.kind for d in validate_program(p)}
    assert "undefined-register" in kinds
    assert len(validate_program(p)) >= 2


def test_shared_variable_in_expression_rejected():
    # the parser refuses this form, so build the IR directly
    blk = ir.BasicBlock("L0", (), (ir.Assign("a", ir.BinOp("+", ir.Reg("x"), ir.Const(1))),))
    p = ir.Program((("x", 0),), (ir.ThreadCfg("t", (blk,)),))
    assert "shared-in-expr" in {d.kind for d in validate_program(p)}


def test_empty_program_diagnostic():
    assert validate_program(ir.Program((), ()))[0].kind == "no-threads"


@pytest.mark.parametrize("op,a,b,want", [("<", 1, 2, True), (">=", 2, 2, True), ("!=", 3, 3, False)])
def test_compare(op, a, b, want):
    assert ir.compare(op, a, b) is want
    assert ir.compare(ir.NEGATED_RELOP[op], a, b) is not want
    assert ir.compare(ir.SWAPPED_RELOP[op], b, a) is want


def test_wrap64():
    assert ir.wrap64(2**63) == -(2**63)
    assert ir.wrap64(-1) == -1


def test_impure_header_backedges():
    t = corpus.load("counter_loop").threads[0]
    info = build_cfg_info(t)
    assert ir.impure_header_backedges(t, info.loops[0])
    t6 = corpus.load("fig6").threads[0]
    assert not ir.impure_header_backedges(t6, build_cfg_info(t6).loops[0])
