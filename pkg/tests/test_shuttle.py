import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xjunction.errors import ConfigurationError, LibraryError
from xjunction.shuttle import (
    PrimitiveKind,
    PrimitiveLibrary,
    ShuttleSequence,
    TransportPrimitive,
    address_marker,
    compile_individual_address,
    compile_reorder,
    is_identity,
    net_permutation,
    reverse_sequence,
    totals,
    validate_sequence,
)
from xjunction.table1 import default_library, load_table1
from xjunction.topology import parse_configuration

REORDER_TEXT = (
    "S_ab A_a B_b A_a C_b A_a V_b C_a V_b H_a V_b H_a C_b H_a A_b C_a A_b B_a A_b S_ba"
)


@pytest.fixture(scope="module")
def lib():
    return default_library()


def test_compact_notation_parses():
    assert parse_configuration("A_aB_b") == parse_configuration("A_a B_b")


def test_reorder_chain_token_for_token(lib):
    seq = compile_reorder(("a", "b"), lib)
    chain = [str(c) for c in seq.configurations()]
    assert len(seq) == 10
    assert " ".join(chain) == REORDER_TEXT
    assert chain[-1] == "S_ba"


def test_reorder_validates_and_swaps(lib):
    seq = compile_reorder(("a", "b"), lib)
    assert validate_sequence(seq)
    perm = net_permutation(seq)
    assert perm["a"].start == ("S", 1) and perm["a"].end == ("S", 2)
    assert perm["b"].start == ("S", 2) and perm["b"].end == ("S", 1)
    assert not is_identity(perm)


def test_reorder_with_other_labels(lib):
    seq = compile_reorder(("x", "y"), lib)
    assert str(seq.configurations()[-1]) == "S_yx"


def test_reorder_rejects_bad_ion_list(lib):
    with pytest.raises(ConfigurationError):
        compile_reorder(("a",), lib)
    with pytest.raises(ConfigurationError):
        compile_reorder(("a", "a"), lib)


def test_reorder_missing_primitive():
    lib = default_library()
    thin = PrimitiveLibrary(tuple(p for p in lib.primitives if p.name != "C-C'"), lib.graph)
    with pytest.raises(LibraryError):
        compile_reorder(("a", "b"), thin)


def test_reorder_core_duration(lib):
    seq = compile_reorder(("a", "b"), lib)
    # A_aB_b -> ... -> B_aA_b: steps 1..8
    core = ShuttleSequence(seq.steps[1:9])
    duration, _ = totals(core)
    assert duration == pytest.approx(1110.0)
    assert abs(duration - 1100.0) <= max(p.duration_us for p in core.steps)


def test_validate_reports_first_break(lib):
    s1 = lib.resolve("S_ab", "A_a B_b")
    s2 = lib.resolve("S_a R_b", "A_a B_b")
    rep = validate_sequence(ShuttleSequence((s1, s2)))
    assert not rep
    assert rep.boundary == 1
    assert str(rep.expected) == "A_a B_b"
    assert str(rep.found) == "S_a R_b"


def test_empty_sequence():
    seq = ShuttleSequence()
    assert validate_sequence(seq)
    assert net_permutation(seq) == {}
    assert is_identity(net_permutation(seq))
    assert totals(seq) == (0.0, {})


def test_reverse_single_primitive(lib):
    fwd = ShuttleSequence((lib.resolve("S_ab", "A_a B_b"),))
    back = reverse_sequence(fwd)
    assert str(back.steps[0].initial) == "A_a B_b"
    assert str(back.steps[0].final) == "S_ab"
    assert back.steps[0].kind is PrimitiveKind.RECOMBINE
    assert back.steps[0].cost == fwd.steps[0].cost


def test_reverse_of_reorder_ends_at_start(lib):
    seq = compile_reorder(("a", "b"), lib)
    back = reverse_sequence(seq)
    assert validate_sequence(back)
    assert str(back.configurations()[-1]) == "S_ab"
    assert str(back.configurations()[0]) == "S_ba"


def test_reverse_is_involution(lib):
    for seq in (compile_reorder(("a", "b"), lib), compile_individual_address("a", lib)):
        assert reverse_sequence(reverse_sequence(seq)) == seq


def test_reverse_preserves_totals(lib):
    seq = compile_reorder(("a", "b"), lib)
    assert totals(reverse_sequence(seq)) == totals(seq)


def test_sequence_then_reverse_is_identity(lib):
    seq = compile_reorder(("a", "b"), lib)
    both = seq + reverse_sequence(seq)
    assert validate_sequence(both)
    assert is_identity(net_permutation(both))


def test_row1_primitive_totals(lib):
    seq = ShuttleSequence((lib.resolve("S_a", "A_a"),))
    assert totals(seq) == (68.0, {"a": 170.0})


def test_row2_primitive_distance(lib):
    assert lib.resolve("A_a", "C_a").distance_um["a"] == 880.0
    table = load_table1()
    seq = table.test_sequence(2, full=True)
    per_step = [s.distance_um["a"] for s in seq.steps if s.name == "A-C"]
    assert per_step == [880.0, 880.0]


def test_address_sequence(lib):
    seq = compile_individual_address("a", lib)
    chain = [str(c) for c in seq.configurations()]
    assert chain == ["A_a B_b", "S_a R_b", "A_a B_b", "L_a S_b", "A_a B_b"]
    assert validate_sequence(seq)
    assert is_identity(net_permutation(seq))
    duration, _ = totals(seq)
    assert duration == pytest.approx(920.0)
    assert abs(duration - 1000.0) / 1000.0 < 0.1
    assert str(seq.configurations()[address_marker(seq, "a")]) == "S_a R_b"
    assert str(seq.configurations()[address_marker(seq, "b")]) == "L_a S_b"


def test_address_unknown_target(lib):
    with pytest.raises(ConfigurationError):
        compile_individual_address("z", lib)


def test_b_to_c_is_flagged_assumption(lib):
    p = lib["B-C"]
    assert p.assumptions
    # copies the moving ion of the two-ion A_aB_b -> A_aC_b measurement
    assert p.cost["a"]["axial"] == lib["AB-AC"].cost["b"]["axial"]
    assert p.duration_us == lib["AB-AC"].duration_us


def test_idle_annotations_count_in_totals(lib):
    step = lib.resolve("S_a", "A_a")
    seq = ShuttleSequence((step,), idle_us=(5.0, 7.0))
    assert totals(seq)[0] == 80.0
    with pytest.raises(ValueError):
        ShuttleSequence((step,), idle_us=(1.0,))


def test_primitive_invariants():
    a = parse_configuration("S_a")
    with pytest.raises(ConfigurationError):
        TransportPrimitive("x", a, parse_configuration("A_b"), 10.0, {})
    with pytest.raises(ValueError):
        TransportPrimitive("x", a, parse_configuration("A_a"), 0.0, {})
    with pytest.raises(ConfigurationError):
        TransportPrimitive(
            "x", parse_configuration("S_ab"), parse_configuration("S_ba"), 10.0, {}, PrimitiveKind.SEPARATE
        )
    with pytest.raises(ConfigurationError):
        TransportPrimitive(
            "x", parse_configuration("C_a"), parse_configuration("H_a"), 10.0, {}, PrimitiveKind.ROTATE_WELL
        )


def test_library_names_unique(lib):
    p = lib.primitives[0]
    with pytest.raises(ValueError):
        PrimitiveLibrary((p, p))


def test_sequence_json_round_trip(lib):
    seq = compile_individual_address("b", lib)
    assert ShuttleSequence.from_json(seq.to_json()) == seq


# excursions from A_aB_b that the library covers directly
EXCURSIONS = ["S_a R_b", "L_a S_b", "S_ab", "A_a C_b"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(EXCURSIONS), min_size=1, max_size=4))
def test_random_chains_round_trip(chain):
    lib = default_library()
    configs = ["A_a B_b"]
    for c in chain:
        configs += [c, "A_a B_b"]
    seq = lib.sequence(configs)
    assert validate_sequence(seq)
    back = reverse_sequence(seq)
    assert totals(back) == totals(seq)
    assert is_identity(net_permutation(seq + back))
