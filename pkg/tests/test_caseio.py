import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gridattacksim.caseio import (
    BranchRecord,
    BusKind,
    BusRecord,
    CaseParseError,
    DanglingReference,
    DuplicateBusId,
    GenRecord,
    MalformedRow,
    MissingSection,
    NetworkCase,
    NoSlackBus,
    _replace,
    builtin_case14,
    case_to_text,
    fixture_text,
    load_case,
    parse_matpower_case,
    validate_case,
)

MINIMAL = """\
function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0 1 1 0 0 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
    1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
"""

FIXTURES = ["case14", "case2", "case3"]


class TestParseMinimal:
    def test_echoes_literal_values(self):
        case = parse_matpower_case(MINIMAL)
        assert case.base_mva == 100.0
        assert case.buses == (
            BusRecord(1, BusKind.SLACK, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.1, 0.9),
            BusRecord(2, BusKind.PQ, 50.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.1, 0.9),
        )
        assert case.gens == (GenRecord(1, 0.0, 0.0, 100.0, -100.0, 1.0, True, 200.0, 0.0),)
        assert case.branches == (BranchRecord(1, 2, 0.0, 0.1, 0.0, 1.0, 0.0, True),)
        assert case.name == "tiny"

    def test_tap_zero_becomes_one(self):
        assert parse_matpower_case(MINIMAL).branches[0].tap == 1.0

    def test_short_gen_row_names_line(self):
        text = MINIMAL.replace("1 0 0 100 -100 1 100 1 200 0;", "1 0 0 100 -100 1 100;")
        with pytest.raises(MalformedRow) as err:
            parse_matpower_case(text)
        assert err.value.line == 9
        assert "line 9" in str(err.value)

    def test_non_numeric_token(self):
        text = MINIMAL.replace("2 1 50 0", "2 1 fifty 0")
        with pytest.raises(MalformedRow, match="fifty") as err:
            parse_matpower_case(text)
        assert err.value.line == 6

    @pytest.mark.parametrize("section", ["bus", "gen", "branch"])
    def test_missing_section(self, section):
        lines = MINIMAL.splitlines()
        start = next(i for i, ln in enumerate(lines) if ln.startswith(f"mpc.{section} "))
        end = next(i for i in range(start, len(lines)) if lines[i].startswith("];"))
        text = "\n".join(lines[:start] + lines[end + 1:])
        with pytest.raises(MissingSection):
            parse_matpower_case(text)

    def test_missing_base(self):
        with pytest.raises(MissingSection):
            parse_matpower_case(MINIMAL.replace("mpc.baseMVA = 100;", ""))

    def test_no_slack(self):
        with pytest.raises(NoSlackBus):
            parse_matpower_case(MINIMAL.replace("1 3 0  0", "1 2 0  0"))

    def test_duplicate_bus(self):
        with pytest.raises(DuplicateBusId) as err:
            parse_matpower_case(MINIMAL.replace("2 1 50 0", "1 1 50 0"))
        assert err.value.line == 6

    def test_gen_on_unknown_bus(self):
        with pytest.raises(DanglingReference):
            parse_matpower_case(MINIMAL.replace("1 0 0 100 -100", "7 0 0 100 -100"))

    def test_branch_to_unknown_bus(self):
        with pytest.raises(DanglingReference):
            parse_matpower_case(MINIMAL.replace("1 2 0 0.1", "1 9 0 0.1"))

    def test_unterminated_matrix(self):
        with pytest.raises(MalformedRow):
            parse_matpower_case(MINIMAL.rsplit("];", 1)[0])

    def test_version_one_rejected(self):
        with pytest.raises(CaseParseError, match="version"):
            parse_matpower_case(MINIMAL.replace("'2'", "'1'"))

    def test_unknown_assignments_and_cells_ignored(self):
        text = MINIMAL + (
            "mpc.bus_name = {\n 'ONE';\n 'TWO';\n};\n"
            "mpc.gencost = [\n 2 0 0 3 0.1 20 0;\n];\nmpc.foo = 3;\n"
        )
        assert parse_matpower_case(text) == parse_matpower_case(MINIMAL)

    def test_rows_sharing_a_line_and_commas(self):
        text = MINIMAL.replace(
            "    1 3 0  0 0 0 1 1 0 0 1 1.1 0.9;\n    2 1 50",
            "    1,3,0,0,0,0,1,1,0,0,1,1.1,0.9; 2 1 50",
        )
        assert parse_matpower_case(text) == parse_matpower_case(MINIMAL)

    def test_trailing_comment_on_row(self):
        text = MINIMAL.replace("2 1 50 0 0 0 1 1 0 0 1 1.1 0.9;", "2 1 50 0 0 0 1 1 0 0 1 1.1 0.9; % load")
        assert parse_matpower_case(text) == parse_matpower_case(MINIMAL)

    def test_noncontiguous_ids_keep_labels(self, case3):
        assert [b.id for b in case3.buses] == [1, 2, 5]
        assert case3.bus_index == {1: 0, 2: 1, 5: 2}


class TestCase14:
    def test_counts_and_base(self, case14):
        assert len(case14.buses) == 14
        assert len(case14.branches) == 20
        assert case14.base_mva == 100.0

    def test_generator_buses(self, case14):
        assert [g.bus for g in case14.gens] == [1, 2, 3, 6, 8]

    def test_slack_is_bus_1(self, case14):
        assert case14.slack_ids == [1]

    def test_transformers(self, case14):
        taps = {(br.from_bus, br.to_bus) for br in case14.branches if br.tap != 1.0}
        assert taps == {(4, 7), (4, 9), (5, 6)}

    def test_load_buses(self, case14):
        # bus 6 carries demand in the published case even though it is a generator bus
        assert {b.id for b in case14.buses if b.pd > 0} == {2, 3, 4, 5, 6, 9, 10, 11, 12, 13, 14}

    def test_builtin_matches_fixture_parse(self):
        assert builtin_case14() == parse_matpower_case(fixture_text("case14"))
        assert load_case("builtin:case14") == builtin_case14()

    def test_valid(self, case14):
        assert validate_case(case14) == []


class TestValidate:
    def test_two_slacks_one_entry(self, case14):
        buses = list(case14.buses)
        buses[1] = _replace(buses[1], bus_kind=BusKind.SLACK)
        problems = validate_case(NetworkCase(100.0, tuple(buses), case14.gens, case14.branches))
        assert len(problems) == 1
        assert "1" in problems[0] and "2" in problems[0]

    def test_zero_reactance_branch(self, case14):
        branches = list(case14.branches)
        branches[3] = _replace(branches[3], x=0.0)
        problems = validate_case(NetworkCase(100.0, case14.buses, case14.gens, tuple(branches)))
        assert len(problems) == 1
        assert "2-4" in problems[0]

    def test_out_of_service_zero_reactance_is_fine(self, case14):
        branches = list(case14.branches)
        branches[3] = _replace(branches[3], x=0.0, status=False)
        assert validate_case(NetworkCase(100.0, case14.buses, case14.gens, tuple(branches))) == []

    def test_reversed_limits(self, case14):
        gens = list(case14.gens)
        gens[2] = _replace(gens[2], qmin=50.0)
        buses = list(case14.buses)
        buses[4] = _replace(buses[4], vmin=1.2)
        problems = validate_case(NetworkCase(100.0, tuple(buses), tuple(gens), case14.branches))
        assert len(problems) == 2

    def test_gen_on_pq_bus(self, case14):
        buses = list(case14.buses)
        buses[2] = _replace(buses[2], bus_kind=BusKind.PQ)
        problems = validate_case(NetworkCase(100.0, tuple(buses), case14.gens, case14.branches))
        assert problems == ["gen 2 (bus 3): in service on a PQ bus"]


class TestRoundTrip:
    @pytest.mark.parametrize("name", FIXTURES)
    def test_serialise_reparse_identical(self, name):
        case = parse_matpower_case(fixture_text(name))
        again = parse_matpower_case(case_to_text(case))
        assert again == case
        assert again.name == case.name

    @pytest.mark.parametrize("name", FIXTURES)
    def test_row_order_preserved(self, name):
        text = fixture_text(name)
        case = parse_matpower_case(text)
        again = parse_matpower_case(case_to_text(case))
        assert [b.id for b in again.buses] == [b.id for b in case.buses]
        assert [(br.from_bus, br.to_bus) for br in again.branches] == [
            (br.from_bus, br.to_bus) for br in case.branches
        ]

    @settings(max_examples=50, deadline=None)
    @given(pd=st.floats(-1e4, 1e4, allow_nan=False), va=st.floats(-180, 180, allow_nan=False))
    def test_arbitrary_floats_round_trip(self, pd, va):
        case = builtin_case14()
        buses = list(case.buses)
        buses[5] = _replace(buses[5], pd=pd, va0=va)
        mutated = NetworkCase(case.base_mva, tuple(buses), case.gens, case.branches, case.name)
        assert parse_matpower_case(case_to_text(mutated)) == mutated


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(
    name=st.sampled_from(FIXTURES),
    edits=st.lists(st.tuples(st.floats(0, 1, exclude_max=True), st.integers(0, 255)),
                   min_size=1, max_size=8),
)
def test_fuzzed_fixtures_parse_or_fail_cleanly(name, edits):
    data = bytearray(fixture_text(name).encode())
    for pos, byte in edits:
        data[int(pos * len(data))] = byte
    text = data.decode("utf-8", errors="replace")
    try:
        parse_matpower_case(text)
    except CaseParseError as exc:
        assert isinstance(exc.line, int) and exc.line >= 1
