import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qistack.cqasm import (
    GATE1_NAMES,
    GATE2_NAMES,
    ROT_NAMES,
    Circuit,
    CircuitSyntaxError,
    Gate1,
    Gate2,
    MeasureAll,
    MissingHeader,
    ParseError,
    QubitOutOfRange,
    Rot,
    TrailingAfterMeasure,
    UnknownGate,
    parse,
    to_text,
)

PINGPONG_CIRCUIT = "version 1.0; qubits 2; H q[0]; measure_all"


class TestParse:
    def test_reference_circuit(self):
        c = parse(PINGPONG_CIRCUIT)
        assert c.qubits == 2
        assert c.statements == (Gate1("H", 0), MeasureAll())

    def test_measure_only(self):
        c = parse("version 1.0; qubits 1; measure_all")
        assert c.statements == (MeasureAll(),)

    def test_newline_separators_and_comments(self):
        c = parse("version 1.0\nqubits 2  # two qubits\nH q[0]  # mix\nCNOT q[0], q[1]\nmeasure_all")
        assert c.statements == (Gate1("H", 0), Gate2("CNOT", 0, 1), MeasureAll())

    def test_case_insensitive_gate_names(self):
        c = parse("version 1.0; qubits 2; h q[0]; cnot q[0], q[1]; SDAG q[1]")
        assert c.statements == (Gate1("H", 0), Gate2("CNOT", 0, 1), Gate1("Sdag", 1))

    def test_rotation(self):
        c = parse("version 1.0; qubits 1; Rx q[0], 1.5707963267948966")
        assert c.statements == (Rot("Rx", 0, math.pi / 2),)

    def test_negative_angle(self):
        c = parse("version 1.0; qubits 1; Rz q[0], -0.5")
        assert c.statements == (Rot("Rz", 0, -0.5),)

    def test_qubit_out_of_range(self):
        with pytest.raises(QubitOutOfRange):
            parse("version 1.0; qubits 2; H q[5]; measure_all")

    def test_unknown_gate(self):
        with pytest.raises(UnknownGate):
            parse("version 1.0; qubits 2; FOO q[0]")

    def test_missing_header(self):
        with pytest.raises(MissingHeader):
            parse("qubits 2; H q[0]")

    def test_missing_qubits(self):
        with pytest.raises(MissingHeader):
            parse("version 1.0; H q[0]")

    def test_trailing_after_measure(self):
        with pytest.raises(TrailingAfterMeasure):
            parse("version 1.0; qubits 2; measure_all; H q[0]")

    def test_two_qubit_same_operand(self):
        with pytest.raises(CircuitSyntaxError):
            parse("version 1.0; qubits 2; CNOT q[1], q[1]")

    def test_qubit_cap(self):
        with pytest.raises(CircuitSyntaxError):
            parse("version 1.0; qubits 21")

    def test_error_position_points_at_token(self):
        try:
            parse("version 1.0; qubits 2;\nH q[9]")
        except QubitOutOfRange as exc:
            assert exc.line == 2
            assert exc.column == 5
        else:
            pytest.fail("expected QubitOutOfRange")

    def test_every_parse_error_has_position(self):
        bad = ["", "version 2.0; qubits 1", "version 1.0; qubits 1; H", "version 1.0; qubits 0"]
        for text in bad:
            with pytest.raises(ParseError) as excinfo:
                parse(text)
            assert excinfo.value.line >= 1
            assert excinfo.value.column >= 1


class TestPrint:
    def test_reference_literal(self):
        c = Circuit(2, (Gate1("H", 0), MeasureAll()))
        assert to_text(c) == PINGPONG_CIRCUIT

    def test_no_statements(self):
        assert to_text(Circuit(1, ())) == "version 1.0; qubits 1"

    def test_rotation_shortest_decimal(self):
        c = Circuit(2, (Rot("Rx", 0, 1.5707963267948966), MeasureAll()))
        assert to_text(c) == "version 1.0; qubits 2; Rx q[0], 1.5707963267948966; measure_all"
        assert parse(to_text(c)) == c


# -- property tests ---------------------------------------------------------


@st.composite
def circuits(draw):
    qubits = draw(st.integers(min_value=1, max_value=5))
    statements = []
    for _ in range(draw(st.integers(min_value=0, max_value=8))):
        choice = draw(st.integers(0, 2))
        if choice == 0:
            statements.append(
                Gate1(draw(st.sampled_from(GATE1_NAMES)), draw(st.integers(0, qubits - 1)))
            )
        elif choice == 1:
            angle = draw(
                st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)
            )
            statements.append(
                Rot(draw(st.sampled_from(ROT_NAMES)), draw(st.integers(0, qubits - 1)), angle)
            )
        elif qubits >= 2:
            control = draw(st.integers(0, qubits - 1))
            target = draw(st.integers(0, qubits - 1).filter(lambda t: t != control))
            statements.append(Gate2(draw(st.sampled_from(GATE2_NAMES)), control, target))
    if draw(st.booleans()):
        statements.append(MeasureAll())
    return Circuit(qubits, tuple(statements))


@given(circuits())
@settings(max_examples=200)
def test_parse_print_identity(circuit):
    assert parse(to_text(circuit)) == circuit


@given(circuits())
@settings(max_examples=100)
def test_canonicalization_fixpoint(circuit):
    text = to_text(circuit)
    assert to_text(parse(text)) == text
