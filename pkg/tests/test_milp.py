from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single_job_instance, tight_battery_instance
from oracles import all_schedules
from onts.milp import (
    LPParseError,
    ROW_FAMILIES,
    build_standard_form,
    export_lp,
    full_vector,
    matrix_feasible,
    parse_lp,
    phi_index,
    soc_index,
    x_index,
)
from onts.model import CandidateSolution, check_feasibility, qos


def test_variable_count_small():
    sf = build_standard_form(single_job_instance(T=3))
    assert sf.n_vars == 10
    assert list(sf.var_names[:3]) == ["x_1_1", "x_1_2", "x_1_3"]
    assert list(sf.var_names[3:6]) == ["phi_1_1", "phi_1_2", "phi_1_3"]
    assert list(sf.var_names[6:]) == ["soc_1", "soc_2", "soc_3", "soc_4"]


def test_binary_count_reference_scale():
    from onts.generate import random_instance

    sf = build_standard_form(random_instance(9, 125, 0))
    assert sum(kind == "binary" for kind in sf.var_kinds) == 2250


def test_index_helpers_agree_with_names():
    inst = tight_battery_instance(4, J=2, T=5)
    sf = build_standard_form(inst)
    assert sf.var_names[x_index(5, 1, 3)] == "x_2_4"
    assert sf.var_names[phi_index(2, 5, 0, 0)] == "phi_1_1"
    assert sf.var_names[soc_index(2, 5, 5)] == "soc_6"


def test_row_family_order():
    sf = build_standard_form(tight_battery_instance(8, J=2, T=6))
    seen = [row.family for row in sf.rows]
    order = [f for f in ROW_FAMILIES if f in seen]
    positions = [order.index(f) for f in seen]
    assert positions == sorted(positions)


def test_objective_is_qos():
    inst = tight_battery_instance(2, J=2, T=4)
    sf = build_standard_form(inst)
    for x in all_schedules(2, 4):
        z = CandidateSolution.from_x(np.array(x))
        assert sf.c @ full_vector(inst, z) == pytest.approx(qos(inst, z.x), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 5000))
def test_matrix_and_semantic_feasibility_agree(seed):
    inst = tight_battery_instance(seed)
    if inst.J * inst.T > 10:
        inst = tight_battery_instance(seed, J=1)
    sf = build_standard_form(inst)
    for x in all_schedules(inst.J, inst.T):
        z = CandidateSolution.from_x(np.array(x))
        assert matrix_feasible(sf, full_vector(inst, z)) == check_feasibility(inst, z).feasible


def test_all_zero_schedule_consistent_in_both_forms():
    inst = single_job_instance(T=4, y_min=0)
    z = CandidateSolution.from_x(np.zeros((1, 4), dtype=int))
    sf = build_standard_form(inst)
    assert matrix_feasible(sf, full_vector(inst, z)) == check_feasibility(inst, z).feasible


def test_lp_roundtrip_small(tmp_path):
    sf = build_standard_form(single_job_instance(T=3))
    export_lp(sf, tmp_path / "m.lp")
    back = parse_lp(tmp_path / "m.lp")
    assert back == sf
    assert back.n_rows == sf.n_rows


def test_lp_roundtrip_vacuous_job(tmp_path):
    sf = build_standard_form(single_job_instance(T=1, p_max=1))
    export_lp(sf, tmp_path / "m.lp")
    assert parse_lp(tmp_path / "m.lp") == sf


def test_lp_text_sections(tmp_path):
    export_lp(build_standard_form(single_job_instance(T=3)), tmp_path / "m.lp")
    lines = (tmp_path / "m.lp").read_text().splitlines()
    heads = [ln for ln in lines if ln in ("Maximize", "Subject To", "Bounds", "Binary", "End")]
    assert heads == ["Maximize", "Subject To", "Bounds", "Binary", "End"]


def test_coefficient_survives_roundtrip_bit_exactly(tmp_path):
    # the SoC coefficient 0.9 / (60 * 5 * 3.6) ~ 8.3e-4 and r-driven right-hand sides
    inst = tight_battery_instance(1, J=1, T=3)
    sf = build_standard_form(inst)
    export_lp(sf, tmp_path / "m.lp")
    back = parse_lp(tmp_path / "m.lp")
    for a, b in zip(sf.rows, back.rows):
        assert a.rhs == b.rhs
        assert [c for _, c in a.coeffs] == [c for _, c in b.coeffs]
    value = 10 / 3.6 * 1e-3
    assert float(format(value, ".17g")) == value


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.lp"
    path.write_text("Maximize\n obj: 1 x_1_1\nSubject To\n r0_2a: 1 phi_1_1 ?? 0\nEnd\n")
    with pytest.raises(LPParseError) as err:
        parse_lp(path)
    assert err.value.lineno == 4


def test_parse_missing_file(tmp_path):
    with pytest.raises(OSError):
        parse_lp(tmp_path / "missing.lp")
