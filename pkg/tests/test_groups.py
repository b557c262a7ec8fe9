import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqpac.errors import NonFreeOrbit, ShiftOutOfWindow
from eqpac.groups import (
    FiniteGroupTable, OrbitResolver, ShiftGroup, cyclic_permutation_action, group_action_from_config,
    rotation_action, shift_action, swap_action, verify_group_axioms,
)


@pytest.mark.parametrize("group", [FiniteGroupTable.cyclic(1), FiniteGroupTable.cyclic(8),
                                   FiniteGroupTable.symmetric2(), ShiftGroup(radius=5)])
def test_builtin_groups_satisfy_axioms(group):
    assert verify_group_axioms(group).passed


def test_corrupted_table_reports_associativity_witness():
    # a Latin square with identity 0 and inverses, but not associative
    table = np.array([[0, 1, 2, 3, 4], [1, 0, 3, 4, 2], [2, 4, 0, 1, 3], [3, 2, 4, 0, 1], [4, 3, 1, 2, 0]])
    report = verify_group_axioms(FiniteGroupTable(table, [0, 1, 2, 3, 4]))
    assert report.failures() == ["associativity"]
    g, h, k = report.results["associativity"].witness
    assert table[table[g, h], k] != table[g, table[h, k]]


def test_out_of_range_table_entry_breaks_closure():
    report = verify_group_axioms(FiniteGroupTable([[0, 1], [1, 7]], [0, 1]))
    assert not report.results["closure"].passed
    assert report.results["closure"].witness == (1, 1)


def test_wrong_inverse_is_caught():
    report = verify_group_axioms(FiniteGroupTable(FiniteGroupTable.cyclic(3).compose_table, [0, 1, 2]))
    assert report.failures() == ["inverse"]


def test_exhaustive_cap():
    with pytest.raises(ValueError):
        verify_group_axioms(FiniteGroupTable.cyclic(65))


def test_rotation_by_quarter_turn():
    action = rotation_action(4, 2)
    np.testing.assert_allclose(action.act(1, [1.0, 0.0]), [0.0, 1.0], atol=1e-15)
    np.testing.assert_array_equal(action.matrix(2), -np.eye(2))


def test_cyclic_permutation_moves_entries_forward():
    action = cyclic_permutation_action(3)
    np.testing.assert_array_equal(action.act(1, [1.0, 2.0, 3.0]), [3.0, 1.0, 2.0])


def test_shift_out_of_window_raises():
    action = shift_action(4)
    np.testing.assert_array_equal(action.act(1, [1.0, 2.0, 0.0, 0.0]), [0.0, 1.0, 2.0, 0.0])
    with pytest.raises(ShiftOutOfWindow):
        action.act(3, [1.0, 2.0, 0.0, 0.0])
    with pytest.raises(ShiftOutOfWindow):
        action.act(-1, [1.0, 2.0, 0.0, 0.0])


def test_swap_resolution():
    resolver = OrbitResolver(swap_action())
    res = resolver.resolve([0.2, 0.7])
    np.testing.assert_array_equal(res.representative, [0.7, 0.2])
    assert res.group_part == 1
    assert resolver.resolve([0.7, 0.2]).group_part == 0


def test_fixed_points_are_rejected():
    with pytest.raises(NonFreeOrbit):
        OrbitResolver(swap_action()).resolve([0.5, 0.5])
    with pytest.raises(NonFreeOrbit):
        OrbitResolver(rotation_action(8, 4)).resolve(np.zeros(4))
    with pytest.raises(NonFreeOrbit):
        OrbitResolver(shift_action(6)).resolve(np.zeros(6))


def test_rule_must_fit_action():
    with pytest.raises(ValueError):
        OrbitResolver(swap_action(), rule="canonical-sector")


def test_sector_boundary_belongs_to_next_rotation():
    resolver = OrbitResolver(rotation_action(8, 2))
    theta = 2 * math.pi / 8
    res = resolver.resolve([math.cos(theta), math.sin(theta)])
    assert res.group_part == 1
    np.testing.assert_allclose(res.representative, [1.0, 0.0], atol=1e-12)


def test_config_built_actions():
    assert group_action_from_config({"group.kind": "symmetric2"}).dim == 2
    rot = group_action_from_config({"group.kind": "cyclic", "group.order": 8, "action.kind": "rotation",
                                    "action.dim": 4})
    assert rot.kind == "rotation" and rot.group.order == 8
    assert group_action_from_config({"group.kind": "shift", "action.window": 10}).dim == 10
    with pytest.raises(ValueError):
        group_action_from_config({"group.kind": "cyclic", "group.order": 3, "action.dim": 4})


finite_vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=200, deadline=None)
@given(finite_vectors, st.integers(2, 12), st.integers(0, 11))
def test_rotation_resolve_roundtrip(values, order, g):
    x = np.array(values)
    if np.linalg.norm(x[:2]) < 1e-3 and np.linalg.norm(x[2:]) < 1e-3:
        return
    action = rotation_action(order, 4)
    resolver = OrbitResolver(action)
    moved = action.act(g % order, x)
    rep, part = resolver.resolve(moved).representative, resolver.resolve(moved).group_part
    np.testing.assert_allclose(action.act(part, rep), moved, atol=1e-9)
    assert resolver.is_canonical(rep)
    # every orbit element resolves to the same representative
    np.testing.assert_allclose(resolver.resolve(x).representative, rep, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=5), st.integers(0, 5))
def test_shift_resolve_roundtrip(pattern, offset):
    if not any(pattern):
        return
    window = 12
    x = np.zeros(window)
    x[offset:offset + len(pattern)] = pattern
    resolver = OrbitResolver(shift_action(window))
    res = resolver.resolve(x)
    assert res.representative[0] != 0
    np.testing.assert_array_equal(shift_action(window).act(res.group_part, res.representative), x)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 16), st.integers(0, 15), st.integers(0, 15))
def test_rotation_is_a_homomorphism(order, g, h):
    action = rotation_action(order, 2)
    g, h = g % order, h % order
    np.testing.assert_allclose(action.matrix(g) @ action.matrix(h),
                               action.matrix(action.group.compose(g, h)), atol=1e-12)
