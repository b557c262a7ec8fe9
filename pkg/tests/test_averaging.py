import numpy as np
import pytest

from eqpac.averaging import (
    ParameterProjection, average_function, build_parameter_projection, check_closure, check_equivariant,
    check_fixed_point, check_idempotent, default_probes, equivariant_family, projection_matrix_from_csv,
)
from eqpac.data import builtin_scenario
from eqpac.errors import ClosureNotCertified, NotIdempotent
from eqpac.families import LinearFamily, Predictor, TabularFamily, TiedFamily
from eqpac.groups import OrbitResolver, swap_action
from eqpac.kernels import GroupKernel, table_kernel, uniform_kernel

SWAP = OrbitResolver(swap_action())


def first_coordinate(X):
    return np.atleast_2d(X)[:, 0]


def test_uniform_average_of_first_coordinate():
    qf = average_function(first_coordinate, uniform_kernel(SWAP.group), SWAP)
    X = np.array([[0.9, 0.1], [0.2, 0.6], [3.0, -1.0]])
    np.testing.assert_allclose(qf(X), X.sum(axis=1) / 2, atol=1e-15)
    assert qf(np.array([0.9, 0.1])) == pytest.approx(0.5)


def test_nonuniform_tabular_average():
    # on the orbit {(1, 0), (0, 1)} with kappa(e) = 0.7, f(1, 0) = 1 and f(0, 1) = 0
    domain = np.array([[1.0, 0.0], [0.0, 1.0]])
    family = TabularFamily(domain)
    f = Predictor(family, [1.0, 0.0])
    qf = average_function(f, table_kernel({0: 0.7, 1: 0.3}), SWAP)
    np.testing.assert_allclose(qf(domain), [0.7, 0.7], atol=1e-15)


def test_equivariance_check_finds_witness():
    report = check_equivariant(first_coordinate, swap_action(), np.array([[0.9, 0.1], [0.3, 0.2]]))
    assert not report.passed
    g, x = report.witness
    assert g == 1 and x.shape == (2,)
    ok = check_equivariant(lambda X: np.atleast_2d(X).sum(axis=1), swap_action(), np.random.default_rng(0).random((50, 2)))
    assert ok.passed and ok.max_deviation == 0.0


@pytest.mark.parametrize("name", ["swap-toy", "restricted-rotation", "shifted-signals"])
@pytest.mark.parametrize("variant", ["uniform", "nonuniform"])
def test_operator_properties_on_scenarios(name, variant):
    spec = builtin_scenario(name, variant)
    domain = spec.input_domain()
    family = TabularFamily(domain)
    rng = np.random.default_rng(11)
    for _ in range(5):
        f = Predictor(family, rng.uniform(0, 1, family.n_params))
        qf = average_function(f, spec.kernel, spec.resolver)
        assert check_equivariant(qf, spec.action, domain).passed
        assert check_fixed_point(f, spec.kernel, spec.resolver, domain).passed
        assert check_fixed_point(qf, spec.kernel, spec.resolver, domain).passed
    assert check_idempotent(spec.kernel, spec.resolver, family, n_predictors=5, probes=domain).passed


def test_unnormalized_kernel_fails_idempotency():
    family = LinearFamily(2)
    corrupt = GroupKernel({"global": {0: 0.7, 1: 0.7}}, validate=False)
    report = check_idempotent(corrupt, SWAP, family, n_predictors=4)
    assert not report.passed
    assert report.max_deviation > 1e-3


def test_linear_projection_is_the_group_average():
    proj = build_parameter_projection(LinearFamily(2), SWAP, uniform_kernel(SWAP.group))
    np.testing.assert_allclose(proj.matrix, np.full((2, 2), 0.5), atol=1e-15)
    assert proj.rank == 1


def test_linear_family_with_nonuniform_kernel_is_not_certified():
    with pytest.raises(ClosureNotCertified):
        build_parameter_projection(LinearFamily(2), SWAP, table_kernel({0: 0.7, 1: 0.3}))


@pytest.mark.parametrize("name", ["swap-toy", "restricted-rotation", "shifted-signals"])
def test_tabular_projection_matches_function_average(name):
    spec = builtin_scenario(name, "nonuniform")
    family = TabularFamily(spec.input_domain())
    proj = build_parameter_projection(family, spec.resolver, spec.kernel, n_probe_predictors=20)
    assert check_closure(proj, spec.resolver, spec.kernel, n_predictors=20).passed
    np.testing.assert_allclose(proj.matrix @ proj.matrix, proj.matrix, atol=1e-12)


def test_tied_family_projection_is_identity():
    spec = builtin_scenario("restricted-rotation")
    family = TabularFamily(spec.input_domain())
    tied = equivariant_family(family, spec.resolver)
    assert tied.n_params == len(spec.representatives)
    proj = build_parameter_projection(tied, spec.resolver, spec.kernel, n_probe_predictors=10)
    np.testing.assert_array_equal(proj.matrix, np.eye(tied.n_params))


def test_tied_family_must_stay_in_fixed_space():
    spec = builtin_scenario("swap-toy")
    family = TabularFamily(spec.input_domain())
    bad = TiedFamily(family, np.eye(family.n_params)[:, :3])
    with pytest.raises(ClosureNotCertified):
        build_parameter_projection(bad, spec.resolver, spec.kernel)


def test_linear_equivariant_subspace():
    family = LinearFamily(2)
    proj = build_parameter_projection(family, SWAP, uniform_kernel(SWAP.group))
    tied = equivariant_family(family, SWAP, proj)
    assert tied.n_params == 1
    w = tied.expand([1.0])
    np.testing.assert_allclose(w[0], w[1])


def test_non_idempotent_projection_is_rejected():
    with pytest.raises(NotIdempotent):
        ParameterProjection(np.array([[1.0, 1.0], [0.0, 1.0]]), LinearFamily(2))


def test_projection_csv_roundtrip():
    proj = build_parameter_projection(LinearFamily(2), SWAP, uniform_kernel(SWAP.group))
    np.testing.assert_array_equal(projection_matrix_from_csv(proj.to_csv()), proj.matrix)


def test_shift_probes_stay_in_window():
    spec = builtin_scenario("shifted-signals")
    probes = default_probes(LinearFamily(16), spec.resolver, spec.kernel, n=64)
    for x in probes:
        for g in spec.kernel.support:
            spec.action.act(g, spec.resolver.resolve(x).representative)
