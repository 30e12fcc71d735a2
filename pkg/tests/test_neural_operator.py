import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picard_operator.grid_field import Field, SpaceTimeGrid, NormSpec, sample_initial_data
from picard_operator.neural_operator import (
    LayerParams,
    NeuralOperatorModel,
    build_weight_tied,
    complexity,
    count_neurons,
    evaluate_layers,
    export_model,
    fit_envelope,
    forward,
    import_model,
    iterate_phi,
    relu_realization,
    verify_equivalence,
)
from picard_operator.nonlinearity_net import NonlinearitySpec, build_fnet, build_requ_exact
from picard_operator.picard_core import PicardConfig, depth_for, phi_step
from picard_operator.semigroup_kernel import OperatorSpec, build_expansion, tabulate_expansion

OP = OperatorSpec()
ZPOW = NonlinearitySpec("signed_power", 2, 2)
L2 = NormSpec(2, 2)
T = 0.1


@pytest.fixture(scope="module")
def setup():
    pc = PicardConfig(0.1, 1.0, 2.0, T, 0.5, L2, OP, ZPOW, nt=32, nx=32, certified=False)
    exp = build_expansion(OP, "haar", 16**3, T, 16)
    fnet = build_fnet(ZPOW, 2.0, 1e-2)
    return pc, exp, fnet


def u0_of(pc, seed=0, kind="random-trig"):
    return sample_initial_data(0.1, pc.nx, seed, kind)


def test_single_layer_is_initial_term(setup):
    pc, exp, fnet = setup
    u0 = u0_of(pc)
    model = build_weight_tied(exp, fnet, 1, pc.grid)
    ref = exp.bind(pc.grid).apply_initial(u0)
    assert np.array_equal(forward(model, u0).values, ref)
    assert model.hidden is None


def test_two_layers_equal_two_steps(setup):
    pc, exp, fnet = setup
    u0 = u0_of(pc, 3)
    model = build_weight_tied(exp, fnet, 2, pc.grid)
    u = phi_step(Field.zeros(pc.grid), u0, pc, "N_net", exp, fnet)
    u = phi_step(u, u0, pc, "N_net", exp, fnet)
    np.testing.assert_allclose(forward(model, u0).values, u.values, rtol=0, atol=1e-15)


@pytest.mark.parametrize("J", [1, 3, 7])
def test_weight_tied_is_bit_identical_to_iterated_map(setup, J):
    pc, exp, fnet = setup
    u0 = u0_of(pc, J)
    model = build_weight_tied(exp, fnet, J, pc.grid)
    assert np.array_equal(forward(model, u0).values, iterate_phi(u0, pc, exp, fnet, J).values)
    assert verify_equivalence(model, u0, pc) == 0.0
    hidden = model.layers[1:-1]
    assert all(h is hidden[0] for h in hidden)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["eigenmode", "random-trig", "bump"]), st.integers(1, 9))
def test_equivalence_property(setup, seed, kind, J):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, J, pc.grid)
    assert verify_equivalence(model, u0_of(pc, seed, kind), pc) <= 1e-10


def test_mismatched_surrogate_is_detected(setup):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, 4, pc.grid)
    coarse = build_fnet(ZPOW, 2.0, 0.3)
    assert verify_equivalence(model, u0_of(pc) * 10, pc, fnet=coarse) > 1e-10


def test_zero_data_gives_zero(setup):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, 5, pc.grid)
    assert np.all(forward(model, np.zeros(pc.nx)).values == 0)


def test_linear_problem_is_linear(setup):
    pc, exp, _ = setup
    zero_net = build_fnet(NonlinearitySpec("zero"), 2.0, 1e-2)
    model = build_weight_tied(exp, zero_net, 6, pc.grid)
    a, b = u0_of(pc, 1), u0_of(pc, 2)
    lhs = forward(model, 2.0 * a - 0.5 * b).values
    rhs = 2.0 * forward(model, a).values - 0.5 * forward(model, b).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_out_of_range_data_warns_and_clamps(setup):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, 2, pc.grid)
    with pytest.warns(RuntimeWarning, match="clamped"):
        forward(model, np.full(pc.nx, 5.0))


def test_model_validation(setup):
    pc, exp, fnet = setup
    with pytest.raises(ValueError):
        build_weight_tied(exp, fnet, 0, pc.grid)
    with pytest.raises(ValueError, match="vanish"):
        build_weight_tied(exp, lambda z: np.asarray(z) + 1.0, 2, pc.grid)
    model = build_weight_tied(exp, fnet, 3, pc.grid)
    untied = (model.layers[0], LayerParams(model.hidden.W.copy(), model.hidden.mix, model.hidden.b),
              model.hidden, model.layers[-1])
    with pytest.raises(ValueError, match="share"):
        NeuralOperatorModel(untied, exp, fnet, 3, pc.grid)
    with pytest.raises(ValueError, match="bias length"):
        LayerParams(np.zeros((2, 2)), None, np.zeros(3))


# -- explicit ReLU realization


@pytest.mark.parametrize("J", [1, 2, 5])
def test_relu_realization_matches_forward(setup, J):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, J, pc.grid)
    layers = relu_realization(model)
    assert len(layers) == 2 * (J - 1) + 2
    for seed in range(3):
        u0 = u0_of(pc, seed)
        out = evaluate_layers(layers, exp, pc.grid, u0)
        np.testing.assert_allclose(out.values, forward(model, u0).values, rtol=0, atol=1e-14)


def test_relu_realization_needs_pwl(setup):
    pc, exp, _ = setup
    poly = build_requ_exact(NonlinearitySpec("polynomial", 3, 3, coeffs=(0, 0, 0, 1)))
    model = build_weight_tied(exp, poly, 3, pc.grid)
    with pytest.raises(ValueError):
        relu_realization(model)


# -- complexity


def test_complexity_counts_at_one_percent(setup):
    pc, exp, _ = setup
    fnet = build_fnet(ZPOW, 1.0, 1e-2)
    assert fnet.knots.size == 11
    J = depth_for(1e-2, 0.5)
    model = build_weight_tied(exp, fnet, J, pc.grid)
    rep = complexity(model, 1e-2)
    nh = fnet.hinge_form()[0].size
    assert rep.J == 7
    assert rep.depth == 16
    assert rep.neurons == 2 + (J - 1) * (nh + 6) + 1
    assert rep.neurons <= rep.bound_H * (1 + 1e-12) and rep.depth <= rep.bound_L * (1 + 1e-12)
    assert rep.C_used == pytest.approx(max(16 / math.log(100) ** 2, rep.neurons / (100 * math.log(100) ** 2)))


def test_depth_grows_with_J(setup):
    pc, exp, fnet = setup
    depths = [complexity(build_weight_tied(exp, fnet, J, pc.grid), 1e-2).depth for J in range(1, 8)]
    assert all(b > a for a, b in zip(depths, depths[1:]))


def test_fit_envelope_covers_every_report(setup):
    pc, exp, _ = setup
    reports = []
    for eps in (1e-1, 1e-2, 1e-3):
        fnet = build_fnet(ZPOW, 2.0, eps)
        reports.append(complexity(build_weight_tied(exp, fnet, depth_for(eps, 0.5), pc.grid), eps))
    C = fit_envelope(reports)
    for r in reports:
        lg = math.log(1 / r.eps) ** 2
        assert r.depth <= C * lg * (1 + 1e-12)
        assert r.neurons <= C * lg / r.eps * (1 + 1e-12)


def test_neuron_count_matches_realization(setup):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, 4, pc.grid)
    assert count_neurons(model) == sum(l.d_out for l in relu_realization(model))


# -- squared-ReLU exact surrogate


def test_requ_model_preserves_sign():
    pc = PicardConfig(0.1, 1.0, 2.0, T, 0.5, NormSpec(4, 4), OP,
                      NonlinearitySpec("polynomial", 3, 3, coeffs=(0, 0, 0, 1)), nt=32, nx=32, certified=False)
    exp = build_expansion(OP, "haar", 16**3, T, 16)
    cells = tabulate_expansion(exp, np.arange(16) * T / 16, (np.arange(16) + 0.5) / 16)
    assert cells.min() >= -1e-12
    poly = build_requ_exact(pc.nonlinearity)
    model = build_weight_tied(exp, poly, 6, pc.grid)
    assert model.activation == "requ"
    u0 = np.abs(u0_of(pc, 4))
    pos = forward(model, u0).values
    neg = forward(model, -u0).values
    assert pos.min() >= -1e-12 and neg.max() <= 1e-12
    np.testing.assert_allclose(neg, -pos, atol=1e-15)  # odd nonlinearity


# -- export / import


def test_export_import_is_bit_exact(tmp_path, setup):
    pc, exp, fnet = setup
    model = build_weight_tied(exp, fnet, 5, pc.grid)
    export_model(model, tmp_path / "m")
    back = import_model(tmp_path / "m", OP)
    assert back.J == 5 and back.rank == model.rank and back.grid == pc.grid
    u0 = u0_of(pc, 9)
    assert np.array_equal(forward(back, u0).values, forward(model, u0).values)


def test_export_import_requ(tmp_path):
    grid = SpaceTimeGrid(16, 16, T)
    exp = build_expansion(OP, "haar", 16**2, T, 16)
    poly = build_requ_exact(NonlinearitySpec("polynomial", 3, 3, coeffs=(0, 0, 0, 1)))
    model = build_weight_tied(exp, poly, 3, grid)
    export_model(model, tmp_path / "p")
    back = import_model(tmp_path / "p", OP)
    u0 = 0.1 * np.sin(np.pi * grid.x)
    assert np.array_equal(forward(back, u0).values, forward(model, u0).values)
