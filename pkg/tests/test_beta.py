"""Channel decomposition exactness, moment estimation, and audits."""

import numpy as np
import pytest

from oracles import random_network
from reludyn.beta import (
    LipschitzEstimate,
    compute_beta,
    estimate_moments,
    lipschitz_probe,
    overlap_eps,
    probe_separation,
    psi_d,
    psi_l,
    sample_probe_tuples,
    separation_residual,
    verify_identity,
)
from reludyn.errors import ConfigurationError, PreconditionError
from reludyn.net import NetworkSpec, backward, build_network, forward
from reludyn.teachers import GausStream, TeacherSpec, make_teacher, next_batch

# frozen from an independent 2D Monte-Carlo run (4e6 samples, seed 99)
PSI_D_ORACLE = {
    np.pi / 6: (0.417103, 0.000247),
    np.pi / 2: (0.250473, 0.000217),
}


def paired_traces(student, teacher, batch, seed=0, std=1.0):
    x = np.random.default_rng(seed).normal(0, std, size=(batch, student.spec.layer_widths[0]))
    return x, forward(student, x), forward(teacher, x)


def identity_residual(student, teacher, batch=8, seed=0):
    x, tr_s, tr_t = paired_traces(student, teacher, batch, seed)
    grads = backward(student, tr_s, tr_t.outputs)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    res = verify_identity(betas, tr_s, tr_t, grads)
    gmax = max(float(np.abs(g).max()) for g in grads.node)
    return res, gmax


# ------------------------------------------------------------ decomposition


def test_identity_wide_random_pair():
    rng = np.random.default_rng(0)
    student = random_network(rng, (20, 30, 25, 10))
    teacher = random_network(rng, (20, 15, 12, 10))
    res, gmax = identity_residual(student, teacher, batch=8)
    assert res < 1e-10 * max(1.0, gmax)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize(
    "s_widths,t_widths",
    [
        ((5, 3), (5, 3)),  # no hidden layer: base case only
        ((6, 9, 4), (6, 5, 4)),
        ((4, 8, 8, 3), (4, 6, 5, 3)),
        ((7, 12, 10, 6, 2), (7, 5, 4, 3, 2)),
    ],
)
def test_identity_exact_across_architectures(s_widths, t_widths, seed):
    rng = np.random.default_rng(seed)
    student = random_network(rng, s_widths)
    teacher = random_network(rng, t_widths)
    res, gmax = identity_residual(student, teacher, batch=6, seed=seed)
    assert res < 1e-10 * max(1.0, gmax)


def test_identity_exact_without_biases():
    spec_s = NetworkSpec(layer_widths=(5, 8, 3), has_bias=(False, False))
    spec_t = NetworkSpec(layer_widths=(5, 6, 3), has_bias=(False, False))
    rng = np.random.default_rng(3)
    student = build_network(
        spec_s, [rng.normal(size=(5, 8)), rng.normal(size=(8, 3))]
    )
    teacher = build_network(
        spec_t, [rng.normal(size=(5, 6)), rng.normal(size=(6, 3))]
    )
    res, gmax = identity_residual(student, teacher)
    assert res < 1e-10 * max(1.0, gmax)
    x, tr_s, tr_t = paired_traces(student, teacher, 4)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    for arr in betas.beta_star_bias + betas.beta_bias:
        assert np.all(arr == 0.0)


def test_top_layer_is_identity_pattern():
    rng = np.random.default_rng(1)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 5, 3))
    x, tr_s, tr_t = paired_traces(student, teacher, 7)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    eye = np.broadcast_to(np.eye(3), (7, 3, 3))
    assert np.array_equal(betas.beta_star[-1], eye)
    assert np.array_equal(betas.beta[-1], eye)
    assert np.all(betas.beta_star_bias[-1] == 0.0)
    assert np.all(betas.beta_bias[-1] == 0.0)


def test_closed_gates_zero_lower_channels():
    # a closed hidden layer kills every channel below it: its gates enter
    # each recursion step that crosses the layer.  Channels above (and the
    # gate-free top) are untouched.
    rng = np.random.default_rng(2)
    student = random_network(rng, (4, 6, 5, 2))
    biases = [b.copy() for b in student.biases]
    biases[1] = biases[1] - 100.0  # second hidden layer never fires
    student = build_network(student.spec, list(student.weights), biases)
    teacher = random_network(rng, (4, 3, 3, 2))
    x, tr_s, tr_t = paired_traces(student, teacher, 5)
    assert np.all(tr_s.gate[1] == 0.0)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    assert np.all(betas.beta_star[0] == 0.0)
    assert np.all(betas.beta[0] == 0.0)
    assert np.all(betas.beta_star_bias[0] == 0.0)
    assert np.abs(betas.beta_star[1]).max() > 0.0
    grads = backward(student, tr_s, tr_t.outputs)
    assert verify_identity(betas, tr_s, tr_t, grads) < 1e-12


def test_clone_student_has_zero_gradients():
    teacher = random_network(np.random.default_rng(4), (5, 7, 3))
    x, tr_s, tr_t = paired_traces(teacher, teacher, 6)
    grads = backward(teacher, tr_s, tr_t.outputs)
    for g in grads.node:
        assert np.all(g == 0.0)
    betas = compute_beta(teacher, teacher, tr_s, tr_t)
    assert verify_identity(betas, tr_s, tr_t, grads) == 0.0


def test_corrupted_channel_is_detected():
    rng = np.random.default_rng(5)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 5, 3))
    x, tr_s, tr_t = paired_traces(student, teacher, 8)
    grads = backward(student, tr_s, tr_t.outputs)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    # pick an open gate against a clearly nonzero teacher activation
    b, j = np.argwhere(tr_s.gate[0] == 1.0)[0]
    m = int(np.argmax(tr_t.act[0][b]))
    assert tr_t.act[0][b, m] > 0.1
    betas.beta_star[0][b, j, m] += 1e-3
    assert verify_identity(betas, tr_s, tr_t, grads) > 1e-6


def test_bracket_matches_gradient_on_open_gates():
    # alternate route: where the gate is open, the channel bracket must
    # equal the backprop node gradient directly
    rng = np.random.default_rng(6)
    student = random_network(rng, (5, 9, 4))
    teacher = random_network(rng, (5, 6, 4))
    x, tr_s, tr_t = paired_traces(student, teacher, 10)
    grads = backward(student, tr_s, tr_t.outputs)
    betas = compute_beta(student, teacher, tr_s, tr_t)
    li = 0
    bracket = (
        np.einsum("bjm,bm->bj", betas.beta_star[li], tr_t.act[li])
        + betas.beta_star_bias[li]
        - np.einsum("bjn,bn->bj", betas.beta[li], tr_s.act[li])
        - betas.beta_bias[li]
    )
    open_ = tr_s.gate[li] == 1.0
    assert open_.any()
    assert np.allclose(bracket[open_], grads.node[li][open_], atol=1e-12)


def test_pair_validation_errors():
    rng = np.random.default_rng(7)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 5, 5, 3))
    x = rng.normal(size=(4, 4))
    with pytest.raises(ConfigurationError):
        compute_beta(student, teacher, forward(student, x), forward(teacher, x))
    bn_student = random_network(rng, (4, 6, 3), bn_mode="linear_relu_bn")
    teacher2 = random_network(rng, (4, 5, 3))
    with pytest.raises(ConfigurationError):
        compute_beta(
            bn_student, teacher2, forward(bn_student, x), forward(teacher2, x)
        )
    y = rng.normal(size=(4, 4))
    with pytest.raises(PreconditionError):
        compute_beta(student, teacher2, forward(student, x), forward(teacher2, y))


# ----------------------------------------------------------------- moments


def test_moment_matrices_symmetric_and_bounded():
    rng = np.random.default_rng(8)
    student = random_network(rng, (4, 7, 3))
    teacher = random_network(rng, (4, 5, 3))
    stream = GausStream(dim=4, std=1.0, seed=0)
    sets = estimate_moments(student, teacher, stream, 2000)
    assert len(sets) == 2
    for ms in sets:
        assert np.array_equal(ms.act_ss, ms.act_ss.T)
        assert np.array_equal(ms.act_tt, ms.act_tt.T)
        assert np.array_equal(ms.gate_ss, ms.gate_ss.T)
        assert np.all(ms.gate_ss >= 0.0) and np.all(ms.gate_ss <= 1.0)
        assert np.all(ms.gate_st >= 0.0) and np.all(ms.gate_st <= 1.0)
        assert ms.sample_count == 2000
        assert np.array_equal(ms.drive_self, ms.beta_mean * ms.gate_ss)
        assert np.array_equal(ms.drive_cross, ms.beta_star_mean * ms.gate_st)


def test_moment_top_layer_channels_are_identity():
    rng = np.random.default_rng(9)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 6, 3))
    stream = GausStream(dim=4, std=1.0, seed=1)
    top = estimate_moments(student, teacher, stream, 500)[-1]
    assert np.array_equal(top.beta_mean, np.eye(3))
    assert np.array_equal(top.beta_star_mean, np.eye(3))
    assert np.all(top.beta_err == 0.0)
    assert np.all(top.gate_ss == 1.0)


def test_moment_gate_half_for_zero_bias():
    spec = NetworkSpec(layer_widths=(5, 6, 2), has_bias=(False, False))
    rng = np.random.default_rng(10)
    net = build_network(spec, [rng.normal(size=(5, 6)), rng.normal(size=(6, 2))])
    stream = GausStream(dim=5, std=1.0, seed=2)
    ms = estimate_moments(net, net, stream, 20000)[0]
    diag = np.diag(ms.gate_ss)
    err = np.diag(ms.gate_ss_err)
    assert np.all(np.abs(diag - 0.5) < 3 * err + 1e-12)


def test_moment_clone_families_coincide():
    teacher = random_network(np.random.default_rng(11), (4, 6, 2))
    stream = GausStream(dim=4, std=1.0, seed=3)
    for ms in estimate_moments(teacher, teacher, stream, 1000):
        assert np.allclose(ms.act_ss, ms.act_st, atol=1e-12)
        assert np.allclose(ms.act_ss, ms.act_tt, atol=1e-12)
        assert np.allclose(ms.gate_ss, ms.gate_st, atol=1e-12)


def test_moments_need_samples():
    teacher = random_network(np.random.default_rng(12), (3, 4, 2))
    with pytest.raises(PreconditionError):
        estimate_moments(teacher, teacher, GausStream(dim=3), 1)


# -------------------------------------------------------------- separation


def test_separation_exact_at_top_layer():
    # top-layer channels are the identity pattern and top gates are fixed
    # open, so the factorization is an algebraic identity there
    rng = np.random.default_rng(13)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 5, 3))
    stream = GausStream(dim=4, std=1.0, seed=4)
    tuples = [(1, "cross", 0, 0, 2, 1), (1, "self", 1, 1, 0, 3)]
    probes = probe_separation(student, teacher, stream, 600, tuples)
    for p in probes:
        assert p.rel_err < 1e-12


def test_separation_independent_by_construction():
    # first-layer filters live on coordinates 0..1; probing activation
    # coordinate 2 makes gate and activation factors exactly independent
    w1 = np.zeros((4, 3))
    w1[:2, :] = np.array([[1.0, -0.5, 0.8], [0.6, 1.2, -0.7]])
    w1b = np.zeros((4, 3))
    w1b[:2, :] = np.array([[0.9, 0.4, -1.1], [-0.3, 0.8, 0.5]])
    spec = NetworkSpec(layer_widths=(4, 3, 2), has_bias=(False, False))
    rng = np.random.default_rng(14)
    student = build_network(spec, [w1, rng.normal(size=(3, 2))])
    teacher = build_network(spec, [w1b, rng.normal(size=(3, 2))])
    stream = GausStream(dim=4, std=1.0, seed=5)
    tuples = [
        (0, "cross", 0, 1, 2, 2),
        (0, "cross", 2, 0, 3, 3),
        (0, "self", 1, 2, 2, 2),
    ]
    probes = probe_separation(student, teacher, stream, 40000, tuples)
    for p in probes:
        assert p.rel_err < 0.03


def test_separation_probe_list_is_prefix_stable():
    rng = np.random.default_rng(15)
    student = random_network(rng, (4, 6, 3))
    teacher = random_network(rng, (4, 5, 3))
    short = sample_probe_tuples(student, teacher, 4, seed=5)
    long = sample_probe_tuples(student, teacher, 16, seed=5)
    assert long[:4] == short
    r_short = separation_residual(
        student, teacher, GausStream(dim=4, std=1.0, seed=6), 800, 4, seed=5
    )
    r_long = separation_residual(
        student, teacher, GausStream(dim=4, std=1.0, seed=6), 800, 16, seed=5
    )
    assert r_long >= r_short


# ---------------------------------------------------------------- kernels


def test_psi_d_matches_independent_oracle():
    stream = GausStream(dim=2, std=1.0, seed=7)
    for theta, (ref, ref_se) in PSI_D_ORACLE.items():
        w = np.array([1.0, 0.0])
        w_p = np.array([np.cos(theta), np.sin(theta)])
        val, se = psi_d(w, w_p, stream, 400000)
        assert abs(val - ref) < 3 * np.sqrt(se**2 + ref_se**2)


def test_psi_d_self_and_opposite():
    stream = GausStream(dim=5, std=1.0, seed=8)
    w = np.array([0.3, -1.0, 0.2, 0.0, 0.5])
    val, se = psi_d(w, w, stream, 50000)
    assert abs(val - 0.5) < 3 * se
    val_opp, se_opp = psi_d(w, -w, stream, 50000)
    assert val_opp == 0.0 and se_opp == 0.0


def test_psi_l_orthogonal_factorizes():
    stream = GausStream(dim=4, std=1.0, seed=9)
    w = np.array([1.0, 0.0, 0.0, 0.0])
    w_p = np.array([0.0, 1.0, 0.0, 0.0])
    val, se = psi_l(w, w_p, stream, 200000)
    assert abs(val - 1.0 / (2 * np.pi)) < 3 * se


def test_psi_stderr_scales_with_n():
    w = np.array([1.0, 0.5, -0.3])
    _, se1 = psi_l(w, w, GausStream(dim=3, std=1.0, seed=10), 20000)
    _, se2 = psi_l(w, w, GausStream(dim=3, std=1.0, seed=10), 80000)
    assert abs(se1 / se2 - 2.0) < 0.4


def test_psi_threshold_shrinks_overlap():
    w = np.array([1.0, 0.0])
    w_p = np.array([0.8, 0.6])
    v0, _ = psi_d(w, w_p, GausStream(dim=2, std=1.0, seed=11), 40000)
    v1, _ = psi_d(w, w_p, GausStream(dim=2, std=1.0, seed=11), 40000, tau=1.0)
    v4, _ = psi_d(w, w_p, GausStream(dim=2, std=1.0, seed=11), 40000, tau=4.0)
    assert v1 < v0
    assert v4 < 0.001


def test_psi_preconditions():
    stream = GausStream(dim=2, std=1.0, seed=12)
    with pytest.raises(PreconditionError):
        psi_d(np.zeros(2), np.array([1.0, 0.0]), stream, 100)
    with pytest.raises(PreconditionError):
        psi_l(np.array([1.0, 0.0]), np.array([1.0, 0.0]), stream, 1)


# ----------------------------------------------------------------- overlap


def two_node_teacher(w_cols, bias=None):
    spec = NetworkSpec(
        layer_widths=(2, 2, 1), has_bias=(bias is not None, False)
    )
    w2 = np.array([[1.0], [1.0]])
    biases = [bias, None] if bias is not None else None
    return build_network(spec, [np.asarray(w_cols, dtype=float), w2], biases)


def test_overlap_opposite_nodes_disjoint():
    t = two_node_teacher([[1.0, -1.0], [0.5, -0.5]])
    rep = overlap_eps(t, GausStream(dim=2, std=1.0, seed=13), 20000)[0]
    assert rep.eps_d == 0.0
    assert rep.eps_l == 0.0


def test_overlap_identical_nodes_full():
    t = two_node_teacher([[1.0, 1.0], [0.5, 0.5]])
    rep = overlap_eps(t, GausStream(dim=2, std=1.0, seed=14), 20000)[0]
    assert abs(rep.eps_d - 1.0) < 1e-12
    assert abs(rep.eps_l - 1.0) < 1e-12


def test_overlap_dead_node_reported():
    t = two_node_teacher([[1.0, 0.7], [0.5, -0.6]], bias=np.array([0.0, -100.0]))
    rep = overlap_eps(t, GausStream(dim=2, std=1.0, seed=15), 5000)[0]
    assert rep.eps_d == float("inf")
    assert 1 in rep.dead_gate_nodes


def test_overlap_grid_teacher_metadata():
    t = make_teacher(TeacherSpec(layer_widths=(20, 10, 2), seed=0))
    reports = overlap_eps(t, GausStream(dim=20, std=1.0, seed=16), 20000)
    rep = reports[0]
    assert np.isfinite(rep.eps_d) and rep.eps_d >= 0.0
    assert np.isfinite(rep.eps_l) and rep.eps_l >= 0.0


def test_overlap_needs_two_nodes():
    t = two_node_teacher([[1.0, -1.0], [0.5, -0.5]])
    narrow = build_network(
        NetworkSpec(layer_widths=(2, 1, 1), has_bias=(False, False)),
        [np.array([[1.0], [0.5]]), np.array([[1.0]])],
    )
    with pytest.raises(PreconditionError):
        overlap_eps(narrow, GausStream(dim=2, std=1.0, seed=17), 100)


# --------------------------------------------------------------- lipschitz


def test_lipschitz_probe_deterministic_and_repeatable():
    w = np.array([1.0, -0.4, 0.3])
    a = lipschitz_probe(w, GausStream(dim=3, std=1.0, seed=18), 100000, seed=1)
    b = lipschitz_probe(w, GausStream(dim=3, std=1.0, seed=18), 100000, seed=1)
    assert a == b
    c = lipschitz_probe(w, GausStream(dim=3, std=1.0, seed=19), 100000, seed=1)
    assert abs(a.k_d - c.k_d) / a.k_d < 0.2
    assert abs(a.k_l - c.k_l) / a.k_l < 0.2


def test_lipschitz_small_offsets_see_worst_slope():
    w = np.array([0.8, 0.6])
    stream = lambda s: GausStream(dim=2, std=1.0, seed=s)
    fine = lipschitz_probe(w, stream(20), 200000, delta_scales=(0.05,), seed=2)
    coarse = lipschitz_probe(w, stream(20), 200000, delta_scales=(0.3,), seed=2)
    assert fine.k_d > 0.0 and coarse.k_d > 0.0
    assert fine.k_d >= 0.8 * coarse.k_d


def test_lipschitz_validation():
    stream = GausStream(dim=2, std=1.0, seed=21)
    with pytest.raises(PreconditionError):
        lipschitz_probe(np.zeros(2), stream, 1000)
    with pytest.raises(PreconditionError):
        lipschitz_probe(np.array([1.0, 0.0]), stream, 1000, delta_scales=(0.5,))
