import numpy as np
import pytest
import scipy.stats

from fairgl import (Dataset, GibbsConfig, ValidationError, generate_precision,
                    generate_sbm, load_ground_truth, sample_gaussian,
                    sample_ising, save_ground_truth)
from fairgl.synthetic import _edges_from_uniforms, assign_communities, assign_groups
from oracles import ising_exact_probs


def test_sbm_complete_graph_degenerate():
    gt = generate_sbm(p=6, k=1, h=1, zetas=(0.0, 0.0, 0.0, 1.0), seed=0)
    expected = np.ones((6, 6)) - np.eye(6)
    assert np.array_equal(gt.adjacency, expected)


def test_sbm_zeta_ordering_enforced():
    with pytest.raises(ValidationError):
        generate_sbm(p=10, k=2, h=2, zetas=(0.3, 0.2, 0.3, 0.4), seed=0)


def test_sbm_infeasible_sizes():
    with pytest.raises(ValidationError):
        generate_sbm(p=6, k=3, h=3, seed=0)  # community size 2 < h


def test_sbm_empirical_frequencies():
    # per-case empirical edge rates within 0.02 of the probabilities
    zetas = (0.1, 0.2, 0.3, 0.4)
    counts = np.zeros(4)
    totals = np.zeros(4)
    for seed in range(20):
        gt = generate_sbm(p=60, k=2, h=2, zetas=zetas, seed=seed)
        same_c = gt.communities[:, None] == gt.communities[None, :]
        same_g = gt.groups[:, None] == gt.groups[None, :]
        cases = [(~same_c & ~same_g), (same_c & ~same_g),
                 (~same_c & same_g), (same_c & same_g)]
        iu = np.triu_indices(60, k=1)
        for idx, mask in enumerate(cases):
            sel = mask[iu]
            counts[idx] += gt.adjacency[iu][sel].sum()
            totals[idx] += sel.sum()
    rates = counts / totals
    assert np.abs(rates - np.array(zetas)).max() < 0.02


def test_sbm_equal_zetas_independent_of_labels():
    # equal probabilities: edge rate must not depend on the case label
    table = np.zeros((2, 4))
    for seed in range(10):
        gt = generate_sbm(p=40, k=2, h=2, zetas=(0.25, 0.25, 0.25, 0.25),
                          seed=seed)
        same_c = gt.communities[:, None] == gt.communities[None, :]
        same_g = gt.groups[:, None] == gt.groups[None, :]
        cases = [(~same_c & ~same_g), (same_c & ~same_g),
                 (~same_c & same_g), (same_c & same_g)]
        iu = np.triu_indices(40, k=1)
        for idx, mask in enumerate(cases):
            sel = mask[iu]
            table[0, idx] += gt.adjacency[iu][sel].sum()
            table[1, idx] += sel.sum() - gt.adjacency[iu][sel].sum()
    _, pvalue, _, _ = scipy.stats.chi2_contingency(table)
    assert pvalue > 0.01


def test_sbm_label_equivariance():
    rng = np.random.default_rng(0)
    p = 12
    communities = assign_communities(p, 3)
    groups = assign_groups(communities, 2)
    u = rng.random((p, p))
    zetas = (0.1, 0.2, 0.3, 0.4)
    adj = _edges_from_uniforms(u, communities, groups, zetas)
    perm = rng.permutation(p)
    # permuted node labels with the same pair-keyed uniforms
    u_perm = np.empty_like(u)
    for i in range(p):
        for j in range(p):
            a, b = perm[i], perm[j]
            u_perm[i, j] = u[min(a, b), max(a, b)] if i < j else 0.0
    adj_perm = _edges_from_uniforms(
        np.triu(u_perm, 1), communities[perm], groups[perm], zetas)
    assert np.array_equal(adj_perm, adj[np.ix_(perm, perm)])


def test_precision_empty_adjacency():
    theta = generate_precision(np.zeros((5, 5)), seed=1)
    off = theta - np.diag(np.diag(theta))
    assert np.abs(off).max() == 0.0
    assert np.diag(theta).min() >= 0.1


def test_precision_eigenvalue_floor_and_weights():
    for seed in range(5):
        gt = generate_sbm(p=20, k=2, h=2, seed=seed)
        theta = generate_precision(gt.adjacency, seed=seed)
        assert np.linalg.eigvalsh(theta).min() >= 0.1 - 1e-10
        iu = np.triu_indices(20, k=1)
        vals = np.abs(theta[iu][gt.adjacency[iu] > 0])
        assert vals.min() >= 0.1 and vals.max() <= 3.0
        # default sign convention is attractive (negative off-diagonals)
        assert (theta[iu][gt.adjacency[iu] > 0] < 0).all()


def test_precision_mixed_signs():
    gt = generate_sbm(p=30, k=2, h=2, zetas=(0.4, 0.4, 0.4, 0.4), seed=3)
    theta = generate_precision(gt.adjacency, seed=3, mixed_signs=True)
    iu = np.triu_indices(30, k=1)
    signs = np.sign(theta[iu][gt.adjacency[iu] > 0])
    assert (signs > 0).any() and (signs < 0).any()
    assert np.linalg.eigvalsh(theta).min() >= 0.1 - 1e-10


def test_gaussian_identity_covariance():
    data = sample_gaussian(np.eye(3), n=10_000, seed=0)
    emp = data.observations.T @ data.observations / data.n
    assert np.abs(emp - np.eye(3)).max() <= 0.1


def test_gaussian_diagonal_inverse():
    theta = np.diag([4.0, 1.0])
    data = sample_gaussian(theta, n=100_000, seed=1)
    var = data.observations.var(axis=0)
    assert abs(var[0] - 0.25) / 0.25 < 0.05
    assert abs(var[1] - 1.0) / 1.0 < 0.05


def test_gaussian_deterministic():
    theta = np.eye(4) + 0.2 * (np.ones((4, 4)) - np.eye(4))
    a = sample_gaussian(theta, n=50, seed=9).observations
    b = sample_gaussian(theta, n=50, seed=9).observations
    assert np.array_equal(a, b)


def test_gaussian_requires_pd():
    with pytest.raises(ValidationError):
        sample_gaussian(np.array([[1.0, 2.0], [2.0, 1.0]]), n=10, seed=0)


def test_gaussian_margins_kolmogorov_smirnov():
    # standardized margins pass a KS test on every tested seed
    theta = generate_precision(generate_sbm(p=4, k=2, h=2, seed=0).adjacency,
                               seed=0)
    sigma = np.linalg.inv(theta)
    scales = np.sqrt(np.diag(sigma))
    worst = 1.0
    for seed in range(50):
        data = sample_gaussian(theta, n=400, seed=seed)
        for j in range(4):
            stat = scipy.stats.kstest(data.observations[:, j] / scales[j],
                                      "norm")
            worst = min(worst, stat.pvalue)
    assert worst > 0.001


def test_ising_zero_parameters_fair_coins():
    data = sample_ising(np.zeros((4, 4)), n=10_000,
                        gibbs_cfg=GibbsConfig(burn_in=50, thin=1), seed=0)
    means = data.observations.mean(axis=0)
    assert np.abs(means - 0.5).max() <= 0.02


def test_ising_matches_exact_enumeration():
    rng = np.random.default_rng(2)
    theta = np.array([
        [0.4, -0.7, 0.3],
        [-0.7, -0.2, 0.5],
        [0.3, 0.5, 0.1],
    ])
    data = sample_ising(theta, n=100_000,
                        gibbs_cfg=GibbsConfig(burn_in=200, thin=5), seed=3)
    probs = ising_exact_probs(theta)
    obs = data.observations.astype(int)
    for state, prob in probs.items():
        freq = float(np.mean(np.all(obs == np.array(state), axis=1)))
        assert abs(freq - prob) <= 0.02


def test_ising_positive_coupling_correlates():
    theta = np.zeros((2, 2))
    theta[0, 1] = theta[1, 0] = 2.0
    data = sample_ising(theta, n=5000,
                        gibbs_cfg=GibbsConfig(burn_in=100, thin=2), seed=4)
    y = data.observations
    corr = np.corrcoef(y[:, 0], y[:, 1])[0, 1]
    assert corr > 0


def test_ising_deterministic():
    theta = np.eye(3) * 0.5
    a = sample_ising(theta, n=100, seed=11).observations
    b = sample_ising(theta, n=100, seed=11).observations
    assert np.array_equal(a, b)


def test_ground_truth_round_trip(tmp_path):
    gt = generate_sbm(p=10, k=2, h=2, seed=5)
    theta = generate_precision(gt.adjacency, seed=5)
    gt = type(gt)(adjacency=gt.adjacency, communities=gt.communities,
                  groups=gt.groups, seed=gt.seed, theta_true=theta,
                  meta=gt.meta)
    save_ground_truth(gt, tmp_path)
    back = load_ground_truth(tmp_path)
    assert np.array_equal(back.adjacency, gt.adjacency)
    assert np.array_equal(back.communities, gt.communities)
    assert np.array_equal(back.groups, gt.groups)
    assert np.abs(back.theta_true - theta).max() < 1e-10
    assert back.meta["p"] == 10


def test_ground_truth_support_validation():
    adj = np.zeros((3, 3))
    theta = np.eye(3)
    theta[0, 1] = theta[1, 0] = 0.5
    with pytest.raises(ValidationError, match="support"):
        from fairgl.synthetic import GroundTruth
        GroundTruth(adjacency=adj, communities=np.ones(3, dtype=int),
                    groups=np.ones(3, dtype=int), seed=0, theta_true=theta)
