import math

import matplotlib
import numpy as np
import pytest

from src.bag import Bag, BagDistribution, BagFunction, bag_labels
from src.boost import (TRACE_COLUMNS, BoosterKind, Ensemble, EnsembleTerm, adaboost, adaboost_star, margins,
                       optimal_margin, plot_trace, predict)
from src.hypothesis import H_NEG, H_POS, ComposedHypothesis, Stump
from src.milearn import MILearnConfig, MILearner, WeakLearnerOutput, edge
from src.synthetic import Regime, SyntheticSpec, generate_synthetic

matplotlib.use("Agg")


def _multiplicative_weights_margin(margin_matrix: np.ndarray, precision: float = 0.005) -> float:
    """
    Value of the zero-sum game max_w min_i (M w)_i, approximated by multiplicative weights on the rows against
    best-response columns until the primal and dual bounds are within precision
    """
    n_rows, n_columns = margin_matrix.shape
    learning_rate = precision
    log_weights = np.zeros(n_rows)
    column_counts = np.zeros(n_columns)
    row_sum = np.zeros(n_rows)
    for t in range(1, 200_000):
        p = np.exp(log_weights - log_weights.max())
        p /= p.sum()
        best_column = int(np.argmax(p @ margin_matrix))
        column_counts[best_column] += 1
        row_sum += p
        log_weights -= learning_rate * margin_matrix[:, best_column]
        lower = float(np.min(margin_matrix @ (column_counts / t)))
        upper = float(np.max((row_sum / t) @ margin_matrix))
        if upper - lower <= precision:
            return (lower + upper) / 2
    raise RuntimeError("multiplicative weights did not converge")


@pytest.fixture
def toy_setup():
    # With psi = avg, h1 is right on bag 1 and neutral on bag 2, h2 the reverse: the optimal margin is 1/2
    psi = BagFunction.avg()
    bags = [
        Bag("b1", [[1., -1.], [1., 1.]], 1),
        Bag("b2", [[-1., 1.], [1., 1.]], -1),
    ]
    candidates = [ComposedHypothesis(psi, Stump(0, 0., 1)), ComposedHypothesis(psi, Stump(1, 0., -1))]

    def weak(bags_, distribution):
        edges = [edge(h, bags_, distribution) for h in candidates]
        best = int(np.argmax(edges))
        return WeakLearnerOutput(hypothesis=candidates[best], edge=edges[best])

    margin_matrix = np.column_stack([bag_labels(bags) * h.evaluate_many(bags) for h in candidates])
    return {"psi": psi, "bags": bags, "weak": weak, "margin_matrix": margin_matrix}


@pytest.fixture
def realizable_setup():
    spec = SyntheticSpec(dimension=2, max_bag_size=4, num_bags=100, positive_rate=0.5, target=Stump(0, 1.0, 1),
                         noise=0., seed=7)
    dataset = generate_synthetic(Regime.HOMOGENEOUS_INDEPENDENT, spec)
    return {"bags": list(dataset.bags)}


# ------- Tests Ensemble -------

def test_ensemble_prediction():
    bags = [Bag("a", [[2.]], 1), Bag("b", [[0.]], -1)]
    ensemble = Ensemble(terms=(EnsembleTerm(ComposedHypothesis(BagFunction.max(), Stump(0, 1., 1)), 2.),
                               EnsembleTerm(H_POS, 1.)))
    np.testing.assert_array_equal(ensemble.scores(bags), [3., -1.])
    np.testing.assert_array_equal(ensemble.predict_many(bags), [1, -1])
    assert predict(ensemble, bags[0]) == 1
    assert margins(ensemble, bags) == [1., 1 / 3]
    assert ensemble.total_alpha == 3.
    assert ensemble.max_feature == 0


def test_ensemble_sign_of_zero_is_positive():
    ensemble = Ensemble(terms=(EnsembleTerm(H_POS, 1.), EnsembleTerm(H_NEG, 1.)))
    assert predict(ensemble, Bag("a", [[0.]], -1)) == 1


def test_untrained_ensemble():
    with pytest.raises(ValueError, match="untrained"):
        Ensemble(terms=()).scores([Bag("a", [[0.]], 1)])


def test_ensemble_save_and_load(tmp_path):
    ensemble = Ensemble(terms=(EnsembleTerm(ComposedHypothesis(BagFunction.pnorm(3.), Stump(1, 0.1, -1)), 0.3),
                               EnsembleTerm(H_NEG, 0.1)), psi=BagFunction.pnorm(3.))
    path = tmp_path / "model.json"
    ensemble.save(path)
    assert Ensemble.load(path) == ensemble
    assert path.read_text(encoding="utf-8").endswith("}\n")


def test_ensemble_unsupported_version():
    with pytest.raises(ValueError, match="format version"):
        Ensemble.from_dict({"format_version": 99, "psi": "max", "terms": []})


def test_ensemble_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        Ensemble.load(tmp_path / "missing.json")


# ------- Tests optimal_margin -------

@pytest.mark.parametrize("margin_matrix, expected", [
    (np.eye(2), 0.5),
    (np.array([[1., -1.], [-1., 1.]]), 0.),
    (np.array([[1., 1.], [1., -1.]]), 1.),
])
def test_optimal_margin(margin_matrix, expected):
    rho, weights = optimal_margin(margin_matrix)
    assert rho == pytest.approx(expected, abs=1e-9)
    assert weights.sum() == pytest.approx(1.)
    assert np.min(margin_matrix @ weights) == pytest.approx(expected, abs=1e-9)


# ------- Tests adaboost -------

def test_adaboost_realizable_reaches_zero_error(realizable_setup):
    bags = realizable_setup["bags"]
    ensemble, trace = adaboost(bags, MILearner(MILearnConfig()), rounds=200)
    assert trace.booster is BoosterKind.ADABOOST
    assert trace[-1].train_error == 0.
    assert np.all(ensemble.predict_many(bags) == bag_labels(bags))
    for boost_round in trace:
        assert boost_round.train_error <= boost_round.edge_bound + 1e-9
        assert boost_round.train_error <= boost_round.z_product + 1e-9
        assert boost_round.z <= math.sqrt(1 - min(boost_round.gamma, 1 - 1e-12) ** 2) + 1e-9


@pytest.mark.parametrize("psi", [BagFunction.max(), BagFunction.avg()])
def test_adaboost_z_product_never_increases(psi):
    for seed in range(4):
        spec = SyntheticSpec(dimension=2, max_bag_size=3, num_bags=40, noise=0.2, seed=seed)
        bags = list(generate_synthetic(Regime.HOMOGENEOUS_DEPENDENT, spec).bags)
        _, trace = adaboost(bags, MILearner(MILearnConfig(psi=psi)), rounds=30)
        z_products = [1.] + [boost_round.z_product for boost_round in trace]
        assert len(trace) > 0
        assert all(later <= earlier + 1e-12 for earlier, later in zip(z_products, z_products[1:]))


def test_adaboost_trace_matches_ensemble(realizable_setup):
    bags = realizable_setup["bags"]
    ensemble, trace = adaboost(bags, MILearner(MILearnConfig()), rounds=5)
    assert len(ensemble) == len(trace)
    assert [r.t for r in trace] == list(range(1, len(trace) + 1))
    assert trace[0].distribution == pytest.approx(np.full(len(bags), 1 / len(bags)))
    for boost_round, term in zip(trace, ensemble.terms):
        assert boost_round.alpha == term.alpha
        assert boost_round.rho is None
    assert trace[-1].min_margin == pytest.approx(float(ensemble.margins(bags).min()))


def test_adaboost_stops_without_edge():
    bags = [Bag("a", [[0.]], 1), Bag("b", [[0.]], -1)]
    with pytest.warns(RuntimeWarning, match="Stopping after 0 rounds"):
        ensemble, trace = adaboost(bags, MILearner(MILearnConfig()), rounds=10)
    assert len(ensemble) == 0
    assert len(trace) == 0


def test_adaboost_stops_after_perfect_round():
    bags = [Bag("a", [[2.]], 1), Bag("b", [[0.]], -1)]
    ensemble, trace = adaboost(bags, MILearner(MILearnConfig()), rounds=10)
    assert len(trace) == 1
    assert trace[0].gamma == 1.
    assert trace[0].train_error == 0.


def test_adaboost_invalid_arguments():
    weak = MILearner(MILearnConfig())
    with pytest.raises(ValueError):
        adaboost([Bag("a", [[0.]], 1)], weak, rounds=0)
    with pytest.raises(ValueError, match="no bags"):
        adaboost([], weak, rounds=3)


def test_trace_to_csv(tmp_path, realizable_setup):
    _, trace = adaboost(realizable_setup["bags"], MILearner(MILearnConfig()), rounds=3)
    df = trace.to_dataframe()
    assert list(df.columns) == TRACE_COLUMNS
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(TRACE_COLUMNS)


def test_plot_trace(tmp_path, realizable_setup):
    _, trace = adaboost(realizable_setup["bags"], MILearner(MILearnConfig()), rounds=3)
    plot_trace(trace, tmp_path / "trace.png")
    assert (tmp_path / "trace.png").exists()


# ------- Tests adaboost_star -------

def test_toy_optimal_margin(toy_setup):
    rho_star = _multiplicative_weights_margin(toy_setup["margin_matrix"])
    assert rho_star == pytest.approx(0.5, abs=0.005)
    assert optimal_margin(toy_setup["margin_matrix"])[0] == pytest.approx(rho_star, abs=0.005)


@pytest.mark.parametrize("nu", [0.05, 0.1])
def test_adaboost_star_reaches_the_optimal_margin(toy_setup, nu):
    bags = toy_setup["bags"]
    rho_star = _multiplicative_weights_margin(toy_setup["margin_matrix"])
    rounds = math.ceil(2 * math.log(len(bags)) / nu ** 2)

    ensemble, trace = adaboost_star(bags, toy_setup["weak"], rounds, nu, psi=toy_setup["psi"])
    assert trace.booster is BoosterKind.ADABOOST_STAR
    assert len(trace) == rounds
    assert trace[-1].min_margin >= rho_star - nu - 0.01
    assert float(ensemble.margins(bags).min()) >= rho_star - nu - 0.01
    for boost_round in trace:
        assert boost_round.rho <= boost_round.gamma - nu + 1e-12
        assert boost_round.alpha >= 0
    assert ensemble.hindsight_margin(bags) == pytest.approx(0.5, abs=1e-9)


def test_adaboost_star_invalid_nu(toy_setup):
    for nu in (0., 1., -0.1):
        with pytest.raises(ValueError, match="nu"):
            adaboost_star(toy_setup["bags"], toy_setup["weak"], 10, nu)


def test_adaboost_star_stops_when_edge_below_nu():
    bags = [Bag("a", [[0.]], 1), Bag("b", [[0.]], -1)]

    def weak(bags_, distribution):
        return WeakLearnerOutput(hypothesis=H_POS, edge=edge(H_POS, bags_, distribution))

    with pytest.warns(RuntimeWarning, match="<= 0.1"):
        ensemble, trace = adaboost_star(bags, weak, 10, 0.1)
    assert len(trace) == 0


def test_adaboost_uses_the_weak_learner_distribution():
    bags = [Bag("a", [[1.]], 1), Bag("b", [[0.]], -1), Bag("c", [[2.]], -1)]
    received = []

    def weak(bags_, distribution: BagDistribution):
        received.append(distribution.weights.copy())
        h = ComposedHypothesis(BagFunction.max(), Stump(0, 0.5, 1))
        return WeakLearnerOutput(hypothesis=h, edge=edge(h, bags_, distribution))

    adaboost(bags, weak, rounds=2)
    np.testing.assert_allclose(received[0], [1 / 3] * 3)
    # The misclassified bag c carries half of the weight after the first round
    assert received[1][2] == pytest.approx(0.5)
