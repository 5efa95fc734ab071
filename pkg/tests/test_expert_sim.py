import numpy as np
import pytest

from askdefer.datagen import (ConsensusSpec, make_consensus_task, make_synth,
                              make_toy_table, split)
from askdefer.errors import ConfigurationError
from askdefer.expert_sim import (ConsensusExpert, FeatureOracleExpert,
                                 TreeExpert, expert_from_text, expert_predict,
                                 expert_to_text, feedback_dim_for, fit_expert,
                                 make_feedback, materialize_feedback)


@pytest.fixture
def toy():
    return split(make_toy_table(n_per_row=25), (0.7, 0.1, 0.2), seed=0)


class TestTreeExpert:
    def test_full_view_solves_toy_table(self, toy):
        tree = fit_expert(toy, (0, 1), max_depth=2)
        assert np.mean(tree.predict_batch(toy.X) == toy.y) == 1.0

    def test_single_feature_capped_at_half(self, toy):
        tree = fit_expert(toy, (0,), max_depth=3)
        assert np.mean(tree.predict_batch(toy.X) == toy.y) == 0.5

    def test_synth_expert_sits_between_chance_and_perfect(self):
        ds = split(make_synth(seed=2, n=2000), (0.7, 0.1, 0.2), seed=2)
        tree = fit_expert(ds, ds.expert_view, max_depth=3)
        test = ds.subset("test")
        acc = np.mean(tree.predict_batch(test.X) == test.y)
        assert 0.3 < acc < 0.9  # informative but far from solving 4 classes

    def test_reads_only_declared_features(self):
        ds = split(make_synth(seed=2, n=500), (1.0, 0.0, 0.0), seed=2)
        tree = fit_expert(ds, (2, 3), max_depth=3)
        X = ds.X.copy()
        X[:, [0, 1]] = 12345.0  # scrambling unseen columns changes nothing
        np.testing.assert_array_equal(tree.predict_batch(X),
                                      tree.predict_batch(ds.X))

    def test_empty_training_split_rejected(self):
        ds = make_synth(seed=1, n=16)
        ds = split(ds, (0.0, 0.5, 0.5), seed=0)
        with pytest.raises(ConfigurationError):
            fit_expert(ds, (0,))

    def test_stochastic_leaf_samples_from_label_distribution(self):
        ds = make_toy_table(n_per_row=25)  # all rows train: exact balance
        tree = fit_expert(ds, (1,), max_depth=2, stochastic=True)
        rng = np.random.default_rng(0)
        x = np.array([0.0, 0.0])  # x2=0 leaf holds classes {0, 2} equally
        draws = np.array([tree.predict(x, rng) for _ in range(4000)])
        assert set(np.unique(draws)) <= {0, 2}
        assert abs(np.mean(draws == 0) - 0.5) < 0.05

    def test_stochastic_needs_rng(self, toy):
        tree = fit_expert(toy, (1,), max_depth=2, stochastic=True)
        with pytest.raises(ConfigurationError):
            tree.predict(np.array([0.0, 0.0]))


class TestConsensusExpert:
    def test_all_clear_means_healthy(self):
        e = ConsensusExpert(n_conditions=4)
        rng = np.random.default_rng(0)
        assert expert_predict(e, None, rng, consensus=np.zeros(4)) == 1

    def test_certain_condition_means_sick(self):
        e = ConsensusExpert(n_conditions=4)
        rng = np.random.default_rng(0)
        assert expert_predict(e, None, rng,
                              consensus=np.array([1.0, 0, 0, 0])) == 0

    def test_half_consensus_splits_evenly(self):
        e = ConsensusExpert(n_conditions=4)
        rng = np.random.default_rng(42)
        p = np.array([0.5, 0.0, 0.0, 0.0])
        draws = [e.predict_from_consensus(p, rng) for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.5) < 0.02

    def test_requires_consensus_and_rng(self):
        e = ConsensusExpert(n_conditions=4)
        with pytest.raises(ConfigurationError):
            expert_predict(e, None, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            expert_predict(e, None, consensus=np.zeros(4))


class TestFeedback:
    def test_prediction_feedback_is_one_hot(self, toy):
        tree = fit_expert(toy, (0, 1), max_depth=2)
        sample = toy.sample(0)
        h = make_feedback(tree, "ltd_feedback", sample)
        assert h.shape == (4,)
        assert h.sum() == 1.0
        assert np.argmax(h) == tree.predict(sample.x)

    def test_consensus_feedback_is_probability_vector(self):
        ds = make_consensus_task(ConsensusSpec(n=40, seed=1))
        e = ConsensusExpert(n_conditions=4)
        sample = ds.sample(3)
        h = make_feedback(e, "unc_feedback", sample)
        np.testing.assert_array_equal(h, sample.consensus)

    def test_feature_feedback_reveals_expert_columns(self, toy):
        oracle = FeatureOracleExpert(feature_indices=(1,))
        sample = toy.sample(int(np.argmax(toy.X[:, 1])))  # a row with x2=1
        h = make_feedback(oracle, "feature_feedback", sample)
        np.testing.assert_array_equal(h, [1.0])

    def test_dimensions_match_mode_contract(self, toy):
        tree = fit_expert(toy, (0, 1), max_depth=2)
        cons = ConsensusExpert(n_conditions=4)
        oracle = FeatureOracleExpert(feature_indices=(1,))
        assert feedback_dim_for(tree, "ltd_feedback") == 4
        assert feedback_dim_for(cons, "unc_feedback") == 4
        assert feedback_dim_for(oracle, "feature_feedback") == 1
        ds = materialize_feedback(toy, tree, "ltd_feedback")
        assert ds.feedback_dim == feedback_dim_for(tree, "ltd_feedback")

    def test_enriched_argmax_recovers_expert_prediction(self, toy):
        # reading the one-hot feedback reproduces the expert exactly
        tree = fit_expert(toy, (1,), max_depth=2)
        ds = materialize_feedback(toy, tree, "ltd_feedback")
        np.testing.assert_array_equal(np.argmax(ds.H, axis=1),
                                      tree.predict_batch(toy.X))

    def test_incompatible_pairs_rejected(self, toy):
        tree = fit_expert(toy, (0, 1), max_depth=2)
        oracle = FeatureOracleExpert(feature_indices=(1,))
        with pytest.raises(ConfigurationError):
            make_feedback(tree, "unc_feedback", toy.sample(0))
        with pytest.raises(ConfigurationError):
            make_feedback(oracle, "ltd_feedback", toy.sample(0))
        with pytest.raises(ConfigurationError):
            make_feedback(tree, "feature_feedback", toy.sample(0))
        with pytest.raises(ConfigurationError):
            materialize_feedback(toy, tree, "unc_feedback")


class TestSerialization:
    def test_tree_roundtrip_predicts_identically(self):
        ds = split(make_synth(seed=5, n=800), (1.0, 0.0, 0.0), seed=5)
        tree = fit_expert(ds, (2, 3), max_depth=3)
        back = expert_from_text(expert_to_text(tree))
        np.testing.assert_array_equal(back.predict_batch(ds.X),
                                      tree.predict_batch(ds.X))
        assert back.feature_indices == tree.feature_indices

    def test_stochastic_flag_survives(self, toy):
        tree = fit_expert(toy, (1,), max_depth=2, stochastic=True)
        back = expert_from_text(expert_to_text(tree))
        assert back.stochastic
        rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
        x = np.array([0.0, 1.0])
        assert [tree.predict(x, rng_a) for _ in range(20)] == \
            [back.predict(x, rng_b) for _ in range(20)]

    def test_consensus_and_oracle_roundtrip(self):
        cons = ConsensusExpert(n_conditions=3)
        back = expert_from_text(expert_to_text(cons))
        assert isinstance(back, ConsensusExpert) and back.n_conditions == 3
        oracle = FeatureOracleExpert(feature_indices=(2, 3))
        back = expert_from_text(expert_to_text(oracle))
        assert back.feature_indices == (2, 3)
