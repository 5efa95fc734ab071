import numpy as np

from askdefer.datagen import ScenarioSpec, make_scenario, make_toy_table, split
from askdefer.oracle_demo import (DEMO_SCENARIOS, agent_posterior,
                                  fit_gaussian_agent, format_oracle_table,
                                  run_oracle_demo, scenario_oracle_run,
                                  table_posterior, toy_oracle_row)


class TestExactTable:
    def test_machine_and_expert_posteriors_are_half(self):
        ds = make_toy_table()
        idx = np.arange(ds.n)
        pm = table_posterior(ds, ds.machine_view)[idx, ds.y]
        pe = table_posterior(ds, ds.expert_view)[idx, ds.y]
        np.testing.assert_array_equal(pm, np.full(4, 0.5))
        np.testing.assert_array_equal(pe, np.full(4, 0.5))

    def test_oracle_row_is_exact(self):
        row = toy_oracle_row()
        assert row.ltd_star == 0.5
        assert row.lta_star == 1.0
        assert row.machine == 0.5 and row.expert == 0.5
        assert row.ltd_star_std == 0.0 and row.lta_star_std == 0.0


class TestGaussianAgents:
    def test_posterior_rows_are_distributions(self):
        ds = split(make_scenario(ScenarioSpec(n=1000, seed=2)),
                   (0.6, 0.0, 0.4), seed=2)
        agent = fit_gaussian_agent(ds, ds.machine_view)
        post = agent_posterior(agent, ds.X)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(post >= 0)

    def test_full_view_agent_is_accurate_on_balanced_task(self):
        ds = split(make_scenario(ScenarioSpec(n=2000, seed=4)),
                   (0.6, 0.0, 0.4), seed=4)
        agent = fit_gaussian_agent(ds, (0, 1))
        test = ds.subset("test")
        post = agent_posterior(agent, test.X)
        assert np.mean(np.argmax(post, axis=1) == test.y) > 0.97


class TestScenarioOracles:
    def test_ask_oracle_never_below_defer_oracle(self):
        for name, params in DEMO_SCENARIOS:
            machine, expert, ltd, lta = scenario_oracle_run(
                ScenarioSpec(n=2000, seed=1, **params))
            assert lta >= ltd, name

    def test_balanced_scenario_has_the_headroom(self):
        machine, expert, ltd, lta = scenario_oracle_run(
            ScenarioSpec(n=4000, seed=1, **dict(DEMO_SCENARIOS)["balanced"]))
        assert lta >= 0.95
        assert ltd <= max(machine, expert) + 0.02

    def test_demo_reports_all_four_rows(self):
        rows = run_oracle_demo(seeds=(1, 2), n=1000)
        assert [r.task for r in rows] == \
            ["toy_table", "balanced", "machine_favored", "expert_favored"]
        table = format_oracle_table(rows)
        assert "toy_table" in table and "LtA*" in table
