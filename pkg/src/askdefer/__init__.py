"""askdefer: budgeted expert-query classification.

A standard predictor handles instances on its own; an enriched predictor
consumes extra expert feedback; a selector decides, under a query budget,
when that feedback is worth asking for. The package provides synthetic
tasks, simulated experts, a small dense-network core with exact backprop,
the surrogate losses, quantile-threshold selection, three training
pipelines, and a coverage-accuracy evaluation harness with a CLI.
"""

from .datagen import (ConsensusSpec, LabeledSample, ScenarioSpec, TaskDataset,
                      load_dataset, make_consensus_task, make_scenario,
                      make_synth, make_toy_table, save_dataset, split)
from .errors import ConfigurationError, DataError, TrainingError
from .eval_harness import (CoverageCurve, CoveragePoint, ExperimentConfig,
                           complementarity, evaluate, sweep)
from .expert_sim import (ConsensusExpert, FeatureOracleExpert, TreeExpert,
                         expert_predict, fit_expert, make_feedback,
                         materialize_feedback)
from .losses import (DeferCostConfig, LossValue, joint_surrogate, lta_01,
                     lta_surrogate, ltd_01, ltd_ce_surrogate, mae_loss,
                     sig_loss)
from .nn_core import (DenseNet, Gradients, SgdConfig, backward, forward,
                      init_net, sgd_step, softmax)
from .selection import (SelectionPolicy, brute_force_budget_select, delta_score,
                        fit_threshold, oracle_select_ltd, select,
                        selector_oracle_accuracy)
from .training import (ModelBundle, TrainPlan, default_plan, train_ltd,
                       train_lta_joint, train_lta_seq)

__version__ = "0.1.0"
