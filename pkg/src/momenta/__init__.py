"""Unified momentum-based stochastic optimization toolkit."""

from .analysis import (RateEstimate, RunRecord, SeedAggregate, aggregate_seeds,
                       fit_rate, load_record_csv, load_records_dir,
                       lyapunov_increase_count, save_record_csv)
from .block import (BlockPolicy, apply_block, bernoulli, draw_weights, full_update,
                    mask_variance, multi_coordinate, single_coordinate,
                    verify_block_unbiasedness)
from .lambda_appendix import (LambdaTrace, closed_form_lambda, default_lambda0,
                              iterate_lambda, verify_lemma_A1, verify_lemma_A2)
from .objectives import (Objective, make_double_well, make_pl_nonconvex_1d,
                         make_quadratic, verify_descent_lemma, with_call_counter)
from .oracles import (GradientOracle, OracleAudit, additive_noise_oracle, audit_oracle,
                      biased_oracle, blum_oracle, declared_envelope, exact_oracle,
                      sample_gradient, spsa_oracle, with_seed)
from .schedules import (ConditionEntry, ConditionReport, Schedule,
                        check_power_law_conditions, check_sebbouh_conditions,
                        constant, eval_schedule, power_law, seeded_random, table)
from .unified import (ParameterValidationError, UnifiedParams, UnifiedState,
                      custom_params, derive_state, eigen_decoupling_check,
                      initial_state, params_at, run, sgd_params, shb_params,
                      snag_params, u_recursion_residual, unified_step,
                      validate_params)

__version__ = "0.1.0"
