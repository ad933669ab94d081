"""Bayesian nonparametric clustering with plain and coloured partition priors.

The package provides exact partition-prior computation (Dirichlet process,
Dirichlet-multinomial, Pitman-Yor, coloured and background-cluster variants),
forward samplers for the generative constructions, conjugate normal-gamma
regression marginals, collapsed Gibbs samplers, and decision-theoretic
partition estimation, plus a small batch pipeline (``cdpmix run|verify|summarize``).
"""

__version__ = "0.1.0"

from .conjugate import (ClusterStats, DesignBlock, NormalGammaSpec, cluster_stats,
                        log_marginal_background, log_marginal_regular, log_mvt,
                        log_predictive, posterior_update)
from .errors import NumericalError, ValidationError
from .estimation import (LossSpec, SimilarityMatrix, accumulate_similarity,
                         cluster_summaries, expected_pairwise_loss,
                         optimal_partition)
from .generators import (Atom, BaseMeasure, StickWeights, UniformBase, make_rng,
                         sample_beta, sample_cdp, sample_dirichlet,
                         sample_dp_partition_via_sticks, sample_finite_mixture_alloc,
                         sample_gamma, sample_gem, sample_gem_two_param,
                         sample_polya_sequence, split_rng)
from .gibbs import (ChainState, FlatEngine, NIGEngine, SweepPlan, TraceRecord,
                    build_engines, gibbs_reallocate_item, gibbs_reallocate_subset,
                    run_chain)
from .partitions import (ColouredPartition, ConfigurationCounts, Partition,
                         canonicalize, enumerate_coloured_partitions,
                         enumerate_configurations, enumerate_partitions)
from .priors import (LOG_ZERO, BackgroundDirichletProcess, ColouredDirichletProcess,
                     DirichletMultinomial, DirichletProcess, PitmanYor,
                     ReallocWeights, is_log_zero, log_eppf, log_eppf_background,
                     log_eppf_cdp, log_eppf_dp, log_eppf_sequential,
                     log_ewens_config, prior_realloc_weights)
