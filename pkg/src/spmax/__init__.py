"""Allocate policies to user buckets so the total (value, cost) outcome
lands in a success region with maximal probability."""
from .baselines import (
    KnapsackProblem,
    KnapsackResult,
    bruteforce,
    greedy_1d,
    linprog_mckp,
    mixedint_mckp,
)
from .criterion import (
    CriterionValue,
    SuccessRegion,
    bvn_cdf,
    criterion_closed_form,
    criterion_monte_carlo,
)
from .data import (
    BootstrapSpec,
    BucketizerSpec,
    CsvSchema,
    DataError,
    RctDataset,
    SyntheticConfig,
    assign_bucket,
    estimate_stats,
    fit_bucketizer,
    generate_synthetic,
    ingest_csv,
    preset_stats,
    split_train_test,
)
from .gradients import GradientEstimate, grad_closed_form, grad_finite_diff, grad_lemma1
from .model import (
    PolicyCellStats,
    ProblemShape,
    ValidationError,
    check_allocation,
    mixture_params,
    one_hot_allocation,
    uniform_allocation,
)
from .optimizer import OptimizerConfig, OptResult, explore_init, project_allocation, project_simplex, run

__version__ = "0.1.0"
