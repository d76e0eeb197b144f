"""Bayesian two-class latent-class ordinal-probit models.

Simulation, collapsed and full Gibbs sampling, marginal likelihoods by the
basic marginal likelihood identity, posterior covariate effects and
class-conditional category probabilities.
"""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    ContractError, Cutpoints, Dataset, DomainError, ParamDraw, PriorSpec,
    cutpoints_from_delta, delta_from_cutpoints, log_likelihood, mixture_outcome_probs,
    ordinal_class_cond_probs,
)
from .samplers import (  # noqa: E402
    PosteriorSample, RunConfig, relabel, run_collapsed_gibbs, run_full_gibbs,
)
from .simulate import SimSpec, builtin_setting, generate  # noqa: E402
from .inference import (  # noqa: E402
    average_category_probs, covariate_effect, effective_sample_size, summarize,
)
from .comparison import chib_marginal_likelihood  # noqa: E402

__all__ = [
    "ContractError", "Cutpoints", "Dataset", "DomainError", "ParamDraw", "PriorSpec",
    "cutpoints_from_delta", "delta_from_cutpoints", "log_likelihood",
    "mixture_outcome_probs", "ordinal_class_cond_probs", "PosteriorSample", "RunConfig",
    "relabel", "run_collapsed_gibbs", "run_full_gibbs", "SimSpec", "builtin_setting",
    "generate", "average_category_probs", "covariate_effect", "effective_sample_size",
    "summarize", "chib_marginal_likelihood",
]
