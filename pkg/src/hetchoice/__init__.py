"""Heterogeneous binary and ordinal choice models for takeover-decision data.

Binary logit, panel mixed logit, latent class (mixed) logit, ordinal logit and
linear regression with clustered sandwich inference, plus Halton draws, Jenks
natural breaks and a synthetic population generator for recovery studies.
"""
from .dataset import (Dataset, VariableDef, apply_coding, load_csv, read_csv, validate_dataset,
                      write_csv)
from .draws import DrawConfig, DrawSet, halton_sequence, inverse_normal_cdf, standard_normal_draws
from .estimation import (EstimationResult, OptimizerConfig, estimate, fit_metrics,
                         heterogeneity_workflow, maximize_loglik, numeric_gradient, odds_ratio,
                         significance_stars)
from .jenks import BreaksResult, classify_value, jenks_breaks
from .likelihood import (lcm_loglik, lcml_loglik, loglik, mixl_simulated_prob, ordinal_loglik,
                         ols_fit, panel_loglik_binary)
from .modelspec import ModelSpec, bind_spec, parse_model_spec
from .synthgen import (PopulationSpec, generate_population, simulate_binary_choices,
                       simulate_ordinal_choices, simulate_proportions)

__version__ = "0.1.0"
