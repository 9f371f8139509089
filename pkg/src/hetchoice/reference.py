"""Published experimental design, covariate marginals and reported model columns.

Everything here is data: the 16-cell scenario factorial with its observed
giveAway counts, the covariate marginals with giveAway percentages, model
definitions matching the reported utility functions, and the reported
estimates and robust t-statistics that serve as simulation truths.
"""
from __future__ import annotations

import json

import numpy as np

from .dataset import (CompoundRule, ComplementRule, Dataset, DummyRule, UnionRule, VariableDef,
                      apply_coding)
from .estimation import EstimationResult
from .modelspec import parse_model_spec

# scenario_id -> (rain, night, multitasking, heavy_congestion)
# Weather splits 1-8 / 9-16; within each half: lighting night for positions 3,4,7,8,
# multitasking on odd positions, heavy congestion in positions 1-4.
SCENARIOS = {
    s: (int(s > 8), int((s - 1) % 8 % 4 >= 2), int(s % 2 == 1), int((s - 1) % 8 < 4))
    for s in range(1, 17)
}
SCENARIO_VARIABLES = ("rain", "night", "multitasking", "heavy_congestion")

# scenario_id -> (giveAway, no_giveAway)
SCENARIO_COUNTS = {
    1: (10, 4), 2: (8, 3), 3: (11, 0), 4: (7, 4), 5: (7, 3), 6: (9, 1), 7: (8, 0), 8: (6, 3),
    9: (7, 4), 10: (6, 4), 11: (9, 2), 12: (8, 3), 13: (9, 1), 14: (5, 5), 15: (12, 1), 16: (7, 5),
}
N_OBSERVATIONS = 172
N_PARTICIPANTS = 68

# variable -> [(level label, observations N, giveAway percent)]
TABLE2 = {
    "GENDER": [("MALE", 117, 75.2), ("FEMALE", 55, 76.4)],
    "AGE": [("AGE_ONE", 36, 75.0), ("AGE_TWO", 64, 82.8), ("AGE_THREE", 57, 68.4),
            ("AGE_FOUR", 15, 73.3)],
    "JOB": [("JOB_1", 53, 71.7), ("JOB_2", 119, 77.3)],
    "EDUCATION": [("EDU_ONE", 32, 71.9), ("EDU_TWO", 28, 78.6), ("EDU_THREE", 55, 80.0),
                  ("EDU_FOUR", 57, 71.9)],
    "LICENSE": [("DRIVE_ONE", 15, 86.7), ("DRIVE_TWO", 26, 73.1), ("DRIVE_THREE", 87, 69.0),
                ("DRIVE_FOUR", 44, 86.4)],
    "DRIVING_EXPERIENCE": [("DRIVE_EXP_ONE", 31, 77.4), ("DRIVE_EXP_TWO", 26, 73.1),
                           ("DRIVE_EXP_THREE", 49, 79.6), ("DRIVE_EXP_FOUR", 66, 72.7)],
    "exp_give_before": [("0", 86, 72.1), ("1", 86, 79.1)],
    "famAV": [("0", 33, 75.8), ("1", 139, 75.5)],
}
CATEGORY_VARIABLES = ("GENDER", "AGE", "JOB", "EDUCATION", "LICENSE", "DRIVING_EXPERIENCE")


def table2_shares() -> dict[str, np.ndarray]:
    """Observation shares per level, used as sampling marginals."""
    return {v: np.array([n for _, n, _ in rows], float) / N_OBSERVATIONS for v, rows in TABLE2.items()}


SURVEY_SCHEMA = (
    VariableDef("GENDER", "category", ("MALE", "FEMALE")),
    VariableDef("AGE", "category", ("AGE_ONE", "AGE_TWO", "AGE_THREE", "AGE_FOUR")),
    VariableDef("JOB", "category", ("JOB_1", "JOB_2")),
    VariableDef("EDUCATION", "category", ("EDU_ONE", "EDU_TWO", "EDU_THREE", "EDU_FOUR")),
    VariableDef("LICENSE", "category", ("DRIVE_ONE", "DRIVE_TWO", "DRIVE_THREE", "DRIVE_FOUR")),
    VariableDef("DRIVING_EXPERIENCE", "category",
                ("DRIVE_EXP_ONE", "DRIVE_EXP_TWO", "DRIVE_EXP_THREE", "DRIVE_EXP_FOUR")),
    VariableDef("exp_give_before", "binary"),
    VariableDef("famAV", "binary"),
    VariableDef("LCI", "continuous"),
    VariableDef("acceleration", "continuous", units="unreported; standard normal in synthetic data"),
    VariableDef("rain", "binary"),
    VariableDef("night", "binary"),
    VariableDef("multitasking", "binary"),
    VariableDef("heavy_congestion", "binary"),
)

SURVEY_CODING = (
    DummyRule("GENDER", "MALE"),
    DummyRule("AGE", "AGE_ONE"),
    DummyRule("JOB", "JOB_1"),
    DummyRule("EDUCATION", "EDU_FOUR"),
    DummyRule("LICENSE", "DRIVE_ONE"),
    DummyRule("DRIVING_EXPERIENCE", "DRIVE_EXP_FOUR"),
    ComplementRule("gender_male", "FEMALE"),
    ComplementRule("day", "night"),
    ComplementRule("sun", "rain"),
    UnionRule("dexp_lt5", ("DRIVE_EXP_ONE", "DRIVE_EXP_TWO")),
    CompoundRule("exp_give_before_college_education", ("exp_give_before", "EDU_ONE")),
    CompoundRule("male_with_Glicense", ("gender_male", "DRIVE_THREE")),
    CompoundRule("multitasking_night", ("multitasking", "night")),
    CompoundRule("night_rain_highcongestion", ("night", "rain", "heavy_congestion")),
    CompoundRule("lt5yrDexp_day_sun", ("dexp_lt5", "day", "sun")),
)


def _u(coef, variable):
    return {"coef": coef, "variable": variable}


_BL_UTILITY = [
    _u("ASC_Give", "CONSTANT"),
    _u("B_LCI", "LCI"),
    _u("B_EXP_COLLEGE", "exp_give_before_college_education"),
    _u("B_AGE_30_39", "AGE_THREE"),
    _u("B_MALE_GLICENSE", "male_with_Glicense"),
    _u("B_MULTITASK_NIGHT", "multitasking_night"),
    _u("B_NIGHT_RAIN_HEAVY", "night_rain_highcongestion"),
    _u("B_LT5YR_DAY_SUN", "lt5yrDexp_day_sun"),
]

_PROPORTION_TERMS = [
    _u("B_ACCEL", "acceleration"),
    _u("B_FAMAV", "famAV"),
    _u("B_DEXP_LT2", "DRIVE_EXP_ONE"),
    _u("B_AGE_40_65", "AGE_FOUR"),
    _u("B_FEMALE", "FEMALE"),
    _u("B_LICENSE_OTHER", "DRIVE_FOUR"),
    _u("B_NIGHT", "night"),
    _u("B_MULTITASK", "multitasking"),
]

SPECS = {
    "BL": {"family": "BL", "name": "binary logit",
           "classes": [{"name": "all", "utilities": _BL_UTILITY}]},
    "MIXL": {"family": "MIXL", "name": "mixed logit",
             "classes": [{"name": "all", "utilities": _BL_UTILITY,
                          "random_coefs": [{"mean": "B_LCI", "sd": "LCI_S"},
                                           {"mean": "B_MALE_GLICENSE", "sd": "male_with_Glicense_S"}]}],
             "draws": {"count": 500, "method": "halton", "burn_in": 10, "seed": 0}},
    "LCML": {"family": "LCML", "name": "latent class mixed logit",
             "classes": [
                 {"name": "Externalizers", "utilities": [
                     _u("ASC_Give", "CONSTANT"),
                     _u("B_EXP_COLLEGE", "exp_give_before_college_education"),
                     _u("B_AGE_30_39", "AGE_THREE"),
                     _u("B_LICENSE_OTHER", "DRIVE_FOUR"),
                     _u("B_MULTITASK_NIGHT", "multitasking_night"),
                     _u("B_NIGHT_RAIN_HEAVY", "night_rain_highcongestion")]},
                 {"name": "Internalizers", "utilities": [
                     _u("ASC_Give", "CONSTANT"),
                     _u("B_LCI", "LCI"),
                     _u("B_FAMAV", "famAV"),
                     _u("B_MALE", "gender_male"),
                     _u("B_MULTITASK_NIGHT", "multitasking_night"),
                     _u("B_NIGHT_RAIN_HEAVY", "night_rain_highcongestion")],
                  "random_coefs": [{"mean": "B_LCI", "sd": "LCI_S"},
                                   {"mean": "B_MALE", "sd": "gender_male_S"},
                                   {"variable": "exp_give_before", "sd": "exp_give_before_S"}]}],
             "membership": {"Externalizers": [_u("coef_intercept", "CONSTANT"),
                                              _u("coef_Locus", "LCI")]},
             "draws": {"count": 500, "method": "halton", "burn_in": 10, "seed": 0}},
    "OL": {"family": "OL", "name": "ordinal logit",
           "classes": [{"name": "all", "utilities": _PROPORTION_TERMS}],
           "thresholds": {"first": "tau1", "increments": ["delta2"], "unused": ["delta3"]}},
    "LR": {"family": "LR", "name": "linear regression",
           "classes": [{"name": "all", "utilities": [_u("CONSTANT_LR", "CONSTANT"), *_PROPORTION_TERMS]}]},
}

# name -> (estimate, robust t)
REPORTED = {
    "BL": {
        "ASC_Give": (2.33, 3.47), "B_LCI": (-0.20, -2.20), "B_EXP_COLLEGE": (1.92, 2.14),
        "B_AGE_30_39": (-0.87, -1.90), "B_MALE_GLICENSE": (-0.85, -2.08),
        "B_MULTITASK_NIGHT": (2.31, 3.60), "B_NIGHT_RAIN_HEAVY": (-1.04, -1.77),
        "B_LT5YR_DAY_SUN": (1.27, 1.95),
    },
    "MIXL": {
        "ASC_Give": (2.96, 3.61), "B_LCI": (-0.25, -2.43), "B_EXP_COLLEGE": (1.88, 1.82),
        "B_AGE_30_39": (-1.17, -2.13), "B_MALE_GLICENSE": (-0.77, -1.67),
        "B_MULTITASK_NIGHT": (2.43, 2.78), "B_NIGHT_RAIN_HEAVY": (-1.35, -1.65),
        "B_LT5YR_DAY_SUN": (1.39, 1.67), "LCI_S": (0.15, 1.52), "male_with_Glicense_S": (-1.62, -1.91),
    },
    "LCML": {
        "Externalizers.ASC_Give": (0.79, 2.85), "Externalizers.B_EXP_COLLEGE": (2.15, 2.46),
        "Externalizers.B_AGE_30_39": (-1.06, -2.24), "Externalizers.B_LICENSE_OTHER": (1.40, 2.30),
        "Externalizers.B_MULTITASK_NIGHT": (2.31, 3.17),
        "Externalizers.B_NIGHT_RAIN_HEAVY": (-1.61, -2.20),
        "Internalizers.ASC_Give": (8.31, 8.32), "Internalizers.B_LCI": (9.04, 14.80),
        "Internalizers.B_FAMAV": (16.6, 13.5), "Internalizers.B_MALE": (-15.50, -11.1),
        "Internalizers.B_MULTITASK_NIGHT": (16.6, 13.5),
        "Internalizers.B_NIGHT_RAIN_HEAVY": (15.9, 11.2),
        "Internalizers.LCI_S": (-0.045, -18.2), "Internalizers.gender_male_S": (-0.05, -5.03),
        "Internalizers.exp_give_before_S": (0.013, 1.25),
        "Externalizers.coef_intercept": (-27.70, -5.37), "Externalizers.coef_Locus": (9.77, 3.97),
    },
    "OL": {
        "B_ACCEL": (1.80, 2.98), "B_FAMAV": (1.17, 1.86), "B_DEXP_LT2": (0.94, 1.69),
        "B_AGE_40_65": (3.51, 3.73), "B_FEMALE": (0.42, 0.84), "B_LICENSE_OTHER": (-1.58, -2.77),
        "B_NIGHT": (0.89, 1.93), "B_MULTITASK": (0.48, 1.10), "tau1": (0.63, 1.02),
        "delta2": (2.25, 5.59), "delta3": (17.20, 8.34),
    },
    "LR": {
        "CONSTANT_LR": (-0.66, -3.11), "B_ACCEL": (0.48, 6.73), "B_FAMAV": (0.40, 2.06),
        "B_DEXP_LT2": (0.33, 1.51), "B_AGE_40_65": (0.89, 3.44), "B_FEMALE": (0.25, 1.67),
        "B_LICENSE_OTHER": (-0.59, -3.60), "B_NIGHT": (0.28, 2.05), "B_MULTITASK": (0.24, 1.74),
    },
}

# reported performance indicators: (k, AIC, BIC, rho-square-bar)
REPORTED_FIT = {
    "BL": (8, 172.560, 197.741, 0.102),
    "MIXL": (10, 175.776, 197.970, 0.127),
    "LCML": (17, 181.458, 234.965, 0.239),
}


def spec_text(family: str) -> str:
    return json.dumps(SPECS[family.upper()], indent=2)


def builtin_spec(family: str):
    return parse_model_spec(spec_text(family))


def truth(family: str) -> np.ndarray:
    """Reported estimates in the parameter order of :func:`builtin_spec` (unused thresholds dropped)."""
    family = family.upper()
    spec = builtin_spec(family)
    return np.array([REPORTED[family][n][0] for n in spec.param_names])


def reported_result(family: str) -> EstimationResult:
    """An :class:`EstimationResult` rebuilt from a reported column (robust SE = estimate / t)."""
    family = family.upper()
    spec = builtin_spec(family)
    names = spec.param_names
    est = np.array([REPORTED[family][n][0] for n in names])
    t = np.array([REPORTED[family][n][1] for n in names])
    k, aic, _, _ = REPORTED_FIT.get(family, (len(names), np.nan, None, None))
    ll = (2 * k - aic) / 2
    return EstimationResult(
        family=family, names=names, estimates=est, robust_cov=np.diag((est / t) ** 2),
        hessian_cov=None, loglik=ll, null_loglik=N_OBSERVATIONS * np.log(0.5),
        null_model="equal-shares", null_logliks={}, n_observations=N_OBSERVATIONS,
        n_individuals=N_PARTICIPANTS, message="reported values", sd_variables=spec.sd_variables,
        spec=spec)


def _table2_give_counts(rows) -> list[int]:
    """giveAway count per level from percentages, adjusted to sum to the 129 total."""
    target = sum(g for g, _ in SCENARIO_COUNTS.values())
    raw = [pct * n / 100 for _, n, pct in rows]
    counts = [int(round(r)) for r in raw]
    while sum(counts) != target:
        step = 1 if sum(counts) < target else -1
        # nudge the level whose rounding moved it furthest from the needed direction
        j = max(range(len(rows)), key=lambda i: step * (raw[i] - counts[i]))
        counts[j] += step
    return counts


def survey_dataset() -> Dataset:
    """172 coded observations reproducing the scenario counts and covariate marginals.

    Choices and scenarios follow the scenario table exactly. Each covariate's
    (level, giveAway) cross-counts follow the marginals table, adjusted where
    its percentages do not add up to 129 giveAway choices. Covariates are
    assigned per observation (only marginals are published), so demographics
    may vary within an individual here. LCI is constant per individual.
    """
    scen, y = [], []
    for s in range(1, 17):
        give, no = SCENARIO_COUNTS[s]
        scen += [s] * (give + no)
        y += [1] * give + [0] * no
    scen, y = np.array(scen), np.array(y)
    n = len(y)
    rng = np.random.default_rng(20231)
    covs = {}
    for var, rows in TABLE2.items():
        give_counts = _table2_give_counts(rows)
        levels = np.empty(n)
        ones, zeros = rng.permutation(np.flatnonzero(y == 1)), rng.permutation(np.flatnonzero(y == 0))
        gi = zi = 0
        for code, ((_, n_level, _), g) in enumerate(zip(rows, give_counts), start=1):
            levels[ones[gi:gi + g]] = code
            levels[zeros[zi:zi + n_level - g]] = code
            gi += g
            zi += n_level - g
        covs[var] = levels if var in CATEGORY_VARIABLES else levels - 1
    ids = np.arange(n) % N_PARTICIPANTS + 1
    lci_by_person = rng.binomial(13, 0.3, N_PARTICIPANTS).astype(float)
    covs["LCI"] = lci_by_person[ids - 1]
    covs["acceleration"] = rng.standard_normal(n)
    for j, name in enumerate(SCENARIO_VARIABLES):
        covs[name] = np.array([SCENARIOS[s][j] for s in scen], float)
    ds = Dataset(SURVEY_SCHEMA, ids, scen, covs, choice_y=y)
    return apply_coding(ds, SURVEY_CODING)
