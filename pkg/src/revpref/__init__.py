"""Learning buyer utilities from revealed preferences, queries and values."""

from revpref.demand import DemandResult, demand, demand_bruteforce, kkt_check
from revpref.features import FeatureMapSpec, SecondBest, psi, second_best_linear, second_best_splc
from revpref.rp_query import RPOracle, learn_ces_rp, learn_leontief_rp_query, learn_linear_rp, learn_splc_rp
from revpref.svm import Hypothesis, min_norm_point, predict, rp_error, svm_train
from revpref.utility import (
    CESUtility,
    LeontiefUtility,
    LinearUtility,
    PriceBudget,
    SPLCUtility,
    evaluate,
    random_utility,
)
from revpref.value import ValueOracle, vq_ces, vq_leontief, vq_linear, vq_splc

__version__ = "0.1.0"

__all__ = [
    "CESUtility",
    "DemandResult",
    "FeatureMapSpec",
    "Hypothesis",
    "LeontiefUtility",
    "LinearUtility",
    "PriceBudget",
    "RPOracle",
    "SPLCUtility",
    "SecondBest",
    "ValueOracle",
    "demand",
    "demand_bruteforce",
    "evaluate",
    "kkt_check",
    "learn_ces_rp",
    "learn_leontief_rp_query",
    "learn_linear_rp",
    "learn_splc_rp",
    "min_norm_point",
    "predict",
    "psi",
    "random_utility",
    "rp_error",
    "second_best_linear",
    "second_best_splc",
    "svm_train",
    "vq_ces",
    "vq_leontief",
    "vq_linear",
    "vq_splc",
]
