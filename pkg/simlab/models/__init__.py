"""
Candidate treatment-rule learners for simlab
"""

from simlab.models.base import DecisionRule, FixedArmRule, RuleFitter
from simlab.models.krr import KrrFitter, KrrQModel, KrrRule, fit_krr_q, predict_q, rule_from_q
from simlab.models.zom import ZomFitter, ZomRule, fit_zom


def get_fitter_for_model(name, **params):
    """Returns the rule fitter for a model name ('krr' or 'zom')"""
    name = name.lower()
    if name == 'krr':
        return KrrFitter(**params)
    elif name == 'zom':
        return ZomFitter(**params)
    else:
        raise ValueError(f"No rule fitter available for model: {name}")
