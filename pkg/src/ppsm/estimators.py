"""scikit-learn style wrappers around the release mechanism.

The mechanism is transform-shaped: fit on an instance to collect the public
baseline values, then transform demand profiles row by row.  Profiles are
dense 2-d arrays whose columns follow the canonical key order (node ids
ascending, then periods); ``profile_keys_`` gives the column meaning after
fitting.  Both transformers compose in a sklearn ``Pipeline``:

    Pipeline([("noise", GasDemandObfuscator(...)),
              ("repair", FidelityPostProcessor(...))])
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .bench import get_instance
from .experiment import compute_baseline, eta_to_abs, PPSM_P, PPSM_D
from .fidelity import DUAL, FidelityParams, PRIMAL, dual_fidelity, primal_fidelity
from .model import MarketInstance
from .privacy import PrivacyParams, canonical_keys, obfuscate_demand


def _resolve(instance) -> MarketInstance:
    return instance if isinstance(instance, MarketInstance) else get_instance(instance)


class GasDemandObfuscator(BaseEstimator, TransformerMixin):
    """Adds entry-wise Laplace(alpha/epsilon) noise to each profile row.

    Row i is obfuscated with seed ``base_seed + i``, so a given matrix
    transforms identically on every call.
    """

    def __init__(self, epsilon: float = math.log(2.0), alpha: float = 1.0, base_seed: int = 0):
        self.epsilon = epsilon
        self.alpha = alpha
        self.base_seed = base_seed

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("GasDemandObfuscator.transform called before fit")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        out = np.empty_like(X, dtype=float)
        for i, row in enumerate(X):
            demand = {("x", j): float(v) for j, v in enumerate(row)}
            params = PrivacyParams(self.epsilon, self.alpha, self.base_seed + i)
            released = obfuscate_demand(demand, params)
            out[i] = [released.values[("x", j)] for j in range(X.shape[1])]
        return out


class FidelityPostProcessor(BaseEstimator, TransformerMixin):
    """Projects noisy profiles back onto market-consistent, in-band releases.

    ``fit`` solves the commitment problem on the instance's true demand to
    collect the public baseline (market cost, nodal prices, plant dispatch);
    ``transform`` then runs the configured fidelity phase per row.  Rows are
    the instance's gas demand in canonical column order.
    """

    def __init__(
        self,
        instance="tiny2",
        mode: str = PRIMAL,
        eta: float = 1.0,
        eta_unit: str = "pct",
        norm: str = "l1",
        e_factor: float = 1.0,
        g_factor: float = 1.0,
    ):
        self.instance = instance
        self.mode = mode
        self.eta = eta
        self.eta_unit = eta_unit
        self.norm = norm
        self.e_factor = e_factor
        self.g_factor = g_factor

    def fit(self, X=None, y=None):
        if self.mode not in (PRIMAL, DUAL):
            raise ValueError(f"mode must be {PRIMAL!r} or {DUAL!r}")
        inst = _resolve(self.instance)
        baseline = compute_baseline(inst, self.e_factor, self.g_factor)
        self.instance_ = baseline.stressed
        self.profile_keys_ = canonical_keys(baseline.stressed.demand.gas)
        self.n_features_in_ = len(self.profile_keys_)
        self.baseline_gm_cost_ = baseline.gm_cost
        self.baseline_prices_ = dict(baseline.prices)
        self.hist_dispatch_ = dict(baseline.hist_dispatch)
        mech = PPSM_P if self.mode == PRIMAL else PPSM_D
        self.eta_abs_ = eta_to_abs(self.eta, self.eta_unit, baseline, mech)
        return self

    def transform(self, X):
        if not hasattr(self, "instance_"):
            raise NotFittedError("FidelityPostProcessor.transform called before fit")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        params = FidelityParams(eta=self.eta_abs_, hist_dispatch=self.hist_dispatch_, norm=self.norm)
        out = np.empty_like(X, dtype=float)
        for i, row in enumerate(X):
            noisy = {key: float(v) for key, v in zip(self.profile_keys_, row)}
            if self.mode == PRIMAL:
                res = primal_fidelity(self.instance_, noisy, self.baseline_gm_cost_, params)
            else:
                res = dual_fidelity(self.instance_, noisy, self.baseline_prices_, params)
            if not res.ok:
                raise RuntimeError(f"fidelity phase {res.status} for row {i}; widen eta")
            out[i] = [res.demand[key] for key in self.profile_keys_]
        return out
