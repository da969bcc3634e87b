"""Candidate-term library for sparse regression.

Maps an ``(n_samples, n_states)`` state matrix to the matrix of candidate
right-hand-side terms: graded-lexicographic monomials up to a capped
degree, optionally followed by per-state sine and cosine terms.  Shaped
like a scikit-learn transformer so it composes with the estimators in
:mod:`gridid.sindy`.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

__all__ = ["FunctionLibrary", "MAX_POLY_ORDER"]

#: Degrees above this are rejected: the term count grows combinatorially
#: and the regression conditioning degrades far before it becomes useful.
MAX_POLY_ORDER = 5


def _format_frequency(freq: float) -> str:
    if freq == 1.0:
        return ""
    return f"{freq:g}*"


class FunctionLibrary(TransformerMixin, BaseEstimator):
    """Polynomial (and optional trigonometric) candidate-term builder.

    Parameters
    ----------
    poly_order : int
        Maximum total monomial degree, between 0 and 5.
    include_trig : bool
        Append ``sin(w*x_i)`` and ``cos(w*x_i)`` columns per state.
    trig_frequencies : sequence of float
        Angular frequency multipliers applied per state when
        ``include_trig`` is set.
    include_constant : bool
        Prepend the constant column of ones.

    Column order is fixed and documented: the constant first, monomials in
    graded-lexicographic order (degree 1 terms ``x1..xn``, then degree 2
    ``x1^2, x1*x2, ...`` and so on), then all sine terms (frequency-major,
    state-minor), then all cosine terms in the same order.
    """

    def __init__(self, poly_order=3, include_trig=False, trig_frequencies=(1.0,), include_constant=True):
        self.poly_order = poly_order
        self.include_trig = include_trig
        self.trig_frequencies = trig_frequencies
        self.include_constant = include_constant

    # -- validation ---------------------------------------------------

    def _check_params(self):
        if not isinstance(self.poly_order, (int, np.integer)) or isinstance(self.poly_order, bool):
            raise ValueError(f"poly_order must be an integer, got {self.poly_order!r}")
        if not 0 <= self.poly_order <= MAX_POLY_ORDER:
            raise ValueError(f"poly_order must be between 0 and {MAX_POLY_ORDER}, got {self.poly_order}")
        if self.include_trig and len(tuple(self.trig_frequencies)) == 0:
            raise ValueError("include_trig is set but trig_frequencies is empty")

    # -- sklearn API ---------------------------------------------------

    def fit(self, X, y=None):
        self._check_params()
        X = check_array(X, ensure_2d=True, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.exponents_ = self._exponent_table(self.n_features_in_)
        self.n_output_features_ = self.term_count(self.n_features_in_)
        return self

    def transform(self, X) -> np.ndarray:
        # non-finite values pass through: integrators probe the library on
        # diverging states and handle the blow-up themselves
        X = check_array(X, ensure_2d=True, dtype=float, ensure_all_finite=False)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} states, library was fit with {self.n_features_in_}")
        cols = []
        if self.include_constant:
            cols.append(np.ones(X.shape[0]))
        for exp in self.exponents_:
            term = np.ones(X.shape[0])
            for j, p in enumerate(exp):
                if p:
                    term = term * X[:, j] ** p
            cols.append(term)
        if self.include_trig:
            for freq in self.trig_frequencies:
                for j in range(X.shape[1]):
                    cols.append(np.sin(freq * X[:, j]))
            for freq in self.trig_frequencies:
                for j in range(X.shape[1]):
                    cols.append(np.cos(freq * X[:, j]))
        return np.column_stack(cols)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        if input_features is None:
            input_features = [f"x{i + 1}" for i in range(self.n_features_in_)]
        names = []
        if self.include_constant:
            names.append("1")
        for exp in self.exponents_:
            parts = []
            for j, p in enumerate(exp):
                if p == 1:
                    parts.append(str(input_features[j]))
                elif p > 1:
                    parts.append(f"{input_features[j]}^{p}")
            names.append("*".join(parts))
        if self.include_trig:
            for fn in ("sin", "cos"):
                for freq in self.trig_frequencies:
                    pre = _format_frequency(freq)
                    for j in range(self.n_features_in_):
                        names.append(f"{fn}({pre}{input_features[j]})")
        return np.asarray(names, dtype=object)

    # -- sizing --------------------------------------------------------

    def term_count(self, n_states: int) -> int:
        """Number of library columns for ``n_states`` input states."""
        self._check_params()
        # all monomials of degree <= d, including the constant
        p = math.comb(n_states + self.poly_order, self.poly_order)
        if not self.include_constant:
            p -= 1
        if self.include_trig:
            p += 2 * n_states * len(tuple(self.trig_frequencies))
        return p

    def _exponent_table(self, n_states: int):
        table = []
        for degree in range(1, self.poly_order + 1):
            for combo in combinations_with_replacement(range(n_states), degree):
                exp = [0] * n_states
                for j in combo:
                    exp[j] += 1
                table.append(tuple(exp))
        return tuple(table)
