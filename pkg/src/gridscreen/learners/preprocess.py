from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Preprocessor:
    """Median imputation followed by standardisation, fitted on training rows.

    Columns that are entirely missing in training impute to 0; zero-variance
    columns standardise to 0.
    """

    medians: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @classmethod
    def fit(cls, X) -> "Preprocessor":
        X = np.asarray(X, dtype=np.float64)
        medians = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            col = X[:, j][~np.isnan(X[:, j])]
            if col.size:
                medians[j] = np.median(col)
        filled = np.where(np.isnan(X), medians, X)
        means = filled.mean(axis=0) if len(X) else np.zeros(X.shape[1])
        scales = filled.std(axis=0) if len(X) else np.ones(X.shape[1])
        scales = np.where(scales > 0, scales, 0.0)
        return cls(medians, means, scales)

    def impute(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.where(np.isnan(X), self.medians, X)

    def transform(self, X) -> np.ndarray:
        Z = self.impute(X) - self.means
        safe = np.where(self.scales > 0, self.scales, 1.0)
        return np.where(self.scales > 0, Z / safe, 0.0)

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * self.scales + self.means
