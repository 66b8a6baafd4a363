"""Producing per-cell statistics: synthetic presets, RCT CSV ingestion,
quantile bucketization, stratified splits and bootstrap estimation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import PolicyCellStats

PRESETS = ("table1_large", "table1_small", "table2_case_i", "table2_case_ii", "bernoulli_alignment")

_T1_MEAN = np.array([[2.0, 1.9, 0.0], [2.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
_T1_VAR = np.array([[9.0, 1.0, 9.0], [9.0, 1.0, 9.0], [1.0, 1.0, 1.0]])


class DataError(ValueError):
    """Malformed or insufficient input data."""


class SchemaError(DataError):
    pass


def preset_stats(name: str) -> PolicyCellStats:
    """Ground-truth statistics of a named synthetic setup."""
    if name == "table1_large":
        return PolicyCellStats.from_1d(_T1_MEAN, _T1_VAR)
    if name == "table1_small":
        return PolicyCellStats.from_1d(_T1_MEAN, _T1_VAR * 0.01)
    if name == "table2_case_i":
        return PolicyCellStats.from_2d([2.0, 1.0], [9.0, 1.0], [1.0, 1.5], [4.0, 1.0], 0.5)
    if name == "table2_case_ii":
        return PolicyCellStats.from_2d([2.0, 1.0], [9.0, 1.0], [1.0, 0.5], [1.0, 1.0], 0.5)
    if name == "bernoulli_alignment":
        return bernoulli_stats([0.6, 0.8], [500, 500])
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")


def bernoulli_stats(p, n) -> PolicyCellStats:
    """Single-bucket stats for binomial totals: mean ``n p``, variance ``n p (1 - p)``."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    return PolicyCellStats.from_1d(n * p, n * p * (1.0 - p))


@dataclass
class SyntheticConfig:
    """What `generate_synthetic` builds.

    ``preset="custom"`` takes the ground truth from ``custom`` (either a
    `PolicyCellStats` or a stats JSON document).
    """

    preset: str = "table1_large"
    n_samples_per_cell: int = 1000
    seed: int = 0
    custom: Optional[object] = None

    def __post_init__(self):
        if self.preset != "custom" and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.preset == "custom" and self.custom is None:
            raise ValueError("custom preset needs stats")
        if self.n_samples_per_cell < 1:
            raise ValueError("n_samples_per_cell must be >= 1")

    def ground_truth(self) -> PolicyCellStats:
        if self.preset != "custom":
            return preset_stats(self.preset)
        if isinstance(self.custom, PolicyCellStats):
            return self.custom
        return PolicyCellStats.from_dict(self.custom)


@dataclass(eq=False)
class RctDataset:
    """Row-level randomized-trial data.

    Attributes
    ----------
    features : ndarray, shape (N, p)
    policy : ndarray of int, shape (N,)
    outcome : ndarray, shape (N, d)
        ``(value, cost)`` order when ``d == 2``.
    """

    features: np.ndarray
    policy: np.ndarray
    outcome: np.ndarray
    feature_names: tuple = ()
    outcome_names: tuple = ()
    n_policies: Optional[int] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(len(self.policy), -1)
        self.policy = np.asarray(self.policy, dtype=np.int64)
        self.outcome = np.asarray(self.outcome, dtype=float).reshape(len(self.policy), -1)
        if self.n_policies is None:
            self.n_policies = int(self.policy.max()) + 1 if len(self.policy) else 0
        if len(self.policy) and (self.policy.min() < 0 or self.policy.max() >= self.n_policies):
            raise DataError(f"policy index outside [0, {self.n_policies})")
        if not np.all(np.isfinite(self.outcome)):
            raise DataError("outcomes must be finite")
        if not self.feature_names:
            self.feature_names = tuple(f"x{i}" for i in range(self.features.shape[1]))
        self.feature_names = tuple(self.feature_names)
        self.outcome_names = tuple(self.outcome_names)

    @property
    def n_users(self) -> int:
        return len(self.policy)

    def feature(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.feature_names.index(name)]
        except ValueError:
            raise SchemaError(f"no feature column {name!r}") from None

    def subset(self, idx) -> "RctDataset":
        return RctDataset(
            self.features[idx], self.policy[idx], self.outcome[idx],
            self.feature_names, self.outcome_names, self.n_policies,
        )

    def policy_counts(self) -> dict:
        counts = np.bincount(self.policy, minlength=self.n_policies)
        return {k: int(c) for k, c in enumerate(counts)}

    def write_csv(self, path, treatment: str = "treatment") -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, treatment, *self.outcome_names])
            for x, k, y in zip(self.features, self.policy, self.outcome):
                writer.writerow([*map(repr, x.tolist()), int(k), *map(repr, y.tolist())])


def generate_synthetic(config: SyntheticConfig):
    """Ground-truth stats plus i.i.d. rows drawn from each cell's Gaussian.

    Every (bucket, policy) cell gets ``n_samples_per_cell`` rows, each a draw
    of that cell's outcome; rows are shuffled.  The single feature column
    ``"bucket"`` holds the bucket index, so `identity_bucketizer` recovers
    the cells.
    """
    truth = config.ground_truth()
    M, K, d = truth.mean.shape
    n = config.n_samples_per_cell
    rng = np.random.default_rng(config.seed)
    bucket = np.repeat(np.arange(M), K * n)
    policy = np.tile(np.repeat(np.arange(K), n), M)
    z = rng.standard_normal((M * K * n, d))
    roots = np.linalg.cholesky(truth.cov + 0.0 * np.eye(d)) if _all_pd(truth.cov) else _psd_roots(truth.cov)
    outcome = truth.mean[bucket, policy] + np.einsum("nij,nj->ni", roots[bucket, policy], z)
    perm = rng.permutation(len(bucket))
    names = ("value",) if d == 1 else ("value", "cost")
    data = RctDataset(bucket[perm, None], policy[perm], outcome[perm], ("bucket",), names, K)
    return truth, data


def _all_pd(cov) -> bool:
    return bool(np.all(np.linalg.eigvalsh(cov) > 0))


def _psd_roots(cov):
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


# ---------------------------------------------------------------------------
# CSV ingestion

CRITEO_FEATURES = tuple(f"f{i}" for i in range(12))


@dataclass
class CsvSchema:
    """Column mapping for RCT CSV files.

    Defaults follow the Criteo uplift layout: ``conversion`` is the value,
    ``visit`` the cost proxy.
    """

    features: Sequence[str] = CRITEO_FEATURES
    treatment: str = "treatment"
    outcomes: Sequence[str] = ("conversion", "visit")
    delimiter: str = ","
    n_policies: Optional[int] = None

    @classmethod
    def from_dict(cls, doc: dict) -> "CsvSchema":
        doc = dict(doc)
        for key in ("features", "outcomes"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "treatment": self.treatment,
            "outcomes": list(self.outcomes),
            "delimiter": self.delimiter,
            "n_policies": self.n_policies,
        }


def ingest_csv(path, schema: CsvSchema = None) -> RctDataset:
    """Read an RCT CSV into an `RctDataset`.

    A header row is required.  Treatment values must be integers in
    ``[0, K)``.  Blank or non-numeric cells raise `DataError` naming the
    line and column.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not schema.outcomes or len(schema.outcomes) > 2:
        raise SchemaError("schema needs one or two outcome columns")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        wanted = [*schema.features, schema.treatment, *schema.outcomes]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in wanted]
        n_feat = len(schema.features)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            parsed = []
            for name, j in zip(wanted, cols):
                cell = raw[j].strip()
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise DataError(f"{path}:{lineno}: column {name!r} has non-numeric value {cell!r}")
                parsed.append(value)
            treat = parsed[n_feat]
            if treat != int(treat) or treat < 0:
                raise DataError(f"{path}:{lineno}: treatment {treat!r} is not a policy index")
            if schema.n_policies is not None and treat >= schema.n_policies:
                raise DataError(f"{path}:{lineno}: treatment {int(treat)} >= n_policies {schema.n_policies}")
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return RctDataset(
        arr[:, :n_feat], arr[:, n_feat].astype(np.int64), arr[:, n_feat + 1:],
        tuple(schema.features), tuple(schema.outcomes), schema.n_policies,
    )


# ---------------------------------------------------------------------------
# buckets and splits

@dataclass(frozen=True, eq=False)
class BucketizerSpec:
    """Quantile cut points on one feature; ``x`` goes to bucket ``#{cuts < x}``."""

    feature_name: str
    n_buckets: int
    cut_points: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        cuts = np.asarray(self.cut_points, dtype=float).ravel()
        if len(cuts) != self.n_buckets - 1:
            raise ValueError(f"{self.n_buckets} buckets need {self.n_buckets - 1} cut points, got {len(cuts)}")
        if np.any(np.diff(cuts) <= 0):
            raise ValueError("cut points must be strictly increasing")
        object.__setattr__(self, "cut_points", cuts)

    def to_dict(self) -> dict:
        return {"feature": self.feature_name, "n_buckets": self.n_buckets,
                "cut_points": self.cut_points.tolist()}


def identity_bucketizer(feature_name: str, n_buckets: int) -> BucketizerSpec:
    """Cuts at half-integers, mapping an integer bucket-index feature to itself."""
    return BucketizerSpec(feature_name, n_buckets, np.arange(n_buckets - 1) + 0.5)


def fit_bucketizer(data: RctDataset, feature: str, n_buckets: int) -> BucketizerSpec:
    """Cut points at the ``j / M`` lower empirical quantiles of ``feature``.

    The ``q`` quantile is the ``ceil(q N)``-th smallest value, so a value
    equal to a cut point falls in the lower bucket.
    """
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    x = data.feature(feature)
    distinct = len(np.unique(x))
    if distinct < n_buckets:
        raise DataError(
            f"feature {feature!r} has {distinct} distinct value(s); use at most {distinct} buckets"
        )
    q = np.arange(1, n_buckets) / n_buckets
    cuts = np.quantile(x, q, method="inverted_cdf") if n_buckets > 1 else np.empty(0)
    if np.any(np.diff(cuts) <= 0):
        raise DataError(
            f"feature {feature!r} has too many tied values for {n_buckets} quantile buckets; "
            "use fewer buckets"
        )
    return BucketizerSpec(feature, n_buckets, cuts)


def assign_bucket(spec: BucketizerSpec, values) -> np.ndarray:
    """Bucket index of each feature value."""
    return np.searchsorted(spec.cut_points, np.asarray(values, dtype=float), side="left")


def split_train_test(data: RctDataset, fraction: float = 0.5, seed=0):
    """Random train/test split stratified by policy.

    ``round(fraction * N)`` rows go to train, apportioned across policies by
    largest remainder so every policy's train count is within one row of
    exact proportionality.  Rows keep their original order in both parts.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    counts = np.bincount(data.policy, minlength=data.n_policies)
    exact = counts * fraction
    take = np.floor(exact).astype(int)
    short = int(round(fraction * data.n_users)) - int(take.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(counts)), -(exact - take)))
        take[order[:short]] += 1
    train_mask = np.zeros(data.n_users, dtype=bool)
    for k in range(data.n_policies):
        idx = np.flatnonzero(data.policy == k)
        chosen = rng.permutation(idx)[: take[k]]
        train_mask[chosen] = True
    return data.subset(np.flatnonzero(train_mask)), data.subset(np.flatnonzero(~train_mask))


# ---------------------------------------------------------------------------
# estimation

@dataclass(frozen=True)
class BootstrapSpec:
    """Bootstrap settings.

    ``cov_method="within"`` averages the per-replicate sample covariance;
    ``"spread"`` uses the dispersion of the replicate statistics.  Both are
    rescaled to the variance of the cell's total outcome.
    """

    n_bootstrap: int = 100
    seed: int = 0
    cov_method: str = "within"

    def __post_init__(self):
        if self.n_bootstrap < 2:
            raise ValueError("n_bootstrap must be >= 2")
        if self.cov_method not in ("within", "spread"):
            raise ValueError(f"cov_method must be 'within' or 'spread', got {self.cov_method!r}")


def _bootstrap_cell(y: np.ndarray, scale: float, spec: BootstrapSpec, rng):
    """Bootstrap mean and covariance of ``scale * mean(y)`` as a total of ``scale`` draws.

    For a total of ``scale`` i.i.d. users the covariance is
    ``scale * per-user covariance``; both estimators target that.
    """
    n, d = y.shape
    totals = np.empty((spec.n_bootstrap, d))
    within = np.zeros((d, d))
    for b in range(spec.n_bootstrap):
        rs = y[rng.integers(0, n, size=n)]
        totals[b] = scale * rs.mean(axis=0)
        if spec.cov_method == "within":
            dev = rs - rs.mean(axis=0)
            within += dev.T @ dev / (n - 1)
    mean = totals.mean(axis=0)
    if spec.cov_method == "within":
        cov = scale * within / spec.n_bootstrap
    else:
        dev = totals - mean
        cov = (dev.T @ dev / (spec.n_bootstrap - 1)) * n / scale
    return mean, 0.5 * (cov + cov.T)


def estimate_stats(data: RctDataset, bucketizer: BucketizerSpec, spec: BootstrapSpec = BootstrapSpec(),
                   normalization: str = "raw_total", estimand: str = "bucket_total",
                   n_policies: Optional[int] = None) -> PolicyCellStats:
    """Bootstrap per-cell mean/covariance estimates.

    ``estimand="bucket_total"`` targets the total outcome had every bucket-g
    user received policy k, i.e. ``(N_g / n_gk) * cell sum``.
    ``estimand="per_row"`` treats each row as one realization of the cell
    outcome (synthetic data).  ``normalization="reference_relative"``
    subtracts each bucket's policy-0 mean and divides every dimension by
    the all-policy-0 total, so the total outcome reads as a relative gain.
    """
    if estimand not in ("bucket_total", "per_row"):
        raise ValueError(f"unknown estimand {estimand!r}")
    if normalization not in ("raw_total", "reference_relative"):
        raise ValueError(f"unknown normalization {normalization!r}")
    M = bucketizer.n_buckets
    K = n_policies or data.n_policies
    d = data.outcome.shape[1]
    buckets = assign_bucket(bucketizer, data.feature(bucketizer.feature_name))
    mean = np.empty((M, K, d))
    cov = np.empty((M, K, d, d))
    for g in range(M):
        in_bucket = buckets == g
        n_g = int(in_bucket.sum())
        for k in range(K):
            y = data.outcome[in_bucket & (data.policy == k)]
            if len(y) < 2:
                raise DataError(f"cell (g={g}, k={k}) has {len(y)} row(s); need at least 2")
            scale = float(n_g) if estimand == "bucket_total" else 1.0
            rng = np.random.default_rng([spec.seed, g, k])
            mean[g, k], cov[g, k] = _bootstrap_cell(y, scale, spec, rng)
    if normalization == "reference_relative":
        ref_total = mean[:, 0, :].sum(axis=0)
        if np.any(ref_total == 0):
            raise DataError("reference policy total is zero; cannot normalize")
        mean = (mean - mean[:, :1, :]) / ref_total
        cov = cov / np.outer(ref_total, ref_total)
    return PolicyCellStats(mean, cov)
