"""Credit-data ingestion and synthetic instance factories.

Reads the whitespace-separated 21-field credit records (20 attributes plus a
1/2 outcome), extracts the four-feature causal view (gender, age, loan
amount, repayment duration), and fits per-feature scales. Also provides a
seeded random-SCM factory for property tests and a generator for the bundled
demo file, which mimics the published summary statistics of the original
data so the full pipeline runs offline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConstantColumnError, DataFormatError
from .scm import FeatureMeta, LinearSCM

N_FIELDS = 21

FEATURE_NAMES = ("gender", "age", "amount", "duration")

# personal-status codes -> sex, per the dataset's attribute documentation
DEFAULT_GENDER_CODES = {
    "A91": "male",
    "A92": "female",
    "A93": "male",
    "A94": "male",
    "A95": "female",
}


@dataclass(frozen=True)
class ColumnMapping:
    """Where the mapped columns live in a 21-field record (0-based) and how
    categories are encoded."""

    duration_col: int = 1
    amount_col: int = 4
    gender_col: int = 8
    age_col: int = 12
    label_col: int = 20
    gender_codes: dict = field(default_factory=lambda: dict(DEFAULT_GENDER_CODES))
    gender_encoding: dict = field(default_factory=lambda: {"male": 0.0, "female": 1.0})
    label_encoding: dict = field(default_factory=lambda: {"1": "low-risk", "2": "high-risk"})

    def __post_init__(self):
        cols = (self.duration_col, self.amount_col, self.gender_col, self.age_col, self.label_col)
        if len(set(cols)) != 5:
            raise ValueError("mapped columns must be five distinct indices")

    @classmethod
    def from_file(cls, path) -> "ColumnMapping":
        text = open(path, "r", encoding="utf-8").read()
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ImportError as exc:  # python < 3.11
                raise DataFormatError("TOML mappings need Python >= 3.11; use JSON") from exc
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
        return cls(**doc)


@dataclass
class Dataset:
    """Parsed records with the four-feature view extracted.

    ``X`` columns follow FEATURE_NAMES order; ``y`` is 1 for the high-risk
    outcome. Raw records are retained for auditability.
    """

    rows: list
    X: np.ndarray
    y: np.ndarray
    mapping: ColumnMapping

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, FEATURE_NAMES.index(name)]


def load_german_credit(path, mapping: ColumnMapping | None = None) -> Dataset:
    """Parse a credit file into the four-feature view.

    Rejects rows with the wrong field count, unparseable numerics, or
    unknown category codes, reporting 1-based row numbers.
    """
    mapping = mapping or ColumnMapping()
    rows, feats, labels = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != N_FIELDS:
                raise DataFormatError(f"expected {N_FIELDS} fields, found {len(fields)}", row=lineno)
            try:
                age = float(fields[mapping.age_col])
                amount = float(fields[mapping.amount_col])
                duration = float(fields[mapping.duration_col])
            except ValueError as exc:
                raise DataFormatError(f"non-numeric value: {exc}", row=lineno) from None
            code = fields[mapping.gender_col]
            if code not in mapping.gender_codes:
                raise DataFormatError(f"unknown personal-status code {code!r}", row=lineno)
            gender = mapping.gender_encoding[mapping.gender_codes[code]]
            label_raw = fields[mapping.label_col]
            if label_raw not in mapping.label_encoding:
                raise DataFormatError(f"unknown outcome code {label_raw!r}", row=lineno)
            label = 1 if mapping.label_encoding[label_raw] == "high-risk" else 0
            rows.append(fields)
            feats.append((gender, age, amount, duration))
            labels.append(label)
    if not rows:
        raise DataFormatError(f"no records found in {path}")
    return Dataset(rows=rows, X=np.asarray(feats, dtype=float), y=np.asarray(labels, dtype=int),
                   mapping=mapping)


def standardize(ds: Dataset) -> tuple[tuple[FeatureMeta, ...], np.ndarray]:
    """Fit per-feature scales; values themselves stay in raw units.

    Numeric features get their sample standard deviation (n-1 denominator);
    the categorical gender bit keeps scale 1 and is immutable.
    """
    sigma = np.ones(4)
    for j, name in enumerate(FEATURE_NAMES):
        if name == "gender":
            continue
        s = float(np.std(ds.X[:, j], ddof=1))
        if s == 0.0:
            raise ConstantColumnError(f"column {name!r} is constant")
        sigma[j] = s
    features = tuple(
        FeatureMeta(
            name=name, index=j, sigma=float(sigma[j]),
            mutable=(name != "gender"), categorical=(name == "gender"),
        )
        for j, name in enumerate(FEATURE_NAMES)
    )
    return features, ds.X.copy()


def design_matrix_csv(ds: Dataset) -> str:
    """Raw design matrix plus outcome as CSV text."""
    lines = [",".join(FEATURE_NAMES) + ",high_risk"]
    for (g, a, m, d), y in zip(ds.X, ds.y):
        lines.append(f"{g:g},{a:g},{m:g},{d:g},{int(y)}")
    return "\n".join(lines) + "\n"


def demo_credit_path() -> str:
    """Path of the bundled demo credit file (synthetic stand-in generated by
    ``write_demo_credit_file`` with matched summary statistics)."""
    return str(resources.files("recourse_kit").joinpath("datasets/german_demo.data"))


# ---------------------------------------------------------------------------
# synthetic SCM factory for property tests


def synth_scm(seed: int, n_nodes: int = 4, density: float = 0.5):
    """Random linear additive-noise SCM plus a sampling function.

    Edges are drawn with probability ``density`` over a random topological
    order; weights are uniform on [-1, 1] with magnitudes below 0.05
    resampled away from zero, noise scales uniform on [0.5, 2]. Deterministic
    per seed.
    """
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_nodes)
    rank = {int(node): k for k, node in enumerate(order)}
    parents, weights = [], []
    for i in range(n_nodes):
        pa = [int(j) for j in range(n_nodes) if j != i and rank[j] < rank[i] and rng.random() < density]
        w = rng.uniform(-1.0, 1.0, size=len(pa))
        small = np.abs(w) < 0.05
        w[small] = np.sign(w[small] + 1e-12) * rng.uniform(0.05, 1.0, size=int(small.sum()))
        parents.append(tuple(pa))
        weights.append(tuple(float(v) for v in w))
    noise_sigma = tuple(float(s) for s in rng.uniform(0.5, 2.0, size=n_nodes))
    intercepts = tuple(float(b) for b in rng.uniform(-1.0, 1.0, size=n_nodes))
    features = tuple(FeatureMeta(name=f"x{i}", index=i) for i in range(n_nodes))
    scm = LinearSCM(
        parents=tuple(parents), weights=tuple(weights), intercepts=intercepts,
        noise_sigma=noise_sigma, features=features,
    )

    def sample(n: int, sample_rng: np.random.Generator | None = None) -> np.ndarray:
        from .scm import reduced_form_batch

        r = sample_rng if sample_rng is not None else np.random.default_rng(seed + 1)
        U = r.standard_normal((n, n_nodes)) * np.asarray(noise_sigma)
        return reduced_form_batch(scm, U)

    return scm, sample


# ---------------------------------------------------------------------------
# bundled demo file generation


def write_demo_credit_file(path, seed: int = 11, n_rows: int = 1000, temperature: float = 0.7) -> None:
    """Write a synthetic credit file in the canonical 21-field layout.

    The four mapped columns follow the causal story of the credit experiment
    (amount depends on gender and age, duration on amount) with marginal
    means, spreads, and the amount-duration correlation matched to the
    published summary statistics of the original data. Outcomes come from a
    logistic model of the four features; ``temperature`` sharpens the label
    noise. The remaining 16 fields are plausible filler codes.
    """
    rng = np.random.default_rng(seed)
    female = (rng.random(n_rows) < 0.31).astype(float)
    age = np.clip(np.round(19 + rng.gamma(2.106, 7.835, size=n_rows)), 19, 75)

    u3 = rng.lognormal(mean=np.log(2400.0), sigma=0.72, size=n_rows)
    u3 -= np.exp(np.log(2400.0) + 0.72**2 / 2)
    amount = np.clip(np.round(3080.0 - 300.0 * female + 8.0 * age + u3), 250, 20000)

    u4 = rng.normal(0.0, 9.4, size=n_rows)
    duration = np.clip(np.round(12.17 + 0.00267 * amount + u4), 4, 72)

    score = (
        1.123 * female
        - 0.20 * (age - 35.5) / 11.37
        + 0.25 * (amount - 3271.0) / 2822.0
        + 1.00 * (duration - 20.9) / 12.06
        - 2.404
    ) / temperature
    high_risk = rng.random(n_rows) < 1.0 / (1.0 + np.exp(-score))

    male_codes = np.array(["A91", "A93", "A94"])
    male_p = np.array([50, 548, 92], dtype=float)
    male_p /= male_p.sum()
    filler = {
        "checking": ["A11", "A12", "A13", "A14"],
        "history": ["A30", "A31", "A32", "A33", "A34"],
        "purpose": ["A40", "A41", "A42", "A43", "A44", "A45", "A46", "A48", "A49", "A410"],
        "savings": ["A61", "A62", "A63", "A64", "A65"],
        "employment": ["A71", "A72", "A73", "A74", "A75"],
        "rate": ["1", "2", "3", "4"],
        "debtors": ["A101", "A102", "A103"],
        "residence": ["1", "2", "3", "4"],
        "property": ["A121", "A122", "A123", "A124"],
        "plans": ["A141", "A142", "A143"],
        "housing": ["A151", "A152", "A153"],
        "credits": ["1", "2", "3", "4"],
        "job": ["A171", "A172", "A173", "A174"],
        "liable": ["1", "2"],
        "phone": ["A191", "A192"],
        "foreign": ["A201", "A202"],
    }
    picks = {k: rng.choice(v, size=n_rows) for k, v in filler.items()}

    lines = []
    for i in range(n_rows):
        sex_code = "A92" if female[i] else rng.choice(male_codes, p=male_p)
        fields = [
            picks["checking"][i],
            str(int(duration[i])),
            picks["history"][i],
            picks["purpose"][i],
            str(int(amount[i])),
            picks["savings"][i],
            picks["employment"][i],
            picks["rate"][i],
            sex_code,
            picks["debtors"][i],
            picks["residence"][i],
            picks["property"][i],
            str(int(age[i])),
            picks["plans"][i],
            picks["housing"][i],
            picks["credits"][i],
            picks["job"][i],
            picks["liable"][i],
            picks["phone"][i],
            picks["foreign"][i],
            "2" if high_risk[i] else "1",
        ]
        lines.append(" ".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
