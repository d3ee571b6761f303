"""Synthetic vMF-uniform data, PU split construction, and dataset files.

The generative model: labels y ~ Bernoulli(pi); latent points z on
S^{d_sphere-1} follow vMF(mu_true, kappa_true) for positives and the
uniform law for negatives; observed features are either the latent points
(identity lift) or a fixed seeded full-rank linear image plus Gaussian
noise (random_linear lift), so the encoder has something to learn.

Ground-truth labels ride along with every row for evaluation, but the PU
contract is that nothing outside evaluation reads labels of unlabeled
rows. An opt-in audit flag enforces it: with ``set_label_audit(True)``,
``PuDataset.y_true`` raises unless read inside ``evaluation_access()``.
"""

from __future__ import annotations

import contextlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatViolation,
    InsufficientPositives,
    InvalidSpec,
    IoFailure,
    LabelAccessViolation,
)
from .rng import RngStream
from .sphere import is_unit, sample_uniform_sphere, sample_vmf

LIFTS = ("identity", "random_linear")
SUPERVISION_TAGS = ("P", "U")
SPLIT_TAGS = ("train", "val", "test")

_audit_enabled = False
_audit_depth = 0


def set_label_audit(enabled: bool) -> None:
    """Toggle the debug audit on ground-truth label access."""
    global _audit_enabled
    _audit_enabled = bool(enabled)


@contextlib.contextmanager
def evaluation_access():
    """Context that legitimizes y_true reads (evaluation / generation)."""
    global _audit_depth
    _audit_depth += 1
    try:
        yield
    finally:
        _audit_depth -= 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic vMF-uniform draw."""

    d_input: int
    d_sphere: int
    n: int
    pi: float
    kappa_true: float
    seed: int
    mu_true: np.ndarray | None = None
    lift: str = "identity"
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.d_sphere < 2:
            raise InvalidSpec("d_sphere must be >= 2")
        if self.n < 1:
            raise InvalidSpec("n must be >= 1")
        # The generator tolerates the degenerate priors 0 and 1; the Bayes
        # layer keeps its strict (0, 1) requirement.
        if not 0.0 <= self.pi <= 1.0:
            raise InvalidSpec(f"pi={self.pi} outside [0, 1]")
        if self.kappa_true <= 0:
            raise InvalidSpec("kappa_true must be positive")
        if self.lift not in LIFTS:
            raise InvalidSpec(f"lift must be one of {LIFTS}")
        if self.lift == "identity" and self.d_input != self.d_sphere:
            raise InvalidSpec("identity lift requires d_input == d_sphere")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if self.mu_true is not None and not is_unit(self.mu_true):
            raise InvalidSpec("mu_true must be a unit vector")

    def resolved_mu(self) -> np.ndarray:
        """The planted direction; sampled from the seed when not given."""
        if self.mu_true is not None:
            return np.asarray(self.mu_true, dtype=np.float64)
        return sample_uniform_sphere(self.d_sphere, 1, RngStream(self.seed, 500))[0]

    def lift_matrix(self) -> np.ndarray | None:
        if self.lift == "identity":
            return None
        gen = RngStream(self.seed, 501).generator()
        return gen.standard_normal((self.d_input, self.d_sphere)) / np.sqrt(self.d_sphere)

    def to_dict(self) -> dict:
        return {
            "d_input": self.d_input,
            "d_sphere": self.d_sphere,
            "n": self.n,
            "pi": self.pi,
            "kappa_true": self.kappa_true,
            "seed": self.seed,
            "mu_true": None if self.mu_true is None else np.asarray(self.mu_true).tolist(),
            "lift": self.lift,
            "noise_sigma": self.noise_sigma,
        }

    @staticmethod
    def from_dict(doc: dict) -> "SyntheticSpec":
        mu = doc.get("mu_true")
        return SyntheticSpec(
            d_input=int(doc["d_input"]),
            d_sphere=int(doc["d_sphere"]),
            n=int(doc["n"]),
            pi=float(doc["pi"]),
            kappa_true=float(doc["kappa_true"]),
            seed=int(doc["seed"]),
            mu_true=None if mu is None else np.asarray(mu, dtype=np.float64),
            lift=doc.get("lift", "identity"),
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
        )


@dataclass(frozen=True)
class SplitSpec:
    """How raw labeled rows become a PU dataset."""

    n_labeled_pos: int
    val_fraction: float
    test_fraction: float
    seed: int

    def __post_init__(self):
        if self.n_labeled_pos < 1:
            raise InsufficientPositives("n_labeled_pos must be >= 1")
        if not (0.0 < self.val_fraction < 1.0 and 0.0 < self.test_fraction < 1.0):
            raise InvalidSpec("val and test fractions must lie in (0, 1)")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise InvalidSpec("val_fraction + test_fraction must be < 1")

    def to_dict(self) -> dict:
        return {
            "n_labeled_pos": self.n_labeled_pos,
            "val_fraction": self.val_fraction,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(doc: dict) -> "SplitSpec":
        return SplitSpec(
            n_labeled_pos=int(doc["n_labeled_pos"]),
            val_fraction=float(doc["val_fraction"]),
            test_fraction=float(doc["test_fraction"]),
            seed=int(doc["seed"]),
        )


@dataclass
class PuDataset:
    """Feature rows with supervision (P/U) and split (train/val/test) tags.

    Ground truth is retained on every row but is evaluation-only; see the
    module docstring for the audit contract.
    """

    features: np.ndarray
    supervision: np.ndarray
    split: np.ndarray
    labels: np.ndarray = field(repr=False)
    synthetic_spec: dict | None = None
    split_spec: dict | None = None

    def __post_init__(self):
        n = self.features.shape[0]
        if not (self.supervision.shape == (n,) and self.split.shape == (n,) and self.labels.shape == (n,)):
            raise InvalidSpec("row annotations must match the feature count")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise InvalidSpec("y_true must be 0/1")
        if np.any((self.supervision == "P") & (self.labels != 1)):
            raise InvalidSpec("every supervision=P row must have y_true=1")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def y_true(self) -> np.ndarray:
        if _audit_enabled and _audit_depth == 0:
            raise LabelAccessViolation(
                "ground-truth labels read outside evaluation_access() with audit on"
            )
        return self.labels

    def indices(self, supervision: str | None = None, split: str | None = None) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        if supervision is not None:
            mask &= self.supervision == supervision
        if split is not None:
            mask &= self.split == split
        return np.nonzero(mask)[0]


def generate_synthetic(spec: SyntheticSpec):
    """Draw raw rows (features, y_true) from the planted model."""
    root = RngStream(spec.seed)
    gen_labels = root.child(1).generator()
    y = (gen_labels.random(spec.n) < spec.pi).astype(np.int8)

    z = np.empty((spec.n, spec.d_sphere), dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos:
        z[y == 1] = sample_vmf(spec.resolved_mu(), spec.kappa_true, n_pos, root.child(2))
    if spec.n - n_pos:
        z[y == 0] = sample_uniform_sphere(spec.d_sphere, spec.n - n_pos, root.child(3))

    if spec.lift == "identity":
        features = z
    else:
        features = z @ spec.lift_matrix().T
        if spec.noise_sigma > 0:
            features = features + spec.noise_sigma * root.child(4).generator().standard_normal(
                features.shape
            )
    return features, y


def build_pu_split(features, y_true, split: SplitSpec) -> PuDataset:
    """Tag raw rows with supervision and split assignments.

    Test rows are carved first (so their class mix follows the population
    prior), then a validation slice of the remaining pool; the labeled
    positives are chosen among the training-pool positives so the train
    split always carries exactly ``n_labeled_pos`` P rows. Everything else
    is unlabeled.
    """
    features = np.asarray(features, dtype=np.float64)
    y_true = np.asarray(y_true).astype(np.int8)
    n = features.shape[0]
    gen = RngStream(split.seed, 600).generator()
    perm = gen.permutation(n)

    n_test = int(round(split.test_fraction * n))
    test_idx = perm[:n_test]
    pool = perm[n_test:]
    n_val = int(round(split.val_fraction * len(pool)))
    val_idx = pool[:n_val]
    train_idx = pool[n_val:]

    train_pos = train_idx[y_true[train_idx] == 1]
    if split.n_labeled_pos > train_pos.size:
        raise InsufficientPositives(
            f"requested {split.n_labeled_pos} labeled positives, train pool has {train_pos.size}"
        )
    chosen = gen.choice(train_pos, size=split.n_labeled_pos, replace=False)

    supervision = np.full(n, "U", dtype="<U1")
    supervision[chosen] = "P"
    split_tags = np.full(n, "train", dtype="<U5")
    split_tags[test_idx] = "test"
    split_tags[val_idx] = "val"

    return PuDataset(
        features=features,
        supervision=supervision,
        split=split_tags,
        labels=y_true,
        split_spec=split.to_dict(),
    )


def make_pu_dataset(spec: SyntheticSpec, split: SplitSpec) -> PuDataset:
    """Generate and split in one step, preserving provenance."""
    features, y = generate_synthetic(spec)
    ds = build_pu_split(features, y, split)
    ds.synthetic_spec = spec.to_dict()
    return ds


# ---------------------------------------------------------------------------
# Dataset files: CSV rows + JSON manifest with the generating specs.


def manifest_path(csv_path) -> str:
    base, _ = os.path.splitext(os.fspath(csv_path))
    return base + ".manifest.json"


def save_dataset(ds: PuDataset, path) -> None:
    """Write the CSV (shortest round-trip decimals) and its manifest."""
    d = ds.features.shape[1]
    header = ",".join([f"f{i}" for i in range(d)] + ["y_true", "supervision", "split"])
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            with evaluation_access():
                labels = ds.y_true
            for row, y, sup, spl in zip(ds.features, labels, ds.supervision, ds.split):
                cells = [repr(v) for v in row.tolist()]
                cells += [str(int(y)), str(sup), str(spl)]
                fh.write(",".join(cells) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write dataset {path}: {exc}") from exc

    manifest = {}
    if ds.synthetic_spec is not None:
        manifest["synthetic_spec"] = ds.synthetic_spec
    if ds.split_spec is not None:
        manifest["split_spec"] = ds.split_spec
    if manifest:
        try:
            with open(manifest_path(path), "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"cannot write manifest for {path}: {exc}") from exc


def load_dataset(path) -> PuDataset:
    """Read a dataset CSV (and manifest, when present) back losslessly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatViolation("empty dataset file", line=1)

    header = lines[0].split(",")
    if len(header) < 4 or header[-3:] != ["y_true", "supervision", "split"]:
        raise FormatViolation(
            "header must be f0,...,f{D-1},y_true,supervision,split", line=1
        )
    d = len(header) - 3
    expected = [f"f{i}" for i in range(d)]
    if header[:d] != expected:
        raise FormatViolation(f"feature columns must be f0..f{d-1}", line=1)

    n = len(lines) - 1
    features = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int8)
    supervision = np.empty(n, dtype="<U1")
    split_tags = np.empty(n, dtype="<U5")
    for k, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != d + 3:
            raise FormatViolation(f"expected {d + 3} fields, found {len(cells)}", line=k)
        try:
            features[k - 2] = [float(c) for c in cells[:d]]
        except ValueError as exc:
            raise FormatViolation(f"bad float: {exc}", line=k) from exc
        if cells[d] not in ("0", "1"):
            raise FormatViolation(f"y_true must be 0 or 1, got {cells[d]!r}", line=k)
        labels[k - 2] = int(cells[d])
        if cells[d + 1] not in SUPERVISION_TAGS:
            raise FormatViolation(f"supervision must be P or U, got {cells[d + 1]!r}", line=k)
        supervision[k - 2] = cells[d + 1]
        if cells[d + 2] not in SPLIT_TAGS:
            raise FormatViolation(f"split must be train/val/test, got {cells[d + 2]!r}", line=k)
        split_tags[k - 2] = cells[d + 2]

    synthetic_spec = split_spec = None
    mpath = manifest_path(path)
    if os.path.exists(mpath):
        try:
            with open(mpath, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        except OSError as exc:
            raise IoFailure(f"cannot read manifest {mpath}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatViolation(f"manifest is not valid JSON: {exc}") from exc
        synthetic_spec = manifest.get("synthetic_spec")
        split_spec = manifest.get("split_spec")

    try:
        return PuDataset(
            features=features,
            supervision=supervision,
            split=split_tags,
            labels=labels,
            synthetic_spec=synthetic_spec,
            split_spec=split_spec,
        )
    except InvalidSpec as exc:
        raise FormatViolation(str(exc)) from exc
