"""File formats: dataset CSV, numeric matrix CSV, config JSON and run manifests.

Dataset CSV: a header row naming ``y`` and covariate columns whose names start
with ``x`` (ordinal layer) or ``w`` (class-membership layer). Intercepts are not
stored; the loader prepends them. Labels in ``y`` may be any integers; sorted
ascending they map to internal categories 1..J (internal category 1 is the top
utility band), and the mapping is returned for the manifest.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .model import N_CLASSES, ContractError, Dataset, PriorSpec
from .samplers import RunConfig

FLOAT_FMT = "%.17g"


class DataError(ContractError):
    """Malformed input file; the message carries row/column coordinates."""


class ManifestError(ContractError):
    """Inputs do not match the manifest they claim to come from."""


# ---------------------------------------------------------------------------
# hashing and JSON

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                        f"{exc.msg}") from None


# ---------------------------------------------------------------------------
# numeric matrices

def write_matrix_csv(path, names, values) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in values:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_matrix_csv(path):
    """(names, float matrix) from a header + numeric-rows CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [h.strip() for h in rows[0]]
    out = np.empty((len(rows) - 1, len(names)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(names):
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, "
                            f"expected {len(names)}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i + 2}, column {j + 1} ({names[j]!r}): "
                                f"not a number: {cell!r}") from None
    return names, out


# ---------------------------------------------------------------------------
# datasets

@dataclass
class LoadedData:
    dataset: Dataset
    label_map: dict  # user label (str) -> internal category
    sha256: str


def _parse_cell(path, text, row, col, name, integer=False):
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan", "null", "none"):
        raise DataError(f"{path}: row {row}, column {col} ({name!r}): missing value")
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col} ({name!r}): "
                        f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}: row {row}, column {col} ({name!r}): non-finite value")
    if integer and v != int(v):
        raise DataError(f"{path}: row {row}, column {col} ({name!r}): "
                        f"category label must be an integer, got {text!r}")
    return v


def load_dataset(path, x_columns=None, w_columns=None, categories=None) -> LoadedData:
    """Read and validate a dataset CSV.

    ``x_columns``/``w_columns`` select a subset of covariates (model
    specifications); ``categories`` gives the full ordered label set when some
    labels may be absent from the data.
    """
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8")
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise DataError(f"{path}: header must contain a 'y' column")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    for c, name in enumerate(header):
        if name != "y" and not name[:1] in ("x", "w"):
            raise DataError(f"{path}: column {c + 1} ({name!r}) must be 'y' or start "
                            f"with 'x' or 'w'")
    all_x = [h for h in header if h.startswith("x")]
    all_w = [h for h in header if h.startswith("w")]
    x_cols = all_x if x_columns is None else list(x_columns)
    w_cols = all_w if w_columns is None else list(w_columns)
    for name, pool in [(n, all_x) for n in x_cols] + [(n, all_w) for n in w_cols]:
        if name not in pool:
            raise DataError(f"{path}: requested column {name!r} not in header")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    idx = {h: c for c, h in enumerate(header)}
    y_raw = np.empty(len(body))
    X = np.ones((len(body), 1 + len(x_cols)))
    W = np.ones((len(body), 1 + len(w_cols)))
    for i, row in enumerate(body):
        r = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        y_raw[i] = _parse_cell(path, row[idx["y"]], r, idx["y"] + 1, "y", integer=True)
        for k, name in enumerate(x_cols):
            X[i, k + 1] = _parse_cell(path, row[idx[name]], r, idx[name] + 1, name)
        for k, name in enumerate(w_cols):
            W[i, k + 1] = _parse_cell(path, row[idx[name]], r, idx[name] + 1, name)
    labels = sorted({int(v) for v in y_raw})
    if categories is not None:
        cats = [int(c) for c in categories]
        if sorted(cats) != cats or len(set(cats)) != len(cats):
            raise DataError("config 'categories' must be strictly increasing integers")
        unknown = sorted(set(labels) - set(cats))
        if unknown:
            raise DataError(f"{path}: y labels {unknown} not listed in 'categories'")
        labels = cats
    if len(labels) < 3:
        raise DataError(f"{path}: need at least 3 ordered categories, found {labels}")
    label_map = {str(lab): j + 1 for j, lab in enumerate(labels)}
    y = np.array([label_map[str(int(v))] for v in y_raw], dtype=np.int64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = Dataset(y, X, W, len(labels), x_names=list(x_cols), w_names=list(w_cols))
    return LoadedData(ds, label_map, sha256_bytes(raw))


def write_dataset(path, dataset: Dataset, labels=None) -> None:
    """Write ``dataset`` (intercepts dropped). ``labels`` maps internal
    categories 1..J back to user labels; identity by default."""
    names = ["y", *dataset.x_names, *dataset.w_names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(dataset.n):
            y = dataset.y[i] if labels is None else labels[int(dataset.y[i]) - 1]
            cells = [str(int(y))]
            cells += [FLOAT_FMT % v for v in dataset.X[i, 1:]]
            cells += [FLOAT_FMT % v for v in dataset.W[i, 1:]]
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# configuration

PRIOR_FIELDS = ("alpha0", "A0", "beta0", "B0", "v", "d", "delta0", "D0")
RUN_FIELDS = tuple(f.name for f in fields(RunConfig))
TOP_FIELDS = ("prior", "run", "x_columns", "w_columns", "categories", "name")


@dataclass
class FitConfig:
    """Parsed configuration document; every field optional."""
    prior: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    x_columns: list | None = None
    w_columns: list | None = None
    categories: list | None = None
    name: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, source="config") -> "FitConfig":
        if not isinstance(doc, dict):
            raise DataError(f"{source}: top level must be a JSON object")
        _reject_unknown(doc, TOP_FIELDS, source)
        prior = doc.get("prior", {}) or {}
        run = doc.get("run", {}) or {}
        _reject_unknown(prior, PRIOR_FIELDS, f"{source}: prior")
        _reject_unknown(run, RUN_FIELDS, f"{source}: run")
        return cls(dict(prior), dict(run), doc.get("x_columns"), doc.get("w_columns"),
                   doc.get("categories"), doc.get("name"))

    @classmethod
    def load(cls, path) -> "FitConfig":
        return cls.from_dict(read_json(path), str(path))

    def run_config(self, seed=None) -> RunConfig:
        kw = dict(self.run)
        if seed is not None:
            kw["seed"] = int(seed)
        return RunConfig(**kw)

    def prior_spec(self, p: int, q: int, J: int) -> PriorSpec:
        default = PriorSpec.default(p, q, J)
        m = J - 3
        pr = self.prior
        try:
            alpha0 = _vector(pr.get("alpha0"), p, default.alpha0)
            A0 = _matrix(pr.get("A0"), p, default.A0)
            beta0 = np.stack([_vector(b, q, default.beta0[s])
                              for s, b in enumerate(_per_class(pr.get("beta0")))])
            B0 = np.stack([_matrix(b, q, default.B0[s])
                           for s, b in enumerate(_per_class(pr.get("B0"), matrix=True))])
            delta0 = np.stack([_vector(b, m, default.delta0[s])
                               for s, b in enumerate(_per_class(pr.get("delta0")))])
            D0 = np.stack([_matrix(b, m, default.D0[s])
                           for s, b in enumerate(_per_class(pr.get("D0"), matrix=True))])
        except (ValueError, TypeError) as exc:
            raise DataError(f"prior: {exc}") from None
        return PriorSpec(alpha0, A0, beta0, B0, float(pr.get("v", default.v)),
                         float(pr.get("d", default.d)), delta0, D0)

    def to_dict(self) -> dict:
        return asdict(self)


def _reject_unknown(doc, allowed, where):
    if not isinstance(doc, dict):
        raise DataError(f"{where}: must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise DataError(f"{where}: unknown field(s) {unknown}; allowed: {sorted(allowed)}")


def _per_class(value, matrix=False):
    """A single value shared by both classes, or a list of two per-class values."""
    if value is None:
        return [None] * N_CLASSES
    depth = np.ndim(value)
    shared_depth = 2 if matrix else 1
    if depth == shared_depth + 1 or (not matrix and depth == 2):
        if len(value) != N_CLASSES:
            raise ValueError(f"per-class value must have {N_CLASSES} entries")
        return list(value)
    return [value] * N_CLASSES


def _vector(value, k, default):
    if value is None:
        return default.copy()
    v = np.broadcast_to(np.asarray(value, dtype=float), (k,)).copy()
    return v


def _matrix(value, k, default):
    """A full matrix, a diagonal vector, or a scalar times the identity."""
    if value is None:
        return default.copy()
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(k)
    if a.ndim == 1:
        return np.diag(np.broadcast_to(a, (k,)))
    if a.shape != (k, k):
        raise ValueError(f"expected a {k}x{k} matrix, got shape {a.shape}")
    return a


def prior_to_dict(prior: PriorSpec) -> dict:
    return {"alpha0": prior.alpha0, "A0": prior.A0, "beta0": prior.beta0, "B0": prior.B0,
            "v": prior.v, "d": prior.d, "delta0": prior.delta0, "D0": prior.D0,
            "sigma2_inverse_gamma": {"shape": prior.v / 2.0, "scale": prior.d / 2.0}}


# ---------------------------------------------------------------------------
# manifests

MANIFEST = "manifest.json"


def make_manifest(command: str, outputs: dict, **entries) -> dict:
    """Manifest listing the sha256 of every output file plus run metadata.

    ``run_id`` hashes the command and its inputs, so it is reproducible.
    """
    core = {"command": command, "version": __version__, **entries}
    man = dict(core)
    man["run_id"] = sha256_bytes(dumps_json({k: v for k, v in core.items()
                                             if k != "timing"}).encode())[:16]
    man["outputs"] = {name: sha256_file(p) for name, p in sorted(outputs.items())}
    return man


def write_manifest(out_dir, command, outputs, **entries) -> dict:
    man = make_manifest(command, {k: Path(out_dir) / k for k in outputs}, **entries)
    write_json(Path(out_dir) / MANIFEST, man)
    return man


def read_verified(run_dir, required=()) -> dict:
    """Load a run directory's manifest and check every listed output's hash."""
    run_dir = Path(run_dir)
    mpath = run_dir / MANIFEST
    if not mpath.exists():
        raise ManifestError(f"{run_dir}: no {MANIFEST}; refusing to use unverified outputs")
    man = read_json(mpath)
    outputs = man.get("outputs", {})
    for name in required:
        if name not in outputs:
            raise ManifestError(f"{mpath}: does not list required output {name!r}")
    for name, digest in outputs.items():
        p = run_dir / name
        if not p.exists():
            raise ManifestError(f"{run_dir}: {name} listed in manifest is missing")
        actual = sha256_file(p)
        if actual != digest:
            raise ManifestError(f"{p}: content hash {actual[:12]}… does not match the "
                                f"manifest ({digest[:12]}…); the file was modified or "
                                f"belongs to a different run")
    return man


def check_dataset_matches(man: dict, loaded: LoadedData, run_dir) -> None:
    expected = man.get("dataset_sha256")
    if expected != loaded.sha256:
        raise ManifestError(
            f"dataset hash {loaded.sha256[:12]}… differs from the one recorded by the run "
            f"in {run_dir} ({str(expected)[:12]}…); effects and probabilities would "
            f"mix posterior draws with the wrong data")
