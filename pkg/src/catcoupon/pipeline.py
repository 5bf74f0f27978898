"""Run configuration and the train/evaluate/backtest pipeline behind the CLI."""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import forecast as fc
from .dataset import (CLIMATE_INDICES, Dataset, generate_synthetic, parse_climate_series,
                      parse_tranches, serialize_climate_series, serialize_planted,
                      serialize_tranches)
from .features import (FEATURE_SPECS, build_features, elastic_net_cv, lagged_correlations,
                       select_features)
from .regressors import DEFAULT_SPACES, MODEL_ORDER, SearchSpec, dumps, random_search_cv

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RUN_MARKER = ".catcoupon-run"
SPEC_ORDER = ("benchmark", "extended")


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextmanager
def stage(name):
    """Re-raise any failure inside the block tagged with the stage name."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    # input data; without a tranche file a synthetic dataset is generated
    tranches: str = None
    climate_dir: str = None
    strict: bool = False
    interpolate: bool = False
    synthetic_seed: int = 1
    synthetic_n: int = 734
    # modelling
    features: tuple = SPEC_ORDER
    selection: str = "elasticnet"
    models: tuple = MODEL_ORDER
    n_draws: int = 10
    folds: int = 5
    shuffle_folds: int = None
    split: str = "chrono"
    seed: int = 0
    mc_draws: int = 1000
    var_level: float = 0.05
    var_mode: str = "simulated"
    # correlation lags
    index_lag_min: int = 2
    sst_lag_min: int = 0
    lag_max: int = 18
    jobs: int = 1
    out: str = "run"

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        for s in self.features:
            if s not in FEATURE_SPECS:
                raise ValueError(f"unknown feature spec {s!r}")
        for m in self.models:
            if m not in MODEL_ORDER:
                raise ValueError(f"unknown model {m!r}; choose from {', '.join(MODEL_ORDER)}")
        if self.selection not in ("elasticnet", "none"):
            raise ValueError(f"selection must be elasticnet or none, got {self.selection!r}")
        if self.split not in ("chrono", "random"):
            raise ValueError(f"split must be chrono or random, got {self.split!r}")
        if self.var_mode not in ("simulated", "analytic", "empirical"):
            raise ValueError(f"unknown var_mode {self.var_mode!r}")
        if not 0 <= self.index_lag_min <= self.lag_max <= 18 or self.sst_lag_min > self.lag_max:
            raise ValueError("lag range must satisfy 0 <= lag_min <= lag_max <= 18")
        if self.jobs < 1 or self.n_draws < 1 or self.folds < 2:
            raise ValueError("jobs >= 1, n_draws >= 1 and folds >= 2 are required")
        for label in ("tranches", "climate_dir"):
            path = getattr(self, label)
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"{label} path {path} does not exist")
        if (self.tranches is None) != (self.climate_dir is None):
            raise ValueError("tranches and climate_dir must be given together")
        return self

    def to_json(self):
        # the output location is not part of the experiment
        d = asdict(self)
        del d["out"]
        for k in ("features", "models"):
            d[k] = list(d[k])
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_NULLABLE = {"tranches", "climate_dir", "shuffle_folds"}


def _coerce(key, value):
    kind = _TYPES[key]
    if value is None:
        if key in _NULLABLE:
            return None
        raise ValueError(f"config key {key!r} may not be null")
    if kind == "tuple":
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if isinstance(value, tuple):
            value = list(value)
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValueError(f"config key {key!r} must be a list of strings")
        return tuple(value)
    expect = {"int": int, "bool": bool, "float": (int, float), "str": str}[kind]
    if isinstance(value, bool) and kind != "bool" or not isinstance(value, expect):
        raise ValueError(f"config key {key!r} must be {kind}, got {type(value).__name__}")
    return float(value) if kind == "float" else value


def load_config(path=None, overrides=None):
    """Read a JSON run configuration; unknown keys are errors.

    Relative input paths resolve against the config file's directory.
    ``overrides`` (from command-line flags) win over file values.
    """
    values = {}
    base = None
    if path is not None:
        base = Path(path).resolve().parent
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        if "schema_version" not in raw:
            raise ValueError("config has no schema_version")
        unknown = sorted(set(raw) - set(_TYPES))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        values = {k: _coerce(k, v) for k, v in raw.items()}
        for k in ("tranches", "climate_dir"):
            if values.get(k) is not None and not os.path.isabs(values[k]):
                values[k] = str(base / values[k])
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return RunConfig(**values).validate()


def derive_seed(master, *labels):
    """Independent 32-bit seed for a labelled stage of a run."""
    key = tuple(zlib.crc32(str(lab).encode()) for lab in labels)
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=key)
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# data loading
# ---------------------------------------------------------------------------

def load_dataset(config):
    """Parsed and validated dataset, or the synthetic one when no files are set."""
    if config.tranches is None:
        return generate_synthetic(config.synthetic_seed, config.synthetic_n)
    with stage("ingest"):
        text = Path(config.tranches).read_text(encoding="utf-8")
        records = parse_tranches(text, strict=config.strict)
        climate = {}
        for f in sorted(Path(config.climate_dir).glob("*.csv")):
            climate[f.stem] = parse_climate_series(f.read_text(encoding="utf-8"), f.stem,
                                                   interpolate=config.interpolate)
        return Dataset(tuple(records), climate).validate(strict=config.strict)


def dataset_files(dataset):
    """{relative path: text} for a dataset in the on-disk exchange format."""
    out = {"tranches.csv": serialize_tranches(dataset.tranches)}
    for name in sorted(dataset.climate):
        out[f"climate/{name}.csv"] = serialize_climate_series(dataset.climate[name])
    if dataset.planted:
        out["planted.txt"] = serialize_planted(dataset.planted)
    return out


# ---------------------------------------------------------------------------
# output handling
# ---------------------------------------------------------------------------

def write_outputs(out, files):
    """Write ``files`` into directory ``out`` all at once.

    Files are staged in a sibling temporary directory that replaces ``out``
    only after every write succeeded; a failed run leaves nothing behind.
    An existing ``out`` is replaced only if it is empty or an earlier run.
    """
    out = Path(out)
    if out.exists():
        if not out.is_dir() or (any(out.iterdir()) and not (out / RUN_MARKER).exists()):
            raise FileExistsError(f"{out} exists and is not a previous run directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
    try:
        for rel, text in sorted(files.items()):
            p = tmp / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text, encoding="utf-8")
        (tmp / RUN_MARKER).write_text("", encoding="utf-8")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def correlate(dataset, config):
    """Lag correlation tables for every climate series, keyed by name."""
    tables = {}
    for name in sorted(dataset.climate):
        lo = config.index_lag_min if name in CLIMATE_INDICES else config.sst_lag_min
        tables[name] = lagged_correlations(dataset.tranches, dataset.climate[name], lo,
                                           config.lag_max)
    return tables


# ---------------------------------------------------------------------------
# train / evaluate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JobResult:
    spec: str
    algorithm: str
    metrics: fc.PointMetrics
    cv_rmse: float
    best_params: dict
    report: bt.BacktestReport
    model_json: str
    predictive_csv: str
    seeds: dict = field(default_factory=dict)


def _run_job(job):
    algo = job["algorithm"]
    y_mean, y_std = job["y_stats"]
    search = SearchSpec(DEFAULT_SPACES[algo], n_draws=job["n_draws"], folds=job["folds"],
                        seed=job["search_seed"], shuffle_seed=job["shuffle_folds"])
    res = random_search_cv(job["X_train"], job["z_train"], algo, search)

    def predict(X):
        return y_mean + y_std * res.model.predict(X)

    point_test = predict(job["X_test"])
    resid = job["y_cal"] - predict(job["X_cal"])
    calib = fc.calibrate(resid)
    dist = fc.predictive_distribution(point_test, calib, n_draws=job["mc_draws"],
                                      seed=job["mc_seed"])
    var = fc.var_forecast(point_test, calib, level=job["var_level"], mode=job["var_mode"],
                          dist=dist)
    report = bt.backtest(bt.exceedances(job["y_test"], var), p=job["var_level"])
    return JobResult(
        job["spec"], algo, fc.point_metrics(job["y_test"], point_test), res.best_score,
        res.best_params, report, dumps(res.model) + "\n",
        fc.predictive_csv(dist, job["y_test"], job["test_dates"], job["test_rows"]),
        {"search": job["search_seed"], "monte_carlo": job["mc_seed"]})


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    split: fc.SplitIndices
    selections: dict  # spec -> (ElasticNetSearch or None, selected columns)
    jobs: tuple
    seeds: dict

    def result(self, spec, algorithm):
        for j in self.jobs:
            if j.spec == spec and j.algorithm == algorithm:
                return j
        raise KeyError((spec, algorithm))

    def rmse_table(self):
        """model -> {spec: test RMSE}"""
        table = {}
        for j in self.jobs:
            table.setdefault(j.algorithm, {})[j.spec] = j.metrics.rmse
        return table


def prepare_spec(dataset, spec, split, selection, seed):
    """Features for one spec with training-row standardization and, for the
    extended set, optional elastic-net column selection."""
    fm = build_features(dataset, spec, fit_rows=split.train)
    y_tr = fm.y[split.train]
    y_mean, y_std = float(y_tr.mean()), float(y_tr.std())
    search = None
    if selection == "elasticnet" and spec == "extended":
        z = (y_tr - y_mean) / y_std
        search = elastic_net_cv(fm.X[split.train], z, columns=fm.columns)
        chosen = select_features(search.fit)
        if chosen:
            fm = fm.select(chosen)
        else:
            log.warning("elastic net selected no columns; keeping all %d", len(fm.columns))
    return fm, (y_mean, y_std), search


def train_evaluate(dataset, config):
    seeds = {"run": config.seed}
    split_seed = derive_seed(config.seed, "split")
    with stage("split"):
        split = fc.split_80_10_10(len(dataset), config.split,
                                  split_seed if config.split == "random" else None)
    if config.split == "random":
        seeds["split"] = split_seed
    jobs, selections = [], {}
    for spec in (s for s in SPEC_ORDER if s in config.features):
        with stage(f"features:{spec}"):
            fm, y_stats, search = prepare_spec(dataset, spec, split, config.selection,
                                               config.seed)
        selections[spec] = (search, fm.columns)
        for algo in (m for m in MODEL_ORDER if m in config.models):
            jobs.append({
                "spec": spec, "algorithm": algo, "y_stats": y_stats,
                "X_train": fm.X[split.train],
                "z_train": (fm.y[split.train] - y_stats[0]) / y_stats[1],
                "X_cal": fm.X[split.calibration], "y_cal": fm.y[split.calibration],
                "X_test": fm.X[split.test], "y_test": fm.y[split.test],
                "test_dates": [fm.row_dates[i].isoformat() for i in split.test],
                "test_rows": [int(i) for i in split.test],
                "n_draws": config.n_draws, "folds": config.folds,
                "shuffle_folds": config.shuffle_folds,
                "search_seed": derive_seed(config.seed, "search", spec, algo),
                "mc_seed": derive_seed(config.seed, "monte_carlo", spec, algo),
                "mc_draws": config.mc_draws, "var_level": config.var_level,
                "var_mode": config.var_mode,
            })
    with stage("train"):
        if config.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                results = tuple(pool.map(_run_job, jobs))
        else:
            results = tuple(_run_job(j) for j in jobs)
    for r in results:
        seeds[f"{r.spec}/{r.algorithm}"] = r.seeds
    return RunResult(config, split, selections, results, seeds)


def _f(v):
    return repr(float(v))


def run_files(run):
    """{relative path: text} for every artifact of a train run."""
    files = {"config.json": run.config.to_json()}
    lines = [f"run_seed={run.config.seed}"]
    if "split" in run.seeds:
        lines.append(f"split_seed={run.seeds['split']}")
    for j in run.jobs:
        lines.append(f"{j.spec}/{j.algorithm} search_seed={j.seeds['search']} "
                     f"monte_carlo_seed={j.seeds['monte_carlo']}")
    files["seeds.log"] = "\n".join(lines) + "\n"

    sel = []
    for spec, (search, cols) in run.selections.items():
        if search is None:
            sel.append(f"{spec}: no selection ({len(cols)} columns)")
            continue
        sel.append(f"{spec}: lambda={_f(search.lam)} alpha_mix={_f(search.alpha_mix)} "
                   f"cv_rmse={_f(search.cv_rmse)}")
        for c, b in zip(search.fit.columns, search.fit.coefficients):
            sel.append(f"  {c}={_f(b)}{'' if c in cols else ' (dropped)'}")
    files["selection.txt"] = "\n".join(sel) + "\n"

    metrics = ["spec,model,mse,mae,rmse,r2,cv_rmse,best_params"]
    for j in run.jobs:
        m = j.metrics
        params = json.dumps(j.best_params, sort_keys=True).replace('"', "'")
        metrics.append(f"{j.spec},{j.algorithm},{_f(m.mse)},{_f(m.mae)},{_f(m.rmse)},"
                       f"{_f(m.r2)},{_f(j.cv_rmse)},\"{params}\"")
        files[f"models/{j.spec}_{j.algorithm}.json"] = j.model_json
        files[f"predictive/{j.spec}_{j.algorithm}.csv"] = j.predictive_csv
        files[f"backtest/{j.spec}_{j.algorithm}.txt"] = j.report.to_text()
    files["metrics.csv"] = "\n".join(metrics) + "\n"
    files["backtest.csv"] = bt.report_csv({f"{j.spec}/{j.algorithm}": j.report
                                           for j in run.jobs})
    files["comparison.csv"] = comparison_csv(run.rmse_table())
    files["report.txt"] = report_text(run.rmse_table(), {f"{j.spec}/{j.algorithm}": j.report
                                                         for j in run.jobs})
    return files


def comparison_csv(table):
    specs = [s for s in SPEC_ORDER if any(s in row for row in table.values())]
    lines = [",".join(["model"] + specs)]
    for algo in (m for m in MODEL_ORDER if m in table):
        lines.append(",".join([algo] + [_f(table[algo][s]) if s in table[algo] else ""
                                        for s in specs]))
    return "\n".join(lines) + "\n"


def parse_comparison_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    specs = lines[0].split(",")[1:]
    table = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        table[cells[0]] = {s: float(v) for s, v in zip(specs, cells[1:]) if v}
    return table


def report_text(table, reports=None):
    """Test-set RMSE by model and feature set, plus backtest zones."""
    specs = [s for s in SPEC_ORDER if any(s in row for row in table.values())]
    out = ["Test RMSE", f"{'model':<8}" + "".join(f"{s:>12}" for s in specs)]
    for algo in (m for m in MODEL_ORDER if m in table):
        out.append(f"{algo:<8}" + "".join(
            f"{table[algo][s]:>12.6f}" if s in table[algo] else f"{'':>12}" for s in specs))
    if len(specs) == 2:
        better = sum(1 for row in table.values()
                     if len(row) == 2 and row["extended"] < row["benchmark"])
        out.append(f"extended beats benchmark for {better} of {len(table)} models")
    if reports:
        out += ["", "VaR backtest (5% level)",
                f"{'run':<20}{'N':>5}{'x':>5}{'LRUC':>10}{'LRIND':>10}{'LRCC':>10}  zone"]
        for label, r in reports.items():
            out.append(f"{label:<20}{r.N:>5}{r.x:>5}{r.lruc:>10.4f}{r.lrind:>10.4f}"
                       f"{r.lrcc:>10.4f}  {r.basel_zone}")
    return "\n".join(out) + "\n"
